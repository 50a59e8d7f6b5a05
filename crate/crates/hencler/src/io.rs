//! Plain-text dataset files and CSV outputs.
//!
//! Datasets are three tab-separated files: features (one row per node),
//! edges (`src<TAB>dst`, 0-based) and optional labels (one class index per
//! line). Blank lines and lines starting with `#` are skipped.

use std::fmt::Display;
use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use hencler_core::{AttributedGraph, Matrix};

#[derive(Debug, thiserror::Error)]
pub enum LoadError {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}:{line}: {message}", path.display())]
    Malformed { path: PathBuf, line: usize, message: String },
    #[error("{}:{line}: node {index} out of range for {num_nodes} nodes", path.display())]
    OutOfRange {
        path: PathBuf,
        line: usize,
        index: usize,
        num_nodes: usize,
    },
    #[error("{}: {found} rows, expected {expected}", path.display())]
    RowCount {
        path: PathBuf,
        found: usize,
        expected: usize,
    },
    #[error(transparent)]
    Invalid(#[from] hencler_core::Error),
}

/// Paths of one dataset.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct DatasetPaths {
    pub features: PathBuf,
    pub edges: PathBuf,
    pub labels: Option<PathBuf>,
}

fn read(path: &Path) -> Result<String, LoadError> {
    fs::read_to_string(path).map_err(|source| LoadError::Io {
        path: path.to_path_buf(),
        source,
    })
}

/// Non-comment lines with their 1-based line numbers.
fn data_lines(text: &str) -> impl Iterator<Item = (usize, &str)> {
    text.lines().enumerate().filter_map(|(i, l)| {
        let t = l.trim();
        (!t.is_empty() && !t.starts_with('#')).then_some((i + 1, t))
    })
}

fn malformed(path: &Path, line: usize, message: impl Into<String>) -> LoadError {
    LoadError::Malformed {
        path: path.to_path_buf(),
        line,
        message: message.into(),
    }
}

pub fn load_features(path: &Path) -> Result<Matrix, LoadError> {
    let text = read(path)?;
    let mut width = None;
    let mut data = Vec::new();
    let mut rows = 0;
    for (line, l) in data_lines(&text) {
        let mut count = 0;
        for field in l.split('\t') {
            let x: f64 = field
                .trim()
                .parse()
                .map_err(|_| malformed(path, line, format!("not a number: {field:?}")))?;
            if !x.is_finite() {
                return Err(malformed(path, line, "non-finite feature value"));
            }
            data.push(x);
            count += 1;
        }
        match width {
            None => width = Some(count),
            Some(w) if w != count => {
                return Err(malformed(path, line, format!("{count} columns, expected {w}")));
            }
            _ => {}
        }
        rows += 1;
    }
    let Some(width) = width else {
        return Err(malformed(path, 1, "no feature rows"));
    };
    Ok(Matrix::from_vec(rows, width, data)?)
}

pub fn load_edges(path: &Path, num_nodes: usize) -> Result<Vec<(usize, usize)>, LoadError> {
    let text = read(path)?;
    let mut edges = Vec::new();
    for (line, l) in data_lines(&text) {
        let fields: Vec<&str> = l.split('\t').map(str::trim).collect();
        if fields.len() != 2 {
            return Err(malformed(path, line, format!("expected 2 fields, found {}", fields.len())));
        }
        let mut ends = [0usize; 2];
        for (slot, f) in ends.iter_mut().zip(&fields) {
            *slot = f
                .parse()
                .map_err(|_| malformed(path, line, format!("not a node index: {f:?}")))?;
            if *slot >= num_nodes {
                return Err(LoadError::OutOfRange {
                    path: path.to_path_buf(),
                    line,
                    index: *slot,
                    num_nodes,
                });
            }
        }
        edges.push((ends[0], ends[1]));
    }
    Ok(edges)
}

pub fn load_labels(path: &Path) -> Result<Vec<usize>, LoadError> {
    let text = read(path)?;
    data_lines(&text)
        .map(|(line, l)| {
            l.parse()
                .map_err(|_| malformed(path, line, format!("not a class index: {l:?}")))
        })
        .collect()
}

/// Loads and validates a dataset. Undirected graphs store both orientations.
pub fn load_graph(paths: &DatasetPaths, directed: bool) -> Result<AttributedGraph, LoadError> {
    let features = load_features(&paths.features)?;
    let n = features.rows();
    let edges = load_edges(&paths.edges, n)?;
    let mut g = AttributedGraph::new(features, edges, directed)?;
    if let Some(lp) = &paths.labels {
        let labels = load_labels(lp)?;
        if labels.len() != n {
            return Err(LoadError::RowCount {
                path: lp.clone(),
                found: labels.len(),
                expected: n,
            });
        }
        g = g.with_labels(labels, None)?;
    }
    Ok(g)
}

fn create(path: &Path) -> std::io::Result<BufWriter<fs::File>> {
    if let Some(dir) = path.parent() {
        if !dir.as_os_str().is_empty() {
            fs::create_dir_all(dir)?;
        }
    }
    Ok(BufWriter::new(fs::File::create(path)?))
}

fn write_joined<W: Write, T: Display>(w: &mut W, values: impl IntoIterator<Item = T>, sep: &str) -> std::io::Result<()> {
    let mut first = true;
    for v in values {
        if !first {
            w.write_all(sep.as_bytes())?;
        }
        write!(w, "{v}")?;
        first = false;
    }
    writeln!(w)
}

/// Writes the graph in the dataset layout; undirected graphs write each
/// edge once (`u ≤ v`).
pub fn write_graph(g: &AttributedGraph, paths: &DatasetPaths) -> std::io::Result<()> {
    let mut f = create(&paths.features)?;
    for i in 0..g.num_nodes() {
        write_joined(&mut f, g.features().row(i), "\t")?;
    }
    f.flush()?;
    let mut e = create(&paths.edges)?;
    for &(u, v) in g.edges() {
        if g.is_directed() || u <= v {
            writeln!(e, "{u}\t{v}")?;
        }
    }
    e.flush()?;
    if let (Some(lp), Some(labels)) = (&paths.labels, g.labels()) {
        let mut l = create(lp)?;
        for y in labels {
            writeln!(l, "{y}")?;
        }
        l.flush()?;
    }
    Ok(())
}

/// CSV with a header row; the first column is the row index.
pub fn write_indexed_csv(path: &Path, header: &[String], m: &Matrix) -> std::io::Result<()> {
    let mut f = create(path)?;
    write_joined(&mut f, header, ",")?;
    for i in 0..m.rows() {
        write!(f, "{i},")?;
        write_joined(&mut f, m.row(i), ",")?;
    }
    f.flush()
}

/// `node,cluster` rows.
pub fn write_assignment_csv(path: &Path, assignment: &[usize]) -> std::io::Result<()> {
    let mut f = create(path)?;
    writeln!(f, "node,cluster")?;
    for (v, c) in assignment.iter().enumerate() {
        writeln!(f, "{v},{c}")?;
    }
    f.flush()
}

/// Reads a CSV written by [`write_indexed_csv`] back into a matrix, checking
/// the index column.
pub fn read_indexed_csv(path: &Path) -> Result<(Vec<String>, Matrix), LoadError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let header: Vec<String> = match lines.next() {
        Some((_, h)) => h.split(',').map(str::to_owned).collect(),
        None => return Err(malformed(path, 1, "missing header")),
    };
    let width = header.len().saturating_sub(1);
    let mut data = Vec::new();
    let mut rows = 0;
    for (i, l) in lines {
        let line = i + 1;
        let mut fields = l.split(',');
        let idx: usize = fields
            .next()
            .and_then(|f| f.parse().ok())
            .ok_or_else(|| malformed(path, line, "bad row index"))?;
        if idx != rows {
            return Err(malformed(path, line, format!("row index {idx}, expected {rows}")));
        }
        let before = data.len();
        for f in fields {
            data.push(f.parse::<f64>().map_err(|_| malformed(path, line, format!("not a number: {f:?}")))?);
        }
        if data.len() - before != width {
            return Err(malformed(path, line, format!("expected {width} values")));
        }
        rows += 1;
    }
    Ok((header, Matrix::from_vec(rows, width, data)?))
}

pub fn read_assignment_csv(path: &Path) -> Result<Vec<usize>, LoadError> {
    let (_, m) = read_indexed_csv(path)?;
    if m.cols() != 1 {
        return Err(malformed(path, 1, "expected node,cluster columns"));
    }
    Ok(m.as_slice().iter().map(|&c| c as usize).collect())
}

/// Matrix with node ids in the first row and first column.
pub fn write_labeled_csv(path: &Path, row_ids: &[usize], col_ids: &[usize], m: &Matrix) -> std::io::Result<()> {
    let mut f = create(path)?;
    write!(f, "node,")?;
    write_joined(&mut f, col_ids, ",")?;
    for (i, id) in row_ids.iter().enumerate() {
        write!(f, "{id},")?;
        write_joined(&mut f, m.row(i), ",")?;
    }
    f.flush()
}

/// Inverse of [`write_labeled_csv`]: `(row ids, column ids, values)`.
pub fn read_labeled_csv(path: &Path) -> Result<(Vec<usize>, Vec<usize>, Matrix), LoadError> {
    let text = read(path)?;
    let mut lines = text.lines().enumerate();
    let parse_id = |f: &str, line: usize| -> Result<usize, LoadError> {
        f.parse().map_err(|_| malformed(path, line, format!("not a node id: {f:?}")))
    };
    let cols: Vec<usize> = match lines.next() {
        Some((_, h)) => h.split(',').skip(1).map(|f| parse_id(f, 1)).collect::<Result<_, _>>()?,
        None => return Err(malformed(path, 1, "missing header")),
    };
    let mut rows = Vec::new();
    let mut data = Vec::new();
    for (i, l) in lines {
        let line = i + 1;
        let mut fields = l.split(',');
        rows.push(parse_id(fields.next().unwrap_or(""), line)?);
        let before = data.len();
        for f in fields {
            data.push(f.parse::<f64>().map_err(|_| malformed(path, line, format!("not a number: {f:?}")))?);
        }
        if data.len() - before != cols.len() {
            return Err(malformed(path, line, format!("expected {} values", cols.len())));
        }
    }
    let m = Matrix::from_vec(rows.len(), cols.len(), data)?;
    Ok((rows, cols, m))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn write(dir: &Path, name: &str, body: &str) -> PathBuf {
        let p = dir.join(name);
        fs::write(&p, body).unwrap();
        p
    }

    #[test]
    fn minimal_dataset() {
        let dir = tempfile::tempdir().unwrap();
        let paths = DatasetPaths {
            features: write(dir.path(), "x.tsv", "1\t2\t3\n4\t5\t6\n"),
            edges: write(dir.path(), "e.tsv", "# header\n0\t1\n"),
            labels: None,
        };
        let g = load_graph(&paths, true).unwrap();
        assert_eq!((g.num_nodes(), g.num_edges(), g.feature_dim()), (2, 1, 3));
        assert_eq!(load_graph(&paths, false).unwrap().num_edges(), 2);
    }

    #[test]
    fn errors_carry_line_numbers() {
        let dir = tempfile::tempdir().unwrap();
        let x = write(dir.path(), "x.tsv", "1\n2\n3\n");
        let e = write(dir.path(), "e.tsv", "0\t1\n\n1\t5\n");
        let err = load_graph(&DatasetPaths { features: x.clone(), edges: e, labels: None }, true).unwrap_err();
        assert!(matches!(err, LoadError::OutOfRange { line: 3, index: 5, .. }), "{err}");
        assert!(err.to_string().contains("e.tsv:3"));

        let bad = write(dir.path(), "bad.tsv", "1\t2\n3\tx\n");
        let err = load_features(&bad).unwrap_err();
        assert!(matches!(err, LoadError::Malformed { line: 2, .. }));
        let nan = write(dir.path(), "nan.tsv", "1\nNaN\n");
        assert!(matches!(load_features(&nan).unwrap_err(), LoadError::Malformed { line: 2, .. }));
        let ragged = write(dir.path(), "r.tsv", "1\t2\n3\n");
        assert!(matches!(load_features(&ragged).unwrap_err(), LoadError::Malformed { line: 2, .. }));

        let e = write(dir.path(), "e2.tsv", "0\t1\n");
        let labels = write(dir.path(), "y.tsv", "0\n1\n");
        let err = load_graph(&DatasetPaths { features: x, edges: e, labels: Some(labels) }, true).unwrap_err();
        assert!(matches!(err, LoadError::RowCount { found: 2, expected: 3, .. }));
    }

    #[test]
    fn graph_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let x = Matrix::from_fn(4, 2, |i, j| i as f64 * 0.1 + j as f64 / 3.0);
        let g = AttributedGraph::new(x, vec![(0, 1), (2, 3), (3, 0)], false)
            .unwrap()
            .with_labels(vec![0, 1, 1, 0], None)
            .unwrap();
        let paths = DatasetPaths {
            features: dir.path().join("x.tsv"),
            edges: dir.path().join("e.tsv"),
            labels: Some(dir.path().join("y.tsv")),
        };
        write_graph(&g, &paths).unwrap();
        assert_eq!(load_graph(&paths, false).unwrap(), g);
    }

    #[test]
    fn csv_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let m = Matrix::from_fn(3, 2, |i, j| (i as f64 - 1.3) * (j as f64 + 0.7));
        let p = dir.path().join("m.csv");
        let header = vec!["node".to_owned(), "a".to_owned(), "b".to_owned()];
        write_indexed_csv(&p, &header, &m).unwrap();
        assert_eq!(read_indexed_csv(&p).unwrap(), (header, m.clone()));
        let a = dir.path().join("a.csv");
        write_assignment_csv(&a, &[2, 0, 1]).unwrap();
        assert_eq!(read_assignment_csv(&a).unwrap(), [2, 0, 1]);
        let l = dir.path().join("s.csv");
        write_labeled_csv(&l, &[2, 0, 1], &[1, 2], &m).unwrap();
        assert_eq!(read_labeled_csv(&l).unwrap(), (vec![2, 0, 1], vec![1, 2], m));
    }
}
