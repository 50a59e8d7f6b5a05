//! Twin feature maps, projections, `σ`, and the node and edge decoders.
//!
//! Every computation is written once as a tape builder; the plain functions
//! below run the same builders without a backward pass.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::autodiff::{sigmoid, softmax_rows, Bindings, ParamSet, Tape, Var};
use crate::graph::{AttributedGraph, PositionalEncoding};
use crate::linalg::Matrix;
use crate::math::sqrt;
use crate::{Error, Result};

pub const LEAKY_SLOPE: f64 = 0.01;
pub const BATCH_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize, serde::Deserialize))]
pub struct ModelDims {
    /// Node attribute width `d_x`.
    pub input_dim: usize,
    pub k_pe: usize,
    pub hidden: usize,
    /// Feature-space width `d_f`.
    pub feature_dim: usize,
    /// Latent width `s`.
    pub latent: usize,
    pub rec_hidden: usize,
}

impl ModelDims {
    /// Default widths for `num_clusters` clusters: hidden 256, `d_f` 128,
    /// `s = 2·num_clusters`.
    pub fn new(input_dim: usize, k_pe: usize, num_clusters: usize) -> Self {
        Self::with_widths(input_dim, k_pe, 256, 128, 2 * num_clusters)
    }

    pub fn with_widths(input_dim: usize, k_pe: usize, hidden: usize, feature_dim: usize, latent: usize) -> Self {
        Self {
            input_dim,
            k_pe,
            hidden,
            feature_dim,
            latent,
            rec_hidden: (2 * feature_dim + input_dim) / 2,
        }
    }

    pub fn map_input(&self) -> usize {
        self.input_dim + self.k_pe
    }

    fn validate(&self) -> Result<()> {
        let widths = [
            ("input_dim", self.input_dim),
            ("hidden", self.hidden),
            ("feature_dim", self.feature_dim),
            ("latent", self.latent),
            ("rec_hidden", self.rec_hidden),
        ];
        for (name, w) in widths {
            if w == 0 {
                return Err(Error::InvalidArgument(format!("{name} must be positive")));
            }
        }
        Ok(())
    }

    /// `(name, rows, cols)` of every parameter.
    pub fn layout(&self, tie_maps: bool) -> Vec<(String, usize, usize)> {
        let mut out = Vec::new();
        let maps: &[&str] = if tie_maps { &["phi"] } else { &["phi", "psi"] };
        for m in maps {
            out.push((format!("{m}.lin1.weight"), self.map_input(), self.hidden));
            out.push((format!("{m}.lin1.bias"), 1, self.hidden));
            out.push((format!("{m}.lin2.weight"), self.hidden, self.feature_dim));
            out.push((format!("{m}.norm.weight"), 1, self.feature_dim));
            out.push((format!("{m}.norm.bias"), 1, self.feature_dim));
        }
        out.push(("proj.u".into(), self.feature_dim, self.latent));
        out.push(("proj.v".into(), self.feature_dim, self.latent));
        out.push(("sigma.logits".into(), 1, self.latent));
        out.push(("rec.lin1.weight".into(), 2 * self.feature_dim, self.rec_hidden));
        out.push(("rec.lin1.bias".into(), 1, self.rec_hidden));
        out.push(("rec.lin2.weight".into(), self.rec_hidden, self.input_dim));
        out.push(("rec.lin2.bias".into(), 1, self.input_dim));
        out
    }
}

/// All trainable tensors of one model.
///
/// With `tie_maps` only the `phi.*` feature-map parameters exist and `ψ`
/// reuses them, so `Φ = Ψ` and `S` is symmetric. `U` and `V` stay separate.
#[derive(Debug, Clone, PartialEq)]
pub struct HenclerParams {
    dims: ModelDims,
    tie_maps: bool,
    params: ParamSet,
}

/// `Φ` and `Ψ`, one row per node. `S = ΦΨᵀ` is never formed during
/// training. The dual oracle also accepts a rectangular pair (`n` rows of `Φ`
/// against `m` rows of `Ψ`).
#[derive(Debug, Clone, PartialEq)]
pub struct SimilarityFactor {
    pub phi: Matrix,
    pub psi: Matrix,
}

/// Latent vectors `e = ΦU` and `r = ΨV`, one row per node.
#[derive(Debug, Clone, PartialEq)]
pub struct EmbeddingPair {
    pub e: Matrix,
    pub r: Matrix,
}

impl SimilarityFactor {
    pub fn new(phi: Matrix, psi: Matrix) -> Result<Self> {
        if phi.cols() != psi.cols() {
            return Err(Error::ShapeMismatch {
                op: "similarity factor",
                lhs: phi.shape(),
                rhs: psi.shape(),
            });
        }
        if !phi.is_finite() || !psi.is_finite() {
            return Err(Error::NonFinite { op: "similarity factor" });
        }
        Ok(Self { phi, psi })
    }

    pub fn num_nodes(&self) -> usize {
        self.phi.rows()
    }

    /// Materializes `S = ΦΨᵀ` (`n×n`).
    pub fn similarity(&self) -> Matrix {
        self.phi.matmul_t(&self.psi).expect("factor shapes agree")
    }
}

impl EmbeddingPair {
    pub fn new(e: Matrix, r: Matrix) -> Result<Self> {
        if e.shape() != r.shape() {
            return Err(Error::ShapeMismatch {
                op: "embedding pair",
                lhs: e.shape(),
                rhs: r.shape(),
            });
        }
        Ok(Self { e, r })
    }

    /// Row-wise `[e_v ‖ r_v]`.
    pub fn concatenated(&self) -> Matrix {
        self.e.hconcat(&self.r).expect("same row count")
    }
}

fn xavier(rows: usize, cols: usize, rng: &mut ChaCha8Rng) -> Matrix {
    let a = sqrt(6.0 / (rows + cols) as f64);
    Matrix::from_fn(rows, cols, |_, _| rng.random_range(-a..a))
}

impl HenclerParams {
    /// Xavier-uniform weights, zero biases, unit batch-norm scale and zero
    /// `σ` logits.
    pub fn init(dims: ModelDims, tie_maps: bool, seed: u64) -> Result<Self> {
        dims.validate()?;
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let mut params = ParamSet::new();
        for (name, rows, cols) in dims.layout(tie_maps) {
            let value = if name.ends_with(".bias") || name == "sigma.logits" {
                Matrix::zeros(rows, cols)
            } else if name.ends_with("norm.weight") {
                Matrix::filled(rows, cols, 1.0)
            } else {
                xavier(rows, cols, &mut rng)
            };
            params.insert(name, value, true)?;
        }
        Ok(Self {
            dims,
            tie_maps,
            params,
        })
    }

    /// Wraps an existing parameter set after checking names and shapes.
    pub fn from_param_set(dims: ModelDims, tie_maps: bool, params: ParamSet) -> Result<Self> {
        dims.validate()?;
        let layout = dims.layout(tie_maps);
        for (name, rows, cols) in &layout {
            let m = params.get(name)?;
            if m.shape() != (*rows, *cols) {
                return Err(Error::ShapeMismatch {
                    op: "parameter layout",
                    lhs: (*rows, *cols),
                    rhs: m.shape(),
                });
            }
        }
        if let Some(extra) = params.names().find(|n| !layout.iter().any(|(l, _, _)| l == n)) {
            return Err(Error::UnknownParameter(extra.into()));
        }
        Ok(Self {
            dims,
            tie_maps,
            params,
        })
    }

    pub fn dims(&self) -> &ModelDims {
        &self.dims
    }

    pub fn tie_maps(&self) -> bool {
        self.tie_maps
    }

    pub fn param_set(&self) -> &ParamSet {
        &self.params
    }

    pub fn param_set_mut(&mut self) -> &mut ParamSet {
        &mut self.params
    }

    pub fn get(&self, name: &str) -> Result<&Matrix> {
        self.params.get(name)
    }

    pub fn set(&mut self, name: &str, value: Matrix) -> Result<()> {
        self.params.set(name, value)
    }
}

/// Row-wise `[x_v ‖ PE_v]`.
pub fn model_input(g: &AttributedGraph, pe: &PositionalEncoding) -> Result<Matrix> {
    g.features().hconcat(pe.values())
}

/// Tape variables of one forward pass through maps and projections.
#[derive(Debug, Clone, Copy)]
pub struct ForwardVars {
    pub phi: Var,
    pub psi: Var,
    pub e: Var,
    pub r: Var,
    /// `1×s` softmax of the logits.
    pub sigma: Var,
    pub u: Var,
    pub v: Var,
}

fn linear(t: &mut Tape, b: &Bindings, x: Var, prefix: &str, bias: bool) -> Result<Var> {
    let w = b.var(&format!("{prefix}.weight"))?;
    let y = t.matmul(x, w)?;
    if bias {
        let bv = b.var(&format!("{prefix}.bias"))?;
        t.add(y, bv)
    } else {
        Ok(y)
    }
}

/// `batchnorm(W₂ · leaky(W₁ x + b₁))`. A bias before the batch norm would
/// cancel exactly, so there is none.
pub fn build_feature_map(t: &mut Tape, b: &Bindings, map: &str, input: Var) -> Result<Var> {
    let h = linear(t, b, input, &format!("{map}.lin1"), true)?;
    let h = t.leaky_relu(h, LEAKY_SLOPE)?;
    let z = linear(t, b, h, &format!("{map}.lin2"), false)?;
    let gamma = b.var(&format!("{map}.norm.weight"))?;
    let beta = b.var(&format!("{map}.norm.bias"))?;
    t.batch_norm(z, gamma, beta, BATCH_NORM_EPS)
}

pub fn build_forward(t: &mut Tape, b: &Bindings, tie_maps: bool, input: Var) -> Result<ForwardVars> {
    let phi = build_feature_map(t, b, "phi", input)?;
    let psi = if tie_maps {
        phi
    } else {
        build_feature_map(t, b, "psi", input)?
    };
    let u = b.var("proj.u")?;
    let v = b.var("proj.v")?;
    let e = t.matmul(phi, u)?;
    let r = t.matmul(psi, v)?;
    let logits = b.var("sigma.logits")?;
    let sigma = t.softmax_rows(logits)?;
    Ok(ForwardVars {
        phi,
        psi,
        e,
        r,
        sigma,
        u,
        v,
    })
}

/// `mlp_rec([E Uᵀ ‖ R Vᵀ])`, `n×d_x`.
pub fn build_decode_nodes(t: &mut Tape, b: &Bindings, e: Var, r: Var) -> Result<Var> {
    let ut = t.transpose(b.var("proj.u")?)?;
    let vt = t.transpose(b.var("proj.v")?)?;
    let a = t.matmul(e, ut)?;
    let c = t.matmul(r, vt)?;
    let x = t.concat_cols(a, c)?;
    let h = linear(t, b, x, "rec.lin1", true)?;
    let h = t.leaky_relu(h, LEAKY_SLOPE)?;
    linear(t, b, h, "rec.lin2", true)
}

/// Logits `e_uᵀ Uᵀ V r_v` for every pair, `pairs.len()×1`.
pub fn build_edge_logits(t: &mut Tape, fw: &ForwardVars, pairs: &[(usize, usize)]) -> Result<Var> {
    let ut = t.transpose(fw.u)?;
    let m = t.matmul(ut, fw.v)?;
    let src = t.gather_rows(fw.e, pairs.iter().map(|p| p.0).collect())?;
    let dst = t.gather_rows(fw.r, pairs.iter().map(|p| p.1).collect())?;
    let left = t.matmul(src, m)?;
    let prod = t.mul(left, dst)?;
    t.row_sum(prod)
}

fn run_forward<T>(
    params: &HenclerParams,
    input: &Matrix,
    f: impl FnOnce(&mut Tape, &Bindings, &ForwardVars) -> Result<T>,
) -> Result<T> {
    let d = params.dims();
    if input.cols() != d.map_input() {
        return Err(Error::ShapeMismatch {
            op: "model input",
            lhs: input.shape(),
            rhs: (input.rows(), d.map_input()),
        });
    }
    let mut t = Tape::new();
    let b = params.param_set().bind(&mut t)?;
    let x = t.leaf(input.clone())?;
    let fw = build_forward(&mut t, &b, params.tie_maps(), x)?;
    f(&mut t, &b, &fw)
}

pub fn map_features(g: &AttributedGraph, pe: &PositionalEncoding, params: &HenclerParams) -> Result<SimilarityFactor> {
    map_input(&model_input(g, pe)?, params)
}

/// [`map_features`] on a prepared `[X ‖ PE]` matrix.
pub fn map_input(input: &Matrix, params: &HenclerParams) -> Result<SimilarityFactor> {
    run_forward(params, input, |t, _, fw| {
        Ok(SimilarityFactor {
            phi: t.value(fw.phi).clone(),
            psi: t.value(fw.psi).clone(),
        })
    })
}

/// Maps, projections and `σ` in one pass.
pub fn forward(input: &Matrix, params: &HenclerParams) -> Result<(SimilarityFactor, EmbeddingPair, Vec<f64>)> {
    run_forward(params, input, |t, _, fw| {
        Ok((
            SimilarityFactor {
                phi: t.value(fw.phi).clone(),
                psi: t.value(fw.psi).clone(),
            },
            EmbeddingPair {
                e: t.value(fw.e).clone(),
                r: t.value(fw.r).clone(),
            },
            t.value(fw.sigma).as_slice().to_vec(),
        ))
    })
}

pub fn project(sf: &SimilarityFactor, params: &HenclerParams) -> Result<EmbeddingPair> {
    Ok(EmbeddingPair {
        e: sf.phi.matmul(params.get("proj.u")?)?,
        r: sf.psi.matmul(params.get("proj.v")?)?,
    })
}

/// `softmax(logits)`: entries in `(0, 1)` summing to one.
pub fn sigma_values(logits: &[f64]) -> Vec<f64> {
    softmax_rows(&Matrix::row_vector(logits)).into_vec()
}

pub fn decode_nodes(emb: &EmbeddingPair, params: &HenclerParams) -> Result<Matrix> {
    let mut t = Tape::new();
    let b = params.param_set().bind(&mut t)?;
    let e = t.leaf(emb.e.clone())?;
    let r = t.leaf(emb.r.clone())?;
    let out = build_decode_nodes(&mut t, &b, e, r)?;
    Ok(t.value(out).clone())
}

/// `sigmoid(e_uᵀ Uᵀ V r_v)`.
pub fn decode_edge(emb: &EmbeddingPair, params: &HenclerParams, u: usize, v: usize) -> Result<f64> {
    let n = emb.e.rows();
    for idx in [u, v] {
        if idx >= n {
            return Err(Error::NodeOutOfRange {
                index: idx,
                num_nodes: n,
            });
        }
    }
    let m = params.get("proj.u")?.t_matmul(params.get("proj.v")?)?;
    let er = Matrix::row_vector(emb.e.row(u)).matmul(&m)?;
    let logit: f64 = er.as_slice().iter().zip(emb.r.row(v)).map(|(a, b)| a * b).sum();
    Ok(sigmoid(logit))
}
