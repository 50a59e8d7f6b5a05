use alloc::string::String;
use alloc::vec::Vec;

use rand::seq::index::sample;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use super::params::{forward_backward, Bindings, ParamSet};
use super::tape::{Tape, Var};
use crate::math::abs;
use crate::{Error, Result};

/// Coordinates sampled per parameter; smaller parameters are checked fully.
pub const MIN_COORDINATES: usize = 20;

#[derive(Debug, Clone, PartialEq)]
pub struct GradCheckReport {
    pub max_rel_error: f64,
    /// Parameter and flat index where the maximum was attained.
    pub worst: Option<(String, usize)>,
    pub coordinates: usize,
}

/// Compares analytic gradients against central differences.
///
/// For every trainable parameter, up to [`MIN_COORDINATES`] entries are drawn
/// (all of them when the parameter is smaller) and the error
/// `|analytic − fd| / max(|fd|, 1e-8)` is maximized over the draws.
pub fn grad_check<F>(builder: F, params: &ParamSet, step: f64, seed: u64) -> Result<GradCheckReport>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    let (_, grads) = forward_backward(params, &builder)?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut probe = params.clone();
    let mut report = GradCheckReport {
        max_rel_error: 0.0,
        worst: None,
        coordinates: 0,
    };
    for (pi, p) in params.iter().enumerate() {
        let Some(analytic) = grads.by_index(pi) else { continue };
        let len = p.value.len();
        let picks: Vec<usize> = if len <= MIN_COORDINATES {
            (0..len).collect()
        } else {
            let mut v = sample(&mut rng, len, MIN_COORDINATES).into_vec();
            v.sort_unstable();
            v
        };
        for idx in picks {
            let base = p.value.as_slice()[idx];
            let plus = eval_at(&mut probe, pi, idx, base + step, &builder)?;
            let minus = eval_at(&mut probe, pi, idx, base - step, &builder)?;
            probe.params_mut()[pi].value.as_mut_slice()[idx] = base;
            let fd = (plus - minus) / (2.0 * step);
            let err = abs(analytic.as_slice()[idx] - fd) / abs(fd).max(1e-8);
            report.coordinates += 1;
            if err > report.max_rel_error || report.worst.is_none() {
                report.max_rel_error = report.max_rel_error.max(err);
                report.worst = Some((p.name.clone(), idx));
            }
        }
    }
    Ok(report)
}

fn eval_at<F>(probe: &mut ParamSet, pi: usize, idx: usize, x: f64, builder: &F) -> Result<f64>
where
    F: Fn(&mut Tape, &Bindings) -> Result<Var>,
{
    probe.params_mut()[pi].value.as_mut_slice()[idx] = x;
    let mut tape = Tape::new();
    let b = probe.bind(&mut tape)?;
    let loss = builder(&mut tape, &b).map_err(|_| Error::NonFinite { op: "grad_check" })?;
    let v = tape.scalar(loss);
    if !v.is_finite() {
        return Err(Error::NonFinite { op: "grad_check" });
    }
    Ok(v)
}

/// Distance of the forward pass at `params` from the nearest non-smooth point.
pub fn kink_distance<F>(builder: F, params: &ParamSet) -> Result<f64>
where
    F: FnOnce(&mut Tape, &Bindings) -> Result<Var>,
{
    let mut tape = Tape::new();
    let b = params.bind(&mut tape)?;
    builder(&mut tape, &b)?;
    Ok(tape.min_kink_distance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::Matrix;

    #[test]
    fn linear_map_is_exact() {
        let mut p = ParamSet::new();
        p.insert("w", Matrix::from_fn(2, 3, |i, j| (i as f64 - j as f64) * 0.1), true)
            .unwrap();
        let x = Matrix::row_vector(&[0.7, -1.3]);
        let c = Matrix::row_vector(&[1.0, 0.5, -2.0]);
        let report = grad_check(
            |t, b| {
                let x = t.leaf(x.clone())?;
                let c = t.leaf(c.clone())?;
                let y = t.matmul(x, b.var("w")?)?;
                let z = t.mul(y, c)?;
                t.sum(z)
            },
            &p,
            1e-5,
            0,
        )
        .unwrap();
        assert_eq!(report.coordinates, 6);
        assert!(report.max_rel_error < 1e-10, "{report:?}");
    }
}
