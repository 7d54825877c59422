//! Binary iterative hard thresholding for 1-bit measurements.
//!
//! Recovers a k-sparse direction from sign measurements y = sign(Φx). The
//! ℓ1 variant steps along the sign-mismatch gradient; the ℓ2 variant uses
//! the one-sided quadratic penalty ½·Σ max(0, −y_i(Φx)_i)², which is more
//! robust when the signs were taken of noisy measurements. Magnitude is not
//! observable through sign measurements, so the final estimate is returned
//! on the unit sphere.

use crate::error::{Error, Result};
use crate::measure::{sign_of, DenseMatrix, LinearOperator};

#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub enum BihtVariant {
    L1,
    L2,
}

#[derive(Debug, Clone, Copy)]
pub struct BihtConfig {
    pub variant: BihtVariant,
    /// Sparsity budget kept by the hard-thresholding step.
    pub k: usize,
    pub max_iter: usize,
    /// Step size; `None` uses the customary 1/M.
    pub step: Option<f64>,
    /// Stop as soon as sign(Φx) reproduces every measurement.
    pub stop_on_consistency: bool,
}

#[derive(Debug, Clone)]
pub struct BihtResult {
    /// Unit-norm estimate (all-zero if no update ever moved off the origin).
    pub x: Vec<f64>,
    pub iterations: usize,
    pub consistent: bool,
}

/// Keep the k largest-magnitude entries, zero the rest. Ties are broken
/// toward the lower index so the operation is deterministic.
pub fn hard_threshold_topk(x: &mut [f64], k: usize) {
    if k >= x.len() {
        return;
    }
    if k == 0 {
        x.iter_mut().for_each(|v| *v = 0.0);
        return;
    }
    let mut order: Vec<usize> = (0..x.len()).collect();
    order.sort_by(|&a, &b| {
        x[b].abs()
            .partial_cmp(&x[a].abs())
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    let mut keep = vec![false; x.len()];
    for &idx in order.iter().take(k) {
        keep[idx] = true;
    }
    for (v, both) in x.iter_mut().zip(keep) {
        if !both {
            *v = 0.0;
        }
    }
}

fn signs_match(y: &[i8], u: &[f64]) -> bool {
    y.iter().zip(u).all(|(&yi, &ui)| sign_of(ui) == yi)
}

/// Iterate hard-thresholded sign-consistency descent from the origin.
pub fn biht_solve(y: &[i8], phi: &DenseMatrix, cfg: &BihtConfig) -> Result<BihtResult> {
    let m = phi.rows();
    let n = phi.cols();
    if y.len() != m {
        return Err(Error::DimensionMismatch(format!(
            "{} sign measurements for a {}x{} matrix",
            y.len(),
            m,
            n
        )));
    }
    if cfg.k == 0 || cfg.k > n {
        return Err(Error::InvalidParameter(format!(
            "sparsity budget k={} outside 1..={}",
            cfg.k, n
        )));
    }
    if y.iter().any(|&v| v != 1 && v != -1) {
        return Err(Error::InvalidParameter(
            "sign measurements must be ±1".into(),
        ));
    }
    let tau = cfg.step.unwrap_or(1.0 / m as f64);
    let mut x = vec![0.0f64; n];
    let mut iterations = 0;
    let mut consistent = false;
    for t in 0..cfg.max_iter {
        let phix = phi.apply(&x);
        if cfg.stop_on_consistency && t > 0 && signs_match(y, &phix) {
            consistent = true;
            break;
        }
        // Residual in measurement space, by variant.
        let mut resid = vec![0.0f64; m];
        match cfg.variant {
            BihtVariant::L1 => {
                // (τ/2)·Φᵀ(y − sign(Φx))
                for i in 0..m {
                    resid[i] = 0.5 * (y[i] as f64 - sign_of(phix[i]) as f64);
                }
            }
            BihtVariant::L2 => {
                // τ·Φᵀ(y ⊙ max(−y⊙Φx, 0)): exact negative gradient of the
                // one-sided quadratic sign penalty.
                for i in 0..m {
                    let slack = (-(y[i] as f64) * phix[i]).max(0.0);
                    resid[i] = y[i] as f64 * slack;
                }
            }
        }
        let grad = phi.apply_transpose(&resid);
        for j in 0..n {
            x[j] += tau * grad[j];
        }
        hard_threshold_topk(&mut x, cfg.k);
        if x.iter().any(|v| !v.is_finite()) {
            return Err(Error::Diverged(t + 1));
        }
        iterations = t + 1;
    }
    if !consistent && cfg.stop_on_consistency {
        // One last check after the final update.
        consistent = signs_match(y, &phi.apply(&x));
    }
    let norm = x.iter().map(|v| v * v).sum::<f64>().sqrt();
    if norm > 0.0 {
        x.iter_mut().for_each(|v| *v /= norm);
    }
    Ok(BihtResult {
        x,
        iterations,
        consistent,
    })
}
