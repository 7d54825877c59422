//! Signal models: strictly sparse vectors with Gaussian or Laplace nonzeros,
//! plus SNR accounting shared by the measurement ensembles.
//!
//! A coefficient is nonzero with probability `s` and then drawn from N(0,1)
//! or Laplace(0,b). The 1-bit convention rescales the whole vector to unit
//! ℓ₂ norm after sampling, which preserves the support.

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use rand::Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

/// Distribution of the nonzero coefficients.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SignalFamily {
    SparseGaussian,
    SparseLaplace,
}

/// Sparse signal model: sparsity rate, nonzero family, and conventions.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct SignalModel {
    pub family: SignalFamily,
    /// Probability that a coefficient is nonzero; must lie in (0,1).
    pub s: f64,
    /// Laplace scale parameter b (variance 2b²); ignored for Gaussian nonzeros.
    #[serde(default = "default_laplace_scale")]
    pub laplace_scale: f64,
    /// When set, the sampled vector is rescaled to ‖x‖₂ = 1.
    #[serde(default)]
    pub unit_norm: bool,
}

fn default_laplace_scale() -> f64 {
    1.0
}

impl SignalModel {
    pub fn sparse_gaussian(s: f64) -> Self {
        Self {
            family: SignalFamily::SparseGaussian,
            s,
            laplace_scale: 1.0,
            unit_norm: false,
        }
    }

    pub fn sparse_laplace(s: f64, b: f64) -> Self {
        Self {
            family: SignalFamily::SparseLaplace,
            s,
            laplace_scale: b,
            unit_norm: false,
        }
    }

    pub fn with_unit_norm(mut self) -> Self {
        self.unit_norm = true;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.s > 0.0 && self.s < 1.0) {
            return Err(Error::InvalidParameter(format!(
                "sparsity rate s must lie in (0,1), got {}",
                self.s
            )));
        }
        if self.laplace_scale <= 0.0 {
            return Err(Error::InvalidParameter(format!(
                "laplace scale must be positive, got {}",
                self.laplace_scale
            )));
        }
        Ok(())
    }
}

/// A sampled signal together with the model and seed that produced it.
#[derive(Debug, Clone)]
pub struct SignalVector {
    pub values: Vec<f64>,
    pub model: SignalModel,
    pub seed: u64,
}

impl SignalVector {
    pub fn support(&self) -> Vec<usize> {
        (0..self.values.len())
            .filter(|&j| self.values[j] != 0.0)
            .collect()
    }

    pub fn nonzero_count(&self) -> usize {
        self.values.iter().filter(|v| **v != 0.0).count()
    }
}

/// How many all-zero draws `sample_signal` tolerates before giving up when
/// unit normalization makes a zero vector unusable.
const MAX_RESAMPLES: usize = 64;

/// Draw a strictly sparse signal: each entry independently nonzero with
/// probability `model.s`. Deterministic given `(model, n, seed)`.
///
/// With `unit_norm` set, an all-zero draw is redrawn (fresh randomness from
/// the same stream) up to [`MAX_RESAMPLES`] times, then reported as an error.
pub fn sample_signal(model: &SignalModel, n: usize, seed: u64) -> Result<SignalVector> {
    model.validate()?;
    if n == 0 {
        return Err(Error::InvalidDimension("signal length 0".into()));
    }
    let mut rng = stream_rng(seed, stream::SIGNAL);
    let mut attempts = 0;
    loop {
        let mut values = vec![0.0; n];
        let mut any = false;
        for v in values.iter_mut() {
            if rng.random::<f64>() < model.s {
                *v = match model.family {
                    SignalFamily::SparseGaussian => StandardNormal.sample(&mut rng),
                    SignalFamily::SparseLaplace => sample_laplace(model.laplace_scale, &mut rng),
                };
                any = true;
            }
        }
        if model.unit_norm {
            if !any {
                attempts += 1;
                if attempts >= MAX_RESAMPLES {
                    return Err(Error::ResampleExhausted(attempts));
                }
                continue;
            }
            let norm = values.iter().map(|v| v * v).sum::<f64>().sqrt();
            for v in values.iter_mut() {
                *v /= norm;
            }
        }
        return Ok(SignalVector {
            values,
            model: *model,
            seed,
        });
    }
}

/// Laplace(0, b) by inverse-CDF: u ∼ U(−½, ½), x = −b·sign(u)·ln(1 − 2|u|).
fn sample_laplace<R: Rng>(b: f64, rng: &mut R) -> f64 {
    let u: f64 = rng.random::<f64>() - 0.5;
    -b * u.signum() * (1.0 - 2.0 * u.abs()).ln()
}

/// Measurement-domain SNR in dB: 10·log₁₀(‖Φx‖² / ‖z‖²).
///
/// `phi_apply` is the measurement operator as a closure so any matrix type
/// (or a matrix-free operator) can be passed in.
pub fn input_snr<F>(phi_apply: F, x: &[f64], z: &[f64]) -> Result<f64>
where
    F: FnOnce(&[f64]) -> Vec<f64>,
{
    let y = phi_apply(x);
    if y.len() != z.len() {
        return Err(Error::DimensionMismatch(format!(
            "operator output length {} vs noise length {}",
            y.len(),
            z.len()
        )));
    }
    let signal: f64 = y.iter().map(|v| v * v).sum();
    let noise: f64 = z.iter().map(|v| v * v).sum();
    if noise == 0.0 {
        return Err(Error::ZeroNormNoise);
    }
    Ok(10.0 * (signal / noise).log10())
}
