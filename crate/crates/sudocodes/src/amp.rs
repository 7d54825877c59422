//! Approximate message passing for the reconstruction stage.
//!
//! The iteration runs on the column-restricted dense matrix Φ̃ (M2 × Ñ) with
//! the N(0, 1/N) entry convention of the *unrestricted* matrix, which is why
//! a scaling factor N/M2 appears in the pseudo-data and in the residual-based
//! noise estimator. Two scalar denoisers are provided: the closed-form
//! conditional expectation under a sparse-Gaussian prior, and a tabulated
//! "true prior" of the survivor coefficients (point mass at zero plus a
//! depleted-Gaussian continuous part).

use crate::error::{Error, Result};
use crate::measure::{DenseMatrix, LinearOperator};
use crate::quad::simpson_table;

// ---------------------------------------------------------------------------
// Prior table
// ---------------------------------------------------------------------------

/// Tabulated mixed prior: point mass at zero plus a continuous density
/// sampled on a uniform symmetric grid. The continuous part must integrate
/// to 1 − point_mass (checked at construction to 1e−6).
#[derive(Debug, Clone)]
pub struct PriorTable {
    pub xs: Vec<f64>,
    pub density: Vec<f64>,
    pub point_mass: f64,
}

impl PriorTable {
    pub fn new(xs: Vec<f64>, density: Vec<f64>, point_mass: f64) -> Result<Self> {
        if xs.len() != density.len() || xs.len() < 3 || xs.len() % 2 == 0 {
            return Err(Error::InvalidParameter(format!(
                "prior table needs an odd number (≥3) of matching nodes, got {}/{}",
                xs.len(),
                density.len()
            )));
        }
        if !(0.0..=1.0).contains(&point_mass) {
            return Err(Error::InvalidParameter(format!(
                "point mass {point_mass} outside [0,1]"
            )));
        }
        let t = Self {
            xs,
            density,
            point_mass,
        };
        let mass = t.continuous_mass();
        if (mass - (1.0 - point_mass)).abs() > 1e-6 {
            return Err(Error::InvalidParameter(format!(
                "continuous mass {mass:.9} does not complement point mass {point_mass:.9}"
            )));
        }
        Ok(t)
    }

    pub fn step(&self) -> f64 {
        (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64
    }

    /// ∫ρ(a)da over the tabulated range (composite Simpson).
    pub fn continuous_mass(&self) -> f64 {
        simpson_table(&self.density, self.step())
    }

    /// Second moment of the full prior (the point mass contributes nothing).
    pub fn second_moment(&self) -> f64 {
        let vals: Vec<f64> = self
            .xs
            .iter()
            .zip(&self.density)
            .map(|(&a, &rho)| a * a * rho)
            .collect();
        simpson_table(&vals, self.step())
    }

    /// Linearly interpolated continuous density (0 outside the grid).
    pub fn density_at(&self, a: f64) -> f64 {
        let lo = self.xs[0];
        let hi = self.xs[self.xs.len() - 1];
        if a < lo || a > hi {
            return 0.0;
        }
        let h = self.step();
        let pos = (a - lo) / h;
        let k = (pos.floor() as usize).min(self.xs.len() - 2);
        let frac = pos - k as f64;
        self.density[k] * (1.0 - frac) + self.density[k + 1] * frac
    }
}

// ---------------------------------------------------------------------------
// Denoisers
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DenoiserKind {
    SparseGaussianApprox,
    TruePriorTabulated,
}

/// Scalar denoiser specification: which conditional expectation to apply,
/// the survivor sparsity s̃, and (for the tabulated kind) the prior table.
#[derive(Debug, Clone)]
pub struct DenoiserSpec {
    pub kind: DenoiserKind,
    pub s_tilde: f64,
    pub prior_table: Option<PriorTable>,
}

impl DenoiserSpec {
    pub fn sparse_gaussian(s_tilde: f64) -> Result<Self> {
        if !(0.0..=1.0).contains(&s_tilde) {
            return Err(Error::InvalidParameter(format!(
                "s_tilde {s_tilde} outside [0,1]"
            )));
        }
        Ok(Self {
            kind: DenoiserKind::SparseGaussianApprox,
            s_tilde,
            prior_table: None,
        })
    }

    /// True-prior denoiser; s̃ is the continuous (nonzero) mass of the table.
    pub fn true_prior(table: PriorTable) -> Self {
        let s_tilde = 1.0 - table.point_mass;
        Self {
            kind: DenoiserKind::TruePriorTabulated,
            s_tilde,
            prior_table: Some(table),
        }
    }

    /// (η(v), η′(v)) at noise level sigma2.
    pub fn denoise(&self, v: f64, sigma2: f64) -> Result<(f64, f64)> {
        match self.kind {
            DenoiserKind::SparseGaussianApprox => {
                denoise_sparse_gaussian(v, sigma2, self.s_tilde)
            }
            DenoiserKind::TruePriorTabulated => denoise_true_prior(v, sigma2, self),
        }
    }
}

/// Conditional expectation E[X | X + √σ²·W = v] for the spike-and-slab prior
/// X ∼ (1−s̃)δ₀ + s̃·N(0,1), together with its exact derivative.
///
/// Closed form: η(v) = π(v)·v/(1+σ²), with posterior nonzero probability
/// π(v) = s̃·g₁(v) / (s̃·g₁(v) + (1−s̃)·g₀(v)), g₁ = N(0, 1+σ²), g₀ = N(0, σ²).
/// The likelihood ratio is evaluated in log space, so extreme v or tiny σ²
/// saturate π at 0/1 instead of overflowing. The derivative is
/// η′ = π/(1+σ²) + π(1−π)·v²/(σ²(1+σ²)²), which is also Var[X|v]/σ².
pub fn denoise_sparse_gaussian(v: f64, sigma2: f64, s_tilde: f64) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "denoiser variance must be positive, got {sigma2}"
        )));
    }
    if !(0.0..=1.0).contains(&s_tilde) {
        return Err(Error::InvalidParameter(format!(
            "s_tilde {s_tilde} outside [0,1]"
        )));
    }
    if s_tilde == 1.0 {
        // Pure Gaussian prior: Wiener shrinkage.
        return Ok((v / (1.0 + sigma2), 1.0 / (1.0 + sigma2)));
    }
    if s_tilde == 0.0 {
        return Ok((0.0, 0.0));
    }
    // ln g₀ − ln g₁ = −v²/2·(1/σ² − 1/(1+σ²)) + ½·ln((1+σ²)/σ²)
    let delta =
        -0.5 * v * v * (1.0 / sigma2 - 1.0 / (1.0 + sigma2)) + 0.5 * ((1.0 + sigma2) / sigma2).ln();
    let ratio = ((1.0 - s_tilde) / s_tilde) * delta.exp();
    let pi = if ratio.is_infinite() { 0.0 } else { 1.0 / (1.0 + ratio) };
    let eta = pi * v / (1.0 + sigma2);
    let deriv = pi / (1.0 + sigma2)
        + pi * (1.0 - pi) * v * v / (sigma2 * (1.0 + sigma2) * (1.0 + sigma2));
    Ok((eta, deriv))
}

/// Conditional expectation under the tabulated mixed prior, by quadrature of
/// the posterior moments over the table grid:
///   m_k(v) = w₀·0ᵏ·φ_σ(v) + ∫ aᵏ ρ(a) φ_σ(v−a) da,  k = 0,1,2,
///   η = m₁/m₀,  η′ = Var[X|v]/σ² = (m₂/m₀ − η²)/σ².
/// Gaussian factors are normalized by the largest exponent before summation,
/// so the moments stay finite for v far outside the table's support.
pub fn denoise_true_prior(v: f64, sigma2: f64, spec: &DenoiserSpec) -> Result<(f64, f64)> {
    if !(sigma2 > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "denoiser variance must be positive, got {sigma2}"
        )));
    }
    let table = spec.prior_table.as_ref().ok_or(Error::MissingPriorTable)?;
    let inv2s = 1.0 / (2.0 * sigma2);
    // Exponents of every Gaussian factor, including the point mass at 0.
    let e0 = -v * v * inv2s;
    let mut emax = e0;
    let exps: Vec<f64> = table
        .xs
        .iter()
        .map(|&a| {
            let e = -(v - a) * (v - a) * inv2s;
            if e > emax {
                emax = e;
            }
            e
        })
        .collect();
    let h = table.step();
    let mut m0_vals = Vec::with_capacity(table.xs.len());
    let mut m1_vals = Vec::with_capacity(table.xs.len());
    let mut m2_vals = Vec::with_capacity(table.xs.len());
    for ((&a, &rho), &e) in table.xs.iter().zip(&table.density).zip(&exps) {
        let g = (e - emax).exp() * rho;
        m0_vals.push(g);
        m1_vals.push(a * g);
        m2_vals.push(a * a * g);
    }
    let point = table.point_mass * (e0 - emax).exp();
    let m0 = point + simpson_table(&m0_vals, h);
    let m1 = simpson_table(&m1_vals, h);
    let m2 = simpson_table(&m2_vals, h);
    if m0 <= 0.0 {
        // Happens only for v so extreme that every factor underflows even
        // after normalization; the posterior is then effectively the prior
        // tail nearest v, and zero is the safe answer.
        return Ok((0.0, 0.0));
    }
    let eta = m1 / m0;
    let var = (m2 / m0 - eta * eta).max(0.0);
    Ok((eta, var / sigma2))
}

// ---------------------------------------------------------------------------
// AMP iteration
// ---------------------------------------------------------------------------

/// Iterate state. `n_full` is the *original* signal length N (the dense
/// ensemble is N(0, 1/N)-scaled), `x.len()` the survivor count Ñ.
#[derive(Debug, Clone)]
pub struct AmpState {
    pub x: Vec<f64>,
    pub r: Vec<f64>,
    pub r_prev: Vec<f64>,
    pub sigma2_hat: f64,
    pub t: usize,
    pub n_full: usize,
}

/// Floor applied to σ̂² before it reaches a denoiser, keeping the scalar
/// estimation function defined when the residual vanishes (exact recovery).
pub const SIGMA2_FLOOR: f64 = 1e-12;

impl AmpState {
    /// Standard initialization: x⁰ = 0, r⁰ = y (no Onsager term at t = 0).
    pub fn init(y: &[f64], n_tilde: usize, n_full: usize) -> Self {
        let m2 = y.len();
        let scale = n_full as f64 / m2 as f64;
        let sigma2_hat = scale * y.iter().map(|v| v * v).sum::<f64>() / m2 as f64;
        Self {
            x: vec![0.0; n_tilde],
            r: y.to_vec(),
            r_prev: vec![0.0; m2],
            sigma2_hat,
            t: 0,
            n_full,
        }
    }
}

/// One AMP step:
///   v      = (N/M2)·Φ̃ᵀr + x
///   x⁺     = η(v)           (at noise level σ̂²)
///   r⁺     = y − Φ̃x⁺ + (r/R̃)·⟨η′(v)⟩,   R̃ = M2/Ñ, ⟨·⟩ the mean over Ñ entries
///   σ̂²⁺   = (N/M2)·‖r⁺‖²/M2
pub fn amp_iterate(
    state: &AmpState,
    phi_tilde: &DenseMatrix,
    y: &[f64],
    denoiser: &DenoiserSpec,
) -> Result<AmpState> {
    let n_tilde = state.x.len();
    let m2 = y.len();
    if phi_tilde.cols() != n_tilde || phi_tilde.rows() != m2 || state.r.len() != m2 {
        return Err(Error::DimensionMismatch(format!(
            "AMP state ({}x{}) vs matrix ({}x{})",
            m2,
            n_tilde,
            phi_tilde.rows(),
            phi_tilde.cols()
        )));
    }
    let scale = state.n_full as f64 / m2 as f64;
    let sigma2 = state.sigma2_hat.max(SIGMA2_FLOOR);

    let mut v = phi_tilde.apply_transpose(&state.r);
    for (vj, xj) in v.iter_mut().zip(&state.x) {
        *vj = scale * *vj + xj;
    }

    let mut x_new = vec![0.0; n_tilde];
    let mut deriv_sum = 0.0;
    for (j, &vj) in v.iter().enumerate() {
        let (val, der) = denoiser.denoise(vj, sigma2)?;
        x_new[j] = val;
        deriv_sum += der;
    }
    let onsager = deriv_sum / n_tilde as f64 / (m2 as f64 / n_tilde as f64);

    let phix = phi_tilde.apply(&x_new);
    let mut r_new = vec![0.0; m2];
    for i in 0..m2 {
        r_new[i] = y[i] - phix[i] + state.r[i] * onsager;
    }
    let sigma2_hat = scale * r_new.iter().map(|v| v * v).sum::<f64>() / m2 as f64;
    if !sigma2_hat.is_finite() || x_new.iter().any(|v| !v.is_finite()) {
        return Err(Error::Diverged(state.t + 1));
    }
    Ok(AmpState {
        x: x_new,
        r: r_new,
        r_prev: state.r.clone(),
        sigma2_hat,
        t: state.t + 1,
        n_full: state.n_full,
    })
}

/// Per-iteration trace row; `mse` is filled when ground truth is supplied.
#[derive(Debug, Clone, serde::Serialize)]
pub struct AmpTraceRow {
    pub t: usize,
    pub sigma2_hat: f64,
    pub mse: Option<f64>,
}

/// Run AMP for `max_iter` iterations from the standard initialization and
/// return the final estimate together with the σ̂² trace. The trace row at
/// t also carries the empirical MSE of x_t against `truth` when given.
pub fn run_amp_traced(
    y: &[f64],
    phi_tilde: &DenseMatrix,
    denoiser: &DenoiserSpec,
    n_full: usize,
    max_iter: usize,
    truth: Option<&[f64]>,
) -> Result<(Vec<f64>, Vec<AmpTraceRow>)> {
    let mut state = AmpState::init(y, phi_tilde.cols(), n_full);
    let mut trace = Vec::with_capacity(max_iter + 1);
    let mse_of = |x: &[f64]| {
        truth.map(|xt| {
            x.iter()
                .zip(xt)
                .map(|(a, b)| (a - b) * (a - b))
                .sum::<f64>()
                / x.len().max(1) as f64
        })
    };
    trace.push(AmpTraceRow {
        t: 0,
        sigma2_hat: state.sigma2_hat,
        mse: mse_of(&state.x),
    });
    for _ in 0..max_iter {
        state = amp_iterate(&state, phi_tilde, y, denoiser)?;
        trace.push(AmpTraceRow {
            t: state.t,
            sigma2_hat: state.sigma2_hat,
            mse: mse_of(&state.x),
        });
    }
    Ok((state.x, trace))
}

/// Convenience wrapper without tracing. 20 iterations is the convention
/// used throughout the experiments.
pub fn run_amp(
    y: &[f64],
    phi_tilde: &DenseMatrix,
    denoiser: &DenoiserSpec,
    n_full: usize,
    max_iter: usize,
) -> Result<Vec<f64>> {
    run_amp_traced(y, phi_tilde, denoiser, n_full, max_iter, None).map(|(x, _)| x)
}
