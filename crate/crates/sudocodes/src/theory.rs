//! Closed-form performance analysis of the two-part pipeline.
//!
//! Everything here is driven by one scalar function: the probability
//! P_{ε,d}(x_j) that a single stage-1 measurement row both touches
//! coefficient j and lands in the small-magnitude band [−ε, ε]. From it
//! follow the missed-detection and false-alarm probabilities of the zero
//! identifier, the expected size and sparsity of the surviving problem, the
//! mixed prior of the survivors, the composite noise handed to stage 2, a
//! state-evolution recursion predicting the reconstruction MSE, and a
//! runtime/quality trade-off sweep over the tunable parameters (d, ε, c, r).

use crate::amp::{DenoiserKind, DenoiserSpec, PriorTable};
use crate::error::{Error, Result};
use crate::model::SignalFamily;
use crate::quad::{
    adaptive_simpson, adaptive_simpson_split, simpson_table, std_normal_pdf, GaussHermite,
};
use serde::{Deserialize, Serialize};
use statrs::function::erf::erf;
use statrs::function::gamma::{gamma_lr, ln_gamma};

/// Binomial / Poisson series terms below this weight are dropped (the
/// weights decay super-geometrically past their mode).
const WEIGHT_TRUNCATION: f64 = 1e-16;
/// Above this signal length the Binomial(N−1, d/N) contributor-count law is
/// replaced by its Poisson(d) limit.
const POISSON_THRESHOLD: usize = 100_000;
/// Absolute tolerance of the false-alarm averaging integral.
const P_FA_TOL: f64 = 1e-9;

/// Stage-1 configuration plus signal model, the argument of every analysis
/// function in this module.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct Part1Params {
    pub n: usize,
    pub m1: usize,
    pub s: f64,
    pub d: f64,
    pub eps: f64,
    pub c: u32,
    pub sigma_z2: f64,
    pub family: SignalFamily,
}

impl Part1Params {
    pub fn validate(&self) -> Result<()> {
        if self.n == 0 || self.m1 == 0 {
            return Err(Error::InvalidDimension(format!(
                "n={} m1={} must be positive",
                self.n, self.m1
            )));
        }
        if !(self.s > 0.0 && self.s <= 1.0) {
            return Err(Error::InvalidParameter(format!("s={} outside (0,1]", self.s)));
        }
        if !(self.d > 0.0) {
            return Err(Error::InvalidParameter(format!("d={} must be positive", self.d)));
        }
        if self.d / (self.s * self.n as f64) > 1.0 + 1e-12 {
            return Err(Error::DensityTooHigh(self.d / (self.s * self.n as f64)));
        }
        if self.eps < 0.0 || self.sigma_z2 < 0.0 {
            return Err(Error::InvalidParameter(format!(
                "eps={} sigma_z2={} must be nonnegative",
                self.eps, self.sigma_z2
            )));
        }
        if self.c == 0 {
            return Err(Error::InvalidParameter("c must be at least 1".into()));
        }
        Ok(())
    }

    fn gamma(&self) -> f64 {
        (self.s / self.d).sqrt()
    }
}

// ---------------------------------------------------------------------------
// Contributor-count weights
// ---------------------------------------------------------------------------

/// Weights of the number of interfering coefficients on one measurement row:
/// Binomial(N−1, d/N), or Poisson(d) for very large N. Truncated once past
/// the mode and below WEIGHT_TRUNCATION.
fn contributor_weights(n_signal: usize, d: f64) -> Vec<(usize, f64)> {
    if n_signal > POISSON_THRESHOLD {
        poisson_weights(d)
    } else {
        binomial_weights(n_signal - 1, d / n_signal as f64)
    }
}

fn binomial_weights(trials: usize, p: f64) -> Vec<(usize, f64)> {
    if p <= 0.0 {
        return vec![(0, 1.0)];
    }
    if p >= 1.0 {
        return vec![(trials, 1.0)];
    }
    let mean = trials as f64 * p;
    let mut out = Vec::new();
    let mut w = (trials as f64 * (-p).ln_1p()).exp();
    let ratio = p / (1.0 - p);
    for k in 0..=trials {
        out.push((k, w));
        if k as f64 > mean && w < WEIGHT_TRUNCATION {
            break;
        }
        w *= (trials - k) as f64 / (k + 1) as f64 * ratio;
    }
    out
}

fn poisson_weights(lambda: f64) -> Vec<(usize, f64)> {
    let mut out = Vec::new();
    let mut w = (-lambda).exp();
    let mut k = 0usize;
    loop {
        out.push((k, w));
        if k as f64 > lambda && w < WEIGHT_TRUNCATION {
            break;
        }
        w *= lambda / (k + 1) as f64;
        k += 1;
    }
    out
}

// ---------------------------------------------------------------------------
// P_{ε,d}
// ---------------------------------------------------------------------------

/// P(Gaussian with the given mean/variance lands in [lo, hi]). The
/// zero-variance limit keeps the convention that a zero-width band at an
/// atom has probability zero.
fn gaussian_interval_prob(lo: f64, hi: f64, mean: f64, var: f64) -> f64 {
    if var > 0.0 {
        let denom = (2.0 * var).sqrt();
        return 0.5 * (erf((hi - mean) / denom) - erf((lo - mean) / denom));
    }
    // Point mass at `mean`.
    if lo == hi {
        0.0
    } else if mean > lo && mean < hi {
        1.0
    } else if mean == lo || mean == hi {
        0.5
    } else {
        0.0
    }
}

/// Probability that one stage-1 row both touches coefficient j (value x_j)
/// and produces a measurement inside [−ε, ε]. Dispatches on the signal
/// family for the law of the interfering coefficients.
pub fn p_eps_d(x_j: f64, p: &Part1Params) -> f64 {
    match p.family {
        SignalFamily::SparseGaussian => p_eps_d_gaussian(x_j, p),
        SignalFamily::SparseLaplace => p_eps_d_laplace(x_j, p),
    }
}

/// Gaussian-input closed form: the measurement conditioned on n interferers
/// is N(γ·x_j, n·s/d + σ_z²) with γ = √(s/d), so each term is an erf
/// difference weighted by the contributor-count law and by the probability
/// d/(sN) that the row touches j at all.
pub fn p_eps_d_gaussian(x_j: f64, p: &Part1Params) -> f64 {
    p_eps_d_gaussian_weighted(x_j, p, &contributor_weights(p.n, p.d))
}

fn p_eps_d_gaussian_weighted(x_j: f64, p: &Part1Params, weights: &[(usize, f64)]) -> f64 {
    let n_f = p.n as f64;
    let touch = p.d / (p.s * n_f);
    if touch == 0.0 {
        return 0.0;
    }
    let gamma = p.gamma();
    let mean = gamma * x_j;
    let mut acc = 0.0;
    for &(n_c, w) in weights {
        let var = n_c as f64 * p.s / p.d + p.sigma_z2;
        acc += w * gaussian_interval_prob(-p.eps, p.eps, mean, var);
    }
    (acc * touch).clamp(0.0, 1.0)
}

/// Laplace-input variant. Conditioned on n ≥ 1 interferers the measurement
/// is γ·(sum of n standard Laplace) + Gaussian noise, whose characteristic
/// function is e^{−σ²t²/2}/(1+(s/d)t²)^n; the band probability follows by
/// integrating the inversion formula over the band, which reduces to
///   (1/π)·∫₀^∞ e^{−σ²t²/2}·[sin(Bt) − sin(At)] / (t·(1+(s/d)t²)^n) dt
/// with A = −ε−γx_j, B = ε−γx_j. For σ = 0 the oscillatory tail decays too
/// slowly, so the noiseless case instead writes the Laplace sum as a
/// difference of two Gamma(n) variables and integrates the incomplete
/// gamma function — smooth and fast.
pub fn p_eps_d_laplace(x_j: f64, p: &Part1Params) -> f64 {
    let n_f = p.n as f64;
    let touch = p.d / (p.s * n_f);
    if touch == 0.0 {
        return 0.0;
    }
    let gamma = p.gamma();
    let beta = p.s / p.d; // γ²
    let lo = -p.eps - gamma * x_j;
    let hi = p.eps - gamma * x_j;
    let mut acc = 0.0;
    for (n_c, w) in contributor_weights(p.n, p.d) {
        acc += w * laplace_sum_interval_prob(n_c, lo, hi, p.sigma_z2, beta);
    }
    (acc * touch).clamp(0.0, 1.0)
}

/// P(lo ≤ y ≤ hi) for y = √β·(sum of n standard Laplace) + N(0, σ²).
fn laplace_sum_interval_prob(n: usize, lo: f64, hi: f64, sigma2: f64, beta: f64) -> f64 {
    if n == 0 {
        return gaussian_interval_prob(lo, hi, 0.0, sigma2);
    }
    if sigma2 == 0.0 {
        return laplace_sum_interval_noiseless(n, lo, hi, beta);
    }
    // Truncation point: the Gaussian factor is below 1e−12 past
    // √(2·ln 1e12)/σ, and the rational factor's tail integral is below
    // 1e−13 past its own bound; take the smaller.
    let sigma = sigma2.sqrt();
    let t_gauss = (2.0 * 12.0 * std::f64::consts::LN_10).sqrt() / sigma;
    let t_rational = (1.0 / (2.0 * n as f64 * 1e-13 * beta.powi(n as i32)))
        .powf(1.0 / (2.0 * n as f64));
    let t_max = t_gauss.min(t_rational);
    let f = |t: f64| {
        let osc = if t.abs() < 1e-9 {
            hi - lo
        } else {
            ((hi * t).sin() - (lo * t).sin()) / t
        };
        (-0.5 * sigma2 * t * t).exp() * osc / (1.0 + beta * t * t).powi(n as i32)
    };
    (adaptive_simpson(&f, 0.0, t_max, 1e-11) / std::f64::consts::PI).clamp(0.0, 1.0)
}

/// Noiseless band probability via the Gamma-difference representation:
/// sum of n standard Laplace = G − H with G, H ~ Gamma(n, 1) independent,
/// so P(lo ≤ √β(G−H) ≤ hi) = E_H[P(n, hi/√β + H) − P(n, lo/√β + H)] with
/// P(n, ·) the regularized lower incomplete gamma function.
fn laplace_sum_interval_noiseless(n: usize, lo: f64, hi: f64, beta: f64) -> f64 {
    let root = beta.sqrt();
    let a = lo / root;
    let b = hi / root;
    let nf = n as f64;
    let density = |h: f64| {
        if n == 1 {
            (-h).exp()
        } else {
            ((nf - 1.0) * h.ln() - h - ln_gamma(nf)).exp()
        }
    };
    // Regularized lower incomplete gamma, extended by its limit at 0.
    let reg = |x: f64| if x > 0.0 { gamma_lr(nf, x) } else { 0.0 };
    let f = |h: f64| density(h) * (reg(b + h) - reg(a + h));
    let h_max = nf + 12.0 * nf.sqrt() + 30.0;
    adaptive_simpson(&f, 0.0, h_max, 1e-11).clamp(0.0, 1.0)
}

// ---------------------------------------------------------------------------
// Error probabilities of the zero identifier
// ---------------------------------------------------------------------------

/// P(Binomial(trials, q) ≤ k−1), evaluated term by term in log space so
/// tiny q and large trial counts cannot underflow to a wrong zero.
fn binomial_cdf_below(trials: usize, q: f64, k: u32) -> f64 {
    if k == 0 {
        return 0.0;
    }
    if k as usize > trials {
        return 1.0;
    }
    if q <= 0.0 {
        return 1.0;
    }
    if q >= 1.0 {
        return 0.0;
    }
    let tf = trials as f64;
    let ln_q = q.ln();
    let ln_1mq = (-q).ln_1p();
    let mut acc = 0.0;
    for m in 0..k as usize {
        let mf = m as f64;
        let ln_term = ln_gamma(tf + 1.0) - ln_gamma(mf + 1.0) - ln_gamma(tf - mf + 1.0)
            + mf * ln_q
            + (tf - mf) * ln_1mq;
        acc += ln_term.exp();
    }
    acc.clamp(0.0, 1.0)
}

/// Probability that a true zero is *not* declared zero: its hit count
/// S ~ Binomial(M1, P_{ε,d}(0)) falls below the threshold c.
pub fn p_md(p: &Part1Params) -> f64 {
    binomial_cdf_below(p.m1, p_eps_d(0.0, p), p.c)
}

/// Probability that a nonzero coefficient of value a is declared zero.
pub fn p_fa_at(a: f64, p: &Part1Params) -> f64 {
    1.0 - binomial_cdf_below(p.m1, p_eps_d(a, p), p.c)
}

/// Density of a nonzero coefficient under the signal family.
fn nonzero_density(family: SignalFamily, a: f64) -> f64 {
    match family {
        SignalFamily::SparseGaussian => std_normal_pdf(a),
        SignalFamily::SparseLaplace => 0.5 * (-a.abs()).exp(),
    }
}

/// Integration half-width capturing the nonzero-value density to well below
/// the quadrature tolerance.
fn family_half_width(family: SignalFamily) -> f64 {
    match family {
        SignalFamily::SparseGaussian => 8.0,
        SignalFamily::SparseLaplace => 40.0,
    }
}

/// False-alarm probability averaged over the nonzero-value distribution.
pub fn p_fa(p: &Part1Params) -> f64 {
    p_fa_with_tol(p, P_FA_TOL)
}

/// Same with an explicit quadrature tolerance (used by stability checks).
pub fn p_fa_with_tol(p: &Part1Params, tol: f64) -> f64 {
    let hw = family_half_width(p.family);
    adaptive_simpson_split(
        &|a: f64| p_fa_at(a, p) * nonzero_density(p.family, a),
        -hw,
        hw,
        &value_scale_knots(),
        tol,
    )
    .clamp(0.0, 1.0)
}

/// Interior split points for integrals over the nonzero-value axis.
///
/// P_FA(a) can drop from O(1) to numerically zero within a unit or two of
/// the origin while the value density keeps the tails alive, so the product
/// integrand is often a narrow bump well inside the ±half-width interval.
/// Worse, an a²-weighted integrand vanishes exactly at the origin, and a
/// plain adaptive sweep whose coarse probes (centre, endpoints, quarter
/// points) all land on ≈ 0 accepts a zero integral without ever sampling
/// the bump. Dyadic knots at unit scale bracket any feature of the
/// unit-variance value distributions used here.
fn value_scale_knots() -> [f64; 13] {
    [
        -4.0, -2.0, -1.0, -0.5, -0.25, -0.125, 0.0, 0.125, 0.25, 0.5, 1.0, 2.0, 4.0,
    ]
}

// ---------------------------------------------------------------------------
// The surviving problem
// ---------------------------------------------------------------------------

/// Expected length Ñ and sparsity s̃ of the coefficient vector passed to
/// stage 2. When everything is declared zero (D = 0) the length is 0 and
/// the sparsity is reported as NaN.
pub fn part2_dims(p: &Part1Params) -> (f64, f64) {
    let pmd = p_md(p);
    let pfa = p_fa(p);
    part2_dims_from(p, pmd, pfa)
}

fn part2_dims_from(p: &Part1Params, pmd: f64, pfa: f64) -> (f64, f64) {
    let d_frac = (1.0 - p.s) * pmd + p.s * (1.0 - pfa);
    if d_frac <= 0.0 {
        return (0.0, f64::NAN);
    }
    (p.n as f64 * d_frac, p.s * (1.0 - pfa) / d_frac)
}

/// One-point evaluation of the survivor prior: the weight of the atom at
/// zero and the continuous density at a.
#[derive(Debug, Clone, Copy)]
pub struct PriorEval {
    pub point_mass: f64,
    pub density: f64,
}

/// Mixed prior of a surviving coefficient: with probability
/// (1−s)·P_MD / D it is a true zero; otherwise it carries the
/// survivor-biased nonzero density s·(1−P_FA(a))·f(a) / D.
pub fn prior_x_t(a: f64, p: &Part1Params) -> PriorEval {
    let pmd = p_md(p);
    let pfa = p_fa(p);
    let d_frac = (1.0 - p.s) * pmd + p.s * (1.0 - pfa);
    if d_frac <= 0.0 {
        return PriorEval {
            point_mass: 1.0,
            density: 0.0,
        };
    }
    PriorEval {
        point_mass: (1.0 - p.s) * pmd / d_frac,
        density: p.s * (1.0 - p_fa_at(a, p)) * nonzero_density(p.family, a) / d_frac,
    }
}

/// Tabulate the survivor prior on a symmetric grid sized for the family's
/// tails (odd point count required by the Simpson rule downstream).
pub fn build_prior_table(p: &Part1Params, points: usize) -> Result<PriorTable> {
    let hw = match p.family {
        SignalFamily::SparseGaussian => 10.0,
        SignalFamily::SparseLaplace => 18.0,
    };
    build_prior_table_half_width(p, points, hw)
}

pub fn build_prior_table_half_width(
    p: &Part1Params,
    points: usize,
    half_width: f64,
) -> Result<PriorTable> {
    if points < 3 || points % 2 == 0 {
        return Err(Error::InvalidParameter(format!(
            "prior table needs an odd point count ≥ 3, got {points}"
        )));
    }
    let pmd = p_md(p);
    let pfa = p_fa(p);
    let d_frac = (1.0 - p.s) * pmd + p.s * (1.0 - pfa);
    if d_frac <= 0.0 {
        return Err(Error::InvalidParameter(
            "survivor set is empty in expectation; no prior to tabulate".into(),
        ));
    }
    let h = 2.0 * half_width / (points - 1) as f64;
    let xs: Vec<f64> = (0..points).map(|k| -half_width + k as f64 * h).collect();
    let density: Vec<f64> = xs
        .iter()
        .map(|&a| p.s * (1.0 - p_fa_at(a, p)) * nonzero_density(p.family, a) / d_frac)
        .collect();
    // Normalize the residual quadrature error so the table passes its own
    // mass validation exactly; the correction is O(1e−8) for the default
    // grids.
    let target = p.s * (1.0 - pfa) / d_frac;
    let raw = simpson_table(&density, h);
    let scaled: Vec<f64> = if raw > 0.0 {
        density.iter().map(|v| v * target / raw).collect()
    } else {
        density
    };
    PriorTable::new(xs, scaled, (1.0 - p.s) * pmd / d_frac)
}

/// Expected energy of the falsely discarded coefficients, and the variance
/// per full-length coordinate of the composite noise they induce on the
/// stage-2 measurements: E‖x_FA‖² = s·N·∫a²·P_FA(a)·f(a)da, σ²_FA = E/N.
pub fn fa_noise_power(p: &Part1Params) -> (f64, f64) {
    let hw = family_half_width(p.family);
    let integral = adaptive_simpson_split(
        &|a: f64| a * a * p_fa_at(a, p) * nonzero_density(p.family, a),
        -hw,
        hw,
        &value_scale_knots(),
        P_FA_TOL,
    )
    .max(0.0);
    let energy = p.s * p.n as f64 * integral;
    (energy, energy / p.n as f64)
}

/// All stage-1 analysis quantities bundled, computed once.
#[derive(Debug, Clone, Copy, Serialize)]
pub struct TheoryPoint {
    pub p_md: f64,
    pub p_fa: f64,
    pub n_tilde: f64,
    pub s_tilde: f64,
    pub e_xfa2: f64,
    pub sigma_fa2: f64,
}

impl TheoryPoint {
    pub fn new(p: &Part1Params) -> Result<Self> {
        p.validate()?;
        let pmd = p_md(p);
        let pfa = p_fa(p);
        let (n_tilde, s_tilde) = part2_dims_from(p, pmd, pfa);
        let (e_xfa2, sigma_fa2) = fa_noise_power(p);
        Ok(Self {
            p_md: pmd,
            p_fa: pfa,
            n_tilde,
            s_tilde,
            e_xfa2,
            sigma_fa2,
        })
    }
}

// ---------------------------------------------------------------------------
// State evolution
// ---------------------------------------------------------------------------

/// Quadrature sizing for the state-evolution expectations.
#[derive(Debug, Clone, Copy)]
pub struct SeOptions {
    pub t_max: usize,
    pub grid_points: usize,
    pub gh_points: usize,
}

impl Default for SeOptions {
    fn default() -> Self {
        Self {
            t_max: 20,
            grid_points: 2001,
            gh_points: 61,
        }
    }
}

/// Predicted effective-noise trajectory. `sigma2[t]` is the variance seen
/// by the denoiser at iteration t; `mse[t]` the per-coordinate estimation
/// error E[(η_t(X+σ_t W)−X)²] produced at that iteration.
#[derive(Debug, Clone, Serialize)]
pub struct SeTrajectory {
    pub sigma2: Vec<f64>,
    pub mse: Vec<f64>,
    pub diverged: bool,
}

/// Prior used inside the SE expectations: atom at zero plus a density on a
/// uniform grid.
struct SePrior {
    point_mass: f64,
    xs: Vec<f64>,
    density: Vec<f64>,
    second_moment: f64,
}

impl SePrior {
    fn sparse_gaussian(s_tilde: f64, opts: &SeOptions) -> Self {
        let hw = 10.0;
        let h = 2.0 * hw / (opts.grid_points - 1) as f64;
        let xs: Vec<f64> = (0..opts.grid_points)
            .map(|k| -hw + k as f64 * h)
            .collect();
        let density: Vec<f64> = xs.iter().map(|&a| s_tilde * std_normal_pdf(a)).collect();
        Self {
            point_mass: 1.0 - s_tilde,
            xs,
            density,
            second_moment: s_tilde,
        }
    }

    fn from_table(t: &PriorTable) -> Self {
        Self {
            point_mass: t.point_mass,
            xs: t.xs.clone(),
            density: t.density.clone(),
            second_moment: t.second_moment(),
        }
    }

    fn step(&self) -> f64 {
        (self.xs[self.xs.len() - 1] - self.xs[0]) / (self.xs.len() - 1) as f64
    }
}

/// E[(η(X+σW)−X)²] for X from the prior and W standard normal, by
/// Gauss–Hermite in W and Simpson over the continuous part of X.
fn se_mse(
    prior: &SePrior,
    eta: &mut dyn FnMut(f64) -> f64,
    sigma: f64,
    gh: &GaussHermite,
) -> f64 {
    let point = gh.expect(|w| {
        let e = eta(sigma * w);
        e * e
    });
    let vals: Vec<f64> = prior
        .xs
        .iter()
        .zip(&prior.density)
        .map(|(&a, &rho)| {
            rho * gh.expect(|w| {
                let e = eta(a + sigma * w) - a;
                e * e
            })
        })
        .collect();
    prior.point_mass * point + simpson_table(&vals, prior.step())
}

/// Core SE recursion, denoiser supplied as a closure of (v, σ²).
fn se_run(
    prior: &SePrior,
    mut eta: impl FnMut(f64, f64) -> f64,
    scale: f64,
    r_tilde: f64,
    sigma_tilde_z2: f64,
    opts: &SeOptions,
) -> SeTrajectory {
    let gh = GaussHermite::new(opts.gh_points).expect("Gauss–Hermite size");
    let mut sigma2 = vec![scale * sigma_tilde_z2 + prior.second_moment / r_tilde];
    let mut mse = Vec::new();
    let mut diverged = false;
    for _ in 0..opts.t_max {
        let cur = *sigma2.last().unwrap();
        if !cur.is_finite() || cur > 1e12 {
            diverged = true;
            break;
        }
        let sigma = cur.max(1e-300).sqrt();
        let m = se_mse(prior, &mut |v| eta(v, cur), sigma, &gh);
        let next = scale * sigma_tilde_z2 + m / r_tilde;
        mse.push(m);
        // Fixed point reached: freeze the remaining iterations.
        if (next - cur).abs() < 1e-12 * cur.max(1e-30) {
            while sigma2.len() < opts.t_max + 1 {
                sigma2.push(next);
            }
            while mse.len() < opts.t_max {
                mse.push(m);
            }
            break;
        }
        sigma2.push(next);
    }
    SeTrajectory {
        sigma2,
        mse,
        diverged,
    }
}

/// Tabulated-denoiser evaluation grid for one SE iteration (the tabulated
/// conditional expectation is expensive; interpolating it on a fixed grid
/// keeps a full SE run fast).
fn tabulate_eta(den: &DenoiserSpec, sigma2: f64, v_half: f64, points: usize) -> (f64, f64, Vec<f64>) {
    let h = 2.0 * v_half / (points - 1) as f64;
    let vals: Vec<f64> = (0..points)
        .map(|k| {
            let v = -v_half + k as f64 * h;
            den.denoise(v, sigma2).map(|(e, _)| e).unwrap_or(0.0)
        })
        .collect();
    (-v_half, h, vals)
}

/// The state-evolution recursion for the surviving subproblem:
///   σ²_{t+1} = (N/M2)·σ̃_z² + (1/R̃)·E[(η_t(X+σ_t·W) − X)²],
/// with R̃ = M2/Ñ, σ̃_z² = σ²_FA + σ²_z, X drawn from the prior matched to
/// the denoiser, and σ²₀ = (N/M2)·σ̃_z² + (1/R̃)·E[X²].
pub fn state_evolution(
    p: &Part1Params,
    m2: usize,
    denoiser: &DenoiserSpec,
    opts: &SeOptions,
) -> Result<SeTrajectory> {
    let tp = TheoryPoint::new(p)?;
    state_evolution_with(&tp, p, m2, denoiser, opts)
}

pub fn state_evolution_with(
    tp: &TheoryPoint,
    p: &Part1Params,
    m2: usize,
    denoiser: &DenoiserSpec,
    opts: &SeOptions,
) -> Result<SeTrajectory> {
    if m2 == 0 {
        return Err(Error::InvalidDimension("m2 must be positive".into()));
    }
    if !(tp.n_tilde > 0.0) {
        return Err(Error::InvalidParameter(
            "expected survivor length is zero; nothing to analyze".into(),
        ));
    }
    let scale = p.n as f64 / m2 as f64;
    let r_tilde = m2 as f64 / tp.n_tilde;
    let sigma_tilde_z2 = tp.sigma_fa2 + p.sigma_z2;
    match denoiser.kind {
        DenoiserKind::SparseGaussianApprox => {
            let prior = SePrior::sparse_gaussian(denoiser.s_tilde, opts);
            Ok(se_run(
                &prior,
                |v, s2| {
                    crate::amp::denoise_sparse_gaussian(v, s2, denoiser.s_tilde)
                        .map(|(e, _)| e)
                        .unwrap_or(0.0)
                },
                scale,
                r_tilde,
                sigma_tilde_z2,
                opts,
            ))
        }
        DenoiserKind::TruePriorTabulated => {
            let table = denoiser
                .prior_table
                .as_ref()
                .ok_or(Error::MissingPriorTable)?;
            let prior = SePrior::from_table(table);
            let hw = table.xs[table.xs.len() - 1];
            // Per-σ² interpolation table, rebuilt whenever the noise level
            // changes (once per SE iteration).
            let mut cache: Option<(f64, f64, f64, Vec<f64>)> = None;
            Ok(se_run(
                &prior,
                move |v, s2| {
                    let rebuild = match &cache {
                        Some((cached_s2, ..)) => *cached_s2 != s2,
                        None => true,
                    };
                    if rebuild {
                        let v_half = hw + 9.0 * s2.sqrt();
                        let (lo, h, vals) = tabulate_eta(denoiser, s2, v_half, 4001);
                        cache = Some((s2, lo, h, vals));
                    }
                    let (_, lo, h, vals) = cache.as_ref().unwrap();
                    let pos = (v - lo) / h;
                    if pos <= 0.0 {
                        return vals[0];
                    }
                    let k = pos.floor() as usize;
                    if k + 1 >= vals.len() {
                        return vals[vals.len() - 1];
                    }
                    let frac = pos - k as f64;
                    vals[k] * (1.0 - frac) + vals[k + 1] * frac
                },
                scale,
                r_tilde,
                sigma_tilde_z2,
                opts,
            ))
        }
    }
}

/// Predicted output quality of the full pipeline in dB:
///   MSE_total = E‖x_FA‖² + Ñ·(final SE per-coordinate MSE),
///   SDR = 10·log₁₀(s·N·E[X²_nonzero] / MSE_total).
pub fn predict_sdr(
    p: &Part1Params,
    m2: usize,
    denoiser: &DenoiserSpec,
    opts: &SeOptions,
) -> Result<f64> {
    let tp = TheoryPoint::new(p)?;
    predict_sdr_with(&tp, p, m2, denoiser, opts)
}

pub fn predict_sdr_with(
    tp: &TheoryPoint,
    p: &Part1Params,
    m2: usize,
    denoiser: &DenoiserSpec,
    opts: &SeOptions,
) -> Result<f64> {
    let traj = state_evolution_with(tp, p, m2, denoiser, opts)?;
    if traj.diverged {
        return Ok(f64::NEG_INFINITY);
    }
    let mse_inf = *traj.mse.last().ok_or_else(|| {
        Error::InvalidParameter("state evolution produced no iterations".into())
    })?;
    let signal_energy = p.s
        * p.n as f64
        * match p.family {
            SignalFamily::SparseGaussian => 1.0,
            SignalFamily::SparseLaplace => 2.0,
        };
    let mse_total = tp.e_xfa2 + tp.n_tilde * mse_inf;
    if mse_total <= 0.0 {
        return Ok(f64::INFINITY);
    }
    Ok(10.0 * (signal_energy / mse_total).log10())
}

// ---------------------------------------------------------------------------
// Runtime model
// ---------------------------------------------------------------------------

/// One timed run: problem dimensions and wall-clock seconds.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct RuntimeSample {
    pub n: f64,
    pub m: f64,
    pub seconds: f64,
}

/// Bilinear runtime laws t₁ = α₁N + α₂M₁ + α₃NM₁ and
/// t₂ = β₁Ñ + β₂M₂ + β₃ÑM₂, fitted by least squares.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct RuntimeModel {
    pub alpha: [f64; 3],
    pub beta: [f64; 3],
    pub r2_part1: f64,
    pub r2_part2: f64,
}

impl RuntimeModel {
    pub fn t1(&self, n: f64, m1: f64) -> f64 {
        self.alpha[0] * n + self.alpha[1] * m1 + self.alpha[2] * n * m1
    }

    pub fn t2(&self, n_tilde: f64, m2: f64) -> f64 {
        self.beta[0] * n_tilde + self.beta[1] * m2 + self.beta[2] * n_tilde * m2
    }
}

fn fit_bilinear(samples: &[RuntimeSample]) -> Result<([f64; 3], f64)> {
    if samples.len() < 4 {
        return Err(Error::DegenerateFit(format!(
            "{} samples are too few for a 3-parameter fit",
            samples.len()
        )));
    }
    let rows = samples.len();
    let design = nalgebra::DMatrix::from_fn(rows, 3, |i, j| {
        let s = &samples[i];
        match j {
            0 => s.n,
            1 => s.m,
            _ => s.n * s.m,
        }
    });
    let target = nalgebra::DVector::from_fn(rows, |i, _| samples[i].seconds);
    let svd = design.clone().svd(true, true);
    let tol = svd.singular_values.max() * rows as f64 * f64::EPSILON;
    if svd.singular_values.iter().filter(|&&sv| sv > tol).count() < 3 {
        return Err(Error::DegenerateFit(
            "runtime design matrix is rank deficient".into(),
        ));
    }
    let coef = svd
        .solve(&target, tol)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let fitted = design * &coef;
    let mean = target.iter().sum::<f64>() / rows as f64;
    let ss_res: f64 = target
        .iter()
        .zip(fitted.iter())
        .map(|(t, f)| (t - f) * (t - f))
        .sum();
    let ss_tot: f64 = target.iter().map(|t| (t - mean) * (t - mean)).sum();
    let r2 = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };
    Ok(([coef[0], coef[1], coef[2]], r2))
}

/// Fit both stage runtime laws from timed samples.
pub fn fit_runtime_model(
    part1: &[RuntimeSample],
    part2: &[RuntimeSample],
) -> Result<RuntimeModel> {
    let (alpha, r2_part1) = fit_bilinear(part1)?;
    let (beta, r2_part2) = fit_bilinear(part2)?;
    Ok(RuntimeModel {
        alpha,
        beta,
        r2_part1,
        r2_part2,
    })
}

// ---------------------------------------------------------------------------
// Parameter sweep
// ---------------------------------------------------------------------------

/// Cartesian grid over the four tunables: stage-1 matrix density d, band
/// threshold ε, hit threshold c, and the fraction of measurements given to
/// stage 1.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct SweepGrid {
    pub d: Vec<f64>,
    pub eps: Vec<f64>,
    pub c: Vec<u32>,
    pub m1_fraction: Vec<f64>,
}

#[derive(Debug, Clone)]
pub struct SweepConfig {
    pub n: usize,
    pub s: f64,
    pub sigma_z2: f64,
    pub family: SignalFamily,
    pub r_values: Vec<f64>,
    pub bins: usize,
    pub se: SeOptions,
}

/// One frontier row: the best predicted quality in a runtime bin at a given
/// total measurement rate, with the parameters achieving it.
#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct FrontierPoint {
    pub r: f64,
    pub bin: usize,
    pub runtime_center_s: f64,
    pub best_sdr_db: f64,
    pub d: f64,
    pub eps: f64,
    pub c: u32,
    pub m1_fraction: f64,
    pub m1: usize,
    pub m2: usize,
    pub n_tilde: f64,
    pub s_tilde: f64,
    pub predicted_runtime_s: f64,
}

/// Evaluate predicted SDR and runtime on the whole grid at every rate, bin
/// the tuples by predicted runtime, keep the per-bin best, then take the
/// running maximum across bins so the reported frontier is nondecreasing.
pub fn sweep_tradeoff(
    cfg: &SweepConfig,
    grid: &SweepGrid,
    runtime: &RuntimeModel,
) -> Result<Vec<FrontierPoint>> {
    if cfg.bins == 0 {
        return Err(Error::InvalidParameter("bin count must be positive".into()));
    }
    let mut frontier = Vec::new();
    for &r in &cfg.r_values {
        let m_total = (r * cfg.n as f64).round() as usize;
        // (runtime, sdr, tuple parameters)
        let mut evaluated: Vec<(f64, f64, f64, f64, u32, f64, usize, usize, f64, f64)> =
            Vec::new();
        for &d in &grid.d {
            for &eps in &grid.eps {
                for &c in &grid.c {
                    for &frac in &grid.m1_fraction {
                        let m1 = ((frac * m_total as f64).round() as usize).max(1);
                        if m1 + 1 >= m_total {
                            continue;
                        }
                        let m2 = m_total - m1;
                        let p = Part1Params {
                            n: cfg.n,
                            m1,
                            s: cfg.s,
                            d,
                            eps,
                            c,
                            sigma_z2: cfg.sigma_z2,
                            family: cfg.family,
                        };
                        if p.validate().is_err() {
                            continue;
                        }
                        let tp = match TheoryPoint::new(&p) {
                            Ok(tp) if tp.n_tilde > 0.0 => tp,
                            _ => continue,
                        };
                        let den = DenoiserSpec::sparse_gaussian(tp.s_tilde.clamp(0.0, 1.0))?;
                        let sdr = match predict_sdr_with(&tp, &p, m2, &den, &cfg.se) {
                            Ok(v) if v.is_finite() => v,
                            _ => continue,
                        };
                        let t = runtime.t1(cfg.n as f64, m1 as f64)
                            + runtime.t2(tp.n_tilde, m2 as f64);
                        evaluated.push((
                            t, sdr, d, eps, c, frac, m1, m2, tp.n_tilde, tp.s_tilde,
                        ));
                    }
                }
            }
        }
        if evaluated.is_empty() {
            return Err(Error::InvalidParameter(format!(
                "no feasible parameter tuple at rate {r}"
            )));
        }
        let t_min = evaluated.iter().map(|e| e.0).fold(f64::INFINITY, f64::min);
        let t_max = evaluated
            .iter()
            .map(|e| e.0)
            .fold(f64::NEG_INFINITY, f64::max);
        let width = ((t_max - t_min) / cfg.bins as f64).max(f64::MIN_POSITIVE);
        let mut best: Vec<Option<usize>> = vec![None; cfg.bins];
        for (idx, e) in evaluated.iter().enumerate() {
            let b = (((e.0 - t_min) / width) as usize).min(cfg.bins - 1);
            match best[b] {
                Some(cur) if evaluated[cur].1 >= e.1 => {}
                _ => best[b] = Some(idx),
            }
        }
        // Running maximum: every bin reports the best achievable at or
        // below its runtime, so the frontier is monotone by construction.
        let mut champion: Option<usize> = None;
        for b in 0..cfg.bins {
            if let Some(idx) = best[b] {
                champion = match champion {
                    Some(cur) if evaluated[cur].1 >= evaluated[idx].1 => Some(cur),
                    _ => Some(idx),
                };
            }
            let Some(idx) = champion else { continue };
            let e = &evaluated[idx];
            frontier.push(FrontierPoint {
                r,
                bin: b,
                runtime_center_s: t_min + (b as f64 + 0.5) * width,
                best_sdr_db: e.1,
                d: e.2,
                eps: e.3,
                c: e.4,
                m1_fraction: e.5,
                m1: e.6,
                m2: e.7,
                n_tilde: e.8,
                s_tilde: e.9,
                predicted_runtime_s: e.0,
            });
        }
    }
    Ok(frontier)
}

// ---------------------------------------------------------------------------
// Report
// ---------------------------------------------------------------------------

/// Full analysis artifact for one configuration, serializable to JSON.
#[derive(Debug, Clone, Serialize)]
pub struct TheoryReport {
    pub params: Part1Params,
    pub m2: usize,
    pub q_zero: f64,
    pub point: TheoryPoint,
    pub sigma_tilde_z2: f64,
    pub survivor_point_mass: f64,
    pub denoiser: String,
    pub se: SeTrajectory,
    pub predicted_sdr_db: f64,
    pub predicted_t1_s: Option<f64>,
    pub predicted_t2_s: Option<f64>,
    /// The reconstruction-quality number substitutes the state-evolution
    /// fixed point for the exact minimum MSE; they coincide when the
    /// recursion has a unique fixed point.
    pub prediction_method: String,
}

pub fn theory_report(
    p: &Part1Params,
    m2: usize,
    denoiser: &DenoiserSpec,
    opts: &SeOptions,
    runtime: Option<&RuntimeModel>,
) -> Result<TheoryReport> {
    let tp = TheoryPoint::new(p)?;
    let se = state_evolution_with(&tp, p, m2, denoiser, opts)?;
    let sdr = predict_sdr_with(&tp, p, m2, denoiser, opts)?;
    let d_frac = (1.0 - p.s) * tp.p_md + p.s * (1.0 - tp.p_fa);
    Ok(TheoryReport {
        params: *p,
        m2,
        q_zero: p_eps_d(0.0, p),
        point: tp,
        sigma_tilde_z2: tp.sigma_fa2 + p.sigma_z2,
        survivor_point_mass: if d_frac > 0.0 {
            (1.0 - p.s) * tp.p_md / d_frac
        } else {
            1.0
        },
        denoiser: match denoiser.kind {
            DenoiserKind::SparseGaussianApprox => "sparse-gaussian".to_string(),
            DenoiserKind::TruePriorTabulated => "true-prior".to_string(),
        },
        se,
        predicted_sdr_db: sdr,
        predicted_t1_s: runtime.map(|rt| rt.t1(p.n as f64, p.m1 as f64)),
        predicted_t2_s: runtime.map(|rt| rt.t2(tp.n_tilde, m2 as f64)),
        prediction_method: "state-evolution fixed point".to_string(),
    })
}
