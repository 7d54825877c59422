//! Small numerical-integration toolbox: adaptive Simpson on ℝ-intervals,
//! composite Simpson over tabulated values, and Gauss–Hermite rules
//! normalized for expectations against N(0,1).

use crate::error::{Error, Result};
use nalgebra::DMatrix;

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-(x * x) / 2.0).exp() / (2.0 * std::f64::consts::PI).sqrt()
}

/// Standard normal CDF via the error function.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * (1.0 + statrs::function::erf::erf(x / std::f64::consts::SQRT_2))
}

/// Adaptive Simpson quadrature of `f` over [a, b] to absolute tolerance `tol`.
///
/// Classic bisection scheme: an interval is accepted when the two-panel
/// refinement agrees with the one-panel estimate to 15·tol (the factor from
/// the Richardson error estimate), with tolerance halved on each split.
pub fn adaptive_simpson<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64) -> f64 {
    let fa = f(a);
    let fb = f(b);
    let m = 0.5 * (a + b);
    let fm = f(m);
    let whole = (b - a) / 6.0 * (fa + 4.0 * fm + fb);
    simpson_step(f, a, b, fa, fm, fb, whole, tol, 50)
}

/// Adaptive Simpson with a forced pre-split at the given interior knots.
///
/// The plain adaptive scheme probes only the endpoints and midpoint before
/// deciding whether to refine, so an integrand whose mass sits strictly
/// between those probes (e.g. one that vanishes at the centre and decays to
/// zero well inside the interval) can be accepted as ≈ 0 without ever being
/// sampled where it is large. Splitting at caller-supplied knots guarantees
/// every sub-interval starts with probes that bracket the expected features.
/// Knots outside (a, b) are ignored; the tolerance is divided evenly across
/// the resulting sub-intervals.
pub fn adaptive_simpson_split<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    knots: &[f64],
    tol: f64,
) -> f64 {
    let mut edges: Vec<f64> = knots.iter().copied().filter(|&k| k > a && k < b).collect();
    edges.push(a);
    edges.push(b);
    edges.sort_by(f64::total_cmp);
    edges.dedup();
    let per = tol / (edges.len() - 1) as f64;
    edges
        .windows(2)
        .map(|w| adaptive_simpson(f, w[0], w[1], per))
        .sum()
}

#[allow(clippy::too_many_arguments)]
fn simpson_step<F: Fn(f64) -> f64>(
    f: &F,
    a: f64,
    b: f64,
    fa: f64,
    fm: f64,
    fb: f64,
    whole: f64,
    tol: f64,
    depth: u32,
) -> f64 {
    let m = 0.5 * (a + b);
    let lm = 0.5 * (a + m);
    let rm = 0.5 * (m + b);
    let flm = f(lm);
    let frm = f(rm);
    let left = (m - a) / 6.0 * (fa + 4.0 * flm + fm);
    let right = (b - m) / 6.0 * (fm + 4.0 * frm + fb);
    let delta = left + right - whole;
    if depth == 0 || delta.abs() <= 15.0 * tol {
        left + right + delta / 15.0
    } else {
        simpson_step(f, a, m, fa, flm, fm, left, 0.5 * tol, depth - 1)
            + simpson_step(f, m, b, fm, frm, fb, right, 0.5 * tol, depth - 1)
    }
}

/// Composite Simpson over uniformly spaced samples with step `h`.
/// Requires an odd number of samples (even number of panels).
pub fn simpson_table(values: &[f64], h: f64) -> f64 {
    assert!(
        values.len() >= 3 && values.len() % 2 == 1,
        "simpson_table needs an odd sample count >= 3, got {}",
        values.len()
    );
    let mut acc = values[0] + values[values.len() - 1];
    for (i, v) in values.iter().enumerate().skip(1).take(values.len() - 2) {
        acc += if i % 2 == 1 { 4.0 * v } else { 2.0 * v };
    }
    acc * h / 3.0
}

/// Gauss–Hermite rule rescaled so that `E[f(W)] ≈ Σ wᵢ f(nᵢ)` for W ∼ N(0,1).
#[derive(Debug, Clone)]
pub struct GaussHermite {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussHermite {
    /// Build an n-point rule by the Golub–Welsch eigendecomposition of the
    /// Hermite Jacobi matrix, then substitute W = √2·x and fold the 1/√π
    /// normalization into the weights (so they sum to 1).
    pub fn new(n: usize) -> Result<Self> {
        if n == 0 {
            return Err(Error::InvalidDimension("Gauss-Hermite order 0".into()));
        }
        let mut jac = DMatrix::<f64>::zeros(n, n);
        for k in 0..n - 1 {
            let off = ((k as f64 + 1.0) / 2.0).sqrt();
            jac[(k, k + 1)] = off;
            jac[(k + 1, k)] = off;
        }
        let eig = jac.symmetric_eigen();
        let mut pairs: Vec<(f64, f64)> = (0..n)
            .map(|i| {
                let node = eig.eigenvalues[i];
                let q0 = eig.eigenvectors[(0, i)];
                (node * std::f64::consts::SQRT_2, q0 * q0)
            })
            .collect();
        pairs.sort_by(|a, b| a.0.total_cmp(&b.0));
        let norm: f64 = pairs.iter().map(|p| p.1).sum();
        Ok(Self {
            nodes: pairs.iter().map(|p| p.0).collect(),
            weights: pairs.iter().map(|p| p.1 / norm).collect(),
        })
    }

    /// E[f(W)] for W ∼ N(0,1).
    pub fn expect<F: FnMut(f64) -> f64>(&self, mut f: F) -> f64 {
        self.nodes
            .iter()
            .zip(&self.weights)
            .map(|(&x, &w)| w * f(x))
            .sum()
    }
}
