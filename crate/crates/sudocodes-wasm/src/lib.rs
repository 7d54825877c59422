//! Browser bindings for the interactive demo page.
//!
//! Each export takes a JSON request string and returns a JSON response
//! string (`{"error": "..."}` on any failure), so the page needs nothing
//! beyond the wasm-bindgen loader — no generated TypeScript, no framework.
//! The wrapped logic is plain Rust and runs identically on the host, which
//! is where the tests below exercise it.
//!
//! Three operations are exposed:
//!
//! * [`band_curves`] — closed-form stage-1 operating curves (missed-detection
//!   and false-alarm probabilities, expected survivor count) over a grid of
//!   band half-widths ε.
//! * [`zero_id_trial`] — one simulated zero-identification trial with
//!   per-coefficient hit-count histograms and the matching predictions.
//! * [`recovery_race`] — a two-stage pipeline and a plain message-passing
//!   decoder run on the same signal at the same total measurement budget,
//!   reporting both reconstruction SDRs and their σ̂² convergence traces.
//!
//! The demo fixes the sparse-Gaussian signal family: the heavy-tailed
//! family's closed forms go through numeric characteristic-function
//! inversion, which is too slow for an interactive page.

use serde::{de::DeserializeOwned, Deserialize, Serialize};
use wasm_bindgen::prelude::*;

use sudocodes::amp::{run_amp_traced, DenoiserSpec};
use sudocodes::harness::{compute_sdr, part1_decode};
use sudocodes::measure::{
    gen_phi1, measure_linear, DenseEnsemble, NoiseModel, VarianceConvention,
};
use sudocodes::model::{sample_signal, SignalFamily, SignalModel, SignalVector};
use sudocodes::rng::role_seed;
use sudocodes::theory::{p_fa, p_md, part2_dims, Part1Params, TheoryPoint};

// Distinct per-trial random objects; values are arbitrary, role_seed mixes.
const ROLE_SIGNAL: u64 = 21;
const ROLE_PHI1: u64 = 22;
const ROLE_NOISE1: u64 = 23;
const ROLE_PHI2: u64 = 24;
const ROLE_NOISE2: u64 = 25;
const ROLE_PLAIN_PHI: u64 = 26;
const ROLE_PLAIN_NOISE: u64 = 27;

// Size caps keep a mistyped request from stalling the browser tab; the
// recovery op materializes an m×n matrix for the plain arm, so its caps
// also bound memory (4000 × 2000 doubles = 64 MB).
const MAX_CURVE_POINTS: usize = 400;
const MAX_TRIAL_N: usize = 50_000;
const MAX_RECOVERY_N: usize = 2_000;
const MAX_RECOVERY_M: usize = 4_000;
const MAX_RECOVERY_ITERS: usize = 60;

fn err_json(msg: &str) -> String {
    serde_json::json!({ "error": msg }).to_string()
}

fn parse<T: DeserializeOwned>(request: &str) -> Result<T, String> {
    serde_json::from_str(request).map_err(|e| format!("bad request: {e}"))
}

fn reply<T: Serialize>(out: Result<T, String>) -> String {
    match out {
        Ok(v) => serde_json::to_string(&v).unwrap_or_else(|e| err_json(&e.to_string())),
        Err(e) => err_json(&e),
    }
}

// ---------------------------------------------------------------------------
// Operating curves
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct CurveRequest {
    n: usize,
    m1: usize,
    s: f64,
    d: f64,
    c: u32,
    sigma_z2: f64,
    eps_max: f64,
    points: usize,
}

#[derive(Debug, Serialize)]
struct CurvePoint {
    eps: f64,
    p_md: f64,
    p_fa: f64,
    n_tilde: f64,
    s_tilde: f64,
}

#[derive(Debug, Serialize)]
struct CurveResponse {
    points: Vec<CurvePoint>,
}

fn band_curves_impl(req: &CurveRequest) -> Result<CurveResponse, String> {
    if req.points < 2 || req.points > MAX_CURVE_POINTS {
        return Err(format!("points must be in 2..={MAX_CURVE_POINTS}"));
    }
    if !(req.eps_max > 0.0 && req.eps_max.is_finite()) {
        return Err("eps_max must be positive and finite".into());
    }
    let mut points = Vec::with_capacity(req.points);
    for k in 1..=req.points {
        let p = Part1Params {
            n: req.n,
            m1: req.m1,
            s: req.s,
            d: req.d,
            eps: req.eps_max * k as f64 / req.points as f64,
            c: req.c,
            sigma_z2: req.sigma_z2,
            family: SignalFamily::SparseGaussian,
        };
        p.validate().map_err(|e| e.to_string())?;
        let (n_tilde, s_tilde) = part2_dims(&p);
        points.push(CurvePoint {
            eps: p.eps,
            p_md: p_md(&p),
            p_fa: p_fa(&p),
            n_tilde,
            s_tilde,
        });
    }
    Ok(CurveResponse { points })
}

/// Stage-1 operating curves on an ε grid: for each band half-width, the
/// missed-detection and false-alarm probabilities plus the predicted
/// reduced-problem size and sparsity. Request fields: `n`, `m1`, `s`, `d`,
/// `c`, `sigma_z2`, `eps_max`, `points`.
#[wasm_bindgen]
pub fn band_curves(request: &str) -> String {
    reply(parse(request).and_then(|req: CurveRequest| band_curves_impl(&req)))
}

// ---------------------------------------------------------------------------
// One zero-identification trial
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct TrialRequest {
    n: usize,
    m1: usize,
    s: f64,
    d: f64,
    eps: f64,
    c: u32,
    sigma_z2: f64,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct TrialResponse {
    n: usize,
    true_zeros: usize,
    survivors: usize,
    missed: usize,
    false_alarms: usize,
    md_rate: Option<f64>,
    fa_rate: Option<f64>,
    p_md_pred: f64,
    p_fa_pred: f64,
    n_tilde_pred: f64,
    c: u32,
    /// Histogram of hit counts S_j over the true zeros; index = hit count.
    zero_hits: Vec<usize>,
    /// Same histogram over the true nonzeros.
    nonzero_hits: Vec<usize>,
}

struct StageOne {
    x: SignalVector,
    result: sudocodes::part1::Part1Result,
}

fn run_stage_one(p: &Part1Params, seed: u64) -> Result<StageOne, String> {
    let model = SignalModel::sparse_gaussian(p.s);
    let x = sample_signal(&model, p.n, role_seed(seed, ROLE_SIGNAL))
        .map_err(|e| e.to_string())?;
    let phi1 = gen_phi1(
        p.m1,
        p.n,
        p.s,
        p.d,
        VarianceConvention::OneOverN,
        role_seed(seed, ROLE_PHI1),
    )
    .map_err(|e| e.to_string())?;
    let noise = NoiseModel::new(p.sigma_z2).map_err(|e| e.to_string())?;
    let y1 = measure_linear(&phi1, &x.values, &noise, role_seed(seed, ROLE_NOISE1))
        .map_err(|e| e.to_string())?;
    let mut result = part1_decode(&phi1, &y1, p.eps, p.c, false).map_err(|e| e.to_string())?;
    result.attach_ground_truth(&x.values);
    Ok(StageOne { x, result })
}

fn zero_id_trial_impl(req: &TrialRequest) -> Result<TrialResponse, String> {
    if req.n > MAX_TRIAL_N {
        return Err(format!("n must be at most {MAX_TRIAL_N}"));
    }
    let p = Part1Params {
        n: req.n,
        m1: req.m1,
        s: req.s,
        d: req.d,
        eps: req.eps,
        c: req.c,
        sigma_z2: req.sigma_z2,
        family: SignalFamily::SparseGaussian,
    };
    let tp = TheoryPoint::new(&p).map_err(|e| e.to_string())?;
    let stage = run_stage_one(&p, req.seed)?;
    let (md_rate, fa_rate) = stage.result.empirical_rates(&stage.x.values);
    let top = stage.result.hit_counts.iter().copied().max().unwrap_or(0) as usize;
    let mut zero_hits = vec![0usize; top + 1];
    let mut nonzero_hits = vec![0usize; top + 1];
    for (j, &h) in stage.result.hit_counts.iter().enumerate() {
        if stage.x.values[j] == 0.0 {
            zero_hits[h as usize] += 1;
        } else {
            nonzero_hits[h as usize] += 1;
        }
    }
    let true_zeros = zero_hits.iter().sum();
    Ok(TrialResponse {
        n: req.n,
        true_zeros,
        survivors: stage.result.t.len(),
        missed: stage.result.md_set.len(),
        false_alarms: stage.result.fa_set.len(),
        md_rate,
        fa_rate,
        p_md_pred: tp.p_md,
        p_fa_pred: tp.p_fa,
        n_tilde_pred: tp.n_tilde,
        c: req.c,
        zero_hits,
        nonzero_hits,
    })
}

/// One simulated zero-identification trial. Returns survivor/miss/false-alarm
/// counts, empirical rates next to their closed-form predictions, and the
/// hit-count histograms split by true zeros vs true nonzeros (the picture
/// behind the threshold rule: the two populations separate in S_j, and `c`
/// cuts between them). Request fields: `n`, `m1`, `s`, `d`, `eps`, `c`,
/// `sigma_z2`, `seed`.
#[wasm_bindgen]
pub fn zero_id_trial(request: &str) -> String {
    reply(parse(request).and_then(|req: TrialRequest| zero_id_trial_impl(&req)))
}

// ---------------------------------------------------------------------------
// Equal-budget recovery comparison
// ---------------------------------------------------------------------------

#[derive(Debug, Deserialize)]
struct RecoveryRequest {
    n: usize,
    s: f64,
    d: f64,
    eps: f64,
    c: u32,
    sigma_z2: f64,
    m1: usize,
    m2: usize,
    iters: usize,
    seed: u64,
}

#[derive(Debug, Serialize)]
struct RecoveryResponse {
    sdr_sudo_db: f64,
    sdr_plain_db: f64,
    survivors: usize,
    missed: usize,
    false_alarms: usize,
    n_tilde_pred: f64,
    /// σ̂² per iteration of the two-stage decoder, starting at t = 0.
    sigma2_sudo: Vec<f64>,
    /// σ̂² per iteration of the plain decoder on the full budget.
    sigma2_plain: Vec<f64>,
}

fn recovery_race_impl(req: &RecoveryRequest) -> Result<RecoveryResponse, String> {
    if req.n > MAX_RECOVERY_N {
        return Err(format!("n must be at most {MAX_RECOVERY_N}"));
    }
    if req.m2 == 0 || req.m1 + req.m2 > MAX_RECOVERY_M {
        return Err(format!("need m2 >= 1 and m1 + m2 <= {MAX_RECOVERY_M}"));
    }
    if req.iters == 0 || req.iters > MAX_RECOVERY_ITERS {
        return Err(format!("iters must be in 1..={MAX_RECOVERY_ITERS}"));
    }
    let p = Part1Params {
        n: req.n,
        m1: req.m1,
        s: req.s,
        d: req.d,
        eps: req.eps,
        c: req.c,
        sigma_z2: req.sigma_z2,
        family: SignalFamily::SparseGaussian,
    };
    let tp = TheoryPoint::new(&p).map_err(|e| e.to_string())?;
    let stage = run_stage_one(&p, req.seed)?;
    let noise = NoiseModel::new(req.sigma_z2).map_err(|e| e.to_string())?;

    // Two-stage arm: dense measurements over all columns restricted to the
    // survivors, so discarded nonzeros still interfere with y₂.
    let ens = DenseEnsemble::new(
        req.m2,
        req.n,
        VarianceConvention::OneOverN,
        role_seed(req.seed, ROLE_PHI2),
    );
    let mut y2 = noise.sample(req.m2, role_seed(req.seed, ROLE_NOISE2));
    for j in stage.x.support() {
        let xj = stage.x.values[j];
        for (yi, cij) in y2.iter_mut().zip(ens.column(j)) {
            *yi += xj * cij;
        }
    }
    let mut x_hat_sudo = vec![0.0; req.n];
    let mut sigma2_sudo = Vec::new();
    if !stage.result.t.is_empty() {
        let phi_tilde = ens.columns(&stage.result.t);
        let den =
            DenoiserSpec::sparse_gaussian(tp.s_tilde.clamp(0.0, 1.0)).map_err(|e| e.to_string())?;
        let (x_t, trace) = run_amp_traced(&y2, &phi_tilde, &den, req.n, req.iters, None)
            .map_err(|e| e.to_string())?;
        for (&j, &v) in stage.result.t.iter().zip(&x_t) {
            x_hat_sudo[j] = v;
        }
        sigma2_sudo = trace.iter().map(|r| r.sigma2_hat).collect();
    }

    // Plain arm: the full budget spent on dense measurements, decoded with
    // the signal's own sparsity.
    let m_total = req.m1 + req.m2;
    let ens_plain = DenseEnsemble::new(
        m_total,
        req.n,
        VarianceConvention::OneOverN,
        role_seed(req.seed, ROLE_PLAIN_PHI),
    );
    let mut y = noise.sample(m_total, role_seed(req.seed, ROLE_PLAIN_NOISE));
    for j in stage.x.support() {
        let xj = stage.x.values[j];
        for (yi, cij) in y.iter_mut().zip(ens_plain.column(j)) {
            *yi += xj * cij;
        }
    }
    let phi = ens_plain.materialize();
    let den_plain = DenoiserSpec::sparse_gaussian(req.s).map_err(|e| e.to_string())?;
    let (x_plain, trace_plain) = run_amp_traced(&y, &phi, &den_plain, req.n, req.iters, None)
        .map_err(|e| e.to_string())?;

    Ok(RecoveryResponse {
        sdr_sudo_db: compute_sdr(&stage.x.values, &x_hat_sudo),
        sdr_plain_db: compute_sdr(&stage.x.values, &x_plain),
        survivors: stage.result.t.len(),
        missed: stage.result.md_set.len(),
        false_alarms: stage.result.fa_set.len(),
        n_tilde_pred: tp.n_tilde,
        sigma2_sudo,
        sigma2_plain: trace_plain.iter().map(|r| r.sigma2_hat).collect(),
    })
}

/// Two decoders, one signal, one total measurement budget m1 + m2: the
/// two-stage pipeline (sparse stage-1 pass, then message passing on the
/// survivors) against plain message passing on dense measurements alone.
/// Returns both SDRs and the σ̂² traces for a convergence plot. Request
/// fields: `n`, `s`, `d`, `eps`, `c`, `sigma_z2`, `m1`, `m2`, `iters`,
/// `seed`.
#[wasm_bindgen]
pub fn recovery_race(request: &str) -> String {
    reply(parse(request).and_then(|req: RecoveryRequest| recovery_race_impl(&req)))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn get(v: &serde_json::Value, key: &str) -> f64 {
        v[key].as_f64().unwrap_or_else(|| panic!("missing {key}: {v}"))
    }

    #[test]
    fn band_curves_move_the_right_way_with_eps() {
        let req = r#"{"n":500,"m1":100,"s":0.05,"d":1.0,"c":2,"sigma_z2":0.01,
                      "eps_max":0.4,"points":8}"#;
        let v: serde_json::Value = serde_json::from_str(&band_curves(req)).unwrap();
        assert!(v["error"].is_null(), "{v}");
        let pts = v["points"].as_array().unwrap();
        assert_eq!(pts.len(), 8);
        for w in pts.windows(2) {
            // A wider band can only add hits: zeros get identified more
            // often (P_MD falls) and nonzeros get discarded more often
            // (P_FA rises).
            assert!(get(&w[1], "p_md") <= get(&w[0], "p_md") + 1e-12);
            assert!(get(&w[1], "p_fa") >= get(&w[0], "p_fa") - 1e-12);
        }
        for p in pts {
            assert!((0.0..=1.0).contains(&get(p, "p_md")));
            assert!((0.0..=1.0).contains(&get(p, "p_fa")));
            assert!(get(p, "n_tilde") <= 500.0 + 1e-9);
        }
    }

    #[test]
    fn zero_id_trial_counts_are_self_consistent() {
        let req = r#"{"n":2000,"m1":400,"s":0.05,"d":1.0,"eps":0.2,"c":2,
                      "sigma_z2":0.005,"seed":7}"#;
        let v: serde_json::Value = serde_json::from_str(&zero_id_trial(req)).unwrap();
        assert!(v["error"].is_null(), "{v}");
        let n = v["n"].as_u64().unwrap() as i64;
        let zeros = v["true_zeros"].as_u64().unwrap() as i64;
        let survivors = v["survivors"].as_u64().unwrap() as i64;
        let missed = v["missed"].as_u64().unwrap() as i64;
        let fa = v["false_alarms"].as_u64().unwrap() as i64;
        // T keeps the zeros we missed plus the nonzeros we did not discard.
        assert_eq!(survivors, missed + (n - zeros - fa));
        let hist_sum = |key: &str| -> i64 {
            v[key]
                .as_array()
                .unwrap()
                .iter()
                .map(|c| c.as_i64().unwrap())
                .sum()
        };
        assert_eq!(hist_sum("zero_hits"), zeros);
        assert_eq!(hist_sum("nonzero_hits"), n - zeros);
        // Empirical rates should at least be in the same regime as the
        // predictions at this comfortable operating point.
        assert!(get(&v, "md_rate") < 0.5);
        assert!(get(&v, "p_md_pred") < 0.5);
    }

    #[test]
    fn recovery_race_recovers_and_reports_full_traces() {
        let req = r#"{"n":800,"s":0.05,"d":0.8,"eps":0.1,"c":2,"sigma_z2":0.001,
                      "m1":80,"m2":240,"iters":15,"seed":3}"#;
        let v: serde_json::Value = serde_json::from_str(&recovery_race(req)).unwrap();
        assert!(v["error"].is_null(), "{v}");
        let sudo = get(&v, "sdr_sudo_db");
        let plain = get(&v, "sdr_plain_db");
        assert!(sudo > 10.0, "two-stage SDR {sudo} dB");
        assert!(plain.is_finite());
        let trace = v["sigma2_sudo"].as_array().unwrap();
        assert_eq!(trace.len(), 16); // init row + 15 iterations
        let first = trace.first().unwrap().as_f64().unwrap();
        let last = trace.last().unwrap().as_f64().unwrap();
        assert!(last < first, "sigma2 should shrink: {first} -> {last}");
        assert_eq!(v["sigma2_plain"].as_array().unwrap().len(), 16);
    }

    #[test]
    fn malformed_and_invalid_requests_come_back_as_errors() {
        let v: serde_json::Value = serde_json::from_str(&band_curves("not json")).unwrap();
        assert!(v["error"].as_str().unwrap().contains("bad request"));
        // c = 0 fails parameter validation inside the library.
        let req = r#"{"n":100,"m1":20,"s":0.05,"d":1.0,"eps":0.1,"c":0,
                      "sigma_z2":0.0,"seed":1}"#;
        let v: serde_json::Value = serde_json::from_str(&zero_id_trial(req)).unwrap();
        assert!(v["error"].as_str().is_some());
        // Oversized recovery request is refused before any allocation.
        let req = r#"{"n":100000,"s":0.05,"d":1.0,"eps":0.1,"c":2,"sigma_z2":0.0,
                      "m1":10,"m2":10,"iters":5,"seed":1}"#;
        let v: serde_json::Value = serde_json::from_str(&recovery_race(req)).unwrap();
        assert!(v["error"].as_str().unwrap().contains("at most"));
    }
}
