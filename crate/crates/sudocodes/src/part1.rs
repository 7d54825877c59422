//! Zero-identification stage and the classic noiseless two-part decoder.
//!
//! The noisy zero-identification rule: a coefficient touched by `c` or more
//! small-magnitude measurements is declared zero; the survivors
//! T = { j : S_j < c } are forwarded to the reconstruction stage. The classic
//! decoder (noiseless, exact zeros) is kept as a reference implementation.

use crate::error::{Error, Result};
use crate::measure::{DenseMatrix, SparseBinaryMatrix};

/// Outcome of the zero-identification pass. `md_set`/`fa_set` stay empty
/// until ground truth is attached: `md_set` holds true zeros that survived
/// into T ("missed detections" in the convention used throughout: a zero we
/// failed to identify), `fa_set` true nonzeros declared zero ("false
/// alarms").
#[derive(Debug, Clone)]
pub struct Part1Result {
    /// Survivor indices, ascending.
    pub t: Vec<usize>,
    /// Indices of small measurements, ascending.
    pub omega_y: Vec<usize>,
    /// S_j = number of small measurements touching coefficient j.
    pub hit_counts: Vec<u32>,
    /// Hit threshold the result was computed with.
    pub c: u32,
    pub md_set: Vec<usize>,
    pub fa_set: Vec<usize>,
}

impl Part1Result {
    /// Fraction of true zeros that were identified (left out of T).
    pub fn zero_identification_rate(&self, x: &[f64]) -> f64 {
        let zeros = x.iter().filter(|v| **v == 0.0).count();
        if zeros == 0 {
            return 1.0;
        }
        let missed = self.md_set.len();
        (zeros - missed) as f64 / zeros as f64
    }

    /// Populate `md_set`/`fa_set` from the true signal.
    pub fn attach_ground_truth(&mut self, x: &[f64]) {
        assert_eq!(x.len(), self.hit_counts.len(), "signal length mismatch");
        let in_t = self.membership_mask();
        self.md_set = (0..x.len())
            .filter(|&j| x[j] == 0.0 && in_t[j])
            .collect();
        self.fa_set = (0..x.len())
            .filter(|&j| x[j] != 0.0 && !in_t[j])
            .collect();
    }

    /// Boolean mask of T over [0, n).
    pub fn membership_mask(&self) -> Vec<bool> {
        let mut mask = vec![false; self.hit_counts.len()];
        for &j in &self.t {
            mask[j] = true;
        }
        mask
    }

    /// Empirical missed-detection rate |md| / #true-zeros and false-alarm
    /// rate |fa| / #true-nonzeros. Requires attached ground truth. Returns
    /// None for a rate whose denominator is zero.
    pub fn empirical_rates(&self, x: &[f64]) -> (Option<f64>, Option<f64>) {
        let zeros = x.iter().filter(|v| **v == 0.0).count();
        let nonzeros = x.len() - zeros;
        let md = (zeros > 0).then(|| self.md_set.len() as f64 / zeros as f64);
        let fa = (nonzeros > 0).then(|| self.fa_set.len() as f64 / nonzeros as f64);
        (md, fa)
    }
}

/// Ω^y = { i : |y₁ᵢ| ≤ eps } (boundary included).
pub fn small_measurement_set(y1: &[f64], eps: f64) -> Vec<usize> {
    (0..y1.len()).filter(|&i| y1[i].abs() <= eps).collect()
}

/// 1-bit form of Ω^y: indices quantized to −1 (small magnitude).
pub fn small_measurement_set_onebit(y1: &[i8]) -> Vec<usize> {
    (0..y1.len()).filter(|&i| y1[i] == -1).collect()
}

/// Count hits S_j = |Ω^col_j ∩ Ω^y| and keep survivors T = { j : S_j < c }.
///
/// The counts are accumulated by walking the rows listed in Ω^y and
/// incrementing every touched coefficient — O(Σ_{i∈Ω^y} |Ω^row_i|) — rather
/// than intersecting per-column sets; the two are equivalent by row/column
/// support duality (asserted against a set-intersection oracle in tests).
pub fn identify_zeros(phi: &SparseBinaryMatrix, omega_y: &[usize], c: u32) -> Result<Part1Result> {
    if c == 0 {
        return Err(Error::InvalidParameter(
            "hit threshold c must be at least 1".into(),
        ));
    }
    let mut hit_counts = vec![0u32; phi.n];
    for &i in omega_y {
        if i >= phi.m1 {
            return Err(Error::DimensionMismatch(format!(
                "measurement index {i} out of range (m1={})",
                phi.m1
            )));
        }
        for &j in &phi.row_supports[i] {
            hit_counts[j] += 1;
        }
    }
    let t = (0..phi.n).filter(|&j| hit_counts[j] < c).collect();
    Ok(Part1Result {
        t,
        omega_y: omega_y.to_vec(),
        hit_counts,
        c,
        md_set: Vec::new(),
        fa_set: Vec::new(),
    })
}

/// Classic decoder, stage 1 (noiseless). Walks measurements in order:
/// a zero measurement eliminates its whole support; two equal nonzero
/// measurements eliminate the symmetric difference of their supports, and
/// when their supports share exactly one coefficient, that coefficient is
/// recovered as the shared measurement value. Stops early once at most
/// `m2_floor` unresolved coefficients remain.
///
/// Exact floating-point equality is intentional: in the noiseless synthetic
/// setting equal sums are bit-identical, and the underlying assumption is
/// that distinct nonzero subsets never collide.
pub fn classic_sudocodes_part1(
    y1: &[f64],
    omega_row: &[Vec<usize>],
    n: usize,
    m2_floor: usize,
) -> (Vec<f64>, Vec<usize>) {
    assert_eq!(y1.len(), omega_row.len(), "measurement/support mismatch");
    let mut x_hat = vec![0.0; n];
    let mut in_t = vec![true; n];
    let mut t_size = n;
    let remove = |j: usize, in_t: &mut Vec<bool>, t_size: &mut usize| {
        if in_t[j] {
            in_t[j] = false;
            *t_size -= 1;
        }
    };
    for i in 0..y1.len() {
        if t_size <= m2_floor {
            break;
        }
        if y1[i] == 0.0 {
            for &j in &omega_row[i] {
                remove(j, &mut in_t, &mut t_size);
            }
            continue;
        }
        for k in 0..i {
            if y1[k] != y1[i] || y1[k] == 0.0 {
                continue;
            }
            let sup_i: std::collections::BTreeSet<usize> = omega_row[i].iter().copied().collect();
            let sup_k: std::collections::BTreeSet<usize> = omega_row[k].iter().copied().collect();
            let inter: Vec<usize> = sup_i.intersection(&sup_k).copied().collect();
            for j in sup_i.symmetric_difference(&sup_k) {
                remove(*j, &mut in_t, &mut t_size);
            }
            if inter.len() == 1 {
                x_hat[inter[0]] = y1[i];
                remove(inter[0], &mut in_t, &mut t_size);
            }
        }
    }
    let t = (0..n).filter(|&j| in_t[j]).collect();
    (x_hat, t)
}

/// Least-squares stage-2 solve of the classic decoder.
#[derive(Debug, Clone)]
pub struct LeastSquaresSolution {
    pub x_hat: Vec<f64>,
    /// The restricted matrix was column-rank-deficient; the minimum-norm
    /// solution was returned.
    pub rank_deficient: bool,
}

/// x̂_T = Φ₂,T† y₂ scattered back into a length-n vector (zeros elsewhere).
/// Rank deficiency is reported, not treated as an error: the SVD solve
/// returns the minimum-norm least-squares solution either way.
pub fn classic_sudocodes_part2(
    y2: &[f64],
    phi2: &DenseMatrix,
    t: &[usize],
) -> Result<LeastSquaresSolution> {
    if y2.len() != phi2.m2 {
        return Err(Error::DimensionMismatch(format!(
            "y2 length {} vs matrix rows {}",
            y2.len(),
            phi2.m2
        )));
    }
    if t.is_empty() {
        return Ok(LeastSquaresSolution {
            x_hat: vec![0.0; phi2.n],
            rank_deficient: false,
        });
    }
    let restricted = phi2.restrict_columns(t);
    let a = nalgebra::DMatrix::from_fn(restricted.m2, restricted.n, |i, j| restricted.get(i, j));
    let b = nalgebra::DVector::from_column_slice(y2);
    let svd = a.svd(true, true);
    let max_sv = svd.singular_values.iter().cloned().fold(0.0f64, f64::max);
    let tol = max_sv * (phi2.m2.max(t.len()) as f64) * f64::EPSILON;
    let rank = svd.singular_values.iter().filter(|&&sv| sv > tol).count();
    let sol = svd
        .solve(&b, tol)
        .map_err(|e| Error::DegenerateFit(e.to_string()))?;
    let mut x_hat = vec![0.0; phi2.n];
    for (slot, &j) in t.iter().enumerate() {
        x_hat[j] = sol[slot];
    }
    Ok(LeastSquaresSolution {
        x_hat,
        rank_deficient: rank < t.len(),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::measure::{gen_phi1, gen_phi2, measure_linear, NoiseModel, VarianceConvention};
    use crate::model::{sample_signal, SignalModel};

    #[test]
    fn small_set_includes_boundary() {
        let y = [0.1, -0.05, 0.2];
        assert_eq!(small_measurement_set(&y, 0.1), vec![0, 1]);
        assert_eq!(small_measurement_set(&y, 0.0), Vec::<usize>::new());
    }

    #[test]
    fn onebit_small_set_reads_quantized_values() {
        let yq = [-1i8, 1, -1, 1];
        assert_eq!(small_measurement_set_onebit(&yq), vec![0, 2]);
    }

    #[test]
    fn empty_omega_y_keeps_everything() {
        let phi = gen_phi1(6, 10, 0.2, 1.0, VarianceConvention::OneOverN, 1).unwrap();
        let res = identify_zeros(&phi, &[], 1).unwrap();
        assert_eq!(res.t, (0..10).collect::<Vec<_>>());
        assert!(res.hit_counts.iter().all(|&s| s == 0));
    }

    #[test]
    fn survivors_match_set_intersection_oracle() {
        // Exhaustive |Ω^col_j ∩ Ω^y| on a small random instance.
        let phi = gen_phi1(6, 10, 0.3, 1.5, VarianceConvention::OneOverN, 7).unwrap();
        let omega_y = vec![0, 2, 3, 5];
        for c in 1..4 {
            let res = identify_zeros(&phi, &omega_y, c).unwrap();
            for j in 0..10 {
                let s_oracle = phi.col_supports[j]
                    .iter()
                    .filter(|i| omega_y.contains(i))
                    .count() as u32;
                assert_eq!(res.hit_counts[j], s_oracle);
                assert_eq!(res.t.contains(&j), s_oracle < c);
            }
        }
    }

    #[test]
    fn noiseless_identification_commits_no_false_alarms() {
        // eps=0, c=1: a zero measurement can only involve zero coefficients.
        let n = 2000;
        let s = 0.01;
        let x = sample_signal(&SignalModel::sparse_gaussian(s), n, 5).unwrap();
        let phi = gen_phi1(200, n, s, 0.8, VarianceConvention::OneOverN, 6).unwrap();
        let y = measure_linear(&phi, &x.values, &NoiseModel::noiseless(), 0).unwrap();
        let omega_y = small_measurement_set(&y, 0.0);
        let mut res = identify_zeros(&phi, &omega_y, 1).unwrap();
        res.attach_ground_truth(&x.values);
        assert!(res.fa_set.is_empty(), "false alarms: {:?}", res.fa_set);
    }

    #[test]
    fn ground_truth_sets_partition_correctly() {
        let phi = gen_phi1(30, 100, 0.1, 1.0, VarianceConvention::OneOverN, 8).unwrap();
        let x = sample_signal(&SignalModel::sparse_gaussian(0.1), 100, 9).unwrap();
        let y = measure_linear(&phi, &x.values, &NoiseModel::new(0.01).unwrap(), 10).unwrap();
        let omega_y = small_measurement_set(&y, 0.05);
        let mut res = identify_zeros(&phi, &omega_y, 1).unwrap();
        res.attach_ground_truth(&x.values);
        let mask = res.membership_mask();
        for &j in &res.md_set {
            assert!(mask[j] && x.values[j] == 0.0);
        }
        for &j in &res.fa_set {
            assert!(!mask[j] && x.values[j] != 0.0);
        }
    }

    #[test]
    fn classic_zero_measurement_clears_support() {
        // One zero measurement covering {1,3,5}: all three leave T.
        let omega_row = vec![vec![1, 3, 5]];
        let y1 = vec![0.0];
        let (x_hat, t) = classic_sudocodes_part1(&y1, &omega_row, 6, 0);
        assert_eq!(t, vec![0, 2, 4]);
        assert!(x_hat.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn classic_matched_pair_recovers_singleton() {
        // Rows {0,1} and {1,2} both measure x = (0, 4.2, 0, ...): equal
        // values, intersection {1} → x̂₁ = 4.2, symmetric difference {0,2}
        // eliminated.
        let omega_row = vec![vec![0, 1], vec![1, 2]];
        let y1 = vec![4.2, 4.2];
        let (x_hat, t) = classic_sudocodes_part1(&y1, &omega_row, 4, 0);
        assert_eq!(x_hat[1], 4.2);
        assert_eq!(t, vec![3]);
    }

    #[test]
    fn classic_hand_traced_instance() {
        // N=12. Row 0: zero measurement over {0,1,2}. Rows 1,2: matched pair
        // with supports {3,4} and {4,5} (x₄=2.5). Row 3: unrelated nonzero.
        // Trace: {0,1,2} eliminated; {3,5} eliminated; 4 recovered.
        // T = {6,...,11}.
        let omega_row = vec![vec![0, 1, 2], vec![3, 4], vec![4, 5], vec![6, 7]];
        let y1 = vec![0.0, 2.5, 2.5, 1.8];
        let (x_hat, t) = classic_sudocodes_part1(&y1, &omega_row, 12, 0);
        assert_eq!(x_hat[4], 2.5);
        assert_eq!(t, vec![6, 7, 8, 9, 10, 11]);
    }

    #[test]
    fn classic_stops_at_floor() {
        // With m2_floor = n, the loop body never runs.
        let omega_row = vec![vec![0, 1]];
        let y1 = vec![0.0];
        let (_, t) = classic_sudocodes_part1(&y1, &omega_row, 5, 5);
        assert_eq!(t.len(), 5);
    }

    #[test]
    fn classic_part2_empty_survivors_gives_zero() {
        let phi2 = gen_phi2(6, 9, VarianceConvention::OneOverN, 11).unwrap();
        let sol = classic_sudocodes_part2(&vec![0.3; 6], &phi2, &[]).unwrap();
        assert!(sol.x_hat.iter().all(|v| *v == 0.0));
        assert!(!sol.rank_deficient);
    }

    #[test]
    fn classic_part2_recovers_consistent_system() {
        let phi2 = gen_phi2(50, 30, VarianceConvention::OneOverN, 12).unwrap();
        let t = vec![2usize, 7, 11, 19, 28];
        let mut x = vec![0.0; 30];
        for (k, &j) in t.iter().enumerate() {
            x[j] = (k as f64 + 1.0) * 0.7 - 2.0;
        }
        let y2 = measure_linear(&phi2, &x, &NoiseModel::noiseless(), 0).unwrap();
        let sol = classic_sudocodes_part2(&y2, &phi2, &t).unwrap();
        assert!(!sol.rank_deficient);
        for j in 0..30 {
            assert!((sol.x_hat[j] - x[j]).abs() < 1e-8, "coef {j}");
        }
    }

    #[test]
    fn classic_part2_matches_normal_equations_oracle() {
        // Well-conditioned 50×20 least squares vs (AᵀA)⁻¹Aᵀy.
        let phi2 = gen_phi2(50, 20, VarianceConvention::One, 13).unwrap();
        let t: Vec<usize> = (0..20).collect();
        let y2: Vec<f64> = (0..50).map(|i| ((i * i) as f64 * 0.01).sin()).collect();
        let sol = classic_sudocodes_part2(&y2, &phi2, &t).unwrap();
        let a = nalgebra::DMatrix::from_fn(50, 20, |i, j| phi2.get(i, j));
        let b = nalgebra::DVector::from_column_slice(&y2);
        let normal = (a.transpose() * &a)
            .try_inverse()
            .unwrap()
            * a.transpose()
            * b;
        for j in 0..20 {
            assert!((sol.x_hat[j] - normal[j]).abs() < 1e-8);
        }
    }

    #[test]
    fn classic_part2_reports_rank_deficiency() {
        // Duplicate column ⇒ deficient; min-norm solution still returned.
        let cols = vec![vec![1.0, 2.0, 3.0], vec![1.0, 2.0, 3.0], vec![0.0, 1.0, 0.0]];
        let phi2 = DenseMatrix::from_columns(3, cols, VarianceConvention::One);
        let sol = classic_sudocodes_part2(&[2.0, 5.0, 6.0], &phi2, &[0, 1, 2]).unwrap();
        assert!(sol.rank_deficient);
        assert!(sol.x_hat.iter().all(|v| v.is_finite()));
    }
}
