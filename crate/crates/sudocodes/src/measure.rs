//! Measurement ensembles and quantizers.
//!
//! Two matrix families: the sparse binary ensemble of the zero-identification
//! stage (entries nonzero with probability d/(s·n), all equal to a scaling
//! constant γ) and the dense i.i.d. Gaussian ensemble of the reconstruction
//! stage. The dense ensemble exists both materialized ([`DenseMatrix`]) and
//! lazy ([`DenseEnsemble`]); per-column RNG streams make any column of the
//! lazy form bit-identical to the same column of the materialized form, so
//! large matrices never need to be stored to restrict them to a survivor set.

use crate::error::{Error, Result};
use crate::rng::{stream, stream_rng};
use rand_distr::{Binomial, Distribution, StandardNormal};
use serde::{Deserialize, Serialize};
use std::io::{Read, Write};

/// Entry-variance convention of the dense ensemble: N(0, 1/n) for the linear
/// (AMP) setting, N(0, 1) for the 1-bit setting. The sparse ensemble's γ
/// follows the matching convention: √(s/d) resp. √(s·n/d), chosen so both
/// stages see the same per-measurement signal power.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum VarianceConvention {
    OneOverN,
    One,
}

/// I.i.d. Gaussian pre-quantization noise with variance `sigma_z2`.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct NoiseModel {
    pub sigma_z2: f64,
}

impl NoiseModel {
    pub fn new(sigma_z2: f64) -> Result<Self> {
        if !(sigma_z2 >= 0.0) {
            return Err(Error::InvalidParameter(format!(
                "noise variance must be nonnegative, got {sigma_z2}"
            )));
        }
        Ok(Self { sigma_z2 })
    }

    pub fn noiseless() -> Self {
        Self { sigma_z2: 0.0 }
    }

    /// Draw a noise vector of length m. Deterministic given the seed.
    pub fn sample(&self, m: usize, seed: u64) -> Vec<f64> {
        if self.sigma_z2 == 0.0 {
            return vec![0.0; m];
        }
        let sd = self.sigma_z2.sqrt();
        let mut rng = stream_rng(seed, stream::NOISE);
        (0..m)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                sd * g
            })
            .collect()
    }
}

/// Anything that acts as a measurement operator y = Φx (plus its transpose).
pub trait LinearOperator {
    fn rows(&self) -> usize;
    fn cols(&self) -> usize;
    fn apply(&self, x: &[f64]) -> Vec<f64>;
    fn apply_transpose(&self, r: &[f64]) -> Vec<f64>;
}

// ---------------------------------------------------------------------------
// Sparse binary ensemble
// ---------------------------------------------------------------------------

/// Sparse binary matrix with every nonzero equal to `gamma`, stored as both
/// row and column support sets (rows drive the product and the classic
/// decoder; columns drive zero-identification).
#[derive(Debug, Clone, PartialEq)]
pub struct SparseBinaryMatrix {
    pub m1: usize,
    pub n: usize,
    pub row_supports: Vec<Vec<usize>>,
    pub col_supports: Vec<Vec<usize>>,
    pub gamma: f64,
}

impl SparseBinaryMatrix {
    /// Total nonzero count.
    pub fn nnz(&self) -> usize {
        self.row_supports.iter().map(Vec::len).sum()
    }

    /// Fraction of nonzero entries.
    pub fn density(&self) -> f64 {
        self.nnz() as f64 / (self.m1 as f64 * self.n as f64)
    }
}

impl LinearOperator for SparseBinaryMatrix {
    fn rows(&self) -> usize {
        self.m1
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "input length mismatch");
        self.row_supports
            .iter()
            .map(|sup| self.gamma * sup.iter().map(|&j| x[j]).sum::<f64>())
            .collect()
    }
    fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.m1, "input length mismatch");
        self.col_supports
            .iter()
            .map(|sup| self.gamma * sup.iter().map(|&i| r[i]).sum::<f64>())
            .collect()
    }
}

/// Scaling constant γ of the sparse ensemble under each convention.
pub fn sparse_gamma(convention: VarianceConvention, s: f64, d: f64, n: usize) -> f64 {
    match convention {
        VarianceConvention::OneOverN => (s / d).sqrt(),
        VarianceConvention::One => (s * n as f64 / d).sqrt(),
    }
}

/// Generate the sparse binary ensemble: each entry independently nonzero
/// with probability d/(s·n). Per-row supports are drawn as Binomial(n, p)
/// counts followed by a uniform distinct-index sample, which is equivalent
/// in distribution to per-entry Bernoulli draws but costs O(nnz) per row.
pub fn gen_phi1(
    m1: usize,
    n: usize,
    s: f64,
    d: f64,
    convention: VarianceConvention,
    seed: u64,
) -> Result<SparseBinaryMatrix> {
    if m1 == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!("phi1 dims {m1}x{n}")));
    }
    if !(s > 0.0 && s < 1.0) || !(d > 0.0) {
        return Err(Error::InvalidParameter(format!(
            "need 0 < s < 1 and d > 0, got s={s}, d={d}"
        )));
    }
    let p = d / (s * n as f64);
    if p > 1.0 {
        return Err(Error::DensityTooHigh(p));
    }
    let gamma = sparse_gamma(convention, s, d, n);
    let mut row_supports = Vec::with_capacity(m1);
    let mut col_supports = vec![Vec::new(); n];
    for i in 0..m1 {
        let mut rng = stream_rng(seed, stream::PHI1_ROWS + i as u64);
        let k = if p == 1.0 {
            n as u64
        } else {
            Binomial::new(n as u64, p)
                .expect("validated binomial parameters")
                .sample(&mut rng)
        };
        let mut sup: Vec<usize> = rand::seq::index::sample(&mut rng, n, k as usize).into_vec();
        sup.sort_unstable();
        for &j in &sup {
            col_supports[j].push(i);
        }
        row_supports.push(sup);
    }
    Ok(SparseBinaryMatrix {
        m1,
        n,
        row_supports,
        col_supports,
        gamma,
    })
}

// ---------------------------------------------------------------------------
// Dense Gaussian ensemble
// ---------------------------------------------------------------------------

/// Materialized dense Gaussian matrix, stored column-major (column
/// restriction and both products walk columns).
#[derive(Debug, Clone, PartialEq)]
pub struct DenseMatrix {
    pub m2: usize,
    pub n: usize,
    /// Column-major: entry (i, j) at `entries[j*m2 + i]`.
    entries: Vec<f64>,
    pub convention: VarianceConvention,
}

impl DenseMatrix {
    pub fn from_columns(
        m2: usize,
        columns: Vec<Vec<f64>>,
        convention: VarianceConvention,
    ) -> Self {
        let n = columns.len();
        let mut entries = Vec::with_capacity(m2 * n);
        for col in columns {
            assert_eq!(col.len(), m2);
            entries.extend_from_slice(&col);
        }
        Self {
            m2,
            n,
            entries,
            convention,
        }
    }

    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.entries[j * self.m2 + i]
    }

    pub fn column(&self, j: usize) -> &[f64] {
        &self.entries[j * self.m2..(j + 1) * self.m2]
    }

    /// New matrix made of the selected columns, in the given order.
    pub fn restrict_columns(&self, cols: &[usize]) -> DenseMatrix {
        let mut entries = Vec::with_capacity(self.m2 * cols.len());
        for &j in cols {
            entries.extend_from_slice(self.column(j));
        }
        DenseMatrix {
            m2: self.m2,
            n: cols.len(),
            entries,
            convention: self.convention,
        }
    }

    /// Empirical variance of all entries (mean removed).
    pub fn entry_variance(&self) -> f64 {
        let len = self.entries.len() as f64;
        let mean: f64 = self.entries.iter().sum::<f64>() / len;
        self.entries.iter().map(|e| (e - mean) * (e - mean)).sum::<f64>() / len
    }
}

impl LinearOperator for DenseMatrix {
    fn rows(&self) -> usize {
        self.m2
    }
    fn cols(&self) -> usize {
        self.n
    }
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "input length mismatch");
        let mut y = vec![0.0; self.m2];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            let col = self.column(j);
            for (yi, &cij) in y.iter_mut().zip(col) {
                *yi += xj * cij;
            }
        }
        y
    }
    fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.m2, "input length mismatch");
        (0..self.n)
            .map(|j| {
                self.column(j)
                    .iter()
                    .zip(r)
                    .map(|(&cij, &ri)| cij * ri)
                    .sum()
            })
            .collect()
    }
}

/// Lazy description of a dense Gaussian matrix: any column (or the whole
/// matrix) can be regenerated on demand, bit-identical across calls.
#[derive(Debug, Clone, Copy, Serialize, Deserialize)]
pub struct DenseEnsemble {
    pub m: usize,
    pub n: usize,
    pub convention: VarianceConvention,
    pub seed: u64,
}

impl DenseEnsemble {
    pub fn new(m: usize, n: usize, convention: VarianceConvention, seed: u64) -> Self {
        Self {
            m,
            n,
            convention,
            seed,
        }
    }

    fn scale(&self) -> f64 {
        match self.convention {
            VarianceConvention::OneOverN => 1.0 / (self.n as f64).sqrt(),
            VarianceConvention::One => 1.0,
        }
    }

    /// Generate column j.
    pub fn column(&self, j: usize) -> Vec<f64> {
        let scale = self.scale();
        let mut rng = stream_rng(self.seed, stream::PHI2_COLS + j as u64);
        (0..self.m)
            .map(|_| {
                let g: f64 = StandardNormal.sample(&mut rng);
                scale * g
            })
            .collect()
    }

    /// Materialize the selected columns as a standalone matrix.
    pub fn columns(&self, cols: &[usize]) -> DenseMatrix {
        DenseMatrix::from_columns(
            self.m,
            cols.iter().map(|&j| self.column(j)).collect(),
            self.convention,
        )
    }

    /// Materialize the full matrix.
    pub fn materialize(&self) -> DenseMatrix {
        let all: Vec<usize> = (0..self.n).collect();
        self.columns(&all)
    }
}

impl LinearOperator for DenseEnsemble {
    fn rows(&self) -> usize {
        self.m
    }
    fn cols(&self) -> usize {
        self.n
    }
    /// Streams only the columns touching nonzero coefficients; O(m·‖x‖₀)
    /// work and O(m) memory.
    fn apply(&self, x: &[f64]) -> Vec<f64> {
        assert_eq!(x.len(), self.n, "input length mismatch");
        let mut y = vec![0.0; self.m];
        for (j, &xj) in x.iter().enumerate() {
            if xj == 0.0 {
                continue;
            }
            for (yi, cij) in y.iter_mut().zip(self.column(j)) {
                *yi += xj * cij;
            }
        }
        y
    }
    fn apply_transpose(&self, r: &[f64]) -> Vec<f64> {
        assert_eq!(r.len(), self.m, "input length mismatch");
        (0..self.n)
            .map(|j| self.column(j).iter().zip(r).map(|(c, ri)| c * ri).sum())
            .collect()
    }
}

/// Generate and materialize the dense Gaussian ensemble.
pub fn gen_phi2(
    m2: usize,
    n: usize,
    convention: VarianceConvention,
    seed: u64,
) -> Result<DenseMatrix> {
    if m2 == 0 || n == 0 {
        return Err(Error::InvalidDimension(format!("phi2 dims {m2}x{n}")));
    }
    Ok(DenseEnsemble::new(m2, n, convention, seed).materialize())
}

// ---------------------------------------------------------------------------
// Measurement + quantizers
// ---------------------------------------------------------------------------

/// y = Φx + z with z i.i.d. N(0, σ_z²), drawn deterministically from `seed`.
pub fn measure_linear<O: LinearOperator>(
    phi: &O,
    x: &[f64],
    noise: &NoiseModel,
    seed: u64,
) -> Result<Vec<f64>> {
    if x.len() != phi.cols() {
        return Err(Error::DimensionMismatch(format!(
            "signal length {} vs matrix columns {}",
            x.len(),
            phi.cols()
        )));
    }
    let mut y = phi.apply(x);
    if noise.sigma_z2 > 0.0 {
        let z = noise.sample(phi.rows(), seed);
        for (yi, zi) in y.iter_mut().zip(z) {
            *yi += zi;
        }
    }
    Ok(y)
}

/// Scalar sign: +1 where u > 0, −1 otherwise (zero maps to −1).
pub fn sign_of(u: f64) -> i8 {
    if u > 0.0 {
        1
    } else {
        -1
    }
}

/// Sign quantizer: −1 where u ≤ 0, +1 where u > 0.
pub fn quantize_sign(u: &[f64]) -> Vec<i8> {
    u.iter().map(|&v| sign_of(v)).collect()
}

/// Magnitude quantizer: −1 where |u| ≤ eps, +1 where |u| > eps. Small
/// measurements are encoded as −1 so the zero-identification stage can read
/// them straight off the quantized vector.
pub fn quantize_magnitude(u: &[f64], eps: f64) -> Vec<i8> {
    u.iter()
        .map(|&v| if v.abs() <= eps { -1 } else { 1 })
        .collect()
}

// ---------------------------------------------------------------------------
// Binary container
// ---------------------------------------------------------------------------

const MAGIC: &[u8; 8] = b"SDCMAT01";
const KIND_SPARSE: u8 = 0;
const KIND_DENSE: u8 = 1;

fn write_u64<W: Write>(w: &mut W, v: u64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn write_f64<W: Write>(w: &mut W, v: f64) -> Result<()> {
    w.write_all(&v.to_le_bytes())?;
    Ok(())
}

fn read_u64<R: Read>(r: &mut R) -> Result<u64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(u64::from_le_bytes(b))
}

fn read_f64<R: Read>(r: &mut R) -> Result<f64> {
    let mut b = [0u8; 8];
    r.read_exact(&mut b)?;
    Ok(f64::from_le_bytes(b))
}

fn convention_byte(c: VarianceConvention) -> u8 {
    match c {
        VarianceConvention::OneOverN => 0,
        VarianceConvention::One => 1,
    }
}

fn convention_from_byte(b: u8) -> Result<VarianceConvention> {
    match b {
        0 => Ok(VarianceConvention::OneOverN),
        1 => Ok(VarianceConvention::One),
        other => Err(Error::MatrixFormat(format!(
            "unknown variance-convention byte {other}"
        ))),
    }
}

impl SparseBinaryMatrix {
    /// Serialize: header (magic, kind, dims, gamma) then per-row support
    /// lists (count + indices, u64 little-endian).
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[KIND_SPARSE])?;
        write_u64(w, self.m1 as u64)?;
        write_u64(w, self.n as u64)?;
        write_f64(w, self.gamma)?;
        for sup in &self.row_supports {
            write_u64(w, sup.len() as u64)?;
            for &j in sup {
                write_u64(w, j as u64)?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::MatrixFormat("bad magic".into()));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        if kind[0] != KIND_SPARSE {
            return Err(Error::MatrixFormat(format!(
                "expected sparse container, found kind {}",
                kind[0]
            )));
        }
        let m1 = read_u64(r)? as usize;
        let n = read_u64(r)? as usize;
        let gamma = read_f64(r)?;
        let mut row_supports = Vec::with_capacity(m1);
        let mut col_supports = vec![Vec::new(); n];
        for i in 0..m1 {
            let k = read_u64(r)? as usize;
            let mut sup = Vec::with_capacity(k);
            for _ in 0..k {
                let j = read_u64(r)? as usize;
                if j >= n {
                    return Err(Error::MatrixFormat(format!(
                        "column index {j} out of range (n={n})"
                    )));
                }
                sup.push(j);
                col_supports[j].push(i);
            }
            row_supports.push(sup);
        }
        Ok(Self {
            m1,
            n,
            row_supports,
            col_supports,
            gamma,
        })
    }
}

impl DenseMatrix {
    /// Serialize: header (magic, kind, dims, convention) then row-major
    /// f64 entries.
    pub fn write_to<W: Write>(&self, w: &mut W) -> Result<()> {
        w.write_all(MAGIC)?;
        w.write_all(&[KIND_DENSE])?;
        write_u64(w, self.m2 as u64)?;
        write_u64(w, self.n as u64)?;
        w.write_all(&[convention_byte(self.convention)])?;
        for i in 0..self.m2 {
            for j in 0..self.n {
                write_f64(w, self.get(i, j))?;
            }
        }
        Ok(())
    }

    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut magic = [0u8; 8];
        r.read_exact(&mut magic)?;
        if &magic != MAGIC {
            return Err(Error::MatrixFormat("bad magic".into()));
        }
        let mut kind = [0u8; 1];
        r.read_exact(&mut kind)?;
        if kind[0] != KIND_DENSE {
            return Err(Error::MatrixFormat(format!(
                "expected dense container, found kind {}",
                kind[0]
            )));
        }
        let m2 = read_u64(r)? as usize;
        let n = read_u64(r)? as usize;
        let mut conv = [0u8; 1];
        r.read_exact(&mut conv)?;
        let convention = convention_from_byte(conv[0])?;
        let mut entries = vec![0.0; m2 * n];
        for i in 0..m2 {
            for j in 0..n {
                entries[j * m2 + i] = read_f64(r)?;
            }
        }
        Ok(Self {
            m2,
            n,
            entries,
            convention,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{sample_signal, SignalModel};

    #[test]
    fn phi1_row_support_size_matches_density() {
        // d/s = 80 expected nonzeros per row at n=20000, s=0.01, d=0.8.
        let m = gen_phi1(200, 20_000, 0.01, 0.8, VarianceConvention::OneOverN, 1).unwrap();
        let mean = m.nnz() as f64 / 200.0;
        // SE of the mean over 200 rows: sqrt(n·p(1−p)/200) ≈ 0.63.
        assert!((mean - 80.0).abs() < 4.0 * 0.63, "mean row nnz {mean}");
        assert!((m.gamma - (0.01f64 / 0.8).sqrt()).abs() < 1e-15);
    }

    #[test]
    fn phi1_density_boundary_gives_full_matrix() {
        // d/(s·n) = 1 → every row has full support.
        let n = 50;
        let s = 0.1;
        let d = s * n as f64;
        let m = gen_phi1(8, n, s, d, VarianceConvention::OneOverN, 2).unwrap();
        for sup in &m.row_supports {
            assert_eq!(sup.len(), n);
        }
    }

    #[test]
    fn phi1_density_above_one_rejected() {
        match gen_phi1(4, 100, 0.01, 2.0, VarianceConvention::OneOverN, 3) {
            Err(Error::DensityTooHigh(p)) => assert!(p > 1.0),
            other => panic!("expected density error, got {other:?}"),
        }
    }

    #[test]
    fn phi1_empirical_density_matches_bernoulli_probability() {
        // n=1000, s=0.01, d=0.5 → p=0.05; aggregate over 10^4 rows.
        let m1 = 10_000;
        let n = 1000;
        let m = gen_phi1(m1, n, 0.01, 0.5, VarianceConvention::OneOverN, 4).unwrap();
        let p = 0.05;
        let total = (m1 * n) as f64;
        let se = (p * (1.0 - p) / total).sqrt();
        assert!(
            (m.density() - p).abs() < 3.0 * se,
            "density {} vs {p} (se {se})",
            m.density()
        );
    }

    #[test]
    fn phi1_row_col_duality() {
        let m = gen_phi1(40, 300, 0.05, 1.0, VarianceConvention::OneOverN, 5).unwrap();
        for (i, sup) in m.row_supports.iter().enumerate() {
            for &j in sup {
                assert!(m.col_supports[j].contains(&i));
            }
        }
        for (j, sup) in m.col_supports.iter().enumerate() {
            for &i in sup {
                assert!(m.row_supports[i].contains(&j));
            }
        }
    }

    #[test]
    fn phi2_entry_variance_tracks_convention() {
        let a = gen_phi2(100, 1000, VarianceConvention::OneOverN, 6).unwrap();
        let va = a.entry_variance();
        assert!((va - 0.001).abs() < 0.1 * 0.001, "var {va}");
        let b = gen_phi2(100, 1000, VarianceConvention::One, 6).unwrap();
        let vb = b.entry_variance();
        assert!((vb - 1.0).abs() < 0.05, "var {vb}");
    }

    #[test]
    fn phi2_single_entry_reproducible() {
        let a = gen_phi2(1, 1, VarianceConvention::One, 99).unwrap();
        let b = gen_phi2(1, 1, VarianceConvention::One, 99).unwrap();
        assert_eq!(a.get(0, 0), b.get(0, 0));
        assert!(a.get(0, 0).is_finite() && a.get(0, 0) != 0.0);
    }

    #[test]
    fn lazy_columns_match_materialized_bitwise() {
        let ens = DenseEnsemble::new(30, 50, VarianceConvention::OneOverN, 7);
        let full = ens.materialize();
        let picked = [3usize, 17, 49, 0];
        let sub = ens.columns(&picked);
        let via_restrict = full.restrict_columns(&picked);
        assert_eq!(sub, via_restrict);
    }

    #[test]
    fn sparse_product_matches_dense_transcription() {
        let m = gen_phi1(25, 80, 0.1, 1.2, VarianceConvention::OneOverN, 8).unwrap();
        let x = sample_signal(&SignalModel::sparse_gaussian(0.3), 80, 9).unwrap();
        let y = m.apply(&x.values);
        // Dense transcription of the same matrix.
        for (i, yi) in y.iter().enumerate() {
            let mut acc = 0.0;
            for j in 0..80 {
                if m.row_supports[i].contains(&j) {
                    acc += m.gamma * x.values[j];
                }
            }
            assert!((yi - acc).abs() < 1e-10);
        }
        // Transpose agrees with the definition too.
        let r: Vec<f64> = (0..25).map(|i| (i as f64 * 0.37).sin()).collect();
        let v = m.apply_transpose(&r);
        for (j, vj) in v.iter().enumerate() {
            let mut acc = 0.0;
            for (i, ri) in r.iter().enumerate() {
                if m.row_supports[i].contains(&j) {
                    acc += m.gamma * ri;
                }
            }
            assert!((vj - acc).abs() < 1e-10);
        }
    }

    #[test]
    fn measure_linear_zero_signal_zero_noise_is_zero() {
        let m = gen_phi1(10, 40, 0.1, 0.5, VarianceConvention::OneOverN, 10).unwrap();
        let y = measure_linear(&m, &vec![0.0; 40], &NoiseModel::noiseless(), 0).unwrap();
        assert!(y.iter().all(|v| *v == 0.0));
    }

    #[test]
    fn measure_linear_noise_is_seeded_and_additive() {
        let m = gen_phi2(15, 20, VarianceConvention::OneOverN, 11).unwrap();
        let x: Vec<f64> = (0..20).map(|j| (j as f64).cos()).collect();
        let noise = NoiseModel::new(0.25).unwrap();
        let y1 = measure_linear(&m, &x, &noise, 31).unwrap();
        let y2 = measure_linear(&m, &x, &noise, 31).unwrap();
        let y3 = measure_linear(&m, &x, &noise, 32).unwrap();
        assert_eq!(y1, y2);
        assert_ne!(y1, y3);
        let clean = measure_linear(&m, &x, &NoiseModel::noiseless(), 31).unwrap();
        let diff: Vec<f64> = y1.iter().zip(&clean).map(|(a, b)| a - b).collect();
        let var = diff.iter().map(|v| v * v).sum::<f64>() / 15.0;
        assert!(var > 0.0 && var < 2.5, "noise variance estimate {var}");
    }

    #[test]
    fn quantizer_definitions() {
        assert_eq!(quantize_sign(&[0.0, 0.5, -0.5]), vec![-1, 1, -1]);
        assert_eq!(quantize_sign(&[1.0, 2.0, 3e-9]), vec![1, 1, 1]);
        // Scale invariance for positive scaling.
        let u = [0.3, -0.2, 0.0, 5.0];
        let scaled: Vec<f64> = u.iter().map(|v| v * 7.5).collect();
        assert_eq!(quantize_sign(&u), quantize_sign(&scaled));

        assert_eq!(quantize_magnitude(&[0.0], 0.0), vec![-1]);
        assert_eq!(quantize_magnitude(&[0.1, -0.05, 0.2], 0.1), vec![-1, -1, 1]);
        // Even in |·|.
        let v = [0.07, -0.12, 0.0, -0.03];
        let neg: Vec<f64> = v.iter().map(|x| -x).collect();
        assert_eq!(quantize_magnitude(&v, 0.08), quantize_magnitude(&neg, 0.08));
    }

    #[test]
    fn sparse_container_round_trip() {
        let m = gen_phi1(12, 64, 0.1, 0.9, VarianceConvention::One, 13).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = SparseBinaryMatrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn dense_container_round_trip() {
        let m = gen_phi2(9, 14, VarianceConvention::OneOverN, 14).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        let back = DenseMatrix::read_from(&mut buf.as_slice()).unwrap();
        assert_eq!(m, back);
    }

    #[test]
    fn container_rejects_wrong_kind() {
        let m = gen_phi2(3, 3, VarianceConvention::One, 15).unwrap();
        let mut buf = Vec::new();
        m.write_to(&mut buf).unwrap();
        assert!(matches!(
            SparseBinaryMatrix::read_from(&mut buf.as_slice()),
            Err(Error::MatrixFormat(_))
        ));
    }

    #[test]
    fn matched_scaling_equalizes_snr_between_stages() {
        // With γ = √(s/d) against N(0,1/N) dense entries, both stages have
        // per-measurement signal power s·E[x²_nz]; the SNRs agree over seeds.
        let n = 20_000;
        let s = 0.01;
        let d = 0.8;
        let m1 = 2000;
        let m2 = 2000;
        let noise = NoiseModel::new(1e-3).unwrap();
        let mut snr1 = Vec::new();
        let mut snr2 = Vec::new();
        for seed in 0..50u64 {
            let x = sample_signal(&SignalModel::sparse_gaussian(s), n, seed).unwrap();
            let phi1 = gen_phi1(m1, n, s, d, VarianceConvention::OneOverN, seed).unwrap();
            let phi2 = DenseEnsemble::new(m2, n, VarianceConvention::OneOverN, seed);
            let z = noise.sample(m1, seed);
            snr1.push(crate::model::input_snr(|v: &[f64]| phi1.apply(v), &x.values, &z).unwrap());
            snr2.push(crate::model::input_snr(|v: &[f64]| phi2.apply(v), &x.values, &z).unwrap());
        }
        let mean = |v: &[f64]| v.iter().sum::<f64>() / v.len() as f64;
        let gap = (mean(&snr1) - mean(&snr2)).abs();
        assert!(gap < 0.2, "stage SNR gap {gap} dB");
    }
}
