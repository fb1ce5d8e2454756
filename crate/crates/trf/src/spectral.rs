//! Symmetric eigensolvers and spectral-comparison utilities: the full dense
//! Householder + implicit-QL decomposition for desk-scale matrices, Lanczos
//! with full reorthogonalization for spectral norms and extreme eigenpairs
//! at larger n, bulk/spike eigenvalue histograms, and eigenvector alignment.

use rayon::prelude::*;

use crate::error::{Result, TrfError};
use crate::kernels::KernelMatrix;
use crate::linalg::{dot, sym_tridiagonalize, tridiag_ql, Mat, ZTarget};
use crate::rng::{normal, substream};

/// Eigenvalue histogram over fixed edges.
#[derive(Debug, Clone, PartialEq)]
pub struct Histogram {
    /// bins + 1 ascending edges.
    pub edges: Vec<f64>,
    pub counts: Vec<u64>,
}

impl Histogram {
    pub fn build(values: &[f64], lo: f64, hi: f64, bins: usize) -> Histogram {
        let mut edges = Vec::with_capacity(bins + 1);
        let width = (hi - lo) / bins as f64;
        for b in 0..=bins {
            edges.push(lo + b as f64 * width);
        }
        let mut counts = vec![0u64; bins];
        for &v in values {
            if v < lo || v > hi {
                continue;
            }
            let mut idx = ((v - lo) / width) as usize;
            if idx >= bins {
                idx = bins - 1;
            }
            counts[idx] += 1;
        }
        Histogram { edges, counts }
    }

    pub fn total(&self) -> u64 {
        self.counts.iter().sum()
    }
}

/// Spikes are eigenvalues beyond median + multiplier * IQR; they are listed
/// separately and excluded from the bulk histogram.
pub const DEFAULT_SPIKE_IQR_MULTIPLIER: f64 = 10.0;
pub const DEFAULT_HISTOGRAM_BINS: usize = 50;

/// Split a sorted spectrum into bulk and upper spikes.
pub fn split_spikes(sorted_eigs: &[f64], iqr_multiplier: f64) -> (Vec<f64>, Vec<f64>) {
    let n = sorted_eigs.len();
    if n < 4 {
        return (sorted_eigs.to_vec(), Vec::new());
    }
    let q = |f: f64| -> f64 {
        let pos = f * (n - 1) as f64;
        let i = pos.floor() as usize;
        let frac = pos - i as f64;
        if i + 1 < n {
            sorted_eigs[i] * (1.0 - frac) + sorted_eigs[i + 1] * frac
        } else {
            sorted_eigs[i]
        }
    };
    let median = q(0.5);
    let iqr = q(0.75) - q(0.25);
    let cut = median + iqr_multiplier * iqr;
    let bulk: Vec<f64> = sorted_eigs.iter().copied().filter(|&v| v <= cut).collect();
    let spikes: Vec<f64> = sorted_eigs.iter().copied().filter(|&v| v > cut).collect();
    (bulk, spikes)
}

/// Sorted spectrum, the leading eigenvectors, and the bulk histogram.
#[derive(Debug, Clone)]
pub struct SpectralSummary {
    /// Ascending.
    pub eigenvalues: Vec<f64>,
    /// Eigenvectors of the k largest eigenvalues, descending by eigenvalue,
    /// sign fixed so the largest-magnitude component is positive.
    pub top_vectors: Vec<Vec<f64>>,
    pub histogram: Histogram,
    /// Isolated eigenvalues excluded from the bulk histogram.
    pub spikes: Vec<f64>,
}

fn fix_sign(v: &mut [f64]) {
    let mut best = 0usize;
    for (i, x) in v.iter().enumerate() {
        if x.abs() > v[best].abs() {
            best = i;
        }
    }
    if v[best] < 0.0 {
        for x in v.iter_mut() {
            *x = -*x;
        }
    }
}

/// Full symmetric eigendecomposition (deterministic, single-threaded per
/// matrix). Intended for n up to a few thousand; use [`top_eigenpairs`] or
/// [`spectral_norm`] beyond that.
pub fn sym_eig(a: &KernelMatrix, k_top: usize) -> Result<SpectralSummary> {
    let n = a.n();
    let asym = a.values.asymmetry();
    if asym > 1e-9 * a.values.max_abs().max(1.0) {
        return Err(TrfError::NotSymmetric(asym));
    }
    let (mut d, mut e, v) = sym_tridiagonalize(&a.values, true);
    let mut v = v.expect("vectors requested");
    tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut v))?;
    let mut top_vectors = Vec::with_capacity(k_top.min(n));
    for j in (n.saturating_sub(k_top)..n).rev() {
        let mut col: Vec<f64> = (0..n).map(|i| v[(i, j)]).collect();
        fix_sign(&mut col);
        top_vectors.push(col);
    }
    let (bulk, spikes) = split_spikes(&d, DEFAULT_SPIKE_IQR_MULTIPLIER);
    let (lo, hi) = bulk_range(&bulk);
    let histogram = Histogram::build(&bulk, lo, hi, DEFAULT_HISTOGRAM_BINS);
    Ok(SpectralSummary {
        eigenvalues: d,
        top_vectors,
        histogram,
        spikes,
    })
}

fn bulk_range(bulk: &[f64]) -> (f64, f64) {
    if bulk.is_empty() {
        return (0.0, 1.0);
    }
    let lo = bulk[0];
    let hi = bulk[bulk.len() - 1];
    if hi > lo {
        (lo, hi)
    } else {
        (lo - 0.5, hi + 0.5)
    }
}

/// Eigenvalues only, ascending.
pub fn sym_eigenvalues(a: &Mat) -> Result<Vec<f64>> {
    let (mut d, mut e, _) = sym_tridiagonalize(a, false);
    tridiag_ql(&mut d, &mut e, ZTarget::None)?;
    Ok(d)
}

/// |u . v| for unit vectors.
pub fn align(u: &[f64], v: &[f64]) -> Result<f64> {
    if u.len() != v.len() {
        return Err(TrfError::dims(format!(
            "alignment of vectors with lengths {} and {}",
            u.len(),
            v.len()
        )));
    }
    for (name, w) in [("u", u), ("v", v)] {
        let norm = dot(w, w).sqrt();
        if (norm - 1.0).abs() > 1e-8 {
            return Err(TrfError::invalid(format!(
                "{name} is not unit norm: ||{name}|| = {norm}"
            )));
        }
    }
    Ok(dot(u, v).abs())
}

/// Total-variation distance between two prebuilt histograms on identical
/// edges.
pub fn compare_histograms(a: &Histogram, b: &Histogram) -> Result<f64> {
    if a.edges != b.edges {
        return Err(TrfError::invalid("histograms have mismatched bin edges"));
    }
    let (na, nb) = (a.total() as f64, b.total() as f64);
    if na == 0.0 || nb == 0.0 {
        return Err(TrfError::invalid("empty histogram"));
    }
    let tv = a
        .counts
        .iter()
        .zip(&b.counts)
        .map(|(&ca, &cb)| (ca as f64 / na - cb as f64 / nb).abs())
        .sum::<f64>()
        / 2.0;
    Ok(tv)
}

/// Total-variation distance between the bulk spectra of two summaries, using
/// common bin edges spanning both bulks.
pub fn histogram_compare(a: &SpectralSummary, b: &SpectralSummary, bins: usize) -> Result<f64> {
    let (bulk_a, _) = split_spikes(&a.eigenvalues, DEFAULT_SPIKE_IQR_MULTIPLIER);
    let (bulk_b, _) = split_spikes(&b.eigenvalues, DEFAULT_SPIKE_IQR_MULTIPLIER);
    if bulk_a.is_empty() || bulk_b.is_empty() {
        return Err(TrfError::invalid("empty bulk spectrum"));
    }
    let lo = bulk_a[0].min(bulk_b[0]);
    let hi = bulk_a[bulk_a.len() - 1].max(bulk_b[bulk_b.len() - 1]);
    let ha = Histogram::build(&bulk_a, lo, hi, bins);
    let hb = Histogram::build(&bulk_b, lo, hi, bins);
    compare_histograms(&ha, &hb)
}

// ---------------------------------------------------------------------------
// Lanczos
// ---------------------------------------------------------------------------

struct LanczosState {
    alphas: Vec<f64>,
    betas: Vec<f64>,
    basis: Vec<Vec<f64>>,
}

fn lanczos_iterate(a: &Mat, max_iters: usize) -> LanczosState {
    let n = a.rows();
    let steps = max_iters.min(n);
    let mut rng = substream(0xdec0de, &[n as u64]);
    let mut v: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
    let norm = dot(&v, &v).sqrt();
    for x in v.iter_mut() {
        *x /= norm;
    }
    let mut basis: Vec<Vec<f64>> = vec![v];
    let mut alphas = Vec::new();
    let mut betas = Vec::new();
    for j in 0..steps {
        let vj = basis[j].clone();
        let mut w: Vec<f64> = (0..n)
            .into_par_iter()
            .map(|i| dot(a.row(i), &vj))
            .collect();
        let alpha = dot(&vj, &w);
        alphas.push(alpha);
        for (x, y) in w.iter_mut().zip(&vj) {
            *x -= alpha * y;
        }
        if j > 0 {
            let beta_prev = betas[j - 1];
            for (x, y) in w.iter_mut().zip(&basis[j - 1]) {
                *x -= beta_prev * y;
            }
        }
        // full reorthogonalization, applied twice
        for _ in 0..2 {
            for q in &basis {
                let c = dot(q, &w);
                for (x, y) in w.iter_mut().zip(q) {
                    *x -= c * y;
                }
            }
        }
        let beta = dot(&w, &w).sqrt();
        if beta < 1e-13 * (1.0 + alpha.abs()) || j + 1 == steps {
            betas.push(beta);
            break;
        }
        betas.push(beta);
        for x in w.iter_mut() {
            *x /= beta;
        }
        basis.push(w);
    }
    LanczosState {
        alphas,
        betas,
        basis,
    }
}

/// Ritz approximations of the extreme spectrum from a Lanczos run.
pub struct RitzPairs {
    /// Ascending Ritz values.
    pub values: Vec<f64>,
    /// Residual bound |beta_k s_ki| per Ritz value.
    pub residuals: Vec<f64>,
    vectors: Mat,
    basis: Vec<Vec<f64>>,
}

impl RitzPairs {
    /// Ritz vector for value index i, mapped back to the original space.
    pub fn vector(&self, i: usize) -> Vec<f64> {
        let n = self.basis[0].len();
        let k = self.values.len();
        let mut out = vec![0.0f64; n];
        for j in 0..k {
            let c = self.vectors[(j, i)];
            for (o, b) in out.iter_mut().zip(&self.basis[j]) {
                *o += c * b;
            }
        }
        let norm = dot(&out, &out).sqrt();
        for o in out.iter_mut() {
            *o /= norm;
        }
        fix_sign(&mut out);
        out
    }
}

fn lanczos_ritz(a: &Mat, iters: usize) -> Result<RitzPairs> {
    let state = lanczos_iterate(a, iters);
    let k = state.alphas.len();
    let mut d = state.alphas.clone();
    let mut e = vec![0.0f64; k];
    for i in 0..k.saturating_sub(1) {
        e[i] = state.betas[i];
    }
    let beta_last = *state.betas.last().unwrap_or(&0.0);
    let mut z = Mat::identity(k);
    tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut z))?;
    let residuals: Vec<f64> = (0..k).map(|i| (beta_last * z[(k - 1, i)]).abs()).collect();
    Ok(RitzPairs {
        values: d,
        residuals,
        vectors: z,
        basis: state.basis,
    })
}

const LANCZOS_ITERS: usize = 50;
const LANCZOS_TOL: f64 = 1e-8;
const DENSE_NORM_CUTOFF: usize = 1024;
const DENSE_FALLBACK_LIMIT: usize = 4096;

/// Spectral norm (largest |eigenvalue|) of a symmetric matrix: full
/// eigendecomposition up to n = 1024, Lanczos with full reorthogonalization
/// above, with a dense fallback when the extreme Ritz pairs have not
/// converged.
pub fn spectral_norm(a: &Mat) -> Result<f64> {
    let n = a.rows();
    if n == 0 {
        return Ok(0.0);
    }
    if n <= DENSE_NORM_CUTOFF {
        let eigs = sym_eigenvalues(a)?;
        return Ok(eigs[0].abs().max(eigs[n - 1].abs()));
    }
    for iters in [LANCZOS_ITERS, 3 * LANCZOS_ITERS] {
        let ritz = lanczos_ritz(a, iters)?;
        let k = ritz.values.len();
        let norm = ritz.values[0].abs().max(ritz.values[k - 1].abs());
        let tol = LANCZOS_TOL * norm.max(1e-300);
        if ritz.residuals[0] <= tol && ritz.residuals[k - 1] <= tol {
            return Ok(norm);
        }
    }
    if n <= DENSE_FALLBACK_LIMIT {
        let eigs = sym_eigenvalues(a)?;
        return Ok(eigs[0].abs().max(eigs[n - 1].abs()));
    }
    Err(TrfError::Numerical(format!(
        "Lanczos failed to converge for spectral norm at n = {n}"
    )))
}

/// The k algebraically largest eigenpairs: dense route up to n = 1024,
/// Lanczos beyond (isolated top eigenvalues converge in a few dozen
/// iterations).
pub fn top_eigenpairs(a: &Mat, k: usize) -> Result<Vec<(f64, Vec<f64>)>> {
    let n = a.rows();
    if n <= DENSE_NORM_CUTOFF {
        let km = KernelMatrix {
            values: a.clone(),
            centered: false,
        };
        let summary = sym_eig(&km, k)?;
        let mut out = Vec::new();
        for (idx, vec) in summary.top_vectors.iter().enumerate() {
            out.push((summary.eigenvalues[n - 1 - idx], vec.clone()));
        }
        return Ok(out);
    }
    let ritz = lanczos_ritz(a, (LANCZOS_ITERS).max(4 * k))?;
    let kk = ritz.values.len();
    let mut out = Vec::new();
    for i in 0..k.min(kk) {
        let idx = kk - 1 - i;
        out.push((ritz.values[idx], ritz.vector(idx)));
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::kernels::center;

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn random_symmetric(n: usize, seed: u64) -> Mat {
        let mut rng = substream(seed, &[0x5e]);
        let mut m = Mat::zeros(n, n);
        for i in 0..n {
            for j in 0..=i {
                let v = normal(&mut rng);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        m
    }

    #[test]
    fn diag_eigensystem() {
        let a = KernelMatrix::new(Mat::from_rows(&[
            vec![1.0, 0.0, 0.0],
            vec![0.0, 2.0, 0.0],
            vec![0.0, 0.0, 3.0],
        ]))
        .unwrap();
        let s = sym_eig(&a, 3).unwrap();
        assert_eq!(s.eigenvalues, vec![1.0, 2.0, 3.0]);
        // top vector is the axis of the largest eigenvalue, sign positive
        assert!(close(s.top_vectors[0][2], 1.0, 1e-12));
        assert!(close(s.top_vectors[1][1], 1.0, 1e-12));
    }

    #[test]
    fn centering_projector_spectrum() {
        let n = 8;
        let eye = KernelMatrix::new(Mat::identity(n)).unwrap();
        let p = center(&eye); // P I P = P
        let s = sym_eig(&KernelMatrix::new(p.values).unwrap(), 1).unwrap();
        assert!(close(s.eigenvalues[0], 0.0, 1e-12));
        for i in 1..n {
            assert!(close(s.eigenvalues[i], 1.0, 1e-12), "eig {i}");
        }
    }

    #[test]
    fn residuals_are_tiny_on_random_matrices() {
        let n = 64;
        let a = random_symmetric(n, 3);
        let km = KernelMatrix::new(a.clone()).unwrap();
        let s = sym_eig(&km, n).unwrap();
        let scale = a.max_abs();
        // reconstruct every pair from the returned top vectors
        for (idx, v) in s.top_vectors.iter().enumerate() {
            let lambda = s.eigenvalues[n - 1 - idx];
            let av = a.matvec(v);
            let mut worst = 0.0f64;
            for i in 0..n {
                worst = worst.max((av[i] - lambda * v[i]).abs());
            }
            assert!(worst <= 1e-10 * scale.max(1.0), "pair {idx}: residual {worst}");
        }
    }

    #[test]
    fn trace_preserved() {
        for seed in 0..5 {
            let n = 40;
            let a = random_symmetric(n, seed);
            let tr: f64 = (0..n).map(|i| a[(i, i)]).sum();
            let eigs = sym_eigenvalues(&a).unwrap();
            let sum: f64 = eigs.iter().sum();
            assert!(
                (tr - sum).abs() <= 1e-8 * n as f64 * a.max_abs().max(1.0),
                "trace {tr} vs eig sum {sum}"
            );
        }
    }

    #[test]
    fn weyl_inequality_holds() {
        for seed in 0..50u64 {
            let n = 24;
            let a = random_symmetric(n, seed);
            let b = random_symmetric(n, seed + 1000);
            let ea = sym_eigenvalues(&a).unwrap();
            let eb = sym_eigenvalues(&b).unwrap();
            let mut diff = a.clone();
            diff.add_scaled(&b, -1.0);
            let norm = spectral_norm(&diff).unwrap();
            let worst = ea
                .iter()
                .zip(&eb)
                .map(|(x, y)| (x - y).abs())
                .fold(0.0f64, f64::max);
            assert!(
                worst <= norm + 1e-10,
                "seed {seed}: max eig gap {worst} vs norm {norm}"
            );
        }
    }

    #[test]
    fn sign_convention_is_deterministic() {
        let a = KernelMatrix::new(random_symmetric(32, 9)).unwrap();
        let s1 = sym_eig(&a, 4).unwrap();
        let s2 = sym_eig(&a, 4).unwrap();
        for (u, v) in s1.top_vectors.iter().zip(&s2.top_vectors) {
            assert_eq!(u, v);
        }
        for v in &s1.top_vectors {
            let mut best = 0usize;
            for (i, x) in v.iter().enumerate() {
                if x.abs() > v[best].abs() {
                    best = i;
                }
            }
            assert!(v[best] > 0.0);
        }
    }

    #[test]
    fn align_examples() {
        let u = vec![1.0, 0.0, 0.0];
        let v = vec![0.0, 1.0, 0.0];
        assert_eq!(align(&u, &u).unwrap(), 1.0);
        assert_eq!(align(&u, &v).unwrap(), 0.0);
        let w = vec![0.6, 0.8, 0.0];
        assert!(close(align(&u, &w).unwrap(), 0.6, 1e-12));
        assert!(align(&u, &[1.0, 1.0, 0.0]).is_err()); // not unit
        assert!(align(&u, &[1.0, 0.0]).is_err()); // length mismatch
    }

    #[test]
    fn identical_spectra_have_zero_distance() {
        let a = KernelMatrix::new(random_symmetric(48, 5)).unwrap();
        let s1 = sym_eig(&a, 1).unwrap();
        let s2 = sym_eig(&a, 1).unwrap();
        assert_eq!(histogram_compare(&s1, &s2, 50).unwrap(), 0.0);
        assert_eq!(compare_histograms(&s1.histogram, &s2.histogram).unwrap(), 0.0);
    }

    #[test]
    fn mismatched_edges_error() {
        let h1 = Histogram::build(&[0.1, 0.5], 0.0, 1.0, 4);
        let h2 = Histogram::build(&[0.1, 0.5], 0.0, 2.0, 4);
        assert!(compare_histograms(&h1, &h2).is_err());
    }

    #[test]
    fn spikes_are_separated() {
        // bulk near zero plus two detached spikes
        let mut eigs: Vec<f64> = (0..100).map(|i| i as f64 / 100.0).collect();
        eigs.push(50.0);
        eigs.push(80.0);
        let (bulk, spikes) = split_spikes(&eigs, 10.0);
        assert_eq!(spikes, vec![50.0, 80.0]);
        assert_eq!(bulk.len(), 100);
    }

    #[test]
    fn lanczos_matches_dense_on_big_matrix() {
        // n just above the dense cutoff: spectral norm and top pair agree
        // with the dense solver
        let n = 1100;
        let mut a = Mat::zeros(n, n);
        // tridiagonal-ish structured matrix with a planted spike
        for i in 0..n {
            a[(i, i)] = 0.01 * (i % 7) as f64;
            if i + 1 < n {
                a[(i, i + 1)] = 0.3;
                a[(i + 1, i)] = 0.3;
            }
        }
        // planted rank-one spike u u^T * 5
        let mut rng = substream(77, &[1]);
        let mut u: Vec<f64> = (0..n).map(|_| normal(&mut rng)).collect();
        let norm = dot(&u, &u).sqrt();
        for x in u.iter_mut() {
            *x /= norm;
        }
        for i in 0..n {
            for j in 0..n {
                a[(i, j)] += 5.0 * u[i] * u[j];
            }
        }
        let norm_lanczos = spectral_norm(&a).unwrap();
        let eigs = sym_eigenvalues(&a).unwrap();
        let norm_dense = eigs[0].abs().max(eigs[n - 1].abs());
        assert!(close(norm_lanczos, norm_dense, 1e-7 * norm_dense));

        let top = top_eigenpairs(&a, 1).unwrap();
        assert!(close(top[0].0, eigs[n - 1], 1e-7 * norm_dense));
        let overlap = align(&top[0].1, &u).unwrap_or_else(|_| {
            // u is unit by construction; alignment failure means a bug
            panic!("ritz vector not unit norm")
        });
        assert!(overlap > 0.99, "spike overlap {overlap}");
    }
}
