//! The structured asymptotic model of a centered random-features kernel on
//! mixture data,
//!
//! ```text
//!   K~ = P ( d1 (Z + M J^T/sqrt(p))^T (Z + M J^T/sqrt(p))
//!          + d2 V A V^T + d0 I ) P,
//!   V = [J/sqrt(p), phi],   A = [[t t^T + 2 T, t], [t^T, 1]]
//! ```
//!
//! plus the spectral-gap report against an expected kernel and the
//! lambda-shifted comparison between two kernels that differ only in d0.

use crate::data::GmmStats;
use crate::error::{Result, TrfError};
use crate::kernels::{center, KernelMatrix};
use crate::linalg::{at_a, dot, matmul, Mat};
use crate::moments::GaussianMoments;
use crate::spectral::{spectral_norm, sym_eigenvalues};

/// The materialized model: the three centered addends are retained
/// separately, and their sum is the model matrix.
#[derive(Debug, Clone)]
pub struct EquivalentModel {
    pub d: GaussianMoments,
    pub ktilde: KernelMatrix,
    /// P (d1 B^T B) P with B = Z + M J^T / sqrt(p).
    pub part_linear: KernelMatrix,
    /// P (d2 V A V^T) P.
    pub part_structured: KernelMatrix,
    /// d0 P.
    pub part_shift: KernelMatrix,
    /// n x (K+1).
    pub v: Mat,
    /// (K+1) x (K+1), symmetric.
    pub a: Mat,
}

/// Build the model from synthetic-draw statistics; file-origin data (no Z,
/// no phi) cannot feed it.
pub fn build_equivalent(stats: &GmmStats, d: GaussianMoments) -> Result<EquivalentModel> {
    let z = stats.z.as_ref().ok_or_else(|| {
        TrfError::Unsupported("equivalent model needs the noise matrix Z (synthetic draws only)".into())
    })?;
    let phi = stats.phi.as_ref().ok_or_else(|| {
        TrfError::Unsupported("equivalent model needs phi (synthetic draws only)".into())
    })?;
    let n = stats.n();
    let k = stats.k();
    let p = stats.m.rows();
    if z.cols() != n || phi.len() != n {
        return Err(TrfError::dims("stats Z/phi do not match n"));
    }
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();

    // B = Z + M J^T / sqrt(p): add the class mean to every column
    let mut b = z.clone();
    for i in 0..n {
        let class = (0..k)
            .find(|&a| stats.j[(i, a)] == 1.0)
            .expect("one-hot membership row");
        for r in 0..p {
            b[(r, i)] += stats.m[(r, class)] * inv_sqrt_p;
        }
    }
    let mut linear = at_a(&b);
    linear.scale(d.d1);

    // V = [J/sqrt(p), phi]
    let v = Mat::from_fn(n, k + 1, |i, c| {
        if c < k {
            stats.j[(i, c)] * inv_sqrt_p
        } else {
            phi[i]
        }
    });
    // A = [[t t^T + 2 T, t], [t^T, 1]]
    let a = Mat::from_fn(k + 1, k + 1, |r, c| match (r < k, c < k) {
        (true, true) => stats.t[r] * stats.t[c] + 2.0 * stats.t_cross[(r, c)],
        (true, false) => stats.t[r],
        (false, true) => stats.t[c],
        (false, false) => 1.0,
    });
    // V A V^T, mirrored for exact symmetry
    let w = matmul(&v, &a);
    let mut structured = Mat::zeros(n, n);
    for i in 0..n {
        for j in i..n {
            let val = d.d2 * dot(w.row(i), v.row(j));
            structured[(i, j)] = val;
            structured[(j, i)] = val;
        }
    }

    let mut shift = Mat::identity(n);
    shift.scale(d.d0);

    let part_linear = center(&KernelMatrix::new(linear)?);
    let part_structured = center(&KernelMatrix::new(structured)?);
    let part_shift = center(&KernelMatrix::new(shift)?);

    let mut total = part_linear.values.clone();
    total.add_scaled(&part_structured.values, 1.0);
    total.add_scaled(&part_shift.values, 1.0);
    let ktilde = KernelMatrix {
        values: total,
        centered: true,
    };

    Ok(EquivalentModel {
        d,
        ktilde,
        part_linear,
        part_structured,
        part_shift,
        v,
        a,
    })
}

/// Spectral, relative and Frobenius distances between a centered kernel and
/// the model.
#[derive(Debug, Clone, Copy)]
pub struct GapReport {
    pub spectral_gap: f64,
    pub model_norm: f64,
    pub relative_gap: f64,
    pub frobenius_gap: f64,
}

pub fn equivalence_gap(k: &KernelMatrix, model: &EquivalentModel) -> Result<GapReport> {
    if k.n() != model.ktilde.n() {
        return Err(TrfError::dims(format!(
            "kernel is {}x{0}, model {1}x{1}",
            k.n(),
            model.ktilde.n()
        )));
    }
    if !k.centered {
        return Err(TrfError::invalid(
            "equivalence gap is defined for the centered kernel; call center() first",
        ));
    }
    let mut diff = k.values.clone();
    diff.add_scaled(&model.ktilde.values, -1.0);
    let spectral_gap = spectral_norm(&diff)?;
    let model_norm = spectral_norm(&model.ktilde.values)?;
    let frobenius_gap = diff.frobenius();
    Ok(GapReport {
        spectral_gap,
        model_norm,
        relative_gap: spectral_gap / model_norm,
        frobenius_gap,
    })
}

/// The lambda-shifted comparison ||Ka - Kb - lambda P|| between two centered
/// kernels whose models differ only in d0.
#[derive(Debug, Clone, Copy)]
pub struct ShiftReport {
    /// d0a - d0b, the model-predicted shift.
    pub lambda: f64,
    pub shifted_gap: f64,
    pub shifted_relative: f64,
    pub unshifted_gap: f64,
    pub unshifted_relative: f64,
    /// argmin over lambda of the spectral gap (scan + golden section).
    pub lambda_star: f64,
    pub gap_at_lambda_star: f64,
}

pub fn corollary_shift(
    ka: &KernelMatrix,
    kb: &KernelMatrix,
    d0a: f64,
    d0b: f64,
) -> Result<ShiftReport> {
    if ka.n() != kb.n() {
        return Err(TrfError::dims("kernel sizes differ"));
    }
    if !ka.centered || !kb.centered {
        return Err(TrfError::invalid("both kernels must be centered"));
    }
    let n = ka.n();
    let mut diff = ka.values.clone();
    diff.add_scaled(&kb.values, -1.0);

    // Spectrum of the difference. Both kernels annihilate the all-ones
    // direction, so the difference has one structural zero eigenvalue that
    // the shift must not touch; drop the eigenvalue closest to zero.
    let eigs = sym_eigenvalues(&diff)?;
    let mut drop_idx = 0usize;
    for (i, v) in eigs.iter().enumerate() {
        if v.abs() < eigs[drop_idx].abs() {
            drop_idx = i;
        }
    }
    let kept: Vec<f64> = eigs
        .iter()
        .enumerate()
        .filter(|(i, _)| *i != drop_idx)
        .map(|(_, v)| *v)
        .collect();
    let gap_at = |lambda: f64| -> f64 {
        kept.iter()
            .map(|mu| (mu - lambda).abs())
            .fold(0.0f64, f64::max)
    };

    let lambda = d0a - d0b;
    let shifted_gap = gap_at(lambda);
    let unshifted_gap = gap_at(0.0);
    let ka_norm = spectral_norm(&ka.values)?;

    // coarse scan then golden-section refinement
    let lo0 = kept.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi0 = kept.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let mut best_l = lo0;
    let mut best_g = gap_at(lo0);
    let scan = 64;
    for i in 0..=scan {
        let l = lo0 + (hi0 - lo0) * i as f64 / scan as f64;
        let g = gap_at(l);
        if g < best_g {
            best_g = g;
            best_l = l;
        }
    }
    let step = (hi0 - lo0) / scan as f64;
    let (mut lo, mut hi) = (best_l - step, best_l + step);
    let inv_phi = 0.618_033_988_749_894_9_f64;
    let mut x1 = hi - inv_phi * (hi - lo);
    let mut x2 = lo + inv_phi * (hi - lo);
    let mut f1 = gap_at(x1);
    let mut f2 = gap_at(x2);
    for _ in 0..80 {
        if f1 < f2 {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - inv_phi * (hi - lo);
            f1 = gap_at(x1);
        } else {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + inv_phi * (hi - lo);
            f2 = gap_at(x2);
        }
    }
    let lambda_star = 0.5 * (lo + hi);
    let gap_at_lambda_star = gap_at(lambda_star);
    let _ = n;

    Ok(ShiftReport {
        lambda,
        shifted_gap,
        shifted_relative: shifted_gap / ka_norm,
        unshifted_gap,
        unshifted_relative: unshifted_gap / ka_norm,
        lambda_star,
        gap_at_lambda_star,
    })
}
