//! Threshold calibration, ternary weight sampling, and the bit-packed
//! multiplication-free feature transform.
//!
//! Ternary values live in two bitplanes (mask = nonzero, sign = negative),
//! 2 bits per entry. The transform accumulates selected data entries with
//! additions and subtractions only; packed Gram entries reduce to popcounts
//! over joint masks. The single scaling multiply per output entry is counted
//! separately from the (multiplication-free) accumulation.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Result, TrfError};
use crate::kernels::KernelMatrix;
use crate::linalg::{dot, Mat};
use crate::moments::{moments_ternary_closed, ternary_eval, ActivationKind, GaussianMoments};
use crate::opcount::OpCounter;
use crate::rng::substream;

const STREAM_WEIGHTS: u64 = 0x10;

/// Calibrated ternary cut points and the residual of the moment match.
#[derive(Debug, Clone, Copy)]
pub struct Thresholds {
    pub s_minus: f64,
    pub s_plus: f64,
    /// Scale the calibration ran at.
    pub tau: f64,
    /// The (d1, d2) pair that was matched.
    pub target: (f64, f64),
    /// max over components of |achieved - target| / max(|target|, 1e-3).
    pub residual: f64,
}

impl Thresholds {
    pub fn moments(&self) -> Result<GaussianMoments> {
        moments_ternary_closed(self.s_minus, self.s_plus, self.tau)
    }
}

/// I.i.d. ternary weight ensemble: 0 w.p. epsilon, +/-(1-eps)^(-1/2)
/// otherwise, so every entry has unit variance.
#[derive(Debug, Clone, Copy)]
pub struct TernaryWeightSpec {
    pub m: usize,
    pub p: usize,
    pub epsilon: f64,
    pub seed: u64,
}

/// Two-bitplane ternary matrix. Rows are padded to 64-bit word boundaries;
/// a sign bit may be set only where the mask bit is set.
#[derive(Debug, Clone, PartialEq)]
pub struct PackedTernaryMatrix {
    rows: usize,
    cols: usize,
    words_per_row: usize,
    mask_plane: Vec<u64>,
    sign_plane: Vec<u64>,
    scale: f64,
}

pub const PACKED_MAGIC: &[u8; 4] = b"TRF1";
/// magic + u32 rows + u32 cols + f64 scale
pub const PACKED_HEADER_BYTES: usize = 4 + 4 + 4 + 8;

impl PackedTernaryMatrix {
    pub fn zeros(rows: usize, cols: usize, scale: f64) -> PackedTernaryMatrix {
        let words_per_row = cols.div_ceil(64);
        PackedTernaryMatrix {
            rows,
            cols,
            words_per_row,
            mask_plane: vec![0; rows * words_per_row],
            sign_plane: vec![0; rows * words_per_row],
            scale,
        }
    }

    pub fn rows(&self) -> usize {
        self.rows
    }

    pub fn cols(&self) -> usize {
        self.cols
    }

    pub fn scale(&self) -> f64 {
        self.scale
    }

    pub fn words_per_row(&self) -> usize {
        self.words_per_row
    }

    pub fn mask_row(&self, i: usize) -> &[u64] {
        &self.mask_plane[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    pub fn sign_row(&self, i: usize) -> &[u64] {
        &self.sign_plane[i * self.words_per_row..(i + 1) * self.words_per_row]
    }

    /// Ternary code of entry (i, j): -1, 0 or +1 (pre-scale).
    pub fn code(&self, i: usize, j: usize) -> i8 {
        let w = i * self.words_per_row + j / 64;
        let bit = 1u64 << (j % 64);
        if self.mask_plane[w] & bit == 0 {
            0
        } else if self.sign_plane[w] & bit != 0 {
            -1
        } else {
            1
        }
    }

    /// Value of entry (i, j) including the scale.
    pub fn get(&self, i: usize, j: usize) -> f64 {
        self.code(i, j) as f64 * self.scale
    }

    pub fn set_code(&mut self, i: usize, j: usize, code: i8) {
        let w = i * self.words_per_row + j / 64;
        let bit = 1u64 << (j % 64);
        match code {
            0 => {
                self.mask_plane[w] &= !bit;
                self.sign_plane[w] &= !bit;
            }
            1 => {
                self.mask_plane[w] |= bit;
                self.sign_plane[w] &= !bit;
            }
            -1 => {
                self.mask_plane[w] |= bit;
                self.sign_plane[w] |= bit;
            }
            other => panic!("ternary code must be -1, 0 or 1, got {other}"),
        }
    }

    pub fn nonzero_count(&self) -> u64 {
        self.mask_plane.iter().map(|w| w.count_ones() as u64).sum()
    }

    pub fn to_dense(&self) -> Mat {
        Mat::from_fn(self.rows, self.cols, |i, j| self.get(i, j))
    }

    pub fn from_dense_codes(m: &Mat, scale: f64) -> Result<PackedTernaryMatrix> {
        let mut out = PackedTernaryMatrix::zeros(m.rows(), m.cols(), scale);
        for i in 0..m.rows() {
            for j in 0..m.cols() {
                let v = m[(i, j)];
                let code = if v == 0.0 {
                    0
                } else if v == 1.0 {
                    1
                } else if v == -1.0 {
                    -1
                } else {
                    return Err(TrfError::invalid(format!(
                        "entry ({i},{j}) = {v} is not a ternary code"
                    )));
                };
                out.set_code(i, j, code);
            }
        }
        Ok(out)
    }

    /// Serialized size: header plus two word-aligned bitplanes.
    pub fn packed_bytes(&self) -> usize {
        PACKED_HEADER_BYTES + 2 * self.rows * self.words_per_row * 8
    }

    pub fn write_to<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(PACKED_MAGIC)?;
        w.write_all(&(self.rows as u32).to_le_bytes())?;
        w.write_all(&(self.cols as u32).to_le_bytes())?;
        w.write_all(&self.scale.to_le_bytes())?;
        for word in &self.mask_plane {
            w.write_all(&word.to_le_bytes())?;
        }
        for word in &self.sign_plane {
            w.write_all(&word.to_le_bytes())?;
        }
        Ok(())
    }

    pub fn read_from<R: std::io::Read>(mut r: R) -> Result<PackedTernaryMatrix> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != PACKED_MAGIC {
            return Err(TrfError::Parse {
                row: None,
                message: format!("bad magic {magic:?}, expected {PACKED_MAGIC:?}"),
            });
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let rows = u32::from_le_bytes(b4) as usize;
        r.read_exact(&mut b4)?;
        let cols = u32::from_le_bytes(b4) as usize;
        let mut b8 = [0u8; 8];
        r.read_exact(&mut b8)?;
        let scale = f64::from_le_bytes(b8);
        let mut out = PackedTernaryMatrix::zeros(rows, cols, scale);
        for word in out.mask_plane.iter_mut() {
            r.read_exact(&mut b8)?;
            *word = u64::from_le_bytes(b8);
        }
        for word in out.sign_plane.iter_mut() {
            r.read_exact(&mut b8)?;
            *word = u64::from_le_bytes(b8);
        }
        for (m, s) in out.mask_plane.iter().zip(&out.sign_plane) {
            if s & !m != 0 {
                return Err(TrfError::Parse {
                    row: None,
                    message: "sign plane has bits outside the mask plane".into(),
                });
            }
        }
        Ok(out)
    }
}

/// Random features, either dense reals or packed ternary codes.
/// `directions` is the number of random projection vectors behind the rows
/// (the [cos, sin] pair emits two rows per direction), which is the Gram
/// normalization.
#[derive(Debug, Clone)]
pub enum FeatureMatrix {
    Dense { data: Mat, directions: usize },
    PackedTernary {
        data: PackedTernaryMatrix,
        directions: usize,
    },
}

impl FeatureMatrix {
    pub fn rows(&self) -> usize {
        match self {
            FeatureMatrix::Dense { data, .. } => data.rows(),
            FeatureMatrix::PackedTernary { data, .. } => data.rows(),
        }
    }

    pub fn n(&self) -> usize {
        match self {
            FeatureMatrix::Dense { data, .. } => data.cols(),
            FeatureMatrix::PackedTernary { data, .. } => data.cols(),
        }
    }

    pub fn directions(&self) -> usize {
        match self {
            FeatureMatrix::Dense { directions, .. }
            | FeatureMatrix::PackedTernary { directions, .. } => *directions,
        }
    }

    /// Actual storage footprint in bits.
    pub fn storage_bits(&self) -> u64 {
        match self {
            FeatureMatrix::Dense { data, .. } => 64 * (data.rows() * data.cols()) as u64,
            FeatureMatrix::PackedTernary { data, .. } => 8 * data.packed_bytes() as u64,
        }
    }

    pub fn to_dense(&self) -> Mat {
        match self {
            FeatureMatrix::Dense { data, .. } => data.clone(),
            FeatureMatrix::PackedTernary { data, .. } => data.to_dense(),
        }
    }
}

// ---------------------------------------------------------------------------
// Threshold calibration
// ---------------------------------------------------------------------------

/// Residual floor: zero targets are scored absolutely.
const TARGET_FLOOR: f64 = 1e-3;
const SOLVE_TOL: f64 = 1e-8;

fn residual_components(s_minus: f64, s_plus: f64, tau: f64, t1: f64, t2: f64) -> (f64, f64) {
    // the moment map is symmetric in its two arguments, so evaluate on the
    // ordered pair
    let (lo, hi) = if s_minus <= s_plus {
        (s_minus, s_plus)
    } else {
        (s_plus, s_minus)
    };
    let m = moments_ternary_closed(lo, hi, tau).expect("ordered thresholds");
    (
        (m.d1 - t1) / t1.abs().max(TARGET_FLOOR),
        (m.d2 - t2) / t2.abs().max(TARGET_FLOOR),
    )
}

/// Largest d1 the ternary activation can reach at this tau (at s- = s+ = 0).
pub fn ternary_d1_ceiling(tau: f64) -> f64 {
    2.0 / (std::f64::consts::PI * tau)
}

/// Largest d2 the ternary activation can reach at this tau (thresholds at
/// +/- sqrt(tau)).
pub fn ternary_d2_ceiling(tau: f64) -> f64 {
    let phi1 = crate::moments::std_normal_pdf(1.0);
    phi1 * phi1 / (tau * tau)
}

/// Least-squares threshold calibration: Levenberg-Marquardt with four
/// multistarts per box, the box doubling from [-1, 1]^2 up to `search_cap`.
/// Returns the best thresholds found regardless of fit quality; see
/// [`solve_thresholds`] for the checked variant.
///
/// The achievable set is bounded: d1 cannot exceed [`ternary_d1_ceiling`],
/// d2 cannot exceed [`ternary_d2_ceiling`], and d2 > 0 forces d1 > 0. For a
/// target outside the set, a second weighted pass pins d1 exactly (the
/// dominant spectral term) and takes the closest reachable d2, recording the
/// leftover mismatch in `residual`.
pub fn calibrate_thresholds_best_effort(
    target_d1: f64,
    target_d2: f64,
    tau: f64,
    search_cap: f64,
) -> Result<Thresholds> {
    if !(tau > 0.0) {
        return Err(TrfError::invalid(format!("tau must be positive, got {tau}")));
    }
    if !(target_d1 > 0.0 || target_d2 > 0.0) {
        return Err(TrfError::invalid(
            "at least one of the (d1, d2) targets must be positive",
        ));
    }

    let residual_of = |s: &[f64; 2]| -> (f64, f64) {
        residual_components(s[0], s[1], tau, target_d1, target_d2)
    };
    let score = |s: &[f64; 2]| -> f64 {
        let (r1, r2) = residual_of(s);
        r1.abs().max(r2.abs())
    };

    let mut best: Option<([f64; 2], f64)> = None;
    let consider = |cand: [f64; 2], best: &mut Option<([f64; 2], f64)>| {
        let r = score(&cand);
        let sum = cand[0].abs() + cand[1].abs();
        let better = match best {
            None => true,
            Some((b, br)) => {
                let bsum = b[0].abs() + b[1].abs();
                if r <= SOLVE_TOL && *br <= SOLVE_TOL {
                    // both solve the system: prefer the smaller thresholds
                    sum < bsum - 1e-12
                } else {
                    r < *br
                }
            }
        };
        if better {
            *best = Some((cand, r));
        }
    };

    let seeds_for = |box_half: f64| {
        [
            [-box_half / 2.0, box_half / 2.0],
            [-3.0 * box_half / 4.0, box_half / 4.0],
            [box_half / 4.0, 3.0 * box_half / 4.0],
            [0.0, 0.0],
        ]
    };

    let mut box_half = 1.0f64;
    while box_half <= search_cap {
        for seed in seeds_for(box_half) {
            let refined = levenberg_marquardt(seed, &residual_of);
            consider(refined, &mut best);
        }
        if matches!(best, Some((_, r)) if r <= SOLVE_TOL) {
            break;
        }
        box_half *= 2.0;
    }

    let (mut s, mut residual) = best.expect("at least one start ran");
    if residual > SOLVE_TOL {
        // unreachable target: re-solve with d1 weighted heavily so the
        // compromise lands on the d1-exact manifold with d2 as close as the
        // ceiling allows
        let weighted = |s: &[f64; 2]| -> (f64, f64) {
            let (r1, r2) = residual_of(s);
            (1e4 * r1, r2)
        };
        let mut stage2: Option<([f64; 2], (f64, f64))> = None;
        let mut box_half = 1.0f64;
        while box_half <= search_cap.max(8.0).min(64.0) {
            for seed in seeds_for(box_half).into_iter().chain([s]) {
                let cand = levenberg_marquardt(seed, &weighted);
                let (r1, r2) = residual_of(&cand);
                let better = match &stage2 {
                    None => true,
                    Some((_, (b1, b2))) => {
                        let cand_d1_ok = r1.abs() <= 1e-7;
                        let best_d1_ok = b1.abs() <= 1e-7;
                        match (cand_d1_ok, best_d1_ok) {
                            (true, false) => true,
                            (false, true) => false,
                            _ => (r1.abs().max(r2.abs())) < b1.abs().max(*b2).max(b2.abs()),
                        }
                    }
                };
                if better {
                    stage2 = Some((cand, (r1, r2)));
                }
            }
            box_half *= 2.0;
        }
        if let Some((cand, (r1, r2))) = stage2 {
            if r1.abs().max(r2.abs()) < residual || r1.abs() <= 1e-7 {
                s = cand;
                residual = r1.abs().max(r2.abs());
            }
        }
    }
    let (s_minus, s_plus) = if s[0] <= s[1] { (s[0], s[1]) } else { (s[1], s[0]) };
    Ok(Thresholds {
        s_minus,
        s_plus,
        tau,
        target: (target_d1, target_d2),
        residual,
    })
}

/// Threshold calibration with the residual contract enforced: errors when no
/// thresholds reproduce the targets to 1e-8 within the search cap.
pub fn solve_thresholds(
    target_d1: f64,
    target_d2: f64,
    tau: f64,
    search_cap: f64,
) -> Result<Thresholds> {
    let thr = calibrate_thresholds_best_effort(target_d1, target_d2, tau, search_cap)?;
    if thr.residual > SOLVE_TOL {
        return Err(TrfError::Calibration {
            best_residual: thr.residual,
            search_box: search_cap,
        });
    }
    Ok(thr)
}

/// Thresholds matching the (d1, d2) of a named activation at this tau.
pub fn solve_thresholds_for(kind: &ActivationKind, tau: f64, search_cap: f64) -> Result<Thresholds> {
    let m = crate::moments::moments_closed_form(kind, tau)?;
    solve_thresholds(m.d1, m.d2, tau, search_cap)
}

fn levenberg_marquardt(start: [f64; 2], residual: &dyn Fn(&[f64; 2]) -> (f64, f64)) -> [f64; 2] {
    let mut s = start;
    let mut lambda = 1e-3;
    let f = |s: &[f64; 2]| {
        let (r1, r2) = residual(s);
        [r1, r2]
    };
    let mut r = f(&s);
    let mut cost = r[0] * r[0] + r[1] * r[1];
    for _ in 0..200 {
        if cost.sqrt() < 1e-12 {
            break;
        }
        // central-difference Jacobian
        let mut j = [[0.0f64; 2]; 2];
        for col in 0..2 {
            let h = 1e-6 * (1.0 + s[col].abs());
            let mut sp = s;
            sp[col] += h;
            let mut sm = s;
            sm[col] -= h;
            let rp = f(&sp);
            let rm = f(&sm);
            for row in 0..2 {
                j[row][col] = (rp[row] - rm[row]) / (2.0 * h);
            }
        }
        // normal equations with damping
        let jtj = [
            [
                j[0][0] * j[0][0] + j[1][0] * j[1][0],
                j[0][0] * j[0][1] + j[1][0] * j[1][1],
            ],
            [
                j[0][1] * j[0][0] + j[1][1] * j[1][0],
                j[0][1] * j[0][1] + j[1][1] * j[1][1],
            ],
        ];
        let jtr = [
            j[0][0] * r[0] + j[1][0] * r[1],
            j[0][1] * r[0] + j[1][1] * r[1],
        ];
        let mut improved = false;
        for _ in 0..12 {
            let a = [
                [jtj[0][0] + lambda * (1.0 + jtj[0][0]), jtj[0][1]],
                [jtj[1][0], jtj[1][1] + lambda * (1.0 + jtj[1][1])],
            ];
            let det = a[0][0] * a[1][1] - a[0][1] * a[1][0];
            if det.abs() < 1e-300 {
                lambda *= 10.0;
                continue;
            }
            let step = [
                (-jtr[0] * a[1][1] + jtr[1] * a[0][1]) / det,
                (jtr[0] * a[1][0] - jtr[1] * a[0][0]) / det,
            ];
            let cand = [s[0] + step[0], s[1] + step[1]];
            let rc = f(&cand);
            let cc = rc[0] * rc[0] + rc[1] * rc[1];
            if cc < cost {
                s = cand;
                r = rc;
                cost = cc;
                lambda = (lambda * 0.3).max(1e-12);
                improved = true;
                break;
            }
            lambda *= 10.0;
        }
        if !improved {
            break;
        }
    }
    s
}

// ---------------------------------------------------------------------------
// Weight sampling and transforms
// ---------------------------------------------------------------------------

/// Draw the packed ternary projection matrix: entries 0 w.p. eps and
/// +/-(1-eps)^(-1/2) w.p. (1-eps)/2 each, one substream per row.
pub fn sample_ternary_weights(spec: &TernaryWeightSpec) -> Result<PackedTernaryMatrix> {
    if !(0.0..1.0).contains(&spec.epsilon) {
        return Err(TrfError::invalid(format!(
            "epsilon must lie in [0, 1), got {}",
            spec.epsilon
        )));
    }
    let scale = (1.0 - spec.epsilon).powf(-0.5);
    let mut out = PackedTernaryMatrix::zeros(spec.m, spec.p, scale);
    let wpr = out.words_per_row;
    let cols = spec.p;
    let eps = spec.epsilon;
    let seed = spec.seed;
    let half = eps + (1.0 - eps) / 2.0;
    let (mask_plane, sign_plane) = (&mut out.mask_plane, &mut out.sign_plane);
    mask_plane
        .par_chunks_mut(wpr)
        .zip(sign_plane.par_chunks_mut(wpr))
        .enumerate()
        .for_each(|(row, (mask_row, sign_row))| {
            let mut rng = substream(seed, &[STREAM_WEIGHTS, row as u64]);
            for j in 0..cols {
                let u: f64 = rand::Rng::gen(&mut rng);
                if u < eps {
                    continue;
                }
                let word = j / 64;
                let bit = 1u64 << (j % 64);
                mask_row[word] |= bit;
                if u >= half {
                    sign_row[word] |= bit;
                }
            }
        });
    Ok(out)
}

/// Per-row nonzero coordinates split by sign, the gather lists driving the
/// multiplication-free accumulation.
fn row_index_lists(w: &PackedTernaryMatrix, row: usize) -> (Vec<u32>, Vec<u32>) {
    let mut pos = Vec::new();
    let mut neg = Vec::new();
    let mask = w.mask_row(row);
    let sign = w.sign_row(row);
    for (wi, (&m, &s)) in mask.iter().zip(sign.iter()).enumerate() {
        let mut bits = m;
        while bits != 0 {
            let tz = bits.trailing_zeros();
            let j = (wi * 64 + tz as usize) as u32;
            if s >> tz & 1 == 1 {
                neg.push(j);
            } else {
                pos.push(j);
            }
            bits &= bits - 1;
        }
    }
    (pos, neg)
}

/// sigma_ter(W_ter X): accumulate selected data entries (additions and
/// subtractions only), scale once per output entry, threshold, and emit
/// packed ternary features with scale 1.
pub fn ternary_transform(
    w: &PackedTernaryMatrix,
    x: &Dataset,
    thr: &Thresholds,
    ops: &OpCounter,
) -> Result<FeatureMatrix> {
    if w.cols() != x.p() {
        return Err(TrfError::dims(format!(
            "weights have {} columns, data has dimension {}",
            w.cols(),
            x.p()
        )));
    }
    let m = w.rows();
    let n = x.n();
    let xt = x.x.transpose(); // n x p, samples contiguous
    let scale = w.scale();
    let (s_minus, s_plus) = (thr.s_minus, thr.s_plus);

    let mut out = PackedTernaryMatrix::zeros(m, n, 1.0);
    let wpr_out = out.words_per_row;
    let (mask_plane, sign_plane) = (&mut out.mask_plane, &mut out.sign_plane);
    mask_plane
        .par_chunks_mut(wpr_out)
        .zip(sign_plane.par_chunks_mut(wpr_out))
        .enumerate()
        .for_each(|(k, (mask_row, sign_row))| {
            let (pos, neg) = row_index_lists(w, k);
            for i in 0..n {
                let sample = xt.row(i);
                let mut acc = 0.0f64;
                for &j in &pos {
                    acc += sample[j as usize];
                }
                for &j in &neg {
                    acc -= sample[j as usize];
                }
                let code = ternary_eval(scale * acc, s_minus, s_plus);
                if code != 0.0 {
                    let word = i / 64;
                    let bit = 1u64 << (i % 64);
                    mask_row[word] |= bit;
                    if code < 0.0 {
                        sign_row[word] |= bit;
                    }
                }
            }
            ops.add_additions((pos.len() + neg.len()) as u64 * n as u64);
            ops.add_scale_multiplies(n as u64);
        });

    Ok(FeatureMatrix::PackedTernary {
        data: out,
        directions: m,
    })
}

/// sigma(W X) for dense weights. The [cos, sin] pair produces 2m rows (cos
/// block stacked on the sin block); every other kind produces m rows.
pub fn dense_transform(w: &Mat, x: &Dataset, kind: &ActivationKind) -> Result<FeatureMatrix> {
    if w.cols() != x.p() {
        return Err(TrfError::dims(format!(
            "weights have {} columns, data has dimension {}",
            w.cols(),
            x.p()
        )));
    }
    let m = w.rows();
    let n = x.n();
    let xt = x.x.transpose();
    if matches!(kind, ActivationKind::RffPair) {
        // cos block in rows 0..m, sin block in rows m..2m
        let mut data = Mat::zeros(2 * m, n);
        let (cos_block, sin_block) = data.data_mut().split_at_mut(m * n);
        cos_block
            .par_chunks_mut(n)
            .zip(sin_block.par_chunks_mut(n))
            .enumerate()
            .for_each(|(k, (cos_row, sin_row))| {
                let wrow = w.row(k);
                for i in 0..n {
                    let t = dot(wrow, xt.row(i));
                    cos_row[i] = t.cos();
                    sin_row[i] = t.sin();
                }
            });
        return Ok(FeatureMatrix::Dense {
            data,
            directions: m,
        });
    }
    let mut data = Mat::zeros(m, n);
    data.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(k, row)| {
            let wrow = w.row(k);
            for i in 0..n {
                row[i] = kind.eval(dot(wrow, xt.row(i)));
            }
        });
    Ok(FeatureMatrix::Dense {
        data,
        directions: m,
    })
}

/// Multiply the packed weight matrix into dense data without applying any
/// activation: the multiplication-free accumulation path shared with
/// [`ternary_transform`], returning scale * (sum of selected entries).
pub fn packed_matmul_dense(
    w: &PackedTernaryMatrix,
    x: &Dataset,
    ops: &OpCounter,
) -> Result<Mat> {
    if w.cols() != x.p() {
        return Err(TrfError::dims("packed matmul shape"));
    }
    let m = w.rows();
    let n = x.n();
    let xt = x.x.transpose();
    let scale = w.scale();
    let mut out = Mat::zeros(m, n);
    out.data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(k, row)| {
            let (pos, neg) = row_index_lists(w, k);
            for i in 0..n {
                let sample = xt.row(i);
                let mut acc = 0.0f64;
                for &j in &pos {
                    acc += sample[j as usize];
                }
                for &j in &neg {
                    acc -= sample[j as usize];
                }
                row[i] = scale * acc;
            }
            ops.add_additions((pos.len() + neg.len()) as u64 * n as u64);
            ops.add_scale_multiplies(n as u64);
        });
    Ok(out)
}

/// Gram matrix G = Sigma^T Sigma / directions. Packed features reduce each
/// entry to popcounts (sign agreements minus disagreements over the joint
/// mask); the only multiplication is the final scaling per entry.
pub fn gram(features: &FeatureMatrix, ops: &OpCounter) -> Result<KernelMatrix> {
    let n = features.n();
    match features {
        FeatureMatrix::Dense { data, directions } => {
            let mut g = crate::linalg::at_a(data);
            g.scale(1.0 / *directions as f64);
            KernelMatrix::new(g)
        }
        FeatureMatrix::PackedTernary { data, directions } => {
            // repack by columns so Gram entries scan contiguous words
            let t = packed_transpose(data);
            let wpr = t.words_per_row();
            let mut g = Mat::zeros(n, n);
            let inv = data.scale() * data.scale() / *directions as f64;
            g.data_mut()
                .par_chunks_mut(n)
                .enumerate()
                .for_each(|(i, grow)| {
                    let mi = t.mask_row(i);
                    let si = t.sign_row(i);
                    let mut adds = 0u64;
                    for j in i..n {
                        let mj = t.mask_row(j);
                        let sj = t.sign_row(j);
                        let mut agree: i64 = 0;
                        let mut differ: i64 = 0;
                        for w in 0..wpr {
                            let both = mi[w] & mj[w];
                            let flip = si[w] ^ sj[w];
                            agree += (both & !flip).count_ones() as i64;
                            differ += (both & flip).count_ones() as i64;
                        }
                        grow[j] = (agree - differ) as f64 * inv;
                        adds += 2 * wpr as u64;
                    }
                    ops.add_additions(adds);
                    ops.add_scale_multiplies((n - i) as u64);
                });
            let mut g = g;
            for i in 0..n {
                for j in 0..i {
                    g[(i, j)] = g[(j, i)];
                }
            }
            KernelMatrix::new(g)
        }
    }
}

fn packed_transpose(a: &PackedTernaryMatrix) -> PackedTernaryMatrix {
    let mut t = PackedTernaryMatrix::zeros(a.cols(), a.rows(), a.scale());
    for i in 0..a.rows() {
        let mask = a.mask_row(i);
        let sign = a.sign_row(i);
        for (wi, &m) in mask.iter().enumerate() {
            let mut bits = m;
            while bits != 0 {
                let tz = bits.trailing_zeros() as usize;
                let j = wi * 64 + tz;
                let code = if sign[wi] >> tz & 1 == 1 { -1 } else { 1 };
                t.set_code(j, i, code);
                bits &= bits - 1;
            }
        }
    }
    t
}
