//! Expected kernels kappa(x_i, x_j) = E_w[sigma(w^T x_i) sigma(w^T x_j)]:
//! closed forms for the classical cases, a bivariate-normal orthant closed
//! form for the ternary kernel, a Monte Carlo fallback for everything else,
//! and the two-sided centering map.

use rayon::prelude::*;

use crate::data::Dataset;
use crate::error::{Result, TrfError};
use crate::linalg::{at_a, Mat};
use crate::moments::{std_normal_cdf, ActivationKind};
use crate::rng::{substream, WeightLaw};
use crate::ternary::Thresholds;

const STREAM_MC: u64 = 0x20;

/// Dense symmetric kernel matrix.
#[derive(Debug, Clone)]
pub struct KernelMatrix {
    pub values: Mat,
    pub centered: bool,
}

pub const KERNEL_MAGIC: &[u8; 4] = b"KMX1";

impl KernelMatrix {
    /// Wrap a symmetric matrix (tolerance 1e-12 relative to the largest
    /// entry).
    pub fn new(values: Mat) -> Result<KernelMatrix> {
        if values.rows() != values.cols() {
            return Err(TrfError::dims(format!(
                "kernel matrix must be square, got {}x{}",
                values.rows(),
                values.cols()
            )));
        }
        let asym = values.asymmetry();
        if asym > 1e-12 * values.max_abs().max(1.0) {
            return Err(TrfError::NotSymmetric(asym));
        }
        Ok(KernelMatrix {
            values,
            centered: false,
        })
    }

    pub fn n(&self) -> usize {
        self.values.rows()
    }

    /// Serialize: magic, u32 n, f64 upper-triangle entries row-major.
    pub fn write_kmx<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        w.write_all(KERNEL_MAGIC)?;
        w.write_all(&(self.n() as u32).to_le_bytes())?;
        for i in 0..self.n() {
            for j in i..self.n() {
                w.write_all(&self.values[(i, j)].to_le_bytes())?;
            }
        }
        Ok(())
    }

    pub fn read_kmx<R: std::io::Read>(mut r: R) -> Result<KernelMatrix> {
        let mut magic = [0u8; 4];
        r.read_exact(&mut magic)?;
        if &magic != KERNEL_MAGIC {
            return Err(TrfError::Parse {
                row: None,
                message: format!("bad magic {magic:?}, expected {KERNEL_MAGIC:?}"),
            });
        }
        let mut b4 = [0u8; 4];
        r.read_exact(&mut b4)?;
        let n = u32::from_le_bytes(b4) as usize;
        let mut values = Mat::zeros(n, n);
        let mut b8 = [0u8; 8];
        for i in 0..n {
            for j in i..n {
                r.read_exact(&mut b8)?;
                let v = f64::from_le_bytes(b8);
                values[(i, j)] = v;
                values[(j, i)] = v;
            }
        }
        KernelMatrix::new(values)
    }

    pub fn write_csv<W: std::io::Write>(&self, mut w: W) -> Result<()> {
        for i in 0..self.n() {
            let row = self.values.row(i);
            let line: Vec<String> = row.iter().map(|v| format!("{v}")).collect();
            writeln!(w, "{}", line.join(","))?;
        }
        Ok(())
    }
}

/// Which expected kernel to evaluate.
#[derive(Debug, Clone)]
pub enum KernelKind {
    /// Limiting kernel of the [cos, sin] pair under Gaussian weights:
    /// exp(-||x - y||^2 / 2).
    GaussianRff,
    /// Zeroth-order arc-cosine kernel, sigma(x) = (1 + sign(x))/2.
    ArcCos0,
    /// First-order arc-cosine kernel, sigma = ReLU, Gaussian weights.
    ArcCos1,
    /// Ternary activation kernel in the Gaussian-projection limit.
    TernaryExpected(Thresholds),
    /// Entrywise Monte Carlo with a fresh substream per (i, j).
    MonteCarlo {
        kind: ActivationKind,
        law: WeightLaw,
        m_mc: usize,
        seed: u64,
    },
}

/// Expected kernel matrix over all sample pairs.
pub fn expected_kernel(kind: &KernelKind, data: &Dataset) -> Result<KernelMatrix> {
    let n = data.n();
    if n == 0 {
        return Err(TrfError::invalid("empty dataset"));
    }
    let dots = at_a(&data.x);
    let norms: Vec<f64> = (0..n).map(|i| dots[(i, i)].sqrt()).collect();
    if matches!(
        kind,
        KernelKind::ArcCos0 | KernelKind::ArcCos1 | KernelKind::TernaryExpected(_)
    ) {
        if let Some(i) = norms.iter().position(|&v| v == 0.0) {
            return Err(TrfError::Degenerate(format!(
                "sample {i} has zero norm; angle-based kernel undefined"
            )));
        }
    }

    let mut values = Mat::zeros(n, n);
    let entry = |i: usize, j: usize| -> f64 {
        match kind {
            KernelKind::GaussianRff => {
                let sq = dots[(i, i)] + dots[(j, j)] - 2.0 * dots[(i, j)];
                (-0.5 * sq.max(0.0)).exp()
            }
            KernelKind::ArcCos1 => {
                let cos = (dots[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                let theta = cos.acos();
                norms[i] * norms[j] / (2.0 * std::f64::consts::PI)
                    * (theta.sin() + (std::f64::consts::PI - theta) * cos)
            }
            KernelKind::ArcCos0 => {
                let cos = (dots[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                0.5 - cos.acos() / (2.0 * std::f64::consts::PI)
            }
            KernelKind::TernaryExpected(thr) => {
                let rho = (dots[(i, j)] / (norms[i] * norms[j])).clamp(-1.0, 1.0);
                ternary_expected_entry(thr, norms[i], norms[j], rho)
            }
            KernelKind::MonteCarlo {
                kind,
                law,
                m_mc,
                seed,
            } => {
                let xi = data.x.col(i);
                let xj = data.x.col(j);
                monte_carlo_entry(kind, law, &xi, &xj, *m_mc, *seed ^ pair_id(i, j)).0
            }
        }
    };
    // entry-parallel over rows of the upper triangle
    values
        .data_mut()
        .par_chunks_mut(n)
        .enumerate()
        .for_each(|(i, row)| {
            for j in i..n {
                row[j] = entry(i, j);
            }
        });
    for i in 0..n {
        for j in 0..i {
            values[(i, j)] = values[(j, i)];
        }
    }
    KernelMatrix::new(values)
}

fn pair_id(i: usize, j: usize) -> u64 {
    (i as u64) << 32 | j as u64
}

/// E[sigma_ter(u) sigma_ter(v)] for (u, v) centered bivariate normal with
/// standard deviations ni, nj and correlation rho. Of the nine threshold
/// regions only the four sign-bearing corners contribute, each an orthant
/// probability.
pub fn ternary_expected_entry(thr: &Thresholds, ni: f64, nj: f64, rho: f64) -> f64 {
    let a_minus = thr.s_minus / ni;
    let a_plus = thr.s_plus / ni;
    let b_minus = thr.s_minus / nj;
    let b_plus = thr.s_plus / nj;
    let pp = 1.0 - std_normal_cdf(a_plus) - std_normal_cdf(b_plus)
        + bvn_cdf(a_plus, b_plus, rho);
    let mm = bvn_cdf(a_minus, b_minus, rho);
    let pm = std_normal_cdf(b_minus) - bvn_cdf(a_plus, b_minus, rho);
    let mp = std_normal_cdf(a_minus) - bvn_cdf(a_minus, b_plus, rho);
    pp + mm - pm - mp
}

/// Mean and standard error of the Monte Carlo estimate of one kernel entry,
/// averaging antithetic pairs (w, -w).
pub fn monte_carlo_entry(
    kind: &ActivationKind,
    law: &WeightLaw,
    xi: &[f64],
    xj: &[f64],
    m_mc: usize,
    seed: u64,
) -> (f64, f64) {
    let pairs = (m_mc / 2).max(1);
    let mut rng = substream(seed, &[STREAM_MC]);
    let p = xi.len();
    let mut sum = 0.0;
    let mut sum_sq = 0.0;
    let mut w = vec![0.0f64; p];
    for _ in 0..pairs {
        for v in w.iter_mut() {
            *v = law.sample(&mut rng);
        }
        let u: f64 = crate::linalg::dot(&w, xi);
        let v: f64 = crate::linalg::dot(&w, xj);
        let prod = |u: f64, v: f64| -> f64 {
            match kind {
                ActivationKind::RffPair => u.cos() * v.cos() + u.sin() * v.sin(),
                k => k.eval(u) * k.eval(v),
            }
        };
        let avg = 0.5 * (prod(u, v) + prod(-u, -v));
        sum += avg;
        sum_sq += avg * avg;
    }
    let mean = sum / pairs as f64;
    let var = (sum_sq / pairs as f64 - mean * mean).max(0.0);
    let std_err = (var / pairs as f64).sqrt();
    (mean, std_err)
}

/// P(Z1 <= h, Z2 <= k) for standard bivariate normal with correlation rho.
/// Gauss-Legendre evaluation of the Drezner-Wesolowsky single-integral
/// reduction (the TVPACK BVND route); absolute accuracy well below 5e-9.
pub fn bvn_cdf(h: f64, k: f64, rho: f64) -> f64 {
    bvnd(-h, -k, rho)
}

// Gauss-Legendre half-rules used by bvnd (symmetric nodes applied +/-).
const GL6_X: [f64; 3] = [
    0.9324695142031521,
    0.6612093864662645,
    0.2386191860831969,
];
const GL6_W: [f64; 3] = [
    0.1713244923791704,
    0.3607615730481386,
    0.4679139345726910,
];
const GL12_X: [f64; 6] = [
    0.9815606342467192,
    0.9041172563704749,
    0.7699026741943047,
    0.5873179542866175,
    0.3678314989981802,
    0.1252334085114689,
];
const GL12_W: [f64; 6] = [
    0.04717533638651183,
    0.1069393259953184,
    0.1600783285433462,
    0.2031674267230659,
    0.2334925365383548,
    0.2491470458134028,
];
const GL20_X: [f64; 10] = [
    0.9931285991850949,
    0.9639719272779138,
    0.9122344282513259,
    0.8391169718222188,
    0.7463319064601508,
    0.6360536807265150,
    0.5108670019508271,
    0.3737060887154195,
    0.2277858511416451,
    0.07652652113349734,
];
const GL20_W: [f64; 10] = [
    0.01761400713915212,
    0.04060142980038694,
    0.06267204833410907,
    0.08327674157670475,
    0.1019301198172404,
    0.1181945319615184,
    0.1316886384491766,
    0.1420961093183820,
    0.1491729864726037,
    0.1527533871307258,
];

/// P(X > dh, Y > dk) for standard bivariate normal with correlation r.
fn bvnd(dh: f64, dk: f64, r: f64) -> f64 {
    let twopi = 2.0 * std::f64::consts::PI;
    let (xs, ws): (&[f64], &[f64]) = if r.abs() < 0.3 {
        (&GL6_X, &GL6_W)
    } else if r.abs() < 0.75 {
        (&GL12_X, &GL12_W)
    } else {
        (&GL20_X, &GL20_W)
    };
    let h = dh;
    let mut k = dk;
    let mut hk = h * k;
    let mut bvn = 0.0;
    if r.abs() < 0.925 {
        if r.abs() > 0.0 {
            let hs = (h * h + k * k) / 2.0;
            let asr = r.asin();
            for (x, w) in xs.iter().zip(ws) {
                for is in [-1.0, 1.0] {
                    let sn = (asr * (is * x + 1.0) / 2.0).sin();
                    bvn += w * ((sn * hk - hs) / (1.0 - sn * sn)).exp();
                }
            }
            bvn = bvn * asr / (2.0 * twopi);
        }
        bvn += std_normal_cdf(-h) * std_normal_cdf(-k);
    } else {
        if r < 0.0 {
            k = -k;
            hk = -hk;
        }
        if r.abs() < 1.0 {
            let a_sq = (1.0 - r) * (1.0 + r);
            let mut a = a_sq.sqrt();
            let bs = (h - k) * (h - k);
            let c = (4.0 - hk) / 8.0;
            let d = (12.0 - hk) / 16.0;
            let asr = -(bs / a_sq + hk) / 2.0;
            if asr > -100.0 {
                bvn = a * asr.exp() * (1.0 - c * (bs - a_sq) * (1.0 - d * bs / 5.0) / 3.0
                    + c * d * a_sq * a_sq / 5.0);
            }
            if -hk < 100.0 {
                let b = bs.sqrt();
                let sp = twopi.sqrt() * std_normal_cdf(-b / a);
                bvn -= (-hk / 2.0).exp() * sp * b * (1.0 - c * bs * (1.0 - d * bs / 5.0) / 3.0);
            }
            a /= 2.0;
            for (x, w) in xs.iter().zip(ws) {
                for is in [-1.0, 1.0] {
                    let xs_sq = (a * (is * x + 1.0)).powi(2);
                    let rs = (1.0 - xs_sq).sqrt();
                    let asr = -(bs / xs_sq + hk) / 2.0;
                    if asr > -100.0 {
                        let sp = 1.0 + c * xs_sq * (1.0 + d * xs_sq);
                        let ep = (-hk * (1.0 - rs) / (2.0 * (1.0 + rs))).exp() / rs;
                        bvn += a * w * asr.exp() * (ep - sp);
                    }
                }
            }
            bvn = -bvn / twopi;
        }
        if r > 0.0 {
            bvn += std_normal_cdf(-h.max(k));
        } else {
            bvn = -bvn;
            if k > h {
                bvn += std_normal_cdf(k) - std_normal_cdf(h);
            }
        }
    }
    bvn.clamp(0.0, 1.0)
}

/// Two-sided centering P K P with P = I - (1/n) 1 1^T. Idempotent: an
/// already-centered matrix is returned unchanged.
pub fn center(kraw: &KernelMatrix) -> KernelMatrix {
    if kraw.centered {
        return kraw.clone();
    }
    let n = kraw.n();
    let mut row_mean = vec![0.0f64; n];
    for i in 0..n {
        row_mean[i] = kraw.values.row(i).iter().sum::<f64>() / n as f64;
    }
    let grand = row_mean.iter().sum::<f64>() / n as f64;
    let mut out = Mat::zeros(n, n);
    for i in 0..n {
        for j in 0..n {
            out[(i, j)] = kraw.values[(i, j)] - row_mean[i] - row_mean[j] + grand;
        }
    }
    KernelMatrix {
        values: out,
        centered: true,
    }
}

/// Deviation between two kernel matrices after centering both.
#[derive(Debug, Clone, Copy)]
pub struct DeviationReport {
    pub max_abs: f64,
    pub frobenius: f64,
    /// Frobenius norm divided by n.
    pub frobenius_per_n: f64,
}

/// Compare an empirical Gram against an expected kernel: centered versions
/// of both, max-abs and Frobenius deviations.
pub fn empirical_vs_expected(
    gram: &KernelMatrix,
    expected: &KernelMatrix,
) -> Result<DeviationReport> {
    if gram.n() != expected.n() {
        return Err(TrfError::dims(format!(
            "gram is {}x{0}, expected kernel {1}x{1}",
            gram.n(),
            expected.n()
        )));
    }
    let a = center(gram);
    let b = center(expected);
    let n = a.n();
    let mut max_abs = 0.0f64;
    let mut fro = 0.0f64;
    for i in 0..n {
        for j in 0..n {
            let d = a.values[(i, j)] - b.values[(i, j)];
            max_abs = max_abs.max(d.abs());
            fro += d * d;
        }
    }
    let frobenius = fro.sqrt();
    Ok(DeviationReport {
        max_abs,
        frobenius,
        frobenius_per_n: frobenius / n as f64,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{sample_gmm, Covariance, Dataset, DatasetOrigin, GmmSpec};
    use crate::linalg::{sym_tridiagonalize, tridiag_ql, ZTarget};
    use crate::moments::moments_ternary_closed;
    use crate::opcount::OpCounter;
    use crate::rng::normal;
    use crate::ternary::{gram, sample_ternary_weights, ternary_transform, TernaryWeightSpec};

    fn close(a: f64, b: f64, tol: f64) -> bool {
        (a - b).abs() <= tol
    }

    fn sheppard(rho: f64) -> f64 {
        0.25 + rho.asin() / (2.0 * std::f64::consts::PI)
    }

    #[test]
    fn bvn_independent_medians() {
        assert!(close(bvn_cdf(0.0, 0.0, 0.0), 0.25, 1e-15));
    }

    #[test]
    fn bvn_sheppard_formula() {
        assert!(close(bvn_cdf(0.0, 0.0, 0.5), 1.0 / 3.0, 5e-9));
        for i in 0..100 {
            let rho = -0.99 + 1.98 * (i as f64) / 99.0;
            let got = bvn_cdf(0.0, 0.0, rho);
            assert!(
                close(got, sheppard(rho), 5e-9),
                "rho {rho}: {got} vs {}",
                sheppard(rho)
            );
        }
    }

    #[test]
    fn bvn_perfect_correlation() {
        for (h, k) in [(0.3, 1.2), (-0.5, 0.1), (2.0, -2.0), (0.0, 0.0)] {
            let got = bvn_cdf(h, k, 1.0);
            assert!(close(got, std_normal_cdf(h.min(k)), 1e-12), "(h,k)=({h},{k})");
            let got = bvn_cdf(h, k, -1.0);
            let want = (std_normal_cdf(h) + std_normal_cdf(k) - 1.0).max(0.0);
            assert!(close(got, want, 1e-12), "anti (h,k)=({h},{k})");
        }
    }

    #[test]
    fn bvn_marginal_limits() {
        for rho in [-0.9, -0.3, 0.0, 0.45, 0.93] {
            for h in [-1.3, 0.2, 2.4] {
                assert!(close(bvn_cdf(h, 8.5, rho), std_normal_cdf(h), 1e-9));
                assert!(close(bvn_cdf(8.5, h, rho), std_normal_cdf(h), 1e-9));
            }
        }
    }

    proptest::proptest! {
        #![proptest_config(proptest::prelude::ProptestConfig::with_cases(256))]

        // every rectangle carries nonnegative probability mass
        #[test]
        fn bvn_rectangles_nonnegative(
            a in -3.5f64..3.5,
            width_x in 0.0f64..4.0,
            c in -3.5f64..3.5,
            width_y in 0.0f64..4.0,
            rho in -0.999f64..0.999,
        ) {
            let b = a + width_x;
            let d = c + width_y;
            let p = bvn_cdf(b, d, rho) - bvn_cdf(a, d, rho) - bvn_cdf(b, c, rho)
                + bvn_cdf(a, c, rho);
            proptest::prop_assert!(p >= -1e-12, "rectangle mass {} at rho {}", p, rho);
        }
    }

    fn unit_pair() -> Dataset {
        Dataset {
            x: Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 1.0]]),
            labels: vec![0, 1],
            origin: DatasetOrigin::File,
        }
    }

    #[test]
    fn gaussian_rff_diag_is_one() {
        let data = unit_pair();
        let k = expected_kernel(&KernelKind::GaussianRff, &data).unwrap();
        assert!(close(k.values[(0, 0)], 1.0, 1e-15));
        assert!(close(k.values[(0, 1)], (-1.0f64).exp(), 1e-15));
    }

    #[test]
    fn arccos1_orthogonal_units() {
        let data = unit_pair();
        let k = expected_kernel(&KernelKind::ArcCos1, &data).unwrap();
        assert!(close(
            k.values[(0, 1)],
            1.0 / (2.0 * std::f64::consts::PI),
            1e-15
        ));
    }

    #[test]
    fn ternary_sign_orthogonal_is_zero() {
        let thr = Thresholds {
            s_minus: 0.0,
            s_plus: 0.0,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        let data = unit_pair();
        let k = expected_kernel(&KernelKind::TernaryExpected(thr), &data).unwrap();
        assert!(close(k.values[(0, 1)], 0.0, 1e-12));
        assert!(close(k.values[(0, 0)], 1.0, 1e-12));
    }

    #[test]
    fn ternary_diag_matches_second_moment() {
        let thr = Thresholds {
            s_minus: -0.4,
            s_plus: 0.9,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        let spec = GmmSpec {
            p: 24,
            class_sizes: vec![10],
            means: vec![vec![0.5; 24]],
            covariances: vec![Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, 3).unwrap();
        let k = expected_kernel(&KernelKind::TernaryExpected(thr), &data).unwrap();
        for i in 0..data.n() {
            let norm_sq = crate::linalg::dot(&data.x.col(i), &data.x.col(i));
            let m = moments_ternary_closed(thr.s_minus, thr.s_plus, norm_sq).unwrap();
            let second = m.aux.unwrap().second;
            assert!(
                close(k.values[(i, i)], second, 1e-8),
                "diag {i}: {} vs {second}",
                k.values[(i, i)]
            );
        }
    }

    #[test]
    fn ternary_entries_bounded() {
        let thr = Thresholds {
            s_minus: -0.7,
            s_plus: 0.2,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        let spec = GmmSpec::two_class_benchmark(16, 20);
        let (data, _) = sample_gmm(&spec, 5).unwrap();
        let k = expected_kernel(&KernelKind::TernaryExpected(thr), &data).unwrap();
        assert!(k.values.max_abs() <= 1.0 + 1e-12);
    }

    #[test]
    fn zero_norm_rejected_for_angle_kernels() {
        let data = Dataset {
            x: Mat::from_rows(&[vec![1.0, 0.0], vec![0.0, 0.0]]),
            labels: vec![0, 0],
            origin: DatasetOrigin::File,
        };
        assert!(matches!(
            expected_kernel(&KernelKind::ArcCos1, &data),
            Err(TrfError::Degenerate(_))
        ));
        assert!(expected_kernel(&KernelKind::GaussianRff, &data).is_ok());
    }

    #[test]
    fn monte_carlo_matches_arccos1_within_error_bars() {
        let spec = GmmSpec {
            p: 32,
            class_sizes: vec![6],
            means: vec![vec![0.0; 32]],
            covariances: vec![Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, 17).unwrap();
        let closed = expected_kernel(&KernelKind::ArcCos1, &data).unwrap();
        for (i, j) in [(0, 1), (2, 3), (4, 5), (1, 4)] {
            let (mean, se) = monte_carlo_entry(
                &ActivationKind::ReLU,
                &WeightLaw::Gaussian,
                &data.x.col(i),
                &data.x.col(j),
                200_000,
                900 + i as u64,
            );
            assert!(
                (mean - closed.values[(i, j)]).abs() <= 4.0 * se.max(1e-6),
                "entry ({i},{j}): mc {mean} vs closed {} (se {se})",
                closed.values[(i, j)]
            );
        }
    }

    #[test]
    fn monte_carlo_law_invariance() {
        // expected kernels agree across unit-variance weight laws within
        // Monte Carlo error (the universality premise)
        let spec = GmmSpec {
            p: 256,
            class_sizes: vec![4],
            means: vec![vec![0.0; 256]],
            covariances: vec![Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, 23).unwrap();
        let laws = [
            WeightLaw::Gaussian,
            WeightLaw::StudentT7,
            WeightLaw::Ternary { epsilon: 0.5 },
        ];
        for (i, j) in [(0, 1), (2, 3)] {
            let ests: Vec<(f64, f64)> = laws
                .iter()
                .map(|law| {
                    monte_carlo_entry(
                        &ActivationKind::ReLU,
                        law,
                        &data.x.col(i),
                        &data.x.col(j),
                        60_000,
                        5_000 + i as u64,
                    )
                })
                .collect();
            for a in 0..laws.len() {
                for b in (a + 1)..laws.len() {
                    let (ma, sa) = ests[a];
                    let (mb, sb) = ests[b];
                    let combined = (sa * sa + sb * sb).sqrt();
                    assert!(
                        (ma - mb).abs() <= 4.0 * combined.max(2e-3),
                        "laws {a} vs {b}: {ma} vs {mb} (se {combined})"
                    );
                }
            }
        }
    }

    #[test]
    fn center_examples() {
        // all-ones annihilated
        let ones = KernelMatrix::new(Mat::from_fn(5, 5, |_, _| 1.0)).unwrap();
        let c = center(&ones);
        assert!(c.values.max_abs() <= 1e-14);
        assert!(c.centered);

        // identity, n = 4
        let eye = KernelMatrix::new(Mat::identity(4)).unwrap();
        let c = center(&eye);
        for i in 0..4 {
            for j in 0..4 {
                let want = if i == j { 1.0 - 0.25 } else { -0.25 };
                assert!(close(c.values[(i, j)], want, 1e-15));
            }
        }

        // idempotence is exact
        let mut rng = substream(2, &[9]);
        let mut m = Mat::zeros(8, 8);
        for i in 0..8 {
            for j in 0..=i {
                let v = normal(&mut rng);
                m[(i, j)] = v;
                m[(j, i)] = v;
            }
        }
        let k = KernelMatrix::new(m).unwrap();
        let once = center(&k);
        let twice = center(&once);
        assert_eq!(once.values, twice.values);

        // row sums vanish
        let n = once.n() as f64;
        for i in 0..once.n() {
            let s: f64 = once.values.row(i).iter().sum();
            assert!(s.abs() <= 1e-9 * n * once.values.max_abs());
        }
    }

    #[test]
    fn expected_kernels_are_psd() {
        let spec = GmmSpec::two_class_benchmark(24, 16);
        let (data, _) = sample_gmm(&spec, 4).unwrap();
        let thr = Thresholds {
            s_minus: -0.5,
            s_plus: 0.5,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        for kind in [
            KernelKind::GaussianRff,
            KernelKind::ArcCos0,
            KernelKind::ArcCos1,
            KernelKind::TernaryExpected(thr),
        ] {
            let k = expected_kernel(&kind, &data).unwrap();
            let (mut d, mut e, _) = sym_tridiagonalize(&k.values, false);
            tridiag_ql(&mut d, &mut e, ZTarget::None).unwrap();
            let scale = d.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(
                d[0] >= -1e-9 * scale.max(1.0),
                "{kind:?}: min eigenvalue {}",
                d[0]
            );
        }
    }

    #[test]
    fn deviation_identical_is_zero() {
        let spec = GmmSpec::two_class_benchmark(12, 10);
        let (data, _) = sample_gmm(&spec, 6).unwrap();
        let k = expected_kernel(&KernelKind::GaussianRff, &data).unwrap();
        let rep = empirical_vs_expected(&k, &k).unwrap();
        assert_eq!(rep.max_abs, 0.0);
        assert_eq!(rep.frobenius, 0.0);
    }

    #[test]
    fn ternary_gram_converges_to_expected_kernel() {
        // Frobenius/n decreasing in the feature count, fixed seed
        let spec = GmmSpec {
            p: 128,
            class_sizes: vec![64],
            means: vec![vec![0.0; 128]],
            covariances: vec![Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, 31).unwrap();
        let thr = Thresholds {
            s_minus: -0.6,
            s_plus: 0.8,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        let expected = expected_kernel(&KernelKind::TernaryExpected(thr), &data).unwrap();
        let mut devs = Vec::new();
        for m in [1_000usize, 10_000, 100_000] {
            let w = sample_ternary_weights(&TernaryWeightSpec {
                m,
                p: 128,
                epsilon: 0.5,
                seed: 77,
            })
            .unwrap();
            let ops = OpCounter::new();
            let f = ternary_transform(&w, &data, &thr, &ops).unwrap();
            let g = gram(&f, &ops).unwrap();
            devs.push(empirical_vs_expected(&g, &expected).unwrap().frobenius_per_n);
        }
        assert!(
            devs[0] > devs[1] && devs[1] > devs[2],
            "deviations not decreasing: {devs:?}"
        );
    }

    #[test]
    fn mismatched_kernel_is_negative_control() {
        let spec = GmmSpec {
            p: 96,
            class_sizes: vec![48],
            means: vec![vec![0.0; 96]],
            covariances: vec![Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, 41).unwrap();
        let arccos1 = expected_kernel(&KernelKind::ArcCos1, &data).unwrap();
        let gauss = expected_kernel(&KernelKind::GaussianRff, &data).unwrap();
        // Gram of actual ReLU features
        let mut rng = substream(55, &[2]);
        let m = 40_000;
        let mut w = Mat::zeros(m, 96);
        for i in 0..m {
            for j in 0..96 {
                w[(i, j)] = normal(&mut rng);
            }
        }
        let f = crate::ternary::dense_transform(&w, &data, &ActivationKind::ReLU).unwrap();
        let ops = OpCounter::new();
        let g = gram(&f, &ops).unwrap();
        let matched = empirical_vs_expected(&g, &arccos1).unwrap();
        let mismatched = empirical_vs_expected(&g, &gauss).unwrap();
        assert!(
            mismatched.frobenius > matched.frobenius,
            "matched {} vs mismatched {}",
            matched.frobenius,
            mismatched.frobenius
        );
    }

    #[test]
    fn kmx_roundtrip() {
        let spec = GmmSpec::two_class_benchmark(8, 6);
        let (data, _) = sample_gmm(&spec, 2).unwrap();
        let k = expected_kernel(&KernelKind::GaussianRff, &data).unwrap();
        let mut buf = Vec::new();
        k.write_kmx(&mut buf).unwrap();
        let back = KernelMatrix::read_kmx(&buf[..]).unwrap();
        assert_eq!(k.values, back.values);
        let mut csv = Vec::new();
        k.write_csv(&mut csv).unwrap();
        assert_eq!(String::from_utf8(csv).unwrap().lines().count(), 6);
    }
}
