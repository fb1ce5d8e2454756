//! Gaussian-mixture data generation, CSV ingestion, and the per-dataset
//! statistics (M, t, T, tau, J, Z, phi) that feed the equivalent-kernel
//! construction and threshold calibration.

use rayon::prelude::*;

use crate::error::{Result, TrfError};
use crate::linalg::{dot, sym_tridiagonalize, tridiag_ql, Mat, ZTarget};
use crate::rng::{normal, substream};

const STREAM_GMM_COL: u64 = 0x01;
const STREAM_SPLIT: u64 = 0x02;

/// A class covariance, stored in whichever structure the config gave it.
/// The matrix acts as C/p when sampling, per the mixture scaling.
#[derive(Debug, Clone)]
pub enum Covariance {
    Isotropic(f64),
    Diagonal(Vec<f64>),
    Dense(Mat),
}

impl Covariance {
    pub fn dim_ok(&self, p: usize) -> bool {
        match self {
            Covariance::Isotropic(_) => true,
            Covariance::Diagonal(d) => d.len() == p,
            Covariance::Dense(m) => m.rows() == p && m.cols() == p,
        }
    }

    pub fn trace(&self, p: usize) -> f64 {
        match self {
            Covariance::Isotropic(s) => s * p as f64,
            Covariance::Diagonal(d) => d.iter().sum(),
            Covariance::Dense(m) => (0..p).map(|i| m[(i, i)]).sum(),
        }
    }

    /// tr(self * other); both operands are symmetric.
    pub fn product_trace(&self, other: &Covariance, p: usize) -> f64 {
        use Covariance::*;
        match (self, other) {
            (Isotropic(a), b) => a * b.trace(p),
            (a, Isotropic(b)) => b * a.trace(p),
            (Diagonal(a), Diagonal(b)) => a.iter().zip(b).map(|(x, y)| x * y).sum(),
            (Diagonal(a), Dense(b)) | (Dense(b), Diagonal(a)) => {
                (0..p).map(|i| a[i] * b[(i, i)]).sum()
            }
            (Dense(a), Dense(b)) => {
                let mut s = 0.0;
                for i in 0..p {
                    s += dot(a.row(i), b.row(i));
                }
                s
            }
        }
    }

    fn validate(&self, p: usize, class: usize) -> Result<()> {
        if !self.dim_ok(p) {
            return Err(TrfError::dims(format!(
                "covariance of class {class} does not match p = {p}"
            )));
        }
        match self {
            Covariance::Isotropic(s) => {
                if *s < -1e-10 {
                    return Err(TrfError::invalid(format!(
                        "class {class}: isotropic scale {s} is negative"
                    )));
                }
            }
            Covariance::Diagonal(d) => {
                if let Some(v) = d.iter().find(|v| **v < -1e-10) {
                    return Err(TrfError::invalid(format!(
                        "class {class}: diagonal covariance entry {v} is negative"
                    )));
                }
            }
            Covariance::Dense(m) => {
                let asym = m.asymmetry();
                if asym > 1e-12 {
                    return Err(TrfError::invalid(format!(
                        "class {class}: covariance asymmetry {asym:.3e} exceeds 1e-12"
                    )));
                }
            }
        }
        Ok(())
    }

    /// Factor F with F F^T = C, by symmetric eigendecomposition so that
    /// PSD-but-singular covariances are accepted. Eigenvalues in
    /// [-1e-10, 0) clamp to zero; anything lower is rejected.
    fn sqrt_factor(&self, p: usize, class: usize) -> Result<SqrtFactor> {
        match self {
            Covariance::Isotropic(s) => Ok(SqrtFactor::Iso(s.max(0.0).sqrt())),
            Covariance::Diagonal(d) => {
                Ok(SqrtFactor::Diag(d.iter().map(|v| v.max(0.0).sqrt()).collect()))
            }
            Covariance::Dense(m) => {
                let (mut d, mut e, v) = sym_tridiagonalize(m, true);
                let mut v = v.expect("vectors requested");
                tridiag_ql(&mut d, &mut e, ZTarget::Full(&mut v))?;
                for lam in d.iter_mut() {
                    if *lam < -1e-10 {
                        return Err(TrfError::invalid(format!(
                            "class {class}: covariance eigenvalue {lam:.3e} below -1e-10"
                        )));
                    }
                    *lam = lam.max(0.0);
                }
                // F = V diag(sqrt(lambda))
                let mut f = Mat::zeros(p, p);
                for i in 0..p {
                    for j in 0..p {
                        f[(i, j)] = v[(i, j)] * d[j].sqrt();
                    }
                }
                Ok(SqrtFactor::Dense(f))
            }
        }
    }
}

enum SqrtFactor {
    Iso(f64),
    Diag(Vec<f64>),
    Dense(Mat),
}

impl SqrtFactor {
    /// z = F g / sqrt(p)
    fn apply(&self, g: &[f64], inv_sqrt_p: f64) -> Vec<f64> {
        match self {
            SqrtFactor::Iso(s) => g.iter().map(|v| v * s * inv_sqrt_p).collect(),
            SqrtFactor::Diag(d) => g
                .iter()
                .zip(d)
                .map(|(v, s)| v * s * inv_sqrt_p)
                .collect(),
            SqrtFactor::Dense(f) => {
                let mut z = f.matvec(g);
                for v in &mut z {
                    *v *= inv_sqrt_p;
                }
                z
            }
        }
    }
}

/// Gaussian mixture description: K classes in ambient dimension p. Means are
/// the unnormalized mu_a (applied as mu_a / sqrt(p)); covariances act as
/// C_a / p.
#[derive(Debug, Clone)]
pub struct GmmSpec {
    pub p: usize,
    pub class_sizes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<Covariance>,
}

impl GmmSpec {
    pub fn n(&self) -> usize {
        self.class_sizes.iter().sum()
    }

    pub fn k(&self) -> usize {
        self.class_sizes.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.class_sizes.is_empty() || self.class_sizes.iter().any(|&n| n == 0) {
            return Err(TrfError::invalid("every class needs at least one sample"));
        }
        if self.means.len() != self.k() || self.covariances.len() != self.k() {
            return Err(TrfError::dims(format!(
                "expected {} means and covariances, got {} and {}",
                self.k(),
                self.means.len(),
                self.covariances.len()
            )));
        }
        for (a, mu) in self.means.iter().enumerate() {
            if mu.len() != self.p {
                return Err(TrfError::dims(format!(
                    "mean of class {a} has length {}, expected {}",
                    mu.len(),
                    self.p
                )));
            }
        }
        for (a, c) in self.covariances.iter().enumerate() {
            c.validate(self.p, a)?;
        }
        Ok(())
    }

    /// tr(C_mix)/p for the size-weighted mixture covariance.
    pub fn tau(&self) -> f64 {
        let n = self.n() as f64;
        let p = self.p as f64;
        self.covariances
            .iter()
            .zip(&self.class_sizes)
            .map(|(c, &na)| (na as f64 / n) * c.trace(self.p))
            .sum::<f64>()
            / p
    }

    /// Two well-separated classes: mu_a puts mass 4 on coordinate a-1 and
    /// C_a = (1 + 4(a-1)/sqrt(p)) I. The standing benchmark configuration
    /// for the spectral and regression experiments.
    pub fn two_class_benchmark(p: usize, n: usize) -> GmmSpec {
        let mut means = vec![vec![0.0; p], vec![0.0; p]];
        means[0][0] = 4.0;
        means[1][1] = 4.0;
        GmmSpec {
            p,
            class_sizes: vec![n / 2, n - n / 2],
            means,
            covariances: vec![
                Covariance::Isotropic(1.0),
                Covariance::Isotropic(1.0 + 4.0 / (p as f64).sqrt()),
            ],
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DatasetOrigin {
    SyntheticGmm,
    File,
}

/// Column-sample data matrix with class labels.
#[derive(Debug, Clone)]
pub struct Dataset {
    /// p x n, one sample per column.
    pub x: Mat,
    pub labels: Vec<usize>,
    pub origin: DatasetOrigin,
}

impl Dataset {
    pub fn p(&self) -> usize {
        self.x.rows()
    }

    pub fn n(&self) -> usize {
        self.x.cols()
    }

    pub fn num_classes(&self) -> usize {
        self.labels.iter().copied().max().map_or(0, |m| m + 1)
    }

    pub fn validate(&self) -> Result<()> {
        if self.labels.len() != self.n() {
            return Err(TrfError::dims(format!(
                "{} labels for {} columns",
                self.labels.len(),
                self.n()
            )));
        }
        Ok(())
    }

    /// Squared Euclidean norm of every column.
    pub fn col_sq_norms(&self) -> Vec<f64> {
        let mut acc = vec![0.0f64; self.n()];
        for i in 0..self.p() {
            let row = self.x.row(i);
            for (j, v) in row.iter().enumerate() {
                acc[j] += v * v;
            }
        }
        acc
    }
}

/// GMM statistics consumed by the equivalent-kernel construction. `z` and
/// `phi` exist only for synthetic draws; file data cannot provide them.
#[derive(Debug, Clone)]
pub struct GmmStats {
    /// p x K class means (unnormalized mu_a).
    pub m: Mat,
    /// tr(C_a - C_mix) / sqrt(p) per class.
    pub t: Vec<f64>,
    /// K x K matrix of tr(C_a C_b) / p.
    pub t_cross: Mat,
    /// tr(C_mix) / p.
    pub tau: f64,
    /// n x K one-hot class membership.
    pub j: Mat,
    /// p x n centered-noise matrix (synthetic draws only).
    pub z: Option<Mat>,
    /// ||z_i||^2 - E||z_i||^2 per sample (synthetic draws only).
    pub phi: Option<Vec<f64>>,
}

impl GmmStats {
    pub fn n(&self) -> usize {
        self.j.rows()
    }

    pub fn k(&self) -> usize {
        self.j.cols()
    }
}

/// Draw a dataset from the mixture. Column i uses its own substream of
/// `seed`, so the draw is order-independent and identical for any worker
/// count.
pub fn sample_gmm(spec: &GmmSpec, seed: u64) -> Result<(Dataset, GmmStats)> {
    spec.validate()?;
    let p = spec.p;
    let n = spec.n();
    let inv_sqrt_p = 1.0 / (p as f64).sqrt();

    let factors: Vec<SqrtFactor> = spec
        .covariances
        .iter()
        .enumerate()
        .map(|(a, c)| c.sqrt_factor(p, a))
        .collect::<Result<_>>()?;

    // class of each column, class-contiguous
    let mut labels = Vec::with_capacity(n);
    for (a, &na) in spec.class_sizes.iter().enumerate() {
        labels.extend(std::iter::repeat(a).take(na));
    }

    let class_trace_over_p: Vec<f64> = spec
        .covariances
        .iter()
        .map(|c| c.trace(p) / p as f64)
        .collect();

    struct ColDraw {
        x: Vec<f64>,
        z: Vec<f64>,
        phi: f64,
    }

    let cols: Vec<ColDraw> = (0..n)
        .into_par_iter()
        .map(|i| {
            let a = labels[i];
            let mut rng = substream(seed, &[STREAM_GMM_COL, i as u64]);
            let g: Vec<f64> = (0..p).map(|_| normal(&mut rng)).collect();
            let z = factors[a].apply(&g, inv_sqrt_p);
            let mu = &spec.means[a];
            let x: Vec<f64> = (0..p).map(|r| mu[r] * inv_sqrt_p + z[r]).collect();
            let phi = dot(&z, &z) - class_trace_over_p[a];
            ColDraw { x, z, phi }
        })
        .collect();

    let mut x = Mat::zeros(p, n);
    let mut z = Mat::zeros(p, n);
    let mut phi = Vec::with_capacity(n);
    for (i, c) in cols.iter().enumerate() {
        for r in 0..p {
            x[(r, i)] = c.x[r];
            z[(r, i)] = c.z[r];
        }
        phi.push(c.phi);
    }

    let stats = stats_from_spec(spec, &labels, Some(z), Some(phi));
    let data = Dataset {
        x,
        labels,
        origin: DatasetOrigin::SyntheticGmm,
    };
    Ok((data, stats))
}

fn stats_from_spec(
    spec: &GmmSpec,
    labels: &[usize],
    z: Option<Mat>,
    phi: Option<Vec<f64>>,
) -> GmmStats {
    let p = spec.p;
    let k = spec.k();
    let n = labels.len();
    let m = Mat::from_fn(p, k, |r, a| spec.means[a][r]);
    let tau = spec.tau();
    let trace_mix: f64 = tau * p as f64;
    let t: Vec<f64> = spec
        .covariances
        .iter()
        .map(|c| (c.trace(p) - trace_mix) / (p as f64).sqrt())
        .collect();
    let t_cross = Mat::from_fn(k, k, |a, b| {
        spec.covariances[a].product_trace(&spec.covariances[b], p) / p as f64
    });
    let mut j = Mat::zeros(n, k);
    for (i, &a) in labels.iter().enumerate() {
        j[(i, a)] = 1.0;
    }
    GmmStats {
        m,
        t,
        t_cross,
        tau,
        j,
        z,
        phi,
    }
}

/// Consistent estimator of tau: the sample mean of squared column norms.
pub fn estimate_tau(data: &Dataset) -> Result<f64> {
    if data.n() == 0 {
        return Err(TrfError::invalid("cannot estimate tau from an empty dataset"));
    }
    Ok(data.col_sq_norms().iter().sum::<f64>() / data.n() as f64)
}

/// How the label column of a CSV file is addressed.
#[derive(Debug, Clone)]
pub enum LabelSelector {
    Index(usize),
    Name(String),
}

/// Load a rectangular numeric CSV where rows are samples. The label column
/// becomes class indices in order of first appearance; remaining columns
/// become the feature vector (one sample per matrix column). With
/// `standardize`, every sample is scaled by one global constant so the tau
/// estimate of the result is exactly 1.
pub fn load_csv(
    path: &std::path::Path,
    label: &LabelSelector,
    standardize: bool,
    has_header: bool,
) -> Result<Dataset> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(has_header)
        .flexible(true)
        .trim(csv::Trim::All)
        .from_path(path)
        .map_err(|e| TrfError::Parse {
            row: None,
            message: format!("{path:?}: {e}"),
        })?;

    let label_idx = match label {
        LabelSelector::Index(i) => *i,
        LabelSelector::Name(name) => {
            if !has_header {
                return Err(TrfError::Parse {
                    row: None,
                    message: format!("label column '{name}' requested but file has no header"),
                });
            }
            let headers = reader.headers().map_err(|e| TrfError::Parse {
                row: None,
                message: e.to_string(),
            })?;
            headers
                .iter()
                .position(|h| h == name)
                .ok_or_else(|| TrfError::Parse {
                    row: None,
                    message: format!("label column '{name}' not found in header"),
                })?
        }
    };

    let mut feature_rows: Vec<Vec<f64>> = Vec::new();
    let mut labels: Vec<usize> = Vec::new();
    let mut class_names: Vec<String> = Vec::new();
    let mut width: Option<usize> = None;

    for (row_idx, record) in reader.records().enumerate() {
        let record = record.map_err(|e| TrfError::Parse {
            row: Some(row_idx),
            message: e.to_string(),
        })?;
        let w = record.len();
        match width {
            None => {
                if label_idx >= w {
                    return Err(TrfError::Parse {
                        row: Some(row_idx),
                        message: format!("label column {label_idx} out of range for width {w}"),
                    });
                }
                width = Some(w);
            }
            Some(expect) => {
                if w != expect {
                    return Err(TrfError::Parse {
                        row: Some(row_idx),
                        message: format!("row has {w} fields, expected {expect}"),
                    });
                }
            }
        }
        let mut features = Vec::with_capacity(w - 1);
        for (col, field) in record.iter().enumerate() {
            if col == label_idx {
                let name = field.to_string();
                let class = match class_names.iter().position(|c| *c == name) {
                    Some(c) => c,
                    None => {
                        class_names.push(name);
                        class_names.len() - 1
                    }
                };
                labels.push(class);
            } else {
                let v: f64 = field.parse().map_err(|_| TrfError::Parse {
                    row: Some(row_idx),
                    message: format!("non-numeric cell '{field}' in column {col}"),
                })?;
                features.push(v);
            }
        }
        feature_rows.push(features);
    }

    if feature_rows.is_empty() {
        return Err(TrfError::Parse {
            row: None,
            message: "file contains no data rows".into(),
        });
    }

    let n = feature_rows.len();
    let p = feature_rows[0].len();
    let mut x = Mat::zeros(p, n);
    for (i, row) in feature_rows.iter().enumerate() {
        for r in 0..p {
            x[(r, i)] = row[r];
        }
    }
    let mut data = Dataset {
        x,
        labels,
        origin: DatasetOrigin::File,
    };
    if standardize {
        let tau = estimate_tau(&data)?;
        if tau <= 0.0 {
            return Err(TrfError::Degenerate(
                "cannot standardize all-zero data".into(),
            ));
        }
        let scale = 1.0 / tau.sqrt();
        data.x.scale(scale);
    }
    Ok(data)
}

/// Stratified train/test split: disjoint, exhaustive, deterministic per
/// seed, with at least one sample of every class on each side.
pub fn split(data: &Dataset, train_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(train_fraction > 0.0 && train_fraction < 1.0) {
        return Err(TrfError::invalid(format!(
            "train fraction must be in (0, 1), got {train_fraction}"
        )));
    }
    data.validate()?;
    let k = data.num_classes();
    let mut by_class: Vec<Vec<usize>> = vec![Vec::new(); k];
    for (i, &a) in data.labels.iter().enumerate() {
        by_class[a].push(i);
    }
    for (a, members) in by_class.iter().enumerate() {
        if members.len() < 2 {
            return Err(TrfError::invalid(format!(
                "class {a} has {} samples; need at least 2 to split",
                members.len()
            )));
        }
    }
    let mut train_idx = Vec::new();
    let mut test_idx = Vec::new();
    for (a, members) in by_class.iter().enumerate() {
        let mut order = members.clone();
        let mut rng = substream(seed, &[STREAM_SPLIT, a as u64]);
        // Fisher-Yates
        for i in (1..order.len()).rev() {
            let j = (rand::Rng::gen_range(&mut rng, 0..=i as u64)) as usize;
            order.swap(i, j);
        }
        let want = (train_fraction * members.len() as f64).round() as usize;
        let take = want.clamp(1, members.len() - 1);
        train_idx.extend_from_slice(&order[..take]);
        test_idx.extend_from_slice(&order[take..]);
    }
    train_idx.sort_unstable();
    test_idx.sort_unstable();

    let subset = |idx: &[usize]| -> Dataset {
        let p = data.p();
        let mut x = Mat::zeros(p, idx.len());
        let mut labels = Vec::with_capacity(idx.len());
        for (col, &i) in idx.iter().enumerate() {
            for r in 0..p {
                x[(r, col)] = data.x[(r, i)];
            }
            labels.push(data.labels[i]);
        }
        Dataset {
            x,
            labels,
            origin: data.origin,
        }
    };
    Ok((subset(&train_idx), subset(&test_idx)))
}

// ---------------------------------------------------------------------------
// JSON configuration mirror
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(untagged)]
pub enum CovarianceConfig {
    Isotropic { isotropic: f64 },
    Diagonal { diagonal: Vec<f64> },
    Dense { dense: Vec<Vec<f64>> },
}

/// JSON form of [`GmmSpec`]: means given densely, covariances as
/// `{"isotropic": s}`, `{"diagonal": [..]}` or `{"dense": [[..]]}`.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct GmmConfig {
    pub p: usize,
    pub class_sizes: Vec<usize>,
    pub means: Vec<Vec<f64>>,
    pub covariances: Vec<CovarianceConfig>,
}

impl TryFrom<GmmConfig> for GmmSpec {
    type Error = TrfError;

    fn try_from(cfg: GmmConfig) -> Result<GmmSpec> {
        let covariances = cfg
            .covariances
            .into_iter()
            .map(|c| match c {
                CovarianceConfig::Isotropic { isotropic } => Covariance::Isotropic(isotropic),
                CovarianceConfig::Diagonal { diagonal } => Covariance::Diagonal(diagonal),
                CovarianceConfig::Dense { dense } => Covariance::Dense(Mat::from_rows(&dense)),
            })
            .collect();
        let spec = GmmSpec {
            p: cfg.p,
            class_sizes: cfg.class_sizes,
            means: cfg.means,
            covariances,
        };
        spec.validate()?;
        Ok(spec)
    }
}
