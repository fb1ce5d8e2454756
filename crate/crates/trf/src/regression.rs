//! Random-features ridge regression with +/-1 targets and variance-
//! normalized test MSE, plus the sweep driver behind the regression
//! experiments.

use std::time::Instant;

use crate::data::{estimate_tau, sample_gmm, split, Dataset, GmmSpec, LabelSelector};
use crate::error::{Result, TrfError};
use crate::linalg::{cholesky_factor, cholesky_solve, gram_of_rows, Mat};
use crate::moments::{moments_closed_form, ActivationKind};
use crate::opcount::OpCounter;
use crate::rng::{normal, substream};
use crate::ternary::{
    calibrate_thresholds_best_effort, dense_transform, gram, sample_ternary_weights,
    ternary_transform, FeatureMatrix, TernaryWeightSpec,
};

const STREAM_RIDGE_W: u64 = 0x30;

/// A fitted ridge regressor over a fixed random feature map.
#[derive(Debug, Clone)]
pub struct RidgeModel {
    /// One coefficient per feature row (2m for the [cos, sin] pair).
    pub weights: Vec<f64>,
    pub gamma: f64,
    pub intercept: f64,
    /// Descriptor of the feature map (kind, weight law, seed) so the exact
    /// map is reproducible.
    pub feature_kind: String,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum RidgeRoute {
    /// Solve the rows x rows system (feature count <= sample count).
    Primal,
    /// Solve the n x n system and map back.
    Dual,
}

fn target_check(y: &[f64], n: usize) -> Result<()> {
    if y.len() != n {
        return Err(TrfError::dims(format!(
            "{} targets for {} samples",
            y.len(),
            n
        )));
    }
    if y.iter().any(|v| !v.is_finite()) {
        return Err(TrfError::invalid("targets must be finite"));
    }
    Ok(())
}

/// +/-1 encoding of a two-class label vector.
pub fn targets_pm1(data: &Dataset) -> Result<Vec<f64>> {
    if data.num_classes() > 2 {
        return Err(TrfError::Unsupported(
            "ridge targets are defined for two-class data".into(),
        ));
    }
    Ok(data
        .labels
        .iter()
        .map(|&a| if a == 1 { 1.0 } else { -1.0 })
        .collect())
}

/// SPD solve with the single jitter retry: on a failed factorization, add
/// 1e-12 * trace to the diagonal and try once more.
fn solve_spd(a: &Mat, b: &[f64]) -> Result<Vec<f64>> {
    match cholesky_factor(a) {
        Ok(l) => Ok(cholesky_solve(&l, b)),
        Err(_) => {
            let n = a.rows();
            let trace: f64 = (0..n).map(|i| a[(i, i)]).sum();
            let mut jittered = a.clone();
            for i in 0..n {
                jittered[(i, i)] += 1e-12 * trace;
            }
            let l = cholesky_factor(&jittered)?;
            Ok(cholesky_solve(&l, b))
        }
    }
}

/// Reusable pieces of a ridge fit over one training feature matrix: the
/// per-gamma solve shares the Gram work.
pub struct RidgeWorkspace {
    route: RidgeRoute,
    /// Primal: Sigma Sigma^T / n. Dual: Sigma^T Sigma / n.
    system: Mat,
    /// Primal: Sigma ytilde / n.
    rhs: Vec<f64>,
    ytilde: Vec<f64>,
    intercept: f64,
    rows: usize,
    n: usize,
}

impl RidgeWorkspace {
    pub fn new(features: &FeatureMatrix, targets: &[f64]) -> Result<RidgeWorkspace> {
        Self::with_route(features, targets, None)
    }

    /// `route` forces primal or dual; None picks the smaller system.
    pub fn with_route(
        features: &FeatureMatrix,
        targets: &[f64],
        route: Option<RidgeRoute>,
    ) -> Result<RidgeWorkspace> {
        let n = features.n();
        let rows = features.rows();
        if n == 0 || rows == 0 {
            return Err(TrfError::invalid("empty feature matrix"));
        }
        target_check(targets, n)?;
        let intercept = targets.iter().sum::<f64>() / n as f64;
        let ytilde: Vec<f64> = targets.iter().map(|v| v - intercept).collect();
        let route = route.unwrap_or(if rows <= n {
            RidgeRoute::Primal
        } else {
            RidgeRoute::Dual
        });
        let ops = OpCounter::new();
        let (system, rhs) = match route {
            RidgeRoute::Primal => {
                let dense = features.to_dense();
                let mut g = gram_of_rows(&dense);
                g.scale(1.0 / n as f64);
                let mut rhs = dense.matvec(&ytilde);
                for v in rhs.iter_mut() {
                    *v /= n as f64;
                }
                (g, rhs)
            }
            RidgeRoute::Dual => {
                // gram() returns Sigma^T Sigma / directions
                let g = gram(features, &ops)?;
                let mut sys = g.values;
                sys.scale(features.directions() as f64 / n as f64);
                (sys, Vec::new())
            }
        };
        Ok(RidgeWorkspace {
            route,
            system,
            rhs,
            ytilde,
            intercept,
            rows,
            n,
        })
    }

    /// Solve at one regularization value.
    pub fn solve(&self, features: &FeatureMatrix, gamma: f64) -> Result<RidgeModel> {
        if !(gamma > 0.0) || !gamma.is_finite() {
            return Err(TrfError::invalid(format!(
                "gamma must be positive and finite, got {gamma}"
            )));
        }
        let mut sys = self.system.clone();
        let dim = sys.rows();
        for i in 0..dim {
            sys[(i, i)] += gamma;
        }
        let weights = match self.route {
            RidgeRoute::Primal => solve_spd(&sys, &self.rhs)?,
            RidgeRoute::Dual => {
                let alpha = solve_spd(&sys, &self.ytilde)?;
                // w = Sigma alpha / n
                let mut w = features_times(features, &alpha);
                for v in w.iter_mut() {
                    *v /= self.n as f64;
                }
                w
            }
        };
        Ok(RidgeModel {
            weights,
            gamma,
            intercept: self.intercept,
            feature_kind: format!(
                "rows={} directions={} route={:?}",
                self.rows,
                features.directions(),
                self.route
            ),
        })
    }
}

/// One-shot fit: build the workspace and solve.
pub fn fit_ridge(features: &FeatureMatrix, targets: &[f64], gamma: f64) -> Result<RidgeModel> {
    RidgeWorkspace::new(features, targets)?.solve(features, gamma)
}

/// Sigma v over columns (length rows).
fn features_times(features: &FeatureMatrix, v: &[f64]) -> Vec<f64> {
    match features {
        FeatureMatrix::Dense { data, .. } => data.matvec(v),
        FeatureMatrix::PackedTernary { data, .. } => {
            let mut out = vec![0.0f64; data.rows()];
            for k in 0..data.rows() {
                let mask = data.mask_row(k);
                let sign = data.sign_row(k);
                let mut acc = 0.0;
                for (wi, (&mw, &sw)) in mask.iter().zip(sign).enumerate() {
                    let mut bits = mw;
                    while bits != 0 {
                        let tz = bits.trailing_zeros() as usize;
                        let i = wi * 64 + tz;
                        if sw >> tz & 1 == 1 {
                            acc -= v[i];
                        } else {
                            acc += v[i];
                        }
                        bits &= bits - 1;
                    }
                }
                out[k] = acc * data.scale();
            }
            out
        }
    }
}

/// w^T Sigma per column (length n).
fn weights_times_features(weights: &[f64], features: &FeatureMatrix) -> Vec<f64> {
    let n = features.n();
    match features {
        FeatureMatrix::Dense { data, .. } => {
            let mut acc = vec![0.0f64; n];
            for k in 0..data.rows() {
                let wk = weights[k];
                if wk == 0.0 {
                    continue;
                }
                for (a, v) in acc.iter_mut().zip(data.row(k)) {
                    *a += wk * v;
                }
            }
            acc
        }
        FeatureMatrix::PackedTernary { data, .. } => {
            let mut acc = vec![0.0f64; n];
            for k in 0..data.rows() {
                let wk = weights[k] * data.scale();
                if wk == 0.0 {
                    continue;
                }
                let mask = data.mask_row(k);
                let sign = data.sign_row(k);
                for (wi, (&mw, &sw)) in mask.iter().zip(sign).enumerate() {
                    let mut bits = mw;
                    while bits != 0 {
                        let tz = bits.trailing_zeros() as usize;
                        let i = wi * 64 + tz;
                        if sw >> tz & 1 == 1 {
                            acc[i] -= wk;
                        } else {
                            acc[i] += wk;
                        }
                        bits &= bits - 1;
                    }
                }
            }
            acc
        }
    }
}

/// Test MSE normalized by target variance, so the zero predictor scores 1.
pub fn predict_mse(
    model: &RidgeModel,
    features_test: &FeatureMatrix,
    targets_test: &[f64],
) -> Result<f64> {
    let n = features_test.n();
    target_check(targets_test, n)?;
    if features_test.rows() != model.weights.len() {
        return Err(TrfError::dims(format!(
            "model has {} weights, features {} rows",
            model.weights.len(),
            features_test.rows()
        )));
    }
    let mut pred = weights_times_features(&model.weights, features_test);
    for v in pred.iter_mut() {
        *v += model.intercept;
    }
    let mean_y = targets_test.iter().sum::<f64>() / n as f64;
    let var: f64 = targets_test.iter().map(|y| (y - mean_y) * (y - mean_y)).sum();
    if var == 0.0 {
        return Err(TrfError::Degenerate("constant test targets".into()));
    }
    let sse: f64 = pred
        .iter()
        .zip(targets_test)
        .map(|(p, y)| (p - y) * (p - y))
        .sum();
    Ok(sse / var)
}

// ---------------------------------------------------------------------------
// Sweep driver
// ---------------------------------------------------------------------------

/// Where the sweep's data comes from.
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DataSource {
    /// Synthetic mixture: fresh train and test draws per seed.
    Gmm {
        spec: crate::data::GmmConfig,
        n_test: usize,
    },
    /// CSV file split per seed.
    Csv {
        path: String,
        label_column: String,
        #[serde(default)]
        has_header: bool,
        #[serde(default = "default_true")]
        standardize: bool,
        train_fraction: f64,
    },
}

fn default_true() -> bool {
    true
}

/// Feature families the sweep can compare.
#[derive(Debug, Clone, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepKind {
    /// Gaussian weights, [cos, sin] features.
    Rff,
    /// Ternary weights and activation, thresholds calibrated to the
    /// [cos, sin] moments at the estimated tau; expands over the epsilon
    /// list.
    Trf,
    /// Gaussian weights with a named scalar activation.
    Activation { name: String },
}

/// Full experiment descriptor for [`sweep`].
#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SweepConfig {
    pub data: DataSource,
    pub kinds: Vec<SweepKind>,
    pub m_grid: Vec<usize>,
    pub gamma_grid: Vec<f64>,
    pub epsilon_list: Vec<f64>,
    pub seeds: Vec<u64>,
}

/// One row of the results table.
#[derive(Debug, Clone)]
pub struct SweepRow {
    pub kind: String,
    pub m: usize,
    pub epsilon: f64,
    pub gamma: f64,
    pub seed: u64,
    pub mse: f64,
    pub fit_seconds: f64,
    pub feature_bits: u64,
    pub multiplies: u64,
    pub additions: u64,
}

impl SweepRow {
    pub const CSV_HEADER: &'static str =
        "kind,m,epsilon,gamma,seed,mse,fit_seconds,feature_bits,multiplies,additions";

    pub fn to_csv(&self) -> String {
        format!(
            "{},{},{},{},{},{},{},{},{},{}",
            self.kind,
            self.m,
            self.epsilon,
            self.gamma,
            self.seed,
            self.mse,
            self.fit_seconds,
            self.feature_bits,
            self.multiplies,
            self.additions
        )
    }
}

fn load_source(source: &DataSource, seed: u64) -> Result<(Dataset, Dataset)> {
    match source {
        DataSource::Gmm { spec, n_test } => {
            let base: GmmSpec = spec.clone().try_into()?;
            let (train, _) = sample_gmm(&base, seed)?;
            let k = base.k();
            let mut test_spec = base.clone();
            // scale class sizes to the test split, preserving proportions
            let n = base.n();
            test_spec.class_sizes = base
                .class_sizes
                .iter()
                .map(|&na| ((na * n_test) as f64 / n as f64).round().max(1.0) as usize)
                .collect();
            let _ = k;
            let (test, _) = sample_gmm(&test_spec, seed ^ 0x7e57_7e57)?;
            Ok((train, test))
        }
        DataSource::Csv {
            path,
            label_column,
            has_header,
            standardize,
            train_fraction,
        } => {
            let selector = match label_column.parse::<usize>() {
                Ok(idx) => LabelSelector::Index(idx),
                Err(_) => LabelSelector::Name(label_column.clone()),
            };
            let data = crate::data::load_csv(
                std::path::Path::new(path),
                &selector,
                *standardize,
                *has_header,
            )?;
            split(&data, *train_fraction, seed)
        }
    }
}

/// Gaussian dense weight matrix with per-row substreams.
pub fn gaussian_weights(m: usize, p: usize, seed: u64) -> Mat {
    let mut w = Mat::zeros(m, p);
    use rayon::prelude::*;
    w.data_mut()
        .par_chunks_mut(p)
        .enumerate()
        .for_each(|(row, out)| {
            let mut rng = substream(seed, &[STREAM_RIDGE_W, row as u64]);
            for v in out.iter_mut() {
                *v = normal(&mut rng);
            }
        });
    w
}

struct BuiltFeatures {
    train: FeatureMatrix,
    test: FeatureMatrix,
    kind_label: String,
    feature_seconds: f64,
    feature_bits: u64,
    multiplies: u64,
    additions: u64,
}

fn build_features(
    kind: &SweepKind,
    m: usize,
    epsilon: f64,
    seed: u64,
    train: &Dataset,
    test: &Dataset,
) -> Result<BuiltFeatures> {
    let start = Instant::now();
    let ops = OpCounter::new();
    let p = train.p();
    let (train_f, test_f, label) = match kind {
        SweepKind::Rff => {
            let w = gaussian_weights(m, p, seed);
            (
                dense_transform(&w, train, &ActivationKind::RffPair)?,
                dense_transform(&w, test, &ActivationKind::RffPair)?,
                "rff".to_string(),
            )
        }
        SweepKind::Activation { name } => {
            let k: ActivationKind = name.parse()?;
            let w = gaussian_weights(m, p, seed);
            (
                dense_transform(&w, train, &k)?,
                dense_transform(&w, test, &k)?,
                name.clone(),
            )
        }
        SweepKind::Trf => {
            let tau_hat = estimate_tau(train)?;
            let target = moments_closed_form(&ActivationKind::RffPair, tau_hat)?;
            let thr = calibrate_thresholds_best_effort(target.d1, target.d2, tau_hat, 1024.0)?;
            let w = sample_ternary_weights(&TernaryWeightSpec {
                m,
                p,
                epsilon,
                seed,
            })?;
            (
                ternary_transform(&w, train, &thr, &ops)?,
                ternary_transform(&w, test, &thr, &ops)?,
                "trf".to_string(),
            )
        }
    };
    let feature_seconds = start.elapsed().as_secs_f64();
    Ok(BuiltFeatures {
        feature_bits: train_f.storage_bits() + test_f.storage_bits(),
        train: train_f,
        test: test_f,
        kind_label: label,
        feature_seconds,
        multiplies: ops.multiplies(),
        additions: ops.additions(),
    })
}

/// Run the full (kind x m x epsilon x seed x gamma) sweep. Feature maps and
/// Gram factorizable pieces are built once per tuple and shared across the
/// gamma grid; `fit_seconds` spreads the feature-build time evenly over the
/// grid so the per-kind total matches wall clock for the whole pipeline.
pub fn sweep(config: &SweepConfig) -> Result<Vec<SweepRow>> {
    if config.seeds.is_empty() {
        return Err(TrfError::invalid("seed list must be nonempty"));
    }
    if config.gamma_grid.iter().any(|g| !(*g > 0.0)) {
        return Err(TrfError::invalid("gamma grid must be positive"));
    }
    let mut rows = Vec::new();
    for &seed in &config.seeds {
        let (train, test) = load_source(&config.data, seed)?;
        let y_train = targets_pm1(&train)?;
        let y_test = targets_pm1(&test)?;
        for kind in &config.kinds {
            let eps_list: &[f64] = if matches!(kind, SweepKind::Trf) {
                &config.epsilon_list
            } else {
                &[0.0]
            };
            for &m in &config.m_grid {
                for &epsilon in eps_list {
                    let built = build_features(kind, m, epsilon, seed, &train, &test)?;
                    let t_ws = Instant::now();
                    let ws = RidgeWorkspace::new(&built.train, &y_train)?;
                    let shared_seconds = built.feature_seconds + t_ws.elapsed().as_secs_f64();
                    let per_gamma_overhead = shared_seconds / config.gamma_grid.len() as f64;
                    for &gamma in &config.gamma_grid {
                        let t_solve = Instant::now();
                        let model = ws.solve(&built.train, gamma)?;
                        let mse = predict_mse(&model, &built.test, &y_test)?;
                        rows.push(SweepRow {
                            kind: built.kind_label.clone(),
                            m,
                            epsilon,
                            gamma,
                            seed,
                            mse,
                            fit_seconds: t_solve.elapsed().as_secs_f64() + per_gamma_overhead,
                            feature_bits: built.feature_bits,
                            multiplies: built.multiplies,
                            additions: built.additions,
                        });
                    }
                }
            }
        }
    }
    Ok(rows)
}

/// Write sweep rows as CSV after optional comment header lines.
pub fn write_sweep_csv<W: std::io::Write>(
    mut w: W,
    header_comments: &[String],
    rows: &[SweepRow],
) -> Result<()> {
    for line in header_comments {
        writeln!(w, "# {line}")?;
    }
    writeln!(w, "{}", SweepRow::CSV_HEADER)?;
    for row in rows {
        writeln!(w, "{}", row.to_csv())?;
    }
    Ok(())
}
