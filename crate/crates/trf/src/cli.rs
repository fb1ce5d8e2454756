//! Subcommand front end: configuration parsing, seed and worker-pool
//! management, provenance headers, and the experiment pipelines tying the
//! library together.
//!
//! Every artifact embeds the build version, a hash of the configuration
//! bytes, and the seed, so a results file can always be traced back to the
//! exact invocation. Partial outputs are removed when a command fails.

use std::io::Write;
use std::path::{Path, PathBuf};

use clap::{Parser, Subcommand, ValueEnum};

use crate::data::{estimate_tau, sample_gmm, GmmConfig, GmmSpec};
use crate::equivalent::{build_equivalent, corollary_shift, equivalence_gap};
use crate::error::{Result, TrfError};
use crate::kernels::{center, expected_kernel, KernelKind, KernelMatrix};
use crate::linalg::Mat;
use crate::moments::{
    moments_closed_form, moments_quadrature_kind, ActivationKind, GaussianMoments,
};
use crate::opcount::OpCounter;
use crate::regression::{gaussian_weights, sweep, write_sweep_csv, SweepConfig};
use crate::rng::WeightLaw;
use crate::spectral::{
    align, compare_histograms, split_spikes, sym_eigenvalues, top_eigenpairs, Histogram,
    DEFAULT_SPIKE_IQR_MULTIPLIER,
};
use crate::ternary::{
    calibrate_thresholds_best_effort, dense_transform, gram, packed_matmul_dense,
    sample_ternary_weights, solve_thresholds, FeatureMatrix, TernaryWeightSpec, Thresholds,
};

/// Build identifier embedded in artifacts (git describe when available).
pub const BUILD_VERSION: &str = env!("TRF_GIT_DESCRIBE");

#[derive(Debug, Clone, Copy, PartialEq, Eq, ValueEnum)]
pub enum OutputFormat {
    Csv,
    Json,
}

#[derive(Debug, Parser)]
#[command(name = "trf", version = BUILD_VERSION, about = "ternary random features toolkit")]
pub struct Cli {
    /// Output directory for artifacts (default: current directory).
    #[arg(long, global = true)]
    pub out: Option<PathBuf>,
    /// Root seed for every random draw.
    #[arg(long, global = true, default_value_t = 0)]
    pub seed: u64,
    /// Worker threads (default: physical cores; env TRF_THREADS as fallback).
    #[arg(long, global = true)]
    pub threads: Option<usize>,
    /// Preferred format for matrix dumps.
    #[arg(long, global = true, value_enum, default_value = "csv")]
    pub format: OutputFormat,
    #[command(subcommand)]
    pub command: Command,
}

#[derive(Debug, Subcommand)]
pub enum Command {
    /// Print the (activation x tau -> d0, d1, d2) table as CSV on stdout.
    Moments {
        /// Tau values, comma separated.
        #[arg(long, value_delimiter = ',', default_value = "1.0")]
        tau: Vec<f64>,
        /// Also cross-check each row against quadrature at this node count.
        #[arg(long)]
        check_nodes: Option<usize>,
    },
    /// Calibrate ternary thresholds to an activation's (d1, d2); JSON on
    /// stdout.
    Thresholds {
        /// Target activation (e.g. relu, sin, rff_pair, step).
        #[arg(long = "match")]
        match_kind: String,
        #[arg(long)]
        tau: f64,
        /// Half-width limit of the doubling search box.
        #[arg(long, default_value_t = 1024.0)]
        search_cap: f64,
        /// Return the least-squares best match instead of failing when the
        /// target is outside the achievable set.
        #[arg(long)]
        best_effort: bool,
    },
    /// Spectral-equivalence pipeline: gaps, eigenvalue histograms, and
    /// top-eigenvector alignments for a GMM configuration.
    Spectra {
        #[arg(long)]
        config: PathBuf,
    },
    /// Ridge-regression sweep over (kind, m, epsilon, gamma, seed).
    Regress {
        #[arg(long)]
        config: PathBuf,
    },
    /// Complexity measurements: addition counts, storage bits, wall clock.
    Bench {
        #[arg(long)]
        config: Option<PathBuf>,
        #[arg(long)]
        p: Option<usize>,
        #[arg(long)]
        n: Option<usize>,
        #[arg(long)]
        m: Option<usize>,
        /// Sparsity levels, comma separated.
        #[arg(long, value_delimiter = ',')]
        epsilon: Option<Vec<f64>>,
    },
    /// Expected-kernel dumps.
    Kernels {
        #[arg(long)]
        config: PathBuf,
    },
}

// ---------------------------------------------------------------------------
// Provenance and artifact management
// ---------------------------------------------------------------------------

/// FNV-1a hash of the raw configuration bytes.
pub fn config_hash(bytes: &[u8]) -> String {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for &b in bytes {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    format!("{h:016x}")
}

#[derive(Debug, Clone, serde::Serialize)]
pub struct Provenance {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
}

impl Provenance {
    fn new(config_bytes: &[u8], seed: u64) -> Provenance {
        Provenance {
            version: BUILD_VERSION.to_string(),
            config_hash: config_hash(config_bytes),
            seed,
        }
    }

    fn header_comments(&self) -> Vec<String> {
        vec![
            format!("version: {}", self.version),
            format!("config_hash: {}", self.config_hash),
            format!("seed: {}", self.seed),
        ]
    }
}

/// Tracks files written by a command so failures can clean up after
/// themselves, and writes the closing manifest.
struct Artifacts {
    dir: PathBuf,
    written: Vec<PathBuf>,
    provenance: Provenance,
}

impl Artifacts {
    fn new(dir: &Path, provenance: Provenance) -> Result<Artifacts> {
        std::fs::create_dir_all(dir)?;
        Ok(Artifacts {
            dir: dir.to_path_buf(),
            written: Vec::new(),
            provenance,
        })
    }

    fn path(&mut self, name: &str) -> PathBuf {
        let p = self.dir.join(name);
        self.written.push(p.clone());
        p
    }

    fn write_text(&mut self, name: &str, contents: &str) -> Result<PathBuf> {
        let p = self.path(name);
        std::fs::write(&p, contents)?;
        Ok(p)
    }

    fn finalize(&mut self) -> Result<()> {
        #[derive(serde::Serialize)]
        struct Manifest<'a> {
            #[serde(flatten)]
            provenance: &'a Provenance,
            artifacts: Vec<String>,
        }
        let body = {
            let manifest = Manifest {
                provenance: &self.provenance,
                artifacts: self
                    .written
                    .iter()
                    .filter_map(|p| p.file_name().map(|f| f.to_string_lossy().into_owned()))
                    .collect(),
            };
            serde_json::to_string_pretty(&manifest).unwrap()
        };
        let p = self.path("manifest.json");
        std::fs::write(&p, body)?;
        Ok(())
    }

    fn cleanup(&self) {
        for p in &self.written {
            let _ = std::fs::remove_file(p);
        }
    }
}

fn read_config<T: serde::de::DeserializeOwned>(path: &Path) -> Result<(T, Vec<u8>)> {
    let bytes = std::fs::read(path).map_err(|e| TrfError::Config {
        path: path.display().to_string(),
        message: e.to_string(),
    })?;
    let mut de = serde_json::Deserializer::from_slice(&bytes);
    let parsed: std::result::Result<T, _> = serde_path_to_error::deserialize(&mut de);
    match parsed {
        Ok(v) => Ok((v, bytes)),
        Err(e) => Err(TrfError::Config {
            path: format!("{}:{}", path.display(), e.path()),
            message: e.inner().to_string(),
        }),
    }
}

fn init_threads(requested: Option<usize>) {
    let n = requested.or_else(|| {
        std::env::var("TRF_THREADS")
            .ok()
            .and_then(|v| v.parse().ok())
    });
    if let Some(n) = n {
        // a second initialization in the same process is fine to ignore
        let _ = rayon::ThreadPoolBuilder::new().num_threads(n).build_global();
    }
}

/// Entry point used by the `trf` binary.
pub fn run(cli: Cli) -> Result<()> {
    init_threads(cli.threads);
    let out_dir = cli.out.clone().unwrap_or_else(|| PathBuf::from("."));
    match &cli.command {
        Command::Moments { tau, check_nodes } => cmd_moments(tau, *check_nodes),
        Command::Thresholds {
            match_kind,
            tau,
            search_cap,
            best_effort,
        } => cmd_thresholds(match_kind, *tau, *search_cap, *best_effort),
        Command::Spectra { config } => {
            with_artifacts(config, &out_dir, cli.seed, |cfg, art| cmd_spectra(cfg, art, cli.seed))
        }
        Command::Regress { config } => {
            with_artifacts(config, &out_dir, cli.seed, |cfg, art| cmd_regress(cfg, art))
        }
        Command::Bench {
            config,
            p,
            n,
            m,
            epsilon,
        } => {
            let cfg = match config {
                Some(path) => read_config::<BenchConfig>(path)?.0,
                None => BenchConfig {
                    p: p.unwrap_or(512),
                    n: n.unwrap_or(512),
                    m: m.unwrap_or(512),
                    epsilon_list: epsilon.clone().unwrap_or_else(|| vec![0.0, 0.5, 0.9]),
                },
            };
            let bytes = serde_json::to_vec(&cfg).unwrap();
            let provenance = Provenance::new(&bytes, cli.seed);
            let mut art = Artifacts::new(&out_dir, provenance)?;
            let run = cmd_bench(&cfg, &mut art, cli.seed);
            settle(run, art)
        }
        Command::Kernels { config } => {
            with_artifacts(config, &out_dir, cli.seed, |cfg, art| {
                cmd_kernels(cfg, art, cli.seed, cli.format)
            })
        }
    }
}

fn with_artifacts<T: serde::de::DeserializeOwned>(
    config_path: &Path,
    out_dir: &Path,
    seed: u64,
    body: impl FnOnce(T, &mut Artifacts) -> Result<()>,
) -> Result<()> {
    let (cfg, bytes) = read_config::<T>(config_path)?;
    let provenance = Provenance::new(&bytes, seed);
    let mut art = Artifacts::new(out_dir, provenance)?;
    let run = body(cfg, &mut art);
    settle(run, art)
}

fn settle(run: Result<()>, mut art: Artifacts) -> Result<()> {
    match run {
        Ok(()) => art.finalize(),
        Err(e) => {
            art.cleanup();
            Err(e)
        }
    }
}

// ---------------------------------------------------------------------------
// moments / thresholds (stdout commands)
// ---------------------------------------------------------------------------

fn cmd_moments(taus: &[f64], check_nodes: Option<usize>) -> Result<()> {
    let stdout = std::io::stdout();
    let mut out = stdout.lock();
    writeln!(out, "activation,tau,d0,d1,d2")?;
    for &tau in taus {
        for kind in ActivationKind::builtin_table((-0.5, 0.8)) {
            let m = moments_closed_form(&kind, tau)?;
            if let Some(nodes) = check_nodes {
                let q = moments_quadrature_kind(&kind, tau, nodes)?;
                let worst = (m.d0 - q.d0)
                    .abs()
                    .max((m.d1 - q.d1).abs())
                    .max((m.d2 - q.d2).abs());
                if worst > 1e-7 {
                    return Err(TrfError::Numerical(format!(
                        "quadrature disagrees with closed form for {kind} at tau {tau}: {worst:.3e}"
                    )));
                }
            }
            writeln!(out, "{kind},{tau},{:.17e},{:.17e},{:.17e}", m.d0, m.d1, m.d2)?;
        }
    }
    Ok(())
}

#[derive(Debug, serde::Serialize)]
struct ThresholdsOutput {
    s_minus: f64,
    s_plus: f64,
    residual: f64,
    tau: f64,
    target_d1: f64,
    target_d2: f64,
    achieved_d1: f64,
    achieved_d2: f64,
    version: String,
}

fn cmd_thresholds(match_kind: &str, tau: f64, search_cap: f64, best_effort: bool) -> Result<()> {
    let kind: ActivationKind = match_kind.parse()?;
    let target = moments_closed_form(&kind, tau)?;
    let thr = if best_effort {
        calibrate_thresholds_best_effort(target.d1, target.d2, tau, search_cap)?
    } else {
        solve_thresholds(target.d1, target.d2, tau, search_cap)?
    };
    let achieved = thr.moments()?;
    let out = ThresholdsOutput {
        s_minus: thr.s_minus,
        s_plus: thr.s_plus,
        residual: thr.residual,
        tau,
        target_d1: target.d1,
        target_d2: target.d2,
        achieved_d1: achieved.d1,
        achieved_d2: achieved.d2,
        version: BUILD_VERSION.to_string(),
    };
    println!("{}", serde_json::to_string_pretty(&out).unwrap());
    Ok(())
}

// ---------------------------------------------------------------------------
// spectra
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct SpectraConfig {
    pub gmm: GmmConfig,
    /// Activation whose expected kernel is compared against the model
    /// (needs a closed form: relu, rff_pair, step, or ternary:a,b).
    pub activation: String,
    /// Weight laws for the empirical universality comparison
    /// (gaussian, student_t7, ternary:eps). Empty list skips it.
    #[serde(default)]
    pub weight_laws: Vec<String>,
    /// Feature count for the empirical Grams.
    #[serde(default = "default_m_empirical")]
    pub m_empirical: usize,
    #[serde(default = "default_bins")]
    pub bins: usize,
    #[serde(default = "default_k_top")]
    pub k_top: usize,
}

fn default_m_empirical() -> usize {
    16_384
}
fn default_bins() -> usize {
    50
}
fn default_k_top() -> usize {
    2
}

fn parse_weight_law(s: &str) -> Result<WeightLaw> {
    match s {
        "gaussian" => Ok(WeightLaw::Gaussian),
        "student_t7" => Ok(WeightLaw::StudentT7),
        other => {
            if let Some(eps) = other.strip_prefix("ternary:") {
                let epsilon: f64 = eps
                    .parse()
                    .map_err(|e| TrfError::invalid(format!("bad epsilon '{eps}': {e}")))?;
                Ok(WeightLaw::Ternary { epsilon })
            } else {
                Err(TrfError::invalid(format!("unknown weight law '{other}'")))
            }
        }
    }
}

/// Closed-form expected kernel matching an activation under Gaussian
/// projections.
fn closed_form_kernel(kind: &ActivationKind, tau: f64) -> Result<KernelKind> {
    match kind {
        ActivationKind::ReLU => Ok(KernelKind::ArcCos1),
        ActivationKind::RffPair => Ok(KernelKind::GaussianRff),
        ActivationKind::Step => Ok(KernelKind::ArcCos0),
        ActivationKind::Ternary { s_minus, s_plus } => {
            Ok(KernelKind::TernaryExpected(Thresholds {
                s_minus: *s_minus,
                s_plus: *s_plus,
                tau,
                target: (0.0, 0.0),
                residual: 0.0,
            }))
        }
        other => Err(TrfError::Unsupported(format!(
            "no closed-form expected kernel for {other}; use relu, rff_pair, step or ternary"
        ))),
    }
}

struct Summary {
    eigenvalues: Vec<f64>,
    bulk: Vec<f64>,
    spikes: Vec<f64>,
    top_vectors: Vec<Vec<f64>>,
}

fn summarize(values: &Mat, k_top: usize) -> Result<Summary> {
    let eigenvalues = sym_eigenvalues(values)?;
    let (bulk, spikes) = split_spikes(&eigenvalues, DEFAULT_SPIKE_IQR_MULTIPLIER);
    let pairs = top_eigenpairs(values, k_top)?;
    Ok(Summary {
        eigenvalues,
        bulk,
        spikes,
        top_vectors: pairs.into_iter().map(|(_, v)| v).collect(),
    })
}

fn bulk_tv(a: &Summary, b: &Summary, bins: usize) -> Result<(f64, Histogram, Histogram)> {
    let lo = a.bulk[0].min(b.bulk[0]);
    let hi = a.bulk[a.bulk.len() - 1].max(b.bulk[b.bulk.len() - 1]);
    let ha = Histogram::build(&a.bulk, lo, hi, bins);
    let hb = Histogram::build(&b.bulk, lo, hi, bins);
    let tv = compare_histograms(&ha, &hb)?;
    Ok((tv, ha, hb))
}

fn write_histogram_pair(
    art: &mut Artifacts,
    name: &str,
    ha: &Histogram,
    hb: &Histogram,
) -> Result<()> {
    let mut text = String::new();
    for line in art.provenance.header_comments() {
        text.push_str(&format!("# {line}\n"));
    }
    text.push_str("bin_left,bin_right,count_a,count_b\n");
    for i in 0..ha.counts.len() {
        text.push_str(&format!(
            "{},{},{},{}\n",
            ha.edges[i],
            ha.edges[i + 1],
            ha.counts[i],
            hb.counts[i]
        ));
    }
    art.write_text(name, &text)?;
    Ok(())
}

fn empirical_gram_for_law(
    law: &WeightLaw,
    kind: &ActivationKind,
    data: &crate::data::Dataset,
    m: usize,
    seed: u64,
) -> Result<KernelMatrix> {
    let ops = OpCounter::new();
    let features = match law {
        WeightLaw::Ternary { epsilon } => {
            let w = sample_ternary_weights(&TernaryWeightSpec {
                m,
                p: data.p(),
                epsilon: *epsilon,
                seed,
            })?;
            let pre = packed_matmul_dense(&w, data, &ops)?;
            let mut act = pre;
            match kind {
                ActivationKind::RffPair => {
                    let mrows = act.rows();
                    let n = act.cols();
                    let mut stacked = Mat::zeros(2 * mrows, n);
                    for i in 0..mrows {
                        for j in 0..n {
                            stacked[(i, j)] = act[(i, j)].cos();
                            stacked[(mrows + i, j)] = act[(i, j)].sin();
                        }
                    }
                    act = stacked;
                }
                k => {
                    for v in act.data_mut().iter_mut() {
                        *v = k.eval(*v);
                    }
                }
            }
            FeatureMatrix::Dense {
                data: act,
                directions: m,
            }
        }
        WeightLaw::Gaussian | WeightLaw::StudentT7 => {
            let mut w = gaussian_weights(m, data.p(), seed);
            if matches!(law, WeightLaw::StudentT7) {
                // reuse the row substream layout, replacing draws
                use rayon::prelude::*;
                let p = data.p();
                w.data_mut()
                    .par_chunks_mut(p)
                    .enumerate()
                    .for_each(|(row, out)| {
                        let mut rng =
                            crate::rng::substream(seed, &[0x31, row as u64]);
                        for v in out.iter_mut() {
                            *v = WeightLaw::StudentT7.sample(&mut rng);
                        }
                    });
            }
            dense_transform(&w, data, kind)?
        }
    };
    gram(&features, &ops)
}

#[derive(serde::Serialize)]
struct HistogramOutput {
    edges: Vec<f64>,
    counts: Vec<u64>,
}

#[derive(serde::Serialize)]
struct SpectraOutput {
    version: String,
    config_hash: String,
    seed: u64,
    p: usize,
    n: usize,
    tau: f64,
    activation: String,
    d0: f64,
    d1: f64,
    d2: f64,
    spectral_gap: f64,
    relative_gap: f64,
    frobenius_gap: f64,
    model_norm: f64,
    /// |top eigenvector of K . top eigenvector of the model|, per rank.
    alignments: Vec<f64>,
    expected_vs_model_tv: f64,
    expected_histogram: HistogramOutput,
    model_histogram: HistogramOutput,
    expected_spikes: Vec<f64>,
    model_spikes: Vec<f64>,
    laws: Vec<String>,
    /// TV distance of each law's empirical bulk vs the first law's.
    law_tv_vs_first: Vec<f64>,
}

fn cmd_spectra(cfg: SpectraConfig, art: &mut Artifacts, seed: u64) -> Result<()> {
    let spec: GmmSpec = cfg.gmm.clone().try_into()?;
    let kind: ActivationKind = cfg.activation.parse()?;
    let (data, stats) = sample_gmm(&spec, seed)?;
    let d = moments_closed_form(&kind, stats.tau)?;
    let model = build_equivalent(&stats, d)?;
    let kernel_kind = closed_form_kernel(&kind, stats.tau)?;
    let expected = center(&expected_kernel(&kernel_kind, &data)?);
    let gap = equivalence_gap(&expected, &model)?;

    let s_expected = summarize(&expected.values, cfg.k_top)?;
    let s_model = summarize(&model.ktilde.values, cfg.k_top)?;
    let mut alignments = Vec::new();
    for (u, v) in s_expected.top_vectors.iter().zip(&s_model.top_vectors) {
        alignments.push(align(u, v)?);
    }
    let (tv_em, h_e, h_m) = bulk_tv(&s_expected, &s_model, cfg.bins)?;
    write_histogram_pair(art, "hist_expected_vs_model.csv", &h_e, &h_m)?;

    let mut law_names = Vec::new();
    let mut law_tvs = Vec::new();
    if !cfg.weight_laws.is_empty() {
        let laws: Vec<WeightLaw> = cfg
            .weight_laws
            .iter()
            .map(|s| parse_weight_law(s))
            .collect::<Result<_>>()?;
        let mut summaries = Vec::new();
        for law in &laws {
            let g = empirical_gram_for_law(law, &kind, &data, cfg.m_empirical, seed)?;
            let centered = center(&g);
            summaries.push(summarize(&centered.values, 1)?);
            law_names.push(law.name());
        }
        for (i, s) in summaries.iter().enumerate() {
            let (tv, ha, hb) = bulk_tv(&summaries[0], s, cfg.bins)?;
            law_tvs.push(tv);
            if i > 0 {
                write_histogram_pair(
                    art,
                    &format!("hist_{}_vs_{}.csv", law_names[0], law_names[i]),
                    &ha,
                    &hb,
                )?;
            }
        }
    }

    let out = SpectraOutput {
        version: art.provenance.version.clone(),
        config_hash: art.provenance.config_hash.clone(),
        seed,
        p: spec.p,
        n: spec.n(),
        tau: stats.tau,
        activation: cfg.activation.clone(),
        d0: d.d0,
        d1: d.d1,
        d2: d.d2,
        spectral_gap: gap.spectral_gap,
        relative_gap: gap.relative_gap,
        frobenius_gap: gap.frobenius_gap,
        model_norm: gap.model_norm,
        alignments,
        expected_vs_model_tv: tv_em,
        expected_histogram: HistogramOutput {
            edges: h_e.edges.clone(),
            counts: h_e.counts.clone(),
        },
        model_histogram: HistogramOutput {
            edges: h_m.edges.clone(),
            counts: h_m.counts.clone(),
        },
        expected_spikes: s_expected.spikes.clone(),
        model_spikes: s_model.spikes.clone(),
        laws: law_names,
        law_tv_vs_first: law_tvs,
    };
    art.write_text("spectra.json", &serde_json::to_string_pretty(&out).unwrap())?;
    let _ = s_model.eigenvalues.len();
    Ok(())
}

// ---------------------------------------------------------------------------
// regress
// ---------------------------------------------------------------------------

fn cmd_regress(cfg: SweepConfig, art: &mut Artifacts) -> Result<()> {
    let rows = sweep(&cfg)?;
    let mut buf = Vec::new();
    write_sweep_csv(&mut buf, &art.provenance.header_comments(), &rows)?;
    let p = art.path("results.csv");
    std::fs::write(&p, buf)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// bench
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct BenchConfig {
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub epsilon_list: Vec<f64>,
}

#[derive(Debug, serde::Serialize)]
pub struct BenchEntry {
    pub epsilon: f64,
    pub additions: u64,
    pub expected_additions: f64,
    pub additions_rel_err: f64,
    pub accumulation_multiplies: u64,
    pub scale_multiplies: u64,
    pub packed_bits: u64,
    pub packed_bits_per_entry: f64,
    pub dense_bits_32: u64,
    pub storage_ratio_vs_32bit: f64,
    /// The paper-style accounting that stores one bit per value.
    pub one_bit_equivalent_bits: u64,
    pub ternary_seconds: f64,
}

#[derive(Debug, serde::Serialize)]
pub struct BenchReport {
    pub version: String,
    pub config_hash: String,
    pub seed: u64,
    pub p: usize,
    pub n: usize,
    pub m: usize,
    pub dense_rff_seconds: f64,
    pub entries: Vec<BenchEntry>,
}

/// Measure the complexity claims: addition counts against (1 - eps) m n p,
/// zero accumulation multiplies, 2-bit packed storage, and ternary vs dense
/// transform wall clock.
pub fn bench_complexity(p: usize, n: usize, m: usize, epsilon_list: &[f64], seed: u64) -> Result<BenchReport> {
    let budget_bytes = 8usize
        .checked_mul(m.max(p))
        .and_then(|b| b.checked_mul(n.max(p)))
        .ok_or_else(|| TrfError::Alloc {
            bytes: usize::MAX,
            context: "bench sizes overflow".into(),
        })?;
    if budget_bytes > 1 << 33 {
        return Err(TrfError::Alloc {
            bytes: budget_bytes,
            context: format!("bench with p={p} n={n} m={m} exceeds the desk-scale budget"),
        });
    }
    let spec = GmmSpec {
        p,
        class_sizes: vec![n],
        means: vec![vec![0.0; p]],
        covariances: vec![crate::data::Covariance::Isotropic(1.0)],
    };
    let (data, _) = sample_gmm(&spec, seed)?;
    let thr = Thresholds {
        s_minus: -0.6744897501960818, // standard normal quartiles
        s_plus: 0.6744897501960818,
        tau: 1.0,
        target: (0.0, 0.0),
        residual: 0.0,
    };

    // dense RFF baseline at the same direction count
    let t0 = std::time::Instant::now();
    let w_dense = gaussian_weights(m, p, seed ^ 0xbe);
    let _rff = dense_transform(&w_dense, &data, &ActivationKind::RffPair)?;
    let dense_rff_seconds = t0.elapsed().as_secs_f64();

    let mut entries = Vec::new();
    for &epsilon in epsilon_list {
        let w = sample_ternary_weights(&TernaryWeightSpec {
            m,
            p,
            epsilon,
            seed: seed ^ 0xaf,
        })?;
        let ops = OpCounter::new();
        let t1 = std::time::Instant::now();
        let features = crate::ternary::ternary_transform(&w, &data, &thr, &ops)?;
        let ternary_seconds = t1.elapsed().as_secs_f64();
        let additions = ops.additions();
        let expected_additions = (1.0 - epsilon) * (m * n * p) as f64;
        let packed_bits = match &features {
            FeatureMatrix::PackedTernary { data, .. } => 8 * data.packed_bytes() as u64,
            _ => unreachable!(),
        };
        let dense_bits_32 = 32 * (m * n) as u64;
        entries.push(BenchEntry {
            epsilon,
            additions,
            expected_additions,
            additions_rel_err: (additions as f64 - expected_additions).abs()
                / expected_additions,
            accumulation_multiplies: ops.multiplies(),
            scale_multiplies: ops.scale_multiplies(),
            packed_bits,
            packed_bits_per_entry: packed_bits as f64 / (m * n) as f64,
            dense_bits_32,
            storage_ratio_vs_32bit: dense_bits_32 as f64 / packed_bits as f64,
            one_bit_equivalent_bits: (m * n) as u64,
            ternary_seconds,
        });
    }
    Ok(BenchReport {
        version: BUILD_VERSION.to_string(),
        config_hash: String::new(),
        seed,
        p,
        n,
        m,
        dense_rff_seconds,
        entries,
    })
}

fn cmd_bench(cfg: &BenchConfig, art: &mut Artifacts, seed: u64) -> Result<()> {
    let mut report = bench_complexity(cfg.p, cfg.n, cfg.m, &cfg.epsilon_list, seed)?;
    report.config_hash = art.provenance.config_hash.clone();
    art.write_text("bench.json", &serde_json::to_string_pretty(&report).unwrap())?;
    let mut csv = String::new();
    for line in art.provenance.header_comments() {
        csv.push_str(&format!("# {line}\n"));
    }
    csv.push_str(
        "epsilon,additions,expected_additions,accumulation_multiplies,scale_multiplies,\
         packed_bits,dense_bits_32,storage_ratio,ternary_seconds,dense_rff_seconds\n",
    );
    for e in &report.entries {
        csv.push_str(&format!(
            "{},{},{},{},{},{},{},{},{},{}\n",
            e.epsilon,
            e.additions,
            e.expected_additions,
            e.accumulation_multiplies,
            e.scale_multiplies,
            e.packed_bits,
            e.dense_bits_32,
            e.storage_ratio_vs_32bit,
            e.ternary_seconds,
            report.dense_rff_seconds
        ));
    }
    art.write_text("bench.csv", &csv)?;
    Ok(())
}

// ---------------------------------------------------------------------------
// kernels
// ---------------------------------------------------------------------------

#[derive(Debug, Clone, serde::Serialize, serde::Deserialize)]
pub struct KernelsConfig {
    pub gmm: GmmConfig,
    /// gaussian_rff | arccos0 | arccos1 | ternary:a,b | ternary_matched:<activation>
    pub kinds: Vec<String>,
    #[serde(default)]
    pub centered: bool,
}

fn parse_kernel_kind(s: &str, tau: f64) -> Result<KernelKind> {
    match s {
        "gaussian_rff" => Ok(KernelKind::GaussianRff),
        "arccos0" => Ok(KernelKind::ArcCos0),
        "arccos1" => Ok(KernelKind::ArcCos1),
        other => {
            if let Some(args) = other.strip_prefix("ternary_matched:") {
                let kind: ActivationKind = args.parse()?;
                let target = moments_closed_form(&kind, tau)?;
                let thr = calibrate_thresholds_best_effort(target.d1, target.d2, tau, 1024.0)?;
                Ok(KernelKind::TernaryExpected(thr))
            } else if let Some(args) = other.strip_prefix("ternary:") {
                let kind: ActivationKind = format!("ternary:{args}").parse()?;
                if let ActivationKind::Ternary { s_minus, s_plus } = kind {
                    Ok(KernelKind::TernaryExpected(Thresholds {
                        s_minus,
                        s_plus,
                        tau,
                        target: (0.0, 0.0),
                        residual: 0.0,
                    }))
                } else {
                    unreachable!()
                }
            } else {
                Err(TrfError::invalid(format!("unknown kernel kind '{other}'")))
            }
        }
    }
}

fn cmd_kernels(
    cfg: KernelsConfig,
    art: &mut Artifacts,
    seed: u64,
    format: OutputFormat,
) -> Result<()> {
    let spec: GmmSpec = cfg.gmm.clone().try_into()?;
    let (data, _) = sample_gmm(&spec, seed)?;
    let tau_hat = estimate_tau(&data)?;
    for kind_name in &cfg.kinds {
        let kind = parse_kernel_kind(kind_name, tau_hat)?;
        let mut k = expected_kernel(&kind, &data)?;
        if cfg.centered {
            k = center(&k);
        }
        let stem = kind_name.replace([':', ','], "_");
        let path = art.path(&format!("{stem}.kmx"));
        let file = std::fs::File::create(&path)?;
        k.write_kmx(std::io::BufWriter::new(file))?;
        if matches!(format, OutputFormat::Csv) && data.n() <= 512 {
            let mut buf = Vec::new();
            for line in art.provenance.header_comments() {
                writeln!(buf, "# {line}")?;
            }
            k.write_csv(&mut buf)?;
            let p = art.path(&format!("{stem}.csv"));
            std::fs::write(&p, buf)?;
        }
    }
    Ok(())
}

/// Corollary-style comparison used by examples and the acceptance suite:
/// RFF expected kernel vs the moment-matched ternary expected kernel.
pub struct KernelMatchOutcome {
    pub thresholds: Thresholds,
    pub d0_rff: f64,
    pub d0_ternary: f64,
    pub report: crate::equivalent::ShiftReport,
}

pub fn kernel_match_pipeline(data: &crate::data::Dataset) -> Result<KernelMatchOutcome> {
    let tau_hat = estimate_tau(data)?;
    let rff_moments: GaussianMoments = moments_closed_form(&ActivationKind::RffPair, tau_hat)?;
    let thresholds =
        calibrate_thresholds_best_effort(rff_moments.d1, rff_moments.d2, tau_hat, 1024.0)?;
    let ter_moments = thresholds.moments()?;
    let k_rff = center(&expected_kernel(&KernelKind::GaussianRff, data)?);
    let k_ter = center(&expected_kernel(&KernelKind::TernaryExpected(thresholds), data)?);
    let report = corollary_shift(&k_rff, &k_ter, rff_moments.d0, ter_moments.d0)?;
    Ok(KernelMatchOutcome {
        thresholds,
        d0_rff: rff_moments.d0,
        d0_ternary: ter_moments.d0,
        report,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn config_hash_is_stable() {
        assert_eq!(config_hash(b"abc"), config_hash(b"abc"));
        assert_ne!(config_hash(b"abc"), config_hash(b"abd"));
    }

    #[test]
    fn weight_law_parsing() {
        assert!(matches!(
            parse_weight_law("gaussian").unwrap(),
            WeightLaw::Gaussian
        ));
        assert!(matches!(
            parse_weight_law("student_t7").unwrap(),
            WeightLaw::StudentT7
        ));
        match parse_weight_law("ternary:0.5").unwrap() {
            WeightLaw::Ternary { epsilon } => assert_eq!(epsilon, 0.5),
            other => panic!("{other:?}"),
        }
        assert!(parse_weight_law("cauchy").is_err());
    }

    #[test]
    fn kernel_kind_parsing() {
        assert!(parse_kernel_kind("gaussian_rff", 1.0).is_ok());
        assert!(parse_kernel_kind("arccos1", 1.0).is_ok());
        assert!(parse_kernel_kind("ternary:-0.5,0.5", 1.0).is_ok());
        assert!(parse_kernel_kind("ternary_matched:relu", 1.0).is_ok());
        assert!(parse_kernel_kind("nope", 1.0).is_err());
    }

    #[test]
    fn bench_rejects_oversized_requests() {
        let err = bench_complexity(1 << 20, 1 << 20, 1 << 20, &[0.5], 0).unwrap_err();
        assert!(matches!(err, TrfError::Alloc { .. }));
    }

    #[test]
    fn bench_small_run_counts_exactly() {
        let report = bench_complexity(64, 32, 48, &[0.0, 0.5], 1).unwrap();
        assert_eq!(report.entries.len(), 2);
        let e0 = &report.entries[0];
        // epsilon = 0: every weight is nonzero, additions = m n p exactly
        assert_eq!(e0.additions, (48 * 32 * 64) as u64);
        assert_eq!(e0.accumulation_multiplies, 0);
        for e in &report.entries {
            assert!(e.additions_rel_err < 0.05, "eps {}: {}", e.epsilon, e.additions_rel_err);
            assert_eq!(e.accumulation_multiplies, 0);
        }
    }
}
