//! Acceptance suite: one test per criterion, each printing a pass/fail line
//! (run with `cargo test --test acceptance -- --nocapture` to see them all).
//!
//! Criteria that depend on the printed threshold system being consistent
//! with the weak-derivative moments are partially unreachable (the ternary
//! moment map caps d1 at 2/(pi tau) and d2 at phi(1)^2/tau^2); the affected
//! sub-checks run as stated and report honestly.

use trf::data::{sample_gmm, CovarianceConfig, GmmConfig, GmmSpec};
use trf::equivalent::{build_equivalent, equivalence_gap};
use trf::kernels::{bvn_cdf, center, expected_kernel, monte_carlo_entry, KernelKind};
use trf::linalg::Mat;
use trf::moments::{
    moments_closed_form, moments_quadrature, moments_quadrature_kind, std_normal_cdf,
    ternary_eval, ActivationKind,
};
use trf::opcount::OpCounter;
use trf::regression::{gaussian_weights, sweep, DataSource, SweepConfig, SweepKind};
use trf::rng::{normal, substream, WeightLaw};
use trf::spectral::{align, compare_histograms, split_spikes, sym_eigenvalues, top_eigenpairs, Histogram};
use trf::ternary::{
    dense_transform, gram, packed_matmul_dense, sample_ternary_weights, solve_thresholds,
    ternary_transform, FeatureMatrix, TernaryWeightSpec, Thresholds,
};

const PI: f64 = std::f64::consts::PI;

fn status(ok: bool) -> &'static str {
    if ok {
        "PASS"
    } else {
        "FAIL"
    }
}

fn median(xs: &mut [f64]) -> f64 {
    xs.sort_by(|a, b| a.partial_cmp(b).unwrap());
    xs[xs.len() / 2]
}

// -------------------------------------------------------------------------
// 1. moment table reproduction
// -------------------------------------------------------------------------

#[test]
fn criterion_1_moment_table() {
    let start = std::time::Instant::now();
    // independently coded table rows at tau = 1 (d0, d1, d2), checked to
    // 12 significant digits against the library closed forms
    let tau = 1.0;
    let rows: Vec<(ActivationKind, [f64; 3])> = vec![
        (ActivationKind::Abs, [1.0 - 2.0 / PI, 0.0, 1.0 / (2.0 * PI)]),
        (
            ActivationKind::ReLU,
            [0.5 * (0.5 - 1.0 / PI), 0.25, 1.0 / (8.0 * PI)],
        ),
        (
            ActivationKind::LeakyCombo {
                a_plus: 1.0,
                a_minus: 0.25,
            },
            [
                1.25f64.powi(2) * (PI - 2.0) / (4.0 * PI),
                0.75f64.powi(2) / 4.0,
                1.25f64.powi(2) / (8.0 * PI),
            ],
        ),
        (
            ActivationKind::Quadratic {
                a2: 0.5,
                a1: 1.0,
                a0: -0.5,
            },
            [2.0 * 0.25, 1.0, 0.25],
        ),
        (
            ActivationKind::GaussianBump,
            [
                1.0 / 3.0f64.sqrt() - 0.5,
                0.0,
                1.0 / (4.0 * 8.0),
            ],
        ),
        (
            ActivationKind::Cos,
            [
                (1.0 + (-2.0f64).exp()) / 2.0 - (-1.0f64).exp(),
                0.0,
                (-1.0f64).exp() / 4.0,
            ],
        ),
        (
            ActivationKind::Sin,
            [
                (1.0 - (-2.0f64).exp()) / 2.0 - (-1.0f64).exp(),
                (-1.0f64).exp(),
                0.0,
            ],
        ),
        (ActivationKind::Identity, [0.0, 1.0, 0.0]),
        (ActivationKind::Sign, [1.0 - 2.0 / PI, 2.0 / PI, 0.0]),
        (
            ActivationKind::Step,
            [0.25 - 1.0 / (2.0 * PI), 1.0 / (2.0 * PI), 0.0],
        ),
    ];
    let mut worst_rel = 0.0f64;
    for (kind, want) in &rows {
        let got = moments_closed_form(kind, tau).unwrap();
        for (g, w) in [got.d0, got.d1, got.d2].iter().zip(want) {
            let rel = (g - w).abs() / w.abs().max(1e-300);
            if *w == 0.0 {
                assert_eq!(*g, 0.0, "{kind}: expected exact zero");
            } else {
                worst_rel = worst_rel.max(rel);
            }
        }
    }
    let digits_ok = worst_rel <= 5e-12;

    // the CLI table route prints the same closed forms
    let output = std::process::Command::new(env!("CARGO_BIN_EXE_trf"))
        .args(["moments", "--tau", "1.0"])
        .output()
        .expect("run trf moments");
    let cli_ok = output.status.success()
        && String::from_utf8_lossy(&output.stdout).starts_with("activation,tau,d0,d1,d2");

    // quadrature agreement within 1e-7 across taus
    let mut worst_quad = 0.0f64;
    for t in [0.25, 1.0, 4.0] {
        for kind in ActivationKind::builtin_table((-0.5, 0.8)) {
            let c = moments_closed_form(&kind, t).unwrap();
            let q = moments_quadrature_kind(&kind, t, 512).unwrap();
            worst_quad = worst_quad
                .max((c.d0 - q.d0).abs())
                .max((c.d1 - q.d1).abs())
                .max((c.d2 - q.d2).abs());
        }
    }
    let quad_ok = worst_quad <= 1e-7;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = digits_ok && cli_ok && quad_ok && elapsed < 1.0;
    println!(
        "criterion 1 (moment table): {} (worst closed-form rel err {worst_rel:.2e}, \
         worst quadrature err {worst_quad:.2e}, cli {}, {elapsed:.2}s)",
        status(ok),
        status(cli_ok)
    );
    assert!(digits_ok, "closed forms off Table values: {worst_rel:.3e}");
    assert!(cli_ok, "CLI moments table failed");
    assert!(quad_ok, "quadrature disagreement {worst_quad:.3e}");
    assert!(elapsed < 1.0, "over the 1 second budget: {elapsed}");
}

// -------------------------------------------------------------------------
// 2. threshold calibration
// -------------------------------------------------------------------------

#[test]
fn criterion_2_threshold_calibration() {
    let start = std::time::Instant::now();
    let targets = [
        ActivationKind::ReLU,
        ActivationKind::Sign,
        ActivationKind::Sin,
        ActivationKind::RffPair,
        ActivationKind::Step,
    ];
    let mut failures = Vec::new();
    for kind in &targets {
        for tau in [0.5, 1.0, 2.0] {
            let t = moments_closed_form(kind, tau).unwrap();
            match solve_thresholds(t.d1, t.d2, tau, 1024.0) {
                Ok(thr) => {
                    let (a, b) = (thr.s_minus, thr.s_plus);
                    let q = moments_quadrature(move |x| ternary_eval(x, a, b), tau, 512).unwrap();
                    let r1 = (q.d1 - t.d1).abs() / t.d1.abs().max(1e-3);
                    let r2 = (q.d2 - t.d2).abs() / t.d2.abs().max(1e-3);
                    if r1.max(r2) > 1e-7 {
                        failures.push(format!(
                            "{kind}@tau={tau}: quadrature residual {:.2e}",
                            r1.max(r2)
                        ));
                    }
                }
                Err(e) => failures.push(format!("{kind}@tau={tau}: {e}")),
            }
        }
    }
    // degenerate fixed point at each tau
    let mut degenerate_ok = true;
    for tau in [0.5, 1.0, 2.0] {
        let thr = solve_thresholds(2.0 / (PI * tau), 0.0, tau, 1024.0).unwrap();
        if thr.s_minus.abs() > 1e-5 || thr.s_plus.abs() > 1e-5 {
            degenerate_ok = false;
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = failures.is_empty() && degenerate_ok && elapsed < 5.0;
    println!(
        "criterion 2 (threshold calibration): {} ({}/15 combos calibrate to 1e-7, \
         degenerate fixed point {}, {elapsed:.2}s)",
        status(ok),
        15 - failures.len(),
        status(degenerate_ok)
    );
    for f in &failures {
        println!("  unreachable target: {f}");
    }
    assert!(elapsed < 5.0, "over the 5 second budget: {elapsed}");
    assert!(degenerate_ok, "degenerate target did not recover (0, 0)");
    assert!(
        failures.is_empty(),
        "targets outside the ternary moment range: {failures:?}"
    );
}

// -------------------------------------------------------------------------
// 3. spectral equivalence
// -------------------------------------------------------------------------

#[test]
fn criterion_3_spectral_equivalence() {
    let start = std::time::Instant::now();
    let seeds = [0u64, 1, 2, 3, 4];
    let mut medians = Vec::new();
    let mut align_at_512 = Vec::new();
    for p in [128usize, 256, 512] {
        let n = 4 * p;
        let mut gaps = Vec::new();
        for &seed in &seeds {
            let spec = GmmSpec::two_class_benchmark(p, n);
            let (data, stats) = sample_gmm(&spec, seed).unwrap();
            let d = moments_closed_form(&ActivationKind::ReLU, stats.tau).unwrap();
            let model = build_equivalent(&stats, d).unwrap();
            let k = center(&expected_kernel(&KernelKind::ArcCos1, &data).unwrap());
            let gap = equivalence_gap(&k, &model).unwrap();
            gaps.push(gap.relative_gap);
            if p == 512 {
                let top_k = top_eigenpairs(&k.values, 1).unwrap();
                let top_m = top_eigenpairs(&model.ktilde.values, 1).unwrap();
                align_at_512.push(align(&top_k[0].1, &top_m[0].1).unwrap());
            }
        }
        medians.push(median(&mut gaps));
    }
    let decreasing = medians[0] > medians[1] && medians[1] > medians[2];
    let below = medians[2] < 0.15;
    let alignment = median(&mut align_at_512);
    let aligned = alignment >= 0.95;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = decreasing && below && aligned && elapsed < 600.0;
    println!(
        "criterion 3 (spectral equivalence): {} (median relative gaps {:.4} > {:.4} > {:.4}, \
         p=512 gap < 0.15 {}, alignment {:.4} >= 0.95 {}, {elapsed:.1}s)",
        status(ok),
        medians[0],
        medians[1],
        medians[2],
        status(below),
        alignment,
        status(aligned)
    );
    assert!(decreasing, "relative gap not decreasing: {medians:?}");
    assert!(below, "relative gap at p=512 is {}", medians[2]);
    assert!(aligned, "top eigenvector alignment {alignment}");
    assert!(elapsed < 600.0, "over the 10 minute budget: {elapsed}");
}

// -------------------------------------------------------------------------
// 4. universality
// -------------------------------------------------------------------------

fn law_gram_bulk(
    law: &WeightLaw,
    kind: &ActivationKind,
    data: &trf::data::Dataset,
    m: usize,
    seed: u64,
) -> Vec<f64> {
    let ops = OpCounter::new();
    let features = match law {
        WeightLaw::Ternary { epsilon } => {
            let w = sample_ternary_weights(&TernaryWeightSpec {
                m,
                p: data.p(),
                epsilon: *epsilon,
                seed,
            })
            .unwrap();
            let mut pre = packed_matmul_dense(&w, data, &ops).unwrap();
            for v in pre.data_mut().iter_mut() {
                *v = kind.eval(*v);
            }
            FeatureMatrix::Dense {
                data: pre,
                directions: m,
            }
        }
        WeightLaw::Gaussian => {
            let w = gaussian_weights(m, data.p(), seed);
            dense_transform(&w, data, kind).unwrap()
        }
        WeightLaw::StudentT7 => {
            let p = data.p();
            let mut w = Mat::zeros(m, p);
            for row in 0..m {
                let mut rng = substream(seed, &[0x71, row as u64]);
                for j in 0..p {
                    w[(row, j)] = WeightLaw::StudentT7.sample(&mut rng);
                }
            }
            dense_transform(&w, data, kind).unwrap()
        }
    };
    let g = center(&gram(&features, &ops).unwrap());
    let eigs = sym_eigenvalues(&g.values).unwrap();
    split_spikes(&eigs, 10.0).0
}

fn bulk_tv(a: &[f64], b: &[f64], bins: usize) -> f64 {
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    compare_histograms(
        &Histogram::build(a, lo, hi, bins),
        &Histogram::build(b, lo, hi, bins),
    )
    .unwrap()
}

#[test]
fn criterion_4_universality() {
    let start = std::time::Instant::now();
    let (p, n, m, seed) = (512usize, 1024usize, 16_384usize, 0u64);
    let spec = GmmSpec::two_class_benchmark(p, n);
    let (data, _) = sample_gmm(&spec, seed).unwrap();
    let relu = ActivationKind::ReLU;
    let b_gauss = law_gram_bulk(&WeightLaw::Gaussian, &relu, &data, m, seed + 10);
    let b_t7 = law_gram_bulk(&WeightLaw::StudentT7, &relu, &data, m, seed + 20);
    let b_ter = law_gram_bulk(&WeightLaw::Ternary { epsilon: 0.5 }, &relu, &data, m, seed + 30);
    let b_sin = law_gram_bulk(&WeightLaw::Gaussian, &ActivationKind::Sin, &data, m, seed + 10);

    let tv_t7 = bulk_tv(&b_gauss, &b_t7, 50);
    let tv_ter = bulk_tv(&b_gauss, &b_ter, 50);
    let tv_sin = bulk_tv(&b_gauss, &b_sin, 50);
    let elapsed = start.elapsed().as_secs_f64();
    let ok = tv_t7 <= 0.08 && tv_ter <= 0.08 && tv_sin > tv_t7 && tv_sin > tv_ter && elapsed < 600.0;
    println!(
        "criterion 4 (universality): {} (TV gauss-t7 {tv_t7:.4}, gauss-ternary {tv_ter:.4}, \
         negative control relu-sin {tv_sin:.4}, {elapsed:.1}s)",
        status(ok)
    );
    assert!(tv_t7 <= 0.08, "student-t TV {tv_t7}");
    assert!(tv_ter <= 0.08, "ternary TV {tv_ter}");
    assert!(
        tv_sin > tv_t7 && tv_sin > tv_ter,
        "negative control not separated: {tv_sin} vs {tv_t7}/{tv_ter}"
    );
    assert!(elapsed < 600.0, "over the 10 minute budget: {elapsed}");
}

// -------------------------------------------------------------------------
// 5. kernel match (lambda shift)
// -------------------------------------------------------------------------

#[test]
fn criterion_5_kernel_match() {
    let start = std::time::Instant::now();
    let spec = GmmSpec::two_class_benchmark(512, 1024);
    let (data, _) = sample_gmm(&spec, 3).unwrap();
    let outcome = trf::cli::kernel_match_pipeline(&data).unwrap();
    let r = &outcome.report;
    let shifted_ok = r.shifted_relative <= 0.2;
    let ordered_ok = r.shifted_gap <= r.unshifted_gap;
    let d0_diff = outcome.d0_rff - outcome.d0_ternary;
    let lambda_ok = (r.lambda_star - d0_diff).abs() <= 0.1 * d0_diff.abs();
    let elapsed = start.elapsed().as_secs_f64();
    let ok = shifted_ok && ordered_ok && lambda_ok && elapsed < 300.0;
    println!(
        "criterion 5 (kernel match): {} (shifted relative gap {:.4} <= 0.2 {}, \
         shifted {:.4} <= unshifted {:.4} {}, lambda* {:.4} vs d0 diff {:.4} within 10% {}, \
         calibration residual {:.2e}, {elapsed:.1}s)",
        status(ok),
        r.shifted_relative,
        status(shifted_ok),
        r.shifted_gap,
        r.unshifted_gap,
        status(ordered_ok),
        r.lambda_star,
        d0_diff,
        status(lambda_ok),
        outcome.thresholds.residual
    );
    assert!(shifted_ok, "shifted relative gap {}", r.shifted_relative);
    assert!(
        ordered_ok,
        "shift did not reduce the gap: {} vs {}",
        r.shifted_gap, r.unshifted_gap
    );
    assert!(
        lambda_ok,
        "lambda* {} vs d0 difference {d0_diff} (the d2 target at tau ~ 1.1 exceeds the \
         ternary ceiling, so the residual mismatch dominates the scanned optimum)",
        r.lambda_star
    );
}

// -------------------------------------------------------------------------
// 6. ridge regression trend
// -------------------------------------------------------------------------

#[test]
fn criterion_6_ridge_regression() {
    let start = std::time::Instant::now();
    let p = 512;
    let mut mean_a = vec![0.0; p];
    let mut mean_b = vec![0.0; p];
    mean_a[0] = 4.0;
    mean_b[1] = 4.0;
    let gamma_grid: Vec<f64> = (0..13)
        .map(|i| 10f64.powf(-2.0 + 6.0 * i as f64 / 12.0))
        .collect();
    let cfg = SweepConfig {
        data: DataSource::Gmm {
            spec: GmmConfig {
                p,
                class_sizes: vec![512, 512],
                means: vec![mean_a, mean_b],
                covariances: vec![
                    CovarianceConfig::Isotropic { isotropic: 1.0 },
                    CovarianceConfig::Isotropic {
                        isotropic: 1.0 + 4.0 / (p as f64).sqrt(),
                    },
                ],
            },
            n_test: 512,
        },
        kinds: vec![SweepKind::Rff, SweepKind::Trf],
        m_grid: vec![512, 4096, 10_000],
        gamma_grid: gamma_grid.clone(),
        epsilon_list: vec![0.9],
        seeds: vec![0, 1, 2, 3, 4],
    };
    let rows = sweep(&cfg).unwrap();

    // per (kind, m, seed): optimal-gamma MSE; medians over seeds
    let opt_mse = |kind: &str, m: usize, seed: u64| -> f64 {
        rows.iter()
            .filter(|r| r.kind == kind && r.m == m && r.seed == seed)
            .map(|r| r.mse)
            .fold(f64::INFINITY, f64::min)
    };
    let mut gap_medians = Vec::new();
    for &m in &[512usize, 4096, 10_000] {
        let mut gaps: Vec<f64> = (0..5)
            .map(|s| (opt_mse("trf", m, s) - opt_mse("rff", m, s)).abs())
            .collect();
        gap_medians.push(median(&mut gaps));
    }
    let non_increasing =
        gap_medians[0] >= gap_medians[1] - 1e-12 && gap_medians[1] >= gap_medians[2] - 1e-12;

    // at m = 1e4: median curves within 0.05 absolute across the grid
    let mut worst_curve_gap = 0.0f64;
    for &gamma in &gamma_grid {
        let curve = |kind: &str| -> f64 {
            let mut v: Vec<f64> = rows
                .iter()
                .filter(|r| r.kind == kind && r.m == 10_000 && r.gamma == gamma)
                .map(|r| r.mse)
                .collect();
            median(&mut v)
        };
        worst_curve_gap = worst_curve_gap.max((curve("trf") - curve("rff")).abs());
    }
    let curve_ok = worst_curve_gap <= 0.05;
    let elapsed = start.elapsed().as_secs_f64();
    let ok = non_increasing && curve_ok && elapsed < 900.0;
    println!(
        "criterion 6 (ridge regression): {} (optimal-gamma gap medians {:.4} >= {:.4} >= {:.4} {}, \
         m=1e4 curve gap {:.4} <= 0.05 {}, {elapsed:.1}s)",
        status(ok),
        gap_medians[0],
        gap_medians[1],
        gap_medians[2],
        status(non_increasing),
        worst_curve_gap,
        status(curve_ok)
    );
    assert!(
        non_increasing,
        "optimal-gamma MSE gap not non-increasing in m: {gap_medians:?}"
    );
    assert!(curve_ok, "m=1e4 curve gap {worst_curve_gap}");
    assert!(elapsed < 900.0, "over the 15 minute budget: {elapsed}");
}

// -------------------------------------------------------------------------
// 7. complexity claims
// -------------------------------------------------------------------------

#[test]
fn criterion_7_complexity() {
    let start = std::time::Instant::now();
    let report = trf::cli::bench_complexity(512, 512, 512, &[0.0, 0.5, 0.9], 0).unwrap();
    let mut all_ok = true;
    let mut faster_at_high_eps = true;
    for e in &report.entries {
        let mult_free = e.accumulation_multiplies == 0;
        let within = e.additions_rel_err <= 0.05;
        let header_bits = 8 * 20u64;
        let exact_two_bits = e.packed_bits == 2 * 512 * 512 + header_bits;
        let ratio = e.storage_ratio_vs_32bit >= 15.9;
        if e.epsilon >= 0.5 && e.ternary_seconds >= report.dense_rff_seconds {
            faster_at_high_eps = false;
        }
        all_ok &= mult_free && within && exact_two_bits && ratio;
        println!(
            "  eps {}: multiplies {} additions err {:.4} bits/entry {:.4} ratio {:.2} \
             ternary {:.3}s vs dense {:.3}s",
            e.epsilon,
            e.accumulation_multiplies,
            e.additions_rel_err,
            e.packed_bits_per_entry,
            e.storage_ratio_vs_32bit,
            e.ternary_seconds,
            report.dense_rff_seconds
        );
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = all_ok && faster_at_high_eps && elapsed < 120.0;
    println!(
        "criterion 7 (complexity): {} (mult-free, 5% additions, 2 bits + header, \
         ternary faster at eps >= 0.5 {}, {elapsed:.1}s)",
        status(ok),
        status(faster_at_high_eps)
    );
    assert!(all_ok, "complexity accounting failed");
    assert!(faster_at_high_eps, "ternary transform not faster than dense");
    assert!(elapsed < 120.0, "over the 2 minute budget");
}

// -------------------------------------------------------------------------
// 8. oracle equivalences
// -------------------------------------------------------------------------

#[test]
fn criterion_8_oracles() {
    let start = std::time::Instant::now();

    // packed ternary transform vs dense reference, exact, random instances
    let mut transform_ok = true;
    for seed in 0..20u64 {
        let mut rng = substream(seed, &[0xac]);
        let p = 8 + (rand::Rng::gen::<u64>(&mut rng) % 121) as usize;
        let m = 4 + (rand::Rng::gen::<u64>(&mut rng) % 125) as usize;
        let n = 3 + (rand::Rng::gen::<u64>(&mut rng) % 126) as usize;
        let spec = GmmSpec {
            p,
            class_sizes: vec![n],
            means: vec![vec![0.0; p]],
            covariances: vec![trf::data::Covariance::Isotropic(1.0)],
        };
        let (data, _) = sample_gmm(&spec, seed).unwrap();
        let w = sample_ternary_weights(&TernaryWeightSpec {
            m,
            p,
            epsilon: 0.4,
            seed: 500 + seed,
        })
        .unwrap();
        let thr = Thresholds {
            s_minus: -0.3,
            s_plus: 0.45,
            tau: 1.0,
            target: (0.0, 0.0),
            residual: 0.0,
        };
        let ops = OpCounter::new();
        let fast = ternary_transform(&w, &data, &thr, &ops).unwrap().to_dense();
        let wd = w.to_dense();
        'outer: for k in 0..m {
            for i in 0..n {
                let mut t = 0.0;
                for j in 0..p {
                    t += wd[(k, j)] * data.x[(j, i)];
                }
                if fast[(k, i)] != ternary_eval(t, thr.s_minus, thr.s_plus) {
                    transform_ok = false;
                    break 'outer;
                }
            }
        }
    }

    // bvn vs Sheppard at 100 correlations
    let mut worst_bvn = 0.0f64;
    for i in 0..100 {
        let rho = -0.995 + 1.99 * i as f64 / 99.0;
        let want = 0.25 + rho.asin() / (2.0 * PI);
        worst_bvn = worst_bvn.max((bvn_cdf(0.0, 0.0, rho) - want).abs());
    }
    let bvn_ok = worst_bvn <= 5e-9;

    // Monte Carlo vs closed forms, 10 pairs per kernel, 4 standard errors
    let spec = GmmSpec {
        p: 32,
        class_sizes: vec![20],
        means: vec![vec![0.0; 32]],
        covariances: vec![trf::data::Covariance::Isotropic(1.0)],
    };
    let (data, _) = sample_gmm(&spec, 77).unwrap();
    let thr = Thresholds {
        s_minus: -0.4,
        s_plus: 0.7,
        tau: 1.0,
        target: (0.0, 0.0),
        residual: 0.0,
    };
    let cases: Vec<(KernelKind, ActivationKind)> = vec![
        (KernelKind::GaussianRff, ActivationKind::RffPair),
        (KernelKind::ArcCos0, ActivationKind::Step),
        (KernelKind::ArcCos1, ActivationKind::ReLU),
        (
            KernelKind::TernaryExpected(thr),
            ActivationKind::Ternary {
                s_minus: thr.s_minus,
                s_plus: thr.s_plus,
            },
        ),
    ];
    let mut mc_ok = true;
    let mut worst_sigmas = 0.0f64;
    for (kernel, activation) in &cases {
        let closed = expected_kernel(kernel, &data).unwrap();
        for pair in 0..10usize {
            let (i, j) = (2 * pair, 2 * pair + 1);
            let (mc, se) = monte_carlo_entry(
                activation,
                &WeightLaw::Gaussian,
                &data.x.col(i),
                &data.x.col(j),
                1_000_000,
                9_000 + pair as u64,
            );
            let sigmas = (mc - closed.values[(i, j)]).abs() / se.max(1e-9);
            worst_sigmas = worst_sigmas.max(sigmas);
            if sigmas > 4.0 {
                mc_ok = false;
            }
        }
    }
    let elapsed = start.elapsed().as_secs_f64();
    let ok = transform_ok && bvn_ok && mc_ok && elapsed < 180.0;
    println!(
        "criterion 8 (oracles): {} (transform exact {}, bvn worst {worst_bvn:.2e}, \
         mc worst {worst_sigmas:.2} sigma, {elapsed:.1}s)",
        status(ok),
        status(transform_ok)
    );
    assert!(transform_ok, "packed transform deviates from dense reference");
    assert!(bvn_ok, "bvn worst error {worst_bvn}");
    assert!(mc_ok, "monte carlo deviates: {worst_sigmas} sigma");
    assert!(elapsed < 180.0, "over the 3 minute budget");
    let _ = std_normal_cdf(0.0) + normal(&mut substream(0, &[0])) * 0.0;
}
