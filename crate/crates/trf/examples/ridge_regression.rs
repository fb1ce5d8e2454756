//! Ridge regression with ternary random features versus [cos, sin] random
//! Fourier features on two-class mixture data: test MSE across the
//! regularization grid plus the storage footprint of each feature matrix.
//!
//! Run with: cargo run --release --example ridge_regression

use trf::data::{CovarianceConfig, GmmConfig};
use trf::regression::{sweep, DataSource, SweepConfig, SweepKind};

fn main() -> trf::Result<()> {
    let p = 128;
    let mut mean_a = vec![0.0; p];
    let mut mean_b = vec![0.0; p];
    mean_a[0] = 4.0;
    mean_b[1] = 4.0;
    let cfg = SweepConfig {
        data: DataSource::Gmm {
            spec: GmmConfig {
                p,
                class_sizes: vec![128, 128],
                means: vec![mean_a, mean_b],
                covariances: vec![
                    CovarianceConfig::Isotropic { isotropic: 1.0 },
                    CovarianceConfig::Isotropic {
                        isotropic: 1.0 + 4.0 / (p as f64).sqrt(),
                    },
                ],
            },
            n_test: 128,
        },
        kinds: vec![SweepKind::Rff, SweepKind::Trf],
        m_grid: vec![2048],
        gamma_grid: (-2..=4).map(|e| 10f64.powi(e)).collect(),
        epsilon_list: vec![0.5, 0.9],
        seeds: vec![1, 2, 3],
    };
    let rows = sweep(&cfg)?;

    println!(
        "{:<6} {:>5} {:>8} {:>10} {:>12} {:>14}",
        "kind", "eps", "gamma", "mse (med)", "bits", "additions"
    );
    let mut gammas: Vec<f64> = rows.iter().map(|r| r.gamma).collect();
    gammas.dedup();
    for kind in ["rff", "trf"] {
        for eps in [0.0, 0.5, 0.9] {
            for &gamma in &gammas {
                let mut sel: Vec<&_> = rows
                    .iter()
                    .filter(|r| r.kind == kind && r.epsilon == eps && r.gamma == gamma)
                    .collect();
                if sel.is_empty() {
                    continue;
                }
                sel.sort_by(|a, b| a.mse.partial_cmp(&b.mse).unwrap());
                let med = sel[sel.len() / 2];
                println!(
                    "{:<6} {:>5} {:>8.2} {:>10.4} {:>12} {:>14}",
                    kind, eps, gamma, med.mse, med.feature_bits, med.additions
                );
            }
        }
    }
    Ok(())
}
