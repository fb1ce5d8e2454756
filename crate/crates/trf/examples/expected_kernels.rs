//! Closed-form expected kernels against their Monte Carlo estimates on a
//! handful of sample pairs, including the bivariate-normal orthant form of
//! the ternary kernel.
//!
//! Run with: cargo run --release --example expected_kernels

use trf::data::{sample_gmm, GmmSpec};
use trf::kernels::{bvn_cdf, expected_kernel, monte_carlo_entry, KernelKind};
use trf::moments::ActivationKind;
use trf::rng::WeightLaw;
use trf::ternary::Thresholds;

fn main() -> trf::Result<()> {
    // Sheppard's identity as a quick orthant sanity check
    println!("bvn_cdf(0, 0, 0.5)   = {:.10} (exact 1/3)", bvn_cdf(0.0, 0.0, 0.5));
    println!();

    let spec = GmmSpec::two_class_benchmark(64, 12);
    let (data, _) = sample_gmm(&spec, 3)?;
    let thr = Thresholds {
        s_minus: -0.4,
        s_plus: 0.7,
        tau: 1.0,
        target: (0.0, 0.0),
        residual: 0.0,
    };

    let cases: Vec<(&str, KernelKind, ActivationKind)> = vec![
        ("gaussian_rff", KernelKind::GaussianRff, ActivationKind::RffPair),
        ("arccos1", KernelKind::ArcCos1, ActivationKind::ReLU),
        ("arccos0", KernelKind::ArcCos0, ActivationKind::Step),
        (
            "ternary",
            KernelKind::TernaryExpected(thr),
            ActivationKind::Ternary {
                s_minus: thr.s_minus,
                s_plus: thr.s_plus,
            },
        ),
    ];

    for (name, kernel, activation) in cases {
        let k = expected_kernel(&kernel, &data)?;
        println!("{name}: closed form vs Monte Carlo (200k draws)");
        for (i, j) in [(0usize, 1usize), (2, 3), (4, 5)] {
            let (mc, se) = monte_carlo_entry(
                &activation,
                &WeightLaw::Gaussian,
                &data.x.col(i),
                &data.x.col(j),
                200_000,
                1000 + (i * 16 + j) as u64,
            );
            let closed = k.values[(i, j)];
            println!(
                "  ({i},{j}): closed {closed:+.6}  mc {mc:+.6}  |diff|/se = {:.2}",
                (closed - mc).abs() / se.max(1e-12)
            );
        }
        println!();
    }
    Ok(())
}
