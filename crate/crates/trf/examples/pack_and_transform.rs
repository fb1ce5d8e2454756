//! The multiplication-free pipeline end to end: sample packed ternary
//! weights, transform a dataset with additions only, take the popcount Gram,
//! and report the instrumented operation counts and storage footprint.
//!
//! Run with: cargo run --release --example pack_and_transform

use trf::data::{sample_gmm, GmmSpec};
use trf::opcount::OpCounter;
use trf::ternary::{
    gram, sample_ternary_weights, ternary_transform, FeatureMatrix, TernaryWeightSpec, Thresholds,
};

fn main() -> trf::Result<()> {
    let (p, n, m) = (256, 256, 1024);
    let spec = GmmSpec::two_class_benchmark(p, n);
    let (data, _) = sample_gmm(&spec, 7)?;

    let thr = Thresholds {
        s_minus: -0.67448975,
        s_plus: 0.67448975,
        tau: 1.0,
        target: (0.0, 0.0),
        residual: 0.0,
    };

    for epsilon in [0.0, 0.5, 0.9] {
        let w = sample_ternary_weights(&TernaryWeightSpec {
            m,
            p,
            epsilon,
            seed: 42,
        })?;
        let ops = OpCounter::new();
        let features = ternary_transform(&w, &data, &thr, &ops)?;
        let gram_ops = OpCounter::new();
        let g = gram(&features, &gram_ops)?;

        let expected_adds = (1.0 - epsilon) * (m * n * p) as f64;
        let packed_bits = features.storage_bits();
        let dense_bits_32 = 32 * (m * n) as u64;
        println!("epsilon = {epsilon}");
        println!("  transform additions      : {} (expected ~{expected_adds:.0})", ops.additions());
        println!("  accumulation multiplies  : {} (transform) + {} (gram)", ops.multiplies(), gram_ops.multiplies());
        println!("  final scaling multiplies : {}", ops.scale_multiplies());
        println!("  packed feature bits      : {packed_bits} ({:.3} bits/entry)", packed_bits as f64 / (m * n) as f64);
        println!("  vs 32-bit dense          : {:.2}x smaller", dense_bits_32 as f64 / packed_bits as f64);
        println!("  gram diag mean           : {:.4}", {
            let mut s = 0.0;
            for i in 0..n {
                s += g.values[(i, i)];
            }
            s / n as f64
        });
        if let FeatureMatrix::PackedTernary { data, .. } = &features {
            let nonzero = data.nonzero_count() as f64 / (m * n) as f64;
            println!("  nonzero feature fraction : {nonzero:.4}");
        }
        println!();
    }
    Ok(())
}
