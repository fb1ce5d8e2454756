//! Weight-law universality: empirical ReLU feature Grams built from
//! Gaussian, Student-t(7) and ternary projection matrices on the same data
//! have (bulk-)matching spectra, while changing the activation moves the
//! bulk. Total-variation distances between 50-bin bulk histograms quantify
//! both.
//!
//! Run with: cargo run --release --example universality

use trf::data::{sample_gmm, GmmSpec};
use trf::kernels::center;
use trf::opcount::OpCounter;
use trf::regression::gaussian_weights;
use trf::rng::{substream, WeightLaw};
use trf::spectral::{split_spikes, sym_eigenvalues, compare_histograms, Histogram};
use trf::ternary::{dense_transform, gram, packed_matmul_dense, sample_ternary_weights, FeatureMatrix, TernaryWeightSpec};
use trf::moments::ActivationKind;
use trf::linalg::Mat;

fn bulk(values: &Mat) -> trf::Result<Vec<f64>> {
    let eigs = sym_eigenvalues(values)?;
    Ok(split_spikes(&eigs, 10.0).0)
}

fn tv(a: &[f64], b: &[f64]) -> trf::Result<f64> {
    let lo = a[0].min(b[0]);
    let hi = a[a.len() - 1].max(b[b.len() - 1]);
    compare_histograms(
        &Histogram::build(a, lo, hi, 50),
        &Histogram::build(b, lo, hi, 50),
    )
}

fn main() -> trf::Result<()> {
    let (p, n, m, seed) = (128usize, 256usize, 8192usize, 5u64);
    let spec = GmmSpec::two_class_benchmark(p, n);
    let (data, _) = sample_gmm(&spec, seed)?;
    let ops = OpCounter::new();

    // same data, same ReLU activation, three projection laws
    let g_gauss = {
        let w = gaussian_weights(m, p, seed);
        center(&gram(&dense_transform(&w, &data, &ActivationKind::ReLU)?, &ops)?)
    };
    let g_student = {
        let mut w = Mat::zeros(m, p);
        for row in 0..m {
            let mut rng = substream(seed, &[0x99, row as u64]);
            for j in 0..p {
                w[(row, j)] = WeightLaw::StudentT7.sample(&mut rng);
            }
        }
        center(&gram(&dense_transform(&w, &data, &ActivationKind::ReLU)?, &ops)?)
    };
    let g_ternary = {
        let w = sample_ternary_weights(&TernaryWeightSpec {
            m,
            p,
            epsilon: 0.5,
            seed,
        })?;
        let mut pre = packed_matmul_dense(&w, &data, &ops)?;
        for v in pre.data_mut().iter_mut() {
            *v = v.max(0.0);
        }
        center(&gram(
            &FeatureMatrix::Dense {
                data: pre,
                directions: m,
            },
            &ops,
        )?)
    };
    // negative control: different activation under Gaussian weights
    let g_sin = {
        let w = gaussian_weights(m, p, seed);
        center(&gram(&dense_transform(&w, &data, &ActivationKind::Sin)?, &ops)?)
    };

    let b_gauss = bulk(&g_gauss.values)?;
    let b_student = bulk(&g_student.values)?;
    let b_ternary = bulk(&g_ternary.values)?;
    let b_sin = bulk(&g_sin.values)?;

    println!("bulk TV distances (ReLU features, m = {m}):");
    println!("  gaussian vs student-t(7) : {:.4}", tv(&b_gauss, &b_student)?);
    println!("  gaussian vs ternary(0.5) : {:.4}", tv(&b_gauss, &b_ternary)?);
    println!("  gaussian relu vs sin     : {:.4}  (negative control)", tv(&b_gauss, &b_sin)?);
    Ok(())
}
