//! Cross-module pipeline checks at moderate sizes: the equivalence gap of
//! empirical Grams is insensitive to the weight law, and the full
//! calibrate-transform-fit chain holds together on packed features.

use trf::data::{sample_gmm, GmmSpec};
use trf::equivalent::{build_equivalent, equivalence_gap};
use trf::kernels::center;
use trf::linalg::Mat;
use trf::moments::{moments_closed_form, ActivationKind};
use trf::opcount::OpCounter;
use trf::regression::{fit_ridge, gaussian_weights, predict_mse, targets_pm1};
use trf::rng::{substream, WeightLaw};
use trf::ternary::{
    dense_transform, gram, packed_matmul_dense, sample_ternary_weights, FeatureMatrix,
    TernaryWeightSpec,
};

fn relu_gram(law: &WeightLaw, data: &trf::data::Dataset, m: usize, seed: u64) -> Mat {
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
                *v = v.max(0.0);
            }
            FeatureMatrix::Dense {
                data: pre,
                directions: m,
            }
        }
        WeightLaw::Gaussian => {
            let w = gaussian_weights(m, data.p(), seed);
            dense_transform(&w, data, &ActivationKind::ReLU).unwrap()
        }
        WeightLaw::StudentT7 => {
            let p = data.p();
            let mut w = Mat::zeros(m, p);
            for row in 0..m {
                let mut rng = substream(seed, &[0x42, row as u64]);
                for j in 0..p {
                    w[(row, j)] = WeightLaw::StudentT7.sample(&mut rng);
                }
            }
            dense_transform(&w, data, &ActivationKind::ReLU).unwrap()
        }
    };
    center(&gram(&features, &ops).unwrap()).values
}

#[test]
fn equivalence_gap_is_weight_law_invariant() {
    let (p, n, m, seed) = (128usize, 512usize, 32_768usize, 9u64);
    let spec = GmmSpec::two_class_benchmark(p, n);
    let (data, stats) = sample_gmm(&spec, seed).unwrap();
    let d = moments_closed_form(&ActivationKind::ReLU, stats.tau).unwrap();
    let model = build_equivalent(&stats, d).unwrap();
    let mut gaps = Vec::new();
    for law in [
        WeightLaw::Gaussian,
        WeightLaw::StudentT7,
        WeightLaw::Ternary { epsilon: 0.5 },
    ] {
        let g = relu_gram(&law, &data, m, seed + 100);
        let k = trf::kernels::KernelMatrix {
            values: g,
            centered: true,
        };
        gaps.push(equivalence_gap(&k, &model).unwrap().relative_gap);
    }
    let max = gaps.iter().cloned().fold(0.0f64, f64::max);
    let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
    assert!(
        (max - min) / min <= 0.10,
        "gaps vary beyond 10% across weight laws: {gaps:?}"
    );
}

#[test]
fn end_to_end_trf_ridge_beats_constant_predictor() {
    // calibrate to the [cos, sin] moments, transform packed, fit, predict
    let spec = GmmSpec::two_class_benchmark(128, 512);
    let (train, _) = sample_gmm(&spec, 1).unwrap();
    let (test, _) = sample_gmm(&spec, 2).unwrap();
    let tau_hat = trf::data::estimate_tau(&train).unwrap();
    let target = moments_closed_form(&ActivationKind::RffPair, tau_hat).unwrap();
    let thr =
        trf::ternary::calibrate_thresholds_best_effort(target.d1, target.d2, tau_hat, 1024.0)
            .unwrap();
    let w = sample_ternary_weights(&TernaryWeightSpec {
        m: 2048,
        p: 128,
        epsilon: 0.9,
        seed: 3,
    })
    .unwrap();
    let ops = OpCounter::new();
    let f_train = trf::ternary::ternary_transform(&w, &train, &thr, &ops).unwrap();
    let f_test = trf::ternary::ternary_transform(&w, &test, &thr, &ops).unwrap();
    let y_train = targets_pm1(&train).unwrap();
    let y_test = targets_pm1(&test).unwrap();
    let model = fit_ridge(&f_train, &y_train, 1.0).unwrap();
    let mse = predict_mse(&model, &f_test, &y_test).unwrap();
    assert!(
        mse < 0.5,
        "well-separated classes should regress far below the constant predictor: {mse}"
    );
    assert_eq!(ops.multiplies(), 0);
}
