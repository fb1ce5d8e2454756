use trf::data::{sample_gmm, GmmSpec};
use trf::equivalent::{build_equivalent, equivalence_gap};
use trf::kernels::center;
use trf::linalg::Mat;
use trf::moments::{moments_closed_form, ActivationKind};
use trf::opcount::OpCounter;
use trf::regression::gaussian_weights;
use trf::rng::{substream, WeightLaw};
use trf::ternary::{dense_transform, gram, packed_matmul_dense, sample_ternary_weights, FeatureMatrix, TernaryWeightSpec};

fn relu_gram(law: &WeightLaw, data: &trf::data::Dataset, m: usize, seed: u64) -> Mat {
    let ops = OpCounter::new();
    let features = match law {
        WeightLaw::Ternary { epsilon } => {
            let w = sample_ternary_weights(&TernaryWeightSpec { m, p: data.p(), epsilon: *epsilon, seed }).unwrap();
            let mut pre = packed_matmul_dense(&w, data, &ops).unwrap();
            for v in pre.data_mut().iter_mut() { *v = v.max(0.0); }
            FeatureMatrix::Dense { data: pre, directions: m }
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
                for j in 0..p { w[(row, j)] = WeightLaw::StudentT7.sample(&mut rng); }
            }
            dense_transform(&w, data, &ActivationKind::ReLU).unwrap()
        }
    };
    center(&gram(&features, &ops).unwrap()).values
}

fn main() {
    for (p, n, m) in [(256usize, 512usize, 8192usize), (256, 512, 16384), (256, 1024, 16384), (384, 768, 16384)] {
        let spec = GmmSpec::two_class_benchmark(p, n);
        let (data, stats) = sample_gmm(&spec, 9).unwrap();
        let d = moments_closed_form(&ActivationKind::ReLU, stats.tau).unwrap();
        let model = build_equivalent(&stats, d).unwrap();
        let mut gaps = Vec::new();
        for law in [WeightLaw::Gaussian, WeightLaw::StudentT7, WeightLaw::Ternary { epsilon: 0.5 }] {
            let g = relu_gram(&law, &data, m, 109);
            let k = trf::kernels::KernelMatrix { values: g, centered: true };
            gaps.push(equivalence_gap(&k, &model).unwrap().relative_gap);
        }
        let max = gaps.iter().cloned().fold(0.0f64, f64::max);
        let min = gaps.iter().cloned().fold(f64::INFINITY, f64::min);
        println!("p={p} n={n} m={m}: gaps {:.4} {:.4} {:.4} spread {:.1}%", gaps[0], gaps[1], gaps[2], 100.0*(max-min)/min);
    }
}
