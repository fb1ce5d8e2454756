//! Deterministic counter-based random streams.
//!
//! Every sampling site derives an independent substream from a root seed and
//! a small list of stream ids (column index, row index, replicate, ...), so
//! work can be split across workers in any order and still reproduce the
//! serial output bit for bit.

use rand::Rng;
use rand_chacha::rand_core::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal, StudentT};

/// SplitMix64 step, used only to expand (seed, ids) into a ChaCha key.
#[inline]
fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Independent substream for (seed, ids). Streams with distinct id lists are
/// statistically independent and order-free.
pub fn substream(seed: u64, ids: &[u64]) -> ChaCha8Rng {
    let mut state = seed ^ 0x6a09_e667_f3bc_c908;
    let mut key = [0u8; 32];
    // absorb the id list, then squeeze the key
    for &id in ids {
        let mixed = splitmix64(&mut state) ^ id.wrapping_mul(0x9e37_79b9_7f4a_7c15);
        state ^= mixed;
    }
    for chunk in key.chunks_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(key)
}

/// Weight-entry laws covered by the universality experiments. All are zero
/// mean and unit variance.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum WeightLaw {
    Gaussian,
    /// Student-t with 7 degrees of freedom, scaled by sqrt(5/7) to unit
    /// variance.
    StudentT7,
    /// Ternary entries: 0 w.p. eps, +/-(1-eps)^(-1/2) w.p. (1-eps)/2 each.
    Ternary { epsilon: f64 },
}

impl WeightLaw {
    pub fn sample(&self, rng: &mut ChaCha8Rng) -> f64 {
        match self {
            WeightLaw::Gaussian => StandardNormal.sample(rng),
            WeightLaw::StudentT7 => {
                let t: f64 = StudentT::new(7.0).unwrap().sample(rng);
                t * (5.0f64 / 7.0).sqrt()
            }
            WeightLaw::Ternary { epsilon } => {
                let u: f64 = rng.gen();
                if u < *epsilon {
                    0.0
                } else {
                    let mag = (1.0 - epsilon).powf(-0.5);
                    if u < epsilon + (1.0 - epsilon) / 2.0 {
                        mag
                    } else {
                        -mag
                    }
                }
            }
        }
    }

    pub fn name(&self) -> String {
        match self {
            WeightLaw::Gaussian => "gaussian".into(),
            WeightLaw::StudentT7 => "student_t7".into(),
            WeightLaw::Ternary { epsilon } => format!("ternary_eps{epsilon}"),
        }
    }
}

/// Standard normal draw.
pub fn normal(rng: &mut ChaCha8Rng) -> f64 {
    StandardNormal.sample(rng)
}
