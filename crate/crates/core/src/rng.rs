//! Seedable, splittable random streams.
//!
//! Every stream is a ChaCha8 generator. The 256-bit key is expanded with
//! SplitMix64 from `seed ^ fnv1a64(name)`, and the 64-bit ChaCha stream id is
//! the caller's `index`. Streams with different `(seed, name, index)` triples
//! are therefore independent, and the byte sequence of each stream is fixed
//! across platforms.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

pub type Rng = ChaCha8Rng;

/// Named substreams used by the command-line runs.
pub mod names {
    pub const GRAPHGEN: &str = "graphgen";
    pub const ENV: &str = "env";
    pub const AGENT: &str = "agent";
    pub const EVAL: &str = "eval";
    pub const INIT: &str = "init";
    pub const QUIZ: &str = "quiz";
}

const FNV_OFFSET: u64 = 0xcbf2_9ce4_8422_2325;
const FNV_PRIME: u64 = 0x0000_0100_0000_01b3;

pub fn fnv1a64(bytes: &[u8]) -> u64 {
    bytes.iter().fold(FNV_OFFSET, |h, &b| (h ^ u64::from(b)).wrapping_mul(FNV_PRIME))
}

fn splitmix64(state: &mut u64) -> u64 {
    *state = state.wrapping_add(0x9e37_79b9_7f4a_7c15);
    let mut z = *state;
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Returns the generator for substream `(seed, name, index)`.
pub fn stream(seed: u64, name: &str, index: u64) -> Rng {
    let mut state = seed ^ fnv1a64(name.as_bytes());
    let mut key = [0u8; 32];
    for chunk in key.chunks_exact_mut(8) {
        chunk.copy_from_slice(&splitmix64(&mut state).to_le_bytes());
    }
    let mut rng = ChaCha8Rng::from_seed(key);
    rng.set_stream(index);
    rng
}

/// Mixes several integers into one stream index.
pub fn mix(parts: &[u64]) -> u64 {
    let mut state = 0x243f_6a88_85a3_08d3;
    for &p in parts {
        state ^= p;
        state = splitmix64(&mut state);
    }
    state
}

/// One standard-normal draw scaled by `sd`.
pub fn normal(rng: &mut Rng, sd: f64) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    z * sd
}

/// Exact position of a stream, sufficient to resume it.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct RngState {
    pub key: [u8; 32],
    pub stream: u64,
    pub word_pos: u128,
}

impl RngState {
    pub fn capture(rng: &Rng) -> Self {
        RngState { key: rng.get_seed(), stream: rng.get_stream(), word_pos: rng.get_word_pos() }
    }

    pub fn restore(&self) -> Rng {
        let mut rng = ChaCha8Rng::from_seed(self.key);
        rng.set_stream(self.stream);
        rng.set_word_pos(self.word_pos);
        rng
    }
}
