//! Seed derivation and counter-based variates.
//!
//! Every random draw in the crate is a pure function of an explicit seed and
//! a position, so results do not depend on how work is scheduled.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// SplitMix64 output function.
#[inline]
pub fn mix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Derives an independent 64-bit seed for sub-stream `index` of `seed` under `tag`.
pub fn derive_seed(seed: u64, tag: u64, index: u64) -> u64 {
    let a = mix64(seed.wrapping_add(GOLDEN_GAMMA.wrapping_mul(tag.wrapping_add(1))));
    mix64(a ^ mix64(index.wrapping_add(0x632b_e59b_d9b4_e019)))
}

pub fn chacha(seed: u64, tag: u64, index: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(derive_seed(seed, tag, index))
}

/// Stream tags, so that differently-purposed draws never share a stream.
pub mod tag {
    pub const LIFT: u64 = 1;
    pub const DYNAMICS: u64 = 2;
    pub const NETWORK: u64 = 3;
    pub const PATHS: u64 = 4;
    pub const INITIAL: u64 = 5;
    pub const ARNOLDI: u64 = 6;
    pub const SURROGATE: u64 = 7;
}

/// Counter-based stream of per-node uniform variates for synchronous updates.
///
/// The variate of node `i` at tick `t` is the SplitMix64 output at position
/// `t * n + i` of the stream keyed by `key`; consuming a tick in node order is
/// therefore identical to reading one sequential SplitMix64 stream.
#[derive(Clone, Debug)]
pub struct NoiseStream {
    key: u64,
    tick: u64,
    width: u64,
}

impl NoiseStream {
    pub fn new(key: u64, width: usize) -> Self {
        Self {
            key,
            tick: 0,
            width: width as u64,
        }
    }

    pub fn tick(&self) -> u64 {
        self.tick
    }

    #[inline]
    pub fn draw(&self, node: usize) -> u32 {
        draw_at(self.key, self.tick * self.width + node as u64)
    }

    pub fn advance(&mut self) {
        self.tick += 1;
    }
}

#[inline]
pub fn draw_at(key: u64, position: u64) -> u32 {
    (mix64(key.wrapping_add(GOLDEN_GAMMA.wrapping_mul(position.wrapping_add(1)))) >> 32) as u32
}

/// Maps a probability onto the u32 comparison threshold used by `NoiseStream`
/// draws: `draw < threshold` has probability `prob` up to 2^-32.
#[inline]
pub fn probability_threshold(prob: f64) -> u64 {
    (prob.clamp(0.0, 1.0) * 4_294_967_296.0).round() as u64
}
