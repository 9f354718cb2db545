//! Hierarchical, counter-based random streams.
//!
//! Every random draw in the crate comes from a ChaCha8 keystream whose
//! 256-bit key is a pure function of a path of 64-bit labels, typically
//! `experiment seed -> purpose -> trial -> sensor`. Each label is folded in
//! with a SplitMix64 finalizer, and the resulting word seeds a SplitMix64
//! sequence that fills the four key words. ChaCha is itself a counter-mode
//! generator, so a stream is reproducible from its key alone and no state is
//! shared between trials. Results therefore do not depend on which thread
//! runs which trial or in what order.

use num_complex::Complex64;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};

const GOLDEN_GAMMA: u64 = 0x9e37_79b9_7f4a_7c15;

/// Label reserved for per-trial (not per-sensor) draws such as the
/// unauthorized drone's power.
pub const TRIAL_LEVEL: u64 = u64::MAX;

#[inline]
fn splitmix64(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Folds `label` into `parent`. Not commutative, so paths are ordered.
#[inline]
pub fn derive(parent: u64, label: u64) -> u64 {
    splitmix64(splitmix64(parent.wrapping_add(GOLDEN_GAMMA)) ^ label.wrapping_mul(GOLDEN_GAMMA))
}

/// Folds a textual purpose tag into `parent` (FNV-1a of the bytes).
pub fn derive_tag(parent: u64, tag: &str) -> u64 {
    let mut h: u64 = 0xcbf2_9ce4_8422_2325;
    for b in tag.bytes() {
        h ^= b as u64;
        h = h.wrapping_mul(0x0000_0100_0000_01b3);
    }
    derive(parent, h)
}

/// ChaCha8 stream keyed by `key`.
pub fn stream(key: u64) -> ChaCha8Rng {
    let mut seed = [0u8; 32];
    let mut state = key;
    for chunk in seed.chunks_exact_mut(8) {
        state = state.wrapping_add(GOLDEN_GAMMA);
        chunk.copy_from_slice(&splitmix64(state).to_le_bytes());
    }
    ChaCha8Rng::from_seed(seed)
}

/// Stream for one sensor in one trial.
pub fn block_stream(seed: u64, trial: u64, sensor: u64) -> ChaCha8Rng {
    stream(derive(derive(seed, trial), sensor))
}

/// Circularly-symmetric complex Gaussian draw with `E|z|^2 = power`.
#[inline]
pub fn complex_gaussian<R: rand::Rng + ?Sized>(rng: &mut R, amplitude: f64) -> Complex64 {
    let re: f64 = StandardNormal.sample(rng);
    let im: f64 = StandardNormal.sample(rng);
    Complex64::new(amplitude * re, amplitude * im)
}

/// Per-component amplitude for a complex Gaussian of total power `power`.
#[inline]
pub fn amplitude(power: f64) -> f64 {
    (0.5 * power).sqrt()
}
