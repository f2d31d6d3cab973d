//! Seed derivation.
//!
//! Every random stream in a run is keyed by indices (generation, candidate,
//! rollout) rather than by draw order, so results never depend on how work is
//! scheduled across threads.

/// SplitMix64 finalizer.
#[inline]
pub fn splitmix64(mut z: u64) -> u64 {
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Folds a sequence of words into one seed. Order matters.
pub fn mix(words: &[u64]) -> u64 {
    words
        .iter()
        .fold(0x6A09_E667_F3BC_C909, |acc, &w| splitmix64(acc ^ splitmix64(w)))
}

/// Stream tags, so seeds for different purposes never collide.
pub mod tag {
    pub const SAMPLE: u64 = 1;
    pub const ROLLOUT: u64 = 2;
    pub const EVAL: u64 = 3;
    pub const INIT: u64 = 4;
}

/// Seed used to draw the population of `generation`.
pub fn sample_seed(master: u64, generation: usize) -> u64 {
    mix(&[tag::SAMPLE, master, generation as u64])
}

/// Seed of rollout `k` of a candidate whose base seed is `candidate_seed`.
pub fn rollout_seed(candidate_seed: u64, k: usize) -> u64 {
    mix(&[tag::ROLLOUT, candidate_seed, k as u64])
}

/// Held-out evaluation seed `k` for a run.
pub fn eval_seed(master: u64, k: usize) -> u64 {
    mix(&[tag::EVAL, master, k as u64])
}
