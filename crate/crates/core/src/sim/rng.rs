//! Counter-based randomness keyed by `(seed, word)`: any node's draws can be
//! regenerated without visiting the rest of the tree, so results do not depend
//! on traversal order or thread count.

const GOLDEN: u64 = 0x9e37_79b9_7f4a_7c15;

#[inline]
pub(crate) fn mix(mut z: u64) -> u64 {
    z = (z ^ (z >> 30)).wrapping_mul(0xbf58_476d_1ce4_e5b9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94d0_49bb_1331_11eb);
    z ^ (z >> 31)
}

/// Key of the empty word.
#[inline]
pub fn root_key(seed: u64) -> u64 {
    mix(seed.wrapping_add(GOLDEN))
}

/// Key of `w·i` from the key of `w`.
#[inline]
pub fn child_key(parent: u64, letter: usize) -> u64 {
    mix(parent ^ mix((letter as u64 + 1).wrapping_mul(GOLDEN)))
}

pub fn word_key(seed: u64, word: &[usize]) -> u64 {
    word.iter().fold(root_key(seed), |k, &i| child_key(k, i))
}

/// `counter`-th uniform draw in `[0, 1)` attached to a node.
#[inline]
pub fn uniform(key: u64, counter: u64) -> f64 {
    (mix(key.wrapping_add(counter.wrapping_add(1).wrapping_mul(GOLDEN))) >> 11) as f64 * (1.0 / (1u64 << 53) as f64)
}

/// Derived seed for independent replicate `run`.
pub fn replicate_seed(seed: u64, run: u64) -> u64 {
    mix(seed ^ mix(run.wrapping_add(0x5eed)))
}
