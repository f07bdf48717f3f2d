//! Monte Carlo counterpart of the formulas: Galton–Watson curdling, box counting,
//! Mandelbrot cascades, localized digit frequencies and empirical local dimensions.

mod boxcount;
mod cascade;
pub mod rng;

pub use boxcount::{box_count_fit, BoxCountReport};
pub use cascade::{
    empirical_local_dimension, exact_second_moment, localized_frequencies, node_weights, sample_cascade, sample_point,
    BlockFrequency, CascadeSample, LocalDimOptions, LocalDimReport, PointSlope, TheoryPoint,
};

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::DiagonalIfs;
use crate::weights::SurvivalVector;

/// Default cap on the expected number of stored nodes.
pub const MAX_EXPECTED_NODES: f64 = 1e8;
/// Attempts allowed when conditioning on survival.
pub const SURVIVAL_RETRIES: u64 = 1_000_000;
/// Letters are packed into one `u64` child mask per node.
pub const MAX_ALPHABET: usize = 64;

/// Survival probabilities, either constant or one vector per generation.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(untagged)]
pub enum AlphaSchedule {
    Constant(SurvivalVector),
    PerLevel(Vec<SurvivalVector>),
}

impl AlphaSchedule {
    /// Law of generation `n ≥ 1`.
    pub fn at(&self, n: usize) -> Result<&SurvivalVector> {
        match self {
            Self::Constant(a) => Ok(a),
            Self::PerLevel(v) => {
                v.get(n - 1).ok_or(Error::HorizonExhausted { needed: n, available: v.len() })
            }
        }
    }

    pub fn len_letters(&self) -> usize {
        match self {
            Self::Constant(a) => a.len(),
            Self::PerLevel(v) => v.first().map_or(0, |a| a.len()),
        }
    }

    fn validate(&self, n: usize) -> Result<()> {
        let bad = match self {
            Self::Constant(a) => (a.len() != n).then_some(a.len()),
            Self::PerLevel(v) => v.iter().find(|a| a.len() != n).map(|a| a.len()),
        };
        if let Some(got) = bad {
            return Err(Error::DimensionMismatch { expected: n, got });
        }
        if n > MAX_ALPHABET {
            return Err(Error::ResourceCap(format!("alphabet of {n} letters exceeds {MAX_ALPHABET}")));
        }
        Ok(())
    }
}

/// Extinction probability of the Galton–Watson tree with offspring law `Σ Bernoulli(α_i)`.
pub fn gw_extinction(alpha: &SurvivalVector) -> f64 {
    let f = |x: f64| alpha.iter().map(|a| 1.0 - a + a * x).product::<f64>();
    if alpha.iter().sum::<f64>() <= 1.0 {
        return 1.0;
    }
    let f0 = f(0.0);
    if f0 == 0.0 {
        return 0.0;
    }
    // f(x) - x is convex, nonnegative at 0 and negative just below 1
    let mut hi = 0.5;
    while f(hi) - hi >= 0.0 {
        hi = 0.5 * (1.0 + hi);
        if 1.0 - hi < 1e-15 {
            return 1.0;
        }
    }
    let mut lo = 0.0;
    while hi - lo > 1e-13 {
        let mid = 0.5 * (lo + hi);
        if f(mid) - mid >= 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    0.5 * (lo + hi)
}

fn child_mask(key: u64, alpha: &SurvivalVector) -> u64 {
    alpha
        .iter()
        .enumerate()
        .filter(|&(i, &a)| rng::uniform(key, i as u64) < a)
        .fold(0u64, |m, (i, _)| m | (1 << i))
}

/// Whether the tree of `seed` has a survivor at `depth`, by depth-first search with early exit.
///
/// Agrees with `sample_tree(…, seed).counts[depth] > 0` but only visits what it needs.
pub fn survives_to(alpha: &AlphaSchedule, depth: usize, seed: u64) -> Result<bool> {
    alpha.validate(alpha.len_letters())?;
    for n in 1..=depth {
        alpha.at(n)?;
    }
    fn dfs(alpha: &AlphaSchedule, key: u64, level: usize, depth: usize) -> bool {
        if level == depth {
            return true;
        }
        let a = alpha.at(level + 1).expect("checked");
        let mut mask = child_mask(key, a);
        while mask != 0 {
            let i = mask.trailing_zeros() as usize;
            mask &= mask - 1;
            if dfs(alpha, rng::child_key(key, i), level + 1, depth) {
                return true;
            }
        }
        false
    }
    Ok(dfs(alpha, rng::root_key(seed), 0, depth))
}

/// Survivor set of fractal percolation, prefix-closed and stored level by level:
/// `masks[k][j]` has bit `i` set when child `i` of the `j`-th word of length `k`
/// (lexicographic order) survives.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PercolationTree {
    pub depth: usize,
    pub seed: u64,
    pub generator: &'static str,
    pub alphabet: usize,
    pub counts: Vec<usize>,
    pub masks: Vec<Vec<u64>>,
}

pub const GENERATOR_ID: &str = "splitmix64-keyed-v1";

impl PercolationTree {
    pub fn survived(&self) -> bool {
        self.counts[self.depth] > 0
    }

    /// Index of the first child of each node at level `k`.
    pub fn child_offsets(&self, k: usize) -> Vec<usize> {
        let mut acc = 0usize;
        self.masks[k]
            .iter()
            .map(|m| {
                let o = acc;
                acc += m.count_ones() as usize;
                o
            })
            .collect()
    }

    /// Words of length `k` in lexicographic order.
    pub fn words(&self, k: usize) -> Result<Vec<Vec<usize>>> {
        if k > self.depth {
            return Err(Error::HorizonExhausted { needed: k, available: self.depth });
        }
        let mut level: Vec<Vec<usize>> = vec![vec![]];
        for masks in &self.masks[..k] {
            let mut next = Vec::new();
            for (w, &m) in level.iter().zip(masks) {
                for i in (0..self.alphabet).filter(|i| m >> i & 1 == 1) {
                    let mut c = w.clone();
                    c.push(i);
                    next.push(c);
                }
            }
            level = next;
        }
        Ok(level)
    }

    /// `alive[k][j]`: node `j` of level `k` has a descendant at the full depth.
    pub fn alive(&self) -> Vec<Vec<bool>> {
        let mut alive = vec![Vec::new(); self.depth + 1];
        alive[self.depth] = vec![true; self.counts[self.depth]];
        for k in (0..self.depth).rev() {
            let offs = self.child_offsets(k);
            alive[k] = self.masks[k]
                .iter()
                .zip(&offs)
                .map(|(m, &o)| (0..m.count_ones() as usize).any(|r| alive[k + 1][o + r]))
                .collect();
        }
        alive
    }
}

/// Expected total number of stored nodes up to `depth`.
fn expected_nodes(alpha: &AlphaSchedule, depth: usize) -> Result<f64> {
    let mut level = 1.0;
    let mut total = 1.0;
    for n in 1..=depth {
        level *= alpha.at(n)?.iter().sum::<f64>();
        total += level;
    }
    Ok(total)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TreeOptions {
    pub max_expected_nodes: f64,
}

impl Default for TreeOptions {
    fn default() -> Self {
        Self { max_expected_nodes: MAX_EXPECTED_NODES }
    }
}

/// Fractal percolation tree up to `depth`: cell `i` of every node survives with
/// probability `α_i` (of the node's child generation), independently.
pub fn sample_tree(
    ifs: &DiagonalIfs,
    alpha: &AlphaSchedule,
    depth: usize,
    seed: u64,
    opts: TreeOptions,
) -> Result<PercolationTree> {
    let n = ifs.len();
    alpha.validate(n)?;
    let expected = expected_nodes(alpha, depth)?;
    if expected > opts.max_expected_nodes {
        return Err(Error::ResourceCap(format!(
            "expected {expected:.3e} nodes exceeds the cap {:.3e}",
            opts.max_expected_nodes
        )));
    }
    let mut keys = vec![rng::root_key(seed)];
    let mut masks = Vec::with_capacity(depth);
    let mut counts = vec![1usize];
    for k in 0..depth {
        let a = alpha.at(k + 1)?;
        let level: Vec<u64> = keys.par_iter().map(|&key| child_mask(key, a)).collect();
        let last = k + 1 == depth;
        let next: Vec<u64> = if last {
            Vec::new()
        } else {
            keys.par_iter()
                .zip(&level)
                .flat_map_iter(|(&key, &m)| {
                    (0..n).filter(move |i| m >> i & 1 == 1).map(move |i| rng::child_key(key, i))
                })
                .collect()
        };
        counts.push(level.iter().map(|m| m.count_ones() as usize).sum());
        masks.push(level);
        keys = next;
    }
    Ok(PercolationTree { depth, seed, generator: GENERATOR_ID, alphabet: n, counts, masks })
}

/// First tree (over replicate seeds derived from `seed`) that survives to `depth`.
pub fn sample_tree_conditioned(
    ifs: &DiagonalIfs,
    alpha: &AlphaSchedule,
    depth: usize,
    seed: u64,
    opts: TreeOptions,
    retries: u64,
) -> Result<(PercolationTree, u64)> {
    alpha.validate(ifs.len())?;
    for attempt in 0..retries {
        let s = rng::replicate_seed(seed, attempt);
        if survives_to(alpha, depth, s)? {
            return Ok((sample_tree(ifs, alpha, depth, s, opts)?, attempt));
        }
    }
    Err(Error::ResourceCap(format!("no surviving tree at depth {depth} after {retries} attempts")))
}

/// Survival frequency to `depth` over `runs` replicate seeds.
pub fn survival_frequency(alpha: &AlphaSchedule, depth: usize, runs: u64, seed: u64) -> Result<f64> {
    let hits: Result<Vec<bool>> =
        (0..runs).into_par_iter().map(|r| survives_to(alpha, depth, rng::replicate_seed(seed, r))).collect();
    Ok(hits?.iter().filter(|&&b| b).count() as f64 / runs as f64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn constant(n: usize, a: f64) -> AlphaSchedule {
        AlphaSchedule::Constant(SurvivalVector::constant(n, a).unwrap())
    }

    #[test]
    fn extinction_edge_cases() {
        assert_eq!(gw_extinction(&SurvivalVector::constant(4, 1.0).unwrap()), 0.0);
        assert_eq!(gw_extinction(&SurvivalVector::constant(4, 0.25).unwrap()), 1.0);
        assert_eq!(gw_extinction(&SurvivalVector::constant(3, 0.2).unwrap()), 1.0);
    }

    #[test]
    fn extinction_solves_fixed_point() {
        let q = gw_extinction(&SurvivalVector::constant(9, 0.5).unwrap());
        assert!((q - ((1.0 + q) / 2.0).powi(9)).abs() < 1e-12);
        assert!(q > 0.0 && q < 0.01);
        // two letters: q = ((1-a)/a)^2
        let q = gw_extinction(&SurvivalVector::constant(2, 0.8).unwrap());
        assert!((q - 0.0625).abs() < 1e-12, "{q}");
    }

    #[test]
    fn full_and_empty_depths() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let t = sample_tree(&ifs, &constant(4, 1.0), 5, 1, TreeOptions::default()).unwrap();
        assert_eq!(t.counts, vec![1, 4, 16, 64, 256, 1024]);
        let t0 = sample_tree(&ifs, &constant(4, 0.5), 0, 1, TreeOptions::default()).unwrap();
        assert_eq!(t0.counts, vec![1]);
        assert_eq!(t0.words(0).unwrap(), vec![Vec::<usize>::new()]);
    }

    #[test]
    fn tree_is_prefix_closed_and_consistent() {
        let ifs = DiagonalIfs::full_grid(&[3, 3], &[]).unwrap();
        let t = sample_tree(&ifs, &constant(9, 0.45), 6, 11, TreeOptions::default()).unwrap();
        for k in 1..=6 {
            let words = t.words(k).unwrap();
            assert_eq!(words.len(), t.counts[k]);
            let parents: std::collections::BTreeSet<Vec<usize>> = t.words(k - 1).unwrap().into_iter().collect();
            assert!(words.iter().all(|w| parents.contains(&w[..k - 1])));
            assert!(words.windows(2).all(|p| p[0] < p[1]));
        }
    }

    #[test]
    fn survives_matches_tree() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let a = constant(4, 0.4);
        for seed in 0..200 {
            let t = sample_tree(&ifs, &a, 7, seed, TreeOptions::default()).unwrap();
            assert_eq!(t.survived(), survives_to(&a, 7, seed).unwrap());
        }
    }

    #[test]
    fn deterministic_across_thread_counts() {
        let ifs = DiagonalIfs::full_grid(&[3, 3], &[]).unwrap();
        let a = constant(9, 0.6);
        let one = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let four = rayon::ThreadPoolBuilder::new().num_threads(4).build().unwrap();
        let t1 = one.install(|| sample_tree(&ifs, &a, 6, 5, TreeOptions::default()).unwrap());
        let t4 = four.install(|| sample_tree(&ifs, &a, 6, 5, TreeOptions::default()).unwrap());
        assert_eq!(t1, t4);
    }

    #[test]
    fn extending_depth_keeps_prefix() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let a = constant(4, 0.7);
        let short = sample_tree(&ifs, &a, 4, 9, TreeOptions::default()).unwrap();
        let long = sample_tree(&ifs, &a, 7, 9, TreeOptions::default()).unwrap();
        assert_eq!(short.masks[..], long.masks[..4]);
    }

    #[test]
    fn node_cap_is_enforced() {
        let ifs = DiagonalIfs::full_grid(&[3, 3], &[]).unwrap();
        let r = sample_tree(&ifs, &constant(9, 1.0), 12, 0, TreeOptions { max_expected_nodes: 1e6 });
        assert!(matches!(r, Err(Error::ResourceCap(_))));
    }

    #[test]
    fn conditioning_fails_for_doomed_trees() {
        let ifs = DiagonalIfs::grid(&[2, 2], &[vec![0, 0], vec![1, 1]]).unwrap();
        let r = sample_tree_conditioned(&ifs, &constant(2, 0.01), 6, 0, TreeOptions::default(), 50);
        assert!(matches!(r, Err(Error::ResourceCap(_))));
        let (t, _) = sample_tree_conditioned(&ifs, &constant(2, 0.7), 6, 0, TreeOptions::default(), 1000).unwrap();
        assert!(t.survived());
    }
}
