use rayon::prelude::*;
use serde::Serialize;

use super::boxcount::least_squares;
use super::{rng, TreeOptions};
use crate::dimension::Engine;
use crate::error::{Error, Result};
use crate::ifs::DiagonalIfs;
use crate::numeric::KahanSum;
use crate::scale::{decompose_at, PrefixTable};
use crate::sequence::ImmSequence;
use crate::weights::WeightModel;

/// Counter reserved for the atom choice; letter draws use counters `0..n`.
const ATOM_COUNTER: u64 = 1 << 40;

/// Weights `W_i(v)` of the node with key `key`, zero for removed cells.
///
/// Percolation uses the same uniforms as the survival masks of
/// [`sample_tree`](super::sample_tree), so a cascade lives on the matching tree.
pub fn node_weights(model: &WeightModel, key: u64, out: &mut [f64]) {
    match model {
        WeightModel::Deterministic { p } => out.copy_from_slice(p),
        WeightModel::Percolation { p, alpha } => {
            for (i, o) in out.iter_mut().enumerate() {
                *o = if rng::uniform(key, i as u64) < alpha[i] { p[i] / alpha[i] } else { 0.0 };
            }
        }
        WeightModel::Atoms { atoms } => {
            let u = rng::uniform(key, ATOM_COUNTER);
            let mut acc = 0.0;
            let atom = atoms
                .iter()
                .find(|a| {
                    acc += a.prob;
                    u < acc
                })
                .unwrap_or_else(|| atoms.iter().rfind(|a| a.prob > 0.0).expect("some atom has mass"));
            out.copy_from_slice(&atom.w);
        }
    }
}

/// Finite-depth Mandelbrot cascade. Nodes with zero weight are dropped;
/// `masks` and `q` are stored level by level in lexicographic order.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct CascadeSample {
    pub depth: usize,
    pub seed: u64,
    pub alphabet: usize,
    pub masks: Vec<Vec<u64>>,
    /// `Q(w)` for every kept word, per level (level 0 is the empty word).
    pub q: Vec<Vec<f64>>,
    /// `Y_k = Σ_{|w|=k} Q(w)`.
    pub y: Vec<f64>,
}

impl CascadeSample {
    /// Kept words of length `k`, aligned with `q[k]`.
    pub fn words(&self, k: usize) -> Vec<Vec<usize>> {
        let mut words: Vec<Vec<usize>> = vec![vec![]];
        for masks in &self.masks[..k] {
            words = words
                .iter()
                .zip(masks)
                .flat_map(|(w, &m)| {
                    (0..self.alphabet).filter(move |i| m >> i & 1 == 1).map(move |i| {
                        let mut c = w.clone();
                        c.push(i);
                        c
                    })
                })
                .collect();
        }
        words
    }

    /// `(word, Q)` rows for the deepest level.
    pub fn to_csv(&self) -> String {
        let mut s = String::from("word,Q\n");
        for (w, q) in self.words(self.depth).iter().zip(&self.q[self.depth]) {
            let w: Vec<String> = w.iter().map(|i| i.to_string()).collect();
            s.push_str(&format!("{},{q:e}\n", w.join(".")));
        }
        s
    }
}

/// Samples `Q(w)` for all words up to `depth`, generation `n` using `seq`'s law `W^{(n)}`.
pub fn sample_cascade(seq: &ImmSequence, depth: usize, seed: u64, opts: TreeOptions) -> Result<CascadeSample> {
    if depth == 0 {
        return Err(Error::OutOfRange("cascade depth must be at least 1".into()));
    }
    if seq.len() < depth {
        return Err(Error::HorizonExhausted { needed: depth, available: seq.len() });
    }
    let n = seq.alphabet_size();
    if n > super::MAX_ALPHABET {
        return Err(Error::ResourceCap(format!("alphabet of {n} letters exceeds {}", super::MAX_ALPHABET)));
    }
    let mut expected = 1.0;
    let mut level = 1.0;
    for g in 1..=depth {
        level *= seq.model_at(g)?.survival().iter().sum::<f64>();
        expected += level;
    }
    if expected > opts.max_expected_nodes {
        return Err(Error::ResourceCap(format!("expected {expected:.3e} nodes exceeds the cap")));
    }
    let mut keys = vec![rng::root_key(seed)];
    let mut q = vec![vec![1.0]];
    let mut masks = Vec::with_capacity(depth);
    for k in 0..depth {
        let model = seq.model_at(k + 1)?;
        let children: Vec<(u64, Vec<(u64, f64)>)> = keys
            .par_iter()
            .zip(&q[k])
            .map(|(&key, &qv)| {
                let mut w = vec![0.0; n];
                node_weights(model, key, &mut w);
                let mut mask = 0u64;
                let mut kids = Vec::new();
                for (i, &wi) in w.iter().enumerate() {
                    if wi > 0.0 {
                        mask |= 1 << i;
                        kids.push((rng::child_key(key, i), qv * wi));
                    }
                }
                (mask, kids)
            })
            .collect();
        masks.push(children.iter().map(|c| c.0).collect());
        let flat: Vec<(u64, f64)> = children.into_iter().flat_map(|c| c.1).collect();
        keys = flat.iter().map(|c| c.0).collect();
        q.push(flat.iter().map(|c| c.1).collect());
    }
    let y = q
        .iter()
        .map(|lv| {
            let mut s = KahanSum::new();
            lv.iter().for_each(|&x| s.add(x));
            s.value()
        })
        .collect();
    Ok(CascadeSample { depth, seed, alphabet: n, masks, q, y })
}

/// `(E Σ_i W_i², E Σ_{i≠j} W_i W_j)` of one law.
fn weight_moments(model: &WeightModel) -> (f64, f64) {
    match model {
        WeightModel::Deterministic { p } => {
            let sq: f64 = p.iter().map(|x| x * x).sum();
            let s: f64 = p.iter().sum();
            (sq, s * s - sq)
        }
        WeightModel::Percolation { p, alpha } => {
            let sq: f64 = p.iter().zip(alpha.iter()).map(|(x, a)| x * x / a).sum();
            let s: f64 = p.iter().sum();
            let plain: f64 = p.iter().map(|x| x * x).sum();
            (sq, s * s - plain)
        }
        WeightModel::Atoms { atoms } => atoms.iter().fold((0.0, 0.0), |(a, b), at| {
            let sq: f64 = at.w.iter().map(|x| x * x).sum();
            let s: f64 = at.w.iter().sum();
            (a + at.prob * sq, b + at.prob * (s * s - sq))
        }),
    }
}

/// `E(Y_depth²)` by the recursion `E Y² = E(Σ W_i²)·E Y'² + E(Σ_{i≠j} W_i W_j)`
/// over the generations of `seq`, using `E Y' = 1` for every subtree.
pub fn exact_second_moment(seq: &ImmSequence, depth: usize) -> Result<f64> {
    if seq.len() < depth {
        return Err(Error::HorizonExhausted { needed: depth, available: seq.len() });
    }
    let mut m = 1.0;
    for g in (1..=depth).rev() {
        let (diag, cross) = weight_moments(seq.model_at(g)?);
        m = diag * m + cross;
    }
    Ok(m)
}

/// `Y_L(u) = Σ_{|v|=L} Q^u(v)` for the node with key `key` at generation `level`.
fn lookahead_mass(seq: &ImmSequence, key: u64, level: usize, steps: usize, buf: &mut Vec<Vec<f64>>) -> f64 {
    if steps == 0 {
        return 1.0;
    }
    let n = seq.alphabet_size();
    let model = seq.model_at(level + 1).expect("within sequence");
    if buf.len() <= steps {
        buf.resize(steps + 1, vec![0.0; n]);
    }
    let mut w = std::mem::take(&mut buf[steps]);
    node_weights(model, key, &mut w);
    let mut total = 0.0;
    for (i, &wi) in w.iter().enumerate() {
        if wi > 0.0 {
            total += wi * lookahead_mass(seq, rng::child_key(key, i), level + 1, steps - 1, buf);
        }
    }
    buf[steps] = w;
    total
}

/// Key for the sampling randomness of point `index`, independent of the cascade draws.
fn point_stream(seed: u64, index: u64) -> u64 {
    rng::mix(rng::root_key(seed) ^ rng::mix(index.wrapping_add(0xc0ffee)))
}

/// Samples a word of length `depth` from the cascade measure: at each node a child is
/// chosen with probability proportional to `W_i(v)·Y_L(vi)`, the subtree mass truncated
/// `lookahead` generations below (exact when the look-ahead reaches `depth`).
pub fn sample_point(seq: &ImmSequence, seed: u64, depth: usize, index: u64, lookahead: usize) -> Result<Vec<usize>> {
    if seq.len() < depth {
        return Err(Error::HorizonExhausted { needed: depth, available: seq.len() });
    }
    let n = seq.alphabet_size();
    let stream = point_stream(seed, index);
    let mut key = rng::root_key(seed);
    let mut word = Vec::with_capacity(depth);
    let mut w = vec![0.0; n];
    let mut buf = Vec::new();
    for level in 0..depth {
        node_weights(seq.model_at(level + 1)?, key, &mut w);
        let room = depth - level - 1;
        let mut l = lookahead.min(room);
        let mut scores;
        loop {
            scores = (0..n)
                .map(|i| if w[i] > 0.0 { w[i] * lookahead_mass(seq, rng::child_key(key, i), level + 1, l, &mut buf) } else { 0.0 })
                .collect::<Vec<f64>>();
            if scores.iter().any(|&s| s > 0.0) || l == 0 {
                break;
            }
            l -= 1;
        }
        let total: f64 = scores.iter().sum();
        if total <= 0.0 {
            return Err(Error::EmptySet(format!("cascade dies at generation {}", level + 1)));
        }
        let u = rng::uniform(stream, level as u64) * total;
        let mut acc = 0.0;
        let mut pick = scores.iter().rposition(|&s| s > 0.0).expect("positive total");
        for (i, &s) in scores.iter().enumerate() {
            acc += s;
            if s > 0.0 && u < acc {
                pick = i;
                break;
            }
        }
        word.push(pick);
        key = rng::child_key(key, pick);
    }
    Ok(word)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct LocalDimOptions {
    pub points: usize,
    /// Generations of subtree mass added below each parallelepiped word.
    pub lookahead: usize,
    /// Cap on the number of words enumerated per parallelepiped.
    pub max_words: usize,
}

impl Default for LocalDimOptions {
    fn default() -> Self {
        Self { points: 100, lookahead: 4, max_words: 1 << 20 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PointSlope {
    pub word: Vec<usize>,
    /// `log μ(Q_N(z))` up to an additive constant, per requested `N`.
    pub log_mass: Vec<f64>,
    pub slope: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TheoryPoint {
    pub n: usize,
    pub d_n: f64,
    pub d_tilde: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LocalDimReport {
    pub n_list: Vec<f64>,
    pub points: Vec<PointSlope>,
    pub median: f64,
    pub mean: f64,
    /// `d_N` of the sequence at the same scales, when the horizon allows it.
    pub theory: Vec<TheoryPoint>,
}

/// Mass of the parallelepiped `Q_N(z)`: words `u` of length `g_s` agreeing with `z` on
/// `Π_r` over each level `(g_{r-1}, g_r]`, each weighted by its truncated subtree mass.
fn parallelepiped_mass(
    seq: &ImmSequence,
    seed: u64,
    z: &[usize],
    allowed: &[Vec<usize>],
    depth: usize,
    opts: &LocalDimOptions,
) -> Result<f64> {
    let gs = allowed.len();
    let n = seq.alphabet_size();
    let tail = opts.lookahead.min(depth - gs);
    let mut frontier = vec![(rng::root_key(seed), 1.0f64)];
    let mut w = vec![0.0; n];
    for (level, letters) in allowed.iter().enumerate() {
        let model = seq.model_at(level + 1)?;
        let mut next = Vec::with_capacity(frontier.len() * letters.len());
        for &(key, q) in &frontier {
            node_weights(model, key, &mut w);
            for &i in letters {
                if w[i] > 0.0 {
                    next.push((rng::child_key(key, i), q * w[i]));
                }
            }
        }
        if next.len() > opts.max_words {
            return Err(Error::ResourceCap(format!("parallelepiped has more than {} words", opts.max_words)));
        }
        frontier = next;
    }
    debug_assert!(z.len() >= gs);
    let mut buf = Vec::new();
    Ok(frontier.iter().map(|&(key, q)| q * lookahead_mass(seq, key, gs, tail, &mut buf)).sum())
}

/// Empirical local dimensions: slopes of `-log μ(Q_N(z))` against `N` for
/// cascade-sampled points `z` of length `depth`.
pub fn empirical_local_dimension(
    ifs: &DiagonalIfs,
    seq: &ImmSequence,
    seed: u64,
    depth: usize,
    n_list: &[f64],
    opts: &LocalDimOptions,
) -> Result<LocalDimReport> {
    if n_list.len() < 2 {
        return Err(Error::EmptySet("need at least two scales".into()));
    }
    if opts.points == 0 {
        return Err(Error::EmptySet("no sample points".into()));
    }
    if seq.len() < depth {
        return Err(Error::HorizonExhausted { needed: depth, available: seq.len() });
    }
    let mut ns = n_list.to_vec();
    ns.sort_by(f64::total_cmp);
    ns.dedup();
    let prefix = PrefixTable::new(ifs, seq, depth)?;
    let decs = ns
        .iter()
        .map(|&nn| match decompose_at(ifs, &prefix, nn) {
            Ok(d) if *d.g.last().unwrap() <= depth => Ok(d),
            Ok(_) | Err(Error::HorizonExhausted { .. }) => {
                Err(Error::OutOfRange(format!("depth {depth} is too small for N = {nn}")))
            }
            Err(e) => Err(e),
        })
        .collect::<Result<Vec<_>>>()?;
    let theory = match Engine::new(ifs, seq, seq.len()) {
        Ok(e) => ns
            .iter()
            .filter_map(|&nn| {
                let n = nn.round() as usize;
                e.d_sequences(n).ok().map(|d| TheoryPoint { n, d_n: d.d_n, d_tilde: d.d_tilde })
            })
            .collect(),
        Err(_) => Vec::new(),
    };
    let xs = ns.clone();
    let points: Vec<PointSlope> = (0..opts.points as u64)
        .into_par_iter()
        .map(|idx| {
            let z = sample_point(seq, seed, depth, idx, opts.lookahead)?;
            let mut log_mass = Vec::with_capacity(decs.len());
            for dec in &decs {
                let gs = *dec.g.last().unwrap();
                let allowed: Vec<Vec<usize>> = (1..=gs)
                    .map(|g| {
                        let r = dec.level_of(g);
                        let cls = dec.coding.rep[r][z[g - 1]];
                        (0..ifs.len()).filter(|&i| dec.coding.rep[r][i] == cls).collect()
                    })
                    .collect();
                let m = parallelepiped_mass(seq, seed, &z, &allowed, depth, opts)?;
                log_mass.push(m.ln());
            }
            let neg: Vec<f64> = log_mass.iter().map(|v| -v).collect();
            let (slope, _, _) = least_squares(&xs, &neg);
            Ok(PointSlope { word: z, log_mass, slope })
        })
        .collect::<Result<_>>()?;
    let mut slopes: Vec<f64> = points.iter().map(|p| p.slope).collect();
    slopes.sort_by(f64::total_cmp);
    let m = slopes.len();
    let median = if m % 2 == 1 { slopes[m / 2] } else { 0.5 * (slopes[m / 2 - 1] + slopes[m / 2]) };
    let mean = slopes.iter().sum::<f64>() / m as f64;
    Ok(LocalDimReport { n_list: ns, points, median, mean, theory })
}

/// Digit counts of one block of a word.
#[derive(Debug, Clone, PartialEq, Eq, Serialize)]
pub struct BlockFrequency {
    pub len: usize,
    pub counts: Vec<usize>,
}

impl BlockFrequency {
    /// `counts / len`.
    pub fn vector(&self) -> Vec<f64> {
        self.counts.iter().map(|&c| c as f64 / self.len as f64).collect()
    }
}

/// Empirical digit distributions of `word` over the blocks of `schedule` (block lengths).
/// Only complete blocks are reported; generation `n` of block `m` uses entry `m`.
pub fn localized_frequencies(word: &[usize], schedule: &[usize], alphabet: usize) -> Result<Vec<BlockFrequency>> {
    let first = *schedule.first().ok_or_else(|| Error::EmptySet("schedule".into()))?;
    if schedule.contains(&0) {
        return Err(Error::OutOfRange("block lengths must be positive".into()));
    }
    if word.len() < first {
        return Err(Error::OutOfRange(format!("word of length {} is shorter than the first block {first}", word.len())));
    }
    if let Some(&bad) = word.iter().find(|&&i| i >= alphabet) {
        return Err(Error::UnknownLetter { letter: bad, size: alphabet });
    }
    let mut out = Vec::new();
    let mut start = 0;
    for &len in schedule {
        if start + len > word.len() {
            break;
        }
        let mut counts = vec![0; alphabet];
        for &i in &word[start..start + len] {
            counts[i] += 1;
        }
        out.push(BlockFrequency { len, counts });
        start += len;
    }
    Ok(out)
}
