//! Lyapunov-adapted scale decomposition of a weight sequence.

use std::collections::BTreeMap;

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{build_projection_coding, classes_on, DiagonalIfs, DirectionSet, ProjectionCoding};
use crate::numeric::{shannon, KahanSum};
use crate::sequence::ImmSequence;
use crate::weights::{lyapunov, weight_entropy};

/// `Λ_a = 1 + max |log a_{i,k}|^{-1}`.
pub fn lambda_upper(ifs: &DiagonalIfs) -> f64 {
    1.0 + ifs.maps().iter().flat_map(|m| m.a.iter()).map(|a| 1.0 / a.ln().abs()).fold(0.0, f64::max)
}

/// `Λ'_a = min |log a_{i,k}|^{-1}`.
pub fn lambda_lower(ifs: &DiagonalIfs) -> f64 {
    ifs.maps().iter().flat_map(|m| m.a.iter()).map(|a| 1.0 / a.ln().abs()).fold(f64::INFINITY, f64::min)
}

/// Per-letter projection classes for every direction set on which the IFS is good.
pub(crate) fn direction_classes(ifs: &DiagonalIfs) -> BTreeMap<DirectionSet, Vec<usize>> {
    DirectionSet::all_nonempty(ifs.dimension())
        .into_iter()
        .filter_map(|d| classes_on(ifs, &d).ok().map(|c| (d, c)))
        .collect()
}

pub(crate) fn projected_entropy(p: &[f64], classes: &[usize]) -> f64 {
    let mut mass = vec![0.0; classes.len()];
    for (i, &c) in classes.iter().enumerate() {
        mass[c] += p[i];
    }
    shannon(&mass)
}

/// Prefix sums over runs of equal terms: inside a run the value is `base + j·c`, and run
/// totals are accumulated with compensation, so no error builds up along a run.
#[derive(Debug, Clone)]
struct RunPrefix {
    acc: KahanSum,
    out: Vec<f64>,
}

impl RunPrefix {
    fn new(horizon: usize) -> Self {
        let mut out = Vec::with_capacity(horizon + 1);
        out.push(0.0);
        Self { acc: KahanSum::new(), out }
    }

    fn extend(&mut self, c: f64, reps: usize) {
        let base = self.acc.value();
        self.out.extend((1..=reps).map(|j| base + j as f64 * c));
        self.acc.add(reps as f64 * c);
    }
}

/// Compensated prefix sums of every per-generation quantity the formulas need.
#[derive(Debug, Clone)]
pub struct PrefixTable {
    horizon: usize,
    chi: Vec<Vec<f64>>,
    h: Vec<f64>,
    proj: BTreeMap<DirectionSet, Vec<f64>>,
    lambda_upper: f64,
    lambda_lower: f64,
}

impl PrefixTable {
    pub fn new(ifs: &DiagonalIfs, seq: &ImmSequence, horizon: usize) -> Result<Self> {
        if seq.alphabet_size() != ifs.len() {
            return Err(Error::DimensionMismatch { expected: ifs.len(), got: seq.alphabet_size() });
        }
        if horizon > seq.len() {
            return Err(Error::HorizonExhausted { needed: horizon, available: seq.len() });
        }
        let d = ifs.dimension();
        let classes = direction_classes(ifs);
        let mut chi = vec![RunPrefix::new(horizon); d];
        let mut h = RunPrefix::new(horizon);
        let mut proj: BTreeMap<DirectionSet, RunPrefix> = classes.keys().map(|k| (k.clone(), RunPrefix::new(horizon))).collect();
        for (start, end, model) in seq.spans() {
            if start > horizon {
                break;
            }
            let reps = end.min(horizon) + 1 - start;
            let p = model.mean();
            for (acc, c) in chi.iter_mut().zip(lyapunov(ifs, &p)?) {
                acc.extend(c, reps);
            }
            h.extend(weight_entropy(model), reps);
            for (dset, cls) in &classes {
                proj.get_mut(dset).unwrap().extend(projected_entropy(&p, cls), reps);
            }
        }
        Ok(Self {
            horizon,
            chi: chi.into_iter().map(|r| r.out).collect(),
            h: h.out,
            proj: proj.into_iter().map(|(k, v)| (k, v.out)).collect(),
            lambda_upper: lambda_upper(ifs),
            lambda_lower: lambda_lower(ifs),
        })
    }

    pub fn horizon(&self) -> usize {
        self.horizon
    }

    pub fn dimension(&self) -> usize {
        self.chi.len()
    }

    /// `Σ_{n≤N} H(W^{(n)})` for `N = 0..=horizon`.
    pub fn h_prefix(&self) -> &[f64] {
        &self.h
    }

    pub fn chi_prefix(&self, k: usize) -> &[f64] {
        &self.chi[k]
    }

    /// Prefix sums of `h(Π_D p^{(n)})`, if the IFS is good on `D`.
    pub fn projected_prefix(&self, d: &DirectionSet) -> Option<&[f64]> {
        self.proj.get(d).map(Vec::as_slice)
    }

    pub fn lambda(&self) -> (f64, f64) {
        (self.lambda_upper, self.lambda_lower)
    }

    /// `Σ_{n=a+1}^{b} h(Π_D p^{(n)})`.
    pub fn projected_sum(&self, d: &DirectionSet, a: usize, b: usize) -> Result<f64> {
        let pre = self.projected_prefix(d).ok_or_else(|| Error::NotGoodSponge(format!("no coding on {d}")))?;
        if b > self.horizon {
            return Err(Error::HorizonExhausted { needed: b, available: self.horizon });
        }
        Ok(pre[b] - pre[a])
    }
}

/// `γ_k(N)`: smallest `n` with `Σ_{m≤n} χ_k(p^{(m)}) > N`.
pub fn gamma(prefix: &PrefixTable, n: f64, k: usize) -> Result<usize> {
    let chi = prefix.chi_prefix(k);
    let idx = chi[1..].partition_point(|&x| x <= n);
    if idx == chi.len() - 1 {
        return Err(Error::HorizonExhausted { needed: idx + 1, available: prefix.horizon() });
    }
    Ok(idx + 1)
}

#[derive(Debug, Clone, Serialize)]
pub struct ScaleDecomposition {
    pub n: usize,
    /// `A_r(N)`, 0-based axes, ordered by increasing generation.
    pub levels: Vec<Vec<usize>>,
    pub g: Vec<usize>,
    pub chain: Vec<DirectionSet>,
    #[serde(skip)]
    pub coding: ProjectionCoding,
}

impl ScaleDecomposition {
    pub fn s(&self) -> usize {
        self.levels.len()
    }

    /// Level (0-based) of generation `n`, i.e. the `r` with `g_{r-1} < n ≤ g_r`.
    pub fn level_of(&self, n: usize) -> usize {
        self.g.partition_point(|&g| g < n).min(self.s() - 1)
    }

    /// `{"N","s","A","g"}` with 1-based axes.
    pub fn to_json(&self) -> serde_json::Value {
        let a: Vec<Vec<usize>> = self.levels.iter().map(|l| l.iter().map(|k| k + 1).collect()).collect();
        serde_json::json!({ "N": self.n, "s": self.s(), "A": a, "g": self.g })
    }
}

/// Groups axes by their generation numbers into the strictly increasing chain data.
pub(crate) fn group_axes(gammas: &[usize]) -> (Vec<Vec<usize>>, Vec<usize>) {
    let mut by_g: BTreeMap<usize, Vec<usize>> = BTreeMap::new();
    for (k, &g) in gammas.iter().enumerate() {
        by_g.entry(g).or_default().push(k);
    }
    let g = by_g.keys().copied().collect();
    (by_g.into_values().collect(), g)
}

pub(crate) fn chain_of(levels: &[Vec<usize>]) -> Vec<DirectionSet> {
    (0..levels.len()).map(|r| DirectionSet::new(levels[r..].iter().flatten().copied())).collect()
}

pub fn decompose(ifs: &DiagonalIfs, prefix: &PrefixTable, n: usize) -> Result<ScaleDecomposition> {
    decompose_at(ifs, prefix, n as f64)
}

/// Decomposition at a real scale `x`; the stored `n` is `x` rounded.
pub fn decompose_at(ifs: &DiagonalIfs, prefix: &PrefixTable, x: f64) -> Result<ScaleDecomposition> {
    if !(x >= 0.0) || !x.is_finite() {
        return Err(Error::OutOfRange(format!("scale {x} must be finite and nonnegative")));
    }
    let n = x.round() as usize;
    let gammas = (0..ifs.dimension()).map(|k| gamma(prefix, x, k)).collect::<Result<Vec<_>>>()?;
    let (levels, g) = group_axes(&gammas);
    let chain = chain_of(&levels);
    let coding = build_projection_coding(ifs, &chain).map_err(|e| match e {
        Error::OverlapViolation { level, i, j } => Error::NotGoodSponge(format!(
            "letters {i} and {j} violate the overlap alternative on {}",
            chain[level]
        )),
        other => other,
    })?;
    Ok(ScaleDecomposition { n, levels, g, chain, coding })
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct TailMin {
    pub a_n: f64,
    pub n_tilde: usize,
    /// The minimum sits at the horizon, so the true tail may go lower.
    pub horizon_limited: bool,
}

/// Suffix minima of the entropy prefix, answering tail queries in O(1).
#[derive(Debug, Clone)]
pub struct TailMinTable {
    prefix: Vec<f64>,
    best: Vec<(f64, usize)>,
}

impl TailMinTable {
    pub fn new(prefix: &[f64]) -> Self {
        let mut best = vec![(f64::INFINITY, 0); prefix.len()];
        let last = prefix.len() - 1;
        best[last] = (prefix[last], last);
        for n in (0..last).rev() {
            best[n] = if prefix[n] <= best[n + 1].0 { (prefix[n], n) } else { best[n + 1] };
        }
        Self { prefix: prefix.to_vec(), best }
    }

    pub fn horizon(&self) -> usize {
        self.prefix.len() - 1
    }

    /// `min_{N ≤ N' ≤ horizon} Σ_{n≤N'} H` with its smallest minimiser.
    pub fn min_from(&self, n: usize) -> Result<(f64, usize)> {
        self.best.get(n).copied().ok_or(Error::HorizonExhausted { needed: n, available: self.horizon() })
    }

    pub fn query(&self, n: usize) -> Result<TailMin> {
        let (v, at) = self.min_from(n)?;
        Ok(TailMin { a_n: v - self.prefix[n], n_tilde: at, horizon_limited: at == self.horizon() && at > n })
    }
}

/// `(A_N, Ñ)` over `N' ∈ [N, horizon]`.
pub fn tail_min(h_prefix: &[f64], n: usize, horizon: usize) -> Result<TailMin> {
    if horizon >= h_prefix.len() {
        return Err(Error::HorizonExhausted { needed: horizon, available: h_prefix.len() - 1 });
    }
    TailMinTable::new(&h_prefix[..=horizon]).query(n)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct MomentBound {
    pub n_tilde: usize,
    pub b: f64,
    pub upper: f64,
    pub horizon: usize,
}

/// Horizon `⌈(log #𝓘 / ε) N⌉` beyond which `Ñ` cannot lie once `N ≥ N_ε`.
pub fn tail_horizon(alphabet: usize, eps: f64, n: usize) -> usize {
    ((alphabet as f64).ln() / eps * n as f64).ceil() as usize
}

/// `B(N,q')` and the upper side of the two-sided moment bracket with constants `(C, c)`.
pub fn moment_bound(
    h_prefix: &[f64],
    alphabet: usize,
    n: usize,
    q: f64,
    eps: f64,
    constants: (f64, f64),
) -> Result<MomentBound> {
    if !(q > 1.0 && q <= 2.0) {
        return Err(Error::OutOfRange(format!("q' = {q} not in (1,2]")));
    }
    if !(eps > 0.0) {
        return Err(Error::OutOfRange("epsilon must be positive".into()));
    }
    let horizon = tail_horizon(alphabet, eps, n).max(n);
    if horizon >= h_prefix.len() {
        return Err(Error::HorizonExhausted { needed: horizon, available: h_prefix.len() - 1 });
    }
    let t = tail_min(h_prefix, n, horizon)?;
    let b = (-(q - 1.0) * t.a_n).exp().max(1.0);
    let (c_big, c_small) = constants;
    let denom = (1.0 - (-(q - 1.0) * eps / (4.0 * q)).exp()).powf(q);
    let upper = c_big * (n as f64).powf(q) * (c_small * n as f64 * (q - 1.0).powi(2)).exp() / denom * b;
    Ok(MomentBound { n_tilde: t.n_tilde, b, upper, horizon })
}
