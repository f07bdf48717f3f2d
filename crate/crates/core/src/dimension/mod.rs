//! Dimension formulas: entropy profiles, `d_N`/`d̃_N`, the Mandelbrot closed
//! form, finite-horizon liminf/limsup estimates and partition functions.

mod periodic;

pub use periodic::{dim_exp_periodic, Knot, PeriodicDimension, PeriodicSpec, PeriodicValue};

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{DiagonalIfs, DirectionSet};
use crate::scale::{chain_of, decompose, direction_classes, group_axes, projected_entropy, PrefixTable, ScaleDecomposition, TailMinTable};
use crate::sequence::ImmSequence;
use crate::weights::{log_moment, lyapunov, tau_sum, weight_entropy, WeightModel};

/// Oscillation threshold below which a tail estimate is called converged.
pub const CONVERGENCE_TOL: f64 = 1e-3;

/// Precomputed tables for evaluating the scale-`N` quantities of one sequence.
#[derive(Debug, Clone)]
pub struct Engine<'a> {
    ifs: &'a DiagonalIfs,
    prefix: PrefixTable,
    tails: TailMinTable,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct DPair {
    pub n: usize,
    pub d_n: f64,
    pub d_tilde: f64,
    /// Smallest `k` realising the minimum in `d̃_N`.
    pub argmin_k: usize,
    /// `N⁻¹ min_{N' ≥ g_s} Σ_{n≤N'} H`.
    pub tail_term: f64,
    pub horizon_limited: bool,
}

impl<'a> Engine<'a> {
    pub fn new(ifs: &'a DiagonalIfs, seq: &ImmSequence, horizon: usize) -> Result<Self> {
        let prefix = PrefixTable::new(ifs, seq, horizon)?;
        let tails = TailMinTable::new(prefix.h_prefix());
        Ok(Self { ifs, prefix, tails })
    }

    pub fn prefix(&self) -> &PrefixTable {
        &self.prefix
    }

    pub fn horizon(&self) -> usize {
        self.prefix.horizon()
    }

    pub fn decompose(&self, n: usize) -> Result<ScaleDecomposition> {
        decompose(self.ifs, &self.prefix, n)
    }

    /// `H_{N,k}`.
    pub fn entropy_profile(&self, dec: &ScaleDecomposition, k: usize) -> Result<f64> {
        let gs = *dec.g.last().unwrap();
        if k > self.horizon() || gs > self.horizon() {
            return Err(Error::HorizonExhausted { needed: k.max(gs), available: self.horizon() });
        }
        let mut total = self.prefix.h_prefix()[k];
        for (r, d) in dec.chain.iter().enumerate() {
            let lo = if r == 0 { 0 } else { dec.g[r - 1] };
            let a = lo.max(k);
            let b = dec.g[r];
            if b > a {
                total += self.prefix.projected_sum(d, a, b)?;
            }
        }
        Ok(total)
    }

    /// `H_{N,k}` for every `k` in `[g_1, g_s]`, by a backward sweep.
    pub fn entropy_profile_range(&self, dec: &ScaleDecomposition) -> Result<Vec<f64>> {
        let (g1, gs) = (dec.g[0], *dec.g.last().unwrap());
        if gs > self.horizon() {
            return Err(Error::HorizonExhausted { needed: gs, available: self.horizon() });
        }
        let h = self.prefix.h_prefix();
        let projs: Vec<&[f64]> = dec
            .chain
            .iter()
            .map(|d| self.prefix.projected_prefix(d).ok_or_else(|| Error::NotGoodSponge(format!("no coding on {d}"))))
            .collect::<Result<_>>()?;
        let mut out = vec![0.0; gs - g1 + 1];
        let mut tail = 0.0;
        let mut r = dec.s() - 1;
        for k in (g1..=gs).rev() {
            out[k - g1] = h[k] + tail;
            if k > g1 {
                while r > 0 && dec.g[r - 1] >= k {
                    r -= 1;
                }
                tail += projs[r][k] - projs[r][k - 1];
            }
        }
        Ok(out)
    }

    /// `(d_N, d̃_N)` at scale `N`.
    pub fn d_sequences(&self, n: usize) -> Result<DPair> {
        let dec = self.decompose(n)?;
        self.d_sequences_with(&dec)
    }

    pub fn d_sequences_with(&self, dec: &ScaleDecomposition) -> Result<DPair> {
        let n = dec.n;
        let nf = n as f64;
        let profile = self.entropy_profile_range(dec)?;
        let g1 = dec.g[0];
        let (mut best, mut argmin) = (f64::INFINITY, g1);
        for (off, &v) in profile.iter().enumerate() {
            if v < best {
                best = v;
                argmin = g1 + off;
            }
        }
        let inner = profile[..profile.len() - 1].iter().copied().fold(f64::INFINITY, f64::min);
        let gs = *dec.g.last().unwrap();
        let (tail_v, at) = self.tails.min_from(gs)?;
        let limited = at == self.horizon() && at > gs;
        Ok(DPair {
            n,
            d_n: inner.min(tail_v) / nf,
            d_tilde: best / nf,
            argmin_k: argmin,
            tail_term: tail_v / nf,
            horizon_limited: limited,
        })
    }

    /// `S_{N,k}(q)`.
    pub fn partition_function(&self, seq: &ImmSequence, dec: &ScaleDecomposition, k: usize, q: f64) -> Result<f64> {
        let gs = *dec.g.last().unwrap();
        let upto = k.max(gs);
        if upto > seq.len() {
            return Err(Error::HorizonExhausted { needed: upto, available: seq.len() });
        }
        let classes = direction_classes(self.ifs);
        let mut total = 0.0;
        for (start, end, model) in seq.spans() {
            if start > upto {
                break;
            }
            let end = end.min(upto);
            // generations start..=min(end,k) contribute T_W(q)
            if start <= k {
                let cnt = end.min(k) + 1 - start;
                total += cnt as f64 * log_moment(model, q).1;
            }
            if end > k {
                let p = model.mean();
                for n in start.max(k + 1)..=end {
                    let r = dec.level_of(n);
                    let cls = &classes[&dec.chain[r]];
                    let mut mass = vec![0.0; cls.len()];
                    for (i, &c) in cls.iter().enumerate() {
                        mass[c] += p[i];
                    }
                    total += -tau_sum(&mass, q).ln();
                }
            }
        }
        Ok(total)
    }
}

/// `H_{N,k}` for one decomposition (convenience wrapper).
pub fn entropy_profile(engine: &Engine<'_>, dec: &ScaleDecomposition, k: usize) -> Result<f64> {
    engine.entropy_profile(dec, k)
}

/// `(d_N, d̃_N)` for `seq` at scale `N`, with the tail searched up to `horizon`.
pub fn d_sequences(ifs: &DiagonalIfs, seq: &ImmSequence, n: usize, horizon: usize) -> Result<DPair> {
    Engine::new(ifs, seq, horizon)?.d_sequences(n)
}

/// `S_{N,k}(q)`.
pub fn partition_function(
    ifs: &DiagonalIfs,
    seq: &ImmSequence,
    dec: &ScaleDecomposition,
    k: usize,
    q: f64,
) -> Result<f64> {
    let horizon = k.max(*dec.g.last().unwrap());
    Engine::new(ifs, seq, horizon)?.partition_function(seq, dec, k, q)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct MandelbrotDimension {
    pub value: f64,
    pub entropy: f64,
    /// Per-level contributions; the first is `H/χ̃_1`.
    pub terms: Vec<f64>,
    pub chi: Vec<f64>,
    pub levels: Vec<Vec<usize>>,
    pub chain: Vec<DirectionSet>,
    /// Set when `H(W) = 0` and the dimension is reported as 0.
    pub degenerate: bool,
}

/// Partition of axes by equal constant-sequence generation numbers, stabilised over dyadic scales.
pub fn constant_partition(chi: &[f64]) -> Vec<Vec<usize>> {
    let part = |n: f64| group_axes(&chi.iter().map(|c| (n / c).floor() as usize + 1).collect::<Vec<_>>()).0;
    let mut prev = part((1u64 << 20) as f64);
    for j in 21..=50 {
        let cur = part((1u64 << j) as f64);
        if cur == prev {
            return cur;
        }
        prev = cur;
    }
    prev
}

/// Cached projection classes so that repeated Mandelbrot evaluations avoid geometry checks.
#[derive(Debug, Clone)]
pub struct MandelbrotEvaluator {
    neg_logs: Vec<Vec<f64>>,
    classes: BTreeMap<DirectionSet, Vec<usize>>,
}

/// Pieces of the Mandelbrot formula at a mean vector: the value is
/// `H·w_1 + Σ_r c_r min(H, h_r)`.
#[derive(Debug, Clone)]
pub(crate) struct MandelbrotPieces {
    pub h: f64,
    pub chi: Vec<f64>,
    pub levels: Vec<Vec<usize>>,
    pub proj: Vec<f64>,
}

impl MandelbrotPieces {
    pub fn coefficients(&self) -> Vec<f64> {
        let mut c = vec![1.0 / self.chi[0]];
        for r in 1..self.chi.len() {
            c.push(1.0 / self.chi[r] - 1.0 / self.chi[r - 1]);
        }
        c
    }
}

impl MandelbrotEvaluator {
    pub fn new(ifs: &DiagonalIfs) -> Self {
        Self { neg_logs: ifs.neg_log_ratios(), classes: direction_classes(ifs) }
    }

    pub fn dimension(&self) -> usize {
        self.neg_logs[0].len()
    }

    pub(crate) fn pieces(&self, p: &[f64], h: f64) -> Result<MandelbrotPieces> {
        let d = self.dimension();
        let mut chi = vec![0.0; d];
        for (row, &pi) in self.neg_logs.iter().zip(p) {
            for (c, l) in chi.iter_mut().zip(row) {
                *c += pi * l;
            }
        }
        let levels = constant_partition(&chi);
        let chain = chain_of(&levels);
        let mut proj = Vec::with_capacity(levels.len());
        for dset in &chain {
            let cls = self
                .classes
                .get(dset)
                .ok_or_else(|| Error::NotGoodSponge(format!("overlap alternative fails on {dset}")))?;
            proj.push(projected_entropy(p, cls));
        }
        let chi_levels = levels.iter().map(|l| chi[l[0]]).collect();
        Ok(MandelbrotPieces { h, chi: chi_levels, levels, proj })
    }

    pub fn evaluate(&self, w: &WeightModel) -> Result<MandelbrotDimension> {
        let h = weight_entropy(w);
        let p = w.mean();
        if h < -1e-14 {
            return Err(Error::Degenerate(h));
        }
        let pieces = self.pieces(&p, h.max(0.0))?;
        let chain = chain_of(&pieces.levels);
        let c = pieces.coefficients();
        let mut terms = vec![pieces.h * c[0]];
        for r in 1..c.len() {
            terms.push(c[r] * pieces.h.min(pieces.proj[r]));
        }
        Ok(MandelbrotDimension {
            value: terms.iter().sum(),
            entropy: h,
            terms,
            chi: pieces.chi,
            levels: pieces.levels,
            chain,
            degenerate: h <= 0.0,
        })
    }
}

/// Exact dimension of the Mandelbrot measure with weight law `w`.
pub fn dim_mandelbrot(ifs: &DiagonalIfs, w: &WeightModel) -> Result<MandelbrotDimension> {
    if w.len() != ifs.len() {
        return Err(Error::DimensionMismatch { expected: ifs.len(), got: w.len() });
    }
    lyapunov(ifs, &w.mean())?;
    MandelbrotEvaluator::new(ifs).evaluate(w)
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmBounds {
    /// Tail-window minimum of `d_N` (Hausdorff dimension estimate).
    pub liminf: f64,
    /// Tail-window maximum of `d_N` (packing dimension estimate).
    pub limsup: f64,
    pub liminf_tilde: f64,
    pub limsup_tilde: f64,
    /// Change of the tail minimum / maximum between the last half and last quarter of the grid.
    pub liminf_drift: f64,
    pub limsup_drift: f64,
    pub converged: bool,
    pub horizon_limited: bool,
    pub profile: Vec<DPair>,
}

/// Finite-horizon estimates of `liminf d_N` and `limsup d_N` over an `N` grid.
pub fn dim_imm_bounds(ifs: &DiagonalIfs, seq: &ImmSequence, n_grid: &[usize], horizon: usize) -> Result<ImmBounds> {
    if n_grid.is_empty() {
        return Err(Error::EmptySet("N grid".into()));
    }
    let engine = Engine::new(ifs, seq, horizon)?;
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    let profile: Vec<DPair> = grid.par_iter().map(|&n| engine.d_sequences(n)).collect::<Result<_>>()?;
    let window = |frac: usize| &profile[profile.len() - profile.len().div_ceil(frac)..];
    let stats = |w: &[DPair]| {
        let min = w.iter().map(|x| x.d_n).fold(f64::INFINITY, f64::min);
        let max = w.iter().map(|x| x.d_n).fold(f64::NEG_INFINITY, f64::max);
        let mint = w.iter().map(|x| x.d_tilde).fold(f64::INFINITY, f64::min);
        let maxt = w.iter().map(|x| x.d_tilde).fold(f64::NEG_INFINITY, f64::max);
        (min, max, mint, maxt)
    };
    let (lo, hi, lot, hit) = stats(window(2));
    let (lo4, hi4, _, _) = stats(window(4));
    let liminf_drift = (lo4 - lo).abs();
    let limsup_drift = (hi - hi4).abs();
    Ok(ImmBounds {
        liminf: lo,
        limsup: hi,
        liminf_tilde: lot,
        limsup_tilde: hit,
        liminf_drift,
        limsup_drift,
        converged: liminf_drift < CONVERGENCE_TOL && limsup_drift < CONVERGENCE_TOL,
        horizon_limited: window(2).iter().any(|x| x.horizon_limited),
        profile,
    })
}
