//! Optimisation over block sequences: the type-ℓ Hausdorff supremum, the packing
//! supremum over the `𝒬` class, and the entropy-raising perturbation behind it.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::optim::{self, SolverOptions, SolverTrace, StartTrace};
use super::{optimize_mandelbrot, Argument, Certificate, OptimizationResult};
use crate::dimension::{dim_imm_bounds, Engine};
use crate::error::{Error, Result};
use crate::ifs::DiagonalIfs;
use crate::numeric::{compensated_prefix, shannon};
use crate::scale::{direction_classes, lambda_lower, lambda_upper, projected_entropy};
use crate::sequence::{n_epsilon, Block, ImmSequence, TypeEllBlock, TypeEllSequence};
use crate::weights::{ProbVector, SurvivalVector, WeightModel};

/// Which generations around `⌊Nε⌋` receive `p_max`.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BlockAlignment {
    /// Whole blocks: the block containing `⌊Nε⌋` gets `p_max`, and mixing extends to the end
    /// of the block containing `⌊Λ_a N⌋`, so the result keeps the block schedule.
    #[default]
    Aligned,
    /// Generation-exact case split; blocks may be cut.
    Exact,
}

fn alpha_or_ones(alpha: Option<&SurvivalVector>, n: usize) -> SurvivalVector {
    alpha.cloned().unwrap_or_else(|| SurvivalVector::ones(n))
}

/// `H(W_p) = h(p) + Σ p_i log α_i`.
fn h_tilde(p: &[f64], log_alpha: &[f64]) -> f64 {
    shannon(p) + p.iter().zip(log_alpha).map(|(x, l)| x * l).sum::<f64>()
}

/// `(λ, ε-threshold)` with `λ = 8(H_max − 2H_min)/H_max²` and threshold `min(1/λ, Λ'_a, 1/#𝓘)`.
pub fn perturbation_threshold(ifs: &DiagonalIfs, alpha: &SurvivalVector) -> Result<(f64, f64)> {
    let hmax = alpha.h_max();
    if hmax <= 0.0 {
        return Err(Error::Subcritical(alpha.mean_offspring()));
    }
    let lambda = 8.0 * (hmax - 2.0 * alpha.h_min()) / (hmax * hmax);
    let thr = (1.0 / lambda).min(lambda_lower(ifs)).min(1.0 / ifs.len() as f64);
    Ok((lambda, thr))
}

/// Scales `M ∈ [⌊Nε⌋, ⌊Λ_a N⌋]` (and `M ≥ 1`) at which `Σ_{n≤M} H < −Mε`.
pub fn q_class_violations(seq: &ImmSequence, eps: f64, n: usize, lambda_a: f64) -> Result<Vec<usize>> {
    let top = (lambda_a * n as f64).floor() as usize;
    let prefix = compensated_prefix(seq.entropies(top)?);
    let lo = ((n as f64 * eps).floor() as usize).max(1);
    Ok((lo..=top).filter(|&m| prefix[m] < -(m as f64) * eps - 1e-12 * m as f64).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PerturbedSequence {
    pub sequence: ImmSequence,
    /// Present when the block schedule is preserved.
    pub type_ell: Option<TypeEllSequence>,
    pub lambda: f64,
    /// `⌊Nε⌋` and `⌊Λ_a N⌋`.
    pub prefix_end: usize,
    pub scan_end: usize,
    /// `Σ_{n≤M} H ≥ Mε` for every `1 ≤ M ≤ ⌊Λ_a N⌋`, checked exhaustively.
    pub certified: bool,
}

/// Raises the running entropy of a `𝒬`-class sequence so that `Σ_{n≤M} H ≥ Mε` for all
/// `M ≤ ⌊Λ_a N⌋`: `p_max` up to `⌊Nε⌋`, then `(1−λε)p + λε p_max` wherever `H ≤ H_max/2`.
pub fn perturb_sequence(
    ifs: &DiagonalIfs,
    seq: &TypeEllSequence,
    eps: f64,
    n: usize,
    alignment: BlockAlignment,
) -> Result<PerturbedSequence> {
    let letters = ifs.len();
    let alpha = alpha_or_ones(seq.alpha.as_ref(), letters);
    if alpha.len() != letters || seq.blocks[0].p.len() != letters {
        return Err(Error::DimensionMismatch { expected: letters, got: seq.blocks[0].p.len() });
    }
    let (lambda, thr) = perturbation_threshold(ifs, &alpha)?;
    if !(eps > 0.0 && eps < thr) {
        return Err(Error::OutOfRange(format!("ε = {eps} must lie in (0, {thr})")));
    }
    if (n as f64) * eps < 1.0 {
        return Err(Error::OutOfRange(format!("need Nε ≥ 1, got N = {n}, ε = {eps}")));
    }
    let lambda_a = lambda_upper(ifs);
    let m_eps = (n as f64 * eps).floor() as usize;
    let top = (lambda_a * n as f64).floor() as usize;
    if seq.len() < top {
        return Err(Error::HorizonExhausted { needed: top, available: seq.len() });
    }
    let imm = seq.to_imm()?;
    let bad = q_class_violations(&imm, eps, n, lambda_a)?;
    if let Some(m) = bad.first() {
        return Err(Error::Infeasible(format!("sequence leaves the 𝒬 class at M = {m}")));
    }
    let hmax = alpha.h_max();
    let log_alpha: Vec<f64> = alpha.iter().map(|a| a.ln()).collect();
    let pmax = alpha.p_max();
    let t = lambda * eps;
    let mix = |p: &ProbVector| -> Result<ProbVector> {
        ProbVector::normalized(p.iter().zip(pmax.iter()).map(|(a, b)| (1.0 - t) * a + t * b).collect())
    };
    let low = |p: &ProbVector| h_tilde(p, &log_alpha) <= hmax / 2.0;

    let (sequence, type_ell) = match alignment {
        BlockAlignment::Aligned => {
            let mut start = 1;
            let mut blocks = Vec::with_capacity(seq.blocks.len());
            for b in &seq.blocks {
                let p = if start <= m_eps {
                    pmax.clone()
                } else if start <= top && low(&b.p) {
                    mix(&b.p)?
                } else {
                    b.p.clone()
                };
                blocks.push(TypeEllBlock { len: b.len, p });
                start += b.len;
            }
            let te = TypeEllSequence::new(blocks, seq.alpha.clone())?;
            (te.to_imm()?, Some(te))
        }
        BlockAlignment::Exact => {
            let mut runs: Vec<Block> = Vec::new();
            let mut start = 1;
            for b in &seq.blocks {
                let end = start + b.len - 1;
                let at = |x: usize| x.clamp(start, end + 1);
                let pieces = [(start, at(m_eps + 1)), (at(m_eps + 1), at(top + 1)), (at(top + 1), end + 1)];
                for (w, &(a, z)) in pieces.iter().enumerate() {
                    if z <= a {
                        continue;
                    }
                    let p = match w {
                        0 => pmax.clone(),
                        1 if low(&b.p) => mix(&b.p)?,
                        _ => b.p.clone(),
                    };
                    runs.push(Block { len: z - a, model: seq.model_for(&p)? });
                }
                start = end + 1;
            }
            (ImmSequence::new(runs)?, None)
        }
    };
    let prefix = compensated_prefix(sequence.entropies(top)?);
    let certified = (1..=top).all(|m| prefix[m] + 1e-12 * m as f64 >= m as f64 * eps);
    Ok(PerturbedSequence { sequence, type_ell, lambda, prefix_end: m_eps, scan_end: top, certified })
}

fn schedule_cover(schedule: &[usize], len: usize) -> Result<Vec<usize>> {
    let mut out = Vec::new();
    let mut acc = 0;
    for &l in schedule {
        if acc >= len {
            break;
        }
        out.push(l);
        acc += l;
    }
    if acc < len {
        return Err(Error::HorizonExhausted { needed: len, available: acc });
    }
    Ok(out)
}

/// Mixes toward the uniform vector so that every entry is at least `η`.
fn to_grid(p: &[f64], eta: f64) -> Result<ProbVector> {
    let n = p.len() as f64;
    let t = (eta * n).min(1.0);
    ProbVector::normalized(p.iter().map(|x| (1.0 - t) * x + t / n).collect())
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct HausdorffOptions {
    pub starts: usize,
    pub sweeps: usize,
    /// Number of `N` values, geometrically spaced in `[N_max/window_ratio, N_max]`.
    pub grid_points: usize,
    pub window_ratio: f64,
    pub nm_iter: usize,
    pub seed: u64,
}

impl Default for HausdorffOptions {
    fn default() -> Self {
        Self { starts: 2, sweeps: 2, grid_points: 16, window_ratio: 16.0, nm_iter: 60, seed: 0x5eed }
    }
}

struct HausdorffObjective<'a> {
    ifs: &'a DiagonalIfs,
    alpha: Option<SurvivalVector>,
    schedule: Vec<usize>,
    horizon: usize,
    grid: Vec<usize>,
    eps: f64,
}

impl HausdorffObjective<'_> {
    fn build(&self, vecs: &[Vec<f64>]) -> Result<TypeEllSequence> {
        let blocks = self
            .schedule
            .iter()
            .zip(vecs)
            .map(|(&len, p)| Ok(TypeEllBlock { len, p: ProbVector::normalized(p.clone())? }))
            .collect::<Result<_>>()?;
        TypeEllSequence::new(blocks, self.alpha.clone())
    }

    /// `(min_N d_N, class violation, prefix)`.
    fn evaluate(&self, seq: &TypeEllSequence) -> Result<(f64, f64, Vec<f64>)> {
        let imm = seq.to_imm()?;
        let engine = Engine::new(self.ifs, &imm, self.horizon)?;
        let mut v = f64::INFINITY;
        for &n in &self.grid {
            v = v.min(engine.d_sequences(n)?.d_n);
        }
        let prefix = engine.prefix().h_prefix().to_vec();
        let half = self.horizon / 2;
        let viol = (half.max(1)..=self.horizon)
            .map(|m| (m as f64 * self.eps - prefix[m]) / m as f64)
            .fold(0.0f64, f64::max);
        Ok((v, viol, prefix))
    }

    fn score(&self, vecs: &[Vec<f64>]) -> f64 {
        match self.build(vecs).and_then(|s| self.evaluate(&s)) {
            Ok((v, viol, _)) => v - 10.0 * viol,
            Err(_) => f64::NEG_INFINITY,
        }
    }
}

/// Approximate supremum of `liminf_N d_N` (at the horizon) over type-ℓ block sequences whose
/// running entropy stays above `ε` on the second half of the horizon.
pub fn optimize_type_ell_hausdorff(
    ifs: &DiagonalIfs,
    alpha: Option<&SurvivalVector>,
    schedule: &[usize],
    eps: f64,
    horizon: usize,
    opts: &HausdorffOptions,
) -> Result<OptimizationResult> {
    let letters = ifs.len();
    let al = alpha_or_ones(alpha, letters);
    if al.len() != letters {
        return Err(Error::DimensionMismatch { expected: letters, got: al.len() });
    }
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("ε = {eps} must be positive")));
    }
    if al.h_max() <= eps {
        return Err(Error::Infeasible(format!("H_max = {} does not exceed ε = {eps}", al.h_max())));
    }
    let schedule = schedule_cover(schedule, horizon)?;
    let n_max = (horizon as f64 / lambda_upper(ifs)).floor() as usize;
    if n_max < 2 {
        return Err(Error::OutOfRange("horizon too short".into()));
    }
    let pts = opts.grid_points.max(2);
    let lo = (n_max as f64 / opts.window_ratio.max(1.0)).max(1.0);
    let mut grid: Vec<usize> =
        (0..pts).map(|j| (lo * (n_max as f64 / lo).powf(j as f64 / (pts - 1) as f64)).round() as usize).collect();
    grid.dedup();
    let obj = HausdorffObjective { ifs, alpha: alpha.cloned(), schedule, horizon, grid, eps };
    let blocks = obj.schedule.len();

    let seed_p = optimize_mandelbrot(ifs, alpha, &SolverOptions { starts: 8, ..Default::default() })?;
    let Argument::Vector(seed_p) = seed_p.argument else { unreachable!() };
    let anchors = vec![seed_p.into_inner(), al.p_max().into_inner()];
    let mut starts = optim::start_points(letters, &anchors, opts.starts.max(1) + 1, opts.seed);
    // constant-optimal seed first
    starts.swap(0, 1);
    starts.truncate(opts.starts.max(1));

    let runs: Vec<(Vec<Vec<f64>>, f64, usize)> = starts
        .par_iter()
        .map(|p0| {
            let mut vecs = vec![p0.clone(); blocks];
            let mut best = obj.score(&vecs);
            let mut evals = 1usize;
            if letters > 1 {
                for _ in 0..opts.sweeps {
                    for m in 0..blocks {
                        let f = |z: &[f64]| {
                            let mut trial = vecs.clone();
                            trial[m] = optim::softmax(z);
                            obj.score(&trial)
                        };
                        let (z, v, it) = optim::nelder_mead(&f, &optim::logits(&vecs[m]), 0.3, opts.nm_iter, 1e-12);
                        evals += it;
                        if v > best {
                            best = v;
                            vecs[m] = optim::softmax(&z);
                        }
                    }
                }
            }
            (vecs, best, evals)
        })
        .collect();
    let mut bi = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 > runs[bi].1 {
            bi = i;
        }
    }
    let eta = eps * eps;
    let pmax = al.p_max();
    let mut chosen = None;
    for k in 0..=20 {
        let t = k as f64 / 20.0;
        let vecs: Vec<Vec<f64>> = runs[bi]
            .0
            .iter()
            .map(|p| to_grid(&p.iter().zip(pmax.iter()).map(|(a, b)| (1.0 - t) * a + t * b).collect::<Vec<_>>(), eta).map(|q| q.into_inner()))
            .collect::<Result<_>>()?;
        let seq = obj.build(&vecs)?;
        let (v, viol, prefix) = obj.evaluate(&seq)?;
        if viol <= 0.0 {
            chosen = Some((seq, v, prefix));
            break;
        }
    }
    let (seq, value, prefix) = chosen.ok_or_else(|| Error::Infeasible("no feasible sequence found".into()))?;
    let n_eps = n_epsilon(&prefix, eps).unwrap_or(horizon);
    let traces: Vec<StartTrace> = runs
        .iter()
        .enumerate()
        .map(|(index, r)| StartTrace { index, value: r.1, iterations: r.2, residual: f64::NAN })
        .collect();
    let iterations = traces.iter().map(|t| t.iterations).sum();
    Ok(OptimizationResult {
        value,
        argument: Argument::Sequence(seq),
        trace: SolverTrace { starts: traces, best_start: bi, iterations, residual: f64::NAN },
        certificate: Some(Certificate { eps, n_eps }),
        at_horizon: true,
        degenerate: false,
        scale: None,
        witness_dim_p: None,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PackingOptions {
    pub solver: SolverOptions,
    /// Rounds of "optimise segment vectors, then recompute generation boundaries".
    pub boundary_iters: usize,
    pub alignment: BlockAlignment,
}

impl Default for PackingOptions {
    fn default() -> Self {
        Self { solver: SolverOptions { starts: 8, ..Default::default() }, boundary_iters: 6, alignment: BlockAlignment::Aligned }
    }
}

struct PackingContext<'a> {
    ifs: &'a DiagonalIfs,
    alpha: Option<SurvivalVector>,
    al: SurvivalVector,
    log_alpha: Vec<f64>,
    schedule: Vec<usize>,
    eps: f64,
    lambda_a: f64,
    opts: &'a PackingOptions,
}

struct PackingAt {
    n: usize,
    value: f64,
    seq: TypeEllSequence,
    trace: SolverTrace,
}

impl PackingContext<'_> {
    fn letters(&self) -> usize {
        self.ifs.len()
    }

    fn model(&self, p: &ProbVector) -> Result<WeightModel> {
        match &self.alpha {
            Some(a) => WeightModel::percolation(p.clone(), a.clone()),
            None => WeightModel::deterministic(p.clone()),
        }
    }

    /// Generation-level sequence: `q_r` on `(G_{r−1}, G_r]`, then `p_max` up to `len`.
    fn segment_sequence(&self, q: &[Vec<f64>], g: &[usize], len: usize) -> Result<ImmSequence> {
        let mut blocks = Vec::new();
        let mut prev = 0;
        for (r, &gr) in g.iter().enumerate() {
            blocks.push(Block { len: gr.saturating_sub(prev), model: self.model(&ProbVector::normalized(q[r].clone())?)? });
            prev = gr.max(prev);
        }
        blocks.push(Block { len: len.saturating_sub(prev).max(1), model: self.model(&self.al.p_max())? });
        ImmSequence::new(blocks)
    }

    /// Snaps segment vectors onto the block schedule (each block takes the segment holding its midpoint).
    fn block_sequence(&self, q: &[Vec<f64>], g: &[usize], len: usize, mix: f64) -> Result<TypeEllSequence> {
        let blocks = schedule_cover(&self.schedule, len)?;
        let pmax = self.al.p_max();
        let eta = self.eps * self.eps;
        let mut start = 1;
        let mut out = Vec::with_capacity(blocks.len());
        for len in blocks {
            let mid = start + (len - 1) / 2;
            let base: Vec<f64> = match g.iter().position(|&gr| mid <= gr) {
                Some(r) => q[r].clone(),
                None => pmax.to_vec(),
            };
            let mixed: Vec<f64> = base.iter().zip(pmax.iter()).map(|(a, b)| (1.0 - mix) * a + mix * b).collect();
            out.push(TypeEllBlock { len, p: to_grid(&mixed, eta)? });
            start += len;
        }
        TypeEllSequence::new(out, self.alpha.clone())
    }

    fn solve(&self, n: usize) -> Result<PackingAt> {
        let letters = self.letters();
        let top = (self.lambda_a * n as f64).floor() as usize;
        let m_eps = (n as f64 * self.eps).floor() as usize;
        let classes = direction_classes(self.ifs);
        let uniform = ProbVector::uniform(letters).into_inner();
        let pmax = self.al.p_max().into_inner();

        let mut q: Vec<Vec<f64>> = vec![uniform.clone()];
        let mut g: Vec<usize> = Vec::new();
        let mut trace = None;
        for _ in 0..self.opts.boundary_iters.max(1) {
            let seq = if g.is_empty() {
                ImmSequence::constant(self.model(&ProbVector::uniform(letters))?, top)?
            } else {
                self.segment_sequence(&q, &g, top)?
            };
            let dec = Engine::new(self.ifs, &seq, top)?.decompose(n)?;
            if dec.g == g {
                break;
            }
            // carry vectors over to the new segments by midpoint
            let old_g = g.clone();
            let newq: Vec<Vec<f64>> = (0..dec.g.len())
                .map(|r| {
                    let lo = if r == 0 { 0 } else { dec.g[r - 1] };
                    let mid = (lo + dec.g[r]).div_ceil(2).max(1);
                    match old_g.iter().position(|&x| mid <= x) {
                        Some(k) => q[k].clone(),
                        None => q.last().cloned().unwrap_or_else(|| uniform.clone()),
                    }
                })
                .collect();
            g = dec.g.clone();
            q = newq;
            let s = g.len();
            let lens: Vec<f64> = (0..s).map(|r| (g[r] - if r == 0 { 0 } else { g[r - 1] }) as f64).collect();
            let cls: Vec<&Vec<usize>> = dec.chain.iter().map(|d| &classes[d]).collect();
            let gg = g.clone();
            let nf = n as f64;
            let hmax = self.al.h_max();
            let objective = |x: &[f64], tau: f64| -> f64 {
                let qs: Vec<&[f64]> = x.chunks(letters).collect();
                let hs: Vec<f64> = qs.iter().map(|p| h_tilde(p, &self.log_alpha)).collect();
                let hp: Vec<f64> = (0..s).map(|r| projected_entropy(qs[r], cls[r])).collect();
                let mut f = Vec::with_capacity(s);
                for j in 0..s {
                    let mut v = 0.0;
                    for r in 0..s {
                        v += lens[r] * if r <= j { hs[r] } else { hp[r] };
                    }
                    f.push(v / nf);
                }
                let mut val = optim::soft_min(&f, tau);
                // running entropy at the breakpoints of the piecewise-linear prefix
                let mut cum = 0.0;
                let mut prev = 0usize;
                let mut penalty = 0.0;
                let mut check = |m: usize, c: f64| {
                    if m >= m_eps.max(1) && m <= top {
                        penalty += (-(c + m as f64 * self.eps)).max(0.0);
                    }
                };
                for r in 0..s {
                    if m_eps > prev && m_eps < gg[r] {
                        check(m_eps, cum + (m_eps - prev) as f64 * hs[r]);
                    }
                    cum += lens[r] * hs[r];
                    prev = gg[r];
                    check(prev, cum);
                }
                check(top, cum + top.saturating_sub(prev) as f64 * hmax);
                val -= 100.0 * penalty / nf;
                val
            };
            let mut starts = vec![q.concat(), uniform.repeat(s), pmax.repeat(s)];
            let pool = optim::start_points(letters, &[], self.opts.solver.starts.max(1) * s, self.opts.solver.seed ^ n as u64);
            for chunk in pool.chunks(s) {
                if starts.len() >= self.opts.solver.starts.max(3) {
                    break;
                }
                if chunk.len() == s {
                    starts.push(chunk.concat());
                }
            }
            let (x, _, tr) = optim::maximize_simplices(letters, &objective, &starts, &self.opts.solver);
            q = x.chunks(letters).map(|c| c.to_vec()).collect();
            trace = Some(tr);
        }

        // exact evaluation on the block schedule, mixing toward p_max until the class constraint holds
        for k in 0..=20 {
            let mix = k as f64 / 20.0;
            let seq = self.block_sequence(&q, &g, top, mix)?;
            let imm = seq.to_imm()?;
            if !q_class_violations(&imm, self.eps, n, self.lambda_a)?.is_empty() {
                continue;
            }
            let value = Engine::new(self.ifs, &imm, top)?.d_sequences(n)?.d_tilde;
            let trace = trace.unwrap_or(SolverTrace { starts: vec![], best_start: 0, iterations: 0, residual: 0.0 });
            return Ok(PackingAt { n, value, seq, trace });
        }
        Err(Error::Infeasible(format!("no 𝒬-class sequence found at N = {n}")))
    }
}

/// Packing-dimension supremum over the `𝒬` class: `Δ(ε, N)` for each `N`, the tail maximum
/// over the grid, and the concatenated witness built from perturbed maximisers.
pub fn optimize_packing(
    ifs: &DiagonalIfs,
    alpha: Option<&SurvivalVector>,
    schedule: &[usize],
    eps: f64,
    n_grid: &[usize],
    opts: &PackingOptions,
) -> Result<OptimizationResult> {
    let letters = ifs.len();
    let al = alpha_or_ones(alpha, letters);
    if al.len() != letters {
        return Err(Error::DimensionMismatch { expected: letters, got: al.len() });
    }
    if al.h_max() <= 0.0 {
        return Err(Error::Infeasible("no supercritical weight vector".into()));
    }
    if !(eps > 0.0) {
        return Err(Error::OutOfRange(format!("ε = {eps} must be positive")));
    }
    let mut grid = n_grid.to_vec();
    grid.sort_unstable();
    grid.dedup();
    if grid.is_empty() {
        return Err(Error::EmptySet("N grid".into()));
    }
    let ctx = PackingContext {
        ifs,
        alpha: alpha.cloned(),
        log_alpha: al.iter().map(|a| a.ln()).collect(),
        al: al.clone(),
        schedule: schedule.to_vec(),
        eps,
        lambda_a: lambda_upper(ifs),
        opts,
    };
    let per_n: Vec<PackingAt> = grid.iter().map(|&n| ctx.solve(n)).collect::<Result<_>>()?;
    let window = &per_n[per_n.len() - per_n.len().div_ceil(2)..];
    let best = window.iter().enumerate().fold(0, |b, (i, r)| if r.value > window[b].value { i } else { b });
    let best = &window[best];

    let witness_dim_p = witness(&ctx, &per_n).ok();
    Ok(OptimizationResult {
        value: best.value,
        argument: Argument::Sequence(best.seq.clone()),
        trace: best.trace.clone(),
        certificate: Some(Certificate { eps, n_eps: (best.n as f64 * eps).floor() as usize }),
        at_horizon: true,
        degenerate: false,
        scale: Some(best.n),
        witness_dim_p,
    })
}

/// Concatenates the perturbed maximisers on `(⌊Λ_a N_{j−1}⌋, ⌊Λ_a N_j⌋]` and returns the
/// at-horizon `limsup d_N` of the result.
fn witness(ctx: &PackingContext<'_>, per_n: &[PackingAt]) -> Result<f64> {
    let mut blocks: Vec<Block> = Vec::new();
    let mut done = 0usize;
    for at in per_n {
        let top = (ctx.lambda_a * at.n as f64).floor() as usize;
        let pert = perturb_sequence(ctx.ifs, &at.seq, ctx.eps, at.n, ctx.opts.alignment)?;
        for (a, b, model) in pert.sequence.spans() {
            let (lo, hi) = (a.max(done + 1), b.min(top));
            if hi >= lo {
                blocks.push(Block { len: hi - lo + 1, model: model.clone() });
            }
        }
        done = done.max(top);
    }
    let seq = ImmSequence::new(blocks)?;
    let ns: Vec<usize> = per_n.iter().map(|a| a.n).collect();
    Ok(dim_imm_bounds(ctx.ifs, &seq, &ns, done)?.limsup)
}
