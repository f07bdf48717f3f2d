//! Sequences that are continuous and periodic in `log t`, evaluated with
//! continuous scales.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{DiagonalIfs, DirectionSet};
use crate::scale::{chain_of, direction_classes, projected_entropy};
use crate::sequence::{Block, ImmSequence};
use crate::weights::{lyapunov, weight_entropy, ProbVector, SurvivalVector, WeightModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Knot {
    pub t: f64,
    pub p: ProbVector,
}

/// `p^{(t)}` on `[1, λ]`, linear in `log t` between knots and extended by `p^{(λt)} = p^{(t)}`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicSpec {
    pub lambda: f64,
    pub knots: Vec<Knot>,
    pub alpha: Option<SurvivalVector>,
}

#[derive(Deserialize)]
struct RawSpec {
    lambda: f64,
    knots: Vec<Knot>,
    #[serde(default)]
    alpha: Option<SurvivalVector>,
}

impl PeriodicSpec {
    pub fn new(lambda: f64, mut knots: Vec<Knot>, alpha: Option<SurvivalVector>) -> Result<Self> {
        if !(lambda > 1.0) || !lambda.is_finite() {
            return Err(Error::OutOfRange(format!("period {lambda} must exceed 1")));
        }
        if knots.is_empty() {
            return Err(Error::InvalidModel("no knots".into()));
        }
        let n = knots[0].p.len();
        for k in &knots {
            if k.p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: k.p.len() });
            }
            if !(k.t >= 1.0 - 1e-12 && k.t <= lambda + 1e-12) {
                return Err(Error::OutOfRange(format!("knot t = {} outside [1, λ]", k.t)));
            }
            if k.p.iter().any(|&x| x <= 0.0) {
                return Err(Error::InvalidModel("periodic vectors must have positive entries".into()));
            }
        }
        if knots.windows(2).any(|w| w[1].t <= w[0].t) {
            return Err(Error::InvalidModel("knots must be strictly increasing in t".into()));
        }
        if (knots[0].t - 1.0).abs() > 1e-12 {
            return Err(Error::InvalidModel("first knot must sit at t = 1".into()));
        }
        let last = knots.last().unwrap();
        if (last.t - lambda).abs() <= 1e-12 {
            if last.p.iter().zip(knots[0].p.iter()).any(|(a, b)| (a - b).abs() > 1e-12) {
                return Err(Error::InvalidModel("p(λ) must equal p(1)".into()));
            }
        } else {
            let p = knots[0].p.clone();
            knots.push(Knot { t: lambda, p });
        }
        if let Some(a) = &alpha {
            if a.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.len() });
            }
        }
        Ok(Self { lambda, knots, alpha })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let raw: RawSpec = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.lambda, raw.knots, raw.alpha)
    }

    /// `p^{(t)}` for any `t > 0`.
    pub fn p_at(&self, t: f64) -> Vec<f64> {
        let period = self.lambda.ln();
        let u = t.ln().rem_euclid(period);
        let lt: Vec<f64> = self.knots.iter().map(|k| k.t.ln()).collect();
        let j = lt.partition_point(|&x| x <= u).clamp(1, lt.len() - 1);
        let (u0, u1) = (lt[j - 1], lt[j]);
        let w = ((u - u0) / (u1 - u0)).clamp(0.0, 1.0);
        let (p0, p1) = (&self.knots[j - 1].p, &self.knots[j].p);
        let mut p: Vec<f64> = p0.iter().zip(p1.iter()).map(|(a, b)| (1.0 - w) * a + w * b).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        p
    }

    pub fn model_at(&self, t: f64) -> Result<WeightModel> {
        let p = ProbVector::new(self.p_at(t))?;
        match &self.alpha {
            Some(a) => WeightModel::percolation(p, a.clone()),
            None => WeightModel::deterministic(p),
        }
    }

    /// Integer restriction `W^{(n)} = W^{(t=n)}`, `n = 1..=len`.
    pub fn discretize(&self, len: usize) -> Result<ImmSequence> {
        let blocks = (1..=len).map(|n| Ok(Block { len: 1, model: self.model_at(n as f64)? })).collect::<Result<_>>()?;
        ImmSequence::new(blocks)
    }
}

/// Cumulative integral `∫_0^y f(t) dt` of a λ-exponentially periodic integrand,
/// with `f(e^u)` piecewise linear in `u` and integrated exactly.
#[derive(Debug, Clone)]
struct PeriodicIntegral {
    lambda: f64,
    step: f64,
    values: Vec<f64>,
    /// `G_j = ∫_1^{exp(u_j)} f`.
    g: Vec<f64>,
    base: f64,
}

impl PeriodicIntegral {
    fn new(lambda: f64, values: &[f64]) -> Self {
        let m = values.len() - 1;
        let step = lambda.ln() / m as f64;
        let mut out = Self { lambda, step, values: values.to_vec(), g: vec![0.0; m + 1], base: 0.0 };
        for j in 0..m {
            out.g[j + 1] = out.g[j] + out.partial(j, step);
        }
        out.base = out.g[m] / (lambda - 1.0);
        out
    }

    /// `∫_{u_j}^{u_j+x} f(e^u) e^u du`.
    fn partial(&self, j: usize, x: f64) -> f64 {
        let u0 = j as f64 * self.step;
        let (f0, f1) = (self.values[j], self.values[j + 1]);
        let slope = (f1 - f0) / self.step;
        let (e0, e1) = (u0.exp(), (u0 + x).exp());
        let de = e0 * x.exp_m1();
        f0 * de + slope * (x * e1 - de)
    }

    /// Reduces `y > 0` to `(m, u)` with `y = λ^m e^u`, `u ∈ [0, log λ]`.
    fn reduce(&self, y: f64) -> (i32, f64) {
        let l = self.lambda.ln();
        let m = (y.ln() / l).floor();
        let u = (y.ln() - m * l).clamp(0.0, l);
        (m as i32, u)
    }

    fn within(&self, u: f64) -> f64 {
        let j = ((u / self.step).floor() as usize).min(self.g.len() - 2);
        self.g[j] + self.partial(j, u - j as f64 * self.step)
    }

    fn eval(&self, y: f64) -> f64 {
        let (m, u) = self.reduce(y);
        self.lambda.powi(m) * (self.base + self.within(u))
    }

    /// Solves `F(y) = target` for increasing `F` (positive integrand).
    fn invert(&self, target: f64) -> f64 {
        let c = self.base;
        let l = self.lambda;
        let mut scale = l.powi(((target / c).ln() / l.ln()).floor() as i32);
        let mut r = target / scale;
        if r < c {
            scale /= l;
            r = target / scale;
        }
        if r >= l * c {
            scale *= l;
            r = target / scale;
        }
        let goal = r - c;
        let j = self.g.partition_point(|&x| x <= goal).clamp(1, self.g.len() - 1) - 1;
        let (mut lo, mut hi) = (0.0, self.step);
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.g[j] + self.partial(j, mid) < goal {
                lo = mid;
            } else {
                hi = mid;
            }
            if hi - lo <= 1e-16 * self.step {
                break;
            }
        }
        scale * (j as f64 * self.step + 0.5 * (lo + hi)).exp()
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct PeriodicValue {
    pub t: f64,
    pub delta1: f64,
    pub delta2: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct PeriodicDimension {
    pub dim_h: f64,
    pub dim_p: f64,
    /// `min_{T∈[1,λ]} T⁻¹ ∫_0^T H`, which must be positive.
    pub liminf_mean_entropy: f64,
    pub values: Vec<PeriodicValue>,
}

struct Tables {
    h: PeriodicIntegral,
    chi: Vec<PeriodicIntegral>,
    proj: BTreeMap<DirectionSet, PeriodicIntegral>,
    nodes: Vec<f64>,
}

impl Tables {
    /// Quadrature nodes `λ^m e^{u_j}` within `[a, b]`, plus both ends.
    fn nodes_between(&self, a: f64, b: f64) -> Vec<f64> {
        let mut out = vec![a];
        let l = self.h.lambda;
        let mut m = (a.ln() / l.ln()).floor() as i32;
        'outer: loop {
            let scale = l.powi(m);
            for &e in &self.nodes {
                let y = scale * e;
                if y > b {
                    break 'outer;
                }
                if y > a {
                    out.push(y);
                }
            }
            m += 1;
        }
        out.push(b);
        out
    }
}

/// `(dim_H, dim_P)` from the `δ1/δ2` formulas over a grid of `T ∈ [1, λ]`.
///
/// `steps` is the number of quadrature intervals per period in `log t`.
pub fn dim_exp_periodic(ifs: &DiagonalIfs, spec: &PeriodicSpec, steps: usize, t_grid: &[f64]) -> Result<PeriodicDimension> {
    if spec.knots[0].p.len() != ifs.len() {
        return Err(Error::DimensionMismatch { expected: ifs.len(), got: spec.knots[0].p.len() });
    }
    if steps < 2 {
        return Err(Error::OutOfRange("need at least two quadrature steps".into()));
    }
    if t_grid.is_empty() {
        return Err(Error::EmptySet("T grid".into()));
    }
    let lambda = spec.lambda;
    let d = ifs.dimension();
    let classes = direction_classes(ifs);
    let period = lambda.ln();
    let nodes: Vec<f64> = (0..=steps).map(|j| (j as f64 * period / steps as f64).exp()).collect();
    let mut hv = Vec::with_capacity(steps + 1);
    let mut chiv = vec![Vec::with_capacity(steps + 1); d];
    let mut projv: BTreeMap<DirectionSet, Vec<f64>> = classes.keys().map(|k| (k.clone(), vec![])).collect();
    for &t in &nodes {
        let w = spec.model_at(t)?;
        let p = w.mean();
        hv.push(weight_entropy(&w));
        for (k, c) in lyapunov(ifs, &p)?.into_iter().enumerate() {
            chiv[k].push(c);
        }
        for (dset, cls) in &classes {
            projv.get_mut(dset).unwrap().push(projected_entropy(&p, cls));
        }
    }
    let tables = Tables {
        h: PeriodicIntegral::new(lambda, &hv),
        chi: chiv.iter().map(|v| PeriodicIntegral::new(lambda, v)).collect(),
        proj: projv.into_iter().map(|(k, v)| (k, PeriodicIntegral::new(lambda, &v))).collect(),
        nodes: nodes[..steps].to_vec(),
    };

    let liminf = nodes.iter().map(|&t| tables.h.eval(t) / t).fold(f64::INFINITY, f64::min);
    if !(liminf > 0.0) {
        return Err(Error::Degenerate(liminf));
    }

    let mut values = Vec::with_capacity(t_grid.len());
    for &t in t_grid {
        if !(t >= 1.0 && t <= lambda) {
            return Err(Error::OutOfRange(format!("T = {t} outside [1, λ]")));
        }
        values.push(delta_at(&tables, t, liminf)?);
    }
    let dim_h = values.iter().map(|v| v.delta1.min(v.delta2)).fold(f64::INFINITY, f64::min);
    let dim_p = values.iter().map(|v| v.delta1.min(v.delta2)).fold(f64::NEG_INFINITY, f64::max);
    Ok(PeriodicDimension { dim_h, dim_p, liminf_mean_entropy: liminf, values })
}

fn delta_at(tables: &Tables, t: f64, liminf: f64) -> Result<PeriodicValue> {
    let gam: Vec<f64> = tables.chi.iter().map(|c| c.invert(t)).collect();
    let mut order: Vec<usize> = (0..gam.len()).collect();
    order.sort_by(|&a, &b| gam[a].total_cmp(&gam[b]).then(a.cmp(&b)));
    let mut levels: Vec<Vec<usize>> = Vec::new();
    let mut g: Vec<f64> = Vec::new();
    for k in order {
        match g.last() {
            Some(&last) if (gam[k] - last).abs() <= 1e-12 * last => levels.last_mut().unwrap().push(k),
            _ => {
                levels.push(vec![k]);
                g.push(gam[k]);
            }
        }
    }
    for l in &mut levels {
        l.sort_unstable();
    }
    let chain = chain_of(&levels);
    let projs: Vec<&PeriodicIntegral> = chain
        .iter()
        .map(|dset| tables.proj.get(dset).ok_or_else(|| Error::NotGoodSponge(format!("overlap alternative fails on {dset}"))))
        .collect::<Result<_>>()?;
    let (g1, gs) = (g[0], *g.last().unwrap());

    // δ1: smallest tail value of F_H beyond g_s; F_H(y) ≥ liminf·y bounds the search.
    let f_gs = tables.h.eval(gs);
    let reach = (f_gs / liminf).max(gs * tables.h.lambda);
    let tail = tables.nodes_between(gs, reach).into_iter().map(|y| tables.h.eval(y)).fold(f64::INFINITY, f64::min);

    let mut inner = f64::INFINITY;
    for tp in tables.nodes_between(g1, gs) {
        let mut v = tables.h.eval(tp);
        for r in 1..g.len() {
            let a = tp.max(g[r - 1]);
            if g[r] > a {
                v += projs[r].eval(g[r]) - projs[r].eval(a);
            }
        }
        inner = inner.min(v);
    }
    Ok(PeriodicValue { t, delta1: tail / t, delta2: inner / t })
}
