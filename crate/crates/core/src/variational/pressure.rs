//! Weighted topological pressure for sponges whose maps share one linear part.

use serde::Serialize;

use crate::dimension::{constant_partition, dim_mandelbrot};
use crate::error::{Error, Result};
use crate::ifs::{classes_on, DiagonalIfs};
use crate::numeric::{golden_min, log_sum_exp};
use crate::scale::chain_of;
use crate::weights::{ProbVector, SurvivalVector, WeightModel};

const THETA_GRID: usize = 256;
const VERIFY_TOL: f64 = 1e-6;

/// Level structure of an equal-linear-parts sponge: `χ̃_1 > … > χ̃_s` and,
/// per level, a dense class id for every letter (classes of the projection onto `D_r`).
#[derive(Debug, Clone)]
pub struct PressureLevels {
    pub chi: Vec<f64>,
    pub levels: Vec<Vec<usize>>,
    pub class_of: Vec<Vec<usize>>,
    pub class_count: Vec<usize>,
}

impl PressureLevels {
    pub fn new(ifs: &DiagonalIfs) -> Result<Self> {
        let a0 = &ifs.maps()[0].a;
        for (j, m) in ifs.maps().iter().enumerate() {
            if m.a.iter().zip(a0).any(|(x, y)| (x - y).abs() > 1e-12) {
                return Err(Error::UnequalLinearParts(0, j));
            }
        }
        let chi_axes: Vec<f64> = a0.iter().map(|a| -a.ln()).collect();
        let levels = constant_partition(&chi_axes);
        let chain = chain_of(&levels);
        let mut class_of = Vec::new();
        let mut class_count = Vec::new();
        for d in &chain {
            let rep = classes_on(ifs, d).map_err(|_| Error::NotGoodSponge(format!("overlap alternative fails on {d}")))?;
            let mut ids = vec![usize::MAX; rep.len()];
            let mut next = 0;
            for i in 0..rep.len() {
                if rep[i] == i {
                    ids[i] = next;
                    next += 1;
                }
            }
            class_of.push(rep.iter().map(|&r| ids[r]).collect());
            class_count.push(next);
        }
        let chi = levels.iter().map(|l| chi_axes[l[0]]).collect();
        Ok(Self { chi, levels, class_of, class_count })
    }

    pub fn s(&self) -> usize {
        self.chi.len()
    }

    /// `E(N_{r,j})`: expected number of retained letters in each class of level `r` (0-based).
    pub fn expected_counts(&self, alpha: &[f64], r: usize) -> Vec<f64> {
        let mut e = vec![0.0; self.class_count[r]];
        for (i, &c) in self.class_of[r].iter().enumerate() {
            e[c] += alpha[i];
        }
        e
    }

    /// Parent class (level `r + 1`) of each class of level `r`.
    fn parents(&self, r: usize) -> Vec<usize> {
        let mut parent = vec![0; self.class_count[r]];
        if r + 1 < self.s() {
            for (i, &c) in self.class_of[r].iter().enumerate() {
                parent[c] = self.class_of[r + 1][i];
            }
        }
        parent
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Pressure {
    pub value: f64,
    /// Maximising Bernoulli vector on the classes of level `r`.
    pub maximizer: ProbVector,
    /// `P'(θ) = (1/χ̃_r) Σ_j p_j log E(N_{r,j})`.
    pub derivative: f64,
}

fn pressure_at(lv: &PressureLevels, log_e: &[f64], r: usize, theta: f64) -> (f64, Vec<f64>) {
    let s = lv.s();
    let w = |q: usize| 1.0 / lv.chi[q];
    // values and conditional laws, bottom-up
    let mut a: Vec<f64> = log_e.iter().map(|x| theta * w(r) * x).collect();
    let mut conds: Vec<Vec<f64>> = Vec::new();
    let mut parents_list = Vec::new();
    for q in r..s {
        let parents = if q + 1 < s { lv.parents(q) } else { vec![0; lv.class_count[q]] };
        let np = if q + 1 < s { lv.class_count[q + 1] } else { 1 };
        let wq = w(q);
        let mut members: Vec<Vec<f64>> = vec![Vec::new(); np];
        for (j, &pj) in parents.iter().enumerate() {
            members[pj].push(a[j] / wq);
        }
        let up: Vec<f64> = members.iter().map(|m| wq * log_sum_exp(m)).collect();
        let cond: Vec<f64> = parents.iter().enumerate().map(|(j, &pj)| (a[j] / wq - up[pj] / wq).exp()).collect();
        conds.push(cond);
        parents_list.push(parents);
        a = up;
    }
    let value = a[0];
    // top-down product of conditionals
    let mut mass = vec![1.0];
    for idx in (0..conds.len()).rev() {
        mass = conds[idx].iter().zip(&parents_list[idx]).map(|(c, &pj)| c * mass[pj]).collect();
    }
    (value, mass)
}

/// Weighted pressure `P_r(θφ_r)` and its maximising Bernoulli vector. `r` is 1-based.
pub fn weighted_pressure(ifs: &DiagonalIfs, alpha: &SurvivalVector, r: usize, theta: f64) -> Result<Pressure> {
    let lv = PressureLevels::new(ifs)?;
    weighted_pressure_with(&lv, alpha, r, theta)
}

pub fn weighted_pressure_with(lv: &PressureLevels, alpha: &SurvivalVector, r: usize, theta: f64) -> Result<Pressure> {
    if alpha.len() != lv.class_of[0].len() {
        return Err(Error::DimensionMismatch { expected: lv.class_of[0].len(), got: alpha.len() });
    }
    if r == 0 || r > lv.s() {
        return Err(Error::LevelOutOfRange { r, s: lv.s() });
    }
    if !(theta > 0.0) {
        return Err(Error::OutOfRange(format!("θ = {theta} must be positive")));
    }
    let log_e: Vec<f64> = lv.expected_counts(alpha, r - 1).iter().map(|e| e.ln()).collect();
    let (value, mass) = pressure_at(lv, &log_e, r - 1, theta);
    let derivative = mass.iter().zip(&log_e).map(|(p, l)| p * l).sum::<f64>() / lv.chi[r - 1];
    Ok(Pressure { value, maximizer: ProbVector::normalized(mass)?, derivative })
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct AttractorDimension {
    pub value: f64,
    /// Level (1-based) and θ of the minimising pressure.
    pub level: usize,
    pub theta: f64,
    pub model: WeightModel,
    /// `dim_mandelbrot` of the reconstructed weight law.
    pub mandelbrot_value: f64,
    pub verified: bool,
    /// Minimum over θ for each level `r = 2..=s`.
    pub level_minima: Vec<(usize, f64, f64)>,
}

fn reconstruct(lv: &PressureLevels, alpha: &SurvivalVector, r: usize, theta: f64) -> Result<WeightModel> {
    let pr = weighted_pressure_with(lv, alpha, r, theta)?;
    let e = lv.expected_counts(alpha, r - 1);
    let p: Vec<f64> = lv.class_of[r - 1].iter().enumerate().map(|(i, &j)| pr.maximizer[j] * alpha[i] / e[j]).collect();
    WeightModel::percolation(ProbVector::normalized(p)?, alpha.clone())
}

/// Almost-sure Hausdorff dimension of the percolation set `K_ω` on an equal-linear-parts sponge:
/// the minimum of the weighted pressures over levels and admissible `θ`.
pub fn dim_attractor_equal_linear(ifs: &DiagonalIfs, alpha: &SurvivalVector) -> Result<AttractorDimension> {
    let lv = PressureLevels::new(ifs)?;
    if alpha.len() != ifs.len() {
        return Err(Error::DimensionMismatch { expected: ifs.len(), got: alpha.len() });
    }
    let mean = alpha.mean_offspring();
    if mean <= 1.0 {
        return Err(Error::Subcritical(mean));
    }
    let s = lv.s();
    if s == 1 {
        let value = mean.ln().max(0.0) / lv.chi[0];
        let model = WeightModel::percolation(alpha.p_max(), alpha.clone())?;
        let mv = dim_mandelbrot(ifs, &model)?.value;
        return Ok(AttractorDimension {
            value,
            level: 1,
            theta: 1.0,
            model,
            mandelbrot_value: mv,
            verified: (mv - value).abs() <= VERIFY_TOL,
            level_minima: vec![],
        });
    }
    let mut minima = Vec::new();
    for r in 2..=s {
        let lo = lv.chi[r - 1] / lv.chi[r - 2];
        let f = |t: f64| weighted_pressure_with(&lv, alpha, r, t).map(|p| p.value).unwrap_or(f64::INFINITY);
        let grid: Vec<f64> = (0..THETA_GRID).map(|k| lo + (1.0 - lo) * k as f64 / (THETA_GRID - 1) as f64).collect();
        let vals: Vec<f64> = grid.iter().map(|&t| f(t)).collect();
        let k = (0..THETA_GRID).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
        let a = grid[k.saturating_sub(1)];
        let b = grid[(k + 1).min(THETA_GRID - 1)];
        let (mut t, mut v) = golden_min(f, a, b, 1e-12);
        if vals[k] <= v {
            t = grid[k];
            v = vals[k];
        }
        minima.push((r, t, v));
    }
    let &(r, theta, value) = minima.iter().min_by(|a, b| a.2.total_cmp(&b.2).then(a.0.cmp(&b.0))).unwrap();

    let mut candidates = vec![(r, theta)];
    if (1.0 - theta).abs() < 1e-6 && r < s {
        candidates.push((r + 1, lv.chi[r] / lv.chi[r - 1]));
    }
    if r > 2 && (theta - lv.chi[r - 1] / lv.chi[r - 2]).abs() < 1e-6 {
        candidates.push((r - 1, 1.0));
    }
    let mut best: Option<(WeightModel, f64)> = None;
    for (cr, ct) in candidates {
        let model = reconstruct(&lv, alpha, cr, ct)?;
        let mv = match dim_mandelbrot(ifs, &model) {
            Ok(m) => m.value,
            Err(Error::Degenerate(_)) => 0.0,
            Err(e) => return Err(e),
        };
        let better = best.as_ref().is_none_or(|(_, bv)| (mv - value).abs() < (bv - value).abs());
        if better {
            best = Some((model, mv));
        }
    }
    let (model, mandelbrot_value) = best.unwrap();
    Ok(AttractorDimension {
        value,
        level: r,
        theta,
        model,
        mandelbrot_value,
        verified: (mandelbrot_value - value).abs() <= VERIFY_TOL,
        level_minima: minima,
    })
}
