//! Variational principles: optimising the dimension formulas over weight vectors
//! and block sequences.

pub mod optim;
mod pressure;
mod sequences;

use serde::Serialize;

use crate::dimension::MandelbrotEvaluator;
use crate::error::{Error, Result};
use crate::ifs::DiagonalIfs;
use crate::numeric::shannon;
use crate::sequence::TypeEllSequence;
use crate::weights::{ProbVector, SurvivalVector, WeightModel};

pub use optim::{SolverOptions, SolverTrace, StartTrace};
pub use pressure::{
    dim_attractor_equal_linear, weighted_pressure, weighted_pressure_with, AttractorDimension, Pressure,
    PressureLevels,
};
pub use sequences::{
    optimize_packing, optimize_type_ell_hausdorff, perturb_sequence, perturbation_threshold, q_class_violations,
    BlockAlignment, HausdorffOptions, PackingOptions, PerturbedSequence,
};

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Argument {
    Vector(ProbVector),
    Sequence(TypeEllSequence),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct Certificate {
    pub eps: f64,
    pub n_eps: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct OptimizationResult {
    pub value: f64,
    pub argument: Argument,
    pub trace: SolverTrace,
    pub certificate: Option<Certificate>,
    /// Values computed at a finite horizon rather than in the limit.
    pub at_horizon: bool,
    /// Every start had `H(W) ≤ 0`; the supremum is reported as 0.
    pub degenerate: bool,
    /// Scale `N` at which a per-scale supremum was attained.
    pub scale: Option<usize>,
    /// At-horizon `limsup d_N` of the concatenated witness sequence.
    pub witness_dim_p: Option<f64>,
}

fn model_for(p: ProbVector, alpha: Option<&SurvivalVector>) -> Result<WeightModel> {
    match alpha {
        Some(a) => WeightModel::percolation(p, a.clone()),
        None => WeightModel::deterministic(p),
    }
}

/// Mandelbrot objective with its `min(H, h_r)` kinks smoothed at temperature `tau`.
pub(crate) fn mandelbrot_objective(
    eval: &MandelbrotEvaluator,
    log_alpha: Option<&[f64]>,
    p: &[f64],
    tau: f64,
) -> f64 {
    let mut h = shannon(p);
    if let Some(la) = log_alpha {
        h += p.iter().zip(la).map(|(x, l)| x * l).sum::<f64>();
    }
    let Ok(pieces) = eval.pieces(p, h) else { return f64::NEG_INFINITY };
    let c = pieces.coefficients();
    let mut v = h * c[0];
    for r in 1..c.len() {
        v += c[r] * optim::soft_min(&[h, pieces.proj[r]], tau);
    }
    v
}

/// Maximises `dim_mandelbrot` over weight vectors `p`, with percolation weights when `alpha` is given.
pub fn optimize_mandelbrot(ifs: &DiagonalIfs, alpha: Option<&SurvivalVector>, opts: &SolverOptions) -> Result<OptimizationResult> {
    let n = ifs.len();
    if let Some(a) = alpha {
        if a.len() != n {
            return Err(Error::DimensionMismatch { expected: n, got: a.len() });
        }
    }
    let eval = MandelbrotEvaluator::new(ifs);
    // fails early when the sponge is not good at the uniform vector
    eval.pieces(ProbVector::uniform(n).as_slice(), 0.0)?;
    let log_alpha: Option<Vec<f64>> = alpha.map(|a| a.iter().map(|x| x.ln()).collect());
    let objective = |p: &[f64], tau: f64| mandelbrot_objective(&eval, log_alpha.as_deref(), p, tau);
    let anchors: Vec<Vec<f64>> = alpha.map(|a| vec![a.p_max().into_inner()]).unwrap_or_default();
    let starts = optim::start_points(n, &anchors, opts.starts, opts.seed);
    let (p, _, trace) = optim::maximize_simplex(n, &objective, &starts, opts);
    let p = ProbVector::normalized(p)?;
    let model = model_for(p.clone(), alpha)?;
    let (value, degenerate) = match eval.evaluate(&model) {
        Ok(m) => (m.value, m.degenerate),
        Err(Error::Degenerate(_)) => (0.0, true),
        Err(e) => return Err(e),
    };
    Ok(OptimizationResult { value, argument: Argument::Vector(p), trace, certificate: None, at_horizon: false, degenerate, scale: None, witness_dim_p: None })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::dim_mandelbrot;

    fn value_of(r: &OptimizationResult) -> &ProbVector {
        match &r.argument {
            Argument::Vector(p) => p,
            _ => panic!("expected a vector"),
        }
    }

    #[test]
    fn full_square_is_uniform() {
        let ifs = DiagonalIfs::full_grid(&[3, 3], &[]).unwrap();
        let r = optimize_mandelbrot(&ifs, None, &SolverOptions { starts: 4, ..Default::default() }).unwrap();
        assert!((r.value - 2.0).abs() < 1e-9);
        assert!(value_of(&r).iter().all(|x| (x - 1.0 / 9.0).abs() < 1e-5));
    }

    #[test]
    fn mcmullen_weights() {
        let ifs = DiagonalIfs::grid(&[3, 2], &[vec![0, 0], vec![1, 0], vec![0, 1]]).unwrap();
        let r = optimize_mandelbrot(&ifs, None, &SolverOptions::default()).unwrap();
        let theta = 2f64.ln() / 3f64.ln();
        let z = 2f64.powf(theta) + 1.0;
        assert!((r.value - z.log2()).abs() < 1e-9, "{}", r.value);
        let p = value_of(&r);
        assert!((p[2] - 1.0 / z).abs() < 1e-5);
        let again = dim_mandelbrot(&ifs, &WeightModel::deterministic(p.clone()).unwrap()).unwrap().value;
        assert!((again - r.value).abs() < 1e-12);
    }

    #[test]
    fn conformal_percolation_picks_p_max() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let alpha = SurvivalVector::new(vec![0.9, 0.8, 0.6, 0.5]).unwrap();
        let r = optimize_mandelbrot(&ifs, Some(&alpha), &SolverOptions { starts: 8, ..Default::default() }).unwrap();
        assert!((r.value - alpha.mean_offspring().ln() / 2f64.ln()).abs() < 1e-9);
        let pm = alpha.p_max();
        for (a, b) in value_of(&r).iter().zip(pm.iter()) {
            assert!((a - b).abs() < 1e-5);
        }
    }

    #[test]
    fn all_degenerate_reports_zero() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let alpha = SurvivalVector::constant(4, 0.2).unwrap();
        let r = optimize_mandelbrot(&ifs, Some(&alpha), &SolverOptions { starts: 4, ..Default::default() }).unwrap();
        assert!(r.degenerate);
        assert_eq!(r.value, 0.0);
    }
}
