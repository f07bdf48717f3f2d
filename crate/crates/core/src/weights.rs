//! Probability vectors, survival vectors and finitely supported weight laws.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::ifs::{DiagonalIfs, ProjectionCoding};
use crate::numeric::{shannon, xlogx, KahanSum};

pub const SUM_TOL: f64 = 1e-12;
pub const MEAN_TOL: f64 = 1e-10;

#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct ProbVector(Vec<f64>);

impl ProbVector {
    pub fn new(p: Vec<f64>) -> Result<Self> {
        if p.is_empty() {
            return Err(Error::InvalidModel("empty probability vector".into()));
        }
        if p.iter().any(|x| !x.is_finite() || *x < 0.0) {
            return Err(Error::InvalidModel("probability entries must be finite and nonnegative".into()));
        }
        let s: f64 = p.iter().sum();
        if (s - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidModel(format!("probability vector sums to {s}")));
        }
        Ok(Self(p))
    }

    /// Rescales a nonnegative vector to unit mass.
    pub fn normalized(p: Vec<f64>) -> Result<Self> {
        let s: f64 = p.iter().sum();
        if !(s > 0.0) || !s.is_finite() {
            return Err(Error::InvalidModel("cannot normalise vector with zero mass".into()));
        }
        Self::new(p.into_iter().map(|x| x / s).collect())
    }

    pub fn uniform(n: usize) -> Self {
        Self(vec![1.0 / n as f64; n])
    }

    pub fn dirac(n: usize, i: usize) -> Self {
        let mut v = vec![0.0; n];
        v[i] = 1.0;
        Self(v)
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn into_inner(self) -> Vec<f64> {
        self.0
    }
}

impl<'de> Deserialize<'de> for ProbVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        ProbVector::new(Vec::<f64>::deserialize(de)?).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Deref for ProbVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

/// Per-letter survival probabilities `α_i = P(c_i = 1)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(transparent)]
pub struct SurvivalVector(Vec<f64>);

impl SurvivalVector {
    pub fn new(alpha: Vec<f64>) -> Result<Self> {
        if alpha.is_empty() {
            return Err(Error::InvalidModel("empty survival vector".into()));
        }
        if alpha.iter().any(|a| !a.is_finite() || *a <= 0.0 || *a > 1.0) {
            return Err(Error::InvalidModel("survival probabilities must lie in (0,1]".into()));
        }
        Ok(Self(alpha))
    }

    pub fn constant(n: usize, a: f64) -> Result<Self> {
        Self::new(vec![a; n])
    }

    pub fn ones(n: usize) -> Self {
        Self(vec![1.0; n])
    }

    pub fn as_slice(&self) -> &[f64] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    /// Expected number of surviving children.
    pub fn mean_offspring(&self) -> f64 {
        self.0.iter().sum()
    }

    pub fn is_supercritical(&self) -> bool {
        self.mean_offspring() > 1.0
    }

    /// The vector `α / Σα`, maximiser of the percolation entropy.
    pub fn p_max(&self) -> ProbVector {
        let s = self.mean_offspring();
        ProbVector(self.0.iter().map(|a| a / s).collect())
    }

    pub fn h_max(&self) -> f64 {
        self.mean_offspring().ln()
    }

    pub fn h_min(&self) -> f64 {
        self.0.iter().map(|a| a.ln()).fold(f64::INFINITY, f64::min)
    }
}

impl<'de> Deserialize<'de> for SurvivalVector {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        SurvivalVector::new(Vec::<f64>::deserialize(de)?).map_err(serde::de::Error::custom)
    }
}

impl std::ops::Deref for SurvivalVector {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Atom {
    pub prob: f64,
    pub c: Vec<u8>,
    pub w: Vec<f64>,
}

/// Finitely supported joint law of `(C, W)`.
#[derive(Debug, Clone, PartialEq, Serialize)]
#[serde(tag = "type", rename_all = "lowercase")]
pub enum WeightModel {
    Deterministic { p: ProbVector },
    Percolation { p: ProbVector, alpha: SurvivalVector },
    Atoms { atoms: Vec<Atom> },
}

#[derive(Deserialize)]
#[serde(tag = "type", rename_all = "lowercase")]
enum RawModel {
    Deterministic { p: ProbVector },
    Percolation { p: ProbVector, alpha: SurvivalVector },
    Atoms { atoms: Vec<Atom> },
}

impl<'de> Deserialize<'de> for WeightModel {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let m = match RawModel::deserialize(de)? {
            RawModel::Deterministic { p } => WeightModel::deterministic(p),
            RawModel::Percolation { p, alpha } => WeightModel::percolation(p, alpha),
            RawModel::Atoms { atoms } => WeightModel::atoms(atoms),
        };
        m.map_err(serde::de::Error::custom)
    }
}

impl WeightModel {
    pub fn deterministic(p: ProbVector) -> Result<Self> {
        Ok(Self::Deterministic { p })
    }

    pub fn percolation(p: ProbVector, alpha: SurvivalVector) -> Result<Self> {
        if p.len() != alpha.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), got: alpha.len() });
        }
        Ok(Self::Percolation { p, alpha })
    }

    pub fn atoms(atoms: Vec<Atom>) -> Result<Self> {
        let first = atoms.first().ok_or_else(|| Error::InvalidModel("no atoms".into()))?;
        let n = first.w.len();
        let mut total = KahanSum::new();
        let mut mean = KahanSum::new();
        for a in &atoms {
            if a.w.len() != n || a.c.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.w.len().min(a.c.len()) });
            }
            if !(a.prob >= 0.0) || !a.prob.is_finite() {
                return Err(Error::InvalidModel("atom probability must be nonnegative".into()));
            }
            for (&w, &c) in a.w.iter().zip(&a.c) {
                if !w.is_finite() || w < 0.0 {
                    return Err(Error::InvalidModel("weights must be finite and nonnegative".into()));
                }
                if c > 1 {
                    return Err(Error::InvalidModel("survival indicators must be 0 or 1".into()));
                }
                if w > 0.0 && c == 0 {
                    return Err(Error::InvalidModel("positive weight on a removed cell".into()));
                }
            }
            total.add(a.prob);
            mean.add(a.prob * a.w.iter().sum::<f64>());
        }
        if (total.value() - 1.0).abs() > SUM_TOL {
            return Err(Error::InvalidModel(format!("atom probabilities sum to {}", total.value())));
        }
        if (mean.value() - 1.0).abs() > MEAN_TOL {
            return Err(Error::InvalidModel(format!("E(sum W) = {} differs from 1", mean.value())));
        }
        Ok(Self::Atoms { atoms })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn len(&self) -> usize {
        match self {
            Self::Deterministic { p } | Self::Percolation { p, .. } => p.len(),
            Self::Atoms { atoms } => atoms[0].w.len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// `E(W)`, the probability vector driving the Lyapunov exponents.
    pub fn mean(&self) -> Vec<f64> {
        match self {
            Self::Deterministic { p } | Self::Percolation { p, .. } => p.to_vec(),
            Self::Atoms { atoms } => {
                let mut m = vec![0.0; self.len()];
                for a in atoms {
                    for (mi, w) in m.iter_mut().zip(&a.w) {
                        *mi += a.prob * w;
                    }
                }
                m
            }
        }
    }

    /// `P(c_i = 1)` per letter.
    pub fn survival(&self) -> Vec<f64> {
        match self {
            Self::Deterministic { p } => vec![1.0; p.len()],
            Self::Percolation { alpha, .. } => alpha.to_vec(),
            Self::Atoms { atoms } => {
                let mut s = vec![0.0; self.len()];
                for a in atoms {
                    for (si, &c) in s.iter_mut().zip(&a.c) {
                        *si += a.prob * c as f64;
                    }
                }
                s
            }
        }
    }

    /// Expands into explicit atoms (exponential in the alphabet size).
    pub fn to_atoms(&self) -> Vec<Atom> {
        match self {
            Self::Deterministic { p } => {
                vec![Atom { prob: 1.0, c: vec![1; p.len()], w: p.to_vec() }]
            }
            Self::Percolation { p, alpha } => {
                let n = p.len();
                (0u64..(1 << n))
                    .map(|mask| {
                        let c: Vec<u8> = (0..n).map(|i| ((mask >> i) & 1) as u8).collect();
                        let prob = (0..n).map(|i| if c[i] == 1 { alpha[i] } else { 1.0 - alpha[i] }).product();
                        let w = (0..n).map(|i| if c[i] == 1 { p[i] / alpha[i] } else { 0.0 }).collect();
                        Atom { prob, c, w }
                    })
                    .collect()
            }
            Self::Atoms { atoms } => atoms.clone(),
        }
    }
}

/// Shannon entropy in nats.
pub fn entropy(p: &[f64]) -> f64 {
    shannon(p)
}

/// `χ_k(p) = -Σ_i p_i log a_{i,k}` for every axis.
pub fn lyapunov(ifs: &DiagonalIfs, p: &[f64]) -> Result<Vec<f64>> {
    if p.len() != ifs.len() {
        return Err(Error::DimensionMismatch { expected: ifs.len(), got: p.len() });
    }
    let d = ifs.dimension();
    let mut out = vec![KahanSum::new(); d];
    for (m, &pi) in ifs.maps().iter().zip(p) {
        for (acc, a) in out.iter_mut().zip(&m.a) {
            acc.add(-pi * a.ln());
        }
    }
    Ok(out.iter().map(KahanSum::value).collect())
}

/// `H(W) = -Σ_i E(W_i log W_i)`.
pub fn weight_entropy(w: &WeightModel) -> f64 {
    match w {
        WeightModel::Deterministic { p } => shannon(p),
        WeightModel::Percolation { p, alpha } => {
            let mut acc = KahanSum::new();
            acc.add(shannon(p));
            for (pi, ai) in p.iter().zip(alpha.iter()) {
                if *pi > 0.0 {
                    acc.add(pi * ai.ln());
                }
            }
            acc.value()
        }
        WeightModel::Atoms { atoms } => {
            let mut acc = KahanSum::new();
            for a in atoms {
                for &wi in &a.w {
                    acc.add(-a.prob * xlogx(wi));
                }
            }
            acc.value()
        }
    }
}

/// `(φ_W(q), T_W(q))` with `φ_W(q) = E Σ_i W_i^q` (zero weights contribute nothing).
pub fn log_moment(w: &WeightModel, q: f64) -> (f64, f64) {
    let pow = |x: f64| if x > 0.0 { x.powf(q) } else { 0.0 };
    let phi = if q == 1.0 {
        1.0
    } else {
        let mut acc = KahanSum::new();
        match w {
            WeightModel::Deterministic { p } => p.iter().for_each(|&x| acc.add(pow(x))),
            WeightModel::Percolation { p, alpha } => {
                p.iter().zip(alpha.iter()).for_each(|(&x, &a)| acc.add(a * pow(x / a)))
            }
            WeightModel::Atoms { atoms } => {
                atoms.iter().for_each(|at| at.w.iter().for_each(|&x| acc.add(at.prob * pow(x))))
            }
        }
        acc.value()
    };
    (phi, -phi.ln())
}

/// `τ_r(q) = -log Σ_j (Π_r p)_j^q`.
pub fn projected_tau(p: &[f64], coding: &ProjectionCoding, r: usize, q: f64) -> Result<f64> {
    let proj = coding.project(p, r)?;
    Ok(-tau_sum(&proj, q).ln())
}

pub(crate) fn tau_sum(v: &[f64], q: f64) -> f64 {
    let mut acc = KahanSum::new();
    for &x in v {
        if x > 0.0 {
            acc.add(if q == 1.0 { x } else { x.powf(q) });
        }
    }
    acc.value()
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ifs::{build_projection_coding, DirectionSet};

    fn pv(v: &[f64]) -> ProbVector {
        ProbVector::new(v.to_vec()).unwrap()
    }

    #[test]
    fn entropy_basics() {
        assert!((entropy(&[0.25; 4]) - 4f64.ln()).abs() < 1e-15);
        assert_eq!(entropy(&[1.0, 0.0, 0.0]), 0.0);
    }

    #[test]
    fn prob_vector_validation() {
        assert!(ProbVector::new(vec![0.5, 0.6]).is_err());
        assert!(ProbVector::new(vec![-0.1, 1.1]).is_err());
        assert!(ProbVector::new(vec![0.2, 0.3, 0.5]).is_ok());
        assert!(SurvivalVector::new(vec![0.0, 1.0]).is_err());
    }

    #[test]
    fn lyapunov_constant_axis() {
        let ifs = DiagonalIfs::full_grid(&[3, 2], &[vec![1, 0], vec![1, 1], vec![2, 0]]).unwrap();
        let chi = lyapunov(&ifs, &[1.0 / 3.0; 3]).unwrap();
        assert!((chi[0] - 3f64.ln()).abs() < 1e-15);
        assert!((chi[1] - 2f64.ln()).abs() < 1e-15);
        assert!(lyapunov(&ifs, &[0.5, 0.5]).is_err());
    }

    #[test]
    fn percolation_entropy_closed_form() {
        let w = WeightModel::percolation(ProbVector::uniform(5), SurvivalVector::constant(5, 0.7).unwrap()).unwrap();
        assert!((weight_entropy(&w) - (5f64.ln() + 0.7f64.ln())).abs() < 1e-14);
    }

    #[test]
    fn moments() {
        let w = WeightModel::percolation(ProbVector::uniform(4), SurvivalVector::constant(4, 0.5).unwrap()).unwrap();
        assert!((log_moment(&w, 2.0).0 - 0.5).abs() < 1e-15);
        assert_eq!(log_moment(&w, 1.0), (1.0, -0.0));
        let d = WeightModel::deterministic(pv(&[0.5, 0.5, 0.0])).unwrap();
        assert!((log_moment(&d, 0.0).0 - 2.0).abs() < 1e-15);
    }

    #[test]
    fn atoms_validate_support_and_mean() {
        let bad = Atom { prob: 1.0, c: vec![0, 1], w: vec![0.5, 0.5] };
        assert!(WeightModel::atoms(vec![bad]).is_err());
        let off = Atom { prob: 1.0, c: vec![1, 1], w: vec![0.5, 0.6] };
        assert!(WeightModel::atoms(vec![off]).is_err());
    }

    #[test]
    fn json_variants() {
        let w = WeightModel::from_json(r#"{"type":"percolation","p":[0.5,0.5],"alpha":[0.9,0.8]}"#).unwrap();
        assert_eq!(w.survival(), vec![0.9, 0.8]);
        let d = WeightModel::from_json(r#"{"type":"deterministic","p":[0.25,0.75]}"#).unwrap();
        let back = WeightModel::from_json(&serde_json::to_string(&d).unwrap()).unwrap();
        assert_eq!(back, d);
        assert!(WeightModel::from_json(r#"{"type":"deterministic","p":[0.25,0.7]}"#).is_err());
    }

    #[test]
    fn tau_conventions() {
        let ifs = DiagonalIfs::grid(&[3, 2], &[vec![0, 0], vec![0, 1], vec![2, 1]]).unwrap();
        let chain = [DirectionSet::full(2), DirectionSet::new([0])];
        let c = build_projection_coding(&ifs, &chain).unwrap();
        let p = [0.2, 0.3, 0.5];
        assert!(projected_tau(&p, &c, 1, 1.0).unwrap().abs() < 1e-15);
        assert!((projected_tau(&p, &c, 1, 0.0).unwrap() + 2f64.ln()).abs() < 1e-15);
        let direct = -(0.04f64 + 0.09 + 0.25).ln();
        assert!((projected_tau(&p, &c, 0, 2.0).unwrap() - direct).abs() < 1e-15);
        assert!(projected_tau(&p, &c, 2, 2.0).is_err());
    }
}
