//! Explicit block-sequence constructions exhibiting the gap between `d_N` and `d̃_N`.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::ifs::{DiagonalIfs, DirectionSet};
use crate::scale::{direction_classes, projected_entropy};
use crate::sequence::{Block, ImmSequence};
use crate::weights::{lyapunov, weight_entropy, WeightModel};

/// How the next cycle's starting scale is chosen from the previous end `M_3`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum Growth {
    /// `g(N_1) > M_3²`.
    Square,
    /// `g(N_1) > c·M_3`, `c > 1`.
    Factor(f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct GapCycle {
    pub m0: usize,
    pub n1: usize,
    pub n2: usize,
    pub m1: usize,
    pub m2: usize,
    pub m3: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct GapConstruction {
    pub entropies: [f64; 3],
    /// Entropy of the mean vector projected on the less contracted axis.
    pub h_proj: f64,
    /// `(χ_fast, χ_slow)`.
    pub chi: (f64, f64),
    pub cycles: Vec<GapCycle>,
    #[serde(skip)]
    pub sequence: ImmSequence,
}

fn g_of(n: usize, chi: f64) -> usize {
    (n as f64 / chi).floor() as usize + 1
}

/// Three-law sequence `W_1 … W_2 … W_3 …` repeated over growing cycles.
///
/// Requires a planar IFS with distinct Lyapunov exponents, laws sharing one mean vector
/// `p`, and `H_2 > H_1 > h(Π p)`, `H_3 < 0` where `Π` projects on the slow axis.
pub fn gap_sequence(
    ifs: &DiagonalIfs,
    laws: [&WeightModel; 3],
    n1_first: usize,
    growth: Growth,
    len: usize,
) -> Result<GapConstruction> {
    if ifs.dimension() != 2 {
        return Err(Error::InvalidModel("the construction is planar".into()));
    }
    let p = laws[0].mean();
    for w in &laws[1..] {
        if w.len() != p.len() {
            return Err(Error::DimensionMismatch { expected: p.len(), got: w.len() });
        }
        if w.mean().iter().zip(&p).any(|(a, b)| (a - b).abs() > 1e-12) {
            return Err(Error::InvalidModel("laws must share the same mean vector".into()));
        }
    }
    let chi = lyapunov(ifs, &p)?;
    let (fast, slow) = if chi[0] > chi[1] { (0, 1) } else { (1, 0) };
    let (chi_f, chi_s) = (chi[fast], chi[slow]);
    if (chi_f - chi_s).abs() < 1e-9 * chi_f {
        return Err(Error::InvalidModel("Lyapunov exponents must differ".into()));
    }
    let classes = direction_classes(ifs);
    let cls = classes
        .get(&DirectionSet::new([slow]))
        .ok_or_else(|| Error::NotGoodSponge("no coding on the slow axis".into()))?;
    let h_proj = projected_entropy(&p, cls);
    let h = [weight_entropy(laws[0]), weight_entropy(laws[1]), weight_entropy(laws[2])];
    if !(h[1] > h[0] && h[0] > h_proj && h[2] < 0.0) {
        return Err(Error::InvalidModel(format!(
            "need H2 > H1 > h(proj) and H3 < 0, got H = {h:?}, h(proj) = {h_proj}"
        )));
    }
    if let Growth::Factor(c) = growth {
        if !(c > 1.0) {
            return Err(Error::OutOfRange(format!("growth factor {c} must exceed 1")));
        }
    }
    if n1_first < 2 {
        return Err(Error::OutOfRange("first scale must be at least 2".into()));
    }
    if len == 0 {
        return Err(Error::OutOfRange("empty sequence".into()));
    }

    let mut cycles = Vec::new();
    let mut blocks = Vec::new();
    let (mut m0, mut n1) = (1usize, n1_first);
    let mut covered = 0usize;
    while covered < len {
        let n2 = (chi_f / chi_s * n1 as f64).ceil() as usize;
        let (m1, m2) = (g_of(n1, chi_s), g_of(n2, chi_s));
        let m3 = m2 + ((m2 - m1) as f64 * h[1] / -h[2]).ceil() as usize;
        cycles.push(GapCycle { m0, n1, n2, m1, m2, m3 });
        for (lo, hi, w) in [(m0, m1, 0), (m1 + 1, m2, 1), (m2 + 1, m3, 2)] {
            let hi = hi.min(len);
            if hi >= lo {
                blocks.push(Block { len: hi + 1 - lo, model: laws[w].clone() });
            }
        }
        covered = m3;
        m0 = m3 + 1;
        let target = match growth {
            Growth::Square => (m3 as f64).powi(2),
            Growth::Factor(c) => c * m3 as f64,
        };
        // smallest N with g(N) > target
        n1 = ((target.floor() * chi_s).floor() as usize).max(n1 + 1);
        while g_of(n1, chi_s) as f64 <= target {
            n1 += 1;
        }
        while n1 > 1 && g_of(n1 - 1, chi_s) as f64 > target {
            n1 -= 1;
        }
    }
    Ok(GapConstruction { entropies: h, h_proj, chi: (chi_f, chi_s), cycles, sequence: ImmSequence::new(blocks)? })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dimension::Engine;
    use crate::weights::{ProbVector, SurvivalVector};

    fn laws(n: usize) -> [WeightModel; 3] {
        let p = ProbVector::uniform(n);
        let perc = |a: f64| WeightModel::percolation(p.clone(), SurvivalVector::constant(n, a).unwrap()).unwrap();
        [perc(0.6), WeightModel::deterministic(p.clone()).unwrap(), perc(0.1)]
    }

    #[test]
    fn cycle_bookkeeping() {
        let ifs = DiagonalIfs::full_grid(&[3, 2], &[]).unwrap();
        let [a, b, c] = laws(6);
        let g = gap_sequence(&ifs, [&a, &b, &c], 10, Growth::Factor(2.0), 20_000).unwrap();
        assert_eq!(g.sequence.len(), 20_000);
        let h = g.sequence.entropies(20_000).unwrap();
        for cy in &g.cycles {
            if cy.m3 > 20_000 {
                break;
            }
            // positive partial sums after M1 until M3, nonpositive at M3
            let mut acc = 0.0;
            for n in cy.m1 + 1..=cy.m3 {
                acc += h[n - 1];
                if n < cy.m3 {
                    assert!(acc > 0.0);
                }
            }
            assert!(acc <= 1e-9);
            assert!(cy.m1 >= cy.m0 && cy.m2 > cy.m1);
        }
    }

    #[test]
    fn gap_at_constructed_scales() {
        let ifs = DiagonalIfs::full_grid(&[3, 2], &[]).unwrap();
        let [a, b, c] = laws(6);
        let len = 30_000;
        let g = gap_sequence(&ifs, [&a, &b, &c], 10, Growth::Factor(2.0), len).unwrap();
        let e = Engine::new(&ifs, &g.sequence, len).unwrap();
        let mut checked = 0;
        for cy in g.cycles.iter().filter(|cy| cy.m3 < len) {
            let dec = e.decompose(cy.n2).unwrap();
            assert_eq!(*dec.g.last().unwrap(), cy.m2);
            let d = e.d_sequences_with(&dec).unwrap();
            assert!(d.d_n < d.d_tilde - 1e-3, "{d:?}");
            checked += 1;
        }
        assert!(checked >= 2);
    }

    #[test]
    fn rejects_bad_entropies() {
        let ifs = DiagonalIfs::full_grid(&[3, 2], &[]).unwrap();
        let [a, b, c] = laws(6);
        assert!(gap_sequence(&ifs, [&b, &a, &c], 10, Growth::Square, 100).is_err());
        assert!(gap_sequence(&ifs, [&a, &b, &a], 10, Growth::Square, 100).is_err());
    }
}
