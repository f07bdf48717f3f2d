//! Level-dependent weight laws: run-length block sequences and type-ℓ data.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::numeric::compensated_prefix;
use crate::weights::{weight_entropy, ProbVector, SurvivalVector, WeightModel};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Block {
    pub len: usize,
    pub model: WeightModel,
}

/// Sequence of weight laws `W^{(1)}, W^{(2)}, …` stored as constant blocks.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ImmSequence {
    blocks: Vec<Block>,
    /// `ends[m]` is the last generation covered by block `m`.
    ends: Vec<usize>,
}

impl ImmSequence {
    pub fn new(blocks: Vec<Block>) -> Result<Self> {
        let blocks: Vec<Block> = blocks.into_iter().filter(|b| b.len > 0).collect();
        let first = blocks.first().ok_or_else(|| Error::InvalidModel("empty sequence".into()))?;
        let n = first.model.len();
        if let Some(b) = blocks.iter().find(|b| b.model.len() != n) {
            return Err(Error::DimensionMismatch { expected: n, got: b.model.len() });
        }
        let mut ends = Vec::with_capacity(blocks.len());
        let mut acc = 0usize;
        for b in &blocks {
            acc += b.len;
            ends.push(acc);
        }
        Ok(Self { blocks, ends })
    }

    pub fn constant(model: WeightModel, len: usize) -> Result<Self> {
        Self::new(vec![Block { len, model }])
    }

    pub fn blocks(&self) -> &[Block] {
        &self.blocks
    }

    /// Number of generations covered.
    pub fn len(&self) -> usize {
        *self.ends.last().unwrap_or(&0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn alphabet_size(&self) -> usize {
        self.blocks[0].model.len()
    }

    /// Block index covering generation `n` (1-based).
    pub fn block_of(&self, n: usize) -> Result<usize> {
        if n == 0 || n > self.len() {
            return Err(Error::HorizonExhausted { needed: n, available: self.len() });
        }
        Ok(self.ends.partition_point(|&e| e < n))
    }

    /// `W^{(n)}` for 1-based `n`.
    pub fn model_at(&self, n: usize) -> Result<&WeightModel> {
        Ok(&self.blocks[self.block_of(n)?].model)
    }

    /// Iterates `(first generation, last generation, model)` per block.
    pub fn spans(&self) -> impl Iterator<Item = (usize, usize, &WeightModel)> + '_ {
        self.blocks.iter().zip(&self.ends).map(|(b, &e)| (e - b.len + 1, e, &b.model))
    }

    /// Keeps generations `1..=len`.
    pub fn truncate(&self, len: usize) -> Result<Self> {
        if len > self.len() {
            return Err(Error::HorizonExhausted { needed: len, available: self.len() });
        }
        let mut out = Vec::new();
        for (start, end, m) in self.spans() {
            if start > len {
                break;
            }
            out.push(Block { len: end.min(len) + 1 - start, model: m.clone() });
        }
        Self::new(out)
    }

    pub fn concat(&self, other: &Self) -> Result<Self> {
        let mut b = self.blocks.clone();
        b.extend(other.blocks.iter().cloned());
        Self::new(b)
    }

    /// Per-generation `H(W^{(n)})`, `n = 1..=len`.
    pub fn entropies(&self, len: usize) -> Result<Vec<f64>> {
        if len > self.len() {
            return Err(Error::HorizonExhausted { needed: len, available: self.len() });
        }
        let mut out = Vec::with_capacity(len);
        for (start, end, m) in self.spans() {
            if start > len {
                break;
            }
            let h = weight_entropy(m);
            out.extend(std::iter::repeat_n(h, end.min(len) + 1 - start));
        }
        Ok(out)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            blocks: Vec<Block>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.blocks)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OCondition {
    pub ratio_bound: f64,
    /// Checked for block indices `m > m0` (1-based).
    pub m0: usize,
}

impl Default for OCondition {
    fn default() -> Self {
        Self { ratio_bound: 0.5, m0: 3 }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TypeEllBlock {
    pub len: usize,
    pub p: ProbVector,
}

/// Block schedule `ℓ` with one probability vector per block.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct TypeEllSequence {
    pub blocks: Vec<TypeEllBlock>,
    pub alpha: Option<SurvivalVector>,
}

impl TypeEllSequence {
    pub fn new(blocks: Vec<TypeEllBlock>, alpha: Option<SurvivalVector>) -> Result<Self> {
        let first = blocks.first().ok_or_else(|| Error::InvalidModel("no blocks".into()))?;
        let n = first.p.len();
        for (m, b) in blocks.iter().enumerate() {
            if b.len == 0 {
                return Err(Error::InvalidModel(format!("block {} has zero length", m + 1)));
            }
            if b.p.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: b.p.len() });
            }
        }
        if let Some(a) = &alpha {
            if a.len() != n {
                return Err(Error::DimensionMismatch { expected: n, got: a.len() });
            }
        }
        if let Some(m) = blocks.windows(2).position(|w| w[1].len <= w[0].len) {
            return Err(Error::InvalidModel(format!("block lengths not increasing at block {}", m + 2)));
        }
        Ok(Self { blocks, alpha })
    }

    /// Builds blocks of the given lengths from a vector generator.
    pub fn from_schedule(
        schedule: &[usize],
        mut vector: impl FnMut(usize) -> ProbVector,
        alpha: Option<SurvivalVector>,
    ) -> Result<Self> {
        let blocks = schedule.iter().enumerate().map(|(m, &len)| TypeEllBlock { len, p: vector(m) }).collect();
        Self::new(blocks, alpha)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        #[derive(Deserialize)]
        struct Raw {
            blocks: Vec<TypeEllBlock>,
            #[serde(default)]
            alpha: Option<SurvivalVector>,
        }
        let raw: Raw = serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))?;
        Self::new(raw.blocks, raw.alpha)
    }

    pub fn schedule(&self) -> Vec<usize> {
        self.blocks.iter().map(|b| b.len).collect()
    }

    pub fn len(&self) -> usize {
        self.blocks.iter().map(|b| b.len).sum()
    }

    pub fn is_empty(&self) -> bool {
        self.blocks.is_empty()
    }

    /// 1-based block indices `m` violating `ℓ_m ≤ ratio·L_{m-1}`.
    pub fn o_condition_violations(&self, cond: OCondition) -> Vec<usize> {
        let mut out = Vec::new();
        let mut total = 0usize;
        for (idx, b) in self.blocks.iter().enumerate() {
            let m = idx + 1;
            if m > cond.m0 && b.len as f64 > cond.ratio_bound * total as f64 {
                out.push(m);
            }
            total += b.len;
        }
        out
    }

    pub fn model_for(&self, p: &ProbVector) -> Result<WeightModel> {
        match &self.alpha {
            Some(a) => WeightModel::percolation(p.clone(), a.clone()),
            None => WeightModel::deterministic(p.clone()),
        }
    }

    pub fn to_imm(&self) -> Result<ImmSequence> {
        let blocks =
            self.blocks.iter().map(|b| Ok(Block { len: b.len, model: self.model_for(&b.p)? })).collect::<Result<_>>()?;
        ImmSequence::new(blocks)
    }
}

/// Smallest `N_ε` with `Σ_{n≤N'} H ≥ N' ε` for every `N' ∈ [N_ε, horizon]`.
pub fn n_epsilon(prefix: &[f64], eps: f64) -> Option<usize> {
    let horizon = prefix.len() - 1;
    let mut n = None;
    for m in (1..=horizon).rev() {
        if prefix[m] >= m as f64 * eps {
            n = Some(m);
        } else {
            break;
        }
    }
    n
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct NondegeneracyReport {
    pub horizon: usize,
    pub min_partial_mean: f64,
    pub argmin: usize,
    /// Largest grid ε whose `N_ε` lies in the first half of the horizon.
    pub certificate: Option<(f64, usize)>,
    pub per_eps: Vec<(f64, Option<usize>)>,
    pub entropies: Vec<f64>,
    pub supercritical_at_horizon: bool,
}

/// Finite-horizon report on the positivity of the running entropy means.
pub fn nondegeneracy_report(seq: &ImmSequence, horizon: usize, eps_grid: &[f64]) -> Result<NondegeneracyReport> {
    let h = seq.entropies(horizon)?;
    if horizon == 0 {
        return Err(Error::OutOfRange("horizon must be positive".into()));
    }
    let prefix = compensated_prefix(h.iter().copied());
    let (mut min_mean, mut argmin) = (f64::INFINITY, 0);
    for n in 1..=horizon {
        let m = prefix[n] / n as f64;
        if m < min_mean {
            min_mean = m;
            argmin = n;
        }
    }
    let per_eps: Vec<(f64, Option<usize>)> = eps_grid.iter().map(|&e| (e, n_epsilon(&prefix, e))).collect();
    let certificate = per_eps
        .iter()
        .filter_map(|&(e, n)| n.filter(|&n| 2 * n <= horizon).map(|n| (e, n)))
        .max_by(|a, b| a.0.total_cmp(&b.0));
    Ok(NondegeneracyReport {
        horizon,
        min_partial_mean: min_mean,
        argmin,
        certificate,
        per_eps,
        entropies: h,
        supercritical_at_horizon: min_mean > 0.0,
    })
}
