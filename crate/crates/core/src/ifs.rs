//! Diagonal self-affine IFS on `[0,1]^d`: validation, principal projections,
//! classification and projection codings.

use std::collections::BTreeMap;
use std::fmt;

use minilp::{ComparisonOp, OptimizationDirection, Problem};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Absolute tolerance for coordinate comparisons.
pub const COORD_TOL: f64 = 1e-12;
/// Strictness margin used by the direction-set LP.
pub const LP_TAU: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiagonalMap {
    pub a: Vec<f64>,
    pub t: Vec<f64>,
}

impl DiagonalMap {
    pub fn new(a: Vec<f64>, t: Vec<f64>) -> Self {
        Self { a, t }
    }

    fn check(&self, d: usize, letter: usize) -> Result<()> {
        if self.a.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.a.len() });
        }
        if self.t.len() != d {
            return Err(Error::DimensionMismatch { expected: d, got: self.t.len() });
        }
        for k in 0..d {
            let (a, t) = (self.a[k], self.t[k]);
            if !a.is_finite() || !t.is_finite() {
                return Err(Error::InvalidModel(format!("map {letter}: non-finite entry on axis {k}")));
            }
            if !(a > 0.0 && a < 1.0) {
                return Err(Error::InvalidModel(format!(
                    "map {letter}: contraction ratio {a} on axis {k} not in (0,1)"
                )));
            }
            if t < -COORD_TOL || a + t > 1.0 + COORD_TOL {
                return Err(Error::InvalidModel(format!(
                    "map {letter}: image leaves the unit cube on axis {k}"
                )));
            }
        }
        Ok(())
    }

    /// Open interval `(t_k, t_k + a_k)`.
    #[inline]
    pub fn interval(&self, k: usize) -> (f64, f64) {
        (self.t[k], self.t[k] + self.a[k])
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DiagonalIfs {
    dimension: usize,
    maps: Vec<DiagonalMap>,
}

#[derive(Deserialize)]
struct IfsFile {
    dimension: usize,
    maps: Vec<DiagonalMap>,
}

impl<'de> Deserialize<'de> for DiagonalIfs {
    fn deserialize<D: serde::Deserializer<'de>>(de: D) -> std::result::Result<Self, D::Error> {
        let raw = IfsFile::deserialize(de)?;
        DiagonalIfs::new(raw.dimension, raw.maps).map_err(serde::de::Error::custom)
    }
}

impl DiagonalIfs {
    /// Builds an IFS, rejecting maps that are not strict contractions of the cube.
    pub fn new(dimension: usize, maps: Vec<DiagonalMap>) -> Result<Self> {
        if dimension == 0 {
            return Err(Error::InvalidModel("dimension must be at least 1".into()));
        }
        if maps.is_empty() {
            return Err(Error::InvalidModel("empty alphabet".into()));
        }
        for (i, m) in maps.iter().enumerate() {
            m.check(dimension, i)?;
        }
        Ok(Self { dimension, maps })
    }

    pub fn from_json(text: &str) -> Result<Self> {
        serde_json::from_str(text).map_err(|e| Error::Parse(e.to_string()))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("ifs serializes")
    }

    /// Full `m_1 × … × m_d` grid restricted to the listed cells.
    pub fn grid(m: &[usize], cells: &[Vec<usize>]) -> Result<Self> {
        let maps = cells
            .iter()
            .map(|c| {
                let a = m.iter().map(|&mk| 1.0 / mk as f64).collect();
                let t = c.iter().zip(m).map(|(&ck, &mk)| ck as f64 / mk as f64).collect();
                DiagonalMap::new(a, t)
            })
            .collect();
        Self::new(m.len(), maps)
    }

    /// All cells of the `m_1 × … × m_d` grid, optionally removing some.
    pub fn full_grid(m: &[usize], remove: &[Vec<usize>]) -> Result<Self> {
        let mut cells = vec![vec![]];
        for &mk in m {
            cells = cells
                .into_iter()
                .flat_map(|c: Vec<usize>| {
                    (0..mk).map(move |x| {
                        let mut c = c.clone();
                        c.push(x);
                        c
                    })
                })
                .collect();
        }
        cells.retain(|c| !remove.contains(c));
        Self::grid(m, &cells)
    }

    #[inline]
    pub fn dimension(&self) -> usize {
        self.dimension
    }

    #[inline]
    pub fn len(&self) -> usize {
        self.maps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.maps.is_empty()
    }

    pub fn maps(&self) -> &[DiagonalMap] {
        &self.maps
    }

    pub fn map(&self, i: usize) -> Result<&DiagonalMap> {
        self.maps.get(i).ok_or(Error::UnknownLetter { letter: i, size: self.maps.len() })
    }

    /// `-log a_{i,k}` for every letter and axis.
    pub fn neg_log_ratios(&self) -> Vec<Vec<f64>> {
        self.maps.iter().map(|m| m.a.iter().map(|a| -a.ln()).collect()).collect()
    }

    /// True when all maps share the same linear part.
    pub fn equal_linear_parts(&self) -> bool {
        let a0 = &self.maps[0].a;
        self.maps.iter().all(|m| m.a.iter().zip(a0).all(|(x, y)| (x - y).abs() <= COORD_TOL))
    }

    /// Same IFS with letters reordered: new letter `n` is old letter `perm[n]`.
    pub fn permute_letters(&self, perm: &[usize]) -> Result<Self> {
        let maps = perm.iter().map(|&i| self.map(i).cloned()).collect::<Result<Vec<_>>>()?;
        Self::new(self.dimension, maps)
    }

    /// Same IFS with axes reordered: new axis `n` is old axis `perm[n]`.
    pub fn permute_axes(&self, perm: &[usize]) -> Result<Self> {
        if perm.len() != self.dimension {
            return Err(Error::DimensionMismatch { expected: self.dimension, got: perm.len() });
        }
        let maps = self
            .maps
            .iter()
            .map(|m| DiagonalMap::new(perm.iter().map(|&k| m.a[k]).collect(), perm.iter().map(|&k| m.t[k]).collect()))
            .collect();
        Self::new(self.dimension, maps)
    }
}

/// Canonical (sorted, deduplicated) nonempty set of axes, 0-based.
#[derive(Debug, Clone, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DirectionSet(Vec<usize>);

impl DirectionSet {
    pub fn new(axes: impl IntoIterator<Item = usize>) -> Self {
        let mut v: Vec<usize> = axes.into_iter().collect();
        v.sort_unstable();
        v.dedup();
        Self(v)
    }

    pub fn full(d: usize) -> Self {
        Self((0..d).collect())
    }

    pub fn axes(&self) -> &[usize] {
        &self.0
    }

    pub fn len(&self) -> usize {
        self.0.len()
    }

    pub fn is_empty(&self) -> bool {
        self.0.is_empty()
    }

    pub fn contains(&self, k: usize) -> bool {
        self.0.binary_search(&k).is_ok()
    }

    pub fn is_proper_subset_of(&self, other: &DirectionSet) -> bool {
        self.len() < other.len() && self.0.iter().all(|k| other.contains(*k))
    }

    /// All nonempty subsets of `{0..d-1}` in bitmask order.
    pub fn all_nonempty(d: usize) -> Vec<DirectionSet> {
        (1u32..(1 << d)).map(|mask| Self::new((0..d).filter(|k| mask & (1 << k) != 0))).collect()
    }

    fn subsets(&self) -> Vec<DirectionSet> {
        let n = self.len();
        (1u32..(1 << n))
            .map(|mask| Self::new((0..n).filter(|b| mask & (1 << b) != 0).map(|b| self.0[b])))
            .collect()
    }
}

impl fmt::Display for DirectionSet {
    /// Printed with 1-based axes, e.g. `{1,2}`.
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let parts: Vec<String> = self.0.iter().map(|k| (k + 1).to_string()).collect();
        write!(f, "{{{}}}", parts.join(","))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize)]
pub enum Overlap {
    ExactOverlap,
    Disjoint,
    Violation,
}

fn intervals_disjoint(x: (f64, f64), y: (f64, f64)) -> bool {
    x.1 <= y.0 + COORD_TOL || y.1 <= x.0 + COORD_TOL
}

fn compare_on(mi: &DiagonalMap, mj: &DiagonalMap, axes: &[usize]) -> Overlap {
    let exact = axes
        .iter()
        .all(|&k| (mi.a[k] - mj.a[k]).abs() <= COORD_TOL && (mi.t[k] - mj.t[k]).abs() <= COORD_TOL);
    if exact {
        return Overlap::ExactOverlap;
    }
    if axes.iter().any(|&k| intervals_disjoint(mi.interval(k), mj.interval(k))) {
        Overlap::Disjoint
    } else {
        Overlap::Violation
    }
}

/// Relative position of the `D`-projections of `f_i((0,1)^d)` and `f_j((0,1)^d)`.
pub fn compare_projections(ifs: &DiagonalIfs, d: &DirectionSet, i: usize, j: usize) -> Result<Overlap> {
    let (mi, mj) = (ifs.map(i)?, ifs.map(j)?);
    if let Some(&k) = d.axes().iter().find(|&&k| k >= ifs.dimension()) {
        return Err(Error::DimensionMismatch { expected: ifs.dimension(), got: k + 1 });
    }
    Ok(compare_on(mi, mj, d.axes()))
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub enum Violation {
    AlphabetTooSmall(usize),
    OpenImagesOverlap { i: usize, j: usize },
    FaceCovered { axis: usize, side: u8 },
}

impl fmt::Display for Violation {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Violation::AlphabetTooSmall(n) => write!(f, "alphabet has {n} letter(s); at least 2 required"),
            Violation::OpenImagesOverlap { i, j } => write!(f, "open images overlap: maps {i} and {j}"),
            Violation::FaceCovered { axis, side } => {
                write!(f, "every map touches face x_{} = {side}", axis + 1)
            }
        }
    }
}

/// Lists every violated structural condition; empty means valid.
pub fn validate_ifs(ifs: &DiagonalIfs) -> Vec<Violation> {
    let mut out = Vec::new();
    let n = ifs.len();
    if n < 2 {
        out.push(Violation::AlphabetTooSmall(n));
    }
    let all = DirectionSet::full(ifs.dimension());
    for i in 0..n {
        for j in i + 1..n {
            if compare_on(&ifs.maps[i], &ifs.maps[j], all.axes()) != Overlap::Disjoint {
                out.push(Violation::OpenImagesOverlap { i, j });
            }
        }
    }
    for k in 0..ifs.dimension() {
        if ifs.maps.iter().all(|m| m.t[k].abs() <= COORD_TOL) {
            out.push(Violation::FaceCovered { axis: k, side: 0 });
        }
        if ifs.maps.iter().all(|m| (m.t[k] + m.a[k] - 1.0).abs() <= COORD_TOL) {
            out.push(Violation::FaceCovered { axis: k, side: 1 });
        }
    }
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub enum Feasibility {
    /// Strictly separated exponents achievable; carries the LP margin.
    Strict(f64),
    /// Only achievable with ties between inside and outside axes.
    Boundary,
    Infeasible,
}

/// Maximal margin `t` with `χ_k(p) + t ≤ χ_{k'}(p)` for `k ∈ D`, `k' ∉ D`.
fn separation_margin(ifs: &DiagonalIfs, d: &DirectionSet) -> Option<f64> {
    let logs = ifs.neg_log_ratios();
    let dim = ifs.dimension();
    let mut lp = Problem::new(OptimizationDirection::Maximize);
    let ps: Vec<_> = (0..ifs.len()).map(|_| lp.add_var(0.0, (0.0, 1.0))).collect();
    let t = lp.add_var(1.0, (f64::NEG_INFINITY, f64::INFINITY));
    let simplex: Vec<_> = ps.iter().map(|&v| (v, 1.0)).collect();
    lp.add_constraint(&simplex, ComparisonOp::Eq, 1.0);
    for &k in d.axes() {
        for k2 in (0..dim).filter(|k2| !d.contains(*k2)) {
            let mut row: Vec<_> = ps.iter().enumerate().map(|(i, &v)| (v, logs[i][k] - logs[i][k2])).collect();
            row.push((t, 1.0));
            lp.add_constraint(&row, ComparisonOp::Le, 0.0);
        }
    }
    lp.solve().ok().map(|s| s.objective())
}

/// Feasibility of one direction set as a sublevel set `{k : χ_k(p) ≤ x}`.
pub fn direction_set_feasibility(ifs: &DiagonalIfs, d: &DirectionSet) -> Feasibility {
    if d.len() == ifs.dimension() {
        return Feasibility::Strict(f64::INFINITY);
    }
    match separation_margin(ifs, d) {
        Some(m) if m >= LP_TAU => Feasibility::Strict(m),
        Some(m) if m > -LP_TAU => Feasibility::Boundary,
        _ => Feasibility::Infeasible,
    }
}

/// Every direction set with a strict feasibility certificate, plus the full set.
pub fn feasible_direction_sets(ifs: &DiagonalIfs) -> Vec<DirectionSet> {
    DirectionSet::all_nonempty(ifs.dimension())
        .into_iter()
        .filter(|d| matches!(direction_set_feasibility(ifs, d), Feasibility::Strict(_)))
        .collect()
}

/// Direction sets only reachable with ties (reported, not part of the family).
pub fn boundary_direction_sets(ifs: &DiagonalIfs) -> Vec<DirectionSet> {
    DirectionSet::all_nonempty(ifs.dimension())
        .into_iter()
        .filter(|d| direction_set_feasibility(ifs, d) == Feasibility::Boundary)
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Serialize)]
pub enum SpongeClass {
    Sierpinski,
    GatzourasLalley,
    Baranski,
    Sppc,
    GoodSponge,
    NotGood,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct Classification {
    pub most_specific: SpongeClass,
    pub labels: Vec<SpongeClass>,
    pub family: Vec<DirectionSet>,
}

fn pairwise_ok(ifs: &DiagonalIfs, axes: &[usize]) -> bool {
    let n = ifs.len();
    (0..n).all(|i| (i + 1..n).all(|j| compare_on(&ifs.maps[i], &ifs.maps[j], axes) != Overlap::Violation))
}

fn is_integer_reciprocal(a: f64) -> Option<usize> {
    let m = (1.0 / a).round();
    ((m >= 2.0) && (a * m - 1.0).abs() <= 1e-9).then_some(m as usize)
}

fn permutations(n: usize) -> Vec<Vec<usize>> {
    if n == 0 {
        return vec![vec![]];
    }
    let mut out = Vec::new();
    for p in permutations(n - 1) {
        for pos in 0..=p.len() {
            let mut q = p.clone();
            q.insert(pos, n - 1);
            out.push(q);
        }
    }
    out
}

fn is_gatzouras_lalley(ifs: &DiagonalIfs) -> bool {
    let d = ifs.dimension();
    permutations(d).into_iter().any(|sigma| {
        // weakest contraction last, so every D_k is a sublevel set of the exponents
        let ordered = ifs.maps.iter().all(|m| sigma.windows(2).all(|w| m.a[w[0]] < m.a[w[1]]));
        ordered && (0..d).all(|k| pairwise_ok(ifs, &DirectionSet::new(sigma[k..].iter().copied()).0))
    })
}

fn is_baranski(ifs: &DiagonalIfs) -> bool {
    (0..ifs.dimension()).all(|k| pairwise_ok(ifs, &[k]))
}

fn is_sierpinski(ifs: &DiagonalIfs) -> bool {
    if !ifs.equal_linear_parts() || !is_baranski(ifs) {
        return false;
    }
    let a0 = &ifs.maps[0].a;
    let ms: Option<Vec<usize>> = a0.iter().map(|&a| is_integer_reciprocal(a)).collect();
    let Some(ms) = ms else { return false };
    ifs.maps.iter().all(|m| {
        m.t.iter().zip(&ms).all(|(&t, &mk)| {
            let c = (t * mk as f64).round();
            (t * mk as f64 - c).abs() <= 1e-9
        })
    })
}

/// Classifies the sponge; `labels` lists every satisfied class.
pub fn classify(ifs: &DiagonalIfs) -> Classification {
    let family = feasible_direction_sets(ifs);
    let good = family.iter().all(|d| pairwise_ok(ifs, d.axes()));
    let sppc = good && family.iter().all(|d| d.subsets().iter().all(|sub| pairwise_ok(ifs, sub.axes())));
    let mut labels = Vec::new();
    if is_sierpinski(ifs) {
        labels.push(SpongeClass::Sierpinski);
    }
    if is_gatzouras_lalley(ifs) {
        labels.push(SpongeClass::GatzourasLalley);
    }
    if is_baranski(ifs) {
        labels.push(SpongeClass::Baranski);
    }
    if sppc {
        labels.push(SpongeClass::Sppc);
    }
    if good {
        labels.push(SpongeClass::GoodSponge);
    } else {
        labels.push(SpongeClass::NotGood);
    }
    Classification { most_specific: labels[0], labels, family }
}

/// Projection coding along a strictly decreasing chain `D_1 ⊋ … ⊋ D_s`.
///
/// Levels are 0-based. `alphabet[r]` lists the representatives of level `r`
/// (smallest letter of each class), `rep[r][i]` is `Π_r(i)` as a letter and
/// `index[r][i]` its position inside `alphabet[r]`.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct ProjectionCoding {
    pub chain: Vec<DirectionSet>,
    pub alphabet: Vec<Vec<usize>>,
    pub rep: Vec<Vec<usize>>,
    pub index: Vec<Vec<usize>>,
}

/// Equivalence classes of letters under exact overlap on `d`.
pub(crate) fn classes_on(ifs: &DiagonalIfs, d: &DirectionSet) -> Result<Vec<usize>> {
    let n = ifs.len();
    let mut rep = vec![usize::MAX; n];
    for i in 0..n {
        if rep[i] != usize::MAX {
            continue;
        }
        rep[i] = i;
        for j in i + 1..n {
            match compare_on(&ifs.maps[i], &ifs.maps[j], d.axes()) {
                Overlap::ExactOverlap => rep[j] = i,
                Overlap::Disjoint => {}
                Overlap::Violation => return Err(Error::OverlapViolation { level: 0, i, j }),
            }
        }
    }
    Ok(rep)
}

impl ProjectionCoding {
    pub fn levels(&self) -> usize {
        self.chain.len()
    }

    pub fn level_size(&self, r: usize) -> usize {
        self.alphabet[r].len()
    }

    /// Step map `Π_{r-1,r}` on positions: position in level `r-1` to position in level `r`.
    pub fn step(&self, r: usize) -> Vec<usize> {
        self.alphabet[r - 1].iter().map(|&i| self.index[r][i]).collect()
    }

    /// `Π_r p`, indexed by position in `alphabet[r]`.
    pub fn project(&self, p: &[f64], r: usize) -> Result<Vec<f64>> {
        if r >= self.levels() {
            return Err(Error::LevelOutOfRange { r, s: self.levels() });
        }
        if p.len() != self.index[r].len() {
            return Err(Error::DimensionMismatch { expected: self.index[r].len(), got: p.len() });
        }
        let mut out = vec![0.0; self.level_size(r)];
        for (i, &pi) in p.iter().enumerate() {
            out[self.index[r][i]] += pi;
        }
        Ok(out)
    }
}

pub fn build_projection_coding(ifs: &DiagonalIfs, chain: &[DirectionSet]) -> Result<ProjectionCoding> {
    if chain.is_empty() {
        return Err(Error::InvalidModel("empty chain".into()));
    }
    for (r, w) in chain.windows(2).enumerate() {
        if !w[1].is_proper_subset_of(&w[0]) {
            return Err(Error::ChainNotDecreasing(r + 1));
        }
    }
    let n = ifs.len();
    let mut coding = ProjectionCoding { chain: chain.to_vec(), alphabet: vec![], rep: vec![], index: vec![] };
    for (level, d) in chain.iter().enumerate() {
        if let Some(&k) = d.axes().iter().find(|&&k| k >= ifs.dimension()) {
            return Err(Error::DimensionMismatch { expected: ifs.dimension(), got: k + 1 });
        }
        let rep = classes_on(ifs, d).map_err(|e| match e {
            Error::OverlapViolation { i, j, .. } => Error::OverlapViolation { level, i, j },
            other => other,
        })?;
        let alphabet: Vec<usize> = (0..n).filter(|&i| rep[i] == i).collect();
        let pos: BTreeMap<usize, usize> = alphabet.iter().enumerate().map(|(p, &i)| (i, p)).collect();
        coding.index.push(rep.iter().map(|r| pos[r]).collect());
        coding.alphabet.push(alphabet);
        coding.rep.push(rep);
    }
    Ok(coding)
}

/// `Π_r p` for a probability vector on the full alphabet.
pub fn project_vector(p: &[f64], coding: &ProjectionCoding, r: usize) -> Result<Vec<f64>> {
    coding.project(p, r)
}
