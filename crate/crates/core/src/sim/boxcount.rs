use std::sync::atomic::{AtomicU64, Ordering};

use rayon::prelude::*;
use serde::Serialize;

use super::PercolationTree;
use crate::error::{Error, Result};
use crate::ifs::DiagonalIfs;

const EDGE_TOL: f64 = 1e-9;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct BoxCountReport {
    /// Requested scales `N`.
    pub n: Vec<f64>,
    /// Grid resolution `k` used at each scale: cells of side `1/k`, `k = round(e^N)`.
    pub resolution: Vec<u64>,
    pub counts: Vec<usize>,
    /// Least-squares fit of `log count` against `log k` on `fit_window`.
    pub slope: f64,
    pub intercept: f64,
    pub slope_stderr: f64,
    /// Approximate 95% band `slope ± 1.96·stderr`.
    pub band: (f64, f64),
    /// Half-open index range of the points used in the fit.
    pub fit_window: (usize, usize),
}

impl BoxCountReport {
    pub fn to_csv(&self) -> String {
        let mut s = String::from("N,count\n");
        for (n, c) in self.n.iter().zip(&self.counts) {
            s.push_str(&format!("{n},{c}\n"));
        }
        s
    }
}

/// Cells already seen, as a shared bitmap over the `k^d` grid when it is small
/// enough and as packed keys to be sorted otherwise.
enum CellSet {
    Bitmap(Vec<AtomicU64>),
    Keys { bits: u32 },
}

/// Largest grid (in cells) tracked with a bitmap.
const BITMAP_CELLS: u128 = 1 << 31;

impl CellSet {
    fn new(k: u64, dim: usize) -> Result<Self> {
        let cells = (k as u128).checked_pow(dim as u32).unwrap_or(u128::MAX);
        if cells <= BITMAP_CELLS {
            return Ok(Self::Bitmap((0..cells.div_ceil(64)).map(|_| AtomicU64::new(0)).collect()));
        }
        let bits = 64 - k.leading_zeros();
        if bits as usize * dim > 128 {
            return Err(Error::ResourceCap(format!("grid of resolution {k} in dimension {dim} is too fine")));
        }
        Ok(Self::Keys { bits })
    }

    fn insert(&self, idx: &[u64], k: u64, keys: &mut Vec<u128>) {
        match self {
            Self::Bitmap(words) => {
                let flat = idx.iter().rev().fold(0u64, |acc, &i| acc * k + i);
                words[(flat / 64) as usize].fetch_or(1 << (flat % 64), Ordering::Relaxed);
            }
            Self::Keys { bits } => keys.push(idx.iter().fold(0u128, |acc, &i| (acc << bits) | i as u128)),
        }
    }
}

struct Walk<'a> {
    tree: &'a PercolationTree,
    ifs: &'a DiagonalIfs,
    offsets: Vec<Vec<usize>>,
    alive: Vec<Vec<bool>>,
}

struct Ctx<'a> {
    k: u64,
    cells: &'a CellSet,
}

/// Per-level box corners and sides, reused along the depth-first walk.
struct Scratch {
    lo: Vec<Vec<f64>>,
    size: Vec<Vec<f64>>,
    idx: Vec<u64>,
}

impl Scratch {
    fn new(depth: usize, d: usize) -> Self {
        Self { lo: vec![vec![0.0; d]; depth + 1], size: vec![vec![1.0; d]; depth + 1], idx: vec![0; d] }
    }
}

impl Walk<'_> {
    /// Cells of side `1/k` holding the centre of an alive box below `(level, j)`,
    /// descending until every side is at most `1/k`. The box of the node is `sc.lo[level]`, `sc.size[level]`.
    fn collect(&self, level: usize, j: usize, sc: &mut Scratch, ctx: &Ctx<'_>, out: &mut Vec<u128>) -> Result<()> {
        if !self.alive[level][j] {
            return Ok(());
        }
        let k = ctx.k;
        let delta = 1.0 / k as f64;
        let fits = sc.size[level].iter().all(|&s| s <= delta * (1.0 + EDGE_TOL));
        if fits || level == self.tree.depth {
            if !fits {
                return Err(Error::OutOfRange(format!(
                    "depth {} is too small for cells of side 1/{k}",
                    self.tree.depth
                )));
            }
            for ax in 0..sc.idx.len() {
                let c = sc.lo[level][ax] + 0.5 * sc.size[level][ax];
                sc.idx[ax] = ((c * k as f64).floor().max(0.0) as u64).min(k - 1);
            }
            ctx.cells.insert(&sc.idx, k, out);
            return Ok(());
        }
        let mask = self.tree.masks[level][j];
        let mut rank = 0;
        for (i, m) in self.ifs.maps().iter().enumerate() {
            if mask >> i & 1 == 0 {
                continue;
            }
            for ax in 0..sc.idx.len() {
                let (l, s) = (sc.lo[level][ax], sc.size[level][ax]);
                sc.lo[level + 1][ax] = l + s * m.t[ax];
                sc.size[level + 1][ax] = s * m.a[ax];
            }
            self.collect(level + 1, self.offsets[level][j] + rank, sc, ctx, out)?;
            rank += 1;
        }
        Ok(())
    }

    fn count(&self, k: u64) -> Result<usize> {
        let d = self.ifs.dimension();
        let cells = CellSet::new(k, d)?;
        let ctx = Ctx { k, cells: &cells };
        let mut keys = if self.tree.depth == 0 || k == 1 {
            let mut out = Vec::new();
            self.collect(0, 0, &mut Scratch::new(self.tree.depth, d), &ctx, &mut out)?;
            out
        } else {
            // one task per surviving first-level cylinder
            let roots: Vec<usize> = (0..self.ifs.len()).filter(|i| self.tree.masks[0][0] >> i & 1 == 1).collect();
            let parts: Result<Vec<Vec<u128>>> = roots
                .par_iter()
                .enumerate()
                .map(|(r, &i)| {
                    let m = &self.ifs.maps()[i];
                    let mut sc = Scratch::new(self.tree.depth, d);
                    sc.lo[1].copy_from_slice(&m.t);
                    sc.size[1].copy_from_slice(&m.a);
                    let mut out = Vec::new();
                    self.collect(1, r, &mut sc, &ctx, &mut out)?;
                    out.sort_unstable();
                    out.dedup();
                    Ok(out)
                })
                .collect();
            parts?.concat()
        };
        Ok(match &cells {
            CellSet::Bitmap(words) => words.iter().map(|w| w.load(Ordering::Relaxed).count_ones() as usize).sum(),
            CellSet::Keys { .. } => {
                keys.par_sort_unstable();
                keys.dedup();
                keys.len()
            }
        })
    }
}

/// Box-counting fit for the surviving set at the tree's depth.
///
/// At scale `N` the grid has cells of side `1/k` with `k = round(e^N)`, so Sierpiński-type
/// grids are hit exactly. Each surviving word is followed down to its first box with all
/// sides at most `1/k`, and the cell holding that box's centre is counted: the count is
/// within a factor `2^d` of the number of cells meeting the set, and exact on aligned grids. `fit_window` is a half-open index range into the sorted
/// `n_list`; by default the middle two quartiles.
pub fn box_count_fit(
    tree: &PercolationTree,
    ifs: &DiagonalIfs,
    n_list: &[f64],
    fit_window: Option<(usize, usize)>,
) -> Result<BoxCountReport> {
    if tree.alphabet != ifs.len() {
        return Err(Error::DimensionMismatch { expected: ifs.len(), got: tree.alphabet });
    }
    if !tree.survived() {
        return Err(Error::EmptySet("no surviving cell at the tree depth".into()));
    }
    if n_list.is_empty() {
        return Err(Error::EmptySet("scale list".into()));
    }
    let mut n: Vec<f64> = n_list.to_vec();
    if n.iter().any(|x| !x.is_finite() || *x < 0.0) {
        return Err(Error::OutOfRange("scales must be finite and nonnegative".into()));
    }
    n.sort_by(f64::total_cmp);
    let walk = Walk {
        tree,
        ifs,
        offsets: (0..tree.depth).map(|k| tree.child_offsets(k)).collect(),
        alive: tree.alive(),
    };
    let resolution: Vec<u64> = n.iter().map(|x| (x.exp().round() as u64).max(1)).collect();
    let counts = resolution.iter().map(|&k| walk.count(k)).collect::<Result<Vec<_>>>()?;

    let len = n.len();
    let (a, b) = fit_window.unwrap_or_else(|| {
        let (a, b) = (len / 4, len - len / 4);
        if b - a >= 2 { (a, b) } else { (0, len) }
    });
    if a >= b || b > len {
        return Err(Error::OutOfRange(format!("fit window {a}..{b} for {len} scales")));
    }
    let xs: Vec<f64> = resolution[a..b].iter().map(|&k| (k as f64).ln()).collect();
    let ys: Vec<f64> = counts[a..b].iter().map(|&c| (c as f64).ln()).collect();
    let (slope, intercept, se) = least_squares(&xs, &ys);
    Ok(BoxCountReport {
        n,
        resolution,
        counts,
        slope,
        intercept,
        slope_stderr: se,
        band: (slope - 1.96 * se, slope + 1.96 * se),
        fit_window: (a, b),
    })
}

/// `(slope, intercept, stderr of slope)`.
pub(crate) fn least_squares(xs: &[f64], ys: &[f64]) -> (f64, f64, f64) {
    let m = xs.len() as f64;
    let mx = xs.iter().sum::<f64>() / m;
    let my = ys.iter().sum::<f64>() / m;
    let sxx: f64 = xs.iter().map(|x| (x - mx).powi(2)).sum();
    if sxx == 0.0 {
        return (0.0, my, f64::INFINITY);
    }
    let sxy: f64 = xs.iter().zip(ys).map(|(x, y)| (x - mx) * (y - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let se = if xs.len() > 2 {
        let rss: f64 = xs.iter().zip(ys).map(|(x, y)| (y - intercept - slope * x).powi(2)).sum();
        (rss / (m - 2.0) / sxx).sqrt()
    } else {
        0.0
    };
    (slope, intercept, se)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::sim::{sample_tree, AlphaSchedule, TreeOptions};
    use crate::weights::SurvivalVector;

    fn det_tree(ifs: &DiagonalIfs, depth: usize) -> PercolationTree {
        let a = AlphaSchedule::Constant(SurvivalVector::constant(ifs.len(), 1.0).unwrap());
        sample_tree(ifs, &a, depth, 0, TreeOptions::default()).unwrap()
    }

    #[test]
    fn full_square_has_slope_two() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let t = det_tree(&ifs, 8);
        let ns: Vec<f64> = (1..=8).map(|k| k as f64 * 0.6).collect();
        let r = box_count_fit(&t, &ifs, &ns, None).unwrap();
        assert!((r.slope - 2.0).abs() < 0.02, "{r:?}");
        for (k, c) in r.resolution.iter().zip(&r.counts) {
            assert_eq!(*c as u64, k * k);
        }
    }

    #[test]
    fn aligned_carpet_counts_are_exact() {
        let ifs = DiagonalIfs::full_grid(&[3, 3], &[vec![1, 1]]).unwrap();
        let t = det_tree(&ifs, 5);
        let ns: Vec<f64> = (1..=5).map(|k| k as f64 * 3f64.ln()).collect();
        let r = box_count_fit(&t, &ifs, &ns, Some((0, 5))).unwrap();
        assert_eq!(r.counts, vec![8, 64, 512, 4096, 32768]);
        assert!((r.slope - 8f64.ln() / 3f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn single_point_has_slope_zero() {
        let ifs = DiagonalIfs::new(2, vec![crate::ifs::DiagonalMap::new(vec![0.5, 0.5], vec![0.25, 0.25])]).unwrap();
        let t = det_tree(&ifs, 20);
        let ns: Vec<f64> = (1..=12).map(|k| k as f64).collect();
        let r = box_count_fit(&t, &ifs, &ns, None).unwrap();
        assert!(r.slope.abs() < 0.03, "{r:?}");
    }

    #[test]
    fn errors_on_shallow_tree_and_empty_set() {
        let ifs = DiagonalIfs::full_grid(&[2, 2], &[]).unwrap();
        let t = det_tree(&ifs, 3);
        assert!(matches!(box_count_fit(&t, &ifs, &[5.0], None), Err(Error::OutOfRange(_))));
        let dead = AlphaSchedule::Constant(SurvivalVector::constant(4, 1e-9).unwrap());
        let t = sample_tree(&ifs, &dead, 3, 0, TreeOptions::default()).unwrap();
        assert!(matches!(box_count_fit(&t, &ifs, &[1.0], None), Err(Error::EmptySet(_))));
    }
}
