//! Multistart local search over the open simplex.
//!
//! Points of the simplex are parameterised by `p = softmax(z, 0)`. Each start
//! runs BFGS on a sequence of smoothed objectives (`tau > 0`), then polishes
//! the exact objective (`tau = 0`) with Nelder–Mead.

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use rand_distr::Exp1;
use rayon::prelude::*;
use serde::Serialize;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverOptions {
    pub starts: usize,
    pub max_iter: usize,
    pub grad_tol: f64,
    pub seed: u64,
    /// Smoothing temperatures, largest first.
    pub taus: Vec<f64>,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self { starts: 32, max_iter: 500, grad_tol: 1e-8, seed: 0x5eed, taus: vec![1e-2, 1e-3, 1e-4, 1e-5, 1e-6] }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct StartTrace {
    pub index: usize,
    pub value: f64,
    pub iterations: usize,
    pub residual: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolverTrace {
    pub starts: Vec<StartTrace>,
    pub best_start: usize,
    pub iterations: usize,
    /// Projected-gradient residual of the exact objective at the returned point.
    pub residual: f64,
}

pub fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().cloned().fold(0.0f64, f64::max);
    let mut p: Vec<f64> = z.iter().map(|x| (x - m).exp()).collect();
    p.push((-m).exp());
    let s: f64 = p.iter().sum();
    p.iter_mut().for_each(|x| *x /= s);
    p
}

pub fn logits(p: &[f64]) -> Vec<f64> {
    let floor = 1e-300;
    let last = p[p.len() - 1].max(floor).ln();
    p[..p.len() - 1].iter().map(|x| x.max(floor).ln() - last).collect()
}

/// Starting points: uniform, the supplied anchors, then Dirichlet(1) draws.
pub fn start_points(n: usize, anchors: &[Vec<f64>], count: usize, seed: u64) -> Vec<Vec<f64>> {
    let mut out = vec![vec![1.0 / n as f64; n]];
    out.extend(anchors.iter().cloned());
    let mut rng = Xoshiro256PlusPlus::seed_from_u64(seed);
    while out.len() < count.max(1) {
        let mut p: Vec<f64> = (0..n).map(|_| rng.sample::<f64, _>(Exp1).max(1e-12)).collect();
        let s: f64 = p.iter().sum();
        p.iter_mut().for_each(|x| *x /= s);
        out.push(p);
    }
    out.truncate(count.max(1));
    out
}

fn gradient(f: &dyn Fn(&[f64]) -> f64, z: &[f64], h: f64) -> Vec<f64> {
    let mut x = z.to_vec();
    (0..z.len())
        .map(|i| {
            x[i] = z[i] + h;
            let up = f(&x);
            x[i] = z[i] - h;
            let dn = f(&x);
            x[i] = z[i];
            (up - dn) / (2.0 * h)
        })
        .collect()
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

/// BFGS ascent with Armijo backtracking; returns (z, f, iterations, ‖∇f‖).
fn bfgs(f: &dyn Fn(&[f64]) -> f64, z0: Vec<f64>, h: f64, max_iter: usize, tol: f64) -> (Vec<f64>, f64, usize, f64) {
    let n = z0.len();
    let mut z = z0;
    let mut fz = f(&z);
    let mut g = gradient(f, &z, h);
    let mut hinv: Vec<Vec<f64>> = (0..n).map(|i| (0..n).map(|j| if i == j { 1.0 } else { 0.0 }).collect()).collect();
    let mut it = 0;
    while it < max_iter && norm(&g) > tol {
        it += 1;
        let mut dir: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * g[j]).sum()).collect();
        let mut slope: f64 = dir.iter().zip(&g).map(|(a, b)| a * b).sum();
        if slope <= 0.0 {
            dir = g.clone();
            slope = norm(&g).powi(2);
            for (i, row) in hinv.iter_mut().enumerate() {
                row.iter_mut().enumerate().for_each(|(j, x)| *x = if i == j { 1.0 } else { 0.0 });
            }
        }
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..60 {
            let cand: Vec<f64> = z.iter().zip(&dir).map(|(a, d)| a + step * d).collect();
            let fc = f(&cand);
            if fc.is_finite() && fc >= fz + 1e-4 * step * slope {
                accepted = Some((cand, fc));
                break;
            }
            step *= 0.5;
        }
        let Some((zn, fnew)) = accepted else { break };
        let gn = gradient(f, &zn, h);
        let s: Vec<f64> = zn.iter().zip(&z).map(|(a, b)| a - b).collect();
        // ascent on f is descent on -f: y = -(g_new - g_old)
        let y: Vec<f64> = gn.iter().zip(&g).map(|(a, b)| b - a).collect();
        let sy: f64 = s.iter().zip(&y).map(|(a, b)| a * b).sum();
        if sy > 1e-300 {
            let hy: Vec<f64> = (0..n).map(|i| (0..n).map(|j| hinv[i][j] * y[j]).sum()).collect();
            let yhy: f64 = y.iter().zip(&hy).map(|(a, b)| a * b).sum();
            let rho = 1.0 / sy;
            for i in 0..n {
                for j in 0..n {
                    hinv[i][j] += (1.0 + rho * yhy) * rho * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
                }
            }
        }
        let gain = fnew - fz;
        z = zn;
        fz = fnew;
        g = gn;
        if gain.abs() < 1e-16 * (1.0 + fz.abs()) {
            break;
        }
    }
    let r = norm(&g);
    (z, fz, it, r)
}

/// Nelder–Mead maximisation from `z0` with initial edge `scale`.
pub fn nelder_mead(f: &dyn Fn(&[f64]) -> f64, z0: &[f64], scale: f64, max_iter: usize, ftol: f64) -> (Vec<f64>, f64, usize) {
    let n = z0.len();
    if n == 0 {
        return (vec![], f(z0), 0);
    }
    let neg = |x: &[f64]| {
        let v = f(x);
        if v.is_finite() {
            -v
        } else {
            f64::INFINITY
        }
    };
    let mut pts: Vec<Vec<f64>> = vec![z0.to_vec()];
    for i in 0..n {
        let mut p = z0.to_vec();
        p[i] += scale;
        pts.push(p);
    }
    let mut vals: Vec<f64> = pts.iter().map(|p| neg(p)).collect();
    let mut it = 0;
    while it < max_iter {
        it += 1;
        let mut idx: Vec<usize> = (0..=n).collect();
        idx.sort_by(|&a, &b| vals[a].total_cmp(&vals[b]));
        pts = idx.iter().map(|&i| pts[i].clone()).collect();
        vals = idx.iter().map(|&i| vals[i]).collect();
        if (vals[n] - vals[0]).abs() <= ftol * (1.0 + vals[0].abs()) {
            let spread = pts.iter().map(|p| p.iter().zip(&pts[0]).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max)).fold(0.0, f64::max);
            if spread < 1e-10 || (vals[n] - vals[0]).abs() == 0.0 {
                break;
            }
        }
        let centroid: Vec<f64> = (0..n).map(|j| pts[..n].iter().map(|p| p[j]).sum::<f64>() / n as f64).collect();
        let along = |t: f64| -> Vec<f64> { centroid.iter().zip(&pts[n]).map(|(c, w)| c + t * (c - w)).collect() };
        let xr = along(1.0);
        let fr = neg(&xr);
        if fr < vals[0] {
            let xe = along(2.0);
            let fe = neg(&xe);
            if fe < fr {
                pts[n] = xe;
                vals[n] = fe;
            } else {
                pts[n] = xr;
                vals[n] = fr;
            }
        } else if fr < vals[n - 1] {
            pts[n] = xr;
            vals[n] = fr;
        } else {
            let (xc, fc) = if fr < vals[n] {
                let x = along(0.5);
                let v = neg(&x);
                (x, v)
            } else {
                let x = along(-0.5);
                let v = neg(&x);
                (x, v)
            };
            if fc < vals[n].min(fr) {
                pts[n] = xc;
                vals[n] = fc;
            } else {
                for i in 1..=n {
                    let p: Vec<f64> = pts[0].iter().zip(&pts[i]).map(|(a, b)| a + 0.5 * (b - a)).collect();
                    vals[i] = neg(&p);
                    pts[i] = p;
                }
            }
        }
    }
    let best = (0..=n).min_by(|&a, &b| vals[a].total_cmp(&vals[b])).unwrap();
    (pts[best].clone(), -vals[best], it)
}

/// Blockwise softmax: `z` holds `n - 1` logits per block.
pub fn softmax_blocks(z: &[f64], n: usize) -> Vec<f64> {
    if n == 1 {
        return vec![1.0; z.len().max(1)];
    }
    z.chunks(n - 1).flat_map(softmax).collect()
}

pub fn logits_blocks(p: &[f64], n: usize) -> Vec<f64> {
    p.chunks(n).flat_map(logits).collect()
}

/// Residual of the simplex-tangent gradient of the exact objective at `p`.
pub fn simplex_residual(f: &(dyn Fn(&[f64]) -> f64 + Sync), p: &[f64], n: usize) -> f64 {
    let z = logits_blocks(p, n);
    let g = gradient(&|z: &[f64]| f(&softmax_blocks(z, n)), &z, 1e-7);
    norm(&g)
}

/// Maximises `objective(p, tau)` over the simplex. `tau = 0` is the exact objective.
pub fn maximize_simplex(
    n: usize,
    objective: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    starts: &[Vec<f64>],
    opts: &SolverOptions,
) -> (Vec<f64>, f64, SolverTrace) {
    maximize_simplices(n, objective, starts, opts)
}

/// Maximises over a product of simplices of size `n`; points are concatenated block vectors.
pub fn maximize_simplices(
    n: usize,
    objective: &(dyn Fn(&[f64], f64) -> f64 + Sync),
    starts: &[Vec<f64>],
    opts: &SolverOptions,
) -> (Vec<f64>, f64, SolverTrace) {
    if n == 1 {
        let p = vec![1.0; starts[0].len()];
        let v = objective(&p, 0.0);
        let t = StartTrace { index: 0, value: v, iterations: 0, residual: 0.0 };
        return (p, v, SolverTrace { starts: vec![t], best_start: 0, iterations: 0, residual: 0.0 });
    }
    let runs: Vec<(Vec<f64>, f64, StartTrace)> = starts
        .par_iter()
        .enumerate()
        .map(|(index, p0)| {
            let mut z = logits_blocks(p0, n);
            let mut iterations = 0;
            for &tau in &opts.taus {
                let f = |z: &[f64]| objective(&softmax_blocks(z, n), tau);
                let h = (tau * 1e-2).clamp(1e-7, 1e-5);
                let (zn, _, it, _) = bfgs(&f, z, h, opts.max_iter, opts.grad_tol);
                z = zn;
                iterations += it;
            }
            let exact = |z: &[f64]| objective(&softmax_blocks(z, n), 0.0);
            let mut best = exact(&z);
            for scale in [1e-3, 1e-5, 1e-7] {
                let (zn, fz, it) = nelder_mead(&exact, &z, scale, 20 * opts.max_iter, 1e-15);
                iterations += it;
                if fz >= best {
                    best = fz;
                    z = zn;
                }
            }
            let p = softmax_blocks(&z, n);
            let value = objective(&p, 0.0);
            let residual = simplex_residual(&|q: &[f64]| objective(q, 0.0), &p, n);
            (p, value, StartTrace { index, value, iterations, residual })
        })
        .collect();
    let mut best = 0;
    for (i, r) in runs.iter().enumerate() {
        if r.1 > runs[best].1 {
            best = i;
        }
    }
    let traces: Vec<StartTrace> = runs.iter().map(|r| r.2.clone()).collect();
    let iterations = traces.iter().map(|t| t.iterations).sum();
    let (p, v, t) = runs.into_iter().nth(best).unwrap();
    (p, v, SolverTrace { starts: traces, best_start: best, iterations, residual: t.residual })
}

/// `-τ log Σ exp(-x_i/τ)`, or the plain minimum at `τ = 0`.
pub fn soft_min(xs: &[f64], tau: f64) -> f64 {
    let m = xs.iter().cloned().fold(f64::INFINITY, f64::min);
    if tau <= 0.0 || !m.is_finite() {
        return m;
    }
    m - tau * xs.iter().map(|x| (-(x - m) / tau).exp()).sum::<f64>().ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softmax_roundtrip() {
        let p = vec![0.2, 0.3, 0.5];
        let q = softmax(&logits(&p));
        for (a, b) in p.iter().zip(&q) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn maximizes_entropy() {
        let f = |p: &[f64], _t: f64| crate::numeric::shannon(p);
        let starts = start_points(4, &[], 4, 1);
        let (p, v, trace) = maximize_simplex(4, &f, &starts, &SolverOptions::default());
        assert!((v - 4f64.ln()).abs() < 1e-12);
        assert!(p.iter().all(|x| (x - 0.25).abs() < 1e-6));
        assert_eq!(trace.starts.len(), 4);
    }

    #[test]
    fn kinked_maximum() {
        // max of min(p0, p1) on the simplex of size 3 is 1/2 at (1/2, 1/2, 0): boundary of the open simplex
        let f = |p: &[f64], t: f64| soft_min(&[p[0] + 0.1 * p[2], p[1] + 0.1 * p[2]], t);
        let starts = start_points(3, &[], 8, 2);
        let (_, v, _) = maximize_simplex(3, &f, &starts, &SolverOptions::default());
        assert!((v - 0.5).abs() < 1e-6, "{v}");
    }

    #[test]
    fn soft_min_bounds() {
        let xs = [1.0, 1.5, 3.0];
        for tau in [1e-1, 1e-3] {
            let s = soft_min(&xs, tau);
            assert!(s <= 1.0 && s >= 1.0 - tau * 3f64.ln());
        }
        assert_eq!(soft_min(&xs, 0.0), 1.0);
    }
}
