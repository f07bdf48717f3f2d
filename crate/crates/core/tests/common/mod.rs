#![allow(dead_code)]

use rand::rngs::Xoshiro256PlusPlus;
use rand::{RngExt, SeedableRng};
use spongedim::sequence::Block;
use spongedim::weights::Atom;
use spongedim::*;

pub type Rng = Xoshiro256PlusPlus;

pub fn rng(seed: u64) -> Rng {
    Rng::seed_from_u64(seed)
}

pub fn pv(p: &[f64]) -> ProbVector {
    ProbVector::new(p.to_vec()).unwrap()
}

/// Dirichlet(1) vector with every entry at least `floor`.
pub fn random_simplex(rng: &mut Rng, n: usize, floor: f64) -> Vec<f64> {
    let e: Vec<f64> = (0..n).map(|_| -(1.0 - rng.random::<f64>()).ln()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|x| (1.0 - n as f64 * floor) * x / s + floor).collect()
}

/// Random subset (at least two cells) of a random grid in dimension 2 or 3.
pub fn random_grid(rng: &mut Rng) -> DiagonalIfs {
    let d = rng.random_range(2..=3usize);
    let m: Vec<usize> = (0..d).map(|_| rng.random_range(2..=4usize)).collect();
    let total: usize = m.iter().product();
    let count = rng.random_range(2..=total.min(10));
    let mut picked = random_permutation(rng, total);
    picked.truncate(count);
    let cells: Vec<Vec<usize>> = picked
        .into_iter()
        .map(|mut r| {
            m.iter()
                .map(|&mk| {
                    let c = r % mk;
                    r /= mk;
                    c
                })
                .collect()
        })
        .collect();
    DiagonalIfs::grid(&m, &cells).unwrap()
}

/// Deterministic, percolation or finitely supported random weight law on `n` letters.
pub fn random_model(rng: &mut Rng, n: usize) -> WeightModel {
    match rng.random_range(0..3u8) {
        0 => WeightModel::deterministic(pv(&random_simplex(rng, n, 0.01))).unwrap(),
        1 => {
            let alpha: Vec<f64> = (0..n).map(|_| rng.random_range(0.3..1.0)).collect();
            WeightModel::percolation(pv(&random_simplex(rng, n, 0.01)), SurvivalVector::new(alpha).unwrap()).unwrap()
        }
        _ => {
            let k = rng.random_range(1..=3usize);
            let probs = random_simplex(rng, k, 0.05);
            let mut atoms: Vec<Atom> = probs
                .iter()
                .map(|&prob| {
                    let mut c: Vec<u8> = (0..n).map(|_| (rng.random::<f64>() < 0.8) as u8).collect();
                    c[rng.random_range(0..n)] = 1;
                    let w = c.iter().map(|&ci| if ci == 1 { rng.random_range(0.05..1.0) } else { 0.0 }).collect();
                    Atom { prob, c, w }
                })
                .collect();
            let mean: f64 = atoms.iter().map(|a| a.prob * a.w.iter().sum::<f64>()).sum();
            for a in &mut atoms {
                a.w.iter_mut().for_each(|w| *w /= mean);
            }
            WeightModel::atoms(atoms).unwrap()
        }
    }
}

pub fn random_sequence(rng: &mut Rng, n: usize, len: usize) -> ImmSequence {
    let mut blocks = Vec::new();
    let mut acc = 0;
    while acc < len {
        let l = rng.random_range(1..=len.div_ceil(3)).min(len - acc);
        blocks.push(Block { len: l, model: random_model(rng, n) });
        acc += l;
    }
    ImmSequence::new(blocks).unwrap()
}

pub fn random_permutation(rng: &mut Rng, n: usize) -> Vec<usize> {
    let mut p: Vec<usize> = (0..n).collect();
    for i in (1..n).rev() {
        p.swap(i, rng.random_range(0..=i));
    }
    p
}

pub fn lyapunov_of(ifs: &DiagonalIfs, p: &[f64]) -> Vec<f64> {
    (0..ifs.dimension())
        .map(|k| -ifs.maps().iter().zip(p).map(|(m, pi)| pi * m.a[k].ln()).sum::<f64>())
        .collect()
}
