//! Benchmark fixtures shared by the criterion targets.

use spongedim::{DiagonalIfs, SurvivalVector};

/// The 3×2 carpet with two cells in the bottom row and one in the top row.
pub fn mcmullen() -> DiagonalIfs {
    DiagonalIfs::grid(&[3, 2], &[vec![0, 0], vec![1, 0], vec![0, 1]]).expect("valid carpet")
}

/// 3×3 carpet with the centre removed.
pub fn sierpinski() -> DiagonalIfs {
    DiagonalIfs::full_grid(&[3, 3], &[vec![1, 1]]).expect("valid carpet")
}

pub fn uniform_alpha(n: usize, a: f64) -> SurvivalVector {
    SurvivalVector::constant(n, a).expect("valid survival vector")
}
