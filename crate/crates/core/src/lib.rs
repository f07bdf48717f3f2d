//! Dimensions of Mandelbrot measures and fractal percolation on diagonal
//! self-affine sponges.

// `!(x > 0.0)` style guards deliberately reject NaN alongside out-of-range values.
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

pub mod construct;
pub mod dimension;
pub mod error;
pub mod ifs;
pub mod numeric;
pub mod scale;
pub mod sequence;
pub mod sim;
pub mod variational;
pub mod weights;

pub use dimension::{
    d_sequences, dim_exp_periodic, dim_imm_bounds, dim_mandelbrot, DPair, Engine, ImmBounds, MandelbrotDimension,
    PeriodicDimension, PeriodicSpec,
};
pub use error::{Error, Result};
pub use ifs::{
    build_projection_coding, classify, compare_projections, feasible_direction_sets, project_vector, validate_ifs,
    Classification, DiagonalIfs, DiagonalMap, DirectionSet, Overlap, ProjectionCoding, SpongeClass,
};
pub use scale::{decompose, decompose_at, gamma, tail_min, PrefixTable, ScaleDecomposition, TailMin};
pub use sequence::{nondegeneracy_report, Block, ImmSequence, NondegeneracyReport, TypeEllSequence};
pub use variational::{
    dim_attractor_equal_linear, optimize_mandelbrot, optimize_packing, optimize_type_ell_hausdorff, perturb_sequence,
    weighted_pressure, OptimizationResult,
};
pub use weights::{
    entropy, log_moment, lyapunov, projected_tau, weight_entropy, ProbVector, SurvivalVector, WeightModel,
};
