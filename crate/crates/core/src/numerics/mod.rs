//! Dense tensors, color conversion, and the generic solvers shared by the
//! fitting, analysis, and synthesis stages.

pub mod color;
pub mod gauss_newton;
pub mod image;
pub mod lbfgs;
pub mod simplex;
pub mod tensor;

pub use color::{color_convert, luma, ColorDirection};
pub use gauss_newton::{
    gauss_newton_irls, BlockLoss, GaussNewtonFailure, GaussNewtonOptions, GaussNewtonReport, LeastSquaresProblem,
    ResidualBlock,
};
pub use image::ImageBuffer;
pub use lbfgs::{lbfgs_minimize, LbfgsOptions, LbfgsReport, Objective, Termination};
pub use simplex::{
    project_to_simplex, solve_simplex_lsq, BlendNorm, BlendSystem, SimplexLsqOptions, SimplexLsqSolution,
    SimplexWeights,
};
pub use tensor::Tensor;
