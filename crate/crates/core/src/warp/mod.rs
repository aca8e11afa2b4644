//! Warping functions: piecewise-linear paths, closed-form targets, and
//! smooth warps with their log-derivative geometry.

mod basis;
mod path;
mod smooth;
mod target;

pub use basis::{covariance_kernel, fourier_basis, FourierTable};
pub(crate) use path::cumulative_ordinates;
pub use path::{eval_warp, WarpPath};
pub use smooth::{
    centered_log_derivative, grid_nodes, inner, perturb, power, warp_from_log_derivative,
    GridFunction, SmoothWarp, GRID_SIZE, SLOPE_FLOOR,
};
pub use target::TargetWarp;
