//! Cylindrical form of the fractional Laplacian: parameters and constants,
//! the kernel K and its periodization, and the discretized operator.

mod kernel;
mod operator;
mod params;

pub use kernel::{
    angular_density, kernel_direct, lambda_hardy_by_quadrature, periodize_kernel, KernelGridSpec, KernelTable,
    PeriodizedKernel, PHI_EXCLUSION_BAND, XI_FLOOR,
};
pub use operator::{LineOperator, PeriodicOperator, MAX_SPACING};
pub use params::{normalization_constants, ProblemParams};
