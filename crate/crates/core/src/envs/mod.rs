//! Built-in environments.

pub mod benchmark;
pub mod hopper;
pub mod springmass;

pub use benchmark::{benchmark_fitness, BenchmarkEnv, BenchmarkKind};
pub use hopper::{HopperParams, PlanarHopper};
pub use springmass::{SpringMass1D, SpringMassParams};
