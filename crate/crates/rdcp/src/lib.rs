//! Numerical toolkit for the random degree constrained process (RDCP) on the complete
//! graph: the λ_p fluid limit, the spectral characterization of the giant-component
//! critical time, first-order almost-2-regular corrections with inequality checks, and
//! a seeded Monte Carlo simulator.

// `!(x > 0.0)` is used on purpose: it rejects NaN as well.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod distributions;
pub mod lambda_solver;
pub mod numeric;
pub mod perturbation;
pub mod sim;
pub mod spectral;

pub use distributions::{DegreeDistribution, Direction, DistError, EpsilonDirection, TailVector};
pub use lambda_solver::{HazardModel, LambdaError, LambdaTable};
pub use perturbation::{PerturbationBundle, PerturbationError};
pub use sim::{SimConfig, SimError, SimMode, SimTrace};
