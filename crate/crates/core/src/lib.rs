//! Numerical core for pathwise simulation of stochastic p-Laplace equations
//! with additive or multiplicative noise on a truncated domain: noise paths,
//! problem data, grid operators, the time stepper and cocycle, and the
//! attractor diagnostics built on top of them.

#![no_std]
#![allow(clippy::neg_cmp_op_on_partial_ord, clippy::needless_range_loop)]

extern crate alloc;
#[cfg(test)]
extern crate std;

pub mod analysis;
pub mod error;
pub mod expr;
pub mod field;
pub mod integrator;
pub mod math;
pub mod noise;
pub mod pool;
pub mod problem;

pub use error::{Error, Result};
pub use field::{EndpointEnsemble, EnsembleTag, Field, Grid};
pub use integrator::{Scheme, StepCoefficients, Stepper, StepperConfig};
pub use noise::{EtaKind, EtaProcess, EtaSource, NoisePath, NoiseSource, OuPath, ShiftedView};
pub use pool::{Sequential, TaskPool};
pub use problem::{NoiseCase, Nonlinearity, ProblemSpec, SpaceTimeFn, TimeProfile};
