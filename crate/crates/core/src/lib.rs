//! Finite-element solver for semi-linear parabolic equations with dynamic
//! boundary conditions on the unit disk.
//!
//! The equation couples a bulk diffusion process with a surface equation on
//! the boundary through the trace of the bulk unknown.  After a P1
//! finite-element discretization in which bulk and surface unknowns are kept
//! separate and coupled through a Lagrange multiplier, the package offers
//! several time integrators:
//!
//! * bulk-surface *splitting* schemes of second and third order that solve
//!   the bulk and the surface sequentially per step, decoupled through a
//!   multistep delay of the surface data,
//! * an *auxiliary* variant that recovers the bulk trace from the freshly
//!   computed surface state, and
//! * a fully coupled *monolithic* multistep scheme used as reference.
//!
//! Modules, bottom-up: [`linalg`] (sparse storage and factorization),
//! [`mesh`] (disk triangulations), [`assembly`] (finite-element operators),
//! [`problems`] (manufactured problem definitions), [`schemes`] (time
//! integrators), [`analysis`] (error measurement, convergence and timing
//! studies).

pub mod analysis;
pub mod assembly;
pub mod linalg;
pub mod mesh;
pub mod problems;
pub mod schemes;
