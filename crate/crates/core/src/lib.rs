//! Energy-efficient, collision-aware velocity control for large UAV fleets
//! serving a ground hotspot.
//!
//! The crate solves a one-dimensional mean-field game: a backward
//! Hamilton-Jacobi-Bellman sweep for the representative UAV's cost-to-go and
//! a forward Fokker-Planck sweep for the fleet density, coupled in a damped
//! Picard loop. The closed-form optimal velocity field is then replayed on a
//! finite stochastic fleet and scored for collisions and energy per bit.
//!
//! Module map:
//!
//! - [`channel`]: 3GPP air-to-ground path loss, LOS probability, downlink rate.
//! - [`dynamics`]: wind-perturbed Euler-Maruyama position updates.
//! - [`cost`]: energy, flocking and running cost terms.
//! - [`grid`]: space-time grid and trapezoid quadrature.
//! - [`solver`]: HJB / FPK sweeps, optimal velocity, Picard loop.
//! - [`agent_sim`]: Monte-Carlo fleet replay and baseline controllers.
//! - [`metrics`]: collision fraction, energy per rate, heat maps.
//! - [`config`] and [`pipeline`]: scenario files and batch runs.

// `!(x > 0.0)` is used on purpose so that NaN fails validation.
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod agent_sim;
pub mod channel;
pub mod config;
pub mod cost;
pub mod dynamics;
pub mod error;
pub mod grid;
pub mod io;
pub mod metrics;
pub mod pipeline;
pub mod solver;

pub use error::{Error, Result};
