//! Equilibrium user strategies and revenue-optimal pricing for software sold
//! as perpetual licenses, subscriptions, or both.
//!
//! The crate is organized bottom-up:
//!
//! - [`model`]: product, user, price menu and per-timestep reward/payment.
//! - [`equilibrium`]: closed-form values of the five candidate strategy
//!   classes and the best response of a single user.
//! - [`oracles`]: brute-force checks (backward induction over the full action
//!   space, direct summation, Monte Carlo simulation).
//! - [`market`]: type distributions and expected revenue and welfare.
//! - [`optimizer`]: differential evolution over the price menu.
//! - [`experiments`]: configuration, base-case table, sweeps and verification runs.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod equilibrium;
pub mod error;
pub mod experiments;
pub mod market;
pub mod model;
pub mod optimizer;
pub mod oracles;
mod parallel;

pub use error::{Error, ModelError, Result};
pub use model::{Action, Ownership, PriceMenu, ProductConfig, UserState, UserType};
