//! Optimal control of a regularized Kobayashi–Warren–Carter grain-boundary model.
//!
//! The crate is organised bottom-up: [`field`] holds grids and difference
//! operators, [`model`] the material laws, [`state`] the forward solver,
//! [`sensitivity`] the linearized and adjoint kernel, [`control`] the cost,
//! gradient and optimizer, and [`experiments`] the continuation studies.
//! [`config`], [`profiles`], [`io`] and [`run`] back the `kwc` binary.

pub mod config;
pub mod control;
pub mod error;
pub mod experiments;
pub mod field;
pub mod io;
pub mod linalg;
pub mod model;
pub mod profiles;
pub mod run;
pub mod sensitivity;
pub mod state;

pub use error::{KwcError, Result};
