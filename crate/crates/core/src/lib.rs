//! Desk-scale simulator and training framework for energy-aware multimodal
//! V2I beam management.
//!
//! The crate couples three layers:
//!
//! * a mmWave multipath physics kernel (steering vectors, geometric channels,
//!   radar observations) in [`physics`],
//! * the deterministic per-slot laws (semantic age of information, beam
//!   misalignment probability, the two-part energy model) in [`dynamics`],
//! * an MDP environment ([`env`]) driven either by a decoupled
//!   mixture-of-experts agent ([`agent`]) or one of five reference baselines
//!   ([`baselines`]).
//!
//! The math kernels are generic over the scalar type through [`num::Scalar`];
//! the simulation stack is instantiated at `f64` via the [`Real`] alias.
//! Experiment orchestration, configuration, and plotting live in [`harness`].

pub mod agent;
pub mod baselines;
pub mod dynamics;
pub mod env;
pub mod error;
pub mod harness;
pub mod neural;
pub mod num;
pub mod physics;
pub mod stats;

/// Scalar type used by the concrete simulation stack.
pub type Real = f64;

/// Complex scalar paired with [`Real`].
pub type Cplx = num_complex::Complex<Real>;

pub use error::{Error, Result};
