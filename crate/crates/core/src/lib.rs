//! Discrete-time closed-loop models, exact inverse-dynamics oracles and a
//! from-scratch feedforward network for learning reference corrections.
//!
//! The pieces fit together as follows: a stable baseline loop ([`plant`]) is
//! characterised by a handful of numbers ([`sysid`]), its inverse dynamics are
//! available in closed form when the model is known ([`inverse`]), recorded runs
//! are turned into training rows ([`features`]), a network is fitted to those
//! rows ([`nnet`]) and finally pre-cascaded to the loop ([`runner`]).

pub mod error;
pub mod features;
pub mod inverse;
pub mod nnet;
pub mod plant;
pub mod poly;
pub mod runner;
pub mod sysid;

pub use error::{Error, Result};
