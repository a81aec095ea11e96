//! Numerical engine for estimating mechanical anharmonicity with a closed
//! loop of optomechanical pulses.
//!
//! The crate is layered: [`fock`] holds truncated Fock-space primitives,
//! [`dynamics`] the closed-form effective maps, [`oracle`] the exact
//! Schrödinger-picture simulation, [`metrology`] Fisher information and
//! bounds, and [`inference`] sampling and estimation.

pub mod dynamics;
pub mod error;
pub mod fock;
pub mod inference;
pub mod metrology;
pub mod numerics;
pub mod oracle;
pub mod rng;

pub use error::{Error, Result};
