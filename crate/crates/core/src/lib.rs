//! Desk-scale simulation laboratory for the Kirchhoff-law-Johnson-noise (KLJN)
//! key exchanger and the deterministic battery/switch (BR) exchanger.
//!
//! The crate is split along the physical pipeline:
//!
//! * [`noisegen`] synthesizes band-limited Gaussian noise and estimates spectra.
//! * [`circuits`] solves the KLJN loop and time-steps a distributed ladder line.
//! * [`protocol`] runs bit-exchange periods (BEPs) and assembles keys.
//! * [`attacks`] holds every eavesdropping strategy as a per-BEP guesser.
//! * [`security`] turns Eve's per-bit advantage into key-level figures.

pub mod attacks;
pub mod circuits;
pub mod error;
pub mod noisegen;
pub mod protocol;
pub mod security;
pub mod stats;

pub use error::{Error, Result};

/// Which end of the wire a quantity refers to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Side {
    Alice,
    Bob,
}

impl Side {
    pub fn other(self) -> Side {
        match self {
            Side::Alice => Side::Bob,
            Side::Bob => Side::Alice,
        }
    }
}
