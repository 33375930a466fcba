//! Bit-exchange periods (BEPs) for KLJN and BR, defenses, and key assembly.

mod br;
mod key;
mod kljn;
mod transient;

pub use br::{run_br_bep, run_br_bep_with_bits, switch_termination, BrBep, BrConfig, BrVariant, SwitchPosition};
pub use key::{assemble_keys, privacy_amplify, Key};
pub use kljn::{
    classify_levels, endpoint_comparison_defense, leak_cap_filter, normalize_leak_statistics,
    run_kljn_bep, run_kljn_bep_with_bits, true_class, BepRecord, Classification, DefenseConfig,
    DefenseVerdict, KljnBep, TransientMode,
};
pub use transient::{
    generator_lag, run_abrupt_bep, run_random_walk_bep, RandomWalkConfig, TransientBep, WalkTrace,
};

use crate::circuits::Bit;
use crate::noisegen::RngStream;
use rand::Rng;

/// Stream identifiers within one BEP trial.
pub mod source {
    pub const BITS: u64 = 0;
    pub const ALICE: u64 = 1;
    pub const BOB: u64 = 2;
    pub const WIRE: u64 = 3;
    pub const EVE: u64 = 4;
    pub const WALK_A: u64 = 5;
    pub const WALK_B: u64 = 6;
    pub const COIN: u64 = 7;
    pub const READOUT_A: u64 = 8;
    pub const READOUT_B: u64 = 9;
    pub const DAMP_A: u64 = 10;
    pub const DAMP_B: u64 = 11;
    pub const BRANCH: u64 = 12;
}

/// Uniformly drawn `(alice, bob)` bits for one BEP.
pub fn draw_bits(rng: RngStream) -> (Bit, Bit) {
    let mut r = rng.with_source(source::BITS).rng();
    (Bit::from_bool(r.random()), Bit::from_bool(r.random()))
}
