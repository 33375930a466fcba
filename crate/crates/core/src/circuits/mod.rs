//! Circuit solvers: the lumped KLJN loop and a distributed ladder line.

mod line;
mod lumped;

pub use line::{
    stored_energy, Drive, EnergyLedger, LineHistory, LineModel, LineSim, LineState, Termination,
    DEFAULT_DT_FRACTION,
};
pub use lumped::{
    analytic_levels, directional_powers, inject_current, quasi_static_margin, solve_ideal_loop,
    solve_loop_varying, solve_loop_with_wire, ChannelTrace, LevelTable, LoopConfig,
};

use serde::{Deserialize, Serialize};

/// A party's resistor (KLJN) or switch (BR) choice for one bit.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Bit {
    L,
    H,
}

impl Bit {
    pub fn flip(self) -> Bit {
        match self {
            Bit::L => Bit::H,
            Bit::H => Bit::L,
        }
    }

    pub fn from_bool(high: bool) -> Bit {
        if high {
            Bit::H
        } else {
            Bit::L
        }
    }

    pub fn as_u8(self) -> u8 {
        match self {
            Bit::L => 0,
            Bit::H => 1,
        }
    }
}
