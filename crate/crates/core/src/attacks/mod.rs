//! Eavesdropping strategies as per-BEP guessers of which end holds the high
//! resistance (KLJN) or the closed switch (BR).

mod br;
mod kljn;
mod taps;

pub use br::{br_damping_attacks, br_energy_flow_attacks, br_wire_johnson_attack, ensure_steady, STEADY_TOLERANCE};
pub use kljn::{
    coupler_attack, coupler_outputs, current_injection_attack, transient_attack, wire_resistance_attack,
    CouplerSpec, TransientStatistic,
};
pub use taps::{damping_verdicts, energy_flow_verdicts, Tap, TapSet};

use std::collections::HashMap;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{domain, Error, Result};
use crate::noisegen::RngStream;
use crate::security::QEstimate;
use crate::Side;

/// Every attack the laboratory implements.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum AttackKind {
    CurrentDirection,
    PowerFlowSign,
    EnergyFlowSign,
    CurrentProfile,
    PowerProfile,
    EnergyProfile,
    DampingCorrelationSign,
    DampingCorrelationProfile,
    RmsCurrentProfile,
    WireJohnson,
    WireResistance,
    CurrentInjection,
    Coupler,
    Transient,
}

impl AttackKind {
    /// The six energy-flow attacks on BR.
    pub const ENERGY_FLOW: [AttackKind; 6] = [
        AttackKind::CurrentDirection,
        AttackKind::PowerFlowSign,
        AttackKind::EnergyFlowSign,
        AttackKind::CurrentProfile,
        AttackKind::PowerProfile,
        AttackKind::EnergyProfile,
    ];
    /// The three attacks on the damped BR variant.
    pub const DAMPING: [AttackKind; 3] = [
        AttackKind::DampingCorrelationSign,
        AttackKind::DampingCorrelationProfile,
        AttackKind::RmsCurrentProfile,
    ];

    pub fn name(self) -> &'static str {
        match self {
            AttackKind::CurrentDirection => "current_direction",
            AttackKind::PowerFlowSign => "power_flow_sign",
            AttackKind::EnergyFlowSign => "energy_flow_sign",
            AttackKind::CurrentProfile => "current_profile",
            AttackKind::PowerProfile => "power_profile",
            AttackKind::EnergyProfile => "energy_profile",
            AttackKind::DampingCorrelationSign => "damping_correlation_sign",
            AttackKind::DampingCorrelationProfile => "damping_correlation_profile",
            AttackKind::RmsCurrentProfile => "rms_current_profile",
            AttackKind::WireJohnson => "wire_johnson",
            AttackKind::WireResistance => "wire_resistance",
            AttackKind::CurrentInjection => "current_injection",
            AttackKind::Coupler => "coupler",
            AttackKind::Transient => "transient",
        }
    }

    fn coin_source(self) -> u64 {
        100 + self as u64
    }
}

/// Eve's guess for one kept BEP.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct AttackVerdict {
    pub bep_index: u64,
    pub kind: AttackKind,
    /// End Eve believes holds the high resistance (KLJN) or the closed switch (BR).
    pub guess: Side,
    /// 0 for a forced coin, otherwise in (0, 1].
    pub confidence: f64,
    pub statistic: f64,
    pub forced: bool,
}

impl AttackVerdict {
    /// Guess `positive` when `statistic > 0`, the other side when negative,
    /// and a fair coin when it is exactly zero or not finite.
    pub fn from_sign(
        kind: AttackKind,
        bep_index: u64,
        statistic: f64,
        confidence: f64,
        positive: Side,
        rng: RngStream,
    ) -> Self {
        if statistic == 0.0 || !statistic.is_finite() {
            let heads: bool = rng.with_source(kind.coin_source()).rng().random();
            let guess = if heads { Side::Alice } else { Side::Bob };
            return AttackVerdict { bep_index, kind, guess, confidence: 0.0, statistic, forced: true };
        }
        let guess = if statistic > 0.0 { positive } else { positive.other() };
        AttackVerdict { bep_index, kind, guess, confidence, statistic, forced: false }
    }

    /// Compare two magnitudes; the larger picks `larger_side`.
    pub fn from_contrast(kind: AttackKind, bep_index: u64, a: f64, b: f64, larger_side: Side, rng: RngStream) -> Self {
        let diff = a - b;
        let scale = a.abs() + b.abs();
        let conf = if scale > 0.0 { (diff.abs() / scale).min(1.0) } else { 0.0 };
        Self::from_sign(kind, bep_index, diff, conf, larger_side, rng)
    }

    /// Same verdict with the roles of Alice and Bob exchanged.
    pub fn mirrored(&self) -> Self {
        AttackVerdict { guess: self.guess.other(), ..*self }
    }
}

/// Score verdicts against ground truth `(bep_index, side)` pairs.
pub fn score_attack(verdicts: &[AttackVerdict], truth: &[(u64, Side)]) -> Result<QEstimate> {
    if verdicts.is_empty() {
        return domain("no verdicts to score");
    }
    let map: HashMap<u64, Side> = truth.iter().copied().collect();
    let mut hits = 0u64;
    for v in verdicts {
        let t = map
            .get(&v.bep_index)
            .ok_or_else(|| Error::TraceMismatch(format!("no ground truth for BEP {}", v.bep_index)))?;
        if *t == v.guess {
            hits += 1;
        }
    }
    QEstimate::from_counts(hits, verdicts.len() as u64)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn v(i: u64, g: Side) -> AttackVerdict {
        AttackVerdict { bep_index: i, kind: AttackKind::Coupler, guess: g, confidence: 1.0, statistic: 1.0, forced: false }
    }

    #[test]
    fn all_correct() {
        let verdicts: Vec<_> = (0..200).map(|i| v(i, Side::Alice)).collect();
        let truth: Vec<_> = (0..200).map(|i| (i, Side::Alice)).collect();
        let q = score_attack(&verdicts, &truth).unwrap();
        assert_eq!(q.p_hat, 1.0);
        assert!(!q.contains_null());
    }

    #[test]
    fn fifty_five_of_hundred() {
        let verdicts: Vec<_> = (0..100).map(|i| v(i, if i < 55 { Side::Alice } else { Side::Bob })).collect();
        let truth: Vec<_> = (0..100).map(|i| (i, Side::Alice)).collect();
        let q = score_attack(&verdicts, &truth).unwrap();
        assert!((q.q_hat - 0.05).abs() < 1e-12);
        assert!((q.half_width() - 0.1).abs() < 0.01);
        assert!(q.contains_null());
    }

    #[test]
    fn coin_flips_are_fair() {
        let n = 10_000u64;
        let verdicts: Vec<_> = (0..n)
            .map(|i| AttackVerdict::from_sign(AttackKind::WireJohnson, i, 0.0, 1.0, Side::Alice, RngStream::new(4, i, 0)))
            .collect();
        assert!(verdicts.iter().all(|v| v.forced && v.confidence == 0.0));
        let truth: Vec<_> = (0..n).map(|i| (i, Side::Alice)).collect();
        let q = score_attack(&verdicts, &truth).unwrap();
        assert!(q.q_hat.abs() < 0.013 + 1e-9 || q.contains_null());
        assert!(q.half_width() < 0.0101);
    }

    #[test]
    fn errors() {
        assert!(score_attack(&[], &[]).is_err());
        assert!(score_attack(&[v(3, Side::Bob)], &[(1, Side::Bob)]).is_err());
    }

    #[test]
    fn contrast_picks_larger() {
        let r = RngStream::new(0, 0, 0);
        let a = AttackVerdict::from_contrast(AttackKind::CurrentProfile, 0, 2.0, 1.0, Side::Alice, r);
        assert_eq!(a.guess, Side::Alice);
        let b = AttackVerdict::from_contrast(AttackKind::CurrentProfile, 0, 1.0, 2.0, Side::Alice, r);
        assert_eq!(b.guess, Side::Bob);
        assert!((a.confidence - 1.0 / 3.0).abs() < 1e-12);
    }
}
