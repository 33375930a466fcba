use super::taps::{damping_verdicts, energy_flow_verdicts, TapSet};
use super::{AttackKind, AttackVerdict};
use crate::circuits::LineHistory;
use crate::error::{domain, Error, Result};
use crate::noisegen::{band_average, RngStream};
use crate::Side;

/// Largest accepted relative change of the line's mean-square voltage
/// between the two halves of an observation window.
pub const STEADY_TOLERANCE: f64 = 1e-3;

/// Error unless the line's mean-square node voltage is the same, within
/// `tolerance`, over both halves of `history`.
pub fn ensure_steady(history: &LineHistory, tolerance: f64) -> Result<()> {
    let n = history.len();
    if n < 4 {
        return Err(Error::TooShort { needed: 4, have: n });
    }
    let level = |states: &[crate::circuits::LineState]| -> f64 {
        let total: f64 = states
            .iter()
            .map(|s| s.node_voltages.iter().map(|v| v * v).sum::<f64>() / s.node_voltages.len() as f64)
            .sum();
        total / states.len() as f64
    };
    let (a, b) = (level(&history.states[..n / 2]), level(&history.states[n / 2..]));
    let scale = a.max(b);
    let drift = if scale > 0.0 { (a - b).abs() / scale } else { 0.0 };
    if drift > tolerance {
        return Err(Error::NotSteady { drift, tolerance });
    }
    Ok(())
}

fn check_len(history: &LineHistory) -> Result<()> {
    if history.len() < 3 {
        return Err(Error::TooShort { needed: 3, have: history.len() });
    }
    Ok(())
}

/// Six energy-flow attacks on the charge-up part of a BR BEP.
pub fn br_energy_flow_attacks(history: &LineHistory, bep_index: u64, rng: RngStream) -> Result<[AttackVerdict; 6]> {
    check_len(history)?;
    Ok(energy_flow_verdicts(&TapSet::from_history(history), bep_index, rng))
}

/// Three fluctuation attacks on a damped BR line in steady state.
pub fn br_damping_attacks(history: &LineHistory, bep_index: u64, rng: RngStream) -> Result<[AttackVerdict; 3]> {
    check_len(history)?;
    ensure_steady(history, STEADY_TOLERANCE)?;
    Ok(damping_verdicts(&TapSet::from_history(history), bep_index, rng))
}

/// Compare the wire's Johnson noise seen at each end within `band`; the
/// end with the larger spectral density is open, so the other is closed.
pub fn br_wire_johnson_attack(
    psd_a: &[(f64, f64)],
    psd_b: &[(f64, f64)],
    band: (f64, f64),
    bep_index: u64,
    rng: RngStream,
) -> Result<AttackVerdict> {
    if !(band.1 > band.0 && band.0 >= 0.0) {
        return domain("empty frequency band");
    }
    let inside = |psd: &[(f64, f64)]| psd.iter().any(|(f, _)| *f > band.0 && *f < band.1);
    if !inside(psd_a) || !inside(psd_b) {
        return domain("no PSD bins inside the band");
    }
    let a = band_average(psd_a, band.0, band.1);
    let b = band_average(psd_b, band.0, band.1);
    Ok(AttackVerdict::from_contrast(AttackKind::WireJohnson, bep_index, a, b, Side::Bob, rng))
}
