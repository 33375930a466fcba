use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kljn::{true_class, BepRecord, Classification};
use super::{draw_bits, source};
use crate::circuits::{Bit, Drive, LineHistory, LineModel, LineSim, Termination};
use crate::error::{domain, Result};
use crate::noisegen::{generate_noise, johnson_spectral_density, NoiseSpec, RngStream, SampleTrace, BOLTZMANN};

/// Switch positions of a BR party.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum SwitchPosition {
    /// Battery connected.
    H,
    /// End left open.
    L,
    /// Idle: end grounded.
    I,
}

impl From<Bit> for SwitchPosition {
    fn from(b: Bit) -> Self {
        match b {
            Bit::H => SwitchPosition::H,
            Bit::L => SwitchPosition::L,
        }
    }
}

/// Physical variant of the BR line.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum BrVariant {
    /// Lossless line, ideal batteries.
    Ideal,
    /// Batteries behind noisy damping resistors; the Johnson noise of each is
    /// band-limited to `noise_bandwidth`.
    Damped { r_d: f64, noise_bandwidth: f64 },
    /// Resistive (RC) line whose series resistance carries Johnson noise at
    /// the line's `damping_temperature`.
    WireJohnson,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BrConfig {
    /// Line geometry; its terminations are set by the switches.
    pub line: LineModel,
    pub variant: BrVariant,
    /// Battery voltage (V).
    pub u0: f64,
    /// Duration of each half of the BEP (s).
    pub half_bep: f64,
    /// Smooth battery ramp at the start and end of the BEP (s).
    pub ramp_time: f64,
    /// Wait after the ramp before the steady window starts (s).
    pub settle_time: f64,
    /// Grounded idle time before the BEP (s).
    pub idle_time: f64,
    /// Approximate number of recorded states per half.
    pub history_points: usize,
}

impl BrConfig {
    /// 1 km, 50 Ω lossless line with a 10 µs round trip.
    pub fn ideal() -> Self {
        let line = LineModel::uniform(1000.0, 0.0, 250e-9, 100e-12, 16);
        let rt = line.round_trip_time();
        BrConfig {
            line,
            variant: BrVariant::Ideal,
            u0: 1.0,
            half_bep: 30.0 * rt,
            ramp_time: 10.0 * rt,
            settle_time: 0.0,
            idle_time: 2.0 * rt,
            history_points: 1200,
        }
    }

    /// Same line with matched damping resistors at 300 K.
    pub fn damped() -> Self {
        let mut c = BrConfig::ideal();
        let rt = c.line.round_trip_time();
        let z0 = c.line.wave_impedance().unwrap_or(50.0);
        c.line.damping_temperature = 300.0;
        c.variant = BrVariant::Damped { r_d: z0, noise_bandwidth: 1.0 / rt / 20.0 };
        c.settle_time = 10.0 * rt;
        c.half_bep = 40.0 * rt;
        c
    }

    /// 100 m resistive line, 50 Ω total, at 300 K.
    pub fn wire_johnson() -> Self {
        let mut line = LineModel::uniform(100.0, 0.5, 0.0, 100e-12, 8);
        line.damping_temperature = 300.0;
        let rc = line.round_trip_time();
        let dt = line.recommended_dt();
        BrConfig {
            line,
            variant: BrVariant::WireJohnson,
            u0: 1.0,
            half_bep: 10.0 * rc + 16384.0 * dt,
            ramp_time: 2.0 * rc,
            settle_time: 8.0 * rc,
            idle_time: 0.5 * rc,
            history_points: 1200,
        }
    }

    pub fn validate(&self) -> Result<()> {
        self.line.validate()?;
        if !(self.u0 > 0.0) {
            return domain("battery voltage must be positive");
        }
        if !(self.ramp_time >= 0.0 && self.settle_time >= 0.0 && self.idle_time >= 0.0) {
            return domain("BR times must be non-negative");
        }
        if !(self.half_bep > self.ramp_time + self.settle_time) {
            return domain("half BEP must exceed ramp plus settle time");
        }
        match self.variant {
            BrVariant::Ideal => {}
            BrVariant::Damped { r_d, noise_bandwidth } => {
                if !(r_d > 0.0 && noise_bandwidth > 0.0) {
                    return domain("damping resistance and noise bandwidth must be positive");
                }
            }
            BrVariant::WireJohnson => {
                if self.line.r_seg <= 0.0 {
                    return domain("wire Johnson variant needs series resistance");
                }
            }
        }
        if self.history_points == 0 {
            return domain("history_points must be positive");
        }
        Ok(())
    }

    /// Total line capacitance.
    pub fn capacitance(&self) -> f64 {
        self.line.n_segments as f64 * self.line.c_seg
    }
}

/// Termination a switch position produces.
pub fn switch_termination(pos: SwitchPosition, variant: &BrVariant, u0: f64) -> Termination {
    match (pos, variant) {
        (SwitchPosition::I, _) => Termination::Grounded,
        (SwitchPosition::L, _) => Termination::Open,
        (SwitchPosition::H, BrVariant::Damped { r_d, .. }) => Termination::BatteryDamped { u0, r_d: *r_d },
        (SwitchPosition::H, _) => Termination::Battery { u0 },
    }
}

/// One BR bit-exchange period.
#[derive(Debug, Clone)]
pub struct BrBep {
    pub record: BepRecord,
    /// Decimated states over idle and both halves.
    pub history: LineHistory,
    /// History indices of the first half.
    pub charge_window: Range<usize>,
    /// History indices of the steady part of the first half.
    pub steady_window: Range<usize>,
    /// Full-rate end node voltages over the steady window.
    pub end_voltages: (SampleTrace, SampleTrace),
    /// Charge delivered through each termination during the first half.
    pub charge_a: f64,
    pub charge_b: f64,
}

/// Infinitely smooth 0 → 1 step on `[0, 1]`; its spectrum falls faster than
/// any power, so it does not excite the ladder's cutoff modes.
fn smooth_ramp(x: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let a = (-1.0 / x).exp();
    let b = (-1.0 / (1.0 - x)).exp();
    a / (a + b)
}

/// Inference of the other party's first-half position from local
/// observations: a connected battery measures the charge it delivered, an
/// open end reads the line voltage.
fn infer_other(own: Bit, charge: f64, end_voltage: f64, config: &BrConfig) -> Bit {
    match own {
        Bit::H => Bit::from_bool(charge < 0.75 * config.capacitance() * config.u0),
        Bit::L => Bit::from_bool(end_voltage > 0.5 * config.u0),
    }
}

/// Run one BR BEP with uniformly drawn bits.
pub fn run_br_bep(config: &BrConfig, index: u64, rng: RngStream) -> Result<BrBep> {
    let (a, b) = draw_bits(rng);
    run_br_bep_with_bits(config, a, b, index, rng)
}

/// Run one BR BEP: grounded idle, first half with the chosen positions, the
/// mid-BEP flip, second half, and a ramp down at the end.
pub fn run_br_bep_with_bits(config: &BrConfig, alice: Bit, bob: Bit, index: u64, rng: RngStream) -> Result<BrBep> {
    config.validate()?;
    let mut model = config.line.clone();
    model.end_a = Termination::Grounded;
    model.end_b = Termination::Grounded;
    let dt = model.recommended_dt();
    let n = model.n_segments;
    let idle = (config.idle_time / dt).round() as usize;
    let half = (config.half_bep / dt).round() as usize;
    let ramp = (config.ramp_time / dt).round() as usize;
    let steady_start = ((config.ramp_time + config.settle_time) / dt).round() as usize;
    let total = idle + 2 * half;
    let every = (half / config.history_points).max(1);
    let mut sim = LineSim::new(model, dt)?;

    let damping_noise = |src: u64| -> Result<Vec<f64>> {
        match config.variant {
            BrVariant::Damped { r_d, noise_bandwidth } if config.line.damping_temperature > 0.0 => {
                let s = johnson_spectral_density(config.line.damping_temperature, r_d)?;
                let spec = NoiseSpec { spectral_density: s, bandwidth: noise_bandwidth, sample_rate: 1.0 / dt, duration: (total + 1) as f64 * dt };
                Ok(generate_noise(&spec, rng.with_source(src))?.samples)
            }
            _ => Ok(Vec::new()),
        }
    };
    let noise_a = damping_noise(source::DAMP_A)?;
    let noise_b = damping_noise(source::DAMP_B)?;
    let branch_sd = match config.variant {
        BrVariant::WireJohnson => (4.0 * BOLTZMANN * config.line.damping_temperature * config.line.r_seg / (2.0 * dt)).sqrt(),
        _ => 0.0,
    };
    let mut branch_rng = rng.with_source(source::BRANCH).rng();

    let positions = |step: usize| -> (SwitchPosition, SwitchPosition) {
        // Step k covers (t_{k-1}, t_k].
        if step <= idle {
            (SwitchPosition::I, SwitchPosition::I)
        } else if step <= idle + half {
            (alice.into(), bob.into())
        } else {
            (alice.flip().into(), bob.flip().into())
        }
    };
    let envelope = |step: usize| -> f64 {
        if step < idle {
            return 0.0;
        }
        let k = step - idle;
        let up = if ramp == 0 { 1.0 } else { smooth_ramp(k as f64 / ramp as f64) };
        let down = if ramp == 0 { 1.0 } else { smooth_ramp((2 * half - k) as f64 / ramp as f64) };
        up.min(down)
    };
    let drive_at = |step: usize, rng: &mut rand_chacha::ChaCha8Rng| -> Drive {
        let e = envelope(step);
        let branch_emf = if branch_sd > 0.0 {
            (0..n)
                .map(|_| {
                    let z: f64 = StandardNormal.sample(rng);
                    branch_sd * z
                })
                .collect()
        } else {
            Vec::new()
        };
        Drive {
            scale_a: e,
            scale_b: e,
            emf_a: noise_a.get(step).copied().unwrap_or(0.0),
            emf_b: noise_b.get(step).copied().unwrap_or(0.0),
            branch_emf,
        }
    };

    let initial = drive_at(0, &mut branch_rng);
    let state = sim.state.clone();
    sim = sim.with_state(state, initial);
    let mut history = LineHistory::new(every as f64 * dt);
    history.states.push(sim.state.clone());
    let (mut charge_a, mut charge_b) = (0.0, 0.0);
    let mut end_a = Vec::with_capacity(half.saturating_sub(steady_start));
    let mut end_b = Vec::with_capacity(half.saturating_sub(steady_start));
    let mut v_open = (0.0, 0.0);
    let c_end = 0.5 * config.line.c_seg;
    for step in 1..=total {
        let (pa, pb) = positions(step);
        let (ta, tb) = (
            switch_termination(pa, &config.variant, config.u0),
            switch_termination(pb, &config.variant, config.u0),
        );
        if (ta, tb) != (sim.model.end_a, sim.model.end_b) {
            sim.set_terminations(ta, tb);
        }
        let (i0, in1) = (sim.state.branch_currents[0], sim.state.branch_currents[n - 1]);
        sim.step(drive_at(step, &mut branch_rng))?;
        if step > idle && step <= idle + half {
            charge_a += 0.5 * dt * (i0 + sim.state.branch_currents[0]);
            charge_b -= 0.5 * dt * (in1 + sim.state.branch_currents[n - 1]);
            if step - idle >= steady_start {
                end_a.push(sim.state.node_voltages[0]);
                end_b.push(sim.state.node_voltages[n]);
            }
            if step == idle + half {
                v_open = (sim.state.node_voltages[0], sim.state.node_voltages[n]);
                charge_a += c_end * v_open.0;
                charge_b += c_end * v_open.1;
            }
        }
        if step % every == 0 {
            history.states.push(sim.state.clone());
        }
    }
    // History entry k holds the state after step k * every.
    let end = (idle + half) / every + 1;
    let charge_window = idle.div_ceil(every)..end;
    let steady_window = (idle + steady_start).div_ceil(every)..end;

    let inferred_bob = infer_other(alice, charge_a, v_open.0, config);
    let inferred_alice = infer_other(bob, charge_b, v_open.1, config);
    let class_a = true_class(alice, inferred_bob);
    let class_b = true_class(inferred_alice, bob);
    let class = if class_a == class_b { class_a } else { Classification::Abort };
    let mut record = BepRecord::new(index, alice, bob, class);
    if class == Classification::MidLevel {
        record.alice_inferred_bob = Some(inferred_bob);
        record.bob_inferred_alice = Some(inferred_alice);
        record.error = inferred_bob != bob || inferred_alice != alice;
    }
    Ok(BrBep {
        record,
        history,
        charge_window,
        steady_window,
        end_voltages: (SampleTrace::new(end_a, dt), SampleTrace::new(end_b, dt)),
        charge_a,
        charge_b,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn terminations() {
        let v = BrVariant::Ideal;
        assert_eq!(switch_termination(SwitchPosition::I, &v, 1.0), Termination::Grounded);
        assert_eq!(switch_termination(SwitchPosition::L, &v, 1.0), Termination::Open);
        assert_eq!(switch_termination(SwitchPosition::H, &v, 2.0), Termination::Battery { u0: 2.0 });
        let d = BrVariant::Damped { r_d: 50.0, noise_bandwidth: 1e3 };
        assert_eq!(
            switch_termination(SwitchPosition::H, &d, 1.0),
            Termination::BatteryDamped { u0: 1.0, r_d: 50.0 }
        );
    }

    #[test]
    fn complementary_bep_kept_and_correct() {
        let c = BrConfig::ideal();
        let bep = run_br_bep_with_bits(&c, Bit::H, Bit::L, 0, RngStream::new(1, 0, 0)).unwrap();
        assert!(bep.record.kept);
        assert!(!bep.record.error);
        let q = c.capacitance() * c.u0;
        assert!((bep.charge_a / q - 1.0).abs() < 0.05, "{}", bep.charge_a / q);
        assert!(bep.charge_b.abs() < 1e-9 * q, "{}", bep.charge_b / q);
    }

    #[test]
    fn identical_beps_discarded() {
        let c = BrConfig::ideal();
        for (a, b) in [(Bit::L, Bit::L), (Bit::H, Bit::H)] {
            let bep = run_br_bep_with_bits(&c, a, b, 0, RngStream::new(1, 0, 0)).unwrap();
            assert!(!bep.record.kept, "{a:?}{b:?} {} {}", bep.charge_a, bep.charge_b);
            assert_eq!(bep.record.classification, true_class(a, b));
        }
    }

    #[test]
    fn floating_line_keeps_its_charge_after_hh_to_ll() {
        // After the flip both ends are open; a lossless line has no path to
        // discharge, so it stays near U0.
        let c = BrConfig::ideal();
        let bep = run_br_bep_with_bits(&c, Bit::H, Bit::H, 0, RngStream::new(1, 0, 0)).unwrap();
        let w = bep.charge_window.clone();
        let first = &bep.history.states[w.end - 1];
        let second = &bep.history.states[w.end + (w.end - w.start) / 2];
        let mean = |s: &crate::circuits::LineState| s.node_voltages.iter().sum::<f64>() / s.node_voltages.len() as f64;
        assert!((mean(first) - 1.0).abs() < 0.02);
        assert!((mean(second) - 1.0).abs() < 0.02);
    }

    #[test]
    fn windows_inside_history() {
        let c = BrConfig::ideal();
        let bep = run_br_bep_with_bits(&c, Bit::L, Bit::H, 0, RngStream::new(1, 0, 0)).unwrap();
        assert!(bep.charge_window.end <= bep.history.len());
        assert!(bep.steady_window.start >= bep.charge_window.start);
        assert!(bep.steady_window.end == bep.charge_window.end);
        let span = bep.charge_window.len() as f64 * bep.history.dt;
        assert!((span / c.half_bep - 1.0).abs() < 0.02, "{span}");
    }
}
