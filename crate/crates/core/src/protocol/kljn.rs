use serde::{Deserialize, Serialize};

use super::{draw_bits, source};
use crate::circuits::{
    analytic_levels, inject_current, solve_loop_with_wire, Bit, ChannelTrace, LevelTable, LoopConfig,
};
use crate::error::{domain, Result};
use crate::noisegen::{
    effective_sample_count, generate_noise, johnson_spectral_density, unit_band_limited, NoiseSpec,
    RngStream, SampleTrace,
};
use crate::stats;

/// Which of the three mean-square levels a BEP was classified to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Classification {
    LlLevel,
    MidLevel,
    HhLevel,
    Abort,
}

impl Classification {
    fn from_index(i: usize) -> Self {
        [Classification::LlLevel, Classification::MidLevel, Classification::HhLevel][i]
    }
}

/// Ground-truth level class of a bit pair.
pub fn true_class(alice: Bit, bob: Bit) -> Classification {
    match (alice, bob) {
        (Bit::L, Bit::L) => Classification::LlLevel,
        (Bit::H, Bit::H) => Classification::HhLevel,
        _ => Classification::MidLevel,
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TransientMode {
    None,
    RandomWalk,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DefenseConfig {
    /// Amplitude resolution of the end-to-end current comparison.
    pub comparison_resolution_bits: u32,
    /// Optional cap on the normalized leak statistic.
    pub leak_cap: Option<f64>,
    pub transient_mode: TransientMode,
}

impl Default for DefenseConfig {
    fn default() -> Self {
        DefenseConfig { comparison_resolution_bits: 14, leak_cap: None, transient_mode: TransientMode::None }
    }
}

impl DefenseConfig {
    pub fn validate(&self) -> Result<()> {
        if self.comparison_resolution_bits < 1 {
            return domain("comparison resolution must be >= 1 bit");
        }
        Ok(())
    }

    /// Comparison threshold relative to the channel RMS current.
    pub fn threshold(&self) -> f64 {
        2f64.powi(-(self.comparison_resolution_bits as i32))
    }
}

/// Outcome of one bit-exchange period.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BepRecord {
    pub index: u64,
    pub alice_bit: Bit,
    pub bob_bit: Bit,
    pub classification: Classification,
    pub kept: bool,
    pub alice_inferred_bob: Option<Bit>,
    pub bob_inferred_alice: Option<Bit>,
    pub error: bool,
    /// Set when the end-to-end comparison defense discarded the BEP.
    pub defense_discard: bool,
    /// Raw wire-resistance discriminator `<U_A²> - <U_B²>`.
    pub leak_raw: f64,
    /// `leak_raw` normalized by its session standard deviation.
    pub leak_statistic: f64,
    pub ms_u: f64,
    pub ms_i: f64,
}

impl BepRecord {
    /// Record with inferences filled from a classification.
    pub fn new(index: u64, alice: Bit, bob: Bit, classification: Classification) -> Self {
        let mut r = BepRecord {
            index,
            alice_bit: alice,
            bob_bit: bob,
            classification,
            kept: false,
            alice_inferred_bob: None,
            bob_inferred_alice: None,
            error: false,
            defense_discard: false,
            leak_raw: 0.0,
            leak_statistic: 0.0,
            ms_u: 0.0,
            ms_i: 0.0,
        };
        r.set_kept(classification == Classification::MidLevel);
        r
    }

    /// Keep or discard; kept records infer the complement of their own bit.
    pub fn set_kept(&mut self, kept: bool) {
        self.kept = kept;
        if kept {
            self.alice_inferred_bob = Some(self.alice_bit.flip());
            self.bob_inferred_alice = Some(self.bob_bit.flip());
        } else {
            self.alice_inferred_bob = None;
            self.bob_inferred_alice = None;
        }
        self.error = self.alice_inferred_bob.is_some_and(|b| b != self.bob_bit)
            || self.bob_inferred_alice.is_some_and(|a| a != self.alice_bit);
    }
}

/// Nearest level in log domain; exact ties go to the lower class.
fn nearest(x: f64, levels: [f64; 3]) -> usize {
    let lx = x.ln();
    let mut best = 0;
    let mut best_d = f64::INFINITY;
    for (j, l) in levels.iter().enumerate() {
        let d = (lx - l.ln()).abs();
        if d < best_d - 1e-12 {
            best = j;
            best_d = d;
        }
    }
    best
}

/// Vote on the level class from measured mean squares. Voltage and current
/// vote independently; disagreement aborts the BEP.
pub fn classify_levels(ms_u: f64, ms_i: f64, table: &LevelTable) -> Classification {
    if !(ms_u > 0.0 && ms_i > 0.0) || !ms_u.is_finite() || !ms_i.is_finite() {
        return Classification::Abort;
    }
    let u = nearest(ms_u, table.u_levels());
    let i = nearest(ms_i, table.i_levels());
    if u == i {
        Classification::from_index(u)
    } else {
        Classification::Abort
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DefenseVerdict {
    Pass,
    Discard,
}

/// Compare instantaneous end currents; discard when they differ by more than
/// the comparison resolution relative to the channel RMS current.
pub fn endpoint_comparison_defense(trace: &ChannelTrace, defense: &DefenseConfig) -> DefenseVerdict {
    let scale = trace.i_end_a.mean_square().sqrt();
    let limit = defense.threshold() * scale;
    let worst = trace
        .i_end_a
        .samples
        .iter()
        .zip(&trace.i_end_b.samples)
        .map(|(a, b)| (a - b).abs())
        .fold(0.0, f64::max);
    if worst > limit {
        DefenseVerdict::Discard
    } else {
        DefenseVerdict::Pass
    }
}

/// Fill `leak_statistic` from `leak_raw` using the session standard deviation.
pub fn normalize_leak_statistics(records: &mut [BepRecord]) {
    let raw: Vec<f64> = records.iter().map(|r| r.leak_raw).collect();
    let sd = stats::variance(&raw).sqrt();
    for r in records {
        r.leak_statistic = if sd > 0.0 { r.leak_raw / sd } else { 0.0 };
    }
}

/// Drop records whose normalized leak statistic is not strictly below `cap`.
pub fn leak_cap_filter(records: &[BepRecord], cap: f64) -> Vec<BepRecord> {
    records.iter().filter(|r| r.leak_statistic.abs() < cap).cloned().collect()
}

/// Everything produced by one KLJN BEP, including simulator-internal
/// quantities that attack models may need.
#[derive(Debug, Clone)]
pub struct KljnBep {
    pub record: BepRecord,
    pub trace: ChannelTrace,
    /// Eve's injected current, when an injection attack ran.
    pub injected: Option<SampleTrace>,
    /// Contributions of Alice's and Bob's generators to `U_c`.
    pub contribution_a: SampleTrace,
    pub contribution_b: SampleTrace,
}

/// One KLJN BEP with uniformly drawn bits.
pub fn run_kljn_bep(
    config: &LoopConfig,
    tau: f64,
    defense: &DefenseConfig,
    injection_sigma: Option<f64>,
    index: u64,
    rng: RngStream,
) -> Result<KljnBep> {
    let (a, b) = draw_bits(rng);
    let cfg = LoopConfig { alice: a, bob: b, ..*config };
    run_kljn_bep_with_bits(&cfg, tau, defense, injection_sigma, index, rng)
}

/// One KLJN BEP with the bits already set in `config`.
pub fn run_kljn_bep_with_bits(
    config: &LoopConfig,
    tau: f64,
    defense: &DefenseConfig,
    injection_sigma: Option<f64>,
    index: u64,
    rng: RngStream,
) -> Result<KljnBep> {
    config.validate()?;
    defense.validate()?;
    if effective_sample_count(config.bandwidth, tau) < 4.0 {
        return domain("BEP too short: need 2 Δf τ >= 4");
    }
    let (r_a, r_b) = (config.r_a(), config.r_b());
    let spec = |r: f64, t: f64| -> Result<NoiseSpec> {
        Ok(NoiseSpec::new(johnson_spectral_density(t, r)?, config.bandwidth, tau))
    };
    let u_a = generate_noise(&spec(r_a, config.t_eff)?, rng.with_source(source::ALICE))?;
    let u_b = generate_noise(&spec(r_b, config.t_eff)?, rng.with_source(source::BOB))?;
    let wire = if config.r_wire > 0.0 && config.t_wire > 0.0 {
        Some(generate_noise(&spec(config.r_wire, config.t_wire)?, rng.with_source(source::WIRE))?)
    } else {
        None
    };
    let mut trace = solve_loop_with_wire(&u_a, &u_b, r_a, r_b, config.r_wire, wire.as_ref())?;
    let total = r_a + r_b;
    let contribution_a = u_a.scaled(r_b / total);
    let contribution_b = u_b.scaled(r_a / total);

    let mut injected = None;
    if let Some(sigma) = injection_sigma {
        if !(0.0..1.0).contains(&sigma) {
            return domain(format!("injection ratio sigma = {sigma} outside [0, 1)"));
        }
        let unit = unit_band_limited(
            trace.len(),
            trace.u_c.sample_rate(),
            config.bandwidth,
            rng.with_source(source::EVE),
        );
        let scale = sigma * trace.i_c.mean_square().sqrt() / stats::mean_square(&unit).sqrt().max(1e-300);
        let i_e = SampleTrace::new(unit.iter().map(|v| v * scale).collect(), trace.dt());
        trace = inject_current(&trace, &i_e, r_a, r_b)?;
        injected = Some(i_e);
    }

    let table = analytic_levels(config.r_l, config.r_h, config.t_eff, config.bandwidth)?;
    let ms_u = trace.u_end_a.mean_square();
    let ms_i = trace.i_end_a.mean_square();
    let class = classify_levels(ms_u, ms_i, &table);
    let mut record = BepRecord::new(index, config.alice, config.bob, class);
    record.ms_u = ms_u;
    record.ms_i = ms_i;
    record.leak_raw = trace.u_end_a.mean_square() - trace.u_end_b.mean_square();
    if record.kept && endpoint_comparison_defense(&trace, defense) == DefenseVerdict::Discard {
        record.defense_discard = true;
        record.set_kept(false);
    }
    Ok(KljnBep { record, trace, injected, contribution_a, contribution_b })
}
