//! Monte Carlo campaigns: one scenario run over many BEPs, optionally swept
//! over one parameter.
//!
//! Every BEP owns the stream `(seed, index)`, so the order in which rayon
//! finishes trials never reaches the output; results are collected by index.

use std::collections::BTreeMap;

use kljn_core::attacks::{
    br_damping_attacks, br_energy_flow_attacks, br_wire_johnson_attack, coupler_attack, current_injection_attack,
    damping_verdicts, energy_flow_verdicts, score_attack, transient_attack, wire_resistance_attack, AttackKind,
    AttackVerdict, TapSet, TransientStatistic,
};
use kljn_core::circuits::{Bit, LoopConfig};
use kljn_core::noisegen::{estimate_psd, RngStream, SampleTrace};
use kljn_core::protocol::{
    draw_bits, normalize_leak_statistics, run_abrupt_bep, run_br_bep_with_bits, run_kljn_bep_with_bits,
    run_random_walk_bep, BepRecord, Classification, TransientMode,
};
use kljn_core::security::{fit_scaling, pa_advantage_map, security_report, wilson_interval, QEstimate, ScalingFit, Z95};
use kljn_core::stats::linear_fit;
use kljn_core::Side;
use rayon::prelude::*;
use serde::Serialize;

use crate::config::{ExperimentConfig, Scenario, SweepParameter};
use crate::error::{CliError, CliResult};

/// Outcome of one BEP.
#[derive(Debug, Clone)]
pub struct BepOutcome {
    pub record: BepRecord,
    /// Whether Eve's verdicts on this BEP count toward `q`.
    pub scored: bool,
    /// End holding the high resistance (KLJN) or the closed switch (BR).
    pub truth: Side,
    pub verdicts: Vec<AttackVerdict>,
}

#[derive(Debug, Clone, Serialize)]
pub struct AttackSummary {
    pub estimate: QEstimate,
    pub forced: u64,
}

#[derive(Debug, Clone, Serialize)]
pub struct PointSummary {
    pub value: Option<f64>,
    pub beps: u64,
    pub kept: u64,
    pub kept_fraction: f64,
    pub kept_ci: (f64, f64),
    pub aborted: u64,
    pub mid_classified: u64,
    pub defense_discarded: u64,
    pub defense_discard_fraction: f64,
    pub leak_capped: u64,
    pub scored: u64,
    pub bit_errors: u64,
    pub ber: f64,
    pub attacks: BTreeMap<String, AttackSummary>,
}

impl PointSummary {
    pub fn attack(&self, kind: AttackKind) -> Option<&QEstimate> {
        self.attacks.get(kind.name()).map(|a| &a.estimate)
    }
}

#[derive(Debug, Clone)]
pub struct PointResult {
    pub value: Option<f64>,
    pub outcomes: Vec<BepOutcome>,
    pub summary: PointSummary,
}

#[derive(Debug, Clone, Serialize)]
pub struct ScalingReport {
    pub attack: String,
    pub fit: ScalingFit,
    pub monotone_increasing: bool,
}

#[derive(Debug, Clone, Serialize)]
pub struct BerFit {
    /// Slope of `ln(BER)` against the swept value.
    pub slope: f64,
    pub intercept: f64,
    pub r_squared: f64,
}

/// Key-level figures for one key length, with tiny values as decimal strings.
#[derive(Debug, Clone, Serialize)]
pub struct SecurityRow {
    pub q_source: String,
    pub q_raw: f64,
    pub pa_rounds: u32,
    pub q: f64,
    pub key_length: u64,
    pub delta_exact: String,
    pub delta_linear: String,
    pub log10_delta_exact: Option<f64>,
    pub log10_delta_linear: Option<f64>,
    pub linearization_warning: bool,
    pub epsilon: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone)]
pub struct Campaign {
    pub config: ExperimentConfig,
    pub parameter: Option<SweepParameter>,
    pub points: Vec<PointResult>,
    pub scaling: Option<ScalingReport>,
    pub ber_fit: Option<BerFit>,
    pub security: Vec<SecurityRow>,
}

fn high_side(alice: Bit) -> Side {
    if alice == Bit::H {
        Side::Alice
    } else {
        Side::Bob
    }
}

fn bits_for(cfg: &ExperimentConfig, rng: RngStream) -> (Bit, Bit) {
    let (a, b) = draw_bits(rng);
    if cfg.complementary_only {
        (a, a.flip())
    } else {
        (a, b)
    }
}

/// Largest power of two not above `len`, capped at `max`.
fn segment_for(len: usize, max: usize) -> usize {
    let mut seg = 1;
    while seg * 2 <= len && seg * 2 <= max {
        seg *= 2;
    }
    seg
}

fn wire_johnson_verdict(
    ends: (&SampleTrace, &SampleTrace),
    band: Option<(f64, f64)>,
    max_segment: usize,
    index: u64,
    rng: RngStream,
) -> CliResult<AttackVerdict> {
    let seg = segment_for(ends.0.len(), max_segment);
    let pa = estimate_psd(ends.0, seg)?;
    let pb = estimate_psd(ends.1, seg)?;
    let band = band.unwrap_or_else(|| {
        let f1 = pa[1].0;
        (0.5 * f1, 2.5 * f1)
    });
    Ok(br_wire_johnson_attack(&pa, &pb, band, index, rng)?)
}

/// Energy-flow and damping statistics on any tap set, in `selection` order.
fn tap_verdicts(taps: &TapSet, selection: &[AttackKind], index: u64, rng: RngStream) -> Vec<AttackVerdict> {
    let mut out = Vec::new();
    if selection.iter().any(|a| AttackKind::ENERGY_FLOW.contains(a)) {
        out.extend(energy_flow_verdicts(taps, index, rng).into_iter().filter(|v| selection.contains(&v.kind)));
    }
    if selection.iter().any(|a| AttackKind::DAMPING.contains(a)) {
        out.extend(damping_verdicts(taps, index, rng).into_iter().filter(|v| selection.contains(&v.kind)));
    }
    out
}

fn run_kljn(cfg: &ExperimentConfig, index: u64, rng: RngStream) -> CliResult<BepOutcome> {
    let (a, b) = bits_for(cfg, rng);
    let lc = LoopConfig { alice: a, bob: b, ..cfg.kljn.loop_config() };
    let sigma = (cfg.scenario == Scenario::KljnInjection).then_some(cfg.injection.sigma);
    let bep = run_kljn_bep_with_bits(&lc, cfg.kljn.tau, &cfg.defense.to_core(), sigma, index, rng)?;
    let mid = bep.record.classification == Classification::MidLevel;
    let mut verdicts = Vec::new();
    if mid {
        verdicts.extend(tap_verdicts(&TapSet::from_channel(&bep.trace), &cfg.attacks, index, rng));
        for &kind in &cfg.attacks {
            let v = match kind {
                AttackKind::WireJohnson => {
                    let band = Some((0.0, cfg.kljn.bandwidth));
                    wire_johnson_verdict((&bep.trace.u_end_a, &bep.trace.u_end_b), band, cfg.psd_segment, index, rng)?
                }
                AttackKind::WireResistance => wire_resistance_attack(&bep.trace, index, rng),
                AttackKind::CurrentInjection => {
                    let i_e = bep.injected.as_ref().ok_or_else(|| CliError::Numerical("missing injection".into()))?;
                    current_injection_attack(&bep.trace, i_e, index, rng)?
                }
                AttackKind::Coupler => {
                    coupler_attack(&bep.contribution_a, &bep.contribution_b, &bep.trace.u_c, &cfg.coupler, index, rng)?
                }
                _ => continue,
            };
            verdicts.push(v);
        }
    }
    Ok(BepOutcome { truth: high_side(a), scored: mid, record: bep.record, verdicts })
}

fn run_transient(cfg: &ExperimentConfig, index: u64, rng: RngStream) -> CliResult<BepOutcome> {
    let lc = cfg.kljn.loop_config();
    let bep = match cfg.defense.transient_mode {
        TransientMode::None => run_abrupt_bep(&lc, cfg.kljn.tau, index, rng)?,
        TransientMode::RandomWalk => run_random_walk_bep(&lc, &cfg.walk.to_core(&cfg.kljn), cfg.kljn.tau, index, rng)?,
    };
    let mid = bep.record.classification == Classification::MidLevel;
    let mut verdicts = Vec::new();
    if mid && cfg.attacks.contains(&AttackKind::Transient) {
        verdicts.push(transient_attack(&bep.trace, bep.eve_window.clone(), TransientStatistic::PowerFlow, index, rng)?);
    }
    Ok(BepOutcome { truth: high_side(bep.record.alice_bit), scored: mid, record: bep.record, verdicts })
}

fn run_br(cfg: &ExperimentConfig, index: u64, rng: RngStream) -> CliResult<BepOutcome> {
    let br = cfg.br.as_ref().ok_or_else(|| CliError::Config("BR scenario without [br] section".into()))?;
    let (a, b) = bits_for(cfg, rng);
    let bep = run_br_bep_with_bits(br, a, b, index, rng)?;
    let mid = bep.record.classification == Classification::MidLevel;
    let mut verdicts = Vec::new();
    if mid {
        let wanted = |set: &[AttackKind]| cfg.attacks.iter().any(|k| set.contains(k));
        if wanted(&AttackKind::ENERGY_FLOW) {
            let h = bep.history.slice(bep.charge_window.clone());
            verdicts.extend(br_energy_flow_attacks(&h, index, rng)?.into_iter().filter(|v| cfg.attacks.contains(&v.kind)));
        }
        if wanted(&AttackKind::DAMPING) {
            let h = bep.history.slice(bep.steady_window.clone());
            verdicts.extend(br_damping_attacks(&h, index, rng)?.into_iter().filter(|v| cfg.attacks.contains(&v.kind)));
        }
        if cfg.attacks.contains(&AttackKind::WireJohnson) {
            let (ua, ub) = &bep.end_voltages;
            verdicts.push(wire_johnson_verdict((ua, ub), None, cfg.psd_segment, index, rng)?);
        }
    }
    Ok(BepOutcome { truth: high_side(a), scored: mid, record: bep.record, verdicts })
}

/// Run one BEP of the configured scenario.
pub fn run_bep(cfg: &ExperimentConfig, index: u64) -> CliResult<BepOutcome> {
    let rng = RngStream::new(cfg.seed, index, 0);
    let out = match cfg.scenario {
        Scenario::KljnTransient => run_transient(cfg, index, rng)?,
        s if s.is_br() => run_br(cfg, index, rng)?,
        _ => run_kljn(cfg, index, rng)?,
    };
    let r = &out.record;
    if !(r.ms_u.is_finite() && r.ms_i.is_finite() && r.leak_raw.is_finite()) {
        return Err(CliError::Numerical(format!("non-finite observables in BEP {index}")));
    }
    Ok(out)
}

/// Run all BEPs of one configuration (no sweep) and summarize them.
pub fn run_point(cfg: &ExperimentConfig, value: Option<f64>) -> CliResult<PointResult> {
    let mut outcomes = (0..cfg.beps).into_par_iter().map(|i| run_bep(cfg, i)).collect::<CliResult<Vec<_>>>()?;
    let mut leak_capped = 0;
    if let (Some(cap), false) = (cfg.defense.leak_cap, cfg.scenario.is_br()) {
        let mut records: Vec<BepRecord> = outcomes.iter().map(|o| o.record.clone()).collect();
        normalize_leak_statistics(&mut records);
        for (o, r) in outcomes.iter_mut().zip(records) {
            o.record.leak_statistic = r.leak_statistic;
            if o.record.kept && r.leak_statistic.abs() >= cap {
                o.record.set_kept(false);
                o.record.defense_discard = true;
                o.scored = false;
                leak_capped += 1;
            }
        }
    }
    let summary = summarize(cfg, value, &outcomes, leak_capped)?;
    Ok(PointResult { value, outcomes, summary })
}

fn summarize(cfg: &ExperimentConfig, value: Option<f64>, outcomes: &[BepOutcome], leak_capped: u64) -> CliResult<PointSummary> {
    let beps = outcomes.len() as u64;
    let count = |f: &dyn Fn(&BepOutcome) -> bool| outcomes.iter().filter(|o| f(o)).count() as u64;
    let kept = count(&|o| o.record.kept);
    let aborted = count(&|o| o.record.classification == Classification::Abort);
    let mid_classified = count(&|o| o.record.classification == Classification::MidLevel);
    let defense_discarded = count(&|o| o.record.defense_discard) - leak_capped;
    let scored = count(&|o| o.scored);
    let bit_errors = count(&|o| o.record.kept && o.record.error);
    let (lo, hi) = wilson_interval(kept, beps, Z95);

    let truth: Vec<(u64, Side)> = outcomes.iter().filter(|o| o.scored).map(|o| (o.record.index, o.truth)).collect();
    let mut attacks = BTreeMap::new();
    for &kind in &cfg.attacks {
        let verdicts: Vec<AttackVerdict> = outcomes
            .iter()
            .filter(|o| o.scored)
            .flat_map(|o| o.verdicts.iter().filter(|v| v.kind == kind).copied())
            .collect();
        if verdicts.is_empty() {
            continue;
        }
        let estimate = score_attack(&verdicts, &truth)?;
        let forced = verdicts.iter().filter(|v| v.forced).count() as u64;
        attacks.insert(kind.name().to_string(), AttackSummary { estimate, forced });
    }
    Ok(PointSummary {
        value,
        beps,
        kept,
        kept_fraction: kept as f64 / beps as f64,
        kept_ci: (lo, hi),
        aborted,
        mid_classified,
        defense_discarded,
        defense_discard_fraction: if mid_classified > 0 { defense_discarded as f64 / mid_classified as f64 } else { 0.0 },
        leak_capped,
        scored,
        bit_errors,
        ber: if kept > 0 { bit_errors as f64 / kept as f64 } else { 0.0 },
        attacks,
    })
}

/// Security rows for every configured key length at advantage `q_raw`.
pub fn security_rows(q_source: &str, q_raw: f64, pa_rounds: u32, key_lengths: &[u64], epsilon: f64) -> CliResult<Vec<SecurityRow>> {
    let q = pa_advantage_map(q_raw, pa_rounds);
    key_lengths
        .iter()
        .map(|&n| {
            let r = security_report(q, n, epsilon)?;
            let log10 = |v: kljn_core::security::LogValue| (!v.is_zero()).then(|| v.log10());
            Ok(SecurityRow {
                q_source: q_source.to_string(),
                q_raw,
                pa_rounds,
                q,
                key_length: n,
                delta_exact: r.delta_exact.format_sci(3),
                delta_linear: r.delta_linear.format_sci(3),
                log10_delta_exact: log10(r.delta_exact),
                log10_delta_linear: log10(r.delta_linear),
                linearization_warning: r.linearization_warning,
                epsilon,
                satisfied: r.satisfied,
            })
        })
        .collect()
}

/// Security figures at the strongest attack's point estimate, or at the
/// configured `q` when no attack was scored.
fn campaign_security(cfg: &ExperimentConfig, summary: &PointSummary) -> CliResult<Vec<SecurityRow>> {
    let best = summary
        .attacks
        .iter()
        .map(|(name, a)| (name.as_str(), a.estimate.q_hat))
        .fold(None, |acc: Option<(&str, f64)>, (n, q)| match acc {
            Some((_, bq)) if bq >= q => acc,
            _ => Some((n, q)),
        });
    let (source, q) = match best {
        Some((name, q)) => (name, q.clamp(0.0, 0.499_999)),
        None => ("config", cfg.security.q),
    };
    let s = &cfg.security;
    security_rows(source, q, s.pa_rounds, &s.key_lengths, s.epsilon)
}

/// Execute the configuration: a single point, or one point per sweep value.
pub fn run_campaign(cfg: &ExperimentConfig) -> CliResult<Campaign> {
    cfg.validate()?;
    let Some(sweep) = &cfg.sweep else {
        let point = run_point(cfg, None)?;
        let security = campaign_security(cfg, &point.summary)?;
        return Ok(Campaign {
            config: cfg.clone(),
            parameter: None,
            points: vec![point],
            scaling: None,
            ber_fit: None,
            security,
        });
    };
    let configs = sweep
        .values
        .iter()
        .map(|&v| cfg.with_parameter(sweep.parameter, v).map(|c| (v, c)))
        .collect::<CliResult<Vec<_>>>()?;
    let points = configs.par_iter().map(|(v, c)| run_point(c, Some(*v))).collect::<CliResult<Vec<_>>>()?;

    let primary = cfg.attacks[0];
    let series: Vec<(f64, QEstimate)> =
        points.iter().filter_map(|p| Some((p.value?, *p.summary.attack(primary)?))).collect();
    let scaling = if series.len() == points.len() {
        fit_scaling(&series, sweep.exponent).ok().map(|fit| ScalingReport {
            attack: primary.name().to_string(),
            fit,
            monotone_increasing: series.windows(2).all(|w| w[1].1.q_hat > w[0].1.q_hat),
        })
    } else {
        None
    };
    let ber_fit = if points.iter().all(|p| p.summary.ber > 0.0) {
        let xs: Vec<f64> = sweep.values.clone();
        let ys: Vec<f64> = points.iter().map(|p| p.summary.ber.ln()).collect();
        let (slope, intercept, r_squared) = linear_fit(&xs, &ys);
        Some(BerFit { slope, intercept, r_squared })
    } else {
        None
    };
    let last = &points.last().expect("sweep has points").summary;
    let security = campaign_security(cfg, last)?;
    Ok(Campaign { config: cfg.clone(), parameter: Some(sweep.parameter), points, scaling, ber_fit, security })
}

#[cfg(test)]
mod tests {
    use super::*;
    use kljn_core::protocol::BrConfig;

    #[test]
    fn segment_is_largest_power_of_two() {
        assert_eq!(segment_for(2000, 4096), 1024);
        assert_eq!(segment_for(16384, 4096), 4096);
        assert_eq!(segment_for(1, 4096), 1);
    }

    #[test]
    fn results_do_not_depend_on_thread_count() {
        let cfg = ExperimentConfig { beps: 40, ..ExperimentConfig::for_scenario(Scenario::KljnWire) };
        let cfg = ExperimentConfig { kljn: crate::config::KljnSection { r_wire: 100.0, ..cfg.kljn.clone() }, ..cfg };
        let a = run_point(&cfg, None).unwrap();
        let pool = rayon::ThreadPoolBuilder::new().num_threads(3).build().unwrap();
        let b = pool.install(|| run_point(&cfg, None).unwrap());
        for (x, y) in a.outcomes.iter().zip(&b.outcomes) {
            assert_eq!(x.record, y.record);
            assert_eq!(x.verdicts, y.verdicts);
        }
    }

    #[test]
    fn complementary_only_keeps_every_br_bep() {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::BrIdeal);
        cfg.beps = 6;
        cfg.complementary_only = true;
        let p = run_point(&cfg, None).unwrap();
        assert_eq!(p.summary.kept, 6);
        assert_eq!(p.summary.attack(AttackKind::CurrentDirection).unwrap().p_hat, 1.0);
    }

    #[test]
    fn leak_cap_discards_and_is_counted_separately() {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::KljnWire);
        cfg.beps = 200;
        cfg.kljn.r_wire = 200.0;
        cfg.defense.leak_cap = Some(0.5);
        let p = run_point(&cfg, None).unwrap();
        assert!(p.summary.leak_capped > 0);
        assert_eq!(p.summary.defense_discarded, 0);
        for o in &p.outcomes {
            if o.record.defense_discard {
                assert!(!o.record.kept && !o.scored && o.record.leak_statistic.abs() >= 0.5);
            }
        }
    }

    #[test]
    fn security_rows_reproduce_worked_example() {
        let rows = security_rows("config", 0.05, 2, &[1000], 1e-300).unwrap();
        assert_eq!(rows[0].delta_linear, "9.33e-303");
        assert!((rows[0].q - 5e-5).abs() < 1e-18);
        assert!(rows[0].satisfied);
        let zero = security_rows("config", 0.0, 2, &[500], 1e-300).unwrap();
        assert_eq!(zero[0].delta_exact, "0");
        assert!(zero[0].satisfied);
    }

    #[test]
    fn br_without_section_is_config_error() {
        let mut cfg = ExperimentConfig::for_scenario(Scenario::BrIdeal);
        cfg.br = None;
        assert!(matches!(run_bep(&cfg, 0), Err(CliError::Config(_))));
        cfg.br = Some(BrConfig::ideal());
        assert!(run_bep(&cfg, 0).is_ok());
    }
}
