use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use serde::{Deserialize, Serialize};

use super::kljn::{classify_levels, BepRecord, Classification};
use super::{draw_bits, source};
use crate::circuits::{analytic_levels, solve_loop_varying, Bit, ChannelTrace, LoopConfig};
use crate::error::{domain, Result};
use crate::noisegen::{effective_sample_count, unit_band_limited, RngStream, SampleTrace, DEFAULT_OVERSAMPLE};

/// Resistance random walk parameters.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RandomWalkConfig {
    /// RMS resistance speed (Ω/s).
    pub v_rms: f64,
    /// Time allowed to reach the target resistance (s).
    pub t_r: f64,
    /// Interval between walk increments (s).
    pub step_time: f64,
    /// Idle time at the midpoint resistance before the walk starts (s).
    pub settle_time: f64,
}

impl RandomWalkConfig {
    /// Walk with increments ten times per noise correlation time.
    pub fn new(v_rms: f64, t_r: f64, bandwidth: f64) -> Self {
        RandomWalkConfig { v_rms, t_r, step_time: 0.05 / bandwidth, settle_time: 2.0 / bandwidth }
    }

    /// Mean time to reach a boundary from the midpoint when the opposite
    /// boundary reflects.
    pub fn expected_arrival(&self, r_l: f64, r_h: f64) -> f64 {
        let d = 0.5 * (r_h - r_l);
        3.0 * d * d / (self.v_rms * self.v_rms * self.step_time)
    }

    /// Walk at speed `v_rms` with `t_r` set to `margin` mean arrival times.
    pub fn for_speed(v_rms: f64, margin: f64, r_l: f64, r_h: f64, bandwidth: f64) -> Self {
        let mut w = RandomWalkConfig::new(v_rms, 1.0, bandwidth);
        w.t_r = margin * w.expected_arrival(r_l, r_h);
        w
    }

    pub fn validate(&self) -> Result<()> {
        let ok = |x: f64| x.is_finite() && x > 0.0;
        if !ok(self.v_rms) || !ok(self.t_r) || !ok(self.step_time) || !(self.settle_time >= 0.0) {
            return domain("random walk needs positive v_rms, t_r, step_time");
        }
        Ok(())
    }
}

/// Resistance schedules actually applied during a BEP.
#[derive(Debug, Clone, PartialEq)]
pub struct WalkTrace {
    pub r_a: Vec<f64>,
    pub r_b: Vec<f64>,
    /// Time (s, from walk start) each side reached its target.
    pub arrival_a: Option<f64>,
    pub arrival_b: Option<f64>,
}

/// KLJN BEP with time-varying resistors.
#[derive(Debug, Clone)]
pub struct TransientBep {
    pub record: BepRecord,
    pub trace: ChannelTrace,
    pub walk: WalkTrace,
    /// Samples during which the resistors are changing.
    pub eve_window: Range<usize>,
    /// Samples Alice and Bob use for classification.
    pub measure_window: Range<usize>,
}

/// Causal exponential smoothing of a resistance schedule, modelling the
/// finite response time of a noise generator to a new target level.
pub fn generator_lag(r: &[f64], dt: f64, time_constant: f64) -> Vec<f64> {
    let alpha = if time_constant > 0.0 { 1.0 - (-dt / time_constant).exp() } else { 1.0 };
    let mut out = Vec::with_capacity(r.len());
    let mut state = r.first().copied().unwrap_or(0.0);
    for &x in r {
        state += alpha * (x - state);
        out.push(state);
    }
    out
}

fn lag_time(bandwidth: f64) -> f64 {
    1.0 / (2.0 * std::f64::consts::PI * bandwidth)
}

fn finish(
    config: &LoopConfig,
    r_a: Vec<f64>,
    r_b: Vec<f64>,
    measure_start: usize,
    dt: f64,
    index: u64,
    rng: RngStream,
) -> Result<(BepRecord, ChannelTrace, WalkTrace)> {
    let n = r_a.len();
    let fs = 1.0 / dt;
    let tau_g = lag_time(config.bandwidth);
    let c = 4.0 * crate::noisegen::BOLTZMANN * config.t_eff * config.bandwidth;
    let gen = |r: &[f64], src: u64| -> SampleTrace {
        let unit = unit_band_limited(n, fs, config.bandwidth, rng.with_source(src));
        let env = generator_lag(r, dt, tau_g);
        SampleTrace::new(unit.iter().zip(&env).map(|(z, e)| z * (c * e).sqrt()).collect(), dt)
    };
    let u_a = gen(&r_a, source::ALICE);
    let u_b = gen(&r_b, source::BOB);
    let trace = solve_loop_varying(&u_a, &u_b, &r_a, &r_b)?;
    let table = analytic_levels(config.r_l, config.r_h, config.t_eff, config.bandwidth)?;
    let m = trace.window(measure_start..n);
    let (ms_u, ms_i) = (m.u_end_a.mean_square(), m.i_end_a.mean_square());
    let mut record = BepRecord::new(index, config.alice, config.bob, classify_levels(ms_u, ms_i, &table));
    record.ms_u = ms_u;
    record.ms_i = ms_i;
    let walk = WalkTrace { r_a, r_b, arrival_a: None, arrival_b: None };
    Ok((record, trace, walk))
}

fn sample_period(bandwidth: f64) -> f64 {
    1.0 / (2.0 * DEFAULT_OVERSAMPLE * bandwidth)
}

fn check(config: &LoopConfig, tau: f64) -> Result<()> {
    config.validate()?;
    if effective_sample_count(config.bandwidth, tau) < 4.0 {
        return domain("BEP too short: need 2 Δf τ >= 4");
    }
    Ok(())
}

/// Abrupt-connect BEP: both resistors jump from the midpoint value to their
/// final values at the start of the BEP while the generators catch up.
pub fn run_abrupt_bep(config: &LoopConfig, tau: f64, index: u64, rng: RngStream) -> Result<TransientBep> {
    check(config, tau)?;
    let (a, b) = draw_bits(rng);
    let cfg = LoopConfig { alice: a, bob: b, ..*config };
    let dt = sample_period(cfg.bandwidth);
    let pre = (2.0 / cfg.bandwidth / dt).round() as usize;
    let body = (tau / dt).round() as usize;
    let mid = 0.5 * (cfg.r_l + cfg.r_h);
    let sched = |r: f64| -> Vec<f64> { (0..pre + body).map(|k| if k < pre { mid } else { r }).collect() };
    let (record, trace, walk) = finish(&cfg, sched(cfg.r_a()), sched(cfg.r_b()), pre, dt, index, rng)?;
    let window = ((0.5 / cfg.bandwidth / dt).round() as usize).max(1);
    Ok(TransientBep { record, trace, walk, eve_window: pre..pre + window, measure_window: pre..pre + body })
}

/// Reflecting walk from the midpoint toward `target`; returns values at the
/// walk grid points and the arrival step, if any.
fn walk_path(r_l: f64, r_h: f64, target: Bit, step: f64, steps: usize, rng: RngStream) -> (Vec<f64>, Option<usize>) {
    let mut r = rng.rng();
    let mut x = 0.5 * (r_l + r_h);
    let mut path = Vec::with_capacity(steps + 1);
    path.push(x);
    let mut arrived = None;
    for k in 1..=steps {
        if arrived.is_none() {
            let z: f64 = StandardNormal.sample(&mut r);
            x += step * z;
            if x <= r_l {
                x = if target == Bit::L { r_l } else { 2.0 * r_l - x };
            } else if x >= r_h {
                x = if target == Bit::H { r_h } else { 2.0 * r_h - x };
            }
            x = x.clamp(r_l, r_h);
            let hit = match target {
                Bit::L => x <= r_l,
                Bit::H => x >= r_h,
            };
            if hit {
                arrived = Some(k);
            }
        }
        path.push(x);
    }
    (path, arrived)
}

/// Random-walk BEP: settle at the midpoint, walk toward the chosen value,
/// then measure for `tau`. A side that has not arrived by `t_r` aborts the BEP.
pub fn run_random_walk_bep(
    config: &LoopConfig,
    walk: &RandomWalkConfig,
    tau: f64,
    index: u64,
    rng: RngStream,
) -> Result<TransientBep> {
    check(config, tau)?;
    walk.validate()?;
    let (a, b) = draw_bits(rng);
    let cfg = LoopConfig { alice: a, bob: b, ..*config };
    let dt = sample_period(cfg.bandwidth);
    let settle = (walk.settle_time / dt).round() as usize;
    let walk_len = (walk.t_r / dt).round().max(1.0) as usize;
    let body = (tau / dt).round() as usize;
    let steps = (walk.t_r / walk.step_time).ceil().max(1.0) as usize;
    let inc = walk.v_rms * walk.step_time;
    let (pa, arr_a) = walk_path(cfg.r_l, cfg.r_h, a, inc, steps, rng.with_source(source::WALK_A));
    let (pb, arr_b) = walk_path(cfg.r_l, cfg.r_h, b, inc, steps, rng.with_source(source::WALK_B));
    let sched = |path: &[f64]| -> Vec<f64> {
        let mid = path[0];
        let end = *path.last().unwrap_or(&mid);
        let mut out = vec![mid; settle];
        out.extend((0..walk_len).map(|k| {
            let pos = (k as f64 * dt / walk.step_time).min(steps as f64);
            let i = (pos.floor() as usize).min(steps - 1);
            let f = pos - i as f64;
            path[i] + f * (path[i + 1] - path[i])
        }));
        out.extend(std::iter::repeat_n(end, body));
        out
    };
    let (mut record, trace, mut wt) = finish(&cfg, sched(&pa), sched(&pb), settle + walk_len, dt, index, rng)?;
    let to_time = |k: Option<usize>| k.map(|k| k as f64 * walk.step_time).filter(|t| *t <= walk.t_r);
    wt.arrival_a = to_time(arr_a);
    wt.arrival_b = to_time(arr_b);
    if wt.arrival_a.is_none() || wt.arrival_b.is_none() {
        record.classification = Classification::Abort;
        record.set_kept(false);
    }
    Ok(TransientBep {
        record,
        trace,
        walk: wt,
        eve_window: settle..settle + walk_len,
        measure_window: settle + walk_len..settle + walk_len + body,
    })
}
