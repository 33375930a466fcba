use serde::{Deserialize, Serialize};

use super::Bit;
use crate::error::{domain, Result};
use crate::noisegen::{SampleTrace, BOLTZMANN};

/// Parameters of one KLJN loop configuration.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LoopConfig {
    pub r_l: f64,
    pub r_h: f64,
    pub alice: Bit,
    pub bob: Bit,
    pub t_eff: f64,
    pub bandwidth: f64,
    /// Series wire resistance, 0 for an ideal wire.
    pub r_wire: f64,
    pub t_wire: f64,
    /// Enforce the practical bound `R_w <= 0.02 (R_L + R_H)`.
    pub practical: bool,
}

impl LoopConfig {
    pub fn new(r_l: f64, r_h: f64, alice: Bit, bob: Bit, t_eff: f64, bandwidth: f64) -> Self {
        LoopConfig { r_l, r_h, alice, bob, t_eff, bandwidth, r_wire: 0.0, t_wire: 0.0, practical: false }
    }

    pub fn resistance(&self, bit: Bit) -> f64 {
        match bit {
            Bit::L => self.r_l,
            Bit::H => self.r_h,
        }
    }

    pub fn r_a(&self) -> f64 {
        self.resistance(self.alice)
    }

    pub fn r_b(&self) -> f64 {
        self.resistance(self.bob)
    }

    /// Fraction of an injected midpoint current that flows toward Alice.
    pub fn gamma(&self) -> f64 {
        self.r_b() / (self.r_a() + self.r_b())
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.r_l > 0.0 && self.r_l < self.r_h) {
            return domain(format!("need 0 < R_L < R_H, got R_L={}, R_H={}", self.r_l, self.r_h));
        }
        if !(self.t_eff >= 0.0) || !(self.bandwidth > 0.0) {
            return domain("T_eff must be >= 0 and bandwidth > 0");
        }
        if !(self.r_wire >= 0.0) || !(self.t_wire >= 0.0) {
            return domain("wire resistance and temperature must be >= 0");
        }
        if self.practical && self.r_wire > 0.02 * (self.r_l + self.r_h) {
            return domain(format!(
                "wire resistance {} exceeds 2% of R_L + R_H = {}",
                self.r_wire,
                self.r_l + self.r_h
            ));
        }
        Ok(())
    }
}

/// Channel observables of one loop solution.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ChannelTrace {
    /// Voltage at the wire midpoint (Eve's default tap).
    pub u_c: SampleTrace,
    /// Loop current, positive from Alice toward Bob.
    pub i_c: SampleTrace,
    pub u_end_a: SampleTrace,
    pub u_end_b: SampleTrace,
    pub i_end_a: SampleTrace,
    pub i_end_b: SampleTrace,
}

impl ChannelTrace {
    pub fn len(&self) -> usize {
        self.u_c.len()
    }

    pub fn is_empty(&self) -> bool {
        self.u_c.is_empty()
    }

    pub fn dt(&self) -> f64 {
        self.u_c.dt
    }

    /// Keep samples `range` of every member trace.
    pub fn window(&self, range: std::ops::Range<usize>) -> ChannelTrace {
        let cut = |t: &SampleTrace| SampleTrace::new(t.samples[range.clone()].to_vec(), t.dt);
        ChannelTrace {
            u_c: cut(&self.u_c),
            i_c: cut(&self.i_c),
            u_end_a: cut(&self.u_end_a),
            u_end_b: cut(&self.u_end_b),
            i_end_a: cut(&self.i_end_a),
            i_end_b: cut(&self.i_end_b),
        }
    }
}

/// Kirchhoff solution of the single loop `U_A - R_A - wire - R_B - U_B`.
pub fn solve_ideal_loop(u_a: &SampleTrace, u_b: &SampleTrace, r_a: f64, r_b: f64) -> Result<ChannelTrace> {
    u_a.check_compatible(u_b)?;
    if !(r_a >= 0.0 && r_b >= 0.0 && r_a + r_b > 0.0) {
        return domain("loop resistance must be positive");
    }
    let total = r_a + r_b;
    let dt = u_a.dt;
    let (mut u, mut i) = (Vec::with_capacity(u_a.len()), Vec::with_capacity(u_a.len()));
    for (&a, &b) in u_a.samples.iter().zip(&u_b.samples) {
        i.push((a - b) / total);
        u.push((a * r_b + b * r_a) / total);
    }
    let u_c = SampleTrace::new(u, dt);
    let i_c = SampleTrace::new(i, dt);
    Ok(ChannelTrace {
        u_end_a: u_c.clone(),
        u_end_b: u_c.clone(),
        i_end_a: i_c.clone(),
        i_end_b: i_c.clone(),
        u_c,
        i_c,
    })
}

/// Loop solution with per-sample resistances (random-walk protocol).
pub fn solve_loop_varying(u_a: &SampleTrace, u_b: &SampleTrace, r_a: &[f64], r_b: &[f64]) -> Result<ChannelTrace> {
    u_a.check_compatible(u_b)?;
    if r_a.len() != u_a.len() || r_b.len() != u_a.len() {
        return Err(crate::Error::TraceMismatch("resistance schedule length".into()));
    }
    let dt = u_a.dt;
    let mut u = Vec::with_capacity(u_a.len());
    let mut i = Vec::with_capacity(u_a.len());
    for k in 0..u_a.len() {
        let total = r_a[k] + r_b[k];
        i.push((u_a.samples[k] - u_b.samples[k]) / total);
        u.push((u_a.samples[k] * r_b[k] + u_b.samples[k] * r_a[k]) / total);
    }
    let u_c = SampleTrace::new(u, dt);
    let i_c = SampleTrace::new(i, dt);
    Ok(ChannelTrace {
        u_end_a: u_c.clone(),
        u_end_b: u_c.clone(),
        i_end_a: i_c.clone(),
        i_end_b: i_c.clone(),
        u_c,
        i_c,
    })
}

/// Loop with a lumped series wire resistance `r_w` carrying its own Johnson
/// source `wire_noise` (oriented Alice to Bob). `U_c` is the wire midpoint.
pub fn solve_loop_with_wire(
    u_a: &SampleTrace,
    u_b: &SampleTrace,
    r_a: f64,
    r_b: f64,
    r_w: f64,
    wire_noise: Option<&SampleTrace>,
) -> Result<ChannelTrace> {
    u_a.check_compatible(u_b)?;
    if let Some(w) = wire_noise {
        u_a.check_compatible(w)?;
    }
    if !(r_w >= 0.0) {
        return domain("wire resistance must be >= 0");
    }
    if r_w == 0.0 {
        // A zero-resistance wire carries no Johnson emf.
        return solve_ideal_loop(u_a, u_b, r_a, r_b);
    }
    let total = r_a + r_b + r_w;
    if !(total > 0.0) {
        return domain("loop resistance must be positive");
    }
    let dt = u_a.dt;
    let n = u_a.len();
    let (mut ea, mut eb, mut mid, mut cur) =
        (Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n), Vec::with_capacity(n));
    for k in 0..n {
        let uw = wire_noise.map_or(0.0, |w| w.samples[k]);
        let a = u_a.samples[k];
        let b = u_b.samples[k];
        let i = (a - b + uw) / total;
        let va = a - i * r_a;
        let vb = b + i * r_b;
        ea.push(va);
        eb.push(vb);
        mid.push(0.5 * (va + vb));
        cur.push(i);
    }
    let i_c = SampleTrace::new(cur, dt);
    Ok(ChannelTrace {
        u_c: SampleTrace::new(mid, dt),
        u_end_a: SampleTrace::new(ea, dt),
        u_end_b: SampleTrace::new(eb, dt),
        i_end_a: i_c.clone(),
        i_end_b: i_c.clone(),
        i_c,
    })
}

/// Superimpose Eve's midpoint current injection `i_e` on a loop solution.
///
/// The injected current splits as `γ = R_B/(R_A+R_B)` toward Alice and `1-γ`
/// toward Bob; the midpoint potential rises by `I_E · (R_A ∥ R_B)`.
pub fn inject_current(trace: &ChannelTrace, i_e: &SampleTrace, r_a: f64, r_b: f64) -> Result<ChannelTrace> {
    trace.i_c.check_compatible(i_e)?;
    if !(r_a > 0.0 && r_b > 0.0) {
        return domain("injection split needs R_A, R_B > 0");
    }
    let gamma = r_b / (r_a + r_b);
    if !(gamma > 0.0 && gamma < 1.0) {
        return domain(format!("degenerate split gamma = {gamma}"));
    }
    let r_par = r_a * r_b / (r_a + r_b);
    let add = |t: &SampleTrace, k: f64| {
        SampleTrace::new(t.samples.iter().zip(&i_e.samples).map(|(v, e)| v + k * e).collect(), t.dt)
    };
    Ok(ChannelTrace {
        u_c: add(&trace.u_c, r_par),
        i_c: trace.i_c.clone(),
        u_end_a: add(&trace.u_end_a, r_par),
        u_end_b: add(&trace.u_end_b, r_par),
        i_end_a: add(&trace.i_end_a, -gamma),
        i_end_b: add(&trace.i_end_b, 1.0 - gamma),
    })
}

/// Analytic mean-square channel levels for the three resistor situations.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LevelTable {
    pub ms_u_ll: f64,
    pub ms_u_lh: f64,
    pub ms_u_hh: f64,
    pub ms_i_ll: f64,
    pub ms_i_lh: f64,
    pub ms_i_hh: f64,
}

impl LevelTable {
    pub fn u_levels(&self) -> [f64; 3] {
        [self.ms_u_ll, self.ms_u_lh, self.ms_u_hh]
    }

    pub fn i_levels(&self) -> [f64; 3] {
        [self.ms_i_ll, self.ms_i_lh, self.ms_i_hh]
    }

    pub fn is_well_ordered(&self) -> bool {
        self.ms_u_ll < self.ms_u_lh
            && self.ms_u_lh < self.ms_u_hh
            && self.ms_i_ll > self.ms_i_lh
            && self.ms_i_lh > self.ms_i_hh
    }
}

pub fn analytic_levels(r_l: f64, r_h: f64, t_eff: f64, bandwidth: f64) -> Result<LevelTable> {
    if !(r_l > 0.0 && r_l < r_h) {
        return domain(format!("need 0 < R_L < R_H, got R_L={r_l}, R_H={r_h}"));
    }
    let c = 4.0 * BOLTZMANN * t_eff * bandwidth;
    Ok(LevelTable {
        ms_u_ll: c * r_l / 2.0,
        ms_u_lh: c * r_l * r_h / (r_l + r_h),
        ms_u_hh: c * r_h / 2.0,
        ms_i_ll: c / (2.0 * r_l),
        ms_i_lh: c / (r_l + r_h),
        ms_i_hh: c / (2.0 * r_h),
    })
}

/// Heating powers `(P_L→H, P_H→L)` exchanged between the two resistors.
pub fn directional_powers(r_l: f64, r_h: f64, t_eff: f64, bandwidth: f64) -> (f64, f64) {
    let c = 4.0 * BOLTZMANN * t_eff * bandwidth;
    let sum = r_l + r_h;
    // Spectrum of R_L's generator across R_H, divided by R_H, and vice versa.
    let s_l = c * r_l * (r_h / sum).powi(2);
    let s_h = c * r_h * (r_l / sum).powi(2);
    (s_l / r_h, s_h / r_l)
}

/// Ratio `Δf / f_m` with `f_m = c / (2 L)`, the lowest wave frequency of the wire.
pub fn quasi_static_margin(line_length: f64, phase_velocity: f64, bandwidth: f64) -> f64 {
    bandwidth / (phase_velocity / (2.0 * line_length))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::noisegen::{generate_noise, normalized_temperature, NoiseSpec, RngStream};

    fn tr(v: &[f64]) -> SampleTrace {
        SampleTrace::new(v.to_vec(), 0.1)
    }

    #[test]
    fn identical_sources_give_zero_current() {
        let u = tr(&[1.0, -2.0, 0.5]);
        let ch = solve_ideal_loop(&u, &u, 3.0, 7.0).unwrap();
        assert!(ch.i_c.samples.iter().all(|&v| v == 0.0));
        for (a, b) in ch.u_c.samples.iter().zip(&u.samples) {
            assert!((a - b).abs() < 1e-15);
        }
    }

    #[test]
    fn voltage_divider() {
        let u = tr(&[2.0, -4.0]);
        let z = tr(&[0.0, 0.0]);
        let ch = solve_ideal_loop(&u, &z, 5.0, 5.0).unwrap();
        assert_eq!(ch.u_c.samples, vec![1.0, -2.0]);
        assert_eq!(ch.i_c.samples, vec![0.2, -0.4]);
    }

    #[test]
    fn mismatched_traces_are_rejected() {
        assert!(solve_ideal_loop(&tr(&[1.0]), &tr(&[1.0, 2.0]), 1.0, 1.0).is_err());
    }

    #[test]
    fn levels_normalized() {
        // 4 k T Δf = 1.
        let t = normalized_temperature();
        let lv = analytic_levels(1.0, 9.0, t, 1.0).unwrap();
        let close = |a: f64, b: f64| (a - b).abs() < 1e-12;
        assert!(close(lv.ms_u_ll, 0.5) && close(lv.ms_u_lh, 0.9) && close(lv.ms_u_hh, 4.5));
        assert!(close(lv.ms_i_ll, 0.5) && close(lv.ms_i_lh, 0.1) && close(lv.ms_i_hh, 1.0 / 18.0));
        assert!(lv.is_well_ordered());
        assert!(analytic_levels(2.0, 2.0, t, 1.0).is_err());
    }

    #[test]
    fn levels_coincide_in_degenerate_limit() {
        let t = normalized_temperature();
        let lv = analytic_levels(1.0, 1.0 + 1e-9, t, 1.0).unwrap();
        assert!((lv.ms_u_ll - lv.ms_u_hh).abs() < 1e-9);
        assert!((lv.ms_u_lh - lv.ms_u_ll).abs() < 1e-9);
    }

    #[test]
    fn powers_balance() {
        let t = normalized_temperature();
        let (a, b) = directional_powers(1.0, 9.0, t, 1.0);
        assert!((a - 0.09).abs() < 1e-12 && (b - 0.09).abs() < 1e-12);
        let (a, b) = directional_powers(3.0, 3.0, t, 1.0);
        assert!((a - 0.25).abs() < 1e-12 && (b - 0.25).abs() < 1e-12);
        for (rl, rh) in [(1.0, 2.0), (0.3, 1e4), (1e3, 9e3)] {
            let (a, b) = directional_powers(rl, rh, 8e8, 500.0);
            assert!((a - b).abs() <= 1e-15 * a.abs());
        }
    }

    #[test]
    fn margin() {
        assert!((quasi_static_margin(1000.0, 2e8, 1e5) - 1.0).abs() < 1e-12);
        assert!((quasi_static_margin(1000.0, 2e8, 500.0) - 5e-3).abs() < 1e-15);
    }

    #[test]
    fn wire_reduces_to_ideal() {
        let a = tr(&[1.0, 0.3, -0.7]);
        let b = tr(&[-0.2, 0.9, 0.4]);
        let ideal = solve_ideal_loop(&a, &b, 1.0, 9.0).unwrap();
        let wire = solve_loop_with_wire(&a, &b, 1.0, 9.0, 0.0, None).unwrap();
        for k in 0..3 {
            assert!((ideal.u_c.samples[k] - wire.u_c.samples[k]).abs() < 1e-15);
            assert_eq!(wire.u_end_a.samples[k], wire.u_end_b.samples[k]);
            assert!((ideal.i_c.samples[k] - wire.i_c.samples[k]).abs() < 1e-15);
        }
    }

    fn end_asymmetry(r_a: f64, r_b: f64, seed: u64) -> f64 {
        let dur = 2000.0;
        let na = generate_noise(&NoiseSpec::new(r_a, 1.0, dur), RngStream::new(seed, 0, 0)).unwrap();
        let nb = generate_noise(&NoiseSpec::new(r_b, 1.0, dur), RngStream::new(seed, 0, 1)).unwrap();
        let ch = solve_loop_with_wire(&na, &nb, r_a, r_b, 0.2, None).unwrap();
        ch.u_end_a.mean_square() - ch.u_end_b.mean_square()
    }

    #[test]
    fn wire_asymmetry_sign_follows_high_end() {
        // Long-run oracle: the end holding R_H shows the larger mean-square voltage.
        assert!(end_asymmetry(9.0, 1.0, 11) > 0.0);
        assert!(end_asymmetry(1.0, 9.0, 11) < 0.0);
    }

    #[test]
    fn injection_split() {
        let a = tr(&[1.0, 0.3, -0.7]);
        let b = tr(&[-0.2, 0.9, 0.4]);
        let ch = solve_ideal_loop(&a, &b, 2.0, 2.0).unwrap();
        let ie = tr(&[0.5, -1.0, 2.0]);
        let inj = inject_current(&ch, &ie, 2.0, 2.0).unwrap();
        for k in 0..3 {
            assert!((inj.i_end_a.samples[k] - (ch.i_c.samples[k] - 0.5 * ie.samples[k])).abs() < 1e-15);
        }
        let inj = inject_current(&ch, &ie, 1.0, 9.0).unwrap();
        for k in 0..3 {
            let d = inj.i_end_b.samples[k] - inj.i_end_a.samples[k];
            assert!((d - ie.samples[k]).abs() < 1e-14);
        }
        let zero = tr(&[0.0; 3]);
        assert_eq!(inject_current(&ch, &zero, 1.0, 9.0).unwrap(), ch);
        assert!(inject_current(&ch, &ie, 0.0, 9.0).is_err());
    }
}
