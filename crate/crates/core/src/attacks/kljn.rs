use std::ops::Range;

use rand_distr::{Distribution, StandardNormal};
use rustfft::num_complex::Complex64;
use serde::{Deserialize, Serialize};

use super::{AttackKind, AttackVerdict};
use crate::circuits::ChannelTrace;
use crate::error::{domain, Error, Result};
use crate::noisegen::{fft_forward, fft_inverse, RngStream, SampleTrace};
use crate::protocol::source;
use crate::stats;
use crate::Side;

/// Wire-resistance attack: the end holding the high resistance shows the
/// larger mean-square voltage.
pub fn wire_resistance_attack(trace: &ChannelTrace, bep_index: u64, rng: RngStream) -> AttackVerdict {
    let a = trace.u_end_a.mean_square();
    let b = trace.u_end_b.mean_square();
    AttackVerdict::from_contrast(AttackKind::WireResistance, bep_index, a, b, Side::Alice, rng)
}

/// Current-injection attack. With `γ = R_B/(R_A+R_B)` the end currents carry
/// DC offsets `-γ<I_E²>` and `(1-γ)<I_E²>`; their sum is positive when Alice
/// holds the high resistance.
pub fn current_injection_attack(
    trace: &ChannelTrace,
    injected: &SampleTrace,
    bep_index: u64,
    rng: RngStream,
) -> Result<AttackVerdict> {
    trace.i_end_a.check_compatible(injected)?;
    let ms_e = injected.mean_square();
    let ms_c = trace.i_c.mean_square();
    if ms_c > 0.0 && ms_e >= ms_c {
        return domain(format!("injection ratio {:.3} >= 1 is outside the model", (ms_e / ms_c).sqrt()));
    }
    let rho_a = stats::mean_product(&trace.i_end_a.samples, &injected.samples);
    let rho_b = stats::mean_product(&trace.i_end_b.samples, &injected.samples);
    let d = rho_a + rho_b;
    let conf = if ms_e > 0.0 { (d.abs() / ms_e).min(1.0) } else { 0.0 };
    Ok(AttackVerdict::from_sign(AttackKind::CurrentInjection, bep_index, d, conf, Side::Alice, rng))
}

/// Directional-coupler model: separation quality `κ(f) = κ_ref (f/f_ref)^exponent`,
/// clipped to `[0, 1]`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CouplerSpec {
    pub kappa_ref: f64,
    pub f_ref: f64,
    pub exponent: f64,
    /// Independent readout noise on each coupler output, relative to the
    /// RMS channel voltage.
    pub readout_noise: f64,
}

impl CouplerSpec {
    pub fn new(kappa_ref: f64, f_ref: f64) -> Self {
        CouplerSpec { kappa_ref, f_ref, exponent: 2.0, readout_noise: 0.05 }
    }

    pub fn validate(&self) -> Result<()> {
        if !(0.0..=1.0).contains(&self.kappa_ref) {
            return domain(format!("kappa = {} outside [0, 1]", self.kappa_ref));
        }
        if !(self.f_ref > 0.0) || !self.exponent.is_finite() || !(self.readout_noise >= 0.0) {
            return domain("coupler needs f_ref > 0, finite exponent, readout_noise >= 0");
        }
        Ok(())
    }

    pub fn kappa(&self, f: f64) -> f64 {
        if self.exponent == 0.0 {
            return self.kappa_ref;
        }
        (self.kappa_ref * (f.abs() / self.f_ref).powf(self.exponent)).clamp(0.0, 1.0)
    }
}

/// Coupler outputs `Z'_A = Z_A + (1-κ) Z_B`, `Z'_B = Z_B + (1-κ) Z_A`,
/// applied bin by bin.
pub fn coupler_outputs(z_a: &SampleTrace, z_b: &SampleTrace, spec: &CouplerSpec) -> Result<(SampleTrace, SampleTrace)> {
    spec.validate()?;
    z_a.check_compatible(z_b)?;
    let n = z_a.len();
    let to_c = |x: &[f64]| -> Vec<Complex64> { x.iter().map(|&v| Complex64::new(v, 0.0)).collect() };
    let (mut fa, mut fb) = (to_c(&z_a.samples), to_c(&z_b.samples));
    fft_forward(&mut fa);
    fft_forward(&mut fb);
    let df = 1.0 / (n as f64 * z_a.dt);
    let (mut oa, mut ob) = (vec![Complex64::default(); n], vec![Complex64::default(); n]);
    for k in 0..n {
        let bin = if k <= n / 2 { k } else { n - k };
        let mix = 1.0 - spec.kappa(bin as f64 * df);
        oa[k] = fa[k] + fb[k] * mix;
        ob[k] = fb[k] + fa[k] * mix;
    }
    fft_inverse(&mut oa);
    fft_inverse(&mut ob);
    let back = |v: Vec<Complex64>| SampleTrace::new(v.iter().map(|c| c.re / n as f64).collect(), z_a.dt);
    Ok((back(oa), back(ob)))
}

/// Coupler attack: Eve correlates each coupler output with the channel
/// voltage. The larger projection marks the stronger source, which belongs to
/// the low-resistance end, so the other end holds the high resistance.
pub fn coupler_attack(
    z_a: &SampleTrace,
    z_b: &SampleTrace,
    u_c: &SampleTrace,
    spec: &CouplerSpec,
    bep_index: u64,
    rng: RngStream,
) -> Result<AttackVerdict> {
    let (mut out_a, mut out_b) = coupler_outputs(z_a, z_b, spec)?;
    u_c.check_compatible(&out_a)?;
    let sd = spec.readout_noise * u_c.mean_square().sqrt();
    if sd > 0.0 {
        for (trace, src) in [(&mut out_a, source::READOUT_A), (&mut out_b, source::READOUT_B)] {
            let mut r = rng.with_source(src).rng();
            for v in trace.samples.iter_mut() {
                let z: f64 = StandardNormal.sample(&mut r);
                *v += sd * z;
            }
        }
    }
    let a = stats::mean_product(&out_a.samples, &u_c.samples);
    let b = stats::mean_product(&out_b.samples, &u_c.samples);
    Ok(AttackVerdict::from_contrast(AttackKind::Coupler, bep_index, a, b, Side::Bob, rng))
}

/// Statistic used by the transient attack.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case", tag = "kind")]
pub enum TransientStatistic {
    /// Mean power `<U_c I_c>` over the window. Power flows away from the end
    /// whose generator still runs hotter than its new resistor.
    PowerFlow,
    /// Mean square of `U_c` over the window relative to the given level. It
    /// is symmetric under exchanging the two ends, so it carries no bit.
    MeanSquare { level: f64 },
}

/// Transient attack over the samples in `window`.
pub fn transient_attack(
    trace: &ChannelTrace,
    window: Range<usize>,
    statistic: TransientStatistic,
    bep_index: u64,
    rng: RngStream,
) -> Result<AttackVerdict> {
    if window.is_empty() || window.end > trace.len() {
        return Err(Error::TooShort { needed: window.end.max(1), have: trace.len() });
    }
    let w = trace.window(window);
    let v = match statistic {
        TransientStatistic::PowerFlow => {
            let p = stats::mean_product(&w.u_c.samples, &w.i_c.samples);
            AttackVerdict::from_sign(AttackKind::Transient, bep_index, p, 1.0, Side::Bob, rng)
        }
        TransientStatistic::MeanSquare { level } => {
            let d = w.u_c.mean_square() - level;
            AttackVerdict::from_sign(AttackKind::Transient, bep_index, d, 1.0, Side::Alice, rng)
        }
    };
    Ok(v)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attacks::score_attack;
    use crate::circuits::{Bit, LoopConfig};
    use crate::protocol::{run_abrupt_bep, run_kljn_bep, run_kljn_bep_with_bits, DefenseConfig};

    fn cfg() -> LoopConfig {
        LoopConfig::new(1e3, 9e3, Bit::L, Bit::H, 8e8, 500.0)
    }

    fn high_side(c: &LoopConfig) -> Side {
        if c.alice == Bit::H {
            Side::Alice
        } else {
            Side::Bob
        }
    }

    #[test]
    fn ideal_wire_gives_coin() {
        let b = run_kljn_bep_with_bits(&cfg(), 0.1, &DefenseConfig::default(), None, 0, RngStream::new(1, 0, 0)).unwrap();
        let v = wire_resistance_attack(&b.trace, 0, RngStream::new(1, 0, 0));
        assert!(v.forced);
    }

    #[test]
    fn injection_offsets_differ_by_injected_power() {
        let b = run_kljn_bep_with_bits(&cfg(), 0.1, &DefenseConfig::default(), Some(0.05), 0, RngStream::new(1, 0, 0))
            .unwrap();
        let i_e = b.injected.as_ref().unwrap();
        let rho_a = stats::mean_product(&b.trace.i_end_a.samples, &i_e.samples);
        let rho_b = stats::mean_product(&b.trace.i_end_b.samples, &i_e.samples);
        let ms = i_e.mean_square();
        assert!(((rho_b - rho_a) - ms).abs() < 1e-9 * ms);
    }

    #[test]
    fn injection_sign_in_long_average() {
        // With a long record the noise term vanishes and the DC offsets decide.
        for (a, bb) in [(Bit::L, Bit::H), (Bit::H, Bit::L)] {
            let c = LoopConfig { alice: a, bob: bb, ..cfg() };
            let b = run_kljn_bep_with_bits(&c, 20.0, &DefenseConfig::default(), Some(0.3), 0, RngStream::new(2, 0, 0))
                .unwrap();
            let v = current_injection_attack(&b.trace, b.injected.as_ref().unwrap(), 0, RngStream::new(2, 0, 0)).unwrap();
            assert_eq!(v.guess, high_side(&c));
        }
    }

    #[test]
    fn injection_ratio_limit() {
        let b = run_kljn_bep_with_bits(&cfg(), 0.1, &DefenseConfig::default(), None, 0, RngStream::new(1, 0, 0)).unwrap();
        let big = b.trace.i_c.scaled(1.5);
        assert!(current_injection_attack(&b.trace, &big, 0, RngStream::new(1, 0, 0)).is_err());
    }

    #[test]
    fn coupler_without_separation_is_symmetric() {
        let b = run_kljn_bep_with_bits(&cfg(), 0.1, &DefenseConfig::default(), None, 0, RngStream::new(1, 0, 0)).unwrap();
        let spec = CouplerSpec { kappa_ref: 0.0, f_ref: 500.0, exponent: 2.0, readout_noise: 0.0 };
        let (za, zb) = coupler_outputs(&b.contribution_a, &b.contribution_b, &spec).unwrap();
        assert_eq!(za.samples, zb.samples);
        let v = coupler_attack(&b.contribution_a, &b.contribution_b, &b.trace.u_c, &spec, 0, RngStream::new(1, 0, 0))
            .unwrap();
        assert!(v.forced);
        let bad = CouplerSpec { kappa_ref: 1.5, ..spec };
        assert!(coupler_outputs(&b.contribution_a, &b.contribution_b, &bad).is_err());
    }

    #[test]
    fn perfect_coupler_finds_high_side() {
        let spec = CouplerSpec { kappa_ref: 1.0, f_ref: 500.0, exponent: 0.0, readout_noise: 0.05 };
        for t in 0..20 {
            let b = run_kljn_bep(&cfg(), 0.1, &DefenseConfig::default(), None, t, RngStream::new(3, t, 0)).unwrap();
            let c = LoopConfig { alice: b.record.alice_bit, bob: b.record.bob_bit, ..cfg() };
            if c.alice == c.bob {
                continue;
            }
            let v = coupler_attack(&b.contribution_a, &b.contribution_b, &b.trace.u_c, &spec, t, RngStream::new(3, t, 0))
                .unwrap();
            assert_eq!(v.guess, high_side(&c));
        }
    }

    #[test]
    fn kappa_law() {
        let s = CouplerSpec::new(0.5, 100.0);
        assert_eq!(s.kappa(100.0), 0.5);
        assert_eq!(s.kappa(50.0), 0.125);
        assert_eq!(s.kappa(1000.0), 1.0);
        assert_eq!(s.kappa(0.0), 0.0);
    }

    #[test]
    fn abrupt_connect_leaks() {
        let mut verdicts = Vec::new();
        let mut truth = Vec::new();
        for t in 0..600 {
            let b = run_abrupt_bep(&cfg(), 0.02, t, RngStream::new(11, t, 0)).unwrap();
            let (a, bb) = (b.record.alice_bit, b.record.bob_bit);
            if a == bb {
                continue;
            }
            verdicts.push(
                transient_attack(&b.trace, b.eve_window.clone(), TransientStatistic::PowerFlow, t, RngStream::new(11, t, 0))
                    .unwrap(),
            );
            truth.push((t, if a == Bit::H { Side::Alice } else { Side::Bob }));
        }
        let q = score_attack(&verdicts, &truth).unwrap();
        assert!(q.ci_low > 0.0, "{q:?}");
    }
}
