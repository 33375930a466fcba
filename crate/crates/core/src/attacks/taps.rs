use super::{AttackKind, AttackVerdict};
use crate::circuits::{ChannelTrace, LineHistory};
use crate::noisegen::RngStream;
use crate::stats;
use crate::Side;

/// Voltage and current (positive toward Bob) at one observation point.
#[derive(Debug, Clone, PartialEq)]
pub struct Tap {
    pub u: Vec<f64>,
    pub i: Vec<f64>,
}

impl Tap {
    fn average(a: &Tap, b: &Tap) -> Tap {
        let avg = |x: &[f64], y: &[f64]| x.iter().zip(y).map(|(p, q)| 0.5 * (p + q)).collect();
        Tap { u: avg(&a.u, &b.u), i: avg(&a.i, &b.i) }
    }

    fn power(&self) -> Vec<f64> {
        self.u.iter().zip(&self.i).map(|(u, i)| u * i).collect()
    }
}

/// Eve's observation points ordered from Alice to Bob.
#[derive(Debug, Clone, PartialEq)]
pub struct TapSet {
    pub dt: f64,
    pub taps: Vec<Tap>,
}

impl TapSet {
    /// One tap per ladder branch, at the branch midpoint.
    pub fn from_history(history: &LineHistory) -> Self {
        let n = history.states.first().map_or(0, |s| s.branch_currents.len());
        let taps = (0..n)
            .map(|k| Tap { u: history.branch_voltage_series(k), i: history.branch_series(k) })
            .collect();
        TapSet { dt: history.dt, taps }
    }

    /// Taps at Alice's end, the wire midpoint and Bob's end of a lumped loop.
    pub fn from_channel(trace: &ChannelTrace) -> Self {
        let tap = |u: &crate::noisegen::SampleTrace, i: &crate::noisegen::SampleTrace| Tap {
            u: u.samples.clone(),
            i: i.samples.clone(),
        };
        TapSet {
            dt: trace.dt(),
            taps: vec![
                tap(&trace.u_end_a, &trace.i_end_a),
                tap(&trace.u_c, &trace.i_c),
                tap(&trace.u_end_b, &trace.i_end_b),
            ],
        }
    }

    /// Midpoint tap; with an even tap count, the average of the central pair.
    pub fn middle(&self) -> Tap {
        let m = self.taps.len();
        let (lo, hi) = ((m - 1) / 2, m / 2);
        if lo == hi {
            self.taps[lo].clone()
        } else {
            Tap::average(&self.taps[lo], &self.taps[hi])
        }
    }

    pub fn first(&self) -> &Tap {
        &self.taps[0]
    }

    pub fn last(&self) -> &Tap {
        &self.taps[self.taps.len() - 1]
    }

    pub fn len(&self) -> usize {
        self.taps.len()
    }

    pub fn is_empty(&self) -> bool {
        self.taps.is_empty()
    }

    pub fn samples(&self) -> usize {
        self.taps.first().map_or(0, |t| t.u.len())
    }
}

/// The six energy-flow discriminators. Positive flow toward Bob and the larger
/// end magnitude both point at the closed (source) end.
pub fn energy_flow_verdicts(taps: &TapSet, bep_index: u64, rng: RngStream) -> [AttackVerdict; 6] {
    let mid = taps.middle();
    let current = stats::mean(&mid.i);
    let power = stats::mean(&mid.power());
    let energy: f64 = mid.power().iter().sum::<f64>() * taps.dt;
    let end_stats = |t: &Tap| {
        let p = t.power();
        (stats::mean(&t.i).abs(), stats::mean(&p).abs(), (p.iter().sum::<f64>() * taps.dt).abs())
    };
    let (ia, pa, ea) = end_stats(taps.first());
    let (ib, pb, eb) = end_stats(taps.last());
    let sign = |k, s| AttackVerdict::from_sign(k, bep_index, s, 1.0, Side::Alice, rng);
    let contrast = |k, a, b| AttackVerdict::from_contrast(k, bep_index, a, b, Side::Alice, rng);
    [
        sign(AttackKind::CurrentDirection, current),
        sign(AttackKind::PowerFlowSign, power),
        sign(AttackKind::EnergyFlowSign, energy),
        contrast(AttackKind::CurrentProfile, ia, ib),
        contrast(AttackKind::PowerProfile, pa, pb),
        contrast(AttackKind::EnergyProfile, ea, eb),
    ]
}

fn fluctuation_correlation(t: &Tap, dt: f64) -> f64 {
    let du = stats::derivative(&t.u, dt);
    stats::mean_product(&du, &t.i)
}

/// The three fluctuation discriminators: sign of `<dU/dt · I>` at the
/// midpoint, and the end-to-end contrast of its magnitude and of the RMS
/// current fluctuation.
pub fn damping_verdicts(taps: &TapSet, bep_index: u64, rng: RngStream) -> [AttackVerdict; 3] {
    let y_mid = fluctuation_correlation(&taps.middle(), taps.dt);
    let y_a = fluctuation_correlation(taps.first(), taps.dt).abs();
    let y_b = fluctuation_correlation(taps.last(), taps.dt).abs();
    let rms_a = stats::variance(&taps.first().i).sqrt();
    let rms_b = stats::variance(&taps.last().i).sqrt();
    [
        AttackVerdict::from_sign(AttackKind::DampingCorrelationSign, bep_index, y_mid, 1.0, Side::Alice, rng),
        AttackVerdict::from_contrast(AttackKind::DampingCorrelationProfile, bep_index, y_a, y_b, Side::Alice, rng),
        AttackVerdict::from_contrast(AttackKind::RmsCurrentProfile, bep_index, rms_a, rms_b, Side::Alice, rng),
    ]
}
