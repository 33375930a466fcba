//! Key-level security figures computed from Eve's per-bit advantage `q`.
//!
//! Everything that can underflow binary64 (`0.5^N` with `N` in the
//! thousands) is carried as a natural logarithm in [`LogValue`].

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{domain, Result};

/// Two-sided 95% normal quantile used for every Wilson interval.
pub const Z95: f64 = 1.959_963_984_540_054;

/// A non-negative real stored as its natural logarithm (`-inf` is zero).
#[derive(Debug, Clone, Copy, PartialEq, PartialOrd, Serialize, Deserialize)]
pub struct LogValue {
    pub ln: f64,
}

impl LogValue {
    pub const ZERO: LogValue = LogValue { ln: f64::NEG_INFINITY };

    pub fn from_ln(ln: f64) -> Self {
        LogValue { ln }
    }

    pub fn from_f64(v: f64) -> Self {
        LogValue { ln: v.ln() }
    }

    pub fn is_zero(&self) -> bool {
        self.ln == f64::NEG_INFINITY
    }

    /// Plain value; flushes to zero below the binary64 range.
    pub fn value(&self) -> f64 {
        self.ln.exp()
    }

    pub fn log10(&self) -> f64 {
        self.ln / std::f64::consts::LN_10
    }

    /// Decimal `(mantissa, exponent)` with `1 <= mantissa < 10`.
    pub fn to_scientific(&self) -> (f64, i64) {
        if self.is_zero() {
            return (0.0, 0);
        }
        let l = self.log10();
        let mut e = l.floor();
        let mut m = 10f64.powf(l - e);
        if m >= 10.0 {
            m /= 10.0;
            e += 1.0;
        }
        (m, e as i64)
    }

    /// `"9.33e-303"`-style string with `digits` significant digits.
    pub fn format_sci(&self, digits: usize) -> String {
        if self.is_zero() {
            return "0".to_string();
        }
        let (m, e) = self.to_scientific();
        let prec = digits.saturating_sub(1);
        let mut ms = format!("{m:.prec$}");
        let mut e = e;
        if ms.starts_with("10") {
            ms = format!("{:.prec$}", 1.0);
            e += 1;
        }
        format!("{ms}e{e}")
    }
}

impl fmt::Display for LogValue {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.format_sci(3))
    }
}

/// `ln(e^x - 1)` without overflow.
fn ln_expm1(x: f64) -> f64 {
    if x > 30.0 {
        x + (-(-x).exp()).ln_1p()
    } else {
        x.exp_m1().ln()
    }
}

/// `Δ = (0.5 + q)^N - 0.5^N`, evaluated as `0.5^N (e^{N ln(1+2q)} - 1)` in log space.
pub fn stat_distance_exact(q: f64, n: u64) -> Result<LogValue> {
    if !(0.0..0.5).contains(&q) {
        return domain(format!("advantage q = {q} outside [0, 0.5)"));
    }
    if n == 0 {
        return domain("key length must be >= 1");
    }
    if q == 0.0 {
        return Ok(LogValue::ZERO);
    }
    let nf = n as f64;
    let growth = nf * (2.0 * q).ln_1p();
    Ok(LogValue::from_ln(nf * 0.5f64.ln() + ln_expm1(growth)))
}

/// Linearized `Δ ≅ 2 N q 0.5^N`. The flag is raised when `N q >= 0.1`,
/// outside the regime where the linearization is trustworthy.
pub fn stat_distance_linear(q: f64, n: u64) -> (LogValue, bool) {
    let nf = n as f64;
    let warn = nf * q >= 0.1;
    if q <= 0.0 {
        return (LogValue::ZERO, warn);
    }
    (LogValue::from_ln((2.0 * nf * q).ln() + nf * 0.5f64.ln()), warn)
}

/// Largest `q` for which the linearized distance stays at or below `ε`:
/// `q <= (ε / 2N) 2^N`, clipped at 0.5.
pub fn required_q(epsilon: f64, n: u64) -> f64 {
    let nf = n as f64;
    let ln_q = (epsilon / (2.0 * nf)).ln() + nf * std::f64::consts::LN_2;
    if ln_q >= 0.5f64.ln() {
        0.5
    } else {
        ln_q.exp()
    }
}

/// Eve's advantage after `rounds` of pairwise-XOR privacy amplification.
/// One round maps `p = 0.5 + q` to `p² + (1 - p)²`, i.e. `q -> 2 q²`.
pub fn pa_advantage_map(q: f64, rounds: u32) -> f64 {
    (0..rounds).fold(q, |q, _| 2.0 * q * q)
}

/// Key length maximizing `Δ` at fixed `q > 0`.
pub fn maximizing_key_length(q: f64) -> Result<u64> {
    let mut best = stat_distance_exact(q, 1)?;
    let mut n = 1;
    loop {
        let next = stat_distance_exact(q, n + 1)?;
        if next.ln <= best.ln {
            return Ok(n);
        }
        best = next;
        n += 1;
    }
}

/// Wilson score interval for `k` successes out of `n`.
pub fn wilson_interval(k: u64, n: u64, z: f64) -> (f64, f64) {
    if n == 0 {
        return (0.0, 1.0);
    }
    let nf = n as f64;
    let p = k as f64 / nf;
    let z2 = z * z;
    let den = 1.0 + z2 / nf;
    let centre = (p + z2 / (2.0 * nf)) / den;
    let half = z * (p * (1.0 - p) / nf + z2 / (4.0 * nf * nf)).sqrt() / den;
    ((centre - half).max(0.0), (centre + half).min(1.0))
}

/// Eve's estimated success probability and advantage with a Wilson 95% interval on `q`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct QEstimate {
    pub p_hat: f64,
    pub q_hat: f64,
    pub ci_low: f64,
    pub ci_high: f64,
    pub n: u64,
    pub successes: u64,
}

impl QEstimate {
    pub fn from_counts(successes: u64, n: u64) -> Result<Self> {
        if n == 0 {
            return domain("cannot score zero verdicts");
        }
        if successes > n {
            return domain("more successes than trials");
        }
        let p_hat = successes as f64 / n as f64;
        let (lo, hi) = wilson_interval(successes, n, Z95);
        Ok(QEstimate { p_hat, q_hat: p_hat - 0.5, ci_low: lo - 0.5, ci_high: hi - 0.5, n, successes })
    }

    /// True when the interval on `p` contains 0.5 (no detectable information).
    pub fn contains_null(&self) -> bool {
        self.ci_low <= 0.0 && self.ci_high >= 0.0
    }

    pub fn half_width(&self) -> f64 {
        0.5 * (self.ci_high - self.ci_low)
    }
}

/// Result of fitting `q = ϑ x^exponent` through the origin.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScalingFit {
    pub exponent: f64,
    pub coefficient: f64,
    /// Weighted, uncentered coefficient of determination of the origin fit.
    pub r_squared: f64,
    /// Intercept of a free (weighted) line fit, with its 95% interval.
    pub intercept: f64,
    pub intercept_ci: (f64, f64),
    pub points: usize,
}

impl ScalingFit {
    pub fn intercept_contains_zero(&self) -> bool {
        self.intercept_ci.0 <= 0.0 && self.intercept_ci.1 >= 0.0
    }
}

/// Weighted least squares of `q̂` against `resource^exponent` through the origin.
///
/// Weights are inverse variances taken from each estimate's Wilson half-width.
pub fn fit_scaling(sweep: &[(f64, QEstimate)], exponent: f64) -> Result<ScalingFit> {
    if sweep.len() < 4 {
        return domain(format!("scaling fit needs >= 4 points, got {}", sweep.len()));
    }
    let xs: Vec<f64> = sweep.iter().map(|(x, _)| x.powf(exponent)).collect();
    if xs.iter().any(|x| !x.is_finite()) || xs.iter().all(|&x| x == xs[0]) {
        return domain("degenerate sweep values");
    }
    let ys: Vec<f64> = sweep.iter().map(|(_, q)| q.q_hat).collect();
    let ws: Vec<f64> = sweep
        .iter()
        .map(|(_, q)| {
            let sd = (q.half_width() / Z95).max(1e-12);
            1.0 / (sd * sd)
        })
        .collect();
    let sxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * x * x).sum();
    let sxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * x * y).sum();
    let theta = sxy / sxx;
    let ss_res: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (y - theta * x).powi(2)).sum();
    let ss_tot: f64 = ys.iter().zip(&ws).map(|(y, w)| w * y * y).sum();
    let r_squared = if ss_tot > 0.0 { 1.0 - ss_res / ss_tot } else { 1.0 };

    // Free weighted line for the intercept test.
    let sw: f64 = ws.iter().sum();
    let mx = xs.iter().zip(&ws).map(|(x, w)| w * x).sum::<f64>() / sw;
    let my = ys.iter().zip(&ws).map(|(y, w)| w * y).sum::<f64>() / sw;
    let cxx: f64 = xs.iter().zip(&ws).map(|(x, w)| w * (x - mx).powi(2)).sum();
    let cxy: f64 = xs.iter().zip(&ys).zip(&ws).map(|((x, y), w)| w * (x - mx) * (y - my)).sum();
    let slope = cxy / cxx;
    let intercept = my - slope * mx;
    // Weights are absolute inverse variances, so the intercept variance follows directly.
    let var_int = 1.0 / sw + mx * mx / cxx;
    let half = Z95 * var_int.sqrt();
    Ok(ScalingFit {
        exponent,
        coefficient: theta,
        r_squared,
        intercept,
        intercept_ci: (intercept - half, intercept + half),
        points: sweep.len(),
    })
}

/// Key-level security figures for one key length.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SecurityReport {
    pub key_length: u64,
    pub q: f64,
    pub delta_exact: LogValue,
    pub delta_linear: LogValue,
    pub linearization_warning: bool,
    pub epsilon_target: f64,
    pub satisfied: bool,
}

pub fn security_report(q: f64, key_length: u64, epsilon: f64) -> Result<SecurityReport> {
    let delta_exact = stat_distance_exact(q, key_length)?;
    let (delta_linear, warn) = stat_distance_linear(q, key_length);
    let satisfied = delta_exact.is_zero() || delta_exact.ln <= epsilon.ln();
    Ok(SecurityReport {
        key_length,
        q,
        delta_exact,
        delta_linear,
        linearization_warning: warn,
        epsilon_target: epsilon,
        satisfied,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn zero_advantage_gives_zero_distance() {
        for n in [1, 10, 1000, 100_000] {
            assert!(stat_distance_exact(0.0, n).unwrap().is_zero());
            assert!(stat_distance_linear(0.0, n).0.is_zero());
        }
    }

    #[test]
    fn worked_example_values() {
        let q = 5e-5;
        let (lin, warn) = stat_distance_linear(q, 1000);
        assert!(!warn);
        let (m, e) = lin.to_scientific();
        assert_eq!(e, -303);
        assert!((m - 9.3326).abs() < 1e-3, "{m}");
        let exact = stat_distance_exact(q, 1000).unwrap();
        let (m, e) = exact.to_scientific();
        assert_eq!(e, -303);
        assert!((m - 9.81).abs() < 0.01, "{m}");
        let (lin500, _) = stat_distance_linear(q, 500);
        let (m, e) = lin500.to_scientific();
        assert_eq!(e, -152);
        assert!((m - 1.527).abs() < 1e-3, "{m}");
        assert_eq!(lin.format_sci(3), "9.33e-303");
    }

    #[test]
    fn log_space_matches_direct_evaluation() {
        let direct = 0.6f64.powi(10) - 0.5f64.powi(10);
        let v = stat_distance_exact(0.1, 10).unwrap().value();
        assert!(((v - direct) / direct).abs() < 1e-12);
    }

    #[test]
    fn domain_errors() {
        assert!(stat_distance_exact(0.5, 10).is_err());
        assert!(stat_distance_exact(-0.1, 10).is_err());
        assert!(stat_distance_exact(0.1, 0).is_err());
    }

    #[test]
    fn required_q_values() {
        let b = required_q(1e-302, 1000);
        assert!((b / 5.36e-5 - 1.0).abs() < 0.01, "{b:e}");
        assert!((required_q(1e-3, 1) - 1e-3).abs() < 1e-15);
        assert!(required_q(1e-12, 20) < required_q(1e-12, 21));
        assert_eq!(required_q(1e-3, 100), 0.5);
    }

    #[test]
    fn privacy_amplification_chain() {
        assert!((pa_advantage_map(0.05, 1) - 0.005).abs() < 1e-18);
        assert!((pa_advantage_map(0.05, 2) - 5e-5).abs() < 1e-18);
        assert_eq!(pa_advantage_map(0.0, 3), 0.0);
        assert_eq!(pa_advantage_map(0.5, 3), 0.5);
        assert_eq!(pa_advantage_map(0.2, 0), 0.2);
    }

    #[test]
    fn wilson_examples() {
        let all = QEstimate::from_counts(200, 200).unwrap();
        assert_eq!(all.p_hat, 1.0);
        assert!(!all.contains_null());
        let coin = QEstimate::from_counts(5000, 10_000).unwrap();
        assert!(coin.ci_high < 0.013 && coin.ci_low > -0.013);
        let q = QEstimate::from_counts(55, 100).unwrap();
        assert!((q.q_hat - 0.05).abs() < 1e-12);
        assert!((q.half_width() - 0.096).abs() < 0.005, "{}", q.half_width());
        assert!(q.contains_null());
        assert!(QEstimate::from_counts(0, 0).is_err());
    }

    #[test]
    fn exact_linear_fit() {
        let sweep: Vec<(f64, QEstimate)> = [0.01, 0.02, 0.03, 0.04]
            .iter()
            .map(|&x| {
                let q = 3.0 * x;
                (x, QEstimate { p_hat: 0.5 + q, q_hat: q, ci_low: q - 0.01, ci_high: q + 0.01, n: 1000, successes: 0 })
            })
            .collect();
        let fit = fit_scaling(&sweep, 1.0).unwrap();
        assert!((fit.coefficient - 3.0).abs() < 1e-12);
        assert!((fit.r_squared - 1.0).abs() < 1e-12);
        assert!(fit.intercept_contains_zero());
        assert!(fit_scaling(&sweep[..3], 1.0).is_err());
    }

    #[test]
    fn maximizing_length_exists() {
        let n = maximizing_key_length(0.3).unwrap();
        let at = |k| stat_distance_exact(0.3, k).unwrap().ln;
        assert!(at(n) >= at(n + 1) && at(n) > at(n - 1).min(at(n)) - 1.0);
        assert!(at(n) >= at(n.saturating_sub(1).max(1)));
    }

    proptest! {
        #[test]
        fn delta_increases_in_q(q in 1e-6f64..0.4, dq in 1e-4f64..0.09, n in 1u64..5000) {
            let a = stat_distance_exact(q, n).unwrap();
            let b = stat_distance_exact(q + dq, n).unwrap();
            prop_assert!(b.ln > a.ln);
        }

        #[test]
        fn linearization_bound(frac in 1e-6f64..0.999, n in 1u64..2000) {
            let q = frac * 0.1 / n as f64;
            let exact = stat_distance_exact(q, n).unwrap();
            let (lin, _) = stat_distance_linear(q, n);
            let rel = 1.0 - (lin.ln - exact.ln).exp();
            prop_assert!(rel >= -1e-12);
            prop_assert!(rel <= (n as f64) * q);
        }

        #[test]
        fn pa_composes(q in 0.0f64..0.5, a in 0u32..4, b in 0u32..4) {
            let lhs = pa_advantage_map(q, a + b);
            let rhs = pa_advantage_map(pa_advantage_map(q, a), b);
            prop_assert!((lhs - rhs).abs() <= 1e-15 * lhs.max(1e-300));
        }
    }
}
