//! Browser bindings. Each exported function returns a JSON string so the page
//! can `JSON.parse` it; the plain Rust functions behind them are what the
//! native tests call.

use kljn_core::circuits::{analytic_levels, Bit, LoopConfig};
use kljn_core::noisegen::RngStream;
use kljn_core::protocol::{run_br_bep_with_bits, run_kljn_bep_with_bits, BrConfig, DefenseConfig};
use kljn_core::security::security_report;
use serde::Serialize;
use wasm_bindgen::prelude::*;

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LevelRow {
    pub bits: String,
    pub ms_u: f64,
    pub ms_i: f64,
    pub expected_ms_u: f64,
    pub expected_ms_i: f64,
    pub classification: String,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SecurityPoint {
    pub key_length: u64,
    pub log10_delta_exact: f64,
    pub log10_delta_linear: f64,
    pub satisfied: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct LineSnapshot {
    /// Node positions as a fraction of the line length.
    pub positions: Vec<f64>,
    /// Time of each frame (s).
    pub times: Vec<f64>,
    /// Node voltages per frame (V).
    pub frames: Vec<Vec<f64>>,
    pub alice_inferred_bob: Option<String>,
    pub bob_inferred_alice: Option<String>,
}

fn bit_name(b: Bit) -> String {
    match b {
        Bit::L => "L".into(),
        Bit::H => "H".into(),
    }
}

/// One BEP per bit pair; measured mean squares at Alice's end beside the
/// analytic levels.
pub fn channel_levels(r_l: f64, r_h: f64, bandwidth: f64, tau: f64, seed: u64) -> kljn_core::Result<Vec<LevelRow>> {
    let t_eff = 8e8;
    let table = analytic_levels(r_l, r_h, t_eff, bandwidth)?;
    let pairs = [(Bit::L, Bit::L), (Bit::L, Bit::H), (Bit::H, Bit::L), (Bit::H, Bit::H)];
    pairs
        .iter()
        .enumerate()
        .map(|(i, &(a, b))| {
            let cfg = LoopConfig::new(r_l, r_h, a, b, t_eff, bandwidth);
            let bep = run_kljn_bep_with_bits(&cfg, tau, &DefenseConfig::default(), None, i as u64, RngStream::new(seed, i as u64, 0))?;
            let (expected_ms_u, expected_ms_i) = match (a, b) {
                (Bit::L, Bit::L) => (table.ms_u_ll, table.ms_i_ll),
                (Bit::H, Bit::H) => (table.ms_u_hh, table.ms_i_hh),
                _ => (table.ms_u_lh, table.ms_i_lh),
            };
            Ok(LevelRow {
                bits: format!("{}{}", bit_name(a), bit_name(b)),
                ms_u: bep.record.ms_u,
                ms_i: bep.record.ms_i,
                expected_ms_u,
                expected_ms_i,
                classification: format!("{:?}", bep.record.classification),
            })
        })
        .collect()
}

/// Statistical distance of the key from uniform, `points` log-spaced key lengths.
pub fn security_curve(q: f64, n_min: u64, n_max: u64, points: usize, epsilon: f64) -> kljn_core::Result<Vec<SecurityPoint>> {
    if n_min == 0 || n_max < n_min || points < 2 {
        return Err(kljn_core::Error::Domain("need 0 < n_min <= n_max and at least 2 points".into()));
    }
    let (lo, hi) = ((n_min as f64).ln(), (n_max as f64).ln());
    let mut lengths: Vec<u64> = (0..points)
        .map(|k| (lo + (hi - lo) * k as f64 / (points - 1) as f64).exp().round() as u64)
        .collect();
    lengths.dedup();
    lengths
        .into_iter()
        .map(|n| {
            let r = security_report(q, n, epsilon)?;
            Ok(SecurityPoint {
                key_length: n,
                log10_delta_exact: r.delta_exact.log10(),
                log10_delta_linear: r.delta_linear.log10(),
                satisfied: r.satisfied,
            })
        })
        .collect()
}

/// Voltage profile of an ideal BR line over one BEP, thinned to `frames` frames.
pub fn br_line_snapshot(alice_h: bool, bob_h: bool, frames: usize, seed: u64) -> kljn_core::Result<LineSnapshot> {
    let cfg = BrConfig::ideal();
    let bep = run_br_bep_with_bits(&cfg, Bit::from_bool(alice_h), Bit::from_bool(bob_h), 0, RngStream::new(seed, 0, 0))?;
    let states = &bep.history.states;
    let stride = (states.len() / frames.max(1)).max(1);
    let n = states.first().map_or(0, |s| s.node_voltages.len());
    let positions = (0..n).map(|k| k as f64 / (n.max(2) - 1) as f64).collect();
    let picked: Vec<_> = states.iter().step_by(stride).collect();
    Ok(LineSnapshot {
        positions,
        times: picked.iter().map(|s| s.time).collect(),
        frames: picked.iter().map(|s| s.node_voltages.clone()).collect(),
        alice_inferred_bob: bep.record.alice_inferred_bob.map(bit_name),
        bob_inferred_alice: bep.record.bob_inferred_alice.map(bit_name),
    })
}

fn to_js<T: Serialize>(r: kljn_core::Result<T>) -> Result<String, JsValue> {
    let v = r.map_err(|e| JsValue::from_str(&e.to_string()))?;
    serde_json::to_string(&v).map_err(|e| JsValue::from_str(&e.to_string()))
}

#[wasm_bindgen(js_name = channelLevels)]
pub fn channel_levels_js(r_l: f64, r_h: f64, bandwidth: f64, tau: f64, seed: u32) -> Result<String, JsValue> {
    to_js(channel_levels(r_l, r_h, bandwidth, tau, seed.into()))
}

#[wasm_bindgen(js_name = securityCurve)]
pub fn security_curve_js(q: f64, n_min: u32, n_max: u32, points: u32, epsilon: f64) -> Result<String, JsValue> {
    to_js(security_curve(q, n_min.into(), n_max.into(), points as usize, epsilon))
}

#[wasm_bindgen(js_name = brLineSnapshot)]
pub fn br_line_snapshot_js(alice_h: bool, bob_h: bool, frames: u32, seed: u32) -> Result<String, JsValue> {
    to_js(br_line_snapshot(alice_h, bob_h, frames as usize, seed.into()))
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn levels_follow_the_table() {
        let rows = channel_levels(1e3, 9e3, 500.0, 2.0, 3).unwrap();
        assert_eq!(rows.len(), 4);
        for r in &rows {
            assert!((r.ms_u / r.expected_ms_u - 1.0).abs() < 0.15, "{r:?}");
            assert!((r.ms_i / r.expected_ms_i - 1.0).abs() < 0.15, "{r:?}");
        }
        assert_eq!(rows[1].classification, "MidLevel");
    }

    #[test]
    fn security_curve_decreases() {
        let pts = security_curve(0.05, 10, 1000, 5, 1e-300).unwrap();
        assert_eq!(pts.first().unwrap().key_length, 10);
        assert_eq!(pts.last().unwrap().key_length, 1000);
        assert!(pts.windows(2).all(|w| w[1].log10_delta_exact < w[0].log10_delta_exact));
        assert!(security_curve(0.05, 0, 10, 5, 1e-300).is_err());
    }

    #[test]
    fn snapshot_reveals_both_bits() {
        let s = br_line_snapshot(true, false, 50, 1).unwrap();
        assert!(!s.frames.is_empty() && s.frames.len() <= 60);
        assert!(s.frames.iter().all(|f| f.len() == s.positions.len()));
        assert_eq!(s.alice_inferred_bob.as_deref(), Some("L"));
        assert_eq!(s.bob_inferred_alice.as_deref(), Some("H"));
    }
}
