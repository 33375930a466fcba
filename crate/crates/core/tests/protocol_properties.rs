use kljn_core::circuits::{Bit, LoopConfig};
use kljn_core::noisegen::{RngStream, BOLTZMANN};
use kljn_core::protocol::{
    assemble_keys, privacy_amplify, run_kljn_bep, run_random_walk_bep, DefenseConfig, RandomWalkConfig,
};
use kljn_core::security::{pa_advantage_map, QEstimate};
use proptest::prelude::*;

fn loop_config() -> LoopConfig {
    LoopConfig::new(1e3, 9e3, Bit::L, Bit::H, 8e8, 500.0)
}

#[test]
fn kept_beps_agree_and_keys_match() {
    let cfg = loop_config();
    let records: Vec<_> = (0..300)
        .map(|i| {
            run_kljn_bep(&cfg, 0.1, &DefenseConfig::default(), None, i, RngStream::new(21, i, 0))
                .unwrap()
                .record
        })
        .collect();
    for r in records.iter().filter(|r| r.kept && !r.error) {
        assert_eq!(r.alice_inferred_bob, Some(r.bob_bit));
        assert_eq!(r.bob_inferred_alice, Some(r.alice_bit));
        assert_ne!(r.alice_bit, r.bob_bit);
    }
    let kept = records.iter().filter(|r| r.kept).count();
    let errors = records.iter().filter(|r| r.kept && r.error).count();
    assert!(kept > 100, "{kept}");
    let (a, b) = assemble_keys(&records, 21);
    assert_eq!(a.len(), kept);
    assert_eq!(a.mismatches(&b), errors);
    let (a2, b2) = (privacy_amplify(&a, 2).unwrap(), privacy_amplify(&b, 2).unwrap());
    assert_eq!(a2.len(), kept / 4);
    if errors == 0 {
        assert_eq!(a2, b2);
    }
}

#[test]
fn random_walk_tracks_equilibrium_noise() {
    let cfg = loop_config();
    let walk = RandomWalkConfig::for_speed(1e6, 3.0, cfg.r_l, cfg.r_h, cfg.bandwidth);
    let prefactor = 4.0 * BOLTZMANN * cfg.t_eff * cfg.bandwidth;
    // Ratio sums over the whole walk window and over its thirds.
    let mut sums = [0.0f64; 4];
    let mut counts = [0usize; 4];
    for i in 0..50 {
        let bep = run_random_walk_bep(&cfg, &walk, 0.05, i, RngStream::new(33, i, 0)).unwrap();
        let w = bep.eve_window.clone();
        let third = w.len() / 3;
        for (k, j) in w.clone().enumerate() {
            let (ra, rb) = (bep.walk.r_a[j], bep.walk.r_b[j]);
            let pred = prefactor * ra * rb / (ra + rb);
            let ratio = bep.trace.u_c.samples[j].powi(2) / pred;
            let part = 1 + (k / third.max(1)).min(2);
            sums[0] += ratio;
            counts[0] += 1;
            sums[part] += ratio;
            counts[part] += 1;
        }
    }
    let decimation = 20.0;
    for (s, n) in sums.iter().zip(counts) {
        let mean = s / n as f64;
        let sigma = (2.0 * decimation / n as f64).sqrt();
        assert!((mean - 1.0).abs() < 5.0 * sigma, "mean ratio {mean} (n = {n}, sigma = {sigma})");
    }
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(256))]

    #[test]
    fn estimate_interval_contains_point(n in 1u64..100_000, frac in 0.0f64..=1.0) {
        let k = ((n as f64) * frac).round() as u64;
        let e = QEstimate::from_counts(k.min(n), n).unwrap();
        prop_assert!(e.ci_low <= e.q_hat && e.q_hat <= e.ci_high);
        prop_assert!((e.q_hat - (e.p_hat - 0.5)).abs() < 1e-12);
    }

    #[test]
    fn amplification_never_increases_advantage(q in 0.0f64..0.5, rounds in 0u32..8) {
        let after = pa_advantage_map(q, rounds);
        prop_assert!(after <= q + 1e-15);
        prop_assert!(after >= 0.0);
    }
}
