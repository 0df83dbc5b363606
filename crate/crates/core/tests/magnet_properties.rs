use hitodmr_core::magnet::{MagnetParams, NanomagnetState};
use proptest::prelude::*;

fn params() -> impl Strategy<Value = MagnetParams> {
    (450.0..800.0f64, 0.2..0.6f64, 10.0..100.0f64).prop_map(|(tc, beta, coupling)| MagnetParams {
        curie_temperature: tc,
        critical_exponent: beta,
        coupling_scale: coupling,
        ..MagnetParams::default()
    })
}

proptest! {
    #[test]
    fn splitting_is_non_increasing_and_vanishes_above_tc(p in params(), seed in 0u64..1000) {
        let m = NanomagnetState::new(p, 296.0, seed).unwrap();
        let mut prev = f64::INFINITY;
        for i in 0..=200 {
            let t = 296.0 + i as f64 * (p.curie_temperature + 100.0 - 296.0) / 200.0;
            let (s, w) = m.spectral_effect(t);
            prop_assert!(s <= prev && s >= 0.0 && w >= 0.0);
            if t >= p.curie_temperature {
                prop_assert_eq!(s, 0.0);
                prop_assert_eq!(w, 0.0);
            }
            prev = s;
        }
    }

    #[test]
    fn direction_resamples_exactly_when_cooling_after_passing_tc(
        p in params(),
        seed in 0u64..1000,
        visits in prop::collection::vec(296.0..900.0f64, 1..40),
    ) {
        let tc = p.curie_temperature;
        let mut m = NanomagnetState::new(p, 296.0, seed).unwrap();
        let mut max_t = 296.0_f64;
        for t in visits {
            let before = m.clone();
            m.visit_temperature(t).unwrap();
            let expect_resample = t < tc && max_t > tc;
            prop_assert_eq!(m.draws != before.draws, expect_resample);
            if !expect_resample {
                prop_assert_eq!(m.direction, before.direction);
            }
            max_t = if expect_resample { t } else { max_t.max(t) };
            prop_assert_eq!(m.max_t_since_demag, max_t);
        }
    }

    #[test]
    fn identical_sub_tc_histories_give_identical_splittings(
        seed in 0u64..1000,
        round in prop::collection::vec(296.0..600.0f64, 1..20),
        probe in 296.0..600.0f64,
    ) {
        let mut m = NanomagnetState::new(MagnetParams::default(), 296.0, seed).unwrap();
        for &t in &round {
            m.visit_temperature(t).unwrap();
        }
        let first = m.spectral_effect(probe);
        for &t in &round {
            m.visit_temperature(t).unwrap();
        }
        prop_assert_eq!(m.spectral_effect(probe), first);
    }
}

#[test]
fn seeded_directions_are_uniform_on_the_sphere() {
    // |projection| on a fixed axis is uniform on [0, 1] for isotropic draws.
    let n = 4000;
    let mut bins = [0usize; 4];
    for seed in 0..n {
        let m = NanomagnetState::new(MagnetParams::default(), 296.0, seed).unwrap();
        let p = m.projection().abs();
        bins[((p * 4.0) as usize).min(3)] += 1;
    }
    for b in bins {
        let expected = n as f64 / 4.0;
        assert!((b as f64 - expected).abs() < 4.0 * expected.sqrt(), "{bins:?}");
    }
}
