mod support;

use hitodmr_core::magnet::{MagnetParams, NanomagnetState};
use hitodmr_core::nvspin::NvEnsemble;
use hitodmr_core::pulseprog::{
    canned, execute, format, nominal_duration, parse, CannedName, CannedParams, ExecOptions, PulseError,
};
use hitodmr_core::thermal::ThermalModel;
use support::generator;

#[test]
fn parse_of_format_is_identity_on_generated_programs() {
    let mut g = generator(17, true);
    for case in 0..1000 {
        let p = g.program();
        let text = format(&p);
        let back = parse(&text).unwrap_or_else(|e| panic!("case {case}: {e}\n{text}"));
        assert_eq!(back, p, "case {case}: {text}");
        assert_eq!(format(&back), text);
    }
}

fn hot_thermal() -> ThermalModel {
    let base = ThermalModel::default();
    base.with_heating_rate(base.heating_rate_for_stationary(650.0))
}

#[test]
fn execution_is_deterministic_and_clock_matches_nominal_length() {
    let mut g = generator(5, false);
    let (thermal, ens) = (hot_thermal(), NvEnsemble::default());
    let mut executed = 0;
    for case in 0..500 {
        let p = g.program();
        let opts = ExecOptions { seed: case, ..Default::default() };
        let a = execute(&p, &thermal, &ens, None, &opts);
        let b = execute(&p, &thermal, &ens, None, &opts);
        assert_eq!(a, b);
        // Accumulating passes whose readout count changes between passes
        // (a PR right after another PR records nothing) are rejected.
        let a = match a {
            Ok(a) => a,
            Err(PulseError::SlotMismatch { .. }) => continue,
            Err(e) => panic!("{e}: {}", format(&p)),
        };
        executed += 1;
        let nominal = nominal_duration(&p).unwrap();
        assert!(
            (a.total_time - nominal).abs() <= 1e-9 * nominal.max(1e-6),
            "{} vs {nominal}: {}",
            a.total_time,
            format(&p)
        );
        for r in &a.rows {
            assert!(r.counts >= 0.0 && r.expected >= 0.0);
        }
    }
    assert!(executed >= 350, "only {executed} programs executed");
}

#[test]
fn every_canned_program_parses_and_executes() {
    let (thermal, ens) = (hot_thermal(), NvEnsemble::default());
    for name in CannedName::ALL {
        let mut params = CannedParams::defaults(name);
        params.accumulate = 2;
        params.passes = 1;
        let p = canned(name, &params).unwrap();
        assert_eq!(parse(&format(&p)).unwrap(), p, "{name}");
        let magnet = NanomagnetState::new(MagnetParams::default(), 296.0, 3).unwrap();
        let rec = execute(&p, &thermal, &ens, Some(magnet), &ExecOptions::default()).unwrap();
        assert!(!rec.rows.is_empty(), "{name}");
    }
}

#[test]
fn magnet_resampling_fast_forward_matches_unrolled_execution() {
    let base = ThermalModel::default();
    let thermal = base.with_heating_rate(base.heating_rate_for_peak(700.0, 4e-6));
    let ens = NvEnsemble::default();
    let magnet = NanomagnetState::new(MagnetParams::default(), 296.0, 11).unwrap();
    let cycle = "H(1) 4us -> wait 0us -> MW 2845MHz 30ns -> wait 2us -> PR 3us";
    let opts = ExecOptions { noise: false, ..Default::default() };
    let acc =
        execute(&parse(&format!("PR 3us -> [{cycle}] x 40")).unwrap(), &thermal, &ens, Some(magnet.clone()), &opts)
            .unwrap();
    let unrolled_text = format!("PR 3us -> {}", vec![cycle; 40].join(" -> "));
    let unrolled = execute(&parse(&unrolled_text).unwrap(), &thermal, &ens, Some(magnet), &opts).unwrap();
    let sum: f64 = unrolled.rows.iter().map(|r| r.expected).sum();
    assert!((acc.rows[0].expected - sum).abs() <= 1e-9 * sum);
    let (ma, mb) = (acc.magnet.unwrap(), unrolled.magnet.unwrap());
    assert_eq!(ma.draws, mb.draws);
    assert!(ma.draws > 40);
    for k in 0..3 {
        assert!((ma.direction[k] - mb.direction[k]).abs() < 1e-12);
    }
}
