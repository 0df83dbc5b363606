use hitodmr_core::analysis::*;
use hitodmr_core::nvspin::{synth_spectrum, DtRelation, NvEnsemble, SynthConfig};
use proptest::prelude::*;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Poisson};

fn dip(f: f64, b: f64, c: f64, w: f64, a: f64) -> f64 {
    let u = 2.0 * (f - c) / w;
    b * (1.0 - a / (1.0 + u * u))
}

fn poisson_resample(mean: &[f64], rng: &mut ChaCha8Rng) -> Vec<f64> {
    mean.iter().map(|&m| Poisson::new(m).unwrap().sample(rng)).collect()
}

fn std_dev(v: &[f64]) -> f64 {
    let m = v.iter().sum::<f64>() / v.len() as f64;
    (v.iter().map(|x| (x - m).powi(2)).sum::<f64>() / (v.len() - 1) as f64).sqrt()
}

#[test]
fn lorentzian_errors_agree_with_parametric_bootstrap() {
    let mut rng = ChaCha8Rng::seed_from_u64(8);
    let f: Vec<f64> = (0..81).map(|i| 2830.0 + i as f64).collect();
    let truth: Vec<f64> = f.iter().map(|&x| dip(x, 1e5, 2870.0, 10.0, 0.05)).collect();
    let y = poisson_resample(&truth, &mut rng);
    let fit = fit_lorentzian_xy(&f, &y, &LorentzianOptions::dips(1)).unwrap();
    assert!(fit.converged);
    let v = |k: &str| fit.value(k).unwrap();
    let model: Vec<f64> = f.iter().map(|&x| dip(x, v("baseline"), v("center_1"), v("width_1"), v("depth_1"))).collect();

    let (mut centers, mut widths) = (Vec::new(), Vec::new());
    for _ in 0..500 {
        let r = fit_lorentzian_xy(&f, &poisson_resample(&model, &mut rng), &LorentzianOptions::dips(1)).unwrap();
        centers.push(r.value("center_1").unwrap());
        widths.push(r.value("width_1").unwrap());
    }
    for (name, spread) in [("center_1", std_dev(&centers)), ("width_1", std_dev(&widths))] {
        let ratio = fit.stderr(name).unwrap() / spread;
        assert!((0.8..1.25).contains(&ratio), "{name}: reported {} vs bootstrap {spread}", fit.stderr(name).unwrap());
    }
}

#[test]
fn t1_fit_matches_grid_search_minimum() {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let temps = [300.0, 380.0, 450.0, 550.0, 650.0, 750.0, 850.0, 950.0];
    let pts: Vec<(f64, f64)> = temps
        .iter()
        .map(|&t| {
            let t1 = 1.0 / (1.9e-12 * f64::powf(t, 5.83) + 1.0 / 100e-6);
            let noise: f64 = rand_distr::StandardNormal.sample(&mut rng);
            (t, t1 * (0.08 * noise).exp())
        })
        .collect();
    let fit = fit_t1_powerlaw(&pts, true).unwrap();
    assert!(fit.converged);

    let cost = |ln_a: f64, n: f64, ln_sat: f64| -> f64 {
        pts.iter()
            .map(|&(t, t1)| {
                let rate = (ln_a + n * t.ln()).exp() + (-ln_sat).exp();
                (rate.ln() + t1.ln()).powi(2)
            })
            .sum()
    };
    // Coarse-to-fine grid over (n, ln t_sat) with ln A profiled on a line search.
    let profile = |n: f64, ls: f64| -> (f64, f64) {
        let (mut lo, mut hi) = (-n * 600f64.ln() - 15.0, -n * 600f64.ln() + 15.0);
        for _ in 0..200 {
            let m1 = lo + (hi - lo) / 3.0;
            let m2 = hi - (hi - lo) / 3.0;
            if cost(m1, n, ls) < cost(m2, n, ls) {
                hi = m2
            } else {
                lo = m1
            }
        }
        let a = 0.5 * (lo + hi);
        (cost(a, n, ls), a)
    };
    let (mut n_c, mut s_c, mut dn, mut ds) = (6.0, (100e-6f64).ln(), 0.5, 0.5);
    for _ in 0..12 {
        let mut best = (f64::INFINITY, n_c, s_c);
        for i in -10..=10 {
            for j in -10..=10 {
                let (n, s) = (n_c + dn * i as f64 / 10.0, s_c + ds * j as f64 / 10.0);
                let c = profile(n, s).0;
                if c < best.0 {
                    best = (c, n, s);
                }
            }
        }
        (n_c, s_c) = (best.1, best.2);
        dn *= 0.3;
        ds *= 0.3;
    }
    assert!((fit.value("n").unwrap() - n_c).abs() < 1e-4, "{} vs grid {n_c}", fit.value("n").unwrap());
    assert!((fit.value("t1_saturation").unwrap().ln() - s_c).abs() < 1e-4);
    assert!((fit.value("ln_A").unwrap() - profile(n_c, s_c).1).abs() < 1e-3);
}

#[test]
fn curie_fit_matches_profiled_grid_search() {
    let mut rng = ChaCha8Rng::seed_from_u64(21);
    let pts: Vec<(f64, f64)> = (0..25)
        .map(|i| {
            let t = 300.0 + 15.0 * i as f64;
            let s = if t < 615.0 { 40.0 * (1.0 - t / 615.0).powf(0.36) } else { 0.0 };
            let noise: f64 = rand_distr::StandardNormal.sample(&mut rng);
            (t, s + 0.5 * noise)
        })
        .collect();
    let fit = fit_curie(&pts).unwrap();
    // For fixed (T_C, β) the amplitude is linear: profile it out exactly.
    let profiled = |tc: f64, beta: f64| {
        let g: Vec<f64> = pts.iter().map(|&(t, _)| if t < tc { (1.0 - t / tc).powf(beta) } else { 0.0 }).collect();
        let gg: f64 = g.iter().map(|x| x * x).sum();
        let gy: f64 = g.iter().zip(&pts).map(|(g, p)| g * p.1).sum();
        let s0 = gy / gg;
        pts.iter().zip(&g).map(|(p, g)| (p.1 - s0 * g).powi(2)).sum::<f64>()
    };
    let (mut tc_c, mut b_c, mut dt, mut db) = (615.0, 0.36, 25.0, 0.15);
    let mut best = (f64::INFINITY, tc_c, b_c);
    for _ in 0..14 {
        for i in -20..=20 {
            for j in -20..=20 {
                let (tc, beta) = (tc_c + dt * i as f64 / 20.0, b_c + db * j as f64 / 20.0);
                let c = profiled(tc, beta);
                if c < best.0 {
                    best = (c, tc, beta);
                }
            }
        }
        (tc_c, b_c) = (best.1, best.2);
        dt *= 0.25;
        db *= 0.25;
    }
    assert!((fit.value("T_C").unwrap() - best.1).abs() < 1e-3, "{} vs {}", fit.value("T_C").unwrap(), best.1);
    assert!((fit.value("beta").unwrap() - best.2).abs() < 1e-5);
    assert!(fit.residual_norm.powi(2) <= best.0 * (1.0 + 1e-9));
}

#[test]
fn lorentzian_errors_scale_as_inverse_root_shots() {
    let ens = NvEnsemble::default();
    let grid: Vec<f64> = (0..101).map(|i| 2820.0 + i as f64).collect();
    let shots = [1_000u64, 10_000, 100_000, 1_000_000];
    let mean_err: Vec<f64> = shots
        .iter()
        .map(|&n| {
            (0..8)
                .map(|seed| {
                    let cfg = SynthConfig { shots: n, seed, ..SynthConfig::default() };
                    let s = synth_spectrum(&ens, &cfg, &grid).unwrap();
                    let mut opts = LorentzianOptions::dips(1);
                    opts.centers = Some(vec![2870.0]);
                    opts.width = Some(10.0);
                    fit_lorentzian(&s, &opts).unwrap().stderr("center_1").unwrap()
                })
                .sum::<f64>()
                / 8.0
        })
        .collect();
    let decades = (shots[3] as f64 / shots[0] as f64).log10();
    let slope = (mean_err[3] / mean_err[0]).log10() / decades;
    assert!((slope + 0.5).abs() < 0.5 * 1.5f64.log10() / decades * 2.0, "slope {slope}, errors {mean_err:?}");
    let ratio = mean_err[0] / mean_err[3];
    let ideal = 1000f64.sqrt();
    assert!(ratio > ideal / 1.5 && ratio < ideal * 1.5, "ratio {ratio}");
}

#[test]
fn scale_equivariance_of_fitters() {
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let f: Vec<f64> = (0..81).map(|i| 2830.0 + i as f64).collect();
    let truth: Vec<f64> = f.iter().map(|&x| dip(x, 3000.0, 2868.0, 11.0, 0.05)).collect();
    let y = poisson_resample(&truth, &mut rng);
    let base = fit_lorentzian_xy(&f, &y, &LorentzianOptions::dips(1)).unwrap();

    let t: Vec<f64> = (0..80).map(|i| i as f64 * 4e-9).collect();
    let rabi: Vec<f64> =
        t.iter().map(|&t| 1000.0 + 40.0 * (std::f64::consts::TAU * 16.7e6 * t).cos() * (-t / 0.4e-6).exp()).collect();
    let rabi_noisy = poisson_resample(&rabi, &mut rng);
    let rabi_base = fit_rabi(&t, &rabi_noisy).unwrap();

    let curie: Vec<(f64, f64)> = (0..20)
        .map(|i| {
            let temp = 300.0 + 18.0 * i as f64;
            let s = if temp < 615.0 { 40.0 * (1.0 - temp / 615.0).powf(0.36) } else { 0.0 };
            (temp, s + 0.3 * ((i * 7919 % 13) as f64 / 6.0 - 1.0))
        })
        .collect();
    let curie_base = fit_curie(&curie).unwrap();

    for k in [0.01, 0.37, 3.0, 250.0] {
        let ys: Vec<f64> = y.iter().map(|v| v * k).collect();
        let r = fit_lorentzian_xy(&f, &ys, &LorentzianOptions::dips(1)).unwrap();
        for name in ["center_1", "width_1", "depth_1"] {
            let (a, b) = (r.value(name).unwrap(), base.value(name).unwrap());
            assert!((a - b).abs() <= 1e-6 * b.abs(), "k = {k}, {name}: {a} vs {b}");
        }
        assert!((r.value("baseline").unwrap() / base.value("baseline").unwrap() / k - 1.0).abs() < 1e-6);

        let rs: Vec<f64> = rabi_noisy.iter().map(|v| v * k).collect();
        let r = fit_rabi(&t, &rs).unwrap();
        let (a, b) = (r.value("rabi_frequency").unwrap(), rabi_base.value("rabi_frequency").unwrap());
        assert!((a - b).abs() <= 1e-6 * b, "rabi k = {k}: {a} vs {b}");

        let cs: Vec<(f64, f64)> = curie.iter().map(|&(t, s)| (t, s * k)).collect();
        let r = fit_curie(&cs).unwrap();
        let (a, b) = (r.value("T_C").unwrap(), curie_base.value("T_C").unwrap());
        assert!((a - b).abs() <= 1e-6 * b, "curie k = {k}: {a} vs {b}");
    }
}

#[test]
fn cooling_extrapolation_with_origin_in_grid_is_exact() {
    let (te, t0, tau) = (296.0, 812.0, 1.1e-6);
    let pts: Vec<(f64, f64)> = [0.0f64, 0.3e-6, 0.6e-6, 1.0e-6, 1.4e-6, 2.2e-6]
        .iter()
        .map(|&t| (t, te + (t0 - te) * (-t / tau).exp()))
        .collect();
    let r = fit_cooling_extrapolation(&pts, None, te).unwrap();
    assert!((r.value("T0").unwrap() - t0).abs() < 1e-6 * t0);
    assert!((r.value("cooling_time").unwrap() - tau).abs() < 1e-6 * tau);
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs().max(1e-300)
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(64))]

    #[test]
    fn lorentzian_identifiable(b in 100.0..1e5f64, c in 2840.0..2900.0f64, w in 6.0..20.0f64, a in 0.02..0.3f64) {
        let f: Vec<f64> = (0..141).map(|i| 2800.0 + i as f64).collect();
        let y: Vec<f64> = f.iter().map(|&x| dip(x, b, c, w, a)).collect();
        let r = fit_lorentzian_xy(&f, &y, &LorentzianOptions::dips(1)).unwrap();
        prop_assert!(rel(r.value("center_1").unwrap(), c) < 1e-6);
        prop_assert!(rel(r.value("width_1").unwrap(), w) < 1e-6);
        prop_assert!(rel(r.value("depth_1").unwrap(), a) < 1e-6);
        prop_assert!(rel(r.value("baseline").unwrap(), b) < 1e-6);
    }

    #[test]
    fn cooling_identifiable(t0 in 350.0..1100.0f64, tau in 0.5e-6..2e-6f64, te in 280.0..310.0f64) {
        let pts: Vec<(f64, f64)> = [-0.2e-6f64, 0.3e-6, 0.6e-6, 1.0e-6, 1.4e-6, 2.2e-6]
            .iter()
            .map(|&t| (t, te + (t0 - te) * (-t.max(0.0) / tau).exp()))
            .collect();
        let r = fit_cooling_extrapolation(&pts, None, te).unwrap();
        prop_assert!(rel(r.value("T0").unwrap(), t0) < 1e-6);
        prop_assert!(rel(r.value("cooling_time").unwrap(), tau) < 1e-6);
    }

    #[test]
    fn t1_identifiable(t_cross in 400.0..700.0f64, n in 4.0..7.0f64, sat in 50e-6..300e-6f64) {
        // Power law and saturation balance at `t_cross`, inside the span.
        let ln_a = -sat.ln() - n * t_cross.ln();
        let pts: Vec<(f64, f64)> = (0..8)
            .map(|i| 300.0 + 100.0 * i as f64)
            .map(|t: f64| (t, 1.0 / ((ln_a + n * t.ln()).exp() + 1.0 / sat)))
            .collect();
        let r = fit_t1_powerlaw(&pts, true).unwrap();
        prop_assert!(rel(r.value("n").unwrap(), n) < 1e-6);
        prop_assert!(rel(r.value("ln_A").unwrap(), ln_a) < 1e-6);
        prop_assert!(rel(r.value("t1_saturation").unwrap(), sat) < 1e-6);
    }

    #[test]
    fn rabi_identifiable(c in 500.0..5000.0f64, a in 10.0..200.0f64, omega in 8.0..30.0f64, decay in 0.2e-6..2e-6f64) {
        let t: Vec<f64> = (0..100).map(|i| i as f64 * 4e-9).collect();
        let y: Vec<f64> = t.iter().map(|&t| c + a * (std::f64::consts::TAU * omega * 1e6 * t).cos() * (-t / decay).exp()).collect();
        let r = fit_rabi(&t, &y).unwrap();
        prop_assert!(rel(r.value("rabi_frequency").unwrap(), omega) < 1e-6);
        prop_assert!(rel(r.value("decay").unwrap(), decay) < 1e-6);
        prop_assert!(rel(r.value("amplitude").unwrap(), a) < 1e-6);
        prop_assert!(rel(r.value("offset").unwrap(), c) < 1e-6);
    }

    #[test]
    fn echo_and_fid_identifiable(a in 50.0..500.0f64, t2 in 0.3e-6..2e-6f64, c in 100.0..2000.0f64, cycles in 1.0..4.0f64) {
        let t: Vec<f64> = (0..60).map(|i| i as f64 * t2 / 15.0).collect();
        let y: Vec<f64> = t.iter().map(|&t| c + a * (-t / t2).exp()).collect();
        let r = fit_echo(&t, &y).unwrap();
        prop_assert!(rel(r.value("t2").unwrap(), t2) < 1e-6);

        let t2s = 65e-9 * (t2 / 1e-6);
        let det = cycles / t2s * 1e-6;
        let t: Vec<f64> = (0..80).map(|i| i as f64 * t2s / 30.0).collect();
        let y: Vec<f64> = t
            .iter()
            .map(|&t| c + a * (std::f64::consts::TAU * det * 1e6 * t).cos() * (-(t / t2s).powi(2)).exp())
            .collect();
        let r = fit_fid(&t, &y).unwrap();
        prop_assert!(rel(r.value("t2_star").unwrap(), t2s) < 1e-6);
        prop_assert!(rel(r.value("detuning").unwrap(), det) < 1e-6);
    }

    #[test]
    fn curie_identifiable(tc in 500.0..700.0f64, beta in 0.25..0.5f64, s0 in 10.0..80.0f64) {
        let pts: Vec<(f64, f64)> = (0..30)
            .map(|i| 300.0 + 15.0 * i as f64)
            .map(|t: f64| (t, if t < tc { s0 * (1.0 - t / tc).powf(beta) } else { 0.0 }))
            .collect();
        let r = fit_curie(&pts).unwrap();
        prop_assert!(rel(r.value("T_C").unwrap(), tc) < 1e-6);
        prop_assert!(rel(r.value("beta").unwrap(), beta) < 1e-6);
        prop_assert!(rel(r.value("s0").unwrap(), s0) < 1e-6);
    }

    #[test]
    fn splitting_identifiable(b in 500.0..1e5f64, amp in 0.01..0.05f64, d in 2850.0..2880.0f64, s in 12.0..40.0f64, w in 8.0..14.0f64) {
        let f: Vec<f64> = (0..121).map(|i| 2805.0 + i as f64).collect();
        let y: Vec<f64> = f
            .iter()
            .map(|&x| {
                let l = |c: f64| { let u = 2.0 * (x - c) / w; 1.0 / (1.0 + u * u) };
                b * (1.0 - amp * (l(d - s / 2.0) + l(d + s / 2.0)))
            })
            .collect();
        let r = measure_splitting(&f, &y, 10.0).unwrap();
        prop_assert!(rel(r.value("splitting").unwrap(), s) < 1e-6);
        prop_assert!(rel(r.value("center").unwrap(), d) < 1e-6);
        prop_assert!(rel(r.value("width").unwrap(), w) < 1e-6);
    }

    #[test]
    fn d_to_temperature_inverts_zfs(t in 296.0..700.0f64) {
        let dt = DtRelation::default();
        let est = d_to_temperature(&dt, dt.zfs(t).unwrap(), 0.1).unwrap();
        prop_assert!((est.value - t).abs() < 0.01);
    }
}
