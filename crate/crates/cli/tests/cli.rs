use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;

fn hitodmr(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitodmr")).args(args).output().unwrap()
}

fn hitodmr_env(args: &[&str], key: &str, val: &Path) -> Output {
    Command::new(env!("CARGO_BIN_EXE_hitodmr")).args(args).env(key, val).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn stdout_json(o: &Output) -> Value {
    serde_json::from_slice(&o.stdout).unwrap_or_else(|e| panic!("{e}: {}", String::from_utf8_lossy(&o.stdout)))
}

fn p(path: &Path) -> &str {
    path.to_str().unwrap()
}

fn csv_files(dir: &Path) -> Vec<PathBuf> {
    let mut v: Vec<PathBuf> = std::fs::read_dir(dir)
        .unwrap()
        .map(|e| e.unwrap().path())
        .filter(|p| p.extension().is_some_and(|e| e == "csv"))
        .collect();
    v.sort();
    v
}

const SMALL_ODMR: &str = r#"
seed = 3

[odmr]
peak_temperatures_k = [296.0, 500.0]
heat_us = 3.0
wait_us = -0.2
frequencies_mhz = [2800.0, 2900.0, 2.0]
accumulate = 20000
"#;

fn small_preset_dir() -> tempfile::TempDir {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("small.toml"), SMALL_ODMR).unwrap();
    dir
}

fn tree(dir: &Path) -> Vec<(PathBuf, Vec<u8>)> {
    let mut out = Vec::new();
    for e in std::fs::read_dir(dir).unwrap() {
        let path = e.unwrap().path();
        if path.is_dir() {
            out.extend(tree(&path));
        } else {
            out.push((path.strip_prefix(dir).unwrap().to_path_buf(), std::fs::read(&path).unwrap()));
        }
    }
    out.sort();
    out
}

#[test]
fn sensitivity_prints_both_figures() {
    let o = hitodmr(&[
        "sensitivity",
        "--count-rate",
        "8e6",
        "--linewidth",
        "10",
        "--contrast",
        "0.05",
        "--slope-khz-per-k",
        "-74",
    ]);
    assert_eq!(code(&o), 0);
    let v = stdout_json(&o);
    let b = v["eta_b_t_per_rthz"].as_f64().unwrap();
    assert!((b - 2.5e-6).abs() < 0.05e-6, "{b}");
    assert!(v["eta_t_k_per_rthz"].as_f64().unwrap() > 0.0);
}

#[test]
fn invalid_sensitivity_input_exits_2() {
    let o = hitodmr(&["sensitivity", "--count-rate", "0", "--linewidth", "10", "--contrast", "0.05"]);
    assert_eq!(code(&o), 2);
}

#[test]
fn unknown_preset_exits_2() {
    let out = tempfile::tempdir().unwrap();
    let o = hitodmr(&["simulate", "odmr", "--preset", "nope", "--out", p(out.path())]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("nope"));
}

#[test]
fn unknown_config_key_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("c.toml");
    std::fs::write(&cfg, format!("{SMALL_ODMR}\n[thermal]\ncooling_time = 1.0\n")).unwrap();
    let o = hitodmr(&["simulate", "odmr", "--config", p(&cfg), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}

#[test]
fn missing_input_file_exits_4() {
    let dir = tempfile::tempdir().unwrap();
    let o = hitodmr(&["fit", "rabi", p(&dir.path().join("absent.csv"))]);
    assert_eq!(code(&o), 4);
}

#[test]
fn malformed_trace_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let f = dir.path().join("t.csv");
    std::fs::write(&f, "time_s,counts\n0,1\nx,2\n").unwrap();
    assert_eq!(code(&hitodmr(&["fit", "echo", p(&f)])), 2);
}

#[test]
fn preset_dir_override_is_used_and_checked() {
    let presets = small_preset_dir();
    let out = tempfile::tempdir().unwrap();
    let o = hitodmr_env(
        &["simulate", "odmr", "--preset", "small", "--out", p(out.path())],
        "HITODMR_PRESET_DIR",
        presets.path(),
    );
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert_eq!(csv_files(out.path()).len(), 2);
    let run: Value = serde_json::from_str(&std::fs::read_to_string(out.path().join("run.json")).unwrap()).unwrap();
    assert_eq!(run["config"]["seed"], 3);

    // The override directory replaces the bundled presets.
    let o = hitodmr_env(
        &["simulate", "odmr", "--preset", "fig1d", "--out", p(out.path())],
        "HITODMR_PRESET_DIR",
        presets.path(),
    );
    assert_eq!(code(&o), 2);
}

#[test]
fn same_seed_gives_byte_identical_output() {
    let presets = small_preset_dir();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for out in [&a, &b] {
        let o = hitodmr_env(
            &["simulate", "odmr", "--preset", "small", "--seed", "11", "--out", p(out.path())],
            "HITODMR_PRESET_DIR",
            presets.path(),
        );
        assert_eq!(code(&o), 0);
    }
    let (ta, tb) = (tree(a.path()), tree(b.path()));
    assert!(!ta.is_empty());
    assert_eq!(ta, tb);

    let c = tempfile::tempdir().unwrap();
    hitodmr_env(
        &["simulate", "odmr", "--preset", "small", "--seed", "12", "--out", p(c.path())],
        "HITODMR_PRESET_DIR",
        presets.path(),
    );
    let name = Path::new("odmr_00.csv");
    let get = |t: &[(PathBuf, Vec<u8>)]| t.iter().find(|e| e.0 == name).unwrap().1.clone();
    assert_ne!(get(&ta), get(&tree(c.path())));
}

#[test]
fn zero_shots_is_noise_free_and_seed_independent() {
    let presets = small_preset_dir();
    let (a, b) = (tempfile::tempdir().unwrap(), tempfile::tempdir().unwrap());
    for (out, seed) in [(&a, "1"), (&b, "2")] {
        let o = hitodmr_env(
            &["simulate", "odmr", "--preset", "small", "--shots", "0", "--seed", seed, "--out", p(out.path())],
            "HITODMR_PRESET_DIR",
            presets.path(),
        );
        assert_eq!(code(&o), 0);
    }
    let (fa, fb) = (csv_files(a.path()), csv_files(b.path()));
    for (x, y) in fa.iter().zip(&fb) {
        assert_eq!(std::fs::read(x).unwrap(), std::fs::read(y).unwrap());
    }
    // Expected counts are exact, so the fit lands on the model center.
    let o = hitodmr(&["fit", "lorentzian", p(&fa[0])]);
    let v = stdout_json(&o);
    let center =
        v["params"].as_array().unwrap().iter().find(|q| q["name"] == "center_1").unwrap()["value"].as_f64().unwrap();
    let d = hitodmr_core::nvspin::NvEnsemble::default().zfs(296.0).unwrap();
    assert!((center - d).abs() < 0.05, "{center} vs {d}");
}

#[test]
fn bundled_odmr_preset_spans_the_zero_field_shift() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&hitodmr(&["simulate", "odmr", "--out", p(out.path())])), 0);
    let files = csv_files(out.path());
    assert_eq!(files.len(), 5);
    let centers: Vec<f64> = files
        .iter()
        .map(|f| {
            let v = stdout_json(&hitodmr(&["fit", "lorentzian", p(f)]));
            v["params"].as_array().unwrap().iter().find(|q| q["name"] == "center_1").unwrap()["value"].as_f64().unwrap()
        })
        .collect();
    assert!((centers[0] - 2870.0).abs() < 1.0, "{centers:?}");
    assert!((centers[4] - 2758.0).abs() < 4.0, "{centers:?}");
    assert!(centers.windows(2).all(|w| w[1] < w[0]), "{centers:?}");
}

#[test]
fn t1_simulation_round_trips_through_the_fitter() {
    let out = tempfile::tempdir().unwrap();
    assert_eq!(code(&hitodmr(&["simulate", "t1", "--out", p(out.path())])), 0);
    let res = out.path().join("fit.json");
    let o = hitodmr(&["fit", "t1", p(&out.path().join("t1_decays.csv")), "--out", p(&res), "--report"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(String::from_utf8_lossy(&o.stderr).contains("t1_saturation"));
    let v: Value = serde_json::from_str(&std::fs::read_to_string(res).unwrap()).unwrap();
    let n =
        v["fit"]["params"].as_array().unwrap().iter().find(|q| q["name"] == "n").unwrap()["value"].as_f64().unwrap();
    assert!((n - 5.83).abs() < 0.6, "{n}");
}

#[test]
fn calibrate_needs_several_delays() {
    let presets = small_preset_dir();
    let out = tempfile::tempdir().unwrap();
    hitodmr_env(
        &["simulate", "odmr", "--preset", "small", "--out", p(out.path())],
        "HITODMR_PRESET_DIR",
        presets.path(),
    );
    // Spectra exist but carry no delay label.
    let f = csv_files(out.path());
    let o = hitodmr(&["calibrate", p(&f[0]), p(&f[1])]);
    assert_eq!(code(&o), 2);

    // A single delay cannot be extrapolated.
    let dir = tempfile::tempdir().unwrap();
    let row = dir.path().join("od05");
    std::fs::create_dir(&row).unwrap();
    for i in 0..3 {
        let src = std::fs::read_to_string(f[1].with_extension("json")).unwrap();
        let mut meta: Value = serde_json::from_str(&src).unwrap();
        meta["labels"]["tw"] = Value::from(1e-6);
        std::fs::copy(&f[1], row.join(format!("s{i}.csv"))).unwrap();
        std::fs::write(row.join(format!("s{i}.json")), meta.to_string()).unwrap();
    }
    let inputs: Vec<String> = csv_files(&row).iter().map(|x| p(x).to_string()).collect();
    let mut args = vec!["calibrate"];
    args.extend(inputs.iter().map(String::as_str));
    let o = hitodmr(&args);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("distinct delay"));
}

#[test]
fn program_target_runs_a_user_program() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("p.txt");
    std::fs::write(
        &prog,
        "sweep w = [2850MHz, 2870MHz, 2890MHz] ( [PR 3us -> H(1) 3us -> wait 0.2us -> MW w 30ns -> PR 3us] x 100 )\n",
    )
    .unwrap();
    let out = dir.path().join("o");
    let o = hitodmr(&[
        "simulate",
        "program",
        "--program",
        p(&prog),
        "--stationary",
        "500",
        "--seed",
        "5",
        "--out",
        p(&out),
    ]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    assert!(out.join("record.csv").is_file());

    let o = hitodmr(&["simulate", "program", "--seed", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
    std::fs::write(&prog, "PR 3us wait 1us\n").unwrap();
    let o = hitodmr(&["simulate", "program", "--program", p(&prog), "--seed", "5", "--out", p(&out)]);
    assert_eq!(code(&o), 2);
}

#[test]
fn program_without_seed_is_rejected() {
    let dir = tempfile::tempdir().unwrap();
    let prog = dir.path().join("p.txt");
    std::fs::write(&prog, "PR 3us\n").unwrap();
    let o = hitodmr(&["simulate", "program", "--program", p(&prog), "--out", p(&dir.path().join("o"))]);
    assert_eq!(code(&o), 2);
}
