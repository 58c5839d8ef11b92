// SPDX-License-Identifier: Apache-2.0

use std::f64::consts::TAU;
use std::path::Path;
use std::process::{Command, Output};

use serde_json::Value;

fn kqfc(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_kqfc"))
        .args(args)
        .output()
        .expect("binary runs")
}

fn ok(args: &[&str]) -> Output {
    let out = kqfc(args);
    assert!(
        out.status.success(),
        "kqfc {args:?} failed: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

fn json(args: &[&str]) -> Value {
    let mut all = args.to_vec();
    all.extend(["--format", "json"]);
    serde_json::from_slice(&ok(&all).stdout).expect("valid JSON")
}

fn num(v: &Value, path: &[&str]) -> f64 {
    let mut cur = v;
    for key in path {
        cur = &cur[*key];
    }
    cur.as_f64().unwrap_or_else(|| panic!("{path:?} is not a number: {cur}"))
}

fn write_file(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn no_arguments_prints_usage_and_exits_2() {
    let out = kqfc(&[]);
    assert_eq!(out.status.code(), Some(2));
    let text = String::from_utf8_lossy(&out.stderr);
    assert!(text.contains("Usage:"), "{text}");
}

#[test]
fn usage_errors_exit_2() {
    for args in [
        &["--preset", "bogus", "threshold"][..],
        &["--preset", "normal", "--set", "foo=1", "threshold"],
        &["--preset", "normal", "--set", "q0", "threshold"],
        &["--preset", "normal", "--frobnicate", "threshold"],
        &["--preset", "normal", "--stage", "V", "duan"],
        &["--preset", "normal", "--set", "q0=-5", "threshold"],
        &["threshold"],
        &["--preset", "anomalous", "duan", "--f-min", "5", "--f-max", "1"],
        &["--preset", "anomalous", "sweep", "--plan", "/nonexistent/plan.toml"],
    ] {
        let out = kqfc(args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", String::from_utf8_lossy(&out.stderr));
    }
}

#[test]
fn computation_errors_exit_1() {
    let out = kqfc(&["--preset", "anomalous", "threshold", "--ceiling", "1e-3"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8_lossy(&out.stderr).contains("computation error"));
    assert!(out.stdout.is_empty());
}

#[test]
fn preset_expansion_snapshot() {
    let a = json(&["--preset", "anomalous", "steady"]);
    let r = &a["meta"]["config"]["resonator"];
    assert_eq!(r["radius"].as_f64(), Some(23e-6));
    assert_eq!(r["fsr"].as_f64(), Some(989.592e9));
    assert_eq!(r["f0"].as_f64(), Some(193.251e12));
    assert!((r["d2"].as_f64().unwrap() / (1.435 * TAU * 1e7) - 1.0).abs() < 1e-15);
    assert_eq!(r["a_eff"].as_f64(), Some(1.10e-12));
    assert_eq!(r["q0"].as_f64(), Some(1e6));
    assert_eq!(r["r"].as_f64(), Some(1.222));
    assert_eq!(r["n2"].as_f64(), Some(2.6e-19));
    assert_eq!(num(&a, &["meta", "config", "pump", "sigma_c"]), TAU * 8e9);
    assert_eq!(a["meta"]["preset"], "anomalous");

    let n = json(&["--preset", "normal", "steady"]);
    let r = &n["meta"]["config"]["resonator"];
    assert_eq!(r["radius"].as_f64(), Some(23e-6));
    assert_eq!(r["fsr"].as_f64(), Some(1019.553e9));
    assert_eq!(r["f0"].as_f64(), Some(193.797e12));
    assert!((r["d2"].as_f64().unwrap() / (-5.676 * TAU * 1e8) - 1.0).abs() < 1e-15);
    assert_eq!(r["a_eff"].as_f64(), Some(0.968e-12));
    assert_eq!(r["q0"].as_f64(), Some(1e6));
    assert_eq!(r["r"].as_f64(), Some(1.222));
    assert_eq!(num(&n, &["meta", "config", "pump", "sigma_c"]), TAU * 18e9);
    assert_eq!(num(&n, &["meta", "a_in"]), 4e10);
}

#[test]
fn rad_s_flag_converts_by_exactly_two_pi() {
    let sigma_hz = 3e9;
    let sigma_rad = format!("{:?}", TAU * sigma_hz);
    let f_rad = format!("{:?}", TAU * 1e9);
    let base = ["--preset", "anomalous", "--mode-l", "1", "duan", "--f-points", "1"];
    let mut hz_args = base.to_vec();
    hz_args.extend(["--sigma-c", "3e9", "--f-min", "1e9", "--f-max", "1e9"]);
    let mut rad_args = base.to_vec();
    rad_args.extend([
        "--rad-s",
        "--sigma-c",
        &sigma_rad,
        "--f-min",
        &f_rad,
        "--f-max",
        &f_rad,
    ]);
    let h = json(&hz_args);
    let r = json(&rad_args);
    assert_eq!(num(&h, &["meta", "config", "pump", "sigma_c"]), TAU * sigma_hz);
    assert_eq!(h["meta"], r["meta"]);
    assert_eq!(h["records"], r["records"]);
    assert_eq!(h["records"][0]["f_hz"].as_f64(), Some(TAU * 1e9 / TAU));
}

#[test]
fn q0_override_halves_kappa0() {
    let base = json(&["--preset", "normal", "steady"]);
    let over = json(&["--preset", "normal", "--set", "q0=2e6", "steady"]);
    let k0 = num(&base, &["meta", "rates", "kappa0"]);
    let k1 = num(&over, &["meta", "rates", "kappa0"]);
    assert_eq!(k1, k0 / 2.0);
    let flag = json(&["--preset", "normal", "--q0", "2e6", "steady"]);
    assert_eq!(num(&flag, &["meta", "rates", "kappa0"]), k1);
}

#[test]
fn overrides_are_last_write_wins() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write_file(
        dir.path(),
        "ring.toml",
        "# partial override of the preset\n[resonator]\nq0 = 3.0e6 # intrinsic Q\n[pump]\nmode_l = 2\n",
    );
    let v = json(&["--preset", "anomalous", "--config", &cfg, "steady"]);
    assert_eq!(num(&v, &["meta", "config", "resonator", "q0"]), 3e6);
    assert_eq!(v["meta"]["config"]["pump"]["mode_l"], 2);

    let v = json(&[
        "--preset", "anomalous", "--config", &cfg, "--set", "q0=4e6", "--set", "q0=5e6", "steady",
    ]);
    assert_eq!(num(&v, &["meta", "config", "resonator", "q0"]), 5e6);

    let v = json(&["--preset", "anomalous", "--set", "r=1.0", "--r", "1.5", "steady"]);
    assert_eq!(num(&v, &["meta", "config", "resonator", "r"]), 1.5);

    let v = json(&["--preset", "anomalous", "--set", "a_in=2e10", "--p-in", "0.5", "steady"]);
    assert_eq!(num(&v, &["meta", "p_in"]), 0.5);
}

#[test]
fn steady_sweep_matches_the_below_threshold_cubic() {
    let out = ok(&[
        "--preset", "anomalous", "steady", "--sigma-c", "8e9", "--mode-l", "4", "--a-in", "1e10", "--points", "41",
    ]);
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("a_in,stage,a_p,a_si,theta,psi,residual"));

    let meta = json(&[
        "--preset", "anomalous", "steady", "--sigma-c", "8e9", "--mode-l", "4", "--a-in", "1e10",
    ]);
    let scale = num(&meta, &["meta", "normalization", "drive_scale"]);
    let zeta = num(&meta, &["meta", "zeta0"]);

    let mut grid = Vec::new();
    let mut seen = std::collections::BTreeSet::new();
    for line in lines {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 7);
        let a_in: f64 = f[0].parse().unwrap();
        let a_p: f64 = f[2].parse().unwrap();
        let a_si: f64 = f[3].parse().unwrap();
        let residual: f64 = f[6].parse().unwrap();
        seen.insert(f[1].to_string());
        if grid.last() != Some(&a_in) {
            grid.push(a_in);
        }
        assert!(residual < 1e-9, "{line}");
        if a_si == 0.0 {
            let x = a_p * a_p;
            let drive = scale * a_in;
            let lhs = x * ((x - zeta).powi(2) + 1.0);
            assert!((lhs - drive * drive).abs() <= 1e-9 * (drive * drive).max(1.0), "{line}");
        }
    }
    assert_eq!(grid.len(), 41);
    assert_eq!(grid[0], 0.0);
    assert_eq!(grid[40], 1e10);
    assert!(seen.contains("I") && seen.contains("IV"), "{seen:?}");
}

#[test]
fn absent_stage_cells_are_null_or_empty() {
    let args = [
        "--preset", "anomalous", "--stage", "II", "map-rf", "--r-points", "2", "--f-min", "1e8", "--f-max", "1e9",
        "--f-points", "2",
    ];
    let csv = String::from_utf8(ok(&args).stdout).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,f_hz,cs_min,theta_s,theta_i"));
    let rows: Vec<&str> = lines.collect();
    assert_eq!(rows.len(), 4);
    assert!(rows.iter().all(|r| r.ends_with(",,,")), "{rows:?}");

    let v = json(&args);
    for rec in v["records"].as_array().unwrap() {
        assert!(rec["cs_min"].is_null() && rec["theta_s"].is_null() && rec["theta_i"].is_null());
        assert!(rec["f_hz"].is_f64());
    }
    assert_eq!(v["diagnostics"][0]["status"], "absent-stage");
}

#[test]
fn spectrum_layouts() {
    let args = ["--preset", "anomalous", "spectrum", "--f-min", "1e9", "--f-max", "1e10", "--f-points", "3"];
    let csv = String::from_utf8(ok(&args).stdout).unwrap();
    let header: Vec<&str> = csv.lines().next().unwrap().split(',').collect();
    assert_eq!(header.len(), 33);
    assert_eq!(&header[..5], &["omega_hz", "re_s11", "im_s11", "re_s12", "im_s12"]);
    assert_eq!(header[32], "im_s44");
    assert_eq!(csv.lines().count(), 4);

    let v = json(&args);
    let rec = &v["records"][1];
    let s = rec["s_a"].as_array().unwrap();
    assert_eq!(s.len(), 4);
    assert!(s.iter().all(|row| row.as_array().unwrap().len() == 4));
    let row1: Vec<&str> = csv.lines().nth(2).unwrap().split(',').collect();
    let s23: f64 = row1[1 + 2 * (4 + 2)].parse().unwrap();
    assert_eq!(s[1][2][0].as_f64(), Some(s23));
}

#[test]
fn out_flag_writes_the_file() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("bw.csv");
    let out = ok(&["--preset", "anomalous", "--out", path.to_str().unwrap(), "bandwidth"]);
    assert!(out.stdout.is_empty());
    let text = std::fs::read_to_string(&path).unwrap();
    assert!(text.starts_with("width_hz,f_star_hz,cs_extremum,f_lo_hz,f_hi_hz,edge_clipped\n"));
    assert!(String::from_utf8_lossy(&out.stderr).contains("bandwidth"));
}

#[test]
fn sweep_output_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_file(
        dir.path(),
        "plan.toml",
        r#"
target = "map_rf"
preset = "anomalous"

[[axes]]
name = "r"
min = 1.0
max = 1.4
count = 2

[[axes]]
name = "omega"
spacing = "log"
min = 1e8
max = 1e10
count = 4
"#,
    );
    for format in ["csv", "json"] {
        let runs: Vec<Vec<u8>> = ["1", "1", "4"]
            .iter()
            .map(|w| ok(&["sweep", "--plan", &plan, "--workers", w, "--format", format]).stdout)
            .collect();
        assert!(!runs[0].is_empty());
        assert_eq!(runs[0], runs[1], "{format}");
        assert_eq!(runs[0], runs[2], "{format}");
    }
    let csv = String::from_utf8(ok(&["sweep", "--plan", &plan]).stdout).unwrap();
    assert!(csv.starts_with("r,omega,c_s,theta_s,theta_i,dx_minus_sq,dy_plus_sq,status\n"), "{csv}");
    assert_eq!(csv.lines().count(), 9);
}

#[test]
fn sweep_plan_honours_command_line_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let plan = write_file(
        dir.path(),
        "plan.toml",
        "target = \"threshold\"\npreset = \"anomalous\"\n[pump]\nsigma_c_hz = 3e9\nmode_l = 1\n",
    );
    let a = json(&["sweep", "--plan", &plan]);
    let b = json(&["sweep", "--plan", &plan, "--set", "q0=2e6"]);
    assert_eq!(num(&b, &["plan", "base", "resonator", "q0"]), 2e6);
    assert!(b["records"][0]["p_th_w"].as_f64().unwrap().is_finite());
    assert_ne!(a["records"], b["records"]);
}
