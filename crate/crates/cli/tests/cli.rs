use std::fs;
use std::path::Path;
use std::process::{Command, Output};
use std::time::Instant;

use dsm_core::effects::var_g_hat;
use serde_json::Value;
use tempfile::TempDir;

fn dsm(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsm"))
        .args(args)
        .env_remove("DSM_WORKERS")
        .output()
        .expect("binary runs")
}

fn write(dir: &TempDir, name: &str, body: &str) -> String {
    let p = dir.path().join(name);
    fs::write(&p, body).unwrap();
    p.to_str().unwrap().to_string()
}

fn json(out: &Output) -> Value {
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    serde_json::from_slice(&out.stdout).unwrap()
}

fn method<'a>(list: &'a Value, name: &str) -> &'a Value {
    list.as_array()
        .unwrap()
        .iter()
        .find(|o| o["method"] == name)
        .unwrap_or_else(|| panic!("{name} missing"))
}

fn f(v: &Value) -> f64 {
    v.as_f64().unwrap()
}

const FIVE: &str = "study_id,g_t,n_t,g_c,n_c
s1,0.9,20,0.1,20
s2,-0.2,35,0.3,30
s3,1.6,12,0.4,14
s4,0.5,50,-0.3,45
s5,1.1,25,1.0,25
";

#[test]
fn five_study_totals_match_hand_pipeline() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "five.csv", FIVE);
    let r = json(&dsm(&["analyze", &input, "--format", "json"]));
    assert_eq!(r["format_version"], 1);
    assert_eq!(r["k"], 5);

    let rows: Vec<(f64, u32, f64, u32)> = vec![
        (0.9, 20, 0.1, 20),
        (-0.2, 35, 0.3, 30),
        (1.6, 12, 0.4, 14),
        (0.5, 50, -0.3, 45),
        (1.1, 25, 1.0, 25),
    ];
    let d: Vec<f64> = rows.iter().map(|r| r.0 - r.2).collect();
    let nt: Vec<f64> = rows
        .iter()
        .map(|r| (r.1 * r.3) as f64 / (r.1 + r.3) as f64)
        .collect();
    let v: Vec<f64> = rows
        .iter()
        .map(|r| var_g_hat(r.1, r.0).unwrap() + var_g_hat(r.3, r.2).unwrap())
        .collect();

    // SSW and Q_F
    let n_sum: f64 = nt.iter().sum();
    let ssw = nt.iter().zip(&d).map(|(n, d)| n * d).sum::<f64>() / n_sum;
    let qf: f64 = nt.iter().zip(&d).map(|(n, d)| n * (d - ssw).powi(2)).sum();
    assert!((f(&method(&r["effects"], "SSW")["result"]["value"]) - ssw).abs() < 1e-12);
    let q_f = r["q"]
        .as_array()
        .unwrap()
        .iter()
        .find(|q| q["weights"] == "F")
        .unwrap();
    assert!((f(&q_f["q"]) - qf).abs() < 1e-10);

    // DL from Q_IV
    let w: Vec<f64> = v.iter().map(|x| 1.0 / x).collect();
    let sw: f64 = w.iter().sum();
    let sw2: f64 = w.iter().map(|x| x * x).sum();
    let ybar = w.iter().zip(&d).map(|(w, d)| w * d).sum::<f64>() / sw;
    let qiv: f64 = w.iter().zip(&d).map(|(w, d)| w * (d - ybar).powi(2)).sum();
    let dl = ((qiv - 4.0) / (sw - sw2 / sw)).max(0.0);
    assert!((f(&method(&r["tau2"], "DL")["result"]["value"]) - dl).abs() < 1e-10);

    // SSC from E(Q_F) = Q_F
    let p: Vec<f64> = nt.iter().map(|n| n / n_sum).collect();
    let a: f64 = p.iter().map(|p| p * (1.0 - p)).sum();
    let b: f64 = p.iter().zip(&v).map(|(p, v)| p * (1.0 - p) * v).sum();
    let ssc = ((qf / n_sum - b) / a).max(0.0);
    assert!((f(&method(&r["tau2"], "SSC")["result"]["value"]) - ssc).abs() < 1e-10);

    // IV-DL on the DL estimate
    let wd: Vec<f64> = v.iter().map(|x| 1.0 / (x + dl)).collect();
    let iv = wd.iter().zip(&d).map(|(w, d)| w * d).sum::<f64>() / wd.iter().sum::<f64>();
    assert!((f(&method(&r["effects"], "IV-DL")["result"]["value"]) - iv).abs() < 1e-12);

    for family in [
        "heterogeneity",
        "tau2",
        "tau2_intervals",
        "effects",
        "effect_intervals",
    ] {
        for o in r[family].as_array().unwrap() {
            assert!(
                o.get("result").is_some(),
                "{family} {}: {}",
                o["method"],
                o["error"]
            );
        }
    }
    assert_eq!(r["effect_intervals"].as_array().unwrap().len(), 6);
    assert_eq!(r["tau2_intervals"].as_array().unwrap().len(), 3);
}

/// Every number in two reports, paired by position.
fn numbers(v: &Value, out: &mut Vec<f64>) {
    match v {
        Value::Number(n) => out.push(n.as_f64().unwrap()),
        Value::Array(a) => a.iter().for_each(|x| numbers(x, out)),
        Value::Object(o) => o.values().for_each(|x| numbers(x, out)),
        _ => {}
    }
}

#[test]
fn json_output_regenerates_identical_analysis() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "raw.csv",
        "study_id,n_t,mean_t,sd_t,n_c,mean_c,sd_c\na,30,2,1.5,20,1,2\nb,40,1.2,0.9,45,0.8,1.1\nc,15,0.4,1.3,12,0.9,1.0\nd,60,3.1,2.2,55,1.7,1.9\n",
    );
    let first = json(&dsm(&["analyze", &input, "--format", "json"]));
    let mut csv = String::from("study_id,g_t,n_t,g_c,n_c\n");
    for s in first["studies"].as_array().unwrap() {
        csv += &format!(
            "{},{},{},{},{}\n",
            s["study_id"].as_str().unwrap(),
            f(&s["g_t"]),
            s["n_t"],
            f(&s["g_c"]),
            s["n_c"]
        );
    }
    let regen = write(&dir, "regen.csv", &csv);
    let second = json(&dsm(&["analyze", &regen, "--format", "json"]));
    let (mut a, mut b) = (Vec::new(), Vec::new());
    numbers(&first, &mut a);
    numbers(&second, &mut b);
    assert_eq!(a.len(), b.len());
    for (x, y) in a.iter().zip(&b) {
        assert!((x - y).abs() <= 1e-12 * x.abs().max(1.0), "{x} vs {y}");
    }
}

#[test]
fn identical_studies() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "two.csv",
        "study_id,g_t,n_t,g_c,n_c\na,0.7,30,0.2,30\nb,0.7,30,0.2,30\n",
    );
    let r = json(&dsm(&["analyze", &input, "--format", "json"]));
    for q in r["q"].as_array().unwrap() {
        assert!(f(&q["q"]).abs() < 1e-12);
    }
    for t in r["tau2"].as_array().unwrap() {
        assert_eq!(f(&t["result"]["value"]), 0.0, "{}", t["method"]);
    }
    for h in r["heterogeneity"].as_array().unwrap() {
        assert!((f(&h["result"]["p_value"]) - 1.0).abs() < 1e-9);
    }
    for e in r["effects"].as_array().unwrap() {
        assert!((f(&e["result"]["value"]) - 0.5).abs() < 1e-12);
    }
}

#[test]
fn text_report_and_level_flag() {
    let dir = TempDir::new().unwrap();
    let input = write(&dir, "five.csv", FIVE);
    let out = dsm(&["analyze", &input, "--level", "0.9"]);
    assert!(out.status.success());
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("studies (K = 5)"));
    assert!(text.contains("90% intervals for tau^2"));
    assert!(text.contains("HKSJ"));
}

#[test]
fn malformed_cell_is_an_input_error() {
    let dir = TempDir::new().unwrap();
    let input = write(
        &dir,
        "bad.csv",
        "study_id,g_t,n_t,g_c,n_c\na,0.7,30,0.2,30\nb,0.7,30,zero,30\n",
    );
    let out = dsm(&["analyze", &input]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("line 3") && err.contains("`g_c`"), "{err}");

    let out = dsm(&["analyze", "/no/such/file.csv"]);
    assert_eq!(out.status.code(), Some(1));
    let out = dsm(&["analyze", &input, "--bogus"]);
    assert_eq!(out.status.code(), Some(1));
}

const ONE_CELL: &str = "# smoke cell
k = 5
equal_n = 40
delta_c = 1
delta = 0.5
tau2 = 0
reps = 100
seed = 42
";

fn simulate(config: &str, out: &Path, workers: &str) -> Output {
    Command::new(env!("CARGO_BIN_EXE_dsm"))
        .args([
            "simulate",
            config,
            "--quiet",
            "--out",
            out.to_str().unwrap(),
        ])
        .env("DSM_WORKERS", workers)
        .output()
        .unwrap()
}

#[test]
fn one_cell_simulation_is_fast_and_deterministic() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "one.conf", ONE_CELL);
    let a = dir.path().join("a.csv");
    let b = dir.path().join("b.csv");
    let start = Instant::now();
    let out = simulate(&config, &a, "1");
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    assert!(start.elapsed().as_secs_f64() < 10.0);
    assert!(simulate(&config, &b, "3").status.success());
    let bytes = fs::read(&a).unwrap();
    assert_eq!(bytes, fs::read(&b).unwrap());

    let text = String::from_utf8(bytes).unwrap();
    let mut lines = text.lines();
    assert!(lines
        .next()
        .unwrap()
        .starts_with("format_version,cell_id,size_regime,k,n,"));
    let body: Vec<&str> = lines.collect();
    // 10 + 3 + 8 + 6 + 24 rows at τ² = 0
    assert_eq!(body.len(), 51);
    assert!(body
        .iter()
        .all(|l| l.starts_with("1,K5_equal_n40_dC1_D0.5_t0,equal,5,40,1.0,0.5,0.0,100,")));

    let c = dir.path().join("c.csv");
    let out = Command::new(env!("CARGO_BIN_EXE_dsm"))
        .args([
            "simulate",
            &config,
            "--quiet",
            "--seed",
            "7",
            "--out",
            c.to_str().unwrap(),
        ])
        .output()
        .unwrap();
    assert!(out.status.success());
    assert_ne!(fs::read(&a).unwrap(), fs::read(&c).unwrap());
}

#[test]
fn standard_grid_lists_2100_cells() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "full.conf", "# standard equal-size grid\n");
    let out = dsm(&["simulate", &config, "--list"]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 2100);
}

#[test]
fn invalid_config_echoes_standard_values() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "bad.conf", "k = 5\nunequal_nbar = 45\n");
    let out = dsm(&["simulate", &config]);
    assert_eq!(out.status.code(), Some(1));
    let err = String::from_utf8(out.stderr).unwrap();
    assert!(err.contains("standard values: k = 5, 10, 30"), "{err}");

    let config = write(&dir, "typo.conf", "kk = 5\n");
    let out = dsm(&["simulate", &config]);
    assert_eq!(out.status.code(), Some(1));
    assert!(String::from_utf8(out.stderr).unwrap().contains("line 1"));
}

#[test]
fn summarize_one_cell_and_empty_results() {
    let dir = TempDir::new().unwrap();
    let config = write(&dir, "one.conf", ONE_CELL);
    let results = dir.path().join("r.csv");
    assert!(simulate(&config, &results, "1").status.success());
    let results = results.to_str().unwrap();

    let out = dsm(&["summarize", results, "--appendix", "C"]);
    assert!(
        out.status.success(),
        "{}",
        String::from_utf8_lossy(&out.stderr)
    );
    let text = String::from_utf8(out.stdout).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(
        lines[0],
        "format_version,appendix,figure,panel,series,x_name,x,value,mc_se,n_ok,n_failed"
    );
    // one row per τ² estimator
    assert_eq!(lines.len(), 1 + 5);
    assert!(lines[1].starts_with("1,C,delta_c=1;delta=0.5,size_regime=equal;n=40;k=5,DL,tau2,0,"));

    let out = dsm(&["summarize", results]);
    let all = String::from_utf8(out.stdout).unwrap();
    // A: 2 tests x 6 nominal; B: 2; C: 5; D: 3; E: 4; F: 6
    assert_eq!(all.lines().count(), 1 + 12 + 2 + 5 + 3 + 4 + 6);

    let out = dsm(&["summarize", results, "--appendix", "E", "--facet", "k,n"]);
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text
        .lines()
        .nth(1)
        .unwrap()
        .contains(",k=5;n=40,size_regime=equal;delta_c=1;delta=0.5,"));

    let out = dsm(&["summarize", results, "--facet", "colour"]);
    assert_eq!(out.status.code(), Some(1));

    let empty = write(&dir, "empty.csv", "");
    let out = dsm(&["summarize", &empty]);
    assert_eq!(out.status.code(), Some(1));
}

#[test]
fn summarize_header_only_results() {
    let dir = TempDir::new().unwrap();
    let header = "format_version,cell_id,size_regime,k,n,delta_c,delta,tau2,reps,family,method,metric,nominal,value,mc_se,n_ok,n_failed\n";
    let results = write(&dir, "r.csv", header);
    let out = dsm(&["summarize", &results]);
    assert!(out.status.success());
    assert_eq!(String::from_utf8(out.stdout).unwrap().lines().count(), 1);
}
