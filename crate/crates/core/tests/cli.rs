use assert_cmd::Command;
use serde_json::Value;

fn critex() -> Command {
    Command::cargo_bin("critex").unwrap()
}

fn json_of(args: &[&str]) -> (Value, i32) {
    let out = critex().args(args).output().unwrap();
    let code = out.status.code().unwrap();
    let v = serde_json::from_slice(&out.stdout).unwrap_or(Value::Null);
    (v, code)
}

#[test]
fn exponent_khessian() {
    let (v, code) = json_of(&["exponent", "--family", "khessian", "-n", "5", "-k", "2"]);
    assert_eq!(code, 0);
    assert_eq!(v["serrin"], 10);
    assert_eq!(v["critical"], 14);
    assert_eq!(v["tool"], "critex");
    assert_eq!(v["version"], env!("CARGO_PKG_VERSION"));
    assert_eq!(v["params"]["n"], 5);
}

#[test]
fn exponent_hardy_sobolev_and_ckn() {
    let (v, _) = json_of(&["exponent", "--family", "hardy-sobolev", "-n", "4", "-t", "1"]);
    assert_eq!(v["critical"], 2);
    let (v, _) = json_of(&["exponent", "--family", "ckn", "-n", "3", "-p", "2", "-a", "0", "-b", "0"]);
    assert_eq!(v["critical"], 5);
}

#[test]
fn exponent_classifies_q() {
    let (v, _) = json_of(&["exponent", "--family", "khessian", "-n", "5", "-k", "2", "-q", "20"]);
    assert_eq!(v["classification"]["regime"], "supercritical");
    assert_eq!(v["classification"]["defect_exact"], "-2/21");
}

#[test]
fn invalid_parameters_exit_2_and_name_the_bound() {
    let out = critex().args(["exponent", "--family", "khessian", "-n", "4", "-k", "2"]).output().unwrap();
    assert_eq!(out.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&out.stderr).contains("k < n/2"));
    critex().args(["exponent", "--family", "nonsense", "-n", "3"]).assert().code(2);
    critex().args(["exponent", "--family", "khessian"]).assert().code(2);
    critex().args(["frobnicate"]).assert().code(2);
}

#[test]
fn verify_hessian_fast_all_pass() {
    let (v, code) = json_of(&["verify", "--profile", "hessian-fast", "-n", "5", "-k", "2", "--tol", "1e-8"]);
    assert_eq!(code, 0);
    for check in ["residual", "energy", "pohozaev"] {
        assert_eq!(v[check]["status"], "pass", "{check}: {}", v[check]);
    }
    assert_eq!(v["all_pass"], true);
}

#[test]
fn verify_hessian_slow_reports_infinite_energy() {
    let (v, code) = json_of(&["verify", "--profile", "hessian-slow", "-n", "5", "-k", "2", "-q", "20"]);
    assert_eq!(code, 0);
    assert_eq!(v["residual"]["status"], "pass");
    assert_eq!(v["energy"]["status"], "infinite-energy");
}

#[test]
fn verify_hs_bubble_at_critical_q() {
    let (v, code) = json_of(&["verify", "--profile", "hs-bubble", "-n", "3", "-t", "0.5"]);
    assert_eq!(code, 0);
    assert_eq!(v["params"]["q"], 4.0);
    assert_eq!(v["all_pass"], true);
}

#[test]
fn verify_off_critical_fails_with_exit_1() {
    critex()
        .args(["verify", "--profile", "hs-bubble", "-n", "3", "-q", "4"])
        .assert()
        .code(1);
}

#[test]
fn verify_unknown_profile_is_usage_error() {
    critex().args(["verify", "--profile", "nope", "-n", "3"]).assert().code(2);
}

#[test]
fn scan_khessian_regimes_flip_at_serrin_and_critical() {
    let out = critex()
        .args([
            "scan", "--family", "khessian", "-n", "5", "-k", "2", "--q-from", "8", "--q-to", "20", "--format", "csv",
        ])
        .output()
        .unwrap();
    assert_eq!(out.status.code(), Some(0));
    let text = String::from_utf8(out.stdout).unwrap();
    let mut lines = text.lines();
    let header: Vec<&str> = lines.next().unwrap().split(',').collect();
    let col = |name: &str| header.iter().position(|h| *h == name).unwrap();
    let rows: Vec<Vec<String>> = lines.map(|l| l.split(',').map(str::to_string).collect()).collect();
    assert_eq!(rows.len(), 13);
    for row in &rows {
        let q: f64 = row[col("q")].parse().unwrap();
        let regime = &row[col("regime")];
        let serrin = &row[col("serrin")];
        let expected = if q < 14.0 {
            "subcritical"
        } else if q == 14.0 {
            "critical"
        } else {
            "supercritical"
        };
        assert_eq!(regime, expected, "q = {q}");
        let side = if q < 10.0 {
            "below"
        } else if q == 10.0 {
            "boundary"
        } else {
            "above"
        };
        assert_eq!(serrin, side);
        if q > 14.0 {
            assert_eq!(row[col("energy")], "infinite");
        }
    }
}

#[test]
fn scan_mu_ratio_constant_at_critical() {
    let (v, code) = json_of(&["scan", "--family", "lane-emden", "-n", "3", "--mu-from", "0.5", "--mu-to", "4"]);
    assert_eq!(code, 0);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 8);
    for row in rows {
        assert!((row["ratio"].as_f64().unwrap() - 1.0).abs() < 1e-8, "{row}");
    }
}

#[test]
fn scan_ckn_system_p3_only_diagonal_is_degenerate() {
    let (v, _) = json_of(&[
        "scan", "--family", "ckn-system", "-n", "3", "-p", "3", "--q-from", "2", "--q-to", "5", "--q2-from", "2",
        "--q2-to", "5",
    ]);
    let rows = v["rows"].as_array().unwrap();
    assert_eq!(rows.len(), 16);
    for row in rows {
        if row["q"] != row["q2"] {
            assert_eq!(row["invariance"], "None", "{row}");
        }
    }
}

#[test]
fn scan_embeds_row_errors() {
    let (v, code) = json_of(&["scan", "--family", "lane-emden", "-n", "3", "--q-from", "0.5", "--q-to", "2", "--q-step", "0.5"]);
    assert_eq!(code, 0);
    let rows = v["rows"].as_array().unwrap();
    assert!(rows[0].get("error").is_some());
    assert_eq!(rows[3]["regime"], "subcritical");
}

#[test]
fn shoot_khessian_matches_and_writes_trajectory() {
    let dir = std::env::temp_dir().join(format!("critex-shoot-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let csv = dir.join("traj.csv");
    let (v, code) = json_of(&[
        "shoot", "khessian", "-n", "5", "-k", "2", "-q", "20", "--trajectory", csv.to_str().unwrap(),
    ]);
    assert_eq!(code, 0);
    assert_eq!(v["matched"], true);
    assert!(v["target_gap"].as_f64().unwrap() < 1e-10);
    let text = std::fs::read_to_string(&csv).unwrap();
    assert!(text.starts_with("r,f,fp,residual\n"));
    assert!(text.lines().count() > 100);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn shoot_schrodinger() {
    let (v, code) = json_of(&["shoot", "schrodinger", "-n", "3", "-q", "3"]);
    assert_eq!(code, 0);
    assert!(v["identity"]["relative_gap"].as_f64().unwrap() < 1e-3);
    critex().args(["shoot", "schrodinger", "-n", "3", "-q", "6"]).assert().code(2);
}

#[test]
fn shoot_below_serrin_is_rejected() {
    critex().args(["shoot", "khessian", "-n", "5", "-k", "2", "-q", "9"]).assert().code(2);
}

#[test]
fn config_file_defaults_and_overrides() {
    let dir = std::env::temp_dir().join(format!("critex-config-{}", std::process::id()));
    std::fs::create_dir_all(&dir).unwrap();
    let cfg = dir.join("run.toml");
    std::fs::write(&cfg, "family = \"khessian\"\nn = 7\nk = 2\nformat = \"text\"\n").unwrap();
    let out = critex().args(["--config", cfg.to_str().unwrap(), "exponent"]).output().unwrap();
    let text = String::from_utf8(out.stdout).unwrap();
    assert!(text.contains("critical = 6"), "{text}");
    let (v, _) = json_of(&["--config", cfg.to_str().unwrap(), "--format", "json", "exponent", "-n", "5"]);
    assert_eq!(v["critical"], 14);
    std::fs::remove_dir_all(dir).ok();
}

#[test]
fn quadrature_tolerance_from_environment() {
    let out = critex()
        .env("CRITEX_QUAD_TOL", "1e-6")
        .args(["verify", "--profile", "hessian-fast", "-n", "5", "-k", "2"])
        .output()
        .unwrap();
    let v: Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(v["params"]["quadrature_rel_tol"], 1e-6);
}

#[test]
fn output_is_deterministic() {
    let args = ["scan", "--family", "khessian", "-n", "5", "-k", "2", "--q-from", "10", "--q-to", "16", "--format", "csv"];
    let a = critex().args(args).output().unwrap().stdout;
    let b = critex().args(args).output().unwrap().stdout;
    assert_eq!(a, b);
}

#[test]
fn output_file_flag() {
    let path = std::env::temp_dir().join(format!("critex-out-{}.json", std::process::id()));
    critex()
        .args(["exponent", "--family", "lane-emden", "-n", "3", "-o", path.to_str().unwrap()])
        .assert()
        .success();
    let v: Value = serde_json::from_str(&std::fs::read_to_string(&path).unwrap()).unwrap();
    assert_eq!(v["critical"], 5);
    std::fs::remove_file(path).ok();
}
