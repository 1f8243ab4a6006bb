use std::fs;
use std::path::{Path, PathBuf};
use std::process::{Command, Output};

use serde_json::Value;
use tempfile::TempDir;

const BIN: &str = env!("CARGO_BIN_EXE_levy-perron");

fn model(extra_problem: &str, pair: &str) -> String {
    format!(
        r#"
[problem]
dim = 1
domain = {{ shape = "interval", lo = -1.0, hi = 1.0 }}
sigma = 1.5
amplitudes = [1.0, 2.0]
kernels = [{{ type = "fractional", amplitude = 1.0 }}]
pairs = [{pair}]
{extra_problem}

[grid]
interior = 64
R = 32.0

[diagnostics]
centers = [[0.3]]
"#
    )
}

fn write_config(dir: &Path, body: &str) -> PathBuf {
    let path = dir.join("run.toml");
    fs::write(&path, body).unwrap();
    path
}

fn run(args: &[&str], config: &Path, out: &Path) -> Output {
    Command::new(BIN)
        .args(args)
        .arg("--config")
        .arg(config)
        .arg("--out")
        .arg(out)
        .output()
        .unwrap()
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

fn json(path: &Path) -> Value {
    serde_json::from_str(&fs::read_to_string(path).unwrap()).unwrap()
}

fn values(path: &Path) -> Vec<(f64, f64)> {
    let mut rdr = csv::Reader::from_path(path).unwrap();
    rdr.records()
        .map(|r| {
            let r = r.unwrap();
            (r[0].parse().unwrap(), r[1].parse().unwrap())
        })
        .collect()
}

#[test]
fn model_problem_runs_end_to_end() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0 }"));
    let out = dir.path().join("out");
    let o = run(&["all"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    for f in [
        "config_echo.json",
        "solution.csv",
        "reports/certify.json",
        "reports/solve.json",
        "reports/attainment.json",
        "reports/diagnose.json",
        "tables/convergence.csv",
        "tables/holder_0.csv",
    ] {
        assert!(out.join(f).exists(), "missing {f}");
    }
    let w = values(&out.join("solution.csv"));
    let n = w.len();
    for i in 0..n {
        assert!(w[i].1 > 0.0);
        assert!((w[i].1 - w[n - 1 - i].1).abs() < 1e-6, "asymmetric at {}", w[i].0);
    }
    let solve = json(&out.join("reports/solve.json"));
    assert_eq!(solve["converged"], true);
    assert_eq!(solve["monotone"], true);
    let diag = json(&out.join("reports/diagnose.json"));
    let alpha = diag["centers"][0]["alpha_hat"].as_f64().unwrap();
    assert!(alpha > 0.0);
}

#[test]
fn repeated_runs_are_byte_identical() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0 }"));
    let a = dir.path().join("a");
    let b = dir.path().join("b");
    assert!(run(&["all"], &cfg, &a).status.success());
    assert!(run(&["all", "--threads", "2"], &cfg, &b).status.success());
    let mut compared = 0;
    for sub in ["", "reports", "tables"] {
        for entry in fs::read_dir(a.join(sub)).unwrap() {
            let p = entry.unwrap().path();
            if p.is_file() {
                let q = b.join(sub).join(p.file_name().unwrap());
                assert_eq!(fs::read(&p).unwrap(), fs::read(&q).unwrap(), "{} differs", p.display());
                compared += 1;
            }
        }
    }
    assert!(compared >= 10);
}

#[test]
fn jacobi_and_gauss_seidel_agree() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0 }"));
    let gs = dir.path().join("gs");
    let jac = dir.path().join("jac");
    assert!(run(&["solve"], &cfg, &gs).status.success());
    let o = run(&["solve", "--mode", "jacobi"], &cfg, &jac);
    assert!(o.status.success(), "{}", stderr(&o));
    assert_eq!(json(&jac.join("reports/solve.json"))["mode"], "jacobi");
    for (x, y) in values(&gs.join("solution.csv")).iter().zip(values(&jac.join("solution.csv"))) {
        assert!((x.1 - y.1).abs() < 1e-6);
    }
}

#[test]
fn one_sided_kernel_fails_certification() {
    let dir = TempDir::new().unwrap();
    let body = model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0 }")
        .replace(r#"type = "fractional""#, r#"type = "one_sided""#);
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&["certify"], &cfg, &out);
    assert_eq!(o.status.code(), Some(1));
    let err = stderr(&o);
    assert!(err.contains("certify: FAIL"), "{err}");
    assert!(err.contains("(H3)"), "{err}");
    assert_eq!(json(&out.join("reports/certify.json"))["pass"], false);

    // solve is gated on certification
    let o = run(&["solve"], &cfg, &dir.path().join("gated"));
    assert_eq!(o.status.code(), Some(1));
    assert!(!dir.path().join("gated/solution.csv").exists());
}

#[test]
fn drift_below_order_one_is_rejected() {
    let dir = TempDir::new().unwrap();
    let body = model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0, drift = [1.0] }")
        .replace("sigma = 1.5", "sigma = 0.5");
    let cfg = write_config(dir.path(), &body);
    let out = dir.path().join("out");
    let o = run(&["all"], &cfg, &out);
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("drift"), "{}", stderr(&o));
    assert!(!out.exists());
}

#[test]
fn degenerate_barrier_needs_positive_gamma() {
    let dir = TempDir::new().unwrap();
    let body = model("g = { value = 0.0 }\nbarrier = \"degenerate\"", "{ kernel = 0, c = 0.0, f = -1.0 }");
    let cfg = write_config(dir.path(), &body);
    let o = run(&["certify"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("gamma"), "{}", stderr(&o));
}

#[test]
fn zero_data_give_zero_solution_and_perfect_regularity() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = 0.0 }"));
    let out = dir.path().join("out");
    let o = run(&["all"], &cfg, &out);
    assert!(o.status.success(), "{}", stderr(&o));
    assert!(values(&out.join("solution.csv")).iter().all(|&(_, v)| v == 0.0));
    let solve = json(&out.join("reports/solve.json"));
    assert!(solve["iterations"].as_u64().unwrap() <= 2);
    let diag = json(&out.join("reports/diagnose.json"));
    assert_eq!(diag["centers"][0]["perfect_regularity"], true);
}

#[test]
fn diagnose_without_solution_is_an_error() {
    let dir = TempDir::new().unwrap();
    let cfg = write_config(dir.path(), &model("g = { value = 0.0 }", "{ kernel = 0, c = 0.0, f = -1.0 }"));
    let o = run(&["diagnose"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
    assert!(stderr(&o).contains("not found"), "{}", stderr(&o));
}

#[test]
fn unknown_config_keys_are_rejected() {
    let dir = TempDir::new().unwrap();
    let body = model("g = { value = 0.0 }\nsigmaa = 1.0", "{ kernel = 0, c = 0.0, f = -1.0 }");
    let cfg = write_config(dir.path(), &body);
    let o = run(&["certify"], &cfg, &dir.path().join("out"));
    assert_eq!(o.status.code(), Some(2));
}

#[test]
fn shipped_configs_parse_and_certify() {
    let root = Path::new(env!("CARGO_MANIFEST_DIR")).join("configs");
    for name in ["model_1d.toml", "isaacs_2x2.toml"] {
        let dir = TempDir::new().unwrap();
        let o = run(&["certify"], &root.join(name), dir.path());
        assert!(o.status.success(), "{name}: {}", stderr(&o));
    }
}
