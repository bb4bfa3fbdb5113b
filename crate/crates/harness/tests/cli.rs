use std::fs;
use std::path::Path;
use std::process::Command;

use blowup_harness::output::parse_summary_csv;

const VELOCITY_1D: &str = "
problem.n = 1
problem.p = 2
problem.source = velocity
data.g = bump
data.g.center = 1.5
data.g.width = 0.5
epsilons = 0.8, 0.6, 0.4
numerics.spacing = 0.01
numerics.t_max = 20
";

fn lab(args: &[&str]) -> (i32, String) {
    let out = Command::new(env!("CARGO_BIN_EXE_blowup-lab")).args(args).output().expect("binary runs");
    let text = String::from_utf8_lossy(&out.stdout).into_owned() + &String::from_utf8_lossy(&out.stderr);
    (out.status.code().expect("exit code"), text)
}

fn write_config(dir: &Path, name: &str, body: &str) -> String {
    let path = dir.join(name);
    fs::write(&path, body).unwrap();
    path.to_str().unwrap().to_string()
}

fn strip_timestamp(json: &str) -> String {
    json.lines().filter(|l| !l.contains("\"timestamp\"")).collect::<Vec<_>>().join("\n")
}

#[test]
fn sweep_outputs_verify_fit_and_rerun() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v1.cfg", VELOCITY_1D);
    let out = tmp.path().join("run");
    let (code, text) = lab(&["sweep", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    assert!(!out.join("lifespan.svg").exists(), "plot is off by default");

    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert!(summary.starts_with("epsilon,T_num,converged\n"));
    let rows = parse_summary_csv(&summary, "summary").unwrap();
    assert_eq!(rows.len(), 3);
    assert!(rows.iter().all(|r| r.2));
    assert!(rows.windows(2).all(|w| w[1].1 > w[0].1));
    for i in 0..3 {
        let trace = fs::read_to_string(out.join(format!("trace_{i:02}.csv"))).unwrap();
        assert!(trace.starts_with("t,F0,F1,G0,Fcum,sup_u,sup_v"));
    }
    let manifest: serde_json::Value =
        serde_json::from_str(&fs::read_to_string(out.join("manifest.json")).unwrap()).unwrap();
    assert_eq!(manifest["pass"], true);
    assert_eq!(manifest["config"]["numerics.spacing"], "0.01");
    assert!(manifest["runs"][0]["constants"]["c9"].as_f64().unwrap() > 0.0);
    assert!(manifest["runs"][0]["ode_bound"].as_f64().is_some());

    // reproducible from the manifest alone
    let again = tmp.path().join("again");
    let manifest_path = out.join("manifest.json");
    let (code, text) =
        lab(&["sweep", "--config", manifest_path.to_str().unwrap(), "--out", again.to_str().unwrap(), "--plot"]);
    assert_eq!(code, 0, "{text}");
    assert!(again.join("lifespan.svg").exists());
    for name in ["summary.csv", "checks.csv", "trace_00.csv", "trace_01.csv", "trace_02.csv"] {
        assert_eq!(fs::read(out.join(name)).unwrap(), fs::read(again.join(name)).unwrap(), "{name}");
    }
    let a = fs::read_to_string(out.join("manifest.json")).unwrap();
    let b = fs::read_to_string(again.join("manifest.json")).unwrap();
    assert_eq!(
        strip_timestamp(&a).replace("\"output.plot\": \"false\"", ""),
        strip_timestamp(&b).replace("\"output.plot\": \"true\"", "")
    );

    let verify_dir = tmp.path().join("verify");
    let (code, text) =
        lab(&["verify", "--config", manifest_path.to_str().unwrap(), "--out", verify_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let verify = fs::read_to_string(verify_dir.join("verify.csv")).unwrap();
    assert!(verify.starts_with("kind,name,epsilon,min_margin,slope_fit,exponent_theory,pass\n"));
    assert_eq!(verify.lines().filter(|l| l.starts_with("inequality,")).count(), 9);
    assert_eq!(verify.lines().filter(|l| l.starts_with("estimate,")).count(), 2);

    let fit_dir = tmp.path().join("fit");
    let (code, text) = lab(&["fit", "--config", manifest_path.to_str().unwrap(), "--out", fit_dir.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let fit: serde_json::Value = serde_json::from_str(&fs::read_to_string(fit_dir.join("fit.json")).unwrap()).unwrap();
    assert_eq!(fit["fit"]["form"], "power");
    assert_eq!(fit["fit"]["upper_bound_consistent"], true);
}

#[test]
fn usage_and_config_errors_exit_with_two() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v1.cfg", VELOCITY_1D);
    let out = tmp.path().join("x");
    let out = out.to_str().unwrap();
    assert_eq!(lab(&["sweep"]).0, 2);
    assert_eq!(lab(&["sweep", "--config", "/nonexistent/cfg"]).0, 2);
    assert_eq!(lab(&["sweep", "--config", &cfg, "--override", "numerics.bogus=1", "--out", out]).0, 2);
    assert_eq!(lab(&["sweep", "--config", &cfg, "--override", "epsilons=0.8,0.4", "--out", out]).0, 2);
    assert_eq!(lab(&["sweep", "--config", &cfg, "--override", "epsilons=0.4,0.8,0.2", "--out", out]).0, 2);
    assert_eq!(lab(&["frobnicate"]).0, 2);
    let broken = write_config(tmp.path(), "broken.cfg", "problem.n 3\n");
    let (code, text) = lab(&["elliptic", "--config", &broken, "--out", out]);
    assert_eq!(code, 2);
    assert!(text.contains("line 1"), "{text}");
}

#[test]
fn missing_blowup_is_a_check_failure() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(tmp.path(), "v1.cfg", VELOCITY_1D);
    let out = tmp.path().join("short");
    let (code, text) = lab(&[
        "simulate",
        "--config",
        &cfg,
        "--override",
        "numerics.t_max=1",
        "--override",
        "numerics.max_doublings=1",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(code, 1, "{text}");
    assert!(text.contains("no blowup"), "{text}");
    let summary = fs::read_to_string(out.join("summary.csv")).unwrap();
    assert_eq!(summary, "epsilon,T_num,converged\n0.8,,false\n");
}

#[test]
fn linear_run_reports_identities() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "lin.cfg",
        "problem.n = 3\nproblem.p = 2\nproblem.source = displacement\ndata.f = bump\ndata.f.center = 1.5\n\
         data.f.width = 0.5\nepsilons = 0.5\nnumerics.spacing = 0.01\nnumerics.t_max = 10\nnumerics.source = off\n",
    );
    let out = tmp.path().join("lin");
    let (code, text) = lab(&["simulate", "--config", &cfg, "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let checks = fs::read_to_string(out.join("checks.csv")).unwrap();
    assert!(checks.contains(",convexity,source_off_identity,"), "{checks}");
    assert!(checks.contains(",f0_identity,"), "{checks}");
}

#[test]
fn elliptic_and_ode_tables() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = write_config(
        tmp.path(),
        "e.cfg",
        "problem.n = 3\nproblem.p = 2\nproblem.source = displacement\nepsilons = 1\nelliptic.r_outer = 8\n",
    );
    let out = tmp.path().join("e");
    let (code, text) = lab(&["elliptic", "--config", &cfg, "--spacing", "0.002", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let csv = fs::read_to_string(out.join("elliptic.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some("r,phi0,phi1,phi0_oracle,phi1_oracle,phi0_error,phi1_error"));
    assert_eq!(lines.count(), 3501);

    let (code, text) = lab(&["verify-ode", "--out", out.to_str().unwrap()]);
    assert_eq!(code, 0, "{text}");
    let csv = fs::read_to_string(out.join("verify_ode.csv")).unwrap();
    assert!(csv.starts_with("case,T_closed,T_num,ratio,pass\n"));
    assert_eq!(csv.lines().filter(|l| l.starts_with("riccati_")).count(), 8);
    assert!(!csv.contains(",false"));
}
