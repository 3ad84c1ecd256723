use std::path::Path;
use std::process::{Command, Output};

use trojan_keyrate::channel::DetectionStats;
use trojan_keyrate::csvio;
use trojan_keyrate::pipeline::{simulate, table1_case1, Method, STATUS_OK};

fn run(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_trojan-keyrate")).args(args).output().expect("spawn CLI")
}

fn stderr(o: &Output) -> String {
    String::from_utf8_lossy(&o.stderr).into_owned()
}

#[test]
fn scan_writes_report_csv() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fig2.csv");
    let o = run(&[
        "scan", "--protocol", "bb84", "--case", "table1-case1", "--mu-out", "1e-3", "--method", "both", "--out",
        out.to_str().unwrap(),
    ]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&out).unwrap();
    let header: Vec<&str> = text.lines().next().unwrap().split(',').collect();
    for col in ["distance_km", "method", "rate", "gap", "mu_signal"] {
        assert!(header.contains(&col), "missing {col}");
    }
    let reports = csvio::read_reports(text.as_bytes()).unwrap();
    assert_eq!(reports.len(), 2 * 21);
    assert!(reports.windows(2).all(|w| w[0].distance_km <= w[1].distance_km));
    assert!(reports.iter().all(|r| r.status == STATUS_OK));
    let at0: Vec<_> = reports.iter().filter(|r| r.distance_km == 0.0).collect();
    assert_eq!(at0[0].method, Method::Gllp);
    assert_eq!(at0[1].method, Method::Numerical);
    assert!(at0[1].rate.unwrap() >= at0[0].rate.unwrap());
}

#[test]
fn contradictory_intensities_exit_1() {
    let o = run(&["keyrate", "--nu1", "0.001", "--nu2", "0.02"]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("nu1"), "{}", stderr(&o));
}

#[test]
fn usage_errors_exit_1() {
    assert_eq!(run(&["keyrate", "--bogus"]).status.code(), Some(1));
    assert_eq!(run(&["frobnicate"]).status.code(), Some(1));
    assert_eq!(run(&["keyrate", "--method", "magic"]).status.code(), Some(1));
    assert_eq!(run(&["keyrate", "--case", "table1-case2", "--protocol", "bb84"]).status.code(), Some(1));
    assert_eq!(run(&["single-photon", "--ed-grid", "0:0.1"]).status.code(), Some(1));
    assert_eq!(run(&["scan", "--grid", "10:0:5"]).status.code(), Some(1));
    assert_eq!(run(&["--help"]).status.code(), Some(0));
}

#[test]
fn single_photon_curve() {
    let o = run(&["single-photon", "--mu-out", "0", "--ed-grid", "0:0.12:0.005"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let pts = csvio::read_single_photon(o.stdout.as_slice()).unwrap();
    assert_eq!(pts.len(), 25);
    for p in &pts {
        let h = trojan_keyrate::gllp::binary_entropy(p.e).unwrap();
        let ideal = (1.0 - 2.0 * h).max(0.0);
        assert!((p.numerical_rate.unwrap() - ideal).abs() < 2e-3, "e = {}", p.e);
        assert!((p.gllp_rate - ideal).abs() < 1e-12);
    }
}

#[test]
fn simulate_output_is_bit_exact() {
    let o = run(&["simulate", "--case", "table1-case1", "--distance", "25"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let parsed: DetectionStats = csvio::read_stats(o.stdout.as_slice()).unwrap();
    assert_eq!(parsed, simulate(&table1_case1(), 25.0).unwrap());

    let o = run(&["decoy", "--case", "table1-case2", "--distance", "10"]);
    assert!(o.status.success(), "{}", stderr(&o));
    let bounds = csvio::read_decoy_bounds(o.stdout.as_slice(), 10).unwrap();
    assert_eq!(bounds.intervals.len(), 16);
    assert!(bounds.intervals.iter().flatten().all(|(lo, hi)| 0.0 <= *lo && lo <= hi && *hi <= 1.0));
}

fn write(dir: &Path, name: &str, text: &str) -> String {
    let p = dir.join(name);
    std::fs::write(&p, text).unwrap();
    p.to_str().unwrap().to_string()
}

#[test]
fn config_file_and_overrides() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(
        dir.path(),
        "run.toml",
        "case = \"table1-case1\"\n[protocol]\nmethod = \"gllp\"\n[intensities]\nmu = 0.4\nmu_out = 1e-4\n[scan]\ndistances_km = [0.0, 10.0]\n",
    );
    let o = run(&["scan", "--config", &cfg]);
    assert!(o.status.success(), "{}", stderr(&o));
    let reps = csvio::read_reports(o.stdout.as_slice()).unwrap();
    assert_eq!(reps.len(), 2);
    assert!(reps.iter().all(|r| r.method == Method::Gllp && r.mu_signal == 0.4));

    let o = run(&["scan", "--config", &cfg, "--mu", "0.3", "--distances", "5"]);
    let reps = csvio::read_reports(o.stdout.as_slice()).unwrap();
    assert_eq!(reps.len(), 1);
    assert_eq!((reps[0].distance_km, reps[0].mu_signal), (5.0, 0.3));

    let bad = write(dir.path(), "bad.toml", "[channel]\nloss = 0.2\n");
    let o = run(&["keyrate", "--config", &bad]);
    assert_eq!(o.status.code(), Some(1));
    assert!(stderr(&o).contains("unknown field"), "{}", stderr(&o));

    let o = run(&["keyrate", "--config", "/nonexistent/run.toml"]);
    assert_eq!(o.status.code(), Some(1));
}

#[test]
fn trace_dump() {
    let dir = tempfile::tempdir().unwrap();
    let trace = dir.path().join("trace.csv");
    let o = run(&["keyrate", "--case", "case1", "--distance", "10", "--method", "numerical", "--trace", trace.to_str().unwrap()]);
    assert!(o.status.success(), "{}", stderr(&o));
    let text = std::fs::read_to_string(&trace).unwrap();
    let mut lines = text.lines();
    assert_eq!(lines.next(), Some("point,iteration,f,fw_gap,step"));
    let rows: Vec<Vec<&str>> = lines.map(|l| l.split(',').collect()).collect();
    assert!(!rows.is_empty());
    assert!(rows.iter().all(|r| r.len() == 5 && r[0] == "10"));

    // Without a path the trace goes to stderr.
    let o = run(&["keyrate", "--case", "case1", "--distance", "10", "--method", "numerical", "--trace"]);
    assert!(o.status.success());
    assert!(stderr(&o).starts_with("point,iteration,f,fw_gap,step"));
}

#[test]
fn numerical_failure_exits_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = write(dir.path(), "starved.toml", "case = \"table1-case1\"\n[protocol]\nmethod = \"numerical\"\n[solver]\nsdp_max_iter = 1\n");
    let o = run(&["keyrate", "--config", &cfg, "--distance", "10"]);
    assert_eq!(o.status.code(), Some(2), "{}", stderr(&o));
    let reps = csvio::read_reports(o.stdout.as_slice()).unwrap();
    assert!(reps[0].rate.is_none() && reps[0].status != STATUS_OK);
}
