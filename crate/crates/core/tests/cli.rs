use std::path::Path;
use std::process::{Command, Output};

use igs_mimo::montecarlo::CSV_HEADER;
use igs_mimo::network::{draw_scenario, ScenarioConfig};
use igs_mimo::scenario_file::ScenarioFile;

fn bin() -> Command {
    let mut c = Command::new(env!("CARGO_BIN_EXE_igs-mimo"));
    c.env_remove("IGS_MIMO_OUT_DIR");
    c
}

fn run(args: &[&str]) -> Output {
    bin().args(args).output().unwrap()
}

fn code(o: &Output) -> i32 {
    o.status.code().unwrap()
}

fn json(path: &Path) -> serde_json::Value {
    serde_json::from_str(&std::fs::read_to_string(path).unwrap()).unwrap()
}

const SISO_IDEAL: [&str; 16] = [
    "--users", "1", "--ntx", "1", "--nrx", "1", "--snr-db", "10", "--a-tx", "1", "--phase-deg", "0", "--sigma-t2",
    "0", "--seed", "7",
];

#[test]
fn siso_solve_matches_closed_form() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    let mut args = vec!["solve", "--problem", "rate-region", "--mode", "pgs", "--out", out];
    args.extend(SISO_IDEAL);
    let o = run(&args);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));

    let cfg = ScenarioConfig {
        users: 1,
        a_tx: 1.0,
        phase_deg: 0.0,
        sigma2_tx: 0.0,
        ..Default::default()
    };
    let h = draw_scenario(&cfg, 7).unwrap().channel(0, 0)[(0, 0)].norm_sqr();
    let expected = (1.0 + 10.0 * h).log2();
    let report = json(&dir.path().join("solve-fairness_rate-pgs.json"));
    let rate = report["report"]["rates"][0].as_f64().unwrap();
    assert!((rate - expected).abs() <= 1e-6 * expected, "{rate} vs {expected}");
    assert_eq!(report["covariances"].as_array().unwrap().len(), 1);
}

#[test]
fn missing_problem_is_a_usage_error() {
    assert_eq!(code(&run(&["solve", "--users", "2"])), 64);
    assert_eq!(code(&run(&["solve", "--problem", "rate-region", "--bogus"])), 64);
    assert_eq!(code(&run(&["--help"])), 0);
}

#[test]
fn unreachable_qos_is_infeasible() {
    let dir = tempfile::tempdir().unwrap();
    let o = run(&["solve", "--problem", "sum-rate", "--rth", "50", "--out", dir.path().to_str().unwrap()]);
    assert_eq!(code(&o), 2);
    assert!(String::from_utf8_lossy(&o.stderr).contains("error"));
}

#[test]
fn bad_configuration_exits_65() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().to_str().unwrap();
    assert_eq!(code(&run(&["sweep", "--preset", "fig3a", "--realizations", "0", "--out", out])), 65);
    assert_eq!(code(&run(&["sweep", "--preset", "nope", "--out", out])), 65);

    let bad = dir.path().join("bad.json");
    std::fs::write(&bad, "{\"axis\": \"snr_db\", \"realizations\": }").unwrap();
    let o = run(&["sweep", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 65);
    assert!(String::from_utf8_lossy(&o.stderr).contains("line 1"));

    std::fs::write(&bad, "{\"realisations\": 3}").unwrap();
    let o = run(&["sweep", "--config", bad.to_str().unwrap(), "--out", out]);
    assert_eq!(code(&o), 65);
    assert!(String::from_utf8_lossy(&o.stderr).contains("realisations"));

    assert_eq!(code(&run(&["solve", "--problem", "rate-region", "--a-tx=-1", "--out", out])), 65);
}

#[test]
fn verify_passes_and_catches_an_injected_fault() {
    let o = run(&["verify"]);
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stdout));
    let o = run(&["verify", "--inject-gradient-fault"]);
    assert_ne!(code(&o), 0);
    assert!(String::from_utf8_lossy(&o.stdout).contains("FAIL surrogate gradient"));
}

#[test]
fn dumped_scenario_solves_like_the_drawn_one() {
    let dir = tempfile::tempdir().unwrap();
    let file = dir.path().join("scenario.json");
    let o = run(&["dump-scenario", "--users", "2", "--ntx", "2", "--nrx", "2", "--seed", "9", "--out", file.to_str().unwrap()]);
    assert_eq!(code(&o), 0);
    let cfg = ScenarioConfig { users: 2, n_tx: 2, n_rx: 2, ..Default::default() };
    let loaded = ScenarioFile::from_json(&std::fs::read_to_string(&file).unwrap()).unwrap().to_scenario().unwrap();
    assert_eq!(loaded, draw_scenario(&cfg, 9).unwrap());

    let (a, b) = (dir.path().join("a"), dir.path().join("b"));
    let common = ["solve", "--problem", "rate-region", "--max-mm-iters", "5", "--out"];
    let mut from_file = common.to_vec();
    from_file.extend([a.to_str().unwrap(), "--scenario-file", file.to_str().unwrap()]);
    let mut drawn = common.to_vec();
    drawn.extend([b.to_str().unwrap(), "--users", "2", "--ntx", "2", "--nrx", "2", "--seed", "9"]);
    assert_eq!(code(&run(&from_file)), 0);
    assert_eq!(code(&run(&drawn)), 0);
    let (ra, rb) = (json(&a.join("solve-fairness_rate-igs.json")), json(&b.join("solve-fairness_rate-igs.json")));
    assert_eq!(ra["objective"], rb["objective"]);
}

#[test]
fn sweep_writes_csv_and_manifest_to_env_dir() {
    let dir = tempfile::tempdir().unwrap();
    let o = bin()
        .args(["sweep", "--preset", "fig3a", "--realizations", "2", "--name", "smoke"])
        .env("IGS_MIMO_OUT_DIR", dir.path())
        .env("SOURCE_DATE_EPOCH", "0")
        .output()
        .unwrap();
    assert_eq!(code(&o), 0, "{}", String::from_utf8_lossy(&o.stderr));
    let csv = std::fs::read_to_string(dir.path().join("smoke.csv")).unwrap();
    let mut lines = csv.lines();
    assert_eq!(lines.next(), Some(CSV_HEADER));
    // Three modes plus the gain row at each of four SNR points.
    assert_eq!(lines.count(), 16);
    assert!(csv.contains(",i-pgs,fairness_rate,"));
    assert!(csv.contains("fairness_rate_gain_pct"));
    let manifest = json(&dir.path().join("smoke.manifest.json"));
    assert_eq!(manifest["config"]["realizations"], 2);
}
