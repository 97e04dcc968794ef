//! End-to-end contract tests for the `memsl` binary: exit codes, CSV shapes,
//! configuration handling, and artifact determinism.

use std::path::Path;
use std::process::{Command, Output};

fn memsl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_memsl"))
        .args(args)
        .output()
        .expect("binary should launch")
}

fn stdout(out: &Output) -> String {
    String::from_utf8(out.stdout.clone()).expect("stdout should be UTF-8")
}

fn stderr(out: &Output) -> String {
    String::from_utf8(out.stderr.clone()).expect("stderr should be UTF-8")
}

fn read(path: &Path) -> String {
    std::fs::read_to_string(path).unwrap_or_else(|e| panic!("read {}: {e}", path.display()))
}

/// Split a CSV body into header and data rows (always LF-terminated).
fn rows(csv: &str) -> (Vec<String>, Vec<Vec<String>>) {
    let mut lines = csv.lines();
    let header: Vec<String> = lines.next().expect("csv header").split(',').map(String::from).collect();
    let data = lines
        .map(|l| l.split(',').map(String::from).collect::<Vec<_>>())
        .collect();
    (header, data)
}

fn field(row: &[String], header: &[String], name: &str) -> String {
    let idx = header.iter().position(|h| h == name).unwrap_or_else(|| panic!("column {name}"));
    row[idx].clone()
}

fn numf(row: &[String], header: &[String], name: &str) -> f64 {
    field(row, header, name).parse().unwrap_or_else(|e| panic!("parse {name}: {e:?}"))
}

// ----------------------------------------------------------------- basis

#[test]
fn basis_table_has_the_documented_shape() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("basis.csv");
    let run = memsl(&["basis", "--c", "3.07", "--jmax", "10", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));

    let text = read(&out);
    assert!(text.ends_with('\n') && !text.contains('\r'), "LF-only line endings");
    let (header, data) = rows(&text);
    assert_eq!(header, ["c", "j", "lambda_j", "A_j", "parity"]);
    assert_eq!(data.len(), 11, "one row per order 0..=10");

    for (j, row) in data.iter().enumerate() {
        assert_eq!(numf(row, &header, "c"), 3.07);
        assert_eq!(field(row, &header, "j"), j.to_string());
        let parity = field(row, &header, "parity");
        let coupling = numf(row, &header, "A_j");
        if j % 2 == 0 {
            assert_eq!(parity, "even");
            assert!(coupling > 0.0, "even orders couple to the center");
        } else {
            assert_eq!(parity, "odd");
            assert_eq!(coupling, 0.0, "odd orders vanish at the center");
        }
    }
    let lambda0 = numf(&data[0], &header, "lambda_j");
    assert!((lambda0 - 0.978_558).abs() < 1e-5);
    let a0 = numf(&data[0], &header, "A_j");
    assert!((a0 - 1.341_49).abs() < 1e-4);
}

#[test]
fn non_positive_bandwidth_is_a_config_error() {
    let run = memsl(&["basis", "--c", "-1", "--jmax", "3"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains('c'), "message should name the offending field");
}

// -------------------------------------------------------------- optimize

#[test]
fn optimize_sweeps_every_protocol_at_every_transmission() {
    let run = memsl(&["optimize", "--tau-list", "0.5,1.0"]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    let (header, data) = rows(&stdout(&run));
    assert_eq!(
        header,
        ["protocol", "modes", "photons_per_mode", "tau", "r_opt", "alpha_opt", "sigma_opt", "q", "resolution_nm"]
    );
    assert_eq!(data.len(), 6, "3 protocols x 2 transmissions");

    // Lossless entangled row carries the reference optimum.
    let row = data
        .iter()
        .find(|r| field(r, &header, "protocol") == "memsl" && field(r, &header, "tau") == "1")
        .expect("memsl tau=1 row");
    let r_opt = numf(row, &header, "r_opt");
    let alpha = numf(row, &header, "alpha_opt");
    assert!(((-r_opt).exp() - 0.101_534_616_513_361_9).abs() < 1e-12);
    assert!((alpha - 4.924_167_206_788_613).abs() < 1e-12);
    assert_eq!(field(row, &header, "q"), "5");
    assert_eq!(field(row, &header, "resolution_nm"), "50");

    // Coherent rows are transmission-invariant; entangled rows degrade.
    let sigma = |protocol: &str, tau: &str| -> f64 {
        let row = data
            .iter()
            .find(|r| field(r, &header, "protocol") == protocol && field(r, &header, "tau") == tau)
            .unwrap();
        numf(row, &header, "sigma_opt")
    };
    assert!((sigma("coherent", "0.5") - sigma("coherent", "1")).abs() < 1e-12);
    assert!(sigma("memsl", "0.5") > sigma("memsl", "1"));
    assert!(sigma("memsl", "1") < sigma("independent-squeezed", "1"));
    assert!(sigma("independent-squeezed", "1") < sigma("coherent", "1"));
}

#[test]
fn empty_transmission_sweep_is_a_config_error() {
    let run = memsl(&["optimize", "--tau-list", ""]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("tau_list"));
}

// --------------------------------------------------------------- predict

#[test]
fn predict_reports_the_reference_geometry_and_budget() {
    let run = memsl(&["predict"]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    let (header, data) = rows(&stdout(&run));
    assert_eq!(data.len(), 1);
    let row = &data[0];
    assert!((numf(row, &header, "c") - 3.069_094_361_583_874).abs() < 1e-12);
    assert!((numf(row, &header, "rayleigh_nm") - 153.543_307).abs() < 1e-4);
    assert_eq!(field(row, &header, "q"), "5");
    assert_eq!(field(row, &header, "resolution_nm"), "50");
    assert_eq!(field(row, &header, "protocol"), "memsl");
    // navg defaults to 1, so the averaged error equals the per-run error.
    assert_eq!(field(row, &header, "sigma"), field(row, &header, "sigma_avg"));
}

#[test]
fn predict_accepts_explicit_probe_parameters_and_rejects_half_of_them() {
    let ok = memsl(&["predict", "--r", "1.0", "--alpha", "3.0"]);
    assert_eq!(ok.status.code(), Some(0), "stderr: {}", stderr(&ok));
    let (header, data) = rows(&stdout(&ok));
    assert_eq!(numf(&data[0], &header, "r"), 1.0);
    assert_eq!(numf(&data[0], &header, "alpha"), 3.0);

    let bad = memsl(&["predict", "--r", "1.0"]);
    assert_eq!(bad.status.code(), Some(2));
    assert!(stderr(&bad).contains("source.r") && stderr(&bad).contains("source.alpha"));
}

#[test]
fn unknown_protocol_is_a_config_error() {
    let run = memsl(&["predict", "--protocol", "tachyonic"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("tachyonic"));
}

// -------------------------------------------------------------- simulate

fn simulate_dir(dir: &Path, extra: &[&str]) -> Output {
    let mut args = vec!["simulate", "--out", dir.to_str().unwrap()];
    args.extend_from_slice(extra);
    memsl(&args)
}

#[test]
fn missing_seed_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let run = simulate_dir(&dir.path().join("a"), &["--trials", "10"]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("seed"));
}

#[test]
fn artifact_directory_carries_the_documented_files() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("run");
    let run = simulate_dir(&out, &["--seed", "9", "--trials", "64", "--q", "7"]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));

    let (h, d) = rows(&read(&out.join("summary.csv")));
    assert_eq!(h, ["sigma_predicted", "sigma_empirical", "Q", "seed", "trials"]);
    assert_eq!(d.len(), 1);
    assert_eq!(field(&d[0], &h, "Q"), "7");
    assert_eq!(field(&d[0], &h, "seed"), "9");
    assert_eq!(field(&d[0], &h, "trials"), "64");
    let predicted = numf(&d[0], &h, "sigma_predicted");
    let empirical = numf(&d[0], &h, "sigma_empirical");
    assert!(predicted > 0.0 && empirical > 0.0);

    let (h, d) = rows(&read(&out.join("mean.csv")));
    assert_eq!(h, ["s", "mean_e2"]);
    assert_eq!(d.len(), 2049, "full image grid");

    let (h, d) = rows(&read(&out.join("samples.csv")));
    assert_eq!(h, ["s", "trial_mean", "trial_std"]);
    assert_eq!(d.len(), 2049);

    let (h, d) = rows(&read(&out.join("reconstruction.csv")));
    assert_eq!(h, ["s_prime", "phi_true", "phi_hat", "ci_low", "ci_high"]);
    assert!(d.len() > 100, "object grid resolution");
    for row in &d {
        let lo = numf(row, &h, "ci_low");
        let hi = numf(row, &h, "ci_high");
        let hat = numf(row, &h, "phi_hat");
        assert!(lo <= hat && hat <= hi, "confidence band brackets the estimate");
    }

    // The echoed configuration is itself a loadable config file.
    let echo = read(&out.join("config.txt"));
    assert!(echo.contains("source.r = ") && echo.contains("simulation.q = 7"));
}

#[test]
fn identical_seeds_reproduce_artifacts_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    let (a, b, c) = (dir.path().join("a"), dir.path().join("b"), dir.path().join("c"));
    let args = ["--seed", "21", "--trials", "80", "--q", "5"];
    assert_eq!(simulate_dir(&a, &args).status.code(), Some(0));
    assert_eq!(simulate_dir(&b, &args).status.code(), Some(0));
    for name in ["config.txt", "mean.csv", "samples.csv", "reconstruction.csv", "summary.csv"] {
        let left = std::fs::read(a.join(name)).unwrap();
        let right = std::fs::read(b.join(name)).unwrap();
        assert_eq!(left, right, "{name} must be byte-identical across reruns");
    }

    let args_c = ["--seed", "22", "--trials", "80", "--q", "5"];
    assert_eq!(simulate_dir(&c, &args_c).status.code(), Some(0));
    assert_ne!(
        std::fs::read(a.join("samples.csv")).unwrap(),
        std::fs::read(c.join("samples.csv")).unwrap(),
        "a different seed must change the sampled data"
    );
}

#[test]
fn echoed_config_re_runs_to_identical_results() {
    let dir = tempfile::tempdir().unwrap();
    let first = dir.path().join("first");
    let again = dir.path().join("again");

    // A deliberately non-default configuration, supplied via file + override.
    let cfg = dir.path().join("run.cfg");
    std::fs::write(
        &cfg,
        "source.protocol = independent-squeezed\n\
         source.modes = 4\n\
         source.photons = 3.5\n\
         source.tau = 0.8\n\
         simulation.trials = 60\n\
         simulation.q = 5\n",
    )
    .unwrap();
    let run = memsl(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--seed",
        "1234",
        "--out",
        first.to_str().unwrap(),
    ]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));

    let echo = first.join("config.txt");
    let rerun = memsl(&[
        "simulate",
        "--config",
        echo.to_str().unwrap(),
        "--out",
        again.to_str().unwrap(),
    ]);
    assert_eq!(rerun.status.code(), Some(0), "stderr: {}", stderr(&rerun));
    for name in ["mean.csv", "samples.csv", "reconstruction.csv", "summary.csv"] {
        assert_eq!(
            std::fs::read(first.join(name)).unwrap(),
            std::fs::read(again.join(name)).unwrap(),
            "{name} must survive the config round trip"
        );
    }
}

#[test]
fn unknown_config_key_is_a_config_error() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.cfg");
    std::fs::write(&cfg, "detector.gain = 2\n").unwrap();
    let run = memsl(&["predict", "--config", cfg.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(2));
    assert!(stderr(&run).contains("detector.gain"));
}

#[test]
fn single_trial_runs_are_flagged_low_confidence() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("one");
    let run = simulate_dir(&out, &["--seed", "5", "--trials", "1", "--q", "5"]);
    assert_eq!(run.status.code(), Some(0));
    assert!(stderr(&run).contains("low-confidence"));
    let (h, d) = rows(&read(&out.join("summary.csv")));
    assert_eq!(numf(&d[0], &h, "sigma_empirical"), 0.0, "no spread from one trial");
}

#[test]
fn pointwise_runs_sample_the_detection_window_without_reconstruction() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pw");
    let run = simulate_dir(&out, &["--seed", "3", "--trials", "50", "--mode", "pointwise", "--q", "5"]);
    assert_eq!(run.status.code(), Some(0), "stderr: {}", stderr(&run));
    assert!(!out.join("reconstruction.csv").exists(), "no coefficient estimator pointwise");
    let (h, d) = rows(&read(&out.join("samples.csv")));
    for row in &d {
        let s = numf(row, &h, "s");
        assert!((-1.0..=1.0).contains(&s));
    }
    let (h, d) = rows(&read(&out.join("summary.csv")));
    assert!(numf(&d[0], &h, "sigma_empirical").is_nan(), "line error undefined pointwise");
}

// -------------------------------------------------------- reproduce-paper

#[test]
fn reference_report_passes_geometry_and_probe_checks_and_fails_cutoffs_honestly() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("report");
    let run = memsl(&["reproduce-paper", "--out", out.to_str().unwrap()]);
    assert_eq!(run.status.code(), Some(1), "cutoff rows are expected to fail");

    let (header, data) = rows(&read(&out.join("report.csv")));
    assert_eq!(header, ["check", "expected", "actual", "tolerance", "pass"]);
    let pass = |id: &str| -> bool {
        let row = data.iter().find(|r| field(r, &header, "check") == id).unwrap_or_else(|| panic!("row {id}"));
        field(row, &header, "pass") == "true"
    };
    for id in [
        "geometry-c",
        "geometry-rayleigh-nm",
        "optimal-squeezing-factor",
        "optimal-displacement",
        "squeezing-level-db",
        "coherent-photon-equivalence",
        "resolution-q7-nm",
        "basis-trace",
    ] {
        assert!(pass(id), "{id} should pass on a correct build");
    }
    assert!(!pass("cutoff-entangled-single-shot"), "published cutoff differs from the rule");
    assert!(!pass("cutoff-entangled-averaged"), "published cutoff differs from the rule");
    assert!(!pass("cutoff-coherent-averaged"), "published cutoff differs from the rule");
}

#[test]
fn eigenvalue_perturbation_breaks_the_trace_check() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("perturbed");
    let run = memsl(&[
        "reproduce-paper",
        "--out",
        out.to_str().unwrap(),
        "--perturb-lambda",
        "1.01",
    ]);
    assert_eq!(run.status.code(), Some(1));
    let (header, data) = rows(&read(&out.join("report.csv")));
    let trace = data
        .iter()
        .find(|r| field(r, &header, "check") == "basis-trace")
        .expect("trace row");
    assert_eq!(field(trace, &header, "pass"), "false", "perturbed eigenvalues must be caught");
}
