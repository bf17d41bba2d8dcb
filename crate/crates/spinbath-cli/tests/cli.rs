//! End-to-end checks of the command-line interface: exit codes, output
//! formats, and byte-level reproducibility across reruns and worker counts.

use std::path::Path;
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_spinbath")
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn binary")
}

fn write_toy_inputs(dir: &Path) {
    let mut structure = String::from("8\nLattice=\"8 0 0 0 8 0 0 0 8\" qubit_index=0\n");
    structure += "V 0 0 0\nV 4 4 4\n";
    for h in [
        [2.1, 0.3, 0.8],
        [5.5, 1.2, 6.6],
        [0.9, 3.8, 2.2],
        [6.6, 6.1, 1.1],
        [3.2, 5.0, 7.3],
        [7.4, 2.8, 4.4],
    ] {
        structure += &format!("H {} {} {}\n", h[0], h[1], h[2]);
    }
    std::fs::write(dir.join("toy.xyz"), structure).unwrap();
    std::fs::write(
        dir.join("toy.conf"),
        "structure = toy.xyz\n\
         bath = nuclear-h\n\
         r_bath = 7\n\
         r_dipole = 5\n\
         order = 2\n\
         n_meanfield_samples = 2\n\
         sequence = hahn\n\
         t_max_ms = 0.02\n\
         n_points = 17\n\
         seed = 3\n\
         fit = none\n",
    )
    .unwrap();
}

#[test]
fn simulate_is_byte_identical_across_reruns_and_workers() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_inputs(dir.path());
    let conf = dir.path().join("toy.conf");
    let conf = conf.to_str().unwrap();

    let mut outputs = Vec::new();
    for (label, workers) in [("a", "1"), ("b", "1"), ("c", "2")] {
        let out_dir = dir.path().join(label);
        let out = run(&[
            "simulate",
            "--config",
            conf,
            "--out",
            out_dir.to_str().unwrap(),
            "--workers",
            workers,
        ]);
        assert!(
            out.status.success(),
            "stderr: {}",
            String::from_utf8_lossy(&out.stderr)
        );
        outputs.push(std::fs::read(out_dir.join("curve.csv")).unwrap());
    }
    assert_eq!(outputs[0], outputs[1], "rerun changed bytes");
    assert_eq!(outputs[0], outputs[2], "worker count changed bytes");

    let text = String::from_utf8(outputs[0].clone()).unwrap();
    assert!(text.starts_with("time_ms,coh_re,coh_im,coh_abs\n"));
    assert!(!text.contains('\r'), "CSV must use LF endings");
}

#[test]
fn seed_override_changes_mean_field_draws() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_inputs(dir.path());
    let conf = dir.path().join("toy.conf");
    let conf = conf.to_str().unwrap();
    let out1 = dir.path().join("s1");
    let out2 = dir.path().join("s2");
    for (out, seed) in [(&out1, "3"), (&out2, "4")] {
        let result = run(&[
            "simulate",
            "--config",
            conf,
            "--out",
            out.to_str().unwrap(),
            "--seed",
            seed,
        ]);
        assert!(result.status.success());
    }
    let a = std::fs::read(out1.join("curve.csv")).unwrap();
    let b = std::fs::read(out2.join("curve.csv")).unwrap();
    assert_ne!(a, b, "different seeds should move the mean-field draws");
}

#[test]
fn config_errors_exit_with_code_two() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(dir.path().join("bad.conf"), "r_bath = -4\n").unwrap();
    let out = run(&[
        "simulate",
        "--config",
        dir.path().join("bad.conf").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
    let stderr = String::from_utf8_lossy(&out.stderr);
    assert!(stderr.contains("r_bath"), "{stderr}");

    // Missing structure file is an input error too.
    std::fs::write(dir.path().join("missing.conf"), "structure = nope.xyz\n").unwrap();
    let out = run(&[
        "simulate",
        "--config",
        dir.path().join("missing.conf").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(out.status.code(), Some(2));
}

#[test]
fn verify_passes_on_synthetic_bath() {
    let dir = tempfile::tempdir().unwrap();
    std::fs::write(
        dir.path().join("verify.conf"),
        "verify_n_spins = 3\n\
         verify_box = 10\n\
         verify_min_dist = 1.8\n\
         field_gauss = 0 0 100\n\
         sequence = hahn\n\
         t_max_ms = 0.01\n\
         n_points = 9\n\
         seed = 7\n",
    )
    .unwrap();
    let out = run(&[
        "verify",
        "--config",
        dir.path().join("verify.conf").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(
        out.status.success(),
        "stderr: {}",
        String::from_utf8_lossy(&out.stderr)
    );
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("verify: PASS"), "{stdout}");
    assert!(dir.path().join("out/summary.json").exists());
}

#[test]
fn fit_command_recovers_injected_scan() {
    let dir = tempfile::tempdir().unwrap();
    let mut scan = String::from("concentration,t2_ms\n");
    for &c in &[0.02, 0.05, 0.1, 0.2, 0.5] {
        scan += &format!("{c},{}\n", 7e-6 / c);
    }
    std::fs::write(dir.path().join("scan.csv"), scan).unwrap();
    std::fs::write(
        dir.path().join("fit.conf"),
        "fit_input = scan.csv\nfit_kind = scan\ncrossover_targets_ms = 0.01088\n",
    )
    .unwrap();
    let out = run(&[
        "fit",
        "--config",
        dir.path().join("fit.conf").to_str().unwrap(),
        "--out",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let stdout = String::from_utf8_lossy(&out.stdout);
    assert!(stdout.contains("slope = -1.0000"), "{stdout}");
    let summary = std::fs::read_to_string(dir.path().join("out/summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary).unwrap();
    assert_eq!(json["command"], "fit");
    assert!(json["scan"]["slope"].as_f64().unwrap() < -0.999);
}

#[test]
fn summary_echo_reproduces_config() {
    let dir = tempfile::tempdir().unwrap();
    write_toy_inputs(dir.path());
    let out_dir = dir.path().join("out");
    let out = run(&[
        "simulate",
        "--config",
        dir.path().join("toy.conf").to_str().unwrap(),
        "--out",
        out_dir.to_str().unwrap(),
    ]);
    assert!(out.status.success());
    let summary = std::fs::read_to_string(out_dir.join("summary.json")).unwrap();
    let json: serde_json::Value = serde_json::from_str(&summary).unwrap();
    let echo = json["config_echo"].as_str().unwrap();

    // Rerunning from the echoed config gives identical curves.
    std::fs::write(dir.path().join("echo.conf"), echo).unwrap();
    let out2_dir = dir.path().join("out2");
    let out2 = run(&[
        "simulate",
        "--config",
        dir.path().join("echo.conf").to_str().unwrap(),
        "--out",
        out2_dir.to_str().unwrap(),
    ]);
    assert!(out2.status.success());
    let a = std::fs::read(out_dir.join("curve.csv")).unwrap();
    let b = std::fs::read(out2_dir.join("curve.csv")).unwrap();
    assert_eq!(a, b);
}
