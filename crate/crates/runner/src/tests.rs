use std::fs;
use std::path::Path;

use super::*;

const CANON: &str =
    "{\"n\":3,\"unit\":\"seconds\",\"entries\":[0.0,-0.001,-0.002,0.001,0.0,-0.001,0.002,0.001,0.0]}\n";

const PATH_FLAGS: [&str; 8] = [
    "--in",
    "--out",
    "--mask",
    "--outliers-out",
    "--matrix-out",
    "--mask-out",
    "--config",
    "--out-dir",
];

/// Runs the CLI with path arguments resolved against `dir`.
fn tdoa(dir: &Path, args: &[&str]) -> u8 {
    let mut argv = vec!["tdoa".to_string()];
    for (i, a) in args.iter().enumerate() {
        if i > 0 && PATH_FLAGS.contains(&args[i - 1]) {
            argv.push(dir.join(a).to_string_lossy().into_owned());
        } else {
            argv.push(a.to_string());
        }
    }
    run_from(argv)
}

fn read(dir: &Path, name: &str) -> String {
    fs::read_to_string(dir.join(name)).unwrap()
}

#[test]
fn canonical_json_roundtrips_byte_for_byte() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.json"), CANON).unwrap();
    assert_eq!(
        tdoa(
            dir.path(),
            &["validate", "--in", "m.json", "--out", "copy.json"]
        ),
        0
    );
    assert_eq!(read(dir.path(), "copy.json"), CANON);
}

#[test]
fn csv_converts_to_identical_json() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("m.csv"),
        "tdoa_matrix,n=3\n0,-0.001,-0.002\n0.001,0,-0.001\n0.002,0.001,0\n",
    )
    .unwrap();
    assert_eq!(
        tdoa(
            dir.path(),
            &["validate", "--in", "m.csv", "--out", "m.json"]
        ),
        0
    );
    assert_eq!(read(dir.path(), "m.json"), CANON);

    let args = [
        "--format", "csv", "denoise", "--in", "m.json", "--out", "d.txt",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
    assert!(read(dir.path(), "d.txt").starts_with("tdoa_matrix,n=3\n"));
}

#[test]
fn asymmetry_is_rejected_with_position() {
    let dir = tempfile::tempdir().unwrap();
    let path = dir.path().join("m.json");
    fs::write(
        &path,
        "{\"n\":3,\"unit\":\"seconds\",\"entries\":[0,-0.001,-0.002,0.002,0,-0.001,0.002,0.001,0]}",
    )
    .unwrap();
    assert_eq!(
        tdoa(
            dir.path(),
            &["denoise", "--in", "m.json", "--out", "d.json"]
        ),
        EXIT_INVALID
    );
    assert!(!dir.path().join("d.json").exists());
    let err = io::read_matrix(&path, &ParseOptions::default()).unwrap_err();
    assert!(err.to_string().contains("(1,2)"), "{err}");

    let args = [
        "--symmetrize",
        "denoise",
        "--in",
        "m.json",
        "--out",
        "d.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
}

#[test]
fn input_errors_exit_with_2() {
    let dir = tempfile::tempdir().unwrap();
    assert_eq!(
        tdoa(
            dir.path(),
            &["denoise", "--in", "missing.json", "--out", "x.json"]
        ),
        2
    );
    assert_eq!(tdoa(dir.path(), &["denoise", "--in", "a.json"]), 2);
    assert_eq!(tdoa(dir.path(), &["frobnicate"]), 2);
    fs::write(dir.path().join("m.json"), CANON).unwrap();
    fs::write(
        dir.path().join("mask.json"),
        "{\"n\":4,\"missing_pairs\":[[0,1]]}",
    )
    .unwrap();
    let args = [
        "complete",
        "--in",
        "m.json",
        "--mask",
        "mask.json",
        "--out",
        "c.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 2);
}

#[test]
fn non_recoverable_mask_exits_with_3_unless_pseudo() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(dir.path().join("m.json"), CANON).unwrap();
    fs::write(
        dir.path().join("mask.json"),
        "{\"n\":3,\"missing_pairs\":[[0,1],[0,2]]}",
    )
    .unwrap();
    let args = [
        "complete",
        "--in",
        "m.json",
        "--mask",
        "mask.json",
        "--out",
        "c.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), EXIT_NOT_RECOVERABLE);
    let mut pseudo = args.to_vec();
    pseudo.push("--pseudo");
    assert_eq!(tdoa(dir.path(), &pseudo), 0);
}

#[test]
fn completion_fills_masked_pair() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("m.json"),
        "{\"n\":3,\"unit\":\"seconds\",\"entries\":[0,-0.001,0.5,0.001,0,-0.001,-0.5,0.001,0]}",
    )
    .unwrap();
    fs::write(
        dir.path().join("mask.json"),
        "{\"n\":3,\"missing_pairs\":[[0,2]]}",
    )
    .unwrap();
    let args = [
        "complete",
        "--in",
        "m.json",
        "--mask",
        "mask.json",
        "--out",
        "c.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
    let m = io::matrix_from_json(&read(dir.path(), "c.json"), &ParseOptions::default()).unwrap();
    assert!((m.get(0, 2) + 0.002).abs() < 1e-12);
}

#[test]
fn robust_denoise_outputs_and_strict_exit() {
    let dir = tempfile::tempdir().unwrap();
    let sim = [
        "--seed",
        "5",
        "simulate",
        "--n",
        "8",
        "--outliers",
        "2",
        "--out",
        "t.json",
        "--matrix-out",
        "m.json",
    ];
    assert_eq!(tdoa(dir.path(), &sim), 0);

    let args = [
        "robust-denoise",
        "--in",
        "m.json",
        "--k",
        "3",
        "--out",
        "r.json",
        "--outliers-out",
        "s.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
    let s = io::outliers_from_json(&read(dir.path(), "s.json")).unwrap();
    assert_eq!(s.n(), 8);
    assert_eq!(s.triplets().len(), 2 * s.support().len());

    let mut strict = args.to_vec();
    strict.extend(["--max-iter", "1", "--strict"]);
    assert_eq!(tdoa(dir.path(), &strict), EXIT_NOT_CONVERGED);
}

#[test]
fn robust_complete_runs_on_simulated_trial() {
    let dir = tempfile::tempdir().unwrap();
    let sim = [
        "--seed",
        "11",
        "simulate",
        "--n",
        "10",
        "--noise-sigma",
        "1e-6",
        "--outliers",
        "2",
        "--missing",
        "0.2",
        "--out",
        "t.json",
        "--matrix-out",
        "m.json",
        "--mask-out",
        "mask.json",
    ];
    assert_eq!(tdoa(dir.path(), &sim), 0);
    let args = [
        "robust-complete",
        "--in",
        "m.json",
        "--mask",
        "mask.json",
        "--k",
        "3",
        "--out",
        "rc.json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
    let trial = io::trial_from_json(&read(dir.path(), "t.json")).unwrap();
    let est = io::read_matrix(&dir.path().join("rc.json"), &ParseOptions::default()).unwrap();
    assert!(tdoa_core::snr_db(&trial.ground_truth, &est).unwrap() > 40.0);
}

#[test]
fn simulate_is_a_function_of_the_seed() {
    let dir = tempfile::tempdir().unwrap();
    let run = |seed: &str, out: &str| {
        let args = [
            "--seed",
            seed,
            "simulate",
            "--noise-sigma",
            "1e-5",
            "--outliers",
            "3",
            "--missing",
            "0.3",
            "--out",
            out,
        ];
        assert_eq!(tdoa(dir.path(), &args), 0);
        read(dir.path(), out)
    };
    assert_eq!(run("3", "a.json"), run("3", "b.json"));
    assert_ne!(run("3", "a.json"), run("4", "c.json"));
}

#[test]
fn sweep_writes_both_metric_files() {
    let dir = tempfile::tempdir().unwrap();
    fs::write(
        dir.path().join("cfg.json"),
        r#"{"n": 6, "runs": 2, "noise_sigmas": [1e-5], "outlier_counts": [0, 1], "k_values": [2],
            "pipelines": ["raw", "robust_denoise"]}"#,
    )
    .unwrap();
    let args = [
        "--seed",
        "8",
        "sweep",
        "--config",
        "cfg.json",
        "--out-dir",
        "out",
        "--json",
    ];
    assert_eq!(tdoa(dir.path(), &args), 0);
    let snr = read(dir.path(), "out/snr_db.csv");
    let lines: Vec<&str> = snr.lines().collect();
    assert_eq!(lines.len(), 1 + 4);
    assert!(lines[0].starts_with("pipeline,k,noise_sigma_s"));
    assert!(lines.iter().skip(1).all(|l| l.contains(",2,8,")));
    assert!(dir.path().join("out/loc_error_mm.csv").exists());
    assert!(dir.path().join("out/sweep.json").exists());

    fs::write(
        dir.path().join("bad.json"),
        r#"{"n": 6, "runs": 2, "noise_sigmas": [1e-5], "bogus": 1}"#,
    )
    .unwrap();
    assert_eq!(
        tdoa(
            dir.path(),
            &["sweep", "--config", "bad.json", "--out-dir", "o"]
        ),
        2
    );
}
