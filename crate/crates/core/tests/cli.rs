use std::path::Path;
use std::process::{Command, Output};

const BIN: &str = env!("CARGO_BIN_EXE_ctxai");

fn ctxai(dir: &Path, args: &[&str]) -> Output {
    Command::new(BIN).args(args).current_dir(dir).output().unwrap()
}

fn text(bytes: &[u8]) -> String {
    String::from_utf8_lossy(bytes).into_owned()
}

fn corpus(dir: &Path) {
    let out = ctxai(dir, &["gen-corpus", "--out", "c", "--patients", "2", "--slices", "16", "--size", "96", "--seed", "1"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
}

#[test]
fn help_lists_defaults() {
    let dir = tempfile::tempdir().unwrap();
    let lime = text(&ctxai(dir.path(), &["lime", "--help"]).stdout);
    for needle in ["[default: 2]", "[default: 1000]", "[default: 50]", "[default: 0.01]", "[default: 10]"] {
        assert!(lime.contains(needle), "lime help lacks {needle}:\n{lime}");
    }
    let patient = text(&ctxai(dir.path(), &["patient-score", "--help"]).stdout);
    assert!(patient.contains("[default: 8]") && patient.contains("[default: 2]"), "{patient}");
    let cam = text(&ctxai(dir.path(), &["cam", "--help"]).stdout);
    assert!(cam.contains("[default: 0.5]") && cam.contains("[default: 16]"), "{cam}");
}

#[test]
fn usage_errors_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    for args in [&["frobnicate"][..], &["lime"], &["lime", "--image", "x.pgm", "--bogus"]] {
        let out = ctxai(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}");
        assert!(!out.stderr.is_empty());
    }
}

#[test]
fn missing_input_exits_1_with_path() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxai(dir.path(), &["cam", "--image", "no_such_slice.pgm"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("no_such_slice.pgm"));
    let out = ctxai(dir.path(), &["patient-score", "--slices", "missing_dir"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(text(&out.stderr).contains("missing_dir"));
}

#[test]
fn out_of_range_parameters_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let slice = "c/patient_001/slice_004.pgm";
    let cases: [&[&str]; 6] = [
        &["lime", "--image", slice, "--sigma=0"],
        &["lime", "--image", slice, "--samples", "3"],
        &["shap", "--image", slice, "--fill", "1.5"],
        &["cam", "--image", slice, "--threshold-frac", "2"],
        &["patient-score", "--slices", "c/patient_001", "--ls", "0"],
        &["segment", "--image", slice, "--segments", "1"],
    ];
    for args in cases {
        let out = ctxai(dir.path(), args);
        assert_eq!(out.status.code(), Some(2), "{args:?}: {}", text(&out.stderr));
    }
}

#[test]
fn patient_score_prints_sections_and_patient() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let out = ctxai(dir.path(), &["patient-score", "--slices", "c/patient_001", "--model", "c/lesion_net.xnet", "--ls", "8", "--k", "2"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    let lines: Vec<&str> = stdout.lines().collect();
    assert_eq!(lines.iter().filter(|l| l.starts_with("slice ")).count(), 16);
    let sections: Vec<f64> = lines
        .iter()
        .filter(|l| l.starts_with("section "))
        .map(|l| l.rsplit(' ').next().unwrap().parse().unwrap())
        .collect();
    assert_eq!(sections.len(), 2);
    let patient: f64 = lines.last().unwrap().strip_prefix("patient prob ").unwrap().parse().unwrap();
    let expected = 1.0 - sections.iter().map(|p| 1.0 - p).product::<f64>();
    assert!((patient - expected).abs() < 2e-6);

    let negative = ctxai(dir.path(), &["patient-score", "--slices", "c/patient_000"]);
    let last = text(&negative.stdout).lines().last().unwrap().to_string();
    let p0: f64 = last.strip_prefix("patient prob ").unwrap().parse().unwrap();
    assert!(p0 < patient);
}

#[test]
fn reports_carry_provenance() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let slice = "c/patient_001/slice_004.pgm";
    let out = ctxai(dir.path(), &["shap", "--image", slice, "--segments", "16", "--samples", "200", "--seed", "3", "--model", "c/lesion_net.xnet"]);
    assert_eq!(out.status.code(), Some(0), "{}", text(&out.stderr));
    let report: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert_eq!(report["method"], "kernel-shap");
    assert_eq!(report["provenance"]["seed"], 3);
    assert_eq!(report["provenance"]["model_sha256"].as_str().unwrap().len(), 64);
    let attributions = report["attributions"].as_array().unwrap();
    let total: f64 = attributions.iter().map(|a| a["weight"].as_f64().unwrap()).sum();
    let full = report["intercept"].as_f64().unwrap() + total;
    assert!((full - report["score"].as_f64().unwrap()).abs() < 1e-9);

    let builtin = ctxai(dir.path(), &["shap", "--image", slice, "--segments", "16", "--samples", "200", "--seed", "3"]);
    let other: serde_json::Value = serde_json::from_slice(&builtin.stdout).unwrap();
    assert_eq!(report["provenance"]["model_sha256"], other["provenance"]["model_sha256"]);
}

#[test]
fn artifacts_are_written() {
    let dir = tempfile::tempdir().unwrap();
    corpus(dir.path());
    let slice = "c/patient_001/slice_004.pgm";
    for (cmd, files) in [
        ("segment", &["labels.xten", "segments.ppm"][..]),
        ("cam", &["heatmap.xten", "cam.ppm"]),
        ("lime", &["lime.ppm", "lime_positive.ppm", "lime_weights.txt"]),
    ] {
        let mut args = vec![cmd, "--image", slice, "--out", cmd];
        if cmd == "lime" {
            args.extend(["--segments", "12", "--samples", "100"]);
        }
        let out = ctxai(dir.path(), &args);
        assert_eq!(out.status.code(), Some(0), "{cmd}: {}", text(&out.stderr));
        for f in files {
            assert!(dir.path().join(cmd).join(f).is_file(), "{cmd} missing {f}");
        }
    }
    let heat = ctxai::tensor::Tensor::<f64>::read(dir.path().join("cam/heatmap.xten")).unwrap();
    assert_eq!(heat.dims(), &[96, 96]);
    let ppm = std::fs::read(dir.path().join("cam/cam.ppm")).unwrap();
    assert_eq!(ctxai::image::read_ppm_rgb(&ppm).unwrap().0, 96);
}

#[test]
fn selftest_passes() {
    let dir = tempfile::tempdir().unwrap();
    let out = ctxai(dir.path(), &["selftest"]);
    assert_eq!(out.status.code(), Some(0));
    let stdout = text(&out.stdout);
    assert!(stdout.contains("PASS fc-equivalence") && stdout.contains("PASS kernel-shap-vs-exact"));
    assert!(!stdout.contains("FAIL"));
}

#[test]
fn in_process_entry_point() {
    assert_eq!(ctxai::cli::run(["ctxai", "--version"]), 0);
    assert_eq!(ctxai::cli::run(["ctxai", "nope"]), 2);
}
