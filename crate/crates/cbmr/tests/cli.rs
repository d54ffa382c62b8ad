//! End-to-end tests of the compiled binary: the full seven-command pipeline
//! on a synthetic dataset, the exit-code contract, and byte-identical reruns
//! across processes and thread counts.

mod common;

use common::{cbmr_cmd, demo, run, run_ok, stderr_of};

fn cfg(demo: &common::Demo) -> String {
    demo.config.to_string_lossy().into_owned()
}

#[test]
fn full_pipeline_emits_every_declared_artifact() {
    let d = demo();
    let c = cfg(&d);

    let fit_out = run_ok(&["fit", "--config", &c]);
    assert!(fit_out.contains("converged: true"), "fit summary: {fit_out}");
    let infer_out = run_ok(&["infer", "--config", &c]);
    assert!(infer_out.contains("mu0"), "infer summary: {infer_out}");
    run_ok(&["glh", "--config", &c, "--contrast", "[1]"]);
    run_ok(&["select", "--config", &c]);
    run_ok(&["simulate-null", "--config", &c]);
    run_ok(&["ale", "--config", &c]);
    let cmp_out = run_ok(&["compare", "--config", &c]);
    assert!(cmp_out.contains("DSC"), "compare summary: {cmp_out}");

    for name in [
        "fit.json",
        "eta_x.nii.gz",
        "mu_x.nii.gz",
        "z.nii.gz",
        "z_mu.nii.gz",
        "p.nii.gz",
        "p_trunc.nii.gz",
        "fdr_mask.nii.gz",
        "infer.json",
        "glh.json",
        "selection_report.csv",
        "selection.json",
        "calibration.csv",
        "calibration.json",
        "pp_plot.svg",
        "ale.nii.gz",
        "ale_z.nii.gz",
        "ale_p.nii.gz",
        "ale_fdr_mask.nii.gz",
        "ale.json",
        "comparison.csv",
    ] {
        assert!(d.out.join(name).exists(), "{name} missing from output dir");
    }

    let report = std::fs::read_to_string(d.out.join("selection_report.csv")).unwrap();
    assert_eq!(report.lines().count(), 5, "header plus one row per family:\n{report}");
    for family in ["poisson", "quasi_poisson", "negative_binomial", "clustered_negative_binomial"] {
        assert!(report.contains(family), "{family} missing from report:\n{report}");
    }

    let comparison = std::fs::read_to_string(d.out.join("comparison.csv")).unwrap();
    assert!(comparison.starts_with("threshold,n_ale,n_cbmr,n_intersection,dsc\n"));
    assert_eq!(comparison.lines().count(), 3, "two threshold rows:\n{comparison}");
}

#[test]
fn config_naming_a_missing_mask_exits_1_and_names_the_field() {
    let d = demo();
    std::fs::remove_file(d.dir.path().join("mask.nii.gz")).unwrap();
    let out = run(&["fit", "--config", &cfg(&d)]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("paths.mask"), "stderr: {}", stderr_of(&out));
}

#[test]
fn infer_without_a_fit_exits_1_and_names_the_artifact() {
    let d = demo();
    let out = run(&["infer", "--config", &cfg(&d)]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("fit.json"), "stderr: {err}");
    assert!(err.contains("run `cbmr fit` first"), "stderr: {err}");
}

#[test]
fn compare_without_ale_maps_exits_1_and_names_the_artifact() {
    let d = demo();
    let c = cfg(&d);
    run_ok(&["fit", "--config", &c]);
    run_ok(&["infer", "--config", &c]);
    let out = run(&["compare", "--config", &c]);
    assert_eq!(out.status.code(), Some(1));
    let err = stderr_of(&out);
    assert!(err.contains("ale_p.nii.gz"), "stderr: {err}");
    assert!(err.contains("run `cbmr ale` first"), "stderr: {err}");
}

#[test]
fn stale_fit_artifact_is_rejected_when_the_config_changed() {
    let d = demo();
    let c = cfg(&d);
    run_ok(&["fit", "--config", &c]);
    let out = run(&[
        "infer",
        "--config",
        &c,
        "--model",
        "negative_binomial",
    ]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("model.family"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn glh_rejects_a_contrast_of_the_wrong_width() {
    let d = demo();
    let c = cfg(&d);
    run_ok(&["fit", "--config", &c]);
    let out = run(&["glh", "--config", &c, "--contrast", "[1,0,0]"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(
        stderr_of(&out).contains("rows of length 1"),
        "stderr: {}",
        stderr_of(&out)
    );
}

#[test]
fn unknown_model_family_exits_1() {
    let d = demo();
    let out = run(&["fit", "--config", &cfg(&d), "--model", "zeta"]);
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("zeta"), "stderr: {}", stderr_of(&out));
}

#[test]
fn garbage_thread_env_exits_1() {
    let d = demo();
    let out = cbmr_cmd()
        .args(["fit", "--config", &cfg(&d)])
        .env("CBMR_THREADS", "many")
        .output()
        .expect("cbmr binary runs");
    assert_eq!(out.status.code(), Some(1));
    assert!(stderr_of(&out).contains("CBMR_THREADS"), "stderr: {}", stderr_of(&out));
}

#[test]
fn help_documents_the_config_keys() {
    let out = run(&["fit", "--help"]);
    assert!(out.status.success());
    let text = String::from_utf8_lossy(&out.stdout).into_owned();
    for key in [
        "paths.foci",
        "paths.mask",
        "paths.output_dir",
        "model.family",
        "model.binarize",
        "spline.spacing_mm",
        "spline.prune_threshold",
        "covariates.terms",
        "covariates.standardize",
        "fit.max_iter",
        "fit.tol_grad",
        "fit.tol_loglik",
        "inference.sidedness",
        "inference.q",
        "inference.truncation_floor",
        "simulation.sampler",
        "simulation.n_realizations",
        "ale.fwhm_mm",
        "ale.n_iter",
        "compare.uncorrected_p",
        "seed",
    ] {
        assert!(text.contains(key), "--help does not document {key}");
    }
}

/// Re-running every command with the same config and seed — once on two
/// worker threads, once on one — must reproduce each artifact byte for byte.
#[test]
fn reruns_are_byte_identical_across_thread_counts() {
    let d = demo();
    let c = cfg(&d);
    let out_a = d.dir.path().join("out_a");
    let out_b = d.dir.path().join("out_b");

    for (dir, threads) in [(&out_a, "2"), (&out_b, "1")] {
        let dir_s = dir.to_string_lossy().into_owned();
        let base = ["--config", &c, "--output-dir", &dir_s, "--threads", threads];
        let with = |cmd: &[&str]| {
            let mut args: Vec<&str> = cmd.to_vec();
            args.extend_from_slice(&base);
            run_ok(&args);
        };
        with(&["fit"]);
        with(&["infer"]);
        with(&["glh", "--contrast", "[1]"]);
        with(&["select"]);
        with(&["simulate-null"]);
        with(&["ale"]);
        with(&["compare"]);
    }

    let mut names: Vec<_> = std::fs::read_dir(&out_a)
        .unwrap()
        .map(|e| e.unwrap().file_name())
        .collect();
    names.sort();
    assert!(names.len() >= 21, "expected the full artifact set, got {names:?}");
    for name in names {
        let a = std::fs::read(out_a.join(&name)).unwrap();
        let b = std::fs::read(out_b.join(&name)).unwrap();
        assert!(a == b, "{name:?} differs between reruns");
    }
}
