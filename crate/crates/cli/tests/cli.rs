//! End-to-end tests of the `mlkf` binary: golden outputs, exit-code
//! contract, determinism, and manifest behavior.

use std::path::{Path, PathBuf};
use std::process::{Command, Output};

fn bin() -> &'static str {
    env!("CARGO_BIN_EXE_mlkf")
}

fn fixture(name: &str) -> PathBuf {
    Path::new(env!("CARGO_MANIFEST_DIR"))
        .join("tests/fixtures")
        .join(name)
}

fn golden(name: &str) -> String {
    std::fs::read_to_string(
        Path::new(env!("CARGO_MANIFEST_DIR"))
            .join("tests/golden")
            .join(name),
    )
    .unwrap()
}

fn run(args: &[&str]) -> Output {
    Command::new(bin()).args(args).output().expect("spawn mlkf")
}

fn run_ok(args: &[&str]) -> Output {
    let out = run(args);
    assert!(
        out.status.success(),
        "command failed: {:?}\nstderr: {}",
        args,
        String::from_utf8_lossy(&out.stderr)
    );
    out
}

#[test]
fn mkf_toy_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("result.json");
    let stats = dir.path().join("stats.csv");
    let kn_dir = dir.path().join("knockoffs");
    run_ok(&[
        "mkf",
        "--x",
        fixture("toy_x.csv").to_str().unwrap(),
        "--y",
        fixture("toy_y.csv").to_str().unwrap(),
        "--groups",
        fixture("toy_groups.csv").to_str().unwrap(),
        "--q",
        "0.4,0.4",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
        "--dump-stats",
        stats.to_str().unwrap(),
        "--export-knockoffs",
        kn_dir.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden("mkf_toy.json"));
    assert_eq!(std::fs::read_to_string(&stats).unwrap(), golden("mkf_toy_stats.csv"));
    // exported knockoff matrices: one CSV per layer, same shape as X
    for m in 1..=2 {
        let text =
            std::fs::read_to_string(kn_dir.join(format!("knockoffs_layer{m}.csv"))).unwrap();
        assert_eq!(text.lines().count(), 40);
        assert_eq!(text.lines().next().unwrap().split(',').count(), 10);
    }
    // the manifest sits next to the output and lists it
    let manifest = dir.path().join("result.manifest.json");
    let mtext = std::fs::read_to_string(&manifest).unwrap();
    let m: serde_json::Value = serde_json::from_str(&mtext).unwrap();
    assert!(m["outputs"].as_array().unwrap().iter().any(|o| o
        .as_str()
        .unwrap()
        .ends_with("result.json")));
    assert_eq!(m["seeds"]["seed"], 7);
}

#[test]
fn mkf_single_layer_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("m1.json");
    run_ok(&[
        "mkf",
        "--x",
        fixture("toy_x.csv").to_str().unwrap(),
        "--y",
        fixture("toy_y.csv").to_str().unwrap(),
        "--groups",
        fixture("toy_groups_m1.csv").to_str().unwrap(),
        "--q",
        "0.4",
        "--seed",
        "7",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden("mkf_m1.json"));
}

#[test]
fn mkf_q_count_mismatch_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("r.json");
    let res = run(&[
        "mkf",
        "--x",
        fixture("toy_x.csv").to_str().unwrap(),
        "--y",
        fixture("toy_y.csv").to_str().unwrap(),
        "--groups",
        fixture("toy_groups.csv").to_str().unwrap(),
        "--q",
        "0.4",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("layers"), "stderr: {err}");
    assert!(!out.exists());
}

#[test]
fn mkf_dimension_mismatch_names_file() {
    let dir = tempfile::tempdir().unwrap();
    // y with the wrong number of rows
    let bad_y = dir.path().join("bad_y.csv");
    std::fs::write(&bad_y, "1.0\n2.0\n3.0\n").unwrap();
    let res = run(&[
        "mkf",
        "--x",
        fixture("toy_x.csv").to_str().unwrap(),
        "--y",
        bad_y.to_str().unwrap(),
        "--groups",
        fixture("toy_groups.csv").to_str().unwrap(),
        "--q",
        "0.4,0.4",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("bad_y.csv"), "stderr: {err}");
}

#[test]
fn mkf_n_less_than_2n_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    // 10 columns but only 12 rows
    let rows: Vec<String> = (0..12)
        .map(|i| {
            (0..10)
                .map(|j| format!("{}", ((i * 10 + j) as f64 * 0.37).sin()))
                .collect::<Vec<_>>()
                .join(",")
        })
        .collect();
    let x = dir.path().join("x.csv");
    std::fs::write(&x, rows.join("\n") + "\n").unwrap();
    let y = dir.path().join("y.csv");
    std::fs::write(&y, (0..12).map(|i| format!("{}.0", i)).collect::<Vec<_>>().join("\n")).unwrap();
    let res = run(&[
        "mkf",
        "--x",
        x.to_str().unwrap(),
        "--y",
        y.to_str().unwrap(),
        "--groups",
        fixture("toy_groups.csv").to_str().unwrap(),
        "--q",
        "0.4,0.4",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
    assert!(String::from_utf8_lossy(&res.stderr).contains("n >= 2N"));
}

#[test]
fn pfilter_precomputed_matches_golden() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("pf.json");
    run_ok(&[
        "pfilter",
        "--pvalues",
        fixture("pf_pvalues.csv").to_str().unwrap(),
        "--groups",
        fixture("pf_groups.csv").to_str().unwrap(),
        "--q",
        "0.2,0.2",
        "--aggregation",
        "precomputed",
        "--out",
        out.to_str().unwrap(),
    ]);
    assert_eq!(std::fs::read_to_string(&out).unwrap(), golden("pfilter_toy.json"));
}

#[test]
fn pfilter_single_layer_equals_bh() {
    // BH on p = (0.01, 0.02, 0.5, 0.9) at q = 0.2 rejects the first two
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("bh.json");
    run_ok(&[
        "pfilter",
        "--pvalues",
        fixture("bh_pvalues.csv").to_str().unwrap(),
        "--groups",
        fixture("bh_groups.csv").to_str().unwrap(),
        "--q",
        "0.2",
        "--aggregation",
        "simes",
        "--out",
        out.to_str().unwrap(),
    ]);
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    assert_eq!(v["selected_variables"], serde_json::json!([1, 2]));
}

#[test]
fn pfilter_fisher_zero_warns_and_clamps() {
    let dir = tempfile::tempdir().unwrap();
    let out = dir.path().join("fz.json");
    let res = run_ok(&[
        "pfilter",
        "--pvalues",
        fixture("zero_pvalues.csv").to_str().unwrap(),
        "--groups",
        fixture("bh_groups.csv").to_str().unwrap(),
        "--q",
        "0.2",
        "--aggregation",
        "fisher",
        "--out",
        out.to_str().unwrap(),
    ]);
    let err = String::from_utf8_lossy(&res.stderr);
    assert!(err.contains("warning"), "stderr: {err}");
    assert!(err.contains("clamped"), "stderr: {err}");
    let v: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(&out).unwrap()).unwrap();
    // the zero-p-value variable is selected at threshold 0
    assert!(v["selected_variables"]
        .as_array()
        .unwrap()
        .contains(&serde_json::json!(1)));
}

#[test]
fn pfilter_out_of_range_pvalue_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let bad = dir.path().join("bad_p.csv");
    std::fs::write(&bad, "variable,pvalue\n1,0.5\n2,1.5\n3,0.1\n4,0.2\n").unwrap();
    let res = run(&[
        "pfilter",
        "--pvalues",
        bad.to_str().unwrap(),
        "--groups",
        fixture("bh_groups.csv").to_str().unwrap(),
        "--q",
        "0.2",
        "--aggregation",
        "simes",
        "--out",
        dir.path().join("r.json").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bounds_commands_print_reports() {
    let out = run_ok(&["bounds", "akn-loose"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    let value = v["value"].as_f64().unwrap();
    assert!((2.0988..=2.1008).contains(&value));

    let out = run_ok(&["bounds", "cpf", "--g", "1"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!((v["value"].as_f64().unwrap() - 5.6006).abs() < 1e-3);

    let out = run_ok(&["bounds", "apf-exact", "--n", "10"]);
    let v: serde_json::Value = serde_json::from_slice(&out.stdout).unwrap();
    assert!(v["value"].as_f64().unwrap() <= 1.42);

    let out = run_ok(&["bounds", "table", "--k0-max", "3"]);
    let text = String::from_utf8_lossy(&out.stdout);
    assert!(text.starts_with("k0,bound\n"));
    assert_eq!(text.lines().count(), 5);

    // domain violations exit 2
    let res = run(&["bounds", "akn-refined", "--k0", "99"]);
    assert_eq!(res.status.code(), Some(2));
    let res = run(&["bounds", "akn-mc", "--steps", "10", "--reps", "5"]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn bounds_refined_dp_equals_enumeration() {
    let dp = run_ok(&["bounds", "akn-refined", "--k0", "6"]);
    let en = run_ok(&["bounds", "akn-refined", "--k0", "6", "--enumerate"]);
    let dv: serde_json::Value = serde_json::from_slice(&dp.stdout).unwrap();
    let ev: serde_json::Value = serde_json::from_slice(&en.stdout).unwrap();
    assert_eq!(dv["value"], ev["value"]);
}

#[test]
fn simulate_small_config_is_deterministic() {
    let dir = tempfile::tempdir().unwrap();
    let out_a = dir.path().join("a");
    let out_b = dir.path().join("b");
    for out in [&out_a, &out_b] {
        run_ok(&[
            "simulate",
            "--config",
            fixture("sim_small.toml").to_str().unwrap(),
            "--out-dir",
            out.to_str().unwrap(),
        ]);
    }
    let a = std::fs::read(out_a.join("results.csv")).unwrap();
    let b = std::fs::read(out_b.join("results.csv")).unwrap();
    assert_eq!(a, b);
    let text = String::from_utf8(a).unwrap();
    assert!(text.starts_with("method,layer,param,param_value,fdr,fdr_se,power,power_se\n"));
    // 4 methods x 2 layers
    assert_eq!(text.lines().count(), 1 + 8);
    // manifests agree on the digest
    let ma: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_a.join("manifest.json")).unwrap())
            .unwrap();
    let mb: serde_json::Value =
        serde_json::from_str(&std::fs::read_to_string(out_b.join("manifest.json")).unwrap())
            .unwrap();
    assert_eq!(ma["config_digest"], mb["config_digest"]);
}

#[test]
fn simulate_infeasible_config_is_exit_2() {
    let dir = tempfile::tempdir().unwrap();
    let cfg = dir.path().join("bad.toml");
    // n < 2N with knockoff methods requested
    std::fs::write(
        &cfg,
        "design = \"ar1_linear\"\nn = 50\nnum_vars = 40\nrho = 0.2\nsnr = 1.0\n\
         k_groups = 2\nn_nonzero = 6\ngroup_size = 10\nmethods = [\"KF\"]\n\
         q = [0.2, 0.2]\nreps = 2\nmaster_seed = 1\npattern_seed = 1\n",
    )
    .unwrap();
    let res = run(&[
        "simulate",
        "--config",
        cfg.to_str().unwrap(),
        "--out-dir",
        dir.path().join("out").to_str().unwrap(),
    ]);
    assert_eq!(res.status.code(), Some(2));
}

#[test]
fn simulate_requires_exactly_one_source() {
    let dir = tempfile::tempdir().unwrap();
    let res = run(&["simulate", "--out-dir", dir.path().to_str().unwrap()]);
    assert_eq!(res.status.code(), Some(2));
}
