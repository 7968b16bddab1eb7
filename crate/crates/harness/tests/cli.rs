use std::path::Path;
use std::process::{Command, Output};

const TINY: &str = r#"{
  "repeats": 1,
  "seed": 3,
  "training": {"epochs": 2, "conv_widths": [4, 4, 4], "fc_units": 24},
  "data": {"synthetic": {"n_samples": 24, "n_test": 16, "views": 2, "image_size": 24}},
  "mrcl_block": 8
}"#;

fn m2dl(args: &[&str]) -> Output {
    Command::new(env!("CARGO_BIN_EXE_m2dl")).args(args).output().unwrap()
}

fn setup(dir: &Path, json: &str) -> String {
    let p = dir.join("cfg.json");
    std::fs::write(&p, json).unwrap();
    p.to_str().unwrap().to_string()
}

/// results.csv with the wall_ms column removed.
fn results(dir: &Path) -> Vec<String> {
    let text = std::fs::read_to_string(dir.join("results.csv")).unwrap();
    text.lines()
        .map(|l| {
            let mut f: Vec<&str> = l.split(',').collect();
            f.remove(7);
            f.join(",")
        })
        .collect()
}

fn ok(out: &Output) {
    assert!(out.status.success(), "stderr: {}", String::from_utf8_lossy(&out.stderr));
}

#[test]
fn eval_is_byte_identical_across_runs() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), TINY);
    let (a, b) = (tmp.path().join("a"), tmp.path().join("b"));
    ok(&m2dl(&["eval", "--config", &cfg, "--out", a.to_str().unwrap()]));
    ok(&m2dl(&["eval", "--config", &cfg, "--out", b.to_str().unwrap()]));
    let ra = results(&a);
    assert_eq!(ra, results(&b));
    assert_eq!(ra[0], "variant,activation,penalty,repeat,mae_pan_deg,mae_tilt_deg,seed,std_pan_deg");
    assert_eq!(ra.len(), 3);
}

#[test]
fn flags_override_the_config_file() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), TINY);
    let out = tmp.path().join("o");
    ok(&m2dl(&[
        "eval", "--config", &cfg, "--variant", "TDL", "--activation", "tanh", "--penalty", "LeastLasso", "--repeats",
        "2", "--seed", "9", "--out", out.to_str().unwrap(),
    ]));
    let rows = results(&out);
    assert_eq!(rows.len(), 4);
    assert!(rows[1].starts_with("TDL,Tanh,LeastLasso,0,"));
    assert!(rows[3].starts_with("TDL,Tanh,LeastLasso,-1,"));
    assert!(rows[1].contains(",9,"));
    let saved = std::fs::read_to_string(out.join("config.json")).unwrap();
    assert!(saved.contains("\"repeats\": 2"));
}

#[test]
fn experiment_subcommands_write_one_summary_per_group() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), TINY);
    for (cmd, groups) in [("compare-activations", 3), ("compare-losses", 4), ("ablate", 4)] {
        let out = tmp.path().join(cmd);
        ok(&m2dl(&[cmd, "--config", &cfg, "--out", out.to_str().unwrap()]));
        let rows = results(&out);
        assert_eq!(rows.iter().filter(|r| r.split(',').nth(3) == Some("-1")).count(), groups, "{cmd}");
    }
}

#[test]
fn train_then_eval_features_matches_full_eval() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), TINY);
    let (t, full, cached) = (tmp.path().join("t"), tmp.path().join("full"), tmp.path().join("cached"));
    ok(&m2dl(&["train", "--config", &cfg, "--out", t.to_str().unwrap()]));
    assert!(t.join("task0.ckpt").exists() && t.join("task1.ckpt").exists());
    let features = t.join("features");
    for variant in ["M2DL", "TDL"] {
        ok(&m2dl(&["eval", "--config", &cfg, "--variant", variant, "--out", full.to_str().unwrap()]));
        ok(&m2dl(&[
            "eval", "--config", &cfg, "--variant", variant, "--features", features.to_str().unwrap(), "--out",
            cached.to_str().unwrap(),
        ]));
        assert_eq!(results(&full), results(&cached), "{variant}");
    }
}

#[test]
fn gen_data_exports_loadable_tasks() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), TINY);
    let out = tmp.path().join("data");
    ok(&m2dl(&["gen-data", "--config", &cfg, "--out", out.to_str().unwrap()]));
    let train =
        m2dl_synth::load_csv_dataset(out.join("train"), out.join("train").join("annotations.csv"), 24).unwrap();
    let test = m2dl_synth::load_csv_dataset(out.join("test"), out.join("test").join("annotations.csv"), 24).unwrap();
    assert_eq!(train.len(), 2);
    assert_eq!((train[0].len(), test[1].len()), (24, 16));
}

#[test]
fn aborted_group_exits_nonzero() {
    let tmp = tempfile::tempdir().unwrap();
    let json = TINY.replace("\"epochs\": 2", "\"epochs\": 2, \"eta\": 1e200");
    let cfg = setup(tmp.path(), &json);
    let out = tmp.path().join("o");
    let o = m2dl(&["eval", "--config", &cfg, "--activation", "sigmoid", "--out", out.to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("aborted"));
    assert!(out.join("results.csv").exists());
}

#[test]
fn invalid_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    let cfg = setup(tmp.path(), r#"{"repeats": 0}"#);
    let o = m2dl(&["eval", "--config", &cfg, "--out", tmp.path().to_str().unwrap()]);
    assert!(!o.status.success());
    assert!(String::from_utf8_lossy(&o.stderr).contains("repeats"));
}

#[test]
fn lrr_demo_writes_diagnostics() {
    let tmp = tempfile::tempdir().unwrap();
    let o = m2dl(&["lrr-demo", "--out", tmp.path().to_str().unwrap()]);
    ok(&o);
    for f in ["z_star.csv", "e_star.csv", "residuals.csv"] {
        assert!(tmp.path().join("lrr").join(f).exists(), "{f}");
    }
    let stdout = String::from_utf8_lossy(&o.stdout);
    let pct: f64 = stdout
        .lines()
        .find(|l| l.contains("corrupted samples"))
        .and_then(|l| l.rsplit(' ').next())
        .map(|s| s.trim_end_matches('%').parse().unwrap())
        .unwrap();
    assert!(pct >= 90.0, "{stdout}");
}
