use m2dl_cnn::Activation;
use m2dl_core::mtl::{Penalty, SolverOpts};
use m2dl_harness::pipeline::{manifold, stage1, stage2, Features};
use m2dl_harness::report::{mean_std, CSV_HEADER};
use m2dl_harness::{
    ablate, compare_activations, compare_losses, run_pipeline, write_results_csv, DataSource, EvalReport,
    PipelineConfig, TrainingConfig, Variant,
};
use m2dl_synth::SceneParams;

fn tiny(variant: Variant) -> PipelineConfig {
    PipelineConfig {
        variant,
        repeats: 1,
        seed: 5,
        training: TrainingConfig {
            epochs: 2,
            conv_widths: [4, 4, 4],
            fc_units: 24,
            ..TrainingConfig::default()
        },
        data: DataSource::Synthetic(SceneParams {
            n_samples: 24,
            n_test: 16,
            views: 2,
            image_size: 24,
            ..SceneParams::dpose_like()
        }),
        mrcl_block: 8,
        solver: SolverOpts {
            max_iter: 500,
            ..PipelineConfig::default().solver
        },
        ..PipelineConfig::default()
    }
}

fn without_wall(r: &EvalReport) -> EvalReport {
    let mut r = r.clone();
    r.wall_ms = 0;
    r.repeats.iter_mut().for_each(|x| x.wall_ms = 0);
    r
}

#[test]
fn tdl_memorizes_clean_toy_set() {
    let mut cfg = tiny(Variant::TDL);
    cfg.data = DataSource::Synthetic(SceneParams {
        n_samples: 10,
        n_test: 10,
        noise_sigma: 0.0,
        views: 2,
        image_size: 24,
        ..SceneParams::dpose_like()
    });
    cfg.training.fc_units = 64;
    cfg.training.conv_widths = [8, 8, 16];
    let s1 = stage1(&cfg, 0).unwrap();
    // score on the training split itself
    let f = Features {
        test_x: s1.features.train_x.clone(),
        test_y: s1.features.train_y.clone(),
        ..s1.features.clone()
    };
    let solver = SolverOpts {
        rho1: 1e-4,
        max_iter: 20_000,
        tol: 1e-12,
        ..SolverOpts::default()
    };
    let s2 = stage2(&f, false, Penalty::LeastTrace, &solver).unwrap();
    assert!(s2.mae_pan < 1.0, "train MAE {}", s2.mae_pan);
}

#[test]
fn repeated_runs_are_identical() {
    let cfg = tiny(Variant::M2DL);
    let a = run_pipeline(&cfg).unwrap();
    let b = run_pipeline(&cfg).unwrap();
    assert!(a.complete());
    assert_eq!(without_wall(&a), without_wall(&b));
    assert_eq!(a.mean_pan_deg.to_bits(), b.mean_pan_deg.to_bits());
}

#[test]
fn adding_repeats_leaves_earlier_ones_unchanged() {
    let one = run_pipeline(&tiny(Variant::MDL)).unwrap();
    let two = run_pipeline(&PipelineConfig {
        repeats: 2,
        ..tiny(Variant::MDL)
    })
    .unwrap();
    assert_eq!(two.repeats.len(), 2);
    let (a, b) = (&one.repeats[0], &two.repeats[0]);
    assert_eq!(a.mae_pan_deg.to_bits(), b.mae_pan_deg.to_bits());
    assert_eq!(a.dataset_checksum, b.dataset_checksum);
    assert_eq!(a.feature_checksum, b.feature_checksum);
    assert_ne!(two.repeats[0].dataset_checksum, two.repeats[1].dataset_checksum);
}

#[test]
fn stage2_on_cached_features_matches_full_run() {
    for variant in Variant::ALL {
        let cfg = tiny(variant);
        let full = run_pipeline(&cfg).unwrap();
        let s1 = stage1(&cfg, 0).unwrap();
        let feats = if variant.manifold() { manifold(&s1.features, &cfg).unwrap() } else { s1.features.clone() };
        let s2 = stage2(&feats, variant.multi_task(), cfg.mtl_penalty, &cfg.solver).unwrap();
        assert_eq!(full.repeats[0].mae_pan_deg.to_bits(), s2.mae_pan.to_bits(), "{variant}");
        assert_eq!(full.repeats[0].feature_checksum, s1.features.checksum());
    }
}

#[test]
fn activation_comparison_shares_data() {
    let reports = compare_activations(&tiny(Variant::M2DL)).unwrap();
    let acts: Vec<Activation> = reports.iter().map(|r| r.activation).collect();
    assert_eq!(acts, Activation::ALL);
    let sums: Vec<&str> = reports.iter().map(|r| r.repeats[0].dataset_checksum.as_str()).collect();
    assert!(sums.iter().all(|s| *s == sums[0] && !s.is_empty()));
    let features: Vec<&str> = reports.iter().map(|r| r.repeats[0].feature_checksum.as_str()).collect();
    assert_ne!(features[0], features[1]);
    let mut csv = Vec::new();
    write_results_csv(&reports, &mut csv).unwrap();
    let text = String::from_utf8(csv).unwrap();
    let summaries: Vec<&str> = text.lines().filter(|l| l.split(',').nth(3) == Some("-1")).collect();
    assert_eq!(summaries.len(), 3);
}

#[test]
fn loss_comparison_shares_features() {
    let reports = compare_losses(&tiny(Variant::M2DL)).unwrap();
    let labels: Vec<String> = reports.iter().map(|r| r.penalty.to_string()).collect();
    assert_eq!(labels, ["LeastTrace", "LeastL21", "LeastLasso", "LeastSparseTrace"]);
    let sums: Vec<&str> = reports.iter().map(|r| r.repeats[0].feature_checksum.as_str()).collect();
    assert!(sums.iter().all(|s| *s == sums[0]));
}

#[test]
fn ablation_labels_and_shared_data() {
    let reports = ablate(&tiny(Variant::M2DL)).unwrap();
    let labels: Vec<String> = reports.iter().map(|r| r.variant.to_string()).collect();
    assert_eq!(labels, ["M2DL", "SMDL", "MDL", "TDL"]);
    for r in &reports {
        assert!(r.complete());
        assert_eq!(r.repeats[0].dataset_checksum, reports[0].repeats[0].dataset_checksum);
        assert_eq!(r.repeats[0].feature_checksum, reports[0].repeats[0].feature_checksum);
    }
    // MDL and TDL see raw features, the manifold variants transformed ones
    assert_ne!(reports[0].mean_pan_deg, reports[2].mean_pan_deg);
}

#[test]
fn summary_statistics_recompute_from_repeats() {
    let r = run_pipeline(&PipelineConfig {
        repeats: 3,
        ..tiny(Variant::TDL)
    })
    .unwrap();
    let pan: Vec<f64> = r.repeats.iter().map(|x| x.mae_pan_deg).collect();
    let mean = pan.iter().sum::<f64>() / 3.0;
    let std = (pan.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / 2.0).sqrt();
    assert!((r.mean_pan_deg - mean).abs() < 1e-12);
    assert!((r.std_pan_deg - std).abs() < 1e-12);
    assert_eq!(mean_std(&pan), (r.mean_pan_deg, r.std_pan_deg));
    for rep in &r.repeats {
        let avg = rep.task_mae_pan_deg.iter().sum::<f64>() / rep.task_mae_pan_deg.len() as f64;
        assert!((avg - rep.mae_pan_deg).abs() < 1e-12);
    }
}

#[test]
fn results_csv_layout() {
    let r = run_pipeline(&PipelineConfig {
        repeats: 2,
        ..tiny(Variant::SMDL)
    })
    .unwrap();
    let mut out = Vec::new();
    write_results_csv(&[r.clone()], &mut out).unwrap();
    let text = String::from_utf8(out).unwrap();
    let lines: Vec<&str> = text.lines().collect();
    assert_eq!(lines[0], CSV_HEADER);
    assert!(CSV_HEADER.starts_with("variant,activation,penalty,repeat,mae_pan_deg,mae_tilt_deg,seed,wall_ms"));
    assert_eq!(lines.len(), 4);
    for (k, line) in lines[1..3].iter().enumerate() {
        let f: Vec<&str> = line.split(',').collect();
        assert_eq!(f.len(), 9);
        assert_eq!(&f[..4], ["SMDL", "ReLU", "LeastSparseTrace", &k.to_string()]);
        assert_eq!(f[4].parse::<f64>().unwrap(), r.repeats[k].mae_pan_deg);
        assert_eq!(f[6], "5");
        assert_eq!(f[8], "");
    }
    let f: Vec<&str> = lines[3].split(',').collect();
    assert_eq!(f[3], "-1");
    assert_eq!(f[4].parse::<f64>().unwrap(), r.mean_pan_deg);
    assert_eq!(f[8].parse::<f64>().unwrap(), r.std_pan_deg);
}

#[test]
fn failed_repeat_is_recorded() {
    let mut cfg = tiny(Variant::TDL);
    cfg.activation = Activation::Sigmoid;
    cfg.training.eta = 1e200;
    let r = run_pipeline(&cfg).unwrap();
    assert_eq!(r.failed(), 1);
    assert!(!r.complete());
    assert!(r.repeats[0].error.as_deref().unwrap().contains("non-finite"));
    assert!(r.mean_pan_deg.is_nan());
}

#[test]
fn config_json_round_trip() {
    let cfg = tiny(Variant::SMDL);
    let back = PipelineConfig::from_json(&cfg.to_json()).unwrap();
    assert_eq!(cfg, back);
    let partial = PipelineConfig::from_json(r#"{"variant": "TDL", "repeats": 3}"#).unwrap();
    assert_eq!(partial.variant, Variant::TDL);
    assert_eq!(partial.repeats, 3);
    assert_eq!(partial.training, PipelineConfig::default().training);
    assert!(PipelineConfig::from_json(r#"{"repeats": 0}"#).is_err());
    assert!(PipelineConfig::from_json(r#"{"variant": "XYZ"}"#).is_err());
}

#[test]
fn documented_config_examples_parse() {
    let full = PipelineConfig::from_json(
        r#"{
  "variant": "M2DL",
  "activation": "ReLU",
  "mtl_penalty": "LeastSparseTrace",
  "repeats": 20,
  "seed": 0,
  "solver": {"rho1": 10.0, "gamma": 10.0, "tau": null, "max_iter": 5000, "tol": 1e-6},
  "training": {"epochs": 30, "eta": 0.1, "batch_size": 32, "conv_widths": [16, 16, 12], "fc_units": 512, "target_scale": 90.0},
  "data": {"synthetic": {"views": 4, "n_samples": 500, "n_test": 500, "image_size": 32, "noise_sigma": 0.02}},
  "mrcl_lambda": 10.0,
  "mrcl_block": 50
}"#,
    )
    .unwrap();
    assert_eq!(full, PipelineConfig::default());
    let csv: serde_json::Value = serde_json::from_str(
        r#"{"data": {"csv": {"train_dir": "d/train", "train_csv": "d/train/annotations.csv",
                   "test_dir": "d/test", "test_csv": "d/test/annotations.csv", "image_size": 32}}}"#,
    )
    .unwrap();
    let cfg: PipelineConfig = serde_json::from_value(csv).unwrap();
    assert!(matches!(cfg.data, DataSource::Csv(_)));
}
