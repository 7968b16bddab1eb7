use std::fs::{self, File};
use std::io::{BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use clap::{Args, Parser, Subcommand};
use m2dl_cnn::checkpoint::save_checkpoint;
use m2dl_cnn::Activation;
use m2dl_core::linalg::{read_csv, write_csv};
use m2dl_core::lrr::{solve_lrr, write_diagnostics, LrrProblem};
use m2dl_core::mtl::Penalty;
use m2dl_core::Matrix;
use m2dl_harness::pipeline::{load_data, manifold, stage1, stage2};
use m2dl_harness::{
    ablate, compare_activations, compare_losses, run_pipeline, write_results_csv, DataSource, EvalReport, Features,
    PipelineConfig, RepeatResult, Result, Variant,
};
use m2dl_synth::export_tasks;

#[derive(Parser)]
#[command(name = "m2dl", version, about = "Multi-view head-pose regression experiments")]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Subcommand)]
enum Command {
    /// Render the synthetic dataset of repeat 0 to PGM files
    GenData(Common),
    /// Train the Stage-1 networks of repeat 0; save checkpoints and features
    Train(Common),
    /// Run the pipeline and write results.csv
    Eval {
        #[command(flatten)]
        common: Common,
        /// Skip Stage 1 and use features written by `train`
        #[arg(long)]
        features: Option<PathBuf>,
    },
    /// ReLU vs Sigmoid vs Tanh
    CompareActivations(Common),
    /// The four multi-task penalties on shared features
    CompareLosses(Common),
    /// M2DL vs SMDL vs MDL vs TDL
    Ablate(Common),
    /// Low-rank representation of two noisy subspaces with corrupted samples
    LrrDemo {
        #[command(flatten)]
        common: Common,
        #[arg(long, default_value_t = 0.3)]
        lambda: f64,
    },
}

#[derive(Args, Clone)]
struct Common {
    /// JSON file with PipelineConfig fields; flags below override it
    #[arg(long)]
    config: Option<PathBuf>,
    /// Output directory
    #[arg(long, default_value = "m2dl-out")]
    out: PathBuf,
    #[arg(long)]
    seed: Option<u64>,
    #[arg(long)]
    repeats: Option<usize>,
    #[arg(long)]
    variant: Option<Variant>,
    #[arg(long)]
    activation: Option<Activation>,
    #[arg(long)]
    penalty: Option<Penalty>,
    #[arg(long)]
    epochs: Option<usize>,
    /// Synthetic data: image side in pixels
    #[arg(long)]
    image_size: Option<usize>,
    /// Synthetic data: training samples per task
    #[arg(long)]
    samples: Option<usize>,
    /// Synthetic data: test samples per task
    #[arg(long)]
    test_samples: Option<usize>,
    /// Synthetic data: pixel noise sigma
    #[arg(long)]
    noise: Option<f64>,
}

impl Common {
    fn config(&self) -> Result<PipelineConfig> {
        let mut cfg = match &self.config {
            Some(p) => PipelineConfig::load(p)?,
            None => PipelineConfig::default(),
        };
        if let Some(v) = self.seed {
            cfg.seed = v;
        }
        if let Some(v) = self.repeats {
            cfg.repeats = v;
        }
        if let Some(v) = self.variant {
            cfg.variant = v;
        }
        if let Some(v) = self.activation {
            cfg.activation = v;
        }
        if let Some(v) = self.penalty {
            cfg.mtl_penalty = v;
        }
        if let Some(v) = self.epochs {
            cfg.training.epochs = v;
        }
        if let DataSource::Synthetic(p) = &mut cfg.data {
            if let Some(v) = self.image_size {
                p.image_size = v;
            }
            if let Some(v) = self.samples {
                p.n_samples = v;
            }
            if let Some(v) = self.test_samples {
                p.n_test = v;
            }
            if let Some(v) = self.noise {
                p.noise_sigma = v;
            }
        }
        cfg.validate()?;
        Ok(cfg)
    }
}

fn write_matrix(m: &Matrix, path: &Path) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_csv(m, &mut f)?;
    f.flush()?;
    Ok(())
}

fn read_matrix(path: &Path) -> Result<Matrix> {
    Ok(read_csv(BufReader::new(File::open(path)?))?)
}

fn write_results(reports: &[EvalReport], out: &Path) -> Result<bool> {
    fs::create_dir_all(out)?;
    let path = out.join("results.csv");
    let mut f = BufWriter::new(File::create(&path)?);
    write_results_csv(reports, &mut f)?;
    f.flush()?;
    let mut ok = true;
    for r in reports {
        println!(
            "{:<5} {:<8} {:<17} pan MAE {:8.3}° ± {:.3}  tilt MAE {:8.3}°  ({} repeats)",
            r.variant.label(),
            r.activation.label(),
            r.penalty.label(),
            r.mean_pan_deg,
            r.std_pan_deg,
            r.mean_tilt_deg,
            r.repeats.len()
        );
        if !r.complete() {
            eprintln!("{}: {} of {} repeats aborted", r.group(), r.failed(), r.repeats.len());
            for rep in r.repeats.iter().filter(|x| !x.ok()) {
                eprintln!("  repeat {}: {}", rep.repeat, rep.error.as_deref().unwrap_or(""));
            }
            ok = false;
        }
    }
    println!("wrote {}", path.display());
    Ok(ok)
}

fn save_config(cfg: &PipelineConfig, out: &Path) -> Result<()> {
    fs::create_dir_all(out)?;
    fs::write(out.join("config.json"), cfg.to_json())?;
    Ok(())
}

fn feature_files(dir: &Path, split: &str, task: usize) -> (PathBuf, PathBuf) {
    (
        dir.join(format!("{split}_x_task{task}.csv")),
        dir.join(format!("{split}_y_task{task}.csv")),
    )
}

fn load_features(dir: &Path) -> Result<Features> {
    let ids: Vec<usize> = fs::read_to_string(dir.join("tasks.txt"))?
        .lines()
        .filter(|l| !l.trim().is_empty())
        .map(|l| l.trim().parse().map_err(|_| m2dl_harness::Error::Config(format!("bad task id {l:?}"))))
        .collect::<Result<_>>()?;
    let mut f = Features {
        task_ids: ids.clone(),
        train_x: vec![],
        train_y: vec![],
        test_x: vec![],
        test_y: vec![],
    };
    for &t in &ids {
        let (x, y) = feature_files(dir, "train", t);
        f.train_x.push(read_matrix(&x)?);
        f.train_y.push(read_matrix(&y)?);
        let (x, y) = feature_files(dir, "test", t);
        f.test_x.push(read_matrix(&x)?);
        f.test_y.push(read_matrix(&y)?);
    }
    Ok(f)
}

fn run(cli: Cli) -> Result<bool> {
    match cli.command {
        Command::GenData(c) => {
            let cfg = c.config()?;
            let (train, test) = load_data(&cfg, 0)?;
            export_tasks(&train, c.out.join("train"))?;
            export_tasks(&test, c.out.join("test"))?;
            save_config(&cfg, &c.out)?;
            println!(
                "wrote {} tasks ({} train / {} test samples each) to {}",
                train.len(),
                train[0].len(),
                test[0].len(),
                c.out.display()
            );
            Ok(true)
        }
        Command::Train(c) => {
            let cfg = c.config()?;
            let s1 = stage1(&cfg, 0)?;
            let dir = c.out.join("features");
            fs::create_dir_all(&dir)?;
            let f = &s1.features;
            for (v, &t) in f.task_ids.iter().enumerate() {
                save_checkpoint(&s1.networks[v].0, &s1.networks[v].1, c.out.join(format!("task{t}.ckpt")))?;
                let (x, y) = feature_files(&dir, "train", t);
                write_matrix(&f.train_x[v], &x)?;
                write_matrix(&f.train_y[v], &y)?;
                let (x, y) = feature_files(&dir, "test", t);
                write_matrix(&f.test_x[v], &x)?;
                write_matrix(&f.test_y[v], &y)?;
                println!("task {t}: final training loss {:.6}", s1.losses[v].last().copied().unwrap_or(f64::NAN));
            }
            let ids: String = f.task_ids.iter().map(|t| format!("{t}\n")).collect();
            fs::write(dir.join("tasks.txt"), ids)?;
            save_config(&cfg, &c.out)?;
            println!("wrote checkpoints and features to {}", c.out.display());
            Ok(true)
        }
        Command::Eval { common, features } => {
            let cfg = common.config()?;
            let report = match features {
                None => run_pipeline(&cfg)?,
                Some(dir) => {
                    let start = std::time::Instant::now();
                    let raw = load_features(&dir)?;
                    let feats = if cfg.variant.manifold() { manifold(&raw, &cfg)? } else { raw.clone() };
                    let s2 = stage2(&feats, cfg.variant.multi_task(), cfg.mtl_penalty, &cfg.solver)?;
                    let rep = RepeatResult {
                        repeat: 0,
                        seed: m2dl_harness::pipeline::repeat_seed(cfg.seed, 0),
                        mae_pan_deg: s2.mae_pan,
                        mae_tilt_deg: s2.mae_tilt,
                        task_mae_pan_deg: s2.task_mae.iter().map(|m| m[0]).collect(),
                        wall_ms: start.elapsed().as_millis(),
                        dataset_checksum: String::new(),
                        feature_checksum: raw.checksum(),
                        error: None,
                    };
                    EvalReport::new(cfg.variant, cfg.activation, cfg.mtl_penalty, cfg.seed, vec![rep])
                }
            };
            save_config(&cfg, &common.out)?;
            write_results(&[report], &common.out)
        }
        Command::CompareActivations(c) => {
            let cfg = c.config()?;
            save_config(&cfg, &c.out)?;
            write_results(&compare_activations(&cfg)?, &c.out)
        }
        Command::CompareLosses(c) => {
            let cfg = c.config()?;
            save_config(&cfg, &c.out)?;
            write_results(&compare_losses(&cfg)?, &c.out)
        }
        Command::Ablate(c) => {
            let cfg = c.config()?;
            save_config(&cfg, &c.out)?;
            write_results(&ablate(&cfg)?, &c.out)
        }
        Command::LrrDemo { common, lambda } => {
            let cfg = common.config()?;
            let (x, corrupted) = m2dl_harness::demo::two_subspaces(cfg.seed);
            let problem = LrrProblem::self_expressive(x, lambda)?;
            let result = solve_lrr(&problem, &cfg.mrcl)?;
            let dir = common.out.join("lrr");
            write_diagnostics(&result, &dir)?;
            let norms = result.e_star.column_norms();
            let total: f64 = norms.iter().map(|v| v * v).sum();
            let on_corrupted: f64 = corrupted.iter().map(|&j| norms[j] * norms[j]).sum();
            println!(
                "converged: {} after {} iterations, residuals {:.2e} / {:.2e}",
                result.converged, result.iterations, result.primal_residuals.0, result.primal_residuals.1
            );
            println!(
                "error energy on the {} corrupted samples: {:.1}%",
                corrupted.len(),
                100.0 * on_corrupted / total.max(f64::MIN_POSITIVE)
            );
            println!("wrote {}", dir.display());
            Ok(result.converged)
        }
    }
}

fn main() -> ExitCode {
    env_logger::Builder::from_env(env_logger::Env::default().default_filter_or("warn")).init();
    match run(Cli::parse()) {
        Ok(true) => ExitCode::SUCCESS,
        Ok(false) => ExitCode::FAILURE,
        Err(e) => {
            eprintln!("error: {e}");
            ExitCode::FAILURE
        }
    }
}
