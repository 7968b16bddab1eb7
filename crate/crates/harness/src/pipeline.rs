//! Two-stage pipeline: per-task CNN features (optionally manifold
//! regularized), then a multi-task or per-task linear regressor on top.

use std::collections::HashMap;
use std::rc::Rc;
use std::time::Instant;

use m2dl_cnn::{extract_features, train, NetworkSpec, NetworkState, TrainOpts};
use m2dl_core::lrr::mrcl_transform_with;
use m2dl_core::mtl::{fit, predict, Penalty, SolverOpts, TaskDataset};
use m2dl_core::Matrix;
use m2dl_synth::{derive_seed, generate_dataset, load_csv_dataset, ImageTask, SceneParams};
use sha2::{Digest, Sha256};

use crate::report::{EvalReport, RepeatResult};
use crate::{DataSource, Error, PipelineConfig, Result, Variant};

const STREAM_DATA: u64 = 11;
const STREAM_INIT: u64 = 12;
const STREAM_SHUFFLE: u64 = 13;

/// Seed of repeat `r`; depends only on the base seed and `r`, so adding
/// repeats never changes earlier ones.
pub fn repeat_seed(seed: u64, repeat: usize) -> u64 {
    derive_seed(seed, &[repeat as u64])
}

/// Train and test tasks for one repeat. Synthetic data is regenerated per
/// repeat from the repeat seed; CSV data is the same every repeat.
pub fn load_data(cfg: &PipelineConfig, repeat: usize) -> Result<(Vec<ImageTask>, Vec<ImageTask>)> {
    match &cfg.data {
        DataSource::Synthetic(p) => {
            let params = SceneParams {
                seed: derive_seed(repeat_seed(cfg.seed, repeat), &[STREAM_DATA, p.seed]),
                ..p.clone()
            };
            let ds = generate_dataset(&params)?;
            Ok((ds.train, ds.test))
        }
        DataSource::Csv(c) => {
            let train = load_csv_dataset(&c.train_dir, &c.train_csv, c.image_size)?;
            let test = load_csv_dataset(&c.test_dir, &c.test_csv, c.image_size)?;
            let ids = |t: &[ImageTask]| t.iter().map(|t| t.task).collect::<Vec<_>>();
            if ids(&train) != ids(&test) {
                return Err(Error::Config(format!(
                    "train tasks {:?} differ from test tasks {:?}",
                    ids(&train),
                    ids(&test)
                )));
            }
            if train.is_empty() {
                return Err(Error::Config("no training data".into()));
            }
            Ok((train, test))
        }
    }
}

fn hash_f64(h: &mut Sha256, values: &[f64]) {
    for v in values {
        h.update(v.to_le_bytes());
    }
}

/// Short SHA-256 digest of every pixel and label.
pub fn dataset_checksum(train: &[ImageTask], test: &[ImageTask]) -> String {
    let mut h = Sha256::new();
    for t in train.iter().chain(test) {
        h.update((t.task as u64).to_le_bytes());
        hash_f64(&mut h, t.images.as_slice());
        hash_f64(&mut h, t.targets.as_slice());
    }
    hex(&h.finalize()[..8])
}

fn matrices_checksum(ms: &[&Matrix]) -> String {
    let mut h = Sha256::new();
    for m in ms {
        h.update((m.rows() as u64).to_le_bytes());
        hash_f64(&mut h, m.as_slice());
    }
    hex(&h.finalize()[..8])
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

/// Per-task features and labels entering Stage 2.
#[derive(Debug, Clone, PartialEq)]
pub struct Features {
    pub task_ids: Vec<usize>,
    pub train_x: Vec<Matrix>,
    pub train_y: Vec<Matrix>,
    pub test_x: Vec<Matrix>,
    pub test_y: Vec<Matrix>,
}

impl Features {
    pub fn checksum(&self) -> String {
        let all: Vec<&Matrix> = self
            .train_x
            .iter()
            .chain(&self.train_y)
            .chain(&self.test_x)
            .chain(&self.test_y)
            .collect();
        matrices_checksum(&all)
    }
}

/// Result of Stage 1 for one repeat.
#[derive(Debug, Clone)]
pub struct Stage1 {
    pub features: Features,
    pub networks: Vec<(NetworkSpec, NetworkState)>,
    /// Per-task epoch losses (on scaled targets).
    pub losses: Vec<Vec<f64>>,
    pub dataset_checksum: String,
}

/// Trains one network per task and extracts fully connected features.
pub fn stage1(cfg: &PipelineConfig, repeat: usize) -> Result<Stage1> {
    let (train_tasks, test_tasks) = load_data(cfg, repeat)?;
    let dataset_checksum = dataset_checksum(&train_tasks, &test_tasks);
    let rs = repeat_seed(cfg.seed, repeat);
    let d2 = train_tasks[0].targets.cols();
    let spec = cfg.network(d2);
    let scale = 1.0 / cfg.training.target_scale;

    let mut features = Features {
        task_ids: Vec::new(),
        train_x: Vec::new(),
        train_y: Vec::new(),
        test_x: Vec::new(),
        test_y: Vec::new(),
    };
    let mut networks = Vec::new();
    let mut losses = Vec::new();
    for (tr, te) in train_tasks.iter().zip(&test_tasks) {
        let k = tr.task as u64;
        let mut state = NetworkState::init(&spec, derive_seed(rs, &[STREAM_INIT, k]))?;
        let opts = TrainOpts {
            eta: cfg.training.eta,
            batch_size: cfg.training.batch_size,
            epochs: cfg.training.epochs,
            seed: derive_seed(rs, &[STREAM_SHUFFLE, k]),
        };
        let l = train(&spec, &mut state, &tr.images, &tr.targets.scale(scale), &opts)?;
        log::debug!("task {} stage-1 losses {:?}", tr.task, l);
        features.task_ids.push(tr.task);
        features.train_x.push(extract_features(&spec, &state, &tr.images)?);
        features.test_x.push(extract_features(&spec, &state, &te.images)?);
        features.train_y.push(tr.targets.clone());
        features.test_y.push(te.targets.clone());
        networks.push((spec.clone(), state));
        losses.push(l);
    }
    Ok(Stage1 {
        features,
        networks,
        losses,
        dataset_checksum,
    })
}

/// Column means of a feature matrix.
pub fn feature_mean(features: &Matrix) -> Vec<f64> {
    let mut mean = vec![0.0; features.cols()];
    for i in 0..features.rows() {
        for (m, v) in mean.iter_mut().zip(features.row(i)) {
            *m += v;
        }
    }
    let n = features.rows().max(1) as f64;
    mean.iter_mut().for_each(|m| *m /= n);
    mean
}

/// Manifold regularization of one feature matrix (one sample per row).
/// Features are centered on `center`, rescaled to unit mean sample norm,
/// processed in contiguous blocks of at least `cfg.mrcl_block` samples, and
/// mapped back.
pub fn manifold_features(features: &Matrix, center: &[f64], cfg: &PipelineConfig) -> Result<Matrix> {
    let (n, d) = features.shape();
    if center.len() != d {
        return Err(Error::Config(format!("center has {} entries for {d} features", center.len())));
    }
    let centered = Matrix::from_fn(n, d, |i, j| features[(i, j)] - center[j]);
    let norm = (0..n)
        .map(|i| centered.row(i).iter().map(|v| v * v).sum::<f64>().sqrt())
        .sum::<f64>()
        / n.max(1) as f64;
    if n < 2 || norm == 0.0 {
        return Ok(features.clone());
    }
    let scaled = centered.scale(1.0 / norm);
    let blocks = (n / cfg.mrcl_block).max(1);
    let mut out = Vec::with_capacity(n * d);
    for b in 0..blocks {
        let (start, end) = (b * n / blocks, (b + 1) * n / blocks);
        let idx: Vec<usize> = (start..end).collect();
        let block = mrcl_transform_with(&scaled.select_rows(&idx), cfg.mrcl_lambda, &cfg.mrcl)?;
        out.extend_from_slice(block.as_slice());
    }
    let out = Matrix::from_vec(n, d, out)?;
    Ok(Matrix::from_fn(n, d, |i, j| out[(i, j)] * norm + center[j]))
}

/// Manifold-regularized copy of `features`; both splits of a task are
/// centered on that task's training mean.
pub fn manifold(features: &Features, cfg: &PipelineConfig) -> Result<Features> {
    let mut out = features.clone();
    for v in 0..features.train_x.len() {
        let mean = feature_mean(&features.train_x[v]);
        out.train_x[v] = manifold_features(&features.train_x[v], &mean, cfg)?;
        out.test_x[v] = manifold_features(&features.test_x[v], &mean, cfg)?;
    }
    Ok(out)
}

/// Test-set mean absolute errors of one Stage-2 fit.
#[derive(Debug, Clone, PartialEq)]
pub struct Stage2 {
    /// Per task, per target column.
    pub task_mae: Vec<Vec<f64>>,
    pub mae_pan: f64,
    pub mae_tilt: f64,
}

/// Fits the regressor(s) and scores the test split. Multi-task solves every
/// task jointly; otherwise each task gets its own problem with the same penalty.
pub fn stage2(features: &Features, multi_task: bool, penalty: Penalty, solver: &SolverOpts) -> Result<Stage2> {
    let tasks = features
        .train_x
        .iter()
        .zip(&features.train_y)
        .zip(&features.task_ids)
        .map(|((x, y), &id)| TaskDataset::new(id, x.clone(), y.clone()))
        .collect::<m2dl_core::Result<Vec<_>>>()?;
    let predictions: Vec<Matrix> = if multi_task {
        let model = fit(&tasks, penalty, solver)?;
        (0..tasks.len())
            .map(|v| predict(&model, &features.test_x[v], v))
            .collect::<m2dl_core::Result<_>>()?
    } else {
        tasks
            .iter()
            .enumerate()
            .map(|(v, t)| {
                let model = fit(std::slice::from_ref(t), penalty, solver)?;
                predict(&model, &features.test_x[v], 0)
            })
            .collect::<m2dl_core::Result<_>>()?
    };
    let task_mae: Vec<Vec<f64>> = predictions
        .iter()
        .zip(&features.test_y)
        .map(|(p, y)| {
            (0..y.cols())
                .map(|c| (0..y.rows()).map(|i| (p[(i, c)] - y[(i, c)]).abs()).sum::<f64>() / y.rows().max(1) as f64)
                .collect()
        })
        .collect();
    let mean_col = |c: usize| {
        task_mae.iter().map(|m| m.get(c).copied().unwrap_or(f64::NAN)).sum::<f64>() / task_mae.len() as f64
    };
    Ok(Stage2 {
        mae_pan: mean_col(0),
        mae_tilt: mean_col(1),
        task_mae,
    })
}

/// Stage-1 and manifold outputs shared between configurations that only
/// differ in later stages.
#[derive(Default)]
pub struct FeatureCache {
    stage1: HashMap<String, Rc<Stage1>>,
    manifold: HashMap<String, Rc<Features>>,
}

fn stage1_key(cfg: &PipelineConfig, repeat: usize) -> String {
    serde_json::to_string(&(&cfg.data, &cfg.training, cfg.activation, cfg.seed, repeat)).expect("key serializes")
}

impl FeatureCache {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn clear(&mut self) {
        self.stage1.clear();
        self.manifold.clear();
    }

    pub fn stage1(&mut self, cfg: &PipelineConfig, repeat: usize) -> Result<Rc<Stage1>> {
        let key = stage1_key(cfg, repeat);
        if let Some(s) = self.stage1.get(&key) {
            return Ok(Rc::clone(s));
        }
        let s = Rc::new(stage1(cfg, repeat)?);
        self.stage1.insert(key, Rc::clone(&s));
        Ok(s)
    }

    /// Stage-2 input features of `cfg.variant`.
    pub fn features(&mut self, cfg: &PipelineConfig, repeat: usize) -> Result<(Rc<Stage1>, Rc<Features>)> {
        let s1 = self.stage1(cfg, repeat)?;
        if !cfg.variant.manifold() {
            return Ok((Rc::clone(&s1), Rc::new(s1.features.clone())));
        }
        let key = serde_json::to_string(&(stage1_key(cfg, repeat), cfg.mrcl_lambda, cfg.mrcl_block, &cfg.mrcl))
            .expect("key serializes");
        if let Some(f) = self.manifold.get(&key) {
            return Ok((s1, Rc::clone(f)));
        }
        let f = Rc::new(manifold(&s1.features, cfg)?);
        self.manifold.insert(key, Rc::clone(&f));
        Ok((s1, f))
    }
}

fn run_repeat(cfg: &PipelineConfig, repeat: usize, cache: &mut FeatureCache) -> RepeatResult {
    let start = Instant::now();
    let outcome = (|| -> Result<(Stage2, String, String)> {
        let (s1, feats) = cache.features(cfg, repeat)?;
        let s2 = stage2(&feats, cfg.variant.multi_task(), cfg.mtl_penalty, &cfg.solver)?;
        Ok((s2, s1.dataset_checksum.clone(), s1.features.checksum()))
    })();
    let wall_ms = start.elapsed().as_millis();
    match outcome {
        Ok((s2, data, feat)) => RepeatResult {
            repeat,
            seed: repeat_seed(cfg.seed, repeat),
            mae_pan_deg: s2.mae_pan,
            mae_tilt_deg: s2.mae_tilt,
            task_mae_pan_deg: s2.task_mae.iter().map(|m| m[0]).collect(),
            wall_ms,
            dataset_checksum: data,
            feature_checksum: feat,
            error: None,
        },
        Err(e) => {
            log::error!("{} repeat {repeat} aborted: {e}", cfg.variant);
            RepeatResult {
                repeat,
                seed: repeat_seed(cfg.seed, repeat),
                mae_pan_deg: f64::NAN,
                mae_tilt_deg: f64::NAN,
                task_mae_pan_deg: Vec::new(),
                wall_ms,
                dataset_checksum: String::new(),
                feature_checksum: String::new(),
                error: Some(e.to_string()),
            }
        }
    }
}

/// Runs several configurations repeat by repeat, sharing Stage-1 (and
/// manifold) features between them within each repeat.
pub fn run_group(configs: &[PipelineConfig]) -> Result<Vec<EvalReport>> {
    for c in configs {
        c.validate()?;
    }
    let repeats = configs.iter().map(|c| c.repeats).max().unwrap_or(0);
    let mut per_config: Vec<Vec<RepeatResult>> = vec![Vec::new(); configs.len()];
    let mut cache = FeatureCache::new();
    for r in 0..repeats {
        for (c, out) in configs.iter().zip(per_config.iter_mut()) {
            if r < c.repeats {
                let res = run_repeat(c, r, &mut cache);
                log::info!(
                    "{} {} {} repeat {r}: pan MAE {:.3}°",
                    c.variant,
                    c.activation,
                    c.mtl_penalty,
                    res.mae_pan_deg
                );
                out.push(res);
            }
        }
        cache.clear();
    }
    Ok(configs
        .iter()
        .zip(per_config)
        .map(|(c, reps)| EvalReport::new(c.variant, c.activation, c.mtl_penalty, c.seed, reps))
        .collect())
}

pub fn run_pipeline(cfg: &PipelineConfig) -> Result<EvalReport> {
    Ok(run_group(std::slice::from_ref(cfg))?.remove(0))
}

/// The base configuration under ReLU, Sigmoid and Tanh.
pub fn compare_activations(base: &PipelineConfig) -> Result<Vec<EvalReport>> {
    let configs: Vec<_> = m2dl_cnn::Activation::ALL
        .into_iter()
        .map(|activation| PipelineConfig {
            activation,
            ..base.clone()
        })
        .collect();
    run_group(&configs)
}

/// The base configuration with each of the four penalties on shared features.
pub fn compare_losses(base: &PipelineConfig) -> Result<Vec<EvalReport>> {
    let configs: Vec<_> = Penalty::ALL
        .into_iter()
        .map(|mtl_penalty| PipelineConfig {
            mtl_penalty,
            ..base.clone()
        })
        .collect();
    run_group(&configs)
}

/// M2DL, SMDL, MDL and TDL on shared data and Stage-1 features.
pub fn ablate(base: &PipelineConfig) -> Result<Vec<EvalReport>> {
    let configs: Vec<_> = Variant::ALL
        .into_iter()
        .map(|variant| PipelineConfig {
            variant,
            ..base.clone()
        })
        .collect();
    run_group(&configs)
}
