use m2dl_core::mtl::TaskDataset;
use m2dl_core::{Matrix, Tensor4};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::{render_head, Result, SceneParams, Subject};

/// splitmix64 finalizer folded over `parts`; used for every derived stream.
pub fn derive_seed(base: u64, parts: &[u64]) -> u64 {
    let mix = |mut z: u64| {
        z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
        z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
        z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
        z ^ (z >> 31)
    };
    parts.iter().fold(mix(base), |acc, &p| mix(acc ^ mix(p)))
}

const STREAM_POSES: u64 = 1;
const STREAM_SUBJECTS: u64 = 2;
const STREAM_NOISE: u64 = 3;

/// One labelled image of one task.
#[derive(Debug, Clone, PartialEq)]
pub struct PoseSample {
    /// `1 × 1 × h × w`
    pub image: Tensor4,
    pub pan: f64,
    pub tilt: f64,
    pub task: usize,
    pub subject: usize,
}

/// All images of one task (camera/modality) with their (pan, tilt) labels.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageTask {
    pub task: usize,
    /// `n × 1 × h × w`
    pub images: Tensor4,
    /// `n × 2`: pan, tilt in degrees.
    pub targets: Matrix,
    /// Identity index per sample; empty when unknown (loaded data).
    pub subjects: Vec<usize>,
}

impl ImageTask {
    pub fn len(&self) -> usize {
        self.images.n()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn sample(&self, i: usize) -> PoseSample {
        let [_, c, h, w] = self.images.shape();
        PoseSample {
            image: Tensor4::from_vec([1, c, h, w], self.images.item(i).to_vec()).expect("finite pixels"),
            pan: self.targets[(i, 0)],
            tilt: self.targets[(i, 1)],
            task: self.task,
            subject: self.subjects.get(i).copied().unwrap_or(0),
        }
    }

    /// Flattened pixels as features (`n × h·w`) and (pan, tilt) as targets.
    pub fn to_task_dataset(&self) -> Result<TaskDataset> {
        let n = self.len();
        let x = Matrix::from_vec(n, self.images.item_len(), self.images.as_slice().to_vec())?;
        Ok(TaskDataset::new(self.task, x, self.targets.clone())?)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SyntheticDataset {
    pub params: SceneParams,
    pub train: Vec<ImageTask>,
    pub test: Vec<ImageTask>,
}

struct HeadState {
    pan: f64,
    tilt: f64,
    subject: usize,
}

fn draw_states(p: &SceneParams, split: u64, n: usize) -> Vec<HeadState> {
    let mut rng = ChaCha8Rng::seed_from_u64(derive_seed(p.seed, &[STREAM_POSES, split]));
    (0..n)
        .map(|_| HeadState {
            pan: rng.gen_range(p.pan_range.0..=p.pan_range.1),
            tilt: rng.gen_range(p.tilt_range.0..=p.tilt_range.1),
            subject: rng.gen_range(0..p.n_subjects),
        })
        .collect()
}

fn render_split(p: &SceneParams, subjects: &[Subject], split: u64, n: usize) -> Result<Vec<ImageTask>> {
    let states = draw_states(p, split, n);
    let size = p.image_size;
    let targets = Matrix::from_fn(n, 2, |i, k| if k == 0 { states[i].pan } else { states[i].tilt });
    p.tasks()
        .into_iter()
        .enumerate()
        .map(|(task, (view, modal))| {
            let mut data = Vec::with_capacity(n * size * size);
            for (i, s) in states.iter().enumerate() {
                let seed = derive_seed(p.seed, &[STREAM_NOISE, split, task as u64, i as u64]);
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                data.extend(render_head(
                    &subjects[s.subject],
                    s.pan,
                    s.tilt,
                    p.view_offset(view),
                    modal,
                    p.noise_sigma,
                    size,
                    &mut rng,
                ));
            }
            Ok(ImageTask {
                task,
                images: Tensor4::from_vec([n, 1, size, size], data)?,
                targets: targets.clone(),
                subjects: states.iter().map(|s| s.subject).collect(),
            })
        })
        .collect()
}

/// Renders train and test splits for every (view, modal) task. Sample `i`
/// shows the same head state (identity, pan, tilt) in every task.
pub fn generate_dataset(params: &SceneParams) -> Result<SyntheticDataset> {
    params.validate()?;
    let subjects: Vec<Subject> = (0..params.n_subjects)
        .map(|k| Subject::generate(derive_seed(params.seed, &[STREAM_SUBJECTS, k as u64])))
        .collect();
    Ok(SyntheticDataset {
        params: params.clone(),
        train: render_split(params, &subjects, 0, params.n_samples)?,
        test: render_split(params, &subjects, 1, params.n_test)?,
    })
}
