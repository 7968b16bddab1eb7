//! Synthetic head-pose data: a ray-cast parametric head seen from several
//! cameras (views) and modalities, plus PGM/CSV import and export so real
//! images can go through the same pipeline.

mod dataset;
mod error;
pub mod io;
mod render;
mod scene;

pub use dataset::{generate_dataset, derive_seed, ImageTask, PoseSample, SyntheticDataset};
pub use error::{Error, Result};
pub use io::{export_tasks, load_csv_dataset, read_pgm, write_pgm};
pub use render::{render_head, Subject};
pub use scene::{Modal, Modality, SceneParams};
