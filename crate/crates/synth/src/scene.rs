use serde::{Deserialize, Serialize};

use crate::{Error, Result};

/// Sensor set of every camera.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modality {
    Gray,
    GrayPlusDepth,
}

impl Modality {
    pub fn channels(self) -> &'static [Modal] {
        match self {
            Modality::Gray => &[Modal::Gray],
            Modality::GrayPlusDepth => &[Modal::Gray, Modal::Depth],
        }
    }
}

/// What a single task image encodes.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Modal {
    /// Shaded intensity.
    Gray,
    /// Z-buffer, nearer is brighter.
    Depth,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SceneParams {
    pub n_subjects: usize,
    /// Training samples per task.
    pub n_samples: usize,
    /// Test samples per task.
    pub n_test: usize,
    pub views: usize,
    pub modals: Modality,
    /// Degrees.
    pub pan_range: (f64, f64),
    pub tilt_range: (f64, f64),
    /// Standard deviation of additive pixel noise (intensities are in [0, 1]).
    pub noise_sigma: f64,
    pub seed: u64,
    /// Square image side in pixels.
    pub image_size: usize,
}

impl Default for SceneParams {
    fn default() -> Self {
        SceneParams::dpose_like()
    }
}

impl SceneParams {
    /// Four cameras, 500 train / 500 test per camera.
    pub fn dpose_like() -> Self {
        SceneParams {
            n_subjects: 8,
            n_samples: 500,
            n_test: 500,
            views: 4,
            modals: Modality::Gray,
            pan_range: (-90.0, 90.0),
            tilt_range: (-60.0, 60.0),
            noise_sigma: 0.02,
            seed: 0,
            image_size: 64,
        }
    }

    /// Three cameras, 465 / 465.
    pub fn hpid_like() -> Self {
        SceneParams {
            views: 3,
            n_samples: 465,
            n_test: 465,
            ..SceneParams::dpose_like()
        }
    }

    /// One camera with gray and depth channels as two tasks, 400 / 465.
    pub fn bkhpd_like() -> Self {
        SceneParams {
            views: 1,
            modals: Modality::GrayPlusDepth,
            n_samples: 400,
            n_test: 465,
            ..SceneParams::dpose_like()
        }
    }

    pub fn n_tasks(&self) -> usize {
        self.views * self.modals.channels().len()
    }

    /// (view, modal) of each task, view-major.
    pub fn tasks(&self) -> Vec<(usize, Modal)> {
        (0..self.views)
            .flat_map(|v| self.modals.channels().iter().map(move |&m| (v, m)))
            .collect()
    }

    /// Evenly spaced pan offsets of the cameras, in degrees.
    pub fn view_offset(&self, view: usize) -> f64 {
        360.0 * view as f64 / self.views as f64
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |name, reason: String| Err(Error::InvalidParameter { name, reason });
        for (name, (lo, hi)) in [("pan_range", self.pan_range), ("tilt_range", self.tilt_range)] {
            if !(lo.is_finite() && hi.is_finite() && lo < hi) {
                return bad(name, format!("need lo < hi, got ({lo}, {hi})"));
            }
        }
        if self.views == 0 {
            return bad("views", "need at least one view".into());
        }
        if self.n_subjects == 0 {
            return bad("n_subjects", "need at least one subject".into());
        }
        if !(self.noise_sigma >= 0.0 && self.noise_sigma.is_finite()) {
            return bad("noise_sigma", format!("must be finite and ≥ 0, got {}", self.noise_sigma));
        }
        if self.image_size < 8 {
            return bad("image_size", format!("must be ≥ 8, got {}", self.image_size));
        }
        Ok(())
    }
}
