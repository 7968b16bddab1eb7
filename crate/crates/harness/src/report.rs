use std::io::Write;

use m2dl_cnn::Activation;
use m2dl_core::linalg::format_g17;
use m2dl_core::mtl::Penalty;

use crate::{Result, Variant};

pub const CSV_HEADER: &str = "variant,activation,penalty,repeat,mae_pan_deg,mae_tilt_deg,seed,wall_ms,std_pan_deg";

#[derive(Debug, Clone, PartialEq)]
pub struct RepeatResult {
    pub repeat: usize,
    pub seed: u64,
    /// Test pan MAE averaged over tasks.
    pub mae_pan_deg: f64,
    pub mae_tilt_deg: f64,
    pub task_mae_pan_deg: Vec<f64>,
    pub wall_ms: u128,
    pub dataset_checksum: String,
    pub feature_checksum: String,
    /// Set when the repeat was aborted.
    pub error: Option<String>,
}

impl RepeatResult {
    pub fn ok(&self) -> bool {
        self.error.is_none()
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalReport {
    pub variant: Variant,
    pub activation: Activation,
    pub penalty: Penalty,
    pub seed: u64,
    pub repeats: Vec<RepeatResult>,
    /// Over completed repeats.
    pub mean_pan_deg: f64,
    /// Sample standard deviation (0 for a single repeat).
    pub std_pan_deg: f64,
    pub mean_tilt_deg: f64,
    pub wall_ms: u128,
}

/// Mean and sample standard deviation.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    let n = values.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = values.iter().sum::<f64>() / n as f64;
    if n == 1 {
        return (mean, 0.0);
    }
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / (n - 1) as f64;
    (mean, var.sqrt())
}

impl EvalReport {
    pub fn new(variant: Variant, activation: Activation, penalty: Penalty, seed: u64, repeats: Vec<RepeatResult>) -> Self {
        let done: Vec<&RepeatResult> = repeats.iter().filter(|r| r.ok()).collect();
        let pan: Vec<f64> = done.iter().map(|r| r.mae_pan_deg).collect();
        let tilt: Vec<f64> = done.iter().map(|r| r.mae_tilt_deg).collect();
        let (mean_pan_deg, std_pan_deg) = mean_std(&pan);
        EvalReport {
            variant,
            activation,
            penalty,
            seed,
            mean_pan_deg,
            std_pan_deg,
            mean_tilt_deg: mean_std(&tilt).0,
            wall_ms: repeats.iter().map(|r| r.wall_ms).sum(),
            repeats,
        }
    }

    pub fn group(&self) -> String {
        format!("{}/{}/{}", self.variant, self.activation, self.penalty)
    }

    pub fn failed(&self) -> usize {
        self.repeats.iter().filter(|r| !r.ok()).count()
    }

    pub fn complete(&self) -> bool {
        self.failed() == 0
    }
}

/// Per-repeat rows followed by one `repeat=-1` summary row per report.
pub fn write_results_csv<W: Write>(reports: &[EvalReport], mut w: W) -> Result<()> {
    writeln!(w, "{CSV_HEADER}")?;
    for r in reports {
        let prefix = format!("{},{},{}", r.variant, r.activation, r.penalty);
        for rep in &r.repeats {
            writeln!(
                w,
                "{prefix},{},{},{},{},{},",
                rep.repeat,
                format_g17(rep.mae_pan_deg),
                format_g17(rep.mae_tilt_deg),
                r.seed,
                rep.wall_ms
            )?;
        }
        writeln!(
            w,
            "{prefix},-1,{},{},{},{},{}",
            format_g17(r.mean_pan_deg),
            format_g17(r.mean_tilt_deg),
            r.seed,
            r.wall_ms,
            format_g17(r.std_pan_deg)
        )?;
    }
    Ok(())
}
