use super::{solve, task_dims, MtlModel, Penalty, SolverOpts, TaskDataset};
use crate::error::{Error, Result};
use crate::linalg::Matrix;

/// Per-task, per-column standardization of features and targets.
///
/// Row `v` of each matrix holds the statistics of task `v`. Columns with zero
/// spread keep a unit divisor.
#[derive(Debug, Clone, PartialEq)]
pub struct Scaling {
    pub x_mean: Matrix,
    pub x_std: Matrix,
    pub y_mean: Matrix,
    pub y_std: Matrix,
}

fn column_stats(m: &Matrix) -> (Vec<f64>, Vec<f64>) {
    let n = m.rows().max(1) as f64;
    let mut mean = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for (a, v) in mean.iter_mut().zip(m.row(i)) {
            *a += v;
        }
    }
    mean.iter_mut().for_each(|a| *a /= n);
    let mut var = vec![0.0; m.cols()];
    for i in 0..m.rows() {
        for ((a, v), mu) in var.iter_mut().zip(m.row(i)).zip(&mean) {
            *a += (v - mu) * (v - mu);
        }
    }
    let std = var
        .into_iter()
        .map(|s| {
            let s = (s / n).sqrt();
            if s > 1e-12 {
                s
            } else {
                1.0
            }
        })
        .collect();
    (mean, std)
}

fn apply(m: &Matrix, mean: &[f64], std: &[f64]) -> Matrix {
    let mut out = m.clone();
    for i in 0..out.rows() {
        for ((v, mu), s) in out.row_mut(i).iter_mut().zip(mean).zip(std) {
            *v = (*v - mu) / s;
        }
    }
    out
}

impl Scaling {
    pub fn from_tasks(tasks: &[TaskDataset]) -> Result<Self> {
        let (d1, d2) = task_dims(tasks)?;
        let v = tasks.len();
        let mut s = Scaling {
            x_mean: Matrix::zeros(v, d1),
            x_std: Matrix::zeros(v, d1),
            y_mean: Matrix::zeros(v, d2),
            y_std: Matrix::zeros(v, d2),
        };
        for (k, t) in tasks.iter().enumerate() {
            let (m, sd) = column_stats(&t.x);
            s.x_mean.row_mut(k).copy_from_slice(&m);
            s.x_std.row_mut(k).copy_from_slice(&sd);
            let (m, sd) = column_stats(&t.y);
            s.y_mean.row_mut(k).copy_from_slice(&m);
            s.y_std.row_mut(k).copy_from_slice(&sd);
        }
        Ok(s)
    }

    fn check(&self, task: usize, cols: usize, want: usize) -> Result<()> {
        if task >= self.x_mean.rows() {
            return Err(Error::UnknownTask {
                task,
                tasks: self.x_mean.rows(),
            });
        }
        if cols != want {
            return Err(Error::DimensionMismatch {
                op: "scaling",
                left: (task, cols),
                right: (task, want),
            });
        }
        Ok(())
    }

    pub fn transform_x(&self, task: usize, x: &Matrix) -> Result<Matrix> {
        self.check(task, x.cols(), self.x_mean.cols())?;
        Ok(apply(x, self.x_mean.row(task), self.x_std.row(task)))
    }

    pub fn transform_y(&self, task: usize, y: &Matrix) -> Result<Matrix> {
        self.check(task, y.cols(), self.y_mean.cols())?;
        Ok(apply(y, self.y_mean.row(task), self.y_std.row(task)))
    }

    pub fn inverse_y(&self, task: usize, y: &Matrix) -> Result<Matrix> {
        self.check(task, y.cols(), self.y_mean.cols())?;
        let mut out = y.clone();
        let (mean, std) = (self.y_mean.row(task), self.y_std.row(task));
        for i in 0..out.rows() {
            for ((v, mu), s) in out.row_mut(i).iter_mut().zip(mean).zip(std) {
                *v = *v * s + mu;
            }
        }
        Ok(out)
    }
}

/// Standardizes every task, solves with `penalty`, and stores the scaling so
/// that [`super::predict`] works on raw features.
pub fn fit(tasks: &[TaskDataset], penalty: Penalty, opts: &SolverOpts) -> Result<MtlModel> {
    let scaling = Scaling::from_tasks(tasks)?;
    let scaled = tasks
        .iter()
        .enumerate()
        .map(|(k, t)| TaskDataset::new(t.task_id, scaling.transform_x(k, &t.x)?, scaling.transform_y(k, &t.y)?))
        .collect::<Result<Vec<_>>>()?;
    let mut model = solve(&scaled, penalty, opts)?;
    model.scaling = Some(scaling);
    Ok(model)
}
