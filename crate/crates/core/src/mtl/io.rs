//! Text bundle for fitted models.
//!
//! ```text
//! m2dl-mtl-model,1
//! penalty,<LeastTrace|LeastL21|LeastLasso|LeastSparseTrace>
//! d1,<n>
//! d2,<n>
//! tasks,<V>
//! rho1,<x>  rho_l2,<x>  gamma,<x>  tau,<x|none>  max_iter,<n>  tol,<x>  step_init,<x>
//! iterations,<n>
//! converged,<0|1>
//! matrix,<name>,<rows>,<cols>     followed by <rows> CSV lines
//! end
//! ```
//!
//! Matrices: `w`, `trace` (one row), and optionally `p`, `x_mean`, `x_std`,
//! `y_mean`, `y_std`. Reals use `%.17g`, so the round trip is exact.

use std::collections::BTreeMap;
use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use super::{MtlModel, Penalty, Scaling, SolverOpts};
use crate::error::{Error, Result};
use crate::linalg::{format_g17, Matrix};

const MAGIC: &str = "m2dl-mtl-model";
const VERSION: u32 = 1;

fn write_matrix<W: Write>(w: &mut W, name: &str, m: &Matrix) -> Result<()> {
    writeln!(w, "matrix,{name},{},{}", m.rows(), m.cols())?;
    crate::linalg::write_csv(m, &mut *w)
}

pub fn write_model<W: Write>(model: &MtlModel, opts: &SolverOpts, mut w: W) -> Result<()> {
    writeln!(w, "{MAGIC},{VERSION}")?;
    writeln!(w, "penalty,{}", model.penalty.label())?;
    writeln!(w, "d1,{}", model.d1())?;
    writeln!(w, "d2,{}", model.d2)?;
    writeln!(w, "tasks,{}", model.n_tasks())?;
    writeln!(w, "rho1,{}", format_g17(opts.rho1))?;
    writeln!(w, "rho_l2,{}", format_g17(opts.rho_l2))?;
    writeln!(w, "gamma,{}", format_g17(opts.gamma))?;
    match opts.tau {
        Some(t) => writeln!(w, "tau,{}", format_g17(t))?,
        None => writeln!(w, "tau,none")?,
    }
    writeln!(w, "max_iter,{}", opts.max_iter)?;
    writeln!(w, "tol,{}", format_g17(opts.tol))?;
    writeln!(w, "step_init,{}", format_g17(opts.step_init))?;
    writeln!(w, "iterations,{}", model.iterations)?;
    writeln!(w, "converged,{}", u8::from(model.converged))?;
    write_matrix(&mut w, "w", &model.w)?;
    let trace = Matrix::from_vec(1, model.trace.len(), model.trace.clone())?;
    write_matrix(&mut w, "trace", &trace)?;
    if let Some(p) = &model.sparse_part {
        write_matrix(&mut w, "p", p)?;
    }
    if let Some(s) = &model.scaling {
        write_matrix(&mut w, "x_mean", &s.x_mean)?;
        write_matrix(&mut w, "x_std", &s.x_std)?;
        write_matrix(&mut w, "y_mean", &s.y_mean)?;
        write_matrix(&mut w, "y_std", &s.y_std)?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn save_model(model: &MtlModel, opts: &SolverOpts, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_model(model, opts, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_model(path: impl AsRef<Path>) -> Result<(MtlModel, SolverOpts)> {
    read_model(BufReader::new(File::open(path)?))
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn parse_num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| perr(line, format!("bad number {s:?}")))
}

pub fn read_model<R: BufRead>(r: R) -> Result<(MtlModel, SolverOpts)> {
    let mut lines = r.lines().enumerate().map(|(i, l)| (i + 1, l));
    let mut next = move || -> Result<(usize, String)> {
        match lines.next() {
            Some((i, l)) => Ok((i, l?)),
            None => Err(perr(0, "unexpected end of file")),
        }
    };

    let (ln, head) = next()?;
    if head.trim() != format!("{MAGIC},{VERSION}") {
        return Err(perr(ln, format!("expected header {MAGIC},{VERSION}")));
    }
    let mut fields: BTreeMap<String, (usize, String)> = BTreeMap::new();
    let mut matrices: BTreeMap<String, Matrix> = BTreeMap::new();
    loop {
        let (ln, line) = next()?;
        let line = line.trim().to_string();
        if line == "end" {
            break;
        }
        let parts: Vec<&str> = line.split(',').collect();
        if parts[0] == "matrix" {
            if parts.len() != 4 {
                return Err(perr(ln, "matrix line needs name,rows,cols"));
            }
            let rows: usize = parse_num(ln, parts[2])?;
            let cols: usize = parse_num(ln, parts[3])?;
            let mut data = Vec::with_capacity(rows * cols);
            for _ in 0..rows {
                let (ln, row) = next()?;
                let before = data.len();
                if cols > 0 {
                    for f in row.trim().split(',') {
                        data.push(parse_num::<f64>(ln, f)?);
                    }
                }
                if data.len() - before != cols {
                    return Err(perr(ln, format!("expected {cols} values")));
                }
            }
            matrices.insert(parts[1].to_string(), Matrix::from_vec(rows, cols, data)?);
        } else if parts.len() == 2 {
            fields.insert(parts[0].to_string(), (ln, parts[1].to_string()));
        } else {
            return Err(perr(ln, format!("unrecognized line {line:?}")));
        }
    }

    let get = |k: &str| fields.get(k).ok_or_else(|| perr(0, format!("missing field {k}")));
    let num = |k: &str| -> Result<f64> {
        let (ln, v) = get(k)?;
        parse_num(*ln, v)
    };
    let count = |k: &str| -> Result<usize> {
        let (ln, v) = get(k)?;
        parse_num(*ln, v)
    };

    let penalty: Penalty = get("penalty")?.1.parse()?;
    let d1 = count("d1")?;
    let d2 = count("d2")?;
    let tasks = count("tasks")?;
    let tau = match get("tau")?.1.as_str() {
        "none" => None,
        _ => Some(num("tau")?),
    };
    let opts = SolverOpts {
        rho1: num("rho1")?,
        rho_l2: num("rho_l2")?,
        gamma: num("gamma")?,
        tau,
        max_iter: count("max_iter")?,
        tol: num("tol")?,
        step_init: num("step_init")?,
    };
    let mut take = |k: &str| matrices.remove(k);
    let w = take("w").ok_or_else(|| perr(0, "missing matrix w"))?;
    if w.shape() != (d1, tasks * d2) {
        return Err(perr(0, "matrix w does not match header dimensions"));
    }
    let trace = take("trace").map(Matrix::into_vec).unwrap_or_default();
    let sparse_part = take("p");
    let scaling = match (take("x_mean"), take("x_std"), take("y_mean"), take("y_std")) {
        (Some(x_mean), Some(x_std), Some(y_mean), Some(y_std)) => Some(Scaling {
            x_mean,
            x_std,
            y_mean,
            y_std,
        }),
        (None, None, None, None) => None,
        _ => return Err(perr(0, "incomplete scaling block")),
    };
    let model = MtlModel {
        penalty,
        w,
        d2,
        sparse_part,
        trace,
        iterations: count("iterations")?,
        converged: count("converged")? != 0,
        scaling,
    };
    Ok((model, opts))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mtl::{fit, TaskDataset};

    #[test]
    fn round_trip_is_lossless() {
        let x = Matrix::from_fn(12, 3, |i, j| ((i * 5 + j * 7) % 13) as f64 / 7.0);
        let y = Matrix::from_fn(12, 2, |i, j| (i as f64 * 0.3 + j as f64).sin());
        let tasks = vec![
            TaskDataset::new(0, x.clone(), y.clone()).unwrap(),
            TaskDataset::new(1, x.scale(2.0), y.scale(-1.0)).unwrap(),
        ];
        let opts = SolverOpts {
            tau: Some(0.7),
            ..SolverOpts::default()
        };
        let model = fit(&tasks, Penalty::LeastSparseTrace, &opts).unwrap();
        let mut buf = Vec::new();
        write_model(&model, &opts, &mut buf).unwrap();
        let (back, back_opts) = read_model(&buf[..]).unwrap();
        assert_eq!(back, model);
        assert_eq!(back_opts, opts);
    }

    #[test]
    fn rejects_wrong_magic() {
        assert!(read_model("not-a-model,1\n".as_bytes()).is_err());
    }
}
