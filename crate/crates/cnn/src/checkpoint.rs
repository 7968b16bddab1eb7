//! Text checkpoint holding the spec and every parameter at full precision.
//!
//! ```text
//! m2dl-cnn-checkpoint,1
//! input,<c>,<h>,<w>
//! eta,<x>
//! layer,conv,<out>,<kh>,<kw>,<activation> | layer,maxpool | layer,fc,<units>,<activation> | layer,output,<units>
//! params,<layer>,<n_weights>,<n_bias>     followed by a weights line and a bias line
//! end
//! ```

use std::fs::File;
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use m2dl_core::linalg::format_g17;

use crate::{Error, LayerKind, LayerParams, LayerSpec, NetworkSpec, NetworkState, Result};

const MAGIC: &str = "m2dl-cnn-checkpoint";
const VERSION: u32 = 1;

fn join(values: &[f64]) -> String {
    values.iter().map(|&v| format_g17(v)).collect::<Vec<_>>().join(",")
}

pub fn write_checkpoint<W: Write>(spec: &NetworkSpec, state: &NetworkState, mut w: W) -> Result<()> {
    state.check(spec)?;
    writeln!(w, "{MAGIC},{VERSION}")?;
    let (c, h, wd) = spec.input;
    writeln!(w, "input,{c},{h},{wd}")?;
    writeln!(w, "eta,{}", format_g17(state.eta))?;
    for l in &spec.layers {
        match l.kind {
            LayerKind::Conv {
                out_channels,
                kernel_h,
                kernel_w,
            } => writeln!(w, "layer,conv,{out_channels},{kernel_h},{kernel_w},{}", l.activation)?,
            LayerKind::MaxPool => writeln!(w, "layer,maxpool")?,
            LayerKind::FullyConnected { units } => writeln!(w, "layer,fc,{units},{}", l.activation)?,
            LayerKind::Output { units } => writeln!(w, "layer,output,{units}")?,
        }
    }
    for (i, p) in state.layers.iter().enumerate() {
        if p.weights.is_empty() && p.bias.is_empty() {
            continue;
        }
        writeln!(w, "params,{i},{},{}", p.weights.len(), p.bias.len())?;
        writeln!(w, "{}", join(&p.weights))?;
        writeln!(w, "{}", join(&p.bias))?;
    }
    writeln!(w, "end")?;
    Ok(())
}

pub fn save_checkpoint(spec: &NetworkSpec, state: &NetworkState, path: impl AsRef<Path>) -> Result<()> {
    let mut f = BufWriter::new(File::create(path)?);
    write_checkpoint(spec, state, &mut f)?;
    f.flush()?;
    Ok(())
}

pub fn load_checkpoint(path: impl AsRef<Path>) -> Result<(NetworkSpec, NetworkState)> {
    read_checkpoint(BufReader::new(File::open(path)?))
}

fn perr(line: usize, msg: impl Into<String>) -> Error {
    Error::Parse { line, msg: msg.into() }
}

fn num<T: std::str::FromStr>(line: usize, s: &str) -> Result<T> {
    s.trim().parse().map_err(|_| perr(line, format!("bad number {s:?}")))
}

fn values(line: usize, s: &str, expected: usize) -> Result<Vec<f64>> {
    let s = s.trim();
    let out: Vec<f64> = if s.is_empty() {
        Vec::new()
    } else {
        s.split(',').map(|f| num(line, f)).collect::<Result<_>>()?
    };
    if out.len() != expected {
        return Err(perr(line, format!("expected {expected} values, got {}", out.len())));
    }
    Ok(out)
}

pub fn read_checkpoint<R: BufRead>(r: R) -> Result<(NetworkSpec, NetworkState)> {
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
    let mut input = None;
    let mut eta = None;
    let mut layers = Vec::new();
    let mut params: Vec<(usize, LayerParams)> = Vec::new();
    loop {
        let (ln, line) = next()?;
        let parts: Vec<&str> = line.trim().split(',').collect();
        match parts.as_slice() {
            ["end"] => break,
            ["input", c, h, w] => input = Some((num(ln, c)?, num(ln, h)?, num(ln, w)?)),
            ["eta", v] => eta = Some(num(ln, v)?),
            ["layer", "conv", k, kh, kw, act] => layers.push(LayerSpec {
                kind: LayerKind::Conv {
                    out_channels: num(ln, k)?,
                    kernel_h: num(ln, kh)?,
                    kernel_w: num(ln, kw)?,
                },
                activation: act.parse().map_err(|e: Error| perr(ln, e.to_string()))?,
            }),
            ["layer", "maxpool"] => layers.push(LayerSpec::pool()),
            ["layer", "fc", u, act] => layers.push(LayerSpec::fc(
                num(ln, u)?,
                act.parse().map_err(|e: Error| perr(ln, e.to_string()))?,
            )),
            ["layer", "output", u] => layers.push(LayerSpec::output(num(ln, u)?)),
            ["params", i, nw, nb] => {
                let (i, nw, nb): (usize, usize, usize) = (num(ln, i)?, num(ln, nw)?, num(ln, nb)?);
                let (wl, wline) = next()?;
                let weights = values(wl, &wline, nw)?;
                let (bl, bline) = next()?;
                let bias = values(bl, &bline, nb)?;
                params.push((i, LayerParams { weights, bias }));
            }
            _ => return Err(perr(ln, format!("unrecognized line {line:?}"))),
        }
    }
    let spec = NetworkSpec {
        input: input.ok_or_else(|| perr(0, "missing input line"))?,
        layers,
    };
    let mut state = NetworkState::zeros(&spec)?;
    state.eta = eta.ok_or_else(|| perr(0, "missing eta line"))?;
    for (i, p) in params {
        let slot = state
            .layers
            .get_mut(i)
            .ok_or_else(|| perr(0, format!("params for missing layer {i}")))?;
        *slot = p;
    }
    state.check(&spec)?;
    Ok((spec, state))
}
