use m2dl_core::{Matrix, Tensor4};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::layers::{axpy, col2im_add, conv_item, conv_item_backward, dot, im2col, pool_item, ConvGeom};
use crate::{Error, LayerKind, NetworkSpec, Result, Shape};

/// Weights and biases of one layer; empty for pooling.
/// Conv weights are `[out, in, kh, kw]`, dense weights `[units, inputs]`, row-major.
#[derive(Debug, Clone, PartialEq)]
pub struct LayerParams {
    pub weights: Vec<f64>,
    pub bias: Vec<f64>,
}

impl LayerParams {
    fn zeros_like(&self) -> Self {
        LayerParams {
            weights: vec![0.0; self.weights.len()],
            bias: vec![0.0; self.bias.len()],
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NetworkState {
    pub layers: Vec<LayerParams>,
    /// Learning rate used by [`train`].
    pub eta: f64,
}

fn fans(kind: LayerKind, input: Shape) -> (usize, usize, usize, usize) {
    // (weight count, bias count, fan_in, fan_out)
    match (kind, input) {
        (
            LayerKind::Conv {
                out_channels,
                kernel_h,
                kernel_w,
            },
            Shape::Spatial { c, .. },
        ) => {
            let area = kernel_h * kernel_w;
            (out_channels * c * area, out_channels, c * area, out_channels * area)
        }
        (LayerKind::FullyConnected { units } | LayerKind::Output { units }, s) => {
            (units * s.len(), units, s.len(), units)
        }
        _ => (0, 0, 0, 0),
    }
}

impl NetworkState {
    /// Zero biases and weights uniform in ±√(6/(fan_in+fan_out)).
    pub fn init(spec: &NetworkSpec, seed: u64) -> Result<Self> {
        Self::init_with(spec, &mut ChaCha8Rng::seed_from_u64(seed))
    }

    pub fn init_with<R: Rng>(spec: &NetworkSpec, rng: &mut R) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| {
                let (nw, nb, fan_in, fan_out) = fans(l.kind, s);
                let limit = if nw > 0 {
                    (6.0 / (fan_in + fan_out) as f64).sqrt()
                } else {
                    0.0
                };
                LayerParams {
                    weights: (0..nw).map(|_| rng.gen_range(-limit..=limit)).collect(),
                    bias: vec![0.0; nb],
                }
            })
            .collect();
        Ok(NetworkState { layers, eta: 0.01 })
    }

    pub fn zeros(spec: &NetworkSpec) -> Result<Self> {
        let shapes = spec.shapes()?;
        let layers = spec
            .layers
            .iter()
            .zip(&shapes)
            .map(|(l, &s)| {
                let (nw, nb, _, _) = fans(l.kind, s);
                LayerParams {
                    weights: vec![0.0; nw],
                    bias: vec![0.0; nb],
                }
            })
            .collect();
        Ok(NetworkState { layers, eta: 0.01 })
    }

    pub fn num_params(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    pub fn is_finite(&self) -> bool {
        self.layers
            .iter()
            .all(|l| l.weights.iter().chain(&l.bias).all(|v| v.is_finite()))
    }

    /// Checks that parameter sizes agree with `spec`.
    pub fn check(&self, spec: &NetworkSpec) -> Result<()> {
        let shapes = spec.shapes()?;
        if self.layers.len() != spec.layers.len() {
            return Err(Error::InvalidParameter {
                name: "state",
                reason: format!("{} parameter blocks for {} layers", self.layers.len(), spec.layers.len()),
            });
        }
        for (i, ((l, &s), p)) in spec.layers.iter().zip(&shapes).zip(&self.layers).enumerate() {
            let (nw, nb, _, _) = fans(l.kind, s);
            if p.weights.len() != nw || p.bias.len() != nb {
                return Err(Error::Layer {
                    layer: i,
                    kind: l.kind.name(),
                    reason: format!(
                        "expected {nw} weights and {nb} biases, got {} and {}",
                        p.weights.len(),
                        p.bias.len()
                    ),
                });
            }
        }
        Ok(())
    }
}

/// Layer activations of one forward pass, kept for [`backward`].
#[derive(Debug, Clone)]
pub struct Cache {
    n: usize,
    shapes: Vec<Shape>,
    /// `acts[i]` is the input of layer `i`; the last entry holds the predictions.
    acts: Vec<Vec<f64>>,
    argmax: Vec<Vec<usize>>,
}

impl Cache {
    pub fn batch_size(&self) -> usize {
        self.n
    }

    /// Output of layer `layer` for the whole batch, one sample per row.
    pub fn layer_output(&self, layer: usize) -> Matrix {
        let len = self.shapes[layer + 1].len();
        Matrix::from_vec(self.n, len, self.acts[layer + 1].clone()).expect("cached activations are finite")
    }
}

fn check_input(spec: &NetworkSpec, batch: &Tensor4) -> Result<()> {
    let [_, c, h, w] = batch.shape();
    let (ec, eh, ew) = spec.input;
    if [c, h, w] != [ec, eh, ew] {
        return Err(Error::InputShape {
            expected: [ec, eh, ew],
            got: [c, h, w],
        });
    }
    Ok(())
}

fn geom(kind: LayerKind, input: Shape) -> ConvGeom {
    match (kind, input) {
        (
            LayerKind::Conv {
                out_channels,
                kernel_h,
                kernel_w,
            },
            Shape::Spatial { c, h, w },
        ) => ConvGeom {
            c,
            h,
            w,
            k: out_channels,
            kh: kernel_h,
            kw: kernel_w,
        },
        _ => unreachable!("validated by NetworkSpec::shapes"),
    }
}

/// Runs layers `0..upto` on `x` (n samples of shape `shapes[0]`).
/// With `keep`, every intermediate activation is retained.
fn run_layers(
    spec: &NetworkSpec,
    state: &NetworkState,
    shapes: &[Shape],
    n: usize,
    x: Vec<f64>,
    upto: usize,
    keep: bool,
) -> (Vec<Vec<f64>>, Vec<Vec<usize>>) {
    let mut acts = vec![x];
    let mut argmaxes = Vec::new();
    for i in 0..upto {
        let layer = spec.layers[i];
        let params = &state.layers[i];
        let (sin, sout) = (shapes[i], shapes[i + 1]);
        let (lin, lout) = (sin.len(), sout.len());
        let input = acts.last().unwrap();
        let mut out = vec![0.0; n * lout];
        let mut argmax = Vec::new();
        match layer.kind {
            LayerKind::Conv { .. } => {
                let g = geom(layer.kind, sin);
                let mut col = vec![0.0; g.r() * g.p()];
                for s in 0..n {
                    im2col(&g, &input[s * lin..(s + 1) * lin], &mut col);
                    conv_item(&g, &params.weights, &params.bias, &col, &mut out[s * lout..(s + 1) * lout]);
                }
            }
            LayerKind::MaxPool => {
                let Shape::Spatial { c, h, w } = sin else { unreachable!() };
                argmax = vec![0; n * lout];
                for s in 0..n {
                    pool_item(
                        c,
                        h,
                        w,
                        &input[s * lin..(s + 1) * lin],
                        &mut out[s * lout..(s + 1) * lout],
                        &mut argmax[s * lout..(s + 1) * lout],
                    );
                }
            }
            LayerKind::FullyConnected { .. } | LayerKind::Output { .. } => {
                for s in 0..n {
                    let xs = &input[s * lin..(s + 1) * lin];
                    for u in 0..lout {
                        out[s * lout + u] = params.bias[u] + dot(&params.weights[u * lin..(u + 1) * lin], xs);
                    }
                }
            }
        }
        if layer.activated() {
            let a = layer.activation;
            out.iter_mut().for_each(|v| *v = a.apply(*v));
        }
        if !keep {
            acts.pop();
        }
        acts.push(out);
        argmaxes.push(argmax);
    }
    (acts, argmaxes)
}

/// Full forward pass. Predictions come from the linear output layer.
pub fn forward(spec: &NetworkSpec, state: &NetworkState, batch: &Tensor4) -> Result<(Matrix, Cache)> {
    check_input(spec, batch)?;
    state.check(spec)?;
    let shapes = spec.shapes()?;
    let n = batch.n();
    let (acts, argmax) = run_layers(spec, state, &shapes, n, batch.as_slice().to_vec(), spec.layers.len(), true);
    let pred = Matrix::from_vec(n, spec.output_dim(), acts.last().unwrap().clone())
        .map_err(|_| Error::NonFiniteGradient { layer: spec.layers.len() - 1 })?;
    Ok((pred, Cache { n, shapes, acts, argmax }))
}

/// `½·mean_i ‖targets_i − predictions_i‖²`.
pub fn loss(predictions: &Matrix, targets: &Matrix) -> f64 {
    let n = predictions.rows().max(1) as f64;
    let sq: f64 = predictions
        .as_slice()
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * (p - t))
        .sum();
    0.5 * sq / n
}

/// Gradients of [`loss`] with respect to every parameter, same layout as the state.
pub fn backward(spec: &NetworkSpec, state: &NetworkState, cache: &Cache, targets: &Matrix) -> Result<Vec<LayerParams>> {
    let n = cache.n;
    let d2 = spec.output_dim();
    if targets.shape() != (n, d2) {
        return Err(Error::TargetShape {
            expected: (n, d2),
            got: targets.shape(),
        });
    }
    let shapes = &cache.shapes;
    let nl = spec.layers.len();
    let mut grads: Vec<LayerParams> = state.layers.iter().map(LayerParams::zeros_like).collect();

    let inv_n = 1.0 / n as f64;
    let mut delta: Vec<f64> = cache.acts[nl]
        .iter()
        .zip(targets.as_slice())
        .map(|(p, t)| (p - t) * inv_n)
        .collect();

    for i in (0..nl).rev() {
        let layer = spec.layers[i];
        let (sin, sout) = (shapes[i], shapes[i + 1]);
        let (lin, lout) = (sin.len(), sout.len());
        let input = &cache.acts[i];
        if layer.activated() {
            let a = layer.activation;
            for (d, &out) in delta.iter_mut().zip(&cache.acts[i + 1]) {
                *d *= a.derivative(out);
            }
        }
        let need_input = i > 0;
        let mut din = if need_input { vec![0.0; n * lin] } else { Vec::new() };
        let params = &state.layers[i];
        let g = &mut grads[i];
        match layer.kind {
            LayerKind::Conv { .. } => {
                let geo = geom(layer.kind, sin);
                let mut col = vec![0.0; geo.r() * geo.p()];
                let mut dcol = if need_input { vec![0.0; col.len()] } else { Vec::new() };
                for s in 0..n {
                    im2col(&geo, &input[s * lin..(s + 1) * lin], &mut col);
                    conv_item_backward(
                        &geo,
                        &params.weights,
                        &col,
                        &delta[s * lout..(s + 1) * lout],
                        &mut g.weights,
                        &mut g.bias,
                        need_input.then_some(dcol.as_mut_slice()),
                    );
                    if need_input {
                        col2im_add(&geo, &dcol, &mut din[s * lin..(s + 1) * lin]);
                    }
                }
            }
            LayerKind::MaxPool => {
                if need_input {
                    let am = &cache.argmax[i];
                    for s in 0..n {
                        let dst = &mut din[s * lin..(s + 1) * lin];
                        for o in 0..lout {
                            dst[am[s * lout + o]] += delta[s * lout + o];
                        }
                    }
                }
            }
            LayerKind::FullyConnected { .. } | LayerKind::Output { .. } => {
                for s in 0..n {
                    let xs = &input[s * lin..(s + 1) * lin];
                    let ds = &delta[s * lout..(s + 1) * lout];
                    for (u, &du) in ds.iter().enumerate() {
                        if du == 0.0 {
                            continue;
                        }
                        g.bias[u] += du;
                        axpy(du, xs, &mut g.weights[u * lin..(u + 1) * lin]);
                        if need_input {
                            axpy(du, &params.weights[u * lin..(u + 1) * lin], &mut din[s * lin..(s + 1) * lin]);
                        }
                    }
                }
            }
        }
        delta = din;
    }
    Ok(grads)
}

/// `W ← W − η·∇W` for every parameter. Rejects non-finite gradients before
/// touching the state.
pub fn sgd_step(state: &mut NetworkState, grads: &[LayerParams], eta: f64) -> Result<()> {
    if !(eta >= 0.0 && eta.is_finite()) {
        return Err(Error::InvalidParameter {
            name: "eta",
            reason: format!("must be finite and non-negative, got {eta}"),
        });
    }
    if grads.len() != state.layers.len() {
        return Err(Error::InvalidParameter {
            name: "gradients",
            reason: format!("{} blocks for {} layers", grads.len(), state.layers.len()),
        });
    }
    for (i, g) in grads.iter().enumerate() {
        if !g.weights.iter().chain(&g.bias).all(|v| v.is_finite()) {
            return Err(Error::NonFiniteGradient { layer: i });
        }
    }
    for (p, g) in state.layers.iter_mut().zip(grads) {
        axpy(-eta, &g.weights, &mut p.weights);
        axpy(-eta, &g.bias, &mut p.bias);
    }
    Ok(())
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct TrainOpts {
    pub eta: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
}

impl Default for TrainOpts {
    fn default() -> Self {
        TrainOpts {
            eta: 0.01,
            batch_size: 32,
            epochs: 30,
            seed: 0,
        }
    }
}

/// One pass over `images` in an order drawn from `rng`. Returns the
/// sample-weighted mean of the mini-batch losses seen during the pass.
pub fn train_epoch<R: Rng>(
    spec: &NetworkSpec,
    state: &mut NetworkState,
    images: &Tensor4,
    targets: &Matrix,
    eta: f64,
    batch_size: usize,
    rng: &mut R,
) -> Result<f64> {
    let n = images.n();
    if n == 0 {
        return Err(Error::InvalidParameter {
            name: "images",
            reason: "empty dataset".into(),
        });
    }
    if batch_size == 0 {
        return Err(Error::InvalidParameter {
            name: "batch_size",
            reason: "must be ≥ 1".into(),
        });
    }
    if targets.rows() != n {
        return Err(Error::TargetShape {
            expected: (n, spec.output_dim()),
            got: targets.shape(),
        });
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(rng);
    let mut total = 0.0;
    for idx in order.chunks(batch_size) {
        let batch = images.select(idx);
        let y = targets.select_rows(idx);
        let (pred, cache) = forward(spec, state, &batch)?;
        total += loss(&pred, &y) * idx.len() as f64;
        let grads = backward(spec, state, &cache, &y)?;
        sgd_step(state, &grads, eta)?;
    }
    Ok(total / n as f64)
}

/// `opts.epochs` epochs with a shuffle stream seeded from `opts.seed`.
/// Returns the per-epoch mean losses.
pub fn train(
    spec: &NetworkSpec,
    state: &mut NetworkState,
    images: &Tensor4,
    targets: &Matrix,
    opts: &TrainOpts,
) -> Result<Vec<f64>> {
    let mut rng = ChaCha8Rng::seed_from_u64(opts.seed);
    state.eta = opts.eta;
    (0..opts.epochs)
        .map(|_| train_epoch(spec, state, images, targets, opts.eta, opts.batch_size, &mut rng))
        .collect()
}

/// Post-activation output of the last fully connected layer, one row per sample.
pub fn extract_features(spec: &NetworkSpec, state: &NetworkState, batch: &Tensor4) -> Result<Matrix> {
    const CHUNK: usize = 64;
    check_input(spec, batch)?;
    state.check(spec)?;
    let layer = spec.feature_layer().ok_or(Error::NoFeatureLayer)?;
    let shapes = spec.shapes()?;
    let width = shapes[layer + 1].len();
    let n = batch.n();
    let mut data = Vec::with_capacity(n * width);
    let item = batch.item_len();
    for start in (0..n).step_by(CHUNK) {
        let end = (start + CHUNK).min(n);
        let x = batch.as_slice()[start * item..end * item].to_vec();
        let (mut acts, _) = run_layers(spec, state, &shapes, end - start, x, layer + 1, false);
        data.append(acts.last_mut().unwrap());
    }
    Ok(Matrix::from_vec(n, width, data)?)
}
