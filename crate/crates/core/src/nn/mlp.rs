use std::fmt::Write as _;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::activation::Activation;
use crate::error::{Error, Result};

pub const CHECKPOINT_MAGIC: &str = "MLPv1";

/// Inputs (flat, `dim` per sample) with one scalar target each.
#[derive(Clone, Debug, PartialEq)]
pub struct Samples {
    dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Samples {
    pub fn new(dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if dim == 0 {
            return Err(Error::arg("sample dimension must be positive"));
        }
        if inputs.len() != dim * targets.len() {
            return Err(Error::DimensionMismatch {
                expected: dim * targets.len(),
                got: inputs.len(),
            });
        }
        Ok(Samples {
            dim,
            inputs,
            targets,
        })
    }

    pub fn from_points(points: &[Vec<f64>], targets: Vec<f64>) -> Result<Self> {
        let dim = points.first().map_or(0, |p| p.len());
        if points.len() != targets.len() {
            return Err(Error::DimensionMismatch {
                expected: points.len(),
                got: targets.len(),
            });
        }
        if points.iter().any(|p| p.len() != dim) {
            return Err(Error::arg("points have mixed dimensions"));
        }
        Self::new(dim, points.concat(), targets)
    }

    pub fn dim(&self) -> usize {
        self.dim
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.dim..(i + 1) * self.dim]
    }

    pub fn targets(&self) -> &[f64] {
        &self.targets
    }

    pub fn with_targets(&self, targets: Vec<f64>) -> Result<Self> {
        Self::new(self.dim, self.inputs.clone(), targets)
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum InitScheme {
    Gaussian { mean: f64, std: f64 },
    Uniform { lo: f64, hi: f64 },
    /// `U(−1/√fan_in, 1/√fan_in)` per layer, weights and biases alike.
    FanInUniform,
}

impl InitScheme {
    pub fn validate(&self) -> Result<()> {
        match *self {
            InitScheme::Gaussian { std, mean } if !(std > 0.0) || !mean.is_finite() => {
                Err(Error::arg(format!("gaussian init needs std > 0, got {std}")))
            }
            InitScheme::Uniform { lo, hi } if !(lo < hi) => {
                Err(Error::arg(format!("uniform init needs lo < hi, got [{lo}, {hi}]")))
            }
            _ => Ok(()),
        }
    }
}

/// Standard normal pairs by Box–Muller.
pub struct GaussianStream {
    rng: ChaCha8Rng,
    spare: Option<f64>,
}

impl GaussianStream {
    pub fn new(seed: u64) -> Self {
        GaussianStream {
            rng: ChaCha8Rng::seed_from_u64(seed),
            spare: None,
        }
    }

    pub fn next_standard(&mut self) -> f64 {
        if let Some(z) = self.spare.take() {
            return z;
        }
        let u1 = 1.0 - self.rng.gen::<f64>();
        let u2: f64 = self.rng.gen();
        let r = (-2.0 * u1.ln()).sqrt();
        let (s, c) = (std::f64::consts::TAU * u2).sin_cos();
        self.spare = Some(r * s);
        r * c
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
struct Layer {
    n_in: usize,
    n_out: usize,
    w: usize,
    b: usize,
}

/// Fully connected network with one activation on every hidden layer and a
/// linear scalar output. Parameters live in one flat vector, layer by layer,
/// weights (row-major, `n_out × n_in`) before biases.
#[derive(Clone, Debug, PartialEq)]
pub struct Mlp {
    sizes: Vec<usize>,
    activation: Activation,
    layers: Vec<Layer>,
    params: Vec<f64>,
}

impl Mlp {
    pub fn new(sizes: &[usize], activation: Activation) -> Result<Self> {
        if sizes.len() < 2 || sizes.iter().any(|&s| s == 0) {
            return Err(Error::arg(format!("bad layer sizes {sizes:?}")));
        }
        if *sizes.last().unwrap() != 1 {
            return Err(Error::arg("the output layer must have a single unit"));
        }
        activation.validate()?;
        let mut layers = Vec::with_capacity(sizes.len() - 1);
        let mut off = 0;
        for w in sizes.windows(2) {
            let (n_in, n_out) = (w[0], w[1]);
            layers.push(Layer {
                n_in,
                n_out,
                w: off,
                b: off + n_in * n_out,
            });
            off += n_in * n_out + n_out;
        }
        Ok(Mlp {
            sizes: sizes.to_vec(),
            activation,
            layers,
            params: vec![0.0; off],
        })
    }

    /// Shallow network `d → width → 1`.
    pub fn shallow(d: usize, width: usize, activation: Activation) -> Result<Self> {
        Self::new(&[d, width, 1], activation)
    }

    pub fn initialized(
        sizes: &[usize],
        activation: Activation,
        scheme: InitScheme,
        seed: u64,
    ) -> Result<Self> {
        let mut m = Self::new(sizes, activation)?;
        m.init_params(scheme, seed)?;
        Ok(m)
    }

    pub fn sizes(&self) -> &[usize] {
        &self.sizes
    }

    pub fn input_dim(&self) -> usize {
        self.sizes[0]
    }

    pub fn activation(&self) -> Activation {
        self.activation
    }

    pub fn num_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn num_params(&self) -> usize {
        self.params.len()
    }

    pub fn params(&self) -> &[f64] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [f64] {
        &mut self.params
    }

    /// Flat index of weight `(j, k)` of layer `l` (output unit `j`, input `k`).
    pub fn weight_index(&self, l: usize, j: usize, k: usize) -> usize {
        let layer = self.layers[l];
        assert!(j < layer.n_out && k < layer.n_in);
        layer.w + j * layer.n_in + k
    }

    pub fn bias_index(&self, l: usize, j: usize) -> usize {
        let layer = self.layers[l];
        assert!(j < layer.n_out);
        layer.b + j
    }

    pub fn set_weight(&mut self, l: usize, j: usize, k: usize, v: f64) {
        let i = self.weight_index(l, j, k);
        self.params[i] = v;
    }

    pub fn set_bias(&mut self, l: usize, j: usize, v: f64) {
        let i = self.bias_index(l, j);
        self.params[i] = v;
    }

    /// Deterministic in `(scheme, seed)`.
    pub fn init_params(&mut self, scheme: InitScheme, seed: u64) -> Result<()> {
        scheme.validate()?;
        match scheme {
            InitScheme::Gaussian { mean, std } => {
                let mut g = GaussianStream::new(seed);
                for p in &mut self.params {
                    *p = mean + std * g.next_standard();
                }
            }
            InitScheme::Uniform { lo, hi } => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for p in &mut self.params {
                    *p = rng.gen_range(lo..=hi);
                }
            }
            InitScheme::FanInUniform => {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                for layer in &self.layers {
                    let bound = 1.0 / (layer.n_in as f64).sqrt();
                    let end = layer.b + layer.n_out;
                    for p in &mut self.params[layer.w..end] {
                        *p = rng.gen_range(-bound..=bound);
                    }
                }
            }
        }
        Ok(())
    }

    fn check_input(&self, x: &[f64]) -> Result<()> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: x.len(),
            });
        }
        Ok(())
    }

    fn check_samples(&self, data: &Samples) -> Result<()> {
        if data.is_empty() {
            return Err(Error::arg("no samples"));
        }
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.dim(),
            });
        }
        Ok(())
    }

    /// Runs one sample forward, leaving pre-activations in `z` and outputs in
    /// `a` (`a[0]` is the input).
    fn forward_into(&self, x: &[f64], z: &mut [Vec<f64>], a: &mut [Vec<f64>]) -> f64 {
        a[0].copy_from_slice(x);
        let last = self.layers.len() - 1;
        for (l, layer) in self.layers.iter().enumerate() {
            let (prev, next) = a.split_at_mut(l + 1);
            let input = &prev[l];
            let w = &self.params[layer.w..layer.b];
            let b = &self.params[layer.b..layer.b + layer.n_out];
            let zl = &mut z[l];
            for j in 0..layer.n_out {
                let row = &w[j * layer.n_in..(j + 1) * layer.n_in];
                zl[j] = b[j] + row.iter().zip(input.iter()).map(|(w, x)| w * x).sum::<f64>();
            }
            let out = &mut next[0];
            if l == last {
                out.copy_from_slice(zl);
            } else {
                for (o, zv) in out.iter_mut().zip(zl.iter()) {
                    *o = self.activation.eval(*zv);
                }
            }
        }
        a[self.layers.len()][0]
    }

    fn buffers(&self) -> (Vec<Vec<f64>>, Vec<Vec<f64>>) {
        let z = self.layers.iter().map(|l| vec![0.0; l.n_out]).collect();
        let a = self.sizes.iter().map(|&s| vec![0.0; s]).collect();
        (z, a)
    }

    pub fn forward(&self, x: &[f64]) -> Result<f64> {
        self.check_input(x)?;
        let (mut z, mut a) = self.buffers();
        Ok(self.forward_into(x, &mut z, &mut a))
    }

    pub fn predict(&self, data: &Samples) -> Result<Vec<f64>> {
        if data.dim() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                got: data.dim(),
            });
        }
        let (mut z, mut a) = self.buffers();
        Ok((0..data.len())
            .map(|i| self.forward_into(data.input(i), &mut z, &mut a))
            .collect())
    }

    /// `(1/N) Σ (f(x_i) − y_i)²`.
    pub fn mse_loss(&self, data: &Samples) -> Result<f64> {
        self.check_samples(data)?;
        let preds = self.predict(data)?;
        Ok(mse(&preds, data.targets()))
    }

    /// Gradient of the MSE with respect to every parameter, in the flat layout.
    pub fn backward(&self, data: &Samples) -> Result<Vec<f64>> {
        let mut grad = vec![0.0; self.num_params()];
        let mut preds = vec![0.0; data.len()];
        self.loss_and_gradient(data, &mut grad, &mut preds)?;
        Ok(grad)
    }

    /// MSE, its gradient (overwriting `grad`) and the predictions on `data`.
    pub fn loss_and_gradient(
        &self,
        data: &Samples,
        grad: &mut [f64],
        preds: &mut [f64],
    ) -> Result<f64> {
        self.check_samples(data)?;
        if grad.len() != self.num_params() {
            return Err(Error::DimensionMismatch {
                expected: self.num_params(),
                got: grad.len(),
            });
        }
        if preds.len() != data.len() {
            return Err(Error::DimensionMismatch {
                expected: data.len(),
                got: preds.len(),
            });
        }
        grad.iter_mut().for_each(|g| *g = 0.0);
        let (mut z, mut a) = self.buffers();
        let widest = *self.sizes.iter().max().unwrap();
        let mut delta = vec![0.0; widest];
        let mut delta_prev = vec![0.0; widest];
        let scale = 2.0 / data.len() as f64;
        let mut loss = 0.0;
        for i in 0..data.len() {
            let out = self.forward_into(data.input(i), &mut z, &mut a);
            preds[i] = out;
            let r = out - data.targets()[i];
            loss += r * r;
            delta[0] = scale * r;
            for l in (0..self.layers.len()).rev() {
                let layer = self.layers[l];
                let input = &a[l];
                {
                    let (gw, gb) = grad[layer.w..layer.b + layer.n_out].split_at_mut(layer.b - layer.w);
                    for j in 0..layer.n_out {
                        let d = delta[j];
                        if d == 0.0 {
                            continue;
                        }
                        gb[j] += d;
                        let row = &mut gw[j * layer.n_in..(j + 1) * layer.n_in];
                        for (g, x) in row.iter_mut().zip(input.iter()) {
                            *g += d * x;
                        }
                    }
                }
                if l == 0 {
                    break;
                }
                let w = &self.params[layer.w..layer.b];
                let dp = &mut delta_prev[..layer.n_in];
                dp.iter_mut().for_each(|v| *v = 0.0);
                for j in 0..layer.n_out {
                    let d = delta[j];
                    if d == 0.0 {
                        continue;
                    }
                    let row = &w[j * layer.n_in..(j + 1) * layer.n_in];
                    for (p, wv) in dp.iter_mut().zip(row.iter()) {
                        *p += d * wv;
                    }
                }
                let zp = &z[l - 1];
                let ap = &a[l];
                for k in 0..layer.n_in {
                    dp[k] *= self.activation.deriv_with_value(zp[k], ap[k]);
                }
                std::mem::swap(&mut delta, &mut delta_prev);
            }
        }
        Ok(loss / data.len() as f64)
    }

    /// Smallest distance from any hidden pre-activation on `data` to a kink.
    pub fn min_kink_distance(&self, data: &Samples) -> Result<f64> {
        self.check_samples(data)?;
        let kinks = self.activation.kinks();
        if kinks.is_empty() {
            return Ok(f64::INFINITY);
        }
        let (mut z, mut a) = self.buffers();
        let mut best = f64::INFINITY;
        for i in 0..data.len() {
            self.forward_into(data.input(i), &mut z, &mut a);
            for zl in &z[..z.len() - 1] {
                for v in zl {
                    for k in &kinks {
                        best = best.min((v - k).abs());
                    }
                }
            }
        }
        Ok(best)
    }

    /// Text checkpoint: header, activation, sizes, then every parameter as
    /// the hex image of its bits.
    pub fn to_checkpoint(&self) -> String {
        let mut out = String::new();
        let _ = writeln!(out, "{CHECKPOINT_MAGIC}");
        match self.activation {
            Activation::ScaledHat { alpha } => {
                let _ = writeln!(out, "activation scaled_hat {:016x}", alpha.to_bits());
            }
            other => {
                let _ = writeln!(out, "activation {other}");
            }
        }
        let sizes: Vec<String> = self.sizes.iter().map(|s| s.to_string()).collect();
        let _ = writeln!(out, "sizes {}", sizes.join(" "));
        let _ = writeln!(out, "params {}", self.params.len());
        for p in &self.params {
            let _ = writeln!(out, "{:016x}", p.to_bits());
        }
        out
    }

    pub fn from_checkpoint(text: &str) -> Result<Self> {
        let mut offset = 0;
        let mut lines = text.split_inclusive('\n').map(|l| {
            let start = offset;
            offset += l.len();
            (start, l.trim_end_matches(['\n', '\r']))
        });
        let mut next = |what: &str| {
            lines.next().ok_or_else(|| Error::Parse {
                offset: text.len(),
                message: format!("missing {what}"),
            })
        };
        let bad = |offset: usize, message: String| Error::Parse { offset, message };

        let (at, magic) = next("header")?;
        if magic != CHECKPOINT_MAGIC {
            return Err(bad(at, format!("expected {CHECKPOINT_MAGIC} header, found {magic:?}")));
        }
        let (at, act_line) = next("activation")?;
        let act_fields: Vec<&str> = act_line.split_whitespace().collect();
        let activation = match act_fields.as_slice() {
            ["activation", "scaled_hat", bits] => Activation::ScaledHat {
                alpha: f64::from_bits(
                    u64::from_str_radix(bits, 16).map_err(|e| bad(at, e.to_string()))?,
                ),
            },
            ["activation", name] => name.parse().map_err(|e: Error| bad(at, e.to_string()))?,
            _ => return Err(bad(at, format!("bad activation line {act_line:?}"))),
        };
        let (at, size_line) = next("sizes")?;
        let sizes = size_line
            .strip_prefix("sizes ")
            .ok_or_else(|| bad(at, "expected sizes line".into()))?
            .split_whitespace()
            .map(|s| s.parse::<usize>().map_err(|e| bad(at, e.to_string())))
            .collect::<Result<Vec<usize>>>()?;
        let mut model = Mlp::new(&sizes, activation).map_err(|e| bad(at, e.to_string()))?;
        let (at, count_line) = next("parameter count")?;
        let count: usize = count_line
            .strip_prefix("params ")
            .and_then(|c| c.trim().parse().ok())
            .ok_or_else(|| bad(at, "expected params line".into()))?;
        if count != model.num_params() {
            return Err(bad(
                at,
                format!("sizes imply {} parameters, header says {count}", model.num_params()),
            ));
        }
        for i in 0..count {
            let (at, line) = next("parameter")?;
            let bits = u64::from_str_radix(line.trim(), 16)
                .map_err(|e| bad(at, format!("parameter {i}: {e}")))?;
            model.params[i] = f64::from_bits(bits);
        }
        if model.params.iter().any(|p| !p.is_finite()) {
            return Err(bad(0, "checkpoint holds non-finite parameters".into()));
        }
        Ok(model)
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        std::fs::write(path, self.to_checkpoint()).map_err(|e| Error::io(path, e))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_checkpoint(&text)
    }
}

pub fn mse(preds: &[f64], targets: &[f64]) -> f64 {
    preds
        .iter()
        .zip(targets)
        .map(|(p, t)| (p - t) * (p - t))
        .sum::<f64>()
        / preds.len() as f64
}
