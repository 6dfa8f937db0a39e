//! Multilayer perceptron with Swish hidden layers, trained by ADAM on the
//! min-max weighted coefficient loss.

use nalgebra::{DMatrix, DVector};
use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

pub const ADAM_BETA1: f64 = 0.9;
pub const ADAM_BETA2: f64 = 0.999;
pub const ADAM_EPSILON: f64 = 1e-7;

fn sigmoid(z: f64) -> f64 {
    1.0 / (1.0 + (-z).exp())
}

pub fn swish(z: f64) -> f64 {
    z * sigmoid(z)
}

pub fn swish_derivative(z: f64) -> f64 {
    let s = sigmoid(z);
    s + z * s * (1.0 - s)
}

#[derive(Debug, Clone, PartialEq)]
pub struct Layer {
    /// `out x in`.
    pub weights: DMatrix<f64>,
    pub bias: DVector<f64>,
}

/// Per-output min-max scaling and the matching loss weights.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Scaling {
    pub beta_min: Vec<f64>,
    pub beta_max: Vec<f64>,
    pub omega: Vec<f64>,
}

impl Scaling {
    /// Fits on targets stored one sample per column.
    pub fn fit(targets: &DMatrix<f64>) -> Result<Self> {
        if targets.ncols() == 0 {
            return Err(invalid("cannot fit scaling on an empty target set"));
        }
        let mut beta_min = Vec::with_capacity(targets.nrows());
        let mut beta_max = Vec::with_capacity(targets.nrows());
        for r in targets.row_iter() {
            beta_min.push(r.min());
            beta_max.push(r.max());
        }
        Ok(Self::from_bounds(beta_min, beta_max))
    }

    pub fn from_bounds(beta_min: Vec<f64>, beta_max: Vec<f64>) -> Self {
        let omega = beta_min
            .iter()
            .zip(&beta_max)
            .map(|(lo, hi)| {
                let s = hi - lo;
                // a constant output keeps raw differences so the loss identity holds
                if s > 0.0 {
                    s * s
                } else {
                    1.0
                }
            })
            .collect();
        Self {
            beta_min,
            beta_max,
            omega,
        }
    }

    pub fn identity(n: usize) -> Self {
        Self::from_bounds(vec![0.0; n], vec![1.0; n])
    }

    pub fn len(&self) -> usize {
        self.omega.len()
    }

    pub fn is_empty(&self) -> bool {
        self.omega.is_empty()
    }

    fn span(&self, j: usize) -> f64 {
        self.omega[j].sqrt()
    }

    pub fn scale(&self, beta: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(beta.len(), |j, _| (beta[j] - self.beta_min[j]) / self.span(j))
    }

    pub fn unscale(&self, scaled: &DVector<f64>) -> DVector<f64> {
        DVector::from_fn(scaled.len(), |j, _| {
            scaled[j] * self.span(j) + self.beta_min[j]
        })
    }

    fn scale_columns(&self, m: &DMatrix<f64>) -> DMatrix<f64> {
        DMatrix::from_fn(m.nrows(), m.ncols(), |j, c| {
            (m[(j, c)] - self.beta_min[j]) / self.span(j)
        })
    }
}

/// Weighted loss of raw (unscaled) coefficients:
/// `(1/N) sum_j omega_j (scaled difference)^2`.
pub fn loss(beta_hat: &DVector<f64>, beta: &DVector<f64>, scaling: &Scaling) -> Result<f64> {
    if beta_hat.len() != beta.len() || beta.len() != scaling.len() {
        return Err(Error::DimensionMismatch {
            expected: scaling.len(),
            actual: beta_hat.len().max(beta.len()),
            context: "loss arguments",
        });
    }
    let (a, b) = (scaling.scale(beta_hat), scaling.scale(beta));
    Ok(scaled_loss(&a, &b, scaling))
}

fn scaled_loss(a: &DVector<f64>, b: &DVector<f64>, scaling: &Scaling) -> f64 {
    let n = a.len();
    (0..n)
        .map(|j| scaling.omega[j] * (a[j] - b[j]).powi(2))
        .sum::<f64>()
        / n as f64
}

#[derive(Debug, Clone, PartialEq)]
pub struct MlpModel {
    pub layers: Vec<Layer>,
    pub scaling: Scaling,
}

impl MlpModel {
    pub fn new(layers: Vec<Layer>, scaling: Scaling) -> Result<Self> {
        if layers.is_empty() {
            return Err(invalid("network needs at least one layer"));
        }
        for (k, l) in layers.iter().enumerate() {
            if l.bias.len() != l.weights.nrows() {
                return Err(invalid(format!("layer {k}: bias/weight size mismatch")));
            }
            if k > 0 && layers[k - 1].weights.nrows() != l.weights.ncols() {
                return Err(invalid(format!("layer {k}: dimension chain broken")));
            }
        }
        let out = layers.last().map(|l| l.weights.nrows()).unwrap_or(0);
        if scaling.len() != out {
            return Err(invalid("scaling size differs from the output dimension"));
        }
        let m = Self { layers, scaling };
        if !m.parameters().iter().all(|v| v.is_finite()) {
            return Err(invalid("non-finite network parameter"));
        }
        Ok(m)
    }

    /// Glorot-uniform weights and zero biases.
    pub fn random(dims: &[usize], scaling: Scaling, seed: u64) -> Result<Self> {
        if dims.len() < 2 || dims.contains(&0) {
            return Err(invalid("layer dimensions must be positive, at least input and output"));
        }
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims
            .windows(2)
            .map(|w| {
                let limit = (6.0 / (w[0] + w[1]) as f64).sqrt();
                Layer {
                    weights: DMatrix::from_fn(w[1], w[0], |_, _| rng.random_range(-limit..limit)),
                    bias: DVector::zeros(w[1]),
                }
            })
            .collect();
        Self::new(layers, scaling)
    }

    pub fn layer_dims(&self) -> Vec<usize> {
        let mut d = vec![self.layers[0].weights.ncols()];
        d.extend(self.layers.iter().map(|l| l.weights.nrows()));
        d
    }

    pub fn input_dim(&self) -> usize {
        self.layers[0].weights.ncols()
    }

    pub fn output_dim(&self) -> usize {
        self.layers.last().map(|l| l.weights.nrows()).unwrap_or(0)
    }

    pub fn n_parameters(&self) -> usize {
        self.layers.iter().map(|l| l.weights.len() + l.bias.len()).sum()
    }

    /// All parameters: per layer, weights row-major then biases.
    pub fn parameters(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.n_parameters());
        for l in &self.layers {
            for r in 0..l.weights.nrows() {
                out.extend(l.weights.row(r).iter());
            }
            out.extend(l.bias.iter());
        }
        out
    }

    pub fn set_parameters(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.n_parameters() {
            return Err(Error::DimensionMismatch {
                expected: self.n_parameters(),
                actual: p.len(),
                context: "parameter vector",
            });
        }
        let mut k = 0;
        for l in &mut self.layers {
            for r in 0..l.weights.nrows() {
                for c in 0..l.weights.ncols() {
                    l.weights[(r, c)] = p[k];
                    k += 1;
                }
            }
            for b in l.bias.iter_mut() {
                *b = p[k];
                k += 1;
            }
        }
        Ok(())
    }

    /// Network output (scaled coordinates), prediction mode.
    pub fn forward(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        if x.len() != self.input_dim() {
            return Err(Error::DimensionMismatch {
                expected: self.input_dim(),
                actual: x.len(),
                context: "network input",
            });
        }
        let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
        Ok(self.forward_batch(&xm).column(0).into_owned())
    }

    /// Columns are samples.
    pub fn forward_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let last = self.layers.len() - 1;
        let mut a = x.clone();
        for (k, l) in self.layers.iter().enumerate() {
            let mut z = &l.weights * &a;
            for mut col in z.column_iter_mut() {
                col += &l.bias;
            }
            if k < last {
                z.apply(|v| *v = swish(*v));
            }
            a = z;
        }
        a
    }

    /// Unscaled coefficients.
    pub fn predict(&self, x: &DVector<f64>) -> Result<DVector<f64>> {
        Ok(self.scaling.unscale(&self.forward(x)?))
    }

    pub fn predict_batch(&self, x: &DMatrix<f64>) -> DMatrix<f64> {
        let y = self.forward_batch(x);
        DMatrix::from_fn(y.nrows(), y.ncols(), |j, c| {
            y[(j, c)] * self.scaling.span(j) + self.scaling.beta_min[j]
        })
    }

    fn l2_norm_squared(&self) -> f64 {
        self.layers
            .iter()
            .map(|l| l.weights.norm_squared() + l.bias.norm_squared())
            .sum()
    }
}

/// Gradients laid out like the layers.
#[derive(Debug, Clone)]
struct Gradients {
    weights: Vec<DMatrix<f64>>,
    bias: Vec<DVector<f64>>,
}

/// Dropout masks for the hidden layers (already divided by the retention).
type Masks = Vec<DMatrix<f64>>;

pub fn dropout_mask(rng: &mut ChaCha8Rng, rows: usize, cols: usize, retention: f64) -> DMatrix<f64> {
    if retention >= 1.0 {
        return DMatrix::from_element(rows, cols, 1.0);
    }
    DMatrix::from_fn(rows, cols, |_, _| {
        if rng.random::<f64>() < retention {
            1.0 / retention
        } else {
            0.0
        }
    })
}

/// Data loss (mean over samples) and its gradient; targets in scaled coordinates.
fn loss_and_gradients(
    model: &MlpModel,
    x: &DMatrix<f64>,
    y_scaled: &DMatrix<f64>,
    masks: Option<&Masks>,
) -> (f64, Gradients) {
    let last = model.layers.len() - 1;
    let mut pre = Vec::with_capacity(model.layers.len());
    let mut acts = vec![x.clone()];
    for (k, l) in model.layers.iter().enumerate() {
        let mut z = &l.weights * &acts[k];
        for mut col in z.column_iter_mut() {
            col += &l.bias;
        }
        let mut a = z.clone();
        if k < last {
            a.apply(|v| *v = swish(*v));
            if let Some(m) = masks {
                a.component_mul_assign(&m[k]);
            }
        }
        pre.push(z);
        acts.push(a);
    }
    let out = &acts[last + 1];
    let (n_out, batch) = out.shape();
    let w = &model.scaling.omega;
    let norm = 1.0 / (n_out * batch) as f64;
    let mut value = 0.0;
    let mut delta = DMatrix::zeros(n_out, batch);
    for c in 0..batch {
        for j in 0..n_out {
            let d = out[(j, c)] - y_scaled[(j, c)];
            value += w[j] * d * d;
            delta[(j, c)] = 2.0 * w[j] * d * norm;
        }
    }
    value *= norm;

    let mut gw = vec![DMatrix::zeros(0, 0); model.layers.len()];
    let mut gb = vec![DVector::zeros(0); model.layers.len()];
    for k in (0..=last).rev() {
        gw[k] = &delta * acts[k].transpose();
        gb[k] = delta.column_sum();
        if k > 0 {
            let mut back = model.layers[k].weights.transpose() * &delta;
            if let Some(m) = masks {
                back.component_mul_assign(&m[k - 1]);
            }
            let z = &pre[k - 1];
            back.zip_apply(z, |b, zv| *b *= swish_derivative(zv));
            delta = back;
        }
    }
    (value, Gradients { weights: gw, bias: gb })
}

/// Mean data loss over a dataset (columns are samples), prediction mode.
pub fn dataset_loss(model: &MlpModel, x: &DMatrix<f64>, targets: &DMatrix<f64>) -> f64 {
    let y = model.scaling.scale_columns(targets);
    let out = model.forward_batch(x);
    let mut s = 0.0;
    for c in 0..x.ncols() {
        let a = out.column(c).into_owned();
        let b = y.column(c).into_owned();
        s += scaled_loss(&a, &b, &model.scaling);
    }
    s / x.ncols().max(1) as f64
}

/// Mean data loss evaluated through the training code path with fresh dropout masks.
pub fn training_mode_loss(
    model: &MlpModel,
    x: &DMatrix<f64>,
    targets: &DMatrix<f64>,
    retention: f64,
    seed: u64,
) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let masks = hidden_masks(model, x.ncols(), retention, &mut rng);
    let y = model.scaling.scale_columns(targets);
    loss_and_gradients(model, x, &y, Some(&masks)).0
}

fn hidden_masks(model: &MlpModel, batch: usize, retention: f64, rng: &mut ChaCha8Rng) -> Masks {
    model.layers[..model.layers.len() - 1]
        .iter()
        .map(|l| dropout_mask(rng, l.weights.nrows(), batch, retention))
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub hidden: Vec<usize>,
    pub epochs: usize,
    pub batch_size: usize,
    pub lr_start: f64,
    pub lr_end: f64,
    pub lr_end_epoch: usize,
    pub retention: f64,
    pub l2: f64,
    pub seed: u64,
    /// Return the parameters with the smallest validation loss.
    pub select_best_validation: bool,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            epochs: 2000,
            batch_size: 32,
            lr_start: 5e-4,
            lr_end: 5e-5,
            lr_end_epoch: 2000,
            retention: 0.995,
            l2: 1e-8,
            seed: 1,
            select_best_validation: true,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.retention > 0.0 && self.retention <= 1.0) {
            return Err(invalid("dropout retention must lie in (0, 1]"));
        }
        if !(self.lr_end > 0.0 && self.lr_start >= self.lr_end) {
            return Err(invalid("need lr_start >= lr_end > 0"));
        }
        if self.batch_size == 0 || self.epochs == 0 {
            return Err(invalid("epochs and batch size must be positive"));
        }
        if !(self.l2 >= 0.0) {
            return Err(invalid("l2 coefficient must be nonnegative"));
        }
        Ok(())
    }

    pub fn learning_rate(&self, epoch: usize) -> f64 {
        if self.lr_end_epoch == 0 || epoch >= self.lr_end_epoch {
            return self.lr_end;
        }
        let t = epoch as f64 / self.lr_end_epoch as f64;
        self.lr_start + (self.lr_end - self.lr_start) * t
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub learning_rate: f64,
    pub train_loss: f64,
    pub val_loss: f64,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TrainOutcome {
    pub model: MlpModel,
    pub history: Vec<EpochRecord>,
    pub best_epoch: usize,
}

/// Inputs and targets, one sample per column.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    pub inputs: DMatrix<f64>,
    pub targets: DMatrix<f64>,
}

impl Dataset {
    pub fn new(inputs: DMatrix<f64>, targets: DMatrix<f64>) -> Result<Self> {
        if inputs.ncols() != targets.ncols() {
            return Err(Error::DimensionMismatch {
                expected: inputs.ncols(),
                actual: targets.ncols(),
                context: "samples in inputs vs targets",
            });
        }
        Ok(Self { inputs, targets })
    }

    pub fn len(&self) -> usize {
        self.inputs.ncols()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

pub fn train(data: &Dataset, val: &Dataset, cfg: &TrainConfig) -> Result<TrainOutcome> {
    cfg.validate()?;
    if data.is_empty() || val.is_empty() {
        return Err(invalid("training and validation sets must be nonempty"));
    }
    if data.inputs.nrows() != val.inputs.nrows() || data.targets.nrows() != val.targets.nrows() {
        return Err(invalid("training and validation sets differ in shape"));
    }
    let scaling = Scaling::fit(&data.targets)?;
    let mut dims = vec![data.inputs.nrows()];
    dims.extend(&cfg.hidden);
    dims.push(data.targets.nrows());
    let mut model = MlpModel::random(&dims, scaling, cfg.seed)?;
    let y_scaled = model.scaling.scale_columns(&data.targets);

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed.wrapping_add(0x9e37_79b9_7f4a_7c15));
    let n_layers = model.layers.len();
    let mut m_w: Vec<DMatrix<f64>> = model.layers.iter().map(|l| l.weights.map(|_| 0.0)).collect();
    let mut v_w = m_w.clone();
    let mut m_b: Vec<DVector<f64>> = model.layers.iter().map(|l| l.bias.map(|_| 0.0)).collect();
    let mut v_b = m_b.clone();
    let mut step = 0i32;

    let mut history = Vec::with_capacity(cfg.epochs);
    let mut best = (f64::INFINITY, 0usize, model.clone());
    let mut last_finite = None;
    let mut order: Vec<usize> = (0..data.len()).collect();
    for epoch in 0..cfg.epochs {
        let lr = cfg.learning_rate(epoch);
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let xb = DMatrix::from_fn(data.inputs.nrows(), chunk.len(), |r, c| {
                data.inputs[(r, chunk[c])]
            });
            let yb = DMatrix::from_fn(y_scaled.nrows(), chunk.len(), |r, c| y_scaled[(r, chunk[c])]);
            let masks = (cfg.retention < 1.0)
                .then(|| hidden_masks(&model, chunk.len(), cfg.retention, &mut rng));
            let (_, g) = loss_and_gradients(&model, &xb, &yb, masks.as_ref());
            step += 1;
            let bc1 = 1.0 - ADAM_BETA1.powi(step);
            let bc2 = 1.0 - ADAM_BETA2.powi(step);
            for k in 0..n_layers {
                let layer = &mut model.layers[k];
                adam_update(
                    layer.weights.as_mut_slice(),
                    g.weights[k].as_slice(),
                    m_w[k].as_mut_slice(),
                    v_w[k].as_mut_slice(),
                    lr,
                    cfg.l2,
                    bc1,
                    bc2,
                );
                adam_update(
                    layer.bias.as_mut_slice(),
                    g.bias[k].as_slice(),
                    m_b[k].as_mut_slice(),
                    v_b[k].as_mut_slice(),
                    lr,
                    cfg.l2,
                    bc1,
                    bc2,
                );
            }
        }
        let train_loss = dataset_loss(&model, &data.inputs, &data.targets);
        let val_loss = dataset_loss(&model, &val.inputs, &val.targets);
        if !train_loss.is_finite() || !val_loss.is_finite() {
            return Err(Error::Divergence {
                epoch,
                last_finite_epoch: last_finite,
            });
        }
        last_finite = Some(epoch);
        history.push(EpochRecord {
            epoch,
            learning_rate: lr,
            train_loss,
            val_loss,
        });
        if val_loss < best.0 {
            best = (val_loss, epoch, model.clone());
        }
    }
    let (model, best_epoch) = if cfg.select_best_validation {
        (best.2, best.1)
    } else {
        (model, cfg.epochs - 1)
    };
    Ok(TrainOutcome {
        model,
        history,
        best_epoch,
    })
}

#[allow(clippy::too_many_arguments)]
fn adam_update(
    p: &mut [f64],
    g: &[f64],
    m: &mut [f64],
    v: &mut [f64],
    lr: f64,
    l2: f64,
    bc1: f64,
    bc2: f64,
) {
    for i in 0..p.len() {
        let gi = g[i] + 2.0 * l2 * p[i];
        m[i] = ADAM_BETA1 * m[i] + (1.0 - ADAM_BETA1) * gi;
        v[i] = ADAM_BETA2 * v[i] + (1.0 - ADAM_BETA2) * gi * gi;
        let mh = m[i] / bc1;
        let vh = v[i] / bc2;
        p[i] -= lr * mh / (vh.sqrt() + ADAM_EPSILON);
    }
}

/// Floor on the denominator of the relative gradient error.
pub const GRAD_CHECK_FLOOR: f64 = 1e-8;

/// Analytic gradient of data loss plus `l2 |theta|^2` for one sample.
pub fn gradient(
    model: &MlpModel,
    x: &DVector<f64>,
    beta: &DVector<f64>,
    l2: f64,
) -> Result<Vec<f64>> {
    if x.len() != model.input_dim() || beta.len() != model.output_dim() {
        return Err(invalid("sample does not fit the network"));
    }
    let xm = DMatrix::from_column_slice(x.len(), 1, x.as_slice());
    let y = model.scaling.scale(beta);
    let ym = DMatrix::from_column_slice(y.len(), 1, y.as_slice());
    let (_, g) = loss_and_gradients(model, &xm, &ym, None);
    let params = model.parameters();
    let mut out = Vec::with_capacity(params.len());
    for k in 0..model.layers.len() {
        for r in 0..g.weights[k].nrows() {
            out.extend(g.weights[k].row(r).iter());
        }
        out.extend(g.bias[k].iter());
    }
    for (o, p) in out.iter_mut().zip(&params) {
        *o += 2.0 * l2 * p;
    }
    Ok(out)
}

fn objective(model: &MlpModel, x: &DVector<f64>, beta: &DVector<f64>, l2: f64) -> Result<f64> {
    let y = model.forward(x)?;
    let target = model.scaling.scale(beta);
    Ok(scaled_loss(&y, &target, &model.scaling) + l2 * model.l2_norm_squared())
}

/// Largest relative difference between backpropagation and central differences
/// with step `1e-5` over all parameters.
pub fn grad_check(model: &MlpModel, x: &DVector<f64>, beta: &DVector<f64>, l2: f64) -> Result<f64> {
    let analytic = gradient(model, x, beta, l2)?;
    let base = model.parameters();
    let h = 1e-5;
    let mut probe = model.clone();
    let mut worst = 0.0f64;
    for i in 0..base.len() {
        let mut p = base.clone();
        p[i] = base[i] + h;
        probe.set_parameters(&p)?;
        let fp = objective(&probe, x, beta, l2)?;
        p[i] = base[i] - h;
        probe.set_parameters(&p)?;
        let fm = objective(&probe, x, beta, l2)?;
        let fd = (fp - fm) / (2.0 * h);
        let denom = analytic[i].abs().max(fd.abs()).max(GRAD_CHECK_FLOOR);
        worst = worst.max((analytic[i] - fd).abs() / denom);
    }
    Ok(worst)
}
