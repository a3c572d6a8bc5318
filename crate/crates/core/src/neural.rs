//! Dense rectifier networks with z-scored inputs and min-max scaled targets,
//! trained by Adam on mean squared error.

use std::path::Path;

use rand::seq::SliceRandom;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

pub const HIDDEN_LAYERS: usize = 6;
pub const HIDDEN_WIDTH: usize = 32;
pub const MODEL_VERSION: u32 = 1;

#[derive(Debug, Error)]
pub enum NeuralError {
    #[error("dimension mismatch: expected {expected}, got {found}")]
    Dimension { expected: usize, found: usize },
    #[error("empty data set")]
    Empty,
    #[error("zero target at index {0} in MAPE")]
    ZeroTarget(usize),
    #[error("non-finite loss at epoch {epoch}")]
    NonFinite { epoch: usize },
    #[error("invalid training configuration: {0}")]
    Config(String),
    #[error("unsupported model version {found} (this build reads version {expected})")]
    Version { expected: u32, found: u32 },
    #[error("model file is malformed: {0}")]
    Format(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
}

pub type Result<T> = std::result::Result<T, NeuralError>;

/// Per-feature mean and standard deviation of the training inputs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InputStats {
    pub mean: Vec<f64>,
    pub std: Vec<f64>,
}

/// Per-target minimum and maximum of the training targets.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetBox {
    pub min: Vec<f64>,
    pub max: Vec<f64>,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct ModelMeta {
    pub created: String,
    pub seed: u64,
    pub dataset_hash: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Mlp {
    pub version: u32,
    /// Layer sizes from input to output.
    pub dims: Vec<usize>,
    /// Row-major `dims[l+1] x dims[l]` matrices.
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
    pub input_stats: InputStats,
    pub target_box: TargetBox,
    pub meta: ModelMeta,
}

fn column_stats(rows: &[Vec<f64>]) -> (Vec<f64>, Vec<f64>, Vec<f64>, Vec<f64>) {
    let d = rows[0].len();
    let n = rows.len() as f64;
    let mut mean = vec![0.0; d];
    let mut min = vec![f64::INFINITY; d];
    let mut max = vec![f64::NEG_INFINITY; d];
    for r in rows {
        for j in 0..d {
            mean[j] += r[j];
            min[j] = min[j].min(r[j]);
            max[j] = max[j].max(r[j]);
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut std = vec![0.0; d];
    for r in rows {
        for j in 0..d {
            std[j] += (r[j] - mean[j]).powi(2);
        }
    }
    for s in &mut std {
        *s = (*s / n).sqrt();
    }
    (mean, std, min, max)
}

fn check_rows(rows: &[Vec<f64>], width: usize) -> Result<()> {
    if rows.is_empty() {
        return Err(NeuralError::Empty);
    }
    for r in rows {
        if r.len() != width {
            return Err(NeuralError::Dimension {
                expected: width,
                found: r.len(),
            });
        }
    }
    Ok(())
}

impl Mlp {
    /// Network with the standard hidden stack and identity scaling.
    pub fn new(d_in: usize, d_out: usize, seed: u64) -> Self {
        Self::with_hidden(d_in, &[HIDDEN_WIDTH; HIDDEN_LAYERS], d_out, seed)
    }

    /// Network with an arbitrary hidden stack; weights drawn uniformly with
    /// a fan-in scaled bound.
    pub fn with_hidden(d_in: usize, hidden: &[usize], d_out: usize, seed: u64) -> Self {
        let mut dims = vec![d_in];
        dims.extend_from_slice(hidden);
        dims.push(d_out);
        let mut rng = ChaCha8Rng::seed_from_u64(seed);
        let layers = dims.len() - 1;
        let mut weights = Vec::with_capacity(layers);
        let mut biases = Vec::with_capacity(layers);
        for l in 0..layers {
            let (fan_in, fan_out) = (dims[l], dims[l + 1]);
            let bound = if l + 1 == layers {
                (6.0 / (fan_in + fan_out) as f64).sqrt()
            } else {
                (6.0 / fan_in as f64).sqrt()
            };
            weights.push(
                (0..fan_in * fan_out)
                    .map(|_| rng.random_range(-bound..bound))
                    .collect(),
            );
            biases.push(vec![0.0; fan_out]);
        }
        Self {
            version: MODEL_VERSION,
            dims,
            weights,
            biases,
            input_stats: InputStats {
                mean: vec![0.0; d_in],
                std: vec![1.0; d_in],
            },
            target_box: TargetBox {
                min: vec![0.0; d_out],
                max: vec![1.0; d_out],
            },
            meta: ModelMeta {
                seed,
                ..Default::default()
            },
        }
    }

    /// Standard network whose scaling is frozen from the given training set.
    pub fn for_data(inputs: &[Vec<f64>], targets: &[Vec<f64>], seed: u64) -> Result<Self> {
        check_rows(inputs, inputs.first().map_or(0, |r| r.len()))?;
        check_rows(targets, targets.first().map_or(0, |r| r.len()))?;
        let mut m = Self::new(inputs[0].len(), targets[0].len(), seed);
        m.fit_scaling(inputs, targets)?;
        Ok(m)
    }

    pub fn fit_scaling(&mut self, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<()> {
        check_rows(inputs, self.d_in())?;
        check_rows(targets, self.d_out())?;
        let (mean, mut std, _, _) = column_stats(inputs);
        // a column that is constant up to rounding is only centred; dividing
        // by its round-off spread would amplify any later shift without bound
        for (s, m) in std.iter_mut().zip(&mean) {
            if *s <= 1e-9 * m.abs() {
                *s = 0.0;
            }
        }
        let (_, _, min, max) = column_stats(targets);
        self.input_stats = InputStats { mean, std };
        self.target_box = TargetBox { min, max };
        Ok(())
    }

    pub fn d_in(&self) -> usize {
        self.dims[0]
    }

    pub fn d_out(&self) -> usize {
        *self.dims.last().expect("network has layers")
    }

    pub fn param_count(&self) -> usize {
        self.weights.iter().map(Vec::len).sum::<usize>() + self.biases.iter().map(Vec::len).sum::<usize>()
    }

    pub fn normalize_input(&self, x: &[f64]) -> Vec<f64> {
        x.iter()
            .zip(self.input_stats.mean.iter().zip(&self.input_stats.std))
            .map(|(v, (m, s))| if *s > 0.0 { (v - m) / s } else { v - m })
            .collect()
    }

    fn range(&self, j: usize) -> f64 {
        let r = self.target_box.max[j] - self.target_box.min[j];
        if r > 0.0 {
            r
        } else {
            1.0
        }
    }

    pub fn scale_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| (v - self.target_box.min[j]) / self.range(j))
            .collect()
    }

    pub fn descale_target(&self, y: &[f64]) -> Vec<f64> {
        y.iter()
            .enumerate()
            .map(|(j, v)| self.target_box.min[j] + v * self.range(j))
            .collect()
    }

    /// Network output on an already normalised input, in scaled target units.
    pub fn forward_normalized(&self, xn: &[f64]) -> Vec<f64> {
        let mut a = xn.to_vec();
        let layers = self.weights.len();
        for l in 0..layers {
            let n_in = self.dims[l];
            let w = &self.weights[l];
            let mut z = self.biases[l].clone();
            for (o, zo) in z.iter_mut().enumerate() {
                let row = &w[o * n_in..(o + 1) * n_in];
                let mut s = 0.0;
                for i in 0..n_in {
                    s += row[i] * a[i];
                }
                *zo += s;
                if l + 1 < layers && *zo < 0.0 {
                    *zo = 0.0;
                }
            }
            a = z;
        }
        a
    }

    /// Prediction in physical target units.
    pub fn forward(&self, x: &[f64]) -> Result<Vec<f64>> {
        if x.len() != self.d_in() {
            return Err(NeuralError::Dimension {
                expected: self.d_in(),
                found: x.len(),
            });
        }
        Ok(self.descale_target(&self.forward_normalized(&self.normalize_input(x))))
    }

    pub fn forward_batch(&self, xs: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
        xs.iter().map(|x| self.forward(x)).collect()
    }

    pub fn params_flat(&self) -> Vec<f64> {
        let mut out = Vec::with_capacity(self.param_count());
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }

    pub fn set_params_flat(&mut self, p: &[f64]) -> Result<()> {
        if p.len() != self.param_count() {
            return Err(NeuralError::Dimension {
                expected: self.param_count(),
                found: p.len(),
            });
        }
        let mut k = 0;
        for (w, b) in self.weights.iter_mut().zip(self.biases.iter_mut()) {
            let (nw, nb) = (w.len(), b.len());
            w.copy_from_slice(&p[k..k + nw]);
            k += nw;
            b.copy_from_slice(&p[k..k + nb]);
            k += nb;
        }
        Ok(())
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string(self).expect("model serializes")
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let value: serde_json::Value = serde_json::from_str(text).map_err(|e| NeuralError::Format(e.to_string()))?;
        let version = value
            .get("version")
            .and_then(|v| v.as_u64())
            .ok_or_else(|| NeuralError::Format("missing version field".into()))?;
        if version != MODEL_VERSION as u64 {
            return Err(NeuralError::Version {
                expected: MODEL_VERSION,
                found: version as u32,
            });
        }
        let m: Mlp = serde_json::from_value(value).map_err(|e| NeuralError::Format(e.to_string()))?;
        m.validate()?;
        Ok(m)
    }

    fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(NeuralError::Format(msg.to_string()));
        if self.dims.len() < 2 || self.weights.len() != self.dims.len() - 1 || self.biases.len() != self.weights.len() {
            return bad("layer count does not match dims");
        }
        for l in 0..self.weights.len() {
            if self.weights[l].len() != self.dims[l] * self.dims[l + 1] || self.biases[l].len() != self.dims[l + 1] {
                return bad("layer shape does not match dims");
            }
        }
        if self.input_stats.mean.len() != self.d_in()
            || self.input_stats.std.len() != self.d_in()
            || self.target_box.min.len() != self.d_out()
            || self.target_box.max.len() != self.d_out()
        {
            return bad("scaling statistics do not match dims");
        }
        Ok(())
    }
}

pub fn save_model(m: &Mlp, path: &Path) -> Result<()> {
    let tmp = path.with_extension("json.tmp");
    std::fs::write(&tmp, m.to_json())?;
    std::fs::rename(&tmp, path)?;
    Ok(())
}

pub fn load_model(path: &Path) -> Result<Mlp> {
    Mlp::from_json(&std::fs::read_to_string(path)?)
}

/// Gradients with the same layout as the network parameters.
#[derive(Debug, Clone, PartialEq)]
pub struct Gradients {
    pub weights: Vec<Vec<f64>>,
    pub biases: Vec<Vec<f64>>,
}

impl Gradients {
    fn zeros(m: &Mlp) -> Self {
        Self {
            weights: m.weights.iter().map(|w| vec![0.0; w.len()]).collect(),
            biases: m.biases.iter().map(|b| vec![0.0; b.len()]).collect(),
        }
    }

    pub fn flat(&self) -> Vec<f64> {
        let mut out = Vec::new();
        for (w, b) in self.weights.iter().zip(&self.biases) {
            out.extend_from_slice(w);
            out.extend_from_slice(b);
        }
        out
    }
}

/// Training rows already mapped to network units.
struct Prepared {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

impl Prepared {
    fn new(m: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<Self> {
        check_rows(inputs, m.d_in())?;
        check_rows(targets, m.d_out())?;
        if inputs.len() != targets.len() {
            return Err(NeuralError::Dimension {
                expected: inputs.len(),
                found: targets.len(),
            });
        }
        Ok(Self {
            x: inputs.iter().map(|x| m.normalize_input(x)).collect(),
            y: targets.iter().map(|y| m.scale_target(y)).collect(),
        })
    }
}

/// Reusable per-sample activation buffers.
struct Workspace {
    acts: Vec<Vec<f64>>,
    delta: Vec<f64>,
    next: Vec<f64>,
}

impl Workspace {
    fn new(m: &Mlp) -> Self {
        let widest = *m.dims.iter().max().expect("non-empty dims");
        Self {
            acts: m.dims.iter().map(|&d| vec![0.0; d]).collect(),
            delta: vec![0.0; widest],
            next: vec![0.0; widest],
        }
    }
}

/// Adds the gradient of `scale * sum((out - y)^2)` for one sample; returns the
/// squared error sum.
fn accumulate(m: &Mlp, x: &[f64], y: &[f64], scale: f64, ws: &mut Workspace, g: &mut Gradients) -> f64 {
    let layers = m.weights.len();
    ws.acts[0].copy_from_slice(x);
    for l in 0..layers {
        let n_in = m.dims[l];
        let w = &m.weights[l];
        let (prev, rest) = ws.acts.split_at_mut(l + 1);
        let a = &prev[l];
        let out = &mut rest[0];
        for (o, zo) in out.iter_mut().enumerate() {
            let row = &w[o * n_in..(o + 1) * n_in];
            let mut s = m.biases[l][o];
            for i in 0..n_in {
                s += row[i] * a[i];
            }
            *zo = if l + 1 < layers && s < 0.0 { 0.0 } else { s };
        }
    }
    let d_out = m.d_out();
    let mut sq = 0.0;
    for j in 0..d_out {
        let r = ws.acts[layers][j] - y[j];
        sq += r * r;
        ws.delta[j] = 2.0 * scale * r;
    }
    for l in (0..layers).rev() {
        let (n_in, n_out) = (m.dims[l], m.dims[l + 1]);
        let a = &ws.acts[l];
        let gw = &mut g.weights[l];
        let gb = &mut g.biases[l];
        for o in 0..n_out {
            let d = ws.delta[o];
            gb[o] += d;
            if d != 0.0 {
                let row = &mut gw[o * n_in..(o + 1) * n_in];
                for i in 0..n_in {
                    row[i] += d * a[i];
                }
            }
        }
        if l > 0 {
            let w = &m.weights[l];
            for i in 0..n_in {
                ws.next[i] = 0.0;
            }
            for o in 0..n_out {
                let d = ws.delta[o];
                if d != 0.0 {
                    let row = &w[o * n_in..(o + 1) * n_in];
                    for i in 0..n_in {
                        ws.next[i] += row[i] * d;
                    }
                }
            }
            for i in 0..n_in {
                ws.delta[i] = if a[i] > 0.0 { ws.next[i] } else { 0.0 };
            }
        }
    }
    sq
}

fn batch_grad(m: &Mlp, data: &Prepared, idx: &[usize], ws: &mut Workspace) -> (f64, Gradients) {
    let mut g = Gradients::zeros(m);
    let scale = 1.0 / (idx.len() * m.d_out()) as f64;
    let mut sq = 0.0;
    for &i in idx {
        sq += accumulate(m, &data.x[i], &data.y[i], scale, ws, &mut g);
    }
    (sq * scale, g)
}

/// Mean squared error on scaled targets and its exact gradient for a batch
/// given in physical units.
pub fn backprop_grad(m: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<(f64, Gradients)> {
    let data = Prepared::new(m, inputs, targets)?;
    let idx: Vec<usize> = (0..data.x.len()).collect();
    Ok(batch_grad(m, &data, &idx, &mut Workspace::new(m)))
}

/// Mean squared error on scaled targets.
pub fn batch_loss(m: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let data = Prepared::new(m, inputs, targets)?;
    Ok(prepared_loss(m, &data))
}

fn prepared_loss(m: &Mlp, data: &Prepared) -> f64 {
    let mut sq = 0.0;
    for (x, y) in data.x.iter().zip(&data.y) {
        let out = m.forward_normalized(x);
        sq += out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
    }
    sq / (data.x.len() * m.d_out()) as f64
}

/// Mean absolute percentage error `(1/N) sum |T - P| / |T|`.
pub fn mape(targets: &[f64], predictions: &[f64]) -> Result<f64> {
    if targets.len() != predictions.len() {
        return Err(NeuralError::Dimension {
            expected: targets.len(),
            found: predictions.len(),
        });
    }
    if targets.is_empty() {
        return Err(NeuralError::Empty);
    }
    let mut s = 0.0;
    for (i, (t, p)) in targets.iter().zip(predictions).enumerate() {
        if *t == 0.0 {
            return Err(NeuralError::ZeroTarget(i));
        }
        s += ((t - p) / t).abs();
    }
    Ok(s / targets.len() as f64)
}

/// MAPE of each output column over a set of rows, skipping zero targets.
pub fn column_mape(targets: &[Vec<f64>], predictions: &[Vec<f64>]) -> Vec<f64> {
    let d = targets.first().map_or(0, |r| r.len());
    (0..d)
        .map(|j| {
            let mut s = 0.0;
            let mut n = 0usize;
            for (t, p) in targets.iter().zip(predictions) {
                if t[j] != 0.0 {
                    s += ((t[j] - p[j]) / t[j]).abs();
                    n += 1;
                }
            }
            if n == 0 {
                0.0
            } else {
                s / n as f64
            }
        })
        .collect()
}

/// Mean of [`column_mape`] over columns.
pub fn mean_mape(targets: &[Vec<f64>], predictions: &[Vec<f64>]) -> f64 {
    let cols = column_mape(targets, predictions);
    cols.iter().sum::<f64>() / cols.len().max(1) as f64
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub lr: f64,
    pub batch_size: usize,
    pub max_epochs: usize,
    /// Epochs without a new best validation MAPE before stopping; 0 disables.
    pub patience: usize,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            lr: 1e-4,
            batch_size: 64,
            max_epochs: 2000,
            patience: 200,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub train_mape: f64,
    pub val_mape: f64,
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochStats>,
    pub best_epoch: usize,
    pub best_val_mape: f64,
}

/// Inputs and targets in physical units.
#[derive(Debug, Clone, Copy)]
pub struct Split<'a> {
    pub inputs: &'a [Vec<f64>],
    pub targets: &'a [Vec<f64>],
}

/// Scaled-target MSE and physical-unit MAPE from one pass over a split.
fn evaluate(m: &Mlp, data: &Prepared, split: &Split<'_>) -> (f64, f64) {
    let mut sq = 0.0;
    let mut preds = Vec::with_capacity(data.x.len());
    for (x, y) in data.x.iter().zip(&data.y) {
        let out = m.forward_normalized(x);
        sq += out.iter().zip(y).map(|(o, t)| (o - t).powi(2)).sum::<f64>();
        preds.push(m.descale_target(&out));
    }
    (sq / (data.x.len() * m.d_out()) as f64, mean_mape(split.targets, &preds))
}

/// Adam on mini-batch MSE, keeping the weights with the best validation
/// MAPE. The scaling stored in `m` is used as is. With an empty validation
/// split the training split is monitored instead.
pub fn train_adam(m: &Mlp, train: Split<'_>, val: Split<'_>, cfg: &TrainConfig) -> Result<(Mlp, History)> {
    if !(cfg.lr > 0.0) || cfg.batch_size == 0 {
        return Err(NeuralError::Config(format!(
            "learning rate {} and batch size {} must be positive",
            cfg.lr, cfg.batch_size
        )));
    }
    let data = Prepared::new(m, train.inputs, train.targets)?;
    let monitor = if val.inputs.is_empty() { train } else { val };
    let val_data = Prepared::new(m, monitor.inputs, monitor.targets)?;
    let mut model = m.clone();
    let mut history = History {
        epochs: Vec::new(),
        best_epoch: 0,
        best_val_mape: f64::INFINITY,
    };
    if cfg.max_epochs == 0 {
        history.best_val_mape = evaluate(&model, &val_data, &monitor).1;
        return Ok((model, history));
    }
    let (b1, b2, eps): (f64, f64, f64) = (0.9, 0.999, 1e-8);
    let n_params = model.param_count();
    let mut mom = vec![0.0; n_params];
    let mut vel = vec![0.0; n_params];
    let mut step = 0i32;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut order: Vec<usize> = (0..data.x.len()).collect();
    let mut ws = Workspace::new(&model);
    let mut best = model.clone();
    let mut since_best = 0usize;
    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        for chunk in order.chunks(cfg.batch_size) {
            let (loss, g) = batch_grad(&model, &data, chunk, &mut ws);
            if !loss.is_finite() {
                return Err(NeuralError::NonFinite { epoch });
            }
            step += 1;
            let c1 = 1.0 - b1.powi(step);
            let c2 = 1.0 - b2.powi(step);
            let mut k = 0;
            for l in 0..model.weights.len() {
                for (p, gp) in model.weights[l]
                    .iter_mut()
                    .zip(&g.weights[l])
                    .chain(model.biases[l].iter_mut().zip(&g.biases[l]))
                {
                    mom[k] = b1 * mom[k] + (1.0 - b1) * gp;
                    vel[k] = b2 * vel[k] + (1.0 - b2) * gp * gp;
                    *p -= cfg.lr * (mom[k] / c1) / ((vel[k] / c2).sqrt() + eps);
                    k += 1;
                }
            }
        }
        let (val_loss, val_mape) = evaluate(&model, &val_data, &monitor);
        if !val_loss.is_finite() {
            return Err(NeuralError::NonFinite { epoch });
        }
        let (train_loss, train_mape) = if std::ptr::eq(monitor.inputs, train.inputs) {
            (val_loss, val_mape)
        } else {
            evaluate(&model, &data, &train)
        };
        history.epochs.push(EpochStats {
            epoch,
            train_loss,
            val_loss,
            train_mape,
            val_mape,
        });
        if val_mape < history.best_val_mape {
            history.best_val_mape = val_mape;
            history.best_epoch = epoch;
            best.clone_from(&model);
            since_best = 0;
        } else {
            since_best += 1;
            if cfg.patience > 0 && since_best >= cfg.patience {
                break;
            }
        }
    }
    Ok((best, history))
}

/// Deterministic split of `0..n` into training and validation indices.
pub fn split_indices(n: usize, n_val: usize, seed: u64) -> (Vec<usize>, Vec<usize>) {
    let mut idx: Vec<usize> = (0..n).collect();
    idx.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = n_val.min(n);
    let val = idx[n - n_val..].to_vec();
    idx.truncate(n - n_val);
    (idx, val)
}
