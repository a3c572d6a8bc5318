//! Multi-fidelity calibration pipeline.
//!
//! A base network maps low-fidelity imprint features to targets. A transfer
//! head takes high-fidelity features together with the base prediction `Y1`.
//! The committee combines `Y1`, a simulation-only transfer `Y2` and three
//! members `Y3` trained at the best-scoring `(nu, mu)` settings on merged
//! simulated and experimental data:
//!
//! `Y4 = a1 Y1 + a2 Y2 + (1 - a1 - a2) Ybar3`, with `a1 = sig(b1)`,
//! `a2 = (1 - a1) sig(b2)` and `Ybar3` a softmax-weighted member mean.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{self, ConstitutiveError, MaterialKind, MaterialSpec};
use crate::neural::{self, column_mape, History, Mlp, NeuralError, Split, TrainConfig};
use crate::numopt::{self, GradientSource, OptOptions, OptProblem};
use crate::profile::{self, StripMode};
use crate::surrogate::{self, Dataset, Fidelity, SimRecord, SimSetting, SurrogateError};

#[derive(Debug, Error)]
pub enum MfnnError {
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
}

pub type Result<T> = std::result::Result<T, MfnnError>;

/// Number of leading record features used by the pipeline: nine pile-up
/// features and hardness, the quantities available from a measured imprint.
pub const PIPELINE_FEATURES: usize = 10;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum TargetSet {
    /// `[E, sigma_y, n, K]` of Ludwik materials.
    Ludwik,
    /// `[E, sigma_y, sigma_1..sigma_16]` at the pointwise strain grid.
    Pointwise,
}

impl std::str::FromStr for TargetSet {
    type Err = MfnnError;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "ludwik" => Ok(TargetSet::Ludwik),
            "pointwise" => Ok(TargetSet::Pointwise),
            _ => Err(MfnnError::Input(format!("unknown target set '{s}'"))),
        }
    }
}

impl TargetSet {
    pub fn dim(self) -> usize {
        match self {
            TargetSet::Ludwik => 4,
            TargetSet::Pointwise => 18,
        }
    }

    pub fn names(self) -> Vec<String> {
        match self {
            TargetSet::Ludwik => ["E", "sigma_y", "n", "K"].map(String::from).to_vec(),
            TargetSet::Pointwise => {
                let mut v = vec!["E".to_string(), "sigma_y".to_string()];
                v.extend((1..=16).map(|i| format!("sigma_{i}")));
                v
            }
        }
    }
}

pub fn targets_for(spec: &MaterialSpec, set: TargetSet) -> Result<Vec<f64>> {
    match set {
        TargetSet::Ludwik => match spec {
            MaterialSpec::Ludwik(p) => Ok(vec![p.e, p.sigma_y, p.n, p.k]),
            _ => Err(MfnnError::Input(format!("Ludwik targets requested for a {} material", spec.kind()))),
        },
        TargetSet::Pointwise => {
            let (e, sy) = (spec.elastic_modulus(), spec.yield_stress());
            let grid = constitutive::pointwise_strain_grid(e, sy)?;
            let curve = surrogate::material_curve(spec)?;
            let mut v = vec![e, sy];
            v.extend(grid.iter().map(|s| curve.stress_at(*s)));
            Ok(v)
        }
    }
}

/// Pipeline inputs and targets of a dataset.
pub fn rows(ds: &Dataset, set: TargetSet) -> Result<(Vec<Vec<f64>>, Vec<Vec<f64>>)> {
    let mut x = Vec::with_capacity(ds.len());
    let mut y = Vec::with_capacity(ds.len());
    for r in &ds.records {
        if r.features.len() < PIPELINE_FEATURES {
            return Err(MfnnError::Input(format!("record {} has {} features", r.id, r.features.len())));
        }
        x.push(r.features[..PIPELINE_FEATURES].to_vec());
        y.push(targets_for(&r.spec, set)?);
    }
    Ok((x, y))
}

fn subset(v: &[Vec<f64>], idx: &[usize]) -> Vec<Vec<f64>> {
    idx.iter().map(|&i| v[i].clone()).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainedModel {
    pub mlp: Mlp,
    pub val_mape: Vec<f64>,
    pub history: History,
}

/// Inverse model from low-fidelity features; the last `n_val` records of a
/// seeded shuffle are held out.
pub fn train_base(lo: &Dataset, set: TargetSet, n_val: usize, cfg: &TrainConfig) -> Result<TrainedModel> {
    if lo.records.iter().any(|r| r.fidelity != Fidelity::Lo2d) {
        return Err(MfnnError::Input("base model needs LO2D records".into()));
    }
    if lo.len() <= n_val {
        return Err(MfnnError::Input(format!("{} records cannot hold out {n_val}", lo.len())));
    }
    let (x, y) = rows(lo, set)?;
    let (tr, va) = neural::split_indices(x.len(), n_val, cfg.seed);
    let (tx, ty, vx, vy) = (subset(&x, &tr), subset(&y, &tr), subset(&x, &va), subset(&y, &va));
    let init = Mlp::for_data(&tx, &ty, cfg.seed)?;
    let (mlp, history) = neural::train_adam(
        &init,
        Split {
            inputs: &tx,
            targets: &ty,
        },
        Split {
            inputs: &vx,
            targets: &vy,
        },
        cfg,
    )?;
    let val_mape = column_mape(&vy, &mlp.forward_batch(&vx)?);
    Ok(TrainedModel { mlp, val_mape, history })
}

/// Transfer head on `[features, Y1]`, or on the features alone when `base`
/// is absent (the ablation without the low-fidelity prediction).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferModel {
    pub base: Option<Mlp>,
    pub head: Mlp,
}

impl TransferModel {
    pub fn head_input(&self, features: &[f64]) -> Result<Vec<f64>> {
        let f = &features[..PIPELINE_FEATURES.min(features.len())];
        let mut x = f.to_vec();
        if let Some(base) = &self.base {
            x.extend(base.forward(f)?);
        }
        Ok(x)
    }

    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        Ok(self.head.forward(&self.head_input(features)?)?)
    }
}

fn augment(base: Option<&Mlp>, x: &[Vec<f64>]) -> Result<Vec<Vec<f64>>> {
    x.iter()
        .map(|f| {
            let mut v = f.clone();
            if let Some(b) = base {
                v.extend(b.forward(f)?);
            }
            Ok(v)
        })
        .collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TransferReport {
    pub model: TransferModel,
    /// Per-target MAPE on the validation records.
    pub val_mape: Vec<f64>,
    pub history: History,
}

impl TransferReport {
    pub fn mean_val_mape(&self) -> f64 {
        self.val_mape.iter().sum::<f64>() / self.val_mape.len().max(1) as f64
    }
}

/// Trains a transfer head on high-fidelity records, optionally merged with
/// experimental records. `val` drives early stopping and the reported error;
/// with no validation records the training set is monitored.
pub fn transfer_hi(
    base: Option<&Mlp>,
    hi: &Dataset,
    exp: Option<&Dataset>,
    val: Option<&Dataset>,
    set: TargetSet,
    cfg: &TrainConfig,
) -> Result<TransferReport> {
    if hi.is_empty() {
        return Err(MfnnError::Input("transfer needs high-fidelity records".into()));
    }
    let (mut x, mut y) = rows(hi, set)?;
    if let Some(e) = exp {
        let (ex, ey) = rows(e, set)?;
        x.extend(ex);
        y.extend(ey);
    }
    let ax = augment(base, &x)?;
    let (vx, vy) = match val {
        Some(v) if !v.is_empty() => {
            let (vx, vy) = rows(v, set)?;
            (augment(base, &vx)?, vy)
        }
        _ => (Vec::new(), Vec::new()),
    };
    let init = Mlp::for_data(&ax, &y, cfg.seed)?;
    let (head, history) = neural::train_adam(
        &init,
        Split {
            inputs: &ax,
            targets: &y,
        },
        Split {
            inputs: &vx,
            targets: &vy,
        },
        cfg,
    )?;
    let (rx, ry) = if vx.is_empty() { (&ax, &y) } else { (&vx, &vy) };
    let val_mape = column_mape(ry, &head.forward_batch(rx)?);
    Ok(TransferReport {
        model: TransferModel {
            base: base.cloned(),
            head,
        },
        val_mape,
        history,
    })
}

/// A calibration material: its constitutive law and replicate measurements.
#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationMaterial {
    pub spec: MaterialSpec,
    pub features: Vec<Vec<f64>>,
}

/// Groups experimental records by material, keeping at most `replicates`
/// per material, for the first `materials` materials.
pub fn calibration_materials(exp: &Dataset, materials: usize, replicates: usize) -> Vec<CalibrationMaterial> {
    let mut out: Vec<(usize, CalibrationMaterial)> = Vec::new();
    for r in &exp.records {
        let m = r.material.unwrap_or(r.id);
        match out.iter_mut().find(|(id, _)| *id == m) {
            Some((_, c)) => {
                if c.features.len() < replicates {
                    c.features.push(r.features[..PIPELINE_FEATURES].to_vec());
                }
            }
            None => {
                if out.len() < materials {
                    out.push((
                        m,
                        CalibrationMaterial {
                            spec: r.spec.clone(),
                            features: vec![r.features[..PIPELINE_FEATURES].to_vec()],
                        },
                    ));
                }
            }
        }
    }
    out.into_iter().map(|(_, c)| c).collect()
}

/// Experimental records of the selected materials and replicates.
pub fn select_experiments(exp: &Dataset, materials: &[usize], replicates: usize) -> Dataset {
    let mut counts = std::collections::BTreeMap::new();
    let records = exp
        .records
        .iter()
        .filter(|r| {
            let m = r.material.unwrap_or(r.id);
            if !materials.contains(&m) {
                return false;
            }
            let c = counts.entry(m).or_insert(0usize);
            *c += 1;
            *c <= replicates
        })
        .cloned()
        .collect();
    Dataset { records, skipped: 0 }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ScanEntry {
    pub nu: f64,
    pub mu: f64,
    pub score: f64,
}

pub const NU_GRID: [f64; 3] = [0.2, 0.3, 0.4];
pub const MU_GRID: [f64; 3] = [0.05, 0.15, 0.25];

/// Scores each `(nu, mu)` by the summed relative difference between the
/// simulated 3D features of the calibration materials and their mean
/// measured features; sorted best first.
pub fn grid_gap_scan(
    calibration: &[CalibrationMaterial],
    nu_grid: &[f64],
    mu_grid: &[f64],
    strips: StripMode,
) -> Result<Vec<ScanEntry>> {
    if calibration.is_empty() || calibration.iter().any(|c| c.features.is_empty()) {
        return Err(MfnnError::Input("grid scan needs measured calibration materials".into()));
    }
    let means: Vec<Vec<f64>> = calibration
        .iter()
        .map(|c| {
            let n = c.features.len() as f64;
            (0..PIPELINE_FEATURES)
                .map(|j| c.features.iter().map(|f| f[j]).sum::<f64>() / n)
                .collect()
        })
        .collect();
    let mut settings = Vec::new();
    for &nu in nu_grid {
        for &mu in mu_grid {
            settings.push((nu, mu));
        }
    }
    let mut out: Vec<ScanEntry> = settings
        .par_iter()
        .map(|&(nu, mu)| {
            let setting = SimSetting::hi(nu, mu);
            let mut score = 0.0;
            for (c, mean) in calibration.iter().zip(&means) {
                let (f, _) = surrogate::simulate_features(&c.spec, &setting, strips)?;
                for j in 0..PIPELINE_FEATURES {
                    if mean[j] != 0.0 {
                        score += ((f.0[j] - mean[j]) / mean[j]).abs();
                    }
                }
            }
            Ok(ScanEntry { nu, mu, score })
        })
        .collect::<Result<_>>()?;
    out.sort_by(|a, b| a.score.total_cmp(&b.score));
    Ok(out)
}

pub fn sigmoid(x: f64) -> f64 {
    1.0 / (1.0 + (-x).exp())
}

fn softmax(z: &[f64]) -> Vec<f64> {
    let m = z.iter().fold(f64::NEG_INFINITY, |a, b| a.max(*b));
    let e: Vec<f64> = z.iter().map(|v| (v - m).exp()).collect();
    let s: f64 = e.iter().sum();
    e.iter().map(|v| v / s).collect()
}

/// `a1 Y1 + a2 Y2 + (1 - a1 - a2) Y3`, componentwise.
pub fn combine(alpha1: f64, alpha2: f64, y1: &[f64], y2: &[f64], y3: &[f64]) -> Vec<f64> {
    let a3 = 1.0 - alpha1 - alpha2;
    (0..y1.len())
        .map(|j| alpha1 * y1[j] + alpha2 * y2[j] + a3 * y3[j])
        .collect()
}

/// Member outputs averaged with the given weights.
pub fn member_mean(weights: &[f64], outputs: &[Vec<f64>]) -> Vec<f64> {
    let d = outputs[0].len();
    (0..d)
        .map(|j| weights.iter().zip(outputs).map(|(w, o)| w * o[j]).sum())
        .collect()
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MemberSetting {
    pub nu: f64,
    pub mu: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CommitteePredictor {
    pub target_set: TargetSet,
    pub base: Mlp,
    pub sim_only: TransferModel,
    pub members: Vec<TransferModel>,
    pub settings: Vec<MemberSetting>,
    /// Unconstrained committee parameters `b1`, `b2`.
    pub a1: f64,
    pub a2: f64,
    pub member_logits: Vec<f64>,
    /// Loss of the fitted combination on the calibration records.
    pub fit_loss: f64,
}

impl CommitteePredictor {
    pub fn alpha1(&self) -> f64 {
        sigmoid(self.a1)
    }

    pub fn alpha2(&self) -> f64 {
        (1.0 - self.alpha1()) * sigmoid(self.a2)
    }

    pub fn member_weights(&self) -> Vec<f64> {
        softmax(&self.member_logits)
    }

    /// `(Y1, Y2, member outputs)` for one feature vector.
    pub fn sources(&self, features: &[f64]) -> Result<(Vec<f64>, Vec<f64>, Vec<Vec<f64>>)> {
        let f = &features[..PIPELINE_FEATURES.min(features.len())];
        let y1 = self.base.forward(f)?;
        let y2 = self.sim_only.predict(f)?;
        let y3 = self.members.iter().map(|m| m.predict(f)).collect::<Result<Vec<_>>>()?;
        Ok((y1, y2, y3))
    }

    pub fn predict(&self, features: &[f64]) -> Result<Vec<f64>> {
        let (y1, y2, y3) = self.sources(features)?;
        let ybar = member_mean(&self.member_weights(), &y3);
        Ok(combine(self.alpha1(), self.alpha2(), &y1, &y2, &ybar))
    }

    /// Predicted stress-strain polyline.
    pub fn predict_curve(&self, features: &[f64]) -> Result<Vec<(f64, f64)>> {
        predicted_polyline(self.target_set, &self.predict(features)?)
    }
}

/// Scaled-space squared error of the combination over prepared sources.
struct CommitteeData {
    y1: Vec<Vec<f64>>,
    y2: Vec<Vec<f64>>,
    y3: Vec<Vec<Vec<f64>>>,
    truth: Vec<Vec<f64>>,
    scale: Vec<f64>,
}

impl CommitteeData {
    fn loss(&self, p: &[f64]) -> f64 {
        let a1 = sigmoid(p[0]);
        let a2 = (1.0 - a1) * sigmoid(p[1]);
        let w = softmax(&p[2..]);
        let mut s = 0.0;
        let mut n = 0usize;
        for i in 0..self.truth.len() {
            let ybar = member_mean(&w, &self.y3[i]);
            let y4 = combine(a1, a2, &self.y1[i], &self.y2[i], &ybar);
            for j in 0..y4.len() {
                s += ((y4[j] - self.truth[i][j]) / self.scale[j]).powi(2);
                n += 1;
            }
        }
        s / n as f64
    }
}

/// Fits `(b1, b2, member logits)` by BFGS on the mean squared scaled target
/// error over the calibration records; falls back to equal weights if the
/// optimiser fails.
pub fn fit_committee(
    base: &Mlp,
    sim_only: &TransferModel,
    members: Vec<TransferModel>,
    settings: Vec<MemberSetting>,
    calibration: &Dataset,
    set: TargetSet,
) -> Result<CommitteePredictor> {
    if members.is_empty() || calibration.is_empty() {
        return Err(MfnnError::Input("committee needs members and calibration records".into()));
    }
    let (x, truth) = rows(calibration, set)?;
    let mut cp = CommitteePredictor {
        target_set: set,
        base: base.clone(),
        sim_only: sim_only.clone(),
        member_logits: vec![0.0; members.len()],
        members,
        settings,
        a1: 0.0,
        a2: 0.0,
        fit_loss: f64::NAN,
    };
    let mut data = CommitteeData {
        y1: Vec::new(),
        y2: Vec::new(),
        y3: Vec::new(),
        truth,
        scale: (0..base.d_out())
            .map(|j| {
                let r = base.target_box.max[j] - base.target_box.min[j];
                if r > 0.0 {
                    r
                } else {
                    1.0
                }
            })
            .collect(),
    };
    for f in &x {
        let (y1, y2, y3) = cp.sources(f)?;
        data.y1.push(y1);
        data.y2.push(y2);
        data.y3.push(y3);
    }
    let objective = |p: &[f64]| data.loss(p);
    let x0 = vec![0.0; 2 + cp.members.len()];
    let problem = OptProblem {
        objective: &objective,
        gradient: GradientSource::FiniteDifference { eps: 1e-6 },
        bounds: None,
        x0: x0.clone(),
    };
    let opts = OptOptions {
        tol_grad: 1e-10,
        max_iter: 500,
        f_target: None,
    };
    match numopt::bfgs_minimize(&problem, &opts) {
        Ok(r) if r.f_best.is_finite() && r.x_best.iter().all(|v| v.is_finite()) => {
            cp.a1 = r.x_best[0];
            cp.a2 = r.x_best[1];
            cp.member_logits = r.x_best[2..].to_vec();
            cp.fit_loss = r.f_best;
        }
        other => {
            log::warn!("committee fit failed ({other:?}); using equal weights");
            // a1 = ln(1/2) makes alpha1 = alpha2 = alpha3 = 1/3
            cp.a1 = -(2.0f64).ln();
            cp.a2 = 0.0;
            cp.fit_loss = data.loss(&[cp.a1, 0.0].into_iter().chain(cp.member_logits.clone()).collect::<Vec<_>>());
        }
    }
    Ok(cp)
}

/// Loss of the committee restricted to a single source, for comparison with
/// the fitted combination on the calibration records.
pub fn single_source_losses(cp: &CommitteePredictor, calibration: &Dataset) -> Result<Vec<f64>> {
    let (x, truth) = rows(calibration, cp.target_set)?;
    let scale: Vec<f64> = (0..cp.base.d_out())
        .map(|j| {
            let r = cp.base.target_box.max[j] - cp.base.target_box.min[j];
            if r > 0.0 {
                r
            } else {
                1.0
            }
        })
        .collect();
    let mut losses = vec![0.0; 2 + cp.members.len()];
    for (f, t) in x.iter().zip(&truth) {
        let (y1, y2, y3) = cp.sources(f)?;
        let all: Vec<&Vec<f64>> = [&y1, &y2].into_iter().chain(y3.iter()).collect();
        for (k, y) in all.iter().enumerate() {
            losses[k] += y
                .iter()
                .zip(t)
                .zip(&scale)
                .map(|((p, q), s)| ((p - q) / s).powi(2))
                .sum::<f64>();
        }
    }
    let n = (x.len() * cp.base.d_out()) as f64;
    Ok(losses.into_iter().map(|l| l / n).collect())
}

/// Limits applied to predicted elastic constants before a curve is drawn;
/// an inadmissible prediction still yields a curve, and a large error.
pub const MIN_MODULUS: f64 = 1.0;
pub const MIN_YIELD: f64 = 1e-3;
pub const MAX_YIELD_STRAIN: f64 = 0.1;

fn admissible_elastic(e: f64, sigma_y: f64) -> (f64, f64) {
    let e = e.max(MIN_MODULUS);
    (e, sigma_y.max(MIN_YIELD).min(MAX_YIELD_STRAIN * e))
}

fn check_finite(y: &[f64]) -> Result<()> {
    if y.iter().all(|v| v.is_finite()) {
        Ok(())
    } else {
        Err(MfnnError::Input(format!("prediction {y:?} is not finite")))
    }
}

/// Stress-strain polyline of a prediction. Pointwise targets give the origin,
/// the yield point and the remaining 15 grid points with stresses clamped to
/// be non-negative and non-decreasing. Ludwik targets are tabulated.
pub fn predicted_polyline(set: TargetSet, y: &[f64]) -> Result<Vec<(f64, f64)>> {
    match set {
        TargetSet::Pointwise => {
            check_finite(y)?;
            let (e, sy) = admissible_elastic(y[0], y[1]);
            let grid = constitutive::pointwise_strain_grid(e, sy)?;
            let mut pts = vec![(0.0, 0.0), (grid[0], sy)];
            let mut running = sy;
            for (s, v) in grid.iter().zip(&y[2..]).skip(1) {
                running = running.max(v.max(0.0));
                pts.push((*s, running));
            }
            Ok(pts)
        }
        TargetSet::Ludwik => {
            check_finite(y)?;
            let (e, sigma_y) = admissible_elastic(y[0], y[1]);
            let p = constitutive::LudwikParams {
                e,
                sigma_y,
                n: y[2].clamp(1e-3, 1.0),
                k: y[3].max(1e-6),
            };
            let c = constitutive::to_curve(&MaterialSpec::Ludwik(p), 0.3, 300)?;
            Ok(c.points)
        }
    }
}

fn interpolate(points: &[(f64, f64)], x: f64) -> f64 {
    if x <= points[0].0 {
        return points[0].1;
    }
    for w in points.windows(2) {
        if x <= w[1].0 {
            let t = (x - w[0].0) / (w[1].0 - w[0].0);
            return w[0].1 + t * (w[1].1 - w[0].1);
        }
    }
    let n = points.len();
    let (a, b) = (points[n - 2], points[n - 1]);
    b.1 + (x - b.0) * (b.1 - a.1) / (b.0 - a.0)
}

/// Mean relative stress error of a predicted polyline against the true
/// material at the 16 pointwise strains of the true material.
pub fn stress_error(truth: &MaterialSpec, predicted: &[(f64, f64)]) -> Result<f64> {
    let grid = constitutive::pointwise_strain_grid(truth.elastic_modulus(), truth.yield_stress())?;
    let curve = surrogate::material_curve(truth)?;
    let mut s = 0.0;
    for e in grid {
        let t = curve.stress_at(e);
        s += ((interpolate(predicted, e) - t) / t).abs();
    }
    Ok(s / grid.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MaterialError {
    pub material: usize,
    pub replicates: usize,
    pub error: f64,
}

/// Per-material error averaged over replicates, for the given records.
pub fn evaluate_materials(cp: &CommitteePredictor, records: &[SimRecord]) -> Result<Vec<MaterialError>> {
    let mut out: Vec<MaterialError> = Vec::new();
    for r in records {
        let m = r.material.unwrap_or(r.id);
        let err = stress_error(&r.spec, &cp.predict_curve(&r.features)?)?;
        match out.iter_mut().find(|e| e.material == m) {
            Some(e) => {
                e.error += err;
                e.replicates += 1;
            }
            None => out.push(MaterialError {
                material: m,
                replicates: 1,
                error: err,
            }),
        }
    }
    for e in &mut out {
        e.error /= e.replicates as f64;
    }
    Ok(out)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CalibrationConfig {
    pub target_set: TargetSet,
    pub calibration_materials: usize,
    pub replicates: usize,
    /// High-fidelity records per transfer model.
    pub hi_count: usize,
    pub hi_kinds: Vec<(MaterialKind, usize)>,
    pub strips: StripMode,
    pub head: TrainConfig,
    pub seed: u64,
}

impl Default for CalibrationConfig {
    fn default() -> Self {
        Self {
            target_set: TargetSet::Ludwik,
            calibration_materials: 3,
            replicates: 4,
            hi_count: 50,
            hi_kinds: vec![(MaterialKind::Ludwik, 50)],
            strips: StripMode::Axes,
            head: TrainConfig::default(),
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct CalibrationOutcome {
    pub committee: CommitteePredictor,
    pub scan: Vec<ScanEntry>,
    pub calibration: Dataset,
}

/// Grid scan, simulation-only transfer at the default setting, three member
/// transfers at the best settings with the calibration data merged in, and
/// the committee fit on the same calibration data.
pub fn calibrate(base: &Mlp, exp: &Dataset, cfg: &CalibrationConfig) -> Result<CalibrationOutcome> {
    let materials: Vec<usize> = {
        let mut ids: Vec<usize> = Vec::new();
        for r in &exp.records {
            let m = r.material.unwrap_or(r.id);
            if !ids.contains(&m) {
                ids.push(m);
            }
        }
        ids.into_iter().take(cfg.calibration_materials).collect()
    };
    if materials.is_empty() {
        return Err(MfnnError::Input("no experimental materials for calibration".into()));
    }
    let calibration = select_experiments(exp, &materials, cfg.replicates);
    let cal_materials = calibration_materials(&calibration, materials.len(), cfg.replicates);
    let scan = grid_gap_scan(&cal_materials, &NU_GRID, &MU_GRID, cfg.strips)?;

    let hi_at = |nu: f64, mu: f64, k: u64| -> Result<Dataset> {
        let setting = SimSetting::hi(nu, mu);
        Ok(surrogate::gen_dataset(&cfg.hi_kinds, &setting, cfg.seed.wrapping_add(k * 100_000), cfg.strips)?)
    };
    let sim_hi = hi_at(surrogate::DEFAULT_NU, surrogate::DEFAULT_MU, 0)?;
    let sim_only = transfer_hi(Some(base), &sim_hi, None, None, cfg.target_set, &cfg.head)?.model;
    let top: Vec<ScanEntry> = scan.iter().take(3).copied().collect();
    let members: Vec<TransferModel> = top
        .par_iter()
        .enumerate()
        .map(|(k, s)| {
            let hi = hi_at(s.nu, s.mu, k as u64 + 1)?;
            let head_cfg = TrainConfig {
                seed: cfg.head.seed.wrapping_add(k as u64 + 1),
                ..cfg.head.clone()
            };
            Ok(transfer_hi(Some(base), &hi, Some(&calibration), None, cfg.target_set, &head_cfg)?.model)
        })
        .collect::<Result<_>>()?;
    let settings = top.iter().map(|s| MemberSetting { nu: s.nu, mu: s.mu }).collect();
    let committee = fit_committee(base, &sim_only, members, settings, &calibration, cfg.target_set)?;
    Ok(CalibrationOutcome {
        committee,
        scan,
        calibration,
    })
}

/// Mean absolute error in scaled target units (fraction of each target's
/// training range), averaged over targets.
pub fn scaled_mae(m: &Mlp, inputs: &[Vec<f64>], targets: &[Vec<f64>]) -> Result<f64> {
    let preds = m.forward_batch(inputs)?;
    let d = m.d_out();
    let mut s = 0.0;
    for (p, t) in preds.iter().zip(targets) {
        let (ps, ts) = (m.scale_target(p), m.scale_target(t));
        s += ps.iter().zip(&ts).map(|(a, b)| (a - b).abs()).sum::<f64>();
    }
    Ok(s / (preds.len() * d) as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointwiseReport {
    pub model: Mlp,
    pub train_mae: f64,
    pub test_mae: f64,
    pub history: History,
}

/// Pointwise-target base model on a mixed-kind low-fidelity dataset.
pub fn train_pointwise(lo: &Dataset, n_test: usize, cfg: &TrainConfig) -> Result<PointwiseReport> {
    let (x, y) = rows(lo, TargetSet::Pointwise)?;
    if x.len() <= n_test {
        return Err(MfnnError::Input(format!("{} records cannot hold out {n_test}", x.len())));
    }
    let (tr, te) = neural::split_indices(x.len(), n_test, cfg.seed);
    let (tx, ty, vx, vy) = (subset(&x, &tr), subset(&y, &tr), subset(&x, &te), subset(&y, &te));
    let init = Mlp::for_data(&tx, &ty, cfg.seed)?;
    let (model, history) = neural::train_adam(
        &init,
        Split {
            inputs: &tx,
            targets: &ty,
        },
        Split {
            inputs: &vx,
            targets: &vy,
        },
        cfg,
    )?;
    Ok(PointwiseReport {
        train_mae: scaled_mae(&model, &tx, &ty)?,
        test_mae: scaled_mae(&model, &vx, &vy)?,
        model,
        history,
    })
}

/// Mean and spread of the test error across independently seeded restarts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RestartBand {
    pub seeds: Vec<u64>,
    pub test_mae: Vec<f64>,
    pub mean: f64,
    pub min: f64,
    pub max: f64,
}

pub fn pointwise_restarts(lo: &Dataset, n_test: usize, cfg: &TrainConfig, restarts: usize) -> Result<RestartBand> {
    let seeds: Vec<u64> = (0..restarts as u64).map(|k| cfg.seed.wrapping_add(k)).collect();
    let maes: Vec<f64> = seeds
        .par_iter()
        .map(|&s| {
            let c = TrainConfig { seed: s, ..cfg.clone() };
            train_pointwise(lo, n_test, &c).map(|r| r.test_mae)
        })
        .collect::<Result<_>>()?;
    let mean = maes.iter().sum::<f64>() / maes.len().max(1) as f64;
    Ok(RestartBand {
        min: maes.iter().copied().fold(f64::INFINITY, f64::min),
        max: maes.iter().copied().fold(f64::NEG_INFINITY, f64::max),
        seeds,
        test_mae: maes,
        mean,
    })
}

/// Convenience for reports: `(strain, true stress, predicted stress, relative error)`
/// at the pointwise strains of the true material.
pub fn stress_table(truth: &MaterialSpec, predicted: &[(f64, f64)]) -> Result<Vec<(f64, f64, f64, f64)>> {
    let grid = constitutive::pointwise_strain_grid(truth.elastic_modulus(), truth.yield_stress())?;
    let curve = surrogate::material_curve(truth)?;
    Ok(grid
        .iter()
        .map(|&e| {
            let t = curve.stress_at(e);
            let p = interpolate(predicted, e);
            (e, t, p, ((p - t) / t).abs())
        })
        .collect())
}

/// Features of a measured map, as used by the pipeline.
pub fn map_features(map: &profile::HeightMap, hardness: f64, strips: StripMode) -> Result<Vec<f64>> {
    let curve = profile::strip_average_with(map, strips).map_err(SurrogateError::from)?;
    let pf = profile::extract_pileup_features(&curve).map_err(SurrogateError::from)?;
    Ok(profile::assemble_features(&pf, hardness, None).0)
}
