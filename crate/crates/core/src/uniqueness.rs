//! Uniqueness study: an actively trained forward network from Ludwik
//! parameters to imprint features, a quasi-Newton search for "material
//! siblings" whose features nearly coincide with a target's, and the
//! non-unique-ratio curve over a uniform parameter grid.
//!
//! Candidate siblings found on the network are always re-checked with the
//! analytic surrogate, which plays the role of the finite-element oracle.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::constitutive::{LudwikParams, MaterialSpec, LUDWIK_BOX};
use crate::neural::{self, column_mape, Mlp, NeuralError, Split, TrainConfig};
use crate::numopt::{self, Bounds, GradientSource, OptOptions, OptProblem};
use crate::profile::StripMode;
use crate::surrogate::{self, Dataset, SimSetting, SurrogateError};

#[derive(Debug, Error)]
pub enum UniquenessError {
    #[error("zero reference feature at index {0}")]
    ZeroFeature(usize),
    #[error("feature vectors differ in length ({0} vs {1})")]
    Length(usize, usize),
    #[error("unknown feature subset '{0}'")]
    UnknownSubset(String),
    #[error("invalid input: {0}")]
    Input(String),
    #[error(transparent)]
    Neural(#[from] NeuralError),
    #[error(transparent)]
    Surrogate(#[from] SurrogateError),
}

pub type Result<T> = std::result::Result<T, UniquenessError>;

/// `max_i |F_i - Fbar_i| / |F_i|`.
pub fn distinguishing_ratio(f: &[f64], f_bar: &[f64]) -> Result<f64> {
    if f.len() != f_bar.len() {
        return Err(UniquenessError::Length(f.len(), f_bar.len()));
    }
    if f.is_empty() {
        return Err(UniquenessError::Input("empty feature vectors".into()));
    }
    let mut worst: f64 = 0.0;
    for (i, (a, b)) in f.iter().zip(f_bar).enumerate() {
        if *a == 0.0 {
            return Err(UniquenessError::ZeroFeature(i));
        }
        worst = worst.max(((a - b) / a).abs());
    }
    Ok(worst)
}

/// Named selection of columns of the 13-entry feature vector.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct FeatureSubset {
    pub label: String,
    pub indices: Vec<usize>,
}

const H: usize = 9;
const C: usize = 10;
const S: usize = 11;
const HR: usize = 12;

impl FeatureSubset {
    /// `force+H`, `pileup3+H`, `pileup9+H` or `pileup9+force`.
    pub fn parse(label: &str) -> Result<Self> {
        let indices = match label {
            "force+H" => vec![C, S, HR, H],
            "pileup3+H" => vec![0, 1, 2, H],
            "pileup9+H" => (0..=H).collect(),
            "pileup9+force" => (0..9).chain([C, S, HR]).collect(),
            _ => return Err(UniquenessError::UnknownSubset(label.to_string())),
        };
        Ok(Self {
            label: label.to_string(),
            indices,
        })
    }

    pub fn standard() -> Vec<Self> {
        ["force+H", "pileup3+H", "pileup9+H", "pileup9+force"]
            .iter()
            .map(|l| Self::parse(l).expect("standard labels parse"))
            .collect()
    }

    pub fn select(&self, features: &[f64]) -> Vec<f64> {
        self.indices.iter().map(|&i| features[i]).collect()
    }
}

fn box_lower() -> [f64; 4] {
    LUDWIK_BOX.map(|(lo, _)| lo)
}

fn to_unit(p: &LudwikParams) -> [f64; 4] {
    let v = [p.e, p.sigma_y, p.n, p.k];
    std::array::from_fn(|i| (v[i] - LUDWIK_BOX[i].0) / (LUDWIK_BOX[i].1 - LUDWIK_BOX[i].0))
}

fn from_unit(u: &[f64]) -> LudwikParams {
    let lo = box_lower();
    let v: [f64; 4] = std::array::from_fn(|i| lo[i] + u[i] * (LUDWIK_BOX[i].1 - LUDWIK_BOX[i].0));
    LudwikParams {
        e: v[0],
        sigma_y: v[1],
        n: v[2],
        k: v[3],
    }
}

fn params_vec(p: &LudwikParams) -> Vec<f64> {
    vec![p.e, p.sigma_y, p.n, p.k]
}

/// Exact surrogate features of a Ludwik material.
pub fn surrogate_features(p: &LudwikParams, setting: &SimSetting) -> Result<Vec<f64>> {
    let (f, _) = surrogate::simulate_features(&MaterialSpec::Ludwik(*p), setting, StripMode::Axes)?;
    Ok(f.0)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveConfig {
    pub batch_add: usize,
    pub target_mape: f64,
    pub budget: usize,
    pub seed: u64,
    /// Training of the first network.
    pub initial: TrainConfig,
    /// Warm-started retraining after each augmentation.
    pub refine: TrainConfig,
    /// Fraction of the data held out for early stopping.
    pub val_fraction: f64,
}

impl Default for ActiveConfig {
    fn default() -> Self {
        Self {
            batch_add: 50,
            target_mape: 0.02,
            budget: 4000,
            seed: 0,
            initial: TrainConfig::default(),
            refine: TrainConfig {
                max_epochs: 300,
                patience: 100,
                ..TrainConfig::default()
            },
            val_fraction: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ActiveRound {
    pub data_count: usize,
    pub max_feature_mape: f64,
    pub worst_cell: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ForwardModel {
    pub mlp: Mlp,
    pub setting: SimSetting,
    pub data_count: usize,
    /// Per-feature MAPE on the held-out grid.
    pub feature_mape: Vec<f64>,
    pub converged: bool,
    pub rounds: Vec<ActiveRound>,
}

impl ForwardModel {
    pub fn predict(&self, p: &LudwikParams) -> Vec<f64> {
        self.mlp.forward(&params_vec(p)).expect("forward model takes four parameters")
    }

    pub fn max_feature_mape(&self) -> f64 {
        self.feature_mape.iter().fold(0.0, |m, v| m.max(*v))
    }
}

/// Held-out grid at levels 1/8, 3/8, 5/8, 7/8 of each box edge, so every
/// point sits in the middle of one of the 16 half-range cells.
fn holdout_grid() -> Vec<LudwikParams> {
    let levels = [0.125, 0.375, 0.625, 0.875];
    let mut out = Vec::with_capacity(256);
    for a in levels {
        for b in levels {
            for c in levels {
                for d in levels {
                    out.push(from_unit(&[a, b, c, d]));
                }
            }
        }
    }
    out
}

fn cell_of(p: &LudwikParams) -> usize {
    to_unit(p)
        .iter()
        .enumerate()
        .map(|(i, u)| if *u >= 0.5 { 1 << i } else { 0 })
        .sum()
}

fn sample_in_cell<R: Rng>(cell: usize, rng: &mut R) -> LudwikParams {
    let u: Vec<f64> = (0..4)
        .map(|i| {
            let base = if cell & (1 << i) != 0 { 0.5 } else { 0.0 };
            base + 0.5 * rng.random::<f64>()
        })
        .collect();
    from_unit(&u)
}

struct Pool {
    x: Vec<Vec<f64>>,
    y: Vec<Vec<f64>>,
}

fn forward_rows(ds: &Dataset) -> Result<Pool> {
    let mut x = Vec::new();
    let mut y = Vec::new();
    for r in &ds.records {
        let MaterialSpec::Ludwik(p) = r.spec else {
            return Err(UniquenessError::Input("forward model data must be Ludwik records".into()));
        };
        if r.features.len() != 13 {
            return Err(UniquenessError::Input("forward model data needs the 13 simulation features".into()));
        }
        x.push(params_vec(&p));
        y.push(r.features.clone());
    }
    Ok(Pool { x, y })
}

fn train_on(pool: &Pool, start: &Mlp, cfg: &TrainConfig, val_fraction: f64, seed: u64) -> Result<Mlp> {
    let n = pool.x.len();
    let n_val = ((n as f64) * val_fraction).round() as usize;
    let (tr, va) = neural::split_indices(n, n_val, seed);
    let pick = |v: &Vec<Vec<f64>>, idx: &[usize]| idx.iter().map(|&i| v[i].clone()).collect::<Vec<_>>();
    let (tx, ty, vx, vy) = (pick(&pool.x, &tr), pick(&pool.y, &tr), pick(&pool.x, &va), pick(&pool.y, &va));
    let (m, _) = neural::train_adam(
        start,
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
    Ok(m)
}

/// Trains the forward network, adding `batch_add` surrogate samples to the
/// half-range cell with the largest held-out error until every feature's
/// held-out MAPE is below `target_mape` or the data budget is spent.
pub fn train_forward_active(seed_data: &Dataset, cfg: &ActiveConfig) -> Result<ForwardModel> {
    if seed_data.len() < 2 {
        return Err(UniquenessError::Input("forward model needs seed data".into()));
    }
    let first = &seed_data.records[0];
    let setting = SimSetting::lo(first.nu, first.mu);
    let mut pool = forward_rows(seed_data)?;

    let grid = holdout_grid();
    let grid_y: Vec<Vec<f64>> = grid
        .par_iter()
        .map(|p| surrogate_features(p, &setting))
        .collect::<Result<_>>()?;
    let grid_x: Vec<Vec<f64>> = grid.iter().map(params_vec).collect();
    let grid_cells: Vec<usize> = grid.iter().map(cell_of).collect();

    let init = Mlp::for_data(&pool.x, &pool.y, cfg.seed)?;
    let mut mlp = train_on(&pool, &init, &cfg.initial, cfg.val_fraction, cfg.seed)?;
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    rng.set_stream(2);
    let mut rounds = Vec::new();
    loop {
        let preds = mlp.forward_batch(&grid_x)?;
        let feature_mape = column_mape(&grid_y, &preds);
        let max_mape = feature_mape.iter().fold(0.0f64, |m, v| m.max(*v));
        let mut cell_err = [0.0f64; 16];
        for cell in 0..16 {
            let (ty, py): (Vec<Vec<f64>>, Vec<Vec<f64>>) = grid_cells
                .iter()
                .zip(grid_y.iter().zip(&preds))
                .filter(|(c, _)| **c == cell)
                .map(|(_, (t, p))| (t.clone(), p.clone()))
                .unzip();
            cell_err[cell] = column_mape(&ty, &py).iter().fold(0.0, |m, v| m.max(*v));
        }
        let worst_cell = (0..16)
            .max_by(|a, b| cell_err[*a].total_cmp(&cell_err[*b]))
            .expect("sixteen cells");
        rounds.push(ActiveRound {
            data_count: pool.x.len(),
            max_feature_mape: max_mape,
            worst_cell,
        });
        let converged = max_mape < cfg.target_mape;
        if converged || pool.x.len() + cfg.batch_add > cfg.budget {
            log::info!(
                "forward model: {} samples, max feature MAPE {:.4}, converged {converged}",
                pool.x.len(),
                max_mape
            );
            return Ok(ForwardModel {
                mlp,
                setting,
                data_count: pool.x.len(),
                feature_mape,
                converged,
                rounds,
            });
        }
        let mut added = 0;
        while added < cfg.batch_add {
            let p = sample_in_cell(worst_cell, &mut rng);
            match surrogate_features(&p, &setting) {
                Ok(f) => {
                    pool.x.push(params_vec(&p));
                    pool.y.push(f);
                    added += 1;
                }
                Err(UniquenessError::Surrogate(SurrogateError::Domain(_))) => continue,
                Err(e) => return Err(e),
            }
        }
        log::debug!("forward model round {}: +{} in cell {worst_cell}", rounds.len(), cfg.batch_add);
        mlp = train_on(&pool, &mlp, &cfg.refine, cfg.val_fraction, cfg.seed + rounds.len() as u64)?;
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiblingConfig {
    /// Stop when the smoothed network ratio falls below this value.
    pub stop_ratio: f64,
    pub max_iter: usize,
    /// Minimum normalised distance of the start point and of an accepted
    /// sibling from the target.
    pub min_separation: f64,
    pub restarts: usize,
    pub seed: u64,
    /// Start exactly at the target (test hook).
    pub start_at_target: bool,
}

impl Default for SiblingConfig {
    fn default() -> Self {
        Self {
            stop_ratio: 0.01,
            max_iter: 200,
            min_separation: 0.2,
            restarts: 1,
            seed: 0,
            start_at_target: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SiblingResult {
    pub target: LudwikParams,
    pub candidate: LudwikParams,
    /// Per-feature relative differences from the surrogate.
    pub differences: Vec<f64>,
    /// Maximum of `differences`; infinite when verification failed.
    pub ratio: f64,
    /// Ratio predicted by the forward network at the candidate.
    pub predicted_ratio: f64,
    pub separation: f64,
    pub verified: bool,
    pub converged: bool,
    /// False when the surrogate ratio exceeds twice the network's estimate
    /// (or twice the network's held-out error).
    pub consistent: bool,
}

const P_NORM: f64 = 8.0;
const SEPARATION_PENALTY: f64 = 1e4;

fn unit_distance(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).powi(2)).sum::<f64>().sqrt()
}

/// Searches for a candidate whose network features match the target's on
/// `subset`, then re-evaluates both with the surrogate.
pub fn sibling_search(
    target: &LudwikParams,
    fm: &ForwardModel,
    subset: &FeatureSubset,
    cfg: &SiblingConfig,
) -> Result<SiblingResult> {
    let ut = to_unit(target);
    if ut.iter().any(|u| !(0.0..=1.0).contains(u)) {
        return Err(UniquenessError::Input("target outside the Ludwik sampling box".into()));
    }
    let ref_all = fm.predict(target);
    let reference = subset.select(&ref_all);
    if let Some(i) = reference.iter().position(|v| *v == 0.0) {
        return Err(UniquenessError::ZeroFeature(subset.indices[i]));
    }
    let min_sep = if cfg.start_at_target { 0.0 } else { cfg.min_separation };
    let objective = |u: &[f64]| -> f64 {
        let f = subset.select(&fm.mlp.forward(&params_vec(&from_unit(u))).expect("four inputs"));
        let s: f64 = f
            .iter()
            .zip(&reference)
            .map(|(a, r)| ((a - r) / r).abs().powf(P_NORM))
            .sum();
        let gap = (min_sep - unit_distance(u, &ut)).max(0.0);
        s.powf(1.0 / P_NORM) + SEPARATION_PENALTY * gap * gap
    };
    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut best: Option<(Vec<f64>, f64, bool)> = None;
    for _ in 0..cfg.restarts.max(1) {
        let x0: Vec<f64> = if cfg.start_at_target {
            ut.to_vec()
        } else {
            loop {
                let u: Vec<f64> = (0..4).map(|_| rng.random::<f64>()).collect();
                if unit_distance(&u, &ut) >= cfg.min_separation {
                    break u;
                }
            }
        };
        let problem = OptProblem {
            objective: &objective,
            gradient: GradientSource::FiniteDifference { eps: 1e-6 },
            bounds: Some(Bounds {
                lower: vec![0.0; 4],
                upper: vec![1.0; 4],
            }),
            x0,
        };
        let opts = OptOptions {
            tol_grad: 1e-9,
            max_iter: cfg.max_iter,
            f_target: Some(cfg.stop_ratio),
        };
        let (x, f, conv) = match numopt::bfgs_minimize(&problem, &opts) {
            Ok(r) => (r.x_best, r.f_best, r.converged),
            Err(e) => {
                log::warn!("sibling search aborted: {e}");
                continue;
            }
        };
        if best.as_ref().is_none_or(|b| f < b.1) {
            best = Some((x, f, conv));
        }
    }
    let Some((u, _, converged)) = best else {
        return Ok(SiblingResult {
            target: *target,
            candidate: *target,
            differences: Vec::new(),
            ratio: f64::INFINITY,
            predicted_ratio: f64::INFINITY,
            separation: 0.0,
            verified: false,
            converged: false,
            consistent: false,
        });
    };
    let candidate = from_unit(&u);
    let separation = unit_distance(&u, &ut);
    let predicted_ratio = distinguishing_ratio(&reference, &subset.select(&fm.predict(&candidate))).unwrap_or(f64::INFINITY);
    let verified = (|| -> Result<(Vec<f64>, f64)> {
        let ft = subset.select(&surrogate_features(target, &fm.setting)?);
        let fc = subset.select(&surrogate_features(&candidate, &fm.setting)?);
        let ratio = distinguishing_ratio(&ft, &fc)?;
        let diffs = ft.iter().zip(&fc).map(|(a, b)| ((a - b) / a).abs()).collect();
        Ok((diffs, ratio))
    })();
    let (differences, ratio, ok) = match verified {
        Ok((d, r)) => (d, r, true),
        Err(e) => {
            log::debug!("sibling verification failed: {e}");
            (Vec::new(), f64::INFINITY, false)
        }
    };
    // separation within the penalty's tolerance
    let separated = separation >= min_sep - 1e-3;
    let ratio = if separated { ratio } else { f64::INFINITY };
    let consistent = ratio <= 2.0 * predicted_ratio.max(fm.max_feature_mape());
    Ok(SiblingResult {
        target: *target,
        candidate,
        differences,
        ratio,
        predicted_ratio,
        separation,
        verified: ok && separated,
        converged,
        consistent,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct NonUniqueCurve {
    pub label: String,
    /// `(threshold, N_A / N)` pairs.
    pub points: Vec<(f64, f64)>,
    /// Surrogate-verified best ratio of each grid material.
    pub ratios: Vec<f64>,
}

impl NonUniqueCurve {
    pub fn value_at(&self, threshold: f64) -> Option<f64> {
        self.points.iter().find(|(t, _)| *t == threshold).map(|p| p.1)
    }
}

/// Cell-centred uniform grid of `n^4` Ludwik materials.
pub fn ludwik_grid(n: usize) -> Vec<LudwikParams> {
    let level = |k: usize| (k as f64 + 0.5) / n as f64;
    let mut out = Vec::with_capacity(n.pow(4));
    for a in 0..n {
        for b in 0..n {
            for c in 0..n {
                for d in 0..n {
                    out.push(from_unit(&[level(a), level(b), level(c), level(d)]));
                }
            }
        }
    }
    out
}

/// Fraction of grid materials with a verified sibling below each threshold.
/// Material `i` searches with seed `cfg.seed + i`; failures count as unique.
pub fn nonunique_curve(
    fm: &ForwardModel,
    subset: &FeatureSubset,
    grid_n: usize,
    thresholds: &[f64],
    cfg: &SiblingConfig,
) -> Result<NonUniqueCurve> {
    if grid_n == 0 {
        return Err(UniquenessError::Input("grid size must be positive".into()));
    }
    let grid = ludwik_grid(grid_n);
    let ratios: Vec<f64> = grid
        .par_iter()
        .enumerate()
        .map(|(i, p)| {
            let c = SiblingConfig {
                seed: cfg.seed.wrapping_add(i as u64),
                ..cfg.clone()
            };
            match sibling_search(p, fm, subset, &c) {
                Ok(r) => r.ratio,
                Err(e) => {
                    log::debug!("grid material {i}: {e}");
                    f64::INFINITY
                }
            }
        })
        .collect();
    let n = ratios.len() as f64;
    let mut sorted = thresholds.to_vec();
    sorted.sort_by(f64::total_cmp);
    let points = sorted
        .iter()
        .map(|&t| (t, ratios.iter().filter(|r| **r < t).count() as f64 / n))
        .collect();
    Ok(NonUniqueCurve {
        label: subset.label.clone(),
        points,
        ratios,
    })
}

pub fn curves_to_csv(curves: &[NonUniqueCurve]) -> String {
    let mut out = String::from("threshold,subset,ratio\n");
    for c in curves {
        for (t, v) in &c.points {
            out.push_str(&format!("{t},{},{v}\n", c.label));
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ratio_examples() {
        assert_eq!(distinguishing_ratio(&[1.0, 2.0], &[1.0, 2.0]).unwrap(), 0.0);
        let r = distinguishing_ratio(&[1.0, 2.0, 4.0], &[1.05, 1.9, 4.0]).unwrap();
        assert!((r - 0.05).abs() < 1e-12);
        assert_eq!(distinguishing_ratio(&[2.0], &[1.0]).unwrap(), 0.5);
        assert!(matches!(distinguishing_ratio(&[0.0], &[1.0]), Err(UniquenessError::ZeroFeature(0))));
    }

    #[test]
    fn subsets_and_grid() {
        let s = FeatureSubset::standard();
        assert_eq!(s[0].indices, vec![10, 11, 12, 9]);
        assert_eq!(s[2].indices.len(), 10);
        assert_eq!(s[3].indices.len(), 12);
        assert!(FeatureSubset::parse("bogus").is_err());
        let g = ludwik_grid(5);
        assert_eq!(g.len(), 625);
        assert!((g[0].e - (30.0 + 0.1 * 270.0)).abs() < 1e-12);
        assert_eq!(holdout_grid().len(), 256);
        let mut counts = [0; 16];
        for p in holdout_grid() {
            counts[cell_of(&p)] += 1;
        }
        assert!(counts.iter().all(|c| *c == 16));
    }

    #[test]
    fn unit_mapping_round_trips() {
        let p = LudwikParams {
            e: 200.0,
            sigma_y: 0.28,
            n: 0.65,
            k: 1.365,
        };
        let back = from_unit(&to_unit(&p));
        assert!((back.e - p.e).abs() < 1e-12 && (back.k - p.k).abs() < 1e-12);
    }
}
