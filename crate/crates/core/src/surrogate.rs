//! Analytic stand-in for the 2D axisymmetric simulation, the 3D Vickers
//! simulation and the physical experiment.
//!
//! The low-fidelity model maps a stress-strain curve and the simulation
//! setting `(nu, mu)` to a normalised pile-up profile, a load-displacement
//! record and a hardness value through a fixed chain of closed-form steps.
//! The high-fidelity model applies a fixed systematic gap and a fourfold
//! angular modulation on a height map. The experiment emulator runs the
//! high-fidelity model at a hidden `(nu, mu)` and adds surface roughness and
//! hardness scatter. None of the coefficients are calibrated to a real metal.

use std::collections::BTreeMap;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

use crate::constitutive::{self, ConstitutiveError, MaterialKind, MaterialSpec, StressStrainCurve};
use crate::profile::{
    self, FeatureVector, HeightMap, LoadCurve, PileUpCurve, ProfileError, StripMode,
};

#[derive(Debug, Error)]
pub enum SurrogateError {
    #[error("surrogate domain error: {0}")]
    Domain(String),
    #[error("setting fidelity {found:?} does not match the requested model {expected:?}")]
    Fidelity { expected: Fidelity, found: Fidelity },
    #[error(transparent)]
    Constitutive(#[from] ConstitutiveError),
    #[error(transparent)]
    Profile(#[from] ProfileError),
    #[error("dataset parse error on line {line}: {message}")]
    Parse { line: usize, message: String },
    #[error("could not draw a valid material for record {id} after {attempts} attempts")]
    Exhausted { id: usize, attempts: usize },
}

pub type Result<T> = std::result::Result<T, SurrogateError>;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum Fidelity {
    #[serde(rename = "LO2D")]
    Lo2d,
    #[serde(rename = "HI3D")]
    Hi3d,
    #[serde(rename = "EXP")]
    Exp,
}

impl std::str::FromStr for Fidelity {
    type Err = SurrogateError;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "lo" | "lo2d" => Ok(Fidelity::Lo2d),
            "hi" | "hi3d" => Ok(Fidelity::Hi3d),
            "exp" => Ok(Fidelity::Exp),
            _ => Err(SurrogateError::Domain(format!("unknown fidelity '{s}'"))),
        }
    }
}

/// Default Poisson's ratio and friction coefficient of the simulations.
pub const DEFAULT_NU: f64 = 0.3;
pub const DEFAULT_MU: f64 = 0.15;
/// Hidden `(nu, mu)` of the emulated experiments.
pub const HIDDEN_NU: f64 = 0.28;
pub const HIDDEN_MU: f64 = 0.08;

/// Representative strain of the curvature law and the second strain used for
/// the effective hardening exponent.
const REPRESENTATIVE_STRAIN: f64 = 0.033;
const SECOND_STRAIN: f64 = 0.1;
const HALF_ANGLE_DEG: f64 = 70.3;
const PROFILE_SAMPLES: usize = 301;
const PROFILE_EXTENT: f64 = 3.0;
const LOAD_SAMPLES: usize = 64;

/// Systematic 2D-to-3D gap: pile-up amplitude and loading curvature factors.
pub const HI_AMPLITUDE_GAP: f64 = 1.10;
pub const HI_CURVATURE_GAP: f64 = 0.95;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SimSetting {
    pub nu: f64,
    pub mu: f64,
    pub fidelity: Fidelity,
    /// Peak load (mN, with GPa stresses and micrometre lengths).
    pub p_max: f64,
    /// Height-map resolution for 3D and experimental records.
    pub grid_n: usize,
}

impl Default for SimSetting {
    fn default() -> Self {
        Self {
            nu: DEFAULT_NU,
            mu: DEFAULT_MU,
            fidelity: Fidelity::Lo2d,
            p_max: 100.0,
            grid_n: 64,
        }
    }
}

impl SimSetting {
    pub fn lo(nu: f64, mu: f64) -> Self {
        Self {
            nu,
            mu,
            ..Self::default()
        }
    }

    pub fn hi(nu: f64, mu: f64) -> Self {
        Self {
            nu,
            mu,
            fidelity: Fidelity::Hi3d,
            ..Self::default()
        }
    }

    fn check(&self) -> Result<()> {
        if !(0.2..=0.4).contains(&self.nu) || !(0.05..=0.25).contains(&self.mu) {
            // the hidden experimental truth sits inside these ranges as well
            return Err(SurrogateError::Domain(format!(
                "(nu, mu) = ({}, {}) outside [0.2, 0.4] x [0.05, 0.25]",
                self.nu, self.mu
            )));
        }
        if !(self.p_max > 0.0) {
            return Err(SurrogateError::Domain("peak load must be positive".into()));
        }
        Ok(())
    }
}

/// Intermediate quantities of one simulated indentation.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Indentation {
    pub sigma_r: f64,
    pub e_star: f64,
    pub lambda: f64,
    pub c: f64,
    pub h_m: f64,
    pub n_eff: f64,
    pub a: f64,
    pub hardness: f64,
    pub hr_over_hm: f64,
    pub h_r: f64,
    pub s: f64,
    pub amplitude: f64,
    pub width: f64,
}

/// Dimensionless loading-curvature function of `ln(E*/sigma_r)`.
pub fn curvature_function(lambda: f64) -> f64 {
    -1.131 * lambda.powi(3) + 13.635 * lambda * lambda - 30.594 * lambda + 29.267
}

#[derive(Clone, Copy)]
enum Indenter {
    Conical,
    Vickers,
}

fn indentation(curve: &StressStrainCurve, setting: &SimSetting, indenter: Indenter) -> Result<Indentation> {
    setting.check()?;
    let (amp_gap, c_gap) = match indenter {
        Indenter::Conical => (1.0, 1.0),
        Indenter::Vickers => (HI_AMPLITUDE_GAP, HI_CURVATURE_GAP),
    };
    let e = curve.e;
    let sigma_r = curve.stress_at(REPRESENTATIVE_STRAIN);
    if !(sigma_r > 0.0) {
        return Err(SurrogateError::Domain(format!("representative stress {sigma_r} <= 0")));
    }
    let e_star = e / (1.0 - setting.nu * setting.nu);
    let lambda = (e_star / sigma_r).ln();
    if !(lambda > 1.0 && lambda < 12.0) {
        return Err(SurrogateError::Domain(format!("ln(E*/sigma_r) = {lambda} outside (1, 12)")));
    }
    let c = sigma_r * curvature_function(lambda) * c_gap;
    if !(c > 0.0) {
        return Err(SurrogateError::Domain(format!("loading curvature {c} <= 0")));
    }
    let h_m = (setting.p_max / c).sqrt();
    let sigma_2 = curve.stress_at(SECOND_STRAIN);
    let n_eff = ((sigma_2.ln() - sigma_r.ln()) / (SECOND_STRAIN.ln() - REPRESENTATIVE_STRAIN.ln()))
        .clamp(0.0, 1.0);
    let a = h_m * HALF_ANGLE_DEG.to_radians().tan() * (1.0 + 0.2 * (1.0 - n_eff));
    let area = match indenter {
        Indenter::Conical => std::f64::consts::PI * a * a,
        Indenter::Vickers => 2.0 * a * a,
    };
    let hardness = profile::hardness(setting.p_max, area)?
        * (1.0 + 0.25 * (setting.mu - DEFAULT_MU))
        * (1.0 - 0.2 * (setting.nu - DEFAULT_NU));
    let hr_over_hm = (1.0 - 5.0 * (sigma_r / e_star).sqrt()).max(0.0);
    let s = 2.0 * e_star * a;
    let base_amp = (0.05 + 0.45 * (1.0 - n_eff) * (1.0 - (20.0 * curve.sigma_y / e).min(1.0))).clamp(0.0, 0.5);
    let amplitude = base_amp
        * (1.0 - 0.8 * (setting.mu - DEFAULT_MU))
        * (1.0 + 1.2 * (setting.nu - DEFAULT_NU))
        * amp_gap;
    Ok(Indentation {
        sigma_r,
        e_star,
        lambda,
        c,
        h_m,
        n_eff,
        a,
        hardness,
        hr_over_hm,
        h_r: hr_over_hm * h_m,
        s,
        amplitude,
        width: 0.25 + 0.15 * n_eff,
    })
}

impl Indentation {
    /// Physical surface height (micrometres) at normalised radius `x = r/a`.
    pub fn height(&self, x: f64) -> f64 {
        let crater = -self.h_r * (1.0 - x).max(0.0);
        let bump = self.h_m * self.amplitude * (-((x - 1.15) / self.width).powi(2)).exp();
        crater + bump
    }

    pub fn profile(&self) -> PileUpCurve {
        let samples = (0..PROFILE_SAMPLES)
            .map(|i| {
                let x = PROFILE_EXTENT * i as f64 / (PROFILE_SAMPLES - 1) as f64;
                (x, self.height(x) / self.a)
            })
            .collect();
        PileUpCurve { samples }
    }

    pub fn load_curve(&self, p_max: f64) -> LoadCurve {
        let loading = (1..=LOAD_SAMPLES)
            .map(|i| {
                let h = self.h_m * i as f64 / LOAD_SAMPLES as f64;
                (h, self.c * h * h)
            })
            .collect();
        let m = self.s * (self.h_m - self.h_r) / p_max;
        let unloading = (0..LOAD_SAMPLES)
            .map(|i| {
                let p = if i == LOAD_SAMPLES - 1 {
                    0.0
                } else {
                    p_max * (1.0 - i as f64 / (LOAD_SAMPLES - 1) as f64)
                };
                let h = if i == 0 {
                    self.h_m
                } else {
                    self.h_r + (self.h_m - self.h_r) * (p / p_max).powf(1.0 / m)
                };
                (h, p)
            })
            .collect();
        LoadCurve {
            loading,
            unloading,
            p_max,
            h_m: self.h_m,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LoOutput {
    pub profile: PileUpCurve,
    pub load: LoadCurve,
    pub hardness: f64,
    pub state: Indentation,
}

fn expect_fidelity(setting: &SimSetting, expected: Fidelity) -> Result<()> {
    if setting.fidelity != expected {
        return Err(SurrogateError::Fidelity {
            expected,
            found: setting.fidelity,
        });
    }
    Ok(())
}

/// Axisymmetric low-fidelity simulation.
pub fn simulate_lo(curve: &StressStrainCurve, setting: &SimSetting) -> Result<LoOutput> {
    expect_fidelity(setting, Fidelity::Lo2d)?;
    let state = indentation(curve, setting, Indenter::Conical)?;
    Ok(LoOutput {
        profile: state.profile(),
        load: state.load_curve(setting.p_max),
        hardness: state.hardness,
        state,
    })
}

/// Fourfold angular modulation of the 3D height field.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Anisotropy {
    /// `r_eff = r / (1 + radial cos 4 phi)`.
    pub radial: f64,
    /// height multiplied by `1 + amplitude cos 4 phi`.
    pub amplitude: f64,
}

impl Default for Anisotropy {
    fn default() -> Self {
        Self {
            radial: 0.12,
            amplitude: 0.10,
        }
    }
}

impl Anisotropy {
    pub const NONE: Anisotropy = Anisotropy {
        radial: 0.0,
        amplitude: 0.0,
    };
}

#[derive(Debug, Clone, PartialEq)]
pub struct HiOutput {
    pub map: HeightMap,
    pub load: LoadCurve,
    pub hardness: f64,
    pub state: Indentation,
}

pub fn simulate_hi(curve: &StressStrainCurve, setting: &SimSetting) -> Result<HiOutput> {
    simulate_hi_with(curve, setting, Anisotropy::default())
}

/// 3D simulation on a `grid_n x grid_n` map covering `[-3a, 3a]^2`.
pub fn simulate_hi_with(curve: &StressStrainCurve, setting: &SimSetting, anis: Anisotropy) -> Result<HiOutput> {
    expect_fidelity(setting, Fidelity::Hi3d)?;
    hi_model(curve, setting, anis)
}

fn hi_model(curve: &StressStrainCurve, setting: &SimSetting, anis: Anisotropy) -> Result<HiOutput> {
    let n = setting.grid_n;
    if n < 16 {
        return Err(SurrogateError::Domain(format!("grid_n = {n} below 16")));
    }
    let state = indentation(curve, setting, Indenter::Vickers)?;
    let half = PROFILE_EXTENT * state.a;
    let pitch = 2.0 * half / (n - 1) as f64;
    let c = (n - 1) as f64 / 2.0;
    let mut heights = Vec::with_capacity(n * n);
    for iy in 0..n {
        let y = (iy as f64 - c) * pitch;
        let y2 = y * y;
        for ix in 0..n {
            let x = (ix as f64 - c) * pitch;
            let x2 = x * x;
            let r2 = x2 + y2;
            // cos 4 phi written symmetrically in x and y so that the map is
            // exactly invariant under quarter turns
            let cos4 = if r2 > 0.0 {
                (x2 * x2 + y2 * y2 - 6.0 * (x2 * y2)) / (r2 * r2)
            } else {
                0.0
            };
            let r_eff = r2.sqrt() / (1.0 + anis.radial * cos4);
            heights.push(state.height(r_eff / state.a) * (1.0 + anis.amplitude * cos4));
        }
    }
    let map = HeightMap::new(n, n, heights, pitch, (c, c), state.a)?;
    Ok(HiOutput {
        map,
        load: state.load_curve(setting.p_max),
        hardness: state.hardness,
        state,
    })
}

/// Noise model of the emulated measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentNoise {
    /// Per-pixel roughness standard deviation as a fraction of `h_m`.
    pub roughness: f64,
    /// Half-width of the multiplicative uniform hardness scatter.
    pub hardness_jitter: f64,
}

impl Default for ExperimentNoise {
    fn default() -> Self {
        Self {
            roughness: 0.01,
            hardness_jitter: 0.02,
        }
    }
}

impl ExperimentNoise {
    pub const NONE: ExperimentNoise = ExperimentNoise {
        roughness: 0.0,
        hardness_jitter: 0.0,
    };
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ExperimentEmulator {
    pub nu: f64,
    pub mu: f64,
    pub p_max: f64,
    pub grid_n: usize,
    pub noise: ExperimentNoise,
}

impl Default for ExperimentEmulator {
    fn default() -> Self {
        let s = SimSetting::default();
        Self {
            nu: HIDDEN_NU,
            mu: HIDDEN_MU,
            p_max: s.p_max,
            grid_n: s.grid_n,
            noise: ExperimentNoise::default(),
        }
    }
}

impl ExperimentEmulator {
    pub fn emulate<R: Rng + ?Sized>(&self, curve: &StressStrainCurve, rng: &mut R) -> Result<(HeightMap, f64)> {
        let setting = SimSetting {
            nu: self.nu,
            mu: self.mu,
            fidelity: Fidelity::Hi3d,
            p_max: self.p_max,
            grid_n: self.grid_n,
        };
        let hi = hi_model(curve, &setting, Anisotropy::default())?;
        let mut map = hi.map;
        if self.noise.roughness > 0.0 {
            let std = self.noise.roughness * hi.state.h_m;
            let normal = Normal::new(0.0, std).map_err(|e| SurrogateError::Domain(e.to_string()))?;
            let (nx, ny) = (map.nx, map.ny);
            let raw: Vec<f64> = (0..nx * ny).map(|_| normal.sample(rng)).collect();
            for iy in 0..ny {
                for ix in 0..nx {
                    let mut sum = 0.0;
                    let mut count = 0.0;
                    for jy in iy.saturating_sub(1)..=(iy + 1).min(ny - 1) {
                        for jx in ix.saturating_sub(1)..=(ix + 1).min(nx - 1) {
                            sum += raw[jy * nx + jx];
                            count += 1.0;
                        }
                    }
                    map.heights[iy * nx + ix] += sum / count;
                }
            }
        }
        let mut hardness = hi.hardness;
        if self.noise.hardness_jitter > 0.0 {
            let j = self.noise.hardness_jitter;
            hardness *= 1.0 - j + 2.0 * j * rng.random::<f64>();
        }
        Ok((map, hardness))
    }
}

/// Experiment at the hidden `(nu, mu)` with default noise and resolution.
pub fn emulate_experiment<R: Rng + ?Sized>(curve: &StressStrainCurve, rng: &mut R) -> Result<(HeightMap, f64)> {
    ExperimentEmulator::default().emulate(curve, rng)
}

/// Curve resolution used when tabulating analytic laws for simulation.
pub const CURVE_SAMPLES: usize = 600;

pub fn material_curve(spec: &MaterialSpec) -> Result<StressStrainCurve> {
    Ok(constitutive::to_curve(spec, constitutive::POINT_STRESS_MAX_STRAIN, CURVE_SAMPLES)?)
}

/// Features of one simulated record: 9 pile-up + H + 3 force features for
/// the simulations, 9 pile-up + H for experiments.
pub fn simulate_features(spec: &MaterialSpec, setting: &SimSetting, strips: StripMode) -> Result<(FeatureVector, f64)> {
    let curve = material_curve(spec)?;
    match setting.fidelity {
        Fidelity::Lo2d => {
            let out = simulate_lo(&curve, setting)?;
            let pf = profile::extract_pileup_features(&out.profile)?;
            let ff = profile::extract_force_features(&out.load)?;
            Ok((profile::assemble_features(&pf, out.hardness, Some(&ff)), out.hardness))
        }
        Fidelity::Hi3d => {
            let out = simulate_hi(&curve, setting)?;
            let pf = profile::extract_pileup_features(&profile::strip_average_with(&out.map, strips)?)?;
            let ff = profile::extract_force_features(&out.load)?;
            Ok((profile::assemble_features(&pf, out.hardness, Some(&ff)), out.hardness))
        }
        Fidelity::Exp => Err(SurrogateError::Domain(
            "experimental records need a noise seed; use the experiment emulator".into(),
        )),
    }
}

pub fn experiment_features<R: Rng + ?Sized>(
    emulator: &ExperimentEmulator,
    curve: &StressStrainCurve,
    strips: StripMode,
    rng: &mut R,
) -> Result<(FeatureVector, f64, HeightMap)> {
    let (map, h) = emulator.emulate(curve, rng)?;
    let pf = profile::extract_pileup_features(&profile::strip_average_with(&map, strips)?)?;
    Ok((profile::assemble_features(&pf, h, None), h, map))
}

/// One line of a dataset file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimRecord {
    pub id: usize,
    pub fidelity: Fidelity,
    pub nu: f64,
    pub mu: f64,
    #[serde(flatten)]
    pub spec: MaterialSpec,
    pub features: Vec<f64>,
    pub hardness: f64,
    pub targets: BTreeMap<String, f64>,
    pub seed: u64,
    /// Material index for experimental replicates.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub material: Option<usize>,
}

#[derive(Debug, Clone, PartialEq, Default)]
pub struct Dataset {
    pub records: Vec<SimRecord>,
    /// Draws rejected by the surrogate's domain checks and redrawn.
    pub skipped: usize,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.records.len()
    }

    pub fn is_empty(&self) -> bool {
        self.records.is_empty()
    }

    pub fn to_jsonl(&self) -> String {
        let mut out = String::new();
        for r in &self.records {
            out.push_str(&serde_json::to_string(r).expect("records serialize"));
            out.push('\n');
        }
        out
    }

    pub fn from_jsonl(text: &str) -> Result<Self> {
        let records = text
            .lines()
            .enumerate()
            .filter(|(_, l)| !l.trim().is_empty())
            .map(|(i, l)| {
                serde_json::from_str(l).map_err(|e| SurrogateError::Parse {
                    line: i + 1,
                    message: e.to_string(),
                })
            })
            .collect::<Result<Vec<SimRecord>>>()?;
        Ok(Self { records, skipped: 0 })
    }

    pub fn content_hash(&self) -> String {
        hex::encode(Sha256::digest(self.to_jsonl().as_bytes()))
    }

    pub fn merged(mut self, other: Dataset) -> Self {
        let offset = self.records.len();
        self.skipped += other.skipped;
        self.records.extend(other.records.into_iter().map(|mut r| {
            r.id += offset;
            r
        }));
        self
    }
}

/// Draws materials for records until one passes the surrogate's domain
/// checks; the redraws reuse the record's own random stream.
const MAX_REDRAWS: usize = 64;

fn targets_of(spec: &MaterialSpec) -> BTreeMap<String, f64> {
    spec.named_params().into_iter().collect()
}

/// Material of record/material `index` under `base_seed` (stream 0 of the
/// seeded generator), redrawn until `accept` succeeds.
fn draw_material<T>(
    kind: MaterialKind,
    seed: u64,
    id: usize,
    mut accept: impl FnMut(&MaterialSpec) -> Result<T>,
) -> Result<(MaterialSpec, T, usize)> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    for attempt in 0..MAX_REDRAWS {
        let spec = constitutive::sample_material(kind, &mut rng)?;
        match accept(&spec) {
            Ok(v) => return Ok((spec, v, attempt)),
            Err(SurrogateError::Domain(_)) | Err(SurrogateError::Constitutive(_)) => continue,
            Err(e) => return Err(e),
        }
    }
    Err(SurrogateError::Exhausted {
        id,
        attempts: MAX_REDRAWS,
    })
}

/// Simulated dataset: record `i` uses seed `base_seed + i`; kinds are laid
/// out contiguously in the order given.
pub fn gen_dataset(
    kinds: &[(MaterialKind, usize)],
    setting: &SimSetting,
    base_seed: u64,
    strips: StripMode,
) -> Result<Dataset> {
    if kinds.iter().all(|(_, n)| *n == 0) {
        return Err(SurrogateError::Domain("dataset needs at least one record".into()));
    }
    if setting.fidelity == Fidelity::Exp {
        return Err(SurrogateError::Domain("use gen_experiments for experimental data".into()));
    }
    let layout: Vec<MaterialKind> = kinds
        .iter()
        .flat_map(|&(k, n)| std::iter::repeat_n(k, n))
        .collect();
    let results: Vec<Result<(SimRecord, usize)>> = layout
        .par_iter()
        .enumerate()
        .map(|(id, &kind)| {
            let seed = base_seed.wrapping_add(id as u64);
            let (spec, (features, hardness), skipped) =
                draw_material(kind, seed, id, |s| simulate_features(s, setting, strips))?;
            Ok((
                SimRecord {
                    id,
                    fidelity: setting.fidelity,
                    nu: setting.nu,
                    mu: setting.mu,
                    targets: targets_of(&spec),
                    spec,
                    features: features.0,
                    hardness,
                    seed,
                    material: None,
                },
                skipped,
            ))
        })
        .collect();
    let mut ds = Dataset::default();
    for r in results {
        let (rec, skipped) = r?;
        ds.skipped += skipped;
        ds.records.push(rec);
    }
    Ok(ds)
}

/// Material `m` of an experimental campaign, drawn from seed `base_seed + m`.
pub fn experiment_material(kind: MaterialKind, base_seed: u64, m: usize) -> Result<(MaterialSpec, usize)> {
    let emulator = ExperimentEmulator {
        noise: ExperimentNoise::NONE,
        ..Default::default()
    };
    let seed = base_seed.wrapping_add(m as u64);
    let (spec, (), skipped) = draw_material(kind, seed, m, |s| {
        let curve = material_curve(s)?;
        let mut rng = ChaCha8Rng::seed_from_u64(0);
        experiment_features(&emulator, &curve, StripMode::Axes, &mut rng)?;
        Ok(())
    })?;
    Ok((spec, skipped))
}

/// Emulated campaign of `materials x replicates` measurements. Record
/// `i = m * replicates + r` draws its noise from seed `base_seed + i`, stream 1.
pub fn gen_experiments(
    kind: MaterialKind,
    materials: usize,
    replicates: usize,
    base_seed: u64,
    emulator: &ExperimentEmulator,
    strips: StripMode,
) -> Result<(Dataset, Vec<HeightMap>)> {
    if materials == 0 || replicates == 0 {
        return Err(SurrogateError::Domain("experiments need at least one material and replicate".into()));
    }
    let specs: Vec<(MaterialSpec, usize)> = (0..materials)
        .into_par_iter()
        .map(|m| experiment_material(kind, base_seed, m))
        .collect::<Result<_>>()?;
    let rows: Vec<Result<(SimRecord, HeightMap)>> = (0..materials * replicates)
        .into_par_iter()
        .map(|i| {
            let m = i / replicates;
            let spec = &specs[m].0;
            let seed = base_seed.wrapping_add(i as u64);
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            rng.set_stream(1);
            let curve = material_curve(spec)?;
            let (features, hardness, map) = experiment_features(emulator, &curve, strips, &mut rng)?;
            Ok((
                SimRecord {
                    id: i,
                    fidelity: Fidelity::Exp,
                    nu: emulator.nu,
                    mu: emulator.mu,
                    spec: spec.clone(),
                    features: features.0,
                    hardness,
                    targets: targets_of(spec),
                    seed,
                    material: Some(m),
                },
                map,
            ))
        })
        .collect();
    let mut ds = Dataset {
        records: Vec::with_capacity(rows.len()),
        skipped: specs.iter().map(|s| s.1).sum(),
    };
    let mut maps = Vec::with_capacity(rows.len());
    for r in rows {
        let (rec, map) = r?;
        ds.records.push(rec);
        maps.push(map);
    }
    Ok((ds, maps))
}

/// Height map of a simulated 3D record, for `--emit-maps`.
pub fn record_map(rec: &SimRecord, setting: &SimSetting) -> Result<HeightMap> {
    let curve = material_curve(&rec.spec)?;
    Ok(simulate_hi(&curve, setting)?.map)
}
