//! Uniaxial stress-strain laws: Hollomon, Ludwik and the nonparametric
//! point-stress model, plus sampling and least-squares fitting.
//!
//! Units follow the rest of the crate: moduli and stresses in GPa, strains
//! dimensionless (true strain).

use rand::Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::numopt::{self, Bounds, GradientSource, OptOptions, OptProblem};

/// Largest strain represented by the point-stress model.
pub const POINT_STRESS_MAX_STRAIN: f64 = 0.3;

const LUDWIK_TOL: f64 = 1e-12;
const LUDWIK_MAX_ITER: usize = 200;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum ConstitutiveError {
    #[error("strain {0} is outside the domain of the law")]
    NegativeStrain(f64),
    #[error("domain error: {0}")]
    Domain(String),
    #[error("self-consistent Ludwik solve did not converge at strain {strain} after {iterations} iterations")]
    NoConvergence { strain: f64, iterations: usize },
    #[error("fit failed: {0}")]
    Fit(String),
}

pub type Result<T> = std::result::Result<T, ConstitutiveError>;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct HollomonParams {
    #[serde(rename = "E")]
    pub e: f64,
    pub sigma_y: f64,
    pub n: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LudwikParams {
    #[serde(rename = "E")]
    pub e: f64,
    pub sigma_y: f64,
    pub n: f64,
    #[serde(rename = "K")]
    pub k: f64,
}

/// Point-stress law: an elastic segment up to `(sigma_y/E, sigma_y)` followed
/// by nine plastic nodes on a geometric strain progression ending at 0.3.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PointStressParams {
    pub q: f64,
    #[serde(rename = "E")]
    pub e: f64,
    pub sigma_y: f64,
    /// Stresses at nodes 2..=10.
    pub stresses: [f64; 9],
}

/// Raw tabulated curve, first node after the origin is the yield point.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RawCurve {
    pub points: Vec<(f64, f64)>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MaterialKind {
    Hollomon,
    Ludwik,
    #[serde(rename = "pointstress")]
    PointStress,
    Raw,
}

impl MaterialKind {
    pub fn as_str(self) -> &'static str {
        match self {
            MaterialKind::Hollomon => "hollomon",
            MaterialKind::Ludwik => "ludwik",
            MaterialKind::PointStress => "pointstress",
            MaterialKind::Raw => "raw",
        }
    }
}

impl std::str::FromStr for MaterialKind {
    type Err = ConstitutiveError;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "hollomon" => Ok(MaterialKind::Hollomon),
            "ludwik" => Ok(MaterialKind::Ludwik),
            "pointstress" | "point-stress" => Ok(MaterialKind::PointStress),
            "raw" => Ok(MaterialKind::Raw),
            other => Err(ConstitutiveError::Domain(format!("unknown material kind '{other}'"))),
        }
    }
}

impl std::fmt::Display for MaterialKind {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(self.as_str())
    }
}

/// A material's stress-strain law. Serializes as `{"kind": ..., "params": {...}}`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "params", rename_all = "lowercase")]
pub enum MaterialSpec {
    Hollomon(HollomonParams),
    Ludwik(LudwikParams),
    #[serde(rename = "pointstress")]
    PointStress(PointStressParams),
    Raw(RawCurve),
}

impl MaterialSpec {
    pub fn kind(&self) -> MaterialKind {
        match self {
            MaterialSpec::Hollomon(_) => MaterialKind::Hollomon,
            MaterialSpec::Ludwik(_) => MaterialKind::Ludwik,
            MaterialSpec::PointStress(_) => MaterialKind::PointStress,
            MaterialSpec::Raw(_) => MaterialKind::Raw,
        }
    }

    pub fn elastic_modulus(&self) -> f64 {
        match self {
            MaterialSpec::Hollomon(p) => p.e,
            MaterialSpec::Ludwik(p) => p.e,
            MaterialSpec::PointStress(p) => p.e,
            MaterialSpec::Raw(r) => r.points.get(1).map_or(f64::NAN, |&(e, s)| s / e),
        }
    }

    pub fn yield_stress(&self) -> f64 {
        match self {
            MaterialSpec::Hollomon(p) => p.sigma_y,
            MaterialSpec::Ludwik(p) => p.sigma_y,
            MaterialSpec::PointStress(p) => p.sigma_y,
            MaterialSpec::Raw(r) => r.points.get(1).map_or(f64::NAN, |&(_, s)| s),
        }
    }

    /// Named scalar parameters in a fixed order (empty for raw curves).
    pub fn named_params(&self) -> Vec<(String, f64)> {
        match self {
            MaterialSpec::Hollomon(p) => vec![
                ("E".into(), p.e),
                ("sigma_y".into(), p.sigma_y),
                ("n".into(), p.n),
            ],
            MaterialSpec::Ludwik(p) => vec![
                ("E".into(), p.e),
                ("sigma_y".into(), p.sigma_y),
                ("n".into(), p.n),
                ("K".into(), p.k),
            ],
            MaterialSpec::PointStress(p) => {
                let mut v = vec![
                    ("q".into(), p.q),
                    ("E".into(), p.e),
                    ("sigma_y".into(), p.sigma_y),
                ];
                for (i, s) in p.stresses.iter().enumerate() {
                    v.push((format!("sigma_{}", i + 2), *s));
                }
                v
            }
            MaterialSpec::Raw(_) => Vec::new(),
        }
    }

    /// Stress at `strain` evaluated from the law itself (not a tabulation).
    pub fn stress_at(&self, strain: f64) -> Result<f64> {
        match self {
            MaterialSpec::Hollomon(p) => eval_hollomon(p, strain),
            MaterialSpec::Ludwik(p) => eval_ludwik(p, strain),
            MaterialSpec::PointStress(_) | MaterialSpec::Raw(_) => {
                if strain < 0.0 {
                    return Err(ConstitutiveError::NegativeStrain(strain));
                }
                Ok(to_curve(self, POINT_STRESS_MAX_STRAIN, 2)?.stress_at(strain))
            }
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CurveOrigin {
    Hollomon,
    Ludwik,
    #[serde(rename = "pointstress")]
    PointStress,
    Raw,
}

/// Piecewise-linear true stress-strain curve starting at the origin.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct StressStrainCurve {
    pub points: Vec<(f64, f64)>,
    pub e: f64,
    pub sigma_y: f64,
    pub origin: CurveOrigin,
}

impl StressStrainCurve {
    pub fn yield_strain(&self) -> f64 {
        self.sigma_y / self.e
    }

    /// Linear interpolation; the last segment is extended beyond the final node.
    pub fn stress_at(&self, strain: f64) -> f64 {
        let pts = &self.points;
        if strain <= 0.0 {
            return 0.0;
        }
        let idx = pts.partition_point(|&(e, _)| e <= strain);
        let (i0, i1) = if idx >= pts.len() {
            (pts.len() - 2, pts.len() - 1)
        } else {
            (idx - 1, idx)
        };
        let (e0, s0) = pts[i0];
        let (e1, s1) = pts[i1];
        s0 + (s1 - s0) * (strain - e0) / (e1 - e0)
    }

    pub fn max_strain(&self) -> f64 {
        self.points.last().map_or(0.0, |p| p.0)
    }

    pub fn to_csv(&self) -> String {
        let mut out = String::from("strain,stress\n");
        for (e, s) in &self.points {
            out.push_str(&format!("{e},{s}\n"));
        }
        out
    }

    /// Checks the structural invariants: strictly increasing strains from 0,
    /// non-negative non-decreasing stresses, first slope equal to `e`.
    pub fn validate(&self) -> Result<()> {
        if self.points.len() < 2 || self.points[0] != (0.0, 0.0) {
            return Err(ConstitutiveError::Domain("curve must start at the origin".into()));
        }
        for w in self.points.windows(2) {
            if w[1].0 <= w[0].0 {
                return Err(ConstitutiveError::Domain("strains must increase strictly".into()));
            }
            if w[1].1 < w[0].1 || w[1].1 < 0.0 {
                return Err(ConstitutiveError::Domain("stresses must be non-decreasing".into()));
            }
        }
        let (e1, s1) = self.points[1];
        let slope = s1 / e1;
        if ((slope - self.e) / self.e).abs() > 1e-9 {
            return Err(ConstitutiveError::Domain(format!(
                "first segment slope {slope} differs from E = {}",
                self.e
            )));
        }
        Ok(())
    }
}

pub fn eval_hollomon(p: &HollomonParams, strain: f64) -> Result<f64> {
    if !(strain >= 0.0) {
        return Err(ConstitutiveError::NegativeStrain(strain));
    }
    let eps_y = p.sigma_y / p.e;
    if strain < eps_y {
        Ok(p.e * strain)
    } else {
        Ok(p.e * eps_y.powf(1.0 - p.n) * strain.powf(p.n))
    }
}

/// Ludwik flow stress for a given plastic strain: `max(sigma_y, K eps_p^n)`.
///
/// Below the strain where `K eps_p^n` reaches `sigma_y` the material flows at
/// the yield stress, which keeps the law continuous at yield.
pub fn ludwik_flow_stress(p: &LudwikParams, plastic_strain: f64) -> f64 {
    (p.k * plastic_strain.max(0.0).powf(p.n)).max(p.sigma_y)
}

/// Ludwik stress at total strain `strain`, with `eps_p = eps - sigma/E`
/// solved by bisection on `[sigma_y, sigma_y + K eps^n]`.
pub fn eval_ludwik(p: &LudwikParams, strain: f64) -> Result<f64> {
    if !(strain >= 0.0) {
        return Err(ConstitutiveError::NegativeStrain(strain));
    }
    if p.e * strain < p.sigma_y {
        return Ok(p.e * strain);
    }
    // residual(sigma) = flow(eps - sigma/E) - sigma, decreasing in sigma
    let residual = |s: f64| p.k * (strain - s / p.e).max(0.0).powf(p.n) - s;
    let mut lo = p.sigma_y;
    if residual(lo) <= 0.0 {
        return Ok(p.sigma_y);
    }
    let mut hi = p.sigma_y + p.k * strain.powf(p.n);
    for _ in 0..LUDWIK_MAX_ITER {
        let mid = 0.5 * (lo + hi);
        if residual(mid) > 0.0 {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= LUDWIK_TOL {
            return Ok(0.5 * (lo + hi));
        }
    }
    Err(ConstitutiveError::NoConvergence {
        strain,
        iterations: LUDWIK_MAX_ITER,
    })
}

/// Strain nodes `eps_1..eps_10` of the point-stress model: `eps_1 = sigma_y/E`,
/// `eps_10 = 0.3`, gaps growing geometrically with ratio `q`.
pub fn pointstress_strains(q: f64, e: f64, sigma_y: f64) -> Result<[f64; 10]> {
    let eps_y = sigma_y / e;
    if !(q >= 1.0) {
        return Err(ConstitutiveError::Domain(format!("common ratio q = {q} must be >= 1")));
    }
    if !(eps_y > 0.0 && eps_y < POINT_STRESS_MAX_STRAIN) {
        return Err(ConstitutiveError::Domain(format!(
            "yield strain {eps_y} must lie in (0, {POINT_STRESS_MAX_STRAIN})"
        )));
    }
    let span = POINT_STRESS_MAX_STRAIN - eps_y;
    let first_gap = if q == 1.0 {
        span / 9.0
    } else {
        span * (q - 1.0) / (q.powi(9) - 1.0)
    };
    let mut strains = [0.0; 10];
    strains[0] = eps_y;
    let mut gap = first_gap;
    for i in 1..10 {
        strains[i] = strains[i - 1] + gap;
        gap *= q;
    }
    strains[9] = POINT_STRESS_MAX_STRAIN;
    Ok(strains)
}

/// Sampling box for Ludwik parameters `(E, sigma_y, n, K)`.
pub const LUDWIK_BOX: [(f64, f64); 4] = [(30.0, 300.0), (0.05, 1.0), (0.1, 0.9), (0.1, 2.0)];
/// Sampling box for Hollomon parameters `(E, sigma_y, n)`.
pub const HOLLOMON_BOX: [(f64, f64); 3] = [(30.0, 300.0), (0.05, 3.0), (0.05, 0.5)];
/// Range of the point-stress common ratio.
pub const POINT_STRESS_Q: (f64, f64) = (1.1, 1.5);

/// Hardening-slope bounds for the point-stress generator: `k_2 ~ U(0.05 E, E)`,
/// `k_{i+1} = u k_i` with `u ~ U(0.2, 0.95)`.
const POINT_STRESS_K2_FRACTION: (f64, f64) = (0.05, 1.0);
const POINT_STRESS_DECAY: (f64, f64) = (0.2, 0.95);

fn uniform<R: Rng + ?Sized>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

pub fn sample_ludwik<R: Rng + ?Sized>(rng: &mut R) -> LudwikParams {
    LudwikParams {
        e: uniform(rng, LUDWIK_BOX[0]),
        sigma_y: uniform(rng, LUDWIK_BOX[1]),
        n: uniform(rng, LUDWIK_BOX[2]),
        k: uniform(rng, LUDWIK_BOX[3]),
    }
}

pub fn sample_hollomon<R: Rng + ?Sized>(rng: &mut R) -> HollomonParams {
    HollomonParams {
        e: uniform(rng, HOLLOMON_BOX[0]),
        sigma_y: uniform(rng, HOLLOMON_BOX[1]),
        n: uniform(rng, HOLLOMON_BOX[2]),
    }
}

/// Point-stress material whose slopes decrease strictly and stay positive by
/// construction (softened hardening).
pub fn sample_pointstress<R: Rng + ?Sized>(rng: &mut R) -> PointStressParams {
    let q = uniform(rng, POINT_STRESS_Q);
    let e = uniform(rng, LUDWIK_BOX[0]);
    let sigma_y = uniform(rng, LUDWIK_BOX[1]);
    let strains = pointstress_strains(q, e, sigma_y).expect("box keeps yield strain below 0.3");
    let mut slope = e * uniform(rng, POINT_STRESS_K2_FRACTION);
    let mut stresses = [0.0; 9];
    let mut prev = sigma_y;
    for i in 0..9 {
        if i > 0 {
            slope *= uniform(rng, POINT_STRESS_DECAY);
        }
        prev += slope * (strains[i + 1] - strains[i]);
        stresses[i] = prev;
    }
    PointStressParams {
        q,
        e,
        sigma_y,
        stresses,
    }
}

pub fn sample_material<R: Rng + ?Sized>(kind: MaterialKind, rng: &mut R) -> Result<MaterialSpec> {
    match kind {
        MaterialKind::Hollomon => Ok(MaterialSpec::Hollomon(sample_hollomon(rng))),
        MaterialKind::Ludwik => Ok(MaterialSpec::Ludwik(sample_ludwik(rng))),
        MaterialKind::PointStress => Ok(MaterialSpec::PointStress(sample_pointstress(rng))),
        MaterialKind::Raw => Err(ConstitutiveError::Domain("raw curves cannot be sampled".into())),
    }
}

/// Hardening slopes `k_2..k_10` of a point-stress law.
pub fn pointstress_slopes(p: &PointStressParams) -> Result<[f64; 9]> {
    let strains = pointstress_strains(p.q, p.e, p.sigma_y)?;
    let mut slopes = [0.0; 9];
    let mut prev = p.sigma_y;
    for i in 0..9 {
        slopes[i] = (p.stresses[i] - prev) / (strains[i + 1] - strains[i]);
        prev = p.stresses[i];
    }
    Ok(slopes)
}

/// Tabulates a law as a piecewise-linear curve up to `strain_cap`.
///
/// Analytic laws get the origin, the yield node and `samples` uniformly spaced
/// nodes on `(eps_y, strain_cap]`. Point-stress laws get exactly their nodes.
pub fn to_curve(spec: &MaterialSpec, strain_cap: f64, samples: usize) -> Result<StressStrainCurve> {
    let e = spec.elastic_modulus();
    let sigma_y = spec.yield_stress();
    let eps_y = sigma_y / e;
    let analytic = |origin: CurveOrigin, f: &dyn Fn(f64) -> Result<f64>| -> Result<StressStrainCurve> {
        if !(eps_y < strain_cap) {
            return Err(ConstitutiveError::Domain(format!(
                "yield strain {eps_y} exceeds strain cap {strain_cap}"
            )));
        }
        let samples = samples.max(1);
        let mut points = Vec::with_capacity(samples + 2);
        points.push((0.0, 0.0));
        points.push((eps_y, sigma_y));
        let step = (strain_cap - eps_y) / samples as f64;
        let mut last = sigma_y;
        for i in 1..=samples {
            let strain = if i == samples {
                strain_cap
            } else {
                eps_y + step * i as f64
            };
            let s = f(strain)?.max(last);
            last = s;
            points.push((strain, s));
        }
        Ok(StressStrainCurve {
            points,
            e,
            sigma_y,
            origin,
        })
    };
    match spec {
        MaterialSpec::Hollomon(p) => analytic(CurveOrigin::Hollomon, &|s| eval_hollomon(p, s)),
        MaterialSpec::Ludwik(p) => analytic(CurveOrigin::Ludwik, &|s| eval_ludwik(p, s)),
        MaterialSpec::PointStress(p) => {
            let strains = pointstress_strains(p.q, p.e, p.sigma_y)?;
            let mut points = Vec::with_capacity(11);
            points.push((0.0, 0.0));
            points.push((strains[0], p.sigma_y));
            for i in 0..9 {
                points.push((strains[i + 1], p.stresses[i]));
            }
            Ok(StressStrainCurve {
                points,
                e,
                sigma_y,
                origin: CurveOrigin::PointStress,
            })
        }
        MaterialSpec::Raw(r) => {
            let curve = StressStrainCurve {
                points: r.points.clone(),
                e,
                sigma_y,
                origin: CurveOrigin::Raw,
            };
            curve.validate()?;
            Ok(curve)
        }
    }
}

/// Result of fitting a parametric law to a curve.
#[derive(Debug, Clone, PartialEq)]
pub struct FitResult {
    pub spec: MaterialSpec,
    /// RMS of the relative stress residual over the fitted nodes.
    pub rms_relative_residual: f64,
    pub iterations: usize,
    pub converged: bool,
}

/// Least-squares fit of a Hollomon or Ludwik law to the nodes of `curve`.
///
/// Works in log-parameter space so positivity holds throughout; the elastic
/// modulus and yield stress start from the curve's own values.
pub fn fit_model(curve: &StressStrainCurve, kind: MaterialKind) -> Result<FitResult> {
    let plastic: Vec<(f64, f64)> = curve
        .points
        .iter()
        .copied()
        .filter(|&(e, s)| e > 0.0 && s > 0.0)
        .collect();
    let beyond_yield = plastic
        .iter()
        .filter(|&&(e, _)| e > curve.yield_strain() * (1.0 + 1e-9))
        .count();
    if beyond_yield < 6 {
        return Err(ConstitutiveError::Fit(format!(
            "need at least 6 points beyond yield, got {beyond_yield}"
        )));
    }
    let build = |z: &[f64]| -> MaterialSpec {
        match kind {
            MaterialKind::Hollomon => MaterialSpec::Hollomon(HollomonParams {
                e: z[0].exp(),
                sigma_y: z[1].exp(),
                n: z[2].exp().min(1.0),
            }),
            _ => MaterialSpec::Ludwik(LudwikParams {
                e: z[0].exp(),
                sigma_y: z[1].exp(),
                n: z[2].exp().min(1.0),
                k: z[3].exp(),
            }),
        }
    };
    let objective = |z: &[f64]| -> f64 {
        let spec = build(z);
        let mut acc = 0.0;
        for &(e, s) in &plastic {
            match spec.stress_at(e) {
                Ok(pred) => {
                    let r = (pred - s) / s;
                    acc += r * r;
                }
                Err(_) => return f64::INFINITY,
            }
        }
        acc / plastic.len() as f64
    };

    let x0 = match kind {
        MaterialKind::Hollomon => {
            let n0 = initial_exponent(curve, curve.yield_strain());
            vec![curve.e.ln(), curve.sigma_y.ln(), n0.ln()]
        }
        MaterialKind::Ludwik => ludwik_initial_guess(curve),
        _ => {
            return Err(ConstitutiveError::Fit(format!("cannot fit a {kind} law")));
        }
    };
    let dim = x0.len();
    let mut lower = vec![f64::NEG_INFINITY; dim];
    let mut upper = vec![f64::INFINITY; dim];
    // n in (0.001, 1]
    lower[2] = (1e-3f64).ln();
    upper[2] = 0.0;
    let problem = OptProblem {
        objective: &objective,
        gradient: GradientSource::FiniteDifference { eps: 1e-7 },
        bounds: Some(Bounds { lower, upper }),
        x0,
    };
    let opts = OptOptions {
        tol_grad: 1e-14,
        max_iter: 2000,
        f_target: None,
    };
    let res = numopt::bfgs_minimize(&problem, &opts)
        .map_err(|e| ConstitutiveError::Fit(format!("optimizer error: {e}")))?;
    if !res.f_best.is_finite() {
        return Err(ConstitutiveError::Fit(format!(
            "objective not finite after {} iterations ({:?})",
            res.iterations, res.reason
        )));
    }
    Ok(FitResult {
        spec: build(&res.x_best),
        rms_relative_residual: res.f_best.sqrt(),
        iterations: res.iterations,
        converged: res.converged,
    })
}

/// Log-log slope between the yield point and the last node.
fn initial_exponent(curve: &StressStrainCurve, eps_y: f64) -> f64 {
    let &(e_end, s_end) = curve.points.last().expect("non-empty curve");
    let n = (s_end / curve.sigma_y).ln() / (e_end / eps_y).ln();
    if n.is_finite() {
        n.clamp(0.01, 1.0)
    } else {
        0.2
    }
}

fn ludwik_initial_guess(curve: &StressStrainCurve) -> Vec<f64> {
    // log-log regression of stress on plastic strain over nodes above yield
    let mut pts = Vec::new();
    for &(e, s) in &curve.points {
        let ep = e - s / curve.e;
        if ep > 1e-6 && s > curve.sigma_y * (1.0 + 1e-9) {
            pts.push((ep.ln(), s.ln()));
        }
    }
    let (n, k) = if pts.len() >= 2 {
        let m = pts.len() as f64;
        let mx = pts.iter().map(|p| p.0).sum::<f64>() / m;
        let my = pts.iter().map(|p| p.1).sum::<f64>() / m;
        let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
        let sxx: f64 = pts.iter().map(|p| (p.0 - mx).powi(2)).sum();
        let n = (sxy / sxx).clamp(0.01, 1.0);
        (n, (my - n * mx).exp())
    } else {
        (0.5, curve.points.last().map_or(1.0, |p| p.1))
    };
    vec![curve.e.ln(), curve.sigma_y.ln(), n.ln(), k.ln()]
}

/// Strains at which pointwise stress targets are predicted: six uniform on
/// `[eps_y, eps_y + 0.01]` and ten uniform on `[eps_y + 0.02, 0.2]`.
pub fn pointwise_strain_grid(e: f64, sigma_y: f64) -> Result<[f64; 16]> {
    let eps_y = sigma_y / e;
    if !(eps_y > 0.0 && eps_y + 0.02 < 0.2) {
        return Err(ConstitutiveError::Domain(format!(
            "yield strain {eps_y} leaves no room for the pointwise grid"
        )));
    }
    let mut grid = [0.0; 16];
    for (i, g) in grid.iter_mut().take(6).enumerate() {
        *g = eps_y + 0.01 * i as f64 / 5.0;
    }
    let start = eps_y + 0.02;
    let step = (0.2 - start) / 9.0;
    for i in 0..10 {
        grid[6 + i] = if i == 9 { 0.2 } else { start + step * i as f64 };
    }
    Ok(grid)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn rel(a: f64, b: f64) -> f64 {
        ((a - b) / b).abs()
    }

    #[test]
    fn hollomon_examples() {
        let p = HollomonParams {
            e: 100.0,
            sigma_y: 0.1,
            n: 0.2,
        };
        assert!(rel(eval_hollomon(&p, 0.001).unwrap(), 0.1) < 1e-12);
        let expected = 100.0 * 1e-3f64.powf(0.8) * 1e-2f64.powf(0.2);
        assert!(rel(eval_hollomon(&p, 0.01).unwrap(), expected) < 1e-12);
        assert!((expected - 0.15849).abs() < 1e-5);
        let lin = HollomonParams { n: 1.0, ..p };
        assert!(rel(eval_hollomon(&lin, 0.05).unwrap(), 5.0) < 1e-12);
        assert!(matches!(
            eval_hollomon(&p, -1e-3),
            Err(ConstitutiveError::NegativeStrain(_))
        ));
    }

    #[test]
    fn ludwik_examples() {
        let p = LudwikParams {
            e: 200.0,
            sigma_y: 0.28,
            n: 0.65,
            k: 1.365,
        };
        let sigma = 1.365 * 0.1f64.powf(0.65);
        assert!((sigma - 0.3056).abs() < 1e-4);
        let strain = 0.1 + sigma / p.e;
        assert!((eval_ludwik(&p, strain).unwrap() - sigma).abs() < 1e-11);
        assert!((ludwik_flow_stress(&p, 1.0) - p.k).abs() < 1e-15);
        assert!((eval_ludwik(&p, 1.0 + p.k / p.e).unwrap() - p.k).abs() < 1e-11);

        let soft = LudwikParams {
            e: 100.0,
            sigma_y: 0.5,
            n: 0.3,
            k: 1.0,
        };
        assert!(rel(eval_ludwik(&soft, 0.001).unwrap(), 0.1) < 1e-12);
        assert!(eval_ludwik(&soft, -0.1).is_err());
    }

    #[test]
    fn ludwik_plateau_when_flow_below_yield() {
        let p = LudwikParams {
            e: 200.0,
            sigma_y: 0.8,
            n: 0.5,
            k: 0.2,
        };
        assert_eq!(eval_ludwik(&p, 0.05).unwrap(), 0.8);
    }

    #[test]
    fn pointstress_strain_examples() {
        let uniform = pointstress_strains(1.0, 100.0, 0.1).unwrap();
        for w in uniform.windows(2) {
            assert!(((w[1] - w[0]) - 0.299 / 9.0).abs() < 1e-14);
        }
        assert!((0.299f64 / 9.0 - 0.033222).abs() < 1e-6);
        let geo = pointstress_strains(1.5, 100.0, 0.1).unwrap();
        let d = 0.299 * 0.5 / (1.5f64.powi(9) - 1.0);
        assert!((geo[1] - (0.001 + d)).abs() < 1e-15);
        assert!((geo[1] - 0.0049928).abs() < 5e-7);
        assert_eq!(geo[9], 0.3);
        assert_eq!(uniform[9], 0.3);
        assert!(pointstress_strains(1.2, 1.0, 0.3).is_err());
        assert!(pointstress_strains(0.9, 100.0, 0.1).is_err());
    }

    #[test]
    fn sampling_is_deterministic_and_in_box() {
        let a = sample_material(MaterialKind::Ludwik, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        let b = sample_material(MaterialKind::Ludwik, &mut ChaCha8Rng::seed_from_u64(3)).unwrap();
        assert_eq!(a, b);
        let MaterialSpec::Ludwik(p) = a else { panic!() };
        for (v, (lo, hi)) in [p.e, p.sigma_y, p.n, p.k].iter().zip(LUDWIK_BOX) {
            assert!(*v >= lo && *v <= hi);
        }
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        for _ in 0..200 {
            let p = sample_pointstress(&mut rng);
            let k = pointstress_slopes(&p).unwrap();
            assert!(k[0] <= p.e && k[0] > 0.0);
            for w in k.windows(2) {
                assert!(w[1] < w[0] && w[1] > 0.0);
            }
            assert!(p.stresses[0] > p.sigma_y);
        }
    }

    #[test]
    fn curves_for_each_kind() {
        let lin = MaterialSpec::Hollomon(HollomonParams {
            e: 100.0,
            sigma_y: 0.1,
            n: 1.0,
        });
        let c = to_curve(&lin, 0.3, 50).unwrap();
        c.validate().unwrap();
        for &(e, s) in &c.points {
            assert!((s - 100.0 * e).abs() < 1e-12);
        }

        let mut rng = ChaCha8Rng::seed_from_u64(5);
        let ps = MaterialSpec::PointStress(sample_pointstress(&mut rng));
        let c = to_curve(&ps, 0.3, 50).unwrap();
        c.validate().unwrap();
        assert_eq!(c.points.len(), 11);
        let MaterialSpec::PointStress(p) = &ps else { unreachable!() };
        let strains = pointstress_strains(p.q, p.e, p.sigma_y).unwrap();
        for i in 0..9 {
            assert_eq!(c.stress_at(strains[i + 1]), p.stresses[i]);
        }

        let lud = MaterialSpec::Ludwik(LudwikParams {
            e: 200.0,
            sigma_y: 0.28,
            n: 0.65,
            k: 1.365,
        });
        let c = to_curve(&lud, 0.3, 400).unwrap();
        c.validate().unwrap();
        assert!(c.points.windows(2).all(|w| w[1].1 >= w[0].1));
    }

    #[test]
    fn strain_grid_examples() {
        let g = pointwise_strain_grid(200.0, 0.2).unwrap();
        let first = [0.001, 0.003, 0.005, 0.007, 0.009, 0.011];
        for (a, b) in g.iter().zip(first) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(((g[7] - g[6]) - (0.2 - 0.021) / 9.0).abs() < 1e-15);
        assert!(((0.2 - 0.021) / 9.0 - 0.0198889f64).abs() < 1e-7);
        assert!(g.windows(2).all(|w| w[1] > w[0]));
        assert_eq!(g[15], 0.2);
        assert!(pointwise_strain_grid(10.0, 1.9).is_err());
    }

    #[test]
    fn spec_json_shape() {
        let spec = MaterialSpec::Ludwik(LudwikParams {
            e: 200.0,
            sigma_y: 0.28,
            n: 0.65,
            k: 1.365,
        });
        let v: serde_json::Value = serde_json::to_value(&spec).unwrap();
        assert_eq!(v["kind"], "ludwik");
        assert_eq!(v["params"]["K"], 1.365);
        let back: MaterialSpec = serde_json::from_value(v).unwrap();
        assert_eq!(back, spec);
    }

    #[test]
    fn curve_csv_has_header() {
        let spec = MaterialSpec::Hollomon(HollomonParams {
            e: 100.0,
            sigma_y: 0.1,
            n: 0.2,
        });
        let csv = to_curve(&spec, 0.3, 4).unwrap().to_csv();
        let mut lines = csv.lines();
        assert_eq!(lines.next(), Some("strain,stress"));
        assert_eq!(lines.count(), 6);
    }
}
