//! Box-constrained BFGS with a backtracking Armijo line search, plus central
//! finite-difference gradients.
//!
//! Bounds are handled by projecting trial points onto the box and skipping the
//! inverse-Hessian update whenever the curvature condition `s'y > 0` fails.

use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum OptError {
    #[error("dimension mismatch: {0}")]
    Dimension(String),
    #[error("start point is outside the bounds")]
    StartOutsideBounds,
    #[error("objective is not finite at the start point")]
    NonFiniteStart,
}

/// How the gradient is obtained.
pub enum GradientSource<'a> {
    Analytic(&'a dyn Fn(&[f64]) -> Vec<f64>),
    FiniteDifference { eps: f64 },
}

#[derive(Debug, Clone, PartialEq)]
pub struct Bounds {
    pub lower: Vec<f64>,
    pub upper: Vec<f64>,
}

impl Bounds {
    pub fn project(&self, x: &mut [f64]) {
        for ((xi, lo), hi) in x.iter_mut().zip(&self.lower).zip(&self.upper) {
            *xi = xi.clamp(*lo, *hi);
        }
    }

    fn contains(&self, x: &[f64]) -> bool {
        x.iter()
            .zip(self.lower.iter().zip(&self.upper))
            .all(|(xi, (lo, hi))| *xi >= *lo && *xi <= *hi)
    }
}

pub struct OptProblem<'a> {
    pub objective: &'a dyn Fn(&[f64]) -> f64,
    pub gradient: GradientSource<'a>,
    pub bounds: Option<Bounds>,
    pub x0: Vec<f64>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct OptOptions {
    pub tol_grad: f64,
    pub max_iter: usize,
    /// Stop as soon as the objective drops to this value.
    pub f_target: Option<f64>,
}

impl Default for OptOptions {
    fn default() -> Self {
        Self {
            tol_grad: 1e-8,
            max_iter: 500,
            f_target: None,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Termination {
    GradientTolerance,
    TargetReached,
    MaxIterations,
    /// The line search could not decrease the objective any further.
    LineSearchStalled,
    /// The objective or its gradient became non-finite; the last good iterate is returned.
    NonFinite,
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptResult {
    pub x_best: Vec<f64>,
    pub f_best: f64,
    pub iterations: usize,
    pub converged: bool,
    pub reason: Termination,
}

/// Central differences with step `eps * max(1, |x_i|)`.
pub fn finite_diff_grad(f: &dyn Fn(&[f64]) -> f64, x: &[f64], eps: f64) -> Vec<f64> {
    let mut probe = x.to_vec();
    let mut grad = vec![0.0; x.len()];
    for i in 0..x.len() {
        let h = eps * x[i].abs().max(1.0);
        probe[i] = x[i] + h;
        let fp = f(&probe);
        probe[i] = x[i] - h;
        let fm = f(&probe);
        probe[i] = x[i];
        grad[i] = (fp - fm) / (2.0 * h);
    }
    grad
}

const ARMIJO_C: f64 = 1e-4;
const SHRINK: f64 = 0.5;
const MAX_BACKTRACKS: usize = 60;

/// Gradient with components zeroed where a bound is active and the gradient
/// points out of the box.
fn projected_gradient(x: &[f64], g: &[f64], bounds: Option<&Bounds>) -> Vec<f64> {
    match bounds {
        None => g.to_vec(),
        Some(b) => x
            .iter()
            .zip(g)
            .enumerate()
            .map(|(i, (&xi, &gi))| {
                if (xi <= b.lower[i] && gi > 0.0) || (xi >= b.upper[i] && gi < 0.0) {
                    0.0
                } else {
                    gi
                }
            })
            .collect(),
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn inf_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0f64, |m, x| m.max(x.abs()))
}

pub fn bfgs_minimize(problem: &OptProblem<'_>, opts: &OptOptions) -> Result<OptResult, OptError> {
    let d = problem.x0.len();
    if d == 0 {
        return Err(OptError::Dimension("empty start point".into()));
    }
    let bounds = problem.bounds.as_ref();
    if let Some(b) = bounds {
        if b.lower.len() != d || b.upper.len() != d {
            return Err(OptError::Dimension("bounds length differs from x0".into()));
        }
        if !b.contains(&problem.x0) {
            return Err(OptError::StartOutsideBounds);
        }
    }
    let f = problem.objective;
    let grad = |x: &[f64]| -> Vec<f64> {
        match &problem.gradient {
            GradientSource::Analytic(g) => g(x),
            GradientSource::FiniteDifference { eps } => finite_diff_grad(f, x, *eps),
        }
    };

    let mut x = problem.x0.clone();
    let mut fx = f(&x);
    if !fx.is_finite() {
        return Err(OptError::NonFiniteStart);
    }
    let mut g = grad(&x);
    if g.len() != d {
        return Err(OptError::Dimension("gradient length differs from x0".into()));
    }
    if g.iter().any(|v| !v.is_finite()) {
        return Ok(OptResult {
            x_best: x,
            f_best: fx,
            iterations: 0,
            converged: false,
            reason: Termination::NonFinite,
        });
    }

    // dense inverse Hessian, row-major
    let mut h = vec![0.0; d * d];
    let reset = |h: &mut [f64], scale: f64| {
        h.iter_mut().for_each(|v| *v = 0.0);
        for i in 0..d {
            h[i * d + i] = scale;
        }
    };
    reset(&mut h, 1.0);
    let mut scaled = false;

    let mut iterations = 0;
    let mut reason = Termination::MaxIterations;
    let mut x_trial = vec![0.0; d];
    loop {
        if opts.f_target.is_some_and(|t| fx <= t) {
            reason = Termination::TargetReached;
            break;
        }
        let pg = projected_gradient(&x, &g, bounds);
        if inf_norm(&pg) < opts.tol_grad {
            reason = Termination::GradientTolerance;
            break;
        }
        if iterations >= opts.max_iter {
            break;
        }

        let mut dir: Vec<f64> = (0..d)
            .map(|i| -(0..d).map(|j| h[i * d + j] * pg[j]).sum::<f64>())
            .collect();
        if let Some(b) = bounds {
            for i in 0..d {
                if (x[i] <= b.lower[i] && dir[i] < 0.0) || (x[i] >= b.upper[i] && dir[i] > 0.0) {
                    dir[i] = 0.0;
                }
            }
        }
        if !(dot(&dir, &pg) < 0.0) {
            reset(&mut h, 1.0);
            scaled = false;
            dir = pg.iter().map(|v| -v).collect();
        }
        if !scaled {
            // first step along steepest descent: keep the trial move modest
            let n = inf_norm(&dir);
            if n > 1.0 {
                dir.iter_mut().for_each(|v| *v /= n);
            }
        }

        let mut alpha = 1.0;
        let mut accepted = None;
        for _ in 0..MAX_BACKTRACKS {
            for i in 0..d {
                x_trial[i] = x[i] + alpha * dir[i];
            }
            if let Some(b) = bounds {
                b.project(&mut x_trial);
            }
            let ft = f(&x_trial);
            if !ft.is_finite() {
                alpha *= SHRINK;
                continue;
            }
            let step: Vec<f64> = x_trial.iter().zip(&x).map(|(a, b)| a - b).collect();
            let decrease = dot(&g, &step);
            if ft <= fx + ARMIJO_C * decrease && decrease <= 0.0 {
                accepted = Some((ft, step));
                break;
            }
            alpha *= SHRINK;
        }
        iterations += 1;
        let Some((f_new, s)) = accepted else {
            reason = Termination::LineSearchStalled;
            break;
        };
        if inf_norm(&s) == 0.0 {
            reason = Termination::LineSearchStalled;
            break;
        }
        let x_new = x_trial.clone();
        let g_new = grad(&x_new);
        if g_new.iter().any(|v| !v.is_finite()) {
            x = x_new;
            fx = f_new;
            reason = Termination::NonFinite;
            break;
        }
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        let yy = dot(&y, &y);
        if sy > 1e-12 * (dot(&s, &s) * yy).sqrt() && sy > 0.0 {
            if !scaled {
                reset(&mut h, sy / yy);
                scaled = true;
            }
            let rho = 1.0 / sy;
            // H <- (I - rho s y') H (I - rho y s') + rho s s'
            let hy: Vec<f64> = (0..d)
                .map(|i| (0..d).map(|j| h[i * d + j] * y[j]).sum())
                .collect();
            let yhy = dot(&y, &hy);
            for i in 0..d {
                for j in 0..d {
                    h[i * d + j] += -rho * (hy[i] * s[j] + s[i] * hy[j])
                        + (rho * rho * yhy + rho) * s[i] * s[j];
                }
            }
        }
        x = x_new;
        fx = f_new;
        g = g_new;
    }

    Ok(OptResult {
        converged: matches!(reason, Termination::GradientTolerance | Termination::TargetReached),
        x_best: x,
        f_best: fx,
        iterations,
        reason,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn unconstrained<'a>(f: &'a dyn Fn(&[f64]) -> f64, g: &'a dyn Fn(&[f64]) -> Vec<f64>, x0: Vec<f64>) -> OptProblem<'a> {
        OptProblem {
            objective: f,
            gradient: GradientSource::Analytic(g),
            bounds: None,
            x0,
        }
    }

    #[test]
    fn sphere() {
        let f = |x: &[f64]| x.iter().map(|v| v * v).sum::<f64>();
        let g = |x: &[f64]| x.iter().map(|v| 2.0 * v).collect::<Vec<_>>();
        let r = bfgs_minimize(&unconstrained(&f, &g, vec![1.0, 1.0]), &OptOptions::default()).unwrap();
        assert!(r.converged);
        assert!(r.iterations <= 5, "{} iterations", r.iterations);
        assert!(r.x_best.iter().all(|v| v.abs() < 1e-10));
    }

    #[test]
    fn rosenbrock() {
        let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
        let g = |x: &[f64]| {
            vec![
                -2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]),
                200.0 * (x[1] - x[0] * x[0]),
            ]
        };
        let r = bfgs_minimize(&unconstrained(&f, &g, vec![-1.2, 1.0]), &OptOptions::default()).unwrap();
        assert!(r.converged, "{:?}", r);
        assert!((r.x_best[0] - 1.0).abs() < 1e-6 && (r.x_best[1] - 1.0).abs() < 1e-6);
    }

    #[test]
    fn bounded_quadratic_hits_face() {
        // min (x-2)^2 + (y+1)^2 on [0,1]x[0,1]: KKT gives (1, 0)
        let f = |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] + 1.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] + 1.0)];
        let p = OptProblem {
            objective: &f,
            gradient: GradientSource::Analytic(&g),
            bounds: Some(Bounds {
                lower: vec![0.0, 0.0],
                upper: vec![1.0, 1.0],
            }),
            x0: vec![0.5, 0.5],
        };
        let r = bfgs_minimize(&p, &OptOptions::default()).unwrap();
        assert!(r.converged);
        assert!((r.x_best[0] - 1.0).abs() < 1e-12 && r.x_best[1].abs() < 1e-12);

        // minimum on one face only: (x-0.5)^2 + (y-3)^2 -> (0.5, 1)
        let f = |x: &[f64]| (x[0] - 0.5).powi(2) + (x[1] - 3.0).powi(2);
        let g = |x: &[f64]| vec![2.0 * (x[0] - 0.5), 2.0 * (x[1] - 3.0)];
        let p = OptProblem {
            objective: &f,
            gradient: GradientSource::Analytic(&g),
            bounds: Some(Bounds {
                lower: vec![0.0, 0.0],
                upper: vec![1.0, 1.0],
            }),
            x0: vec![0.1, 0.2],
        };
        let r = bfgs_minimize(&p, &OptOptions::default()).unwrap();
        assert!((r.x_best[0] - 0.5).abs() < 1e-8 && (r.x_best[1] - 1.0).abs() < 1e-12);
    }

    #[test]
    fn start_outside_bounds_rejected() {
        let f = |x: &[f64]| x[0] * x[0];
        let p = OptProblem {
            objective: &f,
            gradient: GradientSource::FiniteDifference { eps: 1e-6 },
            bounds: Some(Bounds {
                lower: vec![0.0],
                upper: vec![1.0],
            }),
            x0: vec![2.0],
        };
        assert_eq!(bfgs_minimize(&p, &OptOptions::default()), Err(OptError::StartOutsideBounds));
    }

    #[test]
    fn non_finite_objective_aborts_with_last_iterate() {
        // finite only for x > 0.5; the minimum of x^2 lies outside the domain
        let f = |x: &[f64]| if x[0] > 0.5 { x[0] * x[0] } else { f64::NAN };
        let p = OptProblem {
            objective: &f,
            gradient: GradientSource::FiniteDifference { eps: 1e-6 },
            bounds: None,
            x0: vec![2.0],
        };
        let r = bfgs_minimize(&p, &OptOptions::default()).unwrap();
        assert!(!r.converged);
        assert!(r.x_best[0] > 0.5 && r.f_best.is_finite());
        assert!(r.f_best <= 4.0);
    }

    #[test]
    fn finite_difference_examples() {
        let lin = |x: &[f64]| 3.0 * x[0] - 2.0 * x[1] + 0.5;
        let g = finite_diff_grad(&lin, &[0.3, -1.7], 1e-6);
        assert!((g[0] - 3.0).abs() < 1e-9 && (g[1] + 2.0).abs() < 1e-9);
        let sq = |x: &[f64]| x[0] * x[0];
        assert!((finite_diff_grad(&sq, &[1.0], 1e-6)[0] - 2.0).abs() < 1e-8);
    }

    #[test]
    fn finite_difference_matches_curvature_cubic_derivative() {
        // derivative of -1.131 L^3 + 13.635 L^2 - 30.594 L + 29.267, by hand
        let cubic = |x: &[f64]| {
            let l = x[0];
            -1.131 * l.powi(3) + 13.635 * l * l - 30.594 * l + 29.267
        };
        for l in [2.0, 4.5, 6.0859, 8.0] {
            let exact = -3.393 * l * l + 27.27 * l - 30.594;
            let fd = finite_diff_grad(&cubic, &[l], 1e-6)[0];
            assert!((fd - exact).abs() < 1e-5, "{l}: {fd} vs {exact}");
        }
    }
}
