//! Acceptance run: one PASS/FAIL line per criterion. Set `ACCEPTANCE_STRICT`
//! to exit non-zero when any criterion fails, `ACCEPTANCE_ONLY=1,3` to pick.

use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::sync::OnceLock;
use std::time::Instant;

use imprint_core::constitutive::{
    eval_hollomon, eval_ludwik, ludwik_flow_stress, pointstress_strains, pointwise_strain_grid, sample_hollomon,
    sample_ludwik, sample_material, HollomonParams, LudwikParams, MaterialKind, MaterialSpec,
};
use imprint_core::mfnn::{
    self, calibrate, evaluate_materials, predicted_polyline, train_base, train_pointwise, transfer_hi, CalibrationConfig,
    TargetSet, TrainedModel, MU_GRID, NU_GRID,
};
use imprint_core::neural::{self, backprop_grad, batch_loss, Mlp, TrainConfig};
use imprint_core::numopt::{bfgs_minimize, Bounds, GradientSource, OptOptions, OptProblem};
use imprint_core::profile::{self, StripMode};
use imprint_core::surrogate::{
    gen_dataset, gen_experiments, simulate_features, Dataset, ExperimentEmulator, SimSetting, HIDDEN_MU, HIDDEN_NU,
};
use imprint_core::uniqueness::{distinguishing_ratio, nonunique_curve, train_forward_active, ActiveConfig, FeatureSubset, SiblingConfig};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Outcome = Result<String, String>;

fn check(ok: bool, detail: String) -> Outcome {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn close(got: f64, want: f64, tol: f64, what: &str) -> Result<(), String> {
    if (got - want).abs() <= tol * want.abs().max(1.0) {
        Ok(())
    } else {
        Err(format!("{what}: {got} vs {want}"))
    }
}

fn rel(a: f64, b: f64) -> f64 {
    (a - b).abs() / b.abs()
}

/// Shared LO Ludwik set and base inverse model.
fn base_fixture() -> &'static (Dataset, TrainedModel) {
    static CELL: OnceLock<(Dataset, TrainedModel)> = OnceLock::new();
    CELL.get_or_init(|| {
        let lo = gen_dataset(&[(MaterialKind::Ludwik, 4000)], &SimSetting::default(), 1, StripMode::Axes).unwrap();
        let base = train_base(&lo, TargetSet::Ludwik, 500, &TrainConfig::default()).unwrap();
        (lo, base)
    })
}

fn math_suite() -> Outcome {
    (|| -> Result<(), String> {
        close(profile::hardness(10.0, 2.0).map_err(|e| e.to_string())?, 5.0, 1e-12, "H(10, 2)")?;
        close(profile::hardness(0.98, 0.49).map_err(|e| e.to_string())?, 2.0, 1e-12, "H(0.98, 0.49)")?;

        let h = HollomonParams {
            e: 100.0,
            sigma_y: 0.1,
            n: 0.2,
        };
        let ev = |p: &HollomonParams, s| eval_hollomon(p, s).map_err(|e| e.to_string());
        close(ev(&h, 0.001)?, 0.1, 1e-12, "Hollomon at yield")?;
        close(ev(&h, 0.01)?, 100.0 * 1e-3f64.powf(0.8) * 1e-2f64.powf(0.2), 1e-12, "Hollomon at 0.01")?;
        close(ev(&HollomonParams { n: 1.0, ..h }, 0.05)?, 5.0, 1e-12, "Hollomon n = 1")?;

        let l = LudwikParams {
            e: 200.0,
            sigma_y: 0.28,
            n: 0.65,
            k: 1.365,
        };
        let s = ludwik_flow_stress(&l, 0.1);
        close(s, 1.365 * 0.1f64.powf(0.65), 1e-12, "Ludwik flow stress at 0.1")?;
        close(s, 0.3056, 1e-3, "Ludwik flow stress rounded")?;
        close(eval_ludwik(&l, 0.1 + s / l.e).map_err(|e| e.to_string())?, s, 1e-10, "Ludwik total strain")?;
        close(ludwik_flow_stress(&l, 1.0), l.k, 1e-12, "Ludwik unit plastic strain")?;
        let soft = LudwikParams {
            e: 100.0,
            sigma_y: 0.5,
            ..l
        };
        close(eval_ludwik(&soft, 0.001).map_err(|e| e.to_string())?, 0.1, 1e-12, "Ludwik elastic")?;

        let mape = |t: &[f64], p: &[f64]| neural::mape(t, p).map_err(|e| e.to_string());
        close(mape(&[2.0, 4.0], &[1.8, 4.4])?, 0.1, 1e-12, "MAPE")?;
        close(mape(&[1.0], &[2.0])?, 1.0, 1e-12, "MAPE single")?;
        close(mape(&[3.0, -2.0], &[3.0, -2.0])?, 0.0, 1e-12, "MAPE identical")?;

        let ratio = |f: &[f64], g: &[f64]| distinguishing_ratio(f, g).map_err(|e| e.to_string());
        close(ratio(&[1.0, 2.0, 4.0], &[1.05, 1.9, 4.0])?, 0.05, 1e-12, "distinguishing ratio")?;
        close(ratio(&[2.0], &[1.0])?, 0.5, 1e-12, "distinguishing ratio single")?;

        let y = mfnn::combine(0.19, 0.33, &[1.0], &[2.0], &[3.0]);
        close(y[0], 2.29, 1e-12, "committee combination")?;

        let uniform = pointstress_strains(1.0, 100.0, 0.1).map_err(|e| e.to_string())?;
        for w in uniform.windows(2) {
            close(w[1] - w[0], 0.299 / 9.0, 1e-12, "uniform gap")?;
        }
        let geo = pointstress_strains(1.5, 100.0, 0.1).map_err(|e| e.to_string())?;
        close(geo[1], 0.001 + 0.299 * 0.5 / (1.5f64.powi(9) - 1.0), 1e-12, "second node")?;
        close(geo[1], 0.0049928, 1e-6, "second node rounded")?;
        if geo[9] != 0.3 || uniform[9] != 0.3 {
            return Err("last node is not 0.3".into());
        }

        let grid = pointwise_strain_grid(200.0, 0.2).map_err(|e| e.to_string())?;
        for (got, want) in grid.iter().zip([0.001, 0.003, 0.005, 0.007, 0.009, 0.011]) {
            close(*got, want, 1e-12, "pointwise grid")?;
        }
        close(grid[15] - grid[14], (0.2 - 0.021) / 9.0, 1e-10, "pointwise grid tail step")?;

        let mut rng = ChaCha8Rng::seed_from_u64(2718);
        let mut worst: f64 = 0.0;
        for _ in 0..1000 {
            let h = sample_hollomon(&mut rng);
            worst = worst.max(rel(ev(&h, h.sigma_y / h.e)?, h.sigma_y));
            let l = sample_ludwik(&mut rng);
            worst = worst.max(rel(eval_ludwik(&l, l.sigma_y / l.e).map_err(|e| e.to_string())?, l.sigma_y));
            worst = worst.max(rel(ludwik_flow_stress(&l, 0.0), l.sigma_y));
        }
        if worst >= 1e-12 {
            return Err(format!("yield continuity error {worst:e}"));
        }
        Ok(())
    })()
    .map(|_| "unit examples and yield continuity over 1000 draws".to_string())
}

/// Smallest hidden pre-activation magnitude of one input.
fn kink_margin(m: &Mlp, x: &[f64]) -> f64 {
    let mut a = m.normalize_input(x);
    let layers = m.dims.len() - 1;
    let mut margin = f64::INFINITY;
    for l in 0..layers - 1 {
        let z: Vec<f64> = (0..m.dims[l + 1])
            .map(|o| m.biases[l][o] + (0..m.dims[l]).map(|i| m.weights[l][o * m.dims[l] + i] * a[i]).sum::<f64>())
            .collect();
        margin = z.iter().fold(margin, |acc, v| acc.min(v.abs()));
        a = z.iter().map(|v| v.max(0.0)).collect();
    }
    margin
}

fn gradient_check() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(2024);
    let eps = 1e-6;
    let mut worst: f64 = 0.0;
    for net in 0..20u64 {
        let mut m = Mlp::with_hidden(4, &[8, 8, 8], 2, net);
        for b in m.biases.iter_mut().flatten() {
            *b = rng.random_range(-0.2..0.2);
        }
        for batch in [1usize, 7, 32] {
            // central differences are only meaningful when no rectifier
            // switches within the probe step
            let (mut xs, mut ys) = (Vec::new(), Vec::new());
            while xs.len() < batch {
                let x: Vec<f64> = (0..4).map(|_| rng.random_range(-2.0..2.0)).collect();
                let y: Vec<f64> = (0..2).map(|_| rng.random_range(-1.0..1.0)).collect();
                if kink_margin(&m, &x) > 1e-4 {
                    xs.push(x);
                    ys.push(y);
                }
            }
            let analytic = backprop_grad(&m, &xs, &ys).unwrap().1.flat();
            let base = m.params_flat();
            let mut probe = m.clone();
            for k in 0..base.len() {
                let mut p = base.clone();
                p[k] = base[k] + eps;
                probe.set_params_flat(&p).unwrap();
                let up = batch_loss(&probe, &xs, &ys).unwrap();
                p[k] = base[k] - eps;
                probe.set_params_flat(&p).unwrap();
                let down = batch_loss(&probe, &xs, &ys).unwrap();
                let fd = (up - down) / (2.0 * eps);
                worst = worst.max((analytic[k] - fd).abs() / (analytic[k].abs() + fd.abs()).max(1e-7));
            }
        }
    }
    check(worst < 1e-4, format!("max relative gradient error {worst:.2e} over 20 nets x 3 batch sizes"))
}

fn bfgs_suite() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(77);
    let mut notes = Vec::new();
    let mut ok = true;
    for d in 1..=8usize {
        for _ in 0..5 {
            let b: Vec<f64> = (0..d * d).map(|_| rng.random_range(-1.0..1.0)).collect();
            let mut a = vec![0.0; d * d];
            for i in 0..d {
                for j in 0..d {
                    a[i * d + j] = (0..d).map(|k| b[i * d + k] * b[j * d + k]).sum::<f64>() / d as f64;
                }
                a[i * d + i] += 1.0;
            }
            let xs: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let x0: Vec<f64> = (0..d).map(|_| rng.random_range(-3.0..3.0)).collect();
            let grad = |x: &[f64]| -> Vec<f64> {
                (0..d).map(|i| (0..d).map(|j| a[i * d + j] * (x[j] - xs[j])).sum()).collect()
            };
            let f = |x: &[f64]| -> f64 { 0.5 * grad(x).iter().zip(x.iter().zip(&xs)).map(|(g, (xi, si))| g * (xi - si)).sum::<f64>() };
            let problem = OptProblem {
                objective: &f,
                gradient: GradientSource::Analytic(&grad),
                bounds: None,
                x0,
            };
            let r = bfgs_minimize(&problem, &OptOptions::default()).unwrap();
            let err = r.x_best.iter().zip(&xs).fold(0.0f64, |m, (u, v)| m.max((u - v).abs()));
            if err > 1e-8 || r.iterations > d + 10 {
                ok = false;
                notes.push(format!("d={d}: error {err:.1e} after {} iterations", r.iterations));
            }
        }
    }
    let f = |x: &[f64]| (1.0 - x[0]).powi(2) + 100.0 * (x[1] - x[0] * x[0]).powi(2);
    let g = |x: &[f64]| vec![-2.0 * (1.0 - x[0]) - 400.0 * x[0] * (x[1] - x[0] * x[0]), 200.0 * (x[1] - x[0] * x[0])];
    let r = bfgs_minimize(
        &OptProblem {
            objective: &f,
            gradient: GradientSource::Analytic(&g),
            bounds: None,
            x0: vec![-1.2, 1.0],
        },
        &OptOptions::default(),
    )
    .unwrap();
    let rosen = (r.x_best[0] - 1.0).abs().max((r.x_best[1] - 1.0).abs());
    if rosen > 1e-6 {
        ok = false;
        notes.push(format!("Rosenbrock error {rosen:.1e}"));
    }

    // box-constrained quadratic with its minimum outside ends on the face
    let f = |x: &[f64]| (x[0] - 2.0).powi(2) + (x[1] - 0.5).powi(2);
    let g = |x: &[f64]| vec![2.0 * (x[0] - 2.0), 2.0 * (x[1] - 0.5)];
    let r = bfgs_minimize(
        &OptProblem {
            objective: &f,
            gradient: GradientSource::Analytic(&g),
            bounds: Some(Bounds {
                lower: vec![0.0, 0.0],
                upper: vec![1.0, 1.0],
            }),
            x0: vec![0.2, 0.9],
        },
        &OptOptions::default(),
    )
    .unwrap();
    if (r.x_best[0] - 1.0).abs() > 1e-10 || (r.x_best[1] - 0.5).abs() > 1e-8 {
        ok = false;
        notes.push(format!("bounded minimum at {:?}", r.x_best));
    }
    let detail = if notes.is_empty() {
        format!("40 quadratics d<=8 within d+10 iterations, Rosenbrock error {rosen:.1e}")
    } else {
        notes.join("; ")
    };
    check(ok, detail)
}

fn inverse_baseline() -> Outcome {
    let (_, base) = base_fixture();
    let m = &base.val_mape;
    let detail = format!(
        "val MAPE E {:.2}% sigma_y {:.2}% n {:.2}% K {:.2}% (best epoch {})",
        100.0 * m[0],
        100.0 * m[1],
        100.0 * m[2],
        100.0 * m[3],
        base.history.best_epoch
    );
    check(m.iter().all(|v| *v < 0.05), detail)
}

fn median(mut v: Vec<f64>) -> f64 {
    v.sort_by(f64::total_cmp);
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        0.5 * (v[n / 2 - 1] + v[n / 2])
    }
}

fn transfer_benefit() -> Outcome {
    let (_, base) = base_fixture();
    let setting = SimSetting::hi(0.3, 0.15);
    let val = gen_dataset(&[(MaterialKind::Ludwik, 100)], &setting, 900_000, StripMode::Axes).unwrap();
    let sizes = [10usize, 20, 30, 40, 50];
    let mut with = vec![Vec::new(); sizes.len()];
    let mut without = vec![Vec::new(); sizes.len()];
    for s in 0..5u64 {
        let full = gen_dataset(&[(MaterialKind::Ludwik, 50)], &setting, 500_000 + 1000 * s, StripMode::Axes).unwrap();
        let cfg = TrainConfig {
            seed: s,
            ..TrainConfig::default()
        };
        for (k, &n) in sizes.iter().enumerate() {
            let hi = Dataset {
                records: full.records[..n].to_vec(),
                skipped: 0,
            };
            let a = transfer_hi(Some(&base.mlp), &hi, None, Some(&val), TargetSet::Ludwik, &cfg).unwrap();
            let b = transfer_hi(None, &hi, None, Some(&val), TargetSet::Ludwik, &cfg).unwrap();
            with[k].push(a.mean_val_mape());
            without[k].push(b.mean_val_mape());
        }
    }
    let headline = with[4][0];
    let medians: Vec<(f64, f64)> = with.iter().zip(&without).map(|(a, b)| (median(a.clone()), median(b.clone()))).collect();
    let ordered = medians.iter().all(|(a, b)| a <= b);
    let table: Vec<String> = sizes
        .iter()
        .zip(&medians)
        .map(|(n, (a, b))| format!("{n}: {:.1}%/{:.1}%", 100.0 * a, 100.0 * b))
        .collect();
    check(
        headline < 0.05 && ordered,
        format!("n=50 with Y1 {:.2}%; median with/without {}", 100.0 * headline, table.join(", ")),
    )
}

fn physics_boosting() -> Outcome {
    let (_, base) = base_fixture();
    let (exp, _) = gen_experiments(MaterialKind::Ludwik, 23, 8, 300, &ExperimentEmulator::default(), StripMode::Axes).unwrap();
    let out = calibrate(&base.mlp, &exp, &CalibrationConfig::default()).unwrap();
    let nearest = NU_GRID
        .iter()
        .flat_map(|&nu| MU_GRID.map(|mu| (nu, mu)))
        .min_by(|a, b| {
            let da = (a.0 - HIDDEN_NU).powi(2) + (a.1 - HIDDEN_MU).powi(2);
            let db = (b.0 - HIDDEN_NU).powi(2) + (b.1 - HIDDEN_MU).powi(2);
            da.total_cmp(&db)
        })
        .unwrap();
    let top: Vec<(f64, f64)> = out.scan.iter().take(3).map(|s| (s.nu, s.mu)).collect();
    let scan_ok = top.contains(&nearest);
    let calibrated: Vec<usize> = out.calibration.records.iter().filter_map(|r| r.material).collect();
    let held: Vec<_> = exp
        .records
        .iter()
        .filter(|r| !calibrated.contains(&r.material.unwrap_or(r.id)))
        .cloned()
        .collect();
    let errors = evaluate_materials(&out.committee, &held).unwrap();
    let mean = errors.iter().map(|e| e.error).sum::<f64>() / errors.len() as f64;
    check(
        scan_ok && errors.len() == 20 && mean < 0.10,
        format!(
            "top-3 {top:?} (nearest {nearest:?}); mean stress error {:.2}% over {} held-out materials",
            100.0 * mean,
            errors.len()
        ),
    )
}

fn uniqueness_ordering() -> Outcome {
    let seed = gen_dataset(&[(MaterialKind::Ludwik, 500)], &SimSetting::default(), 7, StripMode::Axes).unwrap();
    let fm = train_forward_active(
        &seed,
        &ActiveConfig {
            seed: 7,
            ..ActiveConfig::default()
        },
    )
    .unwrap();
    let thresholds: Vec<f64> = (1..=10).map(|k| k as f64 / 100.0).collect();
    let mut curves = Vec::new();
    for label in ["force+H", "pileup9+H"] {
        let subset = FeatureSubset::parse(label).unwrap();
        curves.push(nonunique_curve(&fm, &subset, 5, &thresholds, &SiblingConfig::default()).unwrap());
    }
    let at = |k: usize| curves[k].points.iter().find(|(t, _)| (*t - 0.06).abs() < 1e-12).unwrap().1;
    let (force, pileup) = (at(0), at(1));
    let monotone = curves.iter().all(|c| c.points.windows(2).all(|w| w[1].1 >= w[0].1));
    check(
        force > pileup && monotone && curves[0].ratios.len() == 625,
        format!(
            "at 6%: force+H {:.3} vs pileup9+H {:.3}; forward model on {} records (converged {})",
            force, pileup, fm.data_count, fm.converged
        ),
    )
}

fn pileup_monotonicity() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(31);
    let mut bad = Vec::new();
    for i in 0..20 {
        let spec: MaterialSpec = sample_material(MaterialKind::Ludwik, &mut rng).unwrap();
        for hi in [false, true] {
            let at = |nu: f64, mu: f64| {
                let s = if hi { SimSetting::hi(nu, mu) } else { SimSetting::lo(nu, mu) };
                simulate_features(&spec, &s, StripMode::Axes).unwrap().0 .0[0]
            };
            let by_mu: Vec<f64> = [0.05, 0.15, 0.25].iter().map(|&mu| at(0.3, mu)).collect();
            let by_nu: Vec<f64> = [0.2, 0.3, 0.4].iter().map(|&nu| at(nu, 0.15)).collect();
            if !(by_mu[0] > by_mu[1] && by_mu[1] > by_mu[2] && by_nu[0] < by_nu[1] && by_nu[1] < by_nu[2]) {
                bad.push(format!("material {i} ({}): mu {by_mu:?} nu {by_nu:?}", if hi { "HI" } else { "LO" }));
            }
        }
    }
    check(
        bad.is_empty(),
        if bad.is_empty() {
            "H_max falls with mu and rises with nu for 20 materials at both fidelities".into()
        } else {
            bad.join("; ")
        },
    )
}

fn pointwise_pipeline() -> Outcome {
    let lo = gen_dataset(
        &[(MaterialKind::Ludwik, 2000), (MaterialKind::Hollomon, 1000), (MaterialKind::PointStress, 1000)],
        &SimSetting::default(),
        11,
        StripMode::Axes,
    )
    .unwrap();
    let report = train_pointwise(&lo, 500, &TrainConfig::default()).unwrap();
    let mut non_monotone = 0;
    for r in &lo.records {
        let y = report.model.forward(&r.features[..mfnn::PIPELINE_FEATURES]).unwrap();
        let poly = predicted_polyline(TargetSet::Pointwise, &y).unwrap();
        if poly.windows(2).any(|w| w[1].1 < w[0].1 || w[1].0 <= w[0].0) {
            non_monotone += 1;
        }
    }
    check(
        report.train_mae < 0.05 && report.test_mae < 0.05 && non_monotone == 0,
        format!(
            "train MAE {:.2}% test MAE {:.2}% after {} epochs; {non_monotone} non-monotone polylines",
            100.0 * report.train_mae,
            100.0 * report.test_mae,
            report.history.epochs.len()
        ),
    )
}

fn imprint(args: &[&str]) -> i32 {
    let mut v = vec!["imprint".to_string()];
    v.extend(args.iter().map(|s| s.to_string()));
    imprint_cli::run(&v)
}

fn reproducibility() -> Outcome {
    let dir = tempfile::tempdir().unwrap();
    let d = |name: &str| dir.path().join(name).to_str().unwrap().to_string();
    let steps: Vec<Vec<String>> = [
        vec!["gen", "--fidelity", "lo", "--count", "300", "--seed", "1", "--out", &d("lo.jsonl")],
        vec!["gen", "--fidelity", "hi", "--count", "30", "--seed", "2", "--grid-n", "32", "--out", &d("hi.jsonl"), "--emit-maps", &d("hi_maps")],
        vec!["gen", "--fidelity", "exp", "--materials", "5", "--replicates", "4", "--seed", "3", "--grid-n", "32", "--out", &d("exp.jsonl"), "--emit-maps", &d("exp_maps")],
        vec!["train", "--data", &d("lo.jsonl"), "--seed", "4", "--epochs", "40", "--val", "50", "--out", &d("base.json")],
        vec!["transfer", "--base", &d("base.json"), "--data", &d("hi.jsonl"), "--seed", "5", "--epochs", "40", "--out", &d("transfer.json")],
        vec!["calibrate", "--base", &d("base.json"), "--exp", &d("exp.jsonl"), "--hi-count", "10", "--seed", "6", "--epochs", "20", "--out", &d("committee.json")],
        vec!["predict", "--committee", &d("committee.json"), "--exp", &d("exp.jsonl"), "--out", &d("predict.csv")],
        vec![
            "uniqueness", "--subsets", "force+H,pileup9+H", "--grid", "2", "--seed", "7", "--seed-count", "100", "--budget", "150",
            "--epochs", "40", "--refine-epochs", "10", "--out", &d("unique.csv"),
        ],
        vec!["features", "--map", &d("exp_maps"), "--out", &d("features.json")],
    ]
    .iter()
    .map(|s| s.iter().map(|a| a.to_string()).collect())
    .collect();
    let mut reruns = 0;
    for step in &steps {
        let args: Vec<&str> = step.iter().map(String::as_str).collect();
        let code = imprint(&args);
        if code != 0 {
            return Err(format!("`{}` exited {code}", args.join(" ")));
        }
        let out = args.iter().position(|a| *a == "--out").map(|i| args[i + 1]).unwrap();
        let manifest = format!("{out}.manifest.json");
        if !Path::new(&manifest).exists() {
            return Err(format!("no manifest for {}", args[0]));
        }
        let into = d(&format!("rerun_{reruns}"));
        for extra in [vec!["--into", into.as_str()], vec![]] {
            let mut cmd = vec!["rerun", "--manifest", manifest.as_str()];
            cmd.extend(extra);
            let code = imprint(&cmd);
            if code != 0 {
                return Err(format!("rerun of {} ({}) exited {code}", args[0], cmd.join(" ")));
            }
        }
        reruns += 1;
    }
    Ok(format!("{reruns} commands rerun bit-identically into a fresh directory and in place"))
}

fn main() {
    // wall-clock limit in seconds alongside each check
    let criteria: [(u32, fn() -> Outcome, Option<f64>); 10] = [
        (1, math_suite, Some(1.0)),
        (2, gradient_check, Some(10.0)),
        (3, bfgs_suite, Some(1.0)),
        (4, inverse_baseline, Some(600.0)),
        (5, transfer_benefit, Some(900.0)),
        (6, physics_boosting, Some(1800.0)),
        (7, uniqueness_ordering, Some(3600.0)),
        (8, pileup_monotonicity, Some(60.0)),
        (9, pointwise_pipeline, Some(1200.0)),
        (10, reproducibility, None),
    ];
    let only: Vec<u32> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect())
        .unwrap_or_default();
    let (mut ran, mut failed) = (0, 0);
    for (n, run, limit) in criteria {
        if !only.is_empty() && !only.contains(&n) {
            continue;
        }
        ran += 1;
        let t = Instant::now();
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|p| {
            let msg = p
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_else(|| "panicked".into());
            Err(msg)
        });
        let secs = t.elapsed().as_secs_f64();
        let outcome = match (outcome, limit) {
            (Ok(detail), Some(l)) if secs > l => Err(format!("{detail}; over the {l:.0}s limit")),
            (o, _) => o,
        };
        match outcome {
            Ok(detail) => println!("[PASS] criterion {n}: {detail} ({secs:.1}s)"),
            Err(detail) => {
                failed += 1;
                println!("[FAIL] criterion {n}: {detail} ({secs:.1}s)");
            }
        }
    }
    println!("acceptance: {} passed, {failed} failed", ran - failed);
    // the run reports; gating on it is opt-in
    if failed > 0 && std::env::var_os("ACCEPTANCE_STRICT").is_some() {
        std::process::exit(1);
    }
}
