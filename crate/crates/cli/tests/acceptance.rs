//! Acceptance gate. Prints one PASS/FAIL line per criterion and exits non-zero if any
//! criterion fails.

use std::process::Command;
use std::time::{Duration, Instant};

use ggp_core::coupling::{coupling_forces, CouplingConfig, DualArmState};
use ggp_core::engine::{
    rollout_ensemble, run_execution, start_state, vector_field, FieldBounds, FieldPolicy, RolloutConfig,
};
use ggp_core::gp::DEFAULT_JITTER;
use ggp_core::impedance::{
    implied_velocity_limit, stiffness_upper_bound, step_dynamics, ArmState, Gains, ImpedanceController,
    SafetyLimits, SimConfig, DEFAULT_SIGMA_TR,
};
use ggp_core::io::generate_letter_b;
use ggp_core::{Demonstration, GpBaselineModel, GraphModel, KernelParams};
use nalgebra::{DMatrix, DVector};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;

type Criterion = (&'static str, fn() -> Outcome);

struct Outcome {
    pass: bool,
    detail: String,
}

fn outcome(pass: bool, detail: impl Into<String>) -> Outcome {
    Outcome {
        pass,
        detail: detail.into(),
    }
}

fn dist(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum::<f64>().sqrt()
}

fn random_walk_model(rng: &mut ChaCha8Rng, n: usize, dim: usize) -> GraphModel {
    let mut rows = Vec::with_capacity(n);
    let mut x = vec![0.5; dim];
    for _ in 0..n {
        rows.push(x.clone());
        for v in &mut x {
            *v += rng.random_range(-0.01..0.01);
        }
    }
    let mut t = 0.0;
    let times = (0..n)
        .map(|_| {
            t += rng.random_range(0.005..0.02);
            t
        })
        .collect();
    GraphModel::fit(&Demonstration::from_rows(&rows, times).unwrap(), KernelParams::default()).unwrap()
}

fn oracle_equivalence() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let model = random_walk_model(&mut rng, 1001, 2);
    let p = *model.params();
    let queries: Vec<(Vec<f64>, f64)> = (0..200)
        .map(|_| {
            let x = vec![rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)];
            (x, rng.random_range(0.0..model.goal_time()))
        })
        .collect();
    let start = Instant::now();
    let answers: Vec<_> = queries.iter().map(|(x, t)| model.query(x, *t).unwrap()).collect();
    let elapsed = start.elapsed();
    let mut worst_sigma: f64 = 0.0;
    let mut goal_mismatch = 0;
    for ((x, t), r) in queries.iter().zip(&answers) {
        // exhaustive scan on the product of the two exponential kernels
        let mut best = (0, f64::NEG_INFINITY);
        for i in 0..model.n_pairs() {
            let s = model.state(i);
            let k = (-dist(&s[..2], x) / p.lambda_pos).exp() * (-(s[2] - t).abs() / p.lambda_time).exp();
            if k > best.1 {
                best = (i, k);
            }
        }
        if r.goal_pos != model.node_pos(best.0 + 1) || r.goal_time != model.node_time(best.0 + 1) {
            goal_mismatch += 1;
        }
        worst_sigma = worst_sigma.max((r.sigma - (1.0 - best.1)).abs());
    }
    outcome(
        goal_mismatch == 0 && worst_sigma <= 1e-12 && elapsed < Duration::from_secs(1),
        format!(
            "1000 pairs, 200 queries: {goal_mismatch} goal mismatches, max |Δσ| = {worst_sigma:.3e}, {:.2} ms",
            elapsed.as_secs_f64() * 1e3
        ),
    )
}

fn parameter_triangle() -> Outcome {
    let k = 600.0;
    let cap = 0.05;
    let v_max = implied_velocity_limit(k, cap);
    let limits = SafetyLimits::uniform(2, v_max, 30.0, DEFAULT_SIGMA_TR).unwrap();
    let controller = ImpedanceController::new(Gains::isotropic(2, k).unwrap(), limits).unwrap();
    let x = DVector::from_vec(vec![0.0, 0.0]);
    let far = DVector::from_vec(vec![5.0, -5.0]);
    let cmd = controller.command(&x, &far, 0.0).unwrap();
    let f_static = cmd.static_force().amax();
    let k_bound = stiffness_upper_bound(
        &SafetyLimits::uniform(2, 0.6124, 30.0, DEFAULT_SIGMA_TR).unwrap(),
        &DMatrix::identity(2, 2),
    )
    .unwrap();
    let k_err = k_bound.iter().map(|b| (b - 600.0).abs()).fold(0.0, f64::max);
    outcome(
        (f_static - 30.0).abs() <= 1e-12 && (v_max - 0.6124).abs() <= 0.001 && k_err <= 0.5,
        format!(
            "static force cap {f_static} N, v_max {v_max:.6} m/s, stiffness bound {:.4} N/m",
            k_bound[0]
        ),
    )
}

fn rollout_ablation() -> Outcome {
    let b = generate_letter_b(200).unwrap();
    let model = GraphModel::fit(&b.demo, KernelParams::default()).unwrap();
    let cfg = RolloutConfig {
        seed: 2024,
        ..RolloutConfig::default()
    };
    let start = Instant::now();
    let on = rollout_ensemble(&model, model.start_pos(), &cfg).unwrap();
    let off = rollout_ensemble(
        &model,
        model.start_pos(),
        &RolloutConfig {
            use_time_belief: false,
            ..cfg
        },
    )
    .unwrap();
    let elapsed = start.elapsed();
    let limit = 3.0 * model.params().lambda_pos;
    let within = on.terminal.iter().filter(|&&d| d <= limit).count();
    let ratio = off.mean_terminal() / on.mean_terminal();
    outcome(
        within == on.terminal.len() && off.mean_terminal() > on.mean_terminal() && elapsed < Duration::from_secs(10),
        format!(
            "ON {within}/{} within 3λ (mean {:.4} m), OFF mean {:.4} m, ratio {ratio:.2}, {:.2} s",
            on.terminal.len(),
            on.mean_terminal(),
            off.mean_terminal(),
            elapsed.as_secs_f64()
        ),
    )
}

fn segment_distance(p: &[f64], a: &[f64], b: &[f64]) -> f64 {
    let ab = [b[0] - a[0], b[1] - a[1]];
    let len2 = ab[0] * ab[0] + ab[1] * ab[1];
    let t = if len2 > 0.0 {
        (((p[0] - a[0]) * ab[0] + (p[1] - a[1]) * ab[1]) / len2).clamp(0.0, 1.0)
    } else {
        0.0
    };
    (p[0] - a[0] - t * ab[0]).hypot(p[1] - a[1] - t * ab[1])
}

fn far_field_contrast() -> Outcome {
    let b = generate_letter_b(200).unwrap();
    let model = GraphModel::fit(&b.demo, KernelParams::default()).unwrap();
    let lambda = model.params().lambda_pos;
    let gp = GpBaselineModel::from_graph(&model, lambda, DEFAULT_JITTER).unwrap();
    let bounds = FieldBounds::new([-0.3, -0.5], [1.3, 1.5]).unwrap();
    let t_b = 0.5 * model.goal_time();
    let ggp = vector_field(FieldPolicy::Ggp(&model), &bounds, (50, 50), t_b).unwrap();
    let gpf = vector_field(FieldPolicy::Gp(&gp), &bounds, (50, 50), t_b).unwrap();
    let spacing = model.max_spacing();
    let mut buckets = [(0.0, 0usize); 7];
    let mut linear_ok = true;
    let mut used = 0;
    for (g, p) in ggp.iter().zip(&gpf) {
        let d = (0..model.n_nodes() - 1)
            .map(|i| segment_distance(&g.pos, model.node_pos(i), model.node_pos(i + 1)))
            .fold(f64::INFINITY, f64::min);
        let r = d / lambda;
        if !(3.0..=10.0).contains(&r) {
            continue;
        }
        used += 1;
        let disp = g.displacement[0].hypot(g.displacement[1]);
        linear_ok &= disp >= d - spacing;
        let mean = (p.displacement[0] + p.pos[0]).hypot(p.displacement[1] + p.pos[1]);
        let k = ((r - 3.0).floor() as usize).min(6);
        buckets[k].0 += mean;
        buckets[k].1 += 1;
    }
    let means: Vec<f64> = buckets.iter().map(|(s, n)| if *n > 0 { s / *n as f64 } else { 0.0 }).collect();
    let monotone = means.windows(2).all(|w| w[1] <= w[0]);
    let shown: Vec<String> = means.iter().map(|m| format!("{m:.2e}")).collect();
    outcome(
        monotone && linear_ok && used > 100,
        format!(
            "{used} grid points at 3–10λ; GP mean norm by λ-bucket [{}]; GGP displacement ≥ d − spacing: {linear_ok}",
            shown.join(", ")
        ),
    )
}

/// Catmull-Rom through random control points, arc-length uniform, one sample per
/// control tick at a constant speed.
fn smooth_demo(rng: &mut ChaCha8Rng, speed: f64, dt: f64) -> Demonstration {
    let ctrl: Vec<[f64; 2]> = (0..5)
        .map(|_| [rng.random_range(0.1..0.9), rng.random_range(0.1..0.9)])
        .collect();
    let n = ctrl.len();
    let at = |i: isize| ctrl[i.clamp(0, n as isize - 1) as usize];
    let mut dense = Vec::new();
    for s in 0..n - 1 {
        let i = s as isize;
        let (p0, p1, p2, p3) = (at(i - 1), at(i), at(i + 1), at(i + 2));
        for k in 0..1000 {
            let t = k as f64 / 1000.0;
            let (t2, t3) = (t * t, t * t * t);
            let c = |d: usize| {
                0.5 * (2.0 * p1[d]
                    + (p2[d] - p0[d]) * t
                    + (2.0 * p0[d] - 5.0 * p1[d] + 4.0 * p2[d] - p3[d]) * t2
                    + (3.0 * p1[d] - p0[d] - 3.0 * p2[d] + p3[d]) * t3)
            };
            dense.push([c(0), c(1)]);
        }
    }
    dense.push(ctrl[n - 1]);
    let mut cum = vec![0.0];
    for w in dense.windows(2) {
        cum.push(cum[cum.len() - 1] + (w[1][0] - w[0][0]).hypot(w[1][1] - w[0][1]));
    }
    let total = cum[cum.len() - 1];
    let duration = total / speed;
    let m = (duration / dt).ceil() as usize + 1;
    let mut rows = Vec::with_capacity(m);
    let mut seg = 0;
    for i in 0..m {
        let s = total * i as f64 / (m - 1) as f64;
        while seg + 2 < cum.len() && cum[seg + 1] < s {
            seg += 1;
        }
        let f = ((s - cum[seg]) / (cum[seg + 1] - cum[seg]).max(f64::MIN_POSITIVE)).clamp(0.0, 1.0);
        let (a, b) = (dense[seg], dense[seg + 1]);
        rows.push(vec![a[0] + f * (b[0] - a[0]), a[1] + f * (b[1] - a[1])]);
    }
    let times = (0..m).map(|i| duration * i as f64 / (m - 1) as f64).collect();
    Demonstration::from_rows(&rows, times).unwrap()
}

fn goal_convergence() -> Outcome {
    let sim = SimConfig::default();
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let mut cases = Vec::new();
    for d in 0..5 {
        let demo = smooth_demo(&mut rng, 0.3, sim.dt);
        let model = GraphModel::fit(&demo, KernelParams::default()).unwrap();
        let starts: Vec<[f64; 2]> = (0..100)
            .map(|_| [rng.random_range(0.0..1.0), rng.random_range(0.0..1.0)])
            .collect();
        cases.push((d, model, starts));
    }
    let controller = ImpedanceController::default_for(2);
    let results: Vec<(usize, [f64; 2], bool, usize)> = cases
        .par_iter()
        .flat_map_iter(|(d, model, starts)| {
            let controller = &controller;
            starts.iter().map(move |s| {
                let start = start_state(model, s).unwrap();
                let trace = run_execution(model, start, controller, &sim, 20_000, false, |_, st| {
                    DVector::zeros(st.dim())
                })
                .unwrap();
                let near = dist(trace.final_state.x.as_slice(), model.goal_pos()) <= 2.0 * model.params().lambda_pos;
                (*d, *s, trace.converged && near && trace.ticks < 20_000, trace.ticks)
            })
        })
        .collect();
    let passed = results.iter().filter(|r| r.2).count();
    let worst = results.iter().map(|r| r.3).max().unwrap_or(0);
    let first_fail = results
        .iter()
        .find(|r| !r.2)
        .map(|r| format!(", first failure demo {} start ({:.3}, {:.3})", r.0, r.1[0], r.1[1]))
        .unwrap_or_default();
    outcome(
        passed == results.len(),
        format!(
            "{passed}/{} runs within 2λ of goal, worst {worst} ticks (0.3 m/s demos at the control rate){first_fail}",
            results.len()
        ),
    )
}

fn random_spd(rng: &mut ChaCha8Rng, dim: usize, lo: f64, hi: f64) -> DMatrix<f64> {
    let a = DMatrix::from_fn(dim, dim, |_, _| rng.random_range(-1.0..1.0));
    let q = a.qr().q();
    let eig = DVector::from_fn(dim, |_, _| rng.random_range(lo..hi));
    let m = &q * DMatrix::from_diagonal(&eig) * q.transpose();
    (&m + m.transpose()) * 0.5
}

fn coupling_antisymmetry() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let mut worst: f64 = 0.0;
    let mut clamped = 0;
    for _ in 0..100_000 {
        let dim = rng.random_range(1..=3);
        let k = random_spd(&mut rng, dim, 0.0, 2000.0);
        let offset = DVector::from_fn(dim, |_, _| rng.random_range(-0.3..0.3));
        let cap = rng.random_range(0.001..0.2);
        let cfg = CouplingConfig::critical(k, offset.clone(), cap).unwrap();
        let arm = |rng: &mut ChaCha8Rng| ArmState {
            x: DVector::from_fn(dim, |_, _| rng.random_range(-1.0..1.0)),
            v: DVector::from_fn(dim, |_, _| rng.random_range(-2.0..2.0)),
            t_b: 0.0,
        };
        let dual = DualArmState::new(arm(&mut rng), arm(&mut rng)).unwrap();
        let e = &dual.right.x - &dual.left.x - &offset;
        if e.amax() > cap {
            clamped += 1;
        }
        let (fl, fr) = coupling_forces(&dual, &cfg).unwrap();
        worst = worst.max((fl + fr).amax());
    }
    outcome(
        worst <= 1e-12,
        format!("1e5 dual states ({clamped} with the clamp active): max ‖F_l + F_r‖∞ = {worst:e}"),
    )
}

fn no_overshoot() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let sim = SimConfig::default();
    let mut worst_ratio: f64 = 0.0;
    for case in 0..100 {
        let dim = 2 + case % 2;
        let k = random_spd(&mut rng, dim, 50.0, 1500.0);
        let gains = Gains::new(k).unwrap();
        let attractor = DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5));
        let mut state = ArmState::at_rest(DVector::from_fn(dim, |_, _| rng.random_range(-0.5..0.5)), 0.0);
        let r = gains.rotation().clone();
        let e0 = r.transpose() * (&state.x - &attractor);
        let zero = DVector::zeros(dim);
        for _ in 0..4000 {
            state = step_dynamics(&state, &attractor, &gains, &zero, &sim).unwrap();
            let e = r.transpose() * (&state.x - &attractor);
            for i in 0..dim {
                if e0[i].abs() > 0.0 && e[i] * e0[i].signum() < 0.0 {
                    worst_ratio = worst_ratio.max(-e[i] * e0[i].signum() / e0[i].abs());
                }
            }
        }
    }
    outcome(
        worst_ratio <= 1e-3,
        format!("100 SPD matrices (2-D/3-D, eigenvalues 50–1500): worst overshoot {:.3e} of the initial offset", worst_ratio),
    )
}

fn performance() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let n = 10_000;
    let mut rows = Vec::with_capacity(n);
    let mut x = [0.5, 0.5];
    for _ in 0..n {
        rows.push(x.to_vec());
        x[0] += rng.random_range(-0.002..0.002);
        x[1] += rng.random_range(-0.002..0.002);
    }
    let demo = Demonstration::from_rows(&rows, (0..n).map(|i| i as f64 * 0.005).collect()).unwrap();
    let t0 = Instant::now();
    let model = GraphModel::fit(&demo, KernelParams::default()).unwrap();
    let fit = t0.elapsed();
    let linear = model.storage_len() == n * (model.dim() + 1);
    let controller = ImpedanceController::default_for(2);
    let start = start_state(&model, model.start_pos()).unwrap();
    let t1 = Instant::now();
    let trace = run_execution(&model, start, &controller, &SimConfig::default(), 200, false, |_, s| {
        DVector::zeros(s.dim())
    })
    .unwrap();
    let exec = t1.elapsed();
    outcome(
        fit < Duration::from_millis(50) && exec < Duration::from_millis(100) && linear && trace.ticks == 200,
        format!(
            "fit 10k points {:.2} ms, 200 ticks {:.2} ms, model storage {} f64 (n·(D+1), no n×n)",
            fit.as_secs_f64() * 1e3,
            exec.as_secs_f64() * 1e3,
            model.storage_len()
        ),
    )
}

fn determinism() -> Outcome {
    let dir = tempfile::TempDir::new().unwrap();
    let bin = env!("CARGO_BIN_EXE_ggp");
    let traj = dir.path().join("b.csv");
    let model = dir.path().join("b.json");
    let ok = |c: &mut Command| c.env_remove("GGP_CONFIG").output().map(|o| o.status.success()).unwrap_or(false);
    if !ok(Command::new(bin).arg("letter-b").arg("-o").arg(&traj))
        || !ok(Command::new(bin).arg("fit").arg(&traj).arg("-o").arg(&model))
    {
        return outcome(false, "could not prepare the model");
    }
    let mut files = Vec::new();
    for name in ["a.csv", "b.csv"] {
        let out = dir.path().join(name);
        if !ok(Command::new(bin).arg("rollout").arg(&model).args(["--seed", "99", "-o"]).arg(&out)) {
            return outcome(false, "rollout command failed");
        }
        let terminal = out.with_file_name(name.replace(".csv", ".terminal.csv"));
        files.push((std::fs::read(&out).unwrap(), std::fs::read(terminal).unwrap()));
    }
    let same = files[0] == files[1];
    outcome(
        same,
        format!("two `ggp rollout --seed 99` runs: stats {} bytes, identical: {same}", files[0].0.len()),
    )
}

fn main() {
    let criteria: [Criterion; 9] = [
        ("oracle-equivalence", oracle_equivalence),
        ("parameter-triangle", parameter_triangle),
        ("rollout-ablation", rollout_ablation),
        ("far-field-contrast", far_field_contrast),
        ("goal-convergence", goal_convergence),
        ("coupling-antisymmetry", coupling_antisymmetry),
        ("critical-damping-no-overshoot", no_overshoot),
        ("performance", performance),
        ("determinism", determinism),
    ];
    let mut failed = 0;
    for (name, check) in criteria {
        let t = Instant::now();
        let o = check();
        println!(
            "{} {name}: {} [{:.2} s]",
            if o.pass { "PASS" } else { "FAIL" },
            o.detail,
            t.elapsed().as_secs_f64()
        );
        if !o.pass {
            failed += 1;
        }
    }
    println!("{} of {} criteria passed", criteria.len() - failed, criteria.len());
    if failed > 0 {
        std::process::exit(1);
    }
}
