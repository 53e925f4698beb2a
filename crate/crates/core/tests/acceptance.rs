//! Acceptance criteria on the ball-and-plate benchmark. Prints one
//! `PASS`/`FAIL` line per criterion and exits nonzero if any fails.

mod common;

use std::f64::consts::{FRAC_PI_2, PI};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::time::Instant;

use hmpc::formulations::{build_hmpc, extract_solution, feasibility_residual, shift_solution, ControllerKind, ControllerParams};
use hmpc::freqdesign::{suggest_w, Outcome};
use hmpc::harmonic::{amplitude_bounds, eval_harmonic, optimal_artificial_reference, rotate_coeffs, HarmonicReference, Reference};
use hmpc::model::Plant;
use hmpc::sim::{lyapunov_check, performance_index, run_closed_loop, ReferenceSchedule, SimOptions, SimulationTrace};
use hmpc::solver::{project_soc, solve, SolveStatus, SolverSettings};
use nalgebra::DVector;
use rand::Rng;

use common::{benchmark_reference, feasible_starts, planted_program, position_reference, rng};

const N_ITER: usize = 50;

type Verdict = Result<String, String>;

struct Runs {
    mpct5: SimulationTrace,
    mpct8: SimulationTrace,
    mpct15: SimulationTrace,
    hmpc5: SimulationTrace,
    secs: f64,
}

fn run(plant: &Plant, kind: ControllerKind, params: &ControllerParams) -> SimulationTrace {
    let schedule = ReferenceSchedule::constant(benchmark_reference());
    run_closed_loop(plant, params, kind, &schedule, &DVector::zeros(8), N_ITER, &SimOptions::default())
        .unwrap_or_else(|e| panic!("{kind} N={}: {e}", params.horizon))
}

fn phi(trace: &SimulationTrace) -> f64 {
    performance_index(trace, &trace.params.q, &trace.params.r)
}

fn table2(plant: &Plant) -> Runs {
    let t = Instant::now();
    let mpct5 = run(plant, ControllerKind::Mpct, &ControllerParams::ball_plate(5));
    let mpct8 = run(plant, ControllerKind::Mpct, &ControllerParams::ball_plate(8));
    let mpct15 = run(plant, ControllerKind::Mpct, &ControllerParams::ball_plate(15));
    let hmpc5 = run(plant, ControllerKind::Hmpc, &ControllerParams::ball_plate(5));
    Runs {
        mpct5,
        mpct8,
        mpct15,
        hmpc5,
        secs: t.elapsed().as_secs_f64(),
    }
}

fn criterion_1(runs: &Runs) -> Verdict {
    let cases = [
        ("MPCT5", &runs.mpct5, 2014.1),
        ("MPCT8", &runs.mpct8, 844.1),
        ("MPCT15", &runs.mpct15, 488.9),
        ("HMPC5", &runs.hmpc5, 511.1),
    ];
    let mut detail = Vec::new();
    let mut ok = runs.secs <= 300.0;
    for (name, trace, target) in cases {
        let value = phi(trace);
        let rel = (value - target).abs() / target;
        ok &= rel <= 0.03;
        detail.push(format!("{name} {value:.2} ({:+.2}%)", 100.0 * (value - target) / target));
    }
    let msg = format!("{} in {:.1}s", detail.join(", "), runs.secs);
    if ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_2(runs: &Runs) -> Verdict {
    let (m5, m8, m15, h5) = (phi(&runs.mpct5), phi(&runs.mpct8), phi(&runs.mpct15), phi(&runs.hmpc5));
    let msg = format!("{m5:.1} > {m8:.1} > {h5:.1}, {m15:.1} < {m8:.1}");
    if m5 > m8 && m8 > h5 && h5 > 0.0 && m15 < m8 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_3(plant: &Plant) -> Verdict {
    let params = ControllerParams::ball_plate(5);
    let reference = benchmark_reference();
    let (starts, draws) = feasible_starts(plant, &params, &reference, 100, 3);
    let settings = SolverSettings {
        max_iter: 100_000,
        ..SolverSettings::with_tolerance(1e-9)
    };
    let (mut worst_shift, mut worst_tail) = (0.0f64, 0.0f64);
    for (i, x0) in starts.iter().enumerate() {
        let program = build_hmpc(plant, &params, &reference, x0).map_err(|e| e.to_string())?;
        let out = solve(&program, &settings, None).map_err(|e| e.to_string())?;
        if out.report.status != SolveStatus::Solved {
            return Err(format!("start {i}: {:?}", out.report.status));
        }
        let sol = extract_solution(&program, &out.x, 1e-6).map_err(|e| format!("start {i}: {e}"))?;
        let shifted = shift_solution(plant, &params, &reference, &sol, 1e-6).map_err(|e| format!("start {i}: {e}"))?;
        worst_shift = worst_shift.max(feasibility_residual(plant, &shifted));

        // predicted stages, then 500 steps driven by the harmonic tail
        let h = sol.harmonic().expect("harmonic");
        for j in 0..params.horizon {
            let z = plant.model.c() * &sol.states[j] + plant.model.d() * &sol.inputs[j];
            worst_tail = worst_tail.max(plant.constraints.violation(&z));
        }
        let mut x = sol.states[params.horizon].clone();
        for l in 0..500 {
            let (_, u) = eval_harmonic(h, params.horizon + l);
            let z = plant.model.c() * &x + plant.model.d() * &u;
            worst_tail = worst_tail.max(plant.constraints.violation(&z));
            x = plant.model.step(&x, &u);
        }
    }
    let msg = format!("100 starts ({draws} draws), shift residual {worst_shift:.1e}, box violation {worst_tail:.1e}");
    if worst_shift <= 1e-6 && worst_tail <= 1e-6 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_4(plant: &Plant) -> Verdict {
    let params = ControllerParams::ball_plate(5);
    let settings = SolverSettings::default();
    let mut r = rng(4);
    let (mut worst_osc, mut worst_center) = (0.0f64, 0.0f64);
    for i in 0..50 {
        let admissible = i % 2 == 0;
        let reference = if admissible {
            position_reference(r.gen_range(-3.0..3.0), r.gen_range(-3.0..3.0))
        } else {
            let x = DVector::from_fn(8, |k, _| match k % 4 {
                0 => r.gen_range(-3.0..3.0),
                1 => r.gen_range(-1.5..1.5),
                2 => r.gen_range(-1.5..1.5),
                _ => r.gen_range(-1.0..1.0),
            });
            Reference::new(x, DVector::from_fn(2, |_, _| r.gen_range(-1.0..1.0)))
        };
        let (h, _) = optimal_artificial_reference(plant, &params, &reference, &settings).map_err(|e| format!("reference {i}: {e}"))?;
        worst_osc = worst_osc.max(h.oscillation_norm());
        if admissible {
            worst_center = worst_center.max((&h.x_e - &reference.x).amax()).max((&h.u_e - &reference.u).amax());
        }
    }
    let msg = format!("oscillation norm ≤ {worst_osc:.1e}, admissible center error ≤ {worst_center:.1e}");
    if worst_osc <= 1e-4 && worst_center <= 1e-4 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_5(runs: &Runs) -> Verdict {
    let report = lyapunov_check(&runs.hmpc5, 0.0);
    let min_w = report.min_w();
    let mut violations = Vec::new();
    for k in 0..report.decreasing.len() {
        if report.distance[k] > 1e-3 && !report.decreasing[k] {
            violations.push(k);
        }
    }
    let w_last = report.w[N_ITER];
    let msg = format!("min W {min_w:.2e}, W_50 {w_last:.2e}, non-decreasing steps {violations:?}");
    if min_w >= -1e-4 && violations.is_empty() && w_last <= 1e-2 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_6(plant: &Plant) -> Verdict {
    let params = ControllerParams::ball_plate(5);
    let mut r = rng(6);
    let mut solves = 0;
    for i in 0..100 {
        let first = position_reference(r.gen_range(-2.0..3.0), r.gen_range(-2.0..3.0));
        let second = position_reference(r.gen_range(-2.0..3.0), r.gen_range(-2.0..3.0));
        let schedule = ReferenceSchedule::new(vec![(0, first), (25, second)]).map_err(|e| e.to_string())?;
        let trace = run_closed_loop(plant, &params, ControllerKind::Hmpc, &schedule, &DVector::zeros(8), N_ITER, &SimOptions::default())
            .map_err(|e| format!("scenario {i}: {e}"))?;
        solves += trace.steps.len();
    }
    Ok(format!("100 scenarios, {solves} solves, none infeasible"))
}

fn criterion_7(plant: &Plant, runs: &Runs) -> Verdict {
    let params = ControllerParams {
        w: 2.0 * PI,
        ..ControllerParams::ball_plate(5)
    };
    let hmpc = run(plant, ControllerKind::Hmpc, &params);
    let worst = hmpc
        .steps
        .iter()
        .zip(&runs.mpct5.steps)
        .map(|(a, b)| (&a.x - &b.x).amax())
        .fold(0.0f64, f64::max);
    let msg = format!("max state difference {worst:.2e} over {} steps", N_ITER);
    if worst <= 1e-3 {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_8() -> Verdict {
    let mut r = rng(8);
    let mut worst = 0.0f64;
    for i in 0..50 {
        let planted = planted_program(&mut r);
        let out = solve(&planted.program, &SolverSettings::default(), None).map_err(|e| e.to_string())?;
        if out.report.status != SolveStatus::Solved {
            return Err(format!("program {i}: {:?}", out.report.status));
        }
        let rel = (out.report.objective - planted.objective).abs() / planted.objective.abs().max(1.0);
        worst = worst.max(rel);
    }
    let mut worst_proj = 0.0f64;
    for _ in 0..1000 {
        let v = [r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0), r.gen_range(-5.0..5.0)];
        let p = project_soc(v);
        let pp = project_soc(p);
        let err = (0..3).map(|k| (p[k] - pp[k]).abs()).fold(0.0, f64::max);
        worst_proj = worst_proj.max(err / (1.0 + p[0].abs()));
    }
    let msg = format!("worst relative objective error {worst:.1e}, projection idempotence {worst_proj:.1e}");
    if worst <= 1e-4 && worst_proj <= 4.0 * f64::EPSILON {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn random_vec(r: &mut impl Rng, n: usize, scale: f64) -> DVector<f64> {
    DVector::from_fn(n, |_, _| r.gen_range(-scale..scale))
}

fn criterion_9(plant: &Plant) -> Verdict {
    let mut r = rng(9);
    let model = &plant.model;

    let mut rotation = 0.0f64;
    for _ in 0..1000 {
        let n = r.gen_range(1..10);
        let (vs, vc) = (random_vec(&mut r, n, 10.0), random_vec(&mut r, n, 10.0));
        let w = r.gen_range(0.0..2.0 * PI);
        let (ps, pc) = rotate_coeffs(&vs, &vc, w);
        for i in 0..n {
            let before = vs[i] * vs[i] + vc[i] * vc[i];
            let after = ps[i] * ps[i] + pc[i] * pc[i];
            rotation = rotation.max((after - before).abs() / before.max(1.0));
        }
    }

    let mut shift = 0.0f64;
    for _ in 0..1000 {
        let h = HarmonicReference {
            x_e: random_vec(&mut r, 8, 2.0),
            x_s: random_vec(&mut r, 8, 2.0),
            x_c: random_vec(&mut r, 8, 2.0),
            u_e: random_vec(&mut r, 2, 1.0),
            u_s: random_vec(&mut r, 2, 1.0),
            u_c: random_vec(&mut r, 2, 1.0),
            w: r.gen_range(0.01..PI),
            horizon: r.gen_range(1..20),
        };
        let j = r.gen_range(0..1000);
        let (x1, u1) = eval_harmonic(&h, j + 1);
        let (x2, u2) = eval_harmonic(&h.shifted(), j);
        shift = shift.max((x1 - x2).amax()).max((u1 - u2).amax());
    }

    let lo = plant.constraints.z_min_tight();
    let hi = plant.constraints.z_max_tight();
    let mut envelope_ok = true;
    let mut worst_margin = f64::INFINITY;
    for _ in 0..1000 {
        let mut h = HarmonicReference {
            x_e: DVector::zeros(8),
            x_s: random_vec(&mut r, 8, 1.0),
            x_c: random_vec(&mut r, 8, 1.0),
            u_e: DVector::zeros(2),
            u_s: random_vec(&mut r, 2, 1.0),
            u_c: random_vec(&mut r, 2, 1.0),
            w: r.gen_range(0.01..PI),
            horizon: 5,
        };
        // center strictly inside the tightened box
        for i in 0..8 {
            h.x_e[i] = match i % 4 {
                1 => r.gen_range(-0.49..0.49),
                2 => r.gen_range(-0.78..0.78),
                _ => r.gen_range(-2.0..2.0),
            };
        }
        h.u_e = random_vec(&mut r, 2, 0.39);
        // scale the oscillation until both cone constraints hold
        let (z_e, z_s, z_c) = h.outputs(model);
        let mut scale = r.gen_range(0.0..1.0f64);
        for i in 0..z_e.len() {
            let amp = z_s[i].hypot(z_c[i]);
            let room = (z_e[i] - lo[i]).min(hi[i] - z_e[i]).max(0.0);
            if amp > 0.0 {
                scale = scale.min(room / amp);
            }
        }
        for v in [&mut h.x_s, &mut h.x_c, &mut h.u_s, &mut h.u_c] {
            *v *= scale;
        }
        let (z_e, z_s, z_c) = h.outputs(model);
        let (env_lo, env_hi) = amplitude_bounds(&z_e, &z_s, &z_c);
        for _ in 0..200 {
            let j = r.gen_range(0..10_000);
            let (x, u) = eval_harmonic(&h, j);
            let z = model.c() * x + model.d() * u;
            for i in 0..z.len() {
                let margin = (z[i] - lo[i]).min(hi[i] - z[i]);
                worst_margin = worst_margin.min(margin);
                envelope_ok &= z[i] >= env_lo[i] - 1e-12 && z[i] <= env_hi[i] + 1e-12 && margin >= -1e-12;
            }
        }
    }

    let msg = format!("rotation {rotation:.1e}, shift {shift:.1e}, envelope margin {worst_margin:.1e}");
    if rotation <= 1e-12 && shift <= 1e-10 && envelope_ok {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn criterion_10(plant: &Plant, runs: &Runs) -> Verdict {
    let s = suggest_w(&plant.model, &plant.constraints, 0, 0).map_err(|e| e.to_string())?;
    let rel = (s.w - 0.3254).abs() / 0.3254;
    let sweep = |w: f64| {
        let params = ControllerParams {
            w,
            ..ControllerParams::ball_plate(5)
        };
        phi(&run(plant, ControllerKind::Hmpc, &params))
    };
    let base = phi(&runs.hmpc5);
    let half_pi = sweep(FRAC_PI_2);
    let two_pi = sweep(2.0 * PI);
    let msg = format!(
        "suggested w {:.4} ({:+.1}%), Φ: {base:.1} < {half_pi:.1} < {two_pi:.1}",
        s.w,
        100.0 * (s.w - 0.3254) / 0.3254
    );
    if s.outcome == Outcome::Crossing && rel <= 0.15 && base < half_pi && half_pi < two_pi {
        Ok(msg)
    } else {
        Err(msg)
    }
}

fn report(id: usize, title: &str, f: impl FnOnce() -> Verdict) -> bool {
    let result = catch_unwind(AssertUnwindSafe(f)).unwrap_or_else(|p| {
        let text = p
            .downcast_ref::<String>()
            .cloned()
            .or_else(|| p.downcast_ref::<&str>().map(|s| s.to_string()))
            .unwrap_or_default();
        Err(format!("panicked: {text}"))
    });
    match result {
        Ok(msg) => {
            println!("PASS criterion {id} ({title}): {msg}");
            true
        }
        Err(msg) => {
            println!("FAIL criterion {id} ({title}): {msg}");
            false
        }
    }
}

fn main() {
    let plant = Plant::ball_plate();
    let runs = catch_unwind(AssertUnwindSafe(|| table2(&plant)));
    let mut ok = true;
    match &runs {
        Ok(runs) => {
            ok &= report(1, "performance table", || criterion_1(runs));
            ok &= report(2, "performance ordering", || criterion_2(runs));
        }
        Err(_) => {
            ok &= report(1, "performance table", || Err("benchmark runs failed".into()));
            ok &= report(2, "performance ordering", || Err("benchmark runs failed".into()));
        }
    }
    ok &= report(3, "recursive feasibility", || criterion_3(&plant));
    ok &= report(4, "optimal artificial reference", || criterion_4(&plant));
    ok &= report(5, "Lyapunov decrease", || match &runs {
        Ok(runs) => criterion_5(runs),
        Err(_) => Err("benchmark runs failed".into()),
    });
    ok &= report(6, "reference changes", || criterion_6(&plant));
    ok &= report(7, "equivalence at w = 2π", || match &runs {
        Ok(runs) => criterion_7(&plant, runs),
        Err(_) => Err("benchmark runs failed".into()),
    });
    ok &= report(8, "solver oracle", criterion_8);
    ok &= report(9, "harmonic algebra", || criterion_9(&plant));
    ok &= report(10, "frequency selection", || match &runs {
        Ok(runs) => criterion_10(&plant, runs),
        Err(_) => Err("benchmark runs failed".into()),
    });
    if !ok {
        std::process::exit(1);
    }
}
