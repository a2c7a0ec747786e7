//! End-to-end acceptance checks. Each criterion prints one PASS/FAIL line;
//! the test fails if any criterion does.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::time::{Duration, Instant};

use trapopt::atom_laser::{bin_events, simulate_events};
use trapopt::config::{RampFamily, RunConfig};
use trapopt::cost::{range_penalty, width_penalty, CostWeights};
use trapopt::dynamics::{com_energy, integrate_span, CondensateState, DynamicsConfig, RampDrive, StaticDrive};
use trapopt::experiment::{SimulatedExperiment, SimulationSettings};
use trapopt::harness::{cmd_damping, cmd_replay, cmd_sweep, SweepRow};
use trapopt::optimizer::{
    random_search, report_from_value, run_optimization, GpSurrogate, Hyperparameters, Observation,
    OptimizerSettings, Problem,
};
use trapopt::ramp::{RampKind, RampSpec};
use trapopt::trap::{
    adiabatic_decompression_timescale, trap_from_controls, CurrentMapCalibration, TrapParameters, HE_STAR_MASS,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: String) -> Verdict {
    Verdict { pass, detail }
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

fn timed(limit: Duration, f: impl FnOnce() -> Verdict) -> Verdict {
    let start = Instant::now();
    let v = f();
    let took = start.elapsed();
    let ok = took <= limit;
    verdict(
        v.pass && ok,
        format!("{}; {:.1} s (limit {} s)", v.detail, took.as_secs_f64(), limit.as_secs()),
    )
}

fn c1_adiabatic_timescale() -> Verdict {
    let t = adiabatic_decompression_timescale(2.0 * PI * 595.0, 2.0 * PI * 5.8).unwrap();
    verdict((t - 4.8e-3).abs() <= 0.05e-3, format!("T = {:.4} ms", t * 1e3))
}

fn c2_cost_constants() -> Verdict {
    let w = CostWeights::default();
    let width = width_penalty(5e-3, &w);
    let range = range_penalty(&[[0.0; 3], [57e-3, 0.0, 0.0]], &w)[0];
    let rel = |a: f64, b: f64| ((a - b) / b).abs();
    verdict(
        rel(width, 6e-4) < 1e-12 && rel(range, 1e-2) < 1e-12,
        format!("width(5 mm) = {width:e}, range(57 mm) = {range:e}"),
    )
}

fn c3_physics_oracles() -> Verdict {
    // energy drift in a static trap over ten periods at dt = T/1000
    let w = 2.0 * PI * 20.0;
    let trap = TrapParameters {
        omega: [w, 1.7 * w, 2.3 * w],
        center_x: 0.0,
        escape_velocity_x: 100.0,
    };
    let mut s = CondensateState::ground(&trap, 1e5);
    s.position = [1e-3, -4e-4, 2e-4];
    s.velocity = [0.0, 5e-3, -1e-3];
    let periods = 10;
    let period = 2.0 * PI / w;
    let cfg = DynamicsConfig::default();
    let traj = integrate_span(&s, &StaticDrive(trap), &cfg, periods as f64 * period, 1000 * periods, 1000).unwrap();
    let e0 = com_energy(&s, &trap, HE_STAR_MASS);
    let drift = traj
        .samples
        .windows(2)
        .map(|p| ((com_energy(&p[1], &trap, HE_STAR_MASS) - com_energy(&p[0], &trap, HE_STAR_MASS)) / e0).abs())
        .fold(0.0, f64::max);

    // step quench by a factor of ten from equilibrium
    let wi = 2.0 * PI * 100.0;
    let wf = wi / 10.0;
    let mut q = CondensateState::ground(&TrapParameters::isotropic_static(wi, 100.0), 1e5);
    q.reference_omega = [wi; 3];
    let half = PI / wf;
    let quench = integrate_span(&q, &StaticDrive(TrapParameters::isotropic_static(wf, 100.0)), &cfg, half, 200_000, 1)
        .unwrap();
    let bmax = quench.samples.iter().map(|s| s.scale[0]).fold(0.0, f64::max);
    let quench_err = (bmax - 10.0).abs() / 10.0;

    // forward through a transport ramp, then back
    let cal = CurrentMapCalibration::default();
    let spec = RampSpec::linear(
        0.2,
        cal.currents_to_controls(cal.initial_configuration()),
        cal.currents_to_controls(cal.final_configuration()),
    )
    .unwrap();
    let drive = RampDrive::new(&spec, &cal);
    let mut r0 = CondensateState::ground(&trap_from_controls(spec.start, &cal).unwrap(), 1e5);
    r0.position[0] += 2e-4;
    let steps = 400_000;
    let fwd = integrate_span(&r0, &drive, &cfg, 0.2, steps, 1000).unwrap();
    let back = integrate_span(fwd.last(), &drive, &cfg, 0.0, steps, steps).unwrap();
    // error in each quantity relative to its largest value along the way
    let peak = |get: fn(&CondensateState) -> [f64; 3]| {
        fwd.samples
            .iter()
            .flat_map(|s| get(s))
            .fold(0.0f64, |m, v| m.max(v.abs()))
    };
    let groups: [fn(&CondensateState) -> [f64; 3]; 4] = [|s| s.position, |s| s.velocity, |s| s.scale, |s| s.scale_rate];
    let reversal = groups
        .iter()
        .map(|g| {
            let (a, b) = (g(back.last()), g(&r0));
            (0..3).map(|k| (a[k] - b[k]).abs()).fold(0.0, f64::max) / peak(*g)
        })
        .fold(0.0, f64::max);
    verdict(
        drift < 1e-9 && quench_err < 1e-4 && reversal < 1e-8,
        format!("energy drift {drift:.1e}/period, b_max error {quench_err:.1e}, reversal error {reversal:.1e}"),
    )
}

fn c4_gp() -> Verdict {
    // noise-free interpolation in 3D
    let x: Vec<Vec<f64>> = (0..15)
        .map(|i| (0..3).map(|k| ((i * (k + 2) * 7 + k) % 15) as f64 / 14.0).collect())
        .collect();
    let y: Vec<f64> = x.iter().map(|p| (3.0 * p[0]).sin() + p[1] * p[2]).collect();
    let gp = GpSurrogate::with_hyperparameters(x.clone(), &y, Hyperparameters::isotropic(3, 0.4, 1.0, 0.0)).unwrap();
    let interp = x
        .iter()
        .zip(&y)
        .map(|(p, v)| (gp.predict_mean(p) - v).abs())
        .fold(0.0, f64::max);

    // two points, hand-derived posterior mean
    let gp1 = GpSurrogate::with_hyperparameters(
        vec![vec![0.0], vec![1.0]],
        &[1.0, 3.0],
        Hyperparameters::isotropic(1, 0.5, 1.0, 0.01),
    )
    .unwrap();
    let expected = [
        (0.0, 1.0114329523168649566),
        (0.25, 1.3622191171829871302),
        (0.5, 2.0),
        (0.75, 2.6377808828170128698),
        (1.5, 2.6807427483501240754),
    ];
    let closed = expected
        .iter()
        .map(|(p, m)| (gp1.predict_mean(&[*p]) - m).abs())
        .fold(0.0, f64::max);
    verdict(
        interp < 1e-8 && closed < 1e-10,
        format!("interpolation error {interp:.1e}, closed-form error {closed:.1e}"),
    )
}

fn sphere(x: &[f64]) -> f64 {
    x.iter().map(|v| (v - 0.3).powi(2)).sum()
}

fn sphere_problem(seed: u64) -> Problem {
    Problem {
        bounds: vec![[0.0, 1.0]; 4],
        initial: vec![0.8; 4],
        seed,
    }
}

/// Sphere runs for criterion 5, kept for the replay check.
struct SphereRun {
    problem: Problem,
    history: Vec<Observation>,
}

fn c5_sphere(runs: &mut Vec<SphereRun>) -> Verdict {
    let settings = OptimizerSettings {
        budget: 100,
        ..Default::default()
    };
    let mut gp_best = Vec::new();
    let mut random_best = Vec::new();
    for seed in 0..10 {
        let problem = sphere_problem(seed);
        let mut f = |x: &[f64], _: u64| Ok(report_from_value(sphere(x)));
        let out = run_optimization(&problem, &settings, &mut f, &mut |_| Ok(())).unwrap();
        gp_best.push(out.best().and_then(|o| o.cost).unwrap_or(f64::INFINITY));
        let rs = random_search(&problem, 100, &mut f).unwrap();
        random_best.push(rs.iter().filter_map(|o| o.cost).fold(f64::INFINITY, f64::min));
        runs.push(SphereRun {
            problem,
            history: out.history,
        });
    }
    let (g, r) = (median(gp_best), median(random_best));
    verdict(
        g < 1e-3 && r >= 10.0 * g,
        format!("median best {g:.2e} vs random search {r:.2e} ({:.0}x)", r / g),
    )
}

const FAMILY_DURATIONS: [f64; 3] = [0.2, 0.1, 0.05];
// warm-up stage ahead of the judged durations
const FAMILY_LEAD_IN: f64 = 0.4;

fn family_config(kind: RampFamily, seed: u64, out: PathBuf) -> RunConfig {
    let mut c = RunConfig::default();
    c.seed = seed;
    c.out_dir = Some(out);
    c.ramp.kind = kind;
    c.ramp.durations = std::iter::once(FAMILY_LEAD_IN).chain(FAMILY_DURATIONS).collect();
    c.optimizer.budget = 200;
    c.optimizer.search.trust_region = Some(0.05);
    c
}

fn c6_ramp_families(root: &Path, runs: &mut Vec<PathBuf>) -> Verdict {
    let families = [RampFamily::PiecewiseLinear, RampFamily::Exponential, RampFamily::Linear];
    // per family, per duration: best cost of each seed
    let mut best = vec![vec![Vec::new(); FAMILY_DURATIONS.len()]; families.len()];
    for (f, &kind) in families.iter().enumerate() {
        for seed in 0..5 {
            let dir = root.join(format!("{kind:?}-{seed}"));
            let rows: Vec<SweepRow> = cmd_sweep(&family_config(kind, seed, dir.clone())).unwrap();
            for (i, row) in rows.iter().enumerate() {
                runs.push(dir.join(format!("{:.1}ms", row.duration * 1e3)));
                if i > 0 {
                    best[f][i - 1].push(row.best_cost.unwrap_or(f64::INFINITY));
                }
            }
        }
    }
    let mut pass = true;
    let mut parts = Vec::new();
    for (d, dur) in FAMILY_DURATIONS.iter().enumerate() {
        let [p, e, l] = [0, 1, 2].map(|f| median(best[f][d].clone()));
        let shortest = d == FAMILY_DURATIONS.len() - 1;
        let ok = if shortest { p < e && e < l } else { p <= e && e <= l };
        pass &= ok;
        parts.push(format!("{:.0} ms: pwl {p:.2e} exp {e:.2e} lin {l:.2e}", dur * 1e3));
    }
    verdict(pass, parts.join("; "))
}

fn c7_damping(root: &Path, runs: &mut Vec<PathBuf>) -> Verdict {
    let mut c = RunConfig::default();
    c.seed = 0;
    c.optimizer.budget = 200;
    let dir = root.join("damping");
    c.out_dir = Some(dir.clone());
    let (summary, r) = cmd_damping(&c).unwrap();
    runs.push(dir);
    let cost_ratio = r.cost_ratio.unwrap_or(0.0);
    verdict(
        summary.records.len() == 200 && cost_ratio >= 4.0 && r.amplitude_ratio >= 2.0,
        format!(
            "cost {:.2e} -> {:.2e} ({cost_ratio:.1}x), x amplitude {:.1} -> {:.2} mm ({:.1}x), COM energy {:.0}x",
            r.initial_cost.unwrap_or(f64::NAN),
            r.final_cost.unwrap_or(f64::NAN),
            r.initial_amplitude_x * 1e3,
            r.final_amplitude_x * 1e3,
            r.amplitude_ratio,
            r.energy_ratio
        ),
    )
}

fn same_history(a: &[Observation], b: &[Observation]) -> bool {
    let bits = |v: &[f64]| v.iter().map(|x| x.to_bits()).collect::<Vec<_>>();
    a.len() == b.len()
        && a.iter().zip(b).all(|(x, y)| {
            x.source == y.source
                && x.seed == y.seed
                && bits(&x.params_raw) == bits(&y.params_raw)
                && x.cost.map(f64::to_bits) == y.cost.map(f64::to_bits)
        })
}

fn c8_replay(spheres: &[SphereRun], dirs: &[PathBuf]) -> Verdict {
    let settings = OptimizerSettings {
        budget: 100,
        ..Default::default()
    };
    let mut failures = Vec::new();
    for (i, run) in spheres.iter().enumerate() {
        let mut f = |x: &[f64], _: u64| Ok(report_from_value(sphere(x)));
        let again = run_optimization(&run.problem, &settings, &mut f, &mut |_| Ok(())).unwrap();
        if !same_history(&run.history, &again.history) {
            failures.push(format!("sphere seed {i}"));
        }
    }
    let mut evaluations = 0;
    for dir in dirs {
        match cmd_replay(dir) {
            Ok(r) => evaluations += r.evaluations,
            Err(e) => failures.push(format!("{}: {e}", dir.display())),
        }
    }
    verdict(
        failures.is_empty() && !dirs.is_empty(),
        if failures.is_empty() {
            format!(
                "{} sphere runs and {} logged runs ({evaluations} evaluations) identical",
                spheres.len(),
                dirs.len()
            )
        } else {
            format!("mismatch in {}", failures.join(", "))
        },
    )
}

fn c9_event_round_trip() -> Verdict {
    let e = SimulatedExperiment::transport(
        CurrentMapCalibration::default(),
        SimulationSettings::default(),
        CostWeights::default(),
        RampKind::Linear,
        0.15,
    )
    .unwrap();
    let mut inside = 0usize;
    let mut total = 0usize;
    for seed in 0..20u64 {
        let shot = e.shoot(&[], seed, 0.0).unwrap();
        let sim = simulate_events(&shot.hold, &shot.train, seed).unwrap();
        let binned = bin_events(sim.events.as_ref().unwrap(), &shot.train, &shot.train.fall()).unwrap();
        for (rec, exp) in binned.records.iter().zip(&sim.expectations) {
            if rec.count < 2 {
                continue;
            }
            total += 1;
            let n = rec.count as f64;
            let ok = (0..3).all(|a| (rec.mean[a] - exp.mean[a]).abs() <= 3.0 * exp.width[a] / n.sqrt());
            inside += ok as usize;
        }
    }
    let frac = inside as f64 / total.max(1) as f64;
    verdict(
        total > 0 && frac >= 0.95,
        format!("{inside} of {total} pulses within 3 SE on every axis ({:.1}%)", 100.0 * frac),
    )
}

#[test]
fn acceptance() {
    let root = tempfile::tempdir().unwrap();
    let mut spheres = Vec::new();
    let mut logged = Vec::new();
    let mut results: Vec<(usize, &str, Verdict)> = Vec::new();

    results.push((1, "adiabatic timescale", c1_adiabatic_timescale()));
    results.push((2, "cost constants", c2_cost_constants()));
    results.push((3, "physics oracles", timed(Duration::from_secs(10), c3_physics_oracles)));
    results.push((4, "GP correctness", timed(Duration::from_secs(1), c4_gp)));
    results.push((5, "sphere benchmark", timed(Duration::from_secs(60), || c5_sphere(&mut spheres))));
    results.push((
        6,
        "ramp family ordering",
        timed(Duration::from_secs(30 * 60), || c6_ramp_families(root.path(), &mut logged)),
    ));
    results.push((
        7,
        "damping",
        timed(Duration::from_secs(10 * 60), || c7_damping(root.path(), &mut logged)),
    ));
    results.push((8, "replay determinism", c8_replay(&spheres, &logged)));
    results.push((9, "event round trip", c9_event_round_trip()));

    for (id, name, v) in &results {
        println!("{} {id}. {name}: {}", if v.pass { "PASS" } else { "FAIL" }, v.detail);
    }
    let failed: Vec<usize> = results.iter().filter(|r| !r.2.pass).map(|r| r.0).collect();
    assert!(failed.is_empty(), "failed criteria: {failed:?}");
}
