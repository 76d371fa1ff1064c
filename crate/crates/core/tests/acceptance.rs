//! End-to-end acceptance checks. Prints one PASS/FAIL line per criterion and
//! exits non-zero if any hard criterion fails. The performance criterion only
//! warns.

use std::f64::consts::PI;
use std::path::{Path, PathBuf};
use std::sync::Arc;
use std::time::Instant;

use ergosearch::agents::step_agent;
use ergosearch::*;

const SEEDS: [u64; 5] = [1, 2, 3, 4, 5];

fn config(name: &str) -> ScenarioConfig {
    let path = Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs").join(name);
    ScenarioConfig::load(&path).expect("shipped config loads")
}

#[derive(Default)]
struct Ledger {
    failed: Vec<u32>,
}

impl Ledger {
    fn check(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(id);
        }
    }

    fn warn(&mut self, id: u32, name: &str, pass: bool, detail: String) {
        println!("[{}] {id:>2} {name}: {detail}", if pass { "PASS" } else { "WARN" });
    }
}

/// Final eta, eta_true and seed-averaged kappa of an ensemble at time `t`.
struct Outcome {
    eta: f64,
    eta_true: f64,
    kappa: f64,
    motion: MotionStats,
}

fn ensemble(cfg: &ScenarioConfig, t: f64) -> Outcome {
    let reports = run_ensemble(cfg, &SEEDS).expect("ensemble runs");
    let recs: Vec<&StepRecord> = reports.iter().map(|r| r.at(t).expect("horizon inside the mission")).collect();
    Outcome {
        eta: recs[0].eta,
        eta_true: recs[0].eta_true,
        kappa: recs.iter().map(|r| r.kappa).sum::<f64>() / recs.len() as f64,
        motion: reports[0].summary.motion,
    }
}

fn with_mode(cfg: &ScenarioConfig, mode: Mode) -> ScenarioConfig {
    let mut c = cfg.clone();
    c.mission.mode = mode;
    c
}

fn with_lambda(cfg: &ScenarioConfig, lambda: f64) -> ScenarioConfig {
    let flow = cfg.build_flow(cfg.build_grid().unwrap()).unwrap();
    let base = lambda_ratio(cfg.agents.speed, &flow).unwrap();
    let mut c = cfg.clone();
    c.flow.set_scale(cfg.flow.scale() * base / lambda);
    c
}

fn eigenfunction(l: &mut Ledger) {
    let (len, n, k, alpha) = (1.0, 200, 2.0, 0.05);
    let g = Arc::new(Grid2D::uniform(Vec2::ZERO, len / n as f64, n, 3, RimEdges::closed()).unwrap());
    let wave = PI * k / len;
    let m = ScalarField::from_fn(g.clone(), |p| (wave * p.x).cos());
    let start = Instant::now();
    let u = solve_potential(&m, &PotentialConfig::new(alpha)).unwrap();
    let secs = start.elapsed().as_secs_f64();
    let peak = 1.0 / (1.0 + alpha * wave * wave);
    let err = (0..g.len()).map(|c| (u.values()[c] - m.values()[c] * peak).abs()).fold(0.0, f64::max) / peak;
    l.check(
        1,
        "screened Poisson cosine mode",
        err <= 1e-3 && secs < 5.0,
        format!("max relative error {err:.2e} (<= 1e-3), {secs:.3} s (< 5 s)"),
    );
}

fn conservation(l: &mut Ledger) {
    let cfg = config("cavity.cfg");
    let grid = cfg.build_grid().unwrap();
    let flow = cfg.build_flow(grid.clone()).unwrap();
    let mut m = cfg.build_initial(&grid).unwrap();
    let before = m.integral();
    let mut tr = Transport::new(&flow, TransportConfig { diffusion: 0.0, substeps: 10 }).unwrap();
    let dt = cfg.dt();
    for k in 0..1000 {
        tr.step(&mut m, k as f64 * dt, dt).unwrap();
    }
    let rel = ((m.integral() - before) / before).abs();
    l.check(2, "mass conservation, closed cavity, 1000 steps", rel <= 1e-9, format!("|d mass| / mass = {rel:.2e} (<= 1e-9)"));
}

fn heat_kernel(l: &mut Ledger) {
    let (n, h, d, dt) = (201, 10.0, 5.0, 3.0);
    let g = Arc::new(Grid2D::uniform(Vec2::ZERO, h, n, n, RimEdges::closed()).unwrap());
    let flow = FlowSeries::uniform(g.clone(), Vec2::ZERO).unwrap();
    let c = n / 2;
    let centre = g.center(c, c);
    let mut m = ScalarField::zeros(g.clone());
    m.values_mut()[g.idx(c, c)] = 1.0 / g.cell_area();
    let mut tr = Transport::new(&flow, TransportConfig { diffusion: d, substeps: 10 }).unwrap();
    let mut t = 0.0;
    // run until the per-axis spread sqrt(2 D t) reaches 10 cells
    while (2.0 * d * t).sqrt() < 10.0 * h {
        tr.step(&mut m, t, dt).unwrap();
        t += dt;
    }
    let second: f64 =
        (0..g.len()).map(|k| m.values()[k] * g.cell_area() * (g.center_of(k) - centre).norm().powi(2)).sum();
    let expect = 4.0 * d * t;
    let rel = (second / expect - 1.0).abs();
    l.check(
        3,
        "point-mass diffusion second moment",
        rel <= 0.02,
        format!("{second:.1} m^2 vs 4Dt = {expect:.1} m^2 at t = {t} s, relative error {rel:.4} (<= 0.02)"),
    );
}

fn drift_diffusion(l: &mut Ledger) {
    let d = diffusion_coefficient(330.0, 10800.0).unwrap();
    l.check(4, "diffusion from drift error", (d - 5.04).abs() < 0.005, format!("D(330 m, 10800 s) = {d:.4} m^2/s (5.04)"));
}

/// Fraction of stationary on-path targets caught by one straight pass.
fn flyover(footprint: Footprint, speed: f64, dt: f64, half_path: f64, seed: u64) -> f64 {
    let trials = 10_000;
    let target = Vec2::new(0.0, 0.0);
    let mut agent = AgentState::new(Vec2::new(-half_path + 0.37 * speed * dt, 0.0), 0.0, speed, 1.0, 0.0, footprint).unwrap();
    let ps = vec![TargetParticle { y: target, status: Status::Alive }; trials];
    let mut swarm = TargetSwarm::new(ps, DriftNoise { sigma: 0.0, seed }).unwrap();
    let mut t = 0.0;
    while agent.z.x < half_path {
        swarm.detection_trials(std::slice::from_ref(&agent), t, dt);
        agent = step_agent(&agent, 0.0, dt);
        t += dt;
    }
    swarm.counts().detected as f64 / trials as f64
}

fn sensing_calibration(l: &mut Ledger) {
    let cfg = config("cavity.cfg");
    let gauss = flyover(cfg.agents.footprint, cfg.agents.speed, cfg.dt(), 0.1, 5);
    let rect = Footprint::Rect(RectFootprint { mu: 0.75, width: 160.0, height: 90.0 });
    // a tenth of the control step resolves the 90 m rectangle edges
    let cam = flyover(rect, 10.0, 0.3, 300.0, 6);
    l.check(
        5,
        "single-flyover detection",
        (gauss - 0.80).abs() <= 0.02 && (cam - 0.646).abs() <= 0.02,
        format!("gaussian disk {gauss:.4} (0.80 +- 0.02), camera rectangle {cam:.4} (0.646 +- 0.02)"),
    );
}

fn cavity_modes(l: &mut Ledger, motion: &mut Vec<(String, MotionStats)>) {
    let cfg = config("cavity.cfg");
    let start = Instant::now();
    let dy = ensemble(&with_mode(&cfg, Mode::Dynamic), 900.0);
    let st = ensemble(&with_mode(&cfg, Mode::Static), 900.0);
    let secs = start.elapsed().as_secs_f64();
    motion.push(("cavity dynamic".into(), dy.motion));
    motion.push(("cavity static".into(), st.motion));
    let gap = (dy.eta - dy.kappa).abs();
    l.check(
        6,
        "dynamic eta tracks kappa (cavity, lambda 50)",
        gap <= 0.05 && secs <= 600.0,
        format!("eta {:.4}, kappa {:.4}, |eta - kappa| = {gap:.4} (<= 0.05); both modes took {secs:.0} s", dy.eta, dy.kappa),
    );
    let lead = dy.kappa - st.kappa;
    let blind = (st.eta - st.kappa).abs();
    l.check(
        7,
        "dynamic beats static (cavity, lambda 50)",
        lead >= 0.10 && blind >= 0.15,
        format!(
            "kappa {:.4} vs {:.4}, lead {lead:.4} (>= 0.10); static eta {:.4} (true-field eta {:.4}), |eta - kappa| = {blind:.4} (>= 0.15)",
            dy.kappa, st.kappa, st.eta, st.eta_true
        ),
    );
}

fn sweep_endpoints(l: &mut Ledger) {
    let cfg = config("cavity.cfg");
    let slow = with_lambda(&cfg, 1000.0);
    let (dy, st) = (ensemble(&with_mode(&slow, Mode::Dynamic), 900.0), ensemble(&with_mode(&slow, Mode::Static), 900.0));
    let still = (dy.kappa - st.kappa).abs();
    let fast = with_lambda(&cfg, 0.25);
    let (fd, fs) = (ensemble(&with_mode(&fast, Mode::Dynamic), 900.0), ensemble(&with_mode(&fast, Mode::Static), 900.0));
    let spread = (fd.kappa - fs.kappa).abs();
    let (dyn_gap, st_gap) = ((fd.eta - fd.kappa).abs(), (fs.eta - fs.kappa).abs());
    l.check(
        8,
        "velocity-ratio sweep endpoints",
        still <= 0.05 && spread <= 0.1 && dyn_gap <= 0.05 && st_gap > 0.1,
        format!(
            "lambda 1000: kappa {:.4} vs {:.4} (|diff| {still:.4} <= 0.05); lambda 0.25: kappa {:.4} vs {:.4} (|diff| {spread:.4} <= 0.1), \
             dynamic |eta - kappa| {dyn_gap:.4} (<= 0.05), static |eta - kappa| {st_gap:.4} (> 0.1)",
            dy.kappa, st.kappa, fd.kappa, fs.kappa
        ),
    );
}

fn compensation(l: &mut Ledger, motion: &mut Vec<(String, MotionStats)>) {
    let cfg = config("unije.cfg");
    let comp = run(&cfg, None).unwrap().summary;
    let mut raw = cfg.clone();
    raw.transport.drift_error = None;
    raw.transport.drift_time = None;
    raw.transport.diffusion = Some(0.0);
    let plain = run(&raw, None).unwrap().summary;
    motion.push(("channel compensated".into(), comp.motion));
    motion.push(("channel uncompensated".into(), plain.motion));
    let (cg, pg) = ((comp.eta - comp.kappa).abs(), plain.eta - plain.kappa);
    l.check(
        9,
        "drift-error compensation (channel)",
        cg <= 0.05 && pg >= 0.05,
        format!(
            "D = {:.3}: eta {:.4}, kappa {:.4}, |gap| {cg:.4} (<= 0.05); D = 0: eta {:.4}, kappa {:.4}, gap {pg:.4} (>= 0.05)",
            comp.diffusion, comp.eta, comp.kappa, plain.eta, plain.kappa
        ),
    );
}

fn brownian(l: &mut Ledger) {
    let g = Arc::new(Grid2D::uniform(Vec2::ZERO, 1e4, 10, 10, RimEdges::closed()).unwrap());
    let flow = FlowSeries::uniform(g, Vec2::ZERO).unwrap();
    let start = Vec2::new(5e4, 5e4);
    let ps = vec![TargetParticle { y: start, status: Status::Alive }; 1000];
    let mut s = TargetSwarm::new(ps, DriftNoise { sigma: 5.4772, seed: 10 }).unwrap();
    for k in 0..3600 {
        s.advect(&flow, k as f64 * 3.0, 3.0).unwrap();
    }
    let n = s.len() as f64;
    let (sx, sy) = s.particles().fold((0.0, 0.0), |(a, b), p| {
        let d = p.y - start;
        (a + d.x * d.x, b + d.y * d.y)
    });
    let (rx, ry) = ((sx / n).sqrt(), (sy / n).sqrt());
    let ok = [rx, ry].iter().all(|r| (r / 328.6 - 1.0).abs() <= 0.05);
    l.check(10, "Brownian drift error", ok, format!("per-axis RMS {rx:.1} m, {ry:.1} m (328.6 m +- 5%)"));
}

fn motion_invariants(l: &mut Ledger, motion: &[(String, MotionStats)]) {
    let a = AgentState::new(Vec2::new(0.5, 0.5), 0.3, 0.015, 0.01, 0.01, config("cavity.cfg").agents.footprint).unwrap();
    let n = 1000;
    let dt = 2.0 * PI / a.omega_max / n as f64;
    let mut b = a;
    for _ in 0..n {
        b = step_agent(&b, a.omega_max, dt);
    }
    let closure = b.z.dist(a.z);
    let mut ok = closure <= 1e-9;
    let mut parts = vec![format!("circle closure {closure:.1e} m")];
    for (name, m) in motion {
        ok &= m.max_turn_ratio <= 1.0 + 1e-12 && m.violations == 0 && m.off_fluid == 0;
        parts.push(format!(
            "{name}: max |w|/w_max {:.6}, {} plan violations, {} off-water positions, {} infeasible of {} agent steps, min separation {:.4}",
            m.max_turn_ratio, m.violations, m.off_fluid, m.infeasible, m.agent_steps, m.min_separation
        ));
    }
    l.check(11, "motion invariants", ok, parts.join("; "));
}

fn determinism(l: &mut Ledger) {
    let mut cfg = config("cavity.cfg");
    cfg.targets.seed = 7;
    let tmp = tempfile::tempdir().unwrap();
    let outputs: Vec<Vec<u8>> = (0..2)
        .map(|k| {
            let dir: PathBuf = tmp.path().join(format!("run{k}"));
            run(&cfg, Some(&dir)).unwrap();
            std::fs::read(dir.join("metrics.csv")).unwrap()
        })
        .collect();
    let same = !outputs[0].is_empty() && outputs[0] == outputs[1];
    l.check(12, "deterministic metrics.csv", same, format!("two seed-7 cavity runs, {} bytes each, identical: {same}", outputs[0].len()));
}

fn performance(l: &mut Ledger) {
    let mut cfg = config("unije.cfg");
    // about 1e5 cells; one short flight from the start
    cfg.domain.h = 31.0;
    cfg.mission.delay = 0.0;
    cfg.mission.duration = 600.0;
    cfg.mission.phase_count = Some(1);
    cfg.mission.phase_length = Some(600.0);
    let s = run(&cfg, None).unwrap().summary;
    let med = s.median_flight_step_ms.unwrap_or(f64::NAN);
    let budget = cfg.dt() * 1e3;
    l.warn(
        13,
        "real-time step budget",
        med < budget && s.flight_steps_over_dt == 0,
        format!(
            "{} cells ({} solver): median step {med:.1} ms vs dt {budget:.0} ms, {} of {} steps over dt",
            s.cells,
            if s.direct_solver { "direct" } else { "iterative" },
            s.flight_steps_over_dt,
            s.steps
        ),
    );
}

fn main() {
    // `cargo test -- --list` and filters are not meaningful for this suite
    if std::env::args().any(|a| a == "--list") {
        return;
    }
    let started = Instant::now();
    let mut l = Ledger::default();
    let mut motion = Vec::new();
    eigenfunction(&mut l);
    conservation(&mut l);
    heat_kernel(&mut l);
    drift_diffusion(&mut l);
    sensing_calibration(&mut l);
    cavity_modes(&mut l, &mut motion);
    sweep_endpoints(&mut l);
    compensation(&mut l, &mut motion);
    brownian(&mut l);
    motion_invariants(&mut l, &motion);
    determinism(&mut l);
    performance(&mut l);
    println!("acceptance finished in {:.0} s", started.elapsed().as_secs_f64());
    if !l.failed.is_empty() {
        eprintln!("failed criteria: {:?}", l.failed);
        std::process::exit(1);
    }
}
