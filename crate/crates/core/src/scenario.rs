//! The search loop: sense, plan, fly, transport, detect, record.

use std::path::Path;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::{Arc, Mutex};
use std::time::Instant;

use log::{info, warn};
use serde::Serialize;

use crate::agents::{avoid, check_plan, desired_turn_rate, step_agent, AgentState, AvoidOutcome};
use crate::config::{Mode, MissionClock, ScenarioConfig};
use crate::error::{Error, Result};
use crate::grid::{FlowSeries, Grid2D, ScalarField};
use crate::metrics::{eta, kappa, lambda_ratio, median, StepRecord, Timing};
use crate::output::OutputWriter;
use crate::potential::{unit_gradient, PotentialSolver};
use crate::sensing::accumulate_coverage_into;
use crate::targets::{Counts, DriftNoise, TargetSwarm};
use crate::transport::{apply_sensing_in_place, Transport};

/// Counters for the motion constraints, accumulated over a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize)]
pub struct MotionStats {
    /// Agent-steps planned while airborne.
    pub agent_steps: usize,
    /// Agent-steps whose proposal the avoidance filter replaced.
    pub adjusted: usize,
    /// Agent-steps with no feasible candidate.
    pub infeasible: usize,
    /// Feasible plans that failed the forward-simulation check.
    pub violations: usize,
    /// Largest `|omega| / omega_max` seen.
    pub max_turn_ratio: f64,
    /// Smallest distance between airborne agents after any step.
    pub min_separation: f64,
    /// Agent-steps that ended off the fluid region.
    pub off_fluid: usize,
}

#[derive(Debug, Clone, Serialize)]
pub struct RunSummary {
    pub seed: u64,
    pub mode: Mode,
    pub steps: usize,
    pub dt: f64,
    pub t_end: f64,
    pub eta: f64,
    pub eta_true: f64,
    pub kappa: f64,
    pub counts: Counts,
    pub mass_in_domain: f64,
    pub lambda: Option<f64>,
    pub diffusion: f64,
    pub cells: usize,
    pub direct_solver: bool,
    pub wall_clock_s: f64,
    pub median_step_ms: Option<f64>,
    pub median_flight_step_ms: Option<f64>,
    pub flight_steps_over_dt: usize,
    pub motion: MotionStats,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub records: Vec<StepRecord>,
    pub timings: Vec<Timing>,
    pub summary: RunSummary,
}

impl RunReport {
    /// Record of the step ending closest to `t`.
    pub fn at(&self, t: f64) -> Option<&StepRecord> {
        let dt = self.summary.dt;
        let k = (t / dt).round() as usize;
        k.checked_sub(1).and_then(|i| self.records.get(i))
    }
}

/// Runs the scenario with its configured seed, writing outputs to `out` if given.
pub fn run(cfg: &ScenarioConfig, out: Option<&Path>) -> Result<RunReport> {
    let mut reports = simulate(cfg, &[cfg.targets.seed], out)?;
    Ok(reports.remove(0))
}

/// Runs one search and scores it against an independent target population
/// per seed. Agents never see the targets, so this equals one run per seed.
pub fn run_ensemble(cfg: &ScenarioConfig, seeds: &[u64]) -> Result<Vec<RunReport>> {
    if seeds.is_empty() {
        return Err(Error::Config("at least one seed is required".into()));
    }
    simulate(cfg, seeds, None)
}

fn ms(since: Instant) -> f64 {
    since.elapsed().as_secs_f64() * 1e3
}

struct Sim<'a> {
    grid: Arc<Grid2D>,
    flow: &'a FlowSeries,
    clock: MissionClock,
    dt: f64,
    bases: Vec<AgentState>,
    agents: Vec<AgentState>,
    outcomes: Vec<AvoidOutcome>,
    solver: Option<PotentialSolver>,
    transport: Transport<'a>,
    m: ScalarField,
    m_true: Option<ScalarField>,
    gamma: ScalarField,
    swarms: Vec<TargetSwarm>,
    motion: MotionStats,
}

impl Sim<'_> {
    fn step(&mut self, k: usize) -> Result<(Timing, f64, f64)> {
        let started = Instant::now();
        let dt = self.dt;
        let t = k as f64 * dt;
        let mut timing = Timing { t: (k + 1) as f64 * dt, ..Timing::default() };

        match self.clock.phase_at(k) {
            Some(_) if self.clock.starts_phase(k) => {
                for (a, b) in self.agents.iter_mut().zip(&self.bases) {
                    *a = *b;
                    a.active = true;
                }
            }
            Some(_) => {}
            None => self.agents.iter_mut().for_each(|a| a.active = false),
        }
        let before = self.agents.clone();
        self.outcomes.clear();

        if let Some(solver) = self.solver.as_mut().filter(|_| before.iter().any(|a| a.active)) {
            let clock = Instant::now();
            accumulate_coverage_into(&self.agents, &mut self.gamma);
            apply_sensing_in_place(&mut self.m, &self.gamma, dt)?;
            if let Some(mt) = self.m_true.as_mut() {
                apply_sensing_in_place(mt, &self.gamma, dt)?;
            }
            timing.transport_ms += ms(clock);

            let clock = Instant::now();
            let u = solver.solve(&self.m)?;
            timing.potential_ms = ms(clock);

            let clock = Instant::now();
            let mut proposals = Vec::with_capacity(self.agents.len());
            for a in &self.agents {
                let dir = if a.active && self.grid.is_fluid_point(a.z) { unit_gradient(&u, a.z)? } else { None };
                proposals.push(if a.active { desired_turn_rate(a, dir, dt) } else { 0.0 });
            }
            self.outcomes = avoid(&self.agents, &proposals, &self.grid, dt);
            self.track_motion();
            for (a, o) in self.agents.iter_mut().zip(&self.outcomes) {
                *a = step_agent(a, o.omega, dt);
            }
            self.track_positions();
            timing.avoidance_ms = ms(clock);
        }

        let clock = Instant::now();
        match self.m_true.as_mut() {
            Some(mt) => self.transport.step(mt, t, dt)?,
            None => self.transport.step(&mut self.m, t, dt)?,
        };
        timing.transport_ms += ms(clock);

        for swarm in &mut self.swarms {
            swarm.detection_trials(&before, t + dt, dt);
            swarm.advect(self.flow, t, dt)?;
        }

        let eta_control = eta(&self.m);
        let eta_true = self.m_true.as_ref().map_or(eta_control, eta);
        timing.total_ms = ms(started);
        Ok((timing, eta_control, eta_true))
    }

    fn track_motion(&mut self) {
        let s = &mut self.motion;
        for (a, o) in self.agents.iter().zip(&self.outcomes) {
            if !a.active {
                continue;
            }
            s.agent_steps += 1;
            s.adjusted += o.adjusted as usize;
            s.infeasible += !o.feasible as usize;
            s.max_turn_ratio = s.max_turn_ratio.max(o.omega.abs() / a.omega_max);
        }
        if let Some(problem) = check_plan(&self.agents, &self.outcomes, &self.grid, self.dt) {
            warn!("motion check: {problem}");
            s.violations += 1;
        }
    }

    fn track_positions(&mut self) {
        let airborne: Vec<&AgentState> = self.agents.iter().filter(|a| a.active).collect();
        for (i, a) in airborne.iter().enumerate() {
            if !self.grid.is_fluid_point(a.z) {
                self.motion.off_fluid += 1;
            }
            for b in &airborne[..i] {
                self.motion.min_separation = self.motion.min_separation.min(a.z.dist(b.z));
            }
        }
    }
}

fn simulate(cfg: &ScenarioConfig, seeds: &[u64], out: Option<&Path>) -> Result<Vec<RunReport>> {
    cfg.validate()?;
    let wall = Instant::now();
    let grid = cfg.build_grid()?;
    let flow = cfg.build_flow(grid.clone())?;
    let m0 = cfg.build_initial(&grid)?;
    let tcfg = cfg.transport_config()?;
    let bases = cfg.build_agents()?;
    let dt = cfg.dt();
    let steps = cfg.steps();
    let mode = cfg.mission.mode;

    let solver = if bases.is_empty() { None } else { Some(PotentialSolver::new(grid.clone(), cfg.potential_config())?) };
    let direct = solver.as_ref().is_some_and(PotentialSolver::is_direct);
    let swarms = seeds
        .iter()
        .map(|&seed| TargetSwarm::spawn(&m0, cfg.targets.count, DriftNoise { sigma: cfg.targets.noise_sigma, seed }))
        .collect::<Result<Vec<_>>>()?;
    let mut sim = Sim {
        grid: grid.clone(),
        flow: &flow,
        clock: cfg.schedule()?,
        dt,
        agents: bases.iter().map(|a| AgentState { active: false, ..*a }).collect(),
        bases,
        outcomes: Vec::new(),
        solver,
        transport: Transport::new(&flow, tcfg)?,
        m: m0.clone(),
        m_true: (mode == Mode::Static).then(|| m0.clone()),
        gamma: ScalarField::zeros(grid.clone()),
        swarms,
        motion: MotionStats { min_separation: f64::INFINITY, ..MotionStats::default() },
    };

    let mut writer = match out {
        Some(dir) => {
            let mut w = OutputWriter::create(dir, &cfg.output)?;
            w.field(0, 0.0, &m0)?;
            if cfg.output.target_every > 0 {
                w.targets(0.0, &sim.swarms[0])?;
            }
            Some(w)
        }
        None => None,
    };
    info!(
        "{} cells, {} steps of {dt} s, {} agents, {} mode, diffusion {}",
        grid.len(),
        steps,
        sim.agents.len(),
        mode.label(),
        tcfg.diffusion
    );

    let mut records: Vec<Vec<StepRecord>> = vec![Vec::with_capacity(steps); seeds.len()];
    let mut timings = Vec::with_capacity(steps);
    let mut flight = Vec::new();
    for k in 0..steps {
        let (timing, eta_control, eta_true) = match sim.step(k) {
            Ok(v) => v,
            Err(e) => {
                if let Some(w) = writer.as_mut() {
                    let _ = w.flush();
                }
                return Err(Error::Step { step: k, source: Box::new(e) });
            }
        };
        for (swarm, recs) in sim.swarms.iter().zip(records.iter_mut()) {
            let counts = swarm.counts();
            recs.push(StepRecord {
                t: timing.t,
                eta: eta_control,
                kappa: kappa(&counts)?,
                mass_in_domain: 1.0 - eta_true,
                n_detected: counts.detected,
                n_escaped: counts.escaped,
                eta_true,
            });
        }
        if sim.agents.iter().any(|a| a.active) {
            flight.push(timing.total_ms);
        }
        if let Some(w) = writer.as_mut() {
            let field = sim.m_true.as_ref().unwrap_or(&sim.m);
            let done = k + 1;
            w.step(done, &records[0][k], &timing, &sim.agents, &sim.outcomes, &sim.swarms[0], field, done == steps)?;
        }
        timings.push(timing);
        if steps >= 10 && (k + 1) % (steps / 10) == 0 {
            let r = &records[0][k];
            info!("t = {:.1} s: eta {:.4}, kappa {:.4}", r.t, r.eta, r.kappa);
        }
    }

    let totals: Vec<f64> = timings.iter().map(|t| t.total_ms).collect();
    let lambda = lambda_ratio(cfg.agents.speed, &flow).ok().filter(|_| !sim.agents.is_empty());
    let wall_clock_s = wall.elapsed().as_secs_f64();
    let mut reports = Vec::with_capacity(seeds.len());
    for ((swarm, recs), &seed) in sim.swarms.iter().zip(records).zip(seeds) {
        let last = recs.last().copied().ok_or_else(|| Error::Config("mission has no steps".into()))?;
        let summary = RunSummary {
            seed,
            mode,
            steps,
            dt,
            t_end: last.t,
            eta: last.eta,
            eta_true: last.eta_true,
            kappa: last.kappa,
            counts: swarm.counts(),
            mass_in_domain: last.mass_in_domain,
            lambda,
            diffusion: tcfg.diffusion,
            cells: grid.len(),
            direct_solver: direct,
            wall_clock_s,
            median_step_ms: median(&totals),
            median_flight_step_ms: median(&flight),
            flight_steps_over_dt: flight.iter().filter(|&&v| v > dt * 1e3).count(),
            motion: MotionStats {
                min_separation: if sim.motion.min_separation.is_finite() { sim.motion.min_separation } else { 0.0 },
                ..sim.motion
            },
        };
        reports.push(RunReport { records: recs, timings: timings.clone(), summary });
    }
    if let Some(w) = writer.as_mut() {
        w.summary(&reports[0].summary)?;
    }
    Ok(reports)
}

/// One row of a velocity-ratio sweep.
#[derive(Debug, Clone, Copy, PartialEq, Serialize)]
pub struct SweepRow {
    pub lambda: f64,
    pub mode: Mode,
    pub horizon: f64,
    pub eta: f64,
    pub kappa: f64,
    pub eta_true: f64,
}

/// Rescales the flow to each velocity ratio, runs both modes and tabulates
/// the metrics at each horizon. Up to `jobs` runs execute concurrently;
/// rows are sorted by ratio, mode and horizon.
pub fn sweep_lambda(cfg: &ScenarioConfig, lambdas: &[f64], horizons: &[f64], jobs: usize) -> Result<Vec<SweepRow>> {
    if lambdas.is_empty() || horizons.is_empty() {
        return Err(Error::Config("sweep needs at least one ratio and one horizon".into()));
    }
    if let Some(bad) = lambdas.iter().find(|&&l| !(l > 0.0 && l.is_finite())) {
        return Err(Error::Config(format!("velocity ratio must be positive, got {bad}")));
    }
    let dt = cfg.dt();
    for &t in horizons {
        let k = (t / dt).round();
        if !(k >= 1.0 && k as usize <= cfg.steps()) || ((k * dt) - t).abs() > 1e-9 * t.max(1.0) {
            return Err(Error::Config(format!("horizon {t} is not a step time within the mission")));
        }
    }
    cfg.validate()?;
    let flow = cfg.build_flow(cfg.build_grid()?)?;
    let base = lambda_ratio(cfg.agents.speed, &flow).map_err(|e| Error::Config(e.to_string()))?;

    let mut tasks = Vec::new();
    for &l in lambdas {
        for mode in [Mode::Dynamic, Mode::Static] {
            let mut c = cfg.clone();
            c.flow.set_scale(cfg.flow.scale() * (base / l));
            c.mission.mode = mode;
            tasks.push((l, mode, c));
        }
    }
    let next = AtomicUsize::new(0);
    let results: Mutex<Vec<Option<Result<RunReport>>>> = Mutex::new((0..tasks.len()).map(|_| None).collect());
    std::thread::scope(|s| {
        for _ in 0..jobs.clamp(1, tasks.len()) {
            s.spawn(|| loop {
                let i = next.fetch_add(1, Ordering::SeqCst);
                let Some((l, mode, c)) = tasks.get(i) else { break };
                info!("sweep: ratio {l}, {} mode", mode.label());
                let r = run(c, None);
                results.lock().expect("no poisoned workers")[i] = Some(r);
            });
        }
    });

    let mut rows = Vec::new();
    for ((l, mode, _), r) in tasks.iter().zip(results.into_inner().expect("no poisoned workers")) {
        let report = r.expect("every task ran")?;
        for &h in horizons {
            let rec = report.at(h).expect("horizon validated");
            rows.push(SweepRow { lambda: *l, mode: *mode, horizon: h, eta: rec.eta, kappa: rec.kappa, eta_true: rec.eta_true });
        }
    }
    rows.sort_by(|a, b| {
        a.lambda
            .total_cmp(&b.lambda)
            .then(a.mode.label().cmp(b.mode.label()))
            .then(a.horizon.total_cmp(&b.horizon))
    });
    Ok(rows)
}
