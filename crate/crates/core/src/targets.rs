//! Ground-truth targets: Lagrangian particles drifting with the flow plus
//! Brownian error, detected by Bernoulli trials against the sensing rate.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::agents::AgentState;
use crate::error::{Error, Result};
use crate::geom::Vec2;
use crate::grid::{EdgeKind, FlowSeries, Grid2D, ScalarField};
use crate::par;
use crate::sensing::total_rate;

const DETECTION_KEY: u64 = 0x9e37_79b9_7f4a_7c15;
const SPAWN_KEY: u64 = 0xd1b5_4a32_d192_ed03;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", content = "t", rename_all = "lowercase")]
pub enum Status {
    Alive,
    Detected(f64),
    Escaped(f64),
}

impl Status {
    pub fn label(&self) -> &'static str {
        match self {
            Status::Alive => "alive",
            Status::Detected(_) => "detected",
            Status::Escaped(_) => "escaped",
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TargetParticle {
    pub y: Vec2,
    pub status: Status,
}

/// Per-step, per-axis Gaussian position error.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DriftNoise {
    pub sigma: f64,
    pub seed: u64,
}

/// Draws `n` positions from the discrete density `m0 * h^2`: a cell by
/// cumulative weight, then a uniform point inside it.
pub fn spawn_targets(m0: &ScalarField, n: usize, seed: u64) -> Result<Vec<TargetParticle>> {
    if n == 0 {
        return Err(Error::Domain("target count must be positive".into()));
    }
    let g = m0.grid();
    let mut cumulative = Vec::with_capacity(g.len());
    let mut acc = 0.0;
    for (k, &v) in m0.values().iter().enumerate() {
        if g.is_fluid(k) {
            if v < 0.0 || !v.is_finite() {
                return Err(Error::Domain("initial density must be finite and non-negative".into()));
            }
            acc += v;
        }
        cumulative.push(acc);
    }
    if !(acc > 0.0) {
        return Err(Error::Normalization(acc * g.cell_area()));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ SPAWN_KEY);
    let h = g.h();
    Ok((0..n)
        .map(|_| {
            let u: f64 = rng.gen::<f64>() * acc;
            let k = cumulative.partition_point(|&c| c <= u).min(g.len() - 1);
            let (i, j) = g.ij(k);
            let corner = g.center(i, j) - Vec2::new(0.5 * h, 0.5 * h);
            let y = corner + Vec2::new(rng.gen::<f64>() * h, rng.gen::<f64>() * h);
            TargetParticle { y, status: Status::Alive }
        })
        .collect())
}

#[derive(Debug, Clone)]
struct Slot {
    particle: TargetParticle,
    noise: ChaCha8Rng,
    detect: ChaCha8Rng,
}

/// A population of targets, each with its own random streams so the result
/// does not depend on evaluation order.
#[derive(Debug, Clone)]
pub struct TargetSwarm {
    slots: Vec<Slot>,
    sigma: f64,
}

impl TargetSwarm {
    pub fn new(particles: Vec<TargetParticle>, noise: DriftNoise) -> Result<Self> {
        if !(noise.sigma >= 0.0) || !noise.sigma.is_finite() {
            return Err(Error::Domain(format!("noise sigma must be non-negative, got {}", noise.sigma)));
        }
        let slots = particles
            .into_iter()
            .enumerate()
            .map(|(i, particle)| {
                let mut rn = ChaCha8Rng::seed_from_u64(noise.seed);
                rn.set_stream(i as u64);
                let mut rd = ChaCha8Rng::seed_from_u64(noise.seed ^ DETECTION_KEY);
                rd.set_stream(i as u64);
                Slot { particle, noise: rn, detect: rd }
            })
            .collect();
        Ok(Self { slots, sigma: noise.sigma })
    }

    /// Spawns from `m0` and wires up the noise streams with the same seed.
    pub fn spawn(m0: &ScalarField, n: usize, noise: DriftNoise) -> Result<Self> {
        Self::new(spawn_targets(m0, n, noise.seed)?, noise)
    }

    pub fn len(&self) -> usize {
        self.slots.len()
    }

    pub fn is_empty(&self) -> bool {
        self.slots.is_empty()
    }

    pub fn particles(&self) -> impl ExactSizeIterator<Item = &TargetParticle> {
        self.slots.iter().map(|s| &s.particle)
    }

    pub fn counts(&self) -> Counts {
        let mut c = Counts::default();
        for p in self.particles() {
            match p.status {
                Status::Alive => c.alive += 1,
                Status::Detected(_) => c.detected += 1,
                Status::Escaped(_) => c.escaped += 1,
            }
        }
        c
    }

    /// Midpoint step through the flow followed by the Brownian increment.
    /// Detected targets keep drifting so trajectories do not depend on the
    /// search; escaped targets are frozen.
    pub fn advect(&mut self, flow: &FlowSeries, t: f64, dt: f64) -> Result<()> {
        if !(dt >= 0.0 && dt.is_finite() && t.is_finite()) {
            return Err(Error::NonFinite("target time step"));
        }
        let g = flow.grid().clone();
        let sigma = self.sigma;
        par::update_indexed(&mut self.slots, |_, slot| advect_one(slot, flow, &g, sigma, t, dt));
        Ok(())
    }

    /// One Bernoulli trial per alive target with success probability
    /// `1 - exp(-rate * dt)`, the rate evaluated exactly at the target.
    pub fn detection_trials(&mut self, agents: &[AgentState], t: f64, dt: f64) {
        let any = agents.iter().any(|a| a.active);
        par::update_indexed(&mut self.slots, |_, slot| {
            if slot.particle.status != Status::Alive {
                return;
            }
            let u: f64 = slot.detect.gen();
            if !any {
                return;
            }
            let rate = total_rate(agents, slot.particle.y);
            if u < -(-rate * dt).exp_m1() {
                slot.particle.status = Status::Detected(t);
            }
        });
    }
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Counts {
    pub alive: usize,
    pub detected: usize,
    pub escaped: usize,
}

fn advect_one(slot: &mut Slot, flow: &FlowSeries, g: &Grid2D, sigma: f64, t: f64, dt: f64) {
    let p = &mut slot.particle;
    if matches!(p.status, Status::Escaped(_)) {
        return;
    }
    let y = p.y;
    // positions are clamped inside the rim, so sampling cannot fail
    let k1 = flow.sample(clamp_inside(g, y), t).unwrap_or(Vec2::ZERO);
    let mid = clamp_inside(g, y + k1 * (0.5 * dt));
    let k2 = flow.sample(mid, t + 0.5 * dt).unwrap_or(Vec2::ZERO);
    let mut next = y + k2 * dt;
    if sigma > 0.0 {
        let nx: f64 = slot.noise.sample(StandardNormal);
        let ny: f64 = slot.noise.sample(StandardNormal);
        next = next + Vec2::new(nx, ny) * sigma;
    }
    let b = g.bounds();
    let e = g.edges();
    let crossed = [
        (next.x < b.min.x, e.left),
        (next.x > b.max.x, e.right),
        (next.y < b.min.y, e.bottom),
        (next.y > b.max.y, e.top),
    ];
    if crossed.iter().any(|&(out, kind)| out && kind == EdgeKind::Open) {
        p.y = next;
        p.status = Status::Escaped(t + dt);
        return;
    }
    next = clamp_inside(g, next);
    if !g.is_fluid_point(next) {
        // slide along the obstacle: keep whichever axis of the move is free
        let along_x = Vec2::new(next.x, y.y);
        let along_y = Vec2::new(y.x, next.y);
        next = if g.is_fluid_point(along_x) {
            along_x
        } else if g.is_fluid_point(along_y) {
            along_y
        } else {
            y
        };
    }
    p.y = next;
}

fn clamp_inside(g: &Grid2D, p: Vec2) -> Vec2 {
    let b = g.bounds();
    let eps = 1e-9 * g.h();
    Vec2::new(p.x.clamp(b.min.x + eps, b.max.x - eps), p.y.clamp(b.min.y + eps, b.max.y - eps))
}
