//! Run output files.
//!
//! | file | content |
//! |------|---------|
//! | `metrics.csv` | one row per control step |
//! | `timings.csv` | wall-clock cost per step (varies between runs) |
//! | `agents.csv` | agent poses after each step |
//! | `targets.csv` | target positions every `target_every` steps |
//! | `fields/m_<step>.bin` | probability field snapshots |
//! | `summary.json` | final metrics and totals |

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};

use serde::Serialize;

use crate::agents::{AgentState, AvoidOutcome};
use crate::config::OutputSpec;
use crate::error::Result;
use crate::grid::ScalarField;
use crate::metrics::{StepRecord, Timing};
use crate::targets::{Status, TargetSwarm};

type Csv = csv::Writer<BufWriter<File>>;

#[derive(Serialize)]
struct AgentRow {
    t: f64,
    agent_id: usize,
    x: f64,
    y: f64,
    theta: f64,
    omega: f64,
    active: bool,
}

#[derive(Serialize)]
struct TargetRow {
    t: f64,
    target_id: usize,
    x: f64,
    y: f64,
    status: &'static str,
}

pub struct OutputWriter {
    dir: PathBuf,
    metrics: Csv,
    timings: Csv,
    agents: Csv,
    targets: Csv,
    target_every: usize,
    field_every: usize,
}

fn csv_at(path: &Path) -> Result<Csv> {
    Ok(csv::Writer::from_writer(BufWriter::new(File::create(path)?)))
}

impl OutputWriter {
    pub fn create(dir: &Path, spec: &OutputSpec) -> Result<Self> {
        fs::create_dir_all(dir.join("fields"))?;
        Ok(Self {
            dir: dir.to_path_buf(),
            metrics: csv_at(&dir.join("metrics.csv"))?,
            timings: csv_at(&dir.join("timings.csv"))?,
            agents: csv_at(&dir.join("agents.csv"))?,
            targets: csv_at(&dir.join("targets.csv"))?,
            target_every: spec.target_every,
            field_every: spec.field_every,
        })
    }

    pub fn dir(&self) -> &Path {
        &self.dir
    }

    pub fn field(&self, step: usize, t: f64, m: &ScalarField) -> Result<()> {
        crate::io::write_scalar(&self.dir.join("fields").join(format!("m_{step:06}.bin")), m, t)
    }

    pub fn targets(&mut self, t: f64, swarm: &TargetSwarm) -> Result<()> {
        for (id, p) in swarm.particles().enumerate() {
            let status = match p.status {
                Status::Alive => "alive",
                Status::Detected(_) => "detected",
                Status::Escaped(_) => "escaped",
            };
            self.targets.serialize(TargetRow { t, target_id: id, x: p.y.x, y: p.y.y, status })?;
        }
        Ok(())
    }

    /// Rows for the step that ended at `record.t`; `step` counts completed steps.
    #[allow(clippy::too_many_arguments)]
    pub fn step(
        &mut self,
        step: usize,
        record: &StepRecord,
        timing: &Timing,
        agents: &[AgentState],
        outcomes: &[AvoidOutcome],
        swarm: &TargetSwarm,
        m: &ScalarField,
        last: bool,
    ) -> Result<()> {
        self.metrics.serialize(record)?;
        self.timings.serialize(timing)?;
        for (id, a) in agents.iter().enumerate() {
            let omega = outcomes.get(id).map_or(0.0, |o| if a.active { o.omega } else { 0.0 });
            self.agents.serialize(AgentRow {
                t: record.t,
                agent_id: id,
                x: a.z.x,
                y: a.z.y,
                theta: a.theta,
                omega,
                active: a.active,
            })?;
        }
        if self.target_every > 0 && (step.is_multiple_of(self.target_every) || last) {
            self.targets(record.t, swarm)?;
        }
        if (self.field_every > 0 && step.is_multiple_of(self.field_every)) || last {
            self.field(step, record.t, m)?;
        }
        Ok(())
    }

    pub fn flush(&mut self) -> Result<()> {
        self.metrics.flush()?;
        self.timings.flush()?;
        self.agents.flush()?;
        self.targets.flush()?;
        Ok(())
    }

    pub fn summary<T: Serialize>(&mut self, summary: &T) -> Result<()> {
        self.flush()?;
        let text = serde_json::to_string_pretty(summary).expect("summary serializes");
        fs::write(self.dir.join("summary.json"), text + "\n")?;
        Ok(())
    }
}
