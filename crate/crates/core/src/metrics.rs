//! Search-progress metrics and per-step records.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{FlowSeries, ScalarField};
use crate::targets::Counts;

/// Survey accomplishment `1 - integral(m)`.
pub fn eta(m: &ScalarField) -> f64 {
    1.0 - m.integral()
}

/// Fraction of all targets detected; escaped targets count as missed.
pub fn kappa(c: &Counts) -> Result<f64> {
    let n = c.alive + c.detected + c.escaped;
    if n == 0 {
        return Err(Error::Domain("no targets".into()));
    }
    Ok(c.detected as f64 / n as f64)
}

/// Agent speed over mean flow speed.
pub fn lambda_ratio(v: f64, flow: &FlowSeries) -> Result<f64> {
    let mean = flow.mean_speed();
    if !(mean > 0.0) {
        return Err(Error::Domain("flow has zero mean speed; velocity ratio undefined".into()));
    }
    Ok(v / mean)
}

/// One control step. `eta` is computed from the field the agents steer by;
/// `eta_true` from the transported field (they differ only in static mode).
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StepRecord {
    pub t: f64,
    pub eta: f64,
    pub kappa: f64,
    pub mass_in_domain: f64,
    pub n_detected: usize,
    pub n_escaped: usize,
    pub eta_true: f64,
}

/// Wall-clock cost of one step's components, in milliseconds.
#[derive(Debug, Clone, Copy, Default, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub t: f64,
    pub potential_ms: f64,
    pub avoidance_ms: f64,
    pub transport_ms: f64,
    pub total_ms: f64,
}

/// Median of a sample; `None` when empty.
pub fn median(values: &[f64]) -> Option<f64> {
    if values.is_empty() {
        return None;
    }
    let mut v = values.to_vec();
    v.sort_by(f64::total_cmp);
    let n = v.len();
    Some(if n % 2 == 1 { v[n / 2] } else { 0.5 * (v[n / 2 - 1] + v[n / 2]) })
}
