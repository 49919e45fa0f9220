use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::values::CoreRule;
use crate::vertical::MAX_LANES;

/// Largest participant cap accepted; the epoch tree has `lanes^cap` leaves.
pub const MAX_PARTICIPANT_CAP: usize = 8;

/// Link, demand and control parameters of one simulation run. Speeds in
/// m/s, lengths in m, flows in veh/h/lane, times in s.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimConfig {
    pub link_length: f64,
    pub lanes: usize,
    pub arrival_flow: f64,
    pub bottleneck_outflow: f64,
    pub free_speed: f64,
    pub queue_speed: f64,
    pub queue_spacing: f64,
    /// Arrivals are generated on `[0, horizon)`; the run continues until
    /// every generated vehicle has joined a queue.
    pub horizon: f64,
    pub participant_cap: usize,
    pub rng_seed: u64,
    pub time_step: f64,
    pub theta_mu: f64,
    pub theta_sigma: f64,
    pub core_rule: CoreRule,
}

impl Default for SimConfig {
    fn default() -> Self {
        SimConfig {
            link_length: 200.0,
            lanes: 2,
            arrival_flow: 360.0,
            bottleneck_outflow: 900.0,
            free_speed: 25.0,
            queue_speed: 1.75,
            queue_spacing: 7.0,
            horizon: 3600.0,
            participant_cap: 6,
            rng_seed: 0,
            time_step: 1.0,
            theta_mu: 2.16,
            theta_sigma: 0.7,
            core_rule: CoreRule::EveryBlock,
        }
    }
}

impl SimConfig {
    pub fn from_json(text: &str) -> Result<Self> {
        let cfg: SimConfig = serde_json::from_str(text).map_err(|e| {
            Error::InvalidConfig(format!("line {} column {}: {e}", e.line(), e.column()))
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    /// Saturation headway `3600 / q_out`.
    pub fn headway(&self) -> f64 {
        3600.0 / self.bottleneck_outflow
    }

    /// Free-flow travel time over the link.
    pub fn link_time(&self) -> f64 {
        self.link_length / self.free_speed
    }

    /// Per-lane arrival probability in one time step.
    pub fn arrival_probability(&self) -> f64 {
        self.arrival_flow * self.time_step / 3600.0
    }

    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidConfig(m));
        let positive = [
            ("link_length", self.link_length),
            ("bottleneck_outflow", self.bottleneck_outflow),
            ("free_speed", self.free_speed),
            ("queue_speed", self.queue_speed),
            ("queue_spacing", self.queue_spacing),
            ("time_step", self.time_step),
        ];
        for (name, v) in positive {
            if !(v.is_finite() && v > 0.0) {
                return bad(format!("{name} must be positive, got {v}"));
            }
        }
        if !(self.horizon.is_finite() && self.horizon >= 0.0) {
            return bad(format!("horizon must be non-negative, got {}", self.horizon));
        }
        if !(self.arrival_flow.is_finite() && self.arrival_flow >= 0.0) {
            return bad(format!("arrival_flow must be non-negative, got {}", self.arrival_flow));
        }
        if self.arrival_probability() > 1.0 {
            return bad(format!(
                "arrival_flow {} exceeds one vehicle per lane per time step",
                self.arrival_flow
            ));
        }
        if self.queue_speed >= self.free_speed {
            return bad(format!(
                "queue_speed {} must be below free_speed {}",
                self.queue_speed, self.free_speed
            ));
        }
        let offset = self.queue_spacing / self.queue_speed;
        let h = self.headway();
        if (offset - h).abs() > 1e-9 * h {
            return bad(format!(
                "queue_spacing / queue_speed = {offset} s must equal the saturation headway {h} s"
            ));
        }
        if !(1..=MAX_LANES).contains(&self.lanes) {
            return bad(format!("lanes must be in 1..={MAX_LANES}, got {}", self.lanes));
        }
        if !(1..=MAX_PARTICIPANT_CAP).contains(&self.participant_cap) {
            return bad(format!(
                "participant_cap must be in 1..={MAX_PARTICIPANT_CAP}, got {}",
                self.participant_cap
            ));
        }
        if !(self.theta_sigma.is_finite() && self.theta_sigma >= 0.0 && self.theta_mu.is_finite()) {
            return bad("theta_mu must be finite and theta_sigma non-negative".into());
        }
        Ok(())
    }
}
