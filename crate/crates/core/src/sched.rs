//! Dynamic correlation-loss coefficient scheduler.
//!
//! Unlike cosine-annealing learning-rate schedules the coefficient
//! *increases* within a cycle: accuracy converges first, then the
//! correlation penalty ramps up; with wrap enabled the coefficient restarts
//! every cycle.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SchedulerKind {
    Fixed,
    Linear,
    Cosine,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct SchedulerConfig {
    pub kind: SchedulerKind,
    pub c_min: f64,
    pub c_max: f64,
    /// Cycle length in epochs (>= 1).
    pub t_cycle: u64,
    /// Cyclic restart: t wraps modulo t_cycle instead of saturating.
    pub wrap: bool,
}

impl Default for SchedulerConfig {
    fn default() -> Self {
        Self {
            kind: SchedulerKind::Cosine,
            c_min: 0.0,
            c_max: 0.1,
            t_cycle: 100,
            wrap: true,
        }
    }
}

impl SchedulerConfig {
    pub fn validate(&self) -> crate::error::Result<()> {
        if self.c_min < 0.0 || self.c_max < 0.0 {
            return Err(crate::error::Error::Config(
                "scheduler coefficients must be >= 0".into(),
            ));
        }
        if self.c_min > self.c_max {
            return Err(crate::error::Error::Config(format!(
                "c_min {} > c_max {}",
                self.c_min, self.c_max
            )));
        }
        if self.t_cycle < 1 {
            return Err(crate::error::Error::Config("t_cycle must be >= 1".into()));
        }
        Ok(())
    }
}

/// Correlation-loss coefficient at epoch t.
///
/// Cosine: c = c_max − (c_max − c_min)/2 · (1 + cos(π·t_eff/t_cycle)),
/// rising from c_min at t_eff = 0 to c_max at t_eff = t_cycle.
/// Endpoints are returned exactly.
pub fn coeff_at(cfg: &SchedulerConfig, t: u64) -> f64 {
    let t_eff = if cfg.wrap {
        t % cfg.t_cycle
    } else {
        t.min(cfg.t_cycle)
    };
    match cfg.kind {
        SchedulerKind::Fixed => cfg.c_max,
        SchedulerKind::Linear => {
            if t_eff == 0 {
                cfg.c_min
            } else if t_eff == cfg.t_cycle {
                cfg.c_max
            } else {
                cfg.c_min + (cfg.c_max - cfg.c_min) * t_eff as f64 / cfg.t_cycle as f64
            }
        }
        SchedulerKind::Cosine => {
            if t_eff == 0 {
                cfg.c_min
            } else if t_eff == cfg.t_cycle {
                cfg.c_max
            } else {
                let phase = t_eff as f64 / cfg.t_cycle as f64 * std::f64::consts::PI;
                cfg.c_max - (cfg.c_max - cfg.c_min) / 2.0 * (1.0 + phase.cos())
            }
        }
    }
}
