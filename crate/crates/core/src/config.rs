//! Flat `key: value` run configuration shared by all CLI subcommands.
//!
//! One file drives the whole pipeline; every key can also be overridden
//! through the environment with the `CORRFF_` prefix (dots become
//! underscores, uppercased), e.g. `CORRFF_TRAIN_EPOCHS=50`.

use crate::corr::{FeatureSource, IrrepMode, SamplePolicy};
use crate::error::{Error, Result};
use crate::md::{DatagenConfig, MdConfig, Thermostat, VelocityInit};
use crate::model::ModelConfig;
use crate::sched::SchedulerKind;
use crate::stability::{DistanceMode, StabilityConfig};
use crate::train::TrainConfig;

pub const ENV_PREFIX: &str = "CORRFF_";

#[derive(Debug, Clone)]
pub struct RunConfig {
    pub model: ModelConfig,
    pub train: TrainConfig,
    pub md: MdConfig,
    pub datagen: DatagenConfig,
    pub stability: StabilityConfig,
    pub seed: u64,
    /// Optional path to a potential preset JSON; built-in mixture otherwise.
    pub preset: Option<String>,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            model: ModelConfig::default(),
            train: TrainConfig::default(),
            md: MdConfig::default(),
            datagen: DatagenConfig::default(),
            stability: StabilityConfig::default(),
            seed: 0,
            preset: None,
        }
    }
}

/// Every key accepted by the flat run-configuration format.
pub const KEYS: &[&str] = &[
    "seed",
    "preset",
    "model.layers",
    "model.dim",
    "model.n_basis",
    "model.r_max",
    "train.epochs",
    "train.batch_size",
    "train.lr",
    "train.val_interval",
    "loss.c_f",
    "loss.c_e",
    "scheduler.kind",
    "scheduler.c_min",
    "scheduler.c_max",
    "scheduler.t_cycle",
    "scheduler.wrap",
    "corr.source",
    "corr.irreps",
    "corr.sampling",
    "corr.one_o_norms",
    "md.dt",
    "md.steps",
    "md.t_set",
    "md.thermostat",
    "md.damp",
    "md.dump_interval",
    "md.velocity_init",
    "datagen.ratio",
    "datagen.n_atoms",
    "datagen.box_len",
    "datagen.equil_steps",
    "datagen.stride",
    "datagen.n_frames",
    "stability.alpha",
    "stability.beta",
    "stability.t_set",
    "stability.mode",
    "stability.clamp",
];

fn bad_value(key: &str, value: &str, expected: &str) -> Error {
    Error::Config(format!("key '{key}': cannot parse '{value}' as {expected}"))
}

fn parse_num<T: std::str::FromStr>(key: &str, value: &str, expected: &str) -> Result<T> {
    value.trim().parse().map_err(|_| bad_value(key, value, expected))
}

fn parse_bool(key: &str, value: &str) -> Result<bool> {
    match value.trim() {
        "true" | "on" | "yes" | "1" => Ok(true),
        "false" | "off" | "no" | "0" => Ok(false),
        _ => Err(bad_value(key, value, "boolean")),
    }
}

impl RunConfig {
    /// Apply one key/value pair; unknown keys list the valid set.
    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        let v = value.trim();
        match key {
            "seed" => self.seed = parse_num(key, v, "u64")?,
            "preset" => self.preset = Some(v.to_string()),
            "model.layers" => self.model.layers = parse_num(key, v, "usize")?,
            "model.dim" => self.model.dim = parse_num(key, v, "usize")?,
            "model.n_basis" => self.model.n_basis = parse_num(key, v, "usize")?,
            "model.r_max" => self.model.r_max = parse_num(key, v, "f64")?,
            "train.epochs" => self.train.epochs = parse_num(key, v, "usize")?,
            "train.batch_size" => self.train.batch_size = parse_num(key, v, "usize")?,
            "train.lr" => self.train.lr = parse_num(key, v, "f64")?,
            "train.val_interval" => self.train.val_interval = parse_num(key, v, "usize")?,
            "loss.c_f" => self.train.weights.c_f = parse_num(key, v, "f64")?,
            "loss.c_e" => self.train.weights.c_e = parse_num(key, v, "f64")?,
            "scheduler.kind" => {
                self.train.scheduler.kind = match v {
                    "fixed" => SchedulerKind::Fixed,
                    "linear" => SchedulerKind::Linear,
                    "cosine" => SchedulerKind::Cosine,
                    _ => return Err(bad_value(key, v, "one of fixed|linear|cosine")),
                }
            }
            "scheduler.c_min" => self.train.scheduler.c_min = parse_num(key, v, "f64")?,
            "scheduler.c_max" => self.train.scheduler.c_max = parse_num(key, v, "f64")?,
            "scheduler.t_cycle" => self.train.scheduler.t_cycle = parse_num(key, v, "usize")?,
            "scheduler.wrap" => self.train.scheduler.wrap = parse_bool(key, v)?,
            "corr.source" => {
                self.train.corr.source = match v {
                    "edge" => FeatureSource::Edge,
                    "node" => FeatureSource::Node,
                    _ => return Err(bad_value(key, v, "one of edge|node")),
                }
            }
            "corr.irreps" => {
                self.train.corr.irreps = match v {
                    "0e" => IrrepMode::Only0e,
                    "1o" => IrrepMode::Only1o,
                    "both" | "both_mixed" => IrrepMode::BothMixed,
                    "both_summed" => IrrepMode::BothSummed,
                    _ => return Err(bad_value(key, v, "one of 0e|1o|both|both_summed")),
                }
            }
            "corr.sampling" => {
                self.train.corr.sampling = if v == "sqrt" {
                    SamplePolicy::SqrtF
                } else {
                    SamplePolicy::Fixed(parse_num(key, v, "'sqrt' or a fixed count")?)
                }
            }
            "corr.one_o_norms" => self.train.corr.one_o_norms = parse_bool(key, v)?,
            "md.dt" => self.md.dt = parse_num(key, v, "f64")?,
            "md.steps" => self.md.steps = parse_num(key, v, "usize")?,
            "md.t_set" => self.md.t_set = parse_num(key, v, "f64")?,
            "md.thermostat" => {
                self.md.thermostat = match v {
                    "none" => Thermostat::None,
                    "langevin" => {
                        let damp = match self.md.thermostat {
                            Thermostat::Langevin { damp } => damp,
                            Thermostat::None => 100.0 * self.md.dt,
                        };
                        Thermostat::Langevin { damp }
                    }
                    _ => return Err(bad_value(key, v, "one of none|langevin")),
                }
            }
            "md.damp" => {
                self.md.thermostat = Thermostat::Langevin { damp: parse_num(key, v, "f64")? }
            }
            "md.dump_interval" => self.md.dump_interval = parse_num(key, v, "usize")?,
            "md.velocity_init" => {
                self.md.velocity_init = match v {
                    "zero" => VelocityInit::Zero,
                    "maxwell" => VelocityInit::Maxwell,
                    "frame" => VelocityInit::FromFrame,
                    _ => return Err(bad_value(key, v, "one of zero|maxwell|frame")),
                }
            }
            "datagen.ratio" => self.datagen.ratio = v.to_string(),
            "datagen.n_atoms" => self.datagen.n_atoms = parse_num(key, v, "usize")?,
            "datagen.box_len" => self.datagen.box_len = parse_num(key, v, "f64")?,
            "datagen.equil_steps" => self.datagen.equil_steps = parse_num(key, v, "usize")?,
            "datagen.stride" => self.datagen.stride = parse_num(key, v, "usize")?,
            "datagen.n_frames" => self.datagen.n_frames = parse_num(key, v, "usize")?,
            "stability.alpha" => self.stability.alpha = parse_num(key, v, "f64")?,
            "stability.beta" => self.stability.beta = parse_num(key, v, "f64")?,
            "stability.t_set" => self.stability.t_set = parse_num(key, v, "f64")?,
            "stability.mode" => {
                self.stability.mode = match v {
                    "literal" => DistanceMode::Literal,
                    "ratio" => DistanceMode::Ratio,
                    _ => return Err(bad_value(key, v, "one of literal|ratio")),
                }
            }
            "stability.clamp" => self.stability.clamp = parse_bool(key, v)?,
            _ => {
                return Err(Error::Config(format!(
                    "unknown key '{key}'; valid keys: {}",
                    KEYS.join(", ")
                )))
            }
        }
        Ok(())
    }

    /// Parse flat `key: value` text ('#' starts a comment).
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = RunConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line.split_once(':').ok_or_else(|| Error::Parse {
                line: lineno + 1,
                msg: format!("expected 'key: value', got '{line}'"),
            })?;
            cfg.set(key.trim(), value).map_err(|e| Error::Parse {
                line: lineno + 1,
                msg: e.to_string(),
            })?;
        }
        Ok(cfg)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let mut cfg = Self::parse(&std::fs::read_to_string(path)?)?;
        cfg.apply_env()?;
        Ok(cfg)
    }

    /// Apply `CORRFF_*` environment overrides on top of file values.
    pub fn apply_env(&mut self) -> Result<()> {
        for key in KEYS {
            let env_key = format!("{ENV_PREFIX}{}", key.replace('.', "_").to_uppercase());
            if let Ok(value) = std::env::var(&env_key) {
                self.set(key, &value)
                    .map_err(|e| Error::Config(format!("env {env_key}: {e}")))?;
            }
        }
        Ok(())
    }

    /// Cross-field validation; returns non-fatal warnings.
    pub fn validate(&self) -> Result<Vec<String>> {
        self.train.validate()?;
        self.md.validate()?;
        self.stability.validate()?;
        if self.model.r_max > self.datagen.box_len / 2.0 {
            return Err(Error::Config(format!(
                "model r_max {} exceeds half the simulation box ({})",
                self.model.r_max,
                self.datagen.box_len / 2.0
            )));
        }
        let mut warnings = Vec::new();
        let w = &self.train.weights;
        if self.train.scheduler.c_max > w.c_f.max(w.c_e) {
            warnings.push(format!(
                "scheduler c_max {} exceeds max(c_f, c_e) = {}",
                self.train.scheduler.c_max,
                w.c_f.max(w.c_e)
            ));
        }
        Ok(warnings)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_and_reports_line_numbers() {
        let cfg = RunConfig::parse(
            "# comment\nseed: 7\nmodel.dim: 8\nscheduler.kind: linear # inline\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.model.dim, 8);
        assert_eq!(cfg.train.scheduler.kind, SchedulerKind::Linear);

        let err = RunConfig::parse("seed: 7\nbogus.key: 1\n").unwrap_err();
        let msg = err.to_string();
        assert!(msg.contains("line 2"), "{msg}");
        assert!(msg.contains("valid keys"), "{msg}");
    }

    #[test]
    fn type_errors_name_key() {
        let err = RunConfig::parse("model.dim: fast\n").unwrap_err();
        assert!(err.to_string().contains("model.dim"), "{err}");
    }

    #[test]
    fn cutoff_cross_check() {
        let mut cfg = RunConfig::default();
        cfg.set("model.r_max", "10.0").unwrap();
        cfg.set("datagen.box_len", "18.0").unwrap();
        assert!(cfg.validate().is_err());
    }

    #[test]
    fn c_max_warning() {
        let mut cfg = RunConfig::default();
        cfg.set("scheduler.c_max", "5.0").unwrap();
        let warnings = cfg.validate().unwrap();
        assert_eq!(warnings.len(), 1);
    }

    #[test]
    fn env_override() {
        // Serialized through a unique key to avoid cross-test interference.
        std::env::set_var("CORRFF_TRAIN_EPOCHS", "17");
        let mut cfg = RunConfig::default();
        cfg.apply_env().unwrap();
        std::env::remove_var("CORRFF_TRAIN_EPOCHS");
        assert_eq!(cfg.train.epochs, 17);
    }
}
