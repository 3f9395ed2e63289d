//! Experiment configuration, loaded from TOML.
//!
//! Every key is optional; unknown keys are rejected. A minimal file:
//!
//! ```toml
//! ell = 20
//! agents = 16
//! variant = "asj-r"
//! seed = 7
//!
//! [clock]
//! mode = "virtual"
//!
//! [corruption]
//! kind = "bit-flip"
//! probability = 0.01
//! bit_range = "exponent"
//! ```

use std::path::Path;

use abft_core::corruption::{BitFlipPolicy, BitRange, MalevolentPolicy};
use abft_core::rng::derive_seed;
use abft_core::runtime::{ClockMode, DelayModel, DelayRange, RunConfig};
use abft_core::solver::{AgentConfig, Variant};
use anyhow::{bail, Context, Result};
use serde::{Deserialize, Serialize};

/// Environment variable that replaces the configured master seed.
pub const SEED_ENV: &str = "ABFT_SEED";

const DELAY_TAG: u64 = 0x6465_6c61;
const FLIP_TAG: u64 = 0x666c_6970;
const MALEVOLENT_TAG: u64 = 0x6d61_6c76;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    /// Interior grid points per side of the Poisson mesh.
    pub ell: usize,
    pub agents: usize,
    pub variant: Variant,
    /// Master seed; every trial derives its own streams from it.
    pub seed: u64,
    pub clock: ClockConfig,
    pub corruption: Corruption,
    pub epsilon: f64,
    pub convergence_duration: f64,
    pub max_iterations: u64,
    pub wall_cap: f64,
    pub trials: usize,
    pub sample_interval: f64,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            ell: 20,
            agents: 16,
            variant: Variant::Asj,
            seed: 0,
            clock: ClockConfig::RealTime,
            corruption: Corruption::None,
            epsilon: 1e-6,
            convergence_duration: 1.0,
            max_iterations: 10_000_000,
            wall_cap: 60.0,
            trials: 10,
            sample_interval: 0.01,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "kebab-case", deny_unknown_fields)]
pub enum ClockConfig {
    RealTime,
    /// Discrete-event simulation. Ranges are `[min, max]` in milliseconds.
    Virtual {
        #[serde(default = "default_latency_ms")]
        latency_ms: [f64; 2],
        #[serde(default = "default_compute_ms")]
        compute_ms: [f64; 2],
    },
}

impl ClockConfig {
    /// Virtual clock with the runtime's default delays.
    pub fn simulated() -> Self {
        ClockConfig::Virtual {
            latency_ms: default_latency_ms(),
            compute_ms: default_compute_ms(),
        }
    }
}

fn default_latency_ms() -> [f64; 2] {
    let d = DelayModel::default().latency;
    [d.min * 1e3, d.max * 1e3]
}

fn default_compute_ms() -> [f64; 2] {
    let d = DelayModel::default().compute;
    [d.min * 1e3, d.max * 1e3]
}

#[derive(Debug, Clone, Copy, PartialEq, Default, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "kebab-case", deny_unknown_fields)]
pub enum Corruption {
    #[default]
    None,
    BitFlip {
        probability: f64,
        #[serde(default)]
        bit_range: BitRange,
    },
    Malevolent {
        omega_f: f64,
        omega_r: f64,
        delta: f64,
        #[serde(default = "default_target")]
        target_agent: usize,
    },
}

fn default_target() -> usize {
    8
}

impl ExperimentConfig {
    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path)
            .with_context(|| format!("reading config {}", path.display()))?;
        Self::parse(&text).with_context(|| format!("parsing config {}", path.display()))
    }

    pub fn parse(text: &str) -> Result<Self> {
        let config: Self = toml::from_str(text)?;
        config.validate()?;
        Ok(config)
    }

    /// Replaces the seed with `ABFT_SEED` when it is set.
    pub fn apply_env(&mut self) -> Result<()> {
        if let Ok(raw) = std::env::var(SEED_ENV) {
            self.seed = raw
                .trim()
                .parse()
                .with_context(|| format!("{SEED_ENV}={raw:?} is not an unsigned integer"))?;
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.trials == 0 {
            bail!("trials must be at least 1");
        }
        if self.ell == 0 {
            bail!("ell must be at least 1");
        }
        if self.agents == 0 || self.agents > self.ell * self.ell {
            bail!(
                "agents must lie in 1..={} for ell = {}, got {}",
                self.ell * self.ell,
                self.ell,
                self.agents
            );
        }
        if !(self.epsilon > 0.0 && self.epsilon.is_finite()) {
            bail!("epsilon must be positive, got {}", self.epsilon);
        }
        if let Corruption::Malevolent { target_agent, .. } = self.corruption {
            if target_agent >= self.agents {
                bail!(
                    "malevolent target agent {target_agent} does not exist among {} agents",
                    self.agents
                );
            }
        }
        self.run_config(0)?.validate()?;
        self.agent_config(0)
            .malevolent
            .map_or(Ok(()), |m| m.validate())?;
        Ok(())
    }

    /// Seed of trial `trial`.
    pub fn trial_seed(&self, trial: usize) -> u64 {
        derive_seed(self.seed, &[trial as u64])
    }

    pub fn agent_config(&self, trial: usize) -> AgentConfig {
        let malevolent = match self.corruption {
            Corruption::Malevolent {
                omega_f,
                omega_r,
                delta,
                target_agent,
            } => Some(MalevolentPolicy {
                omega_f,
                omega_r,
                delta,
                target_agent,
                seed: derive_seed(self.trial_seed(trial), &[MALEVOLENT_TAG]),
            }),
            _ => None,
        };
        AgentConfig {
            variant: self.variant,
            malevolent,
        }
    }

    pub fn run_config(&self, trial: usize) -> Result<RunConfig> {
        let seed = self.trial_seed(trial);
        let clock = match self.clock {
            ClockConfig::RealTime => ClockMode::RealTime,
            ClockConfig::Virtual {
                latency_ms,
                compute_ms,
            } => ClockMode::Virtual(DelayModel {
                latency: DelayRange::new(latency_ms[0] * 1e-3, latency_ms[1] * 1e-3),
                compute: DelayRange::new(compute_ms[0] * 1e-3, compute_ms[1] * 1e-3),
                link_latency: Vec::new(),
                seed: derive_seed(seed, &[DELAY_TAG]),
            }),
        };
        let bit_flips = match self.corruption {
            Corruption::BitFlip {
                probability,
                bit_range,
            } => Some(BitFlipPolicy::new(
                probability,
                bit_range,
                derive_seed(seed, &[FLIP_TAG]),
            )?),
            _ => None,
        };
        Ok(RunConfig {
            clock,
            bit_flips,
            convergence_duration: self.convergence_duration,
            max_iterations: self.max_iterations,
            wall_cap: self.wall_cap,
            sample_interval: self.sample_interval,
            divergence_window: Some(self.convergence_duration.max(self.sample_interval)),
            instrument: false,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn empty_file_gives_defaults() {
        let c = ExperimentConfig::parse("").unwrap();
        assert_eq!(c, ExperimentConfig::default());
        assert_eq!(c.clock, ClockConfig::RealTime);
    }

    #[test]
    fn full_file_round_trips() {
        let c = ExperimentConfig {
            ell: 8,
            agents: 4,
            variant: Variant::AsjR,
            seed: 11,
            clock: ClockConfig::simulated(),
            corruption: Corruption::BitFlip {
                probability: 0.01,
                bit_range: BitRange::Exponent,
            },
            trials: 3,
            ..ExperimentConfig::default()
        };
        let text = toml::to_string(&c).unwrap();
        assert_eq!(ExperimentConfig::parse(&text).unwrap(), c);
    }

    #[test]
    fn parses_nested_tables() {
        let c = ExperimentConfig::parse(
            r#"
            variant = "asj-r"
            [clock]
            mode = "virtual"
            compute_ms = [1.0, 1.0]
            [corruption]
            kind = "malevolent"
            omega_f = 0.25
            omega_r = 0.02
            delta = 0.2
            "#,
        )
        .unwrap();
        assert_eq!(c.variant, Variant::AsjR);
        assert_eq!(
            c.clock,
            ClockConfig::Virtual {
                latency_ms: default_latency_ms(),
                compute_ms: [1.0, 1.0],
            }
        );
        let m = c.agent_config(0).malevolent.unwrap();
        assert_eq!((m.target_agent, m.delta), (8, 0.2));
    }

    #[test]
    fn unknown_keys_are_errors() {
        assert!(ExperimentConfig::parse("ells = 4").is_err());
        assert!(ExperimentConfig::parse("[clock]\nmode = \"virtual\"\njitter = 1").is_err());
        assert!(ExperimentConfig::parse(
            "[corruption]\nkind = \"bit-flip\"\nprobability = 0.1\nrate = 2"
        )
        .is_err());
    }

    #[test]
    fn invalid_values_are_errors() {
        assert!(ExperimentConfig::parse("trials = 0").is_err());
        assert!(ExperimentConfig::parse("ell = 2\nagents = 5").is_err());
        assert!(
            ExperimentConfig::parse("[corruption]\nkind = \"bit-flip\"\nprobability = 1.5")
                .is_err()
        );
        assert!(ExperimentConfig::parse(
            "agents = 4\n[corruption]\nkind = \"malevolent\"\nomega_f = 1\nomega_r = 1\ndelta = 1"
        )
        .is_err());
        assert!(ExperimentConfig::parse(
            "[corruption]\nkind = \"malevolent\"\nomega_f = 1\nomega_r = 0\ndelta = 1"
        )
        .is_err());
    }

    #[test]
    fn trials_get_distinct_streams() {
        let c = ExperimentConfig {
            clock: ClockConfig::simulated(),
            ..ExperimentConfig::default()
        };
        assert_ne!(c.trial_seed(0), c.trial_seed(1));
        assert_ne!(c.run_config(0).unwrap(), c.run_config(1).unwrap());
        assert_eq!(c.run_config(3).unwrap(), c.run_config(3).unwrap());
    }
}
