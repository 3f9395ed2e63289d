//! Experiment orchestration for the fault-tolerant Jacobi solver: TOML
//! configurations, trial ensembles aggregated by geometric mean, CSV and SVG
//! artifacts, and the acceptance gates behind the `abft` command.

#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod config;
pub mod ensemble;
pub mod gates;
pub mod output;
pub mod suites;

use config::{Corruption, ExperimentConfig};

/// Arm label used by `abft run`.
pub fn run_arm_name(config: &ExperimentConfig) -> String {
    let corruption = match config.corruption {
        Corruption::None => "clean".to_string(),
        Corruption::BitFlip {
            probability,
            bit_range,
        } => format!("p={probability} {}", bit_range.name()),
        Corruption::Malevolent { delta, omega_r, .. } => {
            format!("delta={delta} omega_r={omega_r}")
        }
    };
    format!(
        "{} ell={} n={} {corruption}",
        config.variant.name(),
        config.ell,
        config.agents
    )
}
