//! The experiment families: verification over problem sizes, bit flips by
//! probability and by bit range, and malevolent corruption by offset and by
//! recovery time. All corrupted families run on a 20x20 mesh over 16 agents.

use std::path::Path;

use abft_core::corruption::BitRange;
use abft_core::solver::Variant;
use anyhow::{Context, Result};

use crate::config::{ClockConfig, Corruption, ExperimentConfig};
use crate::ensemble::{run_ensemble_on, EnsembleSummary, Setup};
use crate::output::emit_csv;

pub const VERIFY_ELLS: [usize; 12] = [4, 5, 6, 7, 8, 9, 10, 11, 12, 20, 25, 30];
pub const VERIFY_AGENTS: [usize; 3] = [4, 8, 16];
pub const VARIANTS: [Variant; 2] = [Variant::Asj, Variant::AsjR];
pub const FLIP_PROBABILITIES: [f64; 7] = [0.0, 0.0025, 0.005, 0.01, 0.015, 0.02, 0.04];
pub const RANGE_PROBABILITY: f64 = 0.01;
pub const OFFSET_MEANS: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
/// Recovery times at wall-clock scale.
pub const RECOVERY_TIMES: [f64; 5] = [0.1, 0.2, 0.3, 0.4, 0.5];
pub const CORRUPTED_ELL: usize = 20;
pub const CORRUPTED_AGENTS: usize = 16;
pub const MALEVOLENT_TARGET: usize = 8;

/// Time scale of an experiment family.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Timing {
    /// Threads on the wall clock with the protocol durations as published.
    #[default]
    WallClock,
    /// Virtual clock with every protocol duration divided by ten.
    Compressed,
}

impl Timing {
    fn divisor(self) -> f64 {
        match self {
            Timing::WallClock => 1.0,
            Timing::Compressed => 10.0,
        }
    }

    pub fn convergence_duration(self) -> f64 {
        1.0 / self.divisor()
    }

    pub fn omega_f(self) -> f64 {
        2.5 / self.divisor()
    }

    pub fn omega_r(self, wall_clock: f64) -> f64 {
        wall_clock / self.divisor()
    }

    pub fn default_omega_r(self) -> f64 {
        self.omega_r(0.2)
    }

    fn clock(self) -> ClockConfig {
        match self {
            Timing::WallClock => ClockConfig::RealTime,
            Timing::Compressed => ClockConfig::simulated(),
        }
    }

    fn wall_cap(self) -> f64 {
        match self {
            Timing::WallClock => 60.0,
            Timing::Compressed => 30.0,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SuiteOptions {
    pub timing: Timing,
    pub trials: usize,
    pub seed: u64,
}

impl Default for SuiteOptions {
    fn default() -> Self {
        Self {
            timing: Timing::default(),
            trials: 10,
            seed: 0,
        }
    }
}

impl SuiteOptions {
    pub fn base(&self, ell: usize, agents: usize, variant: Variant) -> ExperimentConfig {
        ExperimentConfig {
            ell,
            agents,
            variant,
            seed: self.seed,
            clock: self.timing.clock(),
            convergence_duration: self.timing.convergence_duration(),
            wall_cap: self.timing.wall_cap(),
            trials: self.trials,
            ..ExperimentConfig::default()
        }
    }

    fn corrupted(&self, variant: Variant, corruption: Corruption) -> ExperimentConfig {
        ExperimentConfig {
            corruption,
            ..self.base(CORRUPTED_ELL, CORRUPTED_AGENTS, variant)
        }
    }

    fn malevolent(&self, variant: Variant, delta: f64, omega_r: f64) -> ExperimentConfig {
        self.corrupted(
            variant,
            Corruption::Malevolent {
                omega_f: self.timing.omega_f(),
                omega_r,
                delta,
                target_agent: MALEVOLENT_TARGET,
            },
        )
    }
}

/// One named ensemble of a family.
#[derive(Debug, Clone, PartialEq)]
pub struct Arm {
    pub name: String,
    pub config: ExperimentConfig,
}

pub fn probability_arms(opts: &SuiteOptions) -> Vec<Arm> {
    let mut arms = Vec::new();
    for variant in VARIANTS {
        for p in FLIP_PROBABILITIES {
            let corruption = if p == 0.0 {
                Corruption::None
            } else {
                Corruption::BitFlip {
                    probability: p,
                    bit_range: BitRange::All,
                }
            };
            arms.push(Arm {
                name: format!("{} p={p}", variant.name()),
                config: opts.corrupted(variant, corruption),
            });
        }
    }
    arms
}

pub fn bit_range_arms(opts: &SuiteOptions) -> Vec<Arm> {
    let mut arms = Vec::new();
    for variant in VARIANTS {
        for range in BitRange::ALL_RANGES {
            arms.push(Arm {
                name: format!("{} {}", variant.name(), range.name()),
                config: opts.corrupted(
                    variant,
                    Corruption::BitFlip {
                        probability: RANGE_PROBABILITY,
                        bit_range: range,
                    },
                ),
            });
        }
    }
    arms
}

pub fn offset_arms(opts: &SuiteOptions) -> Vec<Arm> {
    let mut arms = Vec::new();
    for variant in VARIANTS {
        for delta in OFFSET_MEANS {
            arms.push(Arm {
                name: format!("{} delta={delta}", variant.name()),
                config: opts.malevolent(variant, delta, opts.timing.default_omega_r()),
            });
        }
    }
    arms
}

pub fn recovery_arms(opts: &SuiteOptions) -> Vec<Arm> {
    let mut arms = Vec::new();
    for variant in VARIANTS {
        for omega_r in RECOVERY_TIMES {
            let omega_r = opts.timing.omega_r(omega_r);
            arms.push(Arm {
                name: format!("{} omega_r={omega_r}", variant.name()),
                config: opts.malevolent(variant, 0.2, omega_r),
            });
        }
    }
    arms
}

/// Runs the arms in order, reporting each finished ensemble to `progress`.
pub fn run_arms(
    arms: &[Arm],
    mut progress: impl FnMut(&EnsembleSummary),
) -> Result<Vec<EnsembleSummary>> {
    let mut setups: Vec<((usize, usize), Setup)> = Vec::new();
    let mut out = Vec::with_capacity(arms.len());
    for arm in arms {
        arm.config
            .validate()
            .with_context(|| format!("arm {}", arm.name))?;
        let key = (arm.config.ell, arm.config.agents);
        let setup = match setups.iter().position(|(k, _)| *k == key) {
            Some(i) => &setups[i].1,
            None => {
                setups.push((key, Setup::new(key.0, key.1)?));
                &setups.last().expect("just pushed").1
            }
        };
        let summary = run_ensemble_on(&arm.name, &arm.config, setup)?;
        progress(&summary);
        out.push(summary);
    }
    Ok(out)
}

/// Results of one experiment family, ready to be written as one CSV.
#[derive(Debug, Clone)]
pub struct Family {
    pub file: &'static str,
    pub ensembles: Vec<EnsembleSummary>,
}

impl Family {
    pub fn arm(&self, name: &str) -> Option<&EnsembleSummary> {
        self.ensembles.iter().find(|e| e.arm == name)
    }

    pub fn emit(&self, dir: &Path) -> Result<()> {
        emit_csv(&self.ensembles, &dir.join(self.file))
    }
}

pub fn bitflip_suite(
    opts: &SuiteOptions,
    mut progress: impl FnMut(&EnsembleSummary),
) -> Result<[Family; 2]> {
    Ok([
        Family {
            file: "bitflip_probability.csv",
            ensembles: run_arms(&probability_arms(opts), &mut progress)?,
        },
        Family {
            file: "bitflip_range.csv",
            ensembles: run_arms(&bit_range_arms(opts), &mut progress)?,
        },
    ])
}

pub fn malevolent_suite(
    opts: &SuiteOptions,
    mut progress: impl FnMut(&EnsembleSummary),
) -> Result<[Family; 2]> {
    Ok([
        Family {
            file: "malevolent_offset.csv",
            ensembles: run_arms(&offset_arms(opts), &mut progress)?,
        },
        Family {
            file: "malevolent_recovery.csv",
            ensembles: run_arms(&recovery_arms(opts), &mut progress)?,
        },
    ])
}

/// One point of the verification grid.
#[derive(Debug, Clone, PartialEq)]
pub struct VerifyRow {
    pub ell: usize,
    pub agents: usize,
    pub variant: Variant,
    pub cond_a: f64,
    pub epsilon: f64,
    pub trials: usize,
    pub converged: usize,
    pub geo_time: Option<f64>,
    pub max_rel_error: f64,
    /// Largest `||x - u|| / ||x* - u||` over the trials, `u` the continuous
    /// solution and `x*` the direct solve.
    pub max_analytic_ratio: f64,
}

pub const VERIFY_HEADER: [&str; 9] = [
    "ell",
    "agents",
    "variant",
    "cond_a",
    "trials",
    "converged",
    "geo_time_s",
    "max_rel_error",
    "max_analytic_ratio",
];

pub fn verification_suite(
    opts: &SuiteOptions,
    ells: &[usize],
    mut progress: impl FnMut(&VerifyRow),
) -> Result<Vec<VerifyRow>> {
    let mut rows = Vec::new();
    for &ell in ells {
        for agents in VERIFY_AGENTS {
            let setup = Setup::new(ell, agents)?;
            let discretization = setup.discretization_error();
            for variant in VARIANTS {
                let config = opts.base(ell, agents, variant);
                let name = format!("{} ell={ell} n={agents}", variant.name());
                let e = run_ensemble_on(&name, &config, &setup)?;
                let worst = |f: &dyn Fn(&crate::ensemble::TrialRecord) -> f64| {
                    e.trials.iter().map(f).fold(0.0f64, |a, b| {
                        if b.is_nan() || a.is_nan() {
                            f64::NAN
                        } else {
                            a.max(b)
                        }
                    })
                };
                let row = VerifyRow {
                    ell,
                    agents,
                    variant,
                    cond_a: setup.system.cond_a,
                    epsilon: config.epsilon,
                    trials: e.trials.len(),
                    converged: e.converged(),
                    geo_time: e.geo_time(),
                    max_rel_error: worst(&|t| t.final_rel_error),
                    max_analytic_ratio: worst(&|t| t.analytic_rel_error / discretization),
                };
                progress(&row);
                rows.push(row);
            }
        }
    }
    Ok(rows)
}

pub fn emit_verify_csv(rows: &[VerifyRow], path: &Path) -> Result<()> {
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).with_context(|| format!("creating {}", dir.display()))?;
    }
    let mut w =
        csv::Writer::from_path(path).with_context(|| format!("creating {}", path.display()))?;
    w.write_record(VERIFY_HEADER)?;
    for r in rows {
        w.write_record([
            r.ell.to_string(),
            r.agents.to_string(),
            r.variant.name().to_string(),
            format!("{:.16e}", r.cond_a),
            r.trials.to_string(),
            r.converged.to_string(),
            r.geo_time
                .map_or_else(|| "NaN".into(), |t| format!("{t:.6}")),
            format!("{:.16e}", r.max_rel_error),
            format!("{:.16e}", r.max_analytic_ratio),
        ])?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn family_sizes() {
        let opts = SuiteOptions::default();
        assert_eq!(probability_arms(&opts).len(), 14);
        assert_eq!(bit_range_arms(&opts).len(), 10);
        assert_eq!(offset_arms(&opts).len(), 10);
        assert_eq!(recovery_arms(&opts).len(), 10);
        assert_eq!(VERIFY_ELLS.len() * VERIFY_AGENTS.len() * VARIANTS.len(), 72);
    }

    #[test]
    fn compressed_timing_scales_protocol_durations() {
        let opts = SuiteOptions {
            timing: Timing::Compressed,
            ..SuiteOptions::default()
        };
        let arm = &offset_arms(&opts)[0];
        assert_eq!(arm.config.convergence_duration, 0.1);
        assert_eq!(
            arm.config.corruption,
            Corruption::Malevolent {
                omega_f: 0.25,
                omega_r: 0.02,
                delta: 0.1,
                target_agent: 8
            }
        );
        assert!(matches!(arm.config.clock, ClockConfig::Virtual { .. }));
        let wall = offset_arms(&SuiteOptions::default());
        assert_eq!(wall[0].config.clock, ClockConfig::RealTime);
        assert_eq!(
            wall[0].config.corruption,
            Corruption::Malevolent {
                omega_f: 2.5,
                omega_r: 0.2,
                delta: 0.1,
                target_agent: 8
            }
        );
    }

    #[test]
    fn arms_validate() {
        let opts = SuiteOptions::default();
        for arm in probability_arms(&opts)
            .iter()
            .chain(&bit_range_arms(&opts))
            .chain(&offset_arms(&opts))
            .chain(&recovery_arms(&opts))
        {
            arm.config.validate().unwrap();
            assert_eq!((arm.config.ell, arm.config.agents), (20, 16));
        }
    }

    #[test]
    fn small_verification_grid_converges() {
        let opts = SuiteOptions {
            timing: Timing::Compressed,
            trials: 2,
            seed: 3,
        };
        let mut seen = 0;
        let rows = verification_suite(&opts, &[4], |_| seen += 1).unwrap();
        assert_eq!(rows.len(), 6);
        assert_eq!(seen, 6);
        for r in &rows {
            assert_eq!(r.converged, 2, "{r:?}");
            assert!(r.max_rel_error <= 10.0 * r.epsilon * r.cond_a, "{r:?}");
        }
    }
}
