use abft_core::problem::{
    analytic_solution, build_poisson, partition_rows, relative_error, Partition, SparseSystem,
};
use abft_core::runtime::{spawn_network, RunReport, Termination};
use abft_core::solver::build_agents;
use anyhow::{Context, Result};

use crate::config::ExperimentConfig;

/// Everything kept from one run.
#[derive(Debug, Clone, PartialEq)]
pub struct TrialRecord {
    pub trial: usize,
    pub seed: u64,
    pub termination: Termination,
    /// `(t, rel_error)` as sampled by the monitor.
    pub series: Vec<(f64, f64)>,
    pub final_rel_error: f64,
    /// Relative distance of the final iterate from the continuous solution.
    pub analytic_rel_error: f64,
    pub end_time: f64,
    pub accepted: u64,
    pub rejected: u64,
}

impl TrialRecord {
    pub fn time_to_converge(&self) -> Option<f64> {
        self.termination.time()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct CurvePoint {
    pub t: f64,
    /// Geometric mean over the finite entries; NaN when there are none.
    pub geo_rel_error: f64,
    pub n_trials: usize,
    pub n_finite: usize,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EnsembleSummary {
    pub arm: String,
    pub trials: Vec<TrialRecord>,
    pub curve: Vec<CurvePoint>,
}

impl EnsembleSummary {
    pub fn from_trials(arm: impl Into<String>, trials: Vec<TrialRecord>, interval: f64) -> Self {
        let series: Vec<&[(f64, f64)]> = trials.iter().map(|t| t.series.as_slice()).collect();
        let curve = geometric_curve(&series, interval);
        Self {
            arm: arm.into(),
            trials,
            curve,
        }
    }

    pub fn converged(&self) -> usize {
        self.trials
            .iter()
            .filter(|t| t.termination.converged())
            .count()
    }

    pub fn convergence_rate(&self) -> f64 {
        if self.trials.is_empty() {
            return 0.0;
        }
        self.converged() as f64 / self.trials.len() as f64
    }

    /// Geometric mean time-to-converge over the converged trials.
    pub fn geo_time(&self) -> Option<f64> {
        let times: Vec<f64> = self
            .trials
            .iter()
            .filter_map(TrialRecord::time_to_converge)
            .collect();
        geometric_mean(&times)
    }
}

/// `exp(mean(ln a))` over the strictly positive finite entries. Logs are
/// taken relative to the first such entry, so a constant series returns its
/// value exactly.
pub fn geometric_mean(values: &[f64]) -> Option<f64> {
    let mut kept = values.iter().copied().filter(|v| v.is_finite() && *v > 0.0);
    let first = kept.next()?;
    let base = first.ln();
    let (sum, n) = kept.fold((0.0, 1.0), |(s, n), v| (s + (v.ln() - base), n + 1.0));
    Some(first * (sum / n).exp())
}

fn grid_index(t: f64, interval: f64) -> usize {
    (t / interval + 1e-6).floor().max(0.0) as usize
}

/// Resamples every series onto `k * interval` by carrying the last
/// observation forward, then averages each grid point geometrically.
pub fn geometric_curve(series: &[&[(f64, f64)]], interval: f64) -> Vec<CurvePoint> {
    let last = series
        .iter()
        .filter_map(|s| s.last())
        .map(|&(t, _)| grid_index(t, interval))
        .max();
    let Some(last) = last else {
        return Vec::new();
    };
    let mut cursors = vec![0usize; series.len()];
    let mut current: Vec<Option<f64>> = vec![None; series.len()];
    let mut curve = Vec::with_capacity(last + 1);
    for k in 0..=last {
        for (i, s) in series.iter().enumerate() {
            while cursors[i] < s.len() && grid_index(s[cursors[i]].0, interval) <= k {
                current[i] = Some(s[cursors[i]].1);
                cursors[i] += 1;
            }
        }
        let present: Vec<f64> = current.iter().flatten().copied().collect();
        let finite: Vec<f64> = present.iter().copied().filter(|v| v.is_finite()).collect();
        let geo = if finite.is_empty() {
            f64::NAN
        } else {
            geometric_mean(&finite).unwrap_or(0.0)
        };
        curve.push(CurvePoint {
            t: k as f64 * interval,
            geo_rel_error: geo,
            n_trials: present.len(),
            n_finite: finite.len(),
        });
    }
    curve
}

/// A benchmark system with its partition, built once per ensemble.
#[derive(Debug, Clone)]
pub struct Setup {
    pub system: SparseSystem,
    pub partition: Partition,
    pub analytic: Vec<f64>,
}

impl Setup {
    pub fn new(ell: usize, agents: usize) -> Result<Self> {
        let system = build_poisson(ell).with_context(|| format!("building ell = {ell}"))?;
        let partition = partition_rows(system.dim(), agents, &system.iteration)?;
        Ok(Self {
            analytic: analytic_solution(ell)?,
            system,
            partition,
        })
    }

    /// Relative distance between the discrete and the continuous solution.
    pub fn discretization_error(&self) -> f64 {
        relative_error(&self.system.x_star, &self.analytic)
    }
}

pub fn run_trial(config: &ExperimentConfig, setup: &Setup, trial: usize) -> Result<TrialRecord> {
    let agents = build_agents(
        &setup.system,
        &setup.partition,
        &config.agent_config(trial),
        config.epsilon,
    )?;
    let report = spawn_network(setup.partition.clone(), agents, config.run_config(trial)?)?
        .run(&setup.system.x_star)?;
    Ok(record(
        trial,
        config.trial_seed(trial),
        report,
        &setup.analytic,
    ))
}

fn record(trial: usize, seed: u64, report: RunReport, analytic: &[f64]) -> TrialRecord {
    TrialRecord {
        trial,
        seed,
        termination: report.termination,
        series: report.samples.iter().map(|s| (s.t, s.rel_error)).collect(),
        final_rel_error: report.final_rel_error,
        analytic_rel_error: relative_error(&report.final_solution, analytic),
        end_time: report.end_time,
        accepted: report.agents.iter().map(|a| a.counters.accepted).sum(),
        rejected: report.agents.iter().map(|a| a.counters.rejected()).sum(),
    }
}

/// Runs `config.trials` trials one after another.
pub fn run_ensemble(arm: &str, config: &ExperimentConfig) -> Result<EnsembleSummary> {
    config.validate()?;
    let setup = Setup::new(config.ell, config.agents)?;
    run_ensemble_on(arm, config, &setup)
}

pub fn run_ensemble_on(
    arm: &str,
    config: &ExperimentConfig,
    setup: &Setup,
) -> Result<EnsembleSummary> {
    let trials = (0..config.trials)
        .map(|k| run_trial(config, setup, k).with_context(|| format!("{arm}: trial {k}")))
        .collect::<Result<Vec<_>>>()?;
    Ok(EnsembleSummary::from_trials(
        arm,
        trials,
        config.sample_interval,
    ))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::config::ClockConfig;
    use proptest::prelude::*;

    #[test]
    fn geometric_mean_of_one_and_hundred_is_ten() {
        let g = geometric_mean(&[1.0, 100.0]).unwrap();
        assert!((g - 10.0).abs() < 1e-12);
    }

    #[test]
    fn geometric_mean_skips_non_positive_entries() {
        assert_eq!(geometric_mean(&[]), None);
        assert_eq!(geometric_mean(&[0.0, f64::NAN, -1.0]), None);
        assert_eq!(geometric_mean(&[4.0, f64::INFINITY]), Some(4.0));
    }

    #[test]
    fn curve_carries_last_observation_forward() {
        let a = [(0.0, 1.0), (0.02, 1e-2)];
        let b = [(0.0, 1.0), (0.01, 1e-4), (0.04, 1e-6)];
        let curve = geometric_curve(&[&a, &b], 0.01);
        let got: Vec<f64> = curve.iter().map(|p| p.geo_rel_error).collect();
        let want = [1.0, 1e-2, 1e-3, 1e-3, 1e-4];
        assert_eq!(got.len(), want.len());
        for (g, w) in got.iter().zip(want) {
            assert!((g / w - 1.0).abs() < 1e-12, "{got:?}");
        }
        assert_eq!(curve[4].t, 0.04);
        assert!(curve.iter().all(|p| p.n_trials == 2 && p.n_finite == 2));
    }

    #[test]
    fn non_finite_bins_are_flagged() {
        let a = [(0.0, 1.0), (0.01, f64::NAN)];
        let b = [(0.0, 1.0), (0.01, 1e-2)];
        let curve = geometric_curve(&[&a, &b], 0.01);
        assert_eq!(curve[1].n_finite, 1);
        assert_eq!(curve[1].n_trials, 2);
        assert!((curve[1].geo_rel_error / 1e-2 - 1.0).abs() < 1e-12);
        let all_bad = geometric_curve(&[&a], 0.01);
        assert!(all_bad[1].geo_rel_error.is_nan());
        assert_eq!(all_bad[1].n_finite, 0);
    }

    #[test]
    fn exact_zero_error_averages_to_zero() {
        let a = [(0.0, 0.0)];
        assert_eq!(geometric_curve(&[&a], 0.01)[0].geo_rel_error, 0.0);
    }

    #[test]
    fn single_trial_summary_is_that_trial() {
        let config = ExperimentConfig {
            ell: 4,
            agents: 4,
            clock: ClockConfig::simulated(),
            convergence_duration: 0.1,
            trials: 1,
            ..ExperimentConfig::default()
        };
        let summary = run_ensemble("solo", &config).unwrap();
        let trial = &summary.trials[0];
        assert!(trial.termination.converged());
        let (t_end, e_end) = *trial.series.last().unwrap();
        assert_eq!(summary.curve.len(), grid_index(t_end, 0.01) + 1);
        for p in &summary.curve {
            let locf = trial
                .series
                .iter()
                .rfind(|(t, _)| grid_index(*t, 0.01) <= grid_index(p.t, 0.01))
                .unwrap();
            assert_eq!(p.geo_rel_error, locf.1);
        }
        assert_eq!(summary.curve.last().unwrap().geo_rel_error, e_end);
        assert_eq!(summary.geo_time(), trial.time_to_converge());
    }

    proptest! {
        #[test]
        fn geometric_mean_of_constant_is_constant(c in 1e-300f64..1e300, n in 1usize..20) {
            prop_assert_eq!(geometric_mean(&vec![c; n]), Some(c));
        }

        #[test]
        fn geometric_mean_ignores_order(mut v in prop::collection::vec(1e-12f64..1e12, 1..30), seed in any::<u64>()) {
            let before = geometric_mean(&v).unwrap();
            let n = v.len();
            v.rotate_left((seed as usize) % n);
            v.reverse();
            let after = geometric_mean(&v).unwrap();
            prop_assert!((before / after - 1.0).abs() < 1e-12);
        }

        #[test]
        fn geometric_mean_matches_log_average(v in prop::collection::vec(1e-300f64..1e300, 1..30)) {
            let direct = (v.iter().map(|x| x.ln()).sum::<f64>() / v.len() as f64).exp();
            let g = geometric_mean(&v).unwrap();
            prop_assert!((g / direct - 1.0).abs() < 1e-9);
        }

        #[test]
        fn geometric_mean_lies_between_extremes(v in prop::collection::vec(1e-12f64..1e12, 1..30)) {
            let g = geometric_mean(&v).unwrap();
            let lo = v.iter().copied().fold(f64::INFINITY, f64::min);
            let hi = v.iter().copied().fold(0.0, f64::max);
            prop_assert!(g >= lo * (1.0 - 1e-12) && g <= hi * (1.0 + 1e-12));
        }
    }
}
