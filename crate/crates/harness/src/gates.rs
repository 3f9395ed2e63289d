//! Executable acceptance criteria. Each gate returns a [`Criterion`] with a
//! one-line verdict; [`run_all`] runs the experiment families once and
//! evaluates every gate against them.

use std::fmt;

use abft_core::problem::{build_poisson, partition_rows};
use abft_core::runtime::{run_lockstep, spawn_network, RunConfig};
use abft_core::solver::{build_agents, rejection_threshold, AgentConfig, RejectionBound, Variant};
use anyhow::Result;

use crate::config::{ClockConfig, Corruption, ExperimentConfig};
use crate::ensemble::{run_ensemble, EnsembleSummary};
use crate::output::csv_bytes;
use crate::suites::{
    bitflip_suite, malevolent_suite, verification_suite, Family, SuiteOptions, VerifyRow,
    FLIP_PROBABILITIES, OFFSET_MEANS, VARIANTS, VERIFY_AGENTS, VERIFY_ELLS,
};

pub const ORACLE_TOLERANCE: f64 = 1e-14;
pub const ORACLE_ROUNDS: usize = 50;
pub const ERROR_FLOOR_FACTOR: f64 = 10.0;
pub const ANALYTIC_FACTOR: f64 = 2.0;
pub const CONVERGENCE_ELLS: [usize; 4] = [4, 8, 12, 20];
pub const SCALING_MIN_ELL: usize = 8;
pub const MIN_R_SQUARED: f64 = 0.9;
pub const MAX_AGENT_SPREAD: f64 = 2.0;
pub const MIN_CONVERGED: usize = 9;
pub const MAX_SLOWDOWN: f64 = 3.0;
pub const MAX_RECOVERY_SPREAD: f64 = 1.5;
pub const THRESHOLD_TOLERANCE: f64 = 1e-15;
pub const LOWER_BOUND_RUNS: usize = 10;

#[derive(Debug, Clone, PartialEq)]
pub struct Criterion {
    pub id: u8,
    pub name: &'static str,
    pub passed: bool,
    pub detail: String,
}

impl Criterion {
    fn new(id: u8, name: &'static str, failures: Vec<String>, summary: String) -> Self {
        let passed = failures.is_empty();
        let detail = if passed {
            summary
        } else {
            format!("{summary}; {}", failures.join("; "))
        };
        Self {
            id,
            name,
            passed,
            detail,
        }
    }
}

impl fmt::Display for Criterion {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(
            f,
            "criterion {} {}: {} ({})",
            self.id,
            if self.passed { "PASS" } else { "FAIL" },
            self.name,
            self.detail
        )
    }
}

/// Least-squares line through `(x, y)`: `(slope, intercept, r_squared)`.
pub fn linear_fit(x: &[f64], y: &[f64]) -> (f64, f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let sxx: f64 = x.iter().map(|a| (a - mx).powi(2)).sum();
    let syy: f64 = y.iter().map(|b| (b - my).powi(2)).sum();
    let slope = sxy / sxx;
    let r2 = if syy == 0.0 {
        1.0
    } else {
        sxy * sxy / (sxx * syy)
    };
    (slope, my - slope * mx, r2)
}

/// Plain dense Jacobi sweeps on `A x = b` starting from zero.
fn dense_jacobi(a: &[Vec<f64>], b: &[f64], sweeps: usize) -> Vec<Vec<f64>> {
    let m = b.len();
    let mut x = vec![0.0; m];
    let mut out = Vec::with_capacity(sweeps);
    for _ in 0..sweeps {
        let next: Vec<f64> = (0..m)
            .map(|r| {
                let off: f64 = (0..m).filter(|&c| c != r).map(|c| a[r][c] * x[c]).sum();
                (b[r] - off) / a[r][r]
            })
            .collect();
        x = next;
        out.push(x.clone());
    }
    out
}

pub fn oracle_equivalence() -> Result<Criterion> {
    let mut failures = Vec::new();
    let mut worst = 0.0f64;
    for ell in [2, 4] {
        let system = build_poisson(ell)?;
        let m = system.dim();
        let dense: Vec<Vec<f64>> = (0..m)
            .map(|r| (0..m).map(|c| system.a.get(r, c)).collect())
            .collect();
        let expected = dense_jacobi(&dense, &system.b, ORACLE_ROUNDS);
        for agents in [1, 2, ell] {
            let partition = partition_rows(m, agents, &system.iteration)?;
            let got = run_lockstep(&system, &partition, ORACLE_ROUNDS)?;
            let diff = got
                .iter()
                .zip(&expected)
                .flat_map(|(g, e)| g.iter().zip(e).map(|(a, b)| (a - b).abs()))
                .fold(0.0f64, f64::max);
            worst = worst.max(diff);
            if !(diff <= ORACLE_TOLERANCE) {
                failures.push(format!("ell={ell} n={agents} differs by {diff:e}"));
            }
        }
    }
    Ok(Criterion::new(
        1,
        "lockstep ASJ matches dense Jacobi",
        failures,
        format!("max difference {worst:e} over {ORACLE_ROUNDS} sweeps"),
    ))
}

pub fn corruption_free(rows: &[VerifyRow]) -> Criterion {
    let mut failures = Vec::new();
    let mut checked = 0;
    for r in rows.iter().filter(|r| CONVERGENCE_ELLS.contains(&r.ell)) {
        checked += 1;
        let label = format!("{} ell={} n={}", r.variant.name(), r.ell, r.agents);
        if r.converged != r.trials {
            failures.push(format!("{label} converged {}/{}", r.converged, r.trials));
        }
        let floor = ERROR_FLOOR_FACTOR * r.epsilon * r.cond_a;
        if !(r.max_rel_error <= floor) {
            failures.push(format!(
                "{label} error {:e} above {floor:e}",
                r.max_rel_error
            ));
        }
        if !(r.max_analytic_ratio <= ANALYTIC_FACTOR) {
            failures.push(format!(
                "{label} is {:.3}x the discretization error",
                r.max_analytic_ratio
            ));
        }
    }
    let expected = CONVERGENCE_ELLS.len() * VERIFY_AGENTS.len() * VARIANTS.len();
    if checked != expected {
        failures.push(format!("{checked} of {expected} configurations present"));
    }
    Criterion::new(
        2,
        "corruption-free convergence",
        failures,
        format!("{checked} configurations"),
    )
}

pub fn condition_scaling(rows: &[VerifyRow]) -> Criterion {
    let mut failures = Vec::new();
    let mut lowest_r2 = f64::INFINITY;
    let mut widest = 0.0f64;
    for variant in VARIANTS {
        for agents in VERIFY_AGENTS {
            let pts: Vec<(f64, f64)> = rows
                .iter()
                .filter(|r| r.variant == variant && r.agents == agents && r.ell >= SCALING_MIN_ELL)
                .map(|r| (r.cond_a, r.geo_time.unwrap_or(f64::NAN)))
                .collect();
            let label = format!("{} n={agents}", variant.name());
            if pts.len() < 3 || pts.iter().any(|p| !p.1.is_finite()) {
                failures.push(format!("{label} lacks converged sizes"));
                continue;
            }
            let (x, y): (Vec<f64>, Vec<f64>) = pts.into_iter().unzip();
            let (slope, _, r2) = linear_fit(&x, &y);
            lowest_r2 = lowest_r2.min(r2);
            if !(slope > 0.0 && r2 >= MIN_R_SQUARED) {
                failures.push(format!("{label} slope {slope:.3e} R^2 {r2:.3}"));
            }
        }
        for ell in VERIFY_ELLS {
            let times: Vec<f64> = rows
                .iter()
                .filter(|r| r.variant == variant && r.ell == ell)
                .filter_map(|r| r.geo_time)
                .collect();
            if times.len() != VERIFY_AGENTS.len() {
                failures.push(format!("{} ell={ell} lacks agent counts", variant.name()));
                continue;
            }
            let hi = times.iter().copied().fold(0.0, f64::max);
            let lo = times.iter().copied().fold(f64::INFINITY, f64::min);
            widest = widest.max(hi / lo);
            if !(hi / lo <= MAX_AGENT_SPREAD) {
                failures.push(format!(
                    "{} ell={ell} spread {:.2}x across agent counts",
                    variant.name(),
                    hi / lo
                ));
            }
        }
    }
    Criterion::new(
        3,
        "time scales linearly with cond(A), not with agents",
        failures,
        format!("lowest R^2 {lowest_r2:.3}, widest agent spread {widest:.2}x"),
    )
}

fn arm<'a>(
    family: &'a Family,
    name: &str,
    failures: &mut Vec<String>,
) -> Option<&'a EnsembleSummary> {
    let found = family.arm(name);
    if found.is_none() {
        failures.push(format!("arm {name} missing"));
    }
    found
}

fn ratio(a: Option<f64>, b: Option<f64>) -> f64 {
    match (a, b) {
        (Some(a), Some(b)) => a / b,
        _ => f64::NAN,
    }
}

pub fn bitflip_resilience(probability: &Family) -> Criterion {
    let mut failures = Vec::new();
    let mut counts = Vec::new();
    for p in FLIP_PROBABILITIES.into_iter().filter(|&p| p > 0.0) {
        if let Some(e) = arm(probability, &format!("asj-r p={p}"), &mut failures) {
            counts.push(format!("{}", e.converged()));
            if e.converged() < MIN_CONVERGED {
                failures.push(format!(
                    "p={p} converged {}/{}",
                    e.converged(),
                    e.trials.len()
                ));
            }
        }
    }
    let baseline = probability
        .arm("asj-r p=0")
        .and_then(EnsembleSummary::geo_time);
    let worst = probability
        .arm("asj-r p=0.04")
        .and_then(EnsembleSummary::geo_time);
    let slowdown = ratio(worst, baseline);
    if !(slowdown <= MAX_SLOWDOWN) {
        failures.push(format!("p=0.04 takes {slowdown:.2}x the clean time"));
    }
    Criterion::new(
        4,
        "ASJ-R survives bit flips",
        failures,
        format!(
            "converged [{}] of 10 per probability, p=0.04 slowdown {slowdown:.2}x",
            counts.join(" ")
        ),
    )
}

pub fn bit_range_behavior(range: &Family) -> Criterion {
    let mut failures = Vec::new();
    if let Some(e) = arm(range, "asj lower-mantissa", &mut failures) {
        if e.converged() < MIN_CONVERGED {
            failures.push(format!(
                "asj lower-mantissa converged {}/{}",
                e.converged(),
                e.trials.len()
            ));
        }
    }
    if let Some(e) = arm(range, "asj exponent", &mut failures) {
        let failed = e.trials.len() - e.converged();
        if failed < MIN_CONVERGED {
            failures.push(format!(
                "asj exponent failed only {failed}/{}",
                e.trials.len()
            ));
        }
    }
    let mut counts = Vec::new();
    for r in abft_core::corruption::BitRange::ALL_RANGES {
        if let Some(e) = arm(range, &format!("asj-r {}", r.name()), &mut failures) {
            counts.push(format!("{}={}", r.name(), e.converged()));
            if e.converged() < MIN_CONVERGED {
                failures.push(format!(
                    "asj-r {} converged {}/{}",
                    r.name(),
                    e.converged(),
                    e.trials.len()
                ));
            }
        }
    }
    Criterion::new(
        5,
        "bit-range behavior",
        failures,
        format!("asj-r converged {}", counts.join(" ")),
    )
}

pub fn malevolent_resilience(
    offset: &Family,
    recovery: &Family,
    baseline: &EnsembleSummary,
) -> Criterion {
    let mut failures = Vec::new();
    let clean = baseline.geo_time();
    let mut worst_slowdown = 0.0f64;
    for delta in OFFSET_MEANS {
        if let Some(e) = arm(offset, &format!("asj delta={delta}"), &mut failures) {
            if e.converged() != 0 {
                failures.push(format!(
                    "asj delta={delta} converged {}/{}",
                    e.converged(),
                    e.trials.len()
                ));
            }
        }
        if let Some(e) = arm(offset, &format!("asj-r delta={delta}"), &mut failures) {
            if e.converged() < MIN_CONVERGED {
                failures.push(format!(
                    "asj-r delta={delta} converged {}/{}",
                    e.converged(),
                    e.trials.len()
                ));
            }
            let s = ratio(e.geo_time(), clean);
            worst_slowdown = worst_slowdown.max(s);
            if !(s <= MAX_SLOWDOWN) {
                failures.push(format!("asj-r delta={delta} takes {s:.2}x the clean time"));
            }
        }
    }
    let times: Vec<Option<f64>> = recovery
        .ensembles
        .iter()
        .filter(|e| e.arm.starts_with("asj-r "))
        .map(EnsembleSummary::geo_time)
        .collect();
    let spread = if times.is_empty() || times.iter().any(Option::is_none) {
        f64::NAN
    } else {
        let t: Vec<f64> = times.into_iter().flatten().collect();
        t.iter().copied().fold(0.0, f64::max) / t.iter().copied().fold(f64::INFINITY, f64::min)
    };
    if !(spread <= MAX_RECOVERY_SPREAD) {
        failures.push(format!("recovery-time spread {spread:.2}x"));
    }
    Criterion::new(
        6,
        "malevolent corruption: ASJ fails, ASJ-R recovers",
        failures,
        format!("worst asj-r slowdown {worst_slowdown:.2}x, recovery-time spread {spread:.2}x"),
    )
}

pub fn rejection_bound_unit() -> Result<Criterion> {
    let mut failures = Vec::new();
    let bound = RejectionBound::new(1.0, 2.0, 0.5)?;
    let got = rejection_threshold(&bound, 3);
    if !((got - 0.25).abs() <= THRESHOLD_TOLERANCE) {
        failures.push(format!("threshold at 3 is {got:e}"));
    }
    for s in 0..64 {
        let (a, b) = (
            rejection_threshold(&bound, s),
            rejection_threshold(&bound, s + 1),
        );
        if !(b < a) {
            failures.push(format!("not decreasing from {s} to {}", s + 1));
        }
    }
    Ok(Criterion::new(
        7,
        "rejection threshold",
        failures,
        format!("threshold(3) = {got}"),
    ))
}

pub fn path_length_lower_bound(seed: u64) -> Result<Criterion> {
    let system = build_poisson(8)?;
    let partition = partition_rows(system.dim(), 8, &system.iteration)?;
    let template = ExperimentConfig {
        ell: 8,
        agents: 8,
        variant: Variant::AsjR,
        seed,
        clock: ClockConfig::simulated(),
        convergence_duration: 0.1,
        ..ExperimentConfig::default()
    };
    let mut failures = Vec::new();
    let (mut checks, mut violations) = (0u64, 0usize);
    for run in 0..LOWER_BOUND_RUNS {
        let agents = build_agents(
            &system,
            &partition,
            &AgentConfig {
                variant: Variant::AsjR,
                malevolent: None,
            },
            template.epsilon,
        )?;
        let config = RunConfig {
            instrument: true,
            ..template.run_config(run)?
        };
        let report = spawn_network(partition.clone(), agents, config)?.run(&system.x_star)?;
        if !report.termination.converged() {
            failures.push(format!("run {run} ended {}", report.termination.name()));
        }
        if let Some(dag) = report.dag {
            checks += dag.refresh_checks();
            violations += dag.violations().len();
        } else {
            failures.push(format!("run {run} was not instrumented"));
        }
    }
    if violations > 0 {
        failures.push(format!("{violations} violations"));
    }
    if checks == 0 {
        failures.push("no refreshes were checked".into());
    }
    Ok(Criterion::new(
        8,
        "path-length estimates are lower bounds",
        failures,
        format!("{checks} refreshes checked over {LOWER_BOUND_RUNS} runs"),
    ))
}

/// The configuration `run` is checked against for reproducibility.
pub fn determinism_config(seed: u64) -> ExperimentConfig {
    ExperimentConfig {
        ell: 8,
        agents: 4,
        variant: Variant::AsjR,
        seed,
        clock: ClockConfig::simulated(),
        corruption: Corruption::BitFlip {
            probability: 0.01,
            bit_range: abft_core::corruption::BitRange::All,
        },
        convergence_duration: 0.1,
        trials: 3,
        ..ExperimentConfig::default()
    }
}

pub fn determinism(seed: u64) -> Result<Criterion> {
    let config = determinism_config(seed);
    let first = csv_bytes(&[run_ensemble(
        crate::run_arm_name(&config).as_str(),
        &config,
    )?])?;
    let second = csv_bytes(&[run_ensemble(
        crate::run_arm_name(&config).as_str(),
        &config,
    )?])?;
    let mut failures = Vec::new();
    if first != second {
        failures.push("CSV bytes differ".into());
    }
    Ok(Criterion::new(
        9,
        "identical runs give identical CSVs",
        failures,
        format!("{} bytes", first.len()),
    ))
}

/// Runs every experiment family on the virtual clock and evaluates all nine
/// criteria. `log` receives progress lines.
pub fn run_all(opts: &SuiteOptions, mut log: impl FnMut(&str)) -> Result<Vec<Criterion>> {
    let mut out = vec![oracle_equivalence()?];
    log(&out[0].to_string());

    let rows = verification_suite(opts, &VERIFY_ELLS, |r| {
        log(&format!(
            "  verify {} ell={} n={}: {}/{} converged",
            r.variant.name(),
            r.ell,
            r.agents,
            r.converged,
            r.trials
        ))
    })?;
    for c in [corruption_free(&rows), condition_scaling(&rows)] {
        log(&c.to_string());
        out.push(c);
    }

    let mut progress = |e: &EnsembleSummary| {
        log(&format!(
            "  {}: {}/{} converged, geo time {}",
            e.arm,
            e.converged(),
            e.trials.len(),
            e.geo_time().map_or("-".into(), |t| format!("{t:.3} s"))
        ))
    };
    let [probability, range] = bitflip_suite(opts, &mut progress)?;
    let [offset, recovery] = malevolent_suite(opts, &mut progress)?;
    let baseline = probability
        .arm("asj-r p=0")
        .cloned()
        .ok_or_else(|| anyhow::anyhow!("clean ASJ-R arm missing"))?;
    for c in [
        bitflip_resilience(&probability),
        bit_range_behavior(&range),
        malevolent_resilience(&offset, &recovery, &baseline),
        rejection_bound_unit()?,
        path_length_lower_bound(opts.seed)?,
        determinism(opts.seed)?,
    ] {
        log(&c.to_string());
        out.push(c);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn fit_of_exact_line() {
        let (s, i, r2) = linear_fit(&[1.0, 2.0, 3.0, 4.0], &[3.0, 5.0, 7.0, 9.0]);
        assert!((s - 2.0).abs() < 1e-12 && (i - 1.0).abs() < 1e-12);
        assert!((r2 - 1.0).abs() < 1e-12);
    }

    #[test]
    fn fit_of_noisy_points() {
        // Hand-computed: mean x 2, mean y 2, Sxy 3, Sxx 2, Syy 6.
        let (s, _, r2) = linear_fit(&[1.0, 2.0, 3.0], &[1.0, 1.0, 4.0]);
        assert!((s - 1.5).abs() < 1e-12);
        assert!((r2 - 0.75).abs() < 1e-12);
    }

    #[test]
    fn dense_oracle_one_sweep() {
        let a = vec![vec![4.0, -1.0], vec![-1.0, 4.0]];
        let x = dense_jacobi(&a, &[4.0, 8.0], 2);
        assert_eq!(x[0], vec![1.0, 2.0]);
        assert_eq!(x[1], vec![1.5, 2.25]);
    }

    #[test]
    fn unit_gates_pass() {
        assert!(oracle_equivalence().unwrap().passed);
        assert!(rejection_bound_unit().unwrap().passed);
    }

    #[test]
    fn criterion_line_format() {
        let c = Criterion::new(7, "x", vec!["bad".into()], "sum".into());
        assert_eq!(c.to_string(), "criterion 7 FAIL: x (sum; bad)");
    }
}
