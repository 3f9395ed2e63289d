//! Message-passing network of solver agents.
//!
//! Two clock modes share the agent logic. `Virtual` runs the whole network
//! single-threaded as a deterministic discrete-event simulation; `RealTime`
//! gives every agent its own thread and lets the operating system schedule
//! them. Update messages travel only along the sparsity-induced neighbor
//! relation, each delivered copy passing through that link's corruption
//! hook. Local-convergence flags are additionally gossiped, uncorrupted, to
//! every agent that does not subscribe to the sender's block.

mod lockstep;
mod message;
mod threaded;
mod virtual_clock;

pub use lockstep::run_lockstep;
pub use message::{Envelope, UpdateMessage};

use crate::corruption::{BitFlipPolicy, FlipCounts};
use crate::problem::{relative_error, Partition};
use crate::solver::{Agent, Counters, DagTracker};
use crate::{Error, Result};

/// Uniform delay interval `[min, max]` in seconds.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct DelayRange {
    pub min: f64,
    pub max: f64,
}

impl DelayRange {
    pub const fn new(min: f64, max: f64) -> Self {
        Self { min, max }
    }

    pub const fn fixed(value: f64) -> Self {
        Self::new(value, value)
    }

    fn validate(&self, what: &str) -> Result<()> {
        if self.min >= 0.0 && self.max >= self.min && self.max.is_finite() {
            Ok(())
        } else {
            Err(Error::Configuration(format!(
                "{what} delay range [{}, {}] is invalid",
                self.min, self.max
            )))
        }
    }

    fn sample(&self, rng: &mut impl rand::Rng) -> f64 {
        if self.max == self.min {
            self.min
        } else {
            self.min + (self.max - self.min) * rng.random::<f64>()
        }
    }
}

/// Timing of the virtual clock. The default has each agent spend
/// 0.9 to 1.1 ms per update and each message travel 0.05 to 0.2 ms, so a
/// neighbor's latest block normally lands within one update of being sent.
#[derive(Debug, Clone, PartialEq)]
pub struct DelayModel {
    pub latency: DelayRange,
    pub compute: DelayRange,
    /// Per-link latency overrides keyed by `(from, to)`.
    pub link_latency: Vec<((usize, usize), DelayRange)>,
    pub seed: u64,
}

impl Default for DelayModel {
    fn default() -> Self {
        Self {
            latency: DelayRange::new(0.05e-3, 0.2e-3),
            compute: DelayRange::new(0.9e-3, 1.1e-3),
            link_latency: Vec::new(),
            seed: 0,
        }
    }
}

impl DelayModel {
    pub fn with_seed(seed: u64) -> Self {
        Self {
            seed,
            ..Self::default()
        }
    }

    pub fn latency_for(&self, from: usize, to: usize) -> DelayRange {
        self.link_latency
            .iter()
            .rev()
            .find(|(link, _)| *link == (from, to))
            .map_or(self.latency, |(_, r)| *r)
    }

    fn validate(&self) -> Result<()> {
        self.latency.validate("latency")?;
        self.compute.validate("compute")?;
        self.link_latency
            .iter()
            .try_for_each(|(_, r)| r.validate("link latency"))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub enum ClockMode {
    RealTime,
    Virtual(DelayModel),
}

#[derive(Debug, Clone, PartialEq)]
pub struct RunConfig {
    pub clock: ClockMode,
    pub bit_flips: Option<BitFlipPolicy>,
    /// Seconds every agent must see all flags raised before it stops.
    pub convergence_duration: f64,
    pub max_iterations: u64,
    /// Seconds (virtual or wall) after which the run is abandoned.
    pub wall_cap: f64,
    pub sample_interval: f64,
    /// Stop early once the monitored error has been non-finite this long.
    pub divergence_window: Option<f64>,
    /// Track the computation graph and check the path-length estimates
    /// against it. Virtual clock only.
    pub instrument: bool,
}

impl Default for RunConfig {
    fn default() -> Self {
        Self {
            clock: ClockMode::Virtual(DelayModel::default()),
            bit_flips: None,
            convergence_duration: 1.0,
            max_iterations: 10_000_000,
            wall_cap: 60.0,
            sample_interval: 0.01,
            divergence_window: Some(1.0),
            instrument: false,
        }
    }
}

impl RunConfig {
    pub fn validate(&self) -> Result<()> {
        if let ClockMode::Virtual(d) = &self.clock {
            d.validate()?;
        }
        if let Some(p) = &self.bit_flips {
            p.validate()?;
        }
        let positive = |name: &str, v: f64| {
            if v > 0.0 && v.is_finite() {
                Ok(())
            } else {
                Err(Error::Configuration(format!(
                    "{name} must be positive, got {v}"
                )))
            }
        };
        positive("wall_cap", self.wall_cap)?;
        positive("sample_interval", self.sample_interval)?;
        if !(self.convergence_duration >= 0.0 && self.convergence_duration.is_finite()) {
            return Err(Error::Configuration(format!(
                "convergence_duration must be non-negative, got {}",
                self.convergence_duration
            )));
        }
        if self.max_iterations == 0 {
            return Err(Error::Configuration(
                "max_iterations must be positive".into(),
            ));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct AgentSnapshot {
    pub iterations: u64,
    pub accepted: u64,
    pub rejected: u64,
    pub s_tilde: i32,
    pub locally_converged: bool,
}

impl AgentSnapshot {
    fn of(agent: &Agent) -> Self {
        let s = agent.state();
        Self {
            iterations: s.kappa,
            accepted: s.counters.accepted,
            rejected: s.counters.rejected(),
            s_tilde: s.s_tilde,
            locally_converged: s.locally_converged,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct MonitorSample {
    pub t: f64,
    /// `||x̃(t) - x*|| / ||x*||`; non-finite values are kept as they are.
    pub rel_error: f64,
    pub agents: Vec<AgentSnapshot>,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub enum Termination {
    /// Every agent stopped through the stopping protocol; `t` excludes the
    /// trailing convergence-duration wait.
    Converged {
        t: f64,
    },
    IterationCap,
    TimeCap,
    /// The monitored error stayed non-finite for the divergence window.
    Diverged,
}

impl Termination {
    pub fn converged(&self) -> bool {
        matches!(self, Termination::Converged { .. })
    }

    pub fn time(&self) -> Option<f64> {
        match self {
            Termination::Converged { t } => Some(*t),
            _ => None,
        }
    }

    pub fn name(&self) -> &'static str {
        match self {
            Termination::Converged { .. } => "converged",
            Termination::IterationCap => "iteration-cap",
            Termination::TimeCap => "time-cap",
            Termination::Diverged => "diverged",
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentSummary {
    pub iterations: u64,
    pub counters: Counters,
    pub s_tilde: i32,
    pub malevolent_applications: u64,
    /// `(neighbor, sequence)` of every stored neighbor view at the end.
    pub view_sequences: Vec<(usize, u64)>,
}

#[derive(Debug, Clone)]
pub struct RunReport {
    pub samples: Vec<MonitorSample>,
    pub termination: Termination,
    pub final_solution: Vec<f64>,
    pub final_rel_error: f64,
    pub agents: Vec<AgentSummary>,
    pub flips: FlipCounts,
    pub dag: Option<DagTracker>,
    /// Seconds from solve start until the run ended.
    pub end_time: f64,
}

/// A configured but not yet started network.
#[derive(Debug)]
pub struct Network {
    partition: Partition,
    agents: Vec<Agent>,
    config: RunConfig,
}

/// Validates the wiring of one behavior per agent.
pub fn spawn_network(
    partition: Partition,
    agents: Vec<Agent>,
    config: RunConfig,
) -> Result<Network> {
    if agents.len() != partition.agent_count() {
        return Err(Error::Configuration(format!(
            "{} agent behaviors for {} partition blocks",
            agents.len(),
            partition.agent_count()
        )));
    }
    for (i, a) in agents.iter().enumerate() {
        if a.id() != i || a.local().rows != partition.range(i) {
            return Err(Error::Configuration(format!(
                "behavior {i} does not own block {i} of the partition"
            )));
        }
    }
    config.validate()?;
    Ok(Network {
        partition,
        agents,
        config,
    })
}

impl Network {
    /// Runs until termination while sampling `x̃(t)` against `x_star`.
    pub fn run(self, x_star: &[f64]) -> Result<RunReport> {
        if x_star.len() != self.partition.dim() {
            return Err(Error::Configuration(format!(
                "reference solution has {} entries, partition covers {}",
                x_star.len(),
                self.partition.dim()
            )));
        }
        match self.config.clock.clone() {
            ClockMode::Virtual(delays) => Ok(virtual_clock::run(self, delays, x_star)),
            ClockMode::RealTime => threaded::run(self, x_star),
        }
    }
}

fn assemble<'a>(blocks: impl Iterator<Item = &'a [f64]>, dim: usize) -> Vec<f64> {
    let mut x = Vec::with_capacity(dim);
    for b in blocks {
        x.extend_from_slice(b);
    }
    x
}

fn summaries(agents: &[Agent]) -> Vec<AgentSummary> {
    agents
        .iter()
        .map(|a| AgentSummary {
            iterations: a.state().kappa,
            counters: a.state().counters,
            s_tilde: a.state().s_tilde,
            malevolent_applications: a.malevolent_applications(),
            view_sequences: a
                .local()
                .neighbors
                .iter()
                .zip(&a.state().views)
                .map(|(&j, v)| (j, v.sequence))
                .collect(),
        })
        .collect()
}

/// Tracks how long the monitored error has been non-finite.
#[derive(Debug, Default)]
struct DivergenceWatch {
    since: Option<f64>,
}

impl DivergenceWatch {
    fn diverged(&mut self, sample: &MonitorSample, window: Option<f64>) -> bool {
        if sample.rel_error.is_finite() {
            self.since = None;
            return false;
        }
        let since = *self.since.get_or_insert(sample.t);
        window.is_some_and(|w| sample.t - since >= w)
    }
}

fn sample_of(t: f64, agents: &[Agent], dim: usize, x_star: &[f64]) -> MonitorSample {
    let x = assemble(agents.iter().map(|a| a.state().block.as_slice()), dim);
    MonitorSample {
        t,
        rel_error: relative_error(&x, x_star),
        agents: agents.iter().map(AgentSnapshot::of).collect(),
    }
}
