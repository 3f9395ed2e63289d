//! Per-agent asynchronous Jacobi state machine.
//!
//! Each agent owns a contiguous block `x_i` and keeps, for every neighbor `r`
//! with `M_ir != 0`, the last block it accepted from `r`. An update computes
//! `x_i <- sum_r M_ir x_r + c_i` from those views and its own block.
//!
//! The rejection variant (ASJ-R) only accepts a neighbor block when the jump
//! from the previously accepted block fits under
//!
//! ```text
//! 2 ||b||_2 / σ_min(A) · σ_max(M)^s̃ / (1 - σ_max(M))
//! ```
//!
//! where `s̃` is a decentralized lower estimate of how many Jacobi steps
//! separate the current iterates from the zero initial guess, and when the
//! sender's own estimate is not behind by more than one step.

mod agent;
mod dag;
mod termination;

pub use agent::{build_agents, Agent, AgentConfig};
pub use dag::{DagTracker, LowerBoundViolation, ViolationKind};
pub use termination::ConvergenceWatch;

use std::ops::Range;

use serde::{Deserialize, Serialize};

use crate::problem::{norm2, Partition, SparseSystem};
use crate::runtime::UpdateMessage;
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Variant {
    /// Traditional asynchronous Jacobi: every received block is used.
    #[default]
    Asj,
    /// Rejection variant.
    #[serde(rename = "asj-r")]
    AsjR,
}

impl Variant {
    pub fn name(self) -> &'static str {
        match self {
            Variant::Asj => "asj",
            Variant::AsjR => "asj-r",
        }
    }
}

impl std::str::FromStr for Variant {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "asj" => Ok(Variant::Asj),
            "asj-r" | "asjr" => Ok(Variant::AsjR),
            other => Err(Error::InvalidArgument(format!("unknown variant {other:?}"))),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RejectionBound {
    pub norm_b: f64,
    pub sigma_min_a: f64,
    pub sigma_max_m: f64,
}

impl RejectionBound {
    pub fn new(norm_b: f64, sigma_min_a: f64, sigma_max_m: f64) -> Result<Self> {
        if !(norm_b > 0.0 && sigma_min_a > 0.0 && (0.0..1.0).contains(&sigma_max_m)) {
            return Err(Error::InvalidArgument(format!(
                "rejection bound needs ||b|| > 0, σ_min(A) > 0 and 0 <= σ_max(M) < 1, got ({norm_b}, {sigma_min_a}, {sigma_max_m})"
            )));
        }
        Ok(Self {
            norm_b,
            sigma_min_a,
            sigma_max_m,
        })
    }

    pub fn for_system(system: &SparseSystem) -> Result<Self> {
        Self::new(system.norm_b(), system.sigma_min_a, system.sigma_max_m)
    }
}

/// Largest admissible jump between two successive blocks from one neighbor.
/// Strictly decreasing in `s_tilde` whenever `0 < σ_max(M) < 1`.
pub fn rejection_threshold(bound: &RejectionBound, s_tilde: i32) -> f64 {
    2.0 * (bound.norm_b / bound.sigma_min_a) * bound.sigma_max_m.powi(s_tilde)
        / (1.0 - bound.sigma_max_m)
}

/// `||D_ii (x_i^κ - x_i^{κ-1})||_∞ < ε ||b||_2 / sqrt(m)`; false before the
/// first update and for any non-finite difference.
pub fn local_stopping_test(
    current: &[f64],
    previous: Option<&[f64]>,
    diag: &[f64],
    epsilon: f64,
    norm_b: f64,
    m: usize,
) -> bool {
    let Some(previous) = previous else {
        return false;
    };
    let limit = epsilon * norm_b / (m as f64).sqrt();
    let mut worst = 0.0_f64;
    for ((x, p), d) in current.iter().zip(previous).zip(diag) {
        let v = (d * (x - p)).abs();
        if !v.is_finite() {
            return false;
        }
        worst = worst.max(v);
    }
    worst < limit
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Verdict {
    Accept,
    RejectBound,
    RejectPathLength,
    RejectNonFinite,
}

impl Verdict {
    pub fn accepted(self) -> bool {
        self == Verdict::Accept
    }
}

/// The immutable slice of the problem one agent needs.
#[derive(Debug, Clone)]
pub struct LocalProblem {
    pub agent: usize,
    pub rows: Range<usize>,
    pub neighbors: Vec<usize>,
    pub neighbor_lens: Vec<usize>,
    /// Row pointers into `slot`/`col`/`val`; slot 0 is the agent's own block,
    /// slot `k + 1` is `neighbors[k]`, and `col` is local to that block.
    row_ptr: Vec<usize>,
    slot: Vec<u32>,
    col: Vec<u32>,
    val: Vec<f64>,
    pub own_coupled: bool,
    pub c: Vec<f64>,
    pub diag: Vec<f64>,
    pub bound: Option<RejectionBound>,
    pub norm_b: f64,
    pub epsilon: f64,
    pub dim: usize,
}

impl LocalProblem {
    pub fn new(
        system: &SparseSystem,
        partition: &Partition,
        agent: usize,
        epsilon: f64,
    ) -> Result<Self> {
        if partition.dim() != system.dim() {
            return Err(Error::Configuration(format!(
                "partition covers {} rows, system has {}",
                partition.dim(),
                system.dim()
            )));
        }
        let rows = partition.range(agent);
        let neighbors = partition.neighbors(agent).to_vec();
        let neighbor_lens = neighbors.iter().map(|&n| partition.block_len(n)).collect();
        let mut row_ptr = vec![0];
        let (mut slot, mut col, mut val) = (Vec::new(), Vec::new(), Vec::new());
        let mut own_coupled = false;
        for r in rows.clone() {
            for (c, v) in system.iteration.row(r) {
                if v == 0.0 {
                    continue;
                }
                let owner = partition.owner_of(c);
                let s = if owner == agent {
                    own_coupled = true;
                    0
                } else {
                    1 + neighbors
                        .binary_search(&owner)
                        .expect("neighbor set derived from sparsity")
                };
                slot.push(s as u32);
                col.push((c - partition.range(owner).start) as u32);
                val.push(v);
            }
            row_ptr.push(slot.len());
        }
        let norm_b = system.norm_b();
        Ok(Self {
            agent,
            c: system.c[rows.clone()].to_vec(),
            diag: system.diag[rows.clone()].to_vec(),
            rows,
            neighbors,
            neighbor_lens,
            row_ptr,
            slot,
            col,
            val,
            own_coupled,
            bound: RejectionBound::for_system(system).ok(),
            norm_b,
            epsilon,
            dim: system.dim(),
        })
    }

    pub fn block_len(&self) -> usize {
        self.rows.len()
    }

    pub fn neighbor_slot(&self, agent: usize) -> Option<usize> {
        self.neighbors.binary_search(&agent).ok()
    }

    pub fn threshold(&self, s_tilde: i32) -> f64 {
        match &self.bound {
            Some(b) => rejection_threshold(b, s_tilde),
            None => f64::INFINITY,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct NeighborView {
    pub block: Vec<f64>,
    /// Iteration index of `block` on its owner; 0 is the zero initial guess.
    pub sequence: u64,
    pub s_tilde: i32,
}

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct Counters {
    pub accepted: u64,
    pub rejected_bound: u64,
    pub rejected_path: u64,
    pub rejected_nonfinite: u64,
}

impl Counters {
    pub fn rejected(&self) -> u64 {
        self.rejected_bound + self.rejected_path + self.rejected_nonfinite
    }
}

/// A path-length refresh `s̃_i <- min(s̃_i^0, 1 + min S)`.
#[derive(Debug, Clone, PartialEq)]
pub struct Refresh {
    pub agent: usize,
    pub s_tilde: i32,
    /// Iteration index of the agent's own block at the time of the refresh.
    pub own_sequence: u64,
    pub view_sequences: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AgentState {
    pub id: usize,
    pub block: Vec<f64>,
    pub prev_block: Option<Vec<f64>>,
    pub kappa: u64,
    pub views: Vec<NeighborView>,
    pub s_tilde: i32,
    pub s_tilde_0: i32,
    /// Smallest path-length estimate accepted from each neighbor since the
    /// last refresh; `min S` over these equals the minimum over the set `S`.
    pub collected: Vec<Option<i32>>,
    pub locally_converged: bool,
    pub counters: Counters,
}

impl AgentState {
    /// Zero block, zero views, `s̃ = s̃^0 = 0`.
    pub fn new(local: &LocalProblem) -> Self {
        Self {
            id: local.agent,
            block: vec![0.0; local.block_len()],
            prev_block: None,
            kappa: 0,
            views: local
                .neighbor_lens
                .iter()
                .map(|&n| NeighborView {
                    block: vec![0.0; n],
                    sequence: 0,
                    s_tilde: 0,
                })
                .collect(),
            s_tilde: 0,
            s_tilde_0: 0,
            collected: vec![None; local.neighbors.len()],
            locally_converged: false,
            counters: Counters::default(),
        }
    }

    /// `sum_r M_ir x_r + c_i` from the current views; does not mutate.
    pub fn jacobi_block_update(&self, local: &LocalProblem) -> Vec<f64> {
        (0..local.block_len())
            .map(|r| {
                let mut acc = local.c[r];
                for k in local.row_ptr[r]..local.row_ptr[r + 1] {
                    let src = match local.slot[k] {
                        0 => &self.block,
                        s => &self.views[s as usize - 1].block,
                    };
                    acc += local.val[k] * src[local.col[k] as usize];
                }
                acc
            })
            .collect()
    }

    pub fn accept_or_reject(&self, local: &LocalProblem, msg: &UpdateMessage) -> Verdict {
        let Some(slot) = local.neighbor_slot(msg.sender) else {
            return Verdict::RejectBound;
        };
        if msg.block.iter().any(|v| !v.is_finite()) {
            return Verdict::RejectNonFinite;
        }
        let view = &self.views[slot];
        let jump = msg
            .block
            .iter()
            .zip(&view.block)
            .map(|(a, b)| (a - b) * (a - b))
            .sum::<f64>()
            .sqrt();
        // A NaN jump fails the comparison as well.
        if !(jump <= local.threshold(self.s_tilde)) {
            return Verdict::RejectBound;
        }
        if msg.s_tilde < 0 || (msg.s_tilde as i64) + 1 < self.s_tilde as i64 {
            return Verdict::RejectPathLength;
        }
        Verdict::Accept
    }

    /// Stores the block as the sender's view and its estimate in `S`; once
    /// every neighbor has contributed, refreshes `s̃_i` and empties `S`.
    pub fn on_accept(&mut self, local: &LocalProblem, msg: UpdateMessage) -> Option<Refresh> {
        let slot = local.neighbor_slot(msg.sender)?;
        self.counters.accepted += 1;
        let s = msg.s_tilde.max(0);
        self.collected[slot] = Some(self.collected[slot].map_or(s, |old| old.min(s)));
        self.views[slot] = NeighborView {
            block: msg.block,
            sequence: msg.sequence,
            s_tilde: msg.s_tilde,
        };
        if self.collected.iter().any(Option::is_none) {
            return None;
        }
        let min_s = self.collected.iter().flatten().copied().min().unwrap_or(0);
        self.s_tilde = self.s_tilde_0.min(min_s.saturating_add(1));
        self.s_tilde_0 = self.s_tilde;
        self.collected.fill(None);
        Some(Refresh {
            agent: self.id,
            s_tilde: self.s_tilde,
            own_sequence: self.kappa,
            view_sequences: self.views.iter().map(|v| v.sequence).collect(),
        })
    }

    pub fn record_rejection(&mut self, verdict: Verdict) {
        match verdict {
            Verdict::Accept => {}
            Verdict::RejectBound => self.counters.rejected_bound += 1,
            Verdict::RejectPathLength => self.counters.rejected_path += 1,
            Verdict::RejectNonFinite => self.counters.rejected_nonfinite += 1,
        }
    }

    /// Computes `x_i^{κ+1}`, advances `s̃^0`, evaluates the stopping test on
    /// the clean iterate and bumps `κ`. The returned message carries the new
    /// block; `tamper` may overwrite the stored block before it is sent.
    /// `fresh` marks an update that consumed newly accepted neighbor data;
    /// only those count towards the own path counter.
    pub fn advance(
        &mut self,
        local: &LocalProblem,
        fresh: bool,
        tamper: impl FnOnce(&mut Vec<f64>),
    ) -> UpdateMessage {
        let next = self.jacobi_block_update(local);
        if fresh {
            self.s_tilde_0 = self.s_tilde_0.saturating_add(1);
        }
        self.locally_converged = local_stopping_test(
            &next,
            Some(&self.block),
            &local.diag,
            local.epsilon,
            local.norm_b,
            local.dim,
        );
        let prev = std::mem::replace(&mut self.block, next);
        self.prev_block = Some(prev);
        tamper(&mut self.block);
        self.kappa += 1;
        UpdateMessage {
            sender: self.id,
            block: self.block.clone(),
            s_tilde: self.s_tilde,
            locally_converged: self.locally_converged,
            sequence: self.kappa,
        }
    }

    pub fn block_norm(&self) -> f64 {
        norm2(&self.block)
    }
}

#[cfg(test)]
mod tests;
