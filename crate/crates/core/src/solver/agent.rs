use std::sync::Arc;

use super::{AgentState, DagTracker, LocalProblem, Variant, Verdict};
use crate::corruption::{MalevolentInjector, MalevolentPolicy};
use crate::problem::{Partition, SparseSystem};
use crate::runtime::UpdateMessage;
use crate::Result;

#[derive(Debug, Clone, PartialEq)]
pub struct AgentConfig {
    pub variant: Variant,
    pub malevolent: Option<MalevolentPolicy>,
}

/// Drives one agent. Receipts are screened one by one in arrival order; the
/// runtime decides when the next block update happens, which always uses
/// the latest accepted views.
#[derive(Debug)]
pub struct Agent {
    local: Arc<LocalProblem>,
    state: AgentState,
    variant: Variant,
    malevolent: Option<MalevolentInjector>,
    fresh_input: bool,
}

impl Agent {
    pub fn new(local: Arc<LocalProblem>, config: AgentConfig) -> Self {
        let malevolent = config
            .malevolent
            .filter(|p| p.target_agent == local.agent)
            .map(MalevolentInjector::new);
        Self {
            state: AgentState::new(&local),
            local,
            variant: config.variant,
            malevolent,
            fresh_input: false,
        }
    }

    pub fn id(&self) -> usize {
        self.local.agent
    }

    pub fn local(&self) -> &LocalProblem {
        &self.local
    }

    pub fn state(&self) -> &AgentState {
        &self.state
    }

    pub fn variant(&self) -> Variant {
        self.variant
    }

    pub fn malevolent_applications(&self) -> u64 {
        self.malevolent
            .as_ref()
            .map_or(0, MalevolentInjector::applications)
    }

    pub fn receive(&mut self, msg: UpdateMessage, dag: Option<&mut DagTracker>) -> Verdict {
        let verdict = match self.variant {
            Variant::Asj if self.local.neighbor_slot(msg.sender).is_some() => Verdict::Accept,
            _ => self.state.accept_or_reject(&self.local, &msg),
        };
        if !verdict.accepted() {
            self.state.record_rejection(verdict);
            return verdict;
        }
        self.fresh_input = true;
        if let Some(refresh) = self.state.on_accept(&self.local, msg) {
            if let Some(dag) = dag {
                dag.check_refresh(
                    refresh.agent,
                    refresh.own_sequence,
                    refresh.s_tilde,
                    &self.local.neighbors,
                    &refresh.view_sequences,
                );
            }
        }
        verdict
    }

    /// Whether anything has been accepted since the last update.
    pub fn has_fresh_input(&self) -> bool {
        self.fresh_input
    }

    /// Computes and returns the next broadcast.
    pub fn update(&mut self, elapsed: f64, dag: Option<&mut DagTracker>) -> UpdateMessage {
        let fresh = std::mem::take(&mut self.fresh_input);
        let malevolent = &mut self.malevolent;
        let msg = self.state.advance(&self.local, fresh, |block| {
            if let Some(inj) = malevolent {
                inj.maybe_apply(block, elapsed);
            }
        });
        if let Some(dag) = dag {
            let views: Vec<u64> = self.state.views.iter().map(|v| v.sequence).collect();
            dag.record_update(
                self.local.agent,
                msg.sequence,
                self.local.own_coupled,
                &self.local.neighbors,
                &views,
            );
            dag.check_send(self.local.agent, msg.sequence, msg.s_tilde);
        }
        msg
    }
}

/// One agent per partition block, all sharing `config`.
pub fn build_agents(
    system: &SparseSystem,
    partition: &Partition,
    config: &AgentConfig,
    epsilon: f64,
) -> Result<Vec<Agent>> {
    (0..partition.agent_count())
        .map(|i| {
            let local = LocalProblem::new(system, partition, i, epsilon)?;
            Ok(Agent::new(Arc::new(local), config.clone()))
        })
        .collect()
}
