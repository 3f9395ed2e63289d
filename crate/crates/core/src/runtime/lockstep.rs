use std::sync::Arc;

use crate::problem::{Partition, SparseSystem};
use crate::solver::{Agent, AgentConfig, LocalProblem, Variant};
use crate::Result;

/// Synchronous schedule: every round each agent updates once from the blocks
/// of the previous round, then every broadcast is delivered in agent order.
/// Returns the assembled iterate after each round.
pub fn run_lockstep(
    system: &SparseSystem,
    partition: &Partition,
    rounds: usize,
) -> Result<Vec<Vec<f64>>> {
    let config = AgentConfig {
        variant: Variant::Asj,
        malevolent: None,
    };
    let mut agents = (0..partition.agent_count())
        .map(|i| {
            Ok(Agent::new(
                Arc::new(LocalProblem::new(system, partition, i, 0.0)?),
                config.clone(),
            ))
        })
        .collect::<Result<Vec<_>>>()?;
    let mut iterates = Vec::with_capacity(rounds);
    for _ in 0..rounds {
        let sent: Vec<_> = agents.iter_mut().map(|a| a.update(0.0, None)).collect();
        for msg in sent {
            for to in partition.subscribers(msg.sender) {
                agents[to].receive(msg.clone(), None);
            }
        }
        iterates.push(super::assemble(
            agents.iter().map(|a| a.state().block.as_slice()),
            system.dim(),
        ));
    }
    Ok(iterates)
}
