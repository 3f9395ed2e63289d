//! Validation instrumentation for the path-length estimate.
//!
//! Every iterate `x_i^κ` is a vertex of the computation graph; its depth is
//! the shortest path back to the zero initial guess. An agent's estimate `s̃`
//! must never exceed the depth of the data it guards.

/// Depth of every iterate produced so far, indexed by agent then sequence.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct DagTracker {
    depths: Vec<Vec<u32>>,
    violations: Vec<LowerBoundViolation>,
    refreshes: u64,
    sends: u64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ViolationKind {
    /// A refreshed estimate exceeded one plus the smallest depth among the
    /// agent's own block and its neighbor views.
    Refresh,
    /// A broadcast estimate exceeded the depth of the block it accompanied.
    Send,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LowerBoundViolation {
    pub kind: ViolationKind,
    pub agent: usize,
    pub sequence: u64,
    pub s_tilde: i32,
    pub depth: u32,
}

impl DagTracker {
    pub fn new(agents: usize) -> Self {
        Self {
            depths: vec![vec![0]; agents],
            ..Self::default()
        }
    }

    pub fn depth(&self, agent: usize, sequence: u64) -> u32 {
        self.depths[agent][sequence as usize]
    }

    /// Registers `x_i^{sequence}` computed from the agent's previous block
    /// (when `own_coupled`) and the given neighbor views.
    pub fn record_update(
        &mut self,
        agent: usize,
        sequence: u64,
        own_coupled: bool,
        neighbors: &[usize],
        view_sequences: &[u64],
    ) -> u32 {
        let history = &self.depths[agent];
        debug_assert_eq!(history.len() as u64, sequence);
        let own = own_coupled.then(|| history[sequence as usize - 1]);
        let inputs = neighbors
            .iter()
            .zip(view_sequences)
            .map(|(&j, &q)| self.depths[j][q as usize])
            .chain(own);
        let depth = 1 + inputs.min().unwrap_or(0);
        self.depths[agent].push(depth);
        depth
    }

    pub fn check_refresh(
        &mut self,
        agent: usize,
        own_sequence: u64,
        s_tilde: i32,
        neighbors: &[usize],
        view_sequences: &[u64],
    ) {
        self.refreshes += 1;
        let own = self.depths[agent][own_sequence as usize];
        let frontier = neighbors
            .iter()
            .zip(view_sequences)
            .map(|(&j, &q)| self.depths[j][q as usize])
            .fold(own, u32::min);
        let limit = frontier.saturating_add(1);
        if s_tilde as i64 > limit as i64 {
            self.violations.push(LowerBoundViolation {
                kind: ViolationKind::Refresh,
                agent,
                sequence: own_sequence,
                s_tilde,
                depth: limit,
            });
        }
    }

    pub fn check_send(&mut self, agent: usize, sequence: u64, s_tilde: i32) {
        self.sends += 1;
        let depth = self.depth(agent, sequence);
        if s_tilde as i64 > depth as i64 {
            self.violations.push(LowerBoundViolation {
                kind: ViolationKind::Send,
                agent,
                sequence,
                s_tilde,
                depth,
            });
        }
    }

    pub fn violations(&self) -> &[LowerBoundViolation] {
        &self.violations
    }

    pub fn checks(&self) -> u64 {
        self.refreshes + self.sends
    }

    pub fn refresh_checks(&self) -> u64 {
        self.refreshes
    }
}
