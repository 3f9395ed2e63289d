/// One agent's view of the global stopping protocol: the most recent
/// local-convergence flag from every agent and how long they have all been
/// set.
#[derive(Debug, Clone, PartialEq)]
pub struct ConvergenceWatch {
    flags: Vec<bool>,
    raised: usize,
    all_since: Option<f64>,
    duration: f64,
}

impl ConvergenceWatch {
    pub fn new(agents: usize, duration: f64) -> Self {
        Self {
            flags: vec![false; agents],
            raised: 0,
            all_since: None,
            duration,
        }
    }

    pub fn observe(&mut self, agent: usize, converged: bool, now: f64) {
        let slot = &mut self.flags[agent];
        if *slot != converged {
            *slot = converged;
            if converged {
                self.raised += 1;
            } else {
                self.raised -= 1;
            }
        }
        if self.raised == self.flags.len() {
            self.all_since.get_or_insert(now);
        } else {
            self.all_since = None;
        }
    }

    pub fn all_converged(&self) -> bool {
        self.raised == self.flags.len()
    }

    /// When the agent may stop if nothing changes in the meantime.
    pub fn deadline(&self) -> Option<f64> {
        self.all_since.map(|t| t + self.duration)
    }

    pub fn is_done(&self, now: f64) -> bool {
        self.deadline().is_some_and(|d| now >= d)
    }

    pub fn duration(&self) -> f64 {
        self.duration
    }
}
