/// Solution broadcast from one agent to the subscribers of its block.
#[derive(Debug, Clone, PartialEq)]
pub struct UpdateMessage {
    pub sender: usize,
    /// The sender's newest iterate of its own block.
    pub block: Vec<f64>,
    /// The sender's path-length estimate at the time of sending.
    pub s_tilde: i32,
    pub locally_converged: bool,
    /// Iteration index of `block` on the sender; strictly increasing per sender.
    pub sequence: u64,
}

/// Everything that travels between agents.
#[derive(Debug, Clone, PartialEq)]
pub enum Envelope {
    Update(UpdateMessage),
    /// Local-convergence flag gossip to agents that do not subscribe to the
    /// sender's block. Never corrupted.
    Flag {
        sender: usize,
        converged: bool,
    },
}

impl Envelope {
    pub fn sender(&self) -> usize {
        match self {
            Envelope::Update(m) => m.sender,
            Envelope::Flag { sender, .. } => *sender,
        }
    }
}
