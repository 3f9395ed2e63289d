//! Real-time execution: one OS thread per agent, crossbeam channels as
//! mailboxes, and the calling thread acting as monitor.

use std::sync::atomic::{AtomicBool, Ordering};
use std::sync::{Arc, Mutex};
use std::thread;
use std::time::{Duration, Instant};

use crossbeam_channel::{unbounded, Receiver, RecvTimeoutError, Sender};

use super::{
    summaries, AgentSnapshot, DivergenceWatch, Envelope, MonitorSample, Network, RunReport,
    Termination,
};
use crate::corruption::{BitFlipInjector, FlipCounts};
use crate::problem::relative_error;
use crate::solver::{Agent, ConvergenceWatch};
use crate::{Error, Result};

/// What the monitor may read of one agent; written whole by its owner.
#[derive(Debug, Clone, Default)]
struct Snapshot {
    block: Vec<f64>,
    stats: AgentSnapshot,
    finished: Option<f64>,
    capped: bool,
}

type Cell = Arc<Mutex<Snapshot>>;

struct Worker {
    agent: Agent,
    inbox: Receiver<Envelope>,
    subscribers: Vec<(Sender<Envelope>, Option<BitFlipInjector>)>,
    outsiders: Vec<Sender<Envelope>>,
    watch: ConvergenceWatch,
    cell: Cell,
    stop: Arc<AtomicBool>,
    start: Instant,
    max_iterations: u64,
}

/// Longest an agent waits for fresh input before iterating anyway.
const HEARTBEAT: Duration = Duration::from_millis(1);

impl Worker {
    fn publish(&self, finished: Option<f64>, capped: bool) {
        let snapshot = Snapshot {
            block: self.agent.state().block.clone(),
            stats: AgentSnapshot::of(&self.agent),
            finished,
            capped,
        };
        *self.cell.lock().expect("snapshot lock") = snapshot;
    }

    fn observe(&mut self, env: Envelope) {
        let now = self.start.elapsed().as_secs_f64();
        match env {
            Envelope::Update(m) => {
                self.watch.observe(m.sender, m.locally_converged, now);
                self.agent.receive(m, None);
            }
            Envelope::Flag { sender, converged } => self.watch.observe(sender, converged, now),
        }
    }

    fn run(mut self) -> (Agent, FlipCounts) {
        let id = self.agent.id();
        let mut gossiped = false;
        self.publish(None, false);
        while !self.stop.load(Ordering::Relaxed) {
            if !self.agent.has_fresh_input() {
                let now = self.start.elapsed().as_secs_f64();
                let wait = self.watch.deadline().map_or(HEARTBEAT, |d| {
                    Duration::from_secs_f64((d - now).max(0.0)).min(HEARTBEAT)
                });
                match self.inbox.recv_timeout(wait) {
                    Ok(env) => self.observe(env),
                    Err(RecvTimeoutError::Timeout) => {}
                    // Everyone else has stopped; only a pending deadline can
                    // still change anything.
                    Err(RecvTimeoutError::Disconnected) if self.watch.deadline().is_some() => {
                        thread::sleep(wait)
                    }
                    Err(RecvTimeoutError::Disconnected) => break,
                }
            }
            while let Ok(env) = self.inbox.try_recv() {
                self.observe(env);
            }
            let now = self.start.elapsed().as_secs_f64();
            if self.watch.is_done(now) {
                self.publish(Some(now), false);
                break;
            }
            let out = self.agent.update(now, None);
            let flag = out.locally_converged;
            self.watch.observe(id, flag, now);
            for (tx, injector) in &mut self.subscribers {
                let copy = match injector {
                    Some(inj) => inj.corrupt(&out),
                    None => out.clone(),
                };
                let _ = tx.send(Envelope::Update(copy));
            }
            if flag != gossiped {
                gossiped = flag;
                for tx in &self.outsiders {
                    let _ = tx.send(Envelope::Flag {
                        sender: id,
                        converged: flag,
                    });
                }
            }
            let capped = self.agent.state().kappa >= self.max_iterations;
            self.publish(None, capped);
            if capped {
                break;
            }
        }
        let mut flips = FlipCounts::default();
        for (_, inj) in &self.subscribers {
            if let Some(inj) = inj {
                flips += inj.counts();
            }
        }
        (self.agent, flips)
    }
}

pub(super) fn run(net: Network, x_star: &[f64]) -> Result<RunReport> {
    let n = net.agents.len();
    let dim = net.partition.dim();
    let config = net.config.clone();
    let (txs, rxs): (Vec<_>, Vec<_>) = (0..n).map(|_| unbounded::<Envelope>()).unzip();
    let cells: Vec<Cell> = (0..n).map(|_| Cell::default()).collect();
    let stop = Arc::new(AtomicBool::new(false));
    let start = Instant::now();

    let mut handles = Vec::with_capacity(n);
    for (i, (agent, inbox)) in net.agents.into_iter().zip(rxs).enumerate() {
        let subs = net.partition.subscribers(i);
        let worker = Worker {
            subscribers: subs
                .iter()
                .map(|&j| {
                    (
                        txs[j].clone(),
                        config.bit_flips.map(|p| BitFlipInjector::for_link(p, i, j)),
                    )
                })
                .collect(),
            outsiders: (0..n)
                .filter(|j| *j != i && !subs.contains(j))
                .map(|j| txs[j].clone())
                .collect(),
            agent,
            inbox,
            watch: ConvergenceWatch::new(n, config.convergence_duration),
            cell: cells[i].clone(),
            stop: stop.clone(),
            start,
            max_iterations: config.max_iterations,
        };
        let handle = thread::Builder::new()
            .name(format!("agent-{i}"))
            .spawn(move || worker.run())
            .map_err(|e| Error::Configuration(format!("cannot spawn agent thread: {e}")))?;
        handles.push(handle);
    }
    drop(txs);

    let read = |t: f64| {
        let snaps: Vec<Snapshot> = cells
            .iter()
            .map(|c| c.lock().expect("snapshot lock").clone())
            .collect();
        let x: Vec<f64> = snaps.iter().flat_map(|s| s.block.iter().copied()).collect();
        let x = if x.len() == dim { x } else { vec![0.0; dim] };
        let sample = MonitorSample {
            t,
            rel_error: relative_error(&x, x_star),
            agents: snaps.iter().map(|s| s.stats).collect(),
        };
        (sample, snaps)
    };

    let interval = Duration::from_secs_f64(config.sample_interval);
    let mut samples = Vec::new();
    let mut divergence = DivergenceWatch::default();
    let mut next = start;
    let termination = loop {
        let t = start.elapsed().as_secs_f64();
        let (sample, snaps) = read(t);
        let diverged = divergence.diverged(&sample, config.divergence_window);
        samples.push(sample);
        if snaps.iter().all(|s| s.finished.is_some()) {
            let last = snaps.iter().filter_map(|s| s.finished).fold(0.0, f64::max);
            break Termination::Converged {
                t: (last - config.convergence_duration).max(0.0),
            };
        }
        if snaps.iter().any(|s| s.capped) {
            break Termination::IterationCap;
        }
        if diverged {
            break Termination::Diverged;
        }
        if t >= config.wall_cap {
            break Termination::TimeCap;
        }
        next += interval;
        if let Some(wait) = next.checked_duration_since(Instant::now()) {
            thread::sleep(wait);
        }
    };
    stop.store(true, Ordering::Relaxed);

    let mut agents = Vec::with_capacity(n);
    let mut flips = FlipCounts::default();
    for h in handles {
        let (agent, f) = h
            .join()
            .map_err(|_| Error::Configuration("agent thread panicked".into()))?;
        agents.push(agent);
        flips += f;
    }
    let end_time = start.elapsed().as_secs_f64();
    let final_solution = super::assemble(agents.iter().map(|a| a.state().block.as_slice()), dim);
    samples.push(super::sample_of(end_time, &agents, dim, x_star));
    Ok(RunReport {
        final_rel_error: relative_error(&final_solution, x_star),
        final_solution,
        samples,
        termination,
        agents: summaries(&agents),
        flips,
        dag: None,
        end_time,
    })
}
