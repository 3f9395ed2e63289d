//! Deterministic discrete-event execution of the network.

use std::cmp::Ordering;
use std::collections::{BinaryHeap, VecDeque};

use super::{
    sample_of, summaries, DelayModel, DelayRange, DivergenceWatch, Envelope, Network, RunReport,
    Termination,
};
use crate::corruption::{BitFlipInjector, FlipCounts};
use crate::problem::relative_error;
use crate::rng::{self, StreamRng};
use crate::solver::{ConvergenceWatch, DagTracker};

const NANOS: f64 = 1e9;

fn to_nanos(seconds: f64) -> u64 {
    (seconds * NANOS).ceil() as u64
}

fn to_seconds(nanos: u64) -> f64 {
    nanos as f64 / NANOS
}

#[derive(Debug)]
enum EventKind {
    Deliver(Envelope),
    CycleEnd,
    Timer,
    Sample,
}

#[derive(Debug)]
struct Event {
    at: u64,
    agent: usize,
    seq: u64,
    kind: EventKind,
}

impl Event {
    fn key(&self) -> (u64, usize, u64) {
        (self.at, self.agent, self.seq)
    }
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.key() == other.key()
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so the max-heap pops the earliest event.
    fn cmp(&self, other: &Self) -> Ordering {
        other.key().cmp(&self.key())
    }
}

struct Link {
    latency: DelayRange,
    rng: StreamRng,
    injector: Option<BitFlipInjector>,
    last_arrival: u64,
}

struct Slot {
    inbox: VecDeque<Envelope>,
    busy: bool,
    watch: ConvergenceWatch,
    armed: Option<f64>,
    finished: Option<u64>,
    compute: StreamRng,
    gossiped_flag: bool,
    subscribers: Vec<usize>,
    outsiders: Vec<usize>,
}

struct Sim<'a> {
    net: Network,
    delays: DelayModel,
    x_star: &'a [f64],
    queue: BinaryHeap<Event>,
    seq: u64,
    slots: Vec<Slot>,
    links: Vec<Link>,
    dag: Option<DagTracker>,
    outcome: Option<(u64, Termination)>,
}

const MONITOR: usize = usize::MAX;

pub(super) fn run(net: Network, delays: DelayModel, x_star: &[f64]) -> RunReport {
    Sim::new(net, delays, x_star).execute()
}

impl<'a> Sim<'a> {
    fn new(net: Network, delays: DelayModel, x_star: &'a [f64]) -> Self {
        let n = net.agents.len();
        let duration = net.config.convergence_duration;
        let slots = (0..n)
            .map(|i| {
                let subscribers = net.partition.subscribers(i);
                let outsiders = (0..n)
                    .filter(|j| *j != i && !subscribers.contains(j))
                    .collect();
                Slot {
                    inbox: VecDeque::new(),
                    busy: false,
                    watch: ConvergenceWatch::new(n, duration),
                    armed: None,
                    finished: None,
                    compute: rng::stream(delays.seed, &[rng::tag::COMPUTE, i as u64]),
                    gossiped_flag: false,
                    subscribers,
                    outsiders,
                }
            })
            .collect();
        let links = (0..n * n)
            .map(|k| {
                let (from, to) = (k / n, k % n);
                Link {
                    latency: delays.latency_for(from, to),
                    rng: rng::stream(delays.seed, &[rng::tag::LATENCY, from as u64, to as u64]),
                    injector: net
                        .config
                        .bit_flips
                        .map(|p| BitFlipInjector::for_link(p, from, to)),
                    last_arrival: 0,
                }
            })
            .collect();
        let dag = net.config.instrument.then(|| DagTracker::new(n));
        Sim {
            net,
            delays,
            x_star,
            queue: BinaryHeap::new(),
            seq: 0,
            slots,
            links,
            dag,
            outcome: None,
        }
    }
}

impl Sim<'_> {
    fn push(&mut self, at: u64, agent: usize, kind: EventKind) {
        self.seq += 1;
        self.queue.push(Event {
            at,
            agent,
            seq: self.seq,
            kind,
        });
    }

    fn execute(mut self) -> RunReport {
        let cap = to_nanos(self.net.config.wall_cap);
        let interval = to_nanos(self.net.config.sample_interval).max(1);
        let dim = self.net.partition.dim();
        let mut samples = Vec::new();
        let mut divergence = DivergenceWatch::default();

        self.push(0, MONITOR, EventKind::Sample);
        for i in 0..self.net.agents.len() {
            self.start_cycle(i, 0);
        }

        let mut now = 0;
        while self.outcome.is_none() {
            let Some(event) = self.queue.pop() else {
                self.outcome = Some((now, Termination::TimeCap));
                break;
            };
            if event.at > cap {
                self.outcome = Some((cap, Termination::TimeCap));
                break;
            }
            now = event.at;
            match event.kind {
                EventKind::Sample => {
                    let sample = sample_of(to_seconds(now), &self.net.agents, dim, self.x_star);
                    let diverged = divergence.diverged(&sample, self.net.config.divergence_window);
                    samples.push(sample);
                    if diverged {
                        self.outcome = Some((now, Termination::Diverged));
                    } else {
                        self.push(now + interval, MONITOR, EventKind::Sample);
                    }
                }
                EventKind::Deliver(env) => self.deliver(event.agent, env, now),
                EventKind::CycleEnd => self.end_cycle(event.agent, now),
                EventKind::Timer => self.timer(event.agent, now),
            }
        }

        let (end, termination) = self.outcome.expect("loop ends with an outcome");
        let end_s = to_seconds(end);
        if samples.last().is_none_or(|s| s.t < end_s) {
            samples.push(sample_of(end_s, &self.net.agents, dim, self.x_star));
        }
        let final_solution = super::assemble(
            self.net.agents.iter().map(|a| a.state().block.as_slice()),
            dim,
        );
        let mut flips = FlipCounts::default();
        for link in &self.links {
            if let Some(inj) = &link.injector {
                flips += inj.counts();
            }
        }
        RunReport {
            final_rel_error: relative_error(&final_solution, self.x_star),
            final_solution,
            samples,
            termination,
            agents: summaries(&self.net.agents),
            flips,
            dag: self.dag,
            end_time: end_s,
        }
    }

    fn deliver(&mut self, to: usize, env: Envelope, now: u64) {
        let slot = &mut self.slots[to];
        if slot.finished.is_some() {
            return;
        }
        let (sender, flag) = match &env {
            Envelope::Update(m) => (m.sender, m.locally_converged),
            Envelope::Flag { sender, converged } => (*sender, *converged),
        };
        slot.watch.observe(sender, flag, to_seconds(now));
        self.arm_timer(to);
        if let Envelope::Update(_) = env {
            let slot = &mut self.slots[to];
            slot.inbox.push_back(env);
        }
    }

    /// Agents iterate back to back; each compute period ends in an update.
    fn start_cycle(&mut self, i: usize, now: u64) {
        let slot = &mut self.slots[i];
        if slot.busy || slot.finished.is_some() {
            return;
        }
        slot.busy = true;
        let compute = self.delays.compute.sample(&mut slot.compute);
        self.push(now + to_nanos(compute), i, EventKind::CycleEnd);
    }

    /// Screens everything that arrived up to now, then publishes the next
    /// block computed from the latest accepted views.
    fn end_cycle(&mut self, i: usize, now: u64) {
        let slot = &mut self.slots[i];
        if slot.finished.is_some() {
            return;
        }
        slot.busy = false;
        let agent = &mut self.net.agents[i];
        while let Some(env) = slot.inbox.pop_front() {
            if let Envelope::Update(m) = env {
                agent.receive(m, self.dag.as_mut());
            }
        }
        let t = to_seconds(now);
        let out = self.net.agents[i].update(t, self.dag.as_mut());
        let flag = out.locally_converged;
        self.slots[i].watch.observe(i, flag, t);

        let subscribers = std::mem::take(&mut self.slots[i].subscribers);
        for &to in &subscribers {
            let link = &mut self.links[i * self.slots.len() + to];
            let copy = match &mut link.injector {
                Some(inj) => inj.corrupt(&out),
                None => out.clone(),
            };
            self.send(i, to, Envelope::Update(copy), now);
        }
        self.slots[i].subscribers = subscribers;

        if flag != self.slots[i].gossiped_flag {
            self.slots[i].gossiped_flag = flag;
            let outsiders = std::mem::take(&mut self.slots[i].outsiders);
            for &to in &outsiders {
                self.send(
                    i,
                    to,
                    Envelope::Flag {
                        sender: i,
                        converged: flag,
                    },
                    now,
                );
            }
            self.slots[i].outsiders = outsiders;
        }

        if self.net.agents[i].state().kappa >= self.net.config.max_iterations {
            self.outcome = Some((now, Termination::IterationCap));
            return;
        }
        self.arm_timer(i);
        self.start_cycle(i, now);
    }

    fn send(&mut self, from: usize, to: usize, env: Envelope, now: u64) {
        let link = &mut self.links[from * self.slots.len() + to];
        let latency = to_nanos(link.latency.sample(&mut link.rng));
        let at = (now + latency).max(link.last_arrival);
        link.last_arrival = at;
        self.push(at, to, EventKind::Deliver(env));
    }

    fn arm_timer(&mut self, i: usize) {
        let slot = &mut self.slots[i];
        let deadline = slot.watch.deadline();
        if deadline != slot.armed {
            slot.armed = deadline;
            if let Some(d) = deadline {
                self.push(to_nanos(d), i, EventKind::Timer);
            }
        }
    }

    fn timer(&mut self, i: usize, now: u64) {
        let slot = &mut self.slots[i];
        if slot.finished.is_some() || !slot.watch.is_done(to_seconds(now) + 0.5 / NANOS) {
            return;
        }
        slot.finished = Some(now);
        slot.inbox.clear();
        if self.slots.iter().all(|s| s.finished.is_some()) {
            let last = self
                .slots
                .iter()
                .filter_map(|s| s.finished)
                .max()
                .unwrap_or(now);
            let t = (to_seconds(last) - self.net.config.convergence_duration).max(0.0);
            self.outcome = Some((now, Termination::Converged { t }));
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::problem::{build_poisson, partition_rows};
    use crate::runtime::{spawn_network, RunConfig, UpdateMessage};
    use crate::solver::{build_agents, AgentConfig, Variant};

    #[test]
    fn links_deliver_in_send_order() {
        let system = build_poisson(2).unwrap();
        let partition = partition_rows(4, 2, &system.iteration).unwrap();
        let config = AgentConfig {
            variant: Variant::Asj,
            malevolent: None,
        };
        let agents = build_agents(&system, &partition, &config, 1e-6).unwrap();
        let delays = DelayModel {
            latency: DelayRange::new(0.0, 0.1),
            ..DelayModel::with_seed(11)
        };
        let net = spawn_network(partition, agents, RunConfig::default()).unwrap();
        let mut sim = Sim::new(net, delays, &system.x_star);
        for k in 0..200u64 {
            let msg = UpdateMessage {
                sender: 0,
                block: vec![0.0; 2],
                s_tilde: 0,
                locally_converged: false,
                sequence: k,
            };
            sim.send(0, 1, Envelope::Update(msg), k * 1000);
        }
        let mut seen = Vec::new();
        while let Some(ev) = sim.queue.pop() {
            if let EventKind::Deliver(Envelope::Update(m)) = ev.kind {
                seen.push(m.sequence);
            }
        }
        assert_eq!(seen, (0..200).collect::<Vec<_>>());
    }

    #[test]
    fn zero_latency_keeps_order() {
        let system = build_poisson(2).unwrap();
        let partition = partition_rows(4, 2, &system.iteration).unwrap();
        let config = AgentConfig {
            variant: Variant::Asj,
            malevolent: None,
        };
        let agents = build_agents(&system, &partition, &config, 1e-6).unwrap();
        let delays = DelayModel {
            latency: DelayRange::fixed(0.0),
            ..DelayModel::default()
        };
        let net = spawn_network(partition, agents, RunConfig::default()).unwrap();
        let mut sim = Sim::new(net, delays, &system.x_star);
        for k in 0..20u64 {
            let msg = UpdateMessage {
                sender: 1,
                block: vec![0.0; 2],
                s_tilde: 0,
                locally_converged: false,
                sequence: k,
            };
            sim.send(1, 0, Envelope::Update(msg), 5);
        }
        let order: Vec<u64> = std::iter::from_fn(|| sim.queue.pop())
            .filter_map(|ev| match ev.kind {
                EventKind::Deliver(Envelope::Update(m)) => Some(m.sequence),
                _ => None,
            })
            .collect();
        assert_eq!(order, (0..20).collect::<Vec<_>>());
    }
}
