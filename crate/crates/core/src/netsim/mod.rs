//! Deterministic lockstep network simulator.
//!
//! Every slot: transactions arrive, due messages are delivered, the adversary
//! acts, then every started correct process runs one wrapper step and gossips
//! what it received for the first time. Delivery slots are chosen by the
//! adversary (or the scenario's delay policy) and clamped into the envelope.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::adversary::{self, Adversary, Emission, Setup};
use crate::base::guilty_set;
use crate::crypto::Keychain;
use crate::finalize::{global_f, longest_break_chain};
use crate::log::Log;
use crate::message::{Message, MessageSet, Payload};
use crate::perm::Permutation;
use crate::types::{Digest, ProcessId, Timeslot};
use crate::wrapper::{finish_qcs, wrapper_step, Process, WrapperConfig, WrapperEvent, WrapperState};

mod config;
mod trace;

pub use config::{
    schedule_delivery, ConfigError, DelayModel, DelayPolicy, FaultySpec, ScenarioConfig, TxArrival, TxStream,
};
pub use trace::{Recording, Trace, TraceError, TraceRecord, TraceSummary, TraceWriter};

/// A correct process as the simulator holds it.
#[derive(Debug)]
pub struct Node {
    pub proc: Process,
    pub state: WrapperState,
    pub offset: Timeslot,
    buffered: Vec<Message>,
    last: Option<(u32, bool, Log, Log)>,
}

impl Node {
    pub fn started(&self, t: Timeslot) -> bool {
        t >= self.offset
    }
}

/// What the adversary may observe.
pub struct World<'a> {
    pub t: Timeslot,
    pub model: DelayModel,
    pub faulty: &'a BTreeSet<ProcessId>,
    pub nodes: &'a BTreeMap<ProcessId, Node>,
    /// Union of the correct processes' received sets.
    pub correct_msgs: &'a MessageSet,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RunOptions {
    pub recording: Recording,
    /// Compare every correct `log` against the global finalization function of
    /// its received set after every slot.
    pub check_agreement: bool,
}

impl Default for RunOptions {
    fn default() -> Self {
        RunOptions {
            recording: Recording::Full,
            check_agreement: true,
        }
    }
}

/// Wrapper parameters for a scenario. Without a `Δ*` bound the wrapper still
/// needs a timeout unit and uses `Δ`.
pub fn wrapper_config(config: &ScenarioConfig) -> WrapperConfig {
    WrapperConfig::new(config.delta, config.delta_star.unwrap_or(config.delta))
}

/// The shared leader permutation `Π*` of a scenario.
pub fn leader_permutation(config: &ScenarioConfig) -> Permutation {
    match &config.permutation {
        Some(order) => Permutation::new(order.iter().map(|&i| ProcessId(i)).collect())
            .expect("validated permutation"),
        None => {
            let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ 0x9e37_79b9);
            Permutation::sample(&config.processes(), &mut rng)
        }
    }
}

pub fn run(config: &ScenarioConfig) -> Result<Trace, ConfigError> {
    run_with(config, RunOptions::default())
}

pub fn run_with(config: &ScenarioConfig, opts: RunOptions) -> Result<Trace, ConfigError> {
    config.validate()?;
    let mut sim = Sim::new(config, opts);
    for t in 0..=config.horizon {
        sim.slot(t);
    }
    Ok(sim.finish())
}

struct Sim<'c> {
    config: &'c ScenarioConfig,
    opts: RunOptions,
    model: DelayModel,
    pi: BTreeSet<ProcessId>,
    log_g: Log,
    faulty: BTreeSet<ProcessId>,
    pi_star: Permutation,
    nodes: BTreeMap<ProcessId, Node>,
    adversary: Box<dyn Adversary>,
    rng: ChaCha8Rng,
    arrivals: Vec<(Timeslot, ProcessId, crate::types::Transaction)>,
    next_arrival: usize,
    queue: BTreeMap<Timeslot, Vec<(ProcessId, Message)>>,
    /// Earliest pending arrival of a message at a recipient.
    pending: HashMap<(ProcessId, Digest), Timeslot>,
    faulty_has: HashSet<(ProcessId, Digest)>,
    /// Signatures of correct processes that exist so far.
    correct_signed: HashSet<Digest>,
    published: HashSet<Digest>,
    correct_msgs: MessageSet,
    violated: BTreeSet<u32>,
    chain_logs: Vec<Log>,
    agreement_mismatches: u64,
    agreement_checks: u64,
    rejected: u64,
    messages: u64,
    deliveries: u64,
    writer: TraceWriter,
}

impl<'c> Sim<'c> {
    fn new(config: &'c ScenarioConfig, opts: RunOptions) -> Self {
        let pi: BTreeSet<ProcessId> = config.processes().into_iter().collect();
        let faulty = config.faulty_set();
        let pi_star = leader_permutation(config);
        let cfg = wrapper_config(config);
        let log_g = Log::empty();
        let mut keychain = Keychain::new();
        let mut nodes = BTreeMap::new();
        let mut adv_keys = BTreeMap::new();
        for &p in &pi {
            let key = keychain.issue(p).expect("fresh keychain");
            if faulty.contains(&p) {
                adv_keys.insert(p, key);
                continue;
            }
            let proc = Process {
                me: p,
                key,
                pi: pi.clone(),
                log_g: log_g.clone(),
                pi_star: pi_star.clone(),
                cfg,
            };
            let state = WrapperState::new(&proc);
            nodes.insert(
                p,
                Node {
                    proc,
                    state,
                    offset: config.offset(p),
                    buffered: Vec::new(),
                    last: None,
                },
            );
        }
        let setup = Setup {
            keys: adv_keys,
            pi: pi.clone(),
            log_g: log_g.clone(),
            pi_star: pi_star.clone(),
            cfg,
            offsets: pi.iter().map(|&p| (p, config.offset(p))).collect(),
        };
        let adversary = adversary::build(&config.strategy, setup);
        Sim {
            config,
            opts,
            model: config.delay_model(),
            pi,
            log_g,
            faulty,
            pi_star,
            nodes,
            adversary,
            rng: ChaCha8Rng::seed_from_u64(config.seed),
            arrivals: config.arrivals(),
            next_arrival: 0,
            queue: BTreeMap::new(),
            pending: HashMap::new(),
            faulty_has: HashSet::new(),
            correct_signed: HashSet::new(),
            published: HashSet::new(),
            correct_msgs: MessageSet::new(),
            violated: BTreeSet::new(),
            chain_logs: vec![Log::empty()],
            agreement_mismatches: 0,
            agreement_checks: 0,
            rejected: 0,
            messages: 0,
            deliveries: 0,
            writer: TraceWriter::new(opts.recording),
        }
    }

    fn slot(&mut self, t: Timeslot) {
        let mut inbox: BTreeMap<ProcessId, Vec<Message>> = BTreeMap::new();
        while let Some((at, p, tx)) = self.arrivals.get(self.next_arrival) {
            if *at > t {
                break;
            }
            inbox.entry(*p).or_default().push(Message::new(Payload::Tx(tx.clone())));
            self.next_arrival += 1;
        }
        for (to, msg) in self.queue.remove(&t).unwrap_or_default() {
            self.pending.remove(&(to, msg.digest()));
            inbox.entry(to).or_default().push(msg);
        }
        let faulty_inbox: BTreeMap<_, _> = self
            .faulty
            .iter()
            .filter_map(|p| inbox.remove(p).map(|m| (*p, m)))
            .map(|(p, msgs)| {
                let fresh: Vec<_> = msgs
                    .into_iter()
                    .filter(|m| self.faulty_has.insert((p, m.digest())))
                    .collect();
                (p, fresh)
            })
            .collect();

        let world = World {
            t,
            model: self.model,
            faulty: &self.faulty,
            nodes: &self.nodes,
            correct_msgs: &self.correct_msgs,
        };
        let emissions = self.adversary.step(&world, faulty_inbox);
        self.inject(t, emissions);

        let ids: Vec<ProcessId> = self.nodes.keys().copied().collect();
        let mut mc_changed = false;
        for p in ids {
            let msgs = inbox.remove(&p).unwrap_or_default();
            mc_changed |= self.step_node(t, p, msgs);
        }
        if mc_changed {
            self.observe_correct(t);
        }
    }

    /// Schedules adversarial messages after checking they carry no signature a
    /// correct process never produced.
    fn inject(&mut self, t: Timeslot, emissions: Vec<Emission>) {
        let mut grouped: BTreeMap<(ProcessId, Vec<ProcessId>), Vec<Message>> = BTreeMap::new();
        for e in emissions {
            if !self.capable(&e.msg) {
                self.rejected += 1;
                continue;
            }
            for &to in &e.to {
                let at = schedule_delivery(&self.model, t, e.from, to, e.at);
                self.enqueue(to, e.msg.clone(), at.max(t + 1));
            }
            grouped.entry((e.from, e.to)).or_default().push(e.msg);
        }
        for ((from, to), msgs) in grouped {
            self.record_send(t, from, Some(to), &msgs);
        }
    }

    fn capable(&self, msg: &Message) -> bool {
        let mut ok = true;
        msg.payload().visit_signatures(&mut |signer, d| {
            if !self.faulty.contains(&signer) && !self.correct_signed.contains(&d) {
                ok = false;
            }
        });
        if let Payload::Tx(tx) = msg.payload() {
            ok &= self.correct_msgs.txs().contains(tx);
        }
        ok
    }

    fn enqueue(&mut self, to: ProcessId, msg: Message, at: Timeslot) {
        let key = (to, msg.digest());
        if let Some(node) = self.nodes.get(&to) {
            if node.state.msgs.contains(&key.1) {
                return;
            }
        } else if self.faulty_has.contains(&key) {
            return;
        }
        if self.pending.get(&key).is_some_and(|&due| due <= at) {
            return;
        }
        self.pending.insert(key, at);
        self.queue.entry(at).or_default().push((to, msg));
    }

    /// Runs one correct process. Returns whether its received set grew.
    fn step_node(&mut self, t: Timeslot, p: ProcessId, inbox: Vec<Message>) -> bool {
        let node = self.nodes.get_mut(&p).expect("correct node");
        if !node.started(t) {
            node.buffered.extend(inbox);
            return false;
        }
        let mut fresh = std::mem::take(&mut node.buffered);
        fresh.extend(inbox);
        let mut seen = HashSet::new();
        fresh.retain(|m| !node.state.msgs.contains(&m.digest()) && seen.insert(m.digest()));
        let local = t - node.offset;
        let out = wrapper_step(&node.proc, &mut node.state, local, fresh.iter().cloned());
        let grew = !fresh.is_empty() || !out.outbox.is_empty();
        if !fresh.is_empty() {
            self.deliveries += fresh.len() as u64;
            let payloads = fresh
                .iter()
                .filter(|m| self.published.insert(m.digest()))
                .cloned()
                .collect();
            self.writer.push(TraceRecord::Deliver {
                t,
                to: p,
                msgs: fresh.iter().map(Message::digest).collect(),
                payloads,
            });
        }
        if !out.outbox.is_empty() {
            for m in &out.outbox {
                m.payload().visit_signatures(&mut |_, d| {
                    self.correct_signed.insert(d);
                });
            }
            self.record_send(t, p, None, &out.outbox);
        }
        for ev in out.events {
            self.writer.push(match ev {
                WrapperEvent::RecoveryBegin { r } => TraceRecord::RecoveryBegin { t, process: p, r },
                WrapperEvent::RecoveryEnd {
                    r,
                    removed,
                    genesis,
                } => TraceRecord::RecoveryEnd {
                    t,
                    process: p,
                    r,
                    removed,
                    genesis,
                },
                WrapperEvent::LeaderOutOfRange { .. } => continue,
            });
        }
        self.record_state(t, p, grew);
        for m in fresh.iter().chain(&out.outbox) {
            self.correct_msgs.insert(m.clone());
        }
        let targets: Vec<ProcessId> = self.pi.iter().copied().filter(|&q| q != p).collect();
        for m in out.outbox.iter().chain(&fresh) {
            for &q in &targets {
                let choice = if self.nodes.contains_key(&q) {
                    let world = World {
                        t,
                        model: self.model,
                        faulty: &self.faulty,
                        nodes: &self.nodes,
                        correct_msgs: &self.correct_msgs,
                    };
                    self.adversary.route(&world, p, q, m).or_else(|| self.policy_choice(t))
                } else {
                    Some(t + 1)
                };
                let at = schedule_delivery(&self.model, t, p, q, choice);
                self.enqueue(q, m.clone(), at);
            }
        }
        grew
    }

    fn policy_choice(&mut self, t: Timeslot) -> Option<Timeslot> {
        let latest = self.model.latest(t);
        match self.config.delays {
            config::DelayPolicy::Max => None,
            config::DelayPolicy::Min => Some(t + 1),
            config::DelayPolicy::Uniform => Some(self.rng.gen_range(t + 1..=latest)),
        }
    }

    fn record_send(&mut self, t: Timeslot, from: ProcessId, to: Option<Vec<ProcessId>>, msgs: &[Message]) {
        self.messages += msgs.len() as u64;
        let payloads = msgs
            .iter()
            .filter(|m| self.published.insert(m.digest()))
            .cloned()
            .collect();
        self.writer.push(TraceRecord::Send {
            t,
            from,
            to,
            msgs: msgs.iter().map(Message::digest).collect(),
            payloads,
        });
    }

    fn record_state(&mut self, t: Timeslot, p: ProcessId, msgs_changed: bool) {
        let node = self.nodes.get_mut(&p).expect("correct node");
        let s = &node.state;
        let now = (s.r, s.rec, s.log.clone(), s.log_star.clone());
        let changed = node.last.as_ref() != Some(&now);
        if self.opts.check_agreement {
            self.agreement_checks += 1;
            if changed || msgs_changed {
                let expected = global_f(&s.msgs, &node.proc.pi, &node.proc.log_g).log;
                if expected != s.log {
                    self.agreement_mismatches += 1;
                }
            }
        }
        if changed {
            self.writer.push(TraceRecord::State {
                t,
                process: p,
                local_t: t - node.offset,
                r: now.0,
                rec: now.1,
                log: now.2.clone(),
                log_star: now.3.clone(),
            });
            node.last = Some(now);
        }
    }

    /// Tracks violations in the union of the correct processes' messages.
    fn observe_correct(&mut self, t: Timeslot) {
        let result = global_f(&self.correct_msgs, &self.pi, &self.log_g);
        for exec in &result.per_r {
            if exec.violated && self.violated.insert(exec.r) {
                let inst = crate::base::Instance::new(
                    exec.r,
                    exec.members.clone(),
                    exec.genesis.clone(),
                );
                let culprits = guilty_set(&inst, &self.correct_msgs);
                self.writer.push(TraceRecord::Violation { t, r: exec.r, culprits });
            }
        }
        if self.chain_logs.last() != Some(&result.log) {
            self.chain_logs.push(result.log);
        }
    }

    fn finish(self) -> Trace {
        let summary = TraceSummary {
            finish_qc_proposals: finish_qc_counts(&self.correct_msgs, &self.pi, &self.log_g),
            ..self.summary_fields()
        };
        self.writer.finish(summary)
    }

    fn summary_fields(&self) -> TraceSummary {
        TraceSummary {
            t: self.config.horizon,
            config: self.config.clone(),
            faulty: self.faulty.clone(),
            pi_star: self.pi_star.order().to_vec(),
            violations: self.violated.len(),
            chain_violations: longest_break_chain(&self.chain_logs),
            agreement_mismatches: self.agreement_mismatches,
            agreement_checks: self.agreement_checks,
            rejected_emissions: self.rejected,
            messages: self.messages,
            deliveries: self.deliveries,
            digest: self.writer.digest(),
            full: self.opts.recording == Recording::Full,
            finish_qc_proposals: BTreeMap::new(),
        }
    }
}

/// Per violated execution of `msgs`, how many distinct proposals hold a valid
/// finish-QC.
pub fn finish_qc_counts(msgs: &MessageSet, pi: &BTreeSet<ProcessId>, log_g: &Log) -> BTreeMap<u32, usize> {
    global_f(msgs, pi, log_g)
        .per_r
        .iter()
        .filter(|e| e.violated)
        .map(|e| {
            let distinct: BTreeSet<Digest> = finish_qcs(msgs, e.r, &e.members)
                .iter()
                .map(|q| q.proposal.digest())
                .collect();
            (e.r, distinct.len())
        })
        .collect()
}
