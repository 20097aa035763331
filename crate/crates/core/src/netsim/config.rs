//! Scenario configuration and the delay envelope.

use std::collections::{BTreeMap, BTreeSet};

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::adversary::StrategyConfig;
use crate::types::{process_set, ProcessId, Timeslot, Transaction};

/// Which processes the adversary corrupts.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FaultySpec {
    /// Exactly these 1-based indices.
    Explicit(Vec<u16>),
    /// This many, drawn with the scenario seed.
    Count(usize),
}

/// How the adversary times messages between correct processes when its
/// strategy expresses no preference. Every choice is clamped to the envelope.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DelayPolicy {
    /// Uniform over the allowed delays.
    #[default]
    Uniform,
    /// Always the latest allowed slot.
    Max,
    /// Always the next slot.
    Min,
}

/// One transaction handed to one process.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxArrival {
    pub t: Timeslot,
    pub process: u16,
    pub payload: String,
}

/// A regular stream of transactions `tx-0, tx-1, ...`, handed round-robin to
/// the processes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct TxStream {
    pub every: Timeslot,
    #[serde(default)]
    pub from: Timeslot,
    pub until: Timeslot,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ScenarioConfig {
    pub n: usize,
    pub faulty: FaultySpec,
    pub delta: Timeslot,
    /// Bound on every delay, before GST included. Absent means pure partial
    /// synchrony.
    #[serde(default)]
    pub delta_star: Option<Timeslot>,
    #[serde(default)]
    pub gst: Timeslot,
    pub horizon: Timeslot,
    /// Global slot at which each process's local clock reads 0, by index.
    #[serde(default)]
    pub start_offsets: BTreeMap<u16, Timeslot>,
    #[serde(default)]
    pub tx_schedule: Vec<TxArrival>,
    #[serde(default)]
    pub tx_stream: Option<TxStream>,
    #[serde(default)]
    pub strategy: StrategyConfig,
    #[serde(default)]
    pub delays: DelayPolicy,
    /// Leader permutation `Π*`, as 1-based indices. Drawn from the seed when
    /// absent.
    #[serde(default)]
    pub permutation: Option<Vec<u16>>,
    pub seed: u64,
}

#[derive(Clone, Debug, PartialEq, Eq, Error)]
pub enum ConfigError {
    #[error("n must be positive")]
    EmptySystem,
    #[error("faulty count {0} must be below n = {1}")]
    TooManyFaulty(usize, usize),
    #[error("process index {0} outside 1..={1}")]
    UnknownProcess(u16, usize),
    #[error("delta must be positive and at most delta_star")]
    BadDelta,
    #[error("start offset {0} of p{1} exceeds delta_star")]
    LateStart(Timeslot, u16),
    #[error("permutation is not a bijection on the process set")]
    BadPermutation,
    #[error("tx stream period must be positive")]
    BadStream,
}

impl ScenarioConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.n == 0 {
            return Err(ConfigError::EmptySystem);
        }
        let check = |i: u16| {
            if i == 0 || i as usize > self.n {
                Err(ConfigError::UnknownProcess(i, self.n))
            } else {
                Ok(())
            }
        };
        match &self.faulty {
            FaultySpec::Explicit(ids) => {
                ids.iter().try_for_each(|&i| check(i))?;
                let distinct: BTreeSet<_> = ids.iter().collect();
                if distinct.len() >= self.n {
                    return Err(ConfigError::TooManyFaulty(distinct.len(), self.n));
                }
            }
            FaultySpec::Count(c) if *c >= self.n => return Err(ConfigError::TooManyFaulty(*c, self.n)),
            FaultySpec::Count(_) => {}
        }
        if self.delta == 0 || self.delta_star.is_some_and(|ds| ds < self.delta) {
            return Err(ConfigError::BadDelta);
        }
        for (&i, &off) in &self.start_offsets {
            check(i)?;
            if self.delta_star.is_some_and(|ds| off > ds) {
                return Err(ConfigError::LateStart(off, i));
            }
        }
        for tx in &self.tx_schedule {
            check(tx.process)?;
        }
        if self.tx_stream.is_some_and(|s| s.every == 0) {
            return Err(ConfigError::BadStream);
        }
        if let Some(order) = &self.permutation {
            let distinct: BTreeSet<_> = order.iter().collect();
            if order.len() != self.n || distinct.len() != self.n || order.iter().any(|&i| check(i).is_err()) {
                return Err(ConfigError::BadPermutation);
            }
        }
        Ok(())
    }

    pub fn processes(&self) -> Vec<ProcessId> {
        process_set(self.n)
    }

    /// The corrupted set. A seeded draw when only a count is given.
    pub fn faulty_set(&self) -> BTreeSet<ProcessId> {
        match &self.faulty {
            FaultySpec::Explicit(ids) => ids.iter().map(|&i| ProcessId(i)).collect(),
            FaultySpec::Count(c) => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.seed ^ 0xfa17);
                let mut all = self.processes();
                all.shuffle(&mut rng);
                all.into_iter().take(*c).collect()
            }
        }
    }

    pub fn offset(&self, p: ProcessId) -> Timeslot {
        self.start_offsets.get(&p.0).copied().unwrap_or(0)
    }

    /// Every transaction arrival, sorted by time.
    pub fn arrivals(&self) -> Vec<(Timeslot, ProcessId, Transaction)> {
        let mut out: Vec<_> = self
            .tx_schedule
            .iter()
            .map(|a| (a.t, ProcessId(a.process), Transaction::new(a.payload.as_bytes())))
            .collect();
        if let Some(s) = self.tx_stream {
            let mut t = s.from;
            let mut k = 0usize;
            while t <= s.until.min(self.horizon) {
                let p = ProcessId((k % self.n) as u16 + 1);
                out.push((t, p, Transaction::new(format!("tx-{k}"))));
                t += s.every;
                k += 1;
            }
        }
        out.sort_by_key(|a| a.0);
        out
    }

    pub fn delay_model(&self) -> DelayModel {
        DelayModel {
            delta: self.delta,
            delta_star: self.delta_star,
            gst: self.gst,
        }
    }
}

/// The timing envelope every delivery respects.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct DelayModel {
    pub delta: Timeslot,
    pub delta_star: Option<Timeslot>,
    pub gst: Timeslot,
}

impl DelayModel {
    /// Latest allowed delivery of a message sent at `send_time`.
    pub fn latest(&self, send_time: Timeslot) -> Timeslot {
        let post_gst = send_time.max(self.gst) + self.delta;
        match self.delta_star {
            Some(ds) => post_gst.min(send_time + ds),
            None => post_gst,
        }
    }

    pub fn allows(&self, send_time: Timeslot, at: Timeslot, self_send: bool) -> bool {
        if self_send {
            return at == send_time;
        }
        at > send_time && at <= self.latest(send_time)
    }
}

/// Delivery slot of a message: the adversary's choice (`None` meaning "as late
/// as possible") clamped into the envelope. Self-sends arrive immediately.
///
/// ```
/// use smr_recovery::netsim::{schedule_delivery, DelayModel};
/// use smr_recovery::ProcessId;
///
/// let m = DelayModel { delta: 2, delta_star: Some(10), gst: 100 };
/// assert_eq!(schedule_delivery(&m, 5, ProcessId(1), ProcessId(2), None), 15);
/// assert_eq!(schedule_delivery(&m, 5, ProcessId(1), ProcessId(1), None), 5);
/// ```
pub fn schedule_delivery(
    model: &DelayModel,
    send_time: Timeslot,
    src: ProcessId,
    dst: ProcessId,
    choice: Option<Timeslot>,
) -> Timeslot {
    if src == dst {
        return send_time;
    }
    let latest = model.latest(send_time);
    choice.unwrap_or(latest).clamp(send_time + 1, latest)
}

#[cfg(test)]
mod tests {
    use super::*;

    const A: ProcessId = ProcessId(1);
    const B: ProcessId = ProcessId(2);

    #[test]
    fn envelope_before_and_after_gst() {
        let m = DelayModel { delta: 2, delta_star: Some(10), gst: 100 };
        assert_eq!(m.latest(5), 15);
        assert_eq!(m.latest(95), 102);
        assert_eq!(m.latest(200), 202);
        let async_only = DelayModel { delta_star: None, ..m };
        assert_eq!(async_only.latest(5), 102);
    }

    #[test]
    fn choices_are_clamped() {
        let m = DelayModel { delta: 2, delta_star: Some(10), gst: 0 };
        assert_eq!(schedule_delivery(&m, 7, A, B, Some(0)), 8);
        assert_eq!(schedule_delivery(&m, 7, A, B, Some(8)), 8);
        assert_eq!(schedule_delivery(&m, 7, A, B, Some(u64::MAX)), 9);
        assert_eq!(schedule_delivery(&m, 7, A, A, Some(20)), 7);
        assert!(m.allows(7, 9, false));
        assert!(!m.allows(7, 7, false));
        assert!(!m.allows(7, 10, false));
        assert!(m.allows(7, 7, true));
    }

    #[test]
    fn config_round_trips_and_validates() {
        let text = r#"{"n": 4, "faulty": {"count": 1}, "delta": 1, "horizon": 50,
                       "tx_stream": {"every": 5, "until": 20}, "seed": 3}"#;
        let cfg: ScenarioConfig = serde_json::from_str(text).unwrap();
        cfg.validate().unwrap();
        assert_eq!(cfg.faulty_set().len(), 1);
        assert_eq!(cfg.faulty_set(), cfg.faulty_set());
        let back: ScenarioConfig = serde_json::from_str(&serde_json::to_string(&cfg).unwrap()).unwrap();
        assert_eq!(back, cfg);
        let arrivals = cfg.arrivals();
        assert!(!arrivals.is_empty() && arrivals.iter().all(|(t, _, _)| *t <= 20));
    }

    #[test]
    fn invalid_configs_are_rejected() {
        let base: ScenarioConfig =
            serde_json::from_str(r#"{"n": 4, "faulty": {"explicit": [1]}, "delta": 1, "horizon": 50, "seed": 0}"#)
                .unwrap();
        let too_many = ScenarioConfig { faulty: FaultySpec::Count(4), ..base.clone() };
        assert!(too_many.validate().is_err());
        let stranger = ScenarioConfig { faulty: FaultySpec::Explicit(vec![9]), ..base.clone() };
        assert!(stranger.validate().is_err());
        let bad_perm = ScenarioConfig { permutation: Some(vec![1, 1, 2, 3]), ..base };
        assert!(bad_perm.validate().is_err());
    }
}
