//! Deterministic discrete-event core: clock, time-ordered queue and labeled
//! random-number streams.
//!
//! Events are ordered by `(fire_time, seq)`. `seq` is a monotone insertion
//! counter, so events scheduled for the same instant fire in FIFO order and a
//! run is a pure function of its configuration and seed.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

use rand::{RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde::Serialize;
use sha2::{Digest, Sha256};

use crate::ids::{BlockId, ClientId, MinerId, TxId};

/// Simulated time in seconds.
pub type SimTime = f64;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EventKind {
    MineBlock { miner: MinerId },
    ReceiveBlock { miner: MinerId, block: BlockId },
    /// `from_client` marks the upload leg from an attached device; peer
    /// relays carry `false`.
    ReceiveTx { miner: MinerId, tx: TxId, from_client: bool },
    ClientTrainDone { client: ClientId },
    ClientBlockDelivered { client: ClientId, block: BlockId },
    SimStop,
}

impl EventKind {
    pub fn name(&self) -> &'static str {
        match self {
            EventKind::MineBlock { .. } => "mine_block",
            EventKind::ReceiveBlock { .. } => "receive_block",
            EventKind::ReceiveTx { .. } => "receive_tx",
            EventKind::ClientTrainDone { .. } => "client_train_done",
            EventKind::ClientBlockDelivered { .. } => "client_block_delivered",
            EventKind::SimStop => "sim_stop",
        }
    }

    /// `(actor, object)` ids for trace export.
    fn trace_ids(&self) -> (Option<String>, Option<String>) {
        match *self {
            EventKind::MineBlock { miner } => (Some(miner.to_string()), None),
            EventKind::ReceiveBlock { miner, block } => {
                (Some(miner.to_string()), Some(block.to_string()))
            }
            EventKind::ReceiveTx { miner, tx, .. } => (Some(miner.to_string()), Some(tx.to_string())),
            EventKind::ClientTrainDone { client } => (Some(client.to_string()), None),
            EventKind::ClientBlockDelivered { client, block } => {
                (Some(client.to_string()), Some(block.to_string()))
            }
            EventKind::SimStop => (None, None),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct EventId(pub u64);

#[derive(Clone, Copy, Debug)]
pub struct Event {
    pub seq: u64,
    pub fire_time: SimTime,
    pub kind: EventKind,
}

impl PartialEq for Event {
    fn eq(&self, other: &Self) -> bool {
        self.cmp(other) == Ordering::Equal
    }
}

impl Eq for Event {}

impl PartialOrd for Event {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}

impl Ord for Event {
    // Reversed so that `BinaryHeap` pops the minimum `(fire_time, seq)`.
    fn cmp(&self, other: &Self) -> Ordering {
        other
            .fire_time
            .total_cmp(&self.fire_time)
            .then_with(|| other.seq.cmp(&self.seq))
    }
}

/// One line of the optional event trace.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct TraceRecord {
    pub time: SimTime,
    pub seq: u64,
    pub kind: &'static str,
    pub actor: Option<String>,
    pub object: Option<String>,
}

/// Clock plus pending-event queue.
#[derive(Debug, Default)]
pub struct Scheduler {
    now: SimTime,
    next_seq: u64,
    queue: BinaryHeap<Event>,
    dispatched: u64,
    trace: Option<Vec<TraceRecord>>,
}

impl Scheduler {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn with_trace() -> Self {
        Self {
            trace: Some(Vec::new()),
            ..Self::default()
        }
    }

    pub fn now(&self) -> SimTime {
        self.now
    }

    pub fn pending(&self) -> usize {
        self.queue.len()
    }

    pub fn dispatched(&self) -> u64 {
        self.dispatched
    }

    /// Enqueue `kind` to fire at absolute time `at`.
    ///
    /// Scheduling in the past (or at a NaN time) is a programming error and
    /// panics.
    pub fn schedule(&mut self, at: SimTime, kind: EventKind) -> EventId {
        assert!(
            at >= self.now,
            "event {} scheduled in the past: at={at} now={}",
            kind.name(),
            self.now
        );
        let seq = self.next_seq;
        self.next_seq += 1;
        self.queue.push(Event {
            seq,
            fire_time: at,
            kind,
        });
        EventId(seq)
    }

    pub fn schedule_in(&mut self, delay: SimTime, kind: EventKind) -> EventId {
        self.schedule(self.now + delay, kind)
    }

    /// Pop the minimum `(fire_time, seq)` event and advance the clock to it.
    pub fn next(&mut self) -> Option<Event> {
        let event = self.queue.pop()?;
        debug_assert!(event.fire_time >= self.now);
        self.now = event.fire_time;
        self.dispatched += 1;
        if let Some(trace) = self.trace.as_mut() {
            let (actor, object) = event.kind.trace_ids();
            trace.push(TraceRecord {
                time: event.fire_time,
                seq: event.seq,
                kind: event.kind.name(),
                actor,
                object,
            });
        }
        Some(event)
    }

    pub fn trace(&self) -> Option<&[TraceRecord]> {
        self.trace.as_deref()
    }

    pub fn take_trace(&mut self) -> Option<Vec<TraceRecord>> {
        self.trace.take()
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Dispatch {
    Handled,
    Unhandled,
}

pub trait EventHandler {
    fn handle(&mut self, sched: &mut Scheduler, event: &Event) -> Dispatch;
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RunOutcome {
    /// The stop predicate became true.
    Stopped,
    /// The queue ran dry first.
    Exhausted,
}

/// Dispatch events in `(fire_time, seq)` order until `stop` holds or the
/// queue is empty. `stop` is evaluated before every dispatch.
///
/// Panics if the handler reports an event kind it does not handle.
pub fn run_until<H, F>(sched: &mut Scheduler, handler: &mut H, mut stop: F) -> RunOutcome
where
    H: EventHandler + ?Sized,
    F: FnMut(&H, &Scheduler) -> bool,
{
    loop {
        if stop(handler, sched) {
            return RunOutcome::Stopped;
        }
        let Some(event) = sched.next() else {
            return RunOutcome::Exhausted;
        };
        if handler.handle(sched, &event) == Dispatch::Unhandled {
            panic!("no handler for event {:?} at t={}", event.kind, event.fire_time);
        }
    }
}

/// Deterministic generator keyed by `(global seed, label)`.
#[derive(Clone, Debug)]
pub struct RngStream {
    label: String,
    inner: ChaCha8Rng,
}

impl RngStream {
    pub fn new(seed: u64, label: &str) -> Self {
        Self {
            label: label.to_owned(),
            inner: ChaCha8Rng::from_seed(derive_seed(seed, label.as_bytes())),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }
}

impl RngCore for RngStream {
    fn next_u32(&mut self) -> u32 {
        self.inner.next_u32()
    }

    fn next_u64(&mut self) -> u64 {
        self.inner.next_u64()
    }

    fn fill_bytes(&mut self, dst: &mut [u8]) {
        self.inner.fill_bytes(dst)
    }
}

/// Factory for labeled streams under one global seed.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct RngStreams {
    seed: u64,
}

impl RngStreams {
    pub fn new(seed: u64) -> Self {
        Self { seed }
    }

    pub fn seed(&self) -> u64 {
        self.seed
    }

    pub fn stream(&self, label: &str) -> RngStream {
        RngStream::new(self.seed, label)
    }
}

fn derive_seed(seed: u64, label: &[u8]) -> [u8; 32] {
    let mut hasher = Sha256::new();
    hasher.update(b"flchain-rng/v1");
    hasher.update(seed.to_le_bytes());
    hasher.update((label.len() as u64).to_le_bytes());
    hasher.update(label);
    let digest = hasher.finalize();
    let mut out = [0u8; 32];
    out.copy_from_slice(&digest);
    out
}

/// Stable 64-bit value derived from a seed and an index; used for per-run
/// seeds in sweeps.
pub fn derive_u64(seed: u64, index: u64) -> u64 {
    let bytes = derive_seed(seed, &index.to_le_bytes());
    u64::from_le_bytes(bytes[..8].try_into().expect("8 bytes"))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    fn stop_kind() -> EventKind {
        EventKind::SimStop
    }

    fn mine(m: u32) -> EventKind {
        EventKind::MineBlock { miner: MinerId(m) }
    }

    #[test]
    fn single_event_fires_at_its_time() {
        let mut s = Scheduler::new();
        s.schedule(5.0, stop_kind());
        let ev = s.next().unwrap();
        assert_eq!(ev.fire_time, 5.0);
        assert_eq!(s.now(), 5.0);
        assert!(s.next().is_none());
    }

    #[test]
    fn equal_times_pop_fifo() {
        let mut s = Scheduler::new();
        s.schedule(5.0, mine(1));
        s.schedule(5.0, mine(2));
        assert_eq!(s.next().unwrap().kind, mine(1));
        assert_eq!(s.next().unwrap().kind, mine(2));
    }

    #[test]
    fn pops_in_time_order() {
        let mut s = Scheduler::new();
        s.schedule(3.0, mine(1));
        s.schedule(1.0, mine(2));
        let first = s.next().unwrap();
        assert_eq!((first.fire_time, first.kind), (1.0, mine(2)));
        let second = s.next().unwrap();
        assert_eq!((second.fire_time, second.kind), (3.0, mine(1)));
        assert!(s.next().is_none());
    }

    #[test]
    fn lower_seq_wins_tie() {
        let a = Event { seq: 7, fire_time: 2.0, kind: mine(7) };
        let b = Event { seq: 4, fire_time: 2.0, kind: mine(4) };
        let mut heap = BinaryHeap::new();
        heap.push(a);
        heap.push(b);
        assert_eq!(heap.pop().unwrap().seq, 4);
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn past_scheduling_panics() {
        let mut s = Scheduler::new();
        s.schedule(-1.0, stop_kind());
    }

    #[test]
    #[should_panic(expected = "scheduled in the past")]
    fn nan_scheduling_panics() {
        let mut s = Scheduler::new();
        s.schedule(f64::NAN, stop_kind());
    }

    struct Counter {
        seen: Vec<(f64, u64)>,
        depth: u32,
    }

    impl EventHandler for Counter {
        fn handle(&mut self, sched: &mut Scheduler, event: &Event) -> Dispatch {
            match event.kind {
                EventKind::MineBlock { .. } => {
                    self.depth += 1;
                    self.seen.push((event.fire_time, event.seq));
                    sched.schedule_in(1.0, event.kind);
                    Dispatch::Handled
                }
                _ => Dispatch::Unhandled,
            }
        }
    }

    #[test]
    fn run_until_depth_target() {
        let mut s = Scheduler::new();
        s.schedule(0.5, mine(0));
        let mut h = Counter { seen: vec![], depth: 0 };
        let outcome = run_until(&mut s, &mut h, |h, _| h.depth >= 50);
        assert_eq!(outcome, RunOutcome::Stopped);
        assert_eq!(h.depth, 50);
        assert!(h.seen.windows(2).all(|w| w[0].0 <= w[1].0 && w[0].1 < w[1].1));
    }

    #[test]
    fn run_until_immediate_stop() {
        let mut s = Scheduler::new();
        s.schedule(1.0, mine(0));
        let mut h = Counter { seen: vec![], depth: 0 };
        let outcome = run_until(&mut s, &mut h, |_, s| s.now() >= 0.0);
        assert_eq!(outcome, RunOutcome::Stopped);
        assert!(h.seen.is_empty());
        assert_eq!(s.pending(), 1);
    }

    struct Sink(usize);

    impl EventHandler for Sink {
        fn handle(&mut self, _: &mut Scheduler, _: &Event) -> Dispatch {
            self.0 += 1;
            Dispatch::Handled
        }
    }

    #[test]
    fn run_until_exhausts_queue() {
        let mut s = Scheduler::new();
        for t in [3.0, 1.0, 2.0] {
            s.schedule(t, stop_kind());
        }
        let mut h = Sink(0);
        assert_eq!(run_until(&mut s, &mut h, |_, _| false), RunOutcome::Exhausted);
        assert_eq!(h.0, 3);
        assert_eq!(s.now(), 3.0);
    }

    #[test]
    #[should_panic(expected = "no handler")]
    fn unhandled_kind_panics() {
        let mut s = Scheduler::new();
        s.schedule(1.0, stop_kind());
        let mut h = Counter { seen: vec![], depth: 0 };
        run_until(&mut s, &mut h, |_, _| false);
    }

    #[test]
    fn trace_records_dispatch_order() {
        let mut s = Scheduler::with_trace();
        s.schedule(2.0, EventKind::ReceiveBlock { miner: MinerId(3), block: BlockId(9) });
        s.schedule(1.0, mine(1));
        while s.next().is_some() {}
        let trace = s.trace().unwrap();
        assert_eq!(trace.len(), 2);
        assert_eq!(trace[0].kind, "mine_block");
        assert_eq!(trace[1].actor.as_deref(), Some("m3"));
        assert_eq!(trace[1].object.as_deref(), Some("b9"));
    }

    fn draws(seed: u64, label: &str) -> Vec<u64> {
        let mut r = RngStream::new(seed, label);
        (0..100).map(|_| r.random()).collect()
    }

    #[test]
    fn streams_are_reproducible() {
        assert_eq!(draws(1, "mining"), draws(1, "mining"));
    }

    #[test]
    fn streams_depend_on_seed_and_label() {
        assert_ne!(draws(1, "mining"), draws(2, "mining"));
        assert_ne!(draws(1, "a"), draws(1, "b"));
    }
}
