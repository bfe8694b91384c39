//! Miner mesh, client access links, mining-time sampling and broadcast
//! scheduling.

use std::collections::HashSet;
use std::fmt;

use rand::Rng;
use rand_distr::{Distribution, Exp};
use serde::{Deserialize, Deserializer, Serialize, Serializer};

use crate::des::{EventKind, Scheduler, SimTime};
use crate::ids::{BlockId, ClientId, MinerId, TxId};

/// Link capacity in bits per second.
#[derive(Clone, Copy, Debug, PartialEq)]
pub enum Capacity {
    Finite(f64),
    Infinite,
}

impl Capacity {
    pub fn is_infinite(&self) -> bool {
        matches!(self, Capacity::Infinite)
    }
}

impl fmt::Display for Capacity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            Capacity::Finite(bps) => write!(f, "{bps}"),
            Capacity::Infinite => f.write_str("inf"),
        }
    }
}

/// Seconds to push `size_bits` through a link of the given capacity.
pub fn transfer_delay(size_bits: f64, capacity: Capacity) -> SimTime {
    debug_assert!(size_bits >= 0.0);
    match capacity {
        Capacity::Infinite => 0.0,
        Capacity::Finite(bps) => {
            debug_assert!(bps > 0.0);
            size_bits / bps
        }
    }
}

/// Megabits-per-second view of a [`Capacity`] for config files: a number or
/// the string `"inf"`.
#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Mbps(pub Capacity);

impl Mbps {
    pub fn capacity(self) -> Capacity {
        self.0
    }
}

impl Serialize for Mbps {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self.0 {
            Capacity::Infinite => s.serialize_str("inf"),
            Capacity::Finite(bps) => s.serialize_f64(bps / 1e6),
        }
    }
}

impl<'de> Deserialize<'de> for Mbps {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Num(f64),
            Int(i64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Num(v) => Ok(Mbps(Capacity::Finite(v * 1e6))),
            Raw::Int(v) => Ok(Mbps(Capacity::Finite(v as f64 * 1e6))),
            Raw::Str(s) if matches!(s.trim().to_ascii_lowercase().as_str(), "inf" | "infinity") => {
                Ok(Mbps(Capacity::Infinite))
            }
            Raw::Str(s) => Err(serde::de::Error::custom(format!(
                "expected a number of Mbps or \"inf\", got {s:?}"
            ))),
        }
    }
}

/// Fully connected miner mesh plus client attachments.
#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct Topology {
    pub miners: u32,
    pub clients: u32,
    /// `attach[c]` is the miner serving client `c`.
    pub attach: Vec<MinerId>,
    #[serde(skip)]
    pub p2p: Capacity,
    #[serde(skip)]
    pub client_link: Capacity,
    #[serde(skip)]
    by_miner: Vec<Vec<ClientId>>,
}

impl Topology {
    /// Attach each client to a uniformly random miner.
    pub fn random<R: Rng + ?Sized>(
        miners: u32,
        clients: u32,
        p2p: Capacity,
        client_link: Capacity,
        rng: &mut R,
    ) -> Self {
        let attach = (0..clients)
            .map(|_| MinerId(rng.random_range(0..miners)))
            .collect();
        Self::with_attachment(miners, attach, p2p, client_link)
    }

    pub fn with_attachment(
        miners: u32,
        attach: Vec<MinerId>,
        p2p: Capacity,
        client_link: Capacity,
    ) -> Self {
        assert!(miners >= 1, "need at least one miner");
        assert!(!attach.is_empty(), "need at least one client");
        let mut by_miner = vec![Vec::new(); miners as usize];
        for (c, m) in attach.iter().enumerate() {
            assert!(m.0 < miners, "client {c} attached to unknown miner {m}");
            by_miner[m.index()].push(ClientId(c as u32));
        }
        Self {
            miners,
            clients: attach.len() as u32,
            attach,
            p2p,
            client_link,
            by_miner,
        }
    }

    pub fn miner_of(&self, client: ClientId) -> MinerId {
        self.attach[client.index()]
    }

    pub fn clients_of(&self, miner: MinerId) -> &[ClientId] {
        &self.by_miner[miner.index()]
    }

    pub fn peers(&self, miner: MinerId) -> impl Iterator<Item = MinerId> {
        (0..self.miners).map(MinerId).filter(move |&m| m != miner)
    }
}

/// Per-miner exponential mining timers.
#[derive(Clone, Debug, PartialEq)]
pub struct MiningProcess {
    /// Mean network-wide block interval in seconds.
    pub block_interval: f64,
    pub hashpower: Vec<f64>,
}

impl MiningProcess {
    pub fn uniform(miners: u32, block_interval: f64) -> Self {
        Self::with_hashpower(block_interval, vec![1.0 / miners as f64; miners as usize])
    }

    pub fn with_hashpower(block_interval: f64, hashpower: Vec<f64>) -> Self {
        let total: f64 = hashpower.iter().sum();
        assert!((total - 1.0).abs() < 1e-9, "hashpower shares sum to {total}");
        assert!(block_interval > 0.0);
        Self {
            block_interval,
            hashpower,
        }
    }

    pub fn mean_time(&self, miner: MinerId) -> f64 {
        self.block_interval / self.hashpower[miner.index()]
    }

    /// Delay until `miner` solves its next block.
    pub fn sample_mining_time<R: Rng + ?Sized>(&self, miner: MinerId, rng: &mut R) -> SimTime {
        let rate = 1.0 / self.mean_time(miner);
        Exp::new(rate).expect("positive rate").sample(rng)
    }
}

/// Send-once bookkeeping for block and transaction gossip.
#[derive(Clone, Debug)]
pub struct Gossip {
    sent_blocks: Vec<HashSet<BlockId>>,
    sent_txs: Vec<HashSet<TxId>>,
    /// Extra per-hop latency for block validation at the receiver.
    pub verification_delay: SimTime,
}

impl Gossip {
    pub fn new(miners: u32, verification_delay: SimTime) -> Self {
        Self {
            sent_blocks: vec![HashSet::new(); miners as usize],
            sent_txs: vec![HashSet::new(); miners as usize],
            verification_delay,
        }
    }

    /// Schedule `ReceiveBlock` at every peer of `origin`. Returns the number
    /// of events scheduled; repeated calls for the same block schedule none.
    pub fn broadcast_block(
        &mut self,
        sched: &mut Scheduler,
        topo: &Topology,
        origin: MinerId,
        block: BlockId,
        size_bits: f64,
    ) -> usize {
        if !self.sent_blocks[origin.index()].insert(block) {
            return 0;
        }
        let delay = transfer_delay(size_bits, topo.p2p) + self.verification_delay;
        let mut n = 0;
        for peer in topo.peers(origin) {
            sched.schedule_in(delay, EventKind::ReceiveBlock { miner: peer, block });
            n += 1;
        }
        n
    }

    pub fn broadcast_tx(
        &mut self,
        sched: &mut Scheduler,
        topo: &Topology,
        origin: MinerId,
        tx: TxId,
        size_bits: f64,
    ) -> usize {
        if !self.sent_txs[origin.index()].insert(tx) {
            return 0;
        }
        let delay = transfer_delay(size_bits, topo.p2p);
        let mut n = 0;
        for peer in topo.peers(origin) {
            sched.schedule_in(
                delay,
                EventKind::ReceiveTx {
                    miner: peer,
                    tx,
                    from_client: false,
                },
            );
            n += 1;
        }
        n
    }
}

/// Push a new head to every client attached to `miner` over its access link.
pub fn deliver_block_to_clients(
    sched: &mut Scheduler,
    topo: &Topology,
    miner: MinerId,
    block: BlockId,
    size_bits: f64,
) -> usize {
    let delay = transfer_delay(size_bits, topo.client_link);
    for &client in topo.clients_of(miner) {
        sched.schedule_in(delay, EventKind::ClientBlockDelivered { client, block });
    }
    topo.clients_of(miner).len()
}
