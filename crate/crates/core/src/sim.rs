//! The asynchronous FLchain protocol wired onto the event engine.
//!
//! Miners mine on exponential timers, gossip blocks and transactions, and
//! push every new head to their attached clients. A client that is idle when
//! a head arrives replaces its model with the FedAvg of the block's updates
//! (keeping its own weights if the block is empty), trains for an
//! exponentially distributed time, and uploads the result as a transaction.
//! Heads that arrive mid-round are remembered and only the newest is used
//! once the upload finishes.

use std::collections::{BTreeMap, HashMap};

use serde::Serialize;

use crate::chain::{
    make_block, prune_mempool, stale_rate, AppendError, BlockStore, ChainParams, ChainUpdate,
    LedgerView, MainTipTracker, Mempool, Transaction,
};
use crate::config::{DataSource, EmptyBlockPolicy, ExperimentConfig, FlMode};
use crate::des::{
    run_until, Dispatch, Event, EventHandler, EventKind, RngStream, RngStreams, Scheduler, SimTime,
    TraceRecord,
};
use crate::error::SimError;
use crate::fl::data::{load_idx, synthetic_pair};
use crate::fl::{
    evaluate, fedavg_uniform, local_update, shard_dataset, ComputeProfile, DataShard, Dataset,
    EvalSplit, ModelWeights, SgdParams,
};
use crate::ids::{BlockId, ClientId, MinerId, TxId, UpdateRef};
use crate::metrics::{compute_aob, mean, mean_loss_between, AoBRecord, LossRecord, MetricsRow};
use crate::net::{deliver_block_to_clients, transfer_delay, Gossip, MiningProcess, Topology};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
pub enum ClientPhase {
    Idle,
    Training,
    Uploading,
}

/// Where a set of weights came from; enough to rebuild them.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModelSource {
    Init,
    Block(BlockId),
    Update(UpdateRef),
}

#[derive(Clone, Debug)]
pub struct ClientState {
    pub id: ClientId,
    pub miner: MinerId,
    pub profile: ComputeProfile,
    pub phase: ClientPhase,
    /// Newest head delivered by the attached miner.
    pub latest_delivered: BlockId,
    /// Head the current (or last) round started from.
    pub consumed: BlockId,
    pub rounds_completed: u32,
    /// Provenance of `weights`.
    pub base: ModelSource,
    pub weights: Option<ModelWeights>,
    compute_rng: RngStream,
}

#[derive(Clone, Debug)]
pub struct MinerState {
    pub id: MinerId,
    pub view: LedgerView,
    pub mempool: Mempool,
    /// Blocks waiting for their parent, keyed by the missing parent.
    pub orphans: HashMap<BlockId, Vec<BlockId>>,
}

#[derive(Clone, Copy, Debug)]
struct UpdateRecipe {
    client: ClientId,
    base: ModelSource,
    round: u32,
}

#[derive(Clone, Debug, PartialEq)]
struct EvalSnapshot {
    train_acc: f64,
    test_acc: f64,
    validation_acc: f64,
    train_correct: Vec<bool>,
}

/// Training data, models and caches for full-mode runs.
struct FlState {
    split: EvalSplit,
    shards: Vec<DataShard>,
    sgd: SgdParams,
    init: ModelWeights,
    /// FedAvg of each non-empty block's updates.
    block_models: HashMap<BlockId, ModelWeights>,
    recipes: Vec<UpdateRecipe>,
    cache: BTreeMap<UpdateRef, ModelWeights>,
    cache_limit: usize,
    evals: HashMap<ModelSource, EvalSnapshot>,
    recomputed: usize,
}

impl FlState {
    fn load(cfg: &ExperimentConfig, streams: &RngStreams) -> Result<Self, SimError> {
        let layers = &cfg.fl.layers;
        let classes = *layers.last().expect("validated");
        let (train, test) = match cfg.data.source {
            DataSource::Synthetic => synthetic_pair(
                cfg.data.synthetic_train,
                cfg.data.synthetic_test,
                layers[0],
                classes,
                cfg.data.synthetic_noise,
                &mut streams.stream("synthetic-data"),
            ),
            DataSource::Idx => {
                let d = &cfg.data;
                let train = load_idx(
                    d.train_images.as_deref().expect("validated"),
                    d.train_labels.as_deref().expect("validated"),
                )?;
                let test = load_idx(
                    d.test_images.as_deref().expect("validated"),
                    d.test_labels.as_deref().expect("validated"),
                )?;
                (train, test)
            }
        };
        check_dataset(&train, layers[0], classes, "train")?;
        check_dataset(&test, layers[0], classes, "test")?;
        if train.len() < cfg.fl.clients as usize {
            return Err(SimError::Config {
                key: "fl.clients (N)".into(),
                msg: format!("{} clients but only {} training samples", cfg.fl.clients, train.len()),
            });
        }
        let split = EvalSplit::new(train, test, cfg.data.test_fraction, &mut streams.stream("eval-split"));
        let shards = shard_dataset(&split.train, cfg.fl.clients as usize, &mut streams.stream("shard"));
        let init = ModelWeights::init(layers, &mut streams.stream("init-model"));
        let bytes = init.num_params() * std::mem::size_of::<f64>();
        let cache_limit = (cfg.fl.update_cache_mb * 1024 * 1024) / bytes.max(1);
        Ok(Self {
            split,
            shards,
            sgd: cfg.sgd_params(),
            init,
            block_models: HashMap::new(),
            recipes: Vec::new(),
            cache: BTreeMap::new(),
            cache_limit,
            evals: HashMap::new(),
            recomputed: 0,
        })
    }

    fn update_rng(streams: &RngStreams, client: ClientId, round: u32) -> RngStream {
        streams.stream(&format!("local-update/{client}/{round}"))
    }

    fn source_weights(&mut self, streams: &RngStreams, source: ModelSource) -> ModelWeights {
        match source {
            ModelSource::Init => self.init.clone(),
            ModelSource::Block(b) => self.block_models[&b].clone(),
            ModelSource::Update(u) => self.update_weights(streams, u),
        }
    }

    /// Weights of a stored update, recomputed from its recipe on a cache
    /// miss. Recomputation is bit-identical to the original training run.
    fn update_weights(&mut self, streams: &RngStreams, u: UpdateRef) -> ModelWeights {
        if let Some(w) = self.cache.get(&u) {
            return w.clone();
        }
        let recipe = *self
            .recipes
            .get(u.index())
            .unwrap_or_else(|| panic!("dangling update reference {u}"));
        let base = self.source_weights(streams, recipe.base);
        let shard = &self.shards[recipe.client.index()].data;
        let mut rng = Self::update_rng(streams, recipe.client, recipe.round);
        self.recomputed += 1;
        local_update(&base, shard, &self.sgd, &mut rng).0
    }

    fn evaluate_source(&mut self, source: ModelSource) -> &EvalSnapshot {
        if !self.evals.contains_key(&source) {
            let model = match source {
                ModelSource::Init => &self.init,
                ModelSource::Block(b) => &self.block_models[&b],
                ModelSource::Update(_) => unreachable!("global models come from blocks"),
            };
            let train = evaluate(model, &self.split.train);
            let test = evaluate(model, &self.split.test);
            let validation = evaluate(model, &self.split.validation);
            self.evals.insert(
                source,
                EvalSnapshot {
                    train_acc: train.accuracy,
                    test_acc: test.accuracy,
                    validation_acc: validation.accuracy,
                    train_correct: train.correct,
                },
            );
        }
        &self.evals[&source]
    }
}

fn check_dataset(d: &Dataset, width: usize, classes: usize, which: &str) -> Result<(), SimError> {
    if d.num_features() != width {
        return Err(SimError::Config {
            key: "fl.layers".into(),
            msg: format!("input layer is {width} but {which} samples have {} features", d.num_features()),
        });
    }
    if let Some(&bad) = d.labels.iter().find(|&&y| y as usize >= classes) {
        return Err(SimError::Config {
            key: "fl.layers".into(),
            msg: format!("{which} label {bad} exceeds the {classes}-class output layer"),
        });
    }
    Ok(())
}

/// Model reached after walking `prefix` in depth order: each non-empty block
/// replaces the running model with its FedAvg, empty blocks leave it alone,
/// and before any non-empty block it is the initial model.
pub fn global_model_source(prefix: &[BlockId], store: &BlockStore) -> ModelSource {
    prefix
        .iter()
        .rev()
        .find(|&&b| !store.get(b).txs.is_empty())
        .map_or(ModelSource::Init, |&b| ModelSource::Block(b))
}

pub fn global_model_at<'a>(
    prefix: &[BlockId],
    store: &BlockStore,
    init: &'a ModelWeights,
    block_models: &'a HashMap<BlockId, ModelWeights>,
) -> &'a ModelWeights {
    match global_model_source(prefix, store) {
        ModelSource::Block(b) => &block_models[&b],
        _ => init,
    }
}

/// Everything a finished run produced.
#[derive(Clone, Debug)]
pub struct RunResult {
    pub topology: Topology,
    pub metrics: Vec<MetricsRow>,
    pub chain: Vec<crate::chain::ChainDumpRecord>,
    pub aob: Vec<AoBRecord>,
    pub txs: Vec<Transaction>,
    pub losses: Vec<LossRecord>,
    pub trace: Option<Vec<TraceRecord>>,
    pub main_chain: Vec<BlockId>,
    pub stale_rate: f64,
    pub mined_blocks: usize,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub final_validation_accuracy: Option<f64>,
    /// Mean AoB over non-empty main-chain blocks.
    pub mean_aob: Option<f64>,
    /// `(time, main-chain depth)` at every main-chain growth.
    pub snapshots: Vec<(SimTime, u64)>,
    pub client_rounds: Vec<u32>,
    pub sim_time: SimTime,
    pub events: u64,
    pub recomputed_updates: usize,
}

/// Simulation state; implements [`EventHandler`].
pub struct World {
    cfg: ExperimentConfig,
    params: ChainParams,
    streams: RngStreams,
    mining_rng: RngStream,
    pub topology: Topology,
    pub mining: MiningProcess,
    pub gossip: Gossip,
    pub store: BlockStore,
    pub txs: Vec<Transaction>,
    pub miners: Vec<MinerState>,
    pub clients: Vec<ClientState>,
    fl: Option<FlState>,
    tracker: MainTipTracker,
    /// Reschedule a miner's next block after it mines (off in scripted tests).
    auto_mine: bool,
    /// Set by a `SimStop` event.
    stopped: bool,
    rows: HashMap<BlockId, MetricsRow>,
    snapshots: Vec<(SimTime, u64)>,
    losses: Vec<LossRecord>,
    samples_per_client: Vec<usize>,
}

pub struct Simulation {
    pub sched: Scheduler,
    pub world: World,
}

impl Simulation {
    /// Build the world and schedule the opening events: one mining timer per
    /// miner and a first training round for every client.
    pub fn new(cfg: &ExperimentConfig) -> Result<Self, SimError> {
        let mut sim = Self::scripted(cfg)?;
        sim.world.auto_mine = true;
        for m in 0..cfg.chain.miners {
            let miner = MinerId(m);
            let dt = sim.world.mining.sample_mining_time(miner, &mut sim.world.mining_rng);
            sim.sched.schedule(dt, EventKind::MineBlock { miner });
        }
        sim.start_clients();
        Ok(sim)
    }

    /// Start every client's first round on the genesis model.
    pub fn start_clients(&mut self) {
        for c in 0..self.world.clients.len() {
            self.world.start_round(&mut self.sched, ClientId(c as u32));
        }
    }

    /// A world with nothing scheduled and miners that do not reschedule
    /// themselves; tests drive it with hand-placed events.
    pub fn scripted(cfg: &ExperimentConfig) -> Result<Self, SimError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.seed);
        let topology = Topology::random(
            cfg.chain.miners,
            cfg.fl.clients,
            cfg.network.p2p_mbps.capacity(),
            cfg.network.client_mbps.capacity(),
            &mut streams.stream("topology"),
        );
        Self::with_topology(cfg, topology)
    }

    pub fn with_topology(cfg: &ExperimentConfig, topology: Topology) -> Result<Self, SimError> {
        cfg.validate()?;
        let streams = RngStreams::new(cfg.seed);
        let params = cfg.chain_params();
        let fl = match cfg.fl.mode {
            FlMode::Full => Some(FlState::load(cfg, &streams)?),
            FlMode::ChainOnly => None,
        };
        let n = cfg.fl.clients as usize;
        let samples_per_client = match &fl {
            Some(f) => f.shards.iter().map(DataShard::len).collect(),
            None => {
                let total = cfg.data.synthetic_train;
                (0..n).map(|k| total / n + usize::from(k < total % n)).collect()
            }
        };
        let init = fl.as_ref().map(|f| f.init.clone());
        let clients = (0..n)
            .map(|k| {
                let id = ClientId(k as u32);
                ClientState {
                    id,
                    miner: topology.miner_of(id),
                    profile: cfg.compute_profile(k),
                    phase: ClientPhase::Idle,
                    latest_delivered: BlockId::GENESIS,
                    consumed: BlockId::GENESIS,
                    rounds_completed: 0,
                    base: ModelSource::Init,
                    weights: init.clone(),
                    compute_rng: streams.stream(&format!("compute-time/{id}")),
                }
            })
            .collect();
        let miners = (0..cfg.chain.miners)
            .map(|m| MinerState {
                id: MinerId(m),
                view: LedgerView::new(MinerId(m)),
                mempool: Mempool::new(),
                orphans: HashMap::new(),
            })
            .collect();
        let world = World {
            params,
            mining_rng: streams.stream("mining"),
            mining: MiningProcess::uniform(cfg.chain.miners, cfg.chain.block_interval),
            gossip: Gossip::new(cfg.chain.miners, cfg.chain.verification_delay),
            store: BlockStore::new(params.header_bits),
            txs: Vec::new(),
            miners,
            clients,
            fl,
            tracker: MainTipTracker::default(),
            auto_mine: false,
            stopped: false,
            rows: HashMap::new(),
            snapshots: Vec::new(),
            losses: Vec::new(),
            samples_per_client,
            topology,
            streams,
            cfg: cfg.clone(),
        };
        let sched = if cfg.trace {
            Scheduler::with_trace()
        } else {
            Scheduler::new()
        };
        Ok(Self { sched, world })
    }

    /// Run until the main chain holds `num_blocks` blocks past genesis or a
    /// `SimStop` event fires.
    pub fn run(mut self) -> RunResult {
        let target = self.world.cfg.chain.num_blocks;
        run_until(&mut self.sched, &mut self.world, |w, _| {
            w.stopped || w.main_depth() >= target
        });
        self.finish()
    }

    pub fn step(&mut self) -> Option<Event> {
        let ev = self.sched.next()?;
        if self.world.handle(&mut self.sched, &ev) == Dispatch::Unhandled {
            panic!("unhandled event {:?}", ev.kind);
        }
        Some(ev)
    }

    pub fn finish(mut self) -> RunResult {
        let trace = self.sched.take_trace();
        let events = self.sched.dispatched();
        let sim_time = self.sched.now();
        self.world.finish(trace, events, sim_time)
    }
}

impl World {
    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    pub fn stopped(&self) -> bool {
        self.stopped
    }

    pub fn main_tip(&self) -> BlockId {
        self.tracker.tip()
    }

    pub fn main_depth(&self) -> u64 {
        self.store.get(self.tracker.tip()).depth
    }

    pub fn client_weights(&self, c: ClientId) -> Option<&ModelWeights> {
        self.clients[c.index()].weights.as_ref()
    }

    pub fn block_model(&self, b: BlockId) -> Option<&ModelWeights> {
        self.fl.as_ref()?.block_models.get(&b)
    }

    /// Train, test and validation sets (full mode only).
    pub fn eval_split(&self) -> Option<&EvalSplit> {
        self.fl.as_ref().map(|f| &f.split)
    }

    /// Blocks that received a metrics row while on the main chain.
    pub fn snapshotted_blocks(&self) -> impl Iterator<Item = BlockId> + '_ {
        self.rows.keys().copied()
    }

    pub fn initial_model(&self) -> Option<&ModelWeights> {
        self.fl.as_ref().map(|f| &f.init)
    }

    /// Stored or recomputed weights of an update (full mode only).
    pub fn update_weights(&mut self, u: UpdateRef) -> Option<ModelWeights> {
        let streams = self.streams;
        self.fl.as_mut().map(|f| f.update_weights(&streams, u))
    }

    pub fn evict_cached_updates(&mut self) {
        if let Some(f) = self.fl.as_mut() {
            f.cache.clear();
        }
    }

    fn on_mine(&mut self, sched: &mut Scheduler, miner: MinerId) {
        let now = sched.now();
        let state = &mut self.miners[miner.index()];
        let (block, update) = make_block(
            &mut self.store,
            &mut state.view,
            &mut state.mempool,
            &self.params,
            now,
        );
        prune_mempool(&mut state.mempool, &state.view, &self.store, &update);
        self.block_created(block);
        let size = self.store.get(block).size_bits;
        self.gossip
            .broadcast_block(sched, &self.topology, miner, block, size);
        deliver_block_to_clients(sched, &self.topology, miner, block, size);
        if self.auto_mine {
            let dt = self.mining.sample_mining_time(miner, &mut self.mining_rng);
            sched.schedule_in(dt, EventKind::MineBlock { miner });
        }
        self.observe_main_chain(now);
    }

    /// Aggregate the new block's updates and release their cached weights.
    fn block_created(&mut self, block: BlockId) {
        self.tracker.offer(&self.store, block);
        let streams = self.streams;
        let Some(fl) = self.fl.as_mut() else { return };
        let txs = &self.store.get(block).txs;
        if txs.is_empty() {
            return;
        }
        let updates: Vec<ModelWeights> = txs
            .iter()
            .map(|&tx| fl.update_weights(&streams, self.txs[tx.index()].update))
            .collect();
        let refs: Vec<&ModelWeights> = updates.iter().collect();
        let aggregate = fedavg_uniform(&refs);
        assert!(aggregate.is_finite(), "non-finite aggregate in {block}");
        fl.block_models.insert(block, aggregate);
        for &tx in txs {
            fl.cache.remove(&self.txs[tx.index()].update);
        }
    }

    fn on_receive_block(&mut self, sched: &mut Scheduler, miner: MinerId, block: BlockId) {
        if self.miners[miner.index()].view.contains(block) {
            return;
        }
        let mut work = vec![block];
        while let Some(b) = work.pop() {
            let state = &mut self.miners[miner.index()];
            match state.view.append(&self.store, b) {
                Err(AppendError::UnknownParent(parent)) => {
                    let waiting = state.orphans.entry(parent).or_default();
                    if !waiting.contains(&b) {
                        waiting.push(b);
                    }
                }
                Ok(update) => {
                    if update.accepted {
                        self.after_append(sched, miner, b, &update);
                    }
                    if let Some(children) = self.miners[miner.index()].orphans.remove(&b) {
                        work.extend(children.into_iter().rev());
                    }
                }
            }
        }
    }

    fn after_append(&mut self, sched: &mut Scheduler, miner: MinerId, block: BlockId, update: &ChainUpdate) {
        let state = &mut self.miners[miner.index()];
        if update.head_changed {
            prune_mempool(&mut state.mempool, &state.view, &self.store, update);
            let size = self.store.get(update.new_head).size_bits;
            deliver_block_to_clients(sched, &self.topology, miner, update.new_head, size);
        }
        if self.cfg.chain.relay_blocks {
            let size = self.store.get(block).size_bits;
            self.gossip
                .broadcast_block(sched, &self.topology, miner, block, size);
        }
    }

    fn on_receive_tx(&mut self, sched: &mut Scheduler, miner: MinerId, tx: TxId, from_client: bool) {
        let state = &mut self.miners[miner.index()];
        if state.view.head_chain_contains(tx) {
            state.mempool.note_arrival(tx);
        } else {
            state.mempool.insert(tx);
        }
        if from_client {
            self.gossip
                .broadcast_tx(sched, &self.topology, miner, tx, self.params.tx_bits);
            let client = self.txs[tx.index()].client;
            self.upload_done(sched, client);
        }
    }

    fn on_client_block(&mut self, sched: &mut Scheduler, client: ClientId, block: BlockId) {
        let state = &mut self.clients[client.index()];
        if self.store.get(block).depth <= self.store.get(state.latest_delivered).depth {
            // overtaken by a deeper head that arrived first
            return;
        }
        state.latest_delivered = block;
        if state.phase == ClientPhase::Idle {
            self.start_round(sched, client);
        }
    }

    /// Aggregate from the newest delivered head and start training on it.
    fn start_round(&mut self, sched: &mut Scheduler, client: ClientId) {
        let state = &mut self.clients[client.index()];
        debug_assert_eq!(state.phase, ClientPhase::Idle);
        let head = state.latest_delivered;
        state.consumed = head;
        let block = self.store.get(head);
        if block.txs.is_empty() {
            if !block.is_genesis() && self.cfg.fl.empty_block == EmptyBlockPolicy::Wait {
                return;
            }
        } else {
            if let Some(fl) = self.fl.as_ref() {
                state.weights = Some(fl.block_models[&head].clone());
            }
            state.base = ModelSource::Block(head);
        }
        state.phase = ClientPhase::Training;
        let dt = state.profile.sample_compute_time(&mut state.compute_rng);
        sched.schedule_in(dt, EventKind::ClientTrainDone { client });
    }

    fn on_train_done(&mut self, sched: &mut Scheduler, client: ClientId) {
        let now = sched.now();
        let update = UpdateRef(self.txs.len() as u32);
        let streams = self.streams;
        let state = &mut self.clients[client.index()];
        debug_assert_eq!(state.phase, ClientPhase::Training);
        let round = state.rounds_completed;
        state.rounds_completed += 1;
        if let Some(fl) = self.fl.as_mut() {
            let w0 = state.weights.as_ref().expect("full mode keeps weights");
            let shard = &fl.shards[client.index()].data;
            let mut rng = FlState::update_rng(&streams, client, round);
            let (w, loss) = local_update(w0, shard, &fl.sgd, &mut rng);
            assert!(w.is_finite(), "non-finite weights from {client}");
            fl.recipes.push(UpdateRecipe {
                client,
                base: state.base,
                round,
            });
            debug_assert_eq!(fl.recipes.len(), update.index() + 1);
            if fl.cache.len() < fl.cache_limit {
                fl.cache.insert(update, w.clone());
            }
            state.weights = Some(w);
            self.losses.push(LossRecord {
                time: now,
                client: client.0,
                round,
                loss,
            });
        }
        state.base = ModelSource::Update(update);
        state.phase = ClientPhase::Uploading;
        let tx = TxId(self.txs.len() as u32);
        self.txs.push(Transaction {
            id: tx,
            client,
            update,
            num_samples: self.samples_per_client[client.index()],
            gen_time: now,
            size_bits: self.params.tx_bits,
        });
        let delay = transfer_delay(self.params.tx_bits, self.topology.client_link);
        sched.schedule_in(
            delay,
            EventKind::ReceiveTx {
                miner: state.miner,
                tx,
                from_client: true,
            },
        );
    }

    fn upload_done(&mut self, sched: &mut Scheduler, client: ClientId) {
        let state = &mut self.clients[client.index()];
        debug_assert_eq!(state.phase, ClientPhase::Uploading);
        state.phase = ClientPhase::Idle;
        if state.latest_delivered != state.consumed {
            self.start_round(sched, client);
        }
    }

    /// Record a snapshot and fill metric rows for any main-chain blocks
    /// that do not have one yet.
    fn observe_main_chain(&mut self, now: SimTime) {
        let depth = self.main_depth();
        if self.snapshots.last().is_some_and(|&(_, d)| d == depth) {
            return;
        }
        self.snapshots.push((now, depth));
        let mut missing = Vec::new();
        let mut cur = self.tracker.tip();
        while cur != BlockId::GENESIS && !self.rows.contains_key(&cur) {
            missing.push(cur);
            cur = self.store.get(cur).parent.expect("non-genesis");
        }
        for b in missing.into_iter().rev() {
            let row = self.metrics_row(b);
            self.rows.insert(b, row);
        }
    }

    fn metrics_row(&mut self, b: BlockId) -> MetricsRow {
        let block = self.store.get(b);
        let aob = compute_aob(block, |tx| &self.txs[tx.index()]).map(|r| r.mean_age);
        let mut row = MetricsRow {
            block_index: block.depth,
            block_id: b.0,
            depth: block.depth,
            miner: block.miner.map_or(0, |m| m.0),
            mine_time: block.mine_time,
            num_updates: block.txs.len(),
            aob,
            train_acc: None,
            contrib_train_acc: None,
            test_acc: None,
            validation_acc: None,
            mean_client_loss: None,
            stale_blocks: 0,
        };
        if let Some(fl) = self.fl.as_mut() {
            let source = if block.txs.is_empty() {
                global_model_source(&self.store.chain_to(b), &self.store)
            } else {
                ModelSource::Block(b)
            };
            let contributors: Vec<ClientId> = block
                .txs
                .iter()
                .map(|&tx| self.txs[tx.index()].client)
                .collect();
            let eval = fl.evaluate_source(source).clone();
            row.train_acc = Some(eval.train_acc);
            row.test_acc = Some(eval.test_acc);
            row.validation_acc = Some(eval.validation_acc);
            if !contributors.is_empty() {
                let mut seen = std::collections::BTreeSet::new();
                let (mut hits, mut total) = (0usize, 0usize);
                for c in contributors {
                    if seen.insert(c) {
                        for &i in &fl.shards[c.index()].indices {
                            hits += usize::from(eval.train_correct[i]);
                            total += 1;
                        }
                    }
                }
                row.contrib_train_acc = Some(hits as f64 / total as f64);
            }
        }
        row
    }

    fn finish(mut self, trace: Option<Vec<TraceRecord>>, events: u64, sim_time: SimTime) -> RunResult {
        let main_chain = self.store.chain_to(self.tracker.tip());
        let mut metrics = Vec::with_capacity(main_chain.len().saturating_sub(1));
        let on_main: std::collections::HashSet<BlockId> = main_chain.iter().copied().collect();
        let mut stale_times: Vec<SimTime> = self
            .store
            .iter()
            .filter(|blk| !on_main.contains(&blk.id))
            .map(|blk| blk.mine_time)
            .collect();
        stale_times.sort_by(f64::total_cmp);
        let mut prev_time = 0.0;
        for &b in main_chain.iter().skip(1) {
            if !self.rows.contains_key(&b) {
                let row = self.metrics_row(b);
                self.rows.insert(b, row);
            }
            let mut row = self.rows[&b].clone();
            row.mean_client_loss = mean_loss_between(&self.losses, prev_time, row.mine_time);
            prev_time = row.mine_time;
            row.stale_blocks = stale_times.partition_point(|&t| t <= row.mine_time);
            metrics.push(row);
        }
        let aob: Vec<AoBRecord> = self
            .store
            .iter()
            .filter_map(|blk| compute_aob(blk, |tx| &self.txs[tx.index()]))
            .collect();
        let mean_aob = mean(
            aob.iter()
                .filter(|r| on_main.contains(&BlockId(r.block_id)))
                .map(|r| r.mean_age),
        );
        let last = metrics.last();
        RunResult {
            chain: crate::chain::chain_dump(&self.store, &main_chain),
            stale_rate: stale_rate(&self.store, &main_chain),
            mined_blocks: self.store.len() - 1,
            final_train_accuracy: last.and_then(|r| r.train_acc),
            final_test_accuracy: last.and_then(|r| r.test_acc),
            final_validation_accuracy: last.and_then(|r| r.validation_acc),
            metrics,
            aob,
            mean_aob,
            main_chain,
            snapshots: self.snapshots,
            client_rounds: self.clients.iter().map(|c| c.rounds_completed).collect(),
            recomputed_updates: self.fl.as_ref().map_or(0, |f| f.recomputed),
            txs: self.txs,
            losses: self.losses,
            topology: self.topology,
            trace,
            sim_time,
            events,
        }
    }
}

impl EventHandler for World {
    fn handle(&mut self, sched: &mut Scheduler, event: &Event) -> Dispatch {
        match event.kind {
            EventKind::MineBlock { miner } => self.on_mine(sched, miner),
            EventKind::ReceiveBlock { miner, block } => {
                self.on_receive_block(sched, miner, block);
                self.observe_main_chain(sched.now());
            }
            EventKind::ReceiveTx {
                miner,
                tx,
                from_client,
            } => self.on_receive_tx(sched, miner, tx, from_client),
            EventKind::ClientTrainDone { client } => self.on_train_done(sched, client),
            EventKind::ClientBlockDelivered { client, block } => {
                self.on_client_block(sched, client, block)
            }
            EventKind::SimStop => self.stopped = true,
        }
        Dispatch::Handled
    }
}

/// Run one simulation in memory.
pub fn simulate(cfg: &ExperimentConfig) -> Result<RunResult, SimError> {
    Ok(Simulation::new(cfg)?.run())
}
