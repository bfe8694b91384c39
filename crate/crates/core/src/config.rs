//! Experiment configuration: TOML schema, defaults and validation.
//!
//! Every field is optional; an empty file resolves to the reference
//! parameter set (S^B = 10, BI = 15 s, M = 10, N = 50, ...). Units follow
//! the usual blockchain-simulation conventions: sizes in kbits, link
//! capacities in Mbps (or `"inf"`), times in seconds, compute in MIPS.

use std::fs;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::chain::ChainParams;
use crate::error::SimError;
use crate::fl::{ComputeProfile, SgdParams};
use crate::net::{Capacity, Mbps};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub output_dir: PathBuf,
    /// Record every dispatched event to `trace.jsonl`.
    pub trace: bool,
    pub chain: ChainConfig,
    pub network: NetworkConfig,
    pub fl: FlConfig,
    pub data: DataConfig,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct ChainConfig {
    /// S^B, transactions per block.
    pub max_block_size: usize,
    pub tx_kbits: f64,
    pub header_kbits: f64,
    /// BI, mean network-wide seconds between blocks.
    pub block_interval: f64,
    pub miners: u32,
    /// NB, main-chain blocks to simulate.
    pub num_blocks: u64,
    /// Per-hop validation latency added to every block transfer.
    pub verification_delay: f64,
    /// Re-forward newly learned blocks to peers (off: one-hop full mesh).
    pub relay_blocks: bool,
}

impl Default for ChainConfig {
    fn default() -> Self {
        Self {
            max_block_size: 10,
            tx_kbits: 796.84,
            header_kbits: 20.0,
            block_interval: 15.0,
            miners: 10,
            num_blocks: 50,
            verification_delay: 0.0,
            relay_blocks: false,
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct NetworkConfig {
    pub p2p_mbps: Mbps,
    pub client_mbps: Mbps,
}

impl Default for NetworkConfig {
    fn default() -> Self {
        Self {
            p2p_mbps: Mbps(Capacity::Infinite),
            client_mbps: Mbps(Capacity::Finite(1e6)),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum FlMode {
    /// Real training, aggregation and evaluation.
    Full,
    /// Timing only: clients cycle through compute and upload without
    /// touching weights. Used for fork-rate sweeps.
    ChainOnly,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum EmptyBlockPolicy {
    /// Start another round on the current local weights.
    Retrain,
    /// Stay idle until a non-empty head arrives.
    Wait,
}

/// One device class for everyone, or classes assigned round-robin by id.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum MipsSpec {
    Single(f64),
    PerClass(Vec<f64>),
}

impl MipsSpec {
    pub fn for_client(&self, client: usize) -> f64 {
        match self {
            MipsSpec::Single(v) => *v,
            MipsSpec::PerClass(v) => v[client % v.len()],
        }
    }

    fn values(&self) -> Vec<f64> {
        match self {
            MipsSpec::Single(v) => vec![*v],
            MipsSpec::PerClass(v) => v.clone(),
        }
    }
}

/// Instructions per local update. Chosen so a 4.744 MIPS device needs
/// 60 s on average and an 83.000 MIPS device about 3.4 s.
pub const DEFAULT_WORK_PER_UPDATE: f64 = 60.0 * 4.744e6;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct FlConfig {
    pub mode: FlMode,
    /// N, number of devices.
    pub clients: u32,
    /// ξ in MIPS.
    pub compute_mips: MipsSpec,
    pub work_per_update: f64,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub layers: Vec<usize>,
    pub empty_block: EmptyBlockPolicy,
    /// Memory budget for not-yet-included update weights; updates beyond it
    /// are recomputed from their recipe when a block needs them.
    pub update_cache_mb: usize,
}

impl Default for FlConfig {
    fn default() -> Self {
        Self {
            mode: FlMode::Full,
            clients: 50,
            compute_mips: MipsSpec::Single(83.0),
            work_per_update: DEFAULT_WORK_PER_UPDATE,
            epochs: 3,
            batch_size: 20,
            learning_rate: 0.01,
            layers: vec![784, 200, 200, 10],
            empty_block: EmptyBlockPolicy::Retrain,
            update_cache_mb: 512,
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum DataSource {
    Synthetic,
    Idx,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct DataConfig {
    pub source: DataSource,
    pub train_images: Option<PathBuf>,
    pub train_labels: Option<PathBuf>,
    pub test_images: Option<PathBuf>,
    pub test_labels: Option<PathBuf>,
    /// Share of the original test set kept for testing; the rest validates.
    pub test_fraction: f64,
    pub synthetic_train: usize,
    pub synthetic_test: usize,
    pub synthetic_noise: f64,
}

impl Default for DataConfig {
    fn default() -> Self {
        Self {
            source: DataSource::Synthetic,
            train_images: None,
            train_labels: None,
            test_images: None,
            test_labels: None,
            test_fraction: 0.3,
            synthetic_train: 6000,
            synthetic_test: 1000,
            synthetic_noise: 0.3,
        }
    }
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            output_dir: PathBuf::from("runs"),
            trace: false,
            chain: ChainConfig::default(),
            network: NetworkConfig::default(),
            fl: FlConfig::default(),
            data: DataConfig::default(),
        }
    }
}

fn config_err(key: &str, msg: impl Into<String>) -> SimError {
    SimError::Config {
        key: key.to_owned(),
        msg: msg.into(),
    }
}

fn positive(key: &str, v: f64) -> Result<(), SimError> {
    if v.is_finite() && v > 0.0 {
        Ok(())
    } else {
        Err(config_err(key, format!("must be positive, got {v}")))
    }
}

fn positive_capacity(key: &str, c: Capacity) -> Result<(), SimError> {
    match c {
        Capacity::Infinite => Ok(()),
        Capacity::Finite(bps) => positive(key, bps),
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let cfg: Self = toml::from_str(text).map_err(|e| SimError::Parse {
            msg: e.message().to_owned(),
            span: e.span().map(|s| text[s].to_owned()),
        })?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn to_toml_string(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<(), SimError> {
        let c = &self.chain;
        if c.max_block_size == 0 {
            return Err(config_err("chain.max_block_size (S^B)", "must be positive, got 0"));
        }
        positive("chain.tx_kbits (T_l)", c.tx_kbits)?;
        positive("chain.header_kbits (T_h)", c.header_kbits)?;
        positive("chain.block_interval (BI)", c.block_interval)?;
        if c.miners == 0 {
            return Err(config_err("chain.miners (M)", "must be positive, got 0"));
        }
        if c.num_blocks == 0 {
            return Err(config_err("chain.num_blocks (NB)", "must be positive, got 0"));
        }
        if !(c.verification_delay.is_finite() && c.verification_delay >= 0.0) {
            return Err(config_err("chain.verification_delay", "must be non-negative"));
        }
        positive_capacity("network.p2p_mbps (C_p2p)", self.network.p2p_mbps.capacity())?;
        positive_capacity("network.client_mbps (C_n)", self.network.client_mbps.capacity())?;

        let f = &self.fl;
        if f.clients == 0 {
            return Err(config_err("fl.clients (N)", "must be positive, got 0"));
        }
        let mips = f.compute_mips.values();
        if mips.is_empty() {
            return Err(config_err("fl.compute_mips", "needs at least one value"));
        }
        for v in mips {
            positive("fl.compute_mips", v)?;
        }
        positive("fl.work_per_update", f.work_per_update)?;
        if f.epochs == 0 {
            return Err(config_err("fl.epochs (E)", "must be positive, got 0"));
        }
        if f.batch_size == 0 {
            return Err(config_err("fl.batch_size (B)", "must be positive, got 0"));
        }
        positive("fl.learning_rate", f.learning_rate)?;
        if f.layers.len() < 2 || f.layers.contains(&0) {
            return Err(config_err("fl.layers", "need at least two positive layer sizes"));
        }
        if *f.layers.last().expect("len >= 2") > 256 {
            return Err(config_err("fl.layers", "output layer is the class count (at most 256)"));
        }

        let d = &self.data;
        if !(d.test_fraction > 0.0 && d.test_fraction < 1.0) {
            return Err(config_err("data.test_fraction", "must lie in (0, 1)"));
        }
        match d.source {
            DataSource::Idx => {
                for (key, path) in [
                    ("data.train_images", &d.train_images),
                    ("data.train_labels", &d.train_labels),
                    ("data.test_images", &d.test_images),
                    ("data.test_labels", &d.test_labels),
                ] {
                    if path.is_none() {
                        return Err(config_err(key, "required when data.source = \"idx\""));
                    }
                }
            }
            DataSource::Synthetic => {
                if d.synthetic_train < f.clients as usize {
                    return Err(config_err(
                        "data.synthetic_train",
                        "must be at least the number of clients",
                    ));
                }
                if d.synthetic_test < 2 {
                    return Err(config_err("data.synthetic_test", "must be at least 2"));
                }
                if !(d.synthetic_noise.is_finite() && d.synthetic_noise >= 0.0) {
                    return Err(config_err("data.synthetic_noise", "must be non-negative"));
                }
            }
        }
        Ok(())
    }

    /// Resolve relative dataset paths against `base`.
    pub fn resolve_paths(&mut self, base: &Path) {
        for p in [
            &mut self.data.train_images,
            &mut self.data.train_labels,
            &mut self.data.test_images,
            &mut self.data.test_labels,
        ]
        .into_iter()
        .flatten()
        {
            if p.is_relative() {
                *p = base.join(&*p);
            }
        }
    }

    pub fn chain_params(&self) -> ChainParams {
        ChainParams {
            max_block_txs: self.chain.max_block_size,
            tx_bits: self.chain.tx_kbits * 1e3,
            header_bits: self.chain.header_kbits * 1e3,
        }
    }

    pub fn sgd_params(&self) -> SgdParams {
        SgdParams {
            epochs: self.fl.epochs,
            batch_size: self.fl.batch_size,
            learning_rate: self.fl.learning_rate,
        }
    }

    pub fn compute_profile(&self, client: usize) -> ComputeProfile {
        ComputeProfile::new(self.fl.compute_mips.for_client(client), self.fl.work_per_update)
    }

    /// Hash of everything that shapes the simulation (seed, output location
    /// and tracing excluded).
    pub fn config_hash(&self) -> String {
        let mut canonical = self.clone();
        canonical.seed = 0;
        canonical.output_dir = PathBuf::new();
        canonical.trace = false;
        let digest = Sha256::digest(canonical.to_toml_string().as_bytes());
        hex::encode(&digest[..6])
    }

    pub fn run_id(&self) -> String {
        format!("{}-s{}", self.config_hash(), self.seed)
    }
}

/// Read and validate a config file. Relative dataset paths are taken
/// relative to the file's directory.
pub fn load_config(path: &Path) -> Result<ExperimentConfig, SimError> {
    let text = fs::read_to_string(path).map_err(|source| SimError::Io {
        path: path.to_owned(),
        source,
    })?;
    let mut cfg = ExperimentConfig::from_toml_str(&text).map_err(|e| e.in_file(path))?;
    cfg.resolve_paths(path.parent().unwrap_or(Path::new(".")));
    Ok(cfg)
}
