//! Run directories, manifests and parameter sweeps.
//!
//! A run directory holds `manifest.toml`, `metrics.csv`, `chain.csv`,
//! `aob.csv`, `txs.csv`, `client_losses.csv`, optionally `trace.jsonl`, and
//! finally an empty `COMPLETE` marker. A directory without the marker is a
//! partial run.

use std::fs;
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::des::derive_u64;
use crate::error::SimError;
use crate::sim::{simulate, RunResult};

pub const COMPLETE_MARKER: &str = "COMPLETE";
pub const MANIFEST_FILE: &str = "manifest.toml";
pub const SWEEP_SUMMARY_FILE: &str = "sweep_summary.csv";
pub const SWEEP_FAILURES_FILE: &str = "sweep_failures.csv";

/// Run-level facts stored next to the resolved config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct RunInfo {
    pub run_id: String,
    pub config_hash: String,
    pub seed: u64,
    pub version: String,
    pub work_per_update: f64,
    pub mined_blocks: usize,
    pub main_chain_blocks: usize,
    pub stale_rate: f64,
    pub mean_aob: Option<f64>,
    pub final_train_accuracy: Option<f64>,
    pub final_test_accuracy: Option<f64>,
    pub final_validation_accuracy: Option<f64>,
    pub sim_time: f64,
    pub events: u64,
    /// `attachment[c]` is the miner serving client `c`.
    pub attachment: Vec<u32>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    pub run: RunInfo,
    pub config: ExperimentConfig,
}

impl Manifest {
    pub fn new(cfg: &ExperimentConfig, r: &RunResult) -> Self {
        Self {
            run: RunInfo {
                run_id: cfg.run_id(),
                config_hash: cfg.config_hash(),
                seed: cfg.seed,
                version: env!("CARGO_PKG_VERSION").to_string(),
                work_per_update: cfg.fl.work_per_update,
                mined_blocks: r.mined_blocks,
                main_chain_blocks: r.main_chain.len() - 1,
                stale_rate: r.stale_rate,
                mean_aob: r.mean_aob,
                final_train_accuracy: r.final_train_accuracy,
                final_test_accuracy: r.final_test_accuracy,
                final_validation_accuracy: r.final_validation_accuracy,
                sim_time: r.sim_time,
                events: r.events,
                attachment: r.topology.attach.iter().map(|m| m.0).collect(),
            },
            config: cfg.clone(),
        }
    }
}

pub fn load_manifest(path: &Path) -> Result<Manifest, SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    toml::from_str(&text).map_err(|e| {
        SimError::Parse {
            msg: e.message().to_string(),
            span: None,
        }
        .in_file(path)
    })
}

#[derive(Serialize)]
struct AoBRow<'a> {
    block_id: u32,
    depth: u64,
    on_main_chain: bool,
    num_updates: usize,
    mean_age: f64,
    /// Space-separated per-update ages.
    ages: &'a str,
}

fn write_csv<T: Serialize>(path: &Path, rows: impl IntoIterator<Item = T>) -> Result<(), SimError> {
    let io = |e: csv::Error| match e.into_kind() {
        csv::ErrorKind::Io(e) => SimError::io(path, e),
        other => panic!("serializing {}: {other:?}", path.display()),
    };
    let mut w = csv::Writer::from_path(path).map_err(io)?;
    for row in rows {
        w.serialize(row).map_err(io)?;
    }
    w.flush().map_err(|e| SimError::io(path, e))
}

fn write_file(path: &Path, bytes: &[u8]) -> Result<(), SimError> {
    fs::write(path, bytes).map_err(|e| SimError::io(path, e))
}

/// Write every output file of `r` into `dir`, the completion marker last.
pub fn write_run(dir: &Path, cfg: &ExperimentConfig, r: &RunResult) -> Result<(), SimError> {
    fs::create_dir_all(dir).map_err(|e| SimError::io(dir, e))?;
    let marker = dir.join(COMPLETE_MARKER);
    if marker.exists() {
        fs::remove_file(&marker).map_err(|e| SimError::io(&marker, e))?;
    }
    let manifest = toml::to_string(&Manifest::new(cfg, r)).expect("manifest serializes");
    write_file(&dir.join(MANIFEST_FILE), manifest.as_bytes())?;
    write_csv(&dir.join("metrics.csv"), &r.metrics)?;
    write_csv(&dir.join("chain.csv"), &r.chain)?;
    let on_main: std::collections::HashSet<u32> = r.main_chain.iter().map(|b| b.0).collect();
    let ages: Vec<String> = r
        .aob
        .iter()
        .map(|a| a.ages.iter().map(f64::to_string).collect::<Vec<_>>().join(" "))
        .collect();
    write_csv(
        &dir.join("aob.csv"),
        r.aob.iter().zip(&ages).map(|(a, ages)| AoBRow {
            block_id: a.block_id,
            depth: a.depth,
            on_main_chain: on_main.contains(&a.block_id),
            num_updates: a.num_updates,
            mean_age: a.mean_age,
            ages,
        }),
    )?;
    write_csv(&dir.join("txs.csv"), &r.txs)?;
    write_csv(&dir.join("client_losses.csv"), &r.losses)?;
    if let Some(trace) = &r.trace {
        let path = dir.join("trace.jsonl");
        let file = fs::File::create(&path).map_err(|e| SimError::io(&path, e))?;
        let mut w = BufWriter::new(file);
        for rec in trace {
            serde_json::to_writer(&mut w, rec).expect("trace record serializes");
            w.write_all(b"\n").map_err(|e| SimError::io(&path, e))?;
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;
    }
    write_file(&marker, b"")
}

/// A finished run and where it was written.
#[derive(Debug)]
pub struct RunOutput {
    pub dir: PathBuf,
    pub result: RunResult,
}

/// Simulate `cfg` and write `<output_dir>/<run-id>/`.
pub fn run(cfg: &ExperimentConfig) -> Result<RunOutput, SimError> {
    cfg.validate()?;
    let dir = cfg.output_dir.join(cfg.run_id());
    // fail on an unwritable location before spending time simulating
    fs::create_dir_all(&dir).map_err(|e| SimError::io(&dir, e))?;
    let result = simulate(cfg)?;
    write_run(&dir, cfg, &result)?;
    Ok(RunOutput { dir, result })
}

/// A parameter grid over a base config.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SweepSpec {
    /// Base config file, relative to the sweep file. Defaults apply if absent.
    #[serde(default)]
    pub base: Option<PathBuf>,
    #[serde(default = "one")]
    pub replications: u32,
    #[serde(default = "one_u64")]
    pub seed: u64,
    #[serde(default)]
    pub output_dir: Option<PathBuf>,
    /// Dotted config key → values, e.g. `"chain.block_interval" = [5, 15, 60]`.
    #[serde(default)]
    pub grid: toml::Table,
}

fn one() -> u32 {
    1
}

fn one_u64() -> u64 {
    1
}

/// One cell of the expanded grid.
#[derive(Clone, Debug)]
pub struct SweepRun {
    pub index: u64,
    pub replication: u32,
    /// `(key, value)` in grid key order.
    pub values: Vec<(String, toml::Value)>,
    pub config: Result<ExperimentConfig, String>,
}

fn set_dotted(root: &mut toml::Table, key: &str, value: toml::Value) -> Result<(), String> {
    let mut parts: Vec<&str> = key.split('.').collect();
    let last = parts.pop().ok_or("empty key")?;
    let mut table = root;
    for p in parts {
        table = table
            .entry(p)
            .or_insert_with(|| toml::Value::Table(toml::Table::new()))
            .as_table_mut()
            .ok_or_else(|| format!("{key}: `{p}` is not a section"))?;
    }
    table.insert(last.to_string(), value);
    Ok(())
}

impl SweepSpec {
    pub fn from_toml_str(text: &str) -> Result<Self, SimError> {
        let spec: Self = toml::from_str(text).map_err(|e| SimError::Parse {
            msg: e.message().to_string(),
            span: e.span().map(|s| text[s].to_string()),
        })?;
        if spec.replications == 0 {
            return Err(SimError::Config {
                key: "replications".into(),
                msg: "must be positive, got 0".into(),
            });
        }
        for (key, values) in &spec.grid {
            match values.as_array() {
                Some(v) if !v.is_empty() => {}
                _ => {
                    return Err(SimError::Config {
                        key: format!("grid.\"{key}\""),
                        msg: "must be a non-empty list".into(),
                    })
                }
            }
        }
        Ok(spec)
    }

    pub fn total_runs(&self) -> u64 {
        let cells: u64 = self
            .grid
            .values()
            .map(|v| v.as_array().map_or(1, |a| a.len() as u64))
            .product();
        cells * u64::from(self.replications)
    }

    /// Expand the grid over `base`. Replications vary fastest, then the
    /// last grid key. Run `i` gets seed `derive_u64(seed, i)`.
    pub fn expand(&self, base: &ExperimentConfig) -> Vec<SweepRun> {
        let base_table: toml::Table =
            toml::from_str(&base.to_toml_string()).expect("config round-trips through toml");
        let keys: Vec<(&String, &Vec<toml::Value>)> = self
            .grid
            .iter()
            .map(|(k, v)| (k, v.as_array().expect("validated")))
            .collect();
        let mut runs = Vec::new();
        let mut counters = vec![0usize; keys.len()];
        let mut index = 0;
        loop {
            let values: Vec<(String, toml::Value)> = keys
                .iter()
                .zip(&counters)
                .map(|((k, vs), &i)| ((*k).clone(), vs[i].clone()))
                .collect();
            for replication in 0..self.replications {
                let seed = derive_u64(self.seed, index);
                let config = (|| {
                    let mut table = base_table.clone();
                    for (k, v) in &values {
                        set_dotted(&mut table, k, v.clone())?;
                    }
                    let mut cfg: ExperimentConfig = table
                        .try_into()
                        .map_err(|e: toml::de::Error| e.message().to_string())?;
                    cfg.seed = seed;
                    if let Some(out) = &self.output_dir {
                        cfg.output_dir = out.clone();
                    }
                    cfg.validate().map_err(|e| e.to_string())?;
                    Ok(cfg)
                })();
                runs.push(SweepRun {
                    index,
                    replication,
                    values: values.clone(),
                    config,
                });
                index += 1;
            }
            // odometer over grid keys
            let mut k = keys.len();
            loop {
                if k == 0 {
                    return runs;
                }
                k -= 1;
                counters[k] += 1;
                if counters[k] < keys[k].1.len() {
                    break;
                }
                counters[k] = 0;
            }
        }
    }
}

/// Load a sweep file and its base config (relative to the sweep file).
pub fn load_sweep(path: &Path) -> Result<(SweepSpec, ExperimentConfig), SimError> {
    let text = fs::read_to_string(path).map_err(|e| SimError::io(path, e))?;
    let mut spec = SweepSpec::from_toml_str(&text).map_err(|e| e.in_file(path))?;
    let dir = path.parent().unwrap_or(Path::new("."));
    let base = match &spec.base {
        Some(b) => crate::config::load_config(&dir.join(b))?,
        None => ExperimentConfig::default(),
    };
    if let Some(out) = &mut spec.output_dir {
        if out.is_relative() {
            *out = dir.join(&*out);
        }
    }
    Ok((spec, base))
}

#[derive(Clone, Debug, PartialEq)]
pub struct SweepFailure {
    pub index: u64,
    pub error: String,
}

#[derive(Debug)]
pub struct SweepOutcome {
    pub out_dir: PathBuf,
    pub completed: usize,
    pub failures: Vec<SweepFailure>,
}

impl SweepOutcome {
    /// 0 when every run finished, 4 otherwise.
    pub fn exit_code(&self) -> i32 {
        if self.failures.is_empty() {
            0
        } else {
            4
        }
    }
}

fn fmt_opt(v: Option<f64>) -> String {
    v.map(|x| x.to_string()).unwrap_or_default()
}

fn fmt_value(v: &toml::Value) -> String {
    match v {
        toml::Value::String(s) => s.clone(),
        other => other.to_string(),
    }
}

/// Run every grid cell, continuing past failures. The summary has one row
/// per completed run; failures go to a separate file.
pub fn sweep(spec: &SweepSpec, base: &ExperimentConfig) -> Result<SweepOutcome, SimError> {
    sweep_with(spec, base, |_, _| {})
}

/// [`sweep`] with a progress callback invoked after each run.
pub fn sweep_with(
    spec: &SweepSpec,
    base: &ExperimentConfig,
    mut progress: impl FnMut(&SweepRun, Result<&RunOutput, &str>),
) -> Result<SweepOutcome, SimError> {
    let out_dir = spec.output_dir.clone().unwrap_or_else(|| base.output_dir.clone());
    fs::create_dir_all(&out_dir).map_err(|e| SimError::io(&out_dir, e))?;
    let summary_path = out_dir.join(SWEEP_SUMMARY_FILE);
    let open_err = |e: csv::Error, p: &Path| match e.into_kind() {
        csv::ErrorKind::Io(e) => SimError::io(p, e),
        other => panic!("writing {}: {other:?}", p.display()),
    };
    let mut summary = csv::Writer::from_path(&summary_path).map_err(|e| open_err(e, &summary_path))?;
    let keys: Vec<&String> = spec.grid.keys().collect();
    let mut header = vec!["run_index".to_string(), "replication".into(), "seed".into(), "run_id".into()];
    header.extend(keys.iter().map(|k| k.to_string()));
    header.extend(
        [
            "final_test_acc",
            "final_train_acc",
            "final_validation_acc",
            "mean_aob",
            "stale_rate",
            "mined_blocks",
            "sim_time",
            "run_dir",
        ]
        .map(String::from),
    );
    summary.write_record(&header).map_err(|e| open_err(e, &summary_path))?;

    let mut failures = Vec::new();
    let mut completed = 0;
    for sr in spec.expand(base) {
        let outcome = match &sr.config {
            Ok(cfg) => run(cfg).map_err(|e| e.to_string()),
            Err(msg) => Err(msg.clone()),
        };
        match &outcome {
            Ok(out) => {
                let cfg = sr.config.as_ref().expect("ran");
                let r = &out.result;
                let mut rec = vec![
                    sr.index.to_string(),
                    sr.replication.to_string(),
                    cfg.seed.to_string(),
                    cfg.run_id(),
                ];
                rec.extend(sr.values.iter().map(|(_, v)| fmt_value(v)));
                rec.extend([
                    fmt_opt(r.final_test_accuracy),
                    fmt_opt(r.final_train_accuracy),
                    fmt_opt(r.final_validation_accuracy),
                    fmt_opt(r.mean_aob),
                    r.stale_rate.to_string(),
                    r.mined_blocks.to_string(),
                    r.sim_time.to_string(),
                    out.dir.display().to_string(),
                ]);
                summary.write_record(&rec).map_err(|e| open_err(e, &summary_path))?;
                summary.flush().map_err(|e| SimError::io(&summary_path, e))?;
                completed += 1;
            }
            Err(msg) => failures.push(SweepFailure {
                index: sr.index,
                error: msg.clone(),
            }),
        }
        progress(&sr, outcome.as_ref().map_err(String::as_str));
    }
    summary.flush().map_err(|e| SimError::io(&summary_path, e))?;
    if !failures.is_empty() {
        let path = out_dir.join(SWEEP_FAILURES_FILE);
        let mut w = csv::Writer::from_path(&path).map_err(|e| open_err(e, &path))?;
        w.write_record(["run_index", "error"]).map_err(|e| open_err(e, &path))?;
        for f in &failures {
            w.write_record([f.index.to_string(), f.error.clone()])
                .map_err(|e| open_err(e, &path))?;
        }
        w.flush().map_err(|e| SimError::io(&path, e))?;
    }
    Ok(SweepOutcome {
        out_dir,
        completed,
        failures,
    })
}
