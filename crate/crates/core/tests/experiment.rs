use std::collections::HashSet;
use std::fs;

use flchain_core::config::{ExperimentConfig, FlMode};
use flchain_core::experiment::{load_manifest, load_sweep, run, sweep, SweepSpec, COMPLETE_MARKER, MANIFEST_FILE};

fn tiny(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = ExperimentConfig::default();
    cfg.output_dir = out.to_path_buf();
    cfg.fl.layers = vec![784, 16, 10];
    cfg.fl.clients = 5;
    cfg.fl.epochs = 1;
    cfg.data.synthetic_train = 200;
    cfg.data.synthetic_test = 50;
    cfg.chain.num_blocks = 6;
    cfg
}

fn chain_only(out: &std::path::Path) -> ExperimentConfig {
    let mut cfg = tiny(out);
    cfg.fl.mode = FlMode::ChainOnly;
    cfg.chain.num_blocks = 20;
    cfg
}

#[test]
fn run_writes_every_output_and_the_marker() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.trace = true;
    let out = run(&cfg).unwrap();
    assert_eq!(out.dir, tmp.path().join(cfg.run_id()));
    for f in [MANIFEST_FILE, "metrics.csv", "chain.csv", "aob.csv", "txs.csv", "client_losses.csv", "trace.jsonl", COMPLETE_MARKER] {
        assert!(out.dir.join(f).is_file(), "missing {f}");
    }
    let metrics = fs::read_to_string(out.dir.join("metrics.csv")).unwrap();
    assert_eq!(metrics.lines().count(), 1 + cfg.chain.num_blocks as usize);
    assert!(metrics.starts_with("block_index,block_id,depth,miner,mine_time,num_updates,aob,train_acc"));
    let trace = fs::read_to_string(out.dir.join("trace.jsonl")).unwrap();
    assert_eq!(trace.lines().count() as u64, out.result.events);
}

#[test]
fn manifest_round_trips_to_the_same_config() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.network.p2p_mbps = flchain_core::net::Mbps(flchain_core::net::Capacity::Finite(10e6));
    cfg.fl.compute_mips = flchain_core::config::MipsSpec::PerClass(vec![4.744, 83.0]);
    let out = run(&cfg).unwrap();
    let m = load_manifest(&out.dir.join(MANIFEST_FILE)).unwrap();
    assert_eq!(m.config, cfg);
    assert_eq!(m.run.run_id, cfg.run_id());
    assert_eq!(m.run.seed, cfg.seed);
    assert_eq!(m.run.attachment.len(), cfg.fl.clients as usize);
    assert_eq!(m.run.work_per_update, cfg.fl.work_per_update);
    assert_eq!(m.run.main_chain_blocks as u64, cfg.chain.num_blocks);
}

#[test]
fn reruns_produce_identical_files() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(&tmp.path().join("a"));
    let a = run(&cfg).unwrap().dir;
    cfg.output_dir = tmp.path().join("b");
    let b = run(&cfg).unwrap().dir;
    for f in ["metrics.csv", "chain.csv", "aob.csv", "txs.csv", "client_losses.csv"] {
        assert_eq!(fs::read(a.join(f)).unwrap(), fs::read(b.join(f)).unwrap(), "{f}");
    }
}

#[test]
fn unwritable_output_is_an_io_error() {
    let tmp = tempfile::tempdir().unwrap();
    let blocker = tmp.path().join("file");
    fs::write(&blocker, b"x").unwrap();
    let cfg = tiny(&blocker.join("sub"));
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 3, "{err}");
}

#[test]
fn invalid_config_is_rejected_before_running() {
    let tmp = tempfile::tempdir().unwrap();
    let mut cfg = tiny(tmp.path());
    cfg.chain.max_block_size = 0;
    let err = run(&cfg).unwrap_err();
    assert_eq!(err.exit_code(), 2);
    assert!(err.to_string().contains("S^B"), "{err}");
    assert!(fs::read_dir(tmp.path()).unwrap().next().is_none());
}

#[test]
fn three_by_three_grid_runs_nine_cells() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SweepSpec::from_toml_str(
        r#"
        seed = 5
        [grid]
        "chain.block_interval" = [5, 15, 60]
        "chain.max_block_size" = [5, 10, 20]
        "#,
    )
    .unwrap();
    assert_eq!(spec.total_runs(), 9);
    let base = chain_only(tmp.path());
    let outcome = sweep(&spec, &base).unwrap();
    assert_eq!(outcome.completed, 9);
    assert_eq!(outcome.exit_code(), 0);
    let summary = fs::read_to_string(tmp.path().join("sweep_summary.csv")).unwrap();
    let lines: Vec<&str> = summary.lines().collect();
    assert_eq!(lines.len(), 10);
    assert!(lines[0].contains("chain.block_interval,chain.max_block_size"));
    assert!(lines[0].contains("final_test_acc") && lines[0].contains("mean_aob") && lines[0].contains("stale_rate"));
    // last key varies fastest
    assert!(lines[1].contains(",5,5,"), "{}", lines[1]);
    assert!(lines[2].contains(",5,10,"), "{}", lines[2]);
    let dirs = fs::read_dir(tmp.path()).unwrap().filter(|e| e.as_ref().unwrap().path().is_dir()).count();
    assert_eq!(dirs, 9);
}

#[test]
fn replications_get_distinct_seeds() {
    let spec = SweepSpec::from_toml_str(
        r#"
        replications = 3
        [grid]
        "chain.block_interval" = [5, 15, 60]
        "chain.max_block_size" = [5, 10, 20]
        "fl.clients" = [10, 50, 100]
        "#,
    )
    .unwrap();
    assert_eq!(spec.total_runs(), 81);
    let runs = spec.expand(&ExperimentConfig::default());
    assert_eq!(runs.len(), 81);
    let seeds: HashSet<u64> = runs.iter().map(|r| r.config.as_ref().unwrap().seed).collect();
    assert_eq!(seeds.len(), 81);
    let ids: HashSet<String> = runs.iter().map(|r| r.config.as_ref().unwrap().run_id()).collect();
    assert_eq!(ids.len(), 81);
    // the same spec expands identically
    let again = spec.expand(&ExperimentConfig::default());
    assert!(runs.iter().zip(&again).all(|(a, b)| a.config.as_ref().unwrap() == b.config.as_ref().unwrap()));
}

#[test]
fn failing_cells_are_recorded_and_the_sweep_continues() {
    let tmp = tempfile::tempdir().unwrap();
    let spec = SweepSpec::from_toml_str(
        r#"
        [grid]
        "chain.max_block_size" = [0, 5]
        "#,
    )
    .unwrap();
    let outcome = sweep(&spec, &chain_only(tmp.path())).unwrap();
    assert_eq!(outcome.completed, 1);
    assert_eq!(outcome.failures.len(), 1);
    assert!(outcome.failures[0].error.contains("S^B"), "{:?}", outcome.failures);
    assert_eq!(outcome.exit_code(), 4);
    let summary = fs::read_to_string(tmp.path().join("sweep_summary.csv")).unwrap();
    assert_eq!(summary.lines().count(), 2);
    assert!(tmp.path().join("sweep_failures.csv").is_file());
}

#[test]
fn sweep_specs_reject_bad_shapes() {
    assert!(SweepSpec::from_toml_str("bogus = 1").is_err());
    assert!(SweepSpec::from_toml_str("replications = 0").is_err());
    assert!(SweepSpec::from_toml_str("[grid]\n\"chain.miners\" = 3").is_err());
    assert!(SweepSpec::from_toml_str("[grid]\n\"chain.miners\" = []").is_err());
    let spec = SweepSpec::from_toml_str("[grid]\n\"chain.no_such_key\" = [1]").unwrap();
    let runs = spec.expand(&ExperimentConfig::default());
    assert!(runs[0].config.as_ref().unwrap_err().contains("no_such_key"));
}

#[test]
fn sweep_file_resolves_base_and_output_relative_to_itself() {
    let tmp = tempfile::tempdir().unwrap();
    fs::write(tmp.path().join("base.toml"), "[chain]\nminers = 4\n[fl]\nmode = \"chain-only\"\n").unwrap();
    fs::write(
        tmp.path().join("sweep.toml"),
        "base = \"base.toml\"\noutput_dir = \"out\"\n[grid]\n\"chain.block_interval\" = [5.0]\n",
    )
    .unwrap();
    let (spec, base) = load_sweep(&tmp.path().join("sweep.toml")).unwrap();
    assert_eq!(base.chain.miners, 4);
    assert_eq!(spec.output_dir.as_deref(), Some(tmp.path().join("out").as_path()));
}

#[test]
fn bundled_configs_load() {
    let root = std::path::Path::new(env!("CARGO_MANIFEST_DIR")).join("../../configs");
    let default = flchain_core::load_config(&root.join("default.toml")).unwrap();
    assert_eq!(default, ExperimentConfig::default());
    let mnist = flchain_core::load_config(&root.join("mnist-subset.toml")).unwrap();
    assert!(mnist.data.train_images.as_ref().unwrap().is_file());
    let (spec, _) = load_sweep(&root.join("sweep-bi-sb.toml")).unwrap();
    assert_eq!(spec.total_runs(), 27);
    let (spec, base) = load_sweep(&root.join("sweep-capacity.toml")).unwrap();
    assert_eq!(spec.total_runs(), 12);
    assert!(spec.expand(&base).iter().all(|r| r.config.is_ok()));
}
