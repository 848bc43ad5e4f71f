//! Run orchestration: owns the on-disk layout of a run directory and the
//! gradient-audit suites, so the command-line front end stays a thin parser.
//!
//! A training run directory holds:
//!   run_manifest.json   what produced this directory, with the full config
//!   metrics.csv         one row per episode, appended as the run progresses
//!   checkpoint.bin      final parameters (last good ones on divergence)
//!   checkpoint.stepN.bin  periodic snapshots every [`CHECKPOINT_INTERVAL`]

pub mod config;
pub mod metrics;
pub mod plot;

pub use config::{config_to_json, parse_config};
pub use metrics::{parse_metrics, read_metrics, MetricsWriter, METRICS_HEADER};
pub use plot::{emit_plot, render_plot, smooth, DEFAULT_SMOOTHING};

use std::fs::{self, File};
use std::io::BufWriter;
use std::path::{Path, PathBuf};
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use serde_json::{json, Value};

use crate::env::{random_policy, EnvConfig, SkirmishEnv};
use crate::error::Result;
use crate::graph::StateGraph;
use crate::model::{
    load_checkpoint_file, save_checkpoint_file, CommKind, ModelConfig, SummedQLoss,
};
use crate::numerics::{check_gradients, GradCheckConfig, ParamStore};
use crate::replay::Transition;
use crate::trainer::{
    baseline_episodes, build_network, evaluate_episodes, prepare_batch, summarize, BatchLoss,
    EvalReport, TrainConfig, TrainHooks, TrainMetrics, TrainReport, Trainer,
};

/// Environment steps between periodic parameter snapshots during training.
pub const CHECKPOINT_INTERVAL: usize = 10_000;

/// `{unix seconds}-s{seed}`: sortable, and distinct across seeds launched in
/// the same second.
pub fn run_id(cfg: &TrainConfig) -> String {
    let secs = SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0);
    format!("{secs}-s{}", cfg.seed)
}

fn write_manifest(cfg: &TrainConfig, dir: &Path, outputs: &[(&str, &str)]) -> Result<()> {
    let outputs: serde_json::Map<String, Value> = outputs
        .iter()
        .map(|&(k, v)| (k.to_string(), Value::from(v)))
        .collect();
    let manifest = json!({
        "run_id": run_id(cfg),
        "code_version": env!("CARGO_PKG_VERSION"),
        "config": config_to_json(cfg),
        "outputs": outputs,
    });
    let text = serde_json::to_string_pretty(&manifest)?;
    fs::write(dir.join("run_manifest.json"), text + "\n")?;
    Ok(())
}

struct RunHooks {
    writer: MetricsWriter<BufWriter<File>>,
    start: Option<Instant>,
    dir: PathBuf,
}

impl TrainHooks for RunHooks {
    fn on_episode(&mut self, m: TrainMetrics) -> Result<()> {
        self.writer.write(&m)
    }

    fn clock(&mut self) -> f64 {
        self.start.map(|s| s.elapsed().as_secs_f64()).unwrap_or(0.0)
    }

    fn checkpoint_interval(&self) -> Option<usize> {
        Some(CHECKPOINT_INTERVAL)
    }

    fn on_checkpoint(&mut self, step: usize, params: &ParamStore<f32>) -> Result<()> {
        save_checkpoint_file(params, self.dir.join(format!("checkpoint.step{step}.bin")))
    }
}

/// Trains into `out_dir`: manifest first, metrics row by row, periodic
/// snapshots, and a final `checkpoint.bin`. On divergence the optimizer
/// leaves the last good parameters in place, so they are still checkpointed
/// before the error propagates. `real_clock` switches the wall_seconds
/// column from an all-zero stub (byte-reproducible output) to elapsed time.
pub fn run_train(cfg: &TrainConfig, out_dir: &Path, real_clock: bool) -> Result<TrainReport> {
    fs::create_dir_all(out_dir)?;
    write_manifest(
        cfg,
        out_dir,
        &[("metrics", "metrics.csv"), ("checkpoint", "checkpoint.bin")],
    )?;
    let mut trainer = Trainer::new(cfg.clone())?;
    let mut hooks = RunHooks {
        writer: MetricsWriter::create(out_dir.join("metrics.csv"))?,
        start: real_clock.then(Instant::now),
        dir: out_dir.to_path_buf(),
    };
    let outcome = trainer.train(&mut hooks);
    save_checkpoint_file(trainer.policy(), out_dir.join("checkpoint.bin"))?;
    outcome
}

/// Shared CSV shape for both evaluation commands: the training header with
/// the loss column pinned to zero and epsilon reporting the policy's actual
/// exploration rate (0 greedy, 1 random).
fn write_eval_csv(
    path: &Path,
    rows: &[(u32, f64)],
    ally_count: f64,
    epsilon: f64,
) -> Result<()> {
    let mut w = MetricsWriter::create(path)?;
    for (i, &(steps, reward)) in rows.iter().enumerate() {
        w.write(&TrainMetrics {
            episode: i,
            steps_alive: steps,
            mean_agent_reward: reward / ally_count,
            epsilon,
            mean_loss: 0.0,
            wall_seconds: 0.0,
        })?;
    }
    Ok(())
}

/// Greedy evaluation of a checkpoint: rebuilds the network that `cfg`
/// describes, loads the saved parameters over it, and writes per-episode
/// rows to `out_dir/eval.csv`.
pub fn run_eval(
    cfg: &TrainConfig,
    checkpoint: &Path,
    episodes: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<EvalReport> {
    let (model, mut store) = build_network(cfg)?;
    load_checkpoint_file(&mut store, checkpoint)?;
    let rows = evaluate_episodes(&model, &store, &cfg.env, episodes, seed)?;
    fs::create_dir_all(out_dir)?;
    let ally_count = cfg.env.ally_count() as f64;
    write_eval_csv(&out_dir.join("eval.csv"), &rows, ally_count, 0.0)?;
    Ok(summarize(&rows, ally_count))
}

/// Uniform-random policy under the same environment, same CSV shape, for a
/// floor to compare trained runs against.
pub fn run_baseline(
    cfg: &TrainConfig,
    episodes: usize,
    seed: u64,
    out_dir: &Path,
) -> Result<EvalReport> {
    let rows = baseline_episodes(&cfg.env, episodes, seed)?;
    fs::create_dir_all(out_dir)?;
    let ally_count = cfg.env.ally_count() as f64;
    write_eval_csv(&out_dir.join("eval.csv"), &rows, ally_count, 1.0)?;
    Ok(summarize(&rows, ally_count))
}

/// One gradient-audit suite: the largest relative error between analytic
/// and central-difference gradients over sampled elements of every tensor.
#[derive(Clone, Debug)]
pub struct GradSuite {
    pub name: &'static str,
    pub max_rel_err: f64,
    pub worst_param: String,
    pub elements_checked: usize,
}

/// Relative errors above this mean the analytic gradient disagrees with the
/// finite-difference probe beyond what f64 roundoff explains.
pub const GRADCHECK_TOLERANCE: f64 = 1e-4;

fn small_env() -> EnvConfig {
    EnvConfig {
        width: 8,
        height: 8,
        step_limit: 40,
        allies_ranged: 1,
        allies_melee: 1,
        enemies_ranged: 1,
        enemies_melee: 1,
        ..EnvConfig::default()
    }
}

fn small_model(comm: CommKind) -> ModelConfig {
    ModelConfig {
        comm,
        frf: false,
        embed_width: 8,
        hidden_width: 8,
        comm_layers: 2,
    }
}

fn rollout(env_cfg: &EnvConfig, steps: usize, seed: u64) -> Result<Vec<Transition>> {
    let mut env = SkirmishEnv::new(env_cfg.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (mut graph, mut masks) = env.reset(rng.gen());
    let mut out = Vec::new();
    while out.len() < steps {
        let actions = random_policy(&masks, &mut rng);
        let step = env.step(&actions)?;
        out.push(Transition::new(
            graph,
            actions,
            step.graph.clone(),
            step.rewards.clone(),
            step.done,
            step.masks.clone(),
        )?);
        if step.done {
            let (g, m) = env.reset(rng.gen());
            graph = g;
            masks = m;
        } else {
            graph = step.graph;
            masks = step.masks;
        }
    }
    Ok(out)
}

/// Audits analytic gradients against central differences on three stacks:
/// the relational composition network, the attention network, and the full
/// training objective (targets, importance weights, attention matching).
/// All three run in f64 over graphs sampled from real environment rollouts.
pub fn run_gradcheck(seed: u64) -> Result<Vec<GradSuite>> {
    let env_cfg = small_env();
    let transitions = rollout(&env_cfg, 8, seed)?;
    let graphs: Vec<&StateGraph> = transitions.iter().take(3).map(|t| &t.s).collect();
    let probe = GradCheckConfig {
        h: 1e-4,
        samples_per_tensor: Some(6),
        seed,
    };
    let mut suites = Vec::new();

    {
        let cfg = TrainConfig {
            model: small_model(CommKind::Rgcn { bases: 2 }),
            env: env_cfg.clone(),
            seed,
            ..TrainConfig::default()
        };
        let (model, store) = build_network(&cfg)?;
        let store = store.cast::<f64>();
        let layout = model.layout(&graphs)?;
        let loss = SummedQLoss { model: &model, layout: &layout };
        let report = check_gradients(&store, &loss, &probe);
        suites.push(GradSuite {
            name: "relational",
            max_rel_err: report.max_rel_err,
            worst_param: report.worst_param,
            elements_checked: report.elements_checked,
        });
    }

    let gat_cfg = TrainConfig {
        model: small_model(CommKind::Gat { heads: 2 }),
        env: env_cfg.clone(),
        trr: true,
        seed,
        ..TrainConfig::default()
    };
    let (model, store) = build_network(&gat_cfg)?;
    let store = store.cast::<f64>();

    {
        let layout = model.layout(&graphs)?;
        let loss = SummedQLoss { model: &model, layout: &layout };
        let report = check_gradients(&store, &loss, &probe);
        suites.push(GradSuite {
            name: "attention",
            max_rel_err: report.max_rel_err,
            worst_param: report.worst_param,
            elements_checked: report.elements_checked,
        });
    }

    {
        let batch: Vec<&Transition> = transitions.iter().take(4).collect();
        let weights = vec![1.0; batch.len()];
        let prep = prepare_batch(&model, &store, &batch, &weights, gat_cfg.gamma, true)?;
        let loss = BatchLoss {
            model: &model,
            prep: &prep,
            trr_coef: gat_cfg.trr_coef,
        };
        let report = check_gradients(&store, &loss, &probe);
        suites.push(GradSuite {
            name: "objective",
            max_rel_err: report.max_rel_err,
            worst_param: report.worst_param,
            elements_checked: report.elements_checked,
        });
    }

    Ok(suites)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::read_records;

    fn quick_cfg() -> TrainConfig {
        TrainConfig {
            total_steps: 90,
            batch_size: 4,
            buffer_capacity: 128,
            warmup: 8,
            target_update_interval: 25,
            model: small_model(CommKind::Rgcn { bases: 2 }),
            env: small_env(),
            seed: 5,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn train_run_writes_the_full_directory_layout() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_train(&quick_cfg(), dir.path(), false).unwrap();
        assert!(report.episodes > 0);
        assert!(report.optimizer_steps > 0);

        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap())
                .unwrap();
        assert_eq!(manifest["code_version"], env!("CARGO_PKG_VERSION"));
        assert_eq!(manifest["config"]["seed"], 5);
        assert_eq!(manifest["outputs"]["metrics"], "metrics.csv");
        assert!(manifest["run_id"].as_str().unwrap().ends_with("-s5"));

        let rows = read_metrics(dir.path().join("metrics.csv")).unwrap();
        assert_eq!(rows.len(), report.episodes);
        assert!(rows.iter().all(|r| r.wall_seconds == 0.0), "stub clock");

        let records =
            read_records(&mut File::open(dir.path().join("checkpoint.bin")).unwrap()).unwrap();
        assert!(!records.is_empty());
    }

    // Uses only settings the flat key set can express: the fixed network
    // widths have no keys, so they stay at their defaults here.
    #[test]
    fn manifest_config_snapshot_parses_back_to_the_same_config() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = TrainConfig {
            total_steps: 30,
            batch_size: 4,
            buffer_capacity: 128,
            warmup: 8,
            target_update_interval: 25,
            model: ModelConfig {
                comm: CommKind::Rgcn { bases: 2 },
                ..ModelConfig::default()
            },
            env: small_env(),
            seed: 5,
            ..TrainConfig::default()
        };
        run_train(&cfg, dir.path(), false).unwrap();
        let manifest: Value =
            serde_json::from_str(&fs::read_to_string(dir.path().join("run_manifest.json")).unwrap())
                .unwrap();
        let mut f = tempfile::NamedTempFile::new().unwrap();
        serde_json::to_writer(&mut f, &manifest["config"]).unwrap();
        let back = parse_config(Some(f.path()), &[], None).unwrap();
        assert_eq!(back, cfg);
    }

    #[test]
    fn periodic_snapshots_land_on_interval_boundaries() {
        let dir = tempfile::tempdir().unwrap();
        let mut cfg = quick_cfg();
        cfg.total_steps = 25;
        // An interval that divides the run twice.
        struct Probe {
            inner: Vec<usize>,
        }
        impl TrainHooks for Probe {
            fn on_episode(&mut self, _m: TrainMetrics) -> Result<()> {
                Ok(())
            }
            fn checkpoint_interval(&self) -> Option<usize> {
                Some(10)
            }
            fn on_checkpoint(&mut self, step: usize, _p: &ParamStore<f32>) -> Result<()> {
                self.inner.push(step);
                Ok(())
            }
        }
        let mut probe = Probe { inner: Vec::new() };
        Trainer::new(cfg).unwrap().train(&mut probe).unwrap();
        assert_eq!(probe.inner, vec![10, 20]);
        drop(dir);
    }

    #[test]
    fn eval_reuses_a_trained_checkpoint() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg();
        run_train(&cfg, dir.path(), false).unwrap();

        let eval_dir = dir.path().join("eval");
        let report = run_eval(&cfg, &dir.path().join("checkpoint.bin"), 5, 77, &eval_dir).unwrap();
        assert_eq!(report.episodes, 5);
        let rows = read_metrics(eval_dir.join("eval.csv")).unwrap();
        assert_eq!(rows.len(), 5);
        assert!(rows.iter().all(|r| r.epsilon == 0.0 && r.mean_loss == 0.0));

        let again = run_eval(&cfg, &dir.path().join("checkpoint.bin"), 5, 77, &eval_dir).unwrap();
        assert_eq!(report, again, "same checkpoint, same seed, same report");
    }

    #[test]
    fn eval_rejects_a_checkpoint_from_a_different_architecture() {
        let dir = tempfile::tempdir().unwrap();
        let cfg = quick_cfg();
        run_train(&cfg, dir.path(), false).unwrap();
        let mut other = cfg.clone();
        other.model.comm = CommKind::Gat { heads: 2 };
        let err = run_eval(&other, &dir.path().join("checkpoint.bin"), 2, 1, dir.path());
        assert!(err.is_err());
    }

    #[test]
    fn baseline_writes_the_shared_csv_shape() {
        let dir = tempfile::tempdir().unwrap();
        let report = run_baseline(&quick_cfg(), 6, 3, dir.path()).unwrap();
        assert_eq!(report.episodes, 6);
        let rows = read_metrics(dir.path().join("eval.csv")).unwrap();
        assert_eq!(rows.len(), 6);
        assert!(rows.iter().all(|r| r.epsilon == 1.0));
    }

    #[test]
    fn gradient_audit_passes_on_all_three_stacks() {
        let suites = run_gradcheck(7).unwrap();
        let names: Vec<&str> = suites.iter().map(|s| s.name).collect();
        assert_eq!(names, vec!["relational", "attention", "objective"]);
        for s in &suites {
            assert!(s.elements_checked > 0);
            assert!(
                s.max_rel_err < GRADCHECK_TOLERANCE,
                "{}: {} at {}",
                s.name,
                s.max_rel_err,
                s.worst_param
            );
        }
    }
}
