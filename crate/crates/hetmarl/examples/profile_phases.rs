//! Scratch profiler: times each phase of one training step on
//! late-training-shape data (trained policy, long episodes).

use std::time::Instant;

use hetmarl::env::SkirmishEnv;
use hetmarl::model::{select_actions, SummedQLoss};
use hetmarl::numerics::{adam_update, AdamConfig, AdamState, LossFn, ParamGrads, StagedParams, Tape};
use hetmarl::replay::Transition;
use hetmarl::trainer::{build_network, prepare_batch, BatchLoss, TrainConfig};
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

fn main() {
    let cfg = TrainConfig::default();
    let (model, mut store) = build_network(&cfg).unwrap();
    hetmarl::model::load_checkpoint_file(&mut store, "/tmp/c7_pilot_s0/checkpoint.bin").unwrap();
    let mut env = SkirmishEnv::new(cfg.env.clone()).unwrap();
    let mut rng = ChaCha8Rng::seed_from_u64(1);

    // Greedy rollout for late-training-shape transitions.
    let mut transitions: Vec<Transition> = Vec::new();
    let (mut graph, mut masks) = env.reset(7);
    let mut sel_time = 0.0;
    let mut env_time = 0.0;
    let mut env_steps = 0usize;
    while transitions.len() < 64 {
        let t0 = Instant::now();
        let q = model.q_values(&store, &[&graph]).unwrap();
        let actions = select_actions(&q[0], &masks, 0.05, &mut rng).unwrap();
        sel_time += t0.elapsed().as_secs_f64();
        let t1 = Instant::now();
        let out = env.step(&actions).unwrap();
        env_time += t1.elapsed().as_secs_f64();
        env_steps += 1;
        transitions.push(
            Transition::new(graph, actions, out.graph.clone(), out.rewards.clone(), out.done, out.masks.clone()).unwrap(),
        );
        if out.done {
            let (g, m) = env.reset(transitions.len() as u64);
            graph = g;
            masks = m;
        } else {
            graph = out.graph;
            masks = out.masks;
        }
    }
    println!(
        "per env step: selection {:.2}ms, env {:.2}ms",
        1e3 * sel_time / env_steps as f64,
        1e3 * env_time / env_steps as f64
    );

    let batch: Vec<&Transition> = transitions.iter().take(32).collect();
    let weights = vec![1.0; 32];
    let target = store.cast::<f32>();

    let reps = 20;
    let t0 = Instant::now();
    let mut prep = None;
    for _ in 0..reps {
        prep = Some(prepare_batch(&model, &target, &batch, &weights, 0.99, false).unwrap());
    }
    let prep = prep.unwrap();
    println!("prepare_batch: {:.2}ms", 1e3 * t0.elapsed().as_secs_f64() / reps as f64);

    let loss = BatchLoss { model: &model, prep: &prep, trr_coef: 0.0 };
    let mut fwd = 0.0;
    let mut bwd = 0.0;
    let mut collect = 0.0;
    let mut grads_out = None;
    for _ in 0..reps {
        let mut tape = Tape::new();
        let staged = StagedParams::stage(&store, &mut tape);
        let t1 = Instant::now();
        let parts = loss.build(&mut tape, &staged);
        fwd += t1.elapsed().as_secs_f64();
        let t2 = Instant::now();
        let grads = tape.backward(parts.loss);
        bwd += t2.elapsed().as_secs_f64();
        let t3 = Instant::now();
        grads_out = Some(ParamGrads::collect(&store, &staged, &grads));
        collect += t3.elapsed().as_secs_f64();
    }
    println!(
        "loss forward: {:.2}ms, backward: {:.2}ms, collect: {:.2}ms",
        1e3 * fwd / reps as f64,
        1e3 * bwd / reps as f64,
        1e3 * collect / reps as f64
    );

    let grads = grads_out.unwrap();
    let mut adam = AdamState::new(&store);
    let acfg = AdamConfig { lr: 2.5e-4, ..AdamConfig::default() };
    let t4 = Instant::now();
    for _ in 0..reps {
        adam_update(&mut store, &grads, &mut adam, &acfg).unwrap();
    }
    println!("adam: {:.2}ms", 1e3 * t4.elapsed().as_secs_f64() / reps as f64);

    // One net-only forward for scale (the selection path above).
    let layout = model.layout(&[&transitions[0].s]).unwrap();
    let qloss = SummedQLoss { model: &model, layout: &layout };
    let t5 = Instant::now();
    for _ in 0..reps {
        let mut tape = Tape::new();
        let staged = StagedParams::stage_frozen(&store, &mut tape);
        let _ = qloss.loss(&mut tape, &staged);
    }
    println!("single-graph frozen forward: {:.2}ms", 1e3 * t5.elapsed().as_secs_f64() / reps as f64);
}
