//! Random-policy episodes on the default map, with the first episode dumped
//! step by step in the graph text format.
//!
//!     cargo run --example skirmish_rollout

use std::fs::File;
use std::io::Write;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetmarl::env::{random_policy, EnvConfig, SkirmishEnv};
use hetmarl::error::Result;

fn main() -> Result<()> {
    let cfg = EnvConfig::default();
    println!(
        "map {}x{}, {} allies vs {} enemies, {} actions per agent",
        cfg.width,
        cfg.height,
        cfg.ally_count(),
        cfg.enemies_ranged + cfg.enemies_melee,
        cfg.action_count()
    );

    let mut env = SkirmishEnv::new(cfg)?;
    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let trace_path = "rollout_trace.txt";
    let mut trace = Some(File::create(trace_path)?);

    for episode in 0..5 {
        let (mut graph, mut masks) = env.reset(rng.gen());
        let mut steps = 0u32;
        let mut reward_sum = 0.0;
        loop {
            if let Some(f) = trace.as_mut() {
                write!(f, "{}", graph.to_text())?;
            }
            let actions = random_policy(&masks, &mut rng);
            let out = env.step(&actions)?;
            steps += 1;
            reward_sum += out.rewards.iter().sum::<f64>();
            if out.done {
                println!(
                    "episode {episode}: {steps} steps, team reward {reward_sum:.2}, victory {}",
                    out.victory
                );
                break;
            }
            graph = out.graph;
            masks = out.masks;
        }
        // Only the first episode goes to the trace file.
        trace = None;
    }
    println!("first episode trace written to {trace_path}");
    Ok(())
}
