//! A short training run through the library API: relational message
//! passing, prioritized replay, target network, epsilon-greedy exploration.
//! Episode metrics stream to stdout as they finish.
//!
//!     cargo run --example train_rgcn

use hetmarl::error::Result;
use hetmarl::trainer::{EpisodeSink, TrainConfig, Trainer};

fn main() -> Result<()> {
    let cfg = TrainConfig {
        total_steps: 2_000,
        warmup: 100,
        seed: 0,
        ..TrainConfig::default()
    };
    println!(
        "training {} steps (batch {}, target sync every {}, gamma {})",
        cfg.total_steps, cfg.batch_size, cfg.target_update_interval, cfg.gamma
    );

    let mut trainer = Trainer::new(cfg)?;
    let mut sink = EpisodeSink(|m| {
        println!(
            "episode {:>3}  steps {:>3}  mean agent reward {:>8.3}  eps {:.3}  loss {:.4}",
            m.episode, m.steps_alive, m.mean_agent_reward, m.epsilon, m.mean_loss
        );
        Ok(())
    });
    let report = trainer.train(&mut sink)?;
    println!(
        "done: {} episodes, {} optimizer steps, {} target syncs",
        report.episodes, report.optimizer_steps, report.target_syncs
    );
    Ok(())
}
