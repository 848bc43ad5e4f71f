//! Trains briefly into a run directory, then renders the metrics file as an
//! SVG with raw and exponentially smoothed traces.
//!
//!     cargo run --example plot_curves

use hetmarl::error::Result;
use hetmarl::harness::{emit_plot, read_metrics, run_train};
use hetmarl::trainer::TrainConfig;

fn main() -> Result<()> {
    let cfg = TrainConfig {
        total_steps: 1_500,
        warmup: 100,
        seed: 1,
        ..TrainConfig::default()
    };
    let dir = std::env::temp_dir().join("plot_curves_example");
    let report = run_train(&cfg, &dir, false)?;
    println!(
        "trained {} steps -> {} episodes in {}",
        cfg.total_steps,
        report.episodes,
        dir.display()
    );

    let metrics = dir.join("metrics.csv");
    let rows = read_metrics(&metrics)?;
    let last = rows.last().expect("run produced episodes");
    println!(
        "last episode: {} steps alive, mean agent reward {:.3}",
        last.steps_alive, last.mean_agent_reward
    );

    let svg = dir.join("curves.svg");
    emit_plot(&metrics, &svg, 0.9)?;
    println!("plot written to {}", svg.display());
    Ok(())
}
