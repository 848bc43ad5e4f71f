//! Builds the attention variant, runs one forward pass on a live state, and
//! prints where each agent's top communication layer puts its weight.
//!
//!     cargo run --example gat_attention

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetmarl::env::{random_policy, SkirmishEnv};
use hetmarl::error::Result;
use hetmarl::model::CommKind;
use hetmarl::numerics::{StagedParams, Tape};
use hetmarl::trainer::{build_network, TrainConfig};

fn main() -> Result<()> {
    let cfg = TrainConfig {
        model: hetmarl::model::ModelConfig {
            comm: CommKind::Gat { heads: 4 },
            ..Default::default()
        },
        seed: 2,
        ..TrainConfig::default()
    };
    let (model, store) = build_network(&cfg)?;

    // A mid-episode state, so units have spread out and seen each other.
    let mut env = SkirmishEnv::new(cfg.env.clone())?;
    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let (mut graph, mut masks) = env.reset(rng.gen());
    for _ in 0..4 {
        let out = env.step(&random_policy(&masks, &mut rng))?;
        graph = out.graph;
        masks = out.masks;
    }
    drop(masks);

    let layout = model.layout(&[&graph])?;
    let mut tape: Tape<f32> = Tape::new();
    let staged = StagedParams::stage_frozen(&store, &mut tape);
    let out = model.forward(&mut tape, &staged, &layout)?;
    let top = out.attention.last().expect("attention stack has maps");

    let table = env.class_table();
    println!("top-layer attention, {} heads:", top.head_count());
    for row in 0..top.segments.len() {
        let dist = top.distribution(&tape, row, 0);
        if dist.is_empty() {
            continue;
        }
        let (_, node) = layout.origin(row);
        println!(
            "  agent node {node} ({}) attends over {} neighbors:",
            table.get(graph.class_of(node)).name,
            dist.len()
        );
        for head in 0..top.head_count() {
            let parts: Vec<String> = top
                .distribution(&tape, row, head)
                .into_iter()
                .map(|(member, w)| {
                    let (_, n) = layout.origin(member);
                    format!("{n}:{w:.4}")
                })
                .collect();
            println!("    head {head}: {}", parts.join("  "));
        }
    }
    Ok(())
}
