//! Proportional prioritized replay in isolation: how priorities shape the
//! sampling distribution and how importance weights correct for it.
//!
//!     cargo run --example per_sampling

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use hetmarl::env::{random_policy, EnvConfig, SkirmishEnv};
use hetmarl::error::Result;
use hetmarl::replay::{PrioritizedReplay, Transition};

fn main() -> Result<()> {
    // Two real transitions to have something in the slots.
    let mut env = SkirmishEnv::new(EnvConfig::default())?;
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let (graph, masks) = env.reset(rng.gen());
    let a1 = random_policy(&masks, &mut rng);
    let s1 = env.step(&a1)?;
    let a2 = random_policy(&s1.masks, &mut rng);
    let s2 = env.step(&a2)?;

    let mut buffer = PrioritizedReplay::new(64)?;
    let i1 = buffer.push(Transition::new(
        graph,
        a1,
        s1.graph.clone(),
        s1.rewards.clone(),
        s1.done,
        s1.masks.clone(),
    )?);
    let i2 = buffer.push(Transition::new(
        s1.graph,
        a2,
        s2.graph,
        s2.rewards,
        s2.done,
        s2.masks,
    )?);

    // Errors of 1 and 3 (minus the floor the buffer adds back).
    let floor = 1e-5;
    buffer.update_priorities(&[i1, i2], &[1.0 - floor, 3.0 - floor])?;

    let alpha = 0.6;
    let beta = 0.4;
    let draws = 100_000;
    let mut counts = [0usize; 2];
    let mut max_weight: [f64; 2] = [0.0; 2];
    for _ in 0..draws {
        let (indices, weights) = buffer.sample(1, alpha, beta, &mut rng)?;
        let slot = indices[0].slot;
        counts[slot] += 1;
        max_weight[slot] = max_weight[slot].max(weights[0]);
    }

    let expected = 3.0f64.powf(alpha) / (1.0 + 3.0f64.powf(alpha));
    println!("priorities [1, 3], alpha {alpha}: P(slot1) = 3^a/(1+3^a) = {expected:.4}");
    println!(
        "observed over {draws} draws: slot0 {:.4}, slot1 {:.4}",
        counts[0] as f64 / draws as f64,
        counts[1] as f64 / draws as f64
    );
    println!(
        "importance weights at beta {beta} (max over draws): slot0 {:.4}, slot1 {:.4}",
        max_weight[0], max_weight[1]
    );
    println!("(single-sample batches normalize to 1; the ratio shows up in mixed batches)");

    // Stratified draws can repeat a slot; grab a batch that holds both.
    let (indices, weights) = loop {
        let (indices, weights) = buffer.sample(2, alpha, beta, &mut rng)?;
        if indices[0].slot != indices[1].slot {
            break (indices, weights);
        }
    };
    println!("a mixed batch of 2 (weights normalized by the batch max):");
    for (i, w) in indices.iter().zip(&weights) {
        println!("  slot {} weight {w:.4}", i.slot);
    }
    Ok(())
}
