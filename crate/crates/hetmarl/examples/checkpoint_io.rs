//! Checkpoint round trip: save a network, load it into a freshly built one,
//! and confirm the two agree bit for bit. Also shows the loader refusing a
//! file whose architecture does not match.
//!
//!     cargo run --example checkpoint_io

use hetmarl::error::Result;
use hetmarl::model::{load_checkpoint_file, save_checkpoint_file, CommKind};
use hetmarl::trainer::{build_network, TrainConfig};

fn main() -> Result<()> {
    let cfg = TrainConfig::default();
    let (_, store) = build_network(&cfg)?;
    let dir = std::env::temp_dir();
    let path = dir.join("checkpoint_io_example.bin");
    save_checkpoint_file(&store, &path)?;
    let bytes = std::fs::metadata(&path)?.len();
    println!(
        "saved {} tensors ({} elements, {bytes} bytes) to {}",
        store.len(),
        store.total_elements(),
        path.display()
    );

    // A different seed gives different weights; loading overwrites them all.
    let (_, mut restored) = build_network(&TrainConfig { seed: 99, ..cfg.clone() })?;
    load_checkpoint_file(&mut restored, &path)?;
    let mut mismatches = 0usize;
    for id in store.ids() {
        let (a, b) = (store.get(id), restored.get(id));
        if a.data() != b.data() {
            mismatches += 1;
        }
    }
    println!("after load: {mismatches} tensors differ (bit-exact round trip)");

    // Same file against a different architecture: refused, not coerced.
    let gat = TrainConfig {
        model: hetmarl::model::ModelConfig {
            comm: CommKind::Gat { heads: 4 },
            ..cfg.model
        },
        ..cfg
    };
    let (_, mut wrong) = build_network(&gat)?;
    match load_checkpoint_file(&mut wrong, &path) {
        Err(e) => println!("attention-stack store rejects the file: {e}"),
        Ok(_) => println!("unexpected: load succeeded across architectures"),
    }

    std::fs::remove_file(&path)?;
    Ok(())
}
