//! Save a freshly initialized model and read it back bit for bit.
//!
//! cargo run --example checkpoint

use nmt_distill::nnmodel::{load_checkpoint, save_checkpoint, Checkpoint, ModelDims, ModelParams, TrainingMeta};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let dims = ModelDims::new(20, 24, 8, 16)?;
    let checkpoint = Checkpoint {
        params: ModelParams::init(dims, 42),
        meta: TrainingMeta {
            epoch: 0,
            lr: 1.0,
            best_score: None,
            seed: 42,
        },
    };
    let dir = std::env::temp_dir().join("nmt-distill-checkpoint-example");
    std::fs::create_dir_all(&dir)?;
    let path = dir.join("model.ckpt");
    save_checkpoint(&checkpoint, &path)?;

    let loaded = load_checkpoint(&path)?;
    println!("{} parameters, {} bytes on disk", dims.num_params(), std::fs::metadata(&path)?.len());
    for (name, t) in loaded.params.tensors() {
        println!("  {name:<12} {:?}", t.shape());
    }
    assert_eq!(loaded.to_bytes(), checkpoint.to_bytes());
    println!("round trip is bit-exact");
    Ok(())
}
