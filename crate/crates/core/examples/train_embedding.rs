// Trains a three-layer network from score-derived triplets with the clipped
// triplet loss and early stopping on validation violations.

use tripemb::data::{generate_synthetic, Dataset};
use tripemb::experiment::{train, RunResult, SamplerKind, TrainConfig};
use tripemb::nn::{FilterSchedule, ModelConfig};
use tripemb::Result;

pub fn run_example() -> Result<RunResult> {
    let dataset = Dataset::with_split(generate_synthetic(160, 3, 32, 64)?, 3)?;
    let train_images = dataset.select(&dataset.split.train_ids)?;
    let val_images = dataset.select(&dataset.split.val_ids)?;

    let mut config = TrainConfig::new(ModelConfig::new(FilterSchedule::Fixed(8), 3, 2, 32, 64)?);
    config.sampler = SamplerKind::Extent;
    config.max_epochs = 6;
    config.patience = 3;
    config.triplets_per_epoch = 150;
    config.validation_triplets = 1000;
    config.seed = 1;

    let result = train(&config, &train_images, &val_images)?;
    for e in &result.history {
        println!("epoch {:2}  loss {:.4}  validation violations {:5.2}%", e.epoch, e.train_loss, e.val_violations);
    }
    println!(
        "kept epoch {} ({:.2}% validation violations) after {} epochs",
        result.best_epoch, result.val_violations, result.epochs_used
    );
    Ok(result)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
