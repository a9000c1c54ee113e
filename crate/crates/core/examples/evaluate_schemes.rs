// Repeated training runs on fresh train/validation splits, evaluated on a
// fixed test set under every test triplet scheme, with medians and IQRs.

use tripemb::data::{generate_synthetic, Dataset};
use tripemb::experiment::{run_experiment, ExperimentConfig, Summary, TrainConfig};
use tripemb::nn::{FilterSchedule, ModelConfig};
use tripemb::sampling::TestScheme;
use tripemb::Result;

pub fn run_example() -> Result<Summary> {
    let dataset = Dataset::with_split(generate_synthetic(160, 5, 32, 64)?, 5)?;
    let mut train = TrainConfig::new(ModelConfig::new(FilterSchedule::Fixed(8), 3, 2, 32, 64)?);
    train.max_epochs = 4;
    train.patience = 2;
    train.triplets_per_epoch = 120;
    train.validation_triplets = 1000;
    let mut config = ExperimentConfig::new(train);
    config.n_runs = 2;
    config.test_triplets = 2000;

    let summary = Summary::from_result(&run_experiment(&config, &dataset)?);
    println!("{} runs of {}, median epochs {:?}", summary.completed_runs, summary.model, summary.epochs.map(|e| e.median));
    println!("{:<9} {:>16} {:>16}", "scheme", "trained (IQR)", "untrained (IQR)");
    for scheme in TestScheme::ALL {
        let cell = |m: Option<tripemb::experiment::MedianIqr>| {
            m.map_or("n/a".to_string(), |m| format!("{:.1} ({:.1})", m.median, m.iqr))
        };
        println!(
            "{:<9} {:>16} {:>16}",
            scheme.name(),
            cell(summary.test[scheme.name()]),
            cell(summary.untrained_test[scheme.name()])
        );
    }
    Ok(summary)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
