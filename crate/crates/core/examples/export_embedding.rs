// Embeds test images with a trained network and writes the `id,score,e1,e2`
// table used for score-coloured scatter plots.
//
// `cargo run --example export_embedding -- out.csv` keeps the table.

use std::path::PathBuf;

use tripemb::data::{generate_synthetic, Dataset};
use tripemb::experiment::{embed_dataset, train, write_embedding_csv, EmbeddingRow, TrainConfig};
use tripemb::loss::sq_euclidean;
use tripemb::nn::{FilterSchedule, ModelConfig};
use tripemb::Result;

/// Mean squared distance over pairs drawn from `a` and `b`, skipping identical rows.
fn mean_distance(a: &[&EmbeddingRow], b: &[&EmbeddingRow]) -> Result<f64> {
    let mut total = 0.0;
    let mut count = 0usize;
    for x in a {
        for y in b {
            if x.id != y.id {
                total += sq_euclidean(&x.coords, &y.coords)?;
                count += 1;
            }
        }
    }
    Ok(total / count.max(1) as f64)
}

pub fn run_example(path: Option<PathBuf>) -> Result<Vec<EmbeddingRow>> {
    let dataset = Dataset::with_split(generate_synthetic(160, 9, 32, 64)?, 9)?;
    let mut config = TrainConfig::new(ModelConfig::new(FilterSchedule::Fixed(8), 3, 2, 32, 64)?);
    config.max_epochs = 5;
    config.patience = 3;
    config.triplets_per_epoch = 150;
    config.validation_triplets = 1000;
    let result = train(
        &config,
        &dataset.select(&dataset.split.train_ids)?,
        &dataset.select(&dataset.split.val_ids)?,
    )?;

    let rows = embed_dataset(&result.best_params, &dataset.test_images()?)?;
    let healthy: Vec<&EmbeddingRow> = rows.iter().filter(|r| r.score.value() == 0).collect();
    let marked: Vec<&EmbeddingRow> = rows.iter().filter(|r| r.score.value() >= 2).collect();
    println!(
        "mean squared distance: within score 0 {:.4}, score 0 to score >= 2 {:.4}",
        mean_distance(&healthy, &healthy)?,
        mean_distance(&healthy, &marked)?
    );

    let mut buf = Vec::new();
    write_embedding_csv(&mut buf, &rows)?;
    match path {
        Some(p) => {
            std::fs::write(&p, &buf)?;
            println!("wrote {} rows to {}", rows.len(), p.display());
        }
        None => print!("{}", String::from_utf8_lossy(&buf).lines().take(5).collect::<Vec<_>>().join("\n") + "\n"),
    }
    Ok(rows)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example(std::env::args_os().nth(1).map(PathBuf::from)).map(|_| ())
}
