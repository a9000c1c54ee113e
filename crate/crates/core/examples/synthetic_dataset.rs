// Generates a synthetic scored dataset, writes it in the on-disk layout and
// reads it back.
//
// `cargo run --example synthetic_dataset -- <dir>` keeps the files.

use std::path::PathBuf;

use tripemb::data::synthetic::{generate_samples, SyntheticConfig};
use tripemb::data::{load_dataset, save_dataset, Dataset, ImageFormat};
use tripemb::sampling::score_counts;
use tripemb::Result;

pub fn run_example(dir: Option<PathBuf>) -> Result<Dataset> {
    let samples = generate_samples(60, 11, 32, 64, &SyntheticConfig::default())?;
    for s in samples.iter().filter(|s| s.image.score.value() > 0).take(4) {
        println!(
            "{} score {} lesion fraction {:.3} (interval {:?})",
            s.image.id,
            s.image.score,
            s.lesion_fraction(),
            s.image.score.fraction_range()
        );
    }
    let images: Vec<_> = samples.into_iter().map(|s| s.image).collect();
    let dataset = Dataset::with_split(images, 11)?;
    let labels = tripemb::data::scores_of(&dataset.images);
    println!("score counts {:?}", score_counts(&labels));
    println!(
        "split: {} train, {} validation, {} test",
        dataset.split.train_ids.len(),
        dataset.split.val_ids.len(),
        dataset.split.test_ids.len()
    );

    let tmp;
    let dir = match dir {
        Some(d) => d,
        None => {
            tmp = tempfile::tempdir()?;
            tmp.path().to_path_buf()
        }
    };
    save_dataset(&dir, &dataset, ImageFormat::Bin)?;
    let back = load_dataset(&dir)?;
    assert_eq!(back, dataset);
    println!("wrote and reloaded {} images under {}", back.images.len(), dir.display());
    Ok(back)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example(std::env::args_os().nth(1).map(PathBuf::from)).map(|_| ())
}
