use std::io::Write;

use rayon::prelude::*;
use serde::Serialize;

use crate::data::{scores_of, LabeledImage};
use crate::error::{Error, Result};
use crate::loss;
use crate::nn::NetworkParams;
use crate::rng;
use crate::sampling::{self, ExtentScore, TestScheme};

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct SchemeResult {
    pub scheme: TestScheme,
    pub triplets: usize,
    /// Percentage of violated triplets; `None` when the scheme cannot be
    /// sampled from the test labels.
    pub violations: Option<f64>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub unavailable: Option<String>,
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EvalReport {
    pub schemes: Vec<SchemeResult>,
}

impl EvalReport {
    pub fn get(&self, scheme: TestScheme) -> Option<f64> {
        self.schemes.iter().find(|r| r.scheme == scheme).and_then(|r| r.violations)
    }
}

/// Violation rates under every test scheme. Each scheme draws its own
/// `triplets_per_scheme` triplets from a stream derived from `seed`.
pub fn evaluate(
    params: &NetworkParams,
    images: &[LabeledImage],
    triplets_per_scheme: usize,
    seed: u64,
) -> Result<EvalReport> {
    if triplets_per_scheme == 0 {
        return Err(Error::usage("triplets per scheme must be positive"));
    }
    let labels = scores_of(images);
    let embeddings = embed_all(params, images)?;
    let schemes = TestScheme::ALL
        .iter()
        .map(|&scheme| {
            let mut r = rng::stream(rng::derive_named(seed, scheme.name()));
            match sampling::select_test_triplets(scheme, &labels, triplets_per_scheme, &mut r) {
                Ok(triplets) => Ok(SchemeResult {
                    scheme,
                    triplets: triplets.len(),
                    violations: Some(loss::violation_rate(&embeddings, &triplets)?),
                    unavailable: None,
                }),
                Err(e) => Ok(SchemeResult {
                    scheme,
                    triplets: 0,
                    violations: None,
                    unavailable: Some(e.to_string()),
                }),
            }
        })
        .collect::<Result<_>>()?;
    Ok(EvalReport { schemes })
}

fn embed_all(params: &NetworkParams, images: &[LabeledImage]) -> Result<Vec<Vec<f64>>> {
    images.par_iter().map(|im| params.embed(&im.pixels)).collect()
}

#[derive(Clone, Debug, PartialEq, Serialize)]
pub struct EmbeddingRow {
    pub id: String,
    pub score: ExtentScore,
    pub coords: Vec<f64>,
}

pub fn embed_dataset(params: &NetworkParams, images: &[LabeledImage]) -> Result<Vec<EmbeddingRow>> {
    let coords = embed_all(params, images)?;
    Ok(images
        .iter()
        .zip(coords)
        .map(|(im, coords)| EmbeddingRow {
            id: im.id.clone(),
            score: im.score,
            coords,
        })
        .collect())
}

/// CSV with header `id,score,e1,...,ed`.
pub fn write_embedding_csv<W: Write>(out: W, rows: &[EmbeddingRow]) -> Result<()> {
    let dim = rows.first().map_or(0, |r| r.coords.len());
    let mut w = csv::Writer::from_writer(out);
    let mut header = vec!["id".to_string(), "score".to_string()];
    header.extend((1..=dim).map(|i| format!("e{i}")));
    w.write_record(&header)?;
    for row in rows {
        if row.coords.len() != dim {
            return Err(Error::usage("embedding rows differ in dimension"));
        }
        let mut record = vec![row.id.clone(), row.score.value().to_string()];
        record.extend(row.coords.iter().map(|c| c.to_string()));
        w.write_record(&record)?;
    }
    w.flush()?;
    Ok(())
}
