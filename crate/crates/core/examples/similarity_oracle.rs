// Triplets from ordinal scores: the rater oracle, the two training samplers
// and the test selection schemes.

use tripemb::loss::violation_rate;
use tripemb::rng::stream;
use tripemb::sampling::{
    order_triplet, sample_extent, sample_uniform, score_counts, select_test_triplets, ExtentScore, TestScheme,
};
use tripemb::Result;

pub fn run_example() -> Result<Vec<(TestScheme, f64)>> {
    let s = |v: u8| ExtentScore::new(v);
    for labels in [[0, 3, 1], [2, 2, 5], [4, 0, 4]] {
        let sigma = order_triplet([s(labels[0])?, s(labels[1])?, s(labels[2])?]);
        let ordered = sigma.map(|i| labels[i]);
        println!("labels {labels:?} -> anchor, near, far scores {ordered:?}");
    }

    let labels: Vec<ExtentScore> = [0, 0, 0, 0, 0, 0, 0, 1, 1, 2, 3, 0, 0, 1, 4, 5, 0, 2]
        .into_iter()
        .map(s)
        .collect::<Result<_>>()?;
    println!("score counts {:?}", score_counts(&labels));
    let mut rng = stream(1);
    for _ in 0..3 {
        let u = sample_uniform(&labels, &mut rng)?;
        let e = sample_extent(&labels, &mut rng)?;
        let show = |t: tripemb::sampling::Triplet| t.indices().map(|i| labels[i].value());
        println!("uniform {:?}   extent {:?}", show(u), show(e));
    }

    // A one-dimensional embedding that places each image at its score.
    let embedding: Vec<Vec<f64>> = labels.iter().map(|y| vec![f64::from(y.value())]).collect();
    let mut rates = Vec::new();
    for scheme in TestScheme::ALL {
        let triplets = select_test_triplets(scheme, &labels, 2000, &mut rng)?;
        let rate = violation_rate(&embedding, &triplets)?;
        println!("{scheme:<8} violations of the score line: {rate:5.2}%");
        rates.push((scheme, rate));
    }
    Ok(rates)
}

#[allow(dead_code)]
fn main() -> Result<()> {
    run_example().map(|_| ())
}
