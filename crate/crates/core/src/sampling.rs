//! Similarity oracle and triplet selection.
//!
//! Ground-truth dissimilarity between two images is the distance between
//! their extent scores. Training triplets are drawn either uniformly over all
//! image triples or guided by the scores; test triplets follow one of five
//! schemes contrasting a low-extent group with a high-extent group.

use std::fmt;
use std::io::{BufRead, Write};
use std::str::FromStr;

use rand::distributions::{Distribution, WeightedIndex};
use rand::seq::index;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Six-point ordinal extent score: 0 = none, then 1-5%, 6-25%, 26-50%,
/// 51-75% and 76-100% of the region affected.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(try_from = "u8", into = "u8")]
pub struct ExtentScore(u8);

impl ExtentScore {
    pub const MAX: u8 = 5;
    pub const COUNT: usize = 6;

    pub fn new(score: u8) -> Result<Self> {
        if score > Self::MAX {
            return Err(Error::data(format!("extent score {score} outside 0..=5")));
        }
        Ok(Self(score))
    }

    pub fn value(self) -> u8 {
        self.0
    }

    /// Affected-area fraction interval `(low, high)` for this score.
    pub fn fraction_range(self) -> (f64, f64) {
        match self.0 {
            0 => (0.0, 0.0),
            1 => (0.01, 0.05),
            2 => (0.06, 0.25),
            3 => (0.26, 0.50),
            4 => (0.51, 0.75),
            _ => (0.76, 1.0),
        }
    }
}

impl TryFrom<u8> for ExtentScore {
    type Error = Error;

    fn try_from(v: u8) -> Result<Self> {
        Self::new(v)
    }
}

impl From<ExtentScore> for u8 {
    fn from(s: ExtentScore) -> u8 {
        s.0
    }
}

impl fmt::Display for ExtentScore {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}", self.0)
    }
}

/// Oracle dissimilarity between two scores.
pub fn label_distance(a: ExtentScore, b: ExtentScore) -> u8 {
    a.0.abs_diff(b.0)
}

/// Image indices `(anchor, near, far)`: the anchor is at least as similar to
/// `near` as to `far`.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct Triplet {
    pub anchor: usize,
    pub near: usize,
    pub far: usize,
}

impl Triplet {
    pub fn new(anchor: usize, near: usize, far: usize) -> Result<Self> {
        if anchor == near || anchor == far || near == far {
            return Err(Error::usage(format!(
                "triplet indices must be distinct, got ({anchor}, {near}, {far})"
            )));
        }
        Ok(Self { anchor, near, far })
    }

    pub fn indices(&self) -> [usize; 3] {
        [self.anchor, self.near, self.far]
    }
}

/// Orders three labelled items the way a rater asked for similarity would:
/// returns `sigma` with
///
/// ```text
/// |y[s0] - y[s1]| <= |y[s0] - y[s2]|
/// |y[s0] - y[s1]| <= |y[s1] - y[s2]|
/// |y[s0] - y[s2]| <= |y[s1] - y[s2]|
/// ```
///
/// i.e. the closest pair first, its member nearer the odd one out as the
/// anchor. Among several valid orders the lexicographically smallest wins.
pub fn order_triplet(labels: [ExtentScore; 3]) -> [usize; 3] {
    let d = |a: usize, b: usize| label_distance(labels[a], labels[b]);
    let closest = [(0, 1), (0, 2), (1, 2)]
        .iter()
        .map(|&(a, b)| d(a, b))
        .min()
        .unwrap();
    let mut best: Option<[usize; 3]> = None;
    for (a, b) in [(0, 1), (0, 2), (1, 2)] {
        if d(a, b) != closest {
            continue;
        }
        let c = 3 - a - b;
        for (first, second) in [(a, b), (b, a)] {
            if d(first, c) <= d(second, c) {
                let cand = [first, second, c];
                if best.is_none_or(|b| cand < b) {
                    best = Some(cand);
                }
            }
        }
    }
    best.expect("the closest pair always yields a valid order")
}

/// Draws three distinct images uniformly and lets the oracle assign roles.
pub fn sample_uniform<R: Rng + ?Sized>(labels: &[ExtentScore], rng: &mut R) -> Result<Triplet> {
    if labels.len() < 3 {
        return Err(Error::usage(format!(
            "uniform triplet sampling needs at least 3 images, got {}",
            labels.len()
        )));
    }
    let mut picked = index::sample(rng, labels.len(), 3).into_vec();
    picked.sort_unstable();
    Ok(oracle_triplet(labels, [picked[0], picked[1], picked[2]]))
}

/// Applies [`order_triplet`] to three image indices.
pub fn oracle_triplet(labels: &[ExtentScore], items: [usize; 3]) -> Triplet {
    let sigma = order_triplet(items.map(|i| labels[i]));
    Triplet {
        anchor: items[sigma[0]],
        near: items[sigma[1]],
        far: items[sigma[2]],
    }
}

/// Anchor redraws allowed before [`sample_extent`] gives up.
pub const ANCHOR_ATTEMPTS: usize = 100;

/// Score-guided sampling: uniform anchor, a same-score near image, and a far
/// image of different score drawn with weight `|y_far - y_anchor|`.
pub fn sample_extent<R: Rng + ?Sized>(labels: &[ExtentScore], rng: &mut R) -> Result<Triplet> {
    check_extent_feasible(labels)?;
    for _ in 0..ANCHOR_ATTEMPTS {
        let anchor = rng.gen_range(0..labels.len());
        if let Ok(t) = sample_extent_for_anchor(labels, anchor, rng) {
            return Ok(t);
        }
    }
    Err(Error::Sampling(format!(
        "no anchor with a same-score partner after {ANCHOR_ATTEMPTS} draws"
    )))
}

/// Errors unless some score is shared by two images and another score exists.
pub fn check_extent_feasible(labels: &[ExtentScore]) -> Result<()> {
    let counts = score_counts(labels);
    let distinct = counts.iter().filter(|&&c| c > 0).count();
    if distinct < 2 || !counts.iter().any(|&c| c >= 2) {
        return Err(Error::usage(
            "extent sampling needs two images sharing a score and one image with another score",
        ));
    }
    Ok(())
}

/// The near and far draws of [`sample_extent`] for a fixed anchor.
pub fn sample_extent_for_anchor<R: Rng + ?Sized>(
    labels: &[ExtentScore],
    anchor: usize,
    rng: &mut R,
) -> Result<Triplet> {
    let y = *labels
        .get(anchor)
        .ok_or_else(|| Error::usage(format!("anchor {anchor} out of range")))?;
    let partners: Vec<usize> = (0..labels.len())
        .filter(|&i| i != anchor && labels[i] == y)
        .collect();
    if partners.is_empty() {
        return Err(Error::Sampling(format!("anchor {anchor} has no same-score partner")));
    }
    let (others, weights): (Vec<usize>, Vec<u32>) = (0..labels.len())
        .filter(|&i| labels[i] != y)
        .map(|i| (i, u32::from(label_distance(labels[i], y))))
        .unzip();
    if others.is_empty() {
        return Err(Error::Sampling(format!("no image differs in score from anchor {anchor}")));
    }
    let near = partners[rng.gen_range(0..partners.len())];
    let far = others[WeightedIndex::new(&weights).expect("weights are positive").sample(rng)];
    Ok(Triplet { anchor, near, far })
}

/// Test triplet selection schemes.
#[derive(Clone, Copy, Debug, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "SCREAMING_SNAKE_CASE")]
pub enum TestScheme {
    /// Two images with the same score and one with a different score.
    AllDiff,
    /// Two without emphysema (score 0) and one with (score >= 1).
    Ge1,
    /// Two with 0-5% (scores 0-1) and one with more than 5% (>= 2).
    Ge2,
    /// Two with 0-25% (scores 0-2) and one with more than 25% (>= 3).
    Ge3,
    /// Two with 0-50% (scores 0-3) and one with more than 50% (>= 4).
    Ge4,
}

impl TestScheme {
    pub const ALL: [TestScheme; 5] = [
        TestScheme::AllDiff,
        TestScheme::Ge1,
        TestScheme::Ge2,
        TestScheme::Ge3,
        TestScheme::Ge4,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TestScheme::AllDiff => "ALL_DIFF",
            TestScheme::Ge1 => "GE1",
            TestScheme::Ge2 => "GE2",
            TestScheme::Ge3 => "GE3",
            TestScheme::Ge4 => "GE4",
        }
    }

    /// Smallest score of the far group for the threshold schemes. Scores below
    /// it form the group supplying anchor and near.
    pub fn threshold(self) -> Option<u8> {
        match self {
            TestScheme::AllDiff => None,
            TestScheme::Ge1 => Some(1),
            TestScheme::Ge2 => Some(2),
            TestScheme::Ge3 => Some(3),
            TestScheme::Ge4 => Some(4),
        }
    }

    /// Whether `t` has the label structure this scheme selects.
    pub fn admits(self, labels: &[ExtentScore], t: &Triplet) -> bool {
        let [a, n, f] = t.indices().map(|i| labels[i].value());
        match self.threshold() {
            None => a == n && f != a,
            Some(k) => a < k && n < k && f >= k,
        }
    }
}

impl fmt::Display for TestScheme {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TestScheme {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TestScheme::ALL
            .into_iter()
            .find(|t| t.name() == s)
            .ok_or_else(|| Error::usage(format!("unknown test scheme {s:?}")))
    }
}

/// Draws `count` test triplets for `scheme`.
///
/// `ALL_DIFF` is uniform over all image triples with exactly two equal
/// scores, ordered by the oracle (the odd score is far). Threshold schemes
/// draw anchor and near uniformly without replacement from the low group and
/// far uniformly from the high group.
pub fn select_test_triplets<R: Rng + ?Sized>(
    scheme: TestScheme,
    labels: &[ExtentScore],
    count: usize,
    rng: &mut R,
) -> Result<Vec<Triplet>> {
    match scheme.threshold() {
        None => select_all_diff(labels, count, rng),
        Some(k) => {
            let (low, high): (Vec<usize>, Vec<usize>) =
                (0..labels.len()).partition(|&i| labels[i].value() < k);
            if low.len() < 2 || high.is_empty() {
                return Err(Error::usage(format!(
                    "scheme {scheme} needs two images with score < {k} and one with score >= {k} \
                     (have {} and {})",
                    low.len(),
                    high.len()
                )));
            }
            Ok((0..count)
                .map(|_| {
                    let pair = index::sample(rng, low.len(), 2);
                    Triplet {
                        anchor: low[pair.index(0)],
                        near: low[pair.index(1)],
                        far: high[rng.gen_range(0..high.len())],
                    }
                })
                .collect())
        }
    }
}

fn select_all_diff<R: Rng + ?Sized>(labels: &[ExtentScore], count: usize, rng: &mut R) -> Result<Vec<Triplet>> {
    let counts = score_counts(labels);
    let n = labels.len();
    // Number of (pair with score s, different-score image) combinations.
    let weights: Vec<f64> = counts
        .iter()
        .map(|&c| (c * c.saturating_sub(1) / 2) as f64 * (n - c) as f64)
        .collect();
    if weights.iter().all(|&w| w == 0.0) {
        return Err(Error::usage(
            "scheme ALL_DIFF needs two images sharing a score and one image with another score",
        ));
    }
    let groups: Vec<Vec<usize>> = (0..ExtentScore::COUNT as u8)
        .map(|s| (0..n).filter(|&i| labels[i].value() == s).collect())
        .collect();
    let pick_score = WeightedIndex::new(&weights).expect("at least one positive weight");
    Ok((0..count)
        .map(|_| {
            let s = pick_score.sample(rng);
            let group = &groups[s];
            let pair = index::sample(rng, group.len(), 2);
            let (a, b) = (group[pair.index(0)], group[pair.index(1)]);
            let mut far = rng.gen_range(0..n - group.len());
            // Map the draw onto the images outside the group, in index order.
            for &g in group {
                if g <= far {
                    far += 1;
                }
            }
            oracle_triplet(labels, [a.min(b), a.max(b), far])
        })
        .collect())
}

/// Uniform draws over triples that are not all one score, oracle-ordered.
/// Used for validation.
pub fn sample_mixed<R: Rng + ?Sized>(labels: &[ExtentScore], count: usize, rng: &mut R) -> Result<Vec<Triplet>> {
    let distinct = score_counts(labels).iter().filter(|&&c| c > 0).count();
    if labels.len() < 3 || distinct < 2 {
        return Err(Error::usage(
            "mixed triplets need at least 3 images with at least two distinct scores",
        ));
    }
    let mut out = Vec::with_capacity(count);
    while out.len() < count {
        let t = sample_uniform(labels, rng)?;
        let [a, n, f] = t.indices().map(|i| labels[i]);
        if !(a == n && n == f) {
            out.push(t);
        }
    }
    Ok(out)
}

pub fn score_counts(labels: &[ExtentScore]) -> [usize; ExtentScore::COUNT] {
    let mut counts = [0; ExtentScore::COUNT];
    for s in labels {
        counts[s.0 as usize] += 1;
    }
    counts
}

/// Writes a triplet set: a `# <count> <scheme>` header, then one `i,j,k` line each.
pub fn write_triplets<W: Write>(mut out: W, scheme: &str, triplets: &[Triplet]) -> Result<()> {
    if scheme.is_empty() || scheme.contains(char::is_whitespace) {
        return Err(Error::usage(format!("invalid triplet set name {scheme:?}")));
    }
    writeln!(out, "# {} {}", triplets.len(), scheme)?;
    for t in triplets {
        writeln!(out, "{},{},{}", t.anchor, t.near, t.far)?;
    }
    Ok(())
}

/// Reads a file written by [`write_triplets`], returning the scheme name and triplets.
pub fn read_triplets<R: BufRead>(input: R) -> Result<(String, Vec<Triplet>)> {
    let mut lines = input.lines();
    let header = lines
        .next()
        .ok_or_else(|| Error::format("empty triplet file"))??;
    let mut fields = header
        .strip_prefix("# ")
        .ok_or_else(|| Error::format("triplet file header must start with '# '"))?
        .split_whitespace();
    let (Some(count), Some(scheme), None) = (fields.next(), fields.next(), fields.next()) else {
        return Err(Error::format(format!("malformed triplet header {header:?}")));
    };
    let count: usize = count
        .parse()
        .map_err(|_| Error::format(format!("bad triplet count {count:?}")))?;
    let mut triplets = Vec::with_capacity(count);
    for (lineno, line) in lines.enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        let parsed: Vec<usize> = line
            .split(',')
            .map(|f| f.trim().parse::<usize>())
            .collect::<std::result::Result<_, _>>()
            .map_err(|_| Error::format(format!("line {}: bad triplet {line:?}", lineno + 2)))?;
        let [i, j, k] = parsed[..] else {
            return Err(Error::format(format!("line {}: expected i,j,k", lineno + 2)));
        };
        triplets.push(Triplet::new(i, j, k).map_err(|e| Error::format(e.to_string()))?);
    }
    if triplets.len() != count {
        return Err(Error::format(format!(
            "header announces {count} triplets, found {}",
            triplets.len()
        )));
    }
    Ok((scheme.to_string(), triplets))
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn scores(v: &[u8]) -> Vec<ExtentScore> {
        v.iter().map(|&s| ExtentScore::new(s).unwrap()).collect()
    }

    fn s3(a: u8, b: u8, c: u8) -> [ExtentScore; 3] {
        [a, b, c].map(|v| ExtentScore::new(v).unwrap())
    }

    #[test]
    fn label_distances() {
        let d = |a, b| label_distance(ExtentScore::new(a).unwrap(), ExtentScore::new(b).unwrap());
        assert_eq!(d(0, 0), 0);
        assert_eq!(d(0, 5), 5);
        assert_eq!(d(1, 3), 2);
        assert!(ExtentScore::new(6).is_err());
    }

    #[test]
    fn oracle_examples() {
        assert_eq!(order_triplet(s3(0, 0, 0)), [0, 1, 2]);
        assert_eq!(order_triplet(s3(0, 3, 1)), [2, 0, 1]);
        assert_eq!(order_triplet(s3(2, 2, 5)), [0, 1, 2]);
        assert_eq!(order_triplet(s3(5, 2, 2)), [1, 2, 0]);
    }

    #[test]
    fn uniform_on_three_images_uses_all() {
        let labels = scores(&[4, 0, 1]);
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        for _ in 0..20 {
            let t = sample_uniform(&labels, &mut rng).unwrap();
            assert_eq!(t, Triplet::new(2, 1, 0).unwrap());
        }
        assert!(matches!(sample_uniform(&labels[..2], &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn extent_forced_choice() {
        let labels = scores(&[0, 0, 3]);
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let t = sample_extent_for_anchor(&labels, 0, &mut rng).unwrap();
        assert_eq!(t, Triplet::new(0, 1, 2).unwrap());
        assert!(matches!(sample_extent_for_anchor(&labels, 2, &mut rng), Err(Error::Sampling(_))));
    }

    #[test]
    fn extent_infeasible_labels() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        assert!(matches!(sample_extent(&scores(&[1, 1, 1]), &mut rng), Err(Error::Usage(_))));
        assert!(matches!(sample_extent(&scores(&[0, 1, 2]), &mut rng), Err(Error::Usage(_))));
    }

    #[test]
    fn ge1_forced() {
        let labels = scores(&[0, 0, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let ts = select_test_triplets(TestScheme::Ge1, &labels, 50, &mut rng).unwrap();
        for t in ts {
            assert_eq!(t.far, 2);
            assert_eq!(t.anchor + t.near, 1);
        }
    }

    #[test]
    fn empty_group_names_scheme() {
        let labels = scores(&[0, 0, 1, 2]);
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let err = select_test_triplets(TestScheme::Ge4, &labels, 5, &mut rng).unwrap_err();
        assert!(err.to_string().contains("GE4"), "{err}");
        assert!(select_test_triplets(TestScheme::AllDiff, &scores(&[0, 1, 2]), 5, &mut rng).is_err());
    }

    #[test]
    fn scheme_names_round_trip() {
        for s in TestScheme::ALL {
            assert_eq!(s.name().parse::<TestScheme>().unwrap(), s);
            assert_eq!(serde_json::to_string(&s).unwrap(), format!("\"{}\"", s.name()));
        }
    }

    #[test]
    fn triplet_file_round_trip() {
        let ts = vec![Triplet::new(0, 1, 2).unwrap(), Triplet::new(9, 4, 7).unwrap()];
        let mut buf = Vec::new();
        write_triplets(&mut buf, "GE2", &ts).unwrap();
        assert_eq!(String::from_utf8(buf.clone()).unwrap(), "# 2 GE2\n0,1,2\n9,4,7\n");
        let (name, back) = read_triplets(&buf[..]).unwrap();
        assert_eq!(name, "GE2");
        assert_eq!(back, ts);
        assert!(read_triplets(&b"# 3 GE2\n0,1,2\n"[..]).is_err());
        assert!(read_triplets(&b"# 1 GE2\n0,0,2\n"[..]).is_err());
    }
}
