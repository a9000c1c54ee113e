use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng;

/// Partition of image ids into training, validation and test sets.
#[derive(Clone, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SplitSpec {
    pub seed: u64,
    pub train_ids: Vec<String>,
    pub val_ids: Vec<String>,
    pub test_ids: Vec<String>,
}

impl SplitSpec {
    /// Training and validation ids together, in stored order.
    pub fn train_group(&self) -> Vec<String> {
        self.train_ids.iter().chain(&self.val_ids).cloned().collect()
    }

    pub fn validate(&self) -> Result<()> {
        let mut all: Vec<&String> = self.train_ids.iter().chain(&self.val_ids).chain(&self.test_ids).collect();
        let n = all.len();
        all.sort();
        all.dedup();
        if all.len() != n {
            return Err(Error::data("split id lists overlap"));
        }
        Ok(())
    }
}

/// Shuffles `ids`; the first half (rounded up) is the training group, the rest
/// the test set. The training group is halved again into train and validation,
/// an odd id going to train.
pub fn split_dataset(ids: &[String], seed: u64) -> Result<SplitSpec> {
    if ids.len() < 4 {
        return Err(Error::usage(format!("need at least 4 ids to split, got {}", ids.len())));
    }
    let mut shuffled = ids.to_vec();
    shuffled.shuffle(&mut rng::stream(seed));
    let test_ids = shuffled.split_off(ids.len().div_ceil(2));
    let (train_ids, val_ids) = halve(shuffled);
    let split = SplitSpec { seed, train_ids, val_ids, test_ids };
    split.validate()?;
    Ok(split)
}

/// Fresh random train/validation halving of a training group.
pub fn resplit_train_group(group: &[String], seed: u64) -> Result<(Vec<String>, Vec<String>)> {
    if group.len() < 2 {
        return Err(Error::usage("training group needs at least 2 ids"));
    }
    let mut shuffled = group.to_vec();
    shuffled.shuffle(&mut rng::stream(seed));
    Ok(halve(shuffled))
}

fn halve(mut ids: Vec<String>) -> (Vec<String>, Vec<String>) {
    let second = ids.split_off(ids.len().div_ceil(2));
    (ids, second)
}
