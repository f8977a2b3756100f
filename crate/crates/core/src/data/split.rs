//! Source-disjoint train/test splits. No source (actor, session) ever
//! contributes to both sides.

use std::collections::BTreeSet;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::error::{Error, Result};
use crate::model::Dataset;

fn shuffled_sources(dataset: &Dataset, seed: u64) -> Result<Vec<String>> {
    let set: BTreeSet<&str> = dataset.sequences.iter().map(|s| s.source_id.as_str()).collect();
    if set.len() < 2 {
        return Err(Error::Data(format!(
            "a source-disjoint split needs at least 2 sources, found {}",
            set.len()
        )));
    }
    let mut sources: Vec<String> = set.into_iter().map(str::to_string).collect();
    sources.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    Ok(sources)
}

fn partition(dataset: &Dataset, train_sources: &BTreeSet<&str>) -> (Dataset, Dataset) {
    let (train, test): (Vec<_>, Vec<_>) = dataset
        .sequences
        .iter()
        .cloned()
        .partition(|s| train_sources.contains(s.source_id.as_str()));
    (dataset.subset(train), dataset.subset(test))
}

/// Puts `round(fraction · sources)` sources (at least one, and at least one
/// fewer than all) in the training side. Sequence order is preserved.
pub fn split_by_source(dataset: &Dataset, fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0..=1.0).contains(&fraction) {
        return Err(Error::Config(format!("split fraction {fraction} is outside [0, 1]")));
    }
    let sources = shuffled_sources(dataset, seed)?;
    let n = ((fraction * sources.len() as f64).round() as usize).clamp(1, sources.len() - 1);
    let train: BTreeSet<&str> = sources[..n].iter().map(String::as_str).collect();
    Ok(partition(dataset, &train))
}

/// `k` folds over sources; fold `i` tests on every `k`-th shuffled source.
pub fn kfold_by_source(dataset: &Dataset, k: usize, seed: u64) -> Result<Vec<(Dataset, Dataset)>> {
    let sources = shuffled_sources(dataset, seed)?;
    if k < 2 || k > sources.len() {
        return Err(Error::Config(format!(
            "{k} folds requested for {} sources",
            sources.len()
        )));
    }
    Ok((0..k)
        .map(|fold| {
            let train: BTreeSet<&str> = sources
                .iter()
                .enumerate()
                .filter(|(i, _)| i % k != fold)
                .map(|(_, s)| s.as_str())
                .collect();
            partition(dataset, &train)
        })
        .collect())
}

/// Which side of a split to use.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SplitSide {
    Train,
    Test,
    All,
}

impl std::str::FromStr for SplitSide {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s {
            "train" => Ok(SplitSide::Train),
            "test" => Ok(SplitSide::Test),
            "all" => Ok(SplitSide::All),
            other => Err(Error::Config(format!("unknown split `{other}` (expected train, test or all)"))),
        }
    }
}

/// Selects one side of a source split, or the whole dataset.
pub fn select_split(dataset: &Dataset, side: SplitSide, fraction: f64, seed: u64) -> Result<Dataset> {
    match side {
        SplitSide::All => Ok(dataset.clone()),
        SplitSide::Train => Ok(split_by_source(dataset, fraction, seed)?.0),
        SplitSide::Test => Ok(split_by_source(dataset, fraction, seed)?.1),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{FrameSequence, MultimodalSequence, TaskSpec};
    use ndarray::Array2;
    use std::collections::BTreeMap;

    fn dataset(sources: usize, per: usize) -> Dataset {
        let mut seqs = Vec::new();
        for s in 0..sources {
            for i in 0..per {
                let src = format!("actor{s:02}");
                let part = FrameSequence::new("m", Array2::zeros((2, 1)), BTreeMap::new(), &src).unwrap();
                seqs.push(MultimodalSequence::single(format!("{src}-{i}"), part).unwrap());
            }
        }
        Dataset::new(vec![TaskSpec::new("t", 2).unwrap()], seqs).unwrap()
    }

    fn sources(d: &Dataset) -> BTreeSet<String> {
        d.sequences.iter().map(|s| s.source_id.clone()).collect()
    }

    #[test]
    fn thirty_sources_split_in_half() {
        let d = dataset(30, 2);
        let (a, b) = split_by_source(&d, 0.5, 1).unwrap();
        assert_eq!(sources(&a).len(), 15);
        assert_eq!(sources(&b).len(), 15);
        assert!(sources(&a).is_disjoint(&sources(&b)));
        assert_eq!(a.len() + b.len(), d.len());
        let (a2, _) = split_by_source(&d, 0.5, 1).unwrap();
        assert_eq!(sources(&a), sources(&a2));
    }

    #[test]
    fn single_source_is_refused() {
        assert!(split_by_source(&dataset(1, 3), 0.5, 0).is_err());
    }

    #[test]
    fn kfold_covers_every_source_once() {
        let d = dataset(7, 1);
        let folds = kfold_by_source(&d, 3, 2).unwrap();
        let mut seen = BTreeSet::new();
        for (train, test) in &folds {
            assert!(sources(train).is_disjoint(&sources(test)));
            for s in sources(test) {
                assert!(seen.insert(s));
            }
        }
        assert_eq!(seen.len(), 7);
    }
}
