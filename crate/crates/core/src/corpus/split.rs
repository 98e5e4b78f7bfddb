use ndiff::SeededRng;
use serde::{Deserialize, Serialize};

use super::{CorpusError, InflectionClass, InflectionExample};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitRatios {
    pub train: f64,
    pub dev: f64,
    pub test: f64,
}

impl Default for SplitRatios {
    fn default() -> Self {
        Self {
            train: 0.8,
            dev: 0.1,
            test: 0.1,
        }
    }
}

impl SplitRatios {
    pub fn validate(&self) -> Result<(), CorpusError> {
        let parts = [self.train, self.dev, self.test];
        if parts.iter().any(|r| !(0.0..=1.0).contains(r)) {
            return Err(CorpusError::Split(format!("ratios out of [0, 1]: {parts:?}")));
        }
        let total: f64 = parts.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(CorpusError::Split(format!("ratios sum to {total}, not 1")));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DatasetSplit {
    pub train: Vec<InflectionExample>,
    pub dev: Vec<InflectionExample>,
    pub test: Vec<InflectionExample>,
    pub seed: u64,
}

/// Seeded random train/dev/test partition.
///
/// Dev and test receive `round(n · ratio)` examples each and train the rest.
/// With `stratify_irregular`, irregular examples are partitioned separately
/// so dev and test each get their share of them. Within each part the
/// original input order is kept.
pub fn split_dataset(
    data: &[InflectionExample],
    ratios: SplitRatios,
    seed: u64,
    stratify_irregular: bool,
) -> Result<DatasetSplit, CorpusError> {
    ratios.validate()?;
    if data.is_empty() {
        return Err(CorpusError::Split("no examples to split".into()));
    }
    let groups: Vec<Vec<usize>> = if stratify_irregular {
        let (irr, reg): (Vec<usize>, Vec<usize>) =
            (0..data.len()).partition(|&i| data[i].class == InflectionClass::Irregular);
        vec![reg, irr]
    } else {
        vec![(0..data.len()).collect()]
    };

    let mut rng = SeededRng::new(seed);
    let (mut train, mut dev, mut test) = (Vec::new(), Vec::new(), Vec::new());
    for mut idx in groups {
        rng.shuffle(&mut idx);
        let n = idx.len();
        let n_dev = ((n as f64 * ratios.dev).round() as usize).min(n);
        let n_test = ((n as f64 * ratios.test).round() as usize).min(n - n_dev);
        dev.extend_from_slice(&idx[..n_dev]);
        test.extend_from_slice(&idx[n_dev..n_dev + n_test]);
        train.extend_from_slice(&idx[n_dev + n_test..]);
    }
    let take = |mut idx: Vec<usize>| -> Vec<InflectionExample> {
        idx.sort_unstable();
        idx.into_iter().map(|i| data[i].clone()).collect()
    };
    Ok(DatasetSplit {
        train: take(train),
        dev: take(dev),
        test: take(test),
        seed,
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn examples(n: usize, irregular: usize) -> Vec<InflectionExample> {
        (0..n)
            .map(|i| InflectionExample {
                lemma: format!("w{i}"),
                form: format!("w{i}d"),
                tags: vec!["PST".into()],
                class: if i < irregular {
                    InflectionClass::Irregular
                } else {
                    InflectionClass::Regular
                },
            })
            .collect()
    }

    #[test]
    fn ten_examples_split_eight_one_one() {
        let s = split_dataset(&examples(10, 0), SplitRatios::default(), 1, false).unwrap();
        assert_eq!((s.train.len(), s.dev.len(), s.test.len()), (8, 1, 1));
    }

    #[test]
    fn stratified_irregulars_land_in_test() {
        let data = examples(4253, 218);
        let s = split_dataset(&data, SplitRatios::default(), 7, true).unwrap();
        let irr = |v: &[InflectionExample]| v.iter().filter(|e| e.class == InflectionClass::Irregular).count();
        assert!((21..=22).contains(&irr(&s.test)), "{}", irr(&s.test));
        assert!((21..=22).contains(&irr(&s.dev)));
        assert_eq!(s.train.len() + s.dev.len() + s.test.len(), 4253);
    }

    #[test]
    fn same_seed_same_split() {
        let data = examples(100, 10);
        let a = split_dataset(&data, SplitRatios::default(), 3, true).unwrap();
        let b = split_dataset(&data, SplitRatios::default(), 3, true).unwrap();
        assert_eq!(a, b);
        let c = split_dataset(&data, SplitRatios::default(), 4, true).unwrap();
        assert_ne!(a, c);
    }

    #[test]
    fn bad_ratios_are_rejected() {
        let r = SplitRatios {
            train: 0.8,
            dev: 0.1,
            test: 0.2,
        };
        assert!(matches!(
            split_dataset(&examples(10, 0), r, 1, false),
            Err(CorpusError::Split(_))
        ));
    }
}
