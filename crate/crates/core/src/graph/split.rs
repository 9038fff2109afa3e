use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use super::Dataset;
use crate::rng;
use crate::{Error, Result};

/// Partition fractions. Target-train and shadow sizes are floored, the test
/// split takes the remainder; validation is carved out of target-train the
/// same way.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SplitSpec {
    pub target_train_frac: f64,
    pub shadow_frac: f64,
    pub test_frac: f64,
    pub val_within_target_frac: f64,
    pub seed: u64,
}

impl Default for SplitSpec {
    fn default() -> Self {
        SplitSpec {
            target_train_frac: 0.4,
            shadow_frac: 0.4,
            test_frac: 0.2,
            val_within_target_frac: 0.2,
            seed: 41,
        }
    }
}

#[derive(Clone, Debug)]
pub struct Split {
    pub target_train: Dataset,
    pub target_val: Dataset,
    pub shadow: Dataset,
    pub test: Dataset,
}

/// `floor(frac · n)` with a small guard against products like `0.29 · 100`
/// landing just below an integer.
pub(crate) fn frac_floor(frac: f64, n: usize) -> usize {
    ((frac * n as f64) + 1e-9).floor() as usize
}

impl SplitSpec {
    pub fn validate(&self) -> Result<()> {
        let fr = [self.target_train_frac, self.shadow_frac, self.test_frac];
        if fr.iter().any(|f| !(0.0..=1.0).contains(f)) {
            return Err(Error::Config(format!("split fractions out of [0,1]: {fr:?}")));
        }
        let sum: f64 = fr.iter().sum();
        if (sum - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {sum}, not 1")));
        }
        if !(0.0..1.0).contains(&self.val_within_target_frac) {
            return Err(Error::Config("val_within_target_frac must be in [0,1)".into()));
        }
        Ok(())
    }
}

pub fn split(dataset: &Dataset, spec: &SplitSpec) -> Result<Split> {
    spec.validate()?;
    let n = dataset.len();
    if n == 0 {
        return Err(Error::Config("cannot split an empty dataset".into()));
    }
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut rng::stream(spec.seed, "split"));

    let n_target = frac_floor(spec.target_train_frac, n);
    let n_shadow = frac_floor(spec.shadow_frac, n);
    let n_val = frac_floor(spec.val_within_target_frac, n_target);
    let (target, rest) = order.split_at(n_target);
    let (shadow, test) = rest.split_at(n_shadow.min(rest.len()));
    let (train, val) = target.split_at(n_target - n_val);

    for (name, part) in [("target-train", train), ("target-val", val), ("shadow", shadow), ("test", test)] {
        if part.is_empty() {
            return Err(Error::Config(format!("split leaves the {name} part empty ({n} graphs)")));
        }
    }
    let base = &dataset.name;
    Ok(Split {
        target_train: dataset.subset(format!("{base}/target-train"), train),
        target_val: dataset.subset(format!("{base}/target-val"), val),
        shadow: dataset.subset(format!("{base}/shadow"), shadow),
        test: dataset.subset(format!("{base}/test"), test),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::generate_motif_dataset;

    #[test]
    fn default_sizes_on_100() {
        let ds = generate_motif_dataset(100, 1);
        let s = split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(
            (s.target_train.len(), s.target_val.len(), s.shadow.len(), s.test.len()),
            (32, 8, 40, 20)
        );
    }

    #[test]
    fn parts_cover_dataset_disjointly() {
        let ds = generate_motif_dataset(57, 2);
        let s = split(&ds, &SplitSpec::default()).unwrap();
        let mut all: Vec<String> = [&s.target_train, &s.target_val, &s.shadow, &s.test]
            .iter()
            .flat_map(|d| d.graphs().iter().map(|g| serde_json::to_string(g).unwrap()))
            .collect();
        let mut orig: Vec<String> = ds.graphs().iter().map(|g| serde_json::to_string(g).unwrap()).collect();
        all.sort();
        orig.sort();
        assert_eq!(all, orig);
    }

    #[test]
    fn everything_to_target_is_rejected() {
        let ds = generate_motif_dataset(20, 1);
        let spec = SplitSpec {
            target_train_frac: 1.0,
            shadow_frac: 0.0,
            test_frac: 0.0,
            ..Default::default()
        };
        assert!(matches!(split(&ds, &spec), Err(Error::Config(_))));
    }

    #[test]
    fn fractions_must_sum_to_one() {
        let ds = generate_motif_dataset(20, 1);
        let spec = SplitSpec {
            test_frac: 0.3,
            ..Default::default()
        };
        assert!(split(&ds, &spec).is_err());
    }

    #[test]
    fn deterministic() {
        let ds = generate_motif_dataset(60, 5);
        let a = split(&ds, &SplitSpec::default()).unwrap();
        let b = split(&ds, &SplitSpec::default()).unwrap();
        assert_eq!(a.shadow, b.shadow);
        assert_eq!(a.test, b.test);
        assert_eq!(a.target_val, b.target_val);
    }
}
