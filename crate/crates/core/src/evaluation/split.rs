use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::synth::derive_seed;

/// Repeated random train/validation/test splits.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SplitPlan {
    pub seed: u64,
    pub n_repeats: usize,
    /// Train, validation and test fractions.
    pub fractions: [f64; 3],
}

impl Default for SplitPlan {
    fn default() -> Self {
        Self { seed: 0, n_repeats: 30, fractions: [1.0 / 3.0; 3] }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Split {
    pub train: Vec<usize>,
    pub val: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitPlan {
    pub fn new(seed: u64, n_repeats: usize, fractions: [f64; 3]) -> Result<Self> {
        let plan = Self { seed, n_repeats, fractions };
        plan.validate()?;
        Ok(plan)
    }

    pub fn validate(&self) -> Result<()> {
        if self.n_repeats == 0 {
            return Err(Error::Config("n_repeats must be >= 1".into()));
        }
        if self.fractions.iter().any(|f| !(*f > 0.0 && f.is_finite())) {
            return Err(Error::Config(format!("split fractions must be positive, got {:?}", self.fractions)));
        }
        let total: f64 = self.fractions.iter().sum();
        if (total - 1.0).abs() > 1e-9 {
            return Err(Error::Config(format!("split fractions sum to {total}, expected 1")));
        }
        Ok(())
    }

    pub fn repeat_seed(&self, repeat: usize) -> u64 {
        derive_seed(self.seed, repeat as u64)
    }

    /// Shuffles `0..n` with the repeat's seed and cuts it by the fractions.
    pub fn split(&self, n: usize, repeat: usize) -> Result<Split> {
        self.validate()?;
        if n < 3 {
            return Err(Error::Protocol(format!("need at least 3 samples to split, got {n}")));
        }
        let n_train = (n as f64 * self.fractions[0]).round() as usize;
        let n_val = (n as f64 * self.fractions[1]).round() as usize;
        if n_train == 0 || n_val == 0 || n_train + n_val >= n {
            return Err(Error::Protocol(format!("fractions {:?} leave an empty part for {n} samples", self.fractions)));
        }
        let mut order: Vec<usize> = (0..n).collect();
        order.shuffle(&mut ChaCha8Rng::seed_from_u64(self.repeat_seed(repeat)));
        let test = order.split_off(n_train + n_val);
        let val = order.split_off(n_train);
        Ok(Split { train: order, val, test })
    }
}

/// Shuffles `0..n` and holds out `round(n * val_fraction)` indices (at
/// least one) for validation. Returns `(train, val)`.
pub fn holdout_split(n: usize, val_fraction: f64, seed: u64) -> Result<(Vec<usize>, Vec<usize>)> {
    if !(val_fraction > 0.0 && val_fraction < 1.0) {
        return Err(Error::Config(format!("validation fraction must lie in (0, 1), got {val_fraction}")));
    }
    if n < 3 {
        return Err(Error::Protocol(format!("need at least 3 samples for a holdout split, got {n}")));
    }
    let n_val = ((n as f64 * val_fraction).round() as usize).clamp(1, n - 2);
    let mut order: Vec<usize> = (0..n).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(derive_seed(seed, 0)));
    let val = order.split_off(n - n_val);
    Ok((order, val))
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn validation() {
        assert!(SplitPlan::new(0, 0, [1.0 / 3.0; 3]).is_err());
        assert!(SplitPlan::new(0, 1, [0.5, 0.5, 0.0]).is_err());
        assert!(SplitPlan::new(0, 1, [0.5, 0.3, 0.3]).is_err());
        assert!(SplitPlan::default().split(2, 0).is_err());
    }

    #[test]
    fn repeats_differ_and_are_reproducible() {
        let plan = SplitPlan::default();
        assert_eq!(plan.split(30, 3).unwrap(), plan.split(30, 3).unwrap());
        assert_ne!(plan.split(30, 3).unwrap(), plan.split(30, 4).unwrap());
    }

    #[test]
    fn holdout_partitions() {
        let (train, val) = holdout_split(10, 0.3, 4).unwrap();
        assert_eq!((train.len(), val.len()), (7, 3));
        let mut all: Vec<usize> = train.iter().chain(&val).copied().collect();
        all.sort_unstable();
        assert_eq!(all, (0..10).collect::<Vec<_>>());
        assert_eq!(holdout_split(10, 0.3, 4).unwrap(), (train, val));
        assert!(holdout_split(10, 1.0, 4).is_err());
        assert_eq!(holdout_split(3, 0.01, 0).unwrap().1.len(), 1);
    }

    proptest! {
        #[test]
        fn splits_partition(n in 3usize..200, repeat in 0usize..30, seed in any::<u64>()) {
            let plan = SplitPlan { seed, ..Default::default() };
            let s = plan.split(n, repeat).unwrap();
            let mut all: Vec<usize> = s.train.iter().chain(&s.val).chain(&s.test).copied().collect();
            all.sort_unstable();
            prop_assert_eq!(all, (0..n).collect::<Vec<_>>());
            for (part, f) in [&s.train, &s.val, &s.test].iter().zip(plan.fractions) {
                prop_assert!((part.len() as f64 - n as f64 * f).abs() <= 1.0);
            }
        }
    }
}
