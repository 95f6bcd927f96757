use chrono::NaiveDateTime;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::table::{parse_timestamp, RawTable};
use crate::error::{Error, Result};

/// Row indices of the three evaluation splits.
#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct SplitSpec {
    pub train: Vec<usize>,
    pub validation: Vec<usize>,
    pub test: Vec<usize>,
}

impl SplitSpec {
    fn checked(self) -> Result<Self> {
        for (name, part) in [
            ("train", &self.train),
            ("validation", &self.validation),
            ("test", &self.test),
        ] {
            if part.is_empty() {
                return Err(Error::Split(format!("{name} split is empty")));
            }
        }
        Ok(self)
    }
}

/// How to split a table, as written in experiment configs.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "strategy", rename_all = "snake_case")]
pub enum SplitStrategy {
    /// Train before `validation_start`, validation before `test_start`,
    /// test from `test_start` on. Dates as `YYYY-MM-DD`.
    ByTime {
        validation_start: String,
        test_start: String,
    },
    /// Seeded random split with the given validation and test fractions.
    ByFraction {
        validation: f64,
        test: f64,
        seed: u64,
    },
}

impl SplitStrategy {
    pub fn apply(&self, table: &RawTable) -> Result<SplitSpec> {
        match self {
            SplitStrategy::ByTime {
                validation_start,
                test_start,
            } => {
                let parse = |s: &str| {
                    parse_timestamp(s)
                        .ok_or_else(|| Error::Config(format!("bad cutoff date {s:?}")))
                };
                split_by_time(table, parse(validation_start)?, parse(test_start)?)
            }
            SplitStrategy::ByFraction {
                validation,
                test,
                seed,
            } => split_by_fraction(table.n_rows(), *validation, *test, *seed),
        }
    }
}

pub fn split_by_time(
    table: &RawTable,
    validation_start: NaiveDateTime,
    test_start: NaiveDateTime,
) -> Result<SplitSpec> {
    let ts = table
        .timestamp
        .as_ref()
        .ok_or_else(|| Error::Split("time split needs a timestamp column".into()))?;
    if validation_start >= test_start {
        return Err(Error::Split(
            "validation cutoff must precede test cutoff".into(),
        ));
    }
    let mut split = SplitSpec {
        train: Vec::new(),
        validation: Vec::new(),
        test: Vec::new(),
    };
    for (i, &t) in ts.values.iter().enumerate() {
        if t < validation_start {
            split.train.push(i);
        } else if t < test_start {
            split.validation.push(i);
        } else {
            split.test.push(i);
        }
    }
    split.checked()
}

pub fn split_by_fraction(
    n_rows: usize,
    validation: f64,
    test: f64,
    seed: u64,
) -> Result<SplitSpec> {
    if !(validation > 0.0 && test > 0.0 && validation + test < 1.0) {
        return Err(Error::Split(format!(
            "fractions validation={validation}, test={test} must be positive and sum below 1"
        )));
    }
    let mut order: Vec<usize> = (0..n_rows).collect();
    order.shuffle(&mut ChaCha8Rng::seed_from_u64(seed));
    let n_val = (n_rows as f64 * validation).round() as usize;
    let n_test = (n_rows as f64 * test).round() as usize;
    let n_train = n_rows.saturating_sub(n_val + n_test);
    let mut split = SplitSpec {
        train: order[..n_train].to_vec(),
        validation: order[n_train..n_train + n_val].to_vec(),
        test: order[n_train + n_val..].to_vec(),
    };
    split.train.sort_unstable();
    split.validation.sort_unstable();
    split.test.sort_unstable();
    split.checked()
}
