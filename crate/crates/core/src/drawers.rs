//! Target-range partitions ("drawers") built from training-target quantiles.
//!
//! A [`DrawerSet`] with boundaries `b_1 < … < b_{m-1}` describes the `m`
//! intervals `(-∞, b_1], (b_1, b_2], …, (b_{m-1}, +∞)`. Drawer indices are
//! 0-based. Labels are either the single drawer index (disjoint mode) or the
//! membership vector of the upper sets `{y > b_j}` (nested mode).

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Tensor2;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawerKind {
    /// `n` equal-occupancy drawers.
    Regular,
    /// `2n` drawers whose occupancy doubles towards the median.
    Uneven,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DrawerMode {
    /// One multiclass label per target.
    Disjoint,
    /// One binary label per boundary: "is the target above it?".
    Nested,
}

impl fmt::Display for DrawerMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            DrawerMode::Disjoint => "disjoint",
            DrawerMode::Nested => "nested",
        })
    }
}

/// How to build drawers from training targets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct DrawerConfig {
    pub kind: DrawerKind,
    pub mode: DrawerMode,
    pub n: usize,
}

impl DrawerConfig {
    pub fn fit(&self, targets: &[f64]) -> Result<DrawerSet> {
        let set = match self.kind {
            DrawerKind::Regular => build_regular(targets, self.n)?,
            DrawerKind::Uneven => build_uneven(targets, self.n)?,
        };
        Ok(set.with_mode(self.mode))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawDrawerSet")]
pub struct DrawerSet {
    kind: DrawerKind,
    mode: DrawerMode,
    boundaries: Vec<f64>,
}

#[derive(Deserialize)]
struct RawDrawerSet {
    kind: DrawerKind,
    mode: DrawerMode,
    boundaries: Vec<f64>,
}

impl TryFrom<RawDrawerSet> for DrawerSet {
    type Error = Error;

    fn try_from(raw: RawDrawerSet) -> Result<Self> {
        DrawerSet::new(raw.kind, raw.mode, raw.boundaries)
    }
}

/// Label of one target under a drawer set's mode.
#[derive(Debug, Clone, PartialEq)]
pub enum DrawerLabel {
    Disjoint(usize),
    Nested(Vec<f64>),
}

/// Labels for a batch, shaped for the auxiliary loss.
#[derive(Debug, Clone, PartialEq)]
pub enum DrawerTargets {
    /// Class index per row, for softmax cross-entropy.
    Disjoint(Vec<usize>),
    /// `B × (m-1)` binary matrix, for binary cross-entropy.
    Nested(Tensor2),
}

impl DrawerTargets {
    pub fn rows(&self) -> usize {
        match self {
            DrawerTargets::Disjoint(c) => c.len(),
            DrawerTargets::Nested(t) => t.rows(),
        }
    }

    /// Labels for a subset of rows.
    pub fn select(&self, indices: &[usize]) -> Self {
        match self {
            DrawerTargets::Disjoint(c) => {
                DrawerTargets::Disjoint(indices.iter().map(|&i| c[i]).collect())
            }
            DrawerTargets::Nested(t) => DrawerTargets::Nested(t.select_rows(indices)),
        }
    }
}

impl DrawerSet {
    pub fn new(kind: DrawerKind, mode: DrawerMode, boundaries: Vec<f64>) -> Result<Self> {
        if let Some(b) = boundaries.iter().find(|b| !b.is_finite()) {
            return Err(Error::Drawer(format!("non-finite boundary {b}")));
        }
        if boundaries.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::Drawer(
                "boundaries must be strictly increasing".into(),
            ));
        }
        Ok(Self {
            kind,
            mode,
            boundaries,
        })
    }

    pub fn with_mode(mut self, mode: DrawerMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn kind(&self) -> DrawerKind {
        self.kind
    }

    pub fn mode(&self) -> DrawerMode {
        self.mode
    }

    pub fn boundaries(&self) -> &[f64] {
        &self.boundaries
    }

    /// Number of drawers `m`.
    pub fn len(&self) -> usize {
        self.boundaries.len() + 1
    }

    pub fn is_empty(&self) -> bool {
        false
    }

    /// Output width the auxiliary head needs: `m` for disjoint, `m - 1` for nested.
    pub fn head_width(&self) -> usize {
        match self.mode {
            DrawerMode::Disjoint => self.len(),
            DrawerMode::Nested => self.len() - 1,
        }
    }

    /// Index of the drawer containing `y`.
    pub fn assign_disjoint(&self, y: f64) -> usize {
        self.boundaries.partition_point(|&b| b < y)
    }

    /// Membership of `y` in the upper sets above each boundary; always a run
    /// of ones followed by zeros, with as many ones as the disjoint index.
    pub fn assign_nested(&self, y: f64) -> Result<Vec<f64>> {
        if self.len() < 2 {
            return Err(Error::Drawer(
                "nested labels need at least two drawers".into(),
            ));
        }
        let k = self.assign_disjoint(y);
        Ok((0..self.len() - 1).map(|j| f64::from(j < k)).collect())
    }

    pub fn label(&self, y: f64) -> Result<DrawerLabel> {
        Ok(match self.mode {
            DrawerMode::Disjoint => DrawerLabel::Disjoint(self.assign_disjoint(y)),
            DrawerMode::Nested => DrawerLabel::Nested(self.assign_nested(y)?),
        })
    }

    pub fn encode_targets(&self, ys: &[f64]) -> Result<DrawerTargets> {
        Ok(match self.mode {
            DrawerMode::Disjoint => {
                DrawerTargets::Disjoint(ys.iter().map(|&y| self.assign_disjoint(y)).collect())
            }
            DrawerMode::Nested => {
                let width = self.len() - 1;
                if width == 0 {
                    return Err(Error::Drawer(
                        "nested labels need at least two drawers".into(),
                    ));
                }
                let mut t = Tensor2::zeros(ys.len(), width);
                for (r, &y) in ys.iter().enumerate() {
                    let k = self.assign_disjoint(y);
                    t.row_mut(r)[..k].fill(1.0);
                }
                DrawerTargets::Nested(t)
            }
        })
    }

    /// Number of `targets` falling in each drawer.
    pub fn counts(&self, targets: &[f64]) -> Vec<usize> {
        let mut counts = vec![0; self.len()];
        for &y in targets {
            counts[self.assign_disjoint(y)] += 1;
        }
        counts
    }
}

/// The lower empirical `i/n`-quantile of ascending `sorted_targets`: the
/// element at 0-based index `ceil(i·N/n) - 1`.
pub fn quantile(sorted_targets: &[f64], i: usize, n: usize) -> Result<f64> {
    if sorted_targets.is_empty() {
        return Err(Error::Drawer("quantile of an empty target list".into()));
    }
    if i == 0 || i >= n {
        return Err(Error::Drawer(format!(
            "quantile index {i}/{n} must satisfy 0 < i < n"
        )));
    }
    let len = sorted_targets.len() as u128;
    let idx = (i as u128 * len).div_ceil(n as u128) - 1;
    Ok(sorted_targets[idx as usize])
}

fn sorted_finite(targets: &[f64]) -> Result<Vec<f64>> {
    if targets.is_empty() {
        return Err(Error::Drawer("no training targets".into()));
    }
    if let Some(y) = targets.iter().find(|y| !y.is_finite()) {
        return Err(Error::Drawer(format!("non-finite target {y}")));
    }
    let mut sorted = targets.to_vec();
    sorted.sort_by(f64::total_cmp);
    Ok(sorted)
}

/// Merges tied boundaries and drops any at the training maximum, which would
/// only open an empty top drawer.
fn dedup_boundaries(
    kind: DrawerKind,
    mut boundaries: Vec<f64>,
    max_target: f64,
    requested: usize,
) -> Result<DrawerSet> {
    boundaries.dedup();
    boundaries.retain(|&b| b < max_target);
    if requested >= 2 && boundaries.is_empty() {
        return Err(Error::Drawer(format!(
            "all {requested} requested drawers collapse into one; targets are (nearly) constant"
        )));
    }
    if boundaries.len() + 1 < requested {
        log::warn!(
            "tied quantiles merged: {requested} drawers requested, {} built",
            boundaries.len() + 1
        );
    }
    DrawerSet::new(kind, DrawerMode::Disjoint, boundaries)
}

/// `n` equal-occupancy drawers with boundaries at the `i/n` quantiles.
pub fn build_regular(targets: &[f64], n: usize) -> Result<DrawerSet> {
    if n < 1 {
        return Err(Error::Drawer("need at least one drawer".into()));
    }
    let sorted = sorted_finite(targets)?;
    let boundaries = (1..n)
        .map(|i| quantile(&sorted, i, n))
        .collect::<Result<Vec<_>>>()?;
    dedup_boundaries(DrawerKind::Regular, boundaries, sorted[sorted.len() - 1], n)
}

/// The `2n` uneven intervals exactly as quantile pairs, before the outermost
/// endpoints are widened to ±∞. Interval `i` (1-based) is
/// `(q(1, 2^(n-i+2)), q(2, 2^(n-i+2))]` for `i ≤ n` and
/// `(q(2^k - 2, 2^k), q(2^k - 1, 2^k)]` with `k = i - n + 1` otherwise.
pub fn uneven_intervals(targets: &[f64], n: usize) -> Result<Vec<(f64, f64)>> {
    if !(2..=40).contains(&n) {
        return Err(Error::Drawer(format!(
            "uneven drawers need 2 ≤ n ≤ 40, got {n}"
        )));
    }
    let sorted = sorted_finite(targets)?;
    let q = |i: usize, k: u32| quantile(&sorted, i, 1usize << k);
    let mut intervals = Vec::with_capacity(2 * n);
    for i in 1..=n {
        let k = (n - i + 2) as u32;
        intervals.push((q(1, k)?, q(2, k)?));
    }
    for i in n + 1..=2 * n {
        let k = (i - n + 1) as u32;
        let denom = 1usize << k;
        intervals.push((q(denom - 2, k)?, q(denom - 1, k)?));
    }
    Ok(intervals)
}

/// `2n` drawers concentrating resolution on the tails: occupancy doubles
/// from each tail towards the median. The lowest and highest drawers are
/// extended to ∓∞ so every real value is covered.
pub fn build_uneven(targets: &[f64], n: usize) -> Result<DrawerSet> {
    let intervals = uneven_intervals(targets, n)?;
    debug_assert!(intervals.windows(2).all(|w| w[0].1 == w[1].0));
    let boundaries = intervals[..intervals.len() - 1]
        .iter()
        .map(|&(_, hi)| hi)
        .collect();
    let max = targets.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    dedup_boundaries(DrawerKind::Uneven, boundaries, max, 2 * n)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OccupancyReport {
    pub counts: Vec<usize>,
    pub total: usize,
    pub min_count: usize,
    /// Drawers holding fewer than `min_count` targets.
    pub flagged: Vec<usize>,
    pub pass: bool,
}

/// Default minimum number of training targets per drawer.
pub const DEFAULT_MIN_OCCUPANCY: usize = 500;

pub fn validate_occupancy(ds: &DrawerSet, targets: &[f64], min_count: usize) -> OccupancyReport {
    let counts = ds.counts(targets);
    let flagged: Vec<usize> = counts
        .iter()
        .enumerate()
        .filter(|(_, &c)| c < min_count)
        .map(|(i, _)| i)
        .collect();
    OccupancyReport {
        total: counts.iter().sum(),
        pass: flagged.is_empty(),
        counts,
        min_count,
        flagged,
    }
}
