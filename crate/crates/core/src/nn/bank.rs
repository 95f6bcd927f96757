use serde::{Deserialize, Serialize};

use super::Tensor2;
use crate::error::{Error, Result};

/// Parameters of one parameterized layer.
///
/// For `Linear(in, out)` the weight is `in × out` and the bias has `out`
/// entries. For `Embedding(vocab, dim)` the weight is the `vocab × dim` lookup
/// table and the bias is empty.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ParamGroup {
    pub weight: Tensor2,
    pub bias: Vec<f64>,
}

impl ParamGroup {
    pub fn len(&self) -> usize {
        self.weight.data().len() + self.bias.len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    fn zeros_like(&self) -> Self {
        Self {
            weight: Tensor2::zeros(self.weight.rows(), self.weight.cols()),
            bias: vec![0.0; self.bias.len()],
        }
    }

    fn congruent(&self, other: &Self) -> bool {
        self.weight.shape() == other.weight.shape() && self.bias.len() == other.bias.len()
    }
}

/// Per-layer parameter storage, in layer order.
///
/// The same type holds gradients (see [`GradientBank`]), so every bank
/// operation works uniformly on parameters, gradients and optimizer moments.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct ParamBank {
    groups: Vec<ParamGroup>,
}

/// Gradient storage congruent with a [`ParamBank`].
pub type GradientBank = ParamBank;

impl ParamBank {
    pub fn new(groups: Vec<ParamGroup>) -> Self {
        Self { groups }
    }

    pub fn groups(&self) -> &[ParamGroup] {
        &self.groups
    }

    pub fn groups_mut(&mut self) -> &mut [ParamGroup] {
        &mut self.groups
    }

    /// Total number of scalar parameters.
    pub fn param_count(&self) -> usize {
        self.groups.iter().map(ParamGroup::len).sum()
    }

    pub fn zeros_like(&self) -> Self {
        Self {
            groups: self.groups.iter().map(ParamGroup::zeros_like).collect(),
        }
    }

    pub fn is_congruent(&self, other: &Self) -> bool {
        self.groups.len() == other.groups.len()
            && self
                .groups
                .iter()
                .zip(&other.groups)
                .all(|(a, b)| a.congruent(b))
    }

    fn check_congruent(&self, other: &Self) -> Result<()> {
        if self.is_congruent(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "bank with {} params is not congruent with bank with {} params",
                self.param_count(),
                other.param_count()
            )))
        }
    }

    /// All values in a fixed order: per group, weights then biases.
    pub fn values(&self) -> impl Iterator<Item = &f64> {
        self.groups
            .iter()
            .flat_map(|g| g.weight.data().iter().chain(g.bias.iter()))
    }

    pub fn values_mut(&mut self) -> impl Iterator<Item = &mut f64> {
        self.groups
            .iter_mut()
            .flat_map(|g| g.weight.data_mut().iter_mut().chain(g.bias.iter_mut()))
    }

    pub fn flatten(&self) -> Vec<f64> {
        self.values().copied().collect()
    }

    /// Overwrites every value from a flat slice in [`values`](Self::values) order.
    pub fn assign_flat(&mut self, flat: &[f64]) -> Result<()> {
        if flat.len() != self.param_count() {
            return Err(Error::Shape(format!(
                "flat vector of {} values for bank of {}",
                flat.len(),
                self.param_count()
            )));
        }
        for (dst, &src) in self.values_mut().zip(flat) {
            *dst = src;
        }
        Ok(())
    }

    pub fn l1_norm(&self) -> f64 {
        self.values().map(|v| v.abs()).sum()
    }

    pub fn scaled(&self, c: f64) -> Self {
        let mut out = self.clone();
        out.values_mut().for_each(|v| *v *= c);
        out
    }

    /// `self += c · other`.
    pub fn add_scaled(&mut self, c: f64, other: &Self) -> Result<()> {
        self.check_congruent(other)?;
        for (a, &b) in self.values_mut().zip(other.values()) {
            *a += c * b;
        }
        Ok(())
    }

    /// `a · A + b · B`.
    pub fn linear_combination(a: f64, lhs: &Self, b: f64, rhs: &Self) -> Result<Self> {
        lhs.check_congruent(rhs)?;
        let mut out = lhs.clone();
        for (dst, (&x, &y)) in out.values_mut().zip(lhs.values().zip(rhs.values())) {
            *dst = a * x + b * y;
        }
        Ok(out)
    }

    pub fn max_abs_diff(&self, other: &Self) -> Result<f64> {
        self.check_congruent(other)?;
        Ok(self
            .values()
            .zip(other.values())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0, f64::max))
    }

    pub fn all_finite(&self) -> bool {
        self.values().all(|v| v.is_finite())
    }
}
