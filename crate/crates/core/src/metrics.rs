//! Prediction accuracy: relative estimation error, stress and median absolute error.

use crate::error::{Error, Result};
use crate::stats::{median, CompensatedSum};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EvalPair {
    /// Measured distance, ms.
    pub d: f64,
    /// Predicted distance, ms.
    pub dhat: f64,
}

/// Pairs with a strictly positive measured distance.
#[derive(Debug, Clone, Default, PartialEq)]
pub struct EvalPairSet {
    pairs: Vec<EvalPair>,
}

impl EvalPairSet {
    /// Keeps only pairs with `d > 0` and finite `d`; others cannot be evaluated.
    pub fn new(pairs: impl IntoIterator<Item = (f64, f64)>) -> Self {
        let pairs = pairs
            .into_iter()
            .filter(|(d, _)| d.is_finite() && *d > 0.0)
            .map(|(d, dhat)| EvalPair { d, dhat })
            .collect();
        Self { pairs }
    }

    pub fn push(&mut self, d: f64, dhat: f64) {
        if d.is_finite() && d > 0.0 {
            self.pairs.push(EvalPair { d, dhat });
        }
    }

    pub fn pairs(&self) -> &[EvalPair] {
        &self.pairs
    }

    pub fn len(&self) -> usize {
        self.pairs.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pairs.is_empty()
    }
}

impl FromIterator<(f64, f64)> for EvalPairSet {
    fn from_iter<I: IntoIterator<Item = (f64, f64)>>(iter: I) -> Self {
        Self::new(iter)
    }
}

/// `|dhat - d| / d` for each pair, in input order.
pub fn ree_values(pairs: &EvalPairSet) -> Vec<f64> {
    pairs.pairs.iter().map(|p| (p.dhat - p.d).abs() / p.d).collect()
}

/// `sqrt(sum (d - dhat)^2 / sum d^2)`.
pub fn stress(pairs: &EvalPairSet) -> Result<f64> {
    if pairs.is_empty() {
        return Err(Error::contract("stress of an empty pair set"));
    }
    let mut num = CompensatedSum::new();
    let mut den = CompensatedSum::new();
    for p in &pairs.pairs {
        let e = p.d - p.dhat;
        num.add(e * e);
        den.add(p.d * p.d);
    }
    Ok((num.value() / den.value()).sqrt())
}

/// Median of `|d - dhat|`, ms.
pub fn mae(pairs: &EvalPairSet) -> Result<f64> {
    let errors: Vec<f64> = pairs.pairs.iter().map(|p| (p.d - p.dhat).abs()).collect();
    median(&errors).ok_or_else(|| Error::contract("MAE of an empty pair set"))
}
