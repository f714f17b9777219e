use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::model::NodeId;

/// An `n x n` matrix of measured distances (ms) with a weight mask.
///
/// Entries with weight 0 are unmeasured; their stored distance is meaningless and
/// never read through the public accessors. The diagonal always has weight 0.
#[derive(Debug, Clone, PartialEq)]
pub struct PartialMatrix {
    n: usize,
    d: Vec<f64>,
    w: Vec<f64>,
}

impl PartialMatrix {
    /// A matrix with nothing measured.
    pub fn empty(n: usize) -> Self {
        Self {
            n,
            d: vec![0.0; n * n],
            w: vec![0.0; n * n],
        }
    }

    /// Builds a fully measured matrix from row-major values; the diagonal is masked.
    pub fn from_complete(n: usize, values: &[f64]) -> Result<Self> {
        if values.len() != n * n {
            return Err(Error::contract(format!(
                "expected {} values for a {n}x{n} matrix, got {}",
                n * n,
                values.len()
            )));
        }
        let mut m = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i != j {
                    m.set(i, j, values[i * n + j])?;
                }
            }
        }
        Ok(m)
    }

    pub fn from_fn(n: usize, mut f: impl FnMut(usize, usize) -> Option<f64>) -> Result<Self> {
        let mut m = Self::empty(n);
        for i in 0..n {
            for j in 0..n {
                if i == j {
                    continue;
                }
                if let Some(v) = f(i, j) {
                    m.set(i, j, v)?;
                }
            }
        }
        Ok(m)
    }

    pub fn n(&self) -> usize {
        self.n
    }

    /// Records a measurement with weight 1.
    pub fn set(&mut self, i: NodeId, j: NodeId, d: f64) -> Result<()> {
        self.set_weighted(i, j, d, 1.0)
    }

    pub fn set_weighted(&mut self, i: NodeId, j: NodeId, d: f64, weight: f64) -> Result<()> {
        if i >= self.n || j >= self.n {
            return Err(Error::contract(format!("index ({i}, {j}) out of range for n = {}", self.n)));
        }
        if i == j {
            return Err(Error::contract("diagonal entries cannot be measured"));
        }
        if !d.is_finite() || d < 0.0 {
            return Err(Error::contract(format!("distance must be finite and >= 0, got {d}")));
        }
        if !(0.0..=1.0).contains(&weight) {
            return Err(Error::contract(format!("weight must lie in [0, 1], got {weight}")));
        }
        let k = i * self.n + j;
        self.d[k] = if weight > 0.0 { d } else { 0.0 };
        self.w[k] = weight;
        Ok(())
    }

    pub fn unset(&mut self, i: NodeId, j: NodeId) {
        let k = i * self.n + j;
        self.d[k] = 0.0;
        self.w[k] = 0.0;
    }

    /// The measured distance, or `None` when `(i, j)` is unmeasured.
    pub fn get(&self, i: NodeId, j: NodeId) -> Option<f64> {
        let k = i * self.n + j;
        (self.w[k] > 0.0).then(|| self.d[k])
    }

    pub fn weight(&self, i: NodeId, j: NodeId) -> f64 {
        self.w[i * self.n + j]
    }

    pub fn is_measured(&self, i: NodeId, j: NodeId) -> bool {
        self.weight(i, j) > 0.0
    }

    /// Measured entries as `(i, j, d)` in row-major order.
    pub fn measured(&self) -> impl Iterator<Item = (NodeId, NodeId, f64)> + '_ {
        (0..self.n).flat_map(move |i| {
            (0..self.n).filter_map(move |j| self.get(i, j).map(|d| (i, j, d)))
        })
    }

    pub fn measured_count(&self) -> usize {
        self.w.iter().filter(|&&w| w > 0.0).count()
    }

    /// Fraction of off-diagonal entries that are measured.
    pub fn density(&self) -> f64 {
        let slots = self.n * self.n.saturating_sub(1);
        if slots == 0 {
            return 0.0;
        }
        self.measured_count() as f64 / slots as f64
    }

    pub fn missing_off_diagonal(&self) -> usize {
        self.n * self.n.saturating_sub(1) - self.measured_count()
    }

    pub fn is_complete(&self) -> bool {
        self.missing_off_diagonal() == 0
    }

    /// Dense copy with the diagonal set to 0. Fails unless every off-diagonal
    /// entry is measured.
    pub fn to_dense(&self) -> Result<DMatrix<f64>> {
        let missing = self.missing_off_diagonal();
        if missing > 0 {
            return Err(Error::Incomplete { missing });
        }
        Ok(DMatrix::from_fn(self.n, self.n, |i, j| {
            if i == j {
                0.0
            } else {
                self.d[i * self.n + j]
            }
        }))
    }

    /// Relabels nodes: node `i` of `self` becomes node `perm[i]` of the result.
    pub fn permuted(&self, perm: &[NodeId]) -> Result<Self> {
        if perm.len() != self.n {
            return Err(Error::contract("permutation length differs from node count"));
        }
        let mut out = Self::empty(self.n);
        for i in 0..self.n {
            for j in 0..self.n {
                let k = i * self.n + j;
                if self.w[k] > 0.0 {
                    out.set_weighted(perm[i], perm[j], self.d[k], self.w[k])?;
                }
            }
        }
        Ok(out)
    }
}
