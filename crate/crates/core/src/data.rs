use std::collections::BTreeSet;

use crate::error::{Error, Result};
use crate::fbeta::LabelVec;

/// A sparse feature row with 0-based, strictly increasing indices.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct SparseRow {
    indices: Vec<u32>,
    values: Vec<f64>,
}

impl SparseRow {
    pub fn new(indices: Vec<u32>, values: Vec<f64>) -> Result<Self> {
        Error::check_dim(indices.len(), values.len())?;
        if indices.windows(2).any(|w| w[0] >= w[1]) {
            return Err(Error::InvalidArgument("feature indices must be strictly increasing".into()));
        }
        if let Some(v) = values.iter().find(|v| !v.is_finite()) {
            return Err(Error::NonFinite(format!("feature value {v}")));
        }
        Ok(Self { indices, values })
    }

    /// Keeps every coordinate of `x`, including zeros.
    pub fn from_dense(x: &[f64]) -> Self {
        Self { indices: (0..x.len() as u32).collect(), values: x.to_vec() }
    }

    pub fn indices(&self) -> &[u32] {
        &self.indices
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn nnz(&self) -> usize {
        self.indices.len()
    }

    /// One past the largest index, or 0 for an empty row.
    pub fn min_dim(&self) -> usize {
        self.indices.last().map_or(0, |&i| i as usize + 1)
    }

    pub fn iter(&self) -> impl Iterator<Item = (usize, f64)> + '_ {
        self.indices.iter().zip(&self.values).map(|(&i, &v)| (i as usize, v))
    }

    /// `w[..d]·x + w[d]` when `bias`, otherwise `w[..d]·x`. Indices must be `< d`.
    pub fn dot(&self, w: &[f64], d: usize, bias: bool) -> f64 {
        let mut acc = if bias { w[d] } else { 0.0 };
        for (i, v) in self.iter() {
            acc += w[i] * v;
        }
        acc
    }
}

/// A multi-label training sample.
#[derive(Clone, Debug, PartialEq)]
pub struct Dataset {
    s: usize,
    d: usize,
    features: Vec<SparseRow>,
    labels: Vec<LabelVec>,
    observed_counts: BTreeSet<usize>,
}

impl Dataset {
    pub fn new(s: usize, d: usize, features: Vec<SparseRow>, labels: Vec<LabelVec>) -> Result<Self> {
        if s == 0 || d == 0 {
            return Err(Error::InvalidArgument(format!("need s >= 1 and d >= 1, got s = {s}, d = {d}")));
        }
        Error::check_dim(features.len(), labels.len())?;
        for row in &features {
            if row.min_dim() > d {
                return Err(Error::OutOfRange(format!("feature index {} with d = {d}", row.min_dim())));
            }
        }
        for y in &labels {
            Error::check_dim(s, y.s())?;
        }
        let observed_counts = labels.iter().map(LabelVec::count).collect();
        Ok(Self { s, d, features, labels, observed_counts })
    }

    pub fn s(&self) -> usize {
        self.s
    }

    pub fn d(&self) -> usize {
        self.d
    }

    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn features(&self) -> &[SparseRow] {
        &self.features
    }

    pub fn labels(&self) -> &[LabelVec] {
        &self.labels
    }

    /// Every `‖y_i‖₁` seen, including 0.
    pub fn observed_counts(&self) -> &BTreeSet<usize> {
        &self.observed_counts
    }

    /// Observed counts `k ≥ 1`.
    pub fn nonzero_counts(&self) -> BTreeSet<usize> {
        self.observed_counts.iter().copied().filter(|&k| k > 0).collect()
    }

    pub fn subset(&self, rows: &[usize]) -> Self {
        let features: Vec<_> = rows.iter().map(|&i| self.features[i].clone()).collect();
        let labels: Vec<_> = rows.iter().map(|&i| self.labels[i].clone()).collect();
        let observed_counts = labels.iter().map(LabelVec::count).collect();
        Self { s: self.s, d: self.d, features, labels, observed_counts }
    }

    pub fn head(&self, m: usize) -> Self {
        let rows: Vec<usize> = (0..m.min(self.len())).collect();
        self.subset(&rows)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn sparse_row_validation() {
        assert!(SparseRow::new(vec![0, 2], vec![1.0, 2.0]).is_ok());
        assert!(SparseRow::new(vec![2, 2], vec![1.0, 2.0]).is_err());
        assert!(SparseRow::new(vec![3, 1], vec![1.0, 2.0]).is_err());
        assert!(SparseRow::new(vec![0], vec![f64::NAN]).is_err());
        assert!(SparseRow::new(vec![0], vec![]).is_err());
    }

    #[test]
    fn sparse_dot_with_bias() {
        let row = SparseRow::new(vec![0, 2], vec![1.0, 3.0]).unwrap();
        let w = [2.0, 100.0, -1.0, 0.5];
        assert_eq!(row.dot(&w, 3, false), -1.0);
        assert_eq!(row.dot(&w, 3, true), -0.5);
    }

    #[test]
    fn dataset_counts_and_bounds() {
        let rows = vec![SparseRow::from_dense(&[1.0, 0.0]), SparseRow::default()];
        let labels = vec![LabelVec::from_active(3, &[0, 2]).unwrap(), LabelVec::zeros(3)];
        let ds = Dataset::new(3, 2, rows.clone(), labels.clone()).unwrap();
        assert_eq!(ds.observed_counts().iter().copied().collect::<Vec<_>>(), vec![0, 2]);
        assert_eq!(ds.nonzero_counts().into_iter().collect::<Vec<_>>(), vec![2]);
        assert!(Dataset::new(3, 1, rows.clone(), labels.clone()).is_err());
        assert!(Dataset::new(2, 2, rows, labels).is_err());
    }
}
