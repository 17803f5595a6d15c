use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Row-sum slack accepted for maps computed in double precision.
pub const ATTN_ROW_SUM_TOL: f64 = 1e-9;

/// Causal attention maps of every head of one layer: `heads` matrices, each
/// `n × n`, lower-triangular and row-stochastic.
#[derive(Debug, Clone, PartialEq)]
pub struct AttentionTensor<T> {
    maps: Vec<Matrix<T>>,
}

impl<T: Scalar> AttentionTensor<T> {
    /// Wraps and validates maps against [`ATTN_ROW_SUM_TOL`], widened to
    /// `16·n·ε` of `T` for lower precisions.
    pub fn new(maps: Vec<Matrix<T>>) -> Result<Self> {
        let t = AttentionTensor { maps };
        let rounding = 16.0 * t.n() as f64 * T::epsilon().as_f64();
        t.validate(ATTN_ROW_SUM_TOL.max(rounding))?;
        Ok(t)
    }

    pub(crate) fn from_maps_unchecked(maps: Vec<Matrix<T>>) -> Self {
        AttentionTensor { maps }
    }

    pub fn heads(&self) -> usize {
        self.maps.len()
    }

    /// Sequence length.
    pub fn n(&self) -> usize {
        self.maps.first().map_or(0, |m| m.rows())
    }

    pub fn map(&self, h: usize) -> &Matrix<T> {
        &self.maps[h]
    }

    pub fn maps(&self) -> &[Matrix<T>] {
        &self.maps
    }

    pub fn into_maps(self) -> Vec<Matrix<T>> {
        self.maps
    }

    pub fn validate(&self, row_sum_tol: f64) -> Result<()> {
        self.validate_layer(0, row_sum_tol)
    }

    /// Checks shape, causality, nonnegativity and row sums; errors name the
    /// offending `layer`, head and row.
    pub fn validate_layer(&self, layer: usize, row_sum_tol: f64) -> Result<()> {
        let bad = |head, row, reason: String| Error::Validation {
            layer,
            head,
            row,
            reason,
        };
        if self.maps.is_empty() {
            return Err(bad(0, 0, "no heads".into()));
        }
        let n = self.n();
        for (h, m) in self.maps.iter().enumerate() {
            if m.shape() != (n, n) {
                return Err(bad(h, 0, format!("shape {:?}, expected ({n}, {n})", m.shape())));
            }
            for i in 0..n {
                let row = m.row(i);
                let mut total = 0.0;
                for (j, &v) in row.iter().enumerate() {
                    let v = v.as_f64();
                    if !v.is_finite() || v < 0.0 {
                        return Err(bad(h, i, format!("entry {j} is {v}")));
                    }
                    if j > i && v != 0.0 {
                        return Err(bad(h, i, format!("nonzero entry {v} above the diagonal at column {j}")));
                    }
                    total += v;
                }
                if (total - 1.0).abs() > row_sum_tol {
                    return Err(bad(h, i, format!("row sums to {total}")));
                }
            }
        }
        Ok(())
    }

    pub fn cast<U: Scalar>(&self) -> AttentionTensor<U> {
        AttentionTensor {
            maps: self.maps.iter().map(Matrix::cast).collect(),
        }
    }
}

/// Head-summed count of strictly positive attention weights in row `i`.
pub fn effective_dim_bound<T: Scalar>(attn: &AttentionTensor<T>, i: usize) -> Result<usize> {
    if i >= attn.n() {
        return Err(Error::param(format!("row {i} out of range for n = {}", attn.n())));
    }
    Ok(attn
        .maps()
        .iter()
        .map(|m| m.row(i)[..=i].iter().filter(|&&v| v > T::zero()).count())
        .sum())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn rows(r: &[&[f64]]) -> Matrix<f64> {
        Matrix::from_rows(r).unwrap()
    }

    #[test]
    fn single_token_bound_is_head_count() {
        let t = AttentionTensor::new(vec![rows(&[&[1.0]]); 5]).unwrap();
        assert_eq!(effective_dim_bound(&t, 0).unwrap(), 5);
    }

    #[test]
    fn bound_counts_positive_entries() {
        let a = rows(&[
            &[1.0, 0.0, 0.0],
            &[0.5, 0.5, 0.0],
            &[0.2, 0.3, 0.5],
        ]);
        let b = rows(&[
            &[1.0, 0.0, 0.0],
            &[1.0, 0.0, 0.0],
            &[0.0, 0.0, 1.0],
        ]);
        let t = AttentionTensor::new(vec![a, b]).unwrap();
        assert_eq!(effective_dim_bound(&t, 2).unwrap(), 4);
        assert!(effective_dim_bound(&t, 3).is_err());
    }

    #[test]
    fn validation_reports_location() {
        let bad = rows(&[&[1.0, 0.0], &[0.5, 0.4]]);
        match AttentionTensor::new(vec![rows(&[&[1.0, 0.0], &[0.5, 0.5]]), bad]) {
            Err(Error::Validation { head, row, .. }) => assert_eq!((head, row), (1, 1)),
            other => panic!("{other:?}"),
        }
        let acausal = rows(&[&[0.9, 0.1], &[0.5, 0.5]]);
        match AttentionTensor::new(vec![acausal]) {
            Err(Error::Validation { row, reason, .. }) => {
                assert_eq!(row, 0);
                assert!(reason.contains("above the diagonal"));
            }
            other => panic!("{other:?}"),
        }
    }
}
