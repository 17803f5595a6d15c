use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::attention::AttentionTensor;
use crate::error::{Error, Result};
use crate::numkit::Scalar;

/// Threshold used for every reported ID unless overridden.
pub const DEFAULT_EPSILON: f64 = 0.1;

/// Which attention row summarises a layer.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RowPolicy {
    /// The final token, which attends over the whole sequence.
    #[default]
    Last,
    /// Mean over all rows.
    Mean,
}

impl fmt::Display for RowPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RowPolicy::Last => "last",
            RowPolicy::Mean => "mean",
        })
    }
}

impl FromStr for RowPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "last" => Ok(RowPolicy::Last),
            "mean" => Ok(RowPolicy::Mean),
            other => Err(Error::param(format!("unknown row policy {other:?} (expected last|mean)"))),
        }
    }
}

/// Supra-threshold counts of one row across heads.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct IdSlice {
    pub per_head: Vec<usize>,
    pub aggregate: usize,
}

pub(crate) fn check_epsilon(epsilon: f64) -> Result<()> {
    if !(0.0..1.0).contains(&epsilon) {
        return Err(Error::param(format!("epsilon must lie in [0, 1), got {epsilon}")));
    }
    Ok(())
}

fn count_row<T: Scalar>(row: &[T], i: usize, epsilon: f64) -> usize {
    row[..=i].iter().filter(|v| v.as_f64() > epsilon).count()
}

/// Number of tokens `j ≤ row` whose attention weight exceeds `epsilon`, per
/// head and summed over heads.
pub fn id_epsilon<T: Scalar>(attn: &AttentionTensor<T>, epsilon: f64, row: usize) -> Result<IdSlice> {
    check_epsilon(epsilon)?;
    if row >= attn.n() {
        return Err(Error::param(format!("row {row} out of range for n = {}", attn.n())));
    }
    let per_head: Vec<usize> = attn
        .maps()
        .iter()
        .map(|m| count_row(m.row(row), row, epsilon))
        .collect();
    let aggregate = per_head.iter().sum();
    Ok(IdSlice { per_head, aggregate })
}

#[derive(Debug, Clone, PartialEq)]
struct LayerCounts {
    heads: usize,
    n: usize,
    /// head-major: `counts[h * n + i]`
    counts: Vec<usize>,
}

/// ε-thresholded attention counts for every (layer, head, row).
#[derive(Debug, Clone, PartialEq)]
pub struct IdProfile {
    epsilon: f64,
    layers: Vec<LayerCounts>,
}

/// One row of the per-entry profile CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IdRecord {
    pub layer: usize,
    pub head: usize,
    pub row: usize,
    pub epsilon: f64,
    pub id: usize,
}

impl IdProfile {
    pub fn compute<T: Scalar>(layers: &[AttentionTensor<T>], epsilon: f64) -> Result<Self> {
        check_epsilon(epsilon)?;
        let layers = layers
            .iter()
            .map(|t| {
                let n = t.n();
                let counts = t
                    .maps()
                    .iter()
                    .flat_map(|m| (0..n).map(move |i| count_row(m.row(i), i, epsilon)))
                    .collect();
                LayerCounts {
                    heads: t.heads(),
                    n,
                    counts,
                }
            })
            .collect();
        Ok(IdProfile { epsilon, layers })
    }

    pub fn epsilon(&self) -> f64 {
        self.epsilon
    }

    pub fn n_layers(&self) -> usize {
        self.layers.len()
    }

    pub fn heads(&self, layer: usize) -> usize {
        self.layers[layer].heads
    }

    pub fn seq_len(&self, layer: usize) -> usize {
        self.layers[layer].n
    }

    pub fn count(&self, layer: usize, head: usize, row: usize) -> usize {
        let l = &self.layers[layer];
        assert!(head < l.heads && row < l.n);
        l.counts[head * l.n + row]
    }

    /// Head-summed count at `row`.
    pub fn head_sum(&self, layer: usize, row: usize) -> usize {
        (0..self.heads(layer)).map(|h| self.count(layer, h, row)).sum()
    }

    /// Layer summary under `policy`.
    pub fn aggregate(&self, layer: usize, policy: RowPolicy) -> f64 {
        let n = self.seq_len(layer);
        if n == 0 {
            return 0.0;
        }
        match policy {
            RowPolicy::Last => self.head_sum(layer, n - 1) as f64,
            RowPolicy::Mean => (0..n).map(|i| self.head_sum(layer, i)).sum::<usize>() as f64 / n as f64,
        }
    }

    pub fn records(&self) -> Vec<IdRecord> {
        let mut out = Vec::new();
        for (layer, l) in self.layers.iter().enumerate() {
            for head in 0..l.heads {
                for row in 0..l.n {
                    out.push(IdRecord {
                        layer,
                        head,
                        row,
                        epsilon: self.epsilon,
                        id: l.counts[head * l.n + row],
                    });
                }
            }
        }
        out
    }
}

/// Percentage change of the layer ID of `variant` relative to `base`.
pub fn relative_id_change(
    base: &IdProfile,
    variant: &IdProfile,
    layer: usize,
    policy: RowPolicy,
) -> Result<f64> {
    if base.epsilon != variant.epsilon {
        return Err(Error::param(format!(
            "profiles use different epsilon ({} vs {})",
            base.epsilon, variant.epsilon
        )));
    }
    if layer >= base.n_layers() || layer >= variant.n_layers() {
        return Err(Error::param(format!("layer {layer} missing from a profile")));
    }
    if base.heads(layer) != variant.heads(layer) {
        return Err(Error::param(format!(
            "head count differs at layer {layer} ({} vs {})",
            base.heads(layer),
            variant.heads(layer)
        )));
    }
    let b = base.aggregate(layer, policy);
    if b == 0.0 {
        return Err(Error::DegenerateBase);
    }
    Ok(100.0 * (variant.aggregate(layer, policy) - b) / b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::attention::effective_dim_bound;
    use crate::numkit::Matrix;

    fn single_row_tensor(row: &[f64]) -> AttentionTensor<f64> {
        // embed `row` as the last row of a causal map padded with one-hot rows
        let n = row.len();
        let mut m = Matrix::zeros(n, n);
        for i in 0..n - 1 {
            m[(i, i)] = 1.0;
        }
        m.row_mut(n - 1).copy_from_slice(row);
        AttentionTensor::new(vec![m]).unwrap()
    }

    #[test]
    fn all_weights_above_threshold() {
        let t = single_row_tensor(&[0.5, 0.3, 0.2]);
        assert_eq!(id_epsilon(&t, 0.1, 2).unwrap().aggregate, 3);
        assert_eq!(id_epsilon(&t, 0.25, 2).unwrap().aggregate, 2);
    }

    #[test]
    fn single_token_row_counts_one() {
        let t = single_row_tensor(&[0.5, 0.3, 0.2]);
        for eps in [0.0, 0.5, 0.99] {
            assert_eq!(id_epsilon(&t, eps, 0).unwrap().aggregate, 1);
        }
    }

    #[test]
    fn epsilon_out_of_range() {
        let t = single_row_tensor(&[1.0]);
        assert!(matches!(id_epsilon(&t, 1.0, 0), Err(Error::Parameter(_))));
        assert!(matches!(id_epsilon(&t, -0.1, 0), Err(Error::Parameter(_))));
        assert!(IdProfile::compute(&[t], 1.5).is_err());
    }

    #[test]
    fn zero_epsilon_matches_effective_dim() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.3, 0.7, 0.0], [0.0, 0.4, 0.6]]).unwrap();
        let b = Matrix::from_rows(&[[1.0, 0.0, 0.0], [1.0, 0.0, 0.0], [0.2, 0.2, 0.6]]).unwrap();
        let t = AttentionTensor::new(vec![a, b]).unwrap();
        for i in 0..3 {
            assert_eq!(id_epsilon(&t, 0.0, i).unwrap().aggregate, effective_dim_bound(&t, i).unwrap());
        }
    }

    #[test]
    fn profile_aggregates() {
        let a = Matrix::from_rows(&[[1.0, 0.0, 0.0], [0.5, 0.5, 0.0], [0.2, 0.3, 0.5]]).unwrap();
        let t = AttentionTensor::new(vec![a.clone(), a]).unwrap();
        let p = IdProfile::compute(&[t], 0.25).unwrap();
        assert_eq!(p.count(0, 1, 2), 2);
        assert_eq!(p.aggregate(0, RowPolicy::Last), 4.0);
        assert!((p.aggregate(0, RowPolicy::Mean) - (2.0 + 4.0 + 4.0) / 3.0).abs() < 1e-15);
        assert_eq!(p.records().len(), 6);
    }

    fn profile_with_last_row_count(k: usize) -> IdProfile {
        let n = 100;
        let mut m = Matrix::zeros(n, n);
        for i in 0..n - 1 {
            m[(i, i)] = 1.0;
        }
        for j in 0..k {
            m[(n - 1, j)] = 1.0 / k as f64;
        }
        IdProfile::compute(&[AttentionTensor::new(vec![m]).unwrap()], 0.0).unwrap()
    }

    #[test]
    fn relative_change_arithmetic() {
        let base = profile_with_last_row_count(50);
        assert_eq!(relative_id_change(&base, &base, 0, RowPolicy::Last).unwrap(), 0.0);
        let up = profile_with_last_row_count(60);
        assert!((relative_id_change(&base, &up, 0, RowPolicy::Last).unwrap() - 20.0).abs() < 1e-12);
        let down = profile_with_last_row_count(40);
        assert!((relative_id_change(&base, &down, 0, RowPolicy::Last).unwrap() + 20.0).abs() < 1e-12);
    }

    #[test]
    fn relative_change_rejects_mismatches() {
        let a = Matrix::from_rows(&[[1.0, 0.0], [0.5, 0.5]]).unwrap();
        let t = AttentionTensor::new(vec![a]).unwrap();
        let p1 = IdProfile::compute(std::slice::from_ref(&t), 0.1).unwrap();
        let p2 = IdProfile::compute(std::slice::from_ref(&t), 0.2).unwrap();
        assert!(matches!(relative_id_change(&p1, &p2, 0, RowPolicy::Last), Err(Error::Parameter(_))));
        let zero = IdProfile::compute(&[t], 0.6).unwrap();
        assert!(matches!(
            relative_id_change(&zero, &zero, 0, RowPolicy::Last),
            Err(Error::DegenerateBase)
        ));
    }

    #[test]
    fn row_policy_parses() {
        assert_eq!("mean".parse::<RowPolicy>().unwrap(), RowPolicy::Mean);
        assert_eq!(RowPolicy::Last.to_string(), "last");
        assert!("first".parse::<RowPolicy>().is_err());
    }
}
