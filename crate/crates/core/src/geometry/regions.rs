use std::collections::HashSet;
use std::fmt;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{ActivationPattern, MlpParams};
use crate::numkit::{Matrix, Scalar};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum RegionMethod {
    #[serde(rename = "exact-1d")]
    Exact1d,
    #[serde(rename = "distinct-pattern")]
    DistinctPattern,
    #[serde(rename = "grid")]
    Grid,
}

impl fmt::Display for RegionMethod {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            RegionMethod::Exact1d => "exact-1d",
            RegionMethod::DistinctPattern => "distinct-pattern",
            RegionMethod::Grid => "grid",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct RegionCount {
    pub count: usize,
    pub method: RegionMethod,
    /// Points evaluated; for the exact counter, the number of breakpoints found.
    pub samples_used: usize,
}

/// One row of the region-count CSV.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionRecord {
    pub method: RegionMethod,
    pub n_hidden: usize,
    pub heads: Option<usize>,
    pub context: Option<usize>,
    pub seed: u64,
    pub count: usize,
}

/// Exact number of linear pieces of a scalar-input network on `(lo, hi)`.
pub fn count_regions_1d_exact<T: Scalar>(p: &MlpParams<T>, lo: T, hi: T) -> Result<RegionCount> {
    let bps = p.breakpoints_1d(lo, hi)?;
    Ok(RegionCount {
        count: bps.len() + 1,
        method: RegionMethod::Exact1d,
        samples_used: bps.len(),
    })
}

/// Distinct activation patterns over the rows of `inputs`.
///
/// Lower-bounds the number of regions the points touch.
pub fn count_regions_patterns<T: Scalar>(p: &MlpParams<T>, inputs: &Matrix<T>) -> Result<RegionCount> {
    let set = distinct_patterns(p, inputs)?;
    Ok(RegionCount {
        count: set.len(),
        method: RegionMethod::DistinctPattern,
        samples_used: inputs.rows(),
    })
}

/// The set of activation patterns over the rows of `inputs`, collected in
/// parallel and merged.
pub fn distinct_patterns<T: Scalar>(
    p: &MlpParams<T>,
    inputs: &Matrix<T>,
) -> Result<HashSet<ActivationPattern>> {
    if inputs.rows() == 0 {
        return Err(Error::param("region counting needs at least one input point"));
    }
    if inputs.cols() != p.d_in() {
        return Err(Error::Dimension {
            op: "count_regions_patterns",
            left: inputs.shape(),
            right: p.w1.shape(),
        });
    }
    let rows: Vec<&[T]> = inputs.iter_rows().collect();
    Ok(rows
        .par_chunks(4096)
        .map(|chunk| {
            chunk
                .iter()
                .map(|r| p.activation_pattern(r))
                .collect::<HashSet<_>>()
        })
        .reduce(HashSet::new, |mut a, b| {
            a.extend(b);
            a
        }))
}

/// Dimension of the affine hull of the rows of `points`.
pub fn affine_dimension<T: Scalar>(points: &Matrix<T>, tol: f64) -> usize {
    if points.rows() <= 1 {
        return 0;
    }
    let origin = points.row(0).to_vec();
    let mut rows: Vec<Vec<f64>> = points
        .iter_rows()
        .skip(1)
        .map(|r| r.iter().zip(&origin).map(|(&a, &b)| (a - b).as_f64()).collect())
        .collect();
    let cols = points.cols();
    let scale = rows
        .iter()
        .flatten()
        .fold(0.0f64, |m, v| m.max(v.abs()))
        .max(f64::MIN_POSITIVE);
    let mut rank = 0;
    for c in 0..cols {
        let pivot = (rank..rows.len()).max_by(|&a, &b| rows[a][c].abs().total_cmp(&rows[b][c].abs()));
        let Some(pr) = pivot else { break };
        if rows[pr][c].abs() <= tol * scale {
            continue;
        }
        rows.swap(rank, pr);
        for r in rank + 1..rows.len() {
            let f = rows[r][c] / rows[rank][c];
            if f != 0.0 {
                for k in c..cols {
                    rows[r][k] -= f * rows[rank][k];
                }
            }
        }
        rank += 1;
    }
    rank
}
