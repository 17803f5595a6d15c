//! Region codes, per-region affine maps and 1-D breakpoints.

use std::fmt;

use crate::error::{Error, Result};
use crate::mlp::MlpParams;
use crate::numkit::{Matrix, Scalar};

/// Pre-activation magnitude at or below which an input counts as lying on a
/// region boundary.
pub const BOUNDARY_TOL: f64 = 1e-12;

/// Breakpoints closer than this are merged.
pub const BREAKPOINT_DEDUP_TOL: f64 = 1e-12;

/// On/off state of every hidden unit; identifies the linear region of an input.
///
/// Stored as a full bitmask so two patterns compare equal only when every
/// bit agrees.
#[derive(Clone, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct ActivationPattern {
    words: Vec<u64>,
    len: usize,
}

impl ActivationPattern {
    pub fn from_pre_activations<T: Scalar>(pre: &[T]) -> Self {
        let mut words = vec![0u64; pre.len().div_ceil(64)];
        for (k, &z) in pre.iter().enumerate() {
            if z > T::zero() {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        ActivationPattern {
            words,
            len: pre.len(),
        }
    }

    pub fn from_bits(bits: &[bool]) -> Self {
        let mut words = vec![0u64; bits.len().div_ceil(64)];
        for (k, &b) in bits.iter().enumerate() {
            if b {
                words[k / 64] |= 1 << (k % 64);
            }
        }
        ActivationPattern {
            words,
            len: bits.len(),
        }
    }

    pub fn len(&self) -> usize {
        self.len
    }

    pub fn is_empty(&self) -> bool {
        self.len == 0
    }

    pub fn get(&self, k: usize) -> bool {
        assert!(k < self.len);
        self.words[k / 64] >> (k % 64) & 1 == 1
    }

    pub fn count_active(&self) -> usize {
        self.words.iter().map(|w| w.count_ones() as usize).sum()
    }

    pub fn bits(&self) -> impl Iterator<Item = bool> + '_ {
        (0..self.len).map(|k| self.get(k))
    }
}

impl fmt::Debug for ActivationPattern {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s: String = self.bits().map(|b| if b { '1' } else { '0' }).collect();
        write!(f, "ActivationPattern({s})")
    }
}

/// `y = x·aᵀ + b` for row input `x`: `a` is d_out × d_in.
#[derive(Debug, Clone, PartialEq)]
pub struct AffineMap<T> {
    pub a: Matrix<T>,
    pub b: Vec<T>,
}

impl<T: Scalar> AffineMap<T> {
    pub fn apply(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.a.cols());
        self.b
            .iter()
            .enumerate()
            .map(|(o, &b)| b + crate::numkit::dot(self.a.row(o), x))
            .collect()
    }
}

impl<T: Scalar> MlpParams<T> {
    /// Pre-activations `x·w1 + b1` for one input vector.
    pub fn pre_activations(&self, x: &[T]) -> Vec<T> {
        assert_eq!(x.len(), self.d_in(), "input length must equal d_in");
        let mut z = self.b1.clone();
        for (i, &xi) in x.iter().enumerate() {
            for (zk, &w) in z.iter_mut().zip(self.w1.row(i)) {
                *zk += xi * w;
            }
        }
        z
    }

    /// Bit `k` set iff hidden pre-activation `k` is strictly positive.
    pub fn activation_pattern(&self, x: &[T]) -> ActivationPattern {
        ActivationPattern::from_pre_activations(&self.pre_activations(x))
    }

    /// Patterns of every row of `x`.
    pub fn activation_patterns(&self, x: &Matrix<T>) -> Result<Vec<ActivationPattern>> {
        if x.cols() != self.d_in() {
            return Err(Error::Dimension {
                op: "activation_patterns",
                left: x.shape(),
                right: self.w1.shape(),
            });
        }
        Ok(x.iter_rows().map(|r| self.activation_pattern(r)).collect())
    }

    /// The affine map the network computes on the region containing `x`.
    ///
    /// Fails with [`Error::Boundary`] when some pre-activation is within
    /// [`BOUNDARY_TOL`] of zero.
    pub fn local_affine(&self, x: &[T]) -> Result<AffineMap<T>> {
        if x.len() != self.d_in() {
            return Err(Error::Dimension {
                op: "local_affine",
                left: (1, x.len()),
                right: self.w1.shape(),
            });
        }
        let pre = self.pre_activations(x);
        if let Some((k, &z)) = pre
            .iter()
            .enumerate()
            .find(|(_, z)| z.abs() <= T::lit(BOUNDARY_TOL))
        {
            return Err(Error::Boundary {
                neuron: k,
                value: z.as_f64(),
            });
        }
        Ok(self.affine_for_pattern(&ActivationPattern::from_pre_activations(&pre)))
    }

    /// Affine map for an arbitrary region code.
    pub fn affine_for_pattern(&self, pattern: &ActivationPattern) -> AffineMap<T> {
        let (d_in, d_out) = (self.d_in(), self.d_out());
        let mut a = Matrix::zeros(d_out, d_in);
        let mut b = self.b2.clone();
        for k in (0..self.n_hidden()).filter(|&k| pattern.get(k)) {
            let w2k = self.w2.row(k);
            for o in 0..d_out {
                for i in 0..d_in {
                    a[(o, i)] += self.w1[(i, k)] * w2k[o];
                }
                b[o] += self.b1[k] * w2k[o];
            }
        }
        AffineMap { a, b }
    }

    /// Sorted inputs in the open interval `(lo, hi)` where a hidden unit of a
    /// scalar-input network switches state.
    pub fn breakpoints_1d(&self, lo: T, hi: T) -> Result<Vec<T>> {
        if self.d_in() != 1 {
            return Err(Error::param(format!(
                "breakpoints_1d needs d_in == 1, got {}",
                self.d_in()
            )));
        }
        if !(lo < hi) {
            return Err(Error::param("breakpoints_1d needs lo < hi"));
        }
        let mut pts: Vec<T> = self
            .w1
            .row(0)
            .iter()
            .zip(&self.b1)
            .filter(|(&w, _)| w != T::zero())
            .map(|(&w, &b)| -b / w)
            .filter(|&x| x > lo && x < hi)
            .collect();
        pts.sort_by(|a, b| a.partial_cmp(b).expect("finite breakpoints"));
        pts.dedup_by(|a, b| (*a - *b).abs() <= T::lit(BREAKPOINT_DEDUP_TOL));
        Ok(pts)
    }
}
