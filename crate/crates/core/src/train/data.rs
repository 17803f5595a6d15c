use std::f64::consts::PI;

use crate::error::{Error, Result};
use crate::numkit::{Matrix, Scalar};

/// Time bins of the sequence-regression task.
pub const LLM_TIME_BINS: usize = 1000;

/// Full sine periods spanned by the sequence-regression target.
pub const LLM_TARGET_PERIODS: f64 = 4.0;

/// Sinusoidal encoding of `position` whose frequencies depend on `context`.
///
/// Entry `2k` is `sin(position / base^(2k/d_model))` and entry `2k+1` the
/// matching cosine, with `base = 100 · context`.
pub fn pe_encode<T: Scalar>(position: usize, context: usize, d_model: usize) -> Result<Vec<T>> {
    if d_model == 0 || !d_model.is_multiple_of(2) {
        return Err(Error::param(format!("d_model must be even and positive, got {d_model}")));
    }
    if context == 0 {
        return Err(Error::param("context must be >= 1"));
    }
    let base = 100.0 * context as f64;
    let mut out = Vec::with_capacity(d_model);
    for k in 0..d_model / 2 {
        let angle = position as f64 / base.powf(2.0 * k as f64 / d_model as f64);
        out.push(T::lit(angle.sin()));
        out.push(T::lit(angle.cos()));
    }
    Ok(out)
}

/// `sin` sampled on a uniform grid over `[-2π, 2π]`, endpoints included.
#[derive(Debug, Clone)]
pub struct SineDatasetMlp<T> {
    pub x: Vec<T>,
    pub y: Vec<T>,
}

impl<T: Scalar> SineDatasetMlp<T> {
    pub fn new(n_points: usize) -> Result<Self> {
        if n_points < 2 {
            return Err(Error::param(format!("need at least 2 grid points, got {n_points}")));
        }
        let (lo, hi) = (-2.0 * PI, 2.0 * PI);
        let x: Vec<f64> = (0..n_points)
            .map(|i| lo + (hi - lo) * i as f64 / (n_points - 1) as f64)
            .collect();
        Ok(SineDatasetMlp {
            y: x.iter().map(|v| T::lit(v.sin())).collect(),
            x: x.into_iter().map(T::lit).collect(),
        })
    }

    pub fn len(&self) -> usize {
        self.x.len()
    }

    pub fn is_empty(&self) -> bool {
        self.x.is_empty()
    }

    pub fn inputs(&self) -> Matrix<T> {
        Matrix::col_vector(&self.x)
    }

    pub fn targets(&self) -> Matrix<T> {
        Matrix::col_vector(&self.y)
    }
}

pub fn make_sine_dataset_mlp<T: Scalar>(n_points: usize) -> Result<SineDatasetMlp<T>> {
    SineDatasetMlp::new(n_points)
}

/// Sliding-window sequence regression over [`LLM_TIME_BINS`] time bins.
///
/// The window for bin `t` holds the encodings of the `context` most recent
/// positions `t-context+1 ..= t`, with positions before 0 replaced by 0. The
/// target is `sin(2π · t · periods / T)`.
#[derive(Debug, Clone)]
pub struct SineDatasetLlm<T> {
    pub context: usize,
    /// Encoding of every position, `T × d_model`.
    pub tokens: Matrix<T>,
    pub targets: Vec<T>,
}

impl<T: Scalar> SineDatasetLlm<T> {
    pub fn new(context: usize, d_model: usize) -> Result<Self> {
        if !(1..=LLM_TIME_BINS).contains(&context) {
            return Err(Error::param(format!(
                "context must lie in [1, {LLM_TIME_BINS}], got {context}"
            )));
        }
        let mut data = Vec::with_capacity(LLM_TIME_BINS * d_model);
        for pos in 0..LLM_TIME_BINS {
            data.extend(pe_encode::<T>(pos, context, d_model)?);
        }
        let tokens = Matrix::from_vec(LLM_TIME_BINS, d_model, data)?;
        let targets = (0..LLM_TIME_BINS)
            .map(|t| {
                let phase = 2.0 * PI * t as f64 * LLM_TARGET_PERIODS / LLM_TIME_BINS as f64;
                T::lit(phase.sin())
            })
            .collect();
        Ok(SineDatasetLlm {
            context,
            tokens,
            targets,
        })
    }

    pub fn len(&self) -> usize {
        self.targets.len()
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn d_model(&self) -> usize {
        self.tokens.cols()
    }

    /// Positions making up the window that ends at bin `t`.
    pub fn window_positions(&self, t: usize) -> Vec<usize> {
        let c = self.context;
        (0..c).map(|j| (t + j + 1).saturating_sub(c)).collect()
    }

    /// The `context × d_model` input sequence ending at bin `t`.
    pub fn window(&self, t: usize) -> Matrix<T> {
        self.tokens.select_rows(&self.window_positions(t))
    }
}

pub fn make_sine_dataset_llm<T: Scalar>(context: usize, d_model: usize) -> Result<SineDatasetLlm<T>> {
    SineDatasetLlm::new(context, d_model)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn position_zero_alternates() {
        let e: Vec<f64> = pe_encode(0, 10, 8).unwrap();
        assert_eq!(e, vec![0.0, 1.0, 0.0, 1.0, 0.0, 1.0, 0.0, 1.0]);
    }

    #[test]
    fn encoding_bounded() {
        for pos in [1, 17, 999, 123_456] {
            let e: Vec<f64> = pe_encode(pos, 100, 32).unwrap();
            assert!(e.iter().all(|v| (-1.0..=1.0).contains(v)));
        }
    }

    #[test]
    fn odd_width_rejected() {
        assert!(matches!(pe_encode::<f64>(3, 10, 7), Err(Error::Parameter(_))));
    }

    #[test]
    fn window_encodings_distinct() {
        for c in [10, 100] {
            let enc: Vec<Vec<f64>> = (0..c).map(|p| pe_encode(p, c, 32).unwrap()).collect();
            let mut min = f64::INFINITY;
            for i in 0..c {
                for j in i + 1..c {
                    let d = enc[i].iter().zip(&enc[j]).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
                    min = min.min(d);
                }
            }
            assert!(min > 1e-6, "context {c}: min distance {min}");
        }
    }

    #[test]
    fn two_point_grid() {
        let d: SineDatasetMlp<f64> = make_sine_dataset_mlp(2).unwrap();
        assert_eq!(d.x, vec![-2.0 * PI, 2.0 * PI]);
        assert!(d.y.iter().all(|v| v.abs() < 1e-15));
        assert!(make_sine_dataset_mlp::<f64>(1).is_err());
    }

    #[test]
    fn five_point_grid_symmetric() {
        let d: SineDatasetMlp<f64> = make_sine_dataset_mlp(5).unwrap();
        assert_eq!(d.x[2], 0.0);
        assert_eq!(d.y[2], 0.0);
        assert!(d.x.windows(2).all(|w| w[0] < w[1]));
        assert!(d.x.iter().zip(&d.y).all(|(x, y)| *y == x.sin()));
    }

    #[test]
    fn dense_grid_reaches_extremes() {
        let d: SineDatasetMlp<f64> = make_sine_dataset_mlp(1000).unwrap();
        let m = d.y.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        // closest grid point to ±3π/2 sits h/8 away
        let h = 4.0 * PI / 999.0;
        assert!((1.0 - m - (1.0 - (h / 8.0).cos())).abs() < 1e-12);
        assert!(1.0 - m < 1.3e-6);
    }

    #[test]
    fn llm_windows() {
        let d: SineDatasetLlm<f64> = make_sine_dataset_llm(1, 8).unwrap();
        assert_eq!(d.window(5).rows(), 1);
        assert_eq!(d.window(5).row(0), d.tokens.row(5));
        assert_eq!(d.targets[0], 0.0);

        let d: SineDatasetLlm<f64> = make_sine_dataset_llm(10, 8).unwrap();
        assert_eq!(d.window_positions(999), (990..1000).collect::<Vec<_>>());
        assert_eq!(d.window_positions(2), vec![0, 0, 0, 0, 0, 0, 0, 0, 1, 2]);
        assert!((0..d.len()).all(|t| d.window(t).rows() == 10));
        assert!(make_sine_dataset_llm::<f64>(0, 8).is_err());
        assert!(make_sine_dataset_llm::<f64>(1001, 8).is_err());
    }
}
