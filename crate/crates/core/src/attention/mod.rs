//! Single causal transformer layer: multi-head attention, LayerNorm, a
//! one-hidden-layer MLP and residual connections.
//!
//! ```text
//! head_h(X) = softmax_causal(X Q_h (X K_h)ᵀ) X V_h
//! MHA(X)    = Σ_h head_h(X) O_h
//! Layer(X)  = MLP(LayerNorm(MHA(X) + X)) + X
//! ```
//!
//! Logits are unscaled unless [`TransformerConfig::scale_logits`] is set, in
//! which case they are divided by `sqrt(d_head)`. Row and head indices are
//! zero-based throughout.

mod layer;
mod tensor;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{BiasMode, MlpParams};
use crate::numkit::{softmax_causal, Matrix, Rng, Scalar};

pub(crate) use layer::{standardize, standardize_backward};
pub use layer::{LayerCache, LayerGrads, LayerOutput, LAYER_NORM_EPS};
pub use tensor::{effective_dim_bound, AttentionTensor, ATTN_ROW_SUM_TOL};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct TransformerConfig {
    pub d_model: usize,
    pub d_head: usize,
    pub n_hidden: usize,
    pub heads: usize,
    #[serde(default)]
    pub scale_logits: bool,
}

impl Default for TransformerConfig {
    fn default() -> Self {
        TransformerConfig {
            d_model: 32,
            d_head: 16,
            n_hidden: 64,
            heads: 1,
            scale_logits: false,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct HeadParams<T> {
    /// d_model × d_head
    pub q: Matrix<T>,
    /// d_model × d_head
    pub k: Matrix<T>,
    /// d_model × d_head
    pub v: Matrix<T>,
    /// d_head × d_model
    pub o: Matrix<T>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct TransformerParams<T> {
    pub heads: Vec<HeadParams<T>>,
    pub ln_gain: Vec<T>,
    pub ln_offset: Vec<T>,
    /// d_model → n_hidden → d_model
    pub mlp: MlpParams<T>,
    /// d_model × 1 regression head applied to the layer output.
    pub readout: Matrix<T>,
    pub readout_bias: T,
    pub scale_logits: bool,
}

impl<T: Scalar> HeadParams<T> {
    fn zeros(d_model: usize, d_head: usize) -> Self {
        HeadParams {
            q: Matrix::zeros(d_model, d_head),
            k: Matrix::zeros(d_model, d_head),
            v: Matrix::zeros(d_model, d_head),
            o: Matrix::zeros(d_head, d_model),
        }
    }
}

impl<T: Scalar> TransformerParams<T> {
    /// Random initialisation: projections `N(0, 1/fan_in)`, LayerNorm gain 1
    /// and offset 0, He-initialised MLP with standard biases, readout
    /// `N(0, 1/d_model)` with zero bias.
    pub fn init(rng: &mut Rng, cfg: &TransformerConfig) -> Result<Self> {
        let TransformerConfig {
            d_model,
            d_head,
            n_hidden,
            heads,
            scale_logits,
        } = *cfg;
        if d_model == 0 || d_head == 0 || n_hidden == 0 || heads == 0 {
            return Err(Error::param(format!("transformer dims must be >= 1: {cfg:?}")));
        }
        let in_std = (1.0 / d_model as f64).sqrt();
        let out_std = (1.0 / (d_head * heads) as f64).sqrt();
        let mut hs = Vec::with_capacity(heads);
        for _ in 0..heads {
            hs.push(HeadParams {
                q: rng.normal_matrix(d_model, d_head, 0.0, in_std)?,
                k: rng.normal_matrix(d_model, d_head, 0.0, in_std)?,
                v: rng.normal_matrix(d_model, d_head, 0.0, in_std)?,
                o: rng.normal_matrix(d_head, d_model, 0.0, out_std)?,
            });
        }
        let mlp = MlpParams::init(rng, d_model, n_hidden, d_model, BiasMode::Standard)?;
        let readout = rng.normal_matrix(d_model, 1, 0.0, in_std)?;
        Ok(TransformerParams {
            heads: hs,
            ln_gain: vec![T::one(); d_model],
            ln_offset: vec![T::zero(); d_model],
            mlp,
            readout,
            readout_bias: T::zero(),
            scale_logits,
        })
    }

    /// All-zero parameters with the shapes of `cfg`; used as a gradient accumulator.
    pub fn zeros(cfg: &TransformerConfig) -> Self {
        TransformerParams {
            heads: (0..cfg.heads)
                .map(|_| HeadParams::zeros(cfg.d_model, cfg.d_head))
                .collect(),
            ln_gain: vec![T::zero(); cfg.d_model],
            ln_offset: vec![T::zero(); cfg.d_model],
            mlp: MlpParams::zeros(cfg.d_model, cfg.n_hidden, cfg.d_model),
            readout: Matrix::zeros(cfg.d_model, 1),
            readout_bias: T::zero(),
            scale_logits: cfg.scale_logits,
        }
    }

    pub fn config(&self) -> TransformerConfig {
        TransformerConfig {
            d_model: self.d_model(),
            d_head: self.d_head(),
            n_hidden: self.mlp.n_hidden(),
            heads: self.heads.len(),
            scale_logits: self.scale_logits,
        }
    }

    pub fn d_model(&self) -> usize {
        self.ln_gain.len()
    }

    pub fn d_head(&self) -> usize {
        self.heads.first().map_or(0, |h| h.q.cols())
    }

    pub fn n_heads(&self) -> usize {
        self.heads.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.heads.is_empty() {
            return Err(Error::param("transformer needs at least one head"));
        }
        let (d, dh) = (self.d_model(), self.d_head());
        for h in &self.heads {
            for (m, want) in [(&h.q, (d, dh)), (&h.k, (d, dh)), (&h.v, (d, dh)), (&h.o, (dh, d))] {
                if m.shape() != want {
                    return Err(Error::Dimension {
                        op: "head params",
                        left: want,
                        right: m.shape(),
                    });
                }
            }
        }
        self.mlp.validate()?;
        if self.ln_offset.len() != d
            || self.mlp.d_in() != d
            || self.mlp.d_out() != d
            || self.readout.shape() != (d, 1)
        {
            return Err(Error::param(format!(
                "inconsistent transformer shapes for d_model={d}"
            )));
        }
        let finite = self.slices().iter().all(|s| s.iter().all(|v| v.is_finite()));
        if !finite {
            return Err(Error::param("transformer parameters contain non-finite values"));
        }
        Ok(())
    }

    pub(crate) fn logit_scale(&self) -> T {
        if self.scale_logits {
            T::one() / T::lit(self.d_head() as f64).sqrt()
        } else {
            T::one()
        }
    }

    fn head(&self, h: usize) -> Result<&HeadParams<T>> {
        self.heads.get(h).ok_or_else(|| {
            Error::param(format!("head index {h} out of range for {} heads", self.heads.len()))
        })
    }

    fn check_input(&self, x: &Matrix<T>, op: &'static str) -> Result<()> {
        if x.cols() != self.d_model() || x.rows() == 0 {
            return Err(Error::Dimension {
                op,
                left: x.shape(),
                right: (x.rows().max(1), self.d_model()),
            });
        }
        Ok(())
    }

    /// Causal attention map of head `h`.
    pub fn head_attention(&self, h: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x, "head_attention")?;
        let hp = self.head(h)?;
        let logits = x
            .matmul(&hp.q)?
            .matmul_t(&x.matmul(&hp.k)?)?
            .scale(self.logit_scale());
        softmax_causal(&logits)
    }

    /// `softmax_causal(X Q_h (X K_h)ᵀ) X V_h`, n × d_head.
    pub fn head_forward(&self, h: usize, x: &Matrix<T>) -> Result<Matrix<T>> {
        let attn = self.head_attention(h, x)?;
        attn.matmul(&x.matmul(&self.head(h)?.v)?)
    }

    /// `Σ_h head_h(X) O_h`, n × d_model.
    pub fn mha_forward(&self, x: &Matrix<T>) -> Result<Matrix<T>> {
        self.check_input(x, "mha_forward")?;
        let mut out = Matrix::zeros(x.rows(), self.d_model());
        for (h, hp) in self.heads.iter().enumerate() {
            out.add_assign(&self.head_forward(h, x)?.matmul(&hp.o)?)?;
        }
        Ok(out)
    }

    /// The causal attention maps of every head.
    pub fn attn_map(&self, x: &Matrix<T>) -> Result<AttentionTensor<T>> {
        let maps = (0..self.n_heads())
            .map(|h| self.head_attention(h, x))
            .collect::<Result<Vec<_>>>()?;
        Ok(AttentionTensor::from_maps_unchecked(maps))
    }

    /// Support points `x_j V_h O_h` for `j ≤ i`, one per row.
    pub fn head_support_points(&self, h: usize, x: &Matrix<T>, i: usize) -> Result<Matrix<T>> {
        self.check_input(x, "head_support_points")?;
        self.check_row(x, i)?;
        let hp = self.head(h)?;
        let prefix: Vec<usize> = (0..=i).collect();
        x.select_rows(&prefix).matmul(&hp.v)?.matmul(&hp.o)
    }

    /// Per-head summands of row `i` of the MHA output.
    ///
    /// Row `h` of the result is the convex combination of head `h`'s support
    /// points weighted by attention row `i`; the rows sum to `MHA(X)_i`.
    pub fn minkowski_reconstruct(&self, x: &Matrix<T>, i: usize) -> Result<Matrix<T>> {
        self.check_input(x, "minkowski_reconstruct")?;
        self.check_row(x, i)?;
        let mut out = Matrix::zeros(self.n_heads(), self.d_model());
        for h in 0..self.n_heads() {
            let attn = self.head_attention(h, x)?;
            let support = self.head_support_points(h, x, i)?;
            let summand = out.row_mut(h);
            for (j, point) in support.iter_rows().enumerate() {
                let w = attn[(i, j)];
                for (s, &p) in summand.iter_mut().zip(point) {
                    *s += w * p;
                }
            }
        }
        Ok(out)
    }

    fn check_row(&self, x: &Matrix<T>, i: usize) -> Result<()> {
        if i >= x.rows() {
            return Err(Error::param(format!(
                "row index {i} out of range for {} tokens",
                x.rows()
            )));
        }
        Ok(())
    }

    /// Scalar prediction `y_last · readout + bias` from a layer output.
    pub fn readout_last(&self, y: &Matrix<T>) -> T {
        let last = y.row(y.rows() - 1);
        crate::numkit::dot(last, self.readout.as_slice()) + self.readout_bias
    }

    /// Flat views of every parameter tensor, in a fixed order.
    pub fn slices(&self) -> Vec<&[T]> {
        let mut out = Vec::new();
        for h in &self.heads {
            out.extend([h.q.as_slice(), h.k.as_slice(), h.v.as_slice(), h.o.as_slice()]);
        }
        out.push(&self.ln_gain);
        out.push(&self.ln_offset);
        out.extend(self.mlp.slices());
        out.push(self.readout.as_slice());
        out.push(std::slice::from_ref(&self.readout_bias));
        out
    }

    pub fn slices_mut(&mut self) -> Vec<&mut [T]> {
        let mut out: Vec<&mut [T]> = Vec::new();
        for h in &mut self.heads {
            out.push(h.q.as_mut_slice());
            out.push(h.k.as_mut_slice());
            out.push(h.v.as_mut_slice());
            out.push(h.o.as_mut_slice());
        }
        out.push(&mut self.ln_gain);
        out.push(&mut self.ln_offset);
        out.extend(self.mlp.slices_mut());
        out.push(self.readout.as_mut_slice());
        out.push(std::slice::from_mut(&mut self.readout_bias));
        out
    }
}
