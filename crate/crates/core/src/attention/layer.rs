use crate::attention::{AttentionTensor, TransformerParams};
use crate::error::{Error, Result};
use crate::mlp::MlpCache;
use crate::numkit::{softmax_causal, Matrix, Scalar};

pub const LAYER_NORM_EPS: f64 = 1e-5;

#[derive(Debug, Clone)]
pub struct LayerOutput<T> {
    /// `MLP(LayerNorm(MHA(X) + X)) + X`
    pub y: Matrix<T>,
    pub attn: AttentionTensor<T>,
    /// Post-LayerNorm rows fed to the MLP.
    pub mlp_inputs: Matrix<T>,
}

#[derive(Debug, Clone)]
struct HeadCache<T> {
    xq: Matrix<T>,
    xk: Matrix<T>,
    xv: Matrix<T>,
    attn: Matrix<T>,
    out: Matrix<T>,
}

/// Every intermediate of a layer forward pass.
#[derive(Debug, Clone)]
pub struct LayerCache<T> {
    heads: Vec<HeadCache<T>>,
    normalized: Matrix<T>,
    inv_std: Vec<T>,
    mlp_in: Matrix<T>,
    mlp: MlpCache<T>,
    y: Matrix<T>,
}

/// Gradients of a scalar function of the layer output.
///
/// `params.readout` and `params.readout_bias` are zero: the readout is not
/// part of the layer.
#[derive(Debug, Clone)]
pub struct LayerGrads<T> {
    pub params: TransformerParams<T>,
    pub x: Matrix<T>,
}

/// Per-row standardisation; returns `(ẑ, 1/σ)`.
pub(crate) fn standardize<T: Scalar>(z: &[T], out: &mut [T]) -> T {
    let n = T::lit(z.len() as f64);
    let mean = z.iter().copied().sum::<T>() / n;
    let var = z.iter().map(|&v| (v - mean) * (v - mean)).sum::<T>() / n;
    let inv_std = T::one() / (var + T::lit(LAYER_NORM_EPS)).sqrt();
    for (o, &v) in out.iter_mut().zip(z) {
        *o = (v - mean) * inv_std;
    }
    inv_std
}

/// Backward through `ẑ = (z - μ)/σ` given `dẑ`; writes `dz`.
pub(crate) fn standardize_backward<T: Scalar>(zhat: &[T], inv_std: T, dzhat: &[T], dz: &mut [T]) {
    let n = T::lit(zhat.len() as f64);
    let mean_d = dzhat.iter().copied().sum::<T>() / n;
    let mean_dz = dzhat.iter().zip(zhat).map(|(&a, &b)| a * b).sum::<T>() / n;
    for ((o, &d), &zh) in dz.iter_mut().zip(dzhat).zip(zhat) {
        *o = inv_std * (d - mean_d - zh * mean_dz);
    }
}

impl<T: Scalar> TransformerParams<T> {
    /// Full layer forward pass.
    pub fn layer_forward(&self, x: &Matrix<T>) -> Result<LayerOutput<T>> {
        let cache = self.layer_forward_cached(x)?;
        let maps = cache.heads.iter().map(|h| h.attn.clone()).collect();
        Ok(LayerOutput {
            y: cache.y,
            attn: AttentionTensor::from_maps_unchecked(maps),
            mlp_inputs: cache.mlp_in,
        })
    }

    pub fn layer_forward_cached(&self, x: &Matrix<T>) -> Result<LayerCache<T>> {
        self.check_input(x, "layer_forward")?;
        let scale = self.logit_scale();
        let mut mha = Matrix::zeros(x.rows(), self.d_model());
        let mut heads = Vec::with_capacity(self.n_heads());
        for hp in &self.heads {
            let xq = x.matmul(&hp.q)?;
            let xk = x.matmul(&hp.k)?;
            let xv = x.matmul(&hp.v)?;
            let attn = softmax_causal(&xq.matmul_t(&xk)?.scale(scale))?;
            let out = attn.matmul(&xv)?;
            mha.add_assign(&out.matmul(&hp.o)?)?;
            heads.push(HeadCache { xq, xk, xv, attn, out });
        }
        let z = mha.add(x)?;
        let mut normalized = Matrix::zeros(z.rows(), z.cols());
        let mut inv_std = Vec::with_capacity(z.rows());
        for i in 0..z.rows() {
            inv_std.push(standardize(z.row(i), normalized.row_mut(i)));
        }
        let mut mlp_in = normalized.clone();
        for i in 0..mlp_in.rows() {
            for ((u, &g), &b) in mlp_in.row_mut(i).iter_mut().zip(&self.ln_gain).zip(&self.ln_offset) {
                *u = *u * g + b;
            }
        }
        let mlp = self.mlp.forward_cached(&mlp_in)?;
        let y = mlp.out.add(x)?;
        Ok(LayerCache {
            heads,
            normalized,
            inv_std,
            mlp_in,
            mlp,
            y,
        })
    }

    /// Reverse-mode gradients of `Σ grad_y ⊙ Layer(x)` through attention,
    /// LayerNorm, the MLP and both residual paths.
    pub fn layer_backward(&self, x: &Matrix<T>, grad_y: &Matrix<T>) -> Result<LayerGrads<T>> {
        let cache = self.layer_forward_cached(x)?;
        self.layer_backward_cached(x, &cache, grad_y)
    }

    pub fn layer_backward_cached(
        &self,
        x: &Matrix<T>,
        cache: &LayerCache<T>,
        grad_y: &Matrix<T>,
    ) -> Result<LayerGrads<T>> {
        if grad_y.shape() != x.shape() {
            return Err(Error::Dimension {
                op: "layer_backward",
                left: x.shape(),
                right: grad_y.shape(),
            });
        }
        let mut grads = TransformerParams::zeros(&self.config());
        let mut dx = grad_y.clone();

        let mlp_grads = self.mlp.backward_cached(&cache.mlp_in, &cache.mlp, grad_y)?;
        let du = mlp_grads.x;
        grads.mlp = mlp_grads.params;

        let mut dz = Matrix::zeros(x.rows(), x.cols());
        let mut dzhat = vec![T::zero(); x.cols()];
        for i in 0..x.rows() {
            let zhat = cache.normalized.row(i);
            for (c, &d) in du.row(i).iter().enumerate() {
                grads.ln_gain[c] += d * zhat[c];
                grads.ln_offset[c] += d;
                dzhat[c] = d * self.ln_gain[c];
            }
            standardize_backward(zhat, cache.inv_std[i], &dzhat, dz.row_mut(i));
        }
        dx.add_assign(&dz)?;

        let scale = self.logit_scale();
        for ((hp, hc), hg) in self.heads.iter().zip(&cache.heads).zip(grads.heads.iter_mut()) {
            hg.o = hc.out.t_matmul(&dz)?;
            let d_out = dz.matmul_t(&hp.o)?;
            let d_attn = d_out.matmul_t(&hc.xv)?;
            let d_xv = hc.attn.t_matmul(&d_out)?;
            let n = x.rows();
            let mut d_logits = Matrix::zeros(n, n);
            for i in 0..n {
                let p = &hc.attn.row(i)[..=i];
                let dp = &d_attn.row(i)[..=i];
                let inner: T = p.iter().zip(dp).map(|(&a, &b)| a * b).sum();
                for (j, (&pj, &dpj)) in p.iter().zip(dp).enumerate() {
                    d_logits[(i, j)] = pj * (dpj - inner) * scale;
                }
            }
            let d_xq = d_logits.matmul(&hc.xk)?;
            let d_xk = d_logits.t_matmul(&hc.xq)?;
            hg.q = x.t_matmul(&d_xq)?;
            hg.k = x.t_matmul(&d_xk)?;
            hg.v = x.t_matmul(&d_xv)?;
            dx.add_assign(&d_xq.matmul_t(&hp.q)?)?;
            dx.add_assign(&d_xk.matmul_t(&hp.k)?)?;
            dx.add_assign(&d_xv.matmul_t(&hp.v)?)?;
        }
        Ok(LayerGrads { params: grads, x: dx })
    }
}

impl<T: Scalar> LayerCache<T> {
    pub fn y(&self) -> &Matrix<T> {
        &self.y
    }

    pub fn mlp_inputs(&self) -> &Matrix<T> {
        &self.mlp_in
    }
}
