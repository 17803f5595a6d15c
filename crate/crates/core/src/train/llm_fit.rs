//! Sequence-regression training of a single transformer layer.
//!
//! Only the last token of each window is scored, so the trainer evaluates
//! the last attention row of every window directly. Windows overlap and all
//! draw their tokens from one table of position encodings, so key, value and
//! query projections are computed once per step for the whole table and
//! their gradients are pulled back through it at the end.

use serde::{Deserialize, Serialize};

use crate::attention::{standardize, standardize_backward};
use crate::attention::{TransformerConfig, TransformerParams};
use crate::error::{Error, Result};
use crate::geometry::{RegionCount, RegionMethod};
use crate::mlp::{relu, ActivationPattern};
use crate::numkit::{dot, softmax_into, Matrix, Rng, Scalar};
use crate::train::{AdamConfig, AdamState, FitResult, SineDatasetLlm};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LlmFitConfig {
    pub context: usize,
    pub heads: usize,
    pub d_model: usize,
    pub d_head: usize,
    pub n_hidden: usize,
    pub seed: u64,
    pub steps: usize,
    #[serde(default)]
    pub scale_logits: bool,
    pub adam: AdamConfig,
}

impl Default for LlmFitConfig {
    fn default() -> Self {
        LlmFitConfig {
            context: 10,
            heads: 1,
            d_model: 32,
            d_head: 16,
            n_hidden: 64,
            seed: 0,
            steps: 10_000,
            scale_logits: false,
            adam: AdamConfig::default(),
        }
    }
}

impl LlmFitConfig {
    pub fn transformer(&self) -> TransformerConfig {
        TransformerConfig {
            d_model: self.d_model,
            d_head: self.d_head,
            n_hidden: self.n_hidden,
            heads: self.heads,
            scale_logits: self.scale_logits,
        }
    }
}

/// Trains on the last-token MSE of [`SineDatasetLlm`].
pub fn fit_llm_sine<T: Scalar>(cfg: &LlmFitConfig) -> Result<FitResult<TransformerParams<T>, T>> {
    if cfg.heads == 0 {
        return Err(Error::param("heads must be >= 1"));
    }
    let data = SineDatasetLlm::<T>::new(cfg.context, cfg.d_model)?;
    let mut rng = Rng::seed_from(cfg.seed);
    let params = TransformerParams::init(&mut rng, &cfg.transformer())?;
    train_llm(params, &data, cfg.steps, cfg.adam)
}

pub fn train_llm<T: Scalar>(
    mut params: TransformerParams<T>,
    data: &SineDatasetLlm<T>,
    steps: usize,
    adam: AdamConfig,
) -> Result<FitResult<TransformerParams<T>, T>> {
    let mut state = AdamState::for_slices(adam, &params.slices());
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let (loss, grads) = last_token_loss_and_grad(&params, data)?;
        if !loss.is_finite() {
            return Err(Error::Training { step });
        }
        losses.push(loss);
        state.step(params.slices_mut(), grads.slices())?;
    }
    let final_mse = last_token_loss(&params, data)?;
    if !final_mse.is_finite() {
        return Err(Error::Training { step: steps });
    }
    Ok(FitResult {
        params,
        losses,
        final_mse,
    })
}

/// Projections of the whole token table for one head.
struct HeadTables<T> {
    q: Matrix<T>,
    k: Matrix<T>,
    v: Matrix<T>,
}

fn head_tables<T: Scalar>(p: &TransformerParams<T>, tokens: &Matrix<T>) -> Result<Vec<HeadTables<T>>> {
    p.heads
        .iter()
        .map(|h| {
            Ok(HeadTables {
                q: tokens.matmul(&h.q)?,
                k: tokens.matmul(&h.k)?,
                v: tokens.matmul(&h.v)?,
            })
        })
        .collect()
}

/// Forward state of one window's last row.
struct LastRow<T> {
    /// per head: attention weights over the window
    attn: Vec<Vec<T>>,
    /// per head: attention-weighted value, d_head
    head_out: Vec<Vec<T>>,
    zhat: Vec<T>,
    inv_std: T,
    mlp_in: Vec<T>,
    pre: Vec<T>,
    hidden: Vec<T>,
    y: Vec<T>,
    pred: T,
}

fn forward_last_row<T: Scalar>(
    p: &TransformerParams<T>,
    tables: &[HeadTables<T>],
    tokens: &Matrix<T>,
    positions: &[usize],
) -> LastRow<T> {
    let d = p.d_model();
    let last = *positions.last().expect("nonempty window");
    let x_last = tokens.row(last);
    let scale = p.logit_scale();
    let mut z = x_last.to_vec();
    let mut attn = Vec::with_capacity(tables.len());
    let mut head_out = Vec::with_capacity(tables.len());
    for (hp, tab) in p.heads.iter().zip(tables) {
        let q = tab.q.row(last);
        let logits: Vec<T> = positions.iter().map(|&j| dot(q, tab.k.row(j)) * scale).collect();
        let mut a = vec![T::zero(); positions.len()];
        softmax_into(&logits, &mut a);
        let mut ho = vec![T::zero(); tab.v.cols()];
        for (&w, &j) in a.iter().zip(positions) {
            for (o, &v) in ho.iter_mut().zip(tab.v.row(j)) {
                *o += w * v;
            }
        }
        for (c, &hc) in ho.iter().enumerate() {
            for (zz, &o) in z.iter_mut().zip(hp.o.row(c)) {
                *zz += hc * o;
            }
        }
        attn.push(a);
        head_out.push(ho);
    }
    let mut zhat = vec![T::zero(); d];
    let inv_std = standardize(&z, &mut zhat);
    let mlp_in: Vec<T> = zhat
        .iter()
        .zip(&p.ln_gain)
        .zip(&p.ln_offset)
        .map(|((&zh, &g), &b)| zh * g + b)
        .collect();
    let pre = p.mlp.pre_activations(&mlp_in);
    let hidden: Vec<T> = pre.iter().map(|&v| relu(v)).collect();
    let mut y = p.mlp.b2.clone();
    for (k, &h) in hidden.iter().enumerate() {
        if h != T::zero() {
            for (yy, &w) in y.iter_mut().zip(p.mlp.w2.row(k)) {
                *yy += h * w;
            }
        }
    }
    for (yy, &x) in y.iter_mut().zip(x_last) {
        *yy += x;
    }
    let pred = dot(&y, p.readout.as_slice()) + p.readout_bias;
    LastRow {
        attn,
        head_out,
        zhat,
        inv_std,
        mlp_in,
        pre,
        hidden,
        y,
        pred,
    }
}

/// Last-token prediction for every window.
pub fn predict_last_tokens<T: Scalar>(p: &TransformerParams<T>, data: &SineDatasetLlm<T>) -> Result<Vec<T>> {
    check_data(p, data)?;
    let tables = head_tables(p, &data.tokens)?;
    Ok((0..data.len())
        .map(|t| forward_last_row(p, &tables, &data.tokens, &data.window_positions(t)).pred)
        .collect())
}

/// Mean squared last-token error over the dataset.
pub fn last_token_loss<T: Scalar>(p: &TransformerParams<T>, data: &SineDatasetLlm<T>) -> Result<T> {
    let preds = predict_last_tokens(p, data)?;
    let n = T::lit(preds.len() as f64);
    Ok(preds
        .iter()
        .zip(&data.targets)
        .map(|(&a, &b)| (a - b) * (a - b))
        .sum::<T>()
        / n)
}

fn check_data<T: Scalar>(p: &TransformerParams<T>, data: &SineDatasetLlm<T>) -> Result<()> {
    if data.d_model() != p.d_model() {
        return Err(Error::Dimension {
            op: "llm dataset",
            left: data.tokens.shape(),
            right: (data.tokens.rows(), p.d_model()),
        });
    }
    Ok(())
}

fn axpy<T: Scalar>(a: T, x: &[T], y: &mut [T]) {
    for (yy, &xx) in y.iter_mut().zip(x) {
        *yy += a * xx;
    }
}

/// Last-token MSE and its gradient with respect to every parameter.
pub fn last_token_loss_and_grad<T: Scalar>(
    p: &TransformerParams<T>,
    data: &SineDatasetLlm<T>,
) -> Result<(T, TransformerParams<T>)> {
    check_data(p, data)?;
    let cfg = p.config();
    let (d, dh, nh) = (cfg.d_model, cfg.d_head, cfg.n_hidden);
    let tokens = &data.tokens;
    let tables = head_tables(p, tokens)?;
    let mut g = TransformerParams::<T>::zeros(&cfg);
    let mut d_tables: Vec<HeadTables<T>> = (0..cfg.heads)
        .map(|_| HeadTables {
            q: Matrix::zeros(tokens.rows(), dh),
            k: Matrix::zeros(tokens.rows(), dh),
            v: Matrix::zeros(tokens.rows(), dh),
        })
        .collect();
    let scale = p.logit_scale();
    let n = T::lit(data.len() as f64);
    let mut loss = T::zero();
    let mut dy = vec![T::zero(); d];
    let mut d_hidden = vec![T::zero(); nh];
    let mut du = vec![T::zero(); d];
    let mut dzhat = vec![T::zero(); d];
    let mut dz = vec![T::zero(); d];
    for t in 0..data.len() {
        let positions = data.window_positions(t);
        let last = t;
        let f = forward_last_row(p, &tables, tokens, &positions);
        let err = f.pred - data.targets[t];
        loss += err * err;
        let dpred = T::lit(2.0) * err / n;

        // readout
        axpy(dpred, &f.y, g.readout.as_mut_slice());
        g.readout_bias += dpred;
        for (o, &r) in dy.iter_mut().zip(p.readout.as_slice()) {
            *o = dpred * r;
        }

        // mlp
        for (k, &h) in f.hidden.iter().enumerate() {
            if h != T::zero() {
                axpy(h, &dy, g.mlp.w2.row_mut(k));
            }
            d_hidden[k] = if f.pre[k] > T::zero() {
                dot(p.mlp.w2.row(k), &dy)
            } else {
                T::zero()
            };
        }
        for (b, &v) in g.mlp.b2.iter_mut().zip(&dy) {
            *b += v;
        }
        for (b, &v) in g.mlp.b1.iter_mut().zip(&d_hidden) {
            *b += v;
        }
        for (i, &u) in f.mlp_in.iter().enumerate() {
            axpy(u, &d_hidden, g.mlp.w1.row_mut(i));
            du[i] = dot(p.mlp.w1.row(i), &d_hidden);
        }

        // layer norm
        for c in 0..d {
            g.ln_gain[c] += du[c] * f.zhat[c];
            g.ln_offset[c] += du[c];
            dzhat[c] = du[c] * p.ln_gain[c];
        }
        standardize_backward(&f.zhat, f.inv_std, &dzhat, &mut dz);

        // attention
        for (h, (hp, tab)) in p.heads.iter().zip(&tables).enumerate() {
            let ho = &f.head_out[h];
            let a = &f.attn[h];
            let gh = &mut g.heads[h];
            let mut d_ho = vec![T::zero(); dh];
            for c in 0..dh {
                axpy(ho[c], &dz, gh.o.row_mut(c));
                d_ho[c] = dot(hp.o.row(c), &dz);
            }
            let dtab = &mut d_tables[h];
            let d_attn: Vec<T> = positions.iter().map(|&j| dot(&d_ho, tab.v.row(j))).collect();
            for (&w, &j) in a.iter().zip(&positions) {
                axpy(w, &d_ho, dtab.v.row_mut(j));
            }
            let inner: T = a.iter().zip(&d_attn).map(|(&w, &da)| w * da).sum();
            let q = tab.q.row(last);
            let mut dq = vec![T::zero(); dh];
            for ((&w, &da), &j) in a.iter().zip(&d_attn).zip(&positions) {
                let dl = w * (da - inner) * scale;
                axpy(dl, tab.k.row(j), &mut dq);
                axpy(dl, q, dtab.k.row_mut(j));
            }
            axpy(T::one(), &dq, dtab.q.row_mut(last));
        }
    }
    for (gh, dtab) in g.heads.iter_mut().zip(&d_tables) {
        gh.q = tokens.t_matmul(&dtab.q)?;
        gh.k = tokens.t_matmul(&dtab.k)?;
        gh.v = tokens.t_matmul(&dtab.v)?;
    }
    Ok((loss / n, g))
}

/// Distinct MLP activation patterns over every token row of every window,
/// using the post-LayerNorm inputs from the full layer forward pass.
pub fn count_regions_over_dataset<T: Scalar>(
    p: &TransformerParams<T>,
    data: &SineDatasetLlm<T>,
) -> Result<RegionCount> {
    check_data(p, data)?;
    let mut set = std::collections::HashSet::<ActivationPattern>::new();
    let mut samples = 0;
    for t in 0..data.len() {
        let out = p.layer_forward(&data.window(t))?;
        samples += out.mlp_inputs.rows();
        for row in out.mlp_inputs.iter_rows() {
            set.insert(p.mlp.activation_pattern(row));
        }
    }
    Ok(RegionCount {
        count: set.len(),
        method: RegionMethod::DistinctPattern,
        samples_used: samples,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numkit::relative_error;

    fn small(context: usize, heads: usize, seed: u64) -> (TransformerParams<f64>, SineDatasetLlm<f64>) {
        let cfg = LlmFitConfig {
            context,
            heads,
            d_model: 8,
            d_head: 4,
            n_hidden: 12,
            seed,
            ..Default::default()
        };
        let data = SineDatasetLlm::new(context, 8).unwrap();
        let p = TransformerParams::init(&mut Rng::seed_from(seed), &cfg.transformer()).unwrap();
        (p, data)
    }

    /// Loss and gradient assembled window by window from the full layer.
    fn per_window(p: &TransformerParams<f64>, data: &SineDatasetLlm<f64>) -> (f64, TransformerParams<f64>) {
        let n = data.len() as f64;
        let mut g = TransformerParams::zeros(&p.config());
        let mut loss = 0.0;
        for t in 0..data.len() {
            let x = data.window(t);
            let y = p.layer_forward(&x).unwrap().y;
            let pred = p.readout_last(&y);
            let err = pred - data.targets[t];
            loss += err * err;
            let dpred = 2.0 * err / n;
            let last = y.row(y.rows() - 1);
            for (gr, &v) in g.readout.as_mut_slice().iter_mut().zip(last) {
                *gr += dpred * v;
            }
            g.readout_bias += dpred;
            let mut gy = Matrix::zeros(x.rows(), x.cols());
            for (o, &r) in gy.row_mut(x.rows() - 1).iter_mut().zip(p.readout.as_slice()) {
                *o = dpred * r;
            }
            let lg = p.layer_backward(&x, &gy).unwrap();
            for (acc, s) in g.slices_mut().into_iter().zip(lg.params.slices()) {
                for (a, &b) in acc.iter_mut().zip(s) {
                    *a += b;
                }
            }
        }
        (loss / n, g)
    }

    #[test]
    fn batched_path_matches_full_layer() {
        for (context, heads) in [(1, 1), (5, 2), (12, 3)] {
            let (p, data) = small(context, heads, 3);
            let (l_fast, g_fast) = last_token_loss_and_grad(&p, &data).unwrap();
            let (l_slow, g_slow) = per_window(&p, &data);
            assert!((l_fast - l_slow).abs() <= 1e-12 * l_slow.abs());
            for (a, b) in g_fast.slices().iter().zip(g_slow.slices()) {
                assert!(relative_error(a, b) < 1e-10, "{} vs {}", a.len(), b.len());
            }
            let preds = predict_last_tokens(&p, &data).unwrap();
            let y = p.layer_forward(&data.window(17)).unwrap().y;
            assert!((preds[17] - p.readout_last(&y)).abs() < 1e-12);
        }
    }

    #[test]
    fn zero_budget_returns_initialisation() {
        let cfg = LlmFitConfig {
            steps: 0,
            ..Default::default()
        };
        let fit = fit_llm_sine::<f64>(&cfg).unwrap();
        let init = TransformerParams::init(&mut Rng::seed_from(0), &cfg.transformer()).unwrap();
        assert_eq!(fit.params, init);
    }

    #[test]
    fn loss_decreases_early() {
        let cfg = LlmFitConfig {
            context: 10,
            heads: 1,
            seed: 0,
            steps: 500,
            ..Default::default()
        };
        let fit = fit_llm_sine::<f64>(&cfg).unwrap();
        let w = 50;
        let smooth: Vec<f64> = fit
            .losses
            .windows(w)
            .map(|s| s.iter().sum::<f64>() / w as f64)
            .collect();
        assert!(
            smooth.windows(2).all(|p| p[1] < p[0]),
            "smoothed loss not monotone"
        );
    }

    #[test]
    fn region_count_covers_all_rows() {
        let (p, data) = small(4, 2, 9);
        let rc = count_regions_over_dataset(&p, &data).unwrap();
        assert_eq!(rc.samples_used, 4 * data.len());
        assert!(rc.count >= 1);
    }
}
