use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mlp::{mse_with_grad, BiasMode, MlpParams};
use crate::numkit::{Rng, Scalar};
use crate::train::{AdamConfig, AdamState, SineDatasetMlp};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MlpFitConfig {
    pub n_hidden: usize,
    pub seed: u64,
    pub steps: usize,
    pub n_points: usize,
    pub adam: AdamConfig,
}

impl Default for MlpFitConfig {
    fn default() -> Self {
        MlpFitConfig {
            n_hidden: 50,
            seed: 0,
            steps: 20_000,
            n_points: 1000,
            adam: AdamConfig::default(),
        }
    }
}

/// Trained network plus its training trace.
#[derive(Debug, Clone)]
pub struct FitResult<P, T> {
    pub params: P,
    /// Training loss before each update, one entry per step.
    pub losses: Vec<T>,
    /// Loss of the returned parameters.
    pub final_mse: T,
}

impl<P, T: Scalar> FitResult<P, T> {
    /// `(step, loss)` every `every` steps, plus the final loss at `losses.len()`.
    pub fn loss_curve(&self, every: usize) -> Vec<(usize, T)> {
        let every = every.max(1);
        let mut out: Vec<(usize, T)> = self
            .losses
            .iter()
            .enumerate()
            .step_by(every)
            .map(|(i, &l)| (i, l))
            .collect();
        out.push((self.losses.len(), self.final_mse));
        out
    }
}

/// Full-batch Adam fit of a one-hidden-layer network to `sin` on `[-2π, 2π]`.
pub fn fit_mlp_sine<T: Scalar>(cfg: &MlpFitConfig) -> Result<FitResult<MlpParams<T>, T>> {
    if cfg.n_hidden == 0 {
        return Err(Error::param("n_hidden must be >= 1"));
    }
    let data = SineDatasetMlp::<T>::new(cfg.n_points)?;
    let mut rng = Rng::seed_from(cfg.seed);
    let params = MlpParams::init(&mut rng, 1, cfg.n_hidden, 1, BiasMode::Standard)?;
    train_mlp(params, &data, cfg.steps, cfg.adam)
}

/// Full-batch MSE training from given initial parameters.
pub fn train_mlp<T: Scalar>(
    mut params: MlpParams<T>,
    data: &SineDatasetMlp<T>,
    steps: usize,
    adam: AdamConfig,
) -> Result<FitResult<MlpParams<T>, T>> {
    let x = data.inputs();
    let y = data.targets();
    let mut state = AdamState::for_slices(adam, &params.slices());
    let mut losses = Vec::with_capacity(steps);
    for step in 0..steps {
        let cache = params.forward_cached(&x)?;
        let (loss, g_out) = mse_with_grad(&cache.out, &y)?;
        if !loss.is_finite() {
            return Err(Error::Training { step });
        }
        losses.push(loss);
        let grads = params.backward_cached(&x, &cache, &g_out)?;
        state.step(params.slices_mut(), grads.params.slices())?;
    }
    let (final_mse, _) = mse_with_grad(&params.forward(&x)?, &y)?;
    if !final_mse.is_finite() {
        return Err(Error::Training { step: steps });
    }
    Ok(FitResult {
        params,
        losses,
        final_mse,
    })
}
