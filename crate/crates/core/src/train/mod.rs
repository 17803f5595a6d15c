//! Datasets, the Adam optimiser, and the two sine-fitting trainers.

pub mod adam;
pub mod data;
pub mod llm_fit;
pub mod mlp_fit;

pub use adam::{adam_step, AdamConfig, AdamState};
pub use data::{
    make_sine_dataset_llm, make_sine_dataset_mlp, pe_encode, SineDatasetLlm, SineDatasetMlp, LLM_TARGET_PERIODS,
    LLM_TIME_BINS,
};
pub use llm_fit::{
    count_regions_over_dataset, fit_llm_sine, last_token_loss, last_token_loss_and_grad, predict_last_tokens, train_llm,
    LlmFitConfig,
};
pub use mlp_fit::{fit_mlp_sine, train_mlp, FitResult, MlpFitConfig};
