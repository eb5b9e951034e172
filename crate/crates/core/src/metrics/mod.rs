//! Evaluation metrics: layout feature embedding, Fréchet distance, ROUGE-L
//! and identical rate.

mod embed;
mod fid;
mod text;

pub use embed::{embed, embed_all, EmbedConfig, FeatureVector};
pub use fid::{fid, fid_layouts, sqrtm_psd, FidConfig, FidResult};
pub use text::{identical_rate, lcs_len, rouge_l, text_metrics, TextMetrics};

use thiserror::Error;

#[derive(Debug, Clone, PartialEq, Eq, Error)]
pub enum MetricError {
    #[error("population is empty")]
    EmptyPopulation,
    #[error("feature dimensions differ: {0} vs {1}")]
    DimensionMismatch(usize, usize),
    #[error("population contains non-finite values")]
    NonFinite,
    #[error("need at least {need} samples, got {got}")]
    TooFewSamples { need: usize, got: usize },
    #[error("no pairs to compare")]
    NoPairs,
}
