//! Toy encoder-decoder transformer: deterministic weight generation,
//! low-rank adapters, non-causal and blocked-causal encoder passes with a
//! streaming KV cache, and cached decoder steps.
//!
//! Single-head attention throughout, pre-norm residual blocks: each
//! sublayer reads a layer-normalized view of the residual stream and adds
//! its output back, `h = u + SA(LN(u)); u' = h + gelu(LN(h) . W + b)`.
//! The decoder inserts a cross-attention sublayer between self-attention
//! and the feed-forward map.

mod decoder;
mod encoder;
mod lora;
mod weights;

pub use decoder::{decoder_step, extend_cross_cache, DecoderSession, ModelScorer};
pub(crate) use decoder::{decoder_log_prob_rows, decoder_logit_rows};
pub use encoder::{
    encode_full_masked, encode_full_masked_counted, encode_noncausal, encode_noncausal_counted,
    encode_stream, encode_stream_counted, sa_output_delta, sa_output_delta_masked,
    sa_value_max_norm, EncoderCache,
};
pub use lora::{apply_lora, AdapterSite, LoraAdapter, LoraStack, ProjKind};
pub use weights::{init_weights, AttnWeights, DecoderLayerWeights, EncoderLayerWeights, ModelWeights};

use crate::error::{EngineError, Result};
use crate::math::Matrix;

/// End-of-transcription token id.
pub const EOT_TOKEN: u32 = 0;
/// Begin-of-transcript token id, always the first decoder input.
pub const BOT_TOKEN: u32 = 1;

/// Model dimensions plus the weight seed.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ModelConfig {
    /// Embedding dimension.
    pub d: usize,
    pub layers_enc: usize,
    pub layers_dec: usize,
    /// Token count, including EOT and begin-of-transcript.
    pub vocab: usize,
    /// Maximum encoder frames.
    pub t_max: usize,
    pub seed: u64,
    /// Add sinusoidal position encodings to encoder frames and token
    /// embeddings. Disabled only by equivariance tests.
    pub positional: bool,
}

impl ModelConfig {
    pub fn validate(&self) -> Result<()> {
        if self.d < 2 {
            return Err(EngineError::Domain("d must be >= 2".into()));
        }
        if self.vocab < 3 {
            return Err(EngineError::Domain(
                "vocab must be >= 3 (EOT, BOT, and at least one token)".into(),
            ));
        }
        if self.layers_enc == 0 || self.layers_dec == 0 {
            return Err(EngineError::Domain("layer counts must be >= 1".into()));
        }
        if self.t_max == 0 {
            return Err(EngineError::Domain("t_max must be >= 1".into()));
        }
        Ok(())
    }

    /// Toy dimensions used across the test suite.
    pub fn toy(seed: u64) -> Self {
        Self {
            d: 16,
            layers_enc: 2,
            layers_dec: 2,
            vocab: 32,
            t_max: 1500,
            seed,
            positional: true,
        }
    }
}

impl Default for ModelConfig {
    fn default() -> Self {
        Self::toy(0)
    }
}

pub(crate) fn gelu(x: f32) -> f32 {
    // tanh approximation of the Gaussian error linear unit.
    const SQRT_2_OVER_PI: f32 = 0.797_884_56;
    0.5 * x * (1.0 + (SQRT_2_OVER_PI * (x + 0.044715 * x * x * x)).tanh())
}

pub(crate) fn gelu_rows(m: &Matrix) -> Matrix {
    let data = m.data().iter().map(|&v| gelu(v)).collect();
    Matrix::from_vec(m.rows(), m.cols(), data).expect("gelu preserves shape and finiteness")
}

/// Per-row layer normalization without affine parameters, f64 moments.
pub(crate) fn layer_norm_rows(m: &Matrix) -> Matrix {
    const EPS: f64 = 1e-5;
    let mut out = m.clone();
    for r in 0..out.rows() {
        let row = out.row_mut(r);
        let n = row.len() as f64;
        let mean = row.iter().map(|&v| f64::from(v)).sum::<f64>() / n;
        let var = row
            .iter()
            .map(|&v| {
                let c = f64::from(v) - mean;
                c * c
            })
            .sum::<f64>()
            / n;
        let inv = 1.0 / (var + EPS).sqrt();
        for v in row.iter_mut() {
            *v = ((f64::from(*v) - mean) * inv) as f32;
        }
    }
    out
}

/// Sinusoidal position encoding for one 0-based position.
pub(crate) fn position_encoding(pos: usize, d: usize) -> Vec<f32> {
    let mut enc = vec![0.0f32; d];
    for i in 0..d {
        let pair = (i / 2 * 2) as f64;
        let rate = (pos as f64) / 10_000f64.powf(pair / d as f64);
        enc[i] = if i % 2 == 0 { rate.sin() } else { rate.cos() } as f32;
    }
    enc
}

/// Add position encodings for global positions `start..start + rows`.
pub(crate) fn add_positions(m: &Matrix, start: usize, enabled: bool) -> Matrix {
    if !enabled {
        return m.clone();
    }
    let mut out = m.clone();
    for r in 0..out.rows() {
        let pe = position_encoding(start + r, out.cols());
        for (v, p) in out.row_mut(r).iter_mut().zip(&pe) {
            *v += p;
        }
    }
    out
}
