//! Deterministic weight generation and the named-tensor view used by
//! serialization.

use super::ModelConfig;
use crate::error::Result;
use crate::math::Matrix;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

/// Query/key/value projection trio, each `d x d`.
#[derive(Debug, Clone, PartialEq)]
pub struct AttnWeights {
    pub w_q: Matrix,
    pub w_k: Matrix,
    pub w_v: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EncoderLayerWeights {
    pub attn: AttnWeights,
    /// Feed-forward weight, `d x d`.
    pub ff_w: Matrix,
    /// Feed-forward bias, `1 x d`.
    pub ff_b: Matrix,
}

#[derive(Debug, Clone, PartialEq)]
pub struct DecoderLayerWeights {
    pub self_attn: AttnWeights,
    pub cross_attn: AttnWeights,
    pub ff_w: Matrix,
    pub ff_b: Matrix,
}

/// Full parameter set of the toy model.
#[derive(Debug, Clone, PartialEq)]
pub struct ModelWeights {
    pub config: ModelConfig,
    pub encoder: Vec<EncoderLayerWeights>,
    pub decoder: Vec<DecoderLayerWeights>,
    /// `vocab x d` token embedding table.
    pub token_embedding: Matrix,
    /// `d x vocab` output projection.
    pub output_projection: Matrix,
}

/// Generate weights deterministically from `config.seed`.
///
/// Generator: ChaCha8 keyed by the seed; every weight entry is drawn
/// uniformly from `[-1/sqrt(d), 1/sqrt(d)]` in a fixed tensor order
/// (encoder layers, decoder layers, embedding, output projection);
/// feed-forward biases start at zero.
pub fn init_weights(config: &ModelConfig) -> Result<ModelWeights> {
    config.validate()?;
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed);
    let d = config.d;
    let scale = 1.0 / (d as f32).sqrt();
    let mut gen = |rows: usize, cols: usize| -> Matrix {
        let data = (0..rows * cols)
            .map(|_| rng.gen_range(-scale..=scale))
            .collect();
        Matrix::from_vec(rows, cols, data).expect("generated weights are finite")
    };
    let attn = |gen: &mut dyn FnMut(usize, usize) -> Matrix| AttnWeights {
        w_q: gen(d, d),
        w_k: gen(d, d),
        w_v: gen(d, d),
    };

    let encoder = (0..config.layers_enc)
        .map(|_| EncoderLayerWeights {
            attn: attn(&mut gen),
            ff_w: gen(d, d),
            ff_b: Matrix::zeros(1, d),
        })
        .collect();
    let decoder = (0..config.layers_dec)
        .map(|_| DecoderLayerWeights {
            self_attn: attn(&mut gen),
            cross_attn: attn(&mut gen),
            ff_w: gen(d, d),
            ff_b: Matrix::zeros(1, d),
        })
        .collect();
    let token_embedding = gen(config.vocab, d);
    let output_projection = gen(d, config.vocab);
    Ok(ModelWeights {
        config: *config,
        encoder,
        decoder,
        token_embedding,
        output_projection,
    })
}

impl ModelWeights {
    /// Stable name -> tensor listing, the serialization order of the
    /// weight manifest.
    pub fn named_tensors(&self) -> Vec<(String, &Matrix)> {
        let mut out = Vec::new();
        for (l, layer) in self.encoder.iter().enumerate() {
            out.push((format!("enc.{l}.attn.w_q"), &layer.attn.w_q));
            out.push((format!("enc.{l}.attn.w_k"), &layer.attn.w_k));
            out.push((format!("enc.{l}.attn.w_v"), &layer.attn.w_v));
            out.push((format!("enc.{l}.ff.w"), &layer.ff_w));
            out.push((format!("enc.{l}.ff.b"), &layer.ff_b));
        }
        for (l, layer) in self.decoder.iter().enumerate() {
            out.push((format!("dec.{l}.self_attn.w_q"), &layer.self_attn.w_q));
            out.push((format!("dec.{l}.self_attn.w_k"), &layer.self_attn.w_k));
            out.push((format!("dec.{l}.self_attn.w_v"), &layer.self_attn.w_v));
            out.push((format!("dec.{l}.cross_attn.w_q"), &layer.cross_attn.w_q));
            out.push((format!("dec.{l}.cross_attn.w_k"), &layer.cross_attn.w_k));
            out.push((format!("dec.{l}.cross_attn.w_v"), &layer.cross_attn.w_v));
            out.push((format!("dec.{l}.ff.w"), &layer.ff_w));
            out.push((format!("dec.{l}.ff.b"), &layer.ff_b));
        }
        out.push(("token_embedding".into(), &self.token_embedding));
        out.push(("output_projection".into(), &self.output_projection));
        out
    }

    /// Mutable tensor lookup by manifest name.
    pub fn tensor_mut(&mut self, name: &str) -> Option<&mut Matrix> {
        let parts: Vec<&str> = name.split('.').collect();
        match parts.as_slice() {
            ["token_embedding"] => Some(&mut self.token_embedding),
            ["output_projection"] => Some(&mut self.output_projection),
            ["enc", l, rest @ ..] => {
                let layer = self.encoder.get_mut(l.parse::<usize>().ok()?)?;
                match rest {
                    ["attn", "w_q"] => Some(&mut layer.attn.w_q),
                    ["attn", "w_k"] => Some(&mut layer.attn.w_k),
                    ["attn", "w_v"] => Some(&mut layer.attn.w_v),
                    ["ff", "w"] => Some(&mut layer.ff_w),
                    ["ff", "b"] => Some(&mut layer.ff_b),
                    _ => None,
                }
            }
            ["dec", l, rest @ ..] => {
                let layer = self.decoder.get_mut(l.parse::<usize>().ok()?)?;
                match rest {
                    ["self_attn", "w_q"] => Some(&mut layer.self_attn.w_q),
                    ["self_attn", "w_k"] => Some(&mut layer.self_attn.w_k),
                    ["self_attn", "w_v"] => Some(&mut layer.self_attn.w_v),
                    ["cross_attn", "w_q"] => Some(&mut layer.cross_attn.w_q),
                    ["cross_attn", "w_k"] => Some(&mut layer.cross_attn.w_k),
                    ["cross_attn", "w_v"] => Some(&mut layer.cross_attn.w_v),
                    ["ff", "w"] => Some(&mut layer.ff_w),
                    ["ff", "b"] => Some(&mut layer.ff_b),
                    _ => None,
                }
            }
            _ => None,
        }
    }

    /// Concatenated little-endian bytes of every tensor, in manifest
    /// order. Used by tests to prove base weights stay frozen.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        for (_, tensor) in self.named_tensors() {
            for v in tensor.data() {
                out.extend_from_slice(&v.to_le_bytes());
            }
        }
        out
    }
}
