//! Encoder passes: non-causal, blocked-causal one-shot, and streaming
//! with a per-layer key/value cache.
//!
//! The streaming pass and the one-shot masked pass execute the same
//! floating-point operations row for row, so shared rows agree bitwise;
//! the chunked-prefix consistency checks lean on that.

use super::weights::{EncoderLayerWeights, ModelWeights};
use super::{add_positions, gelu_rows, layer_norm_rows};
use crate::count::OpCounter;
use crate::error::{EngineError, Result};
use crate::mask::{attendable_limit, build_mask_for_frames, MaskSpec};
use crate::math::{
    axpy, dot, masked_attention_counted, matmul_counted, softmax_in_place, AttentionMask, Matrix,
};

fn check_input(weights: &ModelWeights, x: &Matrix) -> Result<()> {
    if x.cols() != weights.config.d {
        return Err(EngineError::Shape(format!(
            "feature dim {} != model d {}",
            x.cols(),
            weights.config.d
        )));
    }
    if x.rows() == 0 {
        return Err(EngineError::Shape("empty feature matrix".into()));
    }
    if x.rows() > weights.config.t_max {
        return Err(EngineError::Capacity(format!(
            "{} frames exceed t_max {}",
            x.rows(),
            weights.config.t_max
        )));
    }
    Ok(())
}

fn encoder_layer(
    layer: &EncoderLayerWeights,
    u: &Matrix,
    mask: &AttentionMask,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    let normed = layer_norm_rows(u);
    let q = matmul_counted(&normed, &layer.attn.w_q, counter)?;
    let k = matmul_counted(&normed, &layer.attn.w_k, counter)?;
    let v = matmul_counted(&normed, &layer.attn.w_v, counter)?;
    let attn = masked_attention_counted(&q, &k, &v, mask, counter)?;
    finish_layer(layer, u, &attn, counter)
}

/// Attention residual followed by the feed-forward residual:
/// `h = u + attn; h + gelu(LN(h) . W + b)`.
fn finish_layer(
    layer: &EncoderLayerWeights,
    u: &Matrix,
    attn: &Matrix,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    let mut h = u.clone();
    for r in 0..h.rows() {
        axpy(1.0, attn.row(r), h.row_mut(r));
    }
    let ff_in = layer_norm_rows(&h);
    let mut ff = matmul_counted(&ff_in, &layer.ff_w, counter)?;
    let bias = layer.ff_b.row(0).to_vec();
    for r in 0..ff.rows() {
        for (v, b) in ff.row_mut(r).iter_mut().zip(&bias) {
            *v += b;
        }
    }
    let ff = gelu_rows(&ff);
    for r in 0..h.rows() {
        axpy(1.0, ff.row(r), h.row_mut(r));
    }
    Ok(h)
}

/// Full bidirectional encoding (every frame attends to every frame).
pub fn encode_noncausal(weights: &ModelWeights, x: &Matrix) -> Result<Matrix> {
    encode_noncausal_counted(weights, x, &mut OpCounter::new())
}

pub fn encode_noncausal_counted(
    weights: &ModelWeights,
    x: &Matrix,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    check_input(weights, x)?;
    let mask = AttentionMask::all(x.rows(), x.rows());
    let mut u = add_positions(x, 0, weights.config.positional);
    for layer in &weights.encoder {
        u = encoder_layer(layer, &u, &mask, counter)?;
    }
    Ok(u)
}

/// One-shot blocked-causal encoding of a boundary-aligned input.
pub fn encode_full_masked(weights: &ModelWeights, x: &Matrix, spec: &MaskSpec) -> Result<Matrix> {
    encode_full_masked_counted(weights, x, spec, &mut OpCounter::new())
}

pub fn encode_full_masked_counted(
    weights: &ModelWeights,
    x: &Matrix,
    spec: &MaskSpec,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    check_input(weights, x)?;
    if !spec.is_boundary(x.rows()) {
        return Err(EngineError::Chunking(format!(
            "{} frames is not a chunk boundary for tau={} tau0={}",
            x.rows(),
            spec.tau(),
            spec.tau0()
        )));
    }
    let mask = build_mask_for_frames(x.rows(), spec)?;
    let mut u = add_positions(x, 0, weights.config.positional);
    for layer in &weights.encoder {
        u = encoder_layer(layer, &u, &mask, counter)?;
    }
    Ok(u)
}

/// Per-layer cached keys and values for every frame seen so far.
#[derive(Debug, Clone, PartialEq)]
pub(crate) struct CachedKv {
    pub k: Matrix,
    pub v: Matrix,
}

impl CachedKv {
    pub(crate) fn empty(d: usize) -> Self {
        Self {
            k: Matrix::zeros(0, d),
            v: Matrix::zeros(0, d),
        }
    }
}

/// Mutable state of a streaming encoder: append-only K/V per layer plus
/// the stream position.
#[derive(Debug, Clone, PartialEq)]
pub struct EncoderCache {
    spec: MaskSpec,
    frames_seen: usize,
    layers: Vec<CachedKv>,
    d: usize,
    t_max: usize,
}

impl EncoderCache {
    pub fn new(weights: &ModelWeights, spec: MaskSpec) -> Result<Self> {
        if spec.tau0() > weights.config.t_max {
            return Err(EngineError::Capacity(format!(
                "tau0 {} exceeds t_max {}",
                spec.tau0(),
                weights.config.t_max
            )));
        }
        Ok(Self {
            spec,
            frames_seen: 0,
            layers: (0..weights.config.layers_enc)
                .map(|_| CachedKv::empty(weights.config.d))
                .collect(),
            d: weights.config.d,
            t_max: weights.config.t_max,
        })
    }

    pub fn frames_seen(&self) -> usize {
        self.frames_seen
    }

    pub fn spec(&self) -> &MaskSpec {
        &self.spec
    }

    /// Cached key rows at one layer (key and value counts always match).
    pub fn layer_rows(&self, layer: usize) -> usize {
        self.layers[layer].k.rows()
    }

    /// Total cached floats across layers, keys plus values.
    pub fn cached_floats(&self) -> usize {
        self.layers
            .iter()
            .map(|l| l.k.data().len() + l.v.data().len())
            .sum()
    }
}

/// Push one chunk through the streaming encoder, returning the
/// representation rows for the new chunk only. The first call must carry
/// `tau0` frames, later calls exactly `tau`.
pub fn encode_stream(
    cache: &mut EncoderCache,
    weights: &ModelWeights,
    chunk: &Matrix,
) -> Result<Matrix> {
    encode_stream_counted(cache, weights, chunk, &mut OpCounter::new())
}

pub fn encode_stream_counted(
    cache: &mut EncoderCache,
    weights: &ModelWeights,
    chunk: &Matrix,
    counter: &mut OpCounter,
) -> Result<Matrix> {
    if chunk.cols() != cache.d {
        return Err(EngineError::Shape(format!(
            "chunk dim {} != model d {}",
            chunk.cols(),
            cache.d
        )));
    }
    if weights.encoder.len() != cache.layers.len() {
        return Err(EngineError::Shape("cache layer count != weights".into()));
    }
    let expected = if cache.frames_seen == 0 {
        cache.spec.tau0()
    } else {
        cache.spec.tau()
    };
    if chunk.rows() != expected {
        return Err(EngineError::Chunking(format!(
            "chunk of {} rows, expected {expected}",
            chunk.rows()
        )));
    }
    if cache.frames_seen + chunk.rows() > cache.t_max {
        return Err(EngineError::Capacity(format!(
            "stream would reach {} frames, t_max is {}",
            cache.frames_seen + chunk.rows(),
            cache.t_max
        )));
    }

    let limit = cache.frames_seen + chunk.rows();
    let d = cache.d;
    let scale = 1.0 / (d as f32).sqrt();
    let mut u = add_positions(chunk, cache.frames_seen, weights.config.positional);
    for (layer, cached) in weights.encoder.iter().zip(&mut cache.layers) {
        let normed = layer_norm_rows(&u);
        let q = matmul_counted(&normed, &layer.attn.w_q, counter)?;
        let k_new = matmul_counted(&normed, &layer.attn.w_k, counter)?;
        let v_new = matmul_counted(&normed, &layer.attn.w_v, counter)?;
        counter.add_cache_bytes(((k_new.data().len() + v_new.data().len()) * 4) as u64);
        cached.k.append_rows(&k_new)?;
        cached.v.append_rows(&v_new)?;

        // Every row of this chunk attends to the full prefix 0..limit
        // (blocked mask: a chunk sees itself and everything before it).
        let mut attn = Matrix::zeros(u.rows(), d);
        let mut scores = vec![0.0f32; limit];
        for r in 0..u.rows() {
            let q_row = q.row(r);
            for (j, s) in scores.iter_mut().enumerate() {
                *s = dot(q_row, cached.k.row(j)) * scale;
            }
            softmax_in_place(&mut scores);
            let out_row = attn.row_mut(r);
            for (j, &w) in scores.iter().enumerate() {
                axpy(w, cached.v.row(j), out_row);
            }
        }
        counter.add_dot_product((u.rows() * limit * d) as u64);
        counter.add_value_weighting((u.rows() * limit * d) as u64);

        u = finish_layer(layer, &u, &attn, counter)?;
    }
    cache.frames_seen = limit;
    Ok(u)
}

fn unmasked_sa_row(
    weights: &ModelWeights,
    u: &Matrix,
    frames: usize,
    row: usize,
    limit: usize,
) -> Result<Vec<f32>> {
    let prefix = u.top_rows(frames);
    let layer = &weights.encoder[0];
    let q = crate::math::matmul(&prefix, &layer.attn.w_q)?;
    let k = crate::math::matmul(&prefix, &layer.attn.w_k)?;
    let v = crate::math::matmul(&prefix, &layer.attn.w_v)?;
    let d = q.cols();
    let scale = 1.0 / (d as f32).sqrt();
    let mut scores: Vec<f32> = (0..limit).map(|j| dot(q.row(row), k.row(j)) * scale).collect();
    softmax_in_place(&mut scores);
    let mut out = vec![0.0f32; d];
    for (j, &w) in scores.iter().enumerate() {
        axpy(w, v.row(j), &mut out);
    }
    Ok(out)
}

/// How much row `i` (1-based) of a plain, unmasked self-attention output
/// moves when one more chunk of input arrives:
/// `|| SA(U_{k*tau})_i - SA(U_{(k+1)*tau})_i ||_2`, computed with the
/// first encoder layer's projections. Bounded by `2 * max_j ||V_j||_2`.
pub fn sa_output_delta(
    weights: &ModelWeights,
    u: &Matrix,
    k: usize,
    spec: &MaskSpec,
    i: usize,
) -> Result<f32> {
    let tau = spec.tau();
    let short = k * tau;
    let long = (k + 1) * tau;
    if k == 0 || i == 0 || i > short || long > u.rows() {
        return Err(EngineError::Domain(format!(
            "delta row {i} with k={k} needs 1 <= i <= {short} and {long} <= {} rows",
            u.rows()
        )));
    }
    let a = unmasked_sa_row(weights, u, short, i - 1, short)?;
    let b = unmasked_sa_row(weights, u, long, i - 1, long)?;
    Ok(l2_diff(&a, &b))
}

/// Same comparison under the blocked causal mask: the attendable set of
/// row `i` is identical for both prefix lengths, so the delta is exactly
/// zero.
pub fn sa_output_delta_masked(
    weights: &ModelWeights,
    u: &Matrix,
    k: usize,
    spec: &MaskSpec,
    i: usize,
) -> Result<f32> {
    let tau = spec.tau();
    let short = k * tau;
    let long = (k + 1) * tau;
    if k == 0 || i == 0 || i > short || long > u.rows() || short < spec.tau0() {
        return Err(EngineError::Domain(format!(
            "masked delta row {i} with k={k} out of range for {} rows",
            u.rows()
        )));
    }
    let limit = attendable_limit(i, spec)?;
    let a = unmasked_sa_row(weights, u, short, i - 1, limit)?;
    let b = unmasked_sa_row(weights, u, long, i - 1, limit)?;
    Ok(l2_diff(&a, &b))
}

/// `max_j ||V_j||_2` over the first `frames` rows, with the first encoder
/// layer's value projection: the epsilon of the delta bound.
pub fn sa_value_max_norm(weights: &ModelWeights, u: &Matrix, frames: usize) -> Result<f32> {
    if frames == 0 || frames > u.rows() {
        return Err(EngineError::Domain("frame count out of range".into()));
    }
    let v = crate::math::matmul(&u.top_rows(frames), &weights.encoder[0].attn.w_v)?;
    let mut best = 0.0f64;
    for r in 0..v.rows() {
        let norm: f64 = v.row(r).iter().map(|&x| f64::from(x) * f64::from(x)).sum();
        best = best.max(norm);
    }
    Ok(best.sqrt() as f32)
}

fn l2_diff(a: &[f32], b: &[f32]) -> f32 {
    let sum: f64 = a
        .iter()
        .zip(b)
        .map(|(&x, &y)| {
            let d = f64::from(x) - f64::from(y);
            d * d
        })
        .sum();
    sum.sqrt() as f32
}
