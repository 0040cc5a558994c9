//! Streaming decoder: cross-attention over cached encoder rows, strictly
//! causal self-attention over tokens, and an optional (approximate)
//! self-attention KV cache.
//!
//! The cross-attention cache is exact: encoder rows never change once
//! emitted, so appending projections of new rows reproduces a fresh
//! session bitwise. The self-attention cache is not: cached token rows
//! were computed under an older cross-attention state, so after new
//! acoustic frames arrive the cached path drifts from a full recompute.
//! It therefore defaults to off.

use super::encoder::CachedKv;
use super::weights::ModelWeights;
use super::{add_positions, gelu_rows, layer_norm_rows, BOT_TOKEN};
use crate::error::{EngineError, Result};
use crate::mask::MaskSpec;
use crate::math::{axpy, dot, log_softmax, matmul, softmax_in_place, Matrix};

#[derive(Debug, Clone, PartialEq)]
struct SelfCacheState {
    tokens: Vec<u32>,
    layers: Vec<CachedKv>,
}

impl SelfCacheState {
    fn new(layers: usize, d: usize) -> Self {
        Self {
            tokens: Vec::new(),
            layers: (0..layers).map(|_| CachedKv::empty(d)).collect(),
        }
    }

    fn truncate(&mut self, len: usize) {
        self.tokens.truncate(len);
        for layer in &mut self.layers {
            layer.k.truncate_rows(len);
            layer.v.truncate_rows(len);
        }
    }
}

/// Per-stream mutable decoder state: cross-attention K/V for every encoder
/// frame seen, plus the optional self-attention cache over emitted tokens.
#[derive(Debug, Clone, PartialEq)]
pub struct DecoderSession {
    spec: MaskSpec,
    encoder_frames_seen: usize,
    cross: Vec<CachedKv>,
    self_cache: Option<SelfCacheState>,
    d: usize,
}

impl DecoderSession {
    pub fn new(weights: &ModelWeights, spec: MaskSpec, use_self_cache: bool) -> Self {
        let d = weights.config.d;
        let layers = weights.config.layers_dec;
        Self {
            spec,
            encoder_frames_seen: 0,
            cross: (0..layers).map(|_| CachedKv::empty(d)).collect(),
            self_cache: use_self_cache.then(|| SelfCacheState::new(layers, d)),
            d,
        }
    }

    pub fn encoder_frames_seen(&self) -> usize {
        self.encoder_frames_seen
    }

    pub fn cross_rows(&self, layer: usize) -> usize {
        self.cross[layer].k.rows()
    }

    pub fn self_cache_enabled(&self) -> bool {
        self.self_cache.is_some()
    }

    /// Cached token positions in the self-attention cache (0 when the
    /// cache is disabled).
    pub fn cached_token_rows(&self) -> usize {
        self.self_cache.as_ref().map_or(0, |c| c.tokens.len())
    }
}

/// Append cross-attention K/V projections for freshly encoded rows.
/// Extending by zero rows is a no-op.
pub fn extend_cross_cache(
    session: &mut DecoderSession,
    weights: &ModelWeights,
    new_rows: &Matrix,
) -> Result<()> {
    if new_rows.rows() == 0 {
        return Ok(());
    }
    if new_rows.cols() != session.d {
        return Err(EngineError::Shape(format!(
            "encoder rows dim {} != model d {}",
            new_rows.cols(),
            session.d
        )));
    }
    for (layer, cached) in weights.decoder.iter().zip(&mut session.cross) {
        let k = matmul(new_rows, &layer.cross_attn.w_k)?;
        let v = matmul(new_rows, &layer.cross_attn.w_v)?;
        cached.k.append_rows(&k)?;
        cached.v.append_rows(&v)?;
    }
    session.encoder_frames_seen += new_rows.rows();
    Ok(())
}

fn check_tokens(weights: &ModelWeights, session: &DecoderSession, tokens: &[u32]) -> Result<()> {
    if tokens.is_empty() {
        return Err(EngineError::Domain(
            "decoder needs at least the begin-of-transcript token".into(),
        ));
    }
    if let Some(&bad) = tokens.iter().find(|&&t| t as usize >= weights.config.vocab) {
        return Err(EngineError::Domain(format!(
            "token id {bad} outside vocab {}",
            weights.config.vocab
        )));
    }
    if session.encoder_frames_seen < session.spec.tau0() {
        return Err(EngineError::State(format!(
            "decoder needs the initial chunk: {} of {} frames cached",
            session.encoder_frames_seen,
            session.spec.tau0()
        )));
    }
    Ok(())
}

fn embed_tokens(weights: &ModelWeights, tokens: &[u32]) -> Matrix {
    let d = weights.config.d;
    let mut out = Matrix::zeros(tokens.len(), d);
    for (r, &t) in tokens.iter().enumerate() {
        out.row_mut(r).copy_from_slice(weights.token_embedding.row(t as usize));
    }
    add_positions(&out, 0, weights.config.positional)
}

/// Causal self-attention: row `i` attends to rows `0..=i` of k/v.
fn causal_self_attention(q: &Matrix, k: &Matrix, v: &Matrix) -> Matrix {
    let d = q.cols();
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = Matrix::zeros(q.rows(), d);
    let mut scores = Vec::with_capacity(q.rows());
    for i in 0..q.rows() {
        scores.clear();
        let q_row = q.row(i);
        for j in 0..=i {
            scores.push(dot(q_row, k.row(j)) * scale);
        }
        softmax_in_place(&mut scores);
        let out_row = out.row_mut(i);
        for (j, &w) in scores.iter().enumerate() {
            axpy(w, v.row(j), out_row);
        }
    }
    out
}

/// Attention of each query row over the first `limit` cached rows.
fn cached_attention_limited(q: &Matrix, cache: &CachedKv, limit: usize) -> Matrix {
    let d = q.cols();
    let scale = 1.0 / (d as f32).sqrt();
    let mut out = Matrix::zeros(q.rows(), d);
    let mut scores = vec![0.0f32; limit];
    for i in 0..q.rows() {
        let q_row = q.row(i);
        for (j, s) in scores.iter_mut().enumerate() {
            *s = dot(q_row, cache.k.row(j)) * scale;
        }
        softmax_in_place(&mut scores);
        let out_row = out.row_mut(i);
        for (j, &w) in scores.iter().enumerate() {
            axpy(w, cache.v.row(j), out_row);
        }
    }
    out
}

/// Attention of each query row over the whole cached prefix.
fn cached_attention(q: &Matrix, cache: &CachedKv) -> Matrix {
    cached_attention_limited(q, cache, cache.k.rows())
}

fn residual_add(base: &Matrix, add: &Matrix) -> Matrix {
    let mut out = base.clone();
    for r in 0..out.rows() {
        axpy(1.0, add.row(r), out.row_mut(r));
    }
    out
}

/// Full (uncached) decoder stack over a token prefix; returns the final
/// hidden rows, one per token position.
fn decoder_hidden_full(
    weights: &ModelWeights,
    cross: &[CachedKv],
    tokens: &[u32],
) -> Result<Matrix> {
    let mut t = embed_tokens(weights, tokens);
    for (layer, cross_kv) in weights.decoder.iter().zip(cross) {
        let normed = layer_norm_rows(&t);
        let q = matmul(&normed, &layer.self_attn.w_q)?;
        let k = matmul(&normed, &layer.self_attn.w_k)?;
        let v = matmul(&normed, &layer.self_attn.w_v)?;
        let s = residual_add(&t, &causal_self_attention(&q, &k, &v));

        let qc = matmul(&layer_norm_rows(&s), &layer.cross_attn.w_q)?;
        let c = residual_add(&s, &cached_attention(&qc, cross_kv));

        let mut ff = matmul(&layer_norm_rows(&c), &layer.ff_w)?;
        let bias = layer.ff_b.row(0).to_vec();
        for r in 0..ff.rows() {
            for (vv, b) in ff.row_mut(r).iter_mut().zip(&bias) {
                *vv += b;
            }
        }
        t = residual_add(&c, &gelu_rows(&ff));
    }
    Ok(t)
}

/// Raw logit rows for every position of a teacher-forced prefix.
pub(crate) fn decoder_logit_rows(
    weights: &ModelWeights,
    session: &DecoderSession,
    tokens: &[u32],
) -> Result<Matrix> {
    check_tokens(weights, session, tokens)?;
    let hidden = decoder_hidden_full(weights, &session.cross, tokens)?;
    matmul(&hidden, &weights.output_projection)
}

/// Log-probability rows for every position of a teacher-forced prefix:
/// row `i` is `log P(next | tokens[..=i], cached encoder frames)`.
pub(crate) fn decoder_log_prob_rows(
    weights: &ModelWeights,
    session: &DecoderSession,
    tokens: &[u32],
) -> Result<Matrix> {
    let logits = decoder_logit_rows(weights, session, tokens)?;
    let mut out = Matrix::zeros(logits.rows(), logits.cols());
    for r in 0..logits.rows() {
        out.row_mut(r).copy_from_slice(&log_softmax(logits.row(r)));
    }
    Ok(out)
}

/// One token's hidden row through the decoder stack. When `append` is
/// set the position's per-layer K/V rows are pushed onto the cache
/// (decoding a new position); otherwise the row is recomputed against the
/// existing cached rows without touching them (re-scoring an already
/// cached position, e.g. a stability check).
fn self_cached_position(
    weights: &ModelWeights,
    cross: &[CachedKv],
    cache: &mut SelfCacheState,
    token: u32,
    position: usize,
    append: bool,
) -> Result<Matrix> {
    let row = Matrix::from_vec(
        1,
        weights.config.d,
        weights.token_embedding.row(token as usize).to_vec(),
    )?;
    let mut t = add_positions(&row, position, weights.config.positional);
    for (l, (layer, cross_kv)) in weights.decoder.iter().zip(cross).enumerate() {
        let normed = layer_norm_rows(&t);
        let q = matmul(&normed, &layer.self_attn.w_q)?;
        let cached = &mut cache.layers[l];
        if append {
            let k = matmul(&normed, &layer.self_attn.w_k)?;
            let v = matmul(&normed, &layer.self_attn.w_v)?;
            cached.k.append_rows(&k)?;
            cached.v.append_rows(&v)?;
        }
        // Causal: the position sees cached rows 0..=position (its own row
        // is in the cache either way).
        let s = residual_add(&t, &cached_attention_limited(&q, cached, position + 1));

        let qc = matmul(&layer_norm_rows(&s), &layer.cross_attn.w_q)?;
        let c = residual_add(&s, &cached_attention(&qc, cross_kv));

        let mut ff = matmul(&layer_norm_rows(&c), &layer.ff_w)?;
        for (vv, b) in ff.row_mut(0).iter_mut().zip(layer.ff_b.row(0)) {
            *vv += b;
        }
        t = residual_add(&c, &gelu_rows(&ff));
    }
    Ok(t)
}

/// Next-token log-probabilities after a token prefix (begin-of-transcript
/// first). With the self-attention cache disabled the whole prefix is
/// recomputed; with it enabled, only positions beyond the cached prefix
/// are processed and stale cached rows are reused.
pub fn decoder_step(
    session: &mut DecoderSession,
    weights: &ModelWeights,
    tokens: &[u32],
) -> Result<Vec<f32>> {
    check_tokens(weights, session, tokens)?;
    let last_hidden = if session.self_cache.is_some() {
        let mut cache = session.self_cache.take().expect("checked");
        // Longest cached prefix matching these tokens; anything cached
        // beyond a mismatch belongs to a retracted branch and is dropped.
        let mut common = 0;
        while common < cache.tokens.len()
            && common < tokens.len()
            && cache.tokens[common] == tokens[common]
        {
            common += 1;
        }
        if common < cache.tokens.len() && common < tokens.len() {
            cache.truncate(common);
        }
        let hidden = if common == tokens.len() {
            // Fully cached prefix (a re-score of an old position): reuse
            // the cached rows, including the position's own stale row.
            let p = tokens.len() - 1;
            self_cached_position(weights, &session.cross, &mut cache, tokens[p], p, false)?
        } else {
            let mut hidden = None;
            for (p, &tok) in tokens.iter().enumerate().skip(common) {
                hidden = Some(self_cached_position(
                    weights,
                    &session.cross,
                    &mut cache,
                    tok,
                    p,
                    true,
                )?);
                cache.tokens.push(tok);
            }
            hidden.expect("at least one new position")
        };
        session.self_cache = Some(cache);
        hidden
    } else {
        let hidden = decoder_hidden_full(weights, &session.cross, tokens)?;
        let last = hidden.rows() - 1;
        Matrix::from_vec(1, hidden.cols(), hidden.row(last).to_vec())?
    };
    let logits = matmul(&last_hidden, &weights.output_projection)?;
    Ok(log_softmax(logits.row(0)))
}

/// A decoder session bound to shared weights: the acoustic-conditioned
/// next-token distribution provider used by the streaming decoders.
#[derive(Debug, Clone)]
pub struct ModelScorer<'w> {
    weights: &'w ModelWeights,
    session: DecoderSession,
}

impl<'w> ModelScorer<'w> {
    pub fn new(weights: &'w ModelWeights, spec: MaskSpec, use_self_cache: bool) -> Self {
        Self {
            weights,
            session: DecoderSession::new(weights, spec, use_self_cache),
        }
    }

    pub fn session(&self) -> &DecoderSession {
        &self.session
    }

    /// Fold newly encoded rows into the cross-attention cache.
    pub fn advance(&mut self, new_rows: &Matrix) -> Result<()> {
        extend_cross_cache(&mut self.session, self.weights, new_rows)
    }

    /// log P(next | emitted prefix): prepends the begin-of-transcript
    /// token before the given emitted tokens.
    pub fn next_log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f32>> {
        let mut toks = Vec::with_capacity(prefix.len() + 1);
        toks.push(BOT_TOKEN);
        toks.extend_from_slice(prefix);
        decoder_step(&mut self.session, self.weights, &toks)
    }

    pub fn vocab_size(&self) -> usize {
        self.weights.config.vocab
    }
}
