//! Streaming greedy and beam-search decoding with token-stability
//! regression, EOT pause semantics, and online word-level timestamps.
//!
//! Both decoders run over a [`Scorer`], the next-token distribution
//! provider. The model-backed scorer wraps a decoder session; scripted
//! scorers drive the decoder-coherence and path-dominance suites from
//! hand-built probability tables.
//!
//! EOT is a pause, never a terminal commit: a trailing EOT keeps its
//! stability re-checked every chunk, and decoding ends only when the
//! input stream ends, at which point the trailing EOT is stripped from
//! the reported transcript.

use std::sync::Arc;
use std::time::Instant;

use crate::error::{EngineError, Result};
use crate::math::Matrix;
use crate::model::ModelScorer;

/// Next-token distribution provider for one stream.
pub trait Scorer {
    fn vocab(&self) -> usize;
    /// Fold newly encoded acoustic rows into the scorer's state.
    fn advance_chunk(&mut self, new_rows: &Matrix) -> Result<()>;
    /// Normalized log-probabilities of the next token given the emitted
    /// prefix, under all acoustic evidence seen so far.
    fn log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f32>>;
}

impl Scorer for ModelScorer<'_> {
    fn vocab(&self) -> usize {
        self.vocab_size()
    }

    fn advance_chunk(&mut self, new_rows: &Matrix) -> Result<()> {
        self.advance(new_rows)
    }

    fn log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f32>> {
        self.next_log_probs(prefix)
    }
}

/// Table-driven scorer: `score_fn(chunk_index, prefix)` returns raw scores
/// that are normalized into log-probabilities. Chunk indices are 1-based
/// after the first `advance_chunk`.
#[derive(Clone)]
pub struct ScriptedScorer {
    vocab: usize,
    chunk: usize,
    score_fn: Arc<dyn Fn(usize, &[u32]) -> Vec<f32> + Send + Sync>,
}

impl ScriptedScorer {
    pub fn new(
        vocab: usize,
        score_fn: Arc<dyn Fn(usize, &[u32]) -> Vec<f32> + Send + Sync>,
    ) -> Self {
        Self {
            vocab,
            chunk: 0,
            score_fn,
        }
    }

    pub fn chunk_index(&self) -> usize {
        self.chunk
    }

    /// Normalized log-probabilities without mutating decoding state; used
    /// by path-probability oracles.
    pub fn peek_log_probs(&self, chunk: usize, prefix: &[u32]) -> Vec<f32> {
        crate::math::log_softmax(&(self.score_fn)(chunk, prefix))
    }
}

impl Scorer for ScriptedScorer {
    fn vocab(&self) -> usize {
        self.vocab
    }

    fn advance_chunk(&mut self, _new_rows: &Matrix) -> Result<()> {
        self.chunk += 1;
        Ok(())
    }

    fn log_probs(&mut self, prefix: &[u32]) -> Result<Vec<f32>> {
        if self.chunk == 0 {
            return Err(EngineError::State("scripted scorer not advanced".into()));
        }
        Ok(self.peek_log_probs(self.chunk, prefix))
    }
}

/// Indices of the `k` largest scores, ranked descending, ties broken
/// toward the lower index.
pub fn topk(scores: &[f32], k: usize) -> Result<Vec<usize>> {
    if k == 0 || k > scores.len() {
        return Err(EngineError::Domain(format!(
            "top-k with k={k} over {} scores",
            scores.len()
        )));
    }
    let mut idx: Vec<usize> = (0..scores.len()).collect();
    idx.sort_by(|&a, &b| {
        scores[b]
            .partial_cmp(&scores[a])
            .unwrap_or(std::cmp::Ordering::Equal)
            .then(a.cmp(&b))
    });
    idx.truncate(k);
    Ok(idx)
}

fn argmax(scores: &[f32]) -> usize {
    let mut best = 0;
    for (i, &v) in scores.iter().enumerate().skip(1) {
        if v > scores[best] {
            best = i;
        }
    }
    best
}

/// Greedy stability: the token kept at least its previous probability, or
/// it is still the most probable token (lower-index tie-break).
pub fn is_stable_greedy(prev_prob: f32, cur_dist: &[f32], token: u32) -> bool {
    cur_dist[token as usize] >= prev_prob || token as usize == argmax(cur_dist)
}

/// Beam stability: the token remains within the top-`b` candidates.
pub fn is_stable_beam(cur_dist: &[f32], token: u32, b: usize) -> bool {
    topk(cur_dist, b.min(cur_dist.len()))
        .map(|ids| ids.contains(&(token as usize)))
        .unwrap_or(false)
}

/// Bookkeeping for one accepted token.
#[derive(Debug, Clone, PartialEq)]
pub struct TokenRecord {
    /// Chunk at which the token was (last) accepted.
    pub emit_chunk: usize,
    /// Log-probability at the most recent chunk where the token survived
    /// a stability check or was emitted; anchors the next Eq-style
    /// probability comparison.
    pub last_log_prob: f32,
    /// Stream time recorded by the timestamp rule, when the token was
    /// accepted at the hypothesis frontier.
    pub timestamp_ms: Option<u64>,
}

/// A (possibly paused) token sequence with per-token records.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Hypothesis {
    pub tokens: Vec<u32>,
    pub records: Vec<TokenRecord>,
}

impl Hypothesis {
    pub fn len(&self) -> usize {
        self.tokens.len()
    }

    pub fn is_empty(&self) -> bool {
        self.tokens.is_empty()
    }

    /// Cumulative log-probability over the stored per-token records.
    pub fn log_prob_path(&self) -> f64 {
        self.records.iter().map(|r| f64::from(r.last_log_prob)).sum()
    }

    /// Whether the hypothesis currently ends in `eot` (is paused).
    pub fn finished(&self, eot: u32) -> bool {
        self.tokens.last() == Some(&eot)
    }

    /// Token sequence with a trailing EOT stripped: the reportable
    /// transcript.
    pub fn transcript(&self, eot: u32) -> &[u32] {
        if self.finished(eot) {
            &self.tokens[..self.tokens.len() - 1]
        } else {
            &self.tokens
        }
    }

    fn truncate_to(&mut self, len: usize) {
        self.tokens.truncate(len);
        self.records.truncate(len);
    }

    fn push(&mut self, token: u32, record: TokenRecord) {
        self.tokens.push(token);
        self.records.push(record);
    }
}

/// Per-chunk record of the decoding state.
#[derive(Debug, Clone, PartialEq)]
pub struct TimelineEvent {
    /// 1-based chunk index.
    pub k: usize,
    /// Stream time at the end of the chunk.
    pub time_ms: u64,
    /// Full current transcript (trailing EOT stripped).
    pub tokens: Vec<u32>,
    /// Count of leading tokens older than the stability window; never
    /// modified by later chunks.
    pub committed: usize,
    /// Wall-clock time the decoder spent on this chunk.
    pub latency_ms: f64,
}

/// Chunk-indexed history of partial hypotheses.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct Timeline {
    pub events: Vec<TimelineEvent>,
}

/// A word's recognition span: from its acceptance time to the next
/// word's acceptance (or the stream end).
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct WordTimestamp {
    /// Index into the final transcript.
    pub token_index: usize,
    pub start_ms: u64,
    pub end_ms: u64,
}

/// Shared decoder settings.
#[derive(Debug, Clone, Copy)]
pub struct StreamConfig {
    /// Stability window: how many trailing tokens are re-checked per chunk.
    pub n: usize,
    /// End-of-transcription token id.
    pub eot: u32,
    /// Guard on tokens decoded within one chunk; hitting it pauses the
    /// chunk like an EOT would, keeping runaway loops bounded.
    pub max_tokens_per_chunk: usize,
}

impl Default for StreamConfig {
    fn default() -> Self {
        Self {
            n: 2,
            eot: crate::model::EOT_TOKEN,
            max_tokens_per_chunk: 64,
        }
    }
}

/// Streaming greedy decoder with stability regression and online word
/// timestamps.
pub struct GreedyDecoder<S: Scorer> {
    scorer: S,
    cfg: StreamConfig,
    hyp: Hypothesis,
    timeline: Timeline,
    chunk: usize,
    ended: bool,
}

impl<S: Scorer> GreedyDecoder<S> {
    pub fn new(scorer: S, cfg: StreamConfig) -> Self {
        Self {
            scorer,
            cfg,
            hyp: Hypothesis::default(),
            timeline: Timeline::default(),
            chunk: 0,
            ended: false,
        }
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.hyp
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    pub fn transcript(&self) -> &[u32] {
        self.hyp.transcript(self.cfg.eot)
    }

    /// Process one chunk: re-check the trailing window, truncate at the
    /// first unstable token, then decode greedily until EOT pauses the
    /// chunk. `chunk_end_ms` is the stream time covered so far.
    pub fn process_chunk(&mut self, new_rows: &Matrix, chunk_end_ms: u64) -> Result<&TimelineEvent> {
        if self.ended {
            return Err(EngineError::State("stream already ended".into()));
        }
        let started = Instant::now();
        self.chunk += 1;
        self.scorer.advance_chunk(new_rows)?;

        let start_len = self.hyp.len();
        // Transcript frontier before any regression: the trailing EOT is
        // a pause marker, not part of the frontier.
        let ts_frontier = self.hyp.transcript(self.cfg.eot).len();
        // Oldest-first re-check of the trailing window; stop at the first
        // unstable token.
        let window = self.cfg.n.min(start_len);
        let mut truncate_at = None;
        for idx in start_len - window..start_len {
            let dist = self.scorer.log_probs(&self.hyp.tokens[..idx])?;
            let token = self.hyp.tokens[idx];
            let prev_p = self.hyp.records[idx].last_log_prob.exp();
            let probs: Vec<f32> = dist.iter().map(|lp| lp.exp()).collect();
            if is_stable_greedy(prev_p, &probs, token) {
                self.hyp.records[idx].last_log_prob = dist[token as usize];
                self.hyp.records[idx].emit_chunk = self.chunk;
            } else {
                truncate_at = Some(idx);
                break;
            }
        }
        if let Some(idx) = truncate_at {
            self.hyp.truncate_to(idx);
        }

        // Greedy decode until an EOT pause (or the runaway guard). The
        // regression offset of an accepted token is its distance below
        // the pre-check transcript frontier; only offset-zero acceptances
        // carry a timestamp.
        let mut appended = 0;
        while !self.hyp.finished(self.cfg.eot) && appended < self.cfg.max_tokens_per_chunk {
            let dist = self.scorer.log_probs(&self.hyp.tokens)?;
            let token = argmax(&dist) as u32;
            let position = self.hyp.len();
            let offset = ts_frontier.saturating_sub(1).saturating_sub(position);
            let timestamp = (token != self.cfg.eot && offset == 0).then_some(chunk_end_ms);
            self.hyp.push(
                token,
                TokenRecord {
                    emit_chunk: self.chunk,
                    last_log_prob: dist[token as usize],
                    timestamp_ms: timestamp,
                },
            );
            appended += 1;
        }

        let transcript = self.hyp.transcript(self.cfg.eot).to_vec();
        let committed = self.hyp.len().saturating_sub(self.cfg.n).min(transcript.len());
        self.timeline.events.push(TimelineEvent {
            k: self.chunk,
            time_ms: chunk_end_ms,
            tokens: transcript,
            committed,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(self.timeline.events.last().expect("just pushed"))
    }

    /// Declare the end of the acoustic stream.
    pub fn end_stream(&mut self) {
        self.ended = true;
    }

    /// Word spans along the final transcript. Each token accepted at the
    /// frontier carries its acceptance time; a word ends where the next
    /// timestamped word starts, the last one at `stream_end_ms`. Tokens
    /// sharing one chunk's acceptance time collapse onto the first of
    /// them (no distinct boundary evidence inside a chunk), so starts
    /// strictly increase.
    pub fn word_timestamps(&self, stream_end_ms: u64) -> Vec<WordTimestamp> {
        word_timestamps_of(&self.hyp, self.cfg.eot, stream_end_ms)
    }

    pub fn into_parts(self) -> (Hypothesis, Timeline) {
        (self.hyp, self.timeline)
    }
}

pub(crate) fn word_timestamps_of(hyp: &Hypothesis, eot: u32, stream_end_ms: u64) -> Vec<WordTimestamp> {
    let transcript_len = hyp.transcript(eot).len();
    let mut stamped: Vec<(usize, u64)> = Vec::new();
    for (i, rec) in hyp.records.iter().take(transcript_len).enumerate() {
        if let Some(ts) = rec.timestamp_ms {
            if stamped.last().map_or(true, |&(_, last)| ts > last) {
                stamped.push((i, ts));
            }
        }
    }
    let mut out = Vec::with_capacity(stamped.len());
    for (n, &(token_index, start_ms)) in stamped.iter().enumerate() {
        let end_ms = stamped
            .get(n + 1)
            .map(|&(_, next)| next)
            .unwrap_or(stream_end_ms);
        if start_ms < end_ms {
            out.push(WordTimestamp {
                token_index,
                start_ms,
                end_ms,
            });
        }
    }
    out
}

/// Greedy decoding without stability checks: the no-regression baseline
/// the path-dominance suite compares against. A trailing EOT is dropped
/// when the next chunk arrives (it only pauses), but emitted tokens are
/// never re-examined.
pub struct NoRegressionGreedy<S: Scorer> {
    scorer: S,
    cfg: StreamConfig,
    hyp: Hypothesis,
    chunk: usize,
}

impl<S: Scorer> NoRegressionGreedy<S> {
    pub fn new(scorer: S, cfg: StreamConfig) -> Self {
        Self {
            scorer,
            cfg,
            hyp: Hypothesis::default(),
            chunk: 0,
        }
    }

    pub fn hypothesis(&self) -> &Hypothesis {
        &self.hyp
    }

    pub fn transcript(&self) -> &[u32] {
        self.hyp.transcript(self.cfg.eot)
    }

    pub fn process_chunk(&mut self, new_rows: &Matrix, _chunk_end_ms: u64) -> Result<()> {
        self.chunk += 1;
        self.scorer.advance_chunk(new_rows)?;
        if self.hyp.finished(self.cfg.eot) {
            let len = self.hyp.len();
            self.hyp.truncate_to(len - 1);
        }
        let mut appended = 0;
        while !self.hyp.finished(self.cfg.eot) && appended < self.cfg.max_tokens_per_chunk {
            let dist = self.scorer.log_probs(&self.hyp.tokens)?;
            let token = argmax(&dist) as u32;
            self.hyp.push(
                token,
                TokenRecord {
                    emit_chunk: self.chunk,
                    last_log_prob: dist[token as usize],
                    timestamp_ms: None,
                },
            );
            appended += 1;
        }
        Ok(())
    }
}

/// One beam slot: a hypothesis plus its own decoder state.
pub struct BeamEntry<S: Scorer> {
    pub scorer: S,
    pub hyp: Hypothesis,
}

/// Streaming beam-search decoder. Hypotheses regress independently (to
/// possibly different lengths), expand by top-`b` continuations, and the
/// beam pauses for the chunk as soon as any kept hypothesis ends in EOT.
/// Ranking uses cumulative log-probability without length normalization.
pub struct BeamDecoder<S: Scorer + Clone> {
    cfg: StreamConfig,
    b: usize,
    entries: Vec<BeamEntry<S>>,
    timeline: Timeline,
    chunk: usize,
    ended: bool,
}

impl<S: Scorer + Clone> BeamDecoder<S> {
    pub fn new(scorer: S, cfg: StreamConfig, b: usize) -> Result<Self> {
        if b == 0 {
            return Err(EngineError::Domain("beam size must be >= 1".into()));
        }
        Ok(Self {
            cfg,
            b,
            entries: vec![BeamEntry {
                scorer,
                hyp: Hypothesis::default(),
            }],
            timeline: Timeline::default(),
            chunk: 0,
            ended: false,
        })
    }

    pub fn timeline(&self) -> &Timeline {
        &self.timeline
    }

    /// Highest-ranked hypothesis.
    pub fn best(&self) -> &Hypothesis {
        &self.entries[0].hyp
    }

    pub fn best_transcript(&self) -> &[u32] {
        self.entries[0].hyp.transcript(self.cfg.eot)
    }

    pub fn process_chunk(&mut self, new_rows: &Matrix, chunk_end_ms: u64) -> Result<&TimelineEvent> {
        if self.ended {
            return Err(EngineError::State("stream already ended".into()));
        }
        let started = Instant::now();
        self.chunk += 1;

        for entry in &mut self.entries {
            entry.scorer.advance_chunk(new_rows)?;
            // Per-hypothesis stability pass: token must stay within the
            // top-b candidates at its position.
            let len = entry.hyp.len();
            let window = self.cfg.n.min(len);
            let mut truncate_at = None;
            for idx in len - window..len {
                let dist = entry.scorer.log_probs(&entry.hyp.tokens[..idx])?;
                let token = entry.hyp.tokens[idx];
                let probs: Vec<f32> = dist.iter().map(|lp| lp.exp()).collect();
                if is_stable_beam(&probs, token, self.b) {
                    entry.hyp.records[idx].last_log_prob = dist[token as usize];
                    entry.hyp.records[idx].emit_chunk = self.chunk;
                } else {
                    truncate_at = Some(idx);
                    break;
                }
            }
            if let Some(idx) = truncate_at {
                entry.hyp.truncate_to(idx);
            }
        }

        // Expansion rounds: every hypothesis grows by one token per round
        // until an EOT lands in the kept set (pause) or the guard trips.
        let mut rounds = 0;
        while !self.entries.iter().any(|e| e.hyp.finished(self.cfg.eot))
            && rounds < self.cfg.max_tokens_per_chunk
        {
            let mut candidates: Vec<(usize, u32, f32, f64)> = Vec::new();
            for (parent, entry) in self.entries.iter_mut().enumerate() {
                let dist = entry.scorer.log_probs(&entry.hyp.tokens)?;
                for &tok in &topk(&dist, self.b.min(dist.len()))? {
                    let lp = dist[tok];
                    candidates.push((
                        parent,
                        tok as u32,
                        lp,
                        entry.hyp.log_prob_path() + f64::from(lp),
                    ));
                }
            }
            // Rank by cumulative log-prob; ties resolve toward the lower
            // parent index, then the lower token id, keeping runs
            // deterministic.
            candidates.sort_by(|a, b| {
                b.3.partial_cmp(&a.3)
                    .unwrap_or(std::cmp::Ordering::Equal)
                    .then(a.0.cmp(&b.0))
                    .then(a.1.cmp(&b.1))
            });
            candidates.truncate(self.b);

            let mut next: Vec<BeamEntry<S>> = Vec::with_capacity(candidates.len());
            for &(parent, token, lp, _) in &candidates {
                let mut entry = BeamEntry {
                    scorer: self.entries[parent].scorer.clone(),
                    hyp: self.entries[parent].hyp.clone(),
                };
                entry.hyp.push(
                    token,
                    TokenRecord {
                        emit_chunk: self.chunk,
                        last_log_prob: lp,
                        timestamp_ms: None,
                    },
                );
                next.push(entry);
            }
            self.entries = next;
            rounds += 1;
        }

        self.entries.sort_by(|a, b| {
            b.hyp
                .log_prob_path()
                .partial_cmp(&a.hyp.log_prob_path())
                .unwrap_or(std::cmp::Ordering::Equal)
        });

        let best = &self.entries[0].hyp;
        let transcript = best.transcript(self.cfg.eot).to_vec();
        let committed = best.len().saturating_sub(self.cfg.n).min(transcript.len());
        self.timeline.events.push(TimelineEvent {
            k: self.chunk,
            time_ms: chunk_end_ms,
            tokens: transcript,
            committed,
            latency_ms: started.elapsed().as_secs_f64() * 1e3,
        });
        Ok(self.timeline.events.last().expect("just pushed"))
    }

    pub fn end_stream(&mut self) {
        self.ended = true;
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn zero_rows() -> Matrix {
        Matrix::zeros(0, 1)
    }

    /// Scripted stream over 4 tokens (0 = EOT): per chunk, scores favor a
    /// growing target prefix with decisive flips.
    fn scripted(tables: Vec<Vec<(Vec<u32>, Vec<f32>)>>) -> ScriptedScorer {
        // tables[k-1]: list of (prefix, scores); unlisted prefixes fall
        // back to EOT-heavy.
        let vocab = 4;
        ScriptedScorer::new(
            vocab,
            Arc::new(move |k, prefix: &[u32]| {
                let table = &tables[(k - 1).min(tables.len() - 1)];
                for (p, scores) in table {
                    if p == prefix {
                        return scores.clone();
                    }
                }
                let mut fallback = vec![0.0; vocab];
                fallback[0] = 5.0;
                fallback
            }),
        )
    }

    #[test]
    fn topk_basic_and_ties() {
        assert_eq!(topk(&[0.1, 0.5, 0.4], 1).unwrap(), vec![1]);
        assert_eq!(topk(&[0.1, 0.5, 0.4], 3).unwrap(), vec![1, 2, 0]);
        assert_eq!(topk(&[0.3, 0.3, 0.2], 1).unwrap(), vec![0]);
        assert!(topk(&[0.3], 2).is_err());
        assert!(topk(&[0.3], 0).is_err());
    }

    #[test]
    fn greedy_stability_clauses() {
        // Probability rose: stable even though not argmax.
        assert!(is_stable_greedy(0.40, &[0.5, 0.41, 0.09], 1));
        // Probability fell but still argmax: stable.
        assert!(is_stable_greedy(0.60, &[0.30, 0.28, 0.22, 0.20], 0));
        // Fell and lost argmax: unstable.
        assert!(!is_stable_greedy(0.60, &[0.30, 0.6, 0.1], 0));
    }

    #[test]
    fn beam_stability_ranks() {
        let dist = [0.05, 0.3, 0.25, 0.2, 0.12, 0.08];
        assert!(is_stable_beam(&dist, 1, 1));
        assert!(!is_stable_beam(&dist, 3, 2));
        assert!(is_stable_beam(&dist, 3, 3));
        for t in 0..6 {
            assert!(is_stable_beam(&dist, t, 6));
        }
    }

    #[test]
    fn quiescent_chunk_leaves_hypothesis_unchanged() {
        // Chunk 1 emits token 2 then EOT; chunk 2 keeps both stable.
        let s = scripted(vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.0]),
                (vec![2], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 6.0, 0.0]),
                (vec![2], vec![6.0, 0.0, 0.0, 0.0]),
            ],
        ]);
        let mut dec = GreedyDecoder::new(s, StreamConfig::default());
        dec.process_chunk(&zero_rows(), 100).unwrap();
        assert_eq!(dec.hypothesis().tokens, vec![2, 0]);
        dec.process_chunk(&zero_rows(), 200).unwrap();
        assert_eq!(dec.hypothesis().tokens, vec![2, 0]);
        assert_eq!(dec.transcript(), &[2]);
        assert_eq!(dec.timeline().events.len(), 2);
        assert!(dec.timeline().events.windows(2).all(|w| w[0].k < w[1].k));
    }

    #[test]
    fn unstable_token_is_retracted_and_redecoded() {
        // Chunk 1: emit 2, EOT. Chunk 2: token 2 collapses, 3 takes over.
        let s = scripted(vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.0]),
                (vec![2], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 0.5, 4.0]),
                (vec![3], vec![5.0, 0.0, 0.0, 0.0]),
            ],
        ]);
        let mut dec = GreedyDecoder::new(s, StreamConfig::default());
        dec.process_chunk(&zero_rows(), 100).unwrap();
        assert_eq!(dec.hypothesis().tokens, vec![2, 0]);
        dec.process_chunk(&zero_rows(), 200).unwrap();
        assert_eq!(dec.hypothesis().tokens, vec![3, 0]);
        // The re-decoded frontier token carries the new chunk's time.
        assert_eq!(dec.hypothesis().records[0].timestamp_ms, Some(200));
    }

    #[test]
    fn eot_every_chunk_gives_empty_transcript_and_no_timestamps() {
        let s = scripted(vec![vec![], vec![], vec![]]);
        let mut dec = GreedyDecoder::new(s, StreamConfig::default());
        for k in 1..=3u64 {
            dec.process_chunk(&zero_rows(), 100 * k).unwrap();
        }
        assert!(dec.transcript().is_empty());
        assert!(dec.word_timestamps(300).is_empty());
    }

    #[test]
    fn committed_prefix_never_changes() {
        // Three chunks with churn in the tail; n = 1 commits aggressively.
        let s = scripted(vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.0]),
                (vec![2], vec![0.0, 0.0, 0.0, 4.0]),
                (vec![2, 3], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 5.0, 0.0]),
                (vec![2], vec![0.0, 0.0, 0.0, 5.0]),
                (vec![2, 3], vec![0.0, 4.0, 0.0, 0.0]),
                (vec![2, 3, 1], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 6.0, 0.0]),
                (vec![2], vec![0.0, 0.0, 0.0, 6.0]),
                (vec![2, 3], vec![0.0, 5.0, 0.0, 0.0]),
                (vec![2, 3, 1], vec![6.0, 0.0, 0.0, 0.0]),
            ],
        ]);
        let cfg = StreamConfig {
            n: 1,
            ..StreamConfig::default()
        };
        let mut dec = GreedyDecoder::new(s, cfg);
        let mut committed_prefixes: Vec<Vec<u32>> = Vec::new();
        for k in 1..=3u64 {
            let ev = dec.process_chunk(&zero_rows(), 100 * k).unwrap();
            committed_prefixes.push(ev.tokens[..ev.committed].to_vec());
        }
        let final_tokens = dec.transcript().to_vec();
        for prefix in committed_prefixes {
            assert!(final_tokens.starts_with(&prefix), "committed prefix changed");
        }
    }

    #[test]
    fn beam_b1_matches_greedy_on_decisive_stream() {
        let tables = vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.0]),
                (vec![2], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 0.2, 4.0]), // decisive flip 2 -> 3
                (vec![3], vec![0.0, 4.0, 0.0, 0.0]),
                (vec![3, 1], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 0.1, 5.0]),
                (vec![3], vec![0.0, 5.0, 0.0, 0.0]),
                (vec![3, 1], vec![6.0, 0.0, 0.0, 0.0]),
            ],
        ];
        let mut greedy = GreedyDecoder::new(scripted(tables.clone()), StreamConfig::default());
        let mut beam = BeamDecoder::new(scripted(tables), StreamConfig::default(), 1).unwrap();
        for k in 1..=3u64 {
            greedy.process_chunk(&zero_rows(), 100 * k).unwrap();
            beam.process_chunk(&zero_rows(), 100 * k).unwrap();
            assert_eq!(
                greedy.hypothesis().tokens,
                beam.best().tokens,
                "divergence at chunk {k}"
            );
        }
    }

    #[test]
    fn beam_explores_what_greedy_misses() {
        // Token 2 narrowly beats 3 at the first position, but 3's
        // continuation is far better. Beam width 2 keeps both branches
        // and ranks the 3-branch higher. Both transcripts reach the same
        // length, so their total log-probabilities compare directly.
        let tables = vec![
            vec![
                (vec![], vec![0.0, -10.0, 1.0, 0.9]),
                (vec![2], vec![0.0, 0.4, -10.0, -10.0]),
                (vec![3], vec![-10.0, 3.5, -10.0, -10.0]),
                (vec![2, 1], vec![5.0, -10.0, -10.0, -10.0]),
                (vec![3, 1], vec![5.0, -10.0, -10.0, -10.0]),
            ];
            2
        ];
        let mut greedy = GreedyDecoder::new(scripted(tables.clone()), StreamConfig::default());
        let mut beam = BeamDecoder::new(scripted(tables.clone()), StreamConfig::default(), 2).unwrap();
        for k in 1..=2u64 {
            greedy.process_chunk(&zero_rows(), 100 * k).unwrap();
            beam.process_chunk(&zero_rows(), 100 * k).unwrap();
        }
        assert_eq!(greedy.transcript(), &[2, 1]);
        assert_eq!(beam.best_transcript(), &[3, 1]);
        // Independent path oracle over the same tables.
        let oracle = |tokens: &[u32]| {
            let mut path = 0.0f64;
            for (i, &tok) in tokens.iter().enumerate() {
                let prefix = &tokens[..i];
                let scores = tables[0]
                    .iter()
                    .find(|(p, _)| p == prefix)
                    .map(|(_, s)| s.clone())
                    .unwrap_or_else(|| vec![5.0, 0.0, 0.0, 0.0]);
                path += f64::from(crate::math::log_softmax(&scores)[tok as usize]);
            }
            path
        };
        assert!(oracle(&[3, 1]) > oracle(&[2, 1]));
    }

    #[test]
    fn beam_all_finished_returns_most_probable() {
        let tables = vec![vec![
            (vec![], vec![0.0, 2.0, 1.8, -10.0]),
            (vec![1], vec![3.0, -10.0, -10.0, -10.0]),
            (vec![2], vec![3.0, -10.0, -10.0, -10.0]),
        ]];
        let mut beam = BeamDecoder::new(scripted(tables), StreamConfig::default(), 2).unwrap();
        beam.process_chunk(&zero_rows(), 100).unwrap();
        assert_eq!(beam.best_transcript(), &[1]);
    }

    #[test]
    fn process_after_end_is_a_state_error() {
        let s = scripted(vec![vec![]]);
        let mut dec = GreedyDecoder::new(s, StreamConfig::default());
        dec.process_chunk(&zero_rows(), 100).unwrap();
        dec.end_stream();
        assert!(matches!(
            dec.process_chunk(&zero_rows(), 200),
            Err(EngineError::State(_))
        ));
    }

    #[test]
    fn two_word_timestamps_chain() {
        // Word 2 at chunk 1, word 3 at chunk 2, EOT afterwards.
        let s = scripted(vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.0]),
                (vec![2], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 6.0, 0.0]),
                (vec![2], vec![0.0, 0.0, 0.0, 4.0]),
                (vec![2, 3], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 6.0, 0.0]),
                (vec![2], vec![0.0, 0.0, 0.0, 6.0]),
                (vec![2, 3], vec![6.0, 0.0, 0.0, 0.0]),
            ],
        ]);
        let mut dec = GreedyDecoder::new(s, StreamConfig::default());
        for k in 1..=3u64 {
            dec.process_chunk(&zero_rows(), 100 * k).unwrap();
        }
        assert_eq!(dec.transcript(), &[2, 3]);
        let ts = dec.word_timestamps(300);
        assert_eq!(ts.len(), 2);
        assert_eq!(ts[0].start_ms, 100);
        assert_eq!(ts[0].end_ms, ts[1].start_ms);
        assert_eq!(ts[1].start_ms, 200);
        assert_eq!(ts[1].end_ms, 300);
        assert!(ts.windows(2).all(|w| w[0].start_ms < w[1].start_ms));
    }

    #[test]
    fn determinism_identical_runs_identical_timelines() {
        let tables = vec![
            vec![
                (vec![], vec![0.0, 0.0, 4.0, 0.1]),
                (vec![2], vec![5.0, 0.0, 0.0, 0.0]),
            ],
            vec![
                (vec![], vec![0.0, 0.0, 0.1, 4.0]),
                (vec![3], vec![5.0, 0.0, 0.0, 0.0]),
            ],
        ];
        let run = || {
            let mut dec = GreedyDecoder::new(scripted(tables.clone()), StreamConfig::default());
            for k in 1..=2u64 {
                dec.process_chunk(&zero_rows(), 100 * k).unwrap();
            }
            let (hyp, timeline) = dec.into_parts();
            (
                hyp.tokens,
                timeline
                    .events
                    .iter()
                    .map(|e| (e.k, e.time_ms, e.tokens.clone(), e.committed))
                    .collect::<Vec<_>>(),
            )
        };
        assert_eq!(run(), run());
    }
}
