//! Transcription quality metrics: final and streaming word-error rates,
//! word-timestamp quality, and runtime statistics.
//!
//! Streaming metrics accumulate edit counts per timeline event against a
//! reference prefix. The plain variant matches the hypothesis length; the
//! aligned variant takes the words whose aligned end times are already
//! due at the event's stream time, so late transcripts accrue deletions.

use crate::error::{EngineError, Result};

/// Levenshtein alignment tallies. `correct + deletions + substitutions`
/// is the reference length and `correct + insertions + substitutions` the
/// hypothesis length.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct EditCounts {
    pub insertions: usize,
    pub deletions: usize,
    pub substitutions: usize,
    pub correct: usize,
}

impl EditCounts {
    pub fn edits(&self) -> usize {
        self.insertions + self.deletions + self.substitutions
    }

    fn add(&mut self, other: &EditCounts) {
        self.insertions += other.insertions;
        self.deletions += other.deletions;
        self.substitutions += other.substitutions;
        self.correct += other.correct;
    }
}

/// Minimum-edit-distance counts between two word sequences.
///
/// Ties between minimal alignments are resolved by minimizing
/// insertions + deletions second, which prefers a substitution over an
/// insertion-deletion pair. (Deletion-versus-insertion ordering cannot
/// change the counts: their difference is fixed by the two lengths.)
/// The resulting count tuple is therefore unique and deterministic.
pub fn edit_counts<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> EditCounts {
    let rn = reference.len();
    let hn = hypothesis.len();
    // dp[j] = (edits, ins+del) for aligning the current reference prefix
    // with hypothesis[..j], minimized lexicographically.
    let mut prev: Vec<(usize, usize)> = (0..=hn).map(|j| (j, j)).collect();
    let mut cur = vec![(0usize, 0usize); hn + 1];
    for i in 1..=rn {
        cur[0] = (i, i);
        for j in 1..=hn {
            let diag = prev[j - 1];
            let same = reference[i - 1].as_ref() == hypothesis[j - 1].as_ref();
            let diag_cost = if same {
                diag
            } else {
                (diag.0 + 1, diag.1)
            };
            let del = (prev[j].0 + 1, prev[j].1 + 1);
            let ins = (cur[j - 1].0 + 1, cur[j - 1].1 + 1);
            cur[j] = diag_cost.min(del).min(ins);
        }
        std::mem::swap(&mut prev, &mut cur);
    }
    let (edits, insdel) = prev[hn];
    counts_from_objective(rn, hn, edits, insdel)
}

/// Recover the unique count tuple from the optimal objective: with both
/// lengths fixed, `insertions - deletions` is determined, so (edits,
/// ins+del) pins all four counts.
fn counts_from_objective(rn: usize, hn: usize, edits: usize, insdel: usize) -> EditCounts {
    let delta = hn as isize - rn as isize;
    let insertions = ((insdel as isize + delta) / 2) as usize;
    let deletions = ((insdel as isize - delta) / 2) as usize;
    let substitutions = edits - insdel;
    let correct = rn - deletions - substitutions;
    EditCounts {
        insertions,
        deletions,
        substitutions,
        correct,
    }
}

/// Standard word error rate `(I + D + S) / (C + D + S)`.
pub fn wer<R: AsRef<str>, H: AsRef<str>>(reference: &[R], hypothesis: &[H]) -> Result<f64> {
    if reference.is_empty() {
        return Err(EngineError::Domain("WER needs a non-empty reference".into()));
    }
    let c = edit_counts(reference, hypothesis);
    Ok(c.edits() as f64 / (c.correct + c.deletions + c.substitutions) as f64)
}

/// One timeline event reduced to scoring terms: the stream time it covers
/// and the hypothesis words at that point.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct EventWords {
    pub time_ms: u64,
    pub words: Vec<String>,
}

/// Relative word error rate: each event is scored against the reference
/// prefix of the hypothesis' own length (capped at the reference length;
/// surplus hypothesis words count as insertions), and the counts are
/// pooled across events.
pub fn rwer<R: AsRef<str>>(reference: &[R], events: &[EventWords]) -> f64 {
    let mut total = EditCounts::default();
    for event in events {
        let prefix = reference.len().min(event.words.len());
        total.add(&edit_counts(&reference[..prefix], &event.words));
    }
    ratio(&total)
}

/// Aligned relative word error rate: each event is scored against the
/// reference words whose aligned end time is `<=` the event's stream
/// time.
pub fn arwer(alignment: &ReferenceAlignment, events: &[EventWords]) -> f64 {
    let mut total = EditCounts::default();
    for event in events {
        let due = alignment
            .words
            .iter()
            .take_while(|w| w.end_ms <= event.time_ms)
            .map(|w| w.word.as_str())
            .collect::<Vec<_>>();
        total.add(&edit_counts(&due, &event.words));
    }
    ratio(&total)
}

fn ratio(c: &EditCounts) -> f64 {
    let den = c.correct + c.deletions + c.substitutions;
    if den == 0 {
        if c.insertions == 0 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        c.edits() as f64 / den as f64
    }
}

/// A reference word with its forced-alignment end time.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AlignedWord {
    pub word: String,
    pub end_ms: u64,
}

/// Reference words with nondecreasing end times, plus the audio duration
/// used to close the last word's span.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ReferenceAlignment {
    pub words: Vec<AlignedWord>,
    pub audio_ms: u64,
}

impl ReferenceAlignment {
    pub fn new(words: Vec<AlignedWord>, audio_ms: u64) -> Result<Self> {
        if words.windows(2).any(|w| w[0].end_ms > w[1].end_ms) {
            return Err(EngineError::Domain(
                "alignment end times must be nondecreasing".into(),
            ));
        }
        if let Some(last) = words.last() {
            if last.end_ms > audio_ms {
                return Err(EngineError::Domain(
                    "alignment extends past the audio duration".into(),
                ));
            }
        }
        Ok(Self { words, audio_ms })
    }
}

/// A hypothesis word span from the streaming timestamper.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct HypWordSpan {
    pub word: String,
    pub start_ms: u64,
    pub end_ms: u64,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TimestampMetrics {
    pub precision: f64,
    pub recall: f64,
    /// Mean absolute anchor error over matched words.
    pub sd_ms: f64,
    /// Mean absolute span-end error over matched words.
    pub ed_ms: f64,
    pub matched: usize,
}

/// Timestamp quality under a local matching convention.
///
/// A hypothesis word's time marks its recognition point, which trails the
/// word's audio, so it is scored against the reference word's aligned
/// *end* time. Words are matched greedily one-to-one, in temporal order,
/// on case-folded equality. A matched hypothesis word is a hit when its
/// anchor error is within `threshold_ms`. Span ends chain to the next
/// word's anchor on both sides (stream end and audio end close the last
/// spans). Words ending before `exclude_before_ms` (the initial chunk)
/// are excluded on both sides.
pub fn timestamp_metrics(
    alignment: &ReferenceAlignment,
    hyp_words: &[HypWordSpan],
    threshold_ms: u64,
    exclude_before_ms: u64,
) -> Result<TimestampMetrics> {
    if threshold_ms == 0 {
        return Err(EngineError::Domain("threshold must be positive".into()));
    }
    let refs: Vec<(&AlignedWord, u64)> = alignment
        .words
        .iter()
        .enumerate()
        .map(|(i, w)| {
            let span_end = alignment
                .words
                .get(i + 1)
                .map(|n| n.end_ms)
                .unwrap_or(alignment.audio_ms);
            (w, span_end)
        })
        .filter(|(w, _)| w.end_ms >= exclude_before_ms)
        .collect();
    let hyps: Vec<&HypWordSpan> = hyp_words
        .iter()
        .filter(|w| w.start_ms >= exclude_before_ms)
        .collect();

    let fold = |s: &str| s.to_lowercase();
    let mut next_ref = 0usize;
    let mut hits = 0usize;
    let mut matched = 0usize;
    let mut start_err_sum = 0.0f64;
    let mut end_err_sum = 0.0f64;
    for hyp in &hyps {
        let found = (next_ref..refs.len()).find(|&i| fold(&refs[i].0.word) == fold(&hyp.word));
        if let Some(i) = found {
            next_ref = i + 1;
            matched += 1;
            let start_err = hyp.start_ms.abs_diff(refs[i].0.end_ms);
            let end_err = hyp.end_ms.abs_diff(refs[i].1);
            start_err_sum += start_err as f64;
            end_err_sum += end_err as f64;
            if start_err <= threshold_ms {
                hits += 1;
            }
        }
    }
    let frac = |num: usize, den: usize, other_empty: bool| {
        if den == 0 {
            if other_empty {
                1.0
            } else {
                0.0
            }
        } else {
            num as f64 / den as f64
        }
    };
    Ok(TimestampMetrics {
        precision: frac(hits, hyps.len(), refs.is_empty()),
        recall: frac(hits, refs.len(), hyps.is_empty()),
        sd_ms: if matched > 0 {
            start_err_sum / matched as f64
        } else {
            0.0
        },
        ed_ms: if matched > 0 {
            end_err_sum / matched as f64
        } else {
            0.0
        },
        matched,
    })
}

/// Per-chunk processing times against a fixed chunk duration.
#[derive(Debug, Clone, PartialEq)]
pub struct RuntimeStats {
    chunk_seconds: f64,
    processing_seconds: Vec<f64>,
}

impl RuntimeStats {
    pub fn new(chunk_seconds: f64, processing_seconds: Vec<f64>) -> Result<Self> {
        if !(chunk_seconds > 0.0) {
            return Err(EngineError::Domain("chunk seconds must be positive".into()));
        }
        if processing_seconds.iter().any(|&t| !(t >= 0.0)) {
            return Err(EngineError::Domain("processing times must be >= 0".into()));
        }
        Ok(Self {
            chunk_seconds,
            processing_seconds,
        })
    }

    /// Per-chunk real-time factors `t_c / C`.
    pub fn rtf_list(&self) -> Vec<f64> {
        self.processing_seconds
            .iter()
            .map(|&t| t / self.chunk_seconds)
            .collect()
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct RtfSummary {
    pub mean_rtf: f64,
    pub mean_latency_s: f64,
}

/// Arithmetic means of the per-chunk real-time factor and latency.
pub fn rtf_stats(stats: &RuntimeStats) -> RtfSummary {
    let rtf = stats.rtf_list();
    let n = rtf.len().max(1) as f64;
    RtfSummary {
        mean_rtf: rtf.iter().sum::<f64>() / n,
        mean_latency_s: stats.processing_seconds.iter().sum::<f64>() / n,
    }
}

/// Case-fold, split on whitespace, and strip terminal punctuation; empty
/// residues are dropped.
pub fn tokenize_words(text: &str) -> Vec<String> {
    text.split_whitespace()
        .map(|w| {
            w.to_lowercase()
                .trim_end_matches(|c: char| c.is_ascii_punctuation())
                .to_string()
        })
        .filter(|w| !w.is_empty())
        .collect()
}
