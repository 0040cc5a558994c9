//! Blocked causal mask construction and the chunk-boundary sample grid
//! used by fine-tuning.
//!
//! Frame indices in this module are 1-based, matching the ceiling
//! arithmetic of the mask definition; [`build_mask`] adapts to the 0-based
//! storage indices of [`AttentionMask`]. One encoder frame corresponds to
//! [`FRAME_MS`] milliseconds of audio.

use crate::error::{EngineError, Result};
use crate::math::AttentionMask;
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

/// Milliseconds of audio represented by one encoder frame.
pub const FRAME_MS: u64 = 20;

/// Chunking geometry: `tau` frames per streaming chunk and `tau0` frames
/// in the larger initial chunk.
///
/// `tau0` must be a positive integer multiple of `tau`: the mask mixes a
/// ceil(i/tau) block grid with a `[1, tau0]^2` block, and only multiples
/// keep the two clauses on the same grid. Non-multiples are rejected at
/// construction.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MaskSpec {
    tau: usize,
    tau0: usize,
}

impl MaskSpec {
    pub fn new(tau: usize, tau0: usize) -> Result<Self> {
        if tau == 0 {
            return Err(EngineError::Domain("tau must be >= 1".into()));
        }
        if tau0 < tau {
            return Err(EngineError::Domain(format!(
                "tau0 ({tau0}) must be >= tau ({tau})"
            )));
        }
        if tau0 % tau != 0 {
            return Err(EngineError::Domain(format!(
                "tau0 ({tau0}) must be an integer multiple of tau ({tau})"
            )));
        }
        Ok(Self { tau, tau0 })
    }

    pub fn tau(&self) -> usize {
        self.tau
    }

    pub fn tau0(&self) -> usize {
        self.tau0
    }

    /// Frames after `total` chunks: `tau0 + (total - 1) * tau` chunks of
    /// data map onto the `ceil(i/tau)` grid, so this is just `total * tau`
    /// relative to that grid. Kept for callers that track chunk counts.
    pub fn frames_for_chunks(&self, chunks: usize) -> usize {
        chunks * self.tau
    }

    /// Whether `frames` is a reachable stream length: the initial chunk
    /// followed by whole chunks.
    pub fn is_boundary(&self, frames: usize) -> bool {
        frames >= self.tau0 && (frames - self.tau0) % self.tau == 0
    }
}

/// 1-based chunk id of frame `t`: ceil(t / tau).
pub fn block_index(t: usize, spec: &MaskSpec) -> Result<usize> {
    if t == 0 {
        return Err(EngineError::Domain("frame index is 1-based; got 0".into()));
    }
    Ok((t + spec.tau - 1) / spec.tau)
}

/// Whether query frame `i` may attend to key frame `j` (both 1-based):
/// true iff ceil(i/tau) >= ceil(j/tau), or both lie in the initial
/// `[1, tau0]^2` block.
pub fn is_attendable(i: usize, j: usize, spec: &MaskSpec) -> Result<bool> {
    let bi = block_index(i, spec)?;
    let bj = block_index(j, spec)?;
    Ok(bi >= bj || (i <= spec.tau0 && j <= spec.tau0))
}

/// Number of key frames attendable from query frame `i` (1-based). The
/// attendable set is always a prefix: frames 1..=limit.
pub fn attendable_limit(i: usize, spec: &MaskSpec) -> Result<usize> {
    let bi = block_index(i, spec)?;
    Ok((bi * spec.tau).max(if i <= spec.tau0 { spec.tau0 } else { 0 }))
}

/// Dense mask of side `k * tau` whose predicate equals [`is_attendable`]
/// pointwise (0-based storage adapter: bit (r, c) = is_attendable(r+1, c+1)).
pub fn build_mask(k: usize, spec: &MaskSpec) -> Result<AttentionMask> {
    if k == 0 {
        return Err(EngineError::Domain("chunk count must be >= 1".into()));
    }
    let side = k * spec.tau;
    AttentionMask::from_fn(side, side, |r, c| {
        is_attendable(r + 1, c + 1, spec).expect("indices are >= 1")
    })
}

/// Mask for an arbitrary boundary-aligned frame count (used by the full
/// masked encoder pass, where the first chunk is `tau0` frames).
pub fn build_mask_for_frames(frames: usize, spec: &MaskSpec) -> Result<AttentionMask> {
    if frames == 0 {
        return Err(EngineError::Domain("frame count must be >= 1".into()));
    }
    AttentionMask::from_fn(frames, frames, |r, c| {
        is_attendable(r + 1, c + 1, spec).expect("indices are >= 1")
    })
}

/// Ordered chunk-boundary frame indices selected for fine-tuning, together
/// with the fraction that produced them.
#[derive(Debug, Clone, PartialEq)]
pub struct SamplePointSet {
    points: Vec<usize>,
    fraction: f64,
}

impl SamplePointSet {
    pub fn points(&self) -> &[usize] {
        &self.points
    }

    pub fn fraction(&self) -> f64 {
        self.fraction
    }

    pub fn len(&self) -> usize {
        self.points.len()
    }

    pub fn is_empty(&self) -> bool {
        self.points.is_empty()
    }
}

/// Full grid of chunk boundaries reachable within `total_frames`:
/// `{tau0, tau0 + tau, ...}`.
pub fn sample_grid(spec: &MaskSpec, total_frames: usize) -> Result<Vec<usize>> {
    if total_frames < spec.tau0 {
        return Err(EngineError::InsufficientInput(format!(
            "stream of {total_frames} frames is shorter than the initial chunk ({})",
            spec.tau0
        )));
    }
    Ok((spec.tau0..=total_frames).step_by(spec.tau).collect())
}

/// Uniform random subset of the boundary grid, of size
/// `max(1, round-half-up(f_hat * |grid|))`, sorted ascending and
/// deterministic for a given seed.
pub fn sample_points(
    spec: &MaskSpec,
    total_frames: usize,
    f_hat: f64,
    rng_seed: u64,
) -> Result<SamplePointSet> {
    if !(f_hat > 0.0 && f_hat <= 1.0) {
        return Err(EngineError::Domain(format!(
            "sample fraction must be in (0, 1], got {f_hat}"
        )));
    }
    let grid = sample_grid(spec, total_frames)?;
    let take = sample_count(f_hat, grid.len());
    let mut rng = ChaCha8Rng::seed_from_u64(rng_seed);
    let mut chosen: Vec<usize> = grid
        .choose_multiple(&mut rng, take)
        .copied()
        .collect();
    chosen.sort_unstable();
    Ok(SamplePointSet {
        points: chosen,
        fraction: f_hat,
    })
}

/// Round-half-up sizing, floored at one point per utterance.
pub(crate) fn sample_count(f_hat: f64, grid_len: usize) -> usize {
    let sized = (f_hat * grid_len as f64 + 0.5).floor() as usize;
    sized.clamp(1, grid_len.max(1))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn spec(tau: usize, tau0: usize) -> MaskSpec {
        MaskSpec::new(tau, tau0).unwrap()
    }

    #[test]
    fn spec_rejects_bad_geometry() {
        assert!(MaskSpec::new(0, 0).is_err());
        assert!(MaskSpec::new(15, 10).is_err());
        assert!(MaskSpec::new(15, 40).is_err()); // not a multiple
        assert!(MaskSpec::new(15, 30).is_ok());
        assert!(MaskSpec::new(200, 600).is_ok());
    }

    #[test]
    fn block_index_worked_examples() {
        let s = spec(15, 30);
        assert_eq!(block_index(35, &s).unwrap(), 3);
        assert_eq!(block_index(23, &s).unwrap(), 2);
        assert_eq!(block_index(50, &s).unwrap(), 4);
    }

    #[test]
    fn block_index_rejects_zero() {
        assert!(block_index(0, &spec(15, 30)).is_err());
    }

    #[test]
    fn attendable_worked_examples() {
        let s = spec(15, 30);
        assert!(is_attendable(35, 23, &s).unwrap());
        assert!(!is_attendable(35, 50, &s).unwrap());
        // Initial-block clause overrides ceil(5/15) < ceil(29/15).
        assert!(is_attendable(5, 29, &s).unwrap());
    }

    #[test]
    fn past_is_always_attendable() {
        let s = spec(15, 30);
        for i in 1..=90 {
            for j in 1..=i {
                assert!(is_attendable(i, j, &s).unwrap(), "({i},{j}) blocked");
            }
        }
    }

    #[test]
    fn rows_constant_within_a_chunk() {
        let s = spec(4, 8);
        for i in 1..=40usize {
            for i2 in 1..=40usize {
                if block_index(i, &s).unwrap() != block_index(i2, &s).unwrap() {
                    continue;
                }
                // Same chunk and both inside/outside the initial block
                // (tau0 is a multiple of tau, so chunk membership decides
                // the initial-block clause too).
                for j in 1..=40 {
                    assert_eq!(
                        is_attendable(i, j, &s).unwrap(),
                        is_attendable(i2, j, &s).unwrap()
                    );
                }
            }
        }
    }

    #[test]
    fn single_chunk_mask_fully_attendable() {
        let s = spec(6, 6);
        let m = build_mask(1, &s).unwrap();
        for r in 0..6 {
            for c in 0..6 {
                assert!(m.is_attendable(r, c));
            }
        }
    }

    #[test]
    fn staircase_structure_tau15_tau0_30_k10() {
        let s = spec(15, 30);
        let m = build_mask(10, &s).unwrap();
        assert_eq!(m.rows(), 150);
        // The (35, 50) point from the worked example is masked, its
        // transpose attendable; everything on or below the diagonal is
        // attendable.
        assert!(!m.is_attendable(34, 49));
        assert!(m.is_attendable(49, 34));
        for r in 0..150 {
            for c in 0..=r {
                assert!(m.is_attendable(r, c));
            }
        }
        // Inside the initial 30x30 block everything is attendable.
        for r in 0..30 {
            for c in 0..30 {
                assert!(m.is_attendable(r, c));
            }
        }
    }

    #[test]
    fn mask_growth_is_monotone() {
        let s = spec(4, 8);
        for k in 2..=6 {
            let big = build_mask(k, &s).unwrap();
            let small = build_mask(k - 1, &s).unwrap();
            for r in 0..small.rows() {
                for c in 0..small.cols() {
                    assert_eq!(big.is_attendable(r, c), small.is_attendable(r, c));
                }
            }
        }
    }

    #[test]
    fn attendable_limit_matches_predicate() {
        let s = spec(4, 8);
        for i in 1..=32 {
            let limit = attendable_limit(i, &s).unwrap();
            for j in 1..=32 {
                assert_eq!(is_attendable(i, j, &s).unwrap(), j <= limit, "i={i} j={j}");
            }
        }
    }

    #[test]
    fn sample_points_full_fraction_is_whole_grid() {
        let s = spec(5, 5);
        let set = sample_points(&s, 20, 1.0, 7).unwrap();
        assert_eq!(set.points(), &[5, 10, 15, 20]);
    }

    #[test]
    fn sample_points_half_fraction_properties() {
        let s = spec(2, 2);
        // Grid: {2, 4, ..., 20}, |I| = 10.
        let grid = sample_grid(&s, 20).unwrap();
        assert_eq!(grid.len(), 10);
        let a = sample_points(&s, 20, 0.5, 42).unwrap();
        let b = sample_points(&s, 20, 0.5, 42).unwrap();
        assert_eq!(a, b, "same seed must reproduce the same subset");
        assert_eq!(a.len(), 5);
        assert!(a.points().windows(2).all(|w| w[0] < w[1]));
        assert!(a.points().iter().all(|p| grid.contains(p)));
        let c = sample_points(&s, 20, 0.5, 43).unwrap();
        assert_eq!(c.len(), 5);
    }

    #[test]
    fn sample_points_too_short_stream_errors() {
        let s = spec(5, 10);
        assert!(matches!(
            sample_points(&s, 8, 1.0, 0),
            Err(EngineError::InsufficientInput(_))
        ));
    }

    #[test]
    fn sample_count_rounds_half_up_with_floor_one() {
        assert_eq!(sample_count(0.5, 10), 5);
        assert_eq!(sample_count(0.55, 10), 6); // 5.5 rounds up
        assert_eq!(sample_count(0.01, 10), 1); // floor at one
        assert_eq!(sample_count(1.0, 3), 3);
    }
}
