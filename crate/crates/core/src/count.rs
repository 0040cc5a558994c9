//! Multiply-accumulate accounting for the attention kernels.
//!
//! Counts are bucketed by the stage of the attention computation so the
//! benchmark can compare a cached streaming pass against recompute
//! strategies with exact integer totals. Counting is deterministic:
//! identical inputs produce identical totals regardless of wall clock.

/// Running multiply-accumulate totals, bucketed by stage, plus the number
/// of bytes appended to key/value caches.
///
/// The `projection` bucket covers the per-frame linear maps (Q/K/V
/// projections and the feed-forward weight); `dot_product` counts the
/// query-key reductions; `value_weighting` counts the weighted value
/// accumulation. Each bucket is monotone nondecreasing during a run.
#[derive(Debug, Clone, Copy, Default, PartialEq, Eq)]
pub struct OpCounter {
    pub projection_macs: u64,
    pub dot_product_macs: u64,
    pub value_weighting_macs: u64,
    pub cache_bytes: u64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add_projection(&mut self, macs: u64) {
        self.projection_macs += macs;
    }

    pub fn add_dot_product(&mut self, macs: u64) {
        self.dot_product_macs += macs;
    }

    pub fn add_value_weighting(&mut self, macs: u64) {
        self.value_weighting_macs += macs;
    }

    pub fn add_cache_bytes(&mut self, bytes: u64) {
        self.cache_bytes += bytes;
    }

    /// Grand total across the three MAC buckets.
    pub fn total_macs(&self) -> u64 {
        self.projection_macs + self.dot_product_macs + self.value_weighting_macs
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn buckets_accumulate_independently() {
        let mut c = OpCounter::new();
        c.add_projection(10);
        c.add_dot_product(20);
        c.add_value_weighting(30);
        c.add_cache_bytes(40);
        assert_eq!(c.projection_macs, 10);
        assert_eq!(c.dot_product_macs, 20);
        assert_eq!(c.value_weighting_macs, 30);
        assert_eq!(c.cache_bytes, 40);
        assert_eq!(c.total_macs(), 60);
    }
}
