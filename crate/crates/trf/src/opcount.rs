//! Arithmetic instrumentation for the multiplication-free contract.
//!
//! Counters are recorded in bulk (once per tile, not per scalar op) so the
//! instrumented totals are exact while the overhead stays negligible, and the
//! thread-safe accumulation sums to the serial count for any worker count.
//! Counting compiles out when the `opcount` feature is disabled.

use std::sync::atomic::{AtomicU64, Ordering};

/// Operation counts scoped to an instrumented region.
///
/// `additions` and `multiplies` cover the accumulation loops of the packed
/// kernels; `scale_multiplies` counts the single final scaling multiply per
/// output entry, which is reported separately because the accumulation
/// itself is multiplication-free.
#[derive(Debug, Default)]
pub struct OpCounter {
    additions: AtomicU64,
    multiplies: AtomicU64,
    scale_multiplies: AtomicU64,
}

impl OpCounter {
    pub fn new() -> Self {
        Self::default()
    }

    #[inline]
    pub fn add_additions(&self, n: u64) {
        #[cfg(feature = "opcount")]
        self.additions.fetch_add(n, Ordering::Relaxed);
        #[cfg(not(feature = "opcount"))]
        let _ = n;
    }

    #[inline]
    pub fn add_multiplies(&self, n: u64) {
        #[cfg(feature = "opcount")]
        self.multiplies.fetch_add(n, Ordering::Relaxed);
        #[cfg(not(feature = "opcount"))]
        let _ = n;
    }

    #[inline]
    pub fn add_scale_multiplies(&self, n: u64) {
        #[cfg(feature = "opcount")]
        self.scale_multiplies.fetch_add(n, Ordering::Relaxed);
        #[cfg(not(feature = "opcount"))]
        let _ = n;
    }

    pub fn additions(&self) -> u64 {
        self.additions.load(Ordering::Relaxed)
    }

    pub fn multiplies(&self) -> u64 {
        self.multiplies.load(Ordering::Relaxed)
    }

    pub fn scale_multiplies(&self) -> u64 {
        self.scale_multiplies.load(Ordering::Relaxed)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn counts_accumulate() {
        let c = OpCounter::new();
        c.add_additions(5);
        c.add_additions(7);
        c.add_multiplies(1);
        c.add_scale_multiplies(3);
        assert_eq!(c.additions(), 12);
        assert_eq!(c.multiplies(), 1);
        assert_eq!(c.scale_multiplies(), 3);
    }
}
