//! Deterministic statistics kernel: labeled RNG streams, bootstrap
//! resampling, permutation sampling, and percentile computation.
//!
//! Every random draw in the toolkit goes through an [`RngStream`], which
//! derives a ChaCha8 generator from a 64-bit root seed plus a string label.
//! Identical `(seed, label)` pairs give identical byte streams on every
//! platform, and distinct labels give independent streams, so parallel
//! consumers are reproducible regardless of scheduling.

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use thiserror::Error;

/// Identity of the toolkit's generator, recorded in report metadata.
pub const PRNG_ID: &str = "chacha8(seed=sha256(root_seed || label))";

#[derive(Debug, Error, PartialEq)]
pub enum StatsError {
    #[error("cannot bootstrap an empty item list")]
    EmptyItems,
    #[error("replicates must be >= 1 (got {0})")]
    ZeroReplicates(usize),
    #[error("confidence level must be in (0, 1) (got {0})")]
    BadLevel(f64),
}

/// A named, reproducible source of randomness.
///
/// Streams are cheap to clone and to split: `child("bootstrap")` of the same
/// parent always denotes the same stream.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RngStream {
    root: u64,
    label: String,
}

impl RngStream {
    pub fn new(root: u64, label: impl Into<String>) -> Self {
        Self { root, label: label.into() }
    }

    /// Derive a sub-stream; the new label is `"{label}/{sub}"`.
    pub fn child(&self, sub: impl AsRef<str>) -> Self {
        Self {
            root: self.root,
            label: format!("{}/{}", self.label, sub.as_ref()),
        }
    }

    pub fn label(&self) -> &str {
        &self.label
    }

    /// Instantiate the generator for this stream.
    pub fn rng(&self) -> ChaCha8Rng {
        let mut h = Sha256::new();
        h.update(self.root.to_le_bytes());
        h.update([0x1f]); // separator between seed bytes and label
        h.update(self.label.as_bytes());
        let digest = h.finalize();
        let mut seed = [0u8; 32];
        seed.copy_from_slice(&digest);
        ChaCha8Rng::from_seed(seed)
    }
}

/// A 64-bit seed derived from `(root, label)`, for components that take a
/// plain seed rather than a stream.
pub fn derive_seed(root: u64, label: &str) -> u64 {
    let mut h = Sha256::new();
    h.update(root.to_le_bytes());
    h.update([0x1f]);
    h.update(label.as_bytes());
    let digest = h.finalize();
    u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
}

/// Bootstrap percentile interval around the replicate median.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub median: f64,
    pub low: f64,
    pub high: f64,
    pub level: f64,
    pub replicates: usize,
}

/// Percentile of a sorted slice with linear interpolation between order
/// statistics: rank `h = (n-1)p`, value `x[floor(h)] + frac(h) * (x[floor(h)+1] - x[floor(h)])`.
pub fn percentile(sorted: &[f64], p: f64) -> f64 {
    assert!(!sorted.is_empty(), "percentile of empty slice");
    assert!((0.0..=1.0).contains(&p), "percentile p out of [0,1]: {p}");
    let n = sorted.len();
    if n == 1 {
        return sorted[0];
    }
    let h = (n - 1) as f64 * p;
    let lo = h.floor() as usize;
    if lo + 1 >= n {
        return sorted[n - 1];
    }
    let frac = h - lo as f64;
    sorted[lo] + frac * (sorted[lo + 1] - sorted[lo])
}

/// Percentile bootstrap of `statistic` over `items`.
///
/// Each replicate resamples `items.len()` indices with replacement from its
/// own sub-stream (`rep/<i>`), so replicates may run in parallel without
/// changing the result. Returns the replicate median and the
/// `[(1-level)/2, 1-(1-level)/2]` percentile interval.
pub fn bootstrap<T, F>(
    items: &[T],
    statistic: F,
    replicates: usize,
    level: f64,
    stream: &RngStream,
) -> Result<IntervalSummary, StatsError>
where
    T: Copy + Send + Sync,
    F: Fn(&[T]) -> f64 + Send + Sync,
{
    if items.is_empty() {
        return Err(StatsError::EmptyItems);
    }
    if replicates == 0 {
        return Err(StatsError::ZeroReplicates(replicates));
    }
    if !(level > 0.0 && level < 1.0) {
        return Err(StatsError::BadLevel(level));
    }

    let n = items.len();
    let mut stats: Vec<f64> = (0..replicates)
        .into_par_iter()
        .map(|rep| {
            let mut rng = stream.child(format!("rep/{rep}")).rng();
            let resample: Vec<T> = (0..n).map(|_| items[rng.random_range(0..n)]).collect();
            statistic(&resample)
        })
        .collect();
    stats.sort_by(|a, b| a.total_cmp(b));

    let tail = (1.0 - level) / 2.0;
    Ok(IntervalSummary {
        median: percentile(&stats, 0.5),
        low: percentile(&stats, tail),
        high: percentile(&stats, 1.0 - tail),
        level,
        replicates,
    })
}

/// Uniform random permutation of `items` (Fisher-Yates), deterministic per
/// stream. The input is not modified.
pub fn permute<T: Clone>(items: &[T], stream: &RngStream) -> Vec<T> {
    let mut out = items.to_vec();
    let mut rng = stream.rng();
    for i in (1..out.len()).rev() {
        let j = rng.random_range(0..=i);
        out.swap(i, j);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashMap;

    #[test]
    fn stream_is_reproducible_and_label_sensitive() {
        let a: Vec<u64> = (0..8).map(|_| RngStream::new(7, "x").rng().random()).collect();
        // same draw from a fresh rng each time: all equal
        assert!(a.windows(2).all(|w| w[0] == w[1]));

        let mut r1 = RngStream::new(7, "x").rng();
        let mut r2 = RngStream::new(7, "x").rng();
        let s1: Vec<u64> = (0..32).map(|_| r1.random()).collect();
        let s2: Vec<u64> = (0..32).map(|_| r2.random()).collect();
        assert_eq!(s1, s2);

        let mut r3 = RngStream::new(7, "y").rng();
        let s3: Vec<u64> = (0..32).map(|_| r3.random()).collect();
        assert_ne!(s1, s3);

        let mut r4 = RngStream::new(8, "x").rng();
        let s4: Vec<u64> = (0..32).map(|_| r4.random()).collect();
        assert_ne!(s1, s4);
    }

    #[test]
    fn child_labels_compose() {
        let s = RngStream::new(1, "bootstrap");
        assert_eq!(s.child("17").label(), "bootstrap/17");
        assert_eq!(s.child("17"), RngStream::new(1, "bootstrap/17"));
    }

    #[test]
    fn percentile_matches_exhaustive_definition_on_small_inputs() {
        // Exhaustive oracle: for p hitting exact ranks, percentile equals the
        // order statistic; between ranks it interpolates linearly.
        let xs = [1.0, 2.0, 3.0, 5.0];
        assert_eq!(percentile(&xs, 0.0), 1.0);
        assert_eq!(percentile(&xs, 1.0), 5.0);
        // rank h = 3 * 1/3 = 1 exactly
        assert_eq!(percentile(&xs, 1.0 / 3.0), 2.0);
        // rank h = 3 * 0.5 = 1.5 -> halfway between 2 and 3
        assert_eq!(percentile(&xs, 0.5), 2.5);
        // rank h = 3 * 0.75 = 2.25 -> 3 + 0.25 * (5 - 3)
        assert_eq!(percentile(&xs, 0.75), 3.5);
        assert_eq!(percentile(&[4.2], 0.37), 4.2);
    }

    #[test]
    fn bootstrap_of_constant_statistic_is_exact() {
        let items = vec![3.5f64; 40];
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let s = bootstrap(&items, mean, 200, 0.99, &RngStream::new(5, "t")).unwrap();
        assert_eq!(s.median, 3.5);
        assert_eq!(s.low, 3.5);
        assert_eq!(s.high, 3.5);
    }

    #[test]
    fn bootstrap_balanced_binary_mean_is_calibrated() {
        // items = {0,1} balanced, n = 10_000; resampled mean is
        // Binomial(10_000, 0.5)/10_000, so the median sits within a hair of 0.5.
        let items: Vec<f64> = (0..10_000).map(|i| (i % 2) as f64).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let s = bootstrap(&items, mean, 1000, 0.99, &RngStream::new(11, "t")).unwrap();
        assert!((s.median - 0.5).abs() < 0.015, "median {}", s.median);
        assert!(s.low <= s.median && s.median <= s.high);
    }

    #[test]
    fn bootstrap_is_bit_identical_across_runs_and_thread_counts() {
        let items: Vec<f64> = (0..500).map(|i| (i as f64).sin()).collect();
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let stream = RngStream::new(99, "det");
        let a = bootstrap(&items, mean, 300, 0.99, &stream).unwrap();
        let b = bootstrap(&items, mean, 300, 0.99, &stream).unwrap();
        assert_eq!(a, b);

        let pool = rayon::ThreadPoolBuilder::new().num_threads(1).build().unwrap();
        let c = pool.install(|| bootstrap(&items, mean, 300, 0.99, &stream).unwrap());
        assert_eq!(a, c);
    }

    #[test]
    fn bootstrap_rejects_bad_inputs() {
        let mean = |xs: &[f64]| xs.iter().sum::<f64>() / xs.len() as f64;
        let s = RngStream::new(0, "e");
        assert_eq!(bootstrap::<f64, _>(&[], mean, 10, 0.5, &s), Err(StatsError::EmptyItems));
        assert_eq!(bootstrap(&[1.0], mean, 0, 0.5, &s), Err(StatsError::ZeroReplicates(0)));
        assert_eq!(bootstrap(&[1.0], mean, 10, 1.0, &s), Err(StatsError::BadLevel(1.0)));
    }

    #[test]
    fn permute_preserves_multiset_and_is_deterministic() {
        let items: Vec<u32> = (0..100).collect();
        let s = RngStream::new(3, "perm");
        let a = permute(&items, &s);
        let b = permute(&items, &s);
        assert_eq!(a, b);
        let mut sorted = a.clone();
        sorted.sort_unstable();
        assert_eq!(sorted, items);
        assert_eq!(permute(&[42], &s), vec![42]);
    }

    #[test]
    fn shuffle_is_unbiased_chi_square() {
        // 60_000 draws of a 3-item list: each of the 6 orders should appear
        // ~10_000 times. Chi-square with 5 dof at alpha=0.001 is 20.5.
        let base = ["a", "b", "c"];
        let root = RngStream::new(2024, "chisq");
        let mut counts: HashMap<Vec<&str>, u64> = HashMap::new();
        for i in 0..60_000 {
            let p = permute(&base, &root.child(i.to_string()));
            *counts.entry(p).or_default() += 1;
        }
        assert_eq!(counts.len(), 6);
        let expected = 10_000.0;
        let chi2: f64 = counts
            .values()
            .map(|&c| (c as f64 - expected).powi(2) / expected)
            .sum();
        assert!(chi2 < 20.5, "chi2 = {chi2}, counts = {counts:?}");
    }
}
