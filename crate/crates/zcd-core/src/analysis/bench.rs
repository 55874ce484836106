//! Latency statistics for A/B benchmarking.
//!
//! This crate computes the statistics only; actually timing forward passes
//! needs a clock and lives with the I/O layer. Contract: at least
//! [`MIN_BENCH_ROUNDS`] measured rounds (warmup excluded), medians compared
//! as a ratio.

use alloc::string::String;
use alloc::vec::Vec;

use crate::{Error, Result};

/// Fewest measured rounds a report may summarize.
pub const MIN_BENCH_ROUNDS: usize = 10;

/// Summary of one model's timed rounds.
#[derive(Debug, Clone, PartialEq, Eq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BenchStats {
    pub rounds: usize,
    pub times_ns: Vec<u64>,
    pub median_ns: u64,
    pub mean_ns: u64,
}

impl BenchStats {
    pub fn from_times(times: &[u64]) -> Result<Self> {
        if times.len() < MIN_BENCH_ROUNDS {
            return Err(Error::TooFewRounds {
                rounds: times.len(),
                min: MIN_BENCH_ROUNDS,
            });
        }
        let mut sorted: Vec<u64> = times.to_vec();
        sorted.sort_unstable();
        let mid = sorted.len() / 2;
        let median_ns = if sorted.len() % 2 == 1 {
            sorted[mid]
        } else {
            (sorted[mid - 1] + sorted[mid]) / 2
        };
        let mean_ns = sorted.iter().sum::<u64>() / sorted.len() as u64;
        Ok(BenchStats {
            rounds: times.len(),
            times_ns: times.to_vec(),
            median_ns,
            mean_ns,
        })
    }
}

/// Median-latency comparison of a candidate against a reference.
#[derive(Debug, Clone, PartialEq)]
#[cfg_attr(feature = "serde", derive(serde::Serialize))]
pub struct BenchReport {
    pub reference: String,
    pub candidate: String,
    pub warmup: usize,
    pub reference_stats: BenchStats,
    pub candidate_stats: BenchStats,
    /// candidate median / reference median.
    pub ratio: f64,
}

impl BenchReport {
    pub fn compare(
        reference: (&str, BenchStats),
        candidate: (&str, BenchStats),
        warmup: usize,
    ) -> Self {
        let ratio = candidate.1.median_ns as f64 / reference.1.median_ns as f64;
        BenchReport {
            reference: String::from(reference.0),
            candidate: String::from(candidate.0),
            warmup,
            reference_stats: reference.1,
            candidate_stats: candidate.1,
            ratio,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn median_of_odd_and_even_counts() {
        let odd: Vec<u64> = (1..=11).collect();
        assert_eq!(BenchStats::from_times(&odd).unwrap().median_ns, 6);
        let even: Vec<u64> = (1..=10).collect();
        let stats = BenchStats::from_times(&even).unwrap();
        assert_eq!(stats.median_ns, 5); // (5 + 6) / 2
        assert_eq!(stats.mean_ns, 5);
    }

    #[test]
    fn median_ignores_order_and_outliers() {
        let times = [900, 40, 50, 60, 45, 55, 52, 48, 51, 49];
        let stats = BenchStats::from_times(&times).unwrap();
        assert_eq!(stats.median_ns, 50); // (50 + 51) / 2 truncated
        assert!(stats.mean_ns > stats.median_ns);
    }

    #[test]
    fn too_few_rounds_rejected() {
        let times = [1, 2, 3];
        assert!(matches!(
            BenchStats::from_times(&times),
            Err(Error::TooFewRounds { rounds: 3, min: 10 })
        ));
    }

    #[test]
    fn ratio_compares_medians() {
        let a = BenchStats::from_times(&[100; 10]).unwrap();
        let b = BenchStats::from_times(&[105; 10]).unwrap();
        let report = BenchReport::compare(("parallel", a), ("cls-first", b), 3);
        assert!((report.ratio - 1.05).abs() < 1e-12);
        assert_eq!(report.reference, "parallel");
    }
}
