//! Mode coverage of generated samples and per-operator selection counts.

use std::collections::BTreeMap;

use crate::autodiff::Tensor;
use crate::evolution::{GenerationRecord, Operator};

/// A sample is high quality within this many `sigma_mode` of a center.
pub const HIGH_QUALITY_SIGMAS: f64 = 3.0;
/// High-quality samples needed before a mode counts as covered.
pub const DEFAULT_MIN_COUNT: usize = 20;
/// Number of generated points behind each coverage report.
pub const DEFAULT_EVAL_SAMPLES: usize = 10_000;

#[derive(Clone, Debug, PartialEq)]
pub struct CoverageReport {
    pub modes_covered: usize,
    /// High-quality samples assigned to each center.
    pub per_mode_counts: Vec<usize>,
    pub high_quality_ratio: f64,
    pub samples: usize,
}

/// Coverage with the standard `3 * sigma_mode` quality radius.
pub fn mode_coverage(samples: &Tensor, centers: &Tensor, sigma_mode: f64, min_count: usize) -> CoverageReport {
    mode_coverage_within(samples, centers, HIGH_QUALITY_SIGMAS * sigma_mode, min_count)
}

/// Assigns each sample to its nearest center (exhaustively) and counts it
/// as high quality when the Euclidean distance is at most `radius`.
pub fn mode_coverage_within(samples: &Tensor, centers: &Tensor, radius: f64, min_count: usize) -> CoverageReport {
    let modes = centers.rows();
    let mut counts = vec![0usize; modes];
    let r2 = radius * radius;
    for i in 0..samples.rows() {
        let p = samples.row(i);
        let mut best = (f64::INFINITY, 0usize);
        for k in 0..modes {
            let d2: f64 = centers.row(k).iter().zip(p).map(|(c, x)| (c - x) * (c - x)).sum();
            if d2 < best.0 {
                best = (d2, k);
            }
        }
        if best.0 <= r2 {
            counts[best.1] += 1;
        }
    }
    let hq: usize = counts.iter().sum();
    CoverageReport {
        modes_covered: counts.iter().filter(|&&c| c >= min_count).count(),
        high_quality_ratio: if samples.rows() == 0 { 0.0 } else { hq as f64 / samples.rows() as f64 },
        per_mode_counts: counts,
        samples: samples.rows(),
    }
}

/// Selection counts of one window of generations.
#[derive(Clone, Debug, PartialEq)]
pub struct SelectionWindow {
    /// First and last generation (inclusive) in the window.
    pub first: u64,
    pub last: u64,
    pub counts: BTreeMap<Operator, usize>,
}

#[derive(Clone, Debug, PartialEq, Default)]
pub struct SelectionStats {
    pub windows: Vec<SelectionWindow>,
    pub totals: BTreeMap<Operator, usize>,
}

impl SelectionStats {
    pub fn total(&self) -> usize {
        self.totals.values().sum()
    }

    pub fn share(&self, op: Operator) -> f64 {
        let total = self.total();
        if total == 0 {
            0.0
        } else {
            self.totals.get(&op).copied().unwrap_or(0) as f64 / total as f64
        }
    }
}

/// Counts, per window of `window` generations, the operators that produced
/// each selected parent.
pub fn operator_selection_stats(records: &[GenerationRecord], window: usize) -> SelectionStats {
    let window = window.max(1);
    let mut stats = SelectionStats::default();
    for chunk in records.chunks(window) {
        let mut counts = BTreeMap::new();
        for rec in chunk {
            for lineage in rec.selected_lineages() {
                *counts.entry(lineage.op).or_insert(0) += 1;
                *stats.totals.entry(lineage.op).or_insert(0) += 1;
            }
        }
        stats.windows.push(SelectionWindow {
            first: chunk[0].generation,
            last: chunk[chunk.len() - 1].generation,
            counts,
        });
    }
    stats
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::data::{Dataset, DatasetSpec};
    use crate::evolution::{Lineage, PhaseTiming};
    use crate::objectives::MutationKind;
    use proptest::prelude::*;

    fn ring() -> Dataset {
        Dataset::from_spec(&DatasetSpec::ring8()).unwrap()
    }

    #[test]
    fn samples_on_centers_cover_everything() {
        let ds = ring();
        let rows: Vec<f64> = (0..8 * 20).flat_map(|i| ds.center(i % 8).to_vec()).collect();
        let r = mode_coverage(&Tensor::matrix(160, 2, rows), &ds.centers(), ds.sigma(), 20);
        assert_eq!(r.modes_covered, 8);
        assert_eq!(r.high_quality_ratio, 1.0);
    }

    #[test]
    fn far_samples_cover_nothing() {
        let ds = ring();
        // The origin is 2.0 away from every ring center; 10 sigma is 0.2.
        let far = Tensor::matrix(50, 2, vec![0.0; 100]);
        let r = mode_coverage(&far, &ds.centers(), ds.sigma(), 1);
        assert_eq!((r.modes_covered, r.high_quality_ratio), (0, 0.0));
    }

    #[test]
    fn hand_placed_twelve_points() {
        let ds = ring();
        let s = ds.sigma();
        let c = |k: usize, dx: f64, dy: f64| {
            let p = ds.center(k);
            [p[0] + dx, p[1] + dy]
        };
        let pts = [
            c(0, 0.0, 0.0),
            c(0, 2.0 * s, 0.0),
            c(0, 0.0, -2.9 * s),
            c(0, 3.5 * s, 0.0), // outside
            c(2, 0.0, 0.0),
            c(2, s, s),
            c(2, 2.5 * s, 2.5 * s), // 3.54 sigma: outside
            c(5, 0.0, 0.0),
            c(5, -s, 0.0),
            c(7, 0.0, 0.0),
            [0.0, 0.0],  // nowhere
            [10.0, 0.0], // nearest mode 0, far outside
        ];
        let samples = Tensor::matrix(12, 2, pts.iter().flatten().copied().collect());
        let r = mode_coverage(&samples, &ds.centers(), s, 2);
        assert_eq!(r.per_mode_counts, vec![3, 0, 2, 0, 0, 2, 0, 1]);
        assert_eq!(r.modes_covered, 3);
        assert!((r.high_quality_ratio - 8.0 / 12.0).abs() < 1e-15);
        let r1 = mode_coverage(&samples, &ds.centers(), s, 1);
        assert_eq!(r1.modes_covered, 4);
        let single = mode_coverage(&samples.slice_rows(0, 1), &ds.centers(), s, 1);
        assert_eq!(single.high_quality_ratio, 1.0);
    }

    fn record(generation: u64, ops: &[Operator]) -> GenerationRecord {
        GenerationRecord {
            generation,
            d_loss: 0.0,
            offspring: ops.iter().map(|&op| (Lineage { op, parents: (0, None) }, 0.0)).collect(),
            pairs: vec![],
            selected: (0..ops.len()).collect(),
            timing: PhaseTiming::default(),
        }
    }

    #[test]
    fn selection_counts_alternate() {
        let h = Operator::Mutation(MutationKind::Heuristic);
        let x = Operator::Crossover;
        let recs: Vec<_> = (1..=6).map(|g| record(g, &[if g % 2 == 0 { x } else { h }])).collect();
        let stats = operator_selection_stats(&recs, 2);
        assert_eq!(stats.windows.len(), 3);
        for w in &stats.windows {
            assert_eq!(w.counts.get(&h), Some(&1));
            assert_eq!(w.counts.get(&x), Some(&1));
        }
        assert_eq!(stats.total(), 6);
        assert_eq!(stats.share(h), 0.5);

        let all_h: Vec<_> = (1..=4).map(|g| record(g, &[h])).collect();
        assert_eq!(operator_selection_stats(&all_h, 10).share(h), 1.0);
    }

    proptest! {
        #[test]
        fn coverage_is_permutation_invariant_and_monotone(
            pts in proptest::collection::vec((-3.0f64..3.0, -3.0f64..3.0), 1..60),
            shift in 0usize..60,
        ) {
            let ds = ring();
            let flat: Vec<f64> = pts.iter().flat_map(|&(a, b)| [a, b]).collect();
            let n = pts.len();
            let samples = Tensor::matrix(n, 2, flat.clone());
            let k = shift % n;
            let rotated: Vec<f64> = flat[2 * k..].iter().chain(&flat[..2 * k]).copied().collect();
            let centers = ds.centers();
            let rev_centers = Tensor::matrix(8, 2, (0..8).rev().flat_map(|i| ds.center(i).to_vec()).collect());

            let base = mode_coverage_within(&samples, &centers, 0.8, 1);
            let rot = mode_coverage_within(&Tensor::matrix(n, 2, rotated), &centers, 0.8, 1);
            let rev = mode_coverage_within(&samples, &rev_centers, 0.8, 1);
            prop_assert_eq!(base.modes_covered, rot.modes_covered);
            prop_assert_eq!(base.high_quality_ratio, rot.high_quality_ratio);
            prop_assert_eq!(base.modes_covered, rev.modes_covered);
            prop_assert_eq!(base.high_quality_ratio, rev.high_quality_ratio);

            let tight = mode_coverage_within(&samples, &centers, 0.4, 1);
            prop_assert!(tight.high_quality_ratio <= base.high_quality_ratio);
        }
    }
}
