// SPDX-License-Identifier: Apache-2.0

use proptest::prelude::*;
use sanet_core::metrics::{confusion, dice, doubled_overlap, jaccard};
use sanet_core::uncertainty::{binary_entropy, temporal_aggregate, ProbMap, TemporalWindow};
use sanet_core::{Grid, Mask};

fn mask_pair() -> impl Strategy<Value = (Mask, Mask)> {
    (1usize..12, 1usize..12).prop_flat_map(|(h, w)| {
        (
            proptest::collection::vec(0u8..=1, h * w),
            proptest::collection::vec(0u8..=1, h * w),
        )
            .prop_map(move |(a, b)| (Grid::from_vec(h, w, a).unwrap(), Grid::from_vec(h, w, b).unwrap()))
    })
}

proptest! {
    #[test]
    fn scores_are_ordered_and_bounded((pred, gt) in mask_pair()) {
        let c = confusion(&pred, &gt).unwrap();
        prop_assert_eq!(c.total() as usize, pred.len());
        let (d, j, o) = (dice(&c), jaccard(&c), doubled_overlap(&c));
        prop_assert!((0.0..=1.0).contains(&d));
        prop_assert!(j <= d + 1e-15);
        prop_assert!(o >= d - 1e-15);
        prop_assert!(o <= 2.0);
    }

    #[test]
    fn confusion_is_symmetric_under_swap((pred, gt) in mask_pair()) {
        let a = confusion(&pred, &gt).unwrap();
        let b = confusion(&gt, &pred).unwrap();
        prop_assert_eq!((a.tp, a.fp, a.fn_, a.tn), (b.tp, b.fn_, b.fp, b.tn));
        prop_assert_eq!(dice(&a), dice(&b));
    }

    #[test]
    fn entropy_is_symmetric_and_peaks_at_half(p in 0.0f64..=1.0) {
        let h = binary_entropy(p);
        prop_assert!((h - binary_entropy(1.0 - p)).abs() < 1e-12);
        prop_assert!(h <= binary_entropy(0.5));
        prop_assert!(h >= 0.0);
    }

    #[test]
    fn constant_window_aggregates_to_the_constant(
        p in 0.0f64..=1.0,
        n in 1usize..6,
        decay in 0.01f64..=1.0,
    ) {
        let entries = (0..n as u64).map(|i| (i, ProbMap::filled(2, 2, p).unwrap())).collect();
        let agg = temporal_aggregate(&TemporalWindow::from_entries(entries, decay).unwrap()).unwrap();
        prop_assert!(agg.grid().data().iter().all(|v| (v - p).abs() < 1e-12));
    }

    #[test]
    fn threshold_matches_half(p in 0.0f64..=1.0) {
        let m = ProbMap::filled(1, 1, p).unwrap().threshold();
        prop_assert_eq!(m.get(0, 0), u8::from(p >= 0.5));
    }
}
