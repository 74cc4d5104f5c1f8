mod common;

use cfacar::inference::{bfdr, centroid_select, threshold_for_bfdr};
use common::oracles::bfdr_by_hand;
use nalgebra::DMatrix;
use proptest::prelude::*;

fn posterior() -> impl Strategy<Value = DMatrix<f64>> {
    (1usize..6, 1usize..6).prop_flat_map(|(r, c)| {
        prop::collection::vec(prop_oneof![Just(0.0), Just(1.0), 0.0f64..=1.0], r * c)
            .prop_map(move |v| DMatrix::from_vec(r, c, v))
    })
}

proptest! {
    #![proptest_config(ProptestConfig::with_cases(512))]

    #[test]
    fn raising_the_threshold_never_adds_cells(post in posterior(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let wide = centroid_select(&post, lo);
        let narrow = centroid_select(&post, hi);
        for (w, n) in wide.iter().zip(narrow.iter()) {
            prop_assert!(!n || *w);
        }
    }

    #[test]
    fn bfdr_does_not_increase_with_threshold(post in posterior(), a in 0.0f64..=1.0, b in 0.0f64..=1.0) {
        let (lo, hi) = if a < b { (a, b) } else { (b, a) };
        let f_lo = bfdr(&post, &centroid_select(&post, lo));
        let f_hi = bfdr(&post, &centroid_select(&post, hi));
        prop_assert!(f_hi <= f_lo + 1e-12);
        prop_assert!((f_lo - bfdr_by_hand(post.as_slice(), lo)).abs() < 1e-12);
    }

    #[test]
    fn chosen_threshold_is_the_smallest_admissible_one(post in posterior(), level in 0.001f64..=1.0) {
        let choice = threshold_for_bfdr(&post, level).unwrap();
        let mut cands: Vec<f64> = post.iter().copied().chain([0.0]).collect();
        cands.sort_by(f64::total_cmp);
        cands.dedup();
        let first_ok = cands
            .iter()
            .copied()
            .find(|&t| post.iter().any(|&p| p > t) && bfdr_by_hand(post.as_slice(), t) <= level);
        match first_ok {
            Some(t) => {
                prop_assert!(choice.feasible);
                prop_assert_eq!(choice.threshold, t);
                prop_assert!(choice.bfdr <= level + 1e-12);
                prop_assert_eq!(choice.n_selected, post.iter().filter(|&&p| p > t).count());
            }
            None => {
                prop_assert!(!choice.feasible);
                prop_assert_eq!(choice.n_selected, 0);
                prop_assert_eq!(choice.threshold, 1.0);
            }
        }
    }
}

#[test]
fn enumerated_cases() {
    let bad = common::oracles::bfdr_enumerated_failures();
    assert!(bad.is_empty(), "{bad:?}");
}

#[test]
fn threshold_grid_keeps_selections_nested() {
    assert_eq!(common::oracles::bfdr_monotonicity_violations(300, 8), 0);
}
