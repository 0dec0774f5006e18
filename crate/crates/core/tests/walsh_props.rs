//! Structural properties of the Walsh code book and the assignment registry.

use negotiated_core::walsh::{build_walsh, WalshMatrix, WalshRegistry};
use negotiated_core::Error;
use proptest::prelude::*;

/// Independent construction: the Sylvester Hadamard entry at (i, j) is
/// +1 exactly when popcount(i & j) is even.
fn popcount_bit(i: usize, j: usize) -> u8 {
    if (i & j).count_ones().is_multiple_of(2) {
        1
    } else {
        0
    }
}

fn hamming(a: &[u8], b: &[u8]) -> usize {
    a.iter().zip(b).filter(|(x, y)| x != y).count()
}

#[test]
fn doubling_construction_matches_popcount_formula() {
    for order in [1usize, 2, 4, 8, 16, 32, 64, 128] {
        let m = build_walsh(order);
        assert_eq!(m.order(), order);
        for i in 0..order {
            for j in 0..order {
                assert_eq!(m.row(i)[j], popcount_bit(i, j), "order {order} entry ({i},{j})");
            }
        }
    }
}

#[test]
fn constant_pairwise_distance_exhaustive_to_64() {
    for order in [2usize, 4, 8, 16, 32, 64] {
        let m = build_walsh(order);
        for i in 0..order {
            for j in (i + 1)..order {
                assert_eq!(
                    hamming(m.row(i), m.row(j)),
                    order / 2,
                    "order {order} rows {i},{j}"
                );
            }
        }
    }
}

#[test]
fn constant_pairwise_distance_sampled_above_64() {
    let mut rng = negotiated_core::rng::Rng::new(77);
    for order in [128usize, 256] {
        let m = build_walsh(order);
        for _ in 0..200 {
            let i = rng.below(order);
            let j = rng.below(order);
            if i == j {
                continue;
            }
            assert_eq!(hamming(m.row(i), m.row(j)), order / 2);
        }
    }
}

#[test]
fn rows_are_pairwise_distinct_and_row0_all_ones() {
    let m = build_walsh(32);
    assert!(m.row(0).iter().all(|&b| b == 1));
    for i in 0..32 {
        for j in (i + 1)..32 {
            assert_ne!(m.row(i), m.row(j));
        }
    }
}

fn assign_all(matrix: WalshMatrix, order_of_rows: &[usize]) -> WalshRegistry {
    let mut reg = WalshRegistry::new(matrix);
    for (class, &row) in order_of_rows.iter().enumerate() {
        reg.mark_assigned(class, row).unwrap();
    }
    reg
}

proptest! {
    #[test]
    fn registry_exhausts_after_order_assignments(order_pow in 1usize..5, seed in any::<u64>()) {
        let order = 1usize << order_pow;
        let mut rows: Vec<usize> = (0..order).collect();
        let mut rng = negotiated_core::rng::Rng::new(seed);
        rng.shuffle(&mut rows);

        let reg = assign_all(build_walsh(order), &rows);
        prop_assert_eq!(reg.remaining(), 0);
        prop_assert_eq!(reg.assignments().len(), order);

        // Assignment stays injective: every row appears exactly once.
        let mut seen: Vec<usize> = reg.assignments().values().copied().collect();
        seen.sort_unstable();
        prop_assert_eq!(seen, (0..order).collect::<Vec<_>>());

        // One more class cannot be represented.
        let mut reg = reg;
        for row in 0..order {
            let err = reg.mark_assigned(order, row).unwrap_err();
            let is_row_taken = matches!(err, Error::RowTaken { .. });
            prop_assert!(is_row_taken);
        }
    }

    #[test]
    fn partial_assignment_bookkeeping(order_pow in 2usize..5, take in 1usize..12, seed in any::<u64>()) {
        let order = 1usize << order_pow;
        let take = take.min(order);
        let mut rows: Vec<usize> = (0..order).collect();
        let mut rng = negotiated_core::rng::Rng::new(seed);
        rng.shuffle(&mut rows);

        let reg = assign_all(build_walsh(order), &rows[..take]);
        prop_assert_eq!(reg.remaining(), order - take);
        prop_assert_eq!(reg.assignments().len() + reg.remaining(), order);
        for (class, &row) in reg.assignments() {
            prop_assert!(!reg.is_available(row));
            prop_assert_eq!(reg.representation_of(*class).unwrap(), reg.matrix().row(row));
        }
    }
}
