mod common;

use lpsgd::paramstore::ParamStore;
use proptest::prelude::*;

#[test]
fn stress_suite_64_threads() {
    for run in 0..5 {
        common::paramstore_suite(64).unwrap_or_else(|e| panic!("run {run}: {e}"));
    }
}

#[test]
fn stress_suite_small_thread_counts() {
    for threads in [2, 3, 8] {
        common::paramstore_suite(threads).unwrap_or_else(|e| panic!("{threads} threads: {e}"));
    }
}

#[test]
fn two_threads_ten_thousand_increments() {
    let store = ParamStore::new(&[5.0, 0.0]);
    std::thread::scope(|s| {
        for _ in 0..2 {
            s.spawn(|| {
                for _ in 0..10_000 {
                    store.sub_assign(0..1, &[-1.0], 1).unwrap();
                }
            });
        }
    });
    assert_eq!(store.to_vec(), vec![20_005.0, 0.0]);
}

#[test]
fn block_subtraction_worked_example() {
    let store = ParamStore::new(&[1.0, 2.0, 3.0, 4.0]);
    store.sub_assign(1..3, &[-10.0, -20.0], 1).unwrap();
    assert_eq!(store.to_vec(), vec![1.0, 12.0, 23.0, 4.0]);
    assert_eq!(store.collect_snapshot(0).values, vec![1.0, 12.0, 23.0, 4.0]);
}

#[test]
fn degenerate_store() {
    let store = ParamStore::new(&[]);
    assert!(store.collect_snapshot(3).is_empty());
    assert_eq!(store.read_and_inc(), 0);
    assert_eq!(store.read_and_inc(), 1);
    assert!(store.add_assign(&[1.0], 1).is_err());
}

proptest! {
    #[test]
    fn sequential_writes_fold(
        init in prop::collection::vec(-1e3f64..1e3, 1..12),
        ops in prop::collection::vec((0usize..12, 0usize..12, -10f64..10.0), 0..20),
    ) {
        let d = init.len();
        let store = ParamStore::with_provenance(&init);
        let mut expect = init.clone();
        for (k, &(a, b, v)) in ops.iter().enumerate() {
            let (lo, hi) = (a.min(b) % d, (a.max(b) % d) + 1);
            let (lo, hi) = (lo.min(hi - 1), hi.max(lo + 1));
            let delta = vec![v; hi - lo];
            store.sub_assign(lo..hi, &delta, k as u64 + 1).unwrap();
            for e in &mut expect[lo..hi] {
                *e -= v;
            }
        }
        prop_assert_eq!(store.to_vec(), expect);
    }

    #[test]
    fn zero_deltas_are_identity(init in prop::collection::vec(-1e6f64..1e6, 0..16)) {
        let store = ParamStore::new(&init);
        store.add_assign(&vec![0.0; init.len()], 1).unwrap();
        if !init.is_empty() {
            store.sub_assign(0..init.len(), &vec![0.0; init.len()], 2).unwrap();
        }
        prop_assert_eq!(store.to_vec(), init);
    }

    #[test]
    fn out_of_bounds_is_rejected(d in 1usize..10, extra in 1usize..5) {
        let store = ParamStore::new(&vec![0.0; d]);
        prop_assert!(store.sub_assign(0..d + extra, &vec![1.0; d + extra], 1).is_err());
        prop_assert!(store.sub_assign(0..d, &vec![1.0; d + extra], 1).is_err());
    }
}
