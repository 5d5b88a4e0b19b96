//! Shared, lock-free parameter storage.
//!
//! A [`ParamStore`] holds one worker's model vector together with its shared
//! iteration counter and an update-order counter. Every element is an
//! independent 64-bit atomic; there is no lock over the vector, so readers can
//! observe a mix of old and new elements while writers are active.
//!
//! Indices are 0-based and ranges half-open (`2..4` covers the third and
//! fourth parameter).

use std::ops::Range;
use std::sync::atomic::{AtomicU64, Ordering};

use crate::error::{Error, Result};

/// `f64` stored as its bit pattern in an [`AtomicU64`].
///
/// Read-modify-write is a compare-and-swap loop on the bits, so concurrent
/// additions at the same element are never lost.
#[derive(Debug, Default)]
#[repr(transparent)]
pub struct AtomicF64(AtomicU64);

impl AtomicF64 {
    pub fn new(value: f64) -> Self {
        AtomicF64(AtomicU64::new(value.to_bits()))
    }

    #[inline]
    pub fn load(&self, order: Ordering) -> f64 {
        f64::from_bits(self.0.load(order))
    }

    #[inline]
    pub fn store(&self, value: f64, order: Ordering) {
        self.0.store(value.to_bits(), order)
    }

    /// Atomically adds `delta`, returning the previous value.
    #[inline]
    pub fn fetch_add(&self, delta: f64, order: Ordering) -> f64 {
        let mut current = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(current) + delta).to_bits();
            match self
                .0
                .compare_exchange_weak(current, next, order, Ordering::Relaxed)
            {
                Ok(prev) => return f64::from_bits(prev),
                Err(actual) => current = actual,
            }
        }
    }

    /// Atomically subtracts `delta`, returning the previous value.
    #[inline]
    pub fn fetch_sub(&self, delta: f64, order: Ordering) -> f64 {
        let mut current = self.0.load(Ordering::Relaxed);
        loop {
            let next = (f64::from_bits(current) - delta).to_bits();
            match self
                .0
                .compare_exchange_weak(current, next, order, Ordering::Relaxed)
            {
                Ok(prev) => return f64::from_bits(prev),
                Err(actual) => current = actual,
            }
        }
    }
}

/// Element-wise atomic copy of a [`ParamStore`], tagged with its snapshot order.
#[derive(Debug, Clone, PartialEq)]
pub struct Snapshot {
    pub values: Vec<f64>,
    pub order: u64,
}

impl Snapshot {
    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }
}

/// Update order of the write that last touched a sampled element, as seen by
/// a snapshot.
#[derive(Debug, Clone, Copy, PartialEq, Eq, serde::Serialize, serde::Deserialize)]
pub struct Provenance {
    pub index: usize,
    pub update_order: u64,
}

/// One worker's shared model.
#[derive(Debug)]
pub struct ParamStore {
    values: Box<[AtomicF64]>,
    counter: AtomicU64,
    update_order: AtomicU64,
    // Largest update order that has written each element; present only when
    // provenance tracking is enabled.
    shadow: Option<Box<[AtomicU64]>>,
}

impl ParamStore {
    pub fn new(init: &[f64]) -> Self {
        ParamStore {
            values: init.iter().map(|&v| AtomicF64::new(v)).collect(),
            counter: AtomicU64::new(0),
            update_order: AtomicU64::new(0),
            shadow: None,
        }
    }

    /// Like [`ParamStore::new`], but every write also stamps its update order
    /// into a per-element shadow array.
    pub fn with_provenance(init: &[f64]) -> Self {
        let mut store = Self::new(init);
        store.shadow = Some(init.iter().map(|_| AtomicU64::new(0)).collect());
        store
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn tracks_provenance(&self) -> bool {
        self.shadow.is_some()
    }

    /// `read&inc` on the shared iteration counter: returns the value before
    /// the increment. No two callers ever receive the same value.
    #[inline]
    pub fn read_and_inc(&self) -> u64 {
        self.counter.fetch_add(1, Ordering::AcqRel)
    }

    /// Atomic read of the shared iteration counter.
    #[inline]
    pub fn read_counter(&self) -> u64 {
        self.counter.load(Ordering::Acquire)
    }

    /// Claims the next update order (starting at 1). Called once by every
    /// writer, updater or averager, immediately before it writes the model.
    #[inline]
    pub fn next_update_order(&self) -> u64 {
        self.update_order.fetch_add(1, Ordering::AcqRel) + 1
    }

    /// Number of update orders handed out so far.
    pub fn update_orders_issued(&self) -> u64 {
        self.update_order.load(Ordering::Acquire)
    }

    #[inline]
    pub fn get(&self, index: usize) -> f64 {
        self.values[index].load(Ordering::Acquire)
    }

    /// Lock-free snapshot: each element is read atomically, in ascending
    /// index order.
    pub fn collect_snapshot(&self, order: u64) -> Snapshot {
        let values = self
            .values
            .iter()
            .map(|v| v.load(Ordering::Acquire))
            .collect();
        Snapshot { values, order }
    }

    /// Snapshot that also reports the provenance of the elements listed in
    /// `sample` (which must be ascending). Returns an empty provenance list
    /// when tracking is disabled.
    ///
    /// For a sampled element the shadow stamp is read before the value, so
    /// the reported update order never exceeds that of the write actually
    /// observed.
    pub fn collect_snapshot_with_provenance(
        &self,
        order: u64,
        sample: &[usize],
    ) -> (Snapshot, Vec<Provenance>) {
        let Some(shadow) = &self.shadow else {
            return (self.collect_snapshot(order), Vec::new());
        };
        let mut values = Vec::with_capacity(self.values.len());
        let mut provenance = Vec::with_capacity(sample.len());
        let mut next = sample.iter().copied().peekable();
        for (index, value) in self.values.iter().enumerate() {
            if next.peek() == Some(&index) {
                next.next();
                let stamp = shadow[index].load(Ordering::Acquire);
                values.push(value.load(Ordering::Acquire));
                provenance.push(Provenance {
                    index,
                    update_order: stamp,
                });
            } else {
                values.push(value.load(Ordering::Acquire));
            }
        }
        (Snapshot { values, order }, provenance)
    }

    /// `values[range] -= delta`, one atomic read-modify-write per element.
    pub fn sub_assign(&self, range: Range<usize>, delta: &[f64], stamp: u64) -> Result<()> {
        self.check_range(&range)?;
        if delta.len() != range.len() {
            return Err(Error::Shape {
                expected: range.len(),
                got: delta.len(),
            });
        }
        let start = range.start;
        for (offset, (slot, &d)) in self.values[range].iter().zip(delta).enumerate() {
            slot.fetch_sub(d, Ordering::AcqRel);
            self.stamp(start + offset, stamp);
        }
        Ok(())
    }

    /// `values += delta` over the whole vector, one atomic read-modify-write
    /// per element.
    pub fn add_assign(&self, delta: &[f64], stamp: u64) -> Result<()> {
        if delta.len() != self.values.len() {
            return Err(Error::Shape {
                expected: self.values.len(),
                got: delta.len(),
            });
        }
        for (index, (slot, &d)) in self.values.iter().zip(delta).enumerate() {
            slot.fetch_add(d, Ordering::AcqRel);
            self.stamp(index, stamp);
        }
        Ok(())
    }

    /// Plain copy of the current values; equivalent to a snapshot without an
    /// order tag.
    pub fn to_vec(&self) -> Vec<f64> {
        self.collect_snapshot(0).values
    }

    #[inline]
    fn stamp(&self, index: usize, stamp: u64) {
        if let Some(shadow) = &self.shadow {
            shadow[index].fetch_max(stamp, Ordering::AcqRel);
        }
    }

    fn check_range(&self, range: &Range<usize>) -> Result<()> {
        if range.start > range.end || range.end > self.values.len() {
            return Err(Error::OutOfBounds {
                range: range.clone(),
                len: self.values.len(),
            });
        }
        Ok(())
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use std::collections::HashSet;
    use std::sync::Arc;
    use std::thread;

    #[test]
    fn fresh_counter_starts_at_zero() {
        let store = ParamStore::new(&[0.0; 3]);
        assert_eq!(store.read_and_inc(), 0);
        assert_eq!(store.read_and_inc(), 1);
        assert_eq!(store.read_counter(), 2);
    }

    #[test]
    fn concurrent_read_and_inc_is_a_permutation() {
        let store = Arc::new(ParamStore::new(&[]));
        let handles: Vec<_> = (0..64)
            .map(|_| {
                let store = Arc::clone(&store);
                thread::spawn(move || store.read_and_inc())
            })
            .collect();
        let got: HashSet<u64> = handles.into_iter().map(|h| h.join().unwrap()).collect();
        assert_eq!(got, (0..64).collect());
    }

    #[test]
    fn quiescent_snapshot_copies_values() {
        let store = ParamStore::new(&[1.0, 2.0, 3.0]);
        let snap = store.collect_snapshot(7);
        assert_eq!(snap.values, vec![1.0, 2.0, 3.0]);
        assert_eq!(snap.order, 7);
        assert!(ParamStore::new(&[]).collect_snapshot(0).is_empty());
    }

    #[test]
    fn block_subtraction_matches_worked_example() {
        // (1,2,3,4) minus (-10,-20) on the 2nd..3rd elements
        let store = ParamStore::new(&[1.0, 2.0, 3.0, 4.0]);
        store.sub_assign(1..3, &[-10.0, -20.0], 1).unwrap();
        assert_eq!(store.to_vec(), vec![1.0, 12.0, 23.0, 4.0]);
        store.sub_assign(0..4, &[0.0; 4], 2).unwrap();
        assert_eq!(store.to_vec(), vec![1.0, 12.0, 23.0, 4.0]);
    }

    #[test]
    fn out_of_bounds_and_shape_errors() {
        let store = ParamStore::new(&[0.0; 4]);
        assert!(matches!(
            store.sub_assign(3..5, &[1.0, 1.0], 1),
            Err(Error::OutOfBounds { .. })
        ));
        assert!(matches!(
            store.sub_assign(0..2, &[1.0], 1),
            Err(Error::Shape { .. })
        ));
        assert!(matches!(
            store.add_assign(&[1.0], 1),
            Err(Error::Shape { .. })
        ));
    }

    #[test]
    fn add_assign_full_vector() {
        let store = ParamStore::new(&[2.0, 4.0]);
        store.add_assign(&[-1.0, 1.0], 1).unwrap();
        assert_eq!(store.to_vec(), vec![1.0, 5.0]);
        store.add_assign(&[0.0, 0.0], 2).unwrap();
        assert_eq!(store.to_vec(), vec![1.0, 5.0]);
    }

    #[test]
    fn provenance_reports_latest_stamp() {
        let store = ParamStore::with_provenance(&[0.0; 4]);
        let u1 = store.next_update_order();
        store.sub_assign(0..2, &[1.0, 1.0], u1).unwrap();
        let u2 = store.next_update_order();
        store.add_assign(&[1.0; 4], u2).unwrap();
        let u3 = store.next_update_order();
        store.sub_assign(1..2, &[1.0], u3).unwrap();
        let (_, prov) = store.collect_snapshot_with_provenance(0, &[0, 1, 3]);
        let orders: Vec<u64> = prov.iter().map(|p| p.update_order).collect();
        assert_eq!(orders, vec![u2, u3, u2]);
        assert_eq!((u1, u2, u3), (1, 2, 3));
    }

    #[test]
    fn provenance_disabled_returns_nothing() {
        let store = ParamStore::new(&[0.0; 4]);
        let (snap, prov) = store.collect_snapshot_with_provenance(3, &[0, 1]);
        assert_eq!(snap.len(), 4);
        assert!(prov.is_empty());
    }
}
