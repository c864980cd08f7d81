//! Per-vertex bucket stores for the many-to-many searches.
//!
//! A bucket holds entries `(id, dist, key)` where `id` names a stop or a
//! vehicle, `dist` is the CH distance the entry represents and `key` is the
//! sort key (remaining leeway for elliptic buckets, the distance itself for
//! last-stop buckets). With sorting enabled a scan halts at the first entry
//! whose stop predicate fires, before visiting it; without sorting every
//! entry is examined and the predicate only filters. Both modes hand the
//! same surviving entries to the visitor, sorting merely changes how many
//! entries are examined, which the returned scan counter measures.
//!
//! Transient stores (pickup-dropoff and current-location buckets, rebuilt
//! per request) are cleared in constant time by bumping an epoch stamp.

use crate::units::{Time, Vertex};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BucketEntry {
    pub id: u64,
    pub dist: Time,
    pub key: Time,
}

/// Sort direction applied to `key`; ties break by `id` ascending.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Order {
    KeyAscending,
    KeyDescending,
}

impl Order {
    #[inline]
    fn rank(self, e: &BucketEntry) -> (Time, u64) {
        match self {
            Order::KeyAscending => (e.key, e.id),
            Order::KeyDescending => (-e.key, e.id),
        }
    }
}

#[derive(Debug, Clone)]
pub struct BucketStore {
    buckets: Vec<Vec<BucketEntry>>,
    stamps: Vec<u32>,
    epoch: u32,
    order: Order,
    sorted: bool,
}

impl BucketStore {
    pub fn new(n: usize, order: Order, sorted: bool) -> BucketStore {
        BucketStore {
            buckets: vec![Vec::new(); n],
            stamps: vec![0; n],
            epoch: 0,
            order,
            sorted,
        }
    }

    pub fn sorted(&self) -> bool {
        self.sorted
    }

    /// Invalidates every bucket in O(1); used by the transient stores.
    pub fn clear_all(&mut self) {
        self.epoch += 1;
    }

    fn bucket_mut(&mut self, v: Vertex) -> &mut Vec<BucketEntry> {
        let i = v as usize;
        if self.stamps[i] != self.epoch {
            self.stamps[i] = self.epoch;
            self.buckets[i].clear();
        }
        &mut self.buckets[i]
    }

    pub fn entries(&self, v: Vertex) -> &[BucketEntry] {
        let i = v as usize;
        if self.stamps[i] != self.epoch {
            return &[];
        }
        &self.buckets[i]
    }

    /// Inserts an entry, replacing any previous entry with the same id at
    /// this vertex.
    pub fn insert(&mut self, v: Vertex, entry: BucketEntry) {
        let order = self.order;
        let sorted = self.sorted;
        let bucket = self.bucket_mut(v);
        if let Some(pos) = bucket.iter().position(|e| e.id == entry.id) {
            bucket.remove(pos);
        }
        if sorted {
            let at = bucket.partition_point(|e| order.rank(e) < order.rank(&entry));
            bucket.insert(at, entry);
        } else {
            bucket.push(entry);
        }
    }

    /// Removes the entry of `id` at `v`, returning it if one existed.
    pub fn remove(&mut self, v: Vertex, id: u64) -> Option<BucketEntry> {
        let bucket = self.bucket_mut(v);
        let pos = bucket.iter().position(|e| e.id == id)?;
        Some(bucket.remove(pos))
    }

    /// Scans the bucket at `v`. `stop` is evaluated before the visitor; in
    /// sorted mode a firing predicate halts the scan without visiting the
    /// triggering entry, in unsorted mode it merely skips that entry. The
    /// return value counts examined entries.
    pub fn scan(
        &self,
        v: Vertex,
        mut stop: impl FnMut(&BucketEntry) -> bool,
        mut visit: impl FnMut(&BucketEntry),
    ) -> u64 {
        let mut scanned = 0;
        for e in self.entries(v) {
            scanned += 1;
            if stop(e) {
                if self.sorted {
                    break;
                }
                continue;
            }
            visit(e);
        }
        scanned
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn e(id: u64, dist: Time, key: Time) -> BucketEntry {
        BucketEntry { id, dist, key }
    }

    #[test]
    fn ascending_scan_stops_before_visiting_the_trigger() {
        let mut s = BucketStore::new(2, Order::KeyAscending, true);
        s.insert(0, e(1, 5, 5));
        s.insert(0, e(2, 3, 3));
        let mut seen = Vec::new();
        let scanned = s.scan(0, |entry| entry.key > 4, |entry| seen.push(entry.id));
        assert_eq!(seen, vec![2]);
        assert_eq!(scanned, 2);
    }

    #[test]
    fn replace_on_same_id() {
        let mut s = BucketStore::new(1, Order::KeyAscending, true);
        s.insert(0, e(7, 10, 10));
        s.insert(0, e(7, 4, 4));
        assert_eq!(s.entries(0), &[e(7, 4, 4)]);
    }

    #[test]
    fn descending_order_ties_break_by_id() {
        let mut s = BucketStore::new(1, Order::KeyDescending, true);
        s.insert(0, e(3, 1, 8));
        s.insert(0, e(1, 2, 9));
        s.insert(0, e(2, 3, 8));
        let keys: Vec<(u64, Time)> = s.entries(0).iter().map(|x| (x.id, x.key)).collect();
        assert_eq!(keys, vec![(1, 9), (2, 8), (3, 8)]);
    }

    #[test]
    fn unsorted_mode_visits_the_same_surviving_set() {
        let entries = [e(1, 5, 5), e(2, 3, 3), e(3, 9, 9), e(4, 1, 1)];
        let mut sorted = BucketStore::new(1, Order::KeyAscending, true);
        let mut unsorted = BucketStore::new(1, Order::KeyAscending, false);
        for x in entries {
            sorted.insert(0, x);
            unsorted.insert(0, x);
        }
        let collect = |s: &BucketStore| {
            let mut ids = Vec::new();
            let scanned = s.scan(0, |x| x.key > 4, |x| ids.push(x.id));
            ids.sort();
            (ids, scanned)
        };
        let (ids_sorted, scanned_sorted) = collect(&sorted);
        let (ids_unsorted, scanned_unsorted) = collect(&unsorted);
        assert_eq!(ids_sorted, ids_unsorted);
        assert!(scanned_sorted <= scanned_unsorted);
        assert_eq!(scanned_unsorted, 4);
    }

    #[test]
    fn clear_all_is_constant_time_invalidation() {
        let mut s = BucketStore::new(3, Order::KeyAscending, true);
        s.insert(2, e(1, 1, 1));
        s.clear_all();
        assert!(s.entries(2).is_empty());
        s.insert(2, e(2, 2, 2));
        assert_eq!(s.entries(2).len(), 1);
    }

    #[test]
    fn remove_reports_presence() {
        let mut s = BucketStore::new(1, Order::KeyAscending, true);
        s.insert(0, e(1, 1, 1));
        assert!(s.remove(0, 1).is_some());
        assert!(s.remove(0, 1).is_none());
        assert!(s.entries(0).is_empty());
    }
}
