//! Elliptic bucket entries and the batched stop/point distance queries.
//!
//! For every route leg (s_a, s_{a+1}) the hierarchy's search spaces are
//! materialized as bucket entries: source entries of s_a carry the upward
//! distance from the stop, target entries of s_{a+1} the downward distance
//! to it. A detour via a meeting point is only worth considering when both
//! of its halves fit within the leg's leeway, the time between leaving s_a
//! and the latest permissible arrival at s_{a+1}; a sub-leg longer than that
//! already breaks a deadline downstream. Entries are therefore pruned to
//! distances within the leeway, and buckets are kept sorted by remaining
//! leeway (leeway minus entry distance) so a scan can halt as soon as the
//! search radius exceeds every remaining entry's slack.
//!
//! A query runs one batched search per direction over the meeting points of
//! one trip end: a reverse search scanning source buckets recovers exact
//! stop-to-point distances, a forward search scanning target buckets the
//! point-to-stop distances. Pairs whose detour cannot fit any leg are
//! allowed to be missing from (or overestimated in) the tables; they can
//! never belong to a feasible insertion.

use std::collections::{BTreeMap, HashMap};

use crate::buckets::{BucketEntry, BucketStore, Order};
use crate::ch::ContractionHierarchy;
use crate::fleet::{StopUid, Vehicle, VehicleId};
use crate::graph::{BatchDijkstra, MeetingPoint, Settle};
use crate::units::{Time, Vertex, INF};

/// Stops are identified across the fleet by vehicle and stop uid.
pub fn stop_key(veh: VehicleId, uid: StopUid) -> u64 {
    (veh as u64) << 32 | uid as u64
}

pub fn split_stop_key(key: u64) -> (VehicleId, StopUid) {
    ((key >> 32) as VehicleId, key as StopUid)
}

/// Distance tables of one query side, keyed by (stop key, point index).
#[derive(Debug, Default)]
pub struct EllipticTables {
    pub stop_to_point: BTreeMap<(u64, u32), Time>,
    pub point_to_stop: BTreeMap<(u64, u32), Time>,
    pub scanned: u64,
    pub relaxed: u64,
}

pub struct EllipticBuckets {
    source: BucketStore,
    target: BucketStore,
    /// Vertices holding (source, target) entries per stop key, for removal.
    placed: HashMap<u64, (Vec<Vertex>, Vec<Vertex>)>,
    by_veh: HashMap<VehicleId, Vec<u64>>,
    /// Multiset of all stored remaining leeways; the maximum bounds how far
    /// a query frontier can still produce feasible candidates.
    rems: BTreeMap<Time, u32>,
    /// Leeway-based generation capping and scan stopping.
    radius_pruning: bool,
    pub generated: u64,
}

impl EllipticBuckets {
    pub fn new(n: usize, sorted: bool, radius_pruning: bool) -> EllipticBuckets {
        EllipticBuckets {
            source: BucketStore::new(n, Order::KeyDescending, sorted),
            target: BucketStore::new(n, Order::KeyDescending, sorted),
            placed: HashMap::new(),
            by_veh: HashMap::new(),
            rems: BTreeMap::new(),
            radius_pruning,
            generated: 0,
        }
    }

    pub fn source_store(&self) -> &BucketStore {
        &self.source
    }

    pub fn target_store(&self) -> &BucketStore {
        &self.target
    }

    fn note_rem(&mut self, rem: Time) {
        *self.rems.entry(rem).or_insert(0) += 1;
    }

    fn forget_rem(&mut self, rem: Time) {
        match self.rems.get_mut(&rem) {
            Some(c) if *c > 1 => *c -= 1,
            Some(_) => {
                self.rems.remove(&rem);
            }
            None => unreachable!("remaining-leeway multiset out of sync"),
        }
    }

    fn max_rem(&self) -> Option<Time> {
        self.rems.keys().next_back().copied()
    }

    /// Drops every entry belonging to the vehicle.
    pub fn remove_vehicle(&mut self, veh: VehicleId) {
        for key in self.by_veh.remove(&veh).unwrap_or_default() {
            let (src, tgt) = self.placed.remove(&key).unwrap();
            for v in src {
                let e = self.source.remove(v, key).unwrap();
                self.forget_rem(e.key);
            }
            for v in tgt {
                let e = self.target.remove(v, key).unwrap();
                self.forget_rem(e.key);
            }
        }
    }

    /// Regenerates all entries of one vehicle from its current schedule.
    /// Returns the number of entries created.
    pub fn rebuild_vehicle(&mut self, ch: &ContractionHierarchy, veh: &Vehicle) -> u64 {
        self.remove_vehicle(veh.id);
        let mut count = 0;
        for a in 0..veh.stops.len() {
            count += self.generate_stop_entries(ch, veh, a);
        }
        self.generated += count;
        count
    }

    /// Creates the entries of stop `a`: source entries for the leg it
    /// leaves on, target entries for the leg arriving at it. The last stop
    /// gets no source entries and the anchor no target entries.
    pub fn generate_stop_entries(&mut self, ch: &ContractionHierarchy, veh: &Vehicle, a: usize) -> u64 {
        let stop = &veh.stops[a];
        let key = stop_key(veh.id, stop.uid);
        let mut src_at = Vec::new();
        let mut tgt_at = Vec::new();

        if a < veh.last_idx() {
            let lambda = veh.elliptic_leeway(a);
            let cap = if self.radius_pruning { lambda } else { INF };
            for e in ch.forward_search_space_within(stop.loc, cap) {
                let rem = if lambda >= INF { INF } else { lambda - e.dist };
                self.source.insert(e.vertex, BucketEntry { id: key, dist: e.dist, key: rem });
                self.note_rem(rem);
                src_at.push(e.vertex);
            }
        }
        if a > 0 {
            let lambda = veh.elliptic_leeway(a - 1);
            let cap = if self.radius_pruning { lambda } else { INF };
            for e in ch.reverse_search_space_within(stop.loc, cap) {
                let rem = if lambda >= INF { INF } else { lambda - e.dist };
                self.target.insert(e.vertex, BucketEntry { id: key, dist: e.dist, key: rem });
                self.note_rem(rem);
                tgt_at.push(e.vertex);
            }
        }

        let n = (src_at.len() + tgt_at.len()) as u64;
        if !src_at.is_empty() || !tgt_at.is_empty() {
            self.placed.insert(key, (src_at, tgt_at));
            self.by_veh.entry(veh.id).or_default().push(key);
        }
        n
    }

    /// Runs both batched searches for one set of meeting points (one trip
    /// end): stop-to-point distances via the source buckets, point-to-stop
    /// via the target buckets. `k` bounds the lanes per search; more points
    /// run in chunks. Each lane applies the leeway test on its own label,
    /// so the resulting tables do not depend on `k`.
    pub fn query(&self, ch: &ContractionHierarchy, points: &[MeetingPoint], k: usize) -> EllipticTables {
        let mut tables = EllipticTables::default();
        let n = ch.num_vertices();
        let max_rem = self.max_rem();
        for chunk_start in (0..points.len()).step_by(k) {
            let chunk = &points[chunk_start..points.len().min(chunk_start + k)];

            // reverse search: labels are distances vertex -> point
            let mut dj = BatchDijkstra::new(n, k);
            for (lane, p) in chunk.iter().enumerate() {
                dj.seed(p.vertex, lane, 0);
            }
            let (source, pruning) = (&self.source, self.radius_pruning);
            dj.run(&ch.down_in, |v, labels| {
                let min_label = labels.iter().copied().min().unwrap();
                if pruning && max_rem.map_or(true, |r| min_label > r) {
                    return Settle::Stop;
                }
                tables.scanned += source.scan(
                    v,
                    |e| pruning && e.key < min_label,
                    |e| {
                        for (lane, &l) in labels.iter().enumerate() {
                            if l >= INF || (pruning && e.key < l) {
                                continue;
                            }
                            let cand = e.dist + l;
                            let cell = (e.id, (chunk_start + lane) as u32);
                            let best = tables.stop_to_point.entry(cell).or_insert(INF);
                            *best = (*best).min(cand);
                        }
                    },
                );
                Settle::Continue
            });
            tables.relaxed += dj.relaxed;

            // forward search: labels are distances point -> vertex
            let mut dj = BatchDijkstra::new(n, k);
            for (lane, p) in chunk.iter().enumerate() {
                dj.seed(p.vertex, lane, 0);
            }
            let target = &self.target;
            dj.run(&ch.up_out, |v, labels| {
                let min_label = labels.iter().copied().min().unwrap();
                if pruning && max_rem.map_or(true, |r| min_label > r) {
                    return Settle::Stop;
                }
                tables.scanned += target.scan(
                    v,
                    |e| pruning && e.key < min_label,
                    |e| {
                        for (lane, &l) in labels.iter().enumerate() {
                            if l >= INF || (pruning && e.key < l) {
                                continue;
                            }
                            let cand = l + e.dist;
                            let cell = (e.id, (chunk_start + lane) as u32);
                            let best = tables.point_to_stop.entry(cell).or_insert(INF);
                            *best = (*best).min(cand);
                        }
                    },
                );
                Settle::Continue
            });
            tables.relaxed += dj.relaxed;
        }
        tables
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::fleet::{InsType, InsertionPoint, LegDists, RequestInfo};
    use crate::graph::{dijkstra, Csr};

    /// 4x4 torus-free grid, unit weights 10, bidirected.
    fn grid() -> Csr {
        let mut edges = Vec::new();
        let id = |x: u32, y: u32| (y * 4 + x) as Vertex;
        for y in 0..4 {
            for x in 0..4 {
                if x + 1 < 4 {
                    edges.push((id(x, y), id(x + 1, y), 10));
                    edges.push((id(x + 1, y), id(x, y), 10));
                }
                if y + 1 < 4 {
                    edges.push((id(x, y), id(x, y + 1), 10));
                    edges.push((id(x, y + 1), id(x, y), 10));
                }
            }
        }
        Csr::from_edges(16, &edges)
    }

    /// Vehicle with a route 0 -> 15 (one leg) and the given rider slack.
    fn vehicle_with_leg(slack: Time) -> Vehicle {
        let mut v = Vehicle::new(0, 0, 0, 1_000_000, 4);
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::Pals,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 0, walk: 0 },
            dropoff: MeetingPoint { vertex: 15, walk: 0 },
            dists: LegDists { to_pickup: 0, pickup_to_dropoff: 60, ..LegDists::default() },
        };
        v.apply_insertion(
            &RequestInfo { id: 0, t_req: 0, trip_deadline: 60 + slack },
            &ins,
            1_000_000,
        );
        v
    }

    #[test]
    fn entries_respect_the_leeway_cap() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let veh = vehicle_with_leg(0); // leeway = leg length 60
        let mut b = EllipticBuckets::new(16, true, true);
        b.rebuild_vehicle(&ch, &veh);
        // every source entry's distance fits the leeway, and the entry set
        // equals the full forward space filtered by it
        let full = ch.forward_search_space(0);
        let lambda = veh.elliptic_leeway(0);
        let expect: Vec<_> = full.iter().filter(|e| e.dist <= lambda).collect();
        let mut got = 0;
        for v in 0..16 {
            for e in b.source_store().entries(v) {
                assert!(e.dist <= lambda);
                assert_eq!(e.key, lambda - e.dist);
                got += 1;
            }
        }
        assert_eq!(got, expect.len());
    }

    #[test]
    fn zero_leeway_keeps_only_the_seed() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        // a trip with deadline equal to the direct distance: zero slack,
        // pickup merged on the idle stop so the leg is tight
        let mut veh = Vehicle::new(0, 5, 0, 1_000_000, 4);
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::Pals,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 5, walk: 0 },
            dropoff: MeetingPoint { vertex: 6, walk: 0 },
            dists: LegDists { to_pickup: 0, pickup_to_dropoff: 10, ..LegDists::default() },
        };
        veh.apply_insertion(&RequestInfo { id: 0, t_req: 0, trip_deadline: 10 }, &ins, 1_000_000);
        assert_eq!(veh.elliptic_leeway(0), 10);
        let mut b = EllipticBuckets::new(16, true, true);
        b.rebuild_vehicle(&ch, &veh);
        let mut src_total = 0;
        for v in 0..16 {
            src_total += b.source_store().entries(v).len();
        }
        // space within 10 of vertex 5: itself plus up-neighbors one hop out
        assert!(src_total >= 1);
        for v in 0..16 {
            for e in b.source_store().entries(v) {
                assert!(e.dist <= 10);
            }
        }
    }

    #[test]
    fn query_recovers_exact_distances_for_feasible_pairs() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let veh = vehicle_with_leg(40);
        let mut b = EllipticBuckets::new(16, true, true);
        b.rebuild_vehicle(&ch, &veh);
        let lambda = veh.elliptic_leeway(0);
        let points: Vec<MeetingPoint> = (0..16).map(|v| MeetingPoint { vertex: v, walk: 0 }).collect();
        let tables = b.query(&ch, &points, 4);
        let from_stop = dijkstra(&g, 0);
        let to_stop: Vec<Time> = {
            let t = g.transpose();
            dijkstra(&t, 15)
        };
        let s0 = stop_key(0, veh.stops[0].uid);
        let s1 = stop_key(0, veh.stops[1].uid);
        for p in 0..16u32 {
            let d_out = from_stop[p as usize];
            let d_in = to_stop[p as usize];
            if d_out <= lambda {
                assert_eq!(tables.stop_to_point.get(&(s0, p)).copied(), Some(d_out));
            }
            if d_in <= lambda {
                assert_eq!(tables.point_to_stop.get(&(s1, p)).copied(), Some(d_in));
            }
            // anything reported is a true distance or an overestimate of an
            // infeasible pair
            if let Some(&d) = tables.stop_to_point.get(&(s0, p)) {
                assert!(d >= d_out);
                if d_out <= lambda {
                    assert_eq!(d, d_out);
                }
            }
        }
    }

    #[test]
    fn unpruned_mode_reports_every_distance() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let veh = vehicle_with_leg(0);
        let mut b = EllipticBuckets::new(16, true, false);
        b.rebuild_vehicle(&ch, &veh);
        let points: Vec<MeetingPoint> = (0..16).map(|v| MeetingPoint { vertex: v, walk: 0 }).collect();
        let tables = b.query(&ch, &points, 8);
        let from_stop = dijkstra(&g, 0);
        let s0 = stop_key(0, veh.stops[0].uid);
        for p in 0..16u32 {
            assert_eq!(tables.stop_to_point.get(&(s0, p)).copied(), Some(from_stop[p as usize]));
        }
    }

    #[test]
    fn sorted_scans_do_not_lose_candidates() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let veh = vehicle_with_leg(20);
        let points: Vec<MeetingPoint> = (0..16).map(|v| MeetingPoint { vertex: v, walk: 0 }).collect();

        let mut sorted = EllipticBuckets::new(16, true, true);
        sorted.rebuild_vehicle(&ch, &veh);
        let ts = sorted.query(&ch, &points, 4);

        let mut unsorted = EllipticBuckets::new(16, false, true);
        unsorted.rebuild_vehicle(&ch, &veh);
        let tu = unsorted.query(&ch, &points, 4);

        let lambda = veh.elliptic_leeway(0);
        let s0 = stop_key(0, veh.stops[0].uid);
        let from_stop = dijkstra(&g, 0);
        for p in 0..16u32 {
            if from_stop[p as usize] <= lambda {
                assert_eq!(ts.stop_to_point.get(&(s0, p)), tu.stop_to_point.get(&(s0, p)));
            }
        }
        assert!(ts.scanned <= tu.scanned);
    }

    #[test]
    fn removal_keeps_the_leeway_multiset_in_sync() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let veh = vehicle_with_leg(40);
        let mut b = EllipticBuckets::new(16, true, true);
        b.rebuild_vehicle(&ch, &veh);
        assert!(b.max_rem().is_some());
        b.remove_vehicle(0);
        assert!(b.max_rem().is_none());
        for v in 0..16 {
            assert!(b.source_store().entries(v).is_empty());
            assert!(b.target_store().entries(v).is_empty());
        }
    }
}
