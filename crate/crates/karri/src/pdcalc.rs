//! Pickup-to-dropoff distances.
//!
//! Every insertion needs the vehicle-graph distance from its pickup to its
//! dropoff at some point, so the full pickup x dropoff matrix is computed
//! once per request. The trick making that cheap is an upper bound shared
//! by all pairs: going pickup -> origin -> destination -> dropoff is always
//! an option, so
//!
//!   d(p, d)  <=  max_p d(p, o)  +  d(o, dest)  +  max_d d(dest, d)
//!
//! and searches on both sides can be cut off at that radius. Dropoffs
//! deposit transient bucket entries from their reverse search spaces,
//! pickups scan them with batched forward searches, and every pair comes
//! out exact because its shortest path's meeting vertex lies within the
//! radius from both ends. When the bound degenerates to infinity (some leg
//! disconnected) the matrix falls back to plain per-pair queries.

use crate::buckets::{BucketEntry, BucketStore, Order};
use crate::ch::ContractionHierarchy;
use crate::graph::{dijkstra_until, BatchDijkstra, MeetingPoint, RoadNetwork, Settle};
use crate::units::{inf_add, Time, Vertex, INF};

/// Exact pickup x dropoff distance matrix for one request.
#[derive(Debug)]
pub struct PdDistanceTable {
    dist: Vec<Time>,
    num_dropoffs: usize,
    /// Smallest entry of the matrix; the cheapest any insertion's
    /// pickup-to-dropoff leg can be.
    pub delta_pd_min: Time,
    pub scanned: u64,
    pub relaxed: u64,
}

impl PdDistanceTable {
    pub fn get(&self, pickup: usize, dropoff: usize) -> Time {
        self.dist[pickup * self.num_dropoffs + dropoff]
    }
}

/// Per-request scratch for the dropoff-side transient buckets.
pub struct PdCalc {
    store: BucketStore,
}

impl PdCalc {
    pub fn new(n: usize, sorted: bool) -> PdCalc {
        PdCalc { store: BucketStore::new(n, Order::KeyAscending, sorted) }
    }

    /// The shared upper bound on all pairs, from two bounded searches and
    /// one point-to-point query. INF disables the radius cutoff.
    pub fn max_bound(
        net: &RoadNetwork,
        ch: &ContractionHierarchy,
        origin: Vertex,
        dest: Vertex,
        pickups: &[MeetingPoint],
        dropoffs: &[MeetingPoint],
    ) -> Time {
        let pv: Vec<Vertex> = pickups.iter().map(|p| p.vertex).collect();
        let to_origin = dijkstra_until(&net.veh_in, origin, &pv);
        let max_p = pv.iter().map(|&v| to_origin[v as usize]).max().unwrap_or(0);
        let dv: Vec<Vertex> = dropoffs.iter().map(|d| d.vertex).collect();
        let from_dest = dijkstra_until(&net.veh_out, dest, &dv);
        let max_d = dv.iter().map(|&v| from_dest[v as usize]).max().unwrap_or(0);
        inf_add(inf_add(max_p, ch.query(origin, dest)), max_d)
    }

    /// Computes the full matrix. `delta_max` must dominate every pair, so
    /// the table is exact everywhere; `k` bounds the batched lanes.
    pub fn table(
        &mut self,
        ch: &ContractionHierarchy,
        pickups: &[MeetingPoint],
        dropoffs: &[MeetingPoint],
        delta_max: Time,
        k: usize,
    ) -> PdDistanceTable {
        let mut dist = vec![INF; pickups.len() * dropoffs.len()];
        let mut scanned: u64 = 0;
        let mut relaxed: u64 = 0;

        if delta_max >= INF {
            for (pi, p) in pickups.iter().enumerate() {
                for (di, d) in dropoffs.iter().enumerate() {
                    dist[pi * dropoffs.len() + di] = ch.query(p.vertex, d.vertex);
                }
            }
        } else {
            self.store.clear_all();
            for (di, d) in dropoffs.iter().enumerate() {
                for e in ch.reverse_search_space_within(d.vertex, delta_max) {
                    self.store.insert(e.vertex, BucketEntry { id: di as u64, dist: e.dist, key: e.dist });
                }
            }
            let n = ch.num_vertices();
            let cols = dropoffs.len();
            for chunk_start in (0..pickups.len()).step_by(k) {
                let chunk = &pickups[chunk_start..pickups.len().min(chunk_start + k)];
                let mut dj = BatchDijkstra::new(n, k);
                for (lane, p) in chunk.iter().enumerate() {
                    dj.seed(p.vertex, lane, 0);
                }
                let store = &self.store;
                dj.run(&ch.up_out, |v, labels| {
                    let min_label = labels.iter().copied().min().unwrap();
                    if min_label > delta_max {
                        return Settle::Stop;
                    }
                    scanned += store.scan(
                        v,
                        |e| e.key > delta_max - min_label,
                        |e| {
                            for (lane, &l) in labels.iter().enumerate() {
                                if l >= INF {
                                    continue;
                                }
                                let cand = l + e.dist;
                                if cand > delta_max {
                                    continue;
                                }
                                let cell = &mut dist[(chunk_start + lane) * cols + e.id as usize];
                                *cell = (*cell).min(cand);
                            }
                        },
                    );
                    Settle::Continue
                });
                relaxed += dj.relaxed;
            }
            self.store.clear_all();
        }

        let delta_pd_min = dist.iter().copied().filter(|&d| d < INF).min().unwrap_or(INF);
        PdDistanceTable { dist, num_dropoffs: dropoffs.len(), delta_pd_min, scanned, relaxed }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{dijkstra, Csr};

    fn pts(vs: &[Vertex]) -> Vec<MeetingPoint> {
        vs.iter().map(|&v| MeetingPoint { vertex: v, walk: 0 }).collect()
    }

    /// 5x5 grid with asymmetric weights so forward and reverse differ.
    fn grid() -> Csr {
        let mut edges = Vec::new();
        let id = |x: u32, y: u32| (y * 5 + x) as Vertex;
        for y in 0..5 {
            for x in 0..5 {
                if x + 1 < 5 {
                    edges.push((id(x, y), id(x + 1, y), 10 + y));
                    edges.push((id(x + 1, y), id(x, y), 12));
                }
                if y + 1 < 5 {
                    edges.push((id(x, y), id(x, y + 1), 10 + x));
                    edges.push((id(x, y + 1), id(x, y), 12));
                }
            }
        }
        Csr::from_edges(25, &edges)
    }

    fn net(g: &Csr) -> RoadNetwork {
        RoadNetwork::new(25, &g.edge_list(), &g.edge_list())
    }

    #[test]
    fn bound_dominates_every_pair() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let n = net(&g);
        let pickups = pts(&[0, 1, 5, 6]);
        let dropoffs = pts(&[24, 23, 19]);
        let bound = PdCalc::max_bound(&n, &ch, 0, 24, &pickups, &dropoffs);
        for p in &pickups {
            let from_p = dijkstra(&g, p.vertex);
            for d in &dropoffs {
                assert!(from_p[d.vertex as usize] <= bound);
            }
        }
    }

    #[test]
    fn single_points_collapse_to_the_direct_distance() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let n = net(&g);
        let bound = PdCalc::max_bound(&n, &ch, 3, 21, &pts(&[3]), &pts(&[21]));
        assert_eq!(bound, dijkstra(&g, 3)[21]);
    }

    #[test]
    fn table_matches_pairwise_queries() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let n = net(&g);
        let pickups = pts(&[0, 1, 5, 6, 12]);
        let dropoffs = pts(&[24, 23, 19, 12]);
        let bound = PdCalc::max_bound(&n, &ch, 0, 24, &pickups, &dropoffs);
        let mut calc = PdCalc::new(25, true);
        let table = calc.table(&ch, &pickups, &dropoffs, bound, 4);
        let mut min = INF;
        for (pi, p) in pickups.iter().enumerate() {
            let from_p = dijkstra(&g, p.vertex);
            for (di, d) in dropoffs.iter().enumerate() {
                assert_eq!(table.get(pi, di), from_p[d.vertex as usize]);
                min = min.min(from_p[d.vertex as usize]);
            }
        }
        assert_eq!(table.delta_pd_min, min);
        // pickup 12 against dropoff 12
        assert_eq!(table.get(4, 3), 0);
    }

    #[test]
    fn batch_widths_agree() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let n = net(&g);
        let pickups = pts(&[0, 1, 2, 5, 6, 7, 10, 11, 12]);
        let dropoffs = pts(&[24, 23, 22, 19]);
        let bound = PdCalc::max_bound(&n, &ch, 0, 24, &pickups, &dropoffs);
        let mut a = PdCalc::new(25, true);
        let ta = a.table(&ch, &pickups, &dropoffs, bound, 1);
        let mut b = PdCalc::new(25, true);
        let tb = b.table(&ch, &pickups, &dropoffs, bound, 8);
        for pi in 0..pickups.len() {
            for di in 0..dropoffs.len() {
                assert_eq!(ta.get(pi, di), tb.get(pi, di));
            }
        }
    }

    #[test]
    fn disconnection_falls_back_to_plain_queries() {
        // two components: 0-1-2 and 3-4
        let edges = [(0, 1, 5), (1, 0, 5), (1, 2, 5), (2, 1, 5), (3, 4, 7), (4, 3, 7)];
        let g = Csr::from_edges(5, &edges);
        let ch = ContractionHierarchy::build(&g);
        let n = RoadNetwork::new(5, &edges, &edges);
        let pickups = pts(&[0, 3]);
        let dropoffs = pts(&[2, 4]);
        let bound = PdCalc::max_bound(&n, &ch, 0, 2, &pickups, &dropoffs);
        assert!(bound >= INF);
        let mut calc = PdCalc::new(5, true);
        let table = calc.table(&ch, &pickups, &dropoffs, bound, 2);
        assert_eq!(table.get(0, 0), 10);
        assert_eq!(table.get(0, 1), INF);
        assert_eq!(table.get(1, 0), INF);
        assert_eq!(table.get(1, 1), 7);
        assert_eq!(table.delta_pd_min, 7);
    }

    #[test]
    fn reused_scratch_keeps_tables_independent() {
        let g = grid();
        let ch = ContractionHierarchy::build(&g);
        let n = net(&g);
        let mut calc = PdCalc::new(25, true);
        let p1 = pts(&[0]);
        let d1 = pts(&[24]);
        let b1 = PdCalc::max_bound(&n, &ch, 0, 24, &p1, &d1);
        let t1 = calc.table(&ch, &p1, &d1, b1, 4);
        let p2 = pts(&[4]);
        let d2 = pts(&[20]);
        let b2 = PdCalc::max_bound(&n, &ch, 4, 20, &p2, &d2);
        let t2 = calc.table(&ch, &p2, &d2, b2, 4);
        assert_eq!(t1.get(0, 0), dijkstra(&g, 0)[24]);
        assert_eq!(t2.get(0, 0), dijkstra(&g, 4)[20]);
    }
}
