//! Road network storage and the batched Dijkstra engine every search in the
//! dispatcher is built on.
//!
//! The network keeps two directed edge sets over one shared vertex set: the
//! vehicle graph and the passenger (walking) graph, each with its transpose
//! for reverse searches. The Dijkstra engine carries `k` distance labels per
//! vertex so that `k` point-to-many searches share one priority queue; every
//! edge relaxation updates all `k` labels and a vertex re-enters the queue
//! whenever any lane improves.

use std::cmp::Reverse;
use std::collections::BinaryHeap;

use crate::units::{Time, Vertex, INF};

/// Compressed sparse row adjacency. Edge order within a vertex follows the
/// input edge order, which keeps searches deterministic.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Csr {
    offsets: Vec<u32>,
    heads: Vec<Vertex>,
    weights: Vec<u32>,
}

impl Csr {
    pub fn from_edges(n: usize, edges: &[(Vertex, Vertex, u32)]) -> Csr {
        let mut order: Vec<usize> = (0..edges.len()).collect();
        order.sort_by_key(|&i| edges[i].0);
        let mut offsets = vec![0u32; n + 1];
        for &(t, _, _) in edges {
            offsets[t as usize + 1] += 1;
        }
        for i in 0..n {
            offsets[i + 1] += offsets[i];
        }
        let mut heads = Vec::with_capacity(edges.len());
        let mut weights = Vec::with_capacity(edges.len());
        for &i in &order {
            heads.push(edges[i].1);
            weights.push(edges[i].2);
        }
        Csr { offsets, heads, weights }
    }

    pub fn num_vertices(&self) -> usize {
        self.offsets.len() - 1
    }

    pub fn num_edges(&self) -> usize {
        self.heads.len()
    }

    #[inline]
    pub fn neighbors(&self, v: Vertex) -> impl Iterator<Item = (Vertex, u32)> + '_ {
        let lo = self.offsets[v as usize] as usize;
        let hi = self.offsets[v as usize + 1] as usize;
        self.heads[lo..hi].iter().copied().zip(self.weights[lo..hi].iter().copied())
    }

    pub fn transpose(&self) -> Csr {
        let n = self.num_vertices();
        let mut edges = Vec::with_capacity(self.num_edges());
        for v in 0..n as Vertex {
            for (h, w) in self.neighbors(v) {
                edges.push((h, v, w));
            }
        }
        Csr::from_edges(n, &edges)
    }

    pub fn edge_list(&self) -> Vec<(Vertex, Vertex, u32)> {
        let mut out = Vec::with_capacity(self.num_edges());
        for v in 0..self.num_vertices() as Vertex {
            for (h, w) in self.neighbors(v) {
                out.push((v, h, w));
            }
        }
        out
    }
}

/// Shared-vertex road network with vehicle and passenger modes.
#[derive(Debug, Clone)]
pub struct RoadNetwork {
    n: usize,
    pub veh_out: Csr,
    pub veh_in: Csr,
    pub psg_out: Csr,
    pub psg_in: Csr,
    veh_eligible: Vec<bool>,
    psg_eligible: Vec<bool>,
}

impl RoadNetwork {
    /// Builds the network from per-mode edge lists. A vertex is eligible for
    /// a mode iff it is incident to at least one edge of that mode.
    pub fn new(n: usize, veh_edges: &[(Vertex, Vertex, u32)], psg_edges: &[(Vertex, Vertex, u32)]) -> RoadNetwork {
        let mark = |edges: &[(Vertex, Vertex, u32)]| {
            let mut f = vec![false; n];
            for &(t, h, _) in edges {
                f[t as usize] = true;
                f[h as usize] = true;
            }
            f
        };
        let veh_out = Csr::from_edges(n, veh_edges);
        let psg_out = Csr::from_edges(n, psg_edges);
        RoadNetwork {
            n,
            veh_in: veh_out.transpose(),
            psg_in: psg_out.transpose(),
            veh_eligible: mark(veh_edges),
            psg_eligible: mark(psg_edges),
            veh_out,
            psg_out,
        }
    }

    pub fn num_vertices(&self) -> usize {
        self.n
    }

    #[inline]
    pub fn veh_eligible(&self, v: Vertex) -> bool {
        self.veh_eligible[v as usize]
    }

    #[inline]
    pub fn psg_eligible(&self, v: Vertex) -> bool {
        self.psg_eligible[v as usize]
    }
}

/// What to do after a vertex has been settled.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Settle {
    Continue,
    /// Record the vertex but do not relax its outgoing edges.
    SkipRelax,
    /// Terminate the whole search.
    Stop,
}

/// Batched Dijkstra state, reusable across runs. Labels are cleared sparsely
/// through the touched-vertex list, so repeated small searches on a large
/// graph stay cheap.
pub struct BatchDijkstra {
    k: usize,
    dist: Vec<Time>,
    touched: Vec<Vertex>,
    heap: BinaryHeap<Reverse<(Time, Vertex)>>,
    /// Edges relaxed during the last run.
    pub relaxed: u64,
}

impl BatchDijkstra {
    pub fn new(n: usize, k: usize) -> BatchDijkstra {
        assert!(k >= 1);
        BatchDijkstra {
            k,
            dist: vec![INF; n * k],
            touched: Vec::new(),
            heap: BinaryHeap::new(),
            relaxed: 0,
        }
    }

    pub fn k(&self) -> usize {
        self.k
    }

    /// Clears the previous run's labels and queue.
    pub fn reset(&mut self) {
        for &v in &self.touched {
            let base = v as usize * self.k;
            self.dist[base..base + self.k].fill(INF);
        }
        self.touched.clear();
        self.heap.clear();
        self.relaxed = 0;
    }

    /// Adds a root with an initial label in one lane.
    pub fn seed(&mut self, v: Vertex, lane: usize, offset: Time) {
        assert!(lane < self.k);
        let base = v as usize * self.k;
        if self.dist[base..base + self.k].iter().all(|&d| d >= INF) {
            self.touched.push(v);
        }
        if offset < self.dist[base + lane] {
            self.dist[base + lane] = offset;
            let key = self.dist[base..base + self.k].iter().copied().min().unwrap();
            self.heap.push(Reverse((key, v)));
        }
    }

    #[inline]
    pub fn labels(&self, v: Vertex) -> &[Time] {
        let base = v as usize * self.k;
        &self.dist[base..base + self.k]
    }

    pub fn touched(&self) -> &[Vertex] {
        &self.touched
    }

    /// Runs to quiescence. `on_settle` sees each vertex when it leaves the
    /// queue; pop keys are nondecreasing, and a vertex can be settled again
    /// if one of its non-minimal lanes improves later.
    pub fn run(&mut self, graph: &Csr, mut on_settle: impl FnMut(Vertex, &[Time]) -> Settle) {
        while let Some(Reverse((key, v))) = self.heap.pop() {
            let base = v as usize * self.k;
            let cur = self.dist[base..base + self.k].iter().copied().min().unwrap();
            if key > cur {
                continue;
            }
            let labels = &self.dist[base..base + self.k];
            match on_settle(v, labels) {
                Settle::Continue => {}
                Settle::SkipRelax => continue,
                Settle::Stop => return,
            }
            for (head, w) in graph.neighbors(v) {
                self.relaxed += 1;
                let hbase = head as usize * self.k;
                let mut improved = false;
                let mut fresh = true;
                for lane in 0..self.k {
                    let old = self.dist[hbase + lane];
                    if old < INF {
                        fresh = false;
                    }
                    let cand = self.dist[base + lane].saturating_add(w as Time).min(INF);
                    if cand < old {
                        self.dist[hbase + lane] = cand;
                        improved = true;
                    }
                }
                if improved {
                    if fresh {
                        self.touched.push(head);
                    }
                    let key = self.dist[hbase..hbase + self.k].iter().copied().min().unwrap();
                    self.heap.push(Reverse((key, head)));
                }
            }
        }
    }
}

/// Single-source shortest distances, plain and allocation-per-call; the
/// brute-force oracles and small utilities use this.
pub fn dijkstra(graph: &Csr, source: Vertex) -> Vec<Time> {
    let mut d = BatchDijkstra::new(graph.num_vertices(), 1);
    d.seed(source, 0, 0);
    d.run(graph, |_, _| Settle::Continue);
    (0..graph.num_vertices()).map(|v| d.labels(v as Vertex)[0]).collect()
}

/// Like `dijkstra` but stops once every target has been settled; distances of
/// unsettled vertices are left at INF, targets out of reach included.
pub fn dijkstra_until(graph: &Csr, source: Vertex, targets: &[Vertex]) -> Vec<Time> {
    let mut remaining: std::collections::HashSet<Vertex> = targets.iter().copied().collect();
    let mut d = BatchDijkstra::new(graph.num_vertices(), 1);
    d.seed(source, 0, 0);
    let mut out = vec![INF; graph.num_vertices()];
    d.run(graph, |v, labels| {
        out[v as usize] = labels[0];
        remaining.remove(&v);
        if remaining.is_empty() {
            Settle::Stop
        } else {
            Settle::Continue
        }
    });
    out
}

/// Which end of the trip a meeting point serves.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Side {
    /// Walk from the origin to the meeting point: forward passenger search.
    Pickup,
    /// Walk from the meeting point to the destination: reverse search.
    Dropoff,
}

/// A vertex reachable on foot within the walking radius, with its walking
/// time.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct MeetingPoint {
    pub vertex: Vertex,
    pub walk: Time,
}

/// All vehicle-eligible vertices within walking radius `rho` of `v`,
/// including `v` itself at distance 0 when it is vehicle-eligible. Sorted by
/// walking time, ties by vertex id.
pub fn find_meeting_points(net: &RoadNetwork, v: Vertex, rho: Time, side: Side) -> Vec<MeetingPoint> {
    let graph = match side {
        Side::Pickup => &net.psg_out,
        Side::Dropoff => &net.psg_in,
    };
    let mut search = BatchDijkstra::new(net.num_vertices(), 1);
    search.seed(v, 0, 0);
    let mut found = Vec::new();
    search.run(graph, |u, labels| {
        if labels[0] > rho {
            return Settle::Stop;
        }
        if net.veh_eligible(u) && net.psg_eligible(u) {
            found.push(MeetingPoint { vertex: u, walk: labels[0] });
        }
        Settle::Continue
    });
    if found.iter().all(|m| m.vertex != v) && net.veh_eligible(v) && net.psg_eligible(v) {
        found.push(MeetingPoint { vertex: v, walk: 0 });
    }
    found.sort_by_key(|m| (m.walk, m.vertex));
    found
}

#[cfg(test)]
mod tests {
    use super::*;

    fn diamond() -> Csr {
        // 0 -> 1 (2), 0 -> 2 (5), 1 -> 2 (1), 2 -> 3 (4), 1 -> 3 (9)
        Csr::from_edges(4, &[(0, 1, 2), (0, 2, 5), (1, 2, 1), (2, 3, 4), (1, 3, 9)])
    }

    #[test]
    fn plain_distances() {
        let g = diamond();
        let d = dijkstra(&g, 0);
        assert_eq!(d, vec![0, 2, 3, 7]);
        assert_eq!(dijkstra(&g, 3), vec![INF, INF, INF, 0]);
    }

    #[test]
    fn transpose_reverses_reachability() {
        let g = diamond();
        let t = g.transpose();
        let d = dijkstra(&t, 3);
        assert_eq!(d, vec![7, 5, 4, 0]);
        // transposing twice restores the original edge multiset
        let mut a = g.edge_list();
        let mut b = t.transpose().edge_list();
        a.sort();
        b.sort();
        assert_eq!(a, b);
    }

    #[test]
    fn batched_lanes_match_individual_runs() {
        let g = diamond();
        let mut batched = BatchDijkstra::new(4, 4);
        for (lane, src) in [0u32, 1, 2, 3].iter().enumerate() {
            batched.seed(*src, lane, 0);
        }
        batched.run(&g, |_, _| Settle::Continue);
        for (lane, src) in [0u32, 1, 2, 3].iter().enumerate() {
            let single = dijkstra(&g, *src);
            for v in 0..4u32 {
                assert_eq!(batched.labels(v)[lane], single[v as usize], "lane {lane} vertex {v}");
            }
        }
    }

    #[test]
    fn unused_lanes_stay_infinite() {
        let g = diamond();
        let mut batched = BatchDijkstra::new(4, 4);
        batched.seed(0, 0, 0);
        batched.run(&g, |_, _| Settle::Continue);
        for v in 0..4u32 {
            assert!(batched.labels(v)[1..].iter().all(|&d| d == INF));
        }
    }

    #[test]
    fn offsets_shift_distances() {
        let g = diamond();
        let mut s = BatchDijkstra::new(4, 1);
        s.seed(0, 0, 10);
        s.run(&g, |_, _| Settle::Continue);
        assert_eq!(s.labels(3)[0], 17);
    }

    #[test]
    fn first_settle_keys_are_nondecreasing() {
        // lane improvements may re-settle a vertex at an older key, but the
        // first settle of each vertex happens in key order
        let g = diamond();
        let mut s = BatchDijkstra::new(4, 2);
        s.seed(0, 0, 0);
        s.seed(3, 1, 1);
        let mut last = 0;
        let mut seen = std::collections::HashSet::new();
        s.run(&g, |v, labels| {
            if seen.insert(v) {
                let key = labels.iter().copied().min().unwrap();
                assert!(key >= last);
                last = key;
            }
            Settle::Continue
        });
    }

    fn toy_net() -> RoadNetwork {
        // Vehicle ring 0->1->2->3->0 (time 10 each); walking edges both ways
        // 0-1 (3), 1-2 (4), 2-4 (2). Vertex 4 is walk-only.
        let veh = [(0, 1, 10), (1, 2, 10), (2, 3, 10), (3, 0, 10)].map(|(a, b, w)| (a as Vertex, b as Vertex, w));
        let psg = [
            (0, 1, 3),
            (1, 0, 3),
            (1, 2, 4),
            (2, 1, 4),
            (2, 4, 2),
            (4, 2, 2),
        ]
        .map(|(a, b, w)| (a as Vertex, b as Vertex, w));
        RoadNetwork::new(5, &veh, &psg)
    }

    #[test]
    fn eligibility_from_incidence() {
        let net = toy_net();
        assert!(net.veh_eligible(0) && net.veh_eligible(3));
        assert!(!net.veh_eligible(4));
        assert!(net.psg_eligible(4));
        assert!(!net.psg_eligible(3));
    }

    #[test]
    fn meeting_points_respect_radius_and_eligibility() {
        let net = toy_net();
        let p = find_meeting_points(&net, 0, 3, Side::Pickup);
        assert_eq!(
            p,
            vec![MeetingPoint { vertex: 0, walk: 0 }, MeetingPoint { vertex: 1, walk: 3 }]
        );
        let p = find_meeting_points(&net, 0, 7, Side::Pickup);
        assert_eq!(p.len(), 3);
        assert_eq!(p[2], MeetingPoint { vertex: 2, walk: 7 });
    }

    #[test]
    fn zero_radius_keeps_only_the_vertex_itself() {
        let net = toy_net();
        let p = find_meeting_points(&net, 1, 0, Side::Pickup);
        assert_eq!(p, vec![MeetingPoint { vertex: 1, walk: 0 }]);
        // vertex 4 is not vehicle-eligible: empty set
        let p = find_meeting_points(&net, 4, 0, Side::Pickup);
        assert!(p.is_empty());
    }

    #[test]
    fn dropoff_side_walks_towards_the_destination() {
        let net = toy_net();
        // walking to 4: from 2 takes 2
        let p = find_meeting_points(&net, 4, 2, Side::Dropoff);
        assert_eq!(p, vec![MeetingPoint { vertex: 2, walk: 2 }]);
    }
}
