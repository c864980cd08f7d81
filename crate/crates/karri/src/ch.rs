//! Contraction hierarchy over the vehicle graph.
//!
//! Vertices are contracted in priority order (lazy edge difference plus a
//! contracted-neighbours term, ties by vertex id). A witness search bounds
//! the work per potential shortcut with a hop limit and a settled-vertex
//! budget; when the budget runs out the shortcut is added conservatively,
//! which can only make the hierarchy larger, never wrong.
//!
//! Queries and bucket generation only ever traverse the upward graph from a
//! source or the downward graph towards a target, so the struct stores the
//! upward edges in forward orientation and the downward edges keyed by head.

use std::cmp::Reverse;
use std::collections::{BinaryHeap, HashMap};
use std::io::{self, Read, Write};
use std::path::Path;

use crate::graph::{BatchDijkstra, Csr, Settle};
use crate::units::{Time, Vertex, INF};

const WITNESS_HOP_LIMIT: u32 = 16;
const WITNESS_SETTLE_BUDGET: usize = 500;

#[derive(Debug, Clone)]
pub struct ContractionHierarchy {
    /// rank[v] = position of v in the contraction order.
    pub rank: Vec<u32>,
    /// Upward edges (rank increases along the edge), forward orientation.
    pub up_out: Csr,
    /// Downward edges (rank decreases along the edge), keyed by edge head so
    /// reverse searches can walk them backwards.
    pub down_in: Csr,
    graph_fingerprint: u64,
}

/// One settled vertex of a CH search space.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct SpaceEntry {
    pub vertex: Vertex,
    pub dist: Time,
}

impl ContractionHierarchy {
    /// Builds the hierarchy with the heuristic contraction order.
    pub fn build(graph: &Csr) -> ContractionHierarchy {
        Builder::new(graph).run(None)
    }

    /// Builds with an explicit contraction order; used by tests that need a
    /// fixed hierarchy shape.
    pub fn build_with_order(graph: &Csr, order: &[Vertex]) -> ContractionHierarchy {
        assert_eq!(order.len(), graph.num_vertices());
        Builder::new(graph).run(Some(order))
    }

    pub fn num_vertices(&self) -> usize {
        self.rank.len()
    }

    /// Upward search space of `s`: every vertex reachable over upward edges,
    /// with its upward distance, in settle order.
    pub fn forward_search_space(&self, s: Vertex) -> Vec<SpaceEntry> {
        self.space(&self.up_out, s, INF)
    }

    /// Downward search space towards `t`: every vertex that reaches `t` over
    /// downward edges, with that downward distance.
    pub fn reverse_search_space(&self, t: Vertex) -> Vec<SpaceEntry> {
        self.space(&self.down_in, t, INF)
    }

    /// Upward search space truncated at distance `cap`. Upward distances
    /// grow along upward paths, so truncation equals filtering the full
    /// space.
    pub fn forward_search_space_within(&self, s: Vertex, cap: Time) -> Vec<SpaceEntry> {
        self.space(&self.up_out, s, cap)
    }

    pub fn reverse_search_space_within(&self, t: Vertex, cap: Time) -> Vec<SpaceEntry> {
        self.space(&self.down_in, t, cap)
    }

    fn space(&self, graph: &Csr, root: Vertex, cap: Time) -> Vec<SpaceEntry> {
        let mut d = BatchDijkstra::new(self.num_vertices(), 1);
        d.seed(root, 0, 0);
        let mut out = Vec::new();
        d.run(graph, |v, labels| {
            if labels[0] > cap {
                return Settle::Stop;
            }
            out.push(SpaceEntry { vertex: v, dist: labels[0] });
            Settle::Continue
        });
        out
    }

    /// Exact shortest-path distance via the up-down meeting rule.
    pub fn query(&self, s: Vertex, t: Vertex) -> Time {
        let fwd = self.forward_search_space(s);
        let mut up: HashMap<Vertex, Time> = HashMap::with_capacity(fwd.len());
        for e in fwd {
            up.insert(e.vertex, e.dist);
        }
        let mut best = INF;
        let mut d = BatchDijkstra::new(self.num_vertices(), 1);
        d.seed(t, 0, 0);
        d.run(&self.down_in, |v, labels| {
            if labels[0] >= best {
                return Settle::Stop;
            }
            if let Some(&du) = up.get(&v) {
                best = best.min(du.saturating_add(labels[0]));
            }
            Settle::Continue
        });
        best.min(INF)
    }

    pub fn save(&self, path: &Path) -> io::Result<()> {
        let mut f = std::fs::File::create(path)?;
        let mut buf = Vec::new();
        buf.extend_from_slice(CACHE_MAGIC);
        put_u32(&mut buf, CACHE_VERSION);
        put_u64(&mut buf, self.graph_fingerprint);
        put_u32(&mut buf, self.rank.len() as u32);
        for &r in &self.rank {
            put_u32(&mut buf, r);
        }
        for csr in [&self.up_out, &self.down_in] {
            let edges = csr.edge_list();
            put_u32(&mut buf, edges.len() as u32);
            for (t, h, w) in edges {
                put_u32(&mut buf, t);
                put_u32(&mut buf, h);
                put_u32(&mut buf, w);
            }
        }
        f.write_all(&buf)
    }

    /// Loads a cached hierarchy; returns `None` when the header version or
    /// the fingerprint of `graph` does not match.
    pub fn load(path: &Path, graph: &Csr) -> io::Result<Option<ContractionHierarchy>> {
        let mut buf = Vec::new();
        std::fs::File::open(path)?.read_to_end(&mut buf)?;
        let mut pos = 0usize;
        let take = |pos: &mut usize, n: usize| -> io::Result<&[u8]> {
            if *pos + n > buf.len() {
                return Err(io::ErrorKind::UnexpectedEof.into());
            }
            let s = &buf[*pos..*pos + n];
            *pos += n;
            Ok(s)
        };
        if take(&mut pos, 4)? != CACHE_MAGIC {
            return Ok(None);
        }
        let version = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
        if version != CACHE_VERSION {
            return Ok(None);
        }
        let fp = u64::from_le_bytes(take(&mut pos, 8)?.try_into().unwrap());
        if fp != fingerprint(graph) {
            return Ok(None);
        }
        let n = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
        let mut rank = Vec::with_capacity(n);
        for _ in 0..n {
            rank.push(u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()));
        }
        let mut csrs = Vec::new();
        for _ in 0..2 {
            let m = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap()) as usize;
            let mut edges = Vec::with_capacity(m);
            for _ in 0..m {
                let t = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                let h = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                let w = u32::from_le_bytes(take(&mut pos, 4)?.try_into().unwrap());
                edges.push((t, h, w));
            }
            csrs.push(Csr::from_edges(n, &edges));
        }
        let down_in = csrs.pop().unwrap();
        let up_out = csrs.pop().unwrap();
        Ok(Some(ContractionHierarchy { rank, up_out, down_in, graph_fingerprint: fp }))
    }
}

const CACHE_MAGIC: &[u8; 4] = b"KRCH";
const CACHE_VERSION: u32 = 1;

fn put_u32(buf: &mut Vec<u8>, v: u32) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn put_u64(buf: &mut Vec<u8>, v: u64) {
    buf.extend_from_slice(&v.to_le_bytes());
}

fn fingerprint(graph: &Csr) -> u64 {
    // FNV-1a over the edge list; only guards the cache against stale graphs.
    let mut h: u64 = 0xcbf29ce484222325;
    let mut mix = |v: u32| {
        for b in v.to_le_bytes() {
            h ^= b as u64;
            h = h.wrapping_mul(0x100000001b3);
        }
    };
    mix(graph.num_vertices() as u32);
    for (t, hd, w) in graph.edge_list() {
        mix(t);
        mix(hd);
        mix(w);
    }
    h
}

struct Builder {
    n: usize,
    out_adj: Vec<Vec<(Vertex, Time)>>,
    in_adj: Vec<Vec<(Vertex, Time)>>,
    contracted: Vec<bool>,
    contracted_neighbors: Vec<u32>,
    /// All edges of the final hierarchy, min-merged over parallels.
    edges: HashMap<(Vertex, Vertex), Time>,
    fingerprint: u64,
}

impl Builder {
    fn new(graph: &Csr) -> Builder {
        let n = graph.num_vertices();
        let mut b = Builder {
            n,
            out_adj: vec![Vec::new(); n],
            in_adj: vec![Vec::new(); n],
            contracted: vec![false; n],
            contracted_neighbors: vec![0; n],
            edges: HashMap::new(),
            fingerprint: fingerprint(graph),
        };
        for (t, h, w) in graph.edge_list() {
            if t != h {
                b.add_edge(t, h, w as Time);
            }
        }
        b
    }

    fn add_edge(&mut self, u: Vertex, v: Vertex, w: Time) {
        let cur = self.edges.get(&(u, v)).copied().unwrap_or(INF);
        if w >= cur {
            return;
        }
        self.edges.insert((u, v), w);
        upsert(&mut self.out_adj[u as usize], v, w);
        upsert(&mut self.in_adj[v as usize], u, w);
    }

    /// Edge difference if `v` were contracted now: shortcuts needed minus
    /// incident core edges removed.
    fn priority(&mut self, v: Vertex) -> i64 {
        let (added, removed) = self.simulate(v, false);
        added as i64 - removed as i64 + self.contracted_neighbors[v as usize] as i64
    }

    /// Counts (and with `commit` inserts) the shortcuts for contracting `v`.
    fn simulate(&mut self, v: Vertex, commit: bool) -> (usize, usize) {
        let ins: Vec<(Vertex, Time)> = self.in_adj[v as usize]
            .iter()
            .copied()
            .filter(|&(u, _)| !self.contracted[u as usize])
            .collect();
        let outs: Vec<(Vertex, Time)> = self.out_adj[v as usize]
            .iter()
            .copied()
            .filter(|&(w, _)| !self.contracted[w as usize])
            .collect();
        let removed = ins.len() + outs.len();
        let mut added = 0;
        for &(u, l1) in &ins {
            for &(w, l2) in &outs {
                if u == w {
                    continue;
                }
                let via = l1 + l2;
                if !self.has_witness(u, w, v, via) {
                    added += 1;
                    if commit {
                        self.add_edge(u, w, via);
                    }
                }
            }
        }
        (added, removed)
    }

    /// Local Dijkstra from `u` towards `w` in the uncontracted core,
    /// skipping `v`. Returns true iff a path of length <= `cap` is found
    /// within the hop limit and settle budget.
    fn has_witness(&self, u: Vertex, w: Vertex, skip: Vertex, cap: Time) -> bool {
        let mut dist: HashMap<Vertex, (Time, u32)> = HashMap::new();
        let mut heap: BinaryHeap<Reverse<(Time, Vertex, u32)>> = BinaryHeap::new();
        dist.insert(u, (0, 0));
        heap.push(Reverse((0, u, 0)));
        let mut settled = 0usize;
        while let Some(Reverse((d, x, hops))) = heap.pop() {
            if d > cap {
                return false;
            }
            match dist.get(&x) {
                Some(&(dd, _)) if dd < d => continue,
                _ => {}
            }
            if x == w {
                return true;
            }
            settled += 1;
            if settled > WITNESS_SETTLE_BUDGET || hops >= WITNESS_HOP_LIMIT {
                return false;
            }
            for &(y, l) in &self.out_adj[x as usize] {
                if y == skip || self.contracted[y as usize] {
                    continue;
                }
                let nd = d + l;
                if nd > cap {
                    continue;
                }
                let better = match dist.get(&y) {
                    Some(&(dd, _)) => nd < dd,
                    None => true,
                };
                if better {
                    dist.insert(y, (nd, hops + 1));
                    heap.push(Reverse((nd, y, hops + 1)));
                }
            }
        }
        false
    }

    fn contract(&mut self, v: Vertex) {
        self.simulate(v, true);
        self.contracted[v as usize] = true;
        let touch = |nbrs: &Vec<(Vertex, Time)>, cn: &mut Vec<u32>| {
            for &(u, _) in nbrs {
                cn[u as usize] += 1;
            }
        };
        let ins = self.in_adj[v as usize].clone();
        let outs = self.out_adj[v as usize].clone();
        touch(&ins, &mut self.contracted_neighbors);
        touch(&outs, &mut self.contracted_neighbors);
    }

    fn run(mut self, order: Option<&[Vertex]>) -> ContractionHierarchy {
        let mut rank = vec![0u32; self.n];
        match order {
            Some(order) => {
                for (r, &v) in order.iter().enumerate() {
                    rank[v as usize] = r as u32;
                    self.contract(v);
                }
            }
            None => {
                let mut queue: BinaryHeap<Reverse<(i64, Vertex)>> = BinaryHeap::new();
                for v in 0..self.n as Vertex {
                    let p = self.priority(v);
                    queue.push(Reverse((p, v)));
                }
                let mut next_rank = 0u32;
                while let Some(Reverse((p, v))) = queue.pop() {
                    if self.contracted[v as usize] {
                        continue;
                    }
                    // lazy update: if the priority grew stale, re-queue
                    let fresh = self.priority(v);
                    let requeue = match queue.peek() {
                        Some(Reverse((top, _))) => fresh > p && fresh > *top,
                        None => false,
                    };
                    if requeue {
                        queue.push(Reverse((fresh, v)));
                        continue;
                    }
                    rank[v as usize] = next_rank;
                    next_rank += 1;
                    self.contract(v);
                }
            }
        }
        let mut up = Vec::new();
        let mut down = Vec::new();
        for (&(u, v), &w) in &self.edges {
            debug_assert!(w < INF);
            if rank[u as usize] < rank[v as usize] {
                up.push((u, v, w as u32));
            } else {
                // reverse orientation: indexed by head for backward searches
                down.push((v, u, w as u32));
            }
        }
        up.sort();
        down.sort();
        ContractionHierarchy {
            rank,
            up_out: Csr::from_edges(self.n, &up),
            down_in: Csr::from_edges(self.n, &down),
            graph_fingerprint: self.fingerprint,
        }
    }
}

fn upsert(list: &mut Vec<(Vertex, Time)>, v: Vertex, w: Time) {
    for e in list.iter_mut() {
        if e.0 == v {
            e.1 = e.1.min(w);
            return;
        }
    }
    list.push((v, w));
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::dijkstra;
    use rand::prelude::*;
    use rand_chacha::ChaCha8Rng;

    fn random_graph(rng: &mut ChaCha8Rng, n: usize, m: usize) -> Csr {
        let mut edges = Vec::new();
        // a random cycle keeps things mostly connected
        for v in 0..n {
            edges.push((v as Vertex, ((v + 1) % n) as Vertex, rng.gen_range(1..100)));
        }
        for _ in 0..m {
            let t = rng.gen_range(0..n) as Vertex;
            let h = rng.gen_range(0..n) as Vertex;
            if t != h {
                edges.push((t, h, rng.gen_range(1..100)));
            }
        }
        Csr::from_edges(n, &edges)
    }

    #[test]
    fn preserves_all_pairs_distances() {
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for case in 0..6 {
            let n = 20 + case * 15;
            let g = random_graph(&mut rng, n, n * 3);
            let ch = ContractionHierarchy::build(&g);
            for s in 0..n as Vertex {
                let truth = dijkstra(&g, s);
                for t in 0..n as Vertex {
                    assert_eq!(ch.query(s, t), truth[t as usize], "case {case} {s}->{t}");
                }
            }
        }
    }

    #[test]
    fn build_is_deterministic() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let g = random_graph(&mut rng, 40, 120);
        let a = ContractionHierarchy::build(&g);
        let b = ContractionHierarchy::build(&g);
        assert_eq!(a.rank, b.rank);
        assert_eq!(a.up_out.edge_list(), b.up_out.edge_list());
        assert_eq!(a.down_in.edge_list(), b.down_in.edge_list());
    }

    #[test]
    fn search_spaces_meet_at_shortest_distance() {
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let g = random_graph(&mut rng, 30, 90);
        let ch = ContractionHierarchy::build(&g);
        let truth = dijkstra(&g, 4);
        let fwd: HashMap<Vertex, Time> =
            ch.forward_search_space(4).into_iter().map(|e| (e.vertex, e.dist)).collect();
        for t in 0..30u32 {
            let mut best = INF;
            for e in ch.reverse_search_space(t) {
                if let Some(&du) = fwd.get(&e.vertex) {
                    best = best.min(du + e.dist);
                }
            }
            assert_eq!(best, truth[t as usize]);
        }
    }

    /// Two stops share the upward search spaces of two high-rank vertices;
    /// the per-vertex distances are the bucket entries the elliptic and
    /// last-stop structures store.
    #[test]
    fn explicit_order_toy_search_spaces() {
        let s1 = 0;
        let s2 = 1;
        let u = 2;
        let v = 3;
        let g = Csr::from_edges(4, &[(s1, u, 5), (s2, u, 9), (s1, v, 6), (s2, v, 1)]);
        let ch = ContractionHierarchy::build_with_order(&g, &[s1, s2, u, v]);
        let space = |s: Vertex| -> HashMap<Vertex, Time> {
            ch.forward_search_space(s).into_iter().map(|e| (e.vertex, e.dist)).collect()
        };
        let sp1 = space(s1);
        let sp2 = space(s2);
        assert_eq!(sp1.get(&u), Some(&5));
        assert_eq!(sp2.get(&u), Some(&9));
        assert_eq!(sp1.get(&v), Some(&6));
        assert_eq!(sp2.get(&v), Some(&1));
    }

    #[test]
    fn cache_round_trip_and_invalidation() {
        let mut rng = ChaCha8Rng::seed_from_u64(13);
        let g = random_graph(&mut rng, 25, 60);
        let ch = ContractionHierarchy::build(&g);
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("ch.bin");
        ch.save(&path).unwrap();
        let loaded = ContractionHierarchy::load(&path, &g).unwrap().expect("cache hit");
        assert_eq!(loaded.rank, ch.rank);
        assert_eq!(loaded.up_out.edge_list(), ch.up_out.edge_list());
        assert_eq!(loaded.query(0, 17), ch.query(0, 17));
        // a different graph must miss
        let g2 = random_graph(&mut rng, 25, 60);
        assert!(ContractionHierarchy::load(&path, &g2).unwrap().is_none());
    }

    #[test]
    fn disconnected_pairs_stay_infinite() {
        let g = Csr::from_edges(4, &[(0, 1, 3), (2, 3, 4)]);
        let ch = ContractionHierarchy::build(&g);
        assert_eq!(ch.query(0, 1), 3);
        assert_eq!(ch.query(0, 3), INF);
        assert_eq!(ch.query(3, 2), INF);
    }
}
