//! Distances from last stops, for insertions that extend a route at its end.
//!
//! Appending a pickup or dropoff after a vehicle's final stop has no
//! downstream deadline to respect, so elliptic pruning does not apply and a
//! different machinery is needed. Every vehicle's last stop deposits its
//! full upward search space into persistent buckets sorted ascending by
//! distance. Searches rooted at the candidate points then scan those
//! buckets, and three pruning devices keep the scans short:
//!
//! * a closed-form cost lower bound per entry, which ends a sorted scan as
//!   soon as an entry can no longer beat the best known insertion,
//! * an upper-bound tightening rule that prices dropping the rider at the
//!   destination itself each time a tentative distance improves, and
//! * for the collective variants, label domination: a (pickup, dropoff)
//!   pair whose every completion is strictly costlier than a rival's at the
//!   same vertex is discarded outright.
//!
//! The collective pickup search ignores the service-end constraint while it
//! runs. The winner it reports therefore comes in two flavors: the cheapest
//! candidate outright and the cheapest one whose arrival respects the
//! vehicle's service end. When those differ, the caller falls back to the
//! individual searches, seeded with the feasible bound, which re-establish
//! exactness.
//!
//! Dropoff-side domination carries an extra condition: the dominating
//! dropoff must not lie farther from the vertex than the dominated one.
//! Cheaper-but-farther dropoffs may break a service end the dominated one
//! holds, and the dropoff searches have no fallback to recover from that.

use std::cmp::Reverse;
use std::collections::{BTreeMap, BinaryHeap, HashMap};

use crate::buckets::{BucketEntry, BucketStore, Order};
use crate::ch::ContractionHierarchy;
use crate::config::{Pruning, Weights};
use crate::cost::EvalContext;
use crate::fleet::{Fleet, InsType, InsertionPoint, LegDists, Vehicle, VehicleId};
use crate::graph::{BatchDijkstra, MeetingPoint, Settle};
use crate::pdcalc::PdDistanceTable;
use crate::units::{Cost, Time, Vertex, INF};

/// Persistent buckets holding, at every vertex, the vehicles whose last
/// stop's upward search space covers it, with the exact upward distance.
pub struct LastStopBuckets {
    store: BucketStore,
    placed: HashMap<VehicleId, Vec<Vertex>>,
}

impl LastStopBuckets {
    pub fn new(n: usize, sorted: bool) -> LastStopBuckets {
        LastStopBuckets { store: BucketStore::new(n, Order::KeyAscending, sorted), placed: HashMap::new() }
    }

    pub fn store(&self) -> &BucketStore {
        &self.store
    }

    pub fn remove_vehicle(&mut self, veh: VehicleId) {
        for v in self.placed.remove(&veh).unwrap_or_default() {
            self.store.remove(v, veh as u64);
        }
    }

    /// Replaces the vehicle's entries with the search space of its current
    /// last stop.
    pub fn rebuild_vehicle(&mut self, ch: &ContractionHierarchy, veh: &Vehicle) {
        self.remove_vehicle(veh.id);
        let mut at = Vec::new();
        for e in ch.forward_search_space(veh.last_stop().loc) {
            self.store.insert(e.vertex, BucketEntry { id: veh.id as u64, dist: e.dist, key: e.dist });
            at.push(e.vertex);
        }
        self.placed.insert(veh.id, at);
    }
}

#[derive(Debug, Default, Clone, Copy)]
pub struct LastLegStats {
    pub scanned: u64,
    pub relaxed: u64,
    pub initial_labels: u64,
    pub pruned_labels: u64,
}

/// Shared inputs of the last-stop searches for one request.
pub struct LastLegParams<'a> {
    pub ch: &'a ContractionHierarchy,
    pub buckets: &'a LastStopBuckets,
    pub fleet: &'a Fleet,
    pub pickups: &'a [MeetingPoint],
    pub dropoffs: &'a [MeetingPoint],
    pub pd: &'a PdDistanceTable,
    /// Exact distance from each pickup to the destination vertex.
    pub dist_to_dest: &'a [Time],
    /// Index of the destination itself in `dropoffs`, when it is one.
    pub dest_dropoff: Option<usize>,
    pub k: usize,
    pub pruning: &'a Pruning,
}

/// A concrete append-after-last-stop candidate found by a search.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PalsCandidate {
    pub veh: VehicleId,
    pub pickup: u32,
    pub dropoff: u32,
    /// Distance from the vehicle's last stop to the pickup.
    pub dist: Time,
    pub cost: Cost,
    /// Whether the arrival respects the vehicle's service end.
    pub feasible: bool,
}

impl PalsCandidate {
    fn key(&self, p: &LastLegParams) -> (VehicleId, Vertex, Vertex) {
        (self.veh, p.pickups[self.pickup as usize].vertex, p.dropoffs[self.dropoff as usize].vertex)
    }
}

/// Batched reverse searches from all pickups that fill in the last-stop
/// distance table. All pruning compares against the `c_upper` value seen on
/// entry, and each lane applies the bound on its own, so the table content
/// is independent of the batch width; destination-dropoff bounds found
/// along the way tighten `c_upper` on return. Pairs whose best completion
/// cannot beat the bound may be missing, but every entry present is an
/// exact distance.
pub fn pals_individual(
    ctx: &EvalContext,
    p: &LastLegParams,
    c_upper: &mut Cost,
) -> (BTreeMap<(VehicleId, u32), Time>, LastLegStats) {
    let mut table: BTreeMap<(VehicleId, u32), Time> = BTreeMap::new();
    let mut stats = LastLegStats::default();
    let n = p.ch.num_vertices();
    let store = p.buckets.store();
    let cu = *c_upper;
    let mut tightened = cu;

    for chunk_start in (0..p.pickups.len()).step_by(p.k) {
        let chunk = &p.pickups[chunk_start..p.pickups.len().min(chunk_start + p.k)];
        let min_walk = chunk.iter().map(|m| m.walk).min().unwrap();
        let mut dj = BatchDijkstra::new(n, p.k);
        for (lane, mp) in chunk.iter().enumerate() {
            dj.seed(mp.vertex, lane, 0);
        }
        dj.run(&p.ch.down_in, |v, labels| {
            if p.pruning.cost_pruning
                && ctx.cost_from_last_stop(min_walk, 0, ctx.t_req, labels.iter().copied().min().unwrap(), p.pd.delta_pd_min)
                    > cu
            {
                return Settle::Stop;
            }
            stats.scanned += store.scan(
                v,
                |e| {
                    p.pruning.laststop_scan_stop && {
                        let mut lo = INF;
                        for (lane, &l) in labels.iter().enumerate() {
                            if l >= INF {
                                continue;
                            }
                            lo = lo.min(ctx.cost_from_last_stop(
                                chunk[lane].walk,
                                0,
                                ctx.t_req,
                                e.dist + l,
                                p.pd.delta_pd_min,
                            ));
                        }
                        lo > cu
                    }
                },
                |e| {
                    for (lane, &l) in labels.iter().enumerate() {
                        if l >= INF {
                            continue;
                        }
                        if p.pruning.cost_pruning
                            && ctx.cost_from_last_stop(chunk[lane].walk, 0, ctx.t_req, l, p.pd.delta_pd_min) > cu
                        {
                            continue;
                        }
                        let cand = e.dist + l;
                        if p.pruning.laststop_scan_stop
                            && ctx.cost_from_last_stop(chunk[lane].walk, 0, ctx.t_req, cand, p.pd.delta_pd_min) > cu
                        {
                            continue;
                        }
                        let pi = (chunk_start + lane) as u32;
                        let cell = table.entry((e.id as VehicleId, pi)).or_insert(INF);
                        if cand >= *cell {
                            continue;
                        }
                        *cell = cand;
                        if let Some(di) = p.dest_dropoff {
                            let veh = p.fleet.vehicle(e.id as VehicleId);
                            let m = veh.last_idx();
                            let ins = InsertionPoint {
                                veh: veh.id,
                                kind: InsType::Pals,
                                i: m,
                                j: m,
                                pickup: chunk[lane],
                                dropoff: p.dropoffs[di],
                                dists: LegDists {
                                    to_pickup: cand,
                                    pickup_to_dropoff: p.dist_to_dest[pi as usize],
                                    ..LegDists::default()
                                },
                            };
                            if let Some(eval) = ctx.evaluate(veh, &ins, None).feasible() {
                                tightened = tightened.min(eval.cost);
                            }
                        }
                    }
                },
            );
            Settle::Continue
        });
        stats.relaxed += dj.relaxed;
    }
    if tightened < *c_upper {
        *c_upper = tightened;
    }
    (table, stats)
}

/// One (pickup, dropoff) pair as a propagating search label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct PairLabel {
    pickup: u32,
    dropoff: u32,
    dist: Time,
}

/// The parts of a pair label the domination test looks at.
#[derive(Debug, Clone, Copy)]
pub struct PalsLabelView {
    pub down_dist: Time,
    pub pickup_walk: Time,
    pub dropoff_walk: Time,
    pub pd_dist: Time,
}

/// Whether every completion of `l2` below the shared vertex costs strictly
/// more than the same completion of `l1`. Decided through an upper bound on
/// the cost difference that holds for any arrival time of the vehicle, so a
/// true result is conclusive while a false one merely means unknown.
pub fn pd_label_dominates(w: &Weights, l1: PalsLabelView, l2: PalsLabelView) -> bool {
    if l1.pd_dist >= INF || l2.pd_dist >= INF {
        return false;
    }
    let d_dep = l1.down_dist.max(l1.pickup_walk) - l2.down_dist;
    let d_detour = d_dep + l1.pd_dist - l2.pd_dist;
    let d_trip = d_detour + l1.dropoff_walk - l2.dropoff_walk;
    let d_walk = (l1.pickup_walk + l1.dropoff_walk) - (l2.pickup_walk + l2.dropoff_walk);
    let dc = w.scale * d_detour
        + w.tau * d_trip
        + w.omega * d_walk
        + w.gamma_wait * d_dep.max(0)
        + w.gamma_trip * d_trip.max(0);
    dc < 0
}

/// Result of the collective pickup search: the cheapest candidate with the
/// service end ignored, and the cheapest one respecting it.
pub struct PalsCollectiveOutcome {
    pub best_all: Option<PalsCandidate>,
    pub best_legit: Option<PalsCandidate>,
    pub stats: LastLegStats,
}

impl PalsCollectiveOutcome {
    /// The fallback to individual searches is needed when the unrestricted
    /// winner breaks its vehicle's service end.
    pub fn needs_fallback(&self) -> bool {
        self.best_all.map_or(false, |b| !b.feasible)
    }
}

struct CollectivePals<'a, 'b> {
    ctx: &'a EvalContext<'a>,
    p: &'a LastLegParams<'b>,
    open: Vec<Vec<PairLabel>>,
    closed: Vec<Vec<PairLabel>>,
    queue: BinaryHeap<Reverse<(Cost, Vertex, u32, u32, Time)>>,
    c_upper: Cost,
    best_all: Option<PalsCandidate>,
    best_legit: Option<PalsCandidate>,
    stats: LastLegStats,
}

impl<'a, 'b> CollectivePals<'a, 'b> {
    fn view(&self, l: &PairLabel) -> PalsLabelView {
        PalsLabelView {
            down_dist: l.dist,
            pickup_walk: self.p.pickups[l.pickup as usize].walk,
            dropoff_walk: self.p.dropoffs[l.dropoff as usize].walk,
            pd_dist: self.p.pd.get(l.pickup as usize, l.dropoff as usize),
        }
    }

    /// Lower bound on any insertion this label can still lead to.
    fn cmin(&self, l: &PairLabel) -> Cost {
        let v = self.view(l);
        self.ctx.cost_from_last_stop(v.pickup_walk, v.dropoff_walk, self.ctx.t_req, l.dist, v.pd_dist)
    }

    fn insert_label(&mut self, v: Vertex, l: PairLabel) {
        let cm = self.cmin(&l);
        if self.p.pruning.cost_pruning && cm > self.c_upper {
            self.stats.pruned_labels += 1;
            return;
        }
        let same_pair = |ex: &PairLabel| ex.pickup == l.pickup && ex.dropoff == l.dropoff;
        if self.open[v as usize]
            .iter()
            .chain(self.closed[v as usize].iter())
            .any(|ex| same_pair(ex) && ex.dist <= l.dist)
        {
            return;
        }
        if self.p.pruning.pd_domination {
            let lv = self.view(&l);
            let w = self.ctx.weights;
            let dominated = self.open[v as usize]
                .iter()
                .chain(self.closed[v as usize].iter())
                .any(|ex| !same_pair(ex) && pd_label_dominates(w, self.view(ex), lv));
            if dominated {
                self.stats.pruned_labels += 1;
                return;
            }
            let views: Vec<(PairLabel, PalsLabelView)> =
                self.open[v as usize].iter().map(|ex| (*ex, self.view(ex))).collect();
            self.open[v as usize]
                .retain(|ex| !views.iter().any(|(o, ov)| o == ex && !same_pair(ex) && pd_label_dominates(w, lv, *ov)));
        }
        self.open[v as usize].retain(|ex| !(same_pair(ex) && ex.dist > l.dist));
        self.open[v as usize].push(l);
        self.queue.push(Reverse((cm, v, l.pickup, l.dropoff, l.dist)));
    }

    fn consider(&mut self, l: &PairLabel, veh_id: VehicleId, tdist: Time) {
        let lv = self.view(l);
        if lv.pd_dist >= INF {
            return;
        }
        let veh = self.p.fleet.vehicle(veh_id);
        let t = veh.last_stop().t_dep_min.max(self.ctx.t_req);
        let cost = self.ctx.cost_from_last_stop(lv.pickup_walk, lv.dropoff_walk, t, tdist, lv.pd_dist);
        let dep = (t + tdist).max(self.ctx.t_req + lv.pickup_walk);
        let cand = PalsCandidate {
            veh: veh_id,
            pickup: l.pickup,
            dropoff: l.dropoff,
            dist: tdist,
            cost,
            feasible: dep + lv.pd_dist <= veh.service_end,
        };
        let replaces_all = match &self.best_all {
            _ if cost < self.c_upper => true,
            Some(b) => cost == self.c_upper && cand.key(self.p) < b.key(self.p),
            None => false,
        };
        if replaces_all {
            self.best_all = Some(cand);
            self.c_upper = self.c_upper.min(cost);
        }
        if cand.feasible
            && self
                .best_legit
                .map_or(true, |b| cost < b.cost || (cost == b.cost && cand.key(self.p) < b.key(self.p)))
        {
            self.best_legit = Some(cand);
        }
    }

    fn settle(&mut self, v: Vertex, l: PairLabel) {
        self.closed[v as usize].push(l);
        let store = self.p.buckets.store();
        let lv = self.view(&l);
        let cu = self.c_upper;
        let ctx = self.ctx;
        let mut hits: Vec<(VehicleId, Time)> = Vec::new();
        self.stats.scanned += store.scan(
            v,
            |e| {
                self.p.pruning.laststop_scan_stop
                    && ctx.cost_from_last_stop(lv.pickup_walk, lv.dropoff_walk, ctx.t_req, e.dist + l.dist, lv.pd_dist)
                        > cu
            },
            |e| hits.push((e.id as VehicleId, e.dist + l.dist)),
        );
        for (veh_id, tdist) in hits {
            self.consider(&l, veh_id, tdist);
        }
        let edges: Vec<(Vertex, u32)> = self.p.ch.down_in.neighbors(v).collect();
        for (u, wt) in edges {
            self.stats.relaxed += 1;
            self.insert_label(u, PairLabel { pickup: l.pickup, dropoff: l.dropoff, dist: l.dist + wt as Time });
        }
    }

    fn run(&mut self) {
        for pi in 0..self.p.pickups.len() as u32 {
            for di in 0..self.p.dropoffs.len() as u32 {
                self.stats.initial_labels += 1;
                self.insert_label(self.p.pickups[pi as usize].vertex, PairLabel { pickup: pi, dropoff: di, dist: 0 });
            }
        }
        while let Some(Reverse((cm, v, pickup, dropoff, dist))) = self.queue.pop() {
            if self.p.pruning.cost_pruning && cm > self.c_upper {
                break;
            }
            let l = PairLabel { pickup, dropoff, dist };
            let Some(pos) = self.open[v as usize].iter().position(|ex| *ex == l) else {
                continue;
            };
            self.open[v as usize].remove(pos);
            self.settle(v, l);
        }
    }
}

/// The collective pickup search: instead of one distance query per pickup,
/// (pickup, dropoff) pair labels flow down the hierarchy together in one
/// cost-ordered queue, competing at shared vertices.
pub fn pals_collective(ctx: &EvalContext, p: &LastLegParams, c_upper: Cost) -> PalsCollectiveOutcome {
    let n = p.ch.num_vertices();
    let mut search = CollectivePals {
        ctx,
        p,
        open: vec![Vec::new(); n],
        closed: vec![Vec::new(); n],
        queue: BinaryHeap::new(),
        c_upper,
        best_all: None,
        best_legit: None,
        stats: LastLegStats::default(),
    };
    search.run();
    PalsCollectiveOutcome { best_all: search.best_all, best_legit: search.best_legit, stats: search.stats }
}

/// The parts of a dropoff label the domination test looks at.
#[derive(Debug, Clone, Copy)]
pub struct DalsLabelView {
    pub down_dist: Time,
    pub dropoff_walk: Time,
}

/// Dropoff-side domination. Two strict conditions cover insertions with and
/// without the trip penalty active; the distance condition keeps the
/// dominating dropoff's arrival no later, so it can never trade a feasible
/// candidate for a service-end violation.
pub fn dals_label_dominates(w: &Weights, l1: DalsLabelView, l2: DalsLabelView) -> bool {
    let delta = l1.down_dist - l2.down_dist;
    let d_walk = l1.dropoff_walk - l2.dropoff_walk;
    let d_trip = delta + d_walk;
    delta <= 0
        && w.scale * delta + w.tau * d_trip + w.omega * d_walk < 0
        && w.scale * delta + (w.tau + w.gamma_trip) * d_trip + w.omega * d_walk < 0
}

/// Batched reverse searches from all dropoffs. `c_upper` stays fixed: with
/// the pickup somewhere mid-route, nothing found here alone prices a full
/// insertion.
pub fn dals_individual(
    ctx: &EvalContext,
    p: &LastLegParams,
    c_upper: Cost,
) -> (BTreeMap<(VehicleId, u32), Time>, LastLegStats) {
    let mut table: BTreeMap<(VehicleId, u32), Time> = BTreeMap::new();
    let mut stats = LastLegStats::default();
    let n = p.ch.num_vertices();
    let store = p.buckets.store();

    for chunk_start in (0..p.dropoffs.len()).step_by(p.k) {
        let chunk = &p.dropoffs[chunk_start..p.dropoffs.len().min(chunk_start + p.k)];
        let min_walk = chunk.iter().map(|m| m.walk).min().unwrap();
        let mut dj = BatchDijkstra::new(n, p.k);
        for (lane, mp) in chunk.iter().enumerate() {
            dj.seed(mp.vertex, lane, 0);
        }
        dj.run(&p.ch.down_in, |v, labels| {
            if p.pruning.cost_pruning
                && ctx.dals_lower_bound(min_walk, labels.iter().copied().min().unwrap()) > c_upper
            {
                return Settle::Stop;
            }
            stats.scanned += store.scan(
                v,
                |e| {
                    p.pruning.laststop_scan_stop && {
                        let mut lo = INF;
                        for (lane, &l) in labels.iter().enumerate() {
                            if l >= INF {
                                continue;
                            }
                            lo = lo.min(ctx.dals_lower_bound(chunk[lane].walk, e.dist + l));
                        }
                        lo > c_upper
                    }
                },
                |e| {
                    for (lane, &l) in labels.iter().enumerate() {
                        if l >= INF {
                            continue;
                        }
                        if p.pruning.cost_pruning && ctx.dals_lower_bound(chunk[lane].walk, l) > c_upper {
                            continue;
                        }
                        let cand = e.dist + l;
                        if p.pruning.laststop_scan_stop && ctx.dals_lower_bound(chunk[lane].walk, cand) > c_upper {
                            continue;
                        }
                        let di = (chunk_start + lane) as u32;
                        let cell = table.entry((e.id as VehicleId, di)).or_insert(INF);
                        *cell = (*cell).min(cand);
                    }
                },
            );
            Settle::Continue
        });
        stats.relaxed += dj.relaxed;
    }
    (table, stats)
}

/// One dropoff as a propagating search label.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
struct DropoffLabel {
    dropoff: u32,
    dist: Time,
}

/// The collective dropoff search. Returns, per vehicle, the distances of a
/// dropoff set guaranteed to contain the best dropoff for every pickup and
/// insertion index: the survivors of pairwise domination on the final
/// distances.
pub fn dals_collective(
    ctx: &EvalContext,
    p: &LastLegParams,
    c_upper: Cost,
) -> (BTreeMap<(VehicleId, u32), Time>, LastLegStats) {
    let n = p.ch.num_vertices();
    let mut open: Vec<Vec<DropoffLabel>> = vec![Vec::new(); n];
    let mut closed: Vec<Vec<DropoffLabel>> = vec![Vec::new(); n];
    let mut queue: BinaryHeap<Reverse<(Cost, Vertex, u32, Time)>> = BinaryHeap::new();
    let mut stats = LastLegStats::default();
    let mut tentative: BTreeMap<(VehicleId, u32), Time> = BTreeMap::new();
    let w = ctx.weights;
    let store = p.buckets.store();
    let view = |dols: &[MeetingPoint], l: &DropoffLabel| DalsLabelView {
        down_dist: l.dist,
        dropoff_walk: dols[l.dropoff as usize].walk,
    };

    let insert_label = |open: &mut Vec<Vec<DropoffLabel>>,
                            closed: &Vec<Vec<DropoffLabel>>,
                            queue: &mut BinaryHeap<Reverse<(Cost, Vertex, u32, Time)>>,
                            stats: &mut LastLegStats,
                            v: Vertex,
                            l: DropoffLabel| {
        let cm = ctx.dals_lower_bound(p.dropoffs[l.dropoff as usize].walk, l.dist);
        if p.pruning.cost_pruning && cm > c_upper {
            stats.pruned_labels += 1;
            return;
        }
        let same = |ex: &DropoffLabel| ex.dropoff == l.dropoff;
        if open[v as usize].iter().chain(closed[v as usize].iter()).any(|ex| same(ex) && ex.dist <= l.dist) {
            return;
        }
        if p.pruning.dals_domination {
            let lv = view(p.dropoffs, &l);
            if open[v as usize]
                .iter()
                .chain(closed[v as usize].iter())
                .any(|ex| !same(ex) && dals_label_dominates(w, view(p.dropoffs, ex), lv))
            {
                stats.pruned_labels += 1;
                return;
            }
            open[v as usize].retain(|ex| same(ex) || !dals_label_dominates(w, lv, view(p.dropoffs, ex)));
        }
        open[v as usize].retain(|ex| !(same(ex) && ex.dist > l.dist));
        open[v as usize].push(l);
        queue.push(Reverse((cm, v, l.dropoff, l.dist)));
    };

    for di in 0..p.dropoffs.len() as u32 {
        stats.initial_labels += 1;
        insert_label(&mut open, &closed, &mut queue, &mut stats, p.dropoffs[di as usize].vertex, DropoffLabel {
            dropoff: di,
            dist: 0,
        });
    }
    while let Some(Reverse((cm, v, dropoff, dist))) = queue.pop() {
        if p.pruning.cost_pruning && cm > c_upper {
            break;
        }
        let l = DropoffLabel { dropoff, dist };
        let Some(pos) = open[v as usize].iter().position(|ex| *ex == l) else {
            continue;
        };
        open[v as usize].remove(pos);
        closed[v as usize].push(l);

        let lv = view(p.dropoffs, &l);
        stats.scanned += store.scan(
            v,
            |e| p.pruning.laststop_scan_stop && ctx.dals_lower_bound(lv.dropoff_walk, e.dist + l.dist) > c_upper,
            |e| {
                let cand = e.dist + l.dist;
                let cell = tentative.entry((e.id as VehicleId, l.dropoff)).or_insert(INF);
                *cell = (*cell).min(cand);
            },
        );
        let edges: Vec<(Vertex, u32)> = p.ch.down_in.neighbors(v).collect();
        for (u, wt) in edges {
            stats.relaxed += 1;
            insert_label(&mut open, &closed, &mut queue, &mut stats, u, DropoffLabel {
                dropoff: l.dropoff,
                dist: l.dist + wt as Time,
            });
        }
    }

    // per vehicle, keep only dropoffs no rival dominates on final distances
    let mut by_veh: BTreeMap<VehicleId, Vec<(u32, Time)>> = BTreeMap::new();
    for (&(veh, di), &d) in &tentative {
        by_veh.entry(veh).or_default().push((di, d));
    }
    let mut result = BTreeMap::new();
    for (veh, list) in by_veh {
        for &(di, d) in &list {
            let lv = DalsLabelView { down_dist: d, dropoff_walk: p.dropoffs[di as usize].walk };
            let beaten = p.pruning.dals_domination
                && list.iter().any(|&(dj, dd)| {
                    dj != di
                        && dals_label_dominates(
                            w,
                            DalsLabelView { down_dist: dd, dropoff_walk: p.dropoffs[dj as usize].walk },
                            lv,
                        )
                });
            if !beaten {
                result.insert((veh, di), d);
            }
        }
    }
    (result, stats)
}
