//! The per-request pipeline.
//!
//! Each request is answered with the cost-optimal way to serve it: walking
//! the whole way, or a pickup/dropoff meeting-point pair spliced into one
//! vehicle's route. The walking-only cost seeds an upper bound; the
//! elliptic queries then produce, per vehicle leg, the meeting points a
//! detour can reach without breaking a deadline; the pickup-dropoff table
//! adds direct distances between the two point sets. On top of those
//! distances the pipeline enumerates insertions in type order: both legs
//! between existing stops, pickup before the next stop, pickup after the
//! last stop, dropoff after the last stop. Every candidate is priced by
//! `evaluate` against the live schedule, and the cheapest wins under a
//! total tie order, so reruns and the brute-force oracle land on the same
//! choice.
//!
//! Committing the winner retimes the route, regenerates the vehicle's
//! elliptic entries wholesale, and refreshes its last-stop entries when the
//! final stop moved.

use std::collections::{BTreeMap, BTreeSet};
use std::time::Instant;

use crate::buckets::{BucketEntry, BucketStore, Order};
use crate::ch::ContractionHierarchy;
use crate::config::{Config, DalsStrategy, PalsStrategy};
use crate::cost::{EvalContext, Evaluation};
use crate::elliptic::{split_stop_key, EllipticBuckets};
use crate::fleet::{
    shortest_vertex_path, ChangeSummary, Fleet, InsType, InsertionPoint, LegDists, RequestId, RequestInfo, StopUid,
    VehicleId,
};
use crate::graph::{
    dijkstra_until, find_meeting_points, BatchDijkstra, MeetingPoint, RoadNetwork, Settle, Side,
};
use crate::lastleg::{dals_collective, dals_individual, pals_collective, pals_individual, LastLegParams, LastStopBuckets};
use crate::pdcalc::{PdCalc, PdDistanceTable};
use crate::units::{Cost, Time, Vertex, INF};

/// One ride request.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Request {
    pub id: RequestId,
    pub origin: Vertex,
    pub destination: Vertex,
    pub t_req: Time,
}

/// Everything the dispatcher keeps alive between requests.
pub struct EngineState {
    pub net: RoadNetwork,
    pub ch: ContractionHierarchy,
    pub elliptic: EllipticBuckets,
    pub last_stop: LastStopBuckets,
    pub fleet: Fleet,
    pub pd_calc: PdCalc,
}

impl EngineState {
    pub fn new(net: RoadNetwork, ch: ContractionHierarchy, mut fleet: Fleet, cfg: &Config) -> EngineState {
        let n = net.num_vertices();
        let mut elliptic = EllipticBuckets::new(n, cfg.pruning.sorted_buckets, cfg.pruning.elliptic_radius);
        let mut last_stop = LastStopBuckets::new(n, cfg.pruning.sorted_buckets);
        for v in &mut fleet.vehicles {
            v.recompute_deadlines();
        }
        for v in &fleet.vehicles {
            elliptic.rebuild_vehicle(&ch, v);
            last_stop.rebuild_vehicle(&ch, v);
        }
        let pd_calc = PdCalc::new(n, cfg.pruning.sorted_buckets);
        EngineState { net, ch, elliptic, last_stop, fleet, pd_calc }
    }
}

/// What the dispatcher decided for one request.
#[derive(Debug, Clone)]
pub struct ChosenInsertion {
    pub kind: InsType,
    pub cost: Cost,
    /// The winning vehicle insertion; `None` when the rider walks.
    pub ins: Option<InsertionPoint>,
    pub eval: Option<Evaluation>,
    /// Direct walking time origin to destination (INF when disconnected).
    pub walk_dist: Time,
}

#[derive(Debug, Default, Clone, Copy)]
pub struct PhaseCounters {
    /// Bucket entries scanned, or candidates priced for the enumeration
    /// phases.
    pub scanned: u64,
    pub relaxed: u64,
    pub micros: u64,
}

/// Per-request record for the event log.
#[derive(Debug, Clone)]
pub struct RequestTrace {
    pub req: RequestId,
    pub t_req: Time,
    pub num_pickups: usize,
    pub num_dropoffs: usize,
    pub elliptic: PhaseCounters,
    pub pd: PhaseCounters,
    pub ordinary: PhaseCounters,
    pub pbns: PhaseCounters,
    pub pals: PhaseCounters,
    pub dals: PhaseCounters,
    pub pals_fallback: bool,
    /// No walking path and no feasible vehicle insertion.
    pub infeasible: bool,
}

impl RequestTrace {
    fn new(req: &Request) -> RequestTrace {
        RequestTrace {
            req: req.id,
            t_req: req.t_req,
            num_pickups: 0,
            num_dropoffs: 0,
            elliptic: PhaseCounters::default(),
            pd: PhaseCounters::default(),
            ordinary: PhaseCounters::default(),
            pbns: PhaseCounters::default(),
            pals: PhaseCounters::default(),
            dals: PhaseCounters::default(),
            pals_fallback: false,
            infeasible: false,
        }
    }
}

type TieKey = (Cost, u8, VehicleId, usize, usize, Vertex, Vertex);

/// Tracks the cheapest candidate under the global tie order: cost, then
/// insertion type, vehicle, indices, and meeting-point vertices.
struct BestTracker {
    key: TieKey,
    chosen: ChosenInsertion,
}

impl BestTracker {
    fn walk_only(cost: Cost, walk_dist: Time) -> BestTracker {
        BestTracker {
            key: (cost, InsType::WalkOnly.tie_rank(), 0, 0, 0, 0, 0),
            chosen: ChosenInsertion { kind: InsType::WalkOnly, cost, ins: None, eval: None, walk_dist },
        }
    }

    fn cost(&self) -> Cost {
        self.key.0
    }

    fn offer(&mut self, ins: InsertionPoint, eval: Evaluation, walk_dist: Time) {
        let key = (
            eval.cost,
            ins.kind.tie_rank(),
            ins.veh,
            ins.i,
            ins.j,
            ins.pickup.vertex,
            ins.dropoff.vertex,
        );
        if key < self.key {
            self.key = key;
            self.chosen =
                ChosenInsertion { kind: ins.kind, cost: eval.cost, ins: Some(ins), eval: Some(eval), walk_dist };
        }
    }
}

/// Distance rows of one elliptic table regrouped by stop, in point order.
type StopRows = BTreeMap<(VehicleId, StopUid), Vec<(u32, Time)>>;

fn index_by_stop(table: &BTreeMap<(u64, u32), Time>) -> StopRows {
    let mut rows: StopRows = BTreeMap::new();
    for (&(key, point), &dist) in table {
        let (veh, uid) = split_stop_key(key);
        rows.entry((veh, uid)).or_default().push((point, dist));
    }
    rows
}

fn row_dist(rows: &StopRows, veh: VehicleId, uid: StopUid, point: u32) -> Time {
    match rows.get(&(veh, uid)) {
        Some(r) => match r.binary_search_by_key(&point, |e| e.0) {
            Ok(pos) => r[pos].1,
            Err(_) => INF,
        },
        None => INF,
    }
}

/// A pickup that can take index `i` in some vehicle's route: either merged
/// onto the stop there or spliced in with both detour legs reachable.
#[derive(Debug, Clone, Copy)]
struct PickSlot {
    pi: u32,
    to_pickup: Time,
    /// Drive from the pickup to the next stop; INF when only a paired
    /// insertion works here.
    to_next: Time,
}

#[derive(Debug, Clone, Copy)]
struct DropSlot {
    di: u32,
    merged: bool,
    to_dropoff: Time,
    to_next: Time,
}

/// Per-vehicle insertion slots derived from the elliptic tables.
struct VehPrep {
    /// Index i (1..m): pickups insertable at stop i.
    picks_at: Vec<Vec<PickSlot>>,
    /// Index i (0..m): dropoff-to-`s_{i+1}` rows, for paired insertions.
    ops_at: Vec<Vec<(u32, Time)>>,
    /// Index j (1..m): dropoffs insertable at stop j.
    drops_at: Vec<Vec<DropSlot>>,
}

struct Pipeline<'a> {
    ctx: EvalContext<'a>,
    cfg: &'a Config,
    ch: &'a ContractionHierarchy,
    fleet: &'a Fleet,
    last_stop: &'a LastStopBuckets,
    pickups: &'a [MeetingPoint],
    dropoffs: &'a [MeetingPoint],
    pd: &'a PdDistanceTable,
    dist_to_dest: &'a [Time],
    dest_dropoff: Option<usize>,
    curlocs: &'a BTreeMap<VehicleId, (Vertex, Time)>,
    cand_vehicles: &'a BTreeSet<VehicleId>,
    preps: BTreeMap<VehicleId, VehPrep>,
    best: BestTracker,
    evals: u64,
}

impl<'a> Pipeline<'a> {
    fn consider(&mut self, ins: InsertionPoint) {
        self.evals += 1;
        let cu = if self.cfg.pruning.cost_pruning { Some(self.best.cost()) } else { None };
        if let Some(eval) = self.ctx.evaluate(self.fleet.vehicle(ins.veh), &ins, cu).feasible() {
            self.best.offer(ins, eval, self.best.chosen.walk_dist);
        }
    }

    fn take_evals(&mut self) -> u64 {
        std::mem::take(&mut self.evals)
    }

    fn prep_vehicle(&self, vid: VehicleId, s2p_p: &StopRows, p2s_p: &StopRows, s2p_d: &StopRows, p2s_d: &StopRows) -> VehPrep {
        let veh = self.fleet.vehicle(vid);
        let m = veh.last_idx();
        let mut picks_at = vec![Vec::new(); m + 1];
        let mut ops_at = vec![Vec::new(); m + 1];
        let mut drops_at = vec![Vec::new(); m + 1];
        for i in 0..m {
            let uid_next = veh.stops[i + 1].uid;
            if let Some(rows) = p2s_d.get(&(vid, uid_next)) {
                ops_at[i] = rows.clone();
            }
        }
        for i in 1..m {
            let loc = veh.stops[i].loc;
            let uid = veh.stops[i].uid;
            let uid_next = veh.stops[i + 1].uid;
            for (pi, mp) in self.pickups.iter().enumerate() {
                if mp.vertex == loc {
                    picks_at[i].push(PickSlot { pi: pi as u32, to_pickup: 0, to_next: veh.leg_time(i) });
                }
            }
            if let Some(rows) = s2p_p.get(&(vid, uid)) {
                for &(pi, d) in rows {
                    if self.pickups[pi as usize].vertex != loc {
                        picks_at[i].push(PickSlot { pi, to_pickup: d, to_next: row_dist(p2s_p, vid, uid_next, pi) });
                    }
                }
            }
        }
        for j in 1..m {
            let loc = veh.stops[j].loc;
            let uid = veh.stops[j].uid;
            for (di, mp) in self.dropoffs.iter().enumerate() {
                if mp.vertex == loc {
                    drops_at[j].push(DropSlot { di: di as u32, merged: true, to_dropoff: 0, to_next: 0 });
                }
            }
            if let Some(rows) = s2p_d.get(&(vid, uid)) {
                for &(di, d) in rows {
                    if self.dropoffs[di as usize].vertex != loc {
                        let to_next = match ops_at[j].binary_search_by_key(&di, |e| e.0) {
                            Ok(pos) => ops_at[j][pos].1,
                            Err(_) => INF,
                        };
                        if to_next < INF {
                            drops_at[j].push(DropSlot { di, merged: false, to_dropoff: d, to_next });
                        }
                    }
                }
            }
        }
        VehPrep { picks_at, ops_at, drops_at }
    }

    /// Insertions with both legs between existing stops, paired or not.
    fn ordinary_phase(&mut self) {
        for &vid in self.cand_vehicles {
            let m = self.fleet.vehicle(vid).last_idx();
            for i in 1..m {
                let slots = std::mem::take(&mut self.preps.get_mut(&vid).unwrap().picks_at[i]);
                for ps in &slots {
                    let pickup = self.pickups[ps.pi as usize];
                    for idx in 0..self.preps[&vid].ops_at[i].len() {
                        let (di, d_next) = self.preps[&vid].ops_at[i][idx];
                        self.consider(InsertionPoint {
                            veh: vid,
                            kind: InsType::OrdinaryPaired,
                            i,
                            j: i,
                            pickup,
                            dropoff: self.dropoffs[di as usize],
                            dists: LegDists {
                                to_pickup: ps.to_pickup,
                                pickup_to_dropoff: self.pd.get(ps.pi as usize, di as usize),
                                dropoff_to_next: d_next,
                                ..LegDists::default()
                            },
                        });
                    }
                    if ps.to_next >= INF {
                        continue;
                    }
                    for j in i + 1..m {
                        for idx in 0..self.preps[&vid].drops_at[j].len() {
                            let ds = self.preps[&vid].drops_at[j][idx];
                            self.consider(InsertionPoint {
                                veh: vid,
                                kind: InsType::Ordinary,
                                i,
                                j,
                                pickup,
                                dropoff: self.dropoffs[ds.di as usize],
                                dists: LegDists {
                                    to_pickup: ps.to_pickup,
                                    pickup_to_next: ps.to_next,
                                    pickup_to_dropoff: self.pd.get(ps.pi as usize, ds.di as usize),
                                    to_dropoff: if ds.merged { 0 } else { ds.to_dropoff },
                                    dropoff_to_next: if ds.merged { 0 } else { ds.to_next },
                                    ..LegDists::default()
                                },
                            });
                        }
                    }
                }
                self.preps.get_mut(&vid).unwrap().picks_at[i] = slots;
            }
        }
    }

    /// Insertions with the pickup on the current leg, ahead of the next
    /// stop. A lower bound built from the previous stop's distance filters
    /// vehicle-pickup pairs; survivors get exact distances from transient
    /// bucket entries at the vehicles' current locations.
    fn pbns_phase(&mut self, s2p_p: &StopRows, p2s_p: &StopRows) -> (u64, u64) {
        let min_wd = self.dropoffs.iter().map(|m| m.walk).min().unwrap_or(INF);
        let pd_row_min: Vec<Time> = (0..self.pickups.len())
            .map(|pi| (0..self.dropoffs.len()).map(|di| self.pd.get(pi, di)).min().unwrap_or(INF))
            .collect();
        let mut surviving: BTreeSet<(VehicleId, u32)> = BTreeSet::new();
        for &vid in self.cand_vehicles {
            let veh = self.fleet.vehicle(vid);
            if veh.is_idle() {
                continue;
            }
            let Some(rows) = s2p_p.get(&(vid, veh.stops[0].uid)) else {
                continue;
            };
            for &(pi, d_s0) in rows {
                let w_p = self.pickups[pi as usize].walk;
                let dep_lb = (veh.stops[0].t_dep_min + d_s0).max(self.ctx.t_req + w_p);
                let lb = self.ctx.pair_lower_bound(w_p, min_wd, dep_lb, pd_row_min[pi as usize]);
                if self.cfg.pruning.cost_pruning && lb > self.best.cost() {
                    continue;
                }
                surviving.insert((vid, pi));
            }
        }
        if surviving.is_empty() {
            return (0, 0);
        }

        // transient source entries at the surviving vehicles' locations
        let n = self.ch.num_vertices();
        let mut store = BucketStore::new(n, Order::KeyAscending, self.cfg.pruning.sorted_buckets);
        let vehicles: BTreeSet<VehicleId> = surviving.iter().map(|&(v, _)| v).collect();
        for &vid in &vehicles {
            let (cv, _) = self.curlocs[&vid];
            for e in self.ch.forward_search_space(cv) {
                store.insert(e.vertex, BucketEntry { id: vid as u64, dist: e.dist, key: e.dist });
            }
        }
        let mut exact: BTreeMap<(VehicleId, u32), Time> = BTreeMap::new();
        let mut scanned = 0;
        let mut relaxed = 0;
        let k = self.cfg.k_pd;
        for chunk_start in (0..self.pickups.len()).step_by(k) {
            let chunk = &self.pickups[chunk_start..self.pickups.len().min(chunk_start + k)];
            let mut dj = BatchDijkstra::new(n, k);
            for (lane, mp) in chunk.iter().enumerate() {
                dj.seed(mp.vertex, lane, 0);
            }
            dj.run(&self.ch.down_in, |v, labels| {
                scanned += store.scan(
                    v,
                    |_| false,
                    |e| {
                        for (lane, &l) in labels.iter().enumerate() {
                            if l >= INF {
                                continue;
                            }
                            let pair = (e.id as VehicleId, (chunk_start + lane) as u32);
                            if !surviving.contains(&pair) {
                                continue;
                            }
                            let cell = exact.entry(pair).or_insert(INF);
                            *cell = (*cell).min(e.dist + l);
                        }
                    },
                );
                Settle::Continue
            });
            relaxed += dj.relaxed;
        }

        for (&(vid, pi), &d_cur) in &exact {
            let veh = self.fleet.vehicle(vid);
            let m = veh.last_idx();
            let pickup = self.pickups[pi as usize];
            let curloc = Some(self.curlocs[&vid]);
            for idx in 0..self.preps[&vid].ops_at[0].len() {
                let (di, d_next) = self.preps[&vid].ops_at[0][idx];
                self.consider(InsertionPoint {
                    veh: vid,
                    kind: InsType::Pbns,
                    i: 0,
                    j: 0,
                    pickup,
                    dropoff: self.dropoffs[di as usize],
                    dists: LegDists {
                        to_pickup: d_cur,
                        pickup_to_dropoff: self.pd.get(pi as usize, di as usize),
                        dropoff_to_next: d_next,
                        curloc,
                        ..LegDists::default()
                    },
                });
            }
            let p_next = row_dist(p2s_p, vid, veh.stops[1].uid, pi);
            if p_next >= INF {
                continue;
            }
            for j in 1..m {
                for idx in 0..self.preps[&vid].drops_at[j].len() {
                    let ds = self.preps[&vid].drops_at[j][idx];
                    self.consider(InsertionPoint {
                        veh: vid,
                        kind: InsType::Pbns,
                        i: 0,
                        j,
                        pickup,
                        dropoff: self.dropoffs[ds.di as usize],
                        dists: LegDists {
                            to_pickup: d_cur,
                            pickup_to_next: p_next,
                            pickup_to_dropoff: self.pd.get(pi as usize, ds.di as usize),
                            to_dropoff: if ds.merged { 0 } else { ds.to_dropoff },
                            dropoff_to_next: if ds.merged { 0 } else { ds.to_next },
                            curloc,
                            ..LegDists::default()
                        },
                    });
                }
            }
        }
        (scanned, relaxed)
    }

    fn last_leg_params(&self) -> LastLegParams<'_> {
        LastLegParams {
            ch: self.ch,
            buckets: self.last_stop,
            fleet: self.fleet,
            pickups: self.pickups,
            dropoffs: self.dropoffs,
            pd: self.pd,
            dist_to_dest: self.dist_to_dest,
            dest_dropoff: self.dest_dropoff,
            k: self.cfg.k_laststop,
            pruning: &self.cfg.pruning,
        }
    }

    /// Prices every pair from a pickup-after-last-stop distance table.
    fn enumerate_pals(&mut self, table: &BTreeMap<(VehicleId, u32), Time>) {
        for (&(vid, pi), &dist) in table {
            let m = self.fleet.vehicle(vid).last_idx();
            let pickup = self.pickups[pi as usize];
            for di in 0..self.dropoffs.len() {
                self.consider(InsertionPoint {
                    veh: vid,
                    kind: InsType::Pals,
                    i: m,
                    j: m,
                    pickup,
                    dropoff: self.dropoffs[di],
                    dists: LegDists {
                        to_pickup: dist,
                        pickup_to_dropoff: self.pd.get(pi as usize, di),
                        ..LegDists::default()
                    },
                });
            }
        }
    }

    /// Pickup and dropoff appended after the last stop.
    fn pals_phase(&mut self) -> (PhaseCounters, bool) {
        let mut counters = PhaseCounters::default();
        let mut fallback = false;
        match self.cfg.pals {
            PalsStrategy::Individual => {
                let mut cu = self.best.cost();
                let (table, stats) = pals_individual(&self.ctx, &self.last_leg_params(), &mut cu);
                counters.scanned += stats.scanned;
                counters.relaxed += stats.relaxed;
                self.enumerate_pals(&table);
            }
            PalsStrategy::Collective => {
                let out = pals_collective(&self.ctx, &self.last_leg_params(), self.best.cost());
                counters.scanned += out.stats.scanned;
                counters.relaxed += out.stats.relaxed;
                if out.needs_fallback() {
                    fallback = true;
                    let mut cu = self.best.cost().min(out.best_legit.map_or(INF, |b| b.cost));
                    let (table, stats) = pals_individual(&self.ctx, &self.last_leg_params(), &mut cu);
                    counters.scanned += stats.scanned;
                    counters.relaxed += stats.relaxed;
                    self.enumerate_pals(&table);
                } else if let Some(b) = out.best_all {
                    let veh = self.fleet.vehicle(b.veh);
                    let exact = self.ch.query(veh.last_stop().loc, self.pickups[b.pickup as usize].vertex);
                    debug_assert!(exact <= b.dist);
                    let m = veh.last_idx();
                    self.consider(InsertionPoint {
                        veh: b.veh,
                        kind: InsType::Pals,
                        i: m,
                        j: m,
                        pickup: self.pickups[b.pickup as usize],
                        dropoff: self.dropoffs[b.dropoff as usize],
                        dists: LegDists {
                            to_pickup: exact,
                            pickup_to_dropoff: self.pd.get(b.pickup as usize, b.dropoff as usize),
                            ..LegDists::default()
                        },
                    });
                    debug_assert_eq!(self.best.chosen.cost, b.cost.min(self.best.chosen.cost));
                }
            }
        }
        (counters, fallback)
    }

    /// Dropoff appended after the last stop, pickup mid-route.
    fn dals_phase(&mut self) -> PhaseCounters {
        let mut counters = PhaseCounters::default();
        let (table, stats) = match self.cfg.dals {
            DalsStrategy::Individual => dals_individual(&self.ctx, &self.last_leg_params(), self.best.cost()),
            DalsStrategy::Collective => dals_collective(&self.ctx, &self.last_leg_params(), self.best.cost()),
        };
        counters.scanned += stats.scanned;
        counters.relaxed += stats.relaxed;
        for (&(vid, di), &d_to) in &table {
            let veh = self.fleet.vehicle(vid);
            let m = veh.last_idx();
            if m < 2 || !self.preps.contains_key(&vid) {
                continue;
            }
            let dropoff = self.dropoffs[di as usize];
            let merged = dropoff.vertex == veh.stops[m].loc;
            for i in 1..m {
                for idx in 0..self.preps[&vid].picks_at[i].len() {
                    let ps = self.preps[&vid].picks_at[i][idx];
                    if ps.to_next >= INF {
                        continue;
                    }
                    self.consider(InsertionPoint {
                        veh: vid,
                        kind: InsType::Dals,
                        i,
                        j: m,
                        pickup: self.pickups[ps.pi as usize],
                        dropoff,
                        dists: LegDists {
                            to_pickup: ps.to_pickup,
                            pickup_to_next: ps.to_next,
                            pickup_to_dropoff: self.pd.get(ps.pi as usize, di as usize),
                            to_dropoff: if merged { 0 } else { d_to },
                            ..LegDists::default()
                        },
                    });
                }
            }
        }
        counters
    }
}

/// Answers one request against the current state. Does not commit anything;
/// the schedules are left untouched.
pub fn dispatch_request(
    state: &mut EngineState,
    req: &Request,
    cfg: &Config,
) -> (ChosenInsertion, RequestTrace) {
    let EngineState { net, ch, elliptic, last_stop, fleet, pd_calc } = state;
    let weights = cfg.weights();
    let mut trace = RequestTrace::new(req);

    let pickups = find_meeting_points(net, req.origin, cfg.rho, Side::Pickup);
    let dropoffs = find_meeting_points(net, req.destination, cfg.rho, Side::Dropoff);
    trace.num_pickups = pickups.len();
    trace.num_dropoffs = dropoffs.len();

    let walk_dist = dijkstra_until(&net.psg_out, req.origin, &[req.destination])[req.destination as usize];
    let direct_veh = ch.query(req.origin, req.destination);
    let ctx = EvalContext::new(&weights, req.t_req, weights.trip_deadline(direct_veh));
    let best = BestTracker::walk_only(ctx.walking_only(walk_dist), walk_dist);

    if pickups.is_empty() || dropoffs.is_empty() {
        trace.infeasible = best.cost() >= INF;
        return (best.chosen, trace);
    }

    // the vehicles' positions on their current legs, for pickups there
    let curlocs: BTreeMap<VehicleId, (Vertex, Time)> = fleet
        .vehicles
        .iter_mut()
        .filter(|v| !v.is_idle())
        .map(|v| {
            let cl = v.current_location(net, req.t_req);
            (v.id, cl)
        })
        .collect();

    let t0 = Instant::now();
    let ell_p = elliptic.query(ch, &pickups, cfg.k_elliptic);
    let ell_d = elliptic.query(ch, &dropoffs, cfg.k_elliptic);
    trace.elliptic = PhaseCounters {
        scanned: ell_p.scanned + ell_d.scanned,
        relaxed: ell_p.relaxed + ell_d.relaxed,
        micros: t0.elapsed().as_micros() as u64,
    };

    let t0 = Instant::now();
    let delta_max = PdCalc::max_bound(net, ch, req.origin, req.destination, &pickups, &dropoffs);
    let pd = pd_calc.table(ch, &pickups, &dropoffs, delta_max, cfg.k_pd);
    trace.pd = PhaseCounters { scanned: pd.scanned, relaxed: pd.relaxed, micros: t0.elapsed().as_micros() as u64 };

    let pickup_vertices: Vec<Vertex> = pickups.iter().map(|m| m.vertex).collect();
    let to_dest = dijkstra_until(&net.veh_in, req.destination, &pickup_vertices);
    let dist_to_dest: Vec<Time> = pickups.iter().map(|m| to_dest[m.vertex as usize]).collect();
    let dest_dropoff = dropoffs.iter().position(|m| m.vertex == req.destination && m.walk == 0);

    let s2p_p = index_by_stop(&ell_p.stop_to_point);
    let p2s_p = index_by_stop(&ell_p.point_to_stop);
    let s2p_d = index_by_stop(&ell_d.stop_to_point);
    let p2s_d = index_by_stop(&ell_d.point_to_stop);
    let mut cand_vehicles: BTreeSet<VehicleId> = BTreeSet::new();
    for rows in [&s2p_p, &p2s_p, &s2p_d, &p2s_d] {
        cand_vehicles.extend(rows.keys().map(|&(v, _)| v));
    }

    let mut pipe = Pipeline {
        ctx,
        cfg,
        ch,
        fleet,
        last_stop,
        pickups: &pickups,
        dropoffs: &dropoffs,
        pd: &pd,
        dist_to_dest: &dist_to_dest,
        dest_dropoff,
        curlocs: &curlocs,
        cand_vehicles: &cand_vehicles,
        preps: BTreeMap::new(),
        best,
        evals: 0,
    };
    pipe.preps = cand_vehicles
        .iter()
        .map(|&vid| (vid, pipe.prep_vehicle(vid, &s2p_p, &p2s_p, &s2p_d, &p2s_d)))
        .collect();

    let t0 = Instant::now();
    pipe.ordinary_phase();
    trace.ordinary = PhaseCounters { scanned: pipe.take_evals(), relaxed: 0, micros: t0.elapsed().as_micros() as u64 };

    let t0 = Instant::now();
    let (scanned, relaxed) = pipe.pbns_phase(&s2p_p, &p2s_p);
    trace.pbns =
        PhaseCounters { scanned: scanned + pipe.take_evals(), relaxed, micros: t0.elapsed().as_micros() as u64 };

    let t0 = Instant::now();
    let (pals_counters, fallback) = pipe.pals_phase();
    pipe.take_evals();
    trace.pals = PhaseCounters { micros: t0.elapsed().as_micros() as u64, ..pals_counters };
    trace.pals_fallback = fallback;

    let t0 = Instant::now();
    let dals_counters = pipe.dals_phase();
    pipe.take_evals();
    trace.dals = PhaseCounters { micros: t0.elapsed().as_micros() as u64, ..dals_counters };

    trace.infeasible = pipe.best.cost() >= INF;
    (pipe.best.chosen, trace)
}

/// Commits a chosen insertion: retimes the route, reroutes the current leg
/// for a pickup ahead of the next stop, and refreshes the vehicle's bucket
/// entries. Returns what changed, or `None` for a walking-only answer.
pub fn commit_insertion(
    state: &mut EngineState,
    req: &Request,
    chosen: &ChosenInsertion,
    cfg: &Config,
) -> Option<ChangeSummary> {
    let ins0 = chosen.ins.as_ref()?;
    let weights = cfg.weights();
    let mut ins = ins0.clone();

    // the last-leg searches may deliver a distance that overshoots on a
    // departure plateau without changing the cost; commit the exact one
    match ins.kind {
        InsType::Pals => {
            let veh = state.fleet.vehicle(ins.veh);
            ins.dists.to_pickup = state.ch.query(veh.last_stop().loc, ins.pickup.vertex);
        }
        InsType::Dals => {
            let veh = state.fleet.vehicle(ins.veh);
            ins.dists.to_dropoff = state.ch.query(veh.last_stop().loc, ins.dropoff.vertex);
        }
        _ => {}
    }
    let trip_deadline = weights.trip_deadline(state.ch.query(req.origin, req.destination));
    let ctx = EvalContext::new(&weights, req.t_req, trip_deadline);
    let check = ctx.evaluate_exact(state.fleet.vehicle(ins.veh), &ins);
    debug_assert_eq!(check.map(|e| e.cost), Some(chosen.cost));

    let rerouted_leg = if ins.kind == InsType::Pbns {
        let (cv, ready) = ins.dists.curloc.unwrap();
        let veh = state.fleet.vehicle_mut(ins.veh);
        let mut path = if veh.stops[0].t_dep_min >= ready && veh.stops[0].loc == cv {
            vec![(cv, ready)]
        } else {
            let old = veh.first_leg_path(&state.net);
            let pos = old.iter().position(|&p| p == (cv, ready)).expect("current location lies on the first leg");
            old[..=pos].to_vec()
        };
        let onward = shortest_vertex_path(&state.net, cv, ins.pickup.vertex, ready);
        path.extend(onward.into_iter().skip(1));
        Some(path)
    } else {
        None
    };

    let info = RequestInfo { id: req.id, t_req: req.t_req, trip_deadline };
    let veh = state.fleet.vehicle_mut(ins.veh);
    let summary = veh.apply_insertion(&info, &ins, weights.max_wait);
    if let Some(path) = rerouted_leg {
        if veh.stops[1].loc == ins.pickup.vertex {
            veh.install_first_leg_path(path);
        }
    }
    state.elliptic.rebuild_vehicle(&state.ch, state.fleet.vehicle(ins.veh));
    if summary.last_stop_changed {
        state.last_stop.rebuild_vehicle(&state.ch, state.fleet.vehicle(ins.veh));
    }
    Some(summary)
}
