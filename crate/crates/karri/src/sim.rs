//! Discrete-event simulation.
//!
//! Requests are processed in request-time order. Before each one, every
//! vehicle's route is advanced to the current time, finalizing the legs it
//! has driven and the boardings and alightings along them; vehicles whose
//! anchor stop changed get their elliptic bucket entries regenerated. The
//! dispatcher then answers the request and the winning insertion is
//! committed. After the last request the remaining routes play out.
//!
//! Statistics are derived exclusively from the finalized event log, so the
//! numbers in `stats.csv` can always be recomputed from `events.csv`.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::fs;
use std::io;
use std::path::Path;

use crate::buckets::{BucketEntry, BucketStore};
use crate::ch::ContractionHierarchy;
use crate::config::Config;
use crate::dispatch::{commit_insertion, dispatch_request, EngineState, Request, RequestTrace};
use crate::elliptic::EllipticBuckets;
use crate::fleet::{Fleet, InsType, LegRecord, RequestId, RiderEvent, VehicleId};
use crate::graph::RoadNetwork;
use crate::lastleg::LastStopBuckets;
use crate::oracle::Oracle;
use crate::units::{Cost, Time, Vertex, INF};

/// Which dispatcher's cost lands in the `cost` column of the event log.
/// The engine always decides the committed insertions; `Oracle` and `Both`
/// additionally run the brute-force reference on every request and count
/// disagreements.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Mode {
    Karri,
    Oracle,
    Both,
}

#[derive(Debug, Clone, Copy)]
pub struct SimOptions {
    pub mode: Mode,
    /// Check every N commits that regenerating all buckets from scratch
    /// reproduces the incrementally maintained stores.
    pub coherence_every: Option<usize>,
}

impl Default for SimOptions {
    fn default() -> Self {
        SimOptions { mode: Mode::Karri, coherence_every: None }
    }
}

/// One request's line in the event log: the decision, the search effort,
/// and the realized rider times once they are final.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RequestRow {
    pub req: RequestId,
    pub t_req: Time,
    pub kind: InsType,
    pub cost: Cost,
    pub oracle_cost: Option<Cost>,
    pub veh: Option<VehicleId>,
    pub pickup: Option<(Vertex, Time)>,
    pub dropoff: Option<(Vertex, Time)>,
    pub num_pickups: usize,
    pub num_dropoffs: usize,
    pub pals_fallback: bool,
    pub infeasible: bool,
    /// (scanned, relaxed) per phase: elliptic, pd, ordinary, pbns, pals,
    /// dals. Enumeration phases count priced candidates as scans.
    pub effort: [(u64, u64); 6],
    /// Boarding time minus request time; walking riders wait nothing.
    pub wait: Option<Time>,
    /// Arrival at the destination (after the final walk) minus request time.
    pub trip: Option<Time>,
    pub walk: Time,
}

/// Operation totals of one vehicle, all in deciseconds.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VehicleOp {
    pub veh: VehicleId,
    pub drive: Time,
    pub op_wait: Time,
    /// Riders-aboard weighted by driving time.
    pub occupancy_weighted: i64,
}

/// Aggregates over the whole run, kept as exact integer totals; averages
/// are derived on demand.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct SimStats {
    pub riders_served: u64,
    pub riders_walked: u64,
    pub riders_unserved: u64,
    pub total_wait: i64,
    pub total_trip: i64,
    pub total_walk: i64,
    pub total_drive: i64,
    pub total_op_wait: i64,
    pub occupancy_weighted: i64,
    pub per_vehicle: Vec<VehicleOp>,
}

impl SimStats {
    fn riders(&self) -> u64 {
        self.riders_served + self.riders_walked
    }

    pub fn avg_wait(&self) -> f64 {
        ratio(self.total_wait, self.riders() as i64)
    }

    pub fn avg_trip(&self) -> f64 {
        ratio(self.total_trip, self.riders() as i64)
    }

    /// Mean riders aboard over driving time.
    pub fn avg_occupancy(&self) -> f64 {
        ratio(self.occupancy_weighted, self.total_drive)
    }

    pub fn total_op_time(&self) -> Time {
        self.total_drive + self.total_op_wait
    }
}

fn ratio(num: i64, den: i64) -> f64 {
    if den == 0 {
        0.0
    } else {
        num as f64 / den as f64
    }
}

#[derive(Debug)]
pub struct SimOutcome {
    pub stats: SimStats,
    pub requests: Vec<RequestRow>,
    pub legs: Vec<LegRecord>,
    /// Requests where the engine and the oracle disagreed on the best cost.
    pub mismatches: u64,
    /// Failed sampled from-scratch bucket regeneration checks.
    pub coherence_failures: u64,
    /// Capacity or deadline breaches observed in the realized schedule.
    pub invariant_violations: u64,
}

fn trace_effort(t: &RequestTrace) -> [(u64, u64); 6] {
    [
        (t.elliptic.scanned, t.elliptic.relaxed),
        (t.pd.scanned, t.pd.relaxed),
        (t.ordinary.scanned, t.ordinary.relaxed),
        (t.pbns.scanned, t.pbns.relaxed),
        (t.pals.scanned, t.pals.relaxed),
        (t.dals.scanned, t.dals.relaxed),
    ]
}

/// Advances every vehicle to `now`, finalizing events; vehicles that passed
/// a stop get fresh elliptic entries for their shortened route.
pub fn advance_all(state: &mut EngineState, now: Time, legs: &mut Vec<LegRecord>, riders: &mut Vec<RiderEvent>) {
    let EngineState { elliptic, ch, fleet, .. } = state;
    for v in &mut fleet.vehicles {
        let anchor = v.stops[0].uid;
        v.advance_to(now, legs, riders);
        if v.stops[0].uid != anchor {
            elliptic.rebuild_vehicle(ch, v);
        }
    }
}

fn snapshot(store: &BucketStore, n: usize) -> Vec<(Vertex, BucketEntry)> {
    let mut out = Vec::new();
    for v in 0..n as Vertex {
        let mut es = store.entries(v).to_vec();
        es.sort_by_key(|e| (e.key, e.id, e.dist));
        out.extend(es.into_iter().map(|e| (v, e)));
    }
    out
}

/// Whether regenerating every bucket from scratch reproduces the live
/// stores entry for entry.
pub fn buckets_coherent(state: &EngineState, cfg: &Config) -> bool {
    let n = state.net.num_vertices();
    let mut fresh_e = EllipticBuckets::new(n, cfg.pruning.sorted_buckets, cfg.pruning.elliptic_radius);
    let mut fresh_l = LastStopBuckets::new(n, cfg.pruning.sorted_buckets);
    for v in &state.fleet.vehicles {
        fresh_e.rebuild_vehicle(&state.ch, v);
        fresh_l.rebuild_vehicle(&state.ch, v);
    }
    snapshot(fresh_e.source_store(), n) == snapshot(state.elliptic.source_store(), n)
        && snapshot(fresh_e.target_store(), n) == snapshot(state.elliptic.target_store(), n)
        && snapshot(fresh_l.store(), n) == snapshot(state.last_stop.store(), n)
}

/// Runs the whole instance. Requests must be sorted by request time.
pub fn run_simulation(
    net: RoadNetwork,
    fleet: Fleet,
    requests: &[Request],
    cfg: &Config,
    opts: &SimOptions,
) -> SimOutcome {
    debug_assert!(requests.windows(2).all(|w| w[0].t_req <= w[1].t_req));
    let ch = ContractionHierarchy::build(&net.veh_out);
    let mut state = EngineState::new(net, ch, fleet, cfg);

    let mut legs: Vec<LegRecord> = Vec::new();
    let mut riders: Vec<RiderEvent> = Vec::new();
    let mut rows: Vec<RequestRow> = Vec::new();
    // rider id -> (dropoff walk, boarding deadline, alighting deadline)
    let mut commitments: BTreeMap<RequestId, (Time, Time, Time)> = BTreeMap::new();
    let mut mismatches = 0;
    let mut coherence_failures = 0;

    for (idx, req) in requests.iter().enumerate() {
        advance_all(&mut state, req.t_req, &mut legs, &mut riders);
        let (chosen, trace) = dispatch_request(&mut state, req, cfg);
        let oracle_cost = if opts.mode == Mode::Karri {
            None
        } else {
            let EngineState { net, fleet, .. } = &mut state;
            let mut oracle = Oracle::new(net);
            Some(oracle.best_assignment(fleet, req, cfg).cost)
        };
        if oracle_cost.is_some_and(|c| c != chosen.cost) {
            mismatches += 1;
        }
        commit_insertion(&mut state, req, &chosen, cfg);

        if let Some(ins) = &chosen.ins {
            let veh = state.fleet.vehicle(ins.veh);
            let mut bd = INF;
            let mut ad = INF;
            for s in &veh.stops {
                for &(r, d) in &s.boardings {
                    if r == req.id {
                        bd = d;
                    }
                }
                for &(r, d) in &s.alightings {
                    if r == req.id {
                        ad = d;
                    }
                }
            }
            commitments.insert(req.id, (ins.dropoff.walk, bd, ad));
        }

        let reported = match opts.mode {
            Mode::Oracle => oracle_cost.unwrap(),
            _ => chosen.cost,
        };
        rows.push(RequestRow {
            req: req.id,
            t_req: req.t_req,
            kind: chosen.kind,
            cost: reported,
            oracle_cost,
            veh: chosen.ins.as_ref().map(|i| i.veh),
            pickup: chosen.ins.as_ref().map(|i| (i.pickup.vertex, i.pickup.walk)),
            dropoff: chosen.ins.as_ref().map(|i| (i.dropoff.vertex, i.dropoff.walk)),
            num_pickups: trace.num_pickups,
            num_dropoffs: trace.num_dropoffs,
            pals_fallback: trace.pals_fallback,
            infeasible: trace.infeasible,
            effort: trace_effort(&trace),
            wait: None,
            trip: None,
            walk: match &chosen.ins {
                Some(i) => i.pickup.walk + i.dropoff.walk,
                None if chosen.walk_dist < INF && !trace.infeasible => chosen.walk_dist,
                None => 0,
            },
        });

        if let Some(every) = opts.coherence_every {
            if every > 0 && (idx + 1) % every == 0 && !buckets_coherent(&state, cfg) {
                coherence_failures += 1;
            }
        }
    }

    for v in &mut state.fleet.vehicles {
        v.drain(&mut legs, &mut riders);
    }

    // fold the realized boardings and alightings back into the rows
    let mut invariant_violations = 0;
    let mut board_at: BTreeMap<RequestId, Time> = BTreeMap::new();
    let mut alight_at: BTreeMap<RequestId, Time> = BTreeMap::new();
    for ev in &riders {
        let slot = if ev.boarding { &mut board_at } else { &mut alight_at };
        if slot.insert(ev.req, ev.time).is_some() {
            invariant_violations += 1;
        }
    }
    for row in &mut rows {
        match commitments.get(&row.req) {
            Some(&(w_d, bd, ad)) => {
                let board = board_at.get(&row.req).copied();
                let alight = alight_at.get(&row.req).copied();
                match (board, alight) {
                    (Some(b), Some(a)) => {
                        row.wait = Some(b - row.t_req);
                        row.trip = Some(a + w_d - row.t_req);
                        if b > bd || a > ad {
                            invariant_violations += 1;
                        }
                    }
                    _ => invariant_violations += 1,
                }
            }
            None if row.kind == InsType::WalkOnly && !row.infeasible => {
                row.wait = Some(0);
                row.trip = Some(row.walk);
            }
            None => {}
        }
    }
    for leg in &legs {
        if leg.occupancy > state.fleet.vehicle(leg.veh).capacity {
            invariant_violations += 1;
        }
    }

    let stats = recompute_stats(&rows, &legs);
    SimOutcome { stats, requests: rows, legs, mismatches, coherence_failures, invariant_violations }
}

/// Builds the aggregate statistics from the event log alone. The simulation
/// itself uses this, so a recomputation from `events.csv` is exact.
pub fn recompute_stats(rows: &[RequestRow], legs: &[LegRecord]) -> SimStats {
    let mut s = SimStats::default();
    for row in rows {
        match (row.wait, row.trip) {
            (Some(w), Some(t)) => {
                if row.veh.is_some() {
                    s.riders_served += 1;
                } else {
                    s.riders_walked += 1;
                }
                s.total_wait += w;
                s.total_trip += t;
                s.total_walk += row.walk;
            }
            _ => s.riders_unserved += 1,
        }
    }
    let mut per: BTreeMap<VehicleId, VehicleOp> = BTreeMap::new();
    for leg in legs {
        let drive = leg.arr - leg.dep;
        let e = per
            .entry(leg.veh)
            .or_insert(VehicleOp { veh: leg.veh, drive: 0, op_wait: 0, occupancy_weighted: 0 });
        e.drive += drive;
        e.op_wait += leg.op_wait;
        e.occupancy_weighted += leg.occupancy as i64 * drive;
        s.total_drive += drive;
        s.total_op_wait += leg.op_wait;
        s.occupancy_weighted += leg.occupancy as i64 * drive;
    }
    s.per_vehicle = per.into_values().collect();
    s
}

fn opt_str<T: std::fmt::Display>(v: Option<T>) -> String {
    v.map_or(String::new(), |x| x.to_string())
}

/// Writes the event log: one `request` line per request with the decision,
/// effort counters and realized times, and one `vehicle` line per driven
/// leg.
pub fn write_events_csv(path: &Path, rows: &[RequestRow], legs: &[LegRecord]) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(
        "kind,id,t_req,choice,cost,oracle_cost,veh,pickup,pickup_walk,dropoff,dropoff_walk,\
         num_pickups,num_dropoffs,pals_fallback,infeasible,wait,trip,walk,\
         scan_elliptic,relax_elliptic,scan_pd,relax_pd,scan_ordinary,relax_ordinary,\
         scan_pbns,relax_pbns,scan_pals,relax_pals,scan_dals,relax_dals,dep,arr,occupancy,op_wait\n",
    );
    for r in rows {
        let _ = write!(
            out,
            "request,{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{},{}",
            r.req,
            r.t_req,
            r.kind.label(),
            r.cost,
            opt_str(r.oracle_cost),
            opt_str(r.veh),
            opt_str(r.pickup.map(|p| p.0)),
            opt_str(r.pickup.map(|p| p.1)),
            opt_str(r.dropoff.map(|d| d.0)),
            opt_str(r.dropoff.map(|d| d.1)),
            r.num_pickups,
            r.num_dropoffs,
            r.pals_fallback as u8,
            r.infeasible as u8,
            opt_str(r.wait),
            opt_str(r.trip),
            r.walk,
        );
        for (s, x) in r.effort {
            let _ = write!(out, ",{s},{x}");
        }
        out.push_str(",,,,\n");
    }
    for l in legs {
        let _ = writeln!(
            out,
            "vehicle,{}{}{},{},{},{}",
            l.veh,
            ",".repeat(29),
            l.dep,
            l.arr,
            l.occupancy,
            l.op_wait
        );
    }
    fs::write(path, out)
}

/// Reads an event log back; the inverse of `write_events_csv`.
pub fn read_events_csv(path: &Path) -> io::Result<(Vec<RequestRow>, Vec<LegRecord>)> {
    let text = fs::read_to_string(path)?;
    let mut rows = Vec::new();
    let mut legs = Vec::new();
    let bad = |line: usize, what: &str| {
        io::Error::new(io::ErrorKind::InvalidData, format!("events.csv line {}: {what}", line + 1))
    };
    for (ln, line) in text.lines().enumerate().skip(1) {
        let f: Vec<&str> = line.split(',').collect();
        if f.len() != 34 {
            return Err(bad(ln, "wrong field count"));
        }
        let int = |s: &str| s.parse::<i64>().map_err(|_| bad(ln, "bad integer"));
        let opt_int = |s: &str| -> io::Result<Option<i64>> {
            if s.is_empty() { Ok(None) } else { Ok(Some(int(s)?)) }
        };
        match f[0] {
            "request" => {
                let kind = match f[3] {
                    "ordinary" => InsType::Ordinary,
                    "paired" => InsType::OrdinaryPaired,
                    "pbns" => InsType::Pbns,
                    "pals" => InsType::Pals,
                    "dals" => InsType::Dals,
                    "walkonly" => InsType::WalkOnly,
                    _ => return Err(bad(ln, "unknown insertion type")),
                };
                let mut effort = [(0u64, 0u64); 6];
                for (p, e) in effort.iter_mut().enumerate() {
                    *e = (int(f[18 + 2 * p])? as u64, int(f[19 + 2 * p])? as u64);
                }
                let pair = |v: Option<i64>, w: Option<i64>| v.map(|x| (x as Vertex, w.unwrap_or(0)));
                rows.push(RequestRow {
                    req: int(f[1])? as RequestId,
                    t_req: int(f[2])?,
                    kind,
                    cost: int(f[4])?,
                    oracle_cost: opt_int(f[5])?,
                    veh: opt_int(f[6])?.map(|v| v as VehicleId),
                    pickup: pair(opt_int(f[7])?, opt_int(f[8])?),
                    dropoff: pair(opt_int(f[9])?, opt_int(f[10])?),
                    num_pickups: int(f[11])? as usize,
                    num_dropoffs: int(f[12])? as usize,
                    pals_fallback: f[13] == "1",
                    infeasible: f[14] == "1",
                    wait: opt_int(f[15])?,
                    trip: opt_int(f[16])?,
                    walk: int(f[17])?,
                    effort,
                });
            }
            "vehicle" => {
                legs.push(LegRecord {
                    veh: int(f[1])? as VehicleId,
                    dep: int(f[30])?,
                    arr: int(f[31])?,
                    occupancy: int(f[32])? as u32,
                    op_wait: int(f[33])?,
                });
            }
            _ => return Err(bad(ln, "unknown row kind")),
        }
    }
    Ok((rows, legs))
}

/// Writes the aggregate table: integer totals first, derived averages last.
pub fn write_stats_csv(path: &Path, stats: &SimStats) -> io::Result<()> {
    let mut out = String::new();
    out.push_str(
        "riders_served,riders_walked,riders_unserved,total_wait,total_trip,total_walk,\
         total_drive,total_op_wait,occupancy_weighted,avg_wait,avg_trip,avg_occupancy,total_op_time\n",
    );
    let _ = writeln!(
        out,
        "{},{},{},{},{},{},{},{},{},{:.6},{:.6},{:.6},{}",
        stats.riders_served,
        stats.riders_walked,
        stats.riders_unserved,
        stats.total_wait,
        stats.total_trip,
        stats.total_walk,
        stats.total_drive,
        stats.total_op_wait,
        stats.occupancy_weighted,
        stats.avg_wait(),
        stats.avg_trip(),
        stats.avg_occupancy(),
        stats.total_op_time(),
    );
    fs::write(path, out)
}
