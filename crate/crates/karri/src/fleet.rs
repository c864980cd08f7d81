//! Vehicle routes and schedules.
//!
//! A route is a sequence of stops. `stops[0]` is always the previous or
//! current stop; later stops are in the future. Each stop keeps its earliest
//! arrival and departure (`t_arr_min`, `t_dep_min`, departure can exceed
//! arrival when the vehicle waits for a boarding rider) and a latest
//! permissible arrival `t_arr_max` propagated backwards from rider deadlines
//! and the service end, so that arriving by `t_arr_max` at a stop guarantees
//! every later deadline can still be met. The maximum detour an insertion
//! may place on a leg follows directly from these caps.
//!
//! Inserting a request retimes the suffix of the route with the residual
//! delay recurrence: a delay shrinks by the scheduled wait at each stop and
//! never goes negative. Rebuilding the schedule from scratch must give the
//! same times; tests hold the two against each other.

use std::collections::HashMap;

use crate::graph::{BatchDijkstra, MeetingPoint, RoadNetwork, Settle};
use crate::units::{Time, Vertex, INF};

pub type VehicleId = u32;
pub type RequestId = u32;
pub type StopUid = u32;

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stop {
    pub uid: StopUid,
    pub loc: Vertex,
    pub t_arr_min: Time,
    pub t_dep_min: Time,
    /// Latest permissible arrival; INF when nothing constrains it.
    pub t_arr_max: Time,
    /// Riders on board on the leg leaving this stop.
    pub occupancy_after: u32,
    /// Assigned riders alighting here.
    pub num_dropoffs: u32,
    /// (request, departure deadline) per boarding rider.
    pub boardings: Vec<(RequestId, Time)>,
    /// (request, arrival deadline) per alighting rider.
    pub alightings: Vec<(RequestId, Time)>,
    /// Whether a wait at this stop counts as vehicle operation time (it was
    /// created while the stop had a successor, i.e. mid-route).
    pub wait_is_op: bool,
}

impl Stop {
    fn new(uid: StopUid, loc: Vertex, t_arr: Time, t_dep: Time) -> Stop {
        Stop {
            uid,
            loc,
            t_arr_min: t_arr,
            t_dep_min: t_dep,
            t_arr_max: INF,
            occupancy_after: 0,
            num_dropoffs: 0,
            boardings: Vec::new(),
            alightings: Vec::new(),
            wait_is_op: false,
        }
    }

    pub fn vehicle_wait(&self) -> Time {
        self.t_dep_min - self.t_arr_min
    }

    pub fn min_boarding_deadline(&self) -> Time {
        self.boardings.iter().map(|b| b.1).min().unwrap_or(INF)
    }
}

/// The five insertion shapes, in tie-break order, plus the no-vehicle
/// fallback. `i` is the stop index the pickup follows, `j` the index the
/// dropoff follows; `m` is the last stop index.
///
///   Ordinary:        0 < i < j < m
///   OrdinaryPaired:  0 < i = j < m
///   Pbns:            0 = i <= j < m   (pickup before next stop)
///   Pals:            0 <= i = j = m   (pickup after last stop)
///   Dals:            0 < i < j = m    (dropoff after last stop)
#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord)]
pub enum InsType {
    Ordinary,
    OrdinaryPaired,
    Pbns,
    Pals,
    Dals,
    WalkOnly,
}

impl InsType {
    pub fn label(self) -> &'static str {
        match self {
            InsType::Ordinary => "ordinary",
            InsType::OrdinaryPaired => "paired",
            InsType::Pbns => "pbns",
            InsType::Pals => "pals",
            InsType::Dals => "dals",
            InsType::WalkOnly => "walkonly",
        }
    }

    /// Position in the tie order among equal-cost assignments. Serving the
    /// request on foot wins ties so the fleet is only disturbed when a
    /// vehicle strictly improves on walking.
    pub fn tie_rank(self) -> u8 {
        match self {
            InsType::WalkOnly => 0,
            InsType::Ordinary => 1,
            InsType::OrdinaryPaired => 2,
            InsType::Pbns => 3,
            InsType::Pals => 4,
            InsType::Dals => 5,
        }
    }
}

/// Distances an insertion needs; unused legs stay at INF and are ignored by
/// the geometry in question.
#[derive(Debug, Clone, Copy)]
pub struct LegDists {
    /// Pickup anchor to pickup: from `s_i`, the current location, or the
    /// last stop depending on the insertion type.
    pub to_pickup: Time,
    /// Pickup to `s_{i+1}` (unpaired mid-route pickups).
    pub pickup_to_next: Time,
    /// Pickup to dropoff (paired insertions).
    pub pickup_to_dropoff: Time,
    /// `s_j` to dropoff (unpaired dropoffs, including after the last stop).
    pub to_dropoff: Time,
    /// Dropoff to `s_{j+1}` (mid-route dropoffs).
    pub dropoff_to_next: Time,
    /// Current-location vertex and the earliest departure there (set for
    /// pickup-before-next-stop insertions).
    pub curloc: Option<(Vertex, Time)>,
}

impl Default for LegDists {
    fn default() -> Self {
        LegDists {
            to_pickup: INF,
            pickup_to_next: INF,
            pickup_to_dropoff: INF,
            to_dropoff: INF,
            dropoff_to_next: INF,
            curloc: None,
        }
    }
}

/// A fully specified candidate insertion of one request into one route.
#[derive(Debug, Clone)]
pub struct InsertionPoint {
    pub veh: VehicleId,
    pub kind: InsType,
    pub i: usize,
    pub j: usize,
    pub pickup: MeetingPoint,
    pub dropoff: MeetingPoint,
    pub dists: LegDists,
}

/// Request data the schedule needs when committing an insertion.
#[derive(Debug, Clone, Copy)]
pub struct RequestInfo {
    pub id: RequestId,
    pub t_req: Time,
    /// Absolute trip deadline offset: rider must reach the destination by
    /// `t_req + trip_deadline`.
    pub trip_deadline: Time,
}

/// Returns whether pickup and dropoff merge onto existing stops instead of
/// creating new ones. Pickups merge onto `s_i` when co-located, except for
/// pickup-before-next-stop insertions whose anchor is the current location
/// rather than a stop. Dropoffs merge onto `s_j` when co-located and the
/// insertion is not paired.
pub fn merge_flags(kind: InsType, route: &[Stop], ins: &InsertionPoint) -> (bool, bool) {
    let merge_p = kind != InsType::Pbns && route[ins.i].loc == ins.pickup.vertex;
    let merge_d = ins.i < ins.j && route[ins.j].loc == ins.dropoff.vertex;
    (merge_p, merge_d)
}

#[derive(Debug, Clone)]
pub struct Vehicle {
    pub id: VehicleId,
    pub capacity: u32,
    pub service_start: Time,
    pub service_end: Time,
    pub stops: Vec<Stop>,
    next_uid: StopUid,
    /// Vertex path of the current first leg with absolute arrival times;
    /// populated lazily, replaced explicitly after a current-location
    /// insertion rerouted the leg.
    first_leg_path: Option<(StopUid, StopUid, Vec<(Vertex, Time)>)>,
}

/// What changed structurally during a commit; bucket maintenance keys off
/// this.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct ChangeSummary {
    pub veh: VehicleId,
    pub last_stop_changed: bool,
}

/// One completed leg, reported by `advance_to` for statistics.
#[derive(Debug, Clone, Copy)]
pub struct LegRecord {
    pub veh: VehicleId,
    pub dep: Time,
    pub arr: Time,
    pub occupancy: u32,
    /// Wait time at the departed stop that counts as operation time.
    pub op_wait: Time,
}

/// A rider boarding or alighting that became final.
#[derive(Debug, Clone, Copy)]
pub struct RiderEvent {
    pub req: RequestId,
    pub veh: VehicleId,
    pub time: Time,
    pub boarding: bool,
}

impl Vehicle {
    pub fn new(id: VehicleId, loc: Vertex, service_start: Time, service_end: Time, capacity: u32) -> Vehicle {
        Vehicle {
            id,
            capacity,
            service_start,
            service_end,
            stops: vec![Stop::new(0, loc, service_start, service_start)],
            next_uid: 1,
            first_leg_path: None,
        }
    }

    /// Index of the last stop; also the number of future stops.
    pub fn last_idx(&self) -> usize {
        self.stops.len() - 1
    }

    pub fn last_stop(&self) -> &Stop {
        self.stops.last().unwrap()
    }

    pub fn is_idle(&self) -> bool {
        self.stops.len() == 1
    }

    /// Travel time of leg `a` as scheduled.
    pub fn leg_time(&self, a: usize) -> Time {
        self.stops[a + 1].t_arr_min - self.stops[a].t_dep_min
    }

    /// Maximum delay an insertion may introduce at `s_{a+1}` without any
    /// later arrival cap breaking.
    pub fn max_delay(&self, a: usize) -> Time {
        let s = &self.stops[a + 1];
        if s.t_arr_max >= INF {
            INF
        } else {
            s.t_arr_max - s.t_arr_min
        }
    }

    /// Leeway of leg `a` for elliptic bucket generation: the largest
    /// distance either sub-leg of a detour via a meeting point may have.
    pub fn elliptic_leeway(&self, a: usize) -> Time {
        let cap = self.stops[a + 1].t_arr_max;
        if cap >= INF {
            INF
        } else {
            cap - self.stops[a].t_dep_min
        }
    }

    /// Recomputes `t_arr_max` for every stop from rider deadlines and the
    /// service end, with the backward wait-credit propagation.
    pub fn recompute_deadlines(&mut self) {
        let last = self.last_idx();
        let mut prop = INF;
        for a in (0..self.stops.len()).rev() {
            let mut cap = if a == last { self.service_end } else { prop };
            for &(_, d) in &self.stops[a].boardings {
                cap = cap.min(d);
            }
            for &(_, d) in &self.stops[a].alightings {
                cap = cap.min(d);
            }
            self.stops[a].t_arr_max = cap;
            if a > 0 {
                let leg = self.stops[a].t_arr_min - self.stops[a - 1].t_dep_min;
                prop = if cap >= INF { INF } else { cap - leg };
            }
        }
    }

    /// Drops completed stops. A stop is completed once the vehicle has
    /// arrived at its successor; the successor becomes the new anchor.
    pub fn advance_to(&mut self, now: Time, legs: &mut Vec<LegRecord>, riders: &mut Vec<RiderEvent>) {
        while self.stops.len() > 1 && self.stops[1].t_arr_min <= now {
            let popped = self.stops.remove(0);
            let arrived = &self.stops[0];
            legs.push(LegRecord {
                veh: self.id,
                dep: popped.t_dep_min,
                arr: arrived.t_arr_min,
                occupancy: popped.occupancy_after,
                op_wait: if popped.wait_is_op { popped.vehicle_wait() } else { 0 },
            });
            for &(req, _) in &popped.boardings {
                riders.push(RiderEvent { req, veh: self.id, time: popped.t_dep_min, boarding: true });
            }
            for &(req, _) in &arrived.alightings {
                riders.push(RiderEvent { req, veh: self.id, time: arrived.t_arr_min, boarding: false });
            }
            self.first_leg_path = None;
        }
    }

    /// Plays out the rest of the route; every remaining leg and rider event
    /// becomes final. The last stop is never popped, but it cannot carry
    /// boardings and its alightings are emitted when it becomes the anchor.
    pub fn drain(&mut self, legs: &mut Vec<LegRecord>, riders: &mut Vec<RiderEvent>) {
        self.advance_to(INF, legs, riders);
        debug_assert!(self.stops[0].boardings.is_empty() || self.stops.len() > 1);
    }

    /// The next vertex the vehicle reaches on its current leg and the time
    /// it does. Idle vehicles report their stop location at `now`; parked
    /// vehicles report their stop location at the scheduled departure.
    pub fn current_location(&mut self, net: &RoadNetwork, now: Time) -> (Vertex, Time) {
        if self.is_idle() {
            return (self.stops[0].loc, now);
        }
        if self.stops[0].t_dep_min >= now {
            return (self.stops[0].loc, self.stops[0].t_dep_min);
        }
        let path = self.first_leg_path(net);
        for &(v, t) in &path {
            if t >= now {
                return (v, t);
            }
        }
        unreachable!("vehicle {} past its first leg at {}", self.id, now);
    }

    /// Vertex path of the first leg with absolute arrival times, starting at
    /// the anchor stop and ending at the next stop.
    pub fn first_leg_path(&mut self, net: &RoadNetwork) -> Vec<(Vertex, Time)> {
        let (s0, s1) = (&self.stops[0], &self.stops[1]);
        if let Some((u0, u1, path)) = &self.first_leg_path {
            if *u0 == s0.uid && *u1 == s1.uid {
                return path.clone();
            }
        }
        let path = shortest_vertex_path(net, s0.loc, s1.loc, s0.t_dep_min);
        let travelled = path.last().unwrap().1 - s0.t_dep_min;
        assert_eq!(
            travelled,
            self.leg_time(0),
            "first leg of vehicle {} is not a shortest path; a rerouted leg must install its path explicitly",
            self.id
        );
        self.first_leg_path = Some((s0.uid, s1.uid, path.clone()));
        path
    }

    /// Installs the path of a rerouted first leg (after an insertion at the
    /// current location).
    pub fn install_first_leg_path(&mut self, path: Vec<(Vertex, Time)>) {
        debug_assert!(self.stops.len() >= 2);
        debug_assert_eq!(path.first().unwrap().0, self.stops[0].loc);
        debug_assert_eq!(path.last().unwrap().0, self.stops[1].loc);
        debug_assert_eq!(path.last().unwrap().1, self.stops[1].t_arr_min);
        self.first_leg_path = Some((self.stops[0].uid, self.stops[1].uid, path));
    }

    fn fresh_uid(&mut self) -> StopUid {
        let u = self.next_uid;
        self.next_uid += 1;
        u
    }

    /// Commits an insertion, retiming the suffix with the residual-delay
    /// recurrence and attaching the new rider's deadlines (clamped so the
    /// schedule stays feasible even when a soft constraint was accepted in
    /// violation). Returns what changed for bucket maintenance.
    pub fn apply_insertion(&mut self, req: &RequestInfo, ins: &InsertionPoint, max_wait: Time) -> ChangeSummary {
        let kind = ins.kind;
        let old_last_uid = self.last_stop().uid;
        let (merge_p, merge_d) = merge_flags(kind, &self.stops, ins);
        let w_p = ins.pickup.walk;
        let w_d = ins.dropoff.walk;

        if kind == InsType::Pals {
            self.apply_after_last(req, ins, merge_p, max_wait);
        } else {
            // Pickup side: either raise the departure of s_i (merge) or
            // splice in a new stop. `delay` is the arrival delay at the stop
            // that follows the pickup.
            let i = ins.i;
            let mut pickup_pos = i;
            let dep_p;
            if merge_p {
                let s = &mut self.stops[i];
                dep_p = s.t_dep_min.max(req.t_req + w_p);
                s.t_dep_min = dep_p;
                s.boardings.push((req.id, (req.t_req + max_wait).max(dep_p)));
                if s.t_dep_min > s.t_arr_min {
                    s.wait_is_op = true;
                }
            } else {
                let base_dep = match ins.dists.curloc {
                    Some((_, ready)) => {
                        debug_assert_eq!(kind, InsType::Pbns);
                        ready
                    }
                    None => self.stops[i].t_dep_min,
                };
                let t_arr = base_dep + ins.dists.to_pickup;
                dep_p = t_arr.max(req.t_req + w_p);
                let mut stop = Stop::new(0, ins.pickup.vertex, t_arr, dep_p);
                stop.uid = self.fresh_uid();
                stop.boardings.push((req.id, (req.t_req + max_wait).max(dep_p)));
                stop.wait_is_op = dep_p > t_arr;
                stop.occupancy_after = self.stops[i].occupancy_after;
                pickup_pos = i + 1;
                self.stops.insert(pickup_pos, stop);
            }

            // Dropoff side.
            let alight_pos;
            let arr_alight;
            if ins.i == ins.j {
                // paired: dropoff right after the pickup
                let arr_d = dep_p + ins.dists.pickup_to_dropoff;
                let mut stop = Stop::new(self.fresh_uid(), ins.dropoff.vertex, arr_d, arr_d);
                stop.occupancy_after = self.stops[pickup_pos].occupancy_after;
                alight_pos = pickup_pos + 1;
                arr_alight = arr_d;
                self.stops.insert(alight_pos, stop);
                // delay continues into the old successor, if any
                let next = alight_pos + 1;
                if next < self.stops.len() {
                    let arr_next = arr_d + ins.dists.dropoff_to_next;
                    let delay = arr_next - self.stops[next].t_arr_min;
                    self.propagate_delay(next, delay);
                }
            } else {
                // propagate the pickup delay up to s_j
                let after_pickup = pickup_pos + 1;
                let arr_next = dep_p + ins.dists.pickup_to_next;
                let mut delay = arr_next - self.stops[after_pickup].t_arr_min;
                let j_pos = if merge_p { ins.j } else { ins.j + 1 };
                for a in after_pickup..=j_pos {
                    let s = &mut self.stops[a];
                    let new_arr = s.t_arr_min + delay.max(0);
                    let new_dep = s.t_dep_min.max(new_arr);
                    delay = new_dep - s.t_dep_min;
                    s.t_arr_min = new_arr;
                    s.t_dep_min = new_dep;
                }
                let dep_j = self.stops[j_pos].t_dep_min;
                if merge_d {
                    alight_pos = j_pos;
                    arr_alight = self.stops[j_pos].t_arr_min;
                    if j_pos + 1 < self.stops.len() {
                        self.propagate_delay(j_pos + 1, delay.max(0));
                    }
                } else {
                    let arr_d = dep_j + ins.dists.to_dropoff;
                    let mut stop = Stop::new(self.fresh_uid(), ins.dropoff.vertex, arr_d, arr_d);
                    stop.occupancy_after = self.stops[j_pos].occupancy_after;
                    alight_pos = j_pos + 1;
                    arr_alight = arr_d;
                    self.stops.insert(alight_pos, stop);
                    let next = alight_pos + 1;
                    if next < self.stops.len() {
                        let arr_next = arr_d + ins.dists.dropoff_to_next;
                        let delay = arr_next - self.stops[next].t_arr_min;
                        self.propagate_delay(next, delay);
                    }
                }
            }

            // rider bookkeeping
            let dropoff_deadline = (req.t_req + req.trip_deadline).saturating_sub(w_d).max(arr_alight).min(INF);
            let alight = &mut self.stops[alight_pos];
            alight.alightings.push((req.id, dropoff_deadline));
            alight.num_dropoffs += 1;
            for a in pickup_pos..alight_pos {
                self.stops[a].occupancy_after += 1;
            }
        }

        self.recompute_deadlines();
        ChangeSummary {
            veh: self.id,
            last_stop_changed: self.last_stop().uid != old_last_uid,
        }
    }

    /// Appends pickup and dropoff after the last stop. The vehicle postpones
    /// its departure so it never waits at the new pickup.
    fn apply_after_last(&mut self, req: &RequestInfo, ins: &InsertionPoint, merge_p: bool, max_wait: Time) {
        let w_p = ins.pickup.walk;
        let last = self.last_idx();
        let t = self.stops[last].t_dep_min.max(req.t_req);
        let (pickup_pos, dep_p) = if merge_p {
            let dep = t.max(req.t_req + w_p);
            let s = &mut self.stops[last];
            s.t_dep_min = dep;
            s.boardings.push((req.id, (req.t_req + max_wait).max(dep)));
            (last, dep)
        } else {
            let d = ins.dists.to_pickup;
            let dep_last = t.max(req.t_req + w_p - d);
            self.stops[last].t_dep_min = dep_last;
            let arr = dep_last + d;
            let mut stop = Stop::new(self.fresh_uid(), ins.pickup.vertex, arr, arr);
            stop.boardings.push((req.id, (req.t_req + max_wait).max(arr)));
            self.stops.push(stop);
            (last + 1, arr)
        };
        let arr_d = dep_p + ins.dists.pickup_to_dropoff;
        let mut stop = Stop::new(self.fresh_uid(), ins.dropoff.vertex, arr_d, arr_d);
        let deadline = (req.t_req + req.trip_deadline).saturating_sub(ins.dropoff.walk).max(arr_d).min(INF);
        stop.alightings.push((req.id, deadline));
        stop.num_dropoffs = 1;
        self.stops.push(stop);
        self.stops[pickup_pos].occupancy_after += 1;
    }

    /// Applies an arrival delay at `from` and lets scheduled waits absorb it
    /// on the way down the route.
    fn propagate_delay(&mut self, from: usize, delay: Time) {
        let mut delay = delay.max(0);
        for a in from..self.stops.len() {
            if delay == 0 {
                break;
            }
            let s = &mut self.stops[a];
            let new_arr = s.t_arr_min + delay;
            let new_dep = s.t_dep_min.max(new_arr);
            delay = new_dep - s.t_dep_min;
            s.t_arr_min = new_arr;
            s.t_dep_min = new_dep;
        }
    }
}

/// Deterministic shortest vertex path with absolute arrival times, starting
/// at `from` departing at `dep`.
pub fn shortest_vertex_path(net: &RoadNetwork, from: Vertex, to: Vertex, dep: Time) -> Vec<(Vertex, Time)> {
    let mut d = BatchDijkstra::new(net.num_vertices(), 1);
    d.seed(from, 0, 0);
    let mut parent: HashMap<Vertex, Vertex> = HashMap::new();
    let mut dist: HashMap<Vertex, Time> = HashMap::new();
    dist.insert(from, 0);
    d.run(&net.veh_out, |v, labels| {
        let dv = labels[0];
        for (h, w) in net.veh_out.neighbors(v) {
            let cand = dv + w as Time;
            if cand < dist.get(&h).copied().unwrap_or(INF) {
                dist.insert(h, cand);
                parent.insert(h, v);
            }
        }
        if v == to {
            Settle::Stop
        } else {
            Settle::Continue
        }
    });
    let mut path = vec![to];
    let mut cur = to;
    while cur != from {
        cur = *parent.get(&cur).unwrap_or_else(|| panic!("no vehicle path {from}->{to}"));
        path.push(cur);
    }
    path.reverse();
    path.into_iter().map(|v| (v, dep + dist[&v])).collect()
}

#[derive(Debug, Clone)]
pub struct Fleet {
    pub vehicles: Vec<Vehicle>,
}

impl Fleet {
    pub fn vehicle(&self, id: VehicleId) -> &Vehicle {
        &self.vehicles[id as usize]
    }

    pub fn vehicle_mut(&mut self, id: VehicleId) -> &mut Vehicle {
        &mut self.vehicles[id as usize]
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::MeetingPoint;

    fn line_net() -> RoadNetwork {
        // 0 -1000-> 1 -1000-> 2 -1000-> 3 -1000-> 4, and a slow parallel
        // edge 0 -> 2 (2500)
        let veh: Vec<(Vertex, Vertex, u32)> = vec![
            (0, 1, 1000),
            (1, 2, 1000),
            (2, 3, 1000),
            (3, 4, 1000),
            (0, 2, 2500),
        ];
        let psg: Vec<(Vertex, Vertex, u32)> = (0..4).map(|v| (v as Vertex, v as Vertex + 1, 100)).collect();
        RoadNetwork::new(5, &veh, &psg)
    }

    /// Route 0 -> 2 -> 4 with a rider riding 0 to 4, request time 0.
    fn busy_vehicle() -> Vehicle {
        let mut v = Vehicle::new(0, 0, 0, 1_000_000, 4);
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::Pals,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 2, walk: 0 },
            dropoff: MeetingPoint { vertex: 4, walk: 0 },
            dists: LegDists {
                to_pickup: 2000,
                pickup_to_dropoff: 2000,
                ..LegDists::default()
            },
        };
        v.apply_insertion(&RequestInfo { id: 0, t_req: 0, trip_deadline: 10_000 }, &ins, 6000);
        v
    }

    #[test]
    fn pals_append_builds_schedule() {
        let v = busy_vehicle();
        assert_eq!(v.stops.len(), 3);
        assert_eq!(v.stops[1].t_arr_min, 2000);
        assert_eq!(v.stops[1].t_dep_min, 2000);
        assert_eq!(v.stops[2].t_arr_min, 4000);
        assert_eq!(v.stops[1].occupancy_after, 1);
        assert_eq!(v.stops[2].occupancy_after, 0);
        assert_eq!(v.stops[2].num_dropoffs, 1);
    }

    #[test]
    fn pals_walking_rider_postpones_departure() {
        let mut v = Vehicle::new(0, 0, 0, 1_000_000, 4);
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::Pals,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 2, walk: 3000 },
            dropoff: MeetingPoint { vertex: 4, walk: 0 },
            dists: LegDists { to_pickup: 2000, pickup_to_dropoff: 2000, ..LegDists::default() },
        };
        v.apply_insertion(&RequestInfo { id: 0, t_req: 100, trip_deadline: 10_000 }, &ins, 6000);
        // rider reaches the stop at 3100; vehicle leaves its stop at 1100
        // and arrives exactly then, so no wait accrues at the pickup
        assert_eq!(v.stops[0].t_dep_min, 1100);
        assert_eq!(v.stops[1].t_arr_min, 3100);
        assert_eq!(v.stops[1].t_dep_min, 3100);
        assert!(!v.stops[0].wait_is_op);
    }

    #[test]
    fn merge_pickup_raises_departure_and_checks_flag() {
        let mut v = busy_vehicle();
        // merge a pickup onto stop 1 (vertex 2): rider walks in late
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::OrdinaryPaired,
            i: 1,
            j: 1,
            pickup: MeetingPoint { vertex: 2, walk: 2500 },
            dropoff: MeetingPoint { vertex: 4, walk: 0 },
            dists: LegDists { pickup_to_dropoff: 2000, dropoff_to_next: 0, ..LegDists::default() },
        };
        // paired at a merged stop: the dropoff becomes a new stop after it
        let summary = v.apply_insertion(&RequestInfo { id: 1, t_req: 0, trip_deadline: 20_000 }, &ins, 6000);
        assert_eq!(v.stops[1].t_dep_min, 2500);
        assert!(v.stops[1].wait_is_op);
        assert_eq!(v.stops[1].vehicle_wait(), 500);
        // new dropoff arrives at 4500; the old one is pushed to 4500 too
        assert_eq!(v.stops[2].t_arr_min, 4500);
        assert_eq!(v.stops[3].t_arr_min, 4500);
        assert_eq!(v.stops[2].occupancy_after, 1);
        assert!(!summary.last_stop_changed);
    }

    #[test]
    fn residual_delay_is_absorbed_by_waits() {
        let mut v = busy_vehicle();
        // introduce a wait of 500 at stop 1 via a merged late rider
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::OrdinaryPaired,
            i: 1,
            j: 1,
            pickup: MeetingPoint { vertex: 2, walk: 2500 },
            dropoff: MeetingPoint { vertex: 4, walk: 0 },
            dists: LegDists { pickup_to_dropoff: 2000, dropoff_to_next: 0, ..LegDists::default() },
        };
        v.apply_insertion(&RequestInfo { id: 1, t_req: 0, trip_deadline: 20_000 }, &ins, 6000);
        // now a pickup before the next stop that delays arrival there by 300
        // is fully absorbed by that wait
        let mut w = v.clone();
        let ins2 = InsertionPoint {
            veh: 0,
            kind: InsType::Pbns,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 1, walk: 1300 },
            dropoff: MeetingPoint { vertex: 1, walk: 1300 },
            dists: LegDists {
                to_pickup: 0,
                pickup_to_dropoff: 0,
                dropoff_to_next: 1000,
                curloc: Some((1, 1000)),
                ..LegDists::default()
            },
        };
        w.apply_insertion(&RequestInfo { id: 2, t_req: 0, trip_deadline: 30_000 }, &ins2, 6000);
        // pickup departs at 1300 (walking rider), old stop at vertex 2 sees
        // arrival 2300 but its departure stays 2500
        let s2 = &w.stops[3];
        assert_eq!(s2.loc, 2);
        assert_eq!(s2.t_arr_min, 2300);
        assert_eq!(s2.t_dep_min, 2500);
        let s_last = w.stops.last().unwrap();
        assert_eq!(s_last.t_arr_min, 4500);
    }

    #[test]
    fn deadlines_propagate_backwards_with_wait_credit() {
        let mut v = busy_vehicle();
        v.recompute_deadlines();
        // last stop cap = min(service end, rider trip deadline at vertex 4)
        assert_eq!(v.stops[2].t_arr_max, 10_000);
        // stop 1 inherits cap - leg, tightened by the boarding deadline
        assert_eq!(v.stops[1].t_arr_max, (10_000 - 2000).min(6000));
        assert_eq!(v.max_delay(0), 6000 - 2000);
        assert_eq!(v.elliptic_leeway(0), 6000 - 0);
        assert_eq!(v.max_delay(1), 10_000 - 4000);
    }

    #[test]
    fn advance_pops_completed_stops_and_reports_events() {
        let mut v = busy_vehicle();
        let mut legs = Vec::new();
        let mut riders = Vec::new();
        v.advance_to(1999, &mut legs, &mut riders);
        assert_eq!(v.stops.len(), 3);
        v.advance_to(2000, &mut legs, &mut riders);
        assert_eq!(v.stops.len(), 2);
        assert_eq!(legs.len(), 1);
        assert_eq!(legs[0].occupancy, 0);
        // the boarding at the new anchor is not final until it is departed
        assert!(riders.is_empty());
        v.drain(&mut legs, &mut riders);
        assert_eq!(legs.len(), 2);
        assert_eq!(legs[1].occupancy, 1);
        assert_eq!(riders.len(), 2);
        assert!(riders[0].boarding);
        assert_eq!(riders[0].time, 2000);
        assert!(!riders[1].boarding);
        assert_eq!(riders[1].time, 4000);
    }

    #[test]
    fn current_location_rounds_forward_to_edge_heads() {
        let net = line_net();
        let mut v = busy_vehicle();
        // idle before the route starts is impossible here; check en route
        assert_eq!(v.current_location(&net, 0), (0, 0));
        let mut legs = Vec::new();
        let mut riders = Vec::new();
        v.advance_to(1, &mut legs, &mut riders);
        assert_eq!(v.current_location(&net, 1), (1, 1000));
        assert_eq!(v.current_location(&net, 1000), (1, 1000));
        assert_eq!(v.current_location(&net, 1001), (2, 2000));
    }

    #[test]
    fn idle_vehicle_reports_now() {
        let net = line_net();
        let mut v = Vehicle::new(0, 3, 0, 100_000, 4);
        assert_eq!(v.current_location(&net, 555), (3, 555));
    }

    #[test]
    fn installed_path_survives_until_the_leg_completes() {
        let net = line_net();
        let mut v = Vehicle::new(0, 0, 0, 1_000_000, 4);
        // append a trip 0 -> 2 using the slow direct edge 0->2 (2500):
        // pretend an insertion at the current location rerouted the leg
        let ins = InsertionPoint {
            veh: 0,
            kind: InsType::Pals,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 2, walk: 0 },
            dropoff: MeetingPoint { vertex: 4, walk: 0 },
            dists: LegDists { to_pickup: 2500, pickup_to_dropoff: 2000, ..LegDists::default() },
        };
        v.apply_insertion(&RequestInfo { id: 0, t_req: 0, trip_deadline: 50_000 }, &ins, 6000);
        v.install_first_leg_path(vec![(0, 0), (2, 2500)]);
        assert_eq!(v.current_location(&net, 1), (2, 2500));
    }
}
