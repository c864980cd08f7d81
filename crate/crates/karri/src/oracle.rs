//! Brute-force reference dispatcher.
//!
//! Prices every conceivable assignment of a request and picks the cheapest
//! under the same tie order as the engine, but shares none of the engine's
//! machinery: distances come from textbook Dijkstra runs on the plain
//! graphs, and each candidate is priced by rebuilding the vehicle's
//! schedule from scratch in absolute times rather than by the engine's
//! residual-delay recurrence. Agreement between the two is the strongest
//! correctness check the tests have.
//!
//! The oracle reads the live fleet state (schedules, deadlines, current
//! locations) because that state is the problem being solved, not part of
//! the machinery under test.

use std::collections::HashMap;

use num_rational::Ratio;

use crate::config::{Config, Weights};
use crate::dispatch::Request;
use crate::fleet::{Fleet, InsType, Vehicle, VehicleId};
use crate::graph::{dijkstra, Csr, MeetingPoint, RoadNetwork};
use crate::units::{Cost, Time, Vertex, INF};

/// The cheapest assignment the oracle found.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct OracleChoice {
    pub kind: InsType,
    pub cost: Cost,
    pub veh: VehicleId,
    pub i: usize,
    pub j: usize,
    pub pickup: MeetingPoint,
    pub dropoff: MeetingPoint,
}

pub struct Oracle<'a> {
    net: &'a RoadNetwork,
    veh_from: HashMap<Vertex, Vec<Time>>,
    psg_from: HashMap<Vertex, Vec<Time>>,
    psg_to: HashMap<Vertex, Vec<Time>>,
}

fn cached<'m>(cache: &'m mut HashMap<Vertex, Vec<Time>>, graph: &Csr, s: Vertex) -> &'m [Time] {
    cache.entry(s).or_insert_with(|| dijkstra(graph, s))
}

impl<'a> Oracle<'a> {
    pub fn new(net: &'a RoadNetwork) -> Oracle<'a> {
        Oracle { net, veh_from: HashMap::new(), psg_from: HashMap::new(), psg_to: HashMap::new() }
    }

    fn drive(&mut self, a: Vertex, b: Vertex) -> Time {
        cached(&mut self.veh_from, &self.net.veh_out, a)[b as usize]
    }

    /// Both-eligible vertices within walking radius of the origin, with
    /// walking times, sorted like the engine's meeting-point lists.
    fn pickup_points(&mut self, origin: Vertex, rho: Time) -> Vec<MeetingPoint> {
        let net = self.net;
        let dists = cached(&mut self.psg_from, &net.psg_out, origin);
        collect_points(net, dists, rho)
    }

    fn dropoff_points(&mut self, destination: Vertex, rho: Time) -> Vec<MeetingPoint> {
        let net = self.net;
        let dists = cached(&mut self.psg_to, &net.psg_in, destination);
        collect_points(net, dists, rho)
    }

    /// Enumerates every insertion of the request into every vehicle plus the
    /// walking-only fallback and returns the cheapest under the global tie
    /// order.
    pub fn best_assignment(&mut self, fleet: &mut Fleet, req: &Request, cfg: &Config) -> OracleChoice {
        let w = cfg.weights();
        let direct = self.drive(req.origin, req.destination);
        let deadline = trip_deadline(cfg, direct);

        let d_walk = cached(&mut self.psg_from, &self.net.psg_out, req.origin)[req.destination as usize];
        let walk_cost = if d_walk >= INF {
            INF
        } else {
            w.tau * d_walk + w.omega * d_walk + penalty(w.gamma_trip, d_walk, deadline)
        };
        let mut best = OracleChoice {
            kind: InsType::WalkOnly,
            cost: walk_cost,
            veh: 0,
            i: 0,
            j: 0,
            pickup: MeetingPoint { vertex: 0, walk: 0 },
            dropoff: MeetingPoint { vertex: 0, walk: 0 },
        };
        let mut best_key = key_of(&best);

        let pickups = self.pickup_points(req.origin, cfg.rho);
        let dropoffs = self.dropoff_points(req.destination, cfg.rho);

        let net = self.net;
        for vi in 0..fleet.vehicles.len() {
            let curloc = {
                let v = &mut fleet.vehicles[vi];
                if v.is_idle() { None } else { Some(v.current_location(net, req.t_req)) }
            };
            let veh = &fleet.vehicles[vi];
            let m = veh.last_idx();
            let mut candidates: Vec<OracleChoice> = Vec::new();
            for &p in &pickups {
                for &d in &dropoffs {
                    if let Some(cost) = self.price_after_last(veh, req, &w, deadline, p, d) {
                        candidates.push(OracleChoice { kind: InsType::Pals, cost, veh: veh.id, i: m, j: m, pickup: p, dropoff: d });
                    }
                    for i in 0..m {
                        for j in i..=m {
                            if i == 0 && j == m {
                                continue;
                            }
                            let kind = match (i, j) {
                                (0, _) => InsType::Pbns,
                                _ if i == j => InsType::OrdinaryPaired,
                                _ if j == m => InsType::Dals,
                                _ => InsType::Ordinary,
                            };
                            if let Some(cost) =
                                self.price_rebuilt(veh, req, &w, deadline, kind, i, j, p, d, curloc)
                            {
                                candidates.push(OracleChoice { kind, cost, veh: veh.id, i, j, pickup: p, dropoff: d });
                            }
                        }
                    }
                }
            }
            for cand in candidates {
                let k = key_of(&cand);
                if k < best_key {
                    best_key = k;
                    best = cand;
                }
            }
        }
        best
    }

    /// Pickup and dropoff appended after the last stop. The vehicle
    /// postpones its departure for a walking rider, so only driving counts
    /// toward the detour.
    fn price_after_last(
        &mut self,
        veh: &Vehicle,
        req: &Request,
        w: &Weights,
        deadline: Time,
        p: MeetingPoint,
        d: MeetingPoint,
    ) -> Option<Cost> {
        let m = veh.last_idx();
        if veh.stops[m].occupancy_after + 1 > veh.capacity {
            return None;
        }
        let drive_p = if veh.stops[m].loc == p.vertex { 0 } else { self.drive(veh.stops[m].loc, p.vertex) };
        let pd = self.drive(p.vertex, d.vertex);
        if drive_p >= INF || pd >= INF {
            return None;
        }
        let t = veh.stops[m].t_dep_min.max(req.t_req);
        let dep_p = (t + drive_p).max(req.t_req + p.walk);
        let arr_d = dep_p + pd;
        if arr_d > veh.service_end {
            return None;
        }
        let trip = arr_d + d.walk - req.t_req;
        Some(compose(w, drive_p + pd, trip, 0, p.walk + d.walk, dep_p, req.t_req, deadline))
    }

    /// Any insertion with the dropoff at or before the last stop, or
    /// appended after it with a mid-route pickup. Rebuilds the whole
    /// schedule in absolute times and reads the cost terms off it.
    #[allow(clippy::too_many_arguments)]
    fn price_rebuilt(
        &mut self,
        veh: &Vehicle,
        req: &Request,
        w: &Weights,
        deadline: Time,
        kind: InsType,
        i: usize,
        j: usize,
        p: MeetingPoint,
        d: MeetingPoint,
        curloc: Option<(Vertex, Time)>,
    ) -> Option<Cost> {
        #[derive(Clone, Copy, PartialEq)]
        enum Slot {
            Old(usize),
            Pickup,
            Dropoff,
        }
        let stops = &veh.stops;
        let m = veh.last_idx();
        let merge_p = kind != InsType::Pbns && stops[i].loc == p.vertex;
        let merge_d = i < j && stops[j].loc == d.vertex;

        let mut seq: Vec<Slot> = (0..=m).map(Slot::Old).collect();
        if !merge_d {
            seq.insert(j + 1, Slot::Dropoff);
        }
        if !merge_p {
            seq.insert(i + 1, Slot::Pickup);
        }
        let pickup_at = if merge_p { i } else { i + 1 };
        let dropoff_at = seq.iter().position(|&s| {
            if merge_d { s == Slot::Old(j) } else { s == Slot::Dropoff }
        })?;

        let loc = |s: Slot| match s {
            Slot::Old(a) => stops[a].loc,
            Slot::Pickup => p.vertex,
            Slot::Dropoff => d.vertex,
        };

        // forward pass in absolute times
        let mut arr = vec![0; seq.len()];
        let mut dep = vec![0; seq.len()];
        let mut trip_plus: Time = 0;
        let mut dep_pickup = 0;
        let mut arr_alight = 0;
        for k in 0..seq.len() {
            match seq[k] {
                Slot::Old(a) if k < pickup_at => {
                    arr[k] = stops[a].t_arr_min;
                    dep[k] = stops[a].t_dep_min;
                }
                Slot::Old(a) => {
                    debug_assert!(k > pickup_at || (merge_p && a == i));
                    if merge_p && a == i {
                        arr[k] = stops[a].t_arr_min;
                        dep[k] = stops[a].t_dep_min.max(req.t_req + p.walk);
                        dep_pickup = dep[k];
                    } else {
                        let leg = self.drive(loc(seq[k - 1]), stops[a].loc);
                        if leg >= INF {
                            return None;
                        }
                        arr[k] = dep[k - 1] + leg;
                        dep[k] = stops[a].t_dep_min.max(arr[k]);
                    }
                    if merge_d && a == j {
                        arr_alight = arr[k];
                    }
                    trip_plus += stops[a].num_dropoffs as Time * (arr[k] - stops[a].t_arr_min);
                }
                Slot::Pickup => {
                    let (from, base) = match curloc {
                        Some(cl) if kind == InsType::Pbns => cl,
                        _ => (stops[i].loc, dep[k - 1]),
                    };
                    let leg = self.drive(from, p.vertex);
                    if leg >= INF {
                        return None;
                    }
                    arr[k] = base + leg;
                    dep[k] = arr[k].max(req.t_req + p.walk);
                    dep_pickup = dep[k];
                }
                Slot::Dropoff => {
                    let leg = self.drive(loc(seq[k - 1]), d.vertex);
                    if leg >= INF {
                        return None;
                    }
                    arr[k] = dep[k - 1] + leg;
                    dep[k] = arr[k];
                    arr_alight = arr[k];
                }
            }
        }

        // hard constraints: existing riders' deadlines, capacity on every
        // leg, service end at the final stop
        for (k, &s) in seq.iter().enumerate() {
            let Slot::Old(a) = s else { continue };
            for &(_, bd) in &stops[a].boardings {
                if dep[k] > bd {
                    return None;
                }
            }
            for &(_, ad) in &stops[a].alightings {
                if arr[k] > ad {
                    return None;
                }
            }
        }
        for (k, &s) in seq.iter().enumerate() {
            let base = match s {
                Slot::Old(a) => stops[a].occupancy_after,
                Slot::Pickup => stops[i].occupancy_after,
                Slot::Dropoff => stops[j].occupancy_after,
            };
            let rider = (k >= pickup_at && k < dropoff_at) as u32;
            if base + rider > veh.capacity {
                return None;
            }
        }
        if arr[seq.len() - 1] > veh.service_end {
            return None;
        }

        let detour = if j == m && !merge_d {
            let last_pos = seq.iter().position(|&s| s == Slot::Old(m)).unwrap();
            (dep[last_pos] - stops[m].t_dep_min) + (arr_alight - dep[last_pos])
        } else {
            let last_pos = seq.iter().position(|&s| s == Slot::Old(m)).unwrap();
            arr[last_pos] - stops[m].t_arr_min
        };
        let trip = arr_alight + d.walk - req.t_req;
        Some(compose(w, detour, trip, trip_plus, p.walk + d.walk, dep_pickup, req.t_req, deadline))
    }
}

fn collect_points(net: &RoadNetwork, dists: &[Time], rho: Time) -> Vec<MeetingPoint> {
    let mut out: Vec<MeetingPoint> = (0..net.num_vertices() as Vertex)
        .filter(|&v| dists[v as usize] <= rho && net.veh_eligible(v) && net.psg_eligible(v))
        .map(|v| MeetingPoint { vertex: v, walk: dists[v as usize] })
        .collect();
    out.sort_by_key(|m| (m.walk, m.vertex));
    out
}

fn key_of(c: &OracleChoice) -> (Cost, u8, VehicleId, usize, usize, Vertex, Vertex) {
    if c.kind == InsType::WalkOnly {
        (c.cost, 0, 0, 0, 0, 0, 0)
    } else {
        (c.cost, c.kind.tie_rank(), c.veh, c.i, c.j, c.pickup.vertex, c.dropoff.vertex)
    }
}

fn penalty(weight: i64, value: Time, limit: Time) -> Cost {
    if limit >= INF {
        return 0;
    }
    weight * (value - limit).max(0)
}

fn compose(w: &Weights, detour: Time, trip: Time, trip_plus: Time, walk: Time, dep_p: Time, t_req: Time, deadline: Time) -> Cost {
    w.scale * detour
        + w.tau * (trip + trip_plus)
        + w.omega * walk
        + w.gamma_wait * (dep_p - t_req - w.max_wait).max(0)
        + penalty(w.gamma_trip, trip, deadline)
}

fn trip_deadline(cfg: &Config, direct: Time) -> Time {
    if direct >= INF {
        return INF;
    }
    (cfg.alpha * Ratio::from_integer(direct)).floor().to_integer() + cfg.beta
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ch::ContractionHierarchy;
    use crate::cost::EvalContext;
    use crate::dispatch::{commit_insertion, dispatch_request, EngineState};
    use crate::fleet::{InsertionPoint, LegDists, Vehicle};

    fn grid_net(side: i64) -> RoadNetwork {
        let mut veh = Vec::new();
        let mut psg = Vec::new();
        let id = |x: i64, y: i64| (y * side + x) as Vertex;
        for y in 0..side {
            for x in 0..side {
                let mut link = |a: Vertex, b: Vertex, wv: u32, wp: u32| {
                    veh.push((a, b, wv));
                    psg.push((a, b, wp));
                };
                let wv = (100 + 37 * ((x * 31 + y * 17) % 5)) as u32;
                if x + 1 < side {
                    link(id(x, y), id(x + 1, y), wv, wv * 4);
                    link(id(x + 1, y), id(x, y), wv, wv * 4);
                }
                if y + 1 < side {
                    link(id(x, y), id(x, y + 1), wv + 20, (wv + 20) * 4);
                    link(id(x, y + 1), id(x, y), wv + 20, (wv + 20) * 4);
                }
            }
        }
        RoadNetwork::new((side * side) as usize, &veh, &psg)
    }

    #[test]
    fn rebuilt_prices_match_the_incremental_evaluator() {
        let net = grid_net(4);
        let mut oracle = Oracle::new(&net);
        let w = Config::default().weights();
        let mut veh = Vehicle::new(0, 0, 0, 1_000_000, 2);
        // seed a two-rider schedule through the engine's own commit
        let seed = |veh: &mut Vehicle, o: &mut Oracle, id, i: Vertex, j: Vertex, t_req| {
            let pd = o.drive(i, j);
            let to_p = o.drive(veh.last_stop().loc, i);
            let ins = InsertionPoint {
                veh: 0,
                kind: InsType::Pals,
                i: veh.last_idx(),
                j: veh.last_idx(),
                pickup: MeetingPoint { vertex: i, walk: 0 },
                dropoff: MeetingPoint { vertex: j, walk: 0 },
                dists: LegDists { to_pickup: to_p, pickup_to_dropoff: pd, ..LegDists::default() },
            };
            let info = crate::fleet::RequestInfo { id, t_req, trip_deadline: w.trip_deadline(pd) };
            veh.apply_insertion(&info, &ins, w.max_wait);
        };
        seed(&mut veh, &mut oracle, 0, 5, 15, 0);
        seed(&mut veh, &mut oracle, 1, 6, 12, 50);
        assert!(veh.stops.len() >= 4);

        let req = Request { id: 2, origin: 9, destination: 3, t_req: 300 };
        let cfg = Config::default();
        let direct = oracle.drive(9, 3);
        let deadline = trip_deadline(&cfg, direct);
        let ctx = EvalContext::new(&w, req.t_req, deadline);
        let m = veh.last_idx();
        let mut checked = 0;
        for i in 1..m {
            for j in i..=m {
                if j == m && i == 0 {
                    continue;
                }
                for &(pv, pw) in &[(9u32, 0i64), (10, 450)] {
                    for &(dv, dw) in &[(3u32, 0i64), (2, 500)] {
                        let p = MeetingPoint { vertex: pv, walk: pw };
                        let d = MeetingPoint { vertex: dv, walk: dw };
                        let kind = if i == j {
                            InsType::OrdinaryPaired
                        } else if j == m {
                            InsType::Dals
                        } else {
                            InsType::Ordinary
                        };
                        let merge_p = veh.stops[i].loc == pv;
                        let merge_d = i < j && veh.stops[j].loc == dv;
                        let dists = LegDists {
                            to_pickup: if merge_p { 0 } else { oracle.drive(veh.stops[i].loc, pv) },
                            pickup_to_next: oracle.drive(pv, veh.stops[i + 1].loc),
                            pickup_to_dropoff: oracle.drive(pv, dv),
                            to_dropoff: if merge_d { 0 } else { oracle.drive(veh.stops[j].loc, dv) },
                            dropoff_to_next: if j < m && !merge_d {
                                oracle.drive(dv, veh.stops[j + 1].loc)
                            } else if j < m {
                                0
                            } else {
                                INF
                            },
                            curloc: None,
                        };
                        let ins =
                            InsertionPoint { veh: 0, kind, i, j, pickup: p, dropoff: d, dists };
                        let engine = ctx.evaluate_exact(&veh, &ins).map(|e| e.cost);
                        let oracle_cost =
                            oracle.price_rebuilt(&veh, &req, &w, deadline, kind, i, j, p, d, None);
                        assert_eq!(engine, oracle_cost, "i={i} j={j} p={pv} d={dv}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked >= 12);
    }

    #[test]
    fn oracle_agrees_with_the_engine_over_a_request_sequence() {
        let net = grid_net(5);
        let ch = ContractionHierarchy::build(&net.veh_out);
        let mut cfg = Config::default();
        cfg.rho = 900;
        let fleet = Fleet {
            vehicles: vec![
                Vehicle::new(0, 0, 0, 1_000_000, 3),
                Vehicle::new(1, 24, 0, 1_000_000, 3),
                Vehicle::new(2, 12, 0, 1_000_000, 3),
            ],
        };
        let oracle_net = grid_net(5);
        let mut state = EngineState::new(net, ch, fleet, &cfg);
        let reqs = [
            Request { id: 0, origin: 6, destination: 18, t_req: 0 },
            Request { id: 1, origin: 2, destination: 22, t_req: 40 },
            Request { id: 2, origin: 13, destination: 4, t_req: 90 },
            Request { id: 3, origin: 20, destination: 9, t_req: 130 },
            Request { id: 4, origin: 7, destination: 16, t_req: 180 },
            Request { id: 5, origin: 11, destination: 23, t_req: 260 },
        ];
        let mut legs = Vec::new();
        let mut riders = Vec::new();
        for req in &reqs {
            {
                let EngineState { elliptic, ch, fleet, .. } = &mut state;
                for v in &mut fleet.vehicles {
                    let anchor = v.stops[0].uid;
                    v.advance_to(req.t_req, &mut legs, &mut riders);
                    if v.stops[0].uid != anchor {
                        elliptic.rebuild_vehicle(ch, v);
                    }
                }
            }
            let (chosen, _) = dispatch_request(&mut state, req, &cfg);
            let mut oracle = Oracle::new(&oracle_net);
            let reference = oracle.best_assignment(&mut state.fleet, req, &cfg);
            assert_eq!(chosen.cost, reference.cost, "request {}", req.id);
            assert_eq!(chosen.kind, reference.kind, "request {}", req.id);
            commit_insertion(&mut state, req, &chosen, &cfg);
        }
    }

    #[test]
    fn walking_only_agrees() {
        let net = grid_net(3);
        let mut oracle = Oracle::new(&net);
        let cfg = Config::default();
        let mut fleet = Fleet { vehicles: vec![] };
        let req = Request { id: 0, origin: 0, destination: 8, t_req: 0 };
        let choice = oracle.best_assignment(&mut fleet, &req, &cfg);
        assert_eq!(choice.kind, InsType::WalkOnly);
        let w = cfg.weights();
        let d = dijkstra(&net.psg_out, 0)[8];
        let ctx = EvalContext::new(&w, 0, trip_deadline(&cfg, oracle.drive(0, 8)));
        assert_eq!(choice.cost, ctx.walking_only(d));
    }
}
