//! Insertion cost model.
//!
//! The cost of assigning a request to a vehicle trades off the vehicle's
//! added operation time against rider time: the residual detour left at the
//! end of the route, the new rider's trip time, the trip prolongation of
//! riders already assigned, walking, and penalties for exceeding the
//! request's soft wait and trip limits. Hard constraints protect riders
//! already on the schedule: their deadlines, the vehicle capacity, and the
//! service end.
//!
//! `evaluate` prices a concrete insertion against a route. It mirrors
//! `Vehicle::apply_insertion` exactly: committing the insertion and reading
//! the realized times off the schedule gives the same numbers the evaluator
//! predicted. `cost_from_last_stop` is the closed form for insertions after
//! the last stop; it is monotone in each distance argument, which the
//! last-stop searches rely on for pruning.

use crate::config::Weights;
use crate::fleet::{merge_flags, InsType, InsertionPoint, Vehicle};
use crate::units::{Cost, Time, INF};

/// Per-request context for pricing insertions.
#[derive(Debug, Clone, Copy)]
pub struct EvalContext<'a> {
    pub weights: &'a Weights,
    pub t_req: Time,
    /// The rider must reach the destination by `t_req + trip_deadline` or
    /// pay the trip penalty.
    pub trip_deadline: Time,
}

/// Everything `evaluate` derives about a feasible insertion.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Evaluation {
    pub cost: Cost,
    /// When the rider departs from the pickup.
    pub dep_pickup: Time,
    /// When the vehicle reaches the stop where the rider alights.
    pub arr_alight: Time,
    /// Residual detour at the end of the route.
    pub detour: Time,
    /// The new rider's trip time including walking legs.
    pub trip: Time,
    /// Summed arrival delay over existing riders' dropoffs.
    pub trip_plus: Time,
}

/// Result of pricing one insertion against an optional upper bound.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum EvalOutcome {
    Feasible(Evaluation),
    /// A hard constraint failed.
    Infeasible,
    /// A lower bound already exceeded the upper bound, strictly; the true
    /// cost was not computed but cannot tie the current best.
    Pruned,
}

impl EvalOutcome {
    pub fn feasible(self) -> Option<Evaluation> {
        match self {
            EvalOutcome::Feasible(e) => Some(e),
            _ => None,
        }
    }
}

impl<'a> EvalContext<'a> {
    pub fn new(weights: &'a Weights, t_req: Time, trip_deadline: Time) -> Self {
        EvalContext { weights, t_req, trip_deadline }
    }

    fn compose(&self, detour: Time, trip: Time, trip_plus: Time, walk: Time, dep_pickup: Time) -> Cost {
        let w = self.weights;
        w.detour_cost(detour)
            + w.trip_cost(trip + trip_plus)
            + w.walk_cost(walk)
            + w.wait_violation(dep_pickup, self.t_req)
            + w.trip_violation(trip, self.trip_deadline)
    }

    /// Cost of serving the request entirely on foot, or INF when there is
    /// no passenger path.
    pub fn walking_only(&self, d_psg: Time) -> Cost {
        if d_psg >= INF {
            return INF;
        }
        let w = self.weights;
        w.trip_cost(d_psg) + w.walk_cost(d_psg) + w.trip_violation(d_psg, self.trip_deadline)
    }

    /// Closed-form cost of appending pickup and dropoff after a last stop
    /// the vehicle can leave at time `t`, with `d` the drive to the pickup
    /// and `pd` the drive from pickup to dropoff. The vehicle postpones its
    /// departure for a walking rider instead of waiting at the pickup, so
    /// the result is monotone nondecreasing in `t`, `d`, `pd`, and the
    /// walking times, including through the penalty terms.
    ///
    /// No hard constraints are checked here; callers feed underestimates to
    /// get lower bounds and re-check real candidates with `evaluate`.
    pub fn cost_from_last_stop(&self, w_p: Time, w_d: Time, t: Time, d: Time, pd: Time) -> Cost {
        if d >= INF || pd >= INF {
            return INF;
        }
        let dep_p = (t + d).max(self.t_req + w_p);
        let trip = dep_p + pd + w_d - self.t_req;
        self.compose(d + pd, trip, 0, w_p + w_d, dep_p)
    }

    /// Lower bound on any insertion whose dropoff is appended after the
    /// last stop, from a lower bound `x` on the distance from the last stop
    /// to the dropoff. Sound because the pickup is mid-route, so the trip is
    /// at least `x + w_d` and the appended leg alone already detours `x`.
    pub fn dals_lower_bound(&self, w_d: Time, x: Time) -> Cost {
        if x >= INF {
            return INF;
        }
        let w = self.weights;
        w.detour_cost(x) + w.trip_cost(x + w_d) + w.walk_cost(w_d) + w.trip_violation(x + w_d, self.trip_deadline)
    }

    /// Lower bound on any mid-route insertion of the pair (p, d) from a
    /// lower bound on the pickup departure and the direct pickup-dropoff
    /// distance. The detour term is left out: waits further down the route
    /// can absorb a detour entirely.
    pub fn pair_lower_bound(&self, w_p: Time, w_d: Time, dep_pickup_lb: Time, pd: Time) -> Cost {
        if pd >= INF || dep_pickup_lb >= INF {
            return INF;
        }
        let trip = dep_pickup_lb + pd + w_d - self.t_req;
        let w = self.weights;
        w.trip_cost(trip) + w.walk_cost(w_p + w_d) + w.wait_violation(dep_pickup_lb, self.t_req)
            + w.trip_violation(trip, self.trip_deadline)
    }

    /// `evaluate` without an upper bound; the result is never `Pruned`.
    pub fn evaluate_exact(&self, veh: &Vehicle, ins: &InsertionPoint) -> Option<Evaluation> {
        self.evaluate(veh, ins, None).feasible()
    }

    /// Prices a concrete insertion against the vehicle's current schedule.
    /// Infeasible when a hard constraint fails: capacity on any leg the
    /// rider rides, an existing rider's boarding or arrival deadline, or
    /// the service end. With an upper bound, the evaluation short-circuits
    /// to `Pruned` once a lower bound on the final cost exceeds it
    /// strictly, so a candidate tying the incumbent always comes back
    /// `Feasible` with its exact cost.
    pub fn evaluate(&self, veh: &Vehicle, ins: &InsertionPoint, c_upper: Option<Cost>) -> EvalOutcome {
        let stops = &veh.stops;
        let m = veh.last_idx();
        let (merge_p, merge_d) = merge_flags(ins.kind, stops, ins);
        let w_p = ins.pickup.walk;
        let w_d = ins.dropoff.walk;
        let walk = w_p + w_d;

        if ins.kind == InsType::Pals {
            debug_assert!(ins.i == m && ins.j == m);
            if stops[m].occupancy_after + 1 > veh.capacity {
                return EvalOutcome::Infeasible;
            }
            let t = stops[m].t_dep_min.max(self.t_req);
            let d = if merge_p { 0 } else { ins.dists.to_pickup };
            let pd = ins.dists.pickup_to_dropoff;
            if d >= INF || pd >= INF {
                return EvalOutcome::Infeasible;
            }
            let dep_p = (t + d).max(self.t_req + w_p);
            let arr_d = dep_p + pd;
            if arr_d > veh.service_end {
                return EvalOutcome::Infeasible;
            }
            let trip = arr_d + w_d - self.t_req;
            return EvalOutcome::Feasible(Evaluation {
                cost: self.compose(d + pd, trip, 0, walk, dep_p),
                dep_pickup: dep_p,
                arr_alight: arr_d,
                detour: d + pd,
                trip,
                trip_plus: 0,
            });
        }

        let (i, j) = (ins.i, ins.j);
        debug_assert!(i <= j && j <= m && (i, j) != (m, m));
        debug_assert!(ins.kind != InsType::Pbns || (i == 0 && ins.dists.curloc.is_some()));
        debug_assert!(ins.kind == InsType::Pbns || i >= 1);

        // capacity on every leg the rider rides
        let occ_hi = if merge_d { j - 1 } else { j };
        for a in i..=occ_hi {
            if stops[a].occupancy_after + 1 > veh.capacity {
                return EvalOutcome::Infeasible;
            }
        }

        // pickup departure
        let dep_p = if merge_p {
            let dep = stops[i].t_dep_min.max(self.t_req + w_p);
            if dep > stops[i].min_boarding_deadline() {
                return EvalOutcome::Infeasible;
            }
            dep
        } else {
            let base_dep = match ins.dists.curloc {
                Some((_, ready)) => ready,
                None => stops[i].t_dep_min,
            };
            if ins.dists.to_pickup >= INF {
                return EvalOutcome::Infeasible;
            }
            (base_dep + ins.dists.to_pickup).max(self.t_req + w_p)
        };

        // the bound below stays under any completion of this insertion, and
        // prolongation only adds to it, so it can be retightened as delays
        // accrue on existing dropoffs
        let lb = match c_upper {
            Some(cu) => {
                let lb = self.pair_lower_bound(w_p, w_d, dep_p, ins.dists.pickup_to_dropoff);
                if lb > cu {
                    return EvalOutcome::Pruned;
                }
                lb
            }
            None => 0,
        };

        let mut trip_plus: Time = 0;
        let mut residual_at_last: Time = 0;
        let arr_alight;

        // delay: arrival delay at the existing stop currently examined
        let mut delay;
        let first_delayed;
        if i == j {
            let pd = ins.dists.pickup_to_dropoff;
            if pd >= INF || ins.dists.dropoff_to_next >= INF {
                return EvalOutcome::Infeasible;
            }
            arr_alight = dep_p + pd;
            delay = (arr_alight + ins.dists.dropoff_to_next - stops[i + 1].t_arr_min).max(0);
            first_delayed = i + 1;
        } else {
            if ins.dists.pickup_to_next >= INF {
                return EvalOutcome::Infeasible;
            }
            delay = (dep_p + ins.dists.pickup_to_next - stops[i + 1].t_arr_min).max(0);
            // walk the existing stops up to s_j
            for a in i + 1..j {
                let s = &stops[a];
                if s.t_arr_min + delay > s.t_arr_max {
                    return EvalOutcome::Infeasible;
                }
                trip_plus += s.num_dropoffs as Time * delay;
                if let Some(cu) = c_upper {
                    if lb + self.weights.trip_cost(trip_plus) > cu {
                        return EvalOutcome::Pruned;
                    }
                }
                delay = (delay - s.vehicle_wait()).max(0);
                if delay == 0 {
                    break;
                }
            }
            let sj = &stops[j];
            if sj.t_arr_min + delay > sj.t_arr_max {
                return EvalOutcome::Infeasible;
            }
            trip_plus += sj.num_dropoffs as Time * delay;
            if let Some(cu) = c_upper {
                if lb + self.weights.trip_cost(trip_plus) > cu {
                    return EvalOutcome::Pruned;
                }
            }
            if j == m {
                residual_at_last = delay;
            }
            let dep_delay_j = (delay - sj.vehicle_wait()).max(0);
            if merge_d {
                arr_alight = sj.t_arr_min + delay;
                delay = dep_delay_j;
                first_delayed = j + 1;
            } else {
                if ins.dists.to_dropoff >= INF {
                    return EvalOutcome::Infeasible;
                }
                arr_alight = sj.t_dep_min + dep_delay_j + ins.dists.to_dropoff;
                if j == m {
                    // dropoff appended after the last stop
                    if arr_alight > veh.service_end {
                        return EvalOutcome::Infeasible;
                    }
                    let trip = arr_alight + w_d - self.t_req;
                    let detour = dep_delay_j + ins.dists.to_dropoff;
                    return EvalOutcome::Feasible(Evaluation {
                        cost: self.compose(detour, trip, trip_plus, walk, dep_p),
                        dep_pickup: dep_p,
                        arr_alight,
                        detour,
                        trip,
                        trip_plus,
                    });
                }
                if ins.dists.dropoff_to_next >= INF {
                    return EvalOutcome::Infeasible;
                }
                delay = (arr_alight + ins.dists.dropoff_to_next - stops[j + 1].t_arr_min).max(0);
                first_delayed = j + 1;
            }
        }

        // propagate the remaining delay to the end of the route
        for a in first_delayed..=m {
            if delay == 0 {
                break;
            }
            let s = &stops[a];
            if s.t_arr_min + delay > s.t_arr_max {
                return EvalOutcome::Infeasible;
            }
            trip_plus += s.num_dropoffs as Time * delay;
            if let Some(cu) = c_upper {
                if lb + self.weights.trip_cost(trip_plus) > cu {
                    return EvalOutcome::Pruned;
                }
            }
            if a == m {
                residual_at_last = delay;
            }
            delay = (delay - s.vehicle_wait()).max(0);
        }
        let detour = residual_at_last;

        let trip = arr_alight + w_d - self.t_req;
        EvalOutcome::Feasible(Evaluation {
            cost: self.compose(detour, trip, trip_plus, walk, dep_p),
            dep_pickup: dep_p,
            arr_alight,
            detour,
            trip,
            trip_plus,
        })
    }
}
