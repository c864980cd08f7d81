//! Seeded random instances for tests and benchmarks.
//!
//! Both generators lay vertices out in the plane in integer meters and derive
//! edge travel times from Euclidean length: vehicles move 1 m per decisecond,
//! pedestrians at the configured walking speed. Every edge is symmetric and
//! appears in both modes, so the vehicle graph is strongly connected and
//! every vertex can serve as a meeting point.

use std::collections::BTreeSet;

use rand::prelude::*;
use rand_chacha::ChaCha8Rng;

use crate::config::Rat;
use crate::dispatch::Request;
use crate::fleet::RequestId;
use crate::instance::{NetworkSpec, VehicleSpec};
use crate::units::{Time, Vertex};

pub fn seeded_rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

fn edge_times(d: i64, walking_speed: Rat) -> (u32, u32) {
    let d = d.max(1);
    let veh = d as u32;
    let num = *walking_speed.numer();
    let den = *walking_speed.denom();
    let psg = ((d * den + num - 1) / num).max(1) as u32;
    (veh, psg)
}

fn push_both(spec: &mut NetworkSpec, a: Vertex, b: Vertex, veh: u32, psg: u32) {
    spec.veh_edges.push((a, b, veh));
    spec.veh_edges.push((b, a, veh));
    spec.psg_edges.push((a, b, psg));
    spec.psg_edges.push((b, a, psg));
}

/// A `nx` by `ny` street grid with jittered block lengths of roughly 100 m.
pub fn grid_network(rng: &mut impl Rng, nx: usize, ny: usize, walking_speed: Rat) -> NetworkSpec {
    assert!(nx >= 2 && ny >= 2);
    let mut spec = NetworkSpec { num_vertices: nx * ny, ..NetworkSpec::default() };
    let id = |x: usize, y: usize| (y * nx + x) as Vertex;
    for y in 0..ny {
        for x in 0..nx {
            let mut link = |a: Vertex, b: Vertex, rng: &mut dyn RngCore| {
                let len = rng.gen_range(70..=160);
                let (veh, psg) = edge_times(len, walking_speed);
                push_both(&mut spec, a, b, veh, psg);
            };
            if x + 1 < nx {
                link(id(x, y), id(x + 1, y), rng);
            }
            if y + 1 < ny {
                link(id(x, y), id(x, y + 1), rng);
            }
        }
    }
    spec
}

/// `n` vertices dropped uniformly into a square, connected to every
/// neighbor within a fixed radius plus the nearest earlier vertex, which
/// keeps the graph connected at any density.
pub fn geometric_network(rng: &mut impl Rng, n: usize, walking_speed: Rat) -> NetworkSpec {
    assert!(n >= 2);
    let side = ((n as f64).sqrt() * 130.0).round() as i64;
    let pts: Vec<(i64, i64)> =
        (0..n).map(|_| (rng.gen_range(0..=side), rng.gen_range(0..=side))).collect();
    let dist = |a: (i64, i64), b: (i64, i64)| {
        let (dx, dy) = (a.0 - b.0, a.1 - b.1);
        ((dx * dx + dy * dy) as f64).sqrt().round() as i64
    };

    let mut spec = NetworkSpec { num_vertices: n, ..NetworkSpec::default() };
    let mut seen: BTreeSet<(Vertex, Vertex)> = BTreeSet::new();
    let mut connect = |spec: &mut NetworkSpec, i: usize, j: usize| {
        let (a, b) = (i.min(j) as Vertex, i.max(j) as Vertex);
        if a != b && seen.insert((a, b)) {
            let (veh, psg) = edge_times(dist(pts[i], pts[j]), walking_speed);
            push_both(spec, a, b, veh, psg);
        }
    };

    let radius = 220i64;
    for i in 0..n {
        for j in i + 1..n {
            if dist(pts[i], pts[j]) <= radius {
                connect(&mut spec, i, j);
            }
        }
    }
    for i in 1..n {
        let nearest = (0..i).min_by_key(|&j| (dist(pts[i], pts[j]), j)).unwrap();
        connect(&mut spec, i, nearest);
    }
    spec
}

/// The median pedestrian edge time, a natural yardstick for the meeting
/// point radius.
pub fn median_psg_weight(spec: &NetworkSpec) -> Time {
    if spec.psg_edges.is_empty() {
        return 0;
    }
    let mut w: Vec<u32> = spec.psg_edges.iter().map(|e| e.2).collect();
    w.sort_unstable();
    w[w.len() / 2] as Time
}

/// Vehicles at random locations, all available from time zero to `service_end`.
pub fn sample_vehicles(
    rng: &mut impl Rng,
    num_vertices: usize,
    count: usize,
    service_end: Time,
    capacity_range: (u32, u32),
) -> Vec<VehicleSpec> {
    (0..count)
        .map(|_| VehicleSpec {
            initial_location: rng.gen_range(0..num_vertices as Vertex),
            service_start: 0,
            service_end,
            capacity: rng.gen_range(capacity_range.0..=capacity_range.1),
        })
        .collect()
}

/// Requests with times drawn uniformly from `[0, horizon]`, sorted. A few
/// have equal origin and destination to exercise the degenerate walks.
pub fn sample_requests(
    rng: &mut impl Rng,
    num_vertices: usize,
    count: usize,
    horizon: Time,
) -> Vec<Request> {
    let mut times: Vec<Time> = (0..count).map(|_| rng.gen_range(0..=horizon)).collect();
    times.sort_unstable();
    times
        .into_iter()
        .enumerate()
        .map(|(i, t_req)| {
            let origin = rng.gen_range(0..num_vertices as Vertex);
            let destination = if rng.gen_ratio(1, 16) {
                origin
            } else {
                rng.gen_range(0..num_vertices as Vertex)
            };
            Request { id: i as RequestId, origin, destination, t_req }
        })
        .collect()
}
