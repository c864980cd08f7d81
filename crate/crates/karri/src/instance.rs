//! Instance files: the road network, the fleet and the request stream, plus
//! the key=value run configuration.
//!
//! All three tables are plain CSV with a fixed header. The network lists one
//! directed edge per row as `tail,head,mode,travel_time_ds` where `mode` is
//! `veh` or `psg`; the vertex set is `0..=max_id`. Vehicles are
//! `initial_location,service_start_ds,service_end_ds,capacity` and requests
//! are `origin,destination,t_req_ds`. Parse errors always name the file and
//! the 1-based line.

use std::fmt::Write as _;
use std::fs;
use std::path::Path;

use anyhow::{anyhow, Context, Result};

use crate::config::{parse_rat, Config, DalsStrategy, PalsStrategy};
use crate::dispatch::Request;
use crate::fleet::{Fleet, RequestId, Vehicle, VehicleId};
use crate::graph::RoadNetwork;
use crate::units::{Time, Vertex};

pub const NETWORK_HEADER: &str = "tail,head,mode,travel_time_ds";
pub const VEHICLES_HEADER: &str = "initial_location,service_start_ds,service_end_ds,capacity";
pub const REQUESTS_HEADER: &str = "origin,destination,t_req_ds";

/// Edge lists exactly as read from disk, so a loaded network can be written
/// back and reloaded to an identical value.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct NetworkSpec {
    pub num_vertices: usize,
    pub veh_edges: Vec<(Vertex, Vertex, u32)>,
    pub psg_edges: Vec<(Vertex, Vertex, u32)>,
}

impl NetworkSpec {
    pub fn build(&self) -> RoadNetwork {
        RoadNetwork::new(self.num_vertices, &self.veh_edges, &self.psg_edges)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct VehicleSpec {
    pub initial_location: Vertex,
    pub service_start: Time,
    pub service_end: Time,
    pub capacity: u32,
}

/// Vehicles get ids in file order and start idle at their initial location.
pub fn build_fleet(specs: &[VehicleSpec]) -> Fleet {
    Fleet {
        vehicles: specs
            .iter()
            .enumerate()
            .map(|(i, s)| {
                Vehicle::new(
                    i as VehicleId,
                    s.initial_location,
                    s.service_start,
                    s.service_end,
                    s.capacity,
                )
            })
            .collect(),
    }
}

fn line_err(path: &Path, line: usize, what: impl std::fmt::Display) -> anyhow::Error {
    anyhow!("{}:{}: {}", path.display(), line, what)
}

fn read(path: &Path) -> Result<String> {
    fs::read_to_string(path).with_context(|| format!("cannot read {}", path.display()))
}

/// Data rows of a CSV file with the given header, paired with their 1-based
/// line numbers. The header row is optional; blank lines are skipped.
fn data_rows<'a>(text: &'a str, header: &str) -> Vec<(usize, &'a str)> {
    text.lines()
        .enumerate()
        .filter(|&(i, l)| !(l.trim().is_empty() || (i == 0 && l.trim() == header)))
        .map(|(i, l)| (i + 1, l))
        .collect()
}

fn split_fields<'a>(path: &Path, line: usize, raw: &'a str, n: usize) -> Result<Vec<&'a str>> {
    let f: Vec<&str> = raw.split(',').map(str::trim).collect();
    if f.len() != n {
        return Err(line_err(path, line, format!("expected {n} fields, got {}", f.len())));
    }
    Ok(f)
}

fn parse_int<T: std::str::FromStr>(s: &str, what: &str) -> Result<T, String> {
    s.parse().map_err(|_| format!("invalid {what} '{s}'"))
}

pub fn load_network(path: &Path) -> Result<NetworkSpec> {
    let text = read(path)?;
    let mut spec = NetworkSpec::default();
    let mut max_id: i64 = -1;
    for (ln, raw) in data_rows(&text, NETWORK_HEADER) {
        let f = split_fields(path, ln, raw, 4)?;
        let oops = |what: String| line_err(path, ln, what);
        let tail: Vertex = parse_int(f[0], "tail vertex").map_err(oops)?;
        let head: Vertex = parse_int(f[1], "head vertex").map_err(oops)?;
        let tt: i64 = parse_int(f[3], "travel time").map_err(oops)?;
        if tt <= 0 {
            return Err(line_err(path, ln, format!("non-positive travel time {tt}")));
        }
        let tt = u32::try_from(tt).map_err(|_| line_err(path, ln, "travel time too large"))?;
        max_id = max_id.max(tail as i64).max(head as i64);
        match f[2] {
            "veh" => spec.veh_edges.push((tail, head, tt)),
            "psg" => spec.psg_edges.push((tail, head, tt)),
            m => return Err(line_err(path, ln, format!("unknown mode '{m}'"))),
        }
    }
    spec.num_vertices = (max_id + 1) as usize;
    Ok(spec)
}

pub fn save_network(path: &Path, spec: &NetworkSpec) -> Result<()> {
    let mut out = String::from(NETWORK_HEADER);
    out.push('\n');
    for (mode, edges) in [("veh", &spec.veh_edges), ("psg", &spec.psg_edges)] {
        for &(t, h, w) in edges {
            let _ = writeln!(out, "{t},{h},{mode},{w}");
        }
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn load_vehicles(path: &Path, num_vertices: usize) -> Result<Vec<VehicleSpec>> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, raw) in data_rows(&text, VEHICLES_HEADER) {
        let f = split_fields(path, ln, raw, 4)?;
        let oops = |what: String| line_err(path, ln, what);
        let loc: Vertex = parse_int(f[0], "initial location").map_err(oops)?;
        let start: Time = parse_int(f[1], "service start").map_err(oops)?;
        let end: Time = parse_int(f[2], "service end").map_err(oops)?;
        let capacity: u32 = parse_int(f[3], "capacity").map_err(oops)?;
        if loc as usize >= num_vertices {
            return Err(line_err(path, ln, format!("vertex {loc} out of range")));
        }
        if start >= end {
            return Err(line_err(path, ln, "service must start before it ends"));
        }
        if capacity < 1 {
            return Err(line_err(path, ln, "capacity must be at least 1"));
        }
        out.push(VehicleSpec { initial_location: loc, service_start: start, service_end: end, capacity });
    }
    Ok(out)
}

pub fn save_vehicles(path: &Path, specs: &[VehicleSpec]) -> Result<()> {
    let mut out = String::from(VEHICLES_HEADER);
    out.push('\n');
    for s in specs {
        let _ = writeln!(out, "{},{},{},{}", s.initial_location, s.service_start, s.service_end, s.capacity);
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

/// Loads requests and returns them sorted by request time, ties in file
/// order. The flag reports whether the file was already sorted; callers
/// should warn when it was not.
pub fn load_requests(path: &Path, num_vertices: usize) -> Result<(Vec<Request>, bool)> {
    let text = read(path)?;
    let mut out = Vec::new();
    for (ln, raw) in data_rows(&text, REQUESTS_HEADER) {
        let f = split_fields(path, ln, raw, 3)?;
        let oops = |what: String| line_err(path, ln, what);
        let origin: Vertex = parse_int(f[0], "origin").map_err(oops)?;
        let destination: Vertex = parse_int(f[1], "destination").map_err(oops)?;
        let t_req: Time = parse_int(f[2], "request time").map_err(oops)?;
        for v in [origin, destination] {
            if v as usize >= num_vertices {
                return Err(line_err(path, ln, format!("vertex {v} out of range")));
            }
        }
        let id = out.len() as RequestId;
        out.push(Request { id, origin, destination, t_req });
    }
    let sorted = out.windows(2).all(|w| w[0].t_req <= w[1].t_req);
    if !sorted {
        out.sort_by_key(|r| (r.t_req, r.id));
    }
    Ok((out, sorted))
}

pub fn save_requests(path: &Path, reqs: &[Request]) -> Result<()> {
    let mut out = String::from(REQUESTS_HEADER);
    out.push('\n');
    for r in reqs {
        let _ = writeln!(out, "{},{},{}", r.origin, r.destination, r.t_req);
    }
    fs::write(path, out).with_context(|| format!("cannot write {}", path.display()))
}

pub fn parse_on_off(s: &str) -> Result<bool, String> {
    match s {
        "on" | "true" | "1" => Ok(true),
        "off" | "false" | "0" => Ok(false),
        _ => Err(format!("expected on or off, got '{s}'")),
    }
}

pub fn parse_pals(s: &str) -> Result<PalsStrategy, String> {
    match s {
        "individual" => Ok(PalsStrategy::Individual),
        "collective" => Ok(PalsStrategy::Collective),
        _ => Err(format!("expected individual or collective, got '{s}'")),
    }
}

pub fn parse_dals(s: &str) -> Result<DalsStrategy, String> {
    match s {
        "individual" => Ok(DalsStrategy::Individual),
        "collective" => Ok(DalsStrategy::Collective),
        _ => Err(format!("expected individual or collective, got '{s}'")),
    }
}

/// Sets one configuration key. Keys match the CLI flag names with either
/// `-` or `_` as the separator.
pub fn apply_config_key(cfg: &mut Config, key: &str, val: &str) -> Result<(), String> {
    match key.replace('-', "_").as_str() {
        "rho" => cfg.rho = parse_int(val, "rho")?,
        "tau" => cfg.tau = parse_rat(val)?,
        "omega" => cfg.omega = parse_rat(val)?,
        "alpha" => cfg.alpha = parse_rat(val)?,
        "beta" => cfg.beta = parse_int(val, "beta")?,
        "max_wait" => cfg.max_wait = parse_int(val, "max wait")?,
        "gamma_wait" => cfg.gamma_wait = parse_rat(val)?,
        "gamma_trip" => cfg.gamma_trip = parse_rat(val)?,
        "k_elliptic" => cfg.k_elliptic = parse_int(val, "batch width")?,
        "k_pd" => cfg.k_pd = parse_int(val, "batch width")?,
        "k_laststop" => cfg.k_laststop = parse_int(val, "batch width")?,
        "pals" => cfg.pals = parse_pals(val)?,
        "dals" => cfg.dals = parse_dals(val)?,
        "sorted_buckets" => cfg.pruning.sorted_buckets = parse_on_off(val)?,
        "elliptic_radius" => cfg.pruning.elliptic_radius = parse_on_off(val)?,
        "laststop_scan_stop" => cfg.pruning.laststop_scan_stop = parse_on_off(val)?,
        "pd_domination" => cfg.pruning.pd_domination = parse_on_off(val)?,
        "dals_domination" => cfg.pruning.dals_domination = parse_on_off(val)?,
        "cost_pruning" => cfg.pruning.cost_pruning = parse_on_off(val)?,
        "capacity" => cfg.capacity = parse_int(val, "capacity")?,
        "walking_speed" => cfg.walking_speed = parse_rat(val)?,
        "seed" => cfg.seed = parse_int(val, "seed")?,
        _ => return Err(format!("unknown key '{key}'")),
    }
    Ok(())
}

/// Applies a key=value file to the configuration. `#` starts a comment.
pub fn apply_config_file(cfg: &mut Config, path: &Path) -> Result<()> {
    let text = read(path)?;
    for (ln, raw) in text.lines().enumerate() {
        let line = raw.split('#').next().unwrap_or("").trim();
        if line.is_empty() {
            continue;
        }
        let Some((k, v)) = line.split_once('=') else {
            return Err(line_err(path, ln + 1, "expected key=value"));
        };
        apply_config_key(cfg, k.trim(), v.trim()).map_err(|e| line_err(path, ln + 1, e))?;
    }
    Ok(())
}
