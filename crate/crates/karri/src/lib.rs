//! Dispatch engine for dynamic taxi sharing with walking legs to meeting
//! points. Riders may be picked up and dropped off at vertices within a
//! walking radius of their origin and destination; the dispatcher finds the
//! cost-optimal insertion of each request into the running vehicle routes
//! using bucket-based many-to-many shortest-path searches on a contraction
//! hierarchy.

pub mod buckets;
pub mod ch;
pub mod config;
pub mod cost;
pub mod dispatch;
pub mod elliptic;
pub mod fleet;
pub mod gen;
pub mod graph;
pub mod instance;
pub mod lastleg;
pub mod oracle;
pub mod pdcalc;
pub mod sim;
pub mod units;
