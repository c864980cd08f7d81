//! Run configuration: cost weights, walking radius, search strategies and
//! batch widths. Weights are exact rationals; before any cost is computed
//! they are scaled by the least common denominator so that all cost
//! comparisons happen between plain integers.

use num_integer::Integer;
use num_rational::Ratio;

use crate::units::{inf_add, inf_mul, Cost, Time, INF};

/// Exact rational weight, e.g. `alpha = 17/10`.
pub type Rat = Ratio<i64>;

/// Parses `"1.7"`, `"2"`, or `"17/10"` into an exact rational.
pub fn parse_rat(s: &str) -> Result<Rat, String> {
    let s = s.trim();
    if let Some((num, den)) = s.split_once('/') {
        let num: i64 = num.trim().parse().map_err(|_| bad_rat(s))?;
        let den: i64 = den.trim().parse().map_err(|_| bad_rat(s))?;
        if den <= 0 {
            return Err(bad_rat(s));
        }
        return Ok(Rat::new(num, den));
    }
    if let Some((int, frac)) = s.split_once('.') {
        let int_part: i64 = if int.is_empty() { 0 } else { int.parse().map_err(|_| bad_rat(s))? };
        if frac.is_empty() || frac.len() > 9 || !frac.bytes().all(|b| b.is_ascii_digit()) {
            return Err(bad_rat(s));
        }
        let den = 10i64.pow(frac.len() as u32);
        let num: i64 = frac.parse().map_err(|_| bad_rat(s))?;
        let sign = if s.starts_with('-') { -1 } else { 1 };
        return Ok(Rat::new(int_part * den + sign * num, den));
    }
    let v: i64 = s.parse().map_err(|_| bad_rat(s))?;
    Ok(Rat::from_integer(v))
}

fn bad_rat(s: &str) -> String {
    format!("invalid rational value '{s}'")
}

/// Which last-stop search variant runs for pickups after the last stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum PalsStrategy {
    Individual,
    Collective,
}

/// Which last-stop search variant runs for dropoffs after the last stop.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum DalsStrategy {
    Individual,
    Collective,
}

/// Correctness-preserving accelerations that can be switched off one by one.
/// Disabling any of them must never change a chosen insertion cost; the
/// toggles exist so tests can prove exactly that.
#[derive(Debug, Clone, Copy)]
pub struct Pruning {
    /// Keep bucket entries sorted and stop scans early.
    pub sorted_buckets: bool,
    /// Restrict elliptic bucket entries to the leeway radius.
    pub elliptic_radius: bool,
    /// Stop last-stop bucket scans once the cost lower bound exceeds the
    /// global upper bound.
    pub laststop_scan_stop: bool,
    /// Pairwise domination of pickup-dropoff labels in the collective
    /// pickup-after-last-stop search.
    pub pd_domination: bool,
    /// Pairwise domination of dropoff labels in the collective
    /// dropoff-after-last-stop search.
    pub dals_domination: bool,
    /// Cost-upper-bound pruning everywhere else (queue stops, lower-bound
    /// short circuits, the pickup-before-next-stop filter).
    pub cost_pruning: bool,
}

impl Default for Pruning {
    fn default() -> Self {
        Pruning {
            sorted_buckets: true,
            elliptic_radius: true,
            laststop_scan_stop: true,
            pd_domination: true,
            dals_domination: true,
            cost_pruning: true,
        }
    }
}

/// Full run configuration.
#[derive(Debug, Clone)]
pub struct Config {
    /// Walking radius around origin and destination, deciseconds.
    pub rho: Time,
    /// Weight of rider trip time in the insertion cost.
    pub tau: Rat,
    /// Weight of rider walking time in the insertion cost.
    pub omega: Rat,
    /// Trip deadline factor: deadline = alpha * direct distance + beta.
    pub alpha: Rat,
    /// Trip deadline offset, deciseconds.
    pub beta: Time,
    /// Soft maximum wait time, deciseconds.
    pub max_wait: Time,
    /// Penalty weight per decisecond of wait-time violation.
    pub gamma_wait: Rat,
    /// Penalty weight per decisecond of trip-time violation.
    pub gamma_trip: Rat,
    /// Batch width of the elliptic bucket queries.
    pub k_elliptic: usize,
    /// Batch width of the pickup-dropoff distance queries.
    pub k_pd: usize,
    /// Batch width of the last-stop bucket queries.
    pub k_laststop: usize,
    pub pals: PalsStrategy,
    pub dals: DalsStrategy,
    pub pruning: Pruning,
    /// Default vehicle capacity used by the instance generator.
    pub capacity: u32,
    /// Walking speed in metres per decisecond; used only when generating
    /// instances from geometric coordinates.
    pub walking_speed: Rat,
    /// Seed for the instance generator.
    pub seed: u64,
}

pub const VALID_BATCH_WIDTHS: [usize; 8] = [1, 2, 4, 8, 16, 32, 64, 128];

impl Default for Config {
    fn default() -> Self {
        Config {
            rho: 3000,
            tau: Rat::from_integer(1),
            omega: Rat::from_integer(0),
            alpha: Rat::new(17, 10),
            beta: 1200,
            max_wait: 6000,
            gamma_wait: Rat::from_integer(1),
            gamma_trip: Rat::from_integer(10),
            k_elliptic: 32,
            k_pd: 32,
            k_laststop: 8,
            pals: PalsStrategy::Collective,
            dals: DalsStrategy::Collective,
            pruning: Pruning::default(),
            capacity: 4,
            walking_speed: Rat::new(1, 8),
            seed: 1,
        }
    }
}

impl Config {
    pub fn validate(&self) -> Result<(), String> {
        for (name, k) in [
            ("k-elliptic", self.k_elliptic),
            ("k-pd", self.k_pd),
            ("k-laststop", self.k_laststop),
        ] {
            if !VALID_BATCH_WIDTHS.contains(&k) {
                return Err(format!("{name} must be one of {VALID_BATCH_WIDTHS:?}, got {k}"));
            }
        }
        if self.rho < 0 || self.beta < 0 || self.max_wait < 0 {
            return Err("rho, beta and max-wait must be non-negative".into());
        }
        for (name, r) in [
            ("tau", self.tau),
            ("omega", self.omega),
            ("gamma-wait", self.gamma_wait),
            ("gamma-trip", self.gamma_trip),
        ] {
            if r < Rat::from_integer(0) {
                return Err(format!("{name} must be non-negative"));
            }
        }
        if self.alpha < Rat::from_integer(1) {
            return Err("alpha must be at least 1".into());
        }
        if self.capacity < 1 {
            return Err("capacity must be at least 1".into());
        }
        if self.walking_speed <= Rat::from_integer(0) {
            return Err("walking speed must be positive".into());
        }
        Ok(())
    }

    pub fn weights(&self) -> Weights {
        Weights::from_config(self)
    }
}

/// Cost weights with denominators cleared. A cost in this scale is
/// `scale` times the cost in rational arithmetic, so comparisons and sums
/// stay exact in `i64`.
#[derive(Debug, Clone, Copy)]
pub struct Weights {
    /// Common denominator; the coefficient of the vehicle detour term.
    pub scale: i64,
    /// Scaled trip-time weight (`scale * tau`).
    pub tau: i64,
    /// Scaled walking-time weight.
    pub omega: i64,
    /// Scaled wait-violation weight.
    pub gamma_wait: i64,
    /// Scaled trip-violation weight.
    pub gamma_trip: i64,
    /// Trip deadline factor numerator and denominator.
    alpha_num: i64,
    alpha_den: i64,
    pub beta: Time,
    pub max_wait: Time,
}

impl Weights {
    fn from_config(cfg: &Config) -> Weights {
        let scale = [cfg.tau, cfg.omega, cfg.gamma_wait, cfg.gamma_trip]
            .iter()
            .fold(1i64, |l, r| l.lcm(r.denom()));
        let scaled = |r: Rat| r.numer() * (scale / r.denom());
        Weights {
            scale,
            tau: scaled(cfg.tau),
            omega: scaled(cfg.omega),
            gamma_wait: scaled(cfg.gamma_wait),
            gamma_trip: scaled(cfg.gamma_trip),
            alpha_num: *cfg.alpha.numer(),
            alpha_den: *cfg.alpha.denom(),
            beta: cfg.beta,
            max_wait: cfg.max_wait,
        }
    }

    /// Trip deadline for a request whose direct vehicle distance is `dist`:
    /// `floor(alpha * dist) + beta`, in deciseconds.
    pub fn trip_deadline(&self, dist: Time) -> Time {
        if dist >= INF {
            return INF;
        }
        inf_add(self.alpha_num * dist / self.alpha_den, self.beta)
    }

    /// Scaled cost of one decisecond of vehicle detour.
    #[inline]
    pub fn detour_cost(&self, t: Time) -> Cost {
        inf_mul(self.scale, t.max(0))
    }

    #[inline]
    pub fn trip_cost(&self, t: Time) -> Cost {
        inf_mul(self.tau, t.max(0))
    }

    #[inline]
    pub fn walk_cost(&self, t: Time) -> Cost {
        inf_mul(self.omega, t.max(0))
    }

    #[inline]
    pub fn wait_violation(&self, t_dep: Time, t_req: Time) -> Cost {
        if t_dep >= INF {
            return INF;
        }
        inf_mul(self.gamma_wait, (t_dep - t_req - self.max_wait).max(0))
    }

    #[inline]
    pub fn trip_violation(&self, t_trip: Time, deadline: Time) -> Cost {
        if t_trip >= INF {
            return INF;
        }
        if deadline >= INF {
            return 0;
        }
        inf_mul(self.gamma_trip, (t_trip - deadline).max(0))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn parses_decimals_and_fractions() {
        assert_eq!(parse_rat("1.7").unwrap(), Rat::new(17, 10));
        assert_eq!(parse_rat("17/10").unwrap(), Rat::new(17, 10));
        assert_eq!(parse_rat("2").unwrap(), Rat::from_integer(2));
        assert_eq!(parse_rat("0.25").unwrap(), Rat::new(1, 4));
        assert!(parse_rat("x").is_err());
        assert!(parse_rat("1/0").is_err());
    }

    #[test]
    fn default_weights_follow_reference_parameters() {
        let cfg = Config::default();
        assert_eq!(cfg.beta, 1200);
        assert_eq!(cfg.max_wait, 6000);
        assert_eq!(cfg.alpha, Rat::new(17, 10));
        assert_eq!(cfg.gamma_trip, Rat::from_integer(10));
        let w = cfg.weights();
        assert_eq!(w.scale, 1);
        assert_eq!(w.tau, 1);
        assert_eq!(w.omega, 0);
        assert_eq!(w.gamma_wait, 1);
        assert_eq!(w.gamma_trip, 10);
        // deadline = floor(1.7 * 1000) + 1200
        assert_eq!(w.trip_deadline(1000), 1700 + 1200);
    }

    #[test]
    fn fractional_weights_share_one_scale() {
        let cfg = Config {
            tau: Rat::new(1, 2),
            omega: Rat::new(1, 3),
            ..Config::default()
        };
        let w = cfg.weights();
        assert_eq!(w.scale, 6);
        assert_eq!(w.tau, 3);
        assert_eq!(w.omega, 2);
        assert_eq!(w.gamma_trip, 60);
    }

    #[test]
    fn batch_width_validation() {
        let mut cfg = Config::default();
        cfg.k_elliptic = 3;
        assert!(cfg.validate().is_err());
        cfg.k_elliptic = 64;
        assert!(cfg.validate().is_ok());
    }
}
