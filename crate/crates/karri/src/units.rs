//! Base numeric types. All times and travel distances are integer
//! deciseconds; costs are integers in a fixed-point scale chosen per run
//! (see [`crate::config::Weights`]). A single shared infinity sentinel marks
//! unreachable distances and infeasible insertions.

/// Time or travel-time distance in deciseconds.
pub type Time = i64;

/// Scaled cost value (deciseconds times the common weight denominator).
pub type Cost = i64;

/// Vertex id in a road network.
pub type Vertex = u32;

/// Sentinel for "unreachable" / "infeasible". Kept well below `i64::MAX` so
/// that a handful of additions cannot wrap.
pub const INF: i64 = i64::MAX / 8;

/// `a + b` with infinity absorption.
#[inline]
pub fn inf_add(a: i64, b: i64) -> i64 {
    if a >= INF || b >= INF {
        INF
    } else {
        a + b
    }
}

/// `a * b` for non-negative operands with infinity absorption.
#[inline]
pub fn inf_mul(a: i64, b: i64) -> i64 {
    debug_assert!(a >= 0 && b >= 0);
    if (a >= INF || b >= INF) && a != 0 && b != 0 {
        INF
    } else {
        a.saturating_mul(b).min(INF)
    }
}

/// Clamps a finite-but-huge sum back to the sentinel.
#[inline]
pub fn cap_inf(a: i64) -> i64 {
    a.min(INF)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn addition_absorbs_infinity() {
        assert_eq!(inf_add(3, 4), 7);
        assert_eq!(inf_add(INF, 4), INF);
        assert_eq!(inf_add(3, INF), INF);
        assert_eq!(inf_add(INF, INF), INF);
    }

    #[test]
    fn multiplication_absorbs_infinity() {
        assert_eq!(inf_mul(3, 4), 12);
        assert_eq!(inf_mul(INF, 4), INF);
        assert_eq!(inf_mul(0, INF), 0);
    }
}
