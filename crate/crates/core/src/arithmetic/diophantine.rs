use serde::{Deserialize, Serialize};

use super::cf::RotationNumber;
use super::circle::{CirclePoint, OrbitWalker};

/// Every q up to this bound is scanned directly.
pub const SCAN_LIMIT: u128 = 10_000_000;
/// Witness constants below this are reported as suspicious.
pub const FLAG_BELOW: f64 = 1e-3;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiophantineClass {
    pub xi: f64,
    pub constant_c: f64,
    pub verified_up_to_q: u128,
    /// q attaining the minimum
    pub worst_q: u128,
    pub flagged: bool,
}

fn witness_at(q: u128, dist: f64, xi: f64) -> f64 {
    let l = (q as f64).ln();
    q as f64 * dist * l.powf(1.0 + xi)
}

/// Largest C with |alpha - p/q| >= C / (q^2 log^{1+xi} q) for 2 <= q <= q_max
/// (natural logarithm). Denominators up to `SCAN_LIMIT` are scanned one by
/// one; beyond that only convergents can undercut the Legendre bound
/// q ||q alpha|| >= 1/2, which is folded in.
pub fn diophantine_witness(rot: &RotationNumber, xi: f64, q_max: u128) -> DiophantineClass {
    let certified = rot.q[rot.depth()];
    let q_max = q_max.max(2).min(certified.max(2));
    let scan_to = q_max.min(SCAN_LIMIT);
    let mut best = f64::INFINITY;
    let mut worst_q = 2;
    let mut w = OrbitWalker::new(&rot.alpha, CirclePoint::ZERO, 2, false);
    for q in 2..=scan_to {
        let c = witness_at(q, w.current().norm(), xi);
        if c < best {
            best = c;
            worst_q = q;
        }
        w.advance();
    }
    if q_max > scan_to {
        for &qn in rot.q.iter().filter(|&&qn| qn > scan_to && qn <= q_max) {
            let c = witness_at(qn, rot.rot(qn as i64).norm(), xi);
            if c < best {
                best = c;
                worst_q = qn;
            }
        }
        let legendre = 0.5 * (scan_to as f64).ln().powf(1.0 + xi);
        best = best.min(legendre);
    }
    DiophantineClass { xi, constant_c: best, verified_up_to_q: q_max, worst_q, flagged: best < FLAG_BELOW }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::cf::AlphaSource;

    #[test]
    fn golden_witness_is_attained_at_two() {
        let r = RotationNumber::golden(40);
        let d = diophantine_witness(&r, 0.05, 10_000);
        // 2 * |2 alpha - 1| * (ln 2)^1.05
        let expect = 2.0 * (5f64.sqrt() - 2.0) * 2f64.ln().powf(1.05);
        assert!((d.constant_c - expect).abs() < 1e-12, "{}", d.constant_c);
        assert_eq!(d.worst_q, 2);
        assert!(!d.flagged);
    }

    #[test]
    fn huge_quotient_is_flagged() {
        let r = RotationNumber::new(AlphaSource::Quotients(vec![1, 1, 1_000_000]), 20).unwrap();
        let d = diophantine_witness(&r, 0.05, 10_000_000);
        assert!(d.flagged, "{}", d.constant_c);
        assert_eq!(d.worst_q, r.q[2]);
    }

    #[test]
    fn degenerate_range_uses_q_two() {
        let r = RotationNumber::silver(20);
        let d = diophantine_witness(&r, 0.1, 1);
        assert_eq!(d.verified_up_to_q, 2);
        let expect = witness_at(2, r.rot(2).norm(), 0.1);
        assert_eq!(d.constant_c, expect);
    }
}
