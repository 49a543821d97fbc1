use serde::{Deserialize, Serialize};

use super::cf::RotationNumber;
use super::circle::{Arc, CirclePoint, OrbitWalker};
use super::diophantine::DiophantineClass;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyReport {
    pub count: u64,
    pub lhs: f64,
    pub rhs: f64,
    pub pass: bool,
}

/// Number of j in [0, n) with theta + j alpha in the arc.
pub fn orbit_count(rot: &RotationNumber, arc: &Arc, theta: CirclePoint, n: u64) -> u64 {
    let mut w = OrbitWalker::new(&rot.alpha, theta, 0, false);
    let mut c = 0;
    for _ in 0..n {
        if arc.contains(w.current()) {
            c += 1;
        }
        w.advance();
    }
    c
}

/// |#{0 <= j < N : theta + j alpha in J} - N lambda(J)| against
/// 2 C^{-1} log^{2+xi} N.
pub fn discrepancy_check(
    rot: &RotationNumber,
    class: &DiophantineClass,
    arc: &Arc,
    theta: CirclePoint,
    n: u64,
) -> DiscrepancyReport {
    let count = orbit_count(rot, arc, theta, n);
    let lhs = (count as f64 - n as f64 * arc.length()).abs();
    let rhs = 2.0 / class.constant_c * (n.max(2) as f64).ln().powf(2.0 + class.xi);
    DiscrepancyReport { count, lhs, rhs, pass: lhs <= rhs }
}
