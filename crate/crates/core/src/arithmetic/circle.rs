//! Fixed-point points of the circle T = R/Z.
//!
//! A point is stored as a `u128` counting units of 2^-128, so addition mod 1
//! is plain wrapping integer addition. The rotation number carries 64 more
//! bits, which keeps `n * alpha mod 1` exact to within half a unit for any
//! `|n| < 2^63`.

use serde::{Deserialize, Serialize};

const TWO_128: f64 = 340282366920938463463374607431768211456.0;

#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
pub struct CirclePoint(pub u128);

impl CirclePoint {
    pub const ZERO: CirclePoint = CirclePoint(0);
    pub const HALF: CirclePoint = CirclePoint(1u128 << 127);

    /// Reduces `x` mod 1 and rounds to the nearest unit.
    pub fn from_f64(x: f64) -> Self {
        let f = x - x.floor();
        let v = f * TWO_128;
        if v >= TWO_128 {
            return CirclePoint(0);
        }
        CirclePoint(v as u128)
    }

    /// Representative in [0, 1).
    pub fn to_f64(self) -> f64 {
        self.0 as f64 / TWO_128
    }

    /// Representative in [-1/2, 1/2).
    pub fn signed(self) -> f64 {
        (self.0 as i128) as f64 / TWO_128
    }

    /// Distance to 0 on the circle, ‖x‖.
    pub fn norm(self) -> f64 {
        self.signed().abs()
    }

    pub fn add(self, o: CirclePoint) -> Self {
        CirclePoint(self.0.wrapping_add(o.0))
    }

    pub fn sub(self, o: CirclePoint) -> Self {
        CirclePoint(self.0.wrapping_sub(o.0))
    }

    pub fn neg(self) -> Self {
        CirclePoint(self.0.wrapping_neg())
    }

    /// Adds a small real displacement (|d| < 1/2).
    pub fn offset(self, d: f64) -> Self {
        let u = (d * TWO_128) as i128;
        CirclePoint(self.0.wrapping_add(u as u128))
    }

    /// Signed displacement `self - o` in [-1/2, 1/2).
    pub fn diff(self, o: CirclePoint) -> f64 {
        self.sub(o).signed()
    }
}

/// Half-open arc `[start, end)` traversed in the positive direction.
/// `start == end` denotes the whole circle.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct Arc {
    pub start: CirclePoint,
    pub end: CirclePoint,
}

impl Arc {
    pub fn new(start: CirclePoint, end: CirclePoint) -> Self {
        Arc { start, end }
    }

    pub fn full() -> Self {
        Arc { start: CirclePoint::ZERO, end: CirclePoint::ZERO }
    }

    /// Arc `[a, b)` with reals reduced mod 1.
    pub fn from_f64(a: f64, b: f64) -> Self {
        if (b - a) >= 1.0 {
            return Self::full();
        }
        Arc { start: CirclePoint::from_f64(a), end: CirclePoint::from_f64(b) }
    }

    /// Arc of the given half-width around `center`.
    pub fn centered(center: CirclePoint, half_width: f64) -> Self {
        Arc { start: center.offset(-half_width), end: center.offset(half_width) }
    }

    pub fn is_full(&self) -> bool {
        self.start == self.end
    }

    /// Length in units of 2^-128; the full circle reports `None`.
    pub fn units(&self) -> Option<u128> {
        if self.is_full() {
            None
        } else {
            Some(self.end.0.wrapping_sub(self.start.0))
        }
    }

    pub fn length(&self) -> f64 {
        match self.units() {
            None => 1.0,
            Some(u) => u as f64 / TWO_128,
        }
    }

    pub fn contains(&self, x: CirclePoint) -> bool {
        match self.units() {
            None => true,
            Some(u) => x.0.wrapping_sub(self.start.0) < u,
        }
    }

    pub fn midpoint(&self) -> CirclePoint {
        match self.units() {
            None => CirclePoint::HALF.add(self.start),
            Some(u) => CirclePoint(self.start.0.wrapping_add(u / 2)),
        }
    }

    pub fn shift(&self, by: CirclePoint) -> Self {
        Arc { start: self.start.add(by), end: self.end.add(by) }
    }

    /// Position of `x` measured from `start`, as a real in [0, 1).
    pub fn offset_of(&self, x: CirclePoint) -> f64 {
        x.sub(self.start).to_f64()
    }

    /// Intersection of two arcs, assuming neither is the full circle and the
    /// result is a single arc (true when the total length is below 1).
    pub fn intersect(&self, o: &Arc) -> Option<Arc> {
        if self.is_full() {
            return Some(*o);
        }
        if o.is_full() {
            return Some(*self);
        }
        let a = self.units().unwrap();
        let b = o.units().unwrap();
        let os = o.start.0.wrapping_sub(self.start.0);
        if os < a {
            let len = (a - os).min(b);
            return Some(Arc { start: o.start, end: CirclePoint(o.start.0.wrapping_add(len)) });
        }
        let ss = self.start.0.wrapping_sub(o.start.0);
        if ss < b {
            let len = (b - ss).min(a);
            return Some(Arc { start: self.start, end: CirclePoint(self.start.0.wrapping_add(len)) });
        }
        None
    }

    /// Distance from the arc (its closure) to the point 0.
    pub fn distance_to_zero(&self) -> f64 {
        if self.contains(CirclePoint::ZERO) {
            return 0.0;
        }
        self.start.norm().min(self.end.norm())
    }
}

/// Rotation number as a 192-bit fixed-point fraction.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub struct FixedAlpha {
    pub hi: u128,
    pub lo: u64,
}

impl FixedAlpha {
    /// `n * alpha mod 1`, rounded to the nearest 2^-128.
    pub fn times(&self, n: i64) -> CirclePoint {
        let m = n.unsigned_abs() as u128;
        let p = m * self.lo as u128;
        let mut hi = m.wrapping_mul(self.hi).wrapping_add(p >> 64);
        let mut lo = p as u64;
        if n < 0 {
            let borrow = lo != 0;
            lo = lo.wrapping_neg();
            hi = (!hi).wrapping_add(if borrow { 0 } else { 1 });
        }
        CirclePoint(hi.wrapping_add((lo >> 63) as u128))
    }

    pub fn point(&self) -> CirclePoint {
        self.times(1)
    }

    pub fn to_f64(&self) -> f64 {
        self.hi as f64 / TWO_128
    }
}

/// Exact orbit walker `theta + j*alpha`, carried at 192 bits.
#[derive(Clone, Copy, Debug)]
pub struct OrbitWalker {
    hi: u128,
    lo: u64,
    step_hi: u128,
    step_lo: u64,
}

impl OrbitWalker {
    /// Walker positioned at `theta + start*alpha` stepping by `dir*alpha`.
    pub fn new(alpha: &FixedAlpha, theta: CirclePoint, start: i64, backward: bool) -> Self {
        let m = start.unsigned_abs() as u128;
        let p = m * alpha.lo as u128;
        let mut hi = m.wrapping_mul(alpha.hi).wrapping_add(p >> 64);
        let mut lo = p as u64;
        if start < 0 {
            let borrow = lo != 0;
            lo = lo.wrapping_neg();
            hi = (!hi).wrapping_add(if borrow { 0 } else { 1 });
        }
        hi = hi.wrapping_add(theta.0);
        let (step_hi, step_lo) = if backward {
            let borrow = alpha.lo != 0;
            ((!alpha.hi).wrapping_add(if borrow { 0 } else { 1 }), alpha.lo.wrapping_neg())
        } else {
            (alpha.hi, alpha.lo)
        };
        OrbitWalker { hi, lo, step_hi, step_lo }
    }

    pub fn current(&self) -> CirclePoint {
        CirclePoint(self.hi.wrapping_add((self.lo >> 63) as u128))
    }

    pub fn advance(&mut self) {
        let (lo, carry) = self.lo.overflowing_add(self.step_lo);
        self.lo = lo;
        self.hi = self.hi.wrapping_add(self.step_hi).wrapping_add(carry as u128);
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn from_f64_round_trips() {
        for &x in &[0.0, 0.25, 0.5, 0.75, 0.1, 0.999] {
            assert!((CirclePoint::from_f64(x).to_f64() - x).abs() < 1e-16);
        }
        assert_eq!(CirclePoint::from_f64(-0.25), CirclePoint::from_f64(0.75));
        assert!((CirclePoint::from_f64(0.75).signed() + 0.25).abs() < 1e-16);
    }

    #[test]
    fn arc_contains_wraps() {
        let a = Arc::from_f64(0.9, 1.1);
        assert!(a.contains(CirclePoint::from_f64(0.95)));
        assert!(a.contains(CirclePoint::from_f64(0.05)));
        assert!(!a.contains(CirclePoint::from_f64(0.5)));
        assert!(!a.contains(a.end));
        assert!(a.contains(a.start));
        assert!((a.length() - 0.2).abs() < 1e-12);
        assert!(Arc::full().contains(CirclePoint::from_f64(0.3)));
    }

    #[test]
    fn arc_intersection() {
        let a = Arc::from_f64(0.1, 0.4);
        let b = Arc::from_f64(0.3, 0.6);
        let c = a.intersect(&b).unwrap();
        assert!((c.start.to_f64() - 0.3).abs() < 1e-15 && (c.length() - 0.1).abs() < 1e-12);
        assert!(a.intersect(&Arc::from_f64(0.5, 0.7)).is_none());
        let d = Arc::from_f64(0.95, 1.05);
        let e = d.intersect(&Arc::from_f64(0.0, 0.5)).unwrap();
        assert!((e.length() - 0.05).abs() < 1e-12);
    }

    #[test]
    fn walker_matches_times() {
        let a = FixedAlpha { hi: 0x9E37_79B9_7F4A_7C15_F39C_C060_5CED_C834, lo: 0x1082_276B_F3A2_7251 };
        let th = CirclePoint::from_f64(0.3);
        let mut w = OrbitWalker::new(&a, th, 0, false);
        let mut b = OrbitWalker::new(&a, th, 0, true);
        for j in 0..10_000i64 {
            assert_eq!(w.current(), th.add(a.times(j)));
            let back = th.add(a.times(-j));
            assert!(b.current().0.wrapping_sub(back.0).wrapping_add(1) <= 2);
            w.advance();
            b.advance();
        }
        let s = OrbitWalker::new(&a, th, -17, false);
        assert!(s.current().diff(th.add(a.times(-17))).abs() < 1e-37);
    }
}
