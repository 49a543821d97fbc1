use crate::arithmetic::{CirclePoint, OrbitWalker};
use crate::error::{Error, Result};
use crate::numerics::KahanSum;

use super::{BirkhoffRecord, SpecialFlow};

/// Prefix sums of phi, phi', phi'' along the forward orbit of one base point,
/// so that phi_m(theta + i alpha) = S[i + m] - S[i].
#[derive(Clone, Debug)]
pub struct OrbitTable {
    pub theta: CirclePoint,
    pub s0: Vec<f64>,
    pub s1: Vec<f64>,
    pub s2: Vec<f64>,
    /// signed position of theta + j alpha
    pub pos: Vec<f64>,
}

impl OrbitTable {
    /// Orbit of length `len` (prefix arrays have len + 1 entries).
    pub fn new(flow: &SpecialFlow, theta: CirclePoint, len: usize) -> Result<Self> {
        let mut t = OrbitTable {
            theta,
            s0: Vec::with_capacity(len + 1),
            s1: Vec::with_capacity(len + 1),
            s2: Vec::with_capacity(len + 1),
            pos: Vec::with_capacity(len),
        };
        t.s0.push(0.0);
        t.s1.push(0.0);
        t.s2.push(0.0);
        let mut w = OrbitWalker::new(&flow.rot.alpha, theta, 0, false);
        let (mut a, mut b, mut c) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
        for j in 0..len {
            let p = w.current();
            if p.0 == 0 {
                return Err(Error::SingularityHit { index: j as i64 });
            }
            let x = p.signed();
            let jet = flow.roof.jet_at(x);
            a.add(jet.v);
            b.add(jet.d1);
            c.add(jet.d2);
            t.s0.push(a.value());
            t.s1.push(b.value());
            t.s2.push(c.value());
            t.pos.push(x);
            w.advance();
        }
        Ok(t)
    }

    /// Orbit long enough to resolve times up to `t_max` from every start
    /// index below `start_span`.
    pub fn covering(flow: &SpecialFlow, theta: CirclePoint, start_span: usize, t_max: f64) -> Result<Self> {
        let extra = (t_max / flow.roof.floor_c).ceil() as usize + 2;
        Self::new(flow, theta, start_span + extra)
    }

    pub fn len(&self) -> usize {
        self.pos.len()
    }

    pub fn is_empty(&self) -> bool {
        self.pos.is_empty()
    }

    pub fn value(&self, i: usize, m: usize) -> f64 {
        self.s0[i + m] - self.s0[i]
    }

    pub fn d1(&self, i: usize, m: usize) -> f64 {
        self.s1[i + m] - self.s1[i]
    }

    pub fn d2(&self, i: usize, m: usize) -> f64 {
        self.s2[i + m] - self.s2[i]
    }

    /// N >= 0 with phi_N(theta_i) <= tau < phi_{N+1}(theta_i), for tau >= 0.
    pub fn hitting(&self, i: usize, tau: f64) -> Option<usize> {
        let base = self.s0[i];
        // first index j > i with s0[j] - base > tau
        let slice = &self.s0[i + 1..];
        let k = slice.partition_point(|&v| v - base <= tau);
        if k == slice.len() {
            None
        } else {
            Some(k)
        }
    }

    pub fn record(&self, i: usize, m: usize) -> BirkhoffRecord {
        let x_min = self.pos[i..i + m].iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
        BirkhoffRecord { n: m as i64, value: self.value(i, m), d1: self.d1(i, m), d2: self.d2(i, m), x_min }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::RotationNumber;
    use crate::flow::PhasePoint;
    use crate::roof::RoofFunction;

    #[test]
    fn table_agrees_with_direct_sums() {
        let f = SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(40));
        let th = CirclePoint::from_f64(0.137);
        let t = OrbitTable::new(&f, th, 400).unwrap();
        for &(i, m) in &[(0usize, 13usize), (5, 100), (77, 200)] {
            let b = f.birkhoff(f.rot.orbit(th, i as i64), m as i64).unwrap();
            let r = t.record(i, m);
            assert!((b.value - r.value).abs() < 1e-10);
            assert!((b.d1 - r.d1).abs() < 1e-9 * b.d1.abs().max(1.0));
            assert_eq!(b.x_min, r.x_min);
        }
        for &tau in &[0.0, 3.3, 57.0, 200.0] {
            let n = t.hitting(5, tau).unwrap();
            let x = PhasePoint::new(f.rot.orbit(th, 5), 0.0);
            assert_eq!(n as i64, f.hitting_count(x, tau).unwrap());
        }
    }
}
