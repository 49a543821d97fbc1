use serde::{Deserialize, Serialize};

use crate::arithmetic::{Arc, CirclePoint, RotationNumber, TowerPartition};
use crate::error::{Error, Result};
use crate::roof::RoofFunction;

use super::PhasePoint;

/// Partitions larger than this are not built.
pub const MAX_PARTITION: u128 = 20_000_000;

/// Time window and denominators attached to the integer l:
/// l0 = l^{21/20}, l1 = (l+1)^{21/20}, q_n < l0 < q_{n+1}, and the partition
/// level k.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Scale {
    pub l: u64,
    pub l0: f64,
    pub l1: f64,
    pub n: usize,
    pub q_n: f64,
    pub k: usize,
    pub q_k: f64,
    /// true when k comes from q_k >= q_n (log q_n)^beta rather than from
    /// [q_n log^15 q_n, q_n log^20 q_n]
    pub fallback: bool,
}

pub fn window(l: u64) -> (f64, f64) {
    ((l as f64).powf(1.05), ((l + 1) as f64).powf(1.05))
}

impl Scale {
    /// `beta = None` forbids the fallback.
    pub fn new(rot: &RotationNumber, l: u64, beta: Option<f64>) -> Result<Self> {
        let (l0, l1) = window(l);
        let n = (0..rot.depth())
            .filter(|&i| (rot.q[i] as f64) < l0 && (rot.q[i + 1] as f64) > l0)
            .last()
            .ok_or(Error::EmptyDenominatorBracket { l })?;
        let q_n = rot.q[n] as f64;
        let lg = q_n.ln();
        let lo = q_n * lg.powi(15);
        let hi = q_n * lg.powi(20);
        let literal = (0..=rot.depth()).find(|&i| {
            let q = rot.q[i] as f64;
            q >= lo && q <= hi
        });
        if let Some(k) = literal {
            if rot.q[k] <= MAX_PARTITION && k + 1 < rot.depth() {
                return Ok(Scale { l, l0, l1, n, q_n, k, q_k: rot.q[k] as f64, fallback: false });
            }
        }
        let beta = beta.ok_or(Error::EmptyDenominatorBracket { l })?;
        let target = q_n * lg.max(1.0).powf(beta);
        let k = (n + 1..rot.depth())
            .find(|&i| rot.q[i] as f64 >= target)
            .ok_or(Error::DepthExceeded { requested: n + 1, available: rot.depth() })?;
        if rot.q[k] > MAX_PARTITION {
            return Err(Error::EmptyDenominatorBracket { l });
        }
        Ok(Scale { l, l0, l1, n, q_n, k, q_k: rot.q[k] as f64, fallback: true })
    }

    /// Smallest l whose window starts above `q`.
    pub fn l_for_qn(q: f64) -> u64 {
        let mut l = q.powf(1.0 / 1.05).floor().max(1.0) as u64;
        while window(l).0 <= q {
            l += 1;
        }
        l
    }
}

/// The margin set M_zeta together with W and V for a given scale.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MarginSet {
    pub zeta: f64,
    pub scale: Scale,
    pub partition: TowerPartition,
    pub in_w: Vec<bool>,
    /// min of phi over each closed block
    pub block_floor: Vec<f64>,
    /// q_n^{-3/5}
    pub exclusion: f64,
    /// q_n^{3/5 + 1/10}
    pub v_height: f64,
}

pub fn arc_min_phi(roof: &RoofFunction, a: &Arc) -> f64 {
    if a.contains(CirclePoint::HALF) {
        return roof.floor_c;
    }
    let far = a.start.norm().max(a.end.norm());
    roof.value_at(far)
}

pub fn arc_max_phi(roof: &RoofFunction, a: &Arc) -> f64 {
    let near = a.distance_to_zero();
    if near == 0.0 {
        f64::INFINITY
    } else {
        roof.value_at(near)
    }
}

impl MarginSet {
    pub fn new(roof: &RoofFunction, rot: &RotationNumber, zeta: f64, scale: Scale) -> Result<Self> {
        if !(zeta > 0.0 && zeta < 0.25) {
            return Err(Error::OutOfRange { what: "zeta must lie in (0, 1/4)", value: zeta });
        }
        let partition = TowerPartition::new(rot, scale.k)?;
        let exclusion = scale.q_n.powf(-0.6);
        let band = Arc::centered(CirclePoint::ZERO, exclusion);
        let mut in_w = Vec::with_capacity(partition.len());
        let mut block_floor = Vec::with_capacity(partition.len());
        for a in &partition.arcs {
            // closed block meets the closed band
            let meets = band.intersect(a).is_some() || band.contains(a.end) || a.contains(band.end);
            in_w.push(!meets);
            block_floor.push(arc_min_phi(roof, a));
        }
        let v_height = scale.q_n.powf(0.7);
        Ok(MarginSet { zeta, scale, partition, in_w, block_floor, exclusion, v_height })
    }

    pub fn block(&self, theta: CirclePoint) -> usize {
        self.partition.locate(theta)
    }

    pub fn in_w(&self, x: &PhasePoint) -> bool {
        let i = self.block(x.theta);
        self.in_w[i] && x.s <= self.block_floor[i]
    }

    pub fn in_v(&self, x: &PhasePoint) -> bool {
        self.in_w(x) || x.s <= self.v_height
    }

    pub fn in_m_zeta(&self, roof: &RoofFunction, x: &PhasePoint) -> bool {
        in_m_zeta(roof, self.zeta, x)
    }

    /// Checks M_zeta inside W block by block: every block reaching the
    /// region d(theta, 0) > zeta must lie in W and its floor must clear the
    /// top of M_zeta over the block.
    pub fn m_zeta_inside_w(&self, roof: &RoofFunction) -> bool {
        self.partition.arcs.iter().enumerate().all(|(i, a)| {
            let reaches = a.start.norm().max(a.end.norm()) > self.zeta || a.contains(CirclePoint::HALF);
            if !reaches {
                return true;
            }
            let top = roof.value_at(a.distance_to_zero().max(self.zeta)) - self.zeta;
            self.in_w[i] && top <= self.block_floor[i]
        })
    }
}


pub fn in_m_zeta(roof: &RoofFunction, zeta: f64, x: &PhasePoint) -> bool {
    let d = x.theta.norm();
    if d <= zeta {
        return false;
    }
    let h = roof.value_at(x.theta.signed());
    x.s > zeta && x.s < h - zeta
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn scale_brackets_window() {
        let r = RotationNumber::golden(60);
        for l in [50u64, 150, 700, 1500] {
            let s = Scale::new(&r, l, Some(2.0)).unwrap();
            assert!(s.q_n < s.l0 && (r.q[s.n + 1] as f64) > s.l0);
            assert!(s.fallback);
            assert!(s.q_k >= s.q_n * s.q_n.ln().powi(2));
            assert!((r.q[s.k - 1] as f64) < s.q_n * s.q_n.ln().powi(2));
        }
        assert!(matches!(Scale::new(&r, 150, None), Err(Error::EmptyDenominatorBracket { .. })));
    }

    #[test]
    fn l_for_qn_is_minimal() {
        let l = Scale::l_for_qn(233.0);
        assert!(window(l).0 > 233.0 && window(l - 1).0 <= 233.0);
    }

    #[test]
    fn margin_set_contains_m_zeta() {
        let roof = RoofFunction::new(0.25).unwrap();
        let r = RotationNumber::golden(60);
        let s = Scale::new(&r, 200, Some(2.0)).unwrap();
        let m = MarginSet::new(&roof, &r, 0.05, s).unwrap();
        assert!(m.m_zeta_inside_w(&roof));
        // pointwise on a mesh
        for i in 0..2000 {
            let th = CirclePoint::from_f64((i as f64 + 0.5) / 2000.0);
            let h = roof.value_at(th.signed());
            for j in 0..10 {
                let x = PhasePoint::new(th, h * (j as f64 + 0.5) / 10.0);
                if m.in_m_zeta(&roof, &x) {
                    assert!(m.in_w(&x));
                }
            }
        }
    }

    #[test]
    fn blocks_near_zero_are_excluded() {
        let roof = RoofFunction::new(0.25).unwrap();
        let r = RotationNumber::golden(60);
        let s = Scale::new(&r, 200, Some(2.0)).unwrap();
        let m = MarginSet::new(&roof, &r, 0.05, s).unwrap();
        for (i, a) in m.partition.arcs.iter().enumerate() {
            if m.in_w[i] {
                assert!(a.distance_to_zero() > m.exclusion);
            }
        }
        assert!(!m.in_w(&PhasePoint::new(CirclePoint::from_f64(1e-9), 0.1)));
    }
}
