//! The special flow T^t over the rotation under the roof.

pub mod diagnostics;
pub mod margin;
pub mod orbit;

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{CirclePoint, OrbitWalker, RotationNumber};
use crate::error::{Error, Result};
use crate::numerics::KahanSum;
use crate::roof::RoofFunction;

pub use diagnostics::{check_lemma_secfir, dk_bounds_check, stretch_profile, xze_spot_check, DkReport, SecFirReport, StretchProfile, XzeReport};
pub use margin::{MarginSet, Scale};
pub use orbit::OrbitTable;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct PhasePoint {
    pub theta: CirclePoint,
    pub s: f64,
}

impl PhasePoint {
    pub fn new(theta: CirclePoint, s: f64) -> Self {
        PhasePoint { theta, s }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BirkhoffRecord {
    pub n: i64,
    pub value: f64,
    pub d1: f64,
    pub d2: f64,
    /// min distance to 0 over the summed orbit points (+inf for n = 0)
    pub x_min: f64,
}

/// Rotation plus roof: everything needed to run the flow.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct SpecialFlow {
    pub roof: RoofFunction,
    pub rot: RotationNumber,
}

impl SpecialFlow {
    pub fn new(roof: RoofFunction, rot: RotationNumber) -> Self {
        SpecialFlow { roof, rot }
    }

    pub fn phi(&self, theta: CirclePoint) -> Result<f64> {
        self.roof.eval(theta)
    }

    /// phi_n(theta) with derivatives; negative n uses
    /// phi_n = -(phi(theta + n alpha) + ... + phi(theta - alpha)).
    pub fn birkhoff(&self, theta: CirclePoint, n: i64) -> Result<BirkhoffRecord> {
        let (start, count, sign) = if n >= 0 { (0, n, 1.0) } else { (n, -n, -1.0) };
        let mut w = OrbitWalker::new(&self.rot.alpha, theta, start, false);
        let (mut v, mut d1, mut d2) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
        let mut x_min = f64::INFINITY;
        for j in 0..count {
            let x = w.current();
            if x.0 == 0 {
                return Err(Error::SingularityHit { index: start + j });
            }
            let t = x.signed();
            let jet = self.roof.jet_at(t);
            v.add(jet.v);
            d1.add(jet.d1);
            d2.add(jet.d2);
            x_min = x_min.min(t.abs());
            w.advance();
        }
        Ok(BirkhoffRecord { n, value: sign * v.value(), d1: sign * d1.value(), d2: sign * d2.value(), x_min })
    }

    /// N with phi_N <= t + s < phi_{N+1}, together with t + s - phi_N.
    pub fn hit(&self, x: PhasePoint, t: f64) -> Result<(i64, f64)> {
        let tau = t + x.s;
        let mut acc = KahanSum::new();
        if tau >= 0.0 {
            let mut w = OrbitWalker::new(&self.rot.alpha, x.theta, 0, false);
            let mut n = 0i64;
            loop {
                let p = w.current();
                if p.0 == 0 {
                    return Err(Error::SingularityHit { index: n });
                }
                let f = self.roof.value_at(p.signed());
                let mut next = acc;
                next.add(f);
                if next.value() > tau {
                    return Ok((n, tau - acc.value()));
                }
                acc = next;
                n += 1;
                w.advance();
            }
        } else {
            let mut w = OrbitWalker::new(&self.rot.alpha, x.theta, -1, true);
            let mut n = 0i64;
            loop {
                let p = w.current();
                if p.0 == 0 {
                    return Err(Error::SingularityHit { index: n - 1 });
                }
                acc.add(-self.roof.value_at(p.signed()));
                n -= 1;
                if acc.value() <= tau {
                    return Ok((n, tau - acc.value()));
                }
                w.advance();
            }
        }
    }

    pub fn hitting_count(&self, x: PhasePoint, t: f64) -> Result<i64> {
        Ok(self.hit(x, t)?.0)
    }

    pub fn evolve(&self, x: PhasePoint, t: f64) -> Result<PhasePoint> {
        let (n, r) = self.hit(x, t)?;
        Ok(PhasePoint { theta: self.rot.orbit(x.theta, n), s: r })
    }

    /// The identified representative of (theta, s) for any real s.
    pub fn normalize(&self, theta: CirclePoint, s: f64) -> Result<PhasePoint> {
        self.evolve(PhasePoint { theta, s: 0.0 }, s)
    }

    /// Distance between two phase points in the fibre direction, allowing
    /// one of them to sit just across a fibre boundary.
    pub fn fiber_distance(&self, a: PhasePoint, b: PhasePoint) -> Option<f64> {
        // orbit points computed along different paths may differ by a few units
        let near = |x: CirclePoint, y: CirclePoint| {
            let d = x.sub(y).0;
            d.min(d.wrapping_neg()) <= 16
        };
        if near(a.theta, b.theta) {
            return Some((a.s - b.s).abs());
        }
        let step = self.rot.rot(1);
        if near(a.theta.add(step), b.theta) {
            let h = self.roof.value_at(a.theta.signed());
            return Some(((h - a.s) + b.s).abs());
        }
        if near(b.theta.add(step), a.theta) {
            let h = self.roof.value_at(b.theta.signed());
            return Some(((h - b.s) + a.s).abs());
        }
        None
    }

    /// Exact sample from the invariant measure: theta with density phi,
    /// by rejection from a density proportional to |theta|^{-a}, then s
    /// uniform on the fibre.
    pub fn sample_invariant<R: Rng>(&self, rng: &mut R) -> PhasePoint {
        let a = self.roof.exponent;
        let eta = 1.0 - a;
        loop {
            let u: f64 = rng.gen();
            let mag = 0.5 * u.powf(1.0 / eta);
            let t = if rng.gen::<bool>() { mag } else { -mag };
            let theta = CirclePoint::from_f64(t);
            if theta.0 == 0 || mag == 0.0 {
                continue;
            }
            let ratio = (2.0 * mag / (std::f64::consts::PI * mag).sin()).powf(a);
            if rng.gen::<f64>() < ratio {
                let h = self.roof.value_at(theta.signed());
                return PhasePoint { theta, s: rng.gen::<f64>() * h };
            }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn flow() -> SpecialFlow {
        SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(60))
    }

    #[test]
    fn empty_sum() {
        let f = flow();
        let b = f.birkhoff(CirclePoint::from_f64(0.3), 0).unwrap();
        assert_eq!((b.value, b.d1, b.d2), (0.0, 0.0, 0.0));
        assert!(b.x_min.is_infinite());
    }

    #[test]
    fn cocycle_identity() {
        let f = flow();
        let th = CirclePoint::from_f64(0.137);
        for &(m, n) in &[(5i64, 7i64), (13, -4), (-6, 20), (-3, -9)] {
            let whole = f.birkhoff(th, m + n).unwrap();
            let a = f.birkhoff(th, m).unwrap();
            let b = f.birkhoff(f.rot.orbit(th, m), n).unwrap();
            assert!((whole.value - a.value - b.value).abs() < 1e-9);
            assert!((whole.d1 - a.d1 - b.d1).abs() < 1e-9 * whole.d1.abs().max(1.0));
            assert!((whole.d2 - a.d2 - b.d2).abs() < 1e-9 * whole.d2.abs().max(1.0));
        }
    }

    #[test]
    fn golden_q6_matches_high_precision_sum() {
        // 256-bit evaluation of sum_{j<13} phi(0.137 + j alpha)
        let f = flow();
        assert_eq!(f.rot.q[6], 13);
        let b = f.birkhoff(CirclePoint::from_f64(0.137), 13).unwrap();
        assert!((b.value - 11.331_766_405_261_052_852).abs() < 1e-10, "{}", b.value);
        assert!((f.roof.scale - 0.567_585_696_646_630_502).abs() < 1e-14);
    }

    #[test]
    fn second_derivative_positive() {
        let f = flow();
        for i in 1..50 {
            let b = f.birkhoff(CirclePoint::from_f64(i as f64 / 50.0 + 1e-3), 1 + i).unwrap();
            assert!(b.d2 > 0.0);
        }
    }

    #[test]
    fn hitting_count_examples() {
        let f = flow();
        let x = PhasePoint::new(CirclePoint::from_f64(0.2), 0.3);
        let h0 = f.phi(x.theta).unwrap();
        let h1 = f.phi(f.rot.orbit(x.theta, 1)).unwrap();
        assert_eq!(f.hitting_count(x, 0.0).unwrap(), 0);
        assert_eq!(f.hitting_count(x, h0 - x.s - 1e-9).unwrap(), 0);
        let t = h0 - x.s + 0.1 * h1;
        assert_eq!(f.hitting_count(x, t).unwrap(), 1);
        let hm = f.phi(f.rot.orbit(x.theta, -1)).unwrap();
        let t = -x.s - 0.1 * hm;
        assert_eq!(f.hitting_count(x, t).unwrap(), -1);
        let y = f.evolve(x, t).unwrap();
        assert!((y.s - 0.9 * hm).abs() < 1e-12);
    }

    #[test]
    fn fibre_boundary_is_identified() {
        let f = flow();
        let th = CirclePoint::from_f64(0.4);
        let h = f.phi(th).unwrap();
        let p = f.normalize(th, h).unwrap();
        assert_eq!(p.theta, f.rot.orbit(th, 1));
        assert_eq!(p.s, 0.0);
    }

    #[test]
    fn evolve_identity_and_group_law() {
        let f = flow();
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        for _ in 0..100 {
            let x = f.sample_invariant(&mut rng);
            let x = PhasePoint { s: x.s.min(50.0), ..x };
            assert_eq!(f.evolve(x, 0.0).unwrap(), x);
            let t1 = rng.gen_range(-300.0..300.0);
            let t2 = rng.gen_range(-300.0..300.0);
            let a = f.evolve(f.evolve(x, t1).unwrap(), t2).unwrap();
            let b = f.evolve(x, t1 + t2).unwrap();
            assert!(f.fiber_distance(a, b).map_or(false, |d| d < 1e-8), "{x:?} {t1} {t2} {a:?} {b:?}");
            let back = f.evolve(f.evolve(x, t1).unwrap(), -t1).unwrap();
            assert!(f.fiber_distance(back, x).unwrap() < 1e-8);
        }
    }

    #[test]
    fn sampler_theta_marginal_has_density_phi() {
        // mass of theta in [0.25, 0.5) under density phi, by quadrature
        let f = flow();
        let expect = crate::numerics::GaussLegendre::new(16).composite(0.25, 0.5, 8, |t| f.roof.value_at(t));
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let n = 200_000;
        let hits = (0..n).filter(|_| {
            let x = f.sample_invariant(&mut rng).theta.to_f64();
            (0.25..0.5).contains(&x)
        });
        let p = hits.count() as f64 / n as f64;
        let se = (expect * (1.0 - expect) / n as f64).sqrt();
        assert!((p - expect).abs() < 5.0 * se, "{p} vs {expect}");
    }
}
