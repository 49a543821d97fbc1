//! Smooth coboundaries f = d Phi / ds with compactly supported transfer
//! functions, general C^1 observables, and the flow-box localized pairs.

pub mod flowbox;

use std::sync::OnceLock;

use serde::{Deserialize, Serialize};

use crate::arithmetic::{Arc, CirclePoint};
use crate::error::{Error, Result};
use crate::flow::margin::arc_min_phi;
use crate::flow::PhasePoint;
use crate::numerics::adaptive;
use crate::roof::RoofFunction;

pub use flowbox::{flow_box, localized_pair, FlowBox, LocalizedCoboundary, LocalizedObservable, ProfileSpec, Train};

/// The mollifier b(u) = exp(1 - 1/(1 - u^2)) on (-1, 1), b(0) = 1.
#[inline]
pub fn bump(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    (1.0 - 1.0 / (1.0 - u * u)).exp()
}

#[inline]
pub fn bump_d1(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - u * u;
    bump(u) * (-2.0 * u / (q * q))
}

#[inline]
pub fn bump_d2(u: f64) -> f64 {
    if u.abs() >= 1.0 {
        return 0.0;
    }
    let q = 1.0 - u * u;
    bump(u) * (6.0 * u.powi(4) - 2.0) / q.powi(4)
}

/// Sup norms of the mollifier and its first two derivatives, and the
/// integrals of b and b^2.
#[derive(Clone, Copy, Debug)]
pub struct BumpConstants {
    pub sup_d1: f64,
    pub sup_d2: f64,
    pub int_b: f64,
    pub int_b2: f64,
}

fn refine_max<F: Fn(f64) -> f64>(f: F, lo: f64, hi: f64) -> f64 {
    // golden section on a bracket known to contain one local max
    let g = 0.5 * (5f64.sqrt() - 1.0);
    let (mut a, mut b) = (lo, hi);
    for _ in 0..200 {
        let c = b - g * (b - a);
        let d = a + g * (b - a);
        if f(c) > f(d) {
            b = d;
        } else {
            a = c;
        }
    }
    f(0.5 * (a + b))
}

pub fn bump_constants() -> &'static BumpConstants {
    static C: OnceLock<BumpConstants> = OnceLock::new();
    C.get_or_init(|| {
        // |b'| peaks where b'' = 0, i.e. u^4 = 1/3
        let sup_d1 = bump_d1(-(1.0f64 / 3.0).powf(0.25)).abs();
        let m = 200_000;
        let mut best = (0.0, 0.0);
        for i in 0..m {
            let u = -1.0 + 2.0 * (i as f64 + 0.5) / m as f64;
            let v = bump_d2(u).abs();
            if v > best.0 {
                best = (v, u);
            }
        }
        let h = 2.0 / m as f64;
        let sup_d2 = refine_max(|u| bump_d2(u).abs(), best.1 - 2.0 * h, best.1 + 2.0 * h).max(best.0);
        let int_b = 2.0 * adaptive(&bump, 0.0, 1.0, 1e-15, 50);
        let int_b2 = 2.0 * adaptive(&|u| bump(u).powi(2), 0.0, 1.0, 1e-15, 50);
        // a relative pad keeps the reported norms above any sampled value
        BumpConstants { sup_d1: sup_d1 * (1.0 + 1e-9), sup_d2: sup_d2 * (1.0 + 1e-9), int_b, int_b2 }
    })
}

/// C^0 and C^1 norms; the C^1 norm is max(sup|h|, sup|dh/dtheta|, sup|dh/ds|).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Norms {
    pub c0: f64,
    pub c1: f64,
}

/// Anything that can be integrated against the invariant measure.
pub trait Observable: Sync {
    fn value(&self, x: &PhasePoint) -> f64;
    fn norms(&self) -> Norms;
    /// Support margin; 0 when unrestricted.
    fn zeta(&self) -> f64;
    fn label(&self) -> String;
    /// Region carrying the support, for quadrature.
    fn domain(&self) -> Domain;
    /// Value at box coordinates for `Domain::Box` observables; elsewhere
    /// sigma is read as the fibre coordinate.
    fn at_box(&self, theta: CirclePoint, sigma: f64) -> f64 {
        self.value(&PhasePoint::new(theta, sigma))
    }
    /// Time intervals carrying the support inside a box, if known.
    fn time_support(&self) -> Option<Vec<(f64, f64)>> {
        None
    }
}

/// f = d Phi / ds with its transfer function Phi.
pub trait TransferPair: Observable {
    fn transfer_at(&self, x: &PhasePoint) -> f64;
    fn transfer_norms(&self) -> Norms;
}

/// Quadrature domain of an observable's support.
#[derive(Clone, Debug)]
pub enum Domain {
    /// theta over an arc, s over [lo, hi]
    Rect { arc: Arc, s_lo: f64, s_hi: f64 },
    /// flow-box coordinates: theta over the box base, time over (-T, T)
    Box { arc: Arc, s0: f64, half_height: f64 },
}

/// Tensor bump A b((theta - c)/w_theta) b((s - c_s)/w_s).
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TensorBump {
    pub center: CirclePoint,
    pub w_theta: f64,
    pub c_s: f64,
    pub w_s: f64,
    pub amplitude: f64,
}

impl TensorBump {
    fn coords(&self, x: &PhasePoint) -> (f64, f64) {
        (x.theta.diff(self.center) / self.w_theta, (x.s - self.c_s) / self.w_s)
    }

    pub fn arc(&self) -> Arc {
        Arc::centered(self.center, self.w_theta)
    }

    /// Phi and its two first partials.
    pub fn grad(&self, x: &PhasePoint) -> (f64, f64, f64) {
        let (u, v) = self.coords(x);
        let (bu, bv) = (bump(u), bump(v));
        let a = self.amplitude;
        (a * bu * bv, a * bump_d1(u) * bv / self.w_theta, a * bu * bump_d1(v) / self.w_s)
    }

    pub fn eval(&self, x: &PhasePoint) -> f64 {
        let (u, v) = self.coords(x);
        self.amplitude * bump(u) * bump(v)
    }

    fn check_support(&self, roof: &RoofFunction, zeta: f64) -> Result<()> {
        let arc = self.arc();
        let fail = |why: &str| Err(Error::SupportViolation(format!("{why}: {self:?}, zeta = {zeta}")));
        if !(self.w_theta > 0.0 && self.w_s > 0.0 && self.w_theta < 0.5) {
            return fail("widths must be positive");
        }
        if arc.distance_to_zero() < zeta {
            return fail("theta range meets the zeta-neighbourhood of the singular fibre");
        }
        let top = arc_min_phi(roof, &arc) - zeta;
        if self.c_s - self.w_s < zeta || self.c_s + self.w_s > top {
            return fail("s range leaves (zeta, phi - zeta)");
        }
        Ok(())
    }

    pub fn norms(&self) -> Norms {
        let k = bump_constants();
        let a = self.amplitude.abs();
        Norms { c0: a, c1: a.max(a * k.sup_d1 / self.w_theta).max(a * k.sup_d1 / self.w_s) }
    }
}

/// A C^1 observable given by a tensor bump supported in M_zeta.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BumpObservable {
    pub bump: TensorBump,
    pub zeta: f64,
}

impl BumpObservable {
    pub fn new(roof: &RoofFunction, zeta: f64, bump: TensorBump) -> Result<Self> {
        bump.check_support(roof, zeta)?;
        Ok(BumpObservable { bump, zeta })
    }
}

impl Observable for BumpObservable {
    fn value(&self, x: &PhasePoint) -> f64 {
        self.bump.eval(x)
    }
    fn norms(&self) -> Norms {
        self.bump.norms()
    }
    fn zeta(&self) -> f64 {
        self.zeta
    }
    fn label(&self) -> String {
        format!("bump(theta={:.6},s={:.6})", self.bump.center.to_f64(), self.bump.c_s)
    }
    fn domain(&self) -> Domain {
        Domain::Rect { arc: self.bump.arc(), s_lo: self.bump.c_s - self.bump.w_s, s_hi: self.bump.c_s + self.bump.w_s }
    }
}

/// f = d Phi / ds for a tensor-bump transfer function Phi.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Coboundary {
    pub transfer: TensorBump,
    pub zeta: f64,
    pub transfer_norms: Norms,
    pub f_norms: Norms,
}

impl Coboundary {
    pub fn transfer_value(&self, x: &PhasePoint) -> f64 {
        self.transfer.eval(x)
    }
}

impl Observable for Coboundary {
    fn value(&self, x: &PhasePoint) -> f64 {
        self.transfer.grad(x).2
    }
    fn norms(&self) -> Norms {
        self.f_norms
    }
    fn zeta(&self) -> f64 {
        self.zeta
    }
    fn label(&self) -> String {
        format!("coboundary(theta={:.6},s={:.6})", self.transfer.center.to_f64(), self.transfer.c_s)
    }
    fn domain(&self) -> Domain {
        let b = &self.transfer;
        Domain::Rect { arc: b.arc(), s_lo: b.c_s - b.w_s, s_hi: b.c_s + b.w_s }
    }
}

impl TransferPair for Coboundary {
    fn transfer_at(&self, x: &PhasePoint) -> f64 {
        self.transfer_value(x)
    }
    fn transfer_norms(&self) -> Norms {
        self.transfer_norms
    }
}

/// Coboundary whose transfer function is the tensor bump of the given
/// center, half-widths and amplitude.
pub fn bump_coboundary(
    roof: &RoofFunction,
    zeta: f64,
    center: (f64, f64),
    widths: (f64, f64),
    amplitude: f64,
) -> Result<Coboundary> {
    let transfer = TensorBump {
        center: CirclePoint::from_f64(center.0),
        w_theta: widths.0,
        c_s: center.1,
        w_s: widths.1,
        amplitude,
    };
    transfer.check_support(roof, zeta)?;
    let k = bump_constants();
    let a = amplitude.abs();
    let (wt, ws) = widths;
    let f0 = a * k.sup_d1 / ws;
    let f_norms = Norms { c0: f0, c1: f0.max(a * k.sup_d1 * k.sup_d1 / (wt * ws)).max(a * k.sup_d2 / (ws * ws)) };
    Ok(Coboundary { transfer, zeta, transfer_norms: transfer.norms(), f_norms })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct NormPair {
    pub n0: f64,
    pub n1: f64,
}

/// N0 = |Phi|_0 |g|_0 and N1 = (|f|_0 + |Phi|_0)|g|_1 + (|f|_1 + |Phi|_1)|g|_0.
pub fn norm_pair(f: Norms, phi: Norms, g: Norms) -> NormPair {
    NormPair { n0: phi.c0 * g.c0, n1: (f.c0 + phi.c0) * g.c1 + (f.c1 + phi.c1) * g.c0 }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::numerics::GaussLegendre;

    fn roof() -> RoofFunction {
        RoofFunction::new(0.25).unwrap()
    }

    #[test]
    fn bump_derivatives_match_differences() {
        for &u in &[-0.7, -0.3, 0.0, 0.4, 0.8] {
            let h = 1e-6;
            assert!((bump_d1(u) - (bump(u + h) - bump(u - h)) / (2.0 * h)).abs() < 1e-6);
            assert!((bump_d2(u) - (bump_d1(u + h) - bump_d1(u - h)) / (2.0 * h)).abs() < 1e-5);
        }
    }

    #[test]
    fn reported_norms_dominate_dense_samples() {
        let f = bump_coboundary(&roof(), 0.05, (0.5, 0.18), (0.2, 0.1), 1.5).unwrap();
        let m = 1000;
        let (mut s0, mut sphi) = (0.0f64, 0.0f64);
        for i in 0..m {
            for j in 0..m {
                let x = PhasePoint::new(
                    CirclePoint::from_f64(0.3 + 0.4 * (i as f64 + 0.5) / m as f64),
                    0.08 + 0.2 * (j as f64 + 0.5) / m as f64,
                );
                s0 = s0.max(f.value(&x).abs());
                sphi = sphi.max(f.transfer_value(&x).abs());
            }
        }
        assert!(s0 <= f.f_norms.c0 && s0 > 0.9 * f.f_norms.c0);
        assert!(sphi <= f.transfer_norms.c0);
    }

    #[test]
    fn coboundary_has_zero_mean() {
        let r = roof();
        let f = bump_coboundary(&r, 0.05, (0.5, 0.18), (0.2, 0.1), 1.0).unwrap();
        let g = GaussLegendre::new(20);
        let v = g.composite(0.3, 0.7, 8, |th| {
            g.composite(0.0, r.value_at(th), 16, |s| f.value(&PhasePoint::new(CirclePoint::from_f64(th), s)))
        });
        assert!(v.abs() < 1e-6, "{v}");
    }

    #[test]
    fn fibre_integral_telescopes() {
        let f = bump_coboundary(&roof(), 0.05, (0.5, 0.18), (0.2, 0.1), 1.0).unwrap();
        let th = CirclePoint::from_f64(0.47);
        let g = GaussLegendre::new(20);
        let (a, b) = (0.1, 0.25);
        let v = g.composite(a, b, 16, |s| f.value(&PhasePoint::new(th, s)));
        let diff = f.transfer_value(&PhasePoint::new(th, b)) - f.transfer_value(&PhasePoint::new(th, a));
        assert!((v - diff).abs() < 1e-4 * diff.abs().max(1e-3));
        let full = g.composite(0.0, 0.33, 32, |s| f.value(&PhasePoint::new(th, s)));
        assert!(full.abs() < 1e-10);
    }

    #[test]
    fn support_outside_margin_is_rejected() {
        let r = roof();
        assert!(matches!(bump_coboundary(&r, 0.05, (0.03, 0.18), (0.01, 0.1), 1.0), Err(Error::SupportViolation(_))));
        assert!(matches!(bump_coboundary(&r, 0.05, (0.5, 0.18), (0.1, 0.2), 1.0), Err(Error::SupportViolation(_))));
    }

    #[test]
    fn norm_pair_is_monotone() {
        let a = Norms { c0: 1.0, c1: 2.0 };
        let b = Norms { c0: 1.5, c1: 2.0 };
        let p = norm_pair(a, a, a);
        let q = norm_pair(a, b, a);
        assert!(q.n0 >= p.n0 && q.n1 >= p.n1 && p.n0 >= 0.0);
    }
}
