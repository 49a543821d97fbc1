//! The roof phi(theta) = scale * |2 sin(pi theta)|^{-(1-eta)}, normalized to
//! unit integral, with exact first and second derivatives.

use serde::{Deserialize, Serialize};
use statrs::function::gamma::gamma;
use std::f64::consts::PI;

use crate::arithmetic::CirclePoint;
use crate::error::{Error, Result};

/// Below this exponent the roof is close to non-integrable and quadrature
/// over fibres gets slow.
pub const ETA_WARN_BELOW: f64 = 1e-3;

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct RoofFunction {
    pub eta: f64,
    /// a = 1 - eta
    pub exponent: f64,
    pub scale: f64,
    /// phi(t) |t|^a -> m1 as t -> 0
    pub m1: f64,
    /// -phi'(t) t |t|^a -> n1 as t -> 0 (with sign(t))
    pub n1: f64,
    /// phi''(t) |t|^{a+2} -> r1
    pub r1: f64,
    /// inf phi = phi(1/2) = scale * 2^{-a}
    pub floor_c: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Jet {
    pub v: f64,
    pub d1: f64,
    pub d2: f64,
}

/// Integral of |2 sin pi t|^{-a} over one period, Gamma(1-a) / Gamma(1-a/2)^2.
pub fn base_integral(a: f64) -> f64 {
    gamma(1.0 - a) / gamma(1.0 - 0.5 * a).powi(2)
}

impl RoofFunction {
    pub fn new(eta: f64) -> Result<Self> {
        if !(eta > 0.0 && eta < 1.0) {
            return Err(Error::BadExponent(eta));
        }
        let a = 1.0 - eta;
        let scale = 1.0 / base_integral(a);
        let m1 = scale * (2.0 * PI).powf(-a);
        Ok(RoofFunction { eta, exponent: a, scale, m1, n1: a * m1, r1: a * (a + 1.0) * m1, floor_c: scale * 2f64.powf(-a) })
    }

    pub fn warns(&self) -> bool {
        self.eta < ETA_WARN_BELOW
    }

    /// phi at a signed real representative in [-1/2, 1/2).
    #[inline]
    pub fn value_at(&self, t: f64) -> f64 {
        self.scale * (2.0 * (PI * t).sin()).abs().powf(-self.exponent)
    }

    #[inline]
    pub fn jet_at(&self, t: f64) -> Jet {
        let a = self.exponent;
        let (s, c) = (PI * t).sin_cos();
        let big_s = 2.0 * s;
        let ds = 2.0 * PI * c;
        let abs_s = big_s.abs();
        let v = self.scale * abs_s.powf(-a);
        // d/dt |S|^{-a} = -a |S|^{-a} S'/S ; S'' = -pi^2 S
        let r = ds / big_s;
        let d1 = -a * v * r;
        let d2 = a * v * ((a + 1.0) * r * r + PI * PI);
        Jet { v, d1, d2 }
    }

    pub fn eval(&self, x: CirclePoint) -> Result<f64> {
        if x.0 == 0 {
            return Err(Error::SingularityHit { index: 0 });
        }
        Ok(self.value_at(x.signed()))
    }

    pub fn eval_d1(&self, x: CirclePoint) -> Result<f64> {
        Ok(self.jet(x)?.d1)
    }

    pub fn eval_d2(&self, x: CirclePoint) -> Result<f64> {
        Ok(self.jet(x)?.d2)
    }

    pub fn jet(&self, x: CirclePoint) -> Result<Jet> {
        if x.0 == 0 {
            return Err(Error::SingularityHit { index: 0 });
        }
        Ok(self.jet_at(x.signed()))
    }

    /// Point t in (0, 1/2] with phi(t) = h, for h >= floor_c.
    pub fn level_point(&self, h: f64) -> f64 {
        if h <= self.floor_c {
            return 0.5;
        }
        let s = (h / self.scale).powf(-1.0 / self.exponent);
        (0.5 * s).asin() / PI
    }
}

pub fn make_roof(eta: f64) -> Result<RoofFunction> {
    RoofFunction::new(eta)
}
