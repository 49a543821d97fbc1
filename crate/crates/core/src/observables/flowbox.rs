//! Flow boxes J x (-T, T) over a horizontal interval and the localized
//! pairs built on them.

use serde::{Deserialize, Serialize};

use crate::arithmetic::{Arc, CirclePoint};
use crate::error::{Error, Result};
use crate::flow::diagnostics::HorizontalInterval;
use crate::flow::orbit::OrbitTable;
use crate::flow::{PhasePoint, SpecialFlow};

use super::{bump, bump_constants, bump_d1, bump_d2, Domain, Norms, Observable, TransferPair};

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct FlowBox {
    pub base: HorizontalInterval,
    /// half-height T actually used
    pub half_height: f64,
    /// largest T with J x (-T, T) injective, from sampled returns
    pub t_j: f64,
    /// the same from the exact minimum of the first-return time
    pub t_j_exact: f64,
    pub zeta: f64,
    /// open time intervals inside (-T, T) on which T^t(J) stays in M_zeta
    pub safe: Vec<(f64, f64)>,
    /// hitting counts met by the box
    pub n_range: (i64, i64),
    /// sup |phi'_N| over the base for N in n_range
    pub d1_max: f64,
    #[serde(skip)]
    flow: Option<SpecialFlow>,
}

/// Minimum of phi_n over a closed arc, splitting at singular points and
/// bisecting on the sign of phi'_n on each convex piece.
fn min_birkhoff_over(flow: &SpecialFlow, arc: &Arc, n: i64) -> Result<f64> {
    let len = arc.length();
    let mut cuts = vec![0.0, len];
    let (lo, hi) = if n >= 0 { (0, n) } else { (n, 0) };
    for j in lo..hi {
        let p = flow.rot.rot(-j);
        if arc.contains(p) {
            cuts.push(arc.offset_of(p));
        }
    }
    cuts.sort_by(|a, b| a.partial_cmp(b).unwrap());
    let at = |x: f64| arc.start.offset(x);
    let mut best = f64::INFINITY;
    for w in cuts.windows(2) {
        let (a, b) = (w[0], w[1]);
        if b - a <= 0.0 {
            continue;
        }
        let pad = (b - a) * 1e-12;
        let (mut l, mut r) = (a + pad, b - pad);
        let dl = flow.birkhoff(at(l), n)?;
        let dr = flow.birkhoff(at(r), n)?;
        let sgn = if n >= 0 { 1.0 } else { -1.0 };
        if sgn * dl.d1 >= 0.0 {
            best = best.min(sgn * dl.value);
            continue;
        }
        if sgn * dr.d1 <= 0.0 {
            best = best.min(sgn * dr.value);
            continue;
        }
        for _ in 0..80 {
            let m = 0.5 * (l + r);
            if sgn * flow.birkhoff(at(m), n)?.d1 < 0.0 {
                l = m;
            } else {
                r = m;
            }
        }
        best = best.min(sgn * flow.birkhoff(at(0.5 * (l + r)), n)?.value);
    }
    Ok(best)
}

/// Exact minimum over the base of the first-return time to the base level.
pub fn first_return_min(flow: &SpecialFlow, arc: &Arc) -> Result<f64> {
    let lam = arc.length();
    let mut best = f64::INFINITY;
    let mut n = 1i64;
    while flow.roof.floor_c * n as f64 <= best {
        let shift = flow.rot.rot(n).signed();
        if shift.abs() < lam {
            if let Some(i_n) = arc.intersect(&arc.shift(flow.rot.rot(-n))) {
                best = best.min(min_birkhoff_over(flow, &i_n, n)?);
            }
        }
        n += 1;
        if n > 50_000_000 {
            return Err(Error::DegenerateInterval("no return found".into()));
        }
    }
    Ok(best)
}

/// First return time of a single base point, if below `cap`.
fn sampled_return(flow: &SpecialFlow, arc: &Arc, theta: CirclePoint, cap: f64) -> Result<f64> {
    let mut acc = 0.0;
    let mut p = theta;
    let step = flow.rot.rot(1);
    loop {
        if p.0 == 0 {
            return Err(Error::SingularityHit { index: 0 });
        }
        acc += flow.roof.value_at(p.signed());
        p = p.add(step);
        if acc >= cap {
            return Ok(f64::INFINITY);
        }
        if arc.contains(p) {
            return Ok(acc);
        }
    }
}

pub const BOX_MESH: usize = 65;

pub fn flow_box(flow: &SpecialFlow, base: HorizontalInterval, t_request: f64, zeta: f64) -> Result<FlowBox> {
    let arc = base.arc;
    if arc.is_full() || arc.length() <= 0.0 || arc.contains(CirclePoint::ZERO) {
        return Err(Error::DegenerateInterval(format!("base arc {arc:?} is empty, full, or meets the singular fibre")));
    }
    if !(t_request > 0.0) {
        return Err(Error::DegenerateInterval(format!("requested half-height {t_request}")));
    }
    let exact = first_return_min(flow, &arc)?;
    let t_j_exact = 0.5 * exact;
    // sampled injectivity: J x (-T, T) is injective on the samples iff no
    // sampled point returns to the base level within time 2T
    let mesh = base.mesh(BOX_MESH);
    let cap = 2.0 * exact + 10.0;
    let returns: Vec<f64> = mesh.iter().map(|&p| sampled_return(flow, &arc, p, cap)).collect::<Result<_>>()?;
    let injective = |t: f64| returns.iter().all(|&r| r > 2.0 * t);
    let (mut lo, mut hi) = (0.0, 0.5 * cap);
    for _ in 0..80 {
        let m = 0.5 * (lo + hi);
        if injective(m) {
            lo = m;
        } else {
            hi = m;
        }
    }
    let t_j = lo;
    let half_height = t_request.min(0.5 * t_j_exact);

    // hitting counts met by J x (-T, T)
    let s0 = base.s;
    let mut n_lo = i64::MAX;
    let mut n_hi = i64::MIN;
    for &p in &mesh {
        let x = PhasePoint::new(p, s0);
        n_lo = n_lo.min(flow.hitting_count(x, -half_height)?);
        n_hi = n_hi.max(flow.hitting_count(x, half_height)?);
    }
    let span = (n_hi - n_lo + 2) as usize;
    let tables: Vec<OrbitTable> = mesh
        .iter()
        .map(|&p| OrbitTable::new(flow, flow.rot.orbit(p, n_lo), span))
        .collect::<Result<_>>()?;
    let h = arc.length() / (BOX_MESH - 1) as f64;
    let off = (-n_lo) as usize;
    let phi_n = |t: &OrbitTable, n: i64| t.value(0, (n - n_lo) as usize) - t.value(0, off);
    let d1_n = |t: &OrbitTable, n: i64| t.d1(0, (n - n_lo) as usize) - t.d1(0, off);
    let mut d1_max = 0.0f64;
    let mut safe = Vec::new();
    for n in n_lo..=n_hi {
        let d1 = tables.iter().map(|t| d1_n(t, n).abs().max(d1_n(t, n + 1).abs())).fold(0.0, f64::max);
        d1_max = d1_max.max(d1);
        if arc.shift(flow.rot.rot(n)).distance_to_zero() <= zeta {
            continue;
        }
        // conservative: values between mesh points move by at most ~ d1 h
        let pad = 1.5 * d1 * h + 1e-12;
        let lower = tables.iter().map(|t| phi_n(t, n)).fold(f64::MIN, f64::max) + pad - s0 + zeta;
        let upper = tables.iter().map(|t| phi_n(t, n + 1)).fold(f64::MAX, f64::min) - pad - s0 - zeta;
        let (a, b) = (lower.max(-half_height), upper.min(half_height));
        if b > a {
            safe.push((a, b));
        }
    }
    Ok(FlowBox {
        base,
        half_height,
        t_j,
        t_j_exact,
        zeta,
        safe,
        n_range: (n_lo, n_hi),
        d1_max: 1.5 * d1_max,
        flow: Some(flow.clone()),
    })
}

impl FlowBox {
    pub fn flow(&self) -> &SpecialFlow {
        self.flow.as_ref().expect("flow box carries its flow")
    }

    /// T^sigma of the base point theta.
    pub fn point(&self, theta: CirclePoint, sigma: f64) -> Result<PhasePoint> {
        self.flow().evolve(PhasePoint::new(theta, self.base.s), sigma)
    }

    /// Box coordinates (theta, sigma) of y, if y lies in the box.
    pub fn chart(&self, y: &PhasePoint) -> Option<(CirclePoint, f64)> {
        let flow = self.flow();
        for n in self.n_range.0 - 1..=self.n_range.1 + 1 {
            let shift = flow.rot.rot(n);
            if !self.base.arc.shift(shift).contains(y.theta) {
                continue;
            }
            let theta = y.theta.sub(shift);
            let phi_n = flow.birkhoff(theta, n).ok()?.value;
            let sigma = y.s - self.base.s + phi_n;
            if sigma.abs() < self.half_height {
                return Some((theta, sigma));
            }
        }
        None
    }

    /// Total length of the safe set.
    pub fn safe_length(&self) -> f64 {
        self.safe.iter().map(|(a, b)| b - a).sum()
    }
}

/// A train of disjoint bumps in the time variable.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Train {
    pub centers: Vec<f64>,
    pub half_widths: Vec<f64>,
    pub amplitude: f64,
}

impl Train {
    fn locate(&self, s: f64) -> Option<usize> {
        let i = self.centers.partition_point(|&c| c < s);
        [i.wrapping_sub(1), i].into_iter().find(|&j| j < self.centers.len() && (s - self.centers[j]).abs() < self.half_widths[j])
    }

    pub fn value(&self, s: f64) -> f64 {
        self.locate(s).map_or(0.0, |j| self.amplitude * bump((s - self.centers[j]) / self.half_widths[j]))
    }

    pub fn d1(&self, s: f64) -> f64 {
        self.locate(s).map_or(0.0, |j| {
            let w = self.half_widths[j];
            self.amplitude * bump_d1((s - self.centers[j]) / w) / w
        })
    }

    pub fn d2(&self, s: f64) -> f64 {
        self.locate(s).map_or(0.0, |j| {
            let w = self.half_widths[j];
            self.amplitude * bump_d2((s - self.centers[j]) / w) / (w * w)
        })
    }

    /// sup |P|, sup |P'|, sup |P''|.
    pub fn sups(&self) -> (f64, f64, f64) {
        let k = bump_constants();
        let w = self.half_widths.iter().cloned().fold(f64::INFINITY, f64::min);
        let a = self.amplitude.abs();
        if self.centers.is_empty() {
            return (0.0, 0.0, 0.0);
        }
        (a, a * k.sup_d1 / w, a * k.sup_d2 / (w * w))
    }

    pub fn support(&self) -> Vec<(f64, f64)> {
        self.centers.iter().zip(&self.half_widths).map(|(c, w)| (c - w, c + w)).collect()
    }
}

/// One bump per safe interval of length at least `min_len`: centered at
/// `offset` (relative position in the interval) with half-width `fill`
/// times the room available on the shorter side.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ProfileSpec {
    pub fill: f64,
    pub offset: f64,
    pub amplitude: f64,
    pub min_len: f64,
}

impl Default for ProfileSpec {
    fn default() -> Self {
        ProfileSpec { fill: 1.0, offset: 0.5, amplitude: 1.0, min_len: 0.05 }
    }
}

impl ProfileSpec {
    pub fn train(&self, safe: &[(f64, f64)]) -> Result<Train> {
        if !(self.fill > 0.0 && self.fill <= 1.0 && self.offset > 0.0 && self.offset < 1.0) {
            return Err(Error::ProfileSupportViolation(format!("{self:?}")));
        }
        let mut centers = Vec::new();
        let mut half_widths = Vec::new();
        for &(a, b) in safe {
            let len = b - a;
            if len < self.min_len {
                continue;
            }
            centers.push(a + self.offset * len);
            half_widths.push(self.fill * self.offset.min(1.0 - self.offset) * len * (1.0 - 1e-9));
        }
        if centers.is_empty() {
            return Err(Error::ProfileSupportViolation("no safe interval is long enough".into()));
        }
        Ok(Train { centers, half_widths, amplitude: self.amplitude })
    }
}

/// Transverse cutoff with unit L^2 norm on the base arc.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Cutoff {
    pub center: CirclePoint,
    pub half_width: f64,
    pub scale: f64,
}

impl Cutoff {
    pub fn on(arc: &Arc) -> Self {
        let w = 0.5 * arc.length();
        Cutoff { center: arc.midpoint(), half_width: w, scale: 1.0 / (w * bump_constants().int_b2).sqrt() }
    }

    pub fn value(&self, theta: CirclePoint) -> f64 {
        self.scale * bump(theta.diff(self.center) / self.half_width)
    }

    pub fn d1(&self, theta: CirclePoint) -> f64 {
        self.scale * bump_d1(theta.diff(self.center) / self.half_width) / self.half_width
    }

    pub fn norms(&self) -> Norms {
        Norms { c0: self.scale, c1: self.scale.max(self.scale * bump_constants().sup_d1 / self.half_width) }
    }
}

fn box_norms(chi: &Cutoff, p: (f64, f64, f64), d1_max: f64) -> (Norms, Norms) {
    let k = bump_constants();
    let (x0, x1) = (chi.scale, chi.scale * k.sup_d1 / chi.half_width);
    let (p0, p1, p2) = p;
    let v = Norms { c0: x0 * p0, c1: (x0 * p0).max(x1 * p0 + x0 * p1 * d1_max).max(x0 * p1) };
    let dv = Norms { c0: x0 * p1, c1: (x0 * p1).max(x1 * p1 + x0 * p2 * d1_max).max(x0 * p2) };
    (v, dv)
}

/// f_J: vertical derivative of Phi_J(F(x, sigma)) = chi(x) P(sigma).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedCoboundary {
    pub flow_box: FlowBox,
    pub chi: Cutoff,
    pub profile: Train,
    pub transfer_norms: Norms,
    pub f_norms: Norms,
}

/// g_J(F(x, sigma)) = chi(x) psi(sigma).
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedObservable {
    pub flow_box: FlowBox,
    pub chi: Cutoff,
    pub profile: Train,
    pub norms: Norms,
}

impl LocalizedCoboundary {
    pub fn transfer_value(&self, y: &PhasePoint) -> f64 {
        self.flow_box.chart(y).map_or(0.0, |(th, s)| self.chi.value(th) * self.profile.value(s))
    }

    /// f_J at box coordinates.
    pub fn at(&self, theta: CirclePoint, sigma: f64) -> f64 {
        self.chi.value(theta) * self.profile.d1(sigma)
    }
}

impl Observable for LocalizedCoboundary {
    fn value(&self, y: &PhasePoint) -> f64 {
        self.flow_box.chart(y).map_or(0.0, |(th, s)| self.at(th, s))
    }
    fn norms(&self) -> Norms {
        self.f_norms
    }
    fn zeta(&self) -> f64 {
        self.flow_box.zeta
    }
    fn label(&self) -> String {
        "f_J".into()
    }
    fn domain(&self) -> Domain {
        Domain::Box { arc: self.flow_box.base.arc, s0: self.flow_box.base.s, half_height: self.flow_box.half_height }
    }
    fn at_box(&self, theta: CirclePoint, sigma: f64) -> f64 {
        self.at(theta, sigma)
    }
    fn time_support(&self) -> Option<Vec<(f64, f64)>> {
        Some(self.profile.support())
    }
}

impl TransferPair for LocalizedCoboundary {
    fn transfer_at(&self, y: &PhasePoint) -> f64 {
        self.transfer_value(y)
    }
    fn transfer_norms(&self) -> Norms {
        self.transfer_norms
    }
}

impl LocalizedObservable {
    pub fn at(&self, theta: CirclePoint, sigma: f64) -> f64 {
        self.chi.value(theta) * self.profile.value(sigma)
    }
}

impl Observable for LocalizedObservable {
    fn value(&self, y: &PhasePoint) -> f64 {
        self.flow_box.chart(y).map_or(0.0, |(th, s)| self.at(th, s))
    }
    fn norms(&self) -> Norms {
        self.norms
    }
    fn zeta(&self) -> f64 {
        self.flow_box.zeta
    }
    fn label(&self) -> String {
        "g_J".into()
    }
    fn domain(&self) -> Domain {
        Domain::Box { arc: self.flow_box.base.arc, s0: self.flow_box.base.s, half_height: self.flow_box.half_height }
    }
    fn at_box(&self, theta: CirclePoint, sigma: f64) -> f64 {
        self.at(theta, sigma)
    }
    fn time_support(&self) -> Option<Vec<(f64, f64)>> {
        Some(self.profile.support())
    }
}

/// The pair (f_J, g_J) with profiles filling the safe time set.
pub fn localized_pair(fb: &FlowBox, phi: &ProfileSpec, psi: &ProfileSpec) -> Result<(LocalizedCoboundary, LocalizedObservable)> {
    let chi = Cutoff::on(&fb.base.arc);
    let p = phi.train(&fb.safe)?;
    let q = psi.train(&fb.safe)?;
    for &(a, b) in p.support().iter().chain(q.support().iter()) {
        if !fb.safe.iter().any(|&(l, r)| l <= a && b <= r) {
            return Err(Error::ProfileSupportViolation(format!("profile support ({a}, {b}) leaves the safe set")));
        }
    }
    let (transfer_norms, f_norms) = box_norms(&chi, p.sups(), fb.d1_max);
    let (g_norms, _) = box_norms(&chi, q.sups(), fb.d1_max);
    Ok((
        LocalizedCoboundary { flow_box: fb.clone(), chi, profile: p, transfer_norms, f_norms },
        LocalizedObservable { flow_box: fb.clone(), chi, profile: q, norms: g_norms },
    ))
}
