//! Pointwise diagnostics for Birkhoff sums: Denjoy-Koksma type bounds,
//! stretching profiles over horizontal intervals, and the second-derivative
//! lemmas, with thresholds in the unit normalization rescaled by the roof's
//! asymptotic constants.

use serde::{Deserialize, Serialize};

use crate::arithmetic::{Arc, CirclePoint};
use crate::error::Result;

use super::margin::MarginSet;
use super::orbit::OrbitTable;
use super::{PhasePoint, SpecialFlow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkReport {
    pub n: u64,
    pub r: usize,
    pub phi_n: f64,
    pub phi_at_xmin: f64,
    pub lower_ok: bool,
    pub upper_ok: bool,
    /// phi_N - phi(x_min) - q_r/3
    pub lower_margin: f64,
    /// phi(x_min) + 3 q_{r+1} - phi_N
    pub upper_margin: f64,
    /// (phi_N - phi(x_min)) / q_r
    pub lower_ratio: f64,
    /// (phi_N - phi(x_min)) / q_{r+1}
    pub upper_ratio: f64,
    pub d1_ok: bool,
    pub d2_ok: bool,
    /// |phi'_N| < phi_N^{2+2 eta}
    pub ele_ok: bool,
}

pub fn dk_bounds_check(flow: &SpecialFlow, theta: CirclePoint, n: u64) -> Result<DkReport> {
    let rot = &flow.rot;
    let r = rot.index_below(n as u128).min(rot.depth() - 1);
    let (qr, qr1) = (rot.q[r] as f64, rot.q[r + 1] as f64);
    let b = flow.birkhoff(theta, n as i64)?;
    let jet = flow.roof.jet_at(b.x_min);
    let eta = flow.roof.eta;
    let excess = b.value - jet.v;
    let c1 = 8.0 * qr1.powf(2.0 - eta);
    let c2 = 8.0 * qr1.powf(3.0 - eta);
    let d1_ok = jet.d1.abs() - c1 < b.d1.abs() && b.d1.abs() < jet.d1.abs() + c1;
    let d2_ok = jet.d2 <= b.d2 * (1.0 + 1e-12) && b.d2 < jet.d2 + c2;
    Ok(DkReport {
        n,
        r,
        phi_n: b.value,
        phi_at_xmin: jet.v,
        lower_ok: excess >= qr / 3.0,
        upper_ok: excess <= 3.0 * qr1,
        lower_margin: excess - qr / 3.0,
        upper_margin: 3.0 * qr1 - excess,
        lower_ratio: excess / qr,
        upper_ratio: excess / qr1,
        d1_ok,
        d2_ok,
        ele_ok: b.d1.abs() < b.value.powf(2.0 + 2.0 * eta),
    })
}

/// Horizontal interval: an arc of the circle at height s.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct HorizontalInterval {
    pub arc: Arc,
    pub s: f64,
}

impl HorizontalInterval {
    /// `count` points spread over the closed arc, endpoints included.
    pub fn mesh(&self, count: usize) -> Vec<CirclePoint> {
        let len = self.arc.length();
        let step = if count > 1 { len / (count - 1) as f64 } else { 0.0 };
        // the closed right endpoint sits one unit inside the half-open arc
        (0..count)
            .map(|i| {
                if i + 1 == count && count > 1 {
                    CirclePoint(self.arc.end.0.wrapping_sub(1))
                } else {
                    self.arc.start.offset(step * i as f64)
                }
            })
            .collect()
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct StretchProfile {
    pub t: Vec<f64>,
    pub u_i: f64,
    /// r_I^t, +inf when I_t is empty
    pub r: Vec<f64>,
    /// S_I^t, +inf when I_t is empty
    pub s_ratio: Vec<f64>,
    /// max change of u, r, S between the coarse mesh and its refinement
    pub refinement_delta: [f64; 3],
}

/// Per (theta, t) quantities of the stretching analysis.
#[derive(Clone, Copy, Debug)]
pub struct StretchSample {
    pub n: usize,
    pub d1: f64,
    pub d2: f64,
    pub x_min: f64,
    pub lands_in_w: bool,
    pub lands_in_v: bool,
}

pub fn stretch_samples(
    flow: &SpecialFlow,
    margin: &MarginSet,
    i: &HorizontalInterval,
    t_grid: &[f64],
    mesh: &[CirclePoint],
) -> Result<Vec<Vec<StretchSample>>> {
    let t_max = t_grid.iter().cloned().fold(0.0, f64::max) + i.s;
    mesh.iter()
        .map(|&th| {
            let tab = OrbitTable::covering(flow, th, 0, t_max)?;
            let mut out = Vec::with_capacity(t_grid.len());
            for &t in t_grid {
                let tau = t + i.s;
                let n = tab.hitting(0, tau).expect("table covers t_max");
                let rem = tau - tab.value(0, n);
                let y = PhasePoint::new(flow.rot.orbit(th, n as i64), rem);
                let x_min = tab.pos[..n.max(1)].iter().fold(f64::INFINITY, |a, &x| a.min(x.abs()));
                out.push(StretchSample {
                    n,
                    d1: tab.d1(0, n),
                    d2: tab.d2(0, n),
                    x_min,
                    lands_in_w: margin.in_w(&y),
                    lands_in_v: margin.in_v(&y),
                });
            }
            Ok(out)
        })
        .collect()
}

fn summarize(samples: &[Vec<StretchSample>], nt: usize, stride: usize) -> (f64, Vec<f64>, Vec<f64>) {
    let mut u = 0.0f64;
    let mut r = vec![f64::INFINITY; nt];
    let mut s = vec![f64::INFINITY; nt];
    let rows: Vec<&Vec<StretchSample>> = samples.iter().step_by(stride).collect();
    for row in &rows {
        for (j, x) in row.iter().enumerate() {
            u = u.max(x.d2.abs());
            if x.lands_in_w {
                r[j] = r[j].min(x.d1.abs());
                if x.d2 > 0.0 {
                    s[j] = s[j].min(x.d1 * x.d1 / x.d2);
                }
            }
        }
    }
    // a sign change of phi_N' at fixed N is a zero in between (phi'' > 0)
    for w in rows.windows(2) {
        for j in 0..nt {
            let (a, b) = (w[0][j], w[1][j]);
            if a.lands_in_w && b.lands_in_w && a.n == b.n && a.d1.signum() != b.d1.signum() {
                r[j] = 0.0;
                s[j] = 0.0;
            }
        }
    }
    (u, r, s)
}

fn max_change(a: &[f64], b: &[f64]) -> f64 {
    a.iter()
        .zip(b)
        .map(|(x, y)| if x.is_finite() && y.is_finite() { (x - y).abs() } else if x == y { 0.0 } else { f64::INFINITY })
        .fold(0.0, f64::max)
}

/// u_I, r_I^t and S_I^t on a theta mesh of `mesh_points` points (refined
/// once by midpoints to report stability).
pub fn stretch_profile(
    flow: &SpecialFlow,
    margin: &MarginSet,
    i: &HorizontalInterval,
    t_grid: &[f64],
    mesh_points: usize,
) -> Result<StretchProfile> {
    let fine = i.mesh(2 * mesh_points - 1);
    let samples = stretch_samples(flow, margin, i, t_grid, &fine)?;
    let (u_c, r_c, s_c) = summarize(&samples, t_grid.len(), 2);
    let (u_f, r_f, s_f) = summarize(&samples, t_grid.len(), 1);
    Ok(StretchProfile {
        t: t_grid.to_vec(),
        u_i: u_f,
        refinement_delta: [(u_f - u_c).abs(), max_change(&r_f, &r_c), max_change(&s_f, &s_c)],
        r: r_f,
        s_ratio: s_f,
    })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SecFirReport {
    pub u_i: f64,
    pub trigger: f64,
    pub triggered: bool,
    pub checked: usize,
    pub xmin_ok: usize,
    pub d1_ok: usize,
    pub d2_ok: usize,
    pub pass: bool,
}

/// When u_I >= q_n log^9 q_n: x_min <= 1/(q_n log^2 q_n),
/// |phi'_N| >= n1 (1/(2 x_min))^{2-eta} and |phi''_N| <= r1 (2/x_min)^{3-eta}
/// for sampled x with T^t x in W.
pub fn check_lemma_secfir(
    flow: &SpecialFlow,
    margin: &MarginSet,
    i: &HorizontalInterval,
    t_grid: &[f64],
    mesh_points: usize,
) -> Result<SecFirReport> {
    let qn = margin.scale.q_n;
    let lg = qn.ln();
    let trigger = qn * lg.powi(9);
    let mesh = i.mesh(mesh_points);
    let samples = stretch_samples(flow, margin, i, t_grid, &mesh)?;
    let u_i = samples.iter().flatten().map(|x| x.d2.abs()).fold(0.0, f64::max);
    let mut rep = SecFirReport { u_i, trigger, triggered: u_i >= trigger, checked: 0, xmin_ok: 0, d1_ok: 0, d2_ok: 0, pass: true };
    if !rep.triggered {
        return Ok(rep);
    }
    let roof = &flow.roof;
    let eta = roof.eta;
    for x in samples.iter().flatten().filter(|x| x.lands_in_w && x.n > 0) {
        rep.checked += 1;
        if x.x_min <= 1.0 / (qn * lg * lg) {
            rep.xmin_ok += 1;
        }
        if x.d1.abs() >= roof.n1 * (0.5 / x.x_min).powf(2.0 - eta) {
            rep.d1_ok += 1;
        }
        if x.d2.abs() <= roof.r1 * (2.0 / x.x_min).powf(3.0 - eta) {
            rep.d2_ok += 1;
        }
    }
    rep.pass = rep.xmin_ok == rep.checked && rep.d1_ok == rep.checked && rep.d2_ok == rep.checked;
    Ok(rep)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct XzeReport {
    pub pairs: usize,
    /// smallest secant slope of phi'_N over admissible pairs
    pub min_slope: f64,
    /// r1 q_n^{3-eta} / log^5 q_n
    pub threshold: f64,
    pub pass: bool,
}

/// Secant slopes (phi'_{N(x)}(x) - phi'_{N(x0)}(x0)) / (x - x0) over pairs
/// with |x - x0| >= q_n^{-3/2+2 eta}, T^t x in V and x0 of small first and
/// second derivative.
pub fn xze_spot_check(
    flow: &SpecialFlow,
    margin: &MarginSet,
    i: &HorizontalInterval,
    t_grid: &[f64],
    mesh_points: usize,
) -> Result<XzeReport> {
    let qn = margin.scale.q_n;
    let eta = flow.roof.eta;
    let lg = qn.ln();
    let sep = qn.powf(-1.5 + 2.0 * eta);
    let small1 = flow.roof.n1 * qn.powf(1.75 + eta);
    let small2 = flow.roof.r1 * qn.powf(3.0 - eta) * lg.powi(10);
    let threshold = flow.roof.r1 * qn.powf(3.0 - eta) / lg.powi(5);
    let mesh = i.mesh(mesh_points);
    let samples = stretch_samples(flow, margin, i, t_grid, &mesh)?;
    let pos: Vec<f64> = mesh.iter().map(|p| p.diff(i.arc.start)).collect();
    let mut rep = XzeReport { pairs: 0, min_slope: f64::INFINITY, threshold, pass: true };
    for j in 0..t_grid.len() {
        for a in 0..mesh.len() {
            let x0 = samples[a][j];
            if x0.d1.abs() > small1 || x0.d2.abs() > small2 {
                continue;
            }
            for b in 0..mesh.len() {
                let x = samples[b][j];
                let dx = pos[b] - pos[a];
                if dx.abs() < sep || !x.lands_in_v {
                    continue;
                }
                rep.pairs += 1;
                rep.min_slope = rep.min_slope.min((x.d1 - x0.d1) / dx);
            }
        }
    }
    rep.pass = rep.pairs == 0 || rep.min_slope >= threshold;
    Ok(rep)
}
