//! Correlations of a localized pair (f_J, g_J) by product integration.
//!
//! Inside the box, f_J(T^{t}(F(x, sigma))) is nonzero only through returns
//! x + n alpha in J, which gives
//!
//!   C(t) = sum_n int_{I_n} chi(x) chi(x + n alpha) K(t - phi_n(x)) dx,
//!   K(v) = int psi(sigma) P'(sigma + v) dsigma,
//!
//! with I_n = J and (J - n alpha) intersected. On each monotone branch of
//! phi_n we change variables to u = phi_n(x), interpolate
//! G = A / |phi_n'| linearly in u and integrate against K exactly through
//! the tabulated antiderivatives of K and y K. Folds (phi_n' = 0) get a
//! Gauss rule in x.

use rustfft::num_complex::Complex;
use rustfft::FftPlanner;
use serde::{Deserialize, Serialize};

use crate::arithmetic::Arc;
use crate::error::{Error, Result};
use crate::flow::margin::window;
use crate::flow::SpecialFlow;
use crate::numerics::{GaussLegendre, KahanSum};
use crate::observables::flowbox::{LocalizedCoboundary, LocalizedObservable, Train};

use super::{CorrelationSeries, SeriesMeta};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct LocalizedOptions {
    /// sigma step of the kernel table; 0 picks 1/96 of the narrowest bump
    pub kernel_step: f64,
    /// largest u-extent of a cell
    pub du_max: f64,
    /// u-extent of the cell at a fold
    pub du_fold: f64,
    /// cells grow like growth * (u - u_fold) away from a fold
    pub growth: f64,
    /// largest x-extent of a cell, as a fraction of |J|
    pub theta_cap: f64,
    /// epsilon in the very-good threshold t^{1/2 + 2 eps}
    pub eps: f64,
    /// cap on single-point jet evaluations
    pub budget: u64,
}

impl Default for LocalizedOptions {
    fn default() -> Self {
        LocalizedOptions {
            kernel_step: 0.0,
            du_max: 20.0,
            du_fold: 0.01,
            growth: 0.2,
            theta_cap: 1.0 / 64.0,
            eps: 0.05,
            budget: 2_000_000_000,
        }
    }
}

impl LocalizedOptions {
    /// Every spatial tolerance halved.
    pub fn refined(&self) -> Self {
        LocalizedOptions {
            du_max: 0.5 * self.du_max,
            du_fold: 0.5 * self.du_fold,
            growth: 0.5 * self.growth,
            theta_cap: 0.5 * self.theta_cap,
            ..*self
        }
    }
}

/// K on a uniform grid together with running integrals of K and y K.
#[derive(Clone, Debug)]
pub struct Kernel {
    pub v0: f64,
    pub h: f64,
    pub k: Vec<f64>,
    k1: Vec<f64>,
    k2: Vec<f64>,
}

impl Kernel {
    /// K(v) = int psi(s) P'(s + v) ds for trains supported in (-half, half).
    pub fn new(p: &Train, psi: &Train, half: f64, step: f64) -> Self {
        let m = (2.0 * half / step).ceil() as usize;
        let h = 2.0 * half / m as f64;
        let a: Vec<f64> = (0..=m).map(|i| psi.value(-half + i as f64 * h)).collect();
        let b: Vec<f64> = (0..=m).map(|i| p.d1(-half + i as f64 * h)).collect();
        let len = (2 * (m + 1)).next_power_of_two();
        let mut planner = FftPlanner::<f64>::new();
        let fwd = planner.plan_fft_forward(len);
        let inv = planner.plan_fft_inverse(len);
        let pad = |x: &[f64]| {
            let mut v: Vec<Complex<f64>> = x.iter().map(|&r| Complex::new(r, 0.0)).collect();
            v.resize(len, Complex::new(0.0, 0.0));
            v
        };
        let (mut fa, mut fb) = (pad(&a), pad(&b));
        fwd.process(&mut fa);
        fwd.process(&mut fb);
        let mut c: Vec<Complex<f64>> = fa.iter().zip(&fb).map(|(x, y)| x.conj() * y).collect();
        inv.process(&mut c);
        // c[k] = sum_i a_i b_{i+k}, negative lags wrap around
        let scale = h / len as f64;
        let k: Vec<f64> = (0..=2 * m)
            .map(|j| {
                let lag = j as i64 - m as i64;
                let idx = if lag >= 0 { lag as usize } else { (len as i64 + lag) as usize };
                c[idx].re * scale
            })
            .collect();
        let v0 = -(m as f64) * h;
        let mut k1 = vec![0.0; k.len()];
        let mut k2 = vec![0.0; k.len()];
        for j in 1..k.len() {
            let (ya, yb) = (v0 + (j - 1) as f64 * h, v0 + j as f64 * h);
            k1[j] = k1[j - 1] + 0.5 * h * (k[j - 1] + k[j]);
            k2[j] = k2[j - 1] + 0.5 * h * (ya * k[j - 1] + yb * k[j]);
        }
        Kernel { v0, h, k, k1, k2 }
    }

    fn cell(&self, v: f64) -> Option<(usize, f64)> {
        let x = (v - self.v0) / self.h;
        if x < 0.0 || x >= (self.k.len() - 1) as f64 {
            return None;
        }
        let j = x.floor() as usize;
        Some((j, x - j as f64))
    }

    /// Four-point Lagrange interpolation of K.
    pub fn value(&self, v: f64) -> f64 {
        let Some((j, r)) = self.cell(v) else { return 0.0 };
        let at = |i: i64| if i < 0 || i as usize >= self.k.len() { 0.0 } else { self.k[i as usize] };
        let j = j as i64;
        let (a, b, c, d) = (at(j - 1), at(j), at(j + 1), at(j + 2));
        b + 0.5 * r * (c - a + r * (2.0 * a - 5.0 * b + 4.0 * c - d + r * (3.0 * (b - c) + d - a)))
    }

    /// (int_{-inf}^v K, int_{-inf}^v y K), exact for the piecewise-linear K.
    pub fn primitives(&self, v: f64) -> (f64, f64) {
        match self.cell(v) {
            Some((j, r)) => {
                let d = r * self.h;
                let (ka, kb) = (self.k[j], self.k[j + 1]);
                let kv = ka + r * (kb - ka);
                let ya = self.v0 + j as f64 * self.h;
                (self.k1[j] + 0.5 * d * (ka + kv), self.k2[j] + 0.5 * d * (ya * ka + v * kv))
            }
            None if v < self.v0 => (0.0, 0.0),
            None => (*self.k1.last().unwrap(), *self.k2.last().unwrap()),
        }
    }

    pub fn reach(&self) -> f64 {
        -self.v0
    }
}

/// A sample of a branch: offset x in I_n, w = sign(n) phi_n, |phi_n'|,
/// |phi_n''| and the cutoff product A.
#[derive(Clone, Copy, Debug)]
struct Node {
    w: f64,
    d1: f64,
    d2: f64,
    a: f64,
    x: f64,
}

#[derive(Clone, Debug)]
struct Branch {
    sign: f64,
    /// nodes in increasing w
    nodes: Vec<Node>,
    /// fold Gauss rules (16- and 8-point): (weight * A, w)
    fold16: Vec<(f64, f64)>,
    fold8: Vec<(f64, f64)>,
    fold_x: f64,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum CellClass {
    Good,
    Bad,
}

struct Builder<'a> {
    flow: &'a SpecialFlow,
    opts: LocalizedOptions,
    chi: crate::observables::flowbox::Cutoff,
    lam: f64,
    jets: u64,
}

impl<'a> Builder<'a> {
    fn eval(&mut self, arc: &Arc, n: i64, x: f64) -> Result<Node> {
        self.jets += n.unsigned_abs();
        if self.jets > self.opts.budget {
            return Err(Error::QuadratureBudgetExceeded(format!("more than {} jet evaluations", self.opts.budget)));
        }
        let th = arc.start.offset(x);
        let r = self.flow.birkhoff(th, n)?;
        let s = n.signum() as f64;
        let a = self.chi.value(th) * self.chi.value(th.add(self.flow.rot.rot(n)));
        Ok(Node { w: s * r.value, d1: (s * r.d1).abs(), d2: (s * r.d2).abs(), a, x })
    }

    fn slope(&mut self, arc: &Arc, n: i64, x: f64) -> Result<f64> {
        self.jets += n.unsigned_abs();
        let r = self.flow.birkhoff(arc.start.offset(x), n)?;
        Ok(n.signum() as f64 * r.d1)
    }

    /// Branches of one segment (a, b) of I_n on which phi_n is smooth.
    fn segment(&mut self, arc: &Arc, n: i64, a: f64, b: f64, w_cap: f64, out: &mut Vec<Branch>) -> Result<()> {
        let pad = (b - a) * 1e-13;
        let (mut l, mut r) = (a + pad, b - pad);
        let fold = if self.slope(arc, n, l)? >= 0.0 {
            a
        } else if self.slope(arc, n, r)? <= 0.0 {
            b
        } else {
            for _ in 0..90 {
                let m = 0.5 * (l + r);
                if self.slope(arc, n, m)? < 0.0 {
                    l = m;
                } else {
                    r = m;
                }
            }
            0.5 * (l + r)
        };
        if fold > a {
            out.push(self.branch(arc, n, fold, a, w_cap)?);
        }
        if fold < b {
            out.push(self.branch(arc, n, fold, b, w_cap)?);
        }
        Ok(())
    }

    /// Nodes from the low end x0 toward x1, stopping once w passes w_cap.
    fn branch(&mut self, arc: &Arc, n: i64, x0: f64, x1: f64, w_cap: f64) -> Result<Branch> {
        let dir = if x1 > x0 { 1.0 } else { -1.0 };
        let span = (x1 - x0).abs();
        let o = self.opts;
        let cap = o.theta_cap * self.lam;
        let start = self.eval(arc, n, x0)?;
        let w_star = start.w;
        let mut nodes = vec![start];
        let mut fold16 = Vec::new();
        let mut fold8 = Vec::new();
        // a true fold: phi_n' vanishes at x0
        if start.d1 * span < 1e-9 * start.w.abs().max(1.0) || (start.d1 * start.d1) < 1e-6 * start.d2 * o.du_fold {
            let dx = (2.0 * o.du_fold / start.d2.max(1e-300)).sqrt().min(cap).min(span);
            for (rule, dst) in [(GaussLegendre::new(16), &mut fold16), (GaussLegendre::new(8), &mut fold8)] {
                for (z, wt) in rule.nodes.iter().zip(&rule.weights) {
                    let x = x0 + dir * 0.5 * dx * (1.0 + z);
                    let nd = self.eval(arc, n, x)?;
                    dst.push((0.5 * dx * wt * nd.a, nd.w));
                }
            }
            nodes = vec![self.eval(arc, n, x0 + dir * dx)?];
        }
        loop {
            let cur = *nodes.last().unwrap();
            let done = (cur.x - x0).abs();
            if cur.w > w_cap || span - done <= span * 1e-13 {
                break;
            }
            let target = (o.growth * (cur.w - w_star)).clamp(o.du_fold, o.du_max);
            let mut dx = (target / cur.d1.max(1e-300)).min(cap).min(span - done);
            let mut next = self.eval(arc, n, cur.x + dir * dx)?;
            while next.w - cur.w > 2.0 * target && dx > span * 1e-14 {
                dx *= 0.5;
                next = self.eval(arc, n, cur.x + dir * dx)?;
            }
            if !(next.w >= cur.w) {
                // rounding at the floor of a fold; keep monotone order
                next.w = cur.w;
            }
            nodes.push(next);
        }
        Ok(Branch { sign: n.signum() as f64, nodes, fold16, fold8, fold_x: x0 })
    }
}

/// q_n attached to time t: q_n < l^{21/20} < q_{n+1} for the window holding t.
fn q_of_t(flow: &SpecialFlow, t: f64) -> f64 {
    let mut l = t.abs().powf(1.0 / 1.05).floor().max(1.0) as u64;
    while window(l).0 > t.abs() && l > 1 {
        l -= 1;
    }
    let l0 = window(l).0;
    let q = &flow.rot.q;
    (0..flow.rot.depth()).rev().map(|i| q[i] as f64).find(|&x| x < l0).unwrap_or(1.0)
}

/// Result of the localized correlator.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct LocalizedSeries {
    pub series: CorrelationSeries,
    /// the part of C(t) carried by good cells
    pub good: Vec<f64>,
    /// returns n with nonempty I_n
    pub returns: Vec<i64>,
    pub cells: usize,
    pub jets: u64,
    /// int chi^2 over J
    pub chi_mass: f64,
}

fn cell_value(k: &Kernel, s: f64, t: f64, na: &Node, nb: &Node) -> f64 {
    let dw = nb.w - na.w;
    if dw <= 0.0 {
        return 0.0;
    }
    let ga = na.a / na.d1;
    let gb = nb.a / nb.d1;
    let m = (gb - ga) / dw;
    if s > 0.0 {
        let (p1a, p2a) = k.primitives(t - na.w);
        let (p1b, p2b) = k.primitives(t - nb.w);
        (ga + m * (t - na.w)) * (p1a - p1b) - m * (p2a - p2b)
    } else {
        let (p1a, p2a) = k.primitives(t + na.w);
        let (p1b, p2b) = k.primitives(t + nb.w);
        (ga - m * (t + na.w)) * (p1b - p1a) + m * (p2b - p2a)
    }
}

/// Sum over the cells of a branch within reach of t: the value, its good
/// part, and the summed magnitudes of the pairwise refinement changes.
fn branch_sum(k: &Kernel, br: &Branch, t: f64, classify: &dyn Fn(&Node, &Node) -> CellClass) -> (f64, f64, f64) {
    let s = br.sign;
    let te = s * t;
    let reach = k.reach();
    let nodes = &br.nodes;
    let (mut all, mut good, mut err) = (KahanSum::new(), KahanSum::new(), 0.0);
    let first = nodes.partition_point(|nd| nd.w < te - reach).saturating_sub(1) & !1;
    let mut i = first;
    while i + 1 < nodes.len() {
        if nodes[i].w > te + reach {
            break;
        }
        let mut fine = 0.0;
        for c in i..(i + 2).min(nodes.len() - 1) {
            let v = cell_value(k, s, t, &nodes[c], &nodes[c + 1]);
            fine += v;
            all.add(v);
            if classify(&nodes[c], &nodes[c + 1]) == CellClass::Good {
                good.add(v);
            }
        }
        err += if i + 2 < nodes.len() { (fine - cell_value(k, s, t, &nodes[i], &nodes[i + 2])).abs() } else { fine.abs() };
        i += 2;
    }
    (all.value(), good.value(), err)
}

fn fold_sum(k: &Kernel, rule: &[(f64, f64)], s: f64, t: f64) -> f64 {
    rule.iter().map(|&(wa, w)| wa * k.value(t - s * w)).sum()
}

/// C(t) for the localized pair on `t_grid`, with a refinement error and
/// the good-cell part.
pub fn localized_correlation(
    f: &LocalizedCoboundary,
    g: &LocalizedObservable,
    t_grid: &[f64],
    opts: &LocalizedOptions,
) -> Result<LocalizedSeries> {
    let fb = &f.flow_box;
    if fb.base != g.flow_box.base || fb.half_height != g.flow_box.half_height {
        return Err(Error::Invalid("f_J and g_J live on different boxes".into()));
    }
    let flow = fb.flow();
    let half = fb.half_height;
    let narrow = f.profile.half_widths.iter().chain(&g.profile.half_widths).cloned().fold(f64::INFINITY, f64::min);
    let step = if opts.kernel_step > 0.0 { opts.kernel_step } else { narrow / 96.0 };
    let kernel = Kernel::new(&f.profile, &g.profile, half, step);
    let kernel2 = Kernel::new(&f.profile, &g.profile, half, 2.0 * step);
    let reach = kernel.reach();
    let arc = fb.base.arc;
    let lam = arc.length();
    let chi = f.chi;

    let chi_mass = GaussLegendre::new(16).composite(0.0, lam, 64, |x| chi.value(arc.start.offset(x)).powi(2));
    let t_hi = t_grid.iter().cloned().fold(f64::MIN, f64::max);
    let t_lo = t_grid.iter().cloned().fold(f64::MAX, f64::min);
    let mut b = Builder { flow, opts: *opts, chi, lam, jets: 0 };
    let mut branches: Vec<Branch> = Vec::new();
    let mut returns = Vec::new();
    for sign in [1i64, -1] {
        let w_cap = (sign as f64) * if sign > 0 { t_hi } else { t_lo } + reach;
        if w_cap <= 0.0 {
            continue;
        }
        let n_max = (w_cap / flow.roof.floor_c).ceil() as i64 + 1;
        for k in 1..=n_max {
            let n = sign * k;
            if flow.rot.rot(n).norm() >= lam {
                continue;
            }
            let Some(i_n) = arc.intersect(&arc.shift(flow.rot.rot(-n))) else { continue };
            returns.push(n);
            let len = i_n.length();
            let mut cuts = vec![0.0, len];
            let (lo, hi) = if n > 0 { (0, n) } else { (n, 0) };
            for j in lo..hi {
                let p = flow.rot.rot(-j);
                if i_n.contains(p) {
                    cuts.push(i_n.offset_of(p));
                }
            }
            cuts.sort_by(|x, y| x.partial_cmp(y).unwrap());
            for w in cuts.windows(2) {
                if w[1] > w[0] {
                    b.segment(&i_n, n, w[0], w[1], w_cap, &mut branches)?;
                }
            }
        }
    }
    let jets = b.jets;
    let cells: usize = branches.iter().map(|br| br.nodes.len().saturating_sub(1) + br.fold16.len().min(1)).sum();

    let eta = flow.roof.eta;
    let r1 = flow.roof.r1;
    let n1 = flow.roof.n1;
    let rows: Vec<(f64, f64, f64)> = t_grid
        .iter()
        .map(|&t| {
            let zero = kernel.value(t) * chi_mass;
            let q_n = q_of_t(flow, t);
            let lg = q_n.max(3.0).ln();
            let very = t.abs().powf(0.5 + 2.0 * opts.eps);
            let d2_cap = r1 * q_n.powf(3.0 - eta) * lg.powi(9);
            let base = 0.5 * n1 * q_n.powf(1.5 + eta);
            let tilt = 0.5 * n1 * q_n.powf(3.0 - eta) / lg.powi(6);
            let (mut fine, mut rough, mut good) = (KahanSum::new(), KahanSum::new(), KahanSum::new());
            let mut err = 0.0;
            fine.add(zero);
            rough.add(kernel2.value(t) * chi_mass);
            for br in &branches {
                let fx = br.fold_x;
                let ok = |nd: &Node| {
                    nd.d1 * nd.d1 >= very * nd.d2
                        || (nd.d2 < d2_cap && nd.d1 >= base + tilt * (nd.x - fx).abs())
                };
                let classify = |a: &Node, bn: &Node| if ok(a) && ok(bn) { CellClass::Good } else { CellClass::Bad };
                let (v, gd, e) = branch_sum(&kernel, br, t, &classify);
                fine.add(v);
                good.add(gd);
                err += e;
                rough.add(branch_sum(&kernel2, br, t, &|_, _| CellClass::Bad).0);
                if !br.fold16.is_empty() {
                    let (a16, a8) = (fold_sum(&kernel, &br.fold16, br.sign, t), fold_sum(&kernel, &br.fold8, br.sign, t));
                    fine.add(a16);
                    rough.add(fold_sum(&kernel2, &br.fold16, br.sign, t));
                    err += (a16 - a8).abs();
                }
            }
            // kernel error from the table at twice the step
            (fine.value(), err + (fine.value() - rough.value()).abs(), good.value())
        })
        .collect();
    Ok(LocalizedSeries {
        series: CorrelationSeries {
            t: t_grid.to_vec(),
            values: rows.iter().map(|r| r.0).collect(),
            quad_error: rows.iter().map(|r| r.1).collect(),
            meta: SeriesMeta { f: "f_J".into(), g: "g_J".into(), eta, alpha: flow.rot.source.label() },
        },
        good: rows.iter().map(|r| r.2).collect(),
        returns,
        cells,
        jets,
        chi_mass,
    })
}

/// Decay statistics of a localized series over the windows l_lo..=l_hi.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DecaySummary {
    pub l_lo: u64,
    pub l_hi: u64,
    pub windows: Vec<super::WindowStat>,
    /// slope of the window integrals of |C|^2 against l
    pub l2_slope: Option<f64>,
    /// slope of log max|good part| per window against log t, over windows
    /// where that maximum exceeds ten times the window's quadrature error
    pub good_slope: Option<f64>,
    pub good_windows: usize,
}

pub fn decay_summary(r: &LocalizedSeries, l_lo: u64, l_hi: u64) -> Result<DecaySummary> {
    let windows = super::window_l2(&r.series, l_lo, l_hi)?;
    let t = &r.series.t;
    let (mut xs, mut ys) = (Vec::new(), Vec::new());
    for w in &windows {
        let lo = t.partition_point(|&x| x < w.t0);
        let hi = t.partition_point(|&x| x < w.t1);
        let peak = r.good[lo..hi].iter().map(|v| v.abs()).fold(0.0, f64::max);
        let noise = r.series.quad_error[lo..hi].iter().cloned().fold(0.0, f64::max);
        if peak > 0.0 && peak > 10.0 * noise {
            xs.push((0.5 * (w.t0 + w.t1)).ln());
            ys.push(peak.ln());
        }
    }
    Ok(DecaySummary {
        l_lo,
        l_hi,
        l2_slope: super::window_slope(&windows),
        good_slope: crate::numerics::linear_fit(&xs, &ys).map(|(_, b)| b),
        good_windows: xs.len(),
        windows,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::RotationNumber;
    use crate::correlation::{correlate, QuadSpec};
    use crate::flow::diagnostics::HorizontalInterval;
    use crate::numerics::adaptive;
    use crate::observables::flowbox::{flow_box, localized_pair, FlowBox, ProfileSpec};
    use crate::roof::RoofFunction;

    fn flow() -> SpecialFlow {
        SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(60))
    }

    fn boxed(f: &SpecialFlow, m: usize, t: f64) -> FlowBox {
        let w = 1.0 / (10.0 * f.rot.q[m] as f64);
        flow_box(f, HorizontalInterval { arc: Arc::from_f64(0.4 - w, 0.4 + w), s: 0.15 }, t, 0.05).unwrap()
    }

    fn pair(fb: &FlowBox) -> (LocalizedCoboundary, LocalizedObservable) {
        localized_pair(fb, &ProfileSpec { min_len: 0.2, ..Default::default() }, &ProfileSpec { fill: 0.7, offset: 0.45, min_len: 0.2, ..Default::default() })
            .unwrap()
    }

    #[test]
    fn kernel_matches_direct_integral() {
        let f = flow();
        let fb = boxed(&f, 6, 8.0);
        let (fj, gj) = pair(&fb);
        let k = Kernel::new(&fj.profile, &gj.profile, fb.half_height, 1e-3);
        for v in [-3.1, -0.4, 0.0, 0.7, 2.2] {
            let direct: f64 = gj
                .profile
                .support()
                .iter()
                .map(|&(a, b)| adaptive(&|s| gj.profile.value(s) * fj.profile.d1(s + v), a, b, 1e-13, 30))
                .sum();
            assert!((k.value(v) - direct).abs() < 1e-5, "v={v}: {} vs {direct}", k.value(v));
        }
        // int K = int psi * int P' = 0
        assert!(k.primitives(1e9).0.abs() < 1e-9);
    }

    #[test]
    fn value_at_zero_is_the_profile_pairing() {
        let f = flow();
        let fb = boxed(&f, 6, 8.0);
        let (fj, gj) = pair(&fb);
        let res = localized_correlation(&fj, &gj, &[0.0], &LocalizedOptions::default()).unwrap();
        let direct: f64 = gj
            .profile
            .support()
            .iter()
            .map(|&(a, b)| adaptive(&|s| gj.profile.value(s) * fj.profile.d1(s), a, b, 1e-13, 30))
            .sum();
        assert!((res.chi_mass - 1.0).abs() < 1e-10);
        assert!((res.series.values[0] - direct).abs() < 1e-5 * (1.0 + direct.abs()), "{} vs {direct}", res.series.values[0]);
    }

    #[test]
    fn vanishes_between_kernel_reach_and_first_return() {
        let f = flow();
        let fb = boxed(&f, 7, 3.0);
        let (fj, gj) = pair(&fb);
        let lo = 2.0 * fb.half_height + 0.1;
        let hi = 2.0 * fb.t_j_exact - 2.0 * fb.half_height - 0.1;
        assert!(hi > lo + 1.0);
        let ts: Vec<f64> = (0..20).map(|i| lo + (hi - lo) * i as f64 / 19.0).collect();
        let res = localized_correlation(&fj, &gj, &ts, &LocalizedOptions::default()).unwrap();
        for v in res.series.values {
            assert!(v.abs() < 1e-14, "{v}");
        }
    }

    #[test]
    fn agrees_with_tensor_quadrature() {
        let f = flow();
        let fb = boxed(&f, 5, 3.0);
        let (fj, gj) = pair(&fb);
        let first = 2.0 * fb.t_j_exact;
        let ts: Vec<f64> = vec![0.5, first + 1.0, first + 2.5, first + 4.0];
        let loc = localized_correlation(&fj, &gj, &ts, &LocalizedOptions::default().refined()).unwrap();
        let q = QuadSpec { theta_panels: 24, s_panels: 3, order: 10, budget: usize::MAX };
        let gen = correlate(&f, &fj, &gj, &ts, &q).unwrap();
        for i in 0..ts.len() {
            let (a, b) = (loc.series.values[i], gen.values[i]);
            let tol = 20.0 * (loc.series.quad_error[i] + gen.quad_error[i]) + 1e-4 * (a.abs() + 1e-3);
            assert!((a - b).abs() < tol, "t={}: {a} vs {b} (tol {tol})", ts[i]);
        }
    }

    #[test]
    fn refinement_error_bounds_the_change() {
        let f = flow();
        let fb = boxed(&f, 6, 6.0);
        let (fj, gj) = pair(&fb);
        let ts: Vec<f64> = (0..40).map(|i| 10.0 + 3.0 * i as f64).collect();
        let o = LocalizedOptions::default();
        let a = localized_correlation(&fj, &gj, &ts, &o).unwrap();
        let b = localized_correlation(&fj, &gj, &ts, &o.refined()).unwrap();
        let scale = a.series.values.iter().fold(0.0f64, |m, v| m.max(v.abs()));
        assert!(scale > 0.0);
        for i in 0..ts.len() {
            let d = (a.series.values[i] - b.series.values[i]).abs();
            assert!(d <= a.series.quad_error[i] + b.series.quad_error[i] + 1e-9 * scale, "t={}: {d} vs {}", ts[i], a.series.quad_error[i]);
        }
    }

    #[test]
    fn decay_summary_recovers_power_law() {
        let t = crate::correlation::window_grid(20, 200, 16);
        let v: Vec<f64> = t.iter().map(|x| x.powf(-0.5)).collect();
        let r = LocalizedSeries {
            series: CorrelationSeries { t: t.clone(), values: v.clone(), quad_error: vec![0.0; t.len()], meta: Default::default() },
            good: v,
            returns: vec![],
            cells: 0,
            jets: 0,
            chi_mass: 1.0,
        };
        let d = decay_summary(&r, 20, 199).unwrap();
        assert_eq!(d.good_windows, 180);
        // window peaks sit at the left ends, which lie slightly left of the midpoints
        assert!((d.good_slope.unwrap() + 0.5).abs() < 0.01, "{:?}", d.good_slope);
        // integral of 1/t over [l^1.05, (l+1)^1.05] is about 1.05/l
        assert!((d.l2_slope.unwrap() + 1.0).abs() < 0.01, "{:?}", d.l2_slope);
    }
}
