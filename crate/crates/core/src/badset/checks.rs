//! Measured checks of the bad-set properties: structure and mass, the
//! stretch dichotomy on a block, and the comparison towers with their
//! equidistribution counts.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{build_complete_tower, decompose_interval, BadSet, CompleteTower, OVERLAP_SLACK};
use crate::arithmetic::{partition_ik, Arc, CirclePoint};
use crate::error::Result;
use crate::flow::diagnostics::{stretch_samples, HorizontalInterval};
use crate::flow::margin::arc_min_phi;
use crate::flow::{MarginSet, PhasePoint, SpecialFlow};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct StructureReport {
    pub m: usize,
    pub count_bound: f64,
    pub measure: f64,
    pub measure_bound: f64,
    /// pairs of levels overlapping by more than rounding
    pub overlaps: usize,
    /// bases narrower than 2 q_n^{-3/2+5 eta} because they were clipped to
    /// their partition block
    pub clipped: usize,
    pub truncated: usize,
    pub disjoint: bool,
    pub measure_ok: bool,
    pub count_ok: bool,
}

pub fn check_structure(flow: &SpecialFlow, bad: &BadSet) -> StructureReport {
    let mut spans: Vec<(u128, u128)> = bad
        .towers
        .iter()
        .flat_map(|u| u.tower.levels.iter())
        .map(|lv| {
            let st = lv.arc.start.0;
            (st, st.saturating_add(lv.arc.units().unwrap_or(u128::MAX)))
        })
        .collect();
    spans.sort_unstable();
    let mut overlaps = 0;
    let mut reach = 0u128;
    for (i, &(st, en)) in spans.iter().enumerate() {
        if i > 0 && reach > st.saturating_add(OVERLAP_SLACK) {
            overlaps += 1;
        }
        reach = reach.max(en);
    }
    let full = 2.0 * bad.half_width;
    let clipped = bad.towers.iter().filter(|u| u.tower.base.arc.length() < full * (1.0 - 1e-12)).count();
    let truncated = bad.towers.iter().filter(|u| u.tower.truncated).count();
    let measure = bad.measure(flow);
    StructureReport {
        m: bad.m(),
        count_bound: bad.count_bound(),
        measure,
        measure_bound: bad.measure_bound(),
        overlaps,
        clipped,
        truncated,
        disjoint: overlaps == 0,
        measure_ok: measure <= bad.measure_bound(),
        count_ok: bad.m() as f64 <= bad.count_bound(),
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum B4Branch {
    /// r_I^t >= q_n^{3/2+eta}
    LargeStretch,
    /// small r, a bad level, bounded phi'' and the linear growth away from it
    BadLevel,
    Fail,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B4Report {
    pub t: f64,
    pub r: f64,
    pub r_threshold: f64,
    pub u: f64,
    pub u_threshold: f64,
    pub has_bad: bool,
    /// min |phi'_N(x)| / |x - x_bad| over landing mesh points of J1 + J2
    pub slope: f64,
    pub slope_threshold: f64,
    pub branch: B4Branch,
}

fn interior_mesh(arc: &Arc, count: usize) -> Vec<CirclePoint> {
    let len = arc.length();
    (0..count).map(|i| arc.start.offset(len * (i as f64 + 0.5) / count as f64)).collect()
}

/// The stretch dichotomy on the block `i` at time `t`. u_I is the sup over
/// a 17-point grid of [l0, l1] together with t itself.
pub fn check_b4(
    flow: &SpecialFlow,
    margin: &MarginSet,
    bad: &BadSet,
    i: &HorizontalInterval,
    t: f64,
    mesh: usize,
) -> Result<B4Report> {
    let q = bad.q_n;
    let eta = flow.roof.eta;
    let lg = q.max(3.0).ln();
    let r_threshold = flow.roof.n1 * q.powf(1.5 + eta);
    let u_threshold = flow.roof.r1 * q.powf(3.0 - eta) * lg.powi(9);
    let slope_threshold = flow.roof.n1 * q.powf(3.0 - eta) / lg.powi(6);
    let mut ts = vec![t];
    ts.extend((0..17).map(|k| bad.l0 + (bad.l1 - bad.l0) * k as f64 / 16.0));
    let pts = interior_mesh(&i.arc, mesh);
    let samples = stretch_samples(flow, margin, i, &ts, &pts)?;
    let r = samples.iter().filter(|row| row[0].lands_in_w).map(|row| row[0].d1.abs()).fold(f64::INFINITY, f64::min);
    let u = samples.iter().flat_map(|row| row.iter()).map(|x| x.d2.abs()).fold(0.0, f64::max);
    let dec = decompose_interval(bad, i)?;
    let has_bad = dec.bad.is_some();
    let mut slope = f64::INFINITY;
    if let (Some(b), Some(xb)) = (dec.bad, dec.x_bad) {
        for (p, row) in pts.iter().zip(&samples) {
            if b.contains(*p) || !row[0].lands_in_w {
                continue;
            }
            let dist = p.diff(xb).abs();
            slope = slope.min(row[0].d1.abs() / dist);
        }
    }
    let branch = if r >= r_threshold {
        B4Branch::LargeStretch
    } else if has_bad && u <= u_threshold && slope >= slope_threshold {
        B4Branch::BadLevel
    } else {
        B4Branch::Fail
    };
    Ok(B4Report { t, r, r_threshold, u, u_threshold, has_bad, slope, slope_threshold, branch })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityReport {
    pub h: usize,
    /// number of equal pieces used; 0 when no admissible L exists
    pub l: usize,
    pub counts: Vec<usize>,
    /// max |count - H/L| / (H/L)
    pub max_rel_dev: f64,
    pub admissible: bool,
    pub pass: bool,
}

/// Tests whether `collection` is (nu, gamma)-uniformly distributed in
/// `ibar`: some split into L <= gamma H equal pieces of length in
/// [nu, 2 nu] has every count #{K inside piece} within gamma H/L of H/L.
/// The best admissible L is reported.
pub fn uniformity_counts(collection: &[Arc], ibar: &Arc, nu: f64, gamma: f64) -> UniformityReport {
    let h = collection.len();
    let lam = ibar.length();
    let lo = (lam / (2.0 * nu)).ceil().max(1.0) as usize;
    let hi = (lam / nu).floor() as usize;
    let mut best: Option<(usize, Vec<usize>, f64)> = None;
    for l in lo..=hi {
        if l as f64 > gamma * h as f64 {
            break;
        }
        let ell = lam / l as f64;
        let mut counts = vec![0usize; l];
        for k in collection {
            let o = ibar.offset_of(k.start);
            let e = o + k.length();
            if o >= lam || e > lam {
                continue;
            }
            let j = ((o / ell).floor() as usize).min(l - 1);
            if e <= (j + 1) as f64 * ell {
                counts[j] += 1;
            }
        }
        let mean = h as f64 / l as f64;
        let dev = counts.iter().map(|&c| (c as f64 - mean).abs() / mean).fold(0.0, f64::max);
        if best.as_ref().map_or(true, |b| dev < b.2) {
            best = Some((l, counts, dev));
        }
    }
    match best {
        Some((l, counts, dev)) => {
            UniformityReport { h, l, counts, max_rel_dev: dev, admissible: true, pass: dev <= gamma }
        }
        None => UniformityReport { h, l: 0, counts: vec![], max_rel_dev: f64::INFINITY, admissible: false, pass: false },
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct UniformityOptions {
    /// level of the coarse partition; default: finest whose short blocks
    /// still have length >= nu
    pub k_star: Option<usize>,
    /// default q_n^{-1/4}
    pub nu: Option<f64>,
    /// default q_n^{-1/100}
    pub gamma: Option<f64>,
    /// theta points across each comparison base
    pub grid: usize,
    /// fibre heights tried per coarse block
    pub heights: usize,
    /// steps of t + t* across [0, 1]
    pub delta_steps: usize,
}

impl Default for UniformityOptions {
    fn default() -> Self {
        UniformityOptions { k_star: None, nu: None, gamma: None, grid: 64, heights: 3, delta_steps: 32 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B5Tower {
    pub i: usize,
    /// t + t*, in [0, 1]
    pub delta: f64,
    /// the shifted base lies under the roof
    pub base_inside: bool,
    /// backward hitting count from x_i to z_{t,i}
    pub m0: u64,
    pub h_t: f64,
    pub columns: u64,
    pub sym_diff: f64,
    pub mu_u: f64,
    /// lambda(B_i) (4 q_n^{1/2+3 eta} + |t + t*|)
    pub stretch_bound: f64,
    pub large: bool,
    pub blocks_checked: usize,
    pub blocks_passed: usize,
    pub worst_dev: f64,
    /// small-N branch: mu(T cap M_zeta), mu(T), q_n^{-1/10} mu(T)
    pub small_mass: Option<(f64, f64, f64)>,
    pub uniform_ok: bool,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct B5Report {
    pub t: f64,
    pub threshold: f64,
    pub nu: f64,
    pub gamma: f64,
    pub k_star: usize,
    pub towers: Vec<B5Tower>,
    pub max_sym_diff: f64,
    pub all_uniform: bool,
}

/// Abs. start times of the columns of theta's orbit, from column `kmin`
/// (negative) to `kmax` inclusive, with time 0 at the bottom of column 0.
struct Columns {
    kmin: i64,
    start: Vec<f64>,
    theta: Vec<CirclePoint>,
}

impl Columns {
    fn new(flow: &SpecialFlow, theta: CirclePoint, kmin: i64, kmax: i64) -> Result<Self> {
        let back = flow.birkhoff(theta, kmin)?.value;
        let mut start = Vec::with_capacity((kmax - kmin + 2) as usize);
        let mut pts = Vec::with_capacity(start.capacity());
        let mut acc = back;
        let step = flow.rot.rot(1);
        let mut p = flow.rot.orbit(theta, kmin);
        for _ in kmin..=kmax {
            start.push(acc);
            pts.push(p);
            acc += flow.phi(p)?;
            p = p.add(step);
        }
        start.push(acc);
        Ok(Columns { kmin, start, theta: pts })
    }

    /// phi_k(theta) for k in range.
    fn at(&self, k: i64) -> f64 {
        self.start[(k - self.kmin) as usize]
    }

    /// Length of [lo, hi) inside M_zeta along the orbit.
    fn in_m_zeta(&self, lo: f64, hi: f64, zeta: f64) -> f64 {
        let mut tot = 0.0;
        for c in 0..self.theta.len() {
            let (a, b) = (self.start[c], self.start[c + 1]);
            if b <= lo || a >= hi || self.theta[c].norm() <= zeta {
                continue;
            }
            let (x, y) = ((a + zeta).max(lo), (b - zeta).min(hi));
            if y > x {
                tot += y - x;
            }
        }
        tot
    }
}

fn sym_diff(a: (f64, f64), b: (f64, f64)) -> [(f64, f64); 2] {
    if a.1 <= b.0 || b.1 <= a.0 {
        [a, b]
    } else {
        [(a.0.min(b.0), a.0.max(b.0)), (a.1.min(b.1), a.1.max(b.1))]
    }
}

fn default_k_star(flow: &SpecialFlow, nu: f64) -> usize {
    (1..flow.rot.depth() - 1).take_while(|&k| flow.rot.delta(k - 1).abs() >= nu).last().unwrap_or(1)
}

fn tower_mass_in_m_zeta(flow: &SpecialFlow, t: &CompleteTower, zeta: f64, grid: usize) -> f64 {
    t.levels
        .iter()
        .map(|lv| {
            let len = lv.arc.length();
            let sum: f64 = (0..grid)
                .map(|g| {
                    let th = lv.arc.start.offset(len * (g as f64 + 0.5) / grid as f64);
                    if th.norm() <= zeta {
                        return 0.0;
                    }
                    let top = flow.roof.value_at(th.signed()) - zeta;
                    (top - lv.s_lo.max(zeta)).max(0.0)
                })
                .sum();
            sum * len / grid as f64
        })
        .sum()
}

/// Builds T_{t,i} for every tower, measures the symmetric difference with
/// T^{-t} U_i inside M_zeta, and checks the equidistribution (large N) or
/// the M_zeta mass bound (small N).
pub fn check_b5_and_uniformity(
    flow: &SpecialFlow,
    margin: &MarginSet,
    bad: &BadSet,
    t: f64,
    opts: &UniformityOptions,
) -> Result<B5Report> {
    let q = bad.q_n;
    let eta = flow.roof.eta;
    let zeta = margin.zeta;
    let nu = opts.nu.unwrap_or(q.powf(-0.25));
    let gamma = opts.gamma.unwrap_or(q.powf(-0.01));
    let k_star = opts.k_star.unwrap_or_else(|| default_k_star(flow, nu));
    let coarse = partition_ik(&flow.rot, k_star)?;
    let threshold = q.powf(-1.0 + 10.0 * eta);
    let towers: Vec<B5Tower> = bad
        .towers
        .par_iter()
        .enumerate()
        .map(|(idx, u)| -> Result<B5Tower> {
            let xi = u.x;
            let base_i = u.tower.base.arc;
            // t + t* in [0, 1], first step whose base fits under the roof
            let mut pick = None;
            for k in 0..=opts.delta_steps {
                let d = k as f64 / opts.delta_steps.max(1) as f64;
                let (n, s) = flow.hit(xi, -(t - d))?;
                let z = PhasePoint::new(flow.rot.orbit(xi.theta, n), s);
                let arc = base_i.shift(z.theta.sub(xi.theta));
                if pick.is_none() {
                    pick = Some((d, n, z, arc, false));
                }
                if !arc.contains(CirclePoint::ZERO) && z.s < arc_min_phi(&flow.roof, &arc) {
                    pick = Some((d, n, z, arc, true));
                    break;
                }
            }
            let (delta, n_back, z, arc_t, base_inside) = pick.expect("delta grid is non-empty");
            let m0 = (-n_back) as u64;
            let cols_u = u.tower.levels.len() as i64;
            let top_u = flow.birkhoff(xi.theta, cols_u)?.value - xi.s;
            let h_t = top_u - delta;
            let comp = build_complete_tower(flow, HorizontalInterval { arc: arc_t, s: z.s }, z.theta, h_t)?;
            let cols_t = comp.levels.len() as i64;
            let kmax = (m0 as i64 + cols_u).max(cols_t) + 1;
            let len = arc_t.length();
            let mut acc = 0.0;
            for g in 0..opts.grid {
                let th = arc_t.start.offset(len * (g as f64 + 0.5) / opts.grid as f64);
                let c = Columns::new(flow, th, -3, kmax)?;
                let a = c.at(m0 as i64) + xi.s - t;
                let b = c.at(m0 as i64 + cols_u) - t;
                let e = c.at(cols_t);
                for (lo, hi) in sym_diff((a, b), (z.s, e)) {
                    if hi > lo {
                        acc += c.in_m_zeta(lo, hi, zeta);
                    }
                }
            }
            let sym = acc * len / opts.grid as f64;
            let mu_u = u.tower.measure(flow);
            let stretch_bound = base_i.length() * (4.0 * q.powf(0.5 + 3.0 * eta) + delta);
            let large = comp.hits as f64 >= q.powf(1.0 / 3.0);
            let (mut checked, mut passed, mut worst) = (0, 0, 0.0f64);
            let mut small_mass = None;
            if large {
                for ibar in &coarse.arcs {
                    if ibar.distance_to_zero() <= zeta {
                        continue;
                    }
                    let room = arc_min_phi(&flow.roof, ibar) - 2.0 * zeta;
                    if room <= 0.0 {
                        continue;
                    }
                    for hk in 0..opts.heights {
                        let s = zeta + room * (hk as f64 + 0.5) / opts.heights as f64;
                        let ks: Vec<Arc> = comp
                            .levels
                            .iter()
                            .filter(|lv| s >= lv.s_lo)
                            .filter(|lv| lv.arc.intersect(ibar).is_some())
                            .map(|lv| lv.arc)
                            .collect();
                        if ks.is_empty() {
                            continue;
                        }
                        let rep = uniformity_counts(&ks, ibar, nu, gamma);
                        checked += 1;
                        if rep.pass {
                            passed += 1;
                        }
                        worst = worst.max(rep.max_rel_dev);
                    }
                }
            } else {
                let mz = tower_mass_in_m_zeta(flow, &comp, zeta, 32);
                let mu = comp.measure(flow);
                small_mass = Some((mz, mu, q.powf(-0.1) * mu));
            }
            let uniform_ok = match small_mass {
                Some((mz, _, bound)) => mz <= bound,
                None => passed == checked,
            };
            Ok(B5Tower {
                i: idx,
                delta,
                base_inside,
                m0,
                h_t,
                columns: comp.hits,
                sym_diff: sym,
                mu_u,
                stretch_bound,
                large,
                blocks_checked: checked,
                blocks_passed: passed,
                worst_dev: worst,
                small_mass,
                uniform_ok,
            })
        })
        .collect::<Result<_>>()?;
    let max_sym_diff = towers.iter().map(|x| x.sym_diff).fold(0.0, f64::max);
    let all_uniform = towers.iter().all(|x| x.uniform_ok);
    Ok(B5Report { t, threshold, nu, gamma, k_star, towers, max_sym_diff, all_uniform })
}
