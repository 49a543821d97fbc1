//! The bad set: complete towers erected over the levels of the Rokhlin
//! partition whose first-derivative stretch drops below 2 q_n^{3/2+eta},
//! plus the interval decomposition I = J1 + J2 + I_bad.

pub mod checks;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::arithmetic::{Arc, CirclePoint, Tower};
use crate::error::{Error, Result};
use crate::flow::diagnostics::HorizontalInterval;
use crate::flow::{MarginSet, PhasePoint, SpecialFlow};
use crate::numerics::GaussLegendre;

pub use checks::{
    check_b4, check_b5_and_uniformity, check_structure, uniformity_counts, B4Branch, B4Report, B5Report, B5Tower,
    StructureReport, UniformityOptions, UniformityReport,
};

/// Overlaps shorter than this many units of 2^-128 are rounding, not hits.
const OVERLAP_SLACK: u128 = 16;

/// One level of a complete tower: the column over `arc` from `s_lo` up to
/// the roof.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct TowerLevel {
    pub arc: Arc,
    /// column index k: arc = base + k alpha
    pub k: u64,
    pub s_lo: f64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CompleteTower {
    pub base: HorizontalInterval,
    /// the point z whose hitting count fixes the number of columns
    pub anchor: CirclePoint,
    pub height: f64,
    /// N(z, h)
    pub hits: u64,
    pub levels: Vec<TowerLevel>,
    /// columns were cut short of N(z, h)
    pub truncated: bool,
}

impl CompleteTower {
    /// Phase-space measure, level by level.
    pub fn measure(&self, flow: &SpecialFlow) -> f64 {
        let g = GaussLegendre::eight();
        self.levels
            .iter()
            .map(|lv| {
                let a = lv.arc.start.signed();
                let len = lv.arc.length();
                g.composite(0.0, len, 8, |u| (flow.roof.value_at(wrap(a + u)) - lv.s_lo).max(0.0))
            })
            .sum()
    }

    /// Base-width times the Birkhoff time at the anchor; differs from
    /// `measure` only by the variation of phi_{N+1} across the base.
    pub fn anchor_measure(&self, flow: &SpecialFlow) -> Result<f64> {
        let b = flow.birkhoff(self.anchor, self.levels.len() as i64)?;
        Ok(self.base.arc.length() * (b.value - self.base.s))
    }
}

fn wrap(x: f64) -> f64 {
    x - x.round()
}

/// Complete tower of height `h` over `base` anchored at `anchor`.
pub fn build_complete_tower(
    flow: &SpecialFlow,
    base: HorizontalInterval,
    anchor: CirclePoint,
    h: f64,
) -> Result<CompleteTower> {
    build_capped(flow, base, anchor, h, u64::MAX)
}

fn build_capped(
    flow: &SpecialFlow,
    base: HorizontalInterval,
    anchor: CirclePoint,
    h: f64,
    max_k: u64,
) -> Result<CompleteTower> {
    if !base.arc.contains(anchor) {
        return Err(Error::Invalid("anchor outside the base".into()));
    }
    let hits = flow.hitting_count(PhasePoint::new(anchor, base.s), h)?;
    let hits = hits.max(0) as u64;
    let top = hits.min(max_k);
    let step = flow.rot.rot(1);
    let mut arc = base.arc;
    let mut levels = Vec::with_capacity(top as usize + 1);
    for k in 0..=top {
        if arc.contains(CirclePoint::ZERO) {
            return Err(Error::SingularOrbit(format!("column {k} of the tower meets 0")));
        }
        levels.push(TowerLevel { arc, k, s_lo: if k == 0 { base.s } else { 0.0 } });
        arc = arc.shift(step);
    }
    Ok(CompleteTower { base, anchor, height: h, hits, levels, truncated: top < hits })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadSetOptions {
    /// theta points per partition block in the stretch scan
    pub mesh: usize,
    /// the scan flags r <= factor * n1 * q_n^{3/2+eta}
    pub threshold_factor: f64,
}

impl Default for BadSetOptions {
    fn default() -> Self {
        BadSetOptions { mesh: 5, threshold_factor: 2.0 }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct BadTower {
    /// center of the (clipped) base arc
    pub center: f64,
    /// half the length of the base arc
    pub half_width: f64,
    /// base height s_i
    pub s: f64,
    pub height: f64,
    /// witness time
    pub t_i: f64,
    pub tower: CompleteTower,
    pub partition_tower: Tower,
    pub floor: u64,
    /// witness point x_i = (theta_i, s_i)
    pub x: PhasePoint,
    /// |phi'_N(theta_i)| at the witness
    pub r: f64,
    pub witness_n: u64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct BadSet {
    pub l: u64,
    pub l0: f64,
    pub l1: f64,
    pub n: usize,
    pub q_n: f64,
    pub k: usize,
    pub q_k: f64,
    pub fallback: bool,
    pub eta: f64,
    pub threshold: f64,
    /// q_n^{-3/2+5 eta}
    pub half_width: f64,
    /// q_n^{3/5}
    pub height: f64,
    pub mesh: usize,
    pub towers: Vec<BadTower>,
    /// sorted (arc start, tower, level) for lookups
    #[serde(skip)]
    index: Vec<(u128, usize, usize)>,
}

impl BadSet {
    pub fn m(&self) -> usize {
        self.towers.len()
    }

    pub fn measure(&self, flow: &SpecialFlow) -> f64 {
        self.towers.iter().map(|u| u.tower.measure(flow)).sum()
    }

    /// q_n^{-1/2+6 eta}
    pub fn measure_bound(&self) -> f64 {
        self.q_n.powf(-0.5 + 6.0 * self.eta)
    }

    /// q_n^{2/5+eta}
    pub fn count_bound(&self) -> f64 {
        self.q_n.powf(0.4 + self.eta)
    }

    pub fn reindex(&mut self) {
        let mut idx: Vec<(u128, usize, usize)> = Vec::new();
        for (i, u) in self.towers.iter().enumerate() {
            for (j, lv) in u.tower.levels.iter().enumerate() {
                idx.push((lv.arc.start.0, i, j));
            }
        }
        idx.sort_unstable();
        self.index = idx;
    }

    pub fn level(&self, tower: usize, level: usize) -> &TowerLevel {
        &self.towers[tower].tower.levels[level]
    }

    /// Levels whose arc meets `arc` in more than rounding, with `s` inside
    /// the column.
    pub fn levels_meeting(&self, arc: &Arc, s: f64) -> Vec<(usize, usize)> {
        if self.index.is_empty() {
            return Vec::new();
        }
        // levels are short and disjoint: start from the last level that
        // begins before the arc and walk forward past its end
        let n = self.index.len();
        let first = self.index.partition_point(|e| e.0 <= arc.start.0);
        let mut out = Vec::new();
        let mut probe = |pos: usize| {
            let (_, i, j) = self.index[pos % n];
            let lv = self.level(i, j);
            if s >= lv.s_lo {
                if let Some(x) = lv.arc.intersect(arc) {
                    if x.units().map_or(true, |u| u > OVERLAP_SLACK) {
                        out.push((i, j));
                    }
                }
            }
        };
        probe(first + n - 1);
        let span = arc.units().unwrap_or(u128::MAX);
        let mut pos = first;
        for _ in 0..n {
            let st = self.index[pos % n].0;
            if st.wrapping_sub(arc.start.0) >= span {
                break;
            }
            probe(pos);
            pos += 1;
        }
        out.sort_unstable();
        out.dedup();
        out
    }
}

#[derive(Clone, Copy, Debug)]
struct Candidate {
    s: f64,
    t: f64,
    offset: usize,
    r: f64,
    n: u64,
}

fn better(a: &Candidate, b: &Candidate) -> bool {
    (a.s, a.t, a.offset) < (b.s, b.t, b.offset)
}

/// Best candidate level on each floor of one tower, for one mesh offset.
#[allow(clippy::too_many_arguments)]
fn scan_offset(
    flow: &SpecialFlow,
    margin: &MarginSet,
    blocks: &[usize],
    theta0: CirclePoint,
    offset: usize,
    threshold: f64,
    f_max: f64,
) -> Result<Vec<Option<Candidate>>> {
    let sc = &margin.scale;
    let h = blocks.len();
    let extra = ((sc.l1 + f_max) / flow.roof.floor_c).ceil() as usize + 2;
    let len = h + extra;
    let mut s = Vec::with_capacity(len + 1);
    let mut d = Vec::with_capacity(len + 1);
    s.push(0.0);
    d.push(0.0);
    let (mut acc, mut acc1) = (0.0f64, 0.0f64);
    let mut p = theta0;
    let step = flow.rot.rot(1);
    for i in 0..len {
        if p.0 == 0 {
            return Err(Error::SingularityHit { index: i as i64 });
        }
        let jet = flow.roof.jet_at(p.signed());
        acc += jet.v;
        acc1 += jet.d1;
        s.push(acc);
        d.push(acc1);
        p = p.add(step);
    }
    let mut out = vec![None; h];
    for (j, &b) in blocks.iter().enumerate() {
        if !margin.in_w[b] {
            continue;
        }
        let fj = margin.block_floor[b];
        let lo = sc.l0 - f_max;
        let hi = sc.l1 + fj;
        let mut idx = j + 1 + s[j + 1..].partition_point(|&v| v - s[j] < lo);
        let mut best: Option<Candidate> = None;
        while idx <= len && s[idx] - s[j] <= hi {
            let n = (idx - j) as u64;
            let phi_n = s[idx] - s[j];
            let r = (d[idx] - d[j]).abs();
            if r <= threshold {
                let land = flow.rot.orbit(theta0, idx as i64);
                let lb = margin.block(land);
                if margin.in_w[lb] {
                    let s_lo = (phi_n - sc.l1).max(0.0);
                    let s_hi = fj.min(phi_n + margin.block_floor[lb] - sc.l0);
                    if s_lo <= s_hi {
                        let c = Candidate { s: s_lo, t: sc.l0.max(phi_n - s_lo), offset, r, n };
                        if best.map_or(true, |b| better(&c, &b)) {
                            best = Some(c);
                        }
                    }
                }
            }
            idx += 1;
        }
        out[j] = best;
    }
    Ok(out)
}

/// Scans the levels of both Rokhlin towers in order and erects a complete
/// tower of height q_n^{3/5} over each flagged level, skipping past its top.
/// With the default factor 2 the flag is r <= 2 n1 q_n^{3/2+eta}; the inf
/// over t in [l0, l1] is exact because phi'_N only changes when N does.
pub fn build_bad_set(flow: &SpecialFlow, margin: &MarginSet, opts: &BadSetOptions) -> Result<BadSet> {
    if opts.mesh == 0 {
        return Err(Error::Invalid("mesh must be positive".into()));
    }
    let sc = &margin.scale;
    let eta = flow.roof.eta;
    let q = sc.q_n;
    let threshold = opts.threshold_factor * flow.roof.n1 * q.powf(1.5 + eta);
    let half_width = q.powf(-1.5 + 5.0 * eta);
    let height = q.powf(0.6);
    let part = &margin.partition;
    let f_max = (0..part.len()).filter(|&i| margin.in_w[i]).map(|i| margin.block_floor[i]).fold(0.0, f64::max);
    let mut towers = Vec::new();
    for kind in [Tower::Long, Tower::Short] {
        let h = part.height(&flow.rot, kind) as usize;
        let mut blocks = vec![usize::MAX; h];
        for i in 0..part.len() {
            if part.tower[i] == kind {
                blocks[part.floor[i] as usize] = i;
            }
        }
        let base = part.arcs[blocks[0]];
        let offsets: Vec<CirclePoint> =
            (0..opts.mesh).map(|m| base.start.offset(base.length() * (m as f64 + 0.5) / opts.mesh as f64)).collect();
        let scans: Vec<Vec<Option<Candidate>>> = offsets
            .par_iter()
            .enumerate()
            .map(|(m, &th)| scan_offset(flow, margin, &blocks, th, m, threshold, f_max))
            .collect::<Result<_>>()?;
        let mut j = 0usize;
        while j < h {
            let best = scans.iter().filter_map(|v| v[j]).fold(None, |acc: Option<Candidate>, c| match acc {
                Some(b) if !better(&c, &b) => Some(b),
                _ => Some(c),
            });
            let Some(c) = best else {
                j += 1;
                continue;
            };
            let block = part.arcs[blocks[j]];
            let step = flow.rot.rot(j as i64);
            let theta = offsets[c.offset].add(step);
            let arc = Arc::centered(theta, half_width).intersect(&block).unwrap_or(block);
            let base = HorizontalInterval { arc, s: c.s };
            let tower = build_capped(flow, base, theta, height, (h - 1 - j) as u64)?;
            let used = tower.levels.len();
            towers.push(BadTower {
                center: arc.midpoint().to_f64(),
                half_width: 0.5 * arc.length(),
                s: c.s,
                height: tower.height,
                t_i: c.t,
                tower,
                partition_tower: kind,
                floor: j as u64,
                x: PhasePoint::new(theta, c.s),
                r: c.r,
                witness_n: c.n,
            });
            j += used;
        }
    }
    let mut bad = BadSet {
        l: sc.l,
        l0: sc.l0,
        l1: sc.l1,
        n: sc.n,
        q_n: q,
        k: sc.k,
        q_k: sc.q_k,
        fallback: sc.fallback,
        eta,
        threshold,
        half_width,
        height,
        mesh: opts.mesh,
        towers,
        index: Vec::new(),
    };
    bad.reindex();
    Ok(bad)
}

/// I = J1 + I_bad + J2 along the arc of I.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct Decomposition {
    pub j1: Option<Arc>,
    pub j2: Option<Arc>,
    pub bad: Option<Arc>,
    pub x_bad: Option<CirclePoint>,
    /// (tower, level) of the bad piece
    pub hit: Option<(usize, usize)>,
}

pub fn decompose_interval(bad: &BadSet, i: &HorizontalInterval) -> Result<Decomposition> {
    let hits = bad.levels_meeting(&i.arc, i.s);
    match hits.as_slice() {
        [] => Ok(Decomposition { j1: Some(i.arc), j2: None, bad: None, x_bad: None, hit: None }),
        [(t, l)] => {
            let lv = bad.level(*t, *l);
            let mut b = lv.arc.intersect(&i.arc).expect("hit implies overlap");
            // rounding slivers at the ends belong to the bad level
            if b.start.0.wrapping_sub(i.arc.start.0) <= OVERLAP_SLACK {
                b.start = i.arc.start;
            }
            if i.arc.end.0.wrapping_sub(b.end.0) <= OVERLAP_SLACK {
                b.end = i.arc.end;
            }
            let piece = |a: CirclePoint, e: CirclePoint| if a == e { None } else { Some(Arc::new(a, e)) };
            Ok(Decomposition {
                j1: piece(i.arc.start, b.start),
                j2: piece(b.end, i.arc.end),
                bad: Some(b),
                x_bad: Some(b.midpoint()),
                hit: Some((*t, *l)),
            })
        }
        many => Err(Error::MultipleLevelHit(format!("{} levels meet the interval at s = {}", many.len(), i.s))),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::RotationNumber;
    use crate::flow::Scale;
    use crate::roof::RoofFunction;

    fn flow() -> SpecialFlow {
        SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(60))
    }

    fn margin(f: &SpecialFlow, l: u64) -> MarginSet {
        MarginSet::new(&f.roof, &f.rot, 0.05, Scale::new(&f.rot, l, Some(2.0)).unwrap()).unwrap()
    }

    #[test]
    fn short_height_gives_single_level() {
        let f = flow();
        let z = CirclePoint::from_f64(0.4);
        let base = HorizontalInterval { arc: Arc::centered(z, 1e-3), s: 0.1 };
        let h = f.phi(z).unwrap() - 0.1 - 0.05;
        let t = build_complete_tower(&f, base, z, h).unwrap();
        assert_eq!(t.hits, 0);
        assert_eq!(t.levels.len(), 1);
        assert!(!t.truncated);
    }

    #[test]
    fn measure_matches_birkhoff_time() {
        let f = flow();
        let z = CirclePoint::from_f64(0.3137);
        let w = 2e-4;
        let base = HorizontalInterval { arc: Arc::centered(z, w), s: 0.2 };
        let t = build_complete_tower(&f, base, z, 40.0).unwrap();
        let direct = t.measure(&f);
        // independent route: integrate the Birkhoff sum over the base
        let n = t.levels.len() as i64;
        let a = base.arc.start;
        let via_sum = GaussLegendre::eight().composite(0.0, 2.0 * w, 8, |u| {
            f.birkhoff(a.offset(u), n).unwrap().value - 0.2
        });
        assert!((direct - via_sum).abs() < 1e-9 * direct, "{direct} {via_sum}");
        // the anchor estimate differs by at most the stretch across the base
        let d1 = f.birkhoff(z, n).unwrap().d1.abs();
        let anchor = t.anchor_measure(&f).unwrap();
        assert!((anchor - direct).abs() <= 2.0 * w * (d1 * w + 1e-9) + 1e-12);
    }

    #[test]
    fn levels_are_disjoint_inside_a_block() {
        let f = flow();
        let m = margin(&f, 200);
        let b = (0..m.partition.len()).find(|&i| m.in_w[i] && m.partition.floor[i] == 3).unwrap();
        let arc = m.partition.arcs[b];
        let t = build_complete_tower(&f, HorizontalInterval { arc, s: 0.0 }, arc.midpoint(), m.scale.l1).unwrap();
        for (i, a) in t.levels.iter().enumerate() {
            for c in &t.levels[i + 1..] {
                let o = a.arc.intersect(&c.arc).and_then(|x| x.units()).unwrap_or(0);
                assert!(o <= OVERLAP_SLACK, "levels {} and {} overlap", a.k, c.k);
            }
        }
    }

    #[test]
    fn singular_column_is_rejected() {
        let f = flow();
        let z = f.rot.rot(-3).offset(1e-6);
        let base = HorizontalInterval { arc: Arc::centered(z, 1e-4), s: 0.0 };
        assert!(matches!(build_complete_tower(&f, base, z, 20.0), Err(Error::SingularOrbit(_))));
    }

    #[test]
    fn zero_threshold_gives_empty_set() {
        let f = flow();
        let m = margin(&f, 130);
        let bad = build_bad_set(&f, &m, &BadSetOptions { threshold_factor: 0.0, ..Default::default() }).unwrap();
        assert_eq!(bad.m(), 0);
        let blk = (0..m.partition.len()).find(|&i| m.in_w[i]).unwrap();
        let i = HorizontalInterval { arc: m.partition.arcs[blk], s: 0.1 };
        let d = decompose_interval(&bad, &i).unwrap();
        assert_eq!(d, Decomposition { j1: Some(i.arc), j2: None, bad: None, x_bad: None, hit: None });
    }

    #[test]
    fn decomposition_recovers_levels() {
        let f = flow();
        let m = margin(&f, 130);
        let bad = build_bad_set(&f, &m, &BadSetOptions::default()).unwrap();
        assert!(bad.m() > 0);
        let mut seen = 0;
        for (ti, u) in bad.towers.iter().enumerate() {
            for (li, lv) in u.tower.levels.iter().enumerate() {
                let blk = m.block(lv.arc.midpoint());
                let i = HorizontalInterval { arc: m.partition.arcs[blk], s: lv.s_lo + 1e-9 };
                let d = decompose_interval(&bad, &i).unwrap();
                assert_eq!(d.hit, Some((ti, li)));
                let total: f64 = [d.j1, d.bad, d.j2].iter().flatten().map(|a| a.length()).sum();
                assert!((total - i.arc.length()).abs() < 1e-15);
                seen += 1;
            }
        }
        assert!(seen > bad.m());
    }
}
