//! The diagnostic battery. Structural invariants (B1 disjointness, the
//! single bad level per block, Ostrowski round trip, group law) are hard;
//! everything resting on asymptotic constants is reported with its margin.

use std::fmt::Write as _;

use kochergin_core::arithmetic::diophantine::diophantine_witness;
use kochergin_core::arithmetic::discrepancy::orbit_count;
use kochergin_core::arithmetic::ostrowski::ostrowski_expand;
use kochergin_core::arithmetic::{Arc, CirclePoint, RotationNumber};
use kochergin_core::badset::{
    build_bad_set, check_b4, check_b5_and_uniformity, check_structure, decompose_interval, B4Branch, BadSet, BadSetOptions,
    UniformityOptions,
};
use kochergin_core::correlation::estimates::IntervalOptions;
use kochergin_core::correlation::interval_estimate_check;
use kochergin_core::flow::diagnostics::{dk_bounds_check, HorizontalInterval};
use kochergin_core::flow::margin::in_m_zeta;
use kochergin_core::flow::{MarginSet, PhasePoint, Scale, SpecialFlow};
use kochergin_core::numerics::adaptive;
use kochergin_core::observables::{bump_coboundary, BumpObservable, TensorBump};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum CheckKind {
    Hard,
    Report,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct CheckResult {
    pub name: String,
    pub kind: CheckKind,
    pub pass: bool,
    pub measured: f64,
    pub threshold: f64,
    pub detail: String,
}

impl CheckResult {
    pub fn hard(name: impl Into<String>, pass: bool, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), kind: CheckKind::Hard, pass, measured, threshold, detail: detail.into() }
    }

    pub fn report(name: impl Into<String>, pass: bool, measured: f64, threshold: f64, detail: impl Into<String>) -> Self {
        CheckResult { name: name.into(), kind: CheckKind::Report, pass, measured, threshold, detail: detail.into() }
    }
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct ChecksReport {
    pub results: Vec<CheckResult>,
}

impl ChecksReport {
    pub fn hard_ok(&self) -> bool {
        self.results.iter().all(|r| r.kind != CheckKind::Hard || r.pass)
    }

    pub fn table(&self) -> String {
        let w = self.results.iter().map(|r| r.name.len()).max().unwrap_or(4).max(4);
        let mut s = String::new();
        let _ = writeln!(s, "{:<w$}  kind    status  {:>12}  {:>12}  detail", "name", "measured", "threshold");
        for r in &self.results {
            let kind = match r.kind {
                CheckKind::Hard => "hard",
                CheckKind::Report => "report",
            };
            let status = if r.pass { "pass" } else { "FAIL" };
            let _ = writeln!(s, "{:<w$}  {kind:<6}  {status:<6}  {:>12.4e}  {:>12.4e}  {}", r.name, r.measured, r.threshold, r.detail);
        }
        s
    }
}

fn core_err(module: &'static str, params: impl std::fmt::Display) -> impl FnOnce(kochergin_core::Error) -> CliError {
    move |e| CliError::module(module, e, params)
}

pub fn ostrowski_round_trip(n_max: u64) -> Result<CheckResult, CliError> {
    let mut bad = 0u64;
    for rot in [RotationNumber::golden(40), RotationNumber::silver(30)] {
        let fails: u64 = (0..n_max as u128)
            .into_par_iter()
            .map(|n| match ostrowski_expand(n, &rot) {
                Ok(d) if d.value(&rot) == n => 0,
                _ => 1,
            })
            .sum();
        bad += fails;
    }
    Ok(CheckResult::hard("ostrowski_round_trip", bad == 0, bad as f64, 0.0, format!("N < {n_max}, golden and silver")))
}

/// Group law and invertibility on random (x, t1, t2) with |t| <= 1000; x is
/// uniform on {zeta <= theta <= 1 - zeta, 0 <= s < phi(theta)}.
pub fn group_law(flow: &SpecialFlow, zeta: f64, samples: usize, seed: u64) -> Result<Vec<CheckResult>, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut fiber = 0.0f64;
    let mut base = 0u128;
    let mut missing = 0usize;
    for _ in 0..samples {
        let th = CirclePoint::from_f64(rng.gen_range(zeta..1.0 - zeta));
        let h = flow.phi(th).map_err(core_err("flow", format!("theta = {}", th.to_f64())))?;
        let x = PhasePoint::new(th, rng.gen::<f64>() * h);
        let t1: f64 = rng.gen_range(-1000.0..1000.0);
        let t2: f64 = rng.gen_range(-1000.0..1000.0);
        let ev = |p: PhasePoint, t: f64| flow.evolve(p, t).map_err(core_err("flow", format!("x = {p:?}, t = {t}")));
        let a = ev(ev(x, t1)?, t2)?;
        let b = ev(x, t1 + t2)?;
        let back = ev(ev(x, t1)?, -t1)?;
        for (p, q) in [(a, b), (back, x)] {
            match flow.fiber_distance(p, q) {
                Some(d) => fiber = fiber.max(d),
                None => missing += 1,
            }
            // compare base points after moving across at most one fibre boundary
            let step = flow.rot.rot(1);
            let units = [p.theta.sub(q.theta).0, p.theta.add(step).sub(q.theta).0, q.theta.add(step).sub(p.theta).0]
                .iter()
                .map(|&d| d.min(d.wrapping_neg()))
                .min()
                .unwrap();
            base = base.max(units);
        }
    }
    let base_err = base as f64 * 2f64.powi(-128);
    Ok(vec![
        CheckResult::hard("group_law_fiber", missing == 0 && fiber < 1e-8, fiber, 1e-8, format!("{samples} samples, {missing} base mismatches")),
        CheckResult::hard("group_law_base", base_err < 2f64.powi(-90), base_err, 2f64.powi(-90), format!("{samples} samples")),
    ])
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct MeasureSummary {
    pub samples: usize,
    pub grid: usize,
    /// worst |count - N p| / sqrt(N p (1 - p)) over boxes, per time
    pub worst_z: Vec<(f64, f64)>,
}

/// Pushes an exact invariant sample forward by each t and counts it on a
/// grid x grid box partition of M_zeta in (theta, (s - zeta) / (phi - 2 zeta)).
/// Box probabilities come from quadrature of phi - 2 zeta over theta bins.
pub fn measure_preservation(flow: &SpecialFlow, zeta: f64, samples: usize, grid: usize, times: &[f64], seed: u64) -> Result<MeasureSummary, CliError> {
    let roof = flow.roof;
    let width = (1.0 - 2.0 * zeta) / grid as f64;
    let p: Vec<f64> = (0..grid)
        .map(|i| {
            let a = zeta + i as f64 * width;
            adaptive(&|t: f64| roof.value_at(t) - 2.0 * zeta, a, a + width, 1e-13, 30) / grid as f64
        })
        .collect();
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let xs: Vec<PhasePoint> = (0..samples).map(|_| flow.sample_invariant(&mut rng)).collect();
    let n = samples as f64;
    let mut worst_z = Vec::new();
    for &t in times {
        let ys = xs
            .par_iter()
            .map(|&x| flow.evolve(x, t).map_err(core_err("flow", format!("x = {x:?}, t = {t}"))))
            .collect::<Result<Vec<_>, _>>()?;
        let mut counts = vec![0u64; grid * grid];
        for y in &ys {
            let th = y.theta.to_f64();
            if !in_m_zeta(&roof, zeta, y) {
                continue;
            }
            let i = (((th - zeta) / width) as usize).min(grid - 1);
            let h = roof.value_at(y.theta.signed());
            let j = (((y.s - zeta) / (h - 2.0 * zeta) * grid as f64) as usize).min(grid - 1);
            counts[i * grid + j] += 1;
        }
        let z = counts
            .iter()
            .enumerate()
            .map(|(k, &c)| {
                let pk = p[k / grid];
                (c as f64 - n * pk).abs() / (n * pk * (1.0 - pk)).sqrt()
            })
            .fold(0.0, f64::max);
        worst_z.push((t, z));
    }
    Ok(MeasureSummary { samples, grid, worst_z })
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct DkSummary {
    pub samples: usize,
    pub pass_fraction: f64,
    /// fitted constants: min (phi_N - phi(x_min)) / q_r and max ... / q_{r+1}
    pub fitted: [(f64, f64); 2],
    /// fraction of the second half inside the first half's fitted bounds
    pub cross_pass: f64,
    pub stable: bool,
}

/// Denjoy-Koksma on random (theta, N) with N in [q_r, q_{r+1}], 1 <= r <= r_max,
/// split into two disjoint halves for the fitted constants.
pub fn dk_sample(flow: &SpecialFlow, samples: usize, r_max: usize, seed: u64) -> Result<DkSummary, CliError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let q = &flow.rot.q;
    let draws: Vec<(CirclePoint, u64)> = (0..samples)
        .map(|_| {
            let r = rng.gen_range(1..=r_max);
            let n = rng.gen_range(q[r] as u64..=q[r + 1] as u64);
            (CirclePoint::from_f64(rng.gen::<f64>()), n)
        })
        .collect();
    let reps = draws
        .par_iter()
        .map(|&(th, n)| dk_bounds_check(flow, th, n).map_err(core_err("flow", format!("theta = {}, N = {n}", th.to_f64()))))
        .collect::<Result<Vec<_>, _>>()?;
    let pass = reps.iter().filter(|r| r.lower_ok && r.upper_ok).count();
    let half = reps.len() / 2;
    let fit = |rs: &[kochergin_core::flow::diagnostics::DkReport]| {
        let lo = rs.iter().map(|r| r.lower_ratio).fold(f64::INFINITY, f64::min);
        let hi = rs.iter().map(|r| r.upper_ratio).fold(0.0, f64::max);
        (lo, hi)
    };
    let fitted = [fit(&reps[..half]), fit(&reps[half..])];
    let rel = |a: f64, b: f64| if a == b { 0.0 } else { (a - b).abs() / a.abs().max(b.abs()) };
    let stable = rel(fitted[0].0, fitted[1].0) <= 0.1 && rel(fitted[0].1, fitted[1].1) <= 0.1;
    let (lo, hi) = fitted[0];
    let inside = reps[half..].iter().filter(|r| r.lower_ratio >= lo && r.upper_ratio <= hi).count();
    let cross_pass = inside as f64 / (reps.len() - half).max(1) as f64;
    Ok(DkSummary { samples, pass_fraction: pass as f64 / samples as f64, fitted, cross_pass, stable })
}

/// |#{0 <= j < q_k : theta + j alpha in J} - q_k lambda(J)| over random J and
/// theta for every k <= k_max; returns the worst deviation.
pub fn discrepancy_along_denominators(rot: &RotationNumber, intervals: usize, k_max: usize, seed: u64) -> f64 {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let draws: Vec<(Arc, CirclePoint)> = (0..intervals)
        .map(|_| {
            let a: f64 = rng.gen();
            let len: f64 = rng.gen_range(0.0..1.0);
            (Arc::from_f64(a, a + len), CirclePoint::from_f64(rng.gen()))
        })
        .collect();
    draws
        .par_iter()
        .map(|(arc, th)| {
            (1..=k_max)
                .map(|k| {
                    let qk = rot.q[k] as u64;
                    (orbit_count(rot, arc, *th, qk) as f64 - qk as f64 * arc.length()).abs()
                })
                .fold(0.0, f64::max)
        })
        .reduce(|| 0.0, f64::max)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct IntervalSummary {
    pub pairs: usize,
    pub vacuous: usize,
    /// pairs where phi_N' vanishes inside J_t; the bound is infinite
    pub critical: usize,
    pub finite: bool,
    pub max_implied: f64,
    /// worst ratio of implied constants between a grid and its halving
    pub max_refinement_ratio: f64,
}

/// The horizontal interval estimate on random short pieces J in the
/// support of a bump g, against a bump coboundary f.
pub fn interval_oracle(flow: &SpecialFlow, zeta: f64, beta: f64, pairs: usize, seed: u64) -> Result<IntervalSummary, CliError> {
    let margin = MarginSet::new(&flow.roof, &flow.rot, zeta, Scale::new(&flow.rot, 200, Some(beta)).map_err(core_err("flow", "l = 200"))?)
        .map_err(core_err("flow", format!("zeta = {zeta}")))?;
    let f = bump_coboundary(&flow.roof, zeta, (0.6, 0.17), (0.25, 0.1), 1.0).map_err(core_err("observables", "f bump"))?;
    let bump = TensorBump { center: CirclePoint::from_f64(0.35), w_theta: 0.05, c_s: 0.2, w_s: 0.1, amplitude: 1.0 };
    let g = BumpObservable::new(&flow.roof, zeta, bump).map_err(core_err("observables", "g bump"))?;
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let (l0, l1) = (margin.scale.l0, margin.scale.l1);
    let draws: Vec<(HorizontalInterval, f64)> = (0..pairs)
        .map(|_| {
            let c = rng.gen_range(0.33..0.37);
            let w = rng.gen_range(2e-5..2e-4);
            (HorizontalInterval { arc: Arc::from_f64(c, c + w), s: rng.gen_range(0.15..0.25) }, rng.gen_range(l0..l1))
        })
        .collect();
    let o = IntervalOptions::default();
    let rows = draws
        .par_iter()
        .map(|(j, t)| {
            let a = interval_estimate_check(flow, &margin, &f, &g, j, *t, &o).map_err(core_err("correlation", format!("t = {t}")))?;
            let b = interval_estimate_check(flow, &margin, &f, &g, j, *t, &o.refined()).map_err(core_err("correlation", format!("t = {t}")))?;
            Ok((a, b))
        })
        .collect::<Result<Vec<_>, CliError>>()?;
    let mut s = IntervalSummary { pairs, vacuous: 0, critical: 0, finite: true, max_implied: 0.0, max_refinement_ratio: 1.0 };
    for (a, b) in &rows {
        if a.vacuous {
            s.vacuous += 1;
            continue;
        }
        if a.critical || b.critical {
            s.critical += 1;
            continue;
        }
        s.finite &= a.implied.is_finite() && b.implied.is_finite();
        s.max_implied = s.max_implied.max(a.implied).max(b.implied);
        // both sides at rounding level carry no constant
        if a.lhs > 1e-12 && b.lhs > 1e-12 {
            s.max_refinement_ratio = s.max_refinement_ratio.max((a.implied / b.implied).max(b.implied / a.implied));
        }
    }
    Ok(s)
}

pub fn margin_for(flow: &SpecialFlow, cfg: &ExperimentConfig, q_target: f64) -> Result<MarginSet, CliError> {
    let l = Scale::l_for_qn(q_target);
    let sc = Scale::new(&flow.rot, l, Some(cfg.margin.beta)).map_err(core_err("flow", format!("l = {l}")))?;
    MarginSet::new(&flow.roof, &flow.rot, cfg.margin.zeta, sc).map_err(core_err("flow", format!("l = {l}, zeta = {}", cfg.margin.zeta)))
}

pub fn bad_set_for(flow: &SpecialFlow, cfg: &ExperimentConfig, margin: &MarginSet) -> Result<BadSet, CliError> {
    let opts = BadSetOptions { mesh: cfg.badset.mesh, threshold_factor: cfg.badset.threshold_factor };
    build_bad_set(flow, margin, &opts).map_err(core_err("badset", format!("l = {}", margin.scale.l)))
}

/// Blocks of W whose decomposition meets more than one bad level, and the
/// blocks of W themselves.
pub fn multi_level_blocks(margin: &MarginSet, bad: &BadSet) -> (usize, Vec<usize>) {
    let blocks: Vec<usize> = (0..margin.partition.len()).filter(|&b| margin.in_w[b]).collect();
    let multi = blocks
        .par_iter()
        .filter(|&&b| {
            let i = HorizontalInterval { arc: margin.partition.arcs[b], s: 0.5 * margin.block_floor[b] };
            decompose_interval(bad, &i).is_err()
        })
        .count();
    (multi, blocks)
}

/// B1 to B5 on one bad set.
pub fn bad_set_checks(flow: &SpecialFlow, cfg: &ExperimentConfig, margin: &MarginSet, bad: &BadSet) -> Result<Vec<CheckResult>, CliError> {
    let sc = &margin.scale;
    let tag = format!("q_n={}", sc.q_n);
    let st = check_structure(flow, bad);
    // the constants behind B2 to B5 assume the literal partition level
    let asym = |name: String, pass: bool, measured: f64, threshold: f64, detail: String| {
        let kind = if sc.fallback { CheckKind::Report } else { CheckKind::Hard };
        CheckResult { name, kind, pass, measured, threshold, detail }
    };
    let mut out = vec![
        CheckResult::hard(format!("b1_disjoint[{tag}]"), st.disjoint, st.overlaps as f64, 0.0, format!("{} clipped, {} truncated", st.clipped, st.truncated)),
        asym(format!("b2_measure[{tag}]"), st.measure_ok, st.measure, st.measure_bound, "mu(B_l) <= q_n^{-1/2+6 eta}".into()),
        asym(format!("m_count[{tag}]"), st.count_ok, st.m as f64, st.count_bound, "m <= q_n^{2/5+eta}".into()),
    ];
    let (multi, blocks) = multi_level_blocks(margin, bad);
    out.push(CheckResult::hard(format!("b3_single_level[{tag}]"), multi == 0, multi as f64, 0.0, format!("{} blocks in W", blocks.len())));
    let stride = (blocks.len() / cfg.checks.b4_blocks.max(1)).max(1);
    let sampled: Vec<(usize, usize)> = blocks.iter().step_by(stride).take(cfg.checks.b4_blocks).cloned().enumerate().collect();
    let reps = sampled
        .par_iter()
        .map(|&(k, b)| {
            let i = HorizontalInterval { arc: margin.partition.arcs[b], s: 0.5 * margin.block_floor[b] };
            let t = sc.l0 + (sc.l1 - sc.l0) * (k % 11) as f64 / 10.0;
            check_b4(flow, margin, bad, &i, t, 9).map_err(core_err("badset", format!("block {b}, t = {t}")))
        })
        .collect::<Result<Vec<_>, _>>()?;
    let fails = reps.iter().filter(|r| r.branch == B4Branch::Fail).count();
    let bad_level = reps.iter().filter(|r| r.branch == B4Branch::BadLevel).count();
    out.push(asym(
        format!("b4_dichotomy[{tag}]"),
        fails == 0,
        fails as f64,
        0.0,
        format!("{} blocks, {bad_level} via a bad level", reps.len()),
    ));
    let b5 = check_b5_and_uniformity(flow, margin, bad, sc.l0 + 0.5, &UniformityOptions::default())
        .map_err(core_err("badset", format!("B5 at t = {}", sc.l0 + 0.5)))?;
    out.push(asym(format!("b5_sym_diff[{tag}]"), b5.max_sym_diff <= b5.threshold, b5.max_sym_diff, b5.threshold, format!("{} towers", b5.towers.len())));
    out.push(asym(
        format!("uniformity[{tag}]"),
        b5.all_uniform,
        b5.towers.iter().filter(|t| t.uniform_ok).count() as f64,
        b5.towers.len() as f64,
        format!("k* = {}, nu = {:.3}, gamma = {:.3}", b5.k_star, b5.nu, b5.gamma),
    ));
    Ok(out)
}

/// The full battery except the correlation pipeline.
pub fn run_checks(cfg: &ExperimentConfig) -> Result<ChecksReport, CliError> {
    let flow = SpecialFlow::new(cfg.roof_function()?, cfg.rotation()?);
    let ck = &cfg.checks;
    let mut rep = ChecksReport::default();
    rep.results.push(ostrowski_round_trip(ck.ostrowski_max)?);
    rep.results.extend(group_law(&flow, cfg.margin.zeta, ck.group_samples, cfg.seed)?);
    let ms = measure_preservation(&flow, cfg.margin.zeta, ck.measure_samples, 20, &[10.0, 50.0, 200.0], cfg.seed.wrapping_add(4))?;
    let worst = ms.worst_z.iter().map(|w| w.1).fold(0.0, f64::max);
    rep.results.push(CheckResult::report("measure_preservation", worst <= 4.0, worst, 4.0, format!("{} samples, worst box z-score over t = 10, 50, 200", ms.samples)));
    let dk = dk_sample(&flow, ck.dk_samples, ck.dk_r_max, cfg.seed.wrapping_add(1))?;
    rep.results.push(CheckResult::report("dk_third_and_three", dk.pass_fraction >= 0.95, dk.pass_fraction, 0.95, format!("{} samples", dk.samples)));
    rep.results.push(CheckResult::report(
        "dk_fitted_stable",
        dk.stable,
        dk.fitted[1].1,
        dk.fitted[0].1,
        format!(
            "halves: lower {:.4}/{:.4}, upper {:.4}/{:.4}, second half inside first fit {:.3}",
            dk.fitted[0].0, dk.fitted[1].0, dk.fitted[0].1, dk.fitted[1].1, dk.cross_pass
        ),
    ));
    let worst = discrepancy_along_denominators(&flow.rot, ck.discrepancy_intervals, ck.discrepancy_k_max, cfg.seed.wrapping_add(2));
    rep.results.push(CheckResult::report("discrepancy_denominators", worst <= 2.0, worst, 2.0, format!("k <= {}", ck.discrepancy_k_max)));
    let dio = diophantine_witness(&flow.rot, cfg.margin.xi, 1_000_000);
    rep.results.push(CheckResult::report("diophantine_constant", dio.constant_c > 0.0, dio.constant_c, 0.0, format!("worst q = {}", dio.worst_q)));
    let iv = interval_oracle(&flow, cfg.margin.zeta, cfg.margin.beta, ck.interval_pairs, cfg.seed.wrapping_add(3))?;
    rep.results.push(CheckResult::report(
        "interval_estimate",
        iv.finite && iv.pairs > iv.vacuous + iv.critical && iv.max_refinement_ratio < 2.0,
        iv.max_refinement_ratio,
        2.0,
        format!("{} pairs, {} vacuous, {} critical, max implied {:.3e}", iv.pairs, iv.vacuous, iv.critical, iv.max_implied),
    ));
    for &q in &cfg.badset.q_targets {
        let margin = margin_for(&flow, cfg, q)?;
        let bad = bad_set_for(&flow, cfg, &margin)?;
        rep.results.extend(bad_set_checks(&flow, cfg, &margin, &bad)?);
    }
    Ok(rep)
}

#[cfg(test)]
mod tests {
    use super::*;
    use kochergin_core::roof::RoofFunction;

    #[test]
    fn table_lists_every_check() {
        let rep = ChecksReport {
            results: vec![CheckResult::hard("a", true, 0.0, 0.0, ""), CheckResult::report("bb", false, 1.0, 0.5, "x")],
        };
        let t = rep.table();
        assert_eq!(t.lines().count(), 3);
        assert!(t.contains("FAIL"));
        assert!(rep.hard_ok());
    }

    #[test]
    fn discrepancy_is_within_two() {
        let rot = RotationNumber::golden(30);
        assert!(discrepancy_along_denominators(&rot, 20, 12, 5) <= 2.0);
    }

    #[test]
    fn group_law_holds() {
        let flow = SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(60));
        for r in group_law(&flow, 0.05, 50, 9).unwrap() {
            assert!(r.pass, "{r:?}");
        }
    }
}
