//! One line per acceptance criterion on the desk configuration (golden
//! mean, eta = 0.25). Exits non-zero when any criterion fails.

use std::f64::consts::PI;
use std::time::Instant;

use kochergin_cli::checks::{
    bad_set_for, discrepancy_along_denominators, dk_sample, group_law, interval_oracle, margin_for, measure_preservation,
    multi_level_blocks, ostrowski_round_trip,
};
use kochergin_cli::pipeline::{localized_run, window_range};
use kochergin_cli::{init_workers, ExperimentConfig};
use kochergin_core::badset::check_structure;
use kochergin_core::correlation::{decay_summary, CorrelationSeries};
use kochergin_core::flow::SpecialFlow;
use kochergin_core::numerics::trapezoid;
use kochergin_core::spectral::{periodogram, wiener_average, wiener_summary, SpectralOptions};

struct Tally {
    failed: Vec<&'static str>,
}

impl Tally {
    fn line(&mut self, name: &'static str, pass: bool, detail: String) {
        println!("{} {name}: {detail}", if pass { "PASS" } else { "FAIL" });
        if !pass {
            self.failed.push(name);
        }
    }
}

fn sampled(half: f64, dt: f64, f: impl Fn(f64) -> f64) -> CorrelationSeries {
    let n = (half / dt).round() as i64;
    let t: Vec<f64> = (-n..=n).map(|k| k as f64 * dt).collect();
    CorrelationSeries { values: t.iter().map(|&x| f(x)).collect(), quad_error: vec![0.0; t.len()], t, ..Default::default() }
}

fn main() {
    let workers = init_workers().expect("worker count");
    let cfg = ExperimentConfig::default();
    let flow = SpecialFlow::new(cfg.roof_function().unwrap(), cfg.rotation().unwrap());
    let zeta = cfg.margin.zeta;
    let mut tally = Tally { failed: Vec::new() };
    println!("acceptance on {workers} workers, seed {}", cfg.seed);

    let start = Instant::now();
    let r = ostrowski_round_trip(100_000).unwrap();
    let secs = start.elapsed().as_secs_f64();
    tally.line("ostrowski_round_trip", r.pass && secs < 10.0, format!("{} mismatches for N < 1e5 (golden, silver), {secs:.2} s (< 10 s)", r.measured));

    let start = Instant::now();
    let rs = group_law(&flow, zeta, 1000, cfg.seed).unwrap();
    let secs = start.elapsed().as_secs_f64();
    tally.line(
        "group_law",
        rs.iter().all(|r| r.pass) && secs < 60.0,
        format!("fiber {:.3e} (< 1e-8), base {:.3e} (< 2^-90), 1000 samples, {secs:.2} s (< 60 s)", rs[0].measured, rs[1].measured),
    );

    let ms = measure_preservation(&flow, zeta, 100_000, 20, &[10.0, 50.0, 200.0], cfg.seed.wrapping_add(4)).unwrap();
    let worst = ms.worst_z.iter().map(|w| w.1).fold(0.0, f64::max);
    let per_t: Vec<String> = ms.worst_z.iter().map(|(t, z)| format!("t={t}: {z:.2}")).collect();
    tally.line("measure_preservation", worst <= 4.0, format!("worst box deviation in SE over 20x20 boxes, 1e5 samples ({}) (<= 4)", per_t.join(", ")));

    let dk = dk_sample(&flow, 500, 12, cfg.seed.wrapping_add(1)).unwrap();
    tally.line(
        "denjoy_koksma",
        dk.pass_fraction >= 0.95 && dk.stable && dk.cross_pass == 1.0,
        format!(
            "constants 1/3 and 3: {:.3} (>= 0.95); fitted lower {:.4}/{:.4}, upper {:.4}/{:.4}, stable {} (10%), second half inside first fit {:.3} (= 1)",
            dk.pass_fraction, dk.fitted[0].0, dk.fitted[1].0, dk.fitted[0].1, dk.fitted[1].1, dk.stable, dk.cross_pass
        ),
    );

    let worst = discrepancy_along_denominators(&flow.rot, 100, 12, cfg.seed.wrapping_add(2));
    tally.line("discrepancy_denominators", worst <= 2.0, format!("worst |count - q_k lambda| = {worst:.4} over 100 intervals, k <= 12 (<= 2)"));

    let iv = interval_oracle(&flow, zeta, cfg.margin.beta, 50, cfg.seed.wrapping_add(3)).unwrap();
    tally.line(
        "interval_estimate",
        iv.finite && iv.pairs > iv.vacuous + iv.critical && iv.max_refinement_ratio < 2.0,
        format!(
            "{} pairs ({} vacuous, {} with phi_N' = 0 inside J), finite {}, max implied {:.3e}, refinement ratio {:.4} (< 2)",
            iv.pairs, iv.vacuous, iv.critical, iv.finite, iv.max_implied, iv.max_refinement_ratio
        ),
    );

    // ten scales l with q_n in [100, 2000]
    let mut b1 = true;
    let mut b2 = true;
    let mut m_ok = true;
    let mut b3 = true;
    let mut rows = Vec::new();
    for q in [150.0, 200.0, 260.0, 400.0, 500.0, 700.0, 1000.0, 1200.0, 1700.0, 2200.0] {
        let margin = margin_for(&flow, &cfg, q).unwrap();
        let bad = bad_set_for(&flow, &cfg, &margin).unwrap();
        let st = check_structure(&flow, &bad);
        let (multi, _) = multi_level_blocks(&margin, &bad);
        assert!((100.0..=2000.0).contains(&margin.scale.q_n));
        b1 &= st.disjoint;
        b2 &= st.measure_ok;
        m_ok &= st.count_ok;
        b3 &= multi == 0;
        rows.push(format!("l={} q_n={} m={}/{:.1} mu={:.3}", margin.scale.l, margin.scale.q_n, st.m, st.count_bound, st.measure));
    }
    tally.line(
        "bad_set_structure",
        b1 && b2 && m_ok && b3,
        format!("B1 disjoint {b1}, B2 measure {b2}, m <= q_n^(2/5+eta) {m_ok}, one level per block {b3}; {}", rows.join("; ")),
    );

    let start = Instant::now();
    let (loc, half) = localized_run(&flow, &cfg).unwrap();
    let (lo, hi) = window_range(half, cfg.correlation.t_max).expect("windows past 2T");
    let d = decay_summary(&loc, lo, hi).unwrap();
    let gs = d.good_slope.unwrap_or(f64::NAN);
    let ls = d.l2_slope.unwrap_or(f64::NAN);
    let secs = start.elapsed().as_secs_f64();
    tally.line(
        "decay_exponents",
        half >= 500.0 && gs <= -0.45 && ls <= -0.8 && secs < 1800.0,
        format!(
            "T_J = {half:.1} (>= 500), good-mass slope {gs:.4} over {} windows (<= -0.45), windowed L2 slope {ls:.4} for l in {lo}..={hi} (<= -0.8), t <= {}, {secs:.1} s",
            d.good_windows, cfg.correlation.t_max
        ),
    );

    let pts = wiener_average(&loc.series, &cfg.spectrum.wiener).unwrap();
    let ws = wiener_summary(&pts);
    let slope = ws.slope.unwrap_or(f64::NAN);
    let avgs: Vec<String> = pts.iter().map(|p| format!("{:.4e}", p.average)).collect();
    tally.line(
        "wiener_averages",
        ws.decreasing && slope <= -0.3 && !ws.plateau,
        format!("averages [{}], decreasing {}, slope {slope:.4} (<= -0.3), plateau {}", avgs.join(", "), ws.decreasing, ws.plateau),
    );

    // e^{-|t|} has density 2 / (1 + (2 pi xi)^2)
    let s = sampled(60.0, 0.02, |t| (-t.abs()).exp());
    let e = periodogram(&s, &SpectralOptions { xi_max: Some(5.0), ..Default::default() }).unwrap();
    let exact: Vec<f64> = e.frequency.iter().map(|&x| 2.0 / (1.0 + (2.0 * PI * x).powi(2))).collect();
    let diff: Vec<f64> = e.density.iter().zip(&exact).map(|(a, b)| (a - b).abs()).collect();
    let l1 = trapezoid(&e.frequency, &diff) / trapezoid(&e.frequency, &exact);
    // cos(2 pi 0.2 t) has atoms of mass 1/2 at +-0.2
    let half_t = 200.0;
    let c = periodogram(&sampled(half_t, 0.5, |t| (2.0 * PI * 0.2 * t).cos()), &SpectralOptions::default()).unwrap();
    let w = 4.0 / half_t;
    let atom_err = [c.mass_between(0.2 - w, 0.2 + w), c.mass_between(-0.2 - w, -0.2 + w)].iter().map(|m| (m - 0.5).abs() / 0.5).fold(0.0, f64::max);
    tally.line(
        "spectral_oracles",
        l1 < 0.03 && atom_err < 0.02,
        format!("Lorentzian relative L1 error {l1:.4e} (< 3%), cosine atom mass error {atom_err:.4e} (< 2%)"),
    );

    println!("{} of 10 criteria pass", 10 - tally.failed.len());
    if !tally.failed.is_empty() {
        println!("failed: {}", tally.failed.join(", "));
        std::process::exit(1);
    }
}
