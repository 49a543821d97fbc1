//! roof -> flow -> observables -> correlation -> badset -> spectral, with every
//! output hashed into manifest.json.

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};
use std::time::Instant;

use kochergin_core::arithmetic::Arc;
use kochergin_core::correlation::{decay_summary, localized_correlation, CorrelationSeries, LocalizedOptions, WindowStat};
use kochergin_core::flow::diagnostics::HorizontalInterval;
use kochergin_core::flow::SpecialFlow;
use kochergin_core::observables::{flow_box, localized_pair, ProfileSpec};
use kochergin_core::spectral::{periodogram, symmetrize, wiener_average, wiener_summary, SpectralOptions, WienerPoint};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::checks::{bad_set_checks, bad_set_for, margin_for, run_checks, CheckResult, ChecksReport};
use crate::config::ExperimentConfig;
use crate::CliError;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct FileEntry {
    pub path: String,
    pub sha256: String,
    pub bytes: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct Manifest {
    /// "ok" or "FAILED"
    pub status: String,
    pub error: Option<String>,
    pub config: String,
    pub versions: BTreeMap<String, String>,
    pub workers: usize,
    pub wall_time_s: f64,
    pub files: Vec<FileEntry>,
    pub hard_ok: bool,
    pub all_ok: bool,
}

pub const MANIFEST: &str = "manifest.json";
pub const WINDOWS_CSV_HEADER: &str = "l,t0,t1,integral";
pub const WIENER_CSV_HEADER: &str = "t,average,noise";

struct Out {
    dir: PathBuf,
    files: Vec<FileEntry>,
}

impl Out {
    fn write(&mut self, name: &str, bytes: &[u8]) -> Result<(), CliError> {
        let path = self.dir.join(name);
        std::fs::write(&path, bytes).map_err(|e| CliError::io(&path, e))?;
        self.files.push(FileEntry { path: name.into(), sha256: hex::encode(Sha256::digest(bytes)), bytes: bytes.len() as u64 });
        Ok(())
    }
}

pub fn sha256_file(path: &Path) -> Result<String, CliError> {
    let bytes = std::fs::read(path).map_err(|e| CliError::io(path, e))?;
    Ok(hex::encode(Sha256::digest(bytes)))
}

pub fn windows_csv(stats: &[WindowStat]) -> String {
    let mut s = format!("{WINDOWS_CSV_HEADER}\n");
    for w in stats {
        s += &format!("{},{:.16e},{:.16e},{:.16e}\n", w.l, w.t0, w.t1, w.integral);
    }
    s
}

pub fn wiener_csv(points: &[WienerPoint]) -> String {
    let mut s = format!("{WIENER_CSV_HEADER}\n");
    for p in points {
        s += &format!("{:.16e},{:.16e},{:.16e}\n", p.t, p.average, p.noise);
    }
    s
}

/// Uniform grid 0, step, ..., t_max.
pub fn uniform_grid(t_max: f64, step: f64) -> Vec<f64> {
    let n = (t_max / step).round() as usize;
    (0..=n).map(|k| k as f64 * step).collect()
}

/// Correlation of the configured localized pair on the uniform grid,
/// together with the box half-height T.
pub fn localized_run(flow: &SpecialFlow, cfg: &ExperimentConfig) -> Result<(kochergin_core::correlation::LocalizedSeries, f64), CliError> {
    let o = &cfg.observable;
    let q = *flow.rot.q.get(o.box_index).ok_or_else(|| CliError::Config("observable.box_index beyond alpha.depth".into()))? as f64;
    let w = 1.0 / (10.0 * q);
    let base = HorizontalInterval { arc: Arc::from_f64(o.theta0 - w, o.theta0 + w), s: o.s };
    let params = format!("box_index = {}, theta0 = {}, s = {}", o.box_index, o.theta0, o.s);
    let fb = flow_box(flow, base, o.half_height, cfg.margin.zeta).map_err(|e| CliError::module("observables", e, &params))?;
    let fp = ProfileSpec { fill: o.f_fill, offset: o.f_offset, amplitude: 1.0, min_len: o.min_len };
    let gp = ProfileSpec { fill: o.g_fill, offset: o.g_offset, amplitude: 1.0, min_len: o.min_len };
    let (fj, gj) = localized_pair(&fb, &fp, &gp).map_err(|e| CliError::module("observables", e, &params))?;
    let c = &cfg.correlation;
    let opts = LocalizedOptions { du_max: c.du_max, theta_cap: c.theta_cap, eps: cfg.margin.eps, ..Default::default() };
    let grid = uniform_grid(c.t_max, c.step);
    let series = localized_correlation(&fj, &gj, &grid, &opts)
        .map_err(|e| CliError::module("correlation", e, format!("t_max = {}, step = {}", c.t_max, c.step)))?;
    Ok((series, fb.half_height))
}

/// Windows [l^{1.05}, (l+1)^{1.05}] lying past the self-overlap (0, 2T) and
/// inside [0, t_max].
pub fn window_range(half_height: f64, t_max: f64) -> Option<(u64, u64)> {
    let lo = ((2.0 * half_height).powf(1.0 / 1.05).ceil() as u64).max(2);
    let hi = (t_max.powf(1.0 / 1.05).floor() as u64).saturating_sub(1);
    (hi > lo).then_some((lo, hi))
}

/// The part of `series` on |t| <= t_max.
pub fn truncate(series: &CorrelationSeries, t_max: f64) -> CorrelationSeries {
    let keep: Vec<usize> = (0..series.len()).filter(|&i| series.t[i].abs() <= t_max).collect();
    CorrelationSeries {
        t: keep.iter().map(|&i| series.t[i]).collect(),
        values: keep.iter().map(|&i| series.values[i]).collect(),
        quad_error: keep.iter().map(|&i| series.quad_error[i]).collect(),
        meta: series.meta.clone(),
    }
}

fn stages(cfg: &ExperimentConfig, out: &mut Out, checks: &mut ChecksReport) -> Result<(), CliError> {
    let flow = SpecialFlow::new(cfg.roof_function()?, cfg.rotation()?);
    out.write("config.toml", cfg.to_toml().as_bytes())?;

    let (loc, half) = localized_run(&flow, cfg)?;
    let mut buf = Vec::new();
    loc.series.write_csv(&mut buf).map_err(|e| CliError::io(&out.dir.join("correlation.csv"), e))?;
    out.write("correlation.csv", &buf)?;
    match window_range(half, cfg.correlation.t_max) {
        Some((lo, hi)) => {
            let d = decay_summary(&loc, lo, hi).map_err(|e| CliError::module("correlation", e, format!("windows {lo}..={hi}")))?;
            out.write("windows.csv", windows_csv(&d.windows).as_bytes())?;
            let gs = d.good_slope.unwrap_or(f64::NAN);
            let ls = d.l2_slope.unwrap_or(f64::NAN);
            checks.results.push(CheckResult::report("decay_good_slope", gs <= -0.45, gs, -0.45, format!("{} windows, T = {half:.1}", d.good_windows)));
            checks.results.push(CheckResult::report("decay_l2_slope", ls <= -0.8, ls, -0.8, format!("l in {lo}..={hi}")));
        }
        None => {
            out.write("windows.csv", windows_csv(&[]).as_bytes())?;
            checks.results.push(CheckResult::report("decay_l2_slope", false, f64::NAN, -0.8, "t_max does not reach past 2T"));
        }
    }

    for &q in &cfg.badset.q_targets {
        let margin = margin_for(&flow, cfg, q)?;
        let bad = bad_set_for(&flow, cfg, &margin)?;
        let js = serde_json::to_vec_pretty(&bad).expect("bad set serializes");
        out.write(&format!("badset_q{}.json", margin.scale.q_n), &js)?;
        checks.results.extend(bad_set_checks(&flow, cfg, &margin, &bad)?);
    }

    let s = &cfg.spectrum;
    let sym = symmetrize(&truncate(&loc.series, s.t_max));
    let opts = SpectralOptions { window: cfg.window()?, xi_max: (s.xi_max > 0.0).then_some(s.xi_max), d_xi: None, bias_correct: s.bias_correct };
    let est = periodogram(&sym, &opts).map_err(|e| CliError::module("spectral", e, format!("t_max = {}", s.t_max)))?;
    let mut buf = Vec::new();
    est.write_csv(&mut buf).map_err(|e| CliError::io(&out.dir.join("spectrum.csv"), e))?;
    out.write("spectrum.csv", &buf)?;
    let rel = (est.raw_mass - est.c0).abs() / est.c0.abs().max(f64::MIN_POSITIVE);
    checks.results.push(CheckResult::report("spectral_parseval", rel <= 0.01, rel, 0.01, format!("c0 = {:.6e}", est.c0)));
    checks.results.push(CheckResult::report(
        "spectral_clipped_mass",
        true,
        est.clipped_mass,
        est.c0,
        "negative mass removed by clipping (cross-spectrum of f != g may be signed)",
    ));
    let pts = wiener_average(&loc.series, &s.wiener).map_err(|e| CliError::module("spectral", e, format!("wiener {:?}", s.wiener)))?;
    out.write("wiener.csv", wiener_csv(&pts).as_bytes())?;
    let ws = wiener_summary(&pts);
    let slope = ws.slope.unwrap_or(f64::NAN);
    checks.results.push(CheckResult::report("wiener_slope", ws.decreasing && slope <= -0.3, slope, -0.3, format!("decreasing = {}", ws.decreasing)));
    checks.results.push(CheckResult::report("wiener_no_plateau", !ws.plateau, ws.tail_slope.unwrap_or(f64::NAN), -0.05, "tail slope; plateau needs > -0.05 and mass > 2x noise"));

    let battery = run_checks_without_badsets(cfg)?;
    checks.results.extend(battery.results);
    Ok(())
}

fn run_checks_without_badsets(cfg: &ExperimentConfig) -> Result<ChecksReport, CliError> {
    let mut c = cfg.clone();
    c.badset.q_targets.clear();
    run_checks(&c)
}

/// Runs the pipeline into `cfg.output`. Partial outputs are kept and the
/// manifest is marked FAILED when a stage errors.
pub fn run(cfg: &ExperimentConfig, workers: usize) -> Result<(Manifest, ChecksReport), CliError> {
    cfg.validate()?;
    let start = Instant::now();
    let dir = cfg.output.clone();
    std::fs::create_dir_all(&dir).map_err(|e| CliError::io(&dir, e))?;
    let mut out = Out { dir: dir.clone(), files: Vec::new() };
    let mut checks = ChecksReport::default();
    let res = stages(cfg, &mut out, &mut checks);
    if res.is_ok() {
        let js = serde_json::to_vec_pretty(&checks).expect("checks serialize");
        out.write("checks.json", &js)?;
    }
    let mut versions = BTreeMap::new();
    versions.insert("kochergin-cli".to_string(), env!("CARGO_PKG_VERSION").to_string());
    versions.insert("kochergin-core".to_string(), kochergin_core::VERSION.to_string());
    let manifest = Manifest {
        status: if res.is_ok() { "ok" } else { "FAILED" }.into(),
        error: res.as_ref().err().map(|e| e.to_string()),
        config: cfg.to_toml(),
        versions,
        workers,
        wall_time_s: start.elapsed().as_secs_f64(),
        files: out.files,
        hard_ok: res.is_ok() && checks.hard_ok(),
        all_ok: res.is_ok() && checks.results.iter().all(|r| r.pass),
    };
    let path = dir.join(MANIFEST);
    std::fs::write(&path, serde_json::to_vec_pretty(&manifest).expect("manifest serializes")).map_err(|e| CliError::io(&path, e))?;
    res.map(|_| (manifest, checks))
}
