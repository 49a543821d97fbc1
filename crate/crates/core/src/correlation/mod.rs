//! Correlation functions C_{f,g}(t) = int f(T^t x) g(x) dmu, windowed L^2
//! statistics, and the interval-level estimates.

pub mod estimates;
pub mod localized;

use std::io::{BufRead, Write};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::flow::margin::window;
use crate::flow::{PhasePoint, SpecialFlow};
use crate::numerics::{linear_fit, trapezoid, GaussLegendre, KahanSum};
use crate::observables::{Domain, Observable};

pub use estimates::{delta_piece_check, good_interval_classify, interval_estimate_check, DeltaReport, GoodClass, IntervalReport};
pub use localized::{decay_summary, localized_correlation, DecaySummary, LocalizedOptions, LocalizedSeries};

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct SeriesMeta {
    pub f: String,
    pub g: String,
    pub eta: f64,
    pub alpha: String,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct CorrelationSeries {
    pub t: Vec<f64>,
    pub values: Vec<f64>,
    pub quad_error: Vec<f64>,
    pub meta: SeriesMeta,
}

pub const CSV_HEADER: &str = "t,c_value,quad_error";

impl CorrelationSeries {
    pub fn len(&self) -> usize {
        self.t.len()
    }

    pub fn is_empty(&self) -> bool {
        self.t.is_empty()
    }

    /// CSV with 17 significant digits.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{CSV_HEADER}")?;
        for i in 0..self.t.len() {
            writeln!(w, "{:.16e},{:.16e},{:.16e}", self.t[i], self.values[i], self.quad_error[i])?;
        }
        Ok(())
    }

    pub fn read_csv<R: BufRead>(r: R) -> Result<Self> {
        let mut lines = r.lines();
        let head = lines.next().and_then(|l| l.ok()).unwrap_or_default();
        if head.trim() != CSV_HEADER {
            return Err(Error::Invalid(format!("expected header `{CSV_HEADER}`, got `{head}`")));
        }
        let mut s = CorrelationSeries::default();
        for line in lines {
            let line = line.map_err(|e| Error::Invalid(e.to_string()))?;
            if line.trim().is_empty() {
                continue;
            }
            let v: Vec<f64> = line
                .split(',')
                .map(|x| x.trim().parse::<f64>().map_err(|e| Error::Invalid(format!("{x}: {e}"))))
                .collect::<Result<_>>()?;
            if v.len() != 3 {
                return Err(Error::Invalid(format!("row `{line}` has {} columns", v.len())));
            }
            s.t.push(v[0]);
            s.values.push(v[1]);
            s.quad_error.push(v[2]);
        }
        Ok(s)
    }

    /// Values on [a, b] (inclusive), with linear interpolation at the ends.
    pub(crate) fn restricted(&self, a: f64, b: f64) -> Option<(Vec<f64>, Vec<f64>)> {
        let (t, v) = (&self.t, &self.values);
        if t.is_empty() || t[0] > a || *t.last().unwrap() < b {
            return None;
        }
        let interp = |x: f64| {
            let i = t.partition_point(|&s| s < x).clamp(1, t.len() - 1);
            let (t0, t1) = (t[i - 1], t[i]);
            if t1 == t0 {
                v[i]
            } else {
                v[i - 1] + (v[i] - v[i - 1]) * (x - t0) / (t1 - t0)
            }
        };
        let mut xs = vec![a];
        let mut ys = vec![interp(a)];
        for i in 0..t.len() {
            if t[i] > a && t[i] < b {
                xs.push(t[i]);
                ys.push(v[i]);
            }
        }
        xs.push(b);
        ys.push(interp(b));
        Some((xs, ys))
    }
}

/// Tensor Gauss-Legendre quadrature: panels per direction and nodes per panel.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct QuadSpec {
    pub theta_panels: usize,
    pub s_panels: usize,
    pub order: usize,
    /// cap on integrand evaluations per t (both refinement levels)
    pub budget: usize,
}

impl Default for QuadSpec {
    fn default() -> Self {
        QuadSpec { theta_panels: 16, s_panels: 16, order: 8, budget: 4_000_000 }
    }
}

fn domain_pieces(d: &Domain, g: &dyn Observable) -> (crate::arithmetic::Arc, Vec<(f64, f64)>, Option<f64>) {
    match d {
        Domain::Rect { arc, s_lo, s_hi } => (*arc, vec![(*s_lo, *s_hi)], None),
        Domain::Box { arc, s0, half_height } => {
            let pieces = g.time_support().unwrap_or_else(|| vec![(-half_height, *half_height)]);
            (*arc, pieces, Some(*s0))
        }
    }
}

fn tensor_once(flow: &SpecialFlow, f: &dyn Observable, g: &dyn Observable, t: f64, q: &QuadSpec, refine: usize) -> Result<f64> {
    let rule = GaussLegendre::new(q.order);
    let (arc, pieces, s0) = domain_pieces(&g.domain(), g);
    let len = arc.length();
    let tp = q.theta_panels * refine;
    let sp = q.s_panels * refine;
    let mut total = KahanSum::new();
    for i in 0..tp {
        let (a, b) = (len * i as f64 / tp as f64, len * (i + 1) as f64 / tp as f64);
        for (xn, xw) in rule.nodes.iter().zip(&rule.weights) {
            let off = 0.5 * (a + b) + 0.5 * (b - a) * xn;
            let theta = arc.start.offset(off);
            let wt = 0.5 * (b - a) * xw;
            for &(lo, hi) in &pieces {
                for j in 0..sp {
                    let (c, d) = (lo + (hi - lo) * j as f64 / sp as f64, lo + (hi - lo) * (j + 1) as f64 / sp as f64);
                    for (yn, yw) in rule.nodes.iter().zip(&rule.weights) {
                        let v = 0.5 * (c + d) + 0.5 * (d - c) * yn;
                        let w = wt * 0.5 * (d - c) * yw;
                        let (gv, img) = match s0 {
                            None => {
                                let x = PhasePoint::new(theta, v);
                                (g.value(&x), flow.evolve(x, t)?)
                            }
                            Some(s0) => (g.at_box(theta, v), flow.evolve(PhasePoint::new(theta, s0), t + v)?),
                        };
                        if gv != 0.0 {
                            total.add(w * gv * f.value(&img));
                        }
                    }
                }
            }
        }
    }
    Ok(total.value())
}

/// Tensor-grid quadrature over supp(g), one evolve per node; the error is
/// the change under halving every panel.
pub fn correlate(
    flow: &SpecialFlow,
    f: &dyn Observable,
    g: &dyn Observable,
    t_grid: &[f64],
    q: &QuadSpec,
) -> Result<CorrelationSeries> {
    let (_, pieces, _) = domain_pieces(&g.domain(), g);
    let evals = q.theta_panels * q.s_panels * q.order * q.order * pieces.len() * 5;
    if evals > q.budget {
        return Err(Error::QuadratureBudgetExceeded(format!("{evals} evaluations per t exceed {}", q.budget)));
    }
    let rows: Vec<(f64, f64)> = t_grid
        .par_iter()
        .map(|&t| {
            let coarse = tensor_once(flow, f, g, t, q, 1)?;
            let fine = tensor_once(flow, f, g, t, q, 2)?;
            Ok((fine, (fine - coarse).abs()))
        })
        .collect::<Result<_>>()?;
    Ok(CorrelationSeries {
        t: t_grid.to_vec(),
        values: rows.iter().map(|r| r.0).collect(),
        quad_error: rows.iter().map(|r| r.1).collect(),
        meta: SeriesMeta { f: f.label(), g: g.label(), eta: flow.roof.eta, alpha: flow.rot.source.label() },
    })
}

/// Direct L^2 inner product <f, g> over supp(g).
pub fn inner_product(flow: &SpecialFlow, f: &dyn Observable, g: &dyn Observable, q: &QuadSpec) -> Result<f64> {
    tensor_once(flow, f, g, 0.0, q, 2)
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WindowStat {
    pub l: u64,
    pub t0: f64,
    pub t1: f64,
    pub integral: f64,
}

/// Geometric grid with `per_window` points in each window [l^{21/20}, (l+1)^{21/20}].
pub fn window_grid(l_lo: u64, l_hi: u64, per_window: usize) -> Vec<f64> {
    let mut out = Vec::new();
    for l in l_lo..=l_hi {
        let (a, b) = window(l);
        let r = (b / a).ln();
        for i in 0..per_window {
            out.push(a * (r * i as f64 / per_window as f64).exp());
        }
    }
    if let Some(&last) = out.last() {
        let b = window(l_hi).1;
        if last < b {
            out.push(b);
        }
    }
    out
}

/// Trapezoid integral of |C|^2 over each window.
pub fn window_l2(series: &CorrelationSeries, l_lo: u64, l_hi: u64) -> Result<Vec<WindowStat>> {
    (l_lo..=l_hi)
        .map(|l| {
            let (a, b) = window(l);
            let (xs, ys) = series
                .restricted(a, b)
                .ok_or_else(|| Error::InsufficientCoverage(format!("window {l} = [{a}, {b}] not covered")))?;
            let sq: Vec<f64> = ys.iter().map(|v| v * v).collect();
            Ok(WindowStat { l, t0: a, t1: b, integral: trapezoid(&xs, &sq) })
        })
        .collect()
}

/// Least-squares slope of log(integral) against log(l), skipping empty windows.
pub fn window_slope(stats: &[WindowStat]) -> Option<f64> {
    let (xs, ys): (Vec<f64>, Vec<f64>) =
        stats.iter().filter(|w| w.integral > 0.0).map(|w| ((w.l as f64).ln(), w.integral.ln())).unzip();
    linear_fit(&xs, &ys).map(|(_, b)| b)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::arithmetic::{CirclePoint, RotationNumber};
    use crate::observables::{BumpObservable, TensorBump};
    use crate::roof::RoofFunction;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn synthetic(f: impl Fn(f64) -> f64, t: Vec<f64>) -> CorrelationSeries {
        CorrelationSeries { values: t.iter().map(|&x| f(x)).collect(), quad_error: vec![0.0; t.len()], t, meta: Default::default() }
    }

    fn bump_at(theta: f64, s: f64) -> BumpObservable {
        let roof = RoofFunction::new(0.25).unwrap();
        let b = TensorBump { center: CirclePoint::from_f64(theta), w_theta: 0.04, c_s: s, w_s: 0.08, amplitude: 1.0 };
        BumpObservable::new(&roof, 0.05, b).unwrap()
    }

    fn flow() -> SpecialFlow {
        SpecialFlow::new(RoofFunction::new(0.25).unwrap(), RotationNumber::golden(60))
    }

    #[test]
    fn disjoint_supports_give_zero_at_time_zero() {
        let (f, g) = (bump_at(0.3, 0.15), bump_at(0.6, 0.15));
        let s = correlate(&flow(), &f, &g, &[0.0], &QuadSpec { theta_panels: 4, s_panels: 4, ..Default::default() }).unwrap();
        assert_eq!(s.values[0], 0.0);
    }

    #[test]
    fn autocorrelation_is_even() {
        let fl = flow();
        let f = bump_at(0.3, 0.15);
        let mut rng = ChaCha8Rng::seed_from_u64(41);
        let ts: Vec<f64> = (0..20).map(|_| rng.gen_range(0.1..3.0)).collect();
        let neg: Vec<f64> = ts.iter().map(|t| -t).collect();
        let q = QuadSpec { theta_panels: 8, s_panels: 8, order: 8, ..Default::default() };
        let a = correlate(&fl, &f, &f, &ts, &q).unwrap();
        let b = correlate(&fl, &f, &f, &neg, &q).unwrap();
        for i in 0..ts.len() {
            let tol = 2.0 * (a.quad_error[i] + b.quad_error[i]) + 1e-12;
            assert!((a.values[i] - b.values[i]).abs() <= tol, "t={}: {} vs {}", ts[i], a.values[i], b.values[i]);
        }
        // time zero is the L^2 norm squared: A^2 w_theta w_s (int b^2)^2
        let z = correlate(&fl, &f, &f, &[0.0], &q).unwrap();
        let ib2 = crate::observables::bump_constants().int_b2;
        assert!((z.values[0] - 0.04 * 0.08 * ib2 * ib2).abs() < 1e-10 + z.quad_error[0]);
    }

    #[test]
    fn budget_is_enforced() {
        let f = bump_at(0.3, 0.15);
        let q = QuadSpec { theta_panels: 100, s_panels: 100, order: 10, budget: 1000 };
        assert!(matches!(correlate(&flow(), &f, &f, &[1.0], &q), Err(Error::QuadratureBudgetExceeded(_))));
    }

    #[test]
    fn csv_round_trip_is_exact() {
        let s = synthetic(|t| (t * 0.37).sin() / (1.0 + t), (0..50).map(|i| i as f64 * 0.1 + 1e-3).collect());
        let mut buf = Vec::new();
        s.write_csv(&mut buf).unwrap();
        let text = String::from_utf8(buf.clone()).unwrap();
        assert!(text.starts_with("t,c_value,quad_error\n"));
        let back = CorrelationSeries::read_csv(&buf[..]).unwrap();
        assert_eq!(back.t, s.t);
        assert_eq!(back.values, s.values);
        assert!(CorrelationSeries::read_csv("t,value,err\n1,2,3\n".as_bytes()).is_err());
    }

    #[test]
    fn constant_series_window_integral() {
        let s = synthetic(|_| 0.5, window_grid(10, 30, 64));
        for w in window_l2(&s, 10, 30).unwrap() {
            assert!((w.integral - 0.25 * (w.t1 - w.t0)).abs() < 1e-12);
        }
        assert!(matches!(window_l2(&s, 10, 31), Err(Error::InsufficientCoverage(_))));
    }

    #[test]
    fn power_law_window_slope_matches_closed_form() {
        let (lo, hi) = (20, 400);
        let s = synthetic(|t| t.powf(-0.75), window_grid(lo, hi, 64));
        let stats = window_l2(&s, lo, hi).unwrap();
        // exact window integrals of t^{-3/2}
        let exact: Vec<WindowStat> = stats
            .iter()
            .map(|w| WindowStat { integral: 2.0 * (w.t0.powf(-0.5) - w.t1.powf(-0.5)), ..w.clone() })
            .collect();
        let (a, b) = (window_slope(&stats).unwrap(), window_slope(&exact).unwrap());
        assert!((a - b).abs() < 1e-3, "{a} vs {b}");
        assert!((b + 1.525).abs() < 0.01);
    }
}
