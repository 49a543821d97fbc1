//! Spectral estimates from correlation series: windowed cosine transforms
//! normalized so the density integrates to C(0), and Wiener averages
//! (1/2T) int_{-T}^{T} |C|^2 whose limit is the sum of squared atom masses.

use std::io::Write;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::correlation::CorrelationSeries;
use crate::error::{Error, Result};
use crate::numerics::{linear_fit, trapezoid, KahanSum};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
pub enum Window {
    Rectangular,
    Bartlett,
    Hann,
}

impl Window {
    /// Taper at u = t/T in [-1, 1]; equals 1 at u = 0.
    pub fn weight(self, u: f64) -> f64 {
        let u = u.abs();
        if u > 1.0 {
            return 0.0;
        }
        match self {
            Window::Rectangular => 1.0,
            Window::Bartlett => 1.0 - u,
            Window::Hann => 0.5 * (1.0 + (std::f64::consts::PI * u).cos()),
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralOptions {
    pub window: Window,
    /// default: Nyquist frequency of the coarsest sampling step
    pub xi_max: Option<f64>,
    /// default: 1/(4T)
    pub d_xi: Option<f64>,
    /// undo the leading Hann smoothing bias (ignored for other windows)
    pub bias_correct: bool,
}

impl Default for SpectralOptions {
    fn default() -> Self {
        SpectralOptions { window: Window::Hann, xi_max: None, d_xi: None, bias_correct: true }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct SpectralEstimate {
    pub frequency: Vec<f64>,
    pub density: Vec<f64>,
    /// density before clipping; linear in C, so atom masses are read here
    pub signed_density: Vec<f64>,
    pub window: Window,
    pub half_width: f64,
    pub c0: f64,
    /// integral of the density before clipping
    pub raw_mass: f64,
    /// integral of the negative part removed by clipping
    pub clipped_mass: f64,
    pub bias_corrected: bool,
}

pub const SPECTRUM_CSV_HEADER: &str = "frequency,density";

impl SpectralEstimate {
    pub fn mass(&self) -> f64 {
        trapezoid(&self.frequency, &self.density)
    }

    /// Mass of the signed density over [a, b].
    pub fn mass_between(&self, a: f64, b: f64) -> f64 {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            self.frequency.iter().zip(&self.signed_density).filter(|(x, _)| **x >= a && **x <= b).map(|(x, y)| (*x, *y)).unzip();
        trapezoid(&xs, &ys)
    }

    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        writeln!(w, "{SPECTRUM_CSV_HEADER}")?;
        for (x, y) in self.frequency.iter().zip(&self.density) {
            writeln!(w, "{x:.16e},{y:.16e}")?;
        }
        Ok(())
    }
}

/// Mirrors a series given on t >= 0 to [-T, T] using C(-t) = C(t).
pub fn symmetrize(series: &CorrelationSeries) -> CorrelationSeries {
    let mut out = CorrelationSeries { meta: series.meta.clone(), ..Default::default() };
    for i in (0..series.len()).rev() {
        if series.t[i] > 0.0 {
            out.t.push(-series.t[i]);
            out.values.push(series.values[i]);
            out.quad_error.push(series.quad_error[i]);
        }
    }
    for i in 0..series.len() {
        if series.t[i] >= 0.0 {
            out.t.push(series.t[i]);
            out.values.push(series.values[i]);
            out.quad_error.push(series.quad_error[i]);
        }
    }
    out
}

fn check_symmetric(t: &[f64]) -> Result<f64> {
    let n = t.len();
    if n < 3 {
        return Err(Error::AsymmetricGrid(format!("{n} points")));
    }
    let half = t[n - 1];
    for i in 0..n {
        let tol = 1e-9 * half.abs().max(1.0);
        if (t[i] + t[n - 1 - i]).abs() > tol {
            return Err(Error::AsymmetricGrid(format!("t[{i}] = {} but t[{}] = {}", t[i], n - 1 - i, t[n - 1 - i])));
        }
        if i > 0 && t[i] <= t[i - 1] {
            return Err(Error::AsymmetricGrid(format!("grid not increasing at {i}")));
        }
    }
    Ok(half)
}

/// Windowed cosine transform of C on its symmetric grid [-T, T]:
/// density(xi) = int w(t/T) C(t) cos(2 pi xi t) dt by the trapezoid rule.
/// Negative values left by the window are clipped and their mass reported.
pub fn periodogram(series: &CorrelationSeries, opts: &SpectralOptions) -> Result<SpectralEstimate> {
    let t = &series.t;
    let half = check_symmetric(t)?;
    let n = t.len();
    let c0 = {
        let i = t.partition_point(|&s| s < 0.0);
        if i < n && t[i].abs() < 1e-12 * half.max(1.0) {
            series.values[i]
        } else {
            return Err(Error::AsymmetricGrid("grid must contain t = 0".into()));
        }
    };
    let mut a = vec![0.0; n];
    for i in 0..n {
        let left = if i > 0 { t[i] - t[i - 1] } else { 0.0 };
        let right = if i + 1 < n { t[i + 1] - t[i] } else { 0.0 };
        a[i] = 0.5 * (left + right) * opts.window.weight(t[i] / half) * series.values[i];
    }
    let dt_max = t.windows(2).map(|w| w[1] - w[0]).fold(0.0, f64::max);
    let xi_max = opts.xi_max.unwrap_or(0.5 / dt_max);
    let d_xi = opts.d_xi.unwrap_or(0.25 / half);
    let m = (xi_max / d_xi).round() as i64;
    let freqs: Vec<f64> = (-m..=m).map(|j| j as f64 * d_xi).collect();
    let transform = |xi: f64| {
        let mut k = KahanSum::new();
        for i in 0..n {
            k.add(a[i] * (2.0 * std::f64::consts::PI * xi * t[i]).cos());
        }
        k.value()
    };
    let correct = opts.bias_correct && opts.window == Window::Hann;
    let delta = 0.5 / half;
    let raw: Vec<f64> = freqs
        .par_iter()
        .map(|&xi| {
            let w = transform(xi);
            if correct {
                // Hann multiplies by 1/2 + cos(pi t/T)/2, i.e. averages the
                // truncated density with its shifts by +-1/(2T); removing the
                // second difference cancels the leading smoothing bias
                w - 0.25 * (transform(xi + delta) - 2.0 * w + transform(xi - delta))
            } else {
                w
            }
        })
        .collect();
    let raw_mass = trapezoid(&freqs, &raw);
    let neg: Vec<f64> = raw.iter().map(|&x| x.min(0.0)).collect();
    let clipped_mass = -trapezoid(&freqs, &neg);
    Ok(SpectralEstimate {
        frequency: freqs,
        density: raw.iter().map(|&x| x.max(0.0)).collect(),
        signed_density: raw,
        window: opts.window,
        half_width: half,
        c0,
        raw_mass,
        clipped_mass,
        bias_corrected: correct,
    })
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerPoint {
    pub t: f64,
    pub average: f64,
    /// bound on the average's error from the series' quadrature errors
    pub noise: f64,
}

/// (1/2T) int_{-T}^{T} |C|^2 for each T. A series that starts at t = 0 is
/// taken as even, so the average becomes (1/T) int_0^T |C|^2.
pub fn wiener_average(series: &CorrelationSeries, t_list: &[f64]) -> Result<Vec<WienerPoint>> {
    let sq = CorrelationSeries {
        t: series.t.clone(),
        values: series.values.iter().map(|v| v * v).collect(),
        quad_error: vec![0.0; series.len()],
        meta: series.meta.clone(),
    };
    let noise_series = CorrelationSeries {
        t: series.t.clone(),
        values: series.values.iter().zip(&series.quad_error).map(|(v, e)| 2.0 * v.abs() * e + e * e).collect(),
        quad_error: vec![0.0; series.len()],
        meta: series.meta.clone(),
    };
    let one_sided = series.t.first().is_some_and(|&t0| t0 >= 0.0);
    t_list
        .iter()
        .map(|&big_t| {
            if big_t <= 0.0 {
                return Err(Error::OutOfRange { what: "Wiener half-width must be positive", value: big_t });
            }
            let lo = if one_sided { 0.0 } else { -big_t };
            let span = big_t - lo;
            let avg = |s: &CorrelationSeries| {
                s.restricted(lo, big_t)
                    .map(|(x, y)| trapezoid(&x, &y) / span)
                    .ok_or_else(|| Error::InsufficientCoverage(format!("series does not cover [{lo}, {big_t}]")))
            };
            Ok(WienerPoint { t: big_t, average: avg(&sq)?, noise: avg(&noise_series)? })
        })
        .collect()
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct WienerSummary {
    pub points: Vec<WienerPoint>,
    /// log-log slope over all points
    pub slope: Option<f64>,
    /// log-log slope over the second half of the points
    pub tail_slope: Option<f64>,
    /// every average is below the previous one
    pub decreasing: bool,
    /// the tail is flat (slope > -0.05) while the last average exceeds
    /// twice its noise: the signature of an atom
    pub plateau: bool,
}

pub fn wiener_summary(points: &[WienerPoint]) -> WienerSummary {
    let fit = |pts: &[WienerPoint]| {
        let (xs, ys): (Vec<f64>, Vec<f64>) =
            pts.iter().filter(|p| p.average > 0.0).map(|p| (p.t.ln(), p.average.ln())).unzip();
        linear_fit(&xs, &ys).map(|(_, b)| b)
    };
    let slope = fit(points);
    let tail_slope = fit(&points[points.len() / 2..]);
    let decreasing = points.windows(2).all(|w| w[1].average < w[0].average);
    let plateau = match (tail_slope, points.last()) {
        (Some(s), Some(p)) => s > -0.05 && p.average > 2.0 * p.noise,
        _ => false,
    };
    WienerSummary { points: points.to_vec(), slope, tail_slope, decreasing, plateau }
}
