//! Small numerical kernels shared by the other modules: compensated sums,
//! Gauss-Legendre rules, least-squares slopes.

use std::sync::OnceLock;

/// Neumaier variant of Kahan summation.
#[derive(Clone, Copy, Debug, Default)]
pub struct KahanSum {
    sum: f64,
    comp: f64,
}

impl KahanSum {
    pub fn new() -> Self {
        Self::default()
    }

    pub fn add(&mut self, x: f64) {
        let t = self.sum + x;
        if self.sum.abs() >= x.abs() {
            self.comp += (self.sum - t) + x;
        } else {
            self.comp += (x - t) + self.sum;
        }
        self.sum = t;
    }

    pub fn value(&self) -> f64 {
        self.sum + self.comp
    }
}

pub fn kahan_sum<I: IntoIterator<Item = f64>>(it: I) -> f64 {
    let mut k = KahanSum::new();
    for x in it {
        k.add(x);
    }
    k.value()
}

/// Gauss-Legendre nodes and weights on [-1, 1].
#[derive(Clone, Debug)]
pub struct GaussLegendre {
    pub nodes: Vec<f64>,
    pub weights: Vec<f64>,
}

impl GaussLegendre {
    pub fn new(n: usize) -> Self {
        assert!(n >= 1);
        let mut nodes = vec![0.0; n];
        let mut weights = vec![0.0; n];
        let m = (n + 1) / 2;
        for i in 0..m {
            let mut x = (std::f64::consts::PI * (i as f64 + 0.75) / (n as f64 + 0.5)).cos();
            let mut dp = 0.0;
            for _ in 0..100 {
                let (p, d) = legendre(n, x);
                dp = d;
                let dx = p / d;
                x -= dx;
                if dx.abs() < 1e-16 {
                    break;
                }
            }
            let (_, d) = legendre(n, x);
            if d != 0.0 {
                dp = d;
            }
            let w = 2.0 / ((1.0 - x * x) * dp * dp);
            nodes[i] = -x;
            nodes[n - 1 - i] = x;
            weights[i] = w;
            weights[n - 1 - i] = w;
        }
        Self { nodes, weights }
    }

    /// Shared 8-point rule.
    pub fn eight() -> &'static GaussLegendre {
        static R: OnceLock<GaussLegendre> = OnceLock::new();
        R.get_or_init(|| GaussLegendre::new(8))
    }

    pub fn integrate<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, mut f: F) -> f64 {
        let c = 0.5 * (a + b);
        let h = 0.5 * (b - a);
        let mut k = KahanSum::new();
        for (x, w) in self.nodes.iter().zip(&self.weights) {
            k.add(w * f(c + h * x));
        }
        h * k.value()
    }

    /// Composite rule on `panels` equal panels.
    pub fn composite<F: FnMut(f64) -> f64>(&self, a: f64, b: f64, panels: usize, mut f: F) -> f64 {
        let h = (b - a) / panels as f64;
        let mut k = KahanSum::new();
        for i in 0..panels {
            let lo = a + h * i as f64;
            k.add(self.integrate(lo, lo + h, &mut f));
        }
        k.value()
    }
}

fn legendre(n: usize, x: f64) -> (f64, f64) {
    let mut p0 = 1.0;
    let mut p1 = x;
    for k in 2..=n {
        let p2 = ((2 * k - 1) as f64 * x * p1 - (k - 1) as f64 * p0) / k as f64;
        p0 = p1;
        p1 = p2;
    }
    if n == 0 {
        return (1.0, 0.0);
    }
    let d = n as f64 * (x * p1 - p0) / (x * x - 1.0);
    (p1, d)
}

/// Adaptive Gauss-Kronrod-free integrator: recursive bisection comparing a
/// panel against its two halves with the 8-point rule.
pub fn adaptive<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, tol: f64, depth: u32) -> f64 {
    let g = GaussLegendre::eight();
    let whole = g.integrate(a, b, f);
    adaptive_inner(f, a, b, whole, tol, depth)
}

fn adaptive_inner<F: Fn(f64) -> f64>(f: &F, a: f64, b: f64, whole: f64, tol: f64, depth: u32) -> f64 {
    let g = GaussLegendre::eight();
    let m = 0.5 * (a + b);
    let l = g.integrate(a, m, f);
    let r = g.integrate(m, b, f);
    if depth == 0 || (l + r - whole).abs() <= tol {
        return l + r;
    }
    adaptive_inner(f, a, m, l, 0.5 * tol, depth - 1) + adaptive_inner(f, m, b, r, 0.5 * tol, depth - 1)
}

/// Ordinary least-squares fit y = a + b x, returning (a, b).
pub fn linear_fit(xs: &[f64], ys: &[f64]) -> Option<(f64, f64)> {
    let n = xs.len();
    if n < 2 || ys.len() != n {
        return None;
    }
    let mx = kahan_sum(xs.iter().copied()) / n as f64;
    let my = kahan_sum(ys.iter().copied()) / n as f64;
    let mut sxx = KahanSum::new();
    let mut sxy = KahanSum::new();
    for (x, y) in xs.iter().zip(ys) {
        sxx.add((x - mx) * (x - mx));
        sxy.add((x - mx) * (y - my));
    }
    let sxx = sxx.value();
    if sxx <= 0.0 {
        return None;
    }
    let b = sxy.value() / sxx;
    Some((my - b * mx, b))
}

/// Trapezoid rule on a (possibly non-uniform) grid.
pub fn trapezoid(xs: &[f64], ys: &[f64]) -> f64 {
    let mut k = KahanSum::new();
    for i in 1..xs.len() {
        k.add(0.5 * (xs[i] - xs[i - 1]) * (ys[i] + ys[i - 1]));
    }
    k.value()
}
