//! Globally adaptive Gauss-Kronrod (7/15) quadrature in one and two dimensions.

use std::cmp::Ordering;
use std::collections::BinaryHeap;

const XGK: [f64; 8] = [
    0.991_455_371_120_812_6,
    0.949_107_912_342_758_5,
    0.864_864_423_359_769_1,
    0.741_531_185_599_394_4,
    0.586_087_235_467_691_1,
    0.405_845_151_377_397_2,
    0.207_784_955_007_898_5,
    0.0,
];
const WGK: [f64; 8] = [
    0.022_935_322_010_529_22,
    0.063_092_092_629_978_55,
    0.104_790_010_322_250_18,
    0.140_653_259_715_525_92,
    0.169_004_726_639_267_9,
    0.190_350_578_064_785_4,
    0.204_432_940_075_298_9,
    0.209_482_141_084_727_83,
];
// Gauss weights for the nodes XGK[1], XGK[3], XGK[5], XGK[7].
const WG: [f64; 4] = [
    0.129_484_966_168_869_7,
    0.279_705_391_489_276_7,
    0.381_830_050_505_118_9,
    0.417_959_183_673_469_4,
];

/// Tolerances and limits for adaptive integration.
#[derive(Debug, Clone, Copy)]
pub struct QuadOptions {
    pub abs_tol: f64,
    pub rel_tol: f64,
    pub max_intervals: usize,
}

impl Default for QuadOptions {
    fn default() -> Self {
        Self {
            abs_tol: 1e-14,
            rel_tol: 1e-8,
            max_intervals: 2000,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct QuadResult {
    pub value: f64,
    /// Estimated absolute error.
    pub error: f64,
    pub converged: bool,
    pub evaluations: usize,
}

struct Segment {
    a: f64,
    b: f64,
    value: f64,
    error: f64,
}

impl PartialEq for Segment {
    fn eq(&self, other: &Self) -> bool {
        self.error == other.error
    }
}
impl Eq for Segment {}
impl PartialOrd for Segment {
    fn partial_cmp(&self, other: &Self) -> Option<Ordering> {
        Some(self.cmp(other))
    }
}
impl Ord for Segment {
    fn cmp(&self, other: &Self) -> Ordering {
        self.error.total_cmp(&other.error)
    }
}

fn gk15<F: FnMut(f64) -> f64>(f: &mut F, a: f64, b: f64) -> (f64, f64) {
    let c = 0.5 * (a + b);
    let h = 0.5 * (b - a);
    let fc = f(c);
    let mut kronrod = WGK[7] * fc;
    let mut gauss = WG[3] * fc;
    for i in 0..7 {
        let dx = h * XGK[i];
        let s = f(c - dx) + f(c + dx);
        kronrod += WGK[i] * s;
        if i % 2 == 1 {
            gauss += WG[i / 2] * s;
        }
    }
    (kronrod * h, ((kronrod - gauss) * h).abs())
}

/// Integrate `f` over `[a, b]`.
pub fn integrate<F: FnMut(f64) -> f64>(mut f: F, a: f64, b: f64, opts: &QuadOptions) -> QuadResult {
    if a == b {
        return QuadResult { value: 0.0, error: 0.0, converged: true, evaluations: 0 };
    }
    let (value, error) = gk15(&mut f, a, b);
    let mut evaluations = 15;
    let mut heap = BinaryHeap::new();
    heap.push(Segment { a, b, value, error });
    let mut total = value;
    let mut total_err = error;

    loop {
        let target = opts.abs_tol.max(opts.rel_tol * total.abs());
        if total_err <= target {
            return QuadResult { value: total, error: total_err, converged: true, evaluations };
        }
        if heap.len() >= opts.max_intervals {
            return QuadResult { value: total, error: total_err, converged: false, evaluations };
        }
        let worst = heap.pop().expect("heap is never empty");
        let mid = 0.5 * (worst.a + worst.b);
        if mid <= worst.a || mid >= worst.b {
            // Interval cannot be split further in floating point.
            heap.push(worst);
            return QuadResult { value: total, error: total_err, converged: false, evaluations };
        }
        let (v1, e1) = gk15(&mut f, worst.a, mid);
        let (v2, e2) = gk15(&mut f, mid, worst.b);
        evaluations += 30;
        total += v1 + v2 - worst.value;
        total_err += e1 + e2 - worst.error;
        heap.push(Segment { a: worst.a, b: mid, value: v1, error: e1 });
        heap.push(Segment { a: mid, b: worst.b, value: v2, error: e2 });
        // Re-sum periodically so cancellation in the running totals cannot drift.
        if heap.len() % 64 == 0 {
            total = heap.iter().map(|s| s.value).sum();
            total_err = heap.iter().map(|s| s.error).sum();
        }
    }
}

/// Integrate `f(x, y)` over the rectangle `[x0, x1] x [y0, y1]` by nesting
/// one-dimensional adaptive rules. The inner integrals run at a tenth of the
/// outer tolerance and their error estimates are folded into the result.
pub fn integrate_2d<F: FnMut(f64, f64) -> f64>(
    mut f: F,
    (x0, x1): (f64, f64),
    (y0, y1): (f64, f64),
    opts: &QuadOptions,
) -> QuadResult {
    let inner_opts = QuadOptions {
        abs_tol: opts.abs_tol / 10.0,
        rel_tol: opts.rel_tol / 10.0,
        max_intervals: opts.max_intervals,
    };
    let mut inner_err = 0.0f64;
    let mut inner_ok = true;
    let mut evaluations = 0;
    let outer = integrate(
        |x| {
            let r = integrate(|y| f(x, y), y0, y1, &inner_opts);
            inner_err = inner_err.max(r.error);
            inner_ok &= r.converged;
            evaluations += r.evaluations;
            r.value
        },
        x0,
        x1,
        opts,
    );
    QuadResult {
        value: outer.value,
        error: outer.error + inner_err * (x1 - x0).abs(),
        converged: outer.converged && inner_ok,
        evaluations,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn polynomial_exact() {
        let r = integrate(|x| 3.0 * x * x - x + 1.0, -1.0, 2.0, &QuadOptions::default());
        assert!((r.value - (8.0 + 1.0 - 1.5 + 3.0)).abs() < 1e-13);
        assert!(r.converged);
    }

    #[test]
    fn peaked_integrand() {
        // Narrow Gaussian bump: integral of exp(-x^2 / (2 s^2)) over R is s sqrt(2 pi).
        let s = 0.02;
        let r = integrate(|x| (-x * x / (2.0 * s * s)).exp(), -1.0, 1.5, &QuadOptions::default());
        let want = s * (2.0 * std::f64::consts::PI).sqrt();
        assert!((r.value - want).abs() < 1e-9 * want, "{} vs {want}", r.value);
    }

    #[test]
    fn two_dimensional_separable() {
        let r = integrate_2d(
            |x, y| x.exp() * y.cos(),
            (0.0, 1.0),
            (0.0, std::f64::consts::FRAC_PI_2),
            &QuadOptions::default(),
        );
        assert!((r.value - (std::f64::consts::E - 1.0)).abs() < 1e-12);
    }

    #[test]
    fn reports_non_convergence() {
        let opts = QuadOptions { abs_tol: 0.0, rel_tol: 1e-15, max_intervals: 3 };
        let r = integrate(|x: f64| x.abs().sqrt(), -1.0, 1.0, &opts);
        assert!(!r.converged);
    }
}
