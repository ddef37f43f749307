//! Bounded derivative-free scalar maximisation (Brent's method).

/// Result of a bounded scalar search.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct ScalarOptimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Maximise `f` on `[lo, hi]` with Brent's golden-section/parabolic method.
///
/// NaN objective values are treated as `-inf`. The endpoints themselves are
/// never evaluated.
pub fn maximize_bounded<F: FnMut(f64) -> f64>(mut f: F, lo: f64, hi: f64, xtol: f64, max_evals: usize) -> ScalarOptimum {
    assert!(lo <= hi, "empty bracket [{lo}, {hi}]");
    let mut g = |x: f64| {
        let v = f(x);
        if v.is_nan() {
            f64::INFINITY
        } else {
            -v
        }
    };
    let sqrt_eps = f64::EPSILON.sqrt();
    let golden = 0.5 * (3.0 - 5f64.sqrt());
    let (mut a, mut b) = (lo, hi);
    let mut v = a + golden * (b - a);
    let mut w = v;
    let mut x = v;
    let mut fx = g(x);
    let (mut fv, mut fw) = (fx, fx);
    let mut evals = 1;
    let (mut d, mut e) = (0.0f64, 0.0f64);
    let mut xm = 0.5 * (a + b);
    let mut tol1 = sqrt_eps * x.abs() + xtol / 3.0;
    let mut tol2 = 2.0 * tol1;

    while (x - xm).abs() > tol2 - 0.5 * (b - a) && evals < max_evals {
        let mut use_golden = true;
        if e.abs() > tol1 {
            use_golden = false;
            let mut r = (x - w) * (fx - fv);
            let mut q = (x - v) * (fx - fw);
            let mut p = (x - v) * q - (x - w) * r;
            q = 2.0 * (q - r);
            if q > 0.0 {
                p = -p;
            }
            q = q.abs();
            r = e;
            e = d;
            if p.abs() < (0.5 * q * r).abs() && p > q * (a - x) && p < q * (b - x) {
                d = p / q;
                let u = x + d;
                if u - a < tol2 || b - u < tol2 {
                    d = if xm >= x { tol1 } else { -tol1 };
                }
            } else {
                use_golden = true;
            }
        }
        if use_golden {
            e = if x >= xm { a - x } else { b - x };
            d = golden * e;
        }
        let step = if d >= 0.0 { d.abs().max(tol1) } else { -d.abs().max(tol1) };
        let u = x + step;
        let fu = g(u);
        evals += 1;
        if fu <= fx {
            if u >= x {
                a = x;
            } else {
                b = x;
            }
            v = w;
            fv = fw;
            w = x;
            fw = fx;
            x = u;
            fx = fu;
        } else {
            if u < x {
                a = u;
            } else {
                b = u;
            }
            if fu <= fw || w == x {
                v = w;
                fv = fw;
                w = u;
                fw = fu;
            } else if fu <= fv || v == x || v == w {
                v = u;
                fv = fu;
            }
        }
        xm = 0.5 * (a + b);
        tol1 = sqrt_eps * x.abs() + xtol / 3.0;
        tol2 = 2.0 * tol1;
    }
    ScalarOptimum { x, value: -fx, evaluations: evals }
}

/// One coordinate update for ascent: search `[lo, hi]` and move away from
/// `current` only if the objective strictly improves on `current_value`.
/// With `check_bounds` the two endpoints are evaluated as candidates too, so
/// that solutions on the boundary (e.g. a fraction of exactly zero) are
/// reachable.
pub fn improve_coordinate<F: FnMut(f64) -> f64>(
    mut f: F,
    current: f64,
    current_value: f64,
    (lo, hi): (f64, f64),
    xtol: f64,
    check_bounds: bool,
) -> ScalarOptimum {
    let mut best = ScalarOptimum { x: current, value: current_value, evaluations: 0 };
    if !(lo < hi) {
        return best;
    }
    let found = maximize_bounded(&mut f, lo, hi, xtol, 200);
    let mut evaluations = found.evaluations;
    if found.value > best.value {
        best = ScalarOptimum { evaluations: 0, ..found };
    }
    if check_bounds {
        for edge in [lo, hi] {
            if edge == current {
                continue;
            }
            let v = f(edge);
            evaluations += 1;
            if v > best.value {
                best = ScalarOptimum { x: edge, value: v, evaluations: 0 };
            }
        }
    }
    best.evaluations = evaluations;
    best
}
