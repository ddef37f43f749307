//! Brute-force reference for the grid likelihood.
//!
//! [`convolution_cell_prob`] is the probability that the binned tumour and
//! background draws land in cells whose indices add up to the top-right
//! cell, the quantity the grid sum approximates. Each cell probability is a
//! 2-D adaptive quadrature of the normal density in log space, over the box
//! outside which each marginal has less than `1e-8` mass.
//!
//! [`exact_cell_prob`] is the plain probability that `Y` falls in the
//! top-right cell. It differs from the binned probability by `O(1/m)` and is
//! kept to quantify that difference.

use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::data::PairedObservation;
use crate::error::{invalid, Error, Result};
use crate::grid::{build_grid, loglik_floor, Grid, LIK_FLOOR};
use crate::model::{biv_lognormal_cdf, ComponentParams, FeatureTheta, TumourFractions};
use crate::quadrature::{integrate, integrate_2d, QuadOptions};
use crate::rng::indexed_substream;
use crate::simulator::{draw_lognormal_pair, sample_truth, ParametricProfile, SimConfig};

/// Standard-normal quantile at `1e-8`, the half-width of the truncation box in sds.
pub const TRUNCATION_Z: f64 = 5.612;
/// Largest accepted relative error bound.
pub const ORACLE_REL_TOL: f64 = 1e-4;
/// Weights below this are treated as a point mass at zero.
pub const ORACLE_PI_EPS: f64 = 1e-6;

const CELL_OPTS: QuadOptions = QuadOptions {
    abs_tol: 1e-300,
    rel_tol: 1e-9,
    max_intervals: 400,
};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OracleValue {
    pub prob: f64,
    /// Bound on the absolute quadrature error of `prob`.
    pub error_bound: f64,
}

/// Density of `N(mu, Sigma)` at `(u0, u1)`, written out directly.
fn normal_density(q: &ComponentParams, u0: f64, u1: f64) -> f64 {
    let (s0, s1) = (q.tau0.sqrt(), q.tau1.sqrt());
    let z0 = (u0 - q.mu0) / s0;
    let z1 = (u1 - q.mu1) / s1;
    let omr2 = 1.0 - q.rho * q.rho;
    let quad = (z0 * z0 - 2.0 * q.rho * z0 * z1 + z1 * z1) / omr2;
    (-0.5 * quad).exp() / (2.0 * std::f64::consts::PI * s0 * s1 * omr2.sqrt())
}

fn univariate_density(mu: f64, sd: f64, u: f64) -> f64 {
    let z = (u - mu) / sd;
    (-0.5 * z * z).exp() / (sd * (2.0 * std::f64::consts::PI).sqrt())
}

/// Log-space interval of a linear-scale cell, clipped to the truncation box.
fn log_interval(lo: f64, hi: f64, mu: f64, sd: f64) -> Option<(f64, f64)> {
    let a = if lo > 0.0 { lo.ln() } else { f64::NEG_INFINITY };
    let b = hi.ln();
    let a = a.max(mu - TRUNCATION_Z * sd);
    let b = b.min(mu + TRUNCATION_Z * sd);
    (a < b).then_some((a, b))
}

/// Cell probabilities of one weighted component: `(value, error)` per cell, row-major.
fn cell_probs(p: &ComponentParams, w0: f64, w1: f64, g: &Grid) -> Vec<(f64, f64)> {
    let m = g.bins();
    let mut out = vec![(0.0, 0.0); m * m];
    let deg0 = w0 < ORACLE_PI_EPS;
    let deg1 = w1 < ORACLE_PI_EPS;
    let marginal = |mu: f64, tau: f64, lo: f64, hi: f64| {
        let sd = tau.sqrt();
        match log_interval(lo, hi, mu, sd) {
            Some((a, b)) => {
                let r = integrate(|u| univariate_density(mu, sd, u), a, b, &CELL_OPTS);
                (r.value, r.error)
            }
            None => (0.0, 0.0),
        }
    };
    match (deg0, deg1) {
        (true, true) => out[0] = (1.0, 0.0),
        (false, true) => {
            for r in 0..m {
                out[r * m] = marginal(p.mu0 + w0.ln(), p.tau0, g.lower0(r), g.upper0(r));
            }
        }
        (true, false) => {
            for s in 0..m {
                out[s] = marginal(p.mu1 + w1.ln(), p.tau1, g.lower1(s), g.upper1(s));
            }
        }
        (false, false) => {
            let q = ComponentParams {
                mu0: p.mu0 + w0.ln(),
                mu1: p.mu1 + w1.ln(),
                ..*p
            };
            let (sd0, sd1) = (q.tau0.sqrt(), q.tau1.sqrt());
            for r in 0..m {
                let Some(i0) = log_interval(g.lower0(r), g.upper0(r), q.mu0, sd0) else {
                    continue;
                };
                for s in 0..m {
                    let Some(i1) = log_interval(g.lower1(s), g.upper1(s), q.mu1, sd1) else {
                        continue;
                    };
                    let res = integrate_2d(|u0, u1| normal_density(&q, u0, u1), i0, i1, &CELL_OPTS);
                    out[r * m + s] = (res.value, res.error);
                }
            }
        }
    }
    out
}

fn check_inputs(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta) -> Result<()> {
    if !(0.0..=1.0).contains(&pi.pi0) || !(0.0..=1.0).contains(&pi.pi1) {
        return invalid(format!("mixing weights must lie in [0, 1], got {pi:?}"));
    }
    theta.tumour.validate()?;
    theta.background.validate()?;
    build_grid(obs, 2).map(|_| ())
}

/// Probability that the binned tumour and background draws land in cells
/// adding up to the top-right cell of the `m x m` grid.
pub fn convolution_cell_prob(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta, m: usize) -> Result<OracleValue> {
    check_inputs(obs, pi, theta)?;
    let g = build_grid(obs, m)?;
    let t = cell_probs(&theta.tumour, pi.pi0, pi.pi1, &g);
    let b = cell_probs(&theta.background, 1.0 - pi.pi0, 1.0 - pi.pi1, &g);
    let n = m * m;
    let (mut prob, mut err) = (0.0, 0.0);
    for k in 0..n {
        let (tv, te) = t[k];
        let (bv, be) = b[n - 1 - k];
        prob += tv * bv;
        err += te * bv + tv * be + te * be;
    }
    let prob = prob.min(1.0);
    if !(err <= ORACLE_REL_TOL * prob) {
        return Err(Error::QuadratureNonConvergence {
            estimate: prob,
            error_bound: err,
        });
    }
    Ok(OracleValue { prob, error_bound: err })
}

/// Log of [`convolution_cell_prob`], floored like the grid likelihood.
pub fn oracle_pair_loglik(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta, m: usize) -> Result<f64> {
    let v = convolution_cell_prob(obs, pi, theta, m)?;
    Ok(if v.prob > LIK_FLOOR { v.prob.ln() } else { loglik_floor() })
}

/// Probability that `Y` itself falls in the top-right cell
/// `[y0 - S0, y0] x [y1 - S1, y1]`, integrating the tumour density against
/// the background rectangle probability. Both weights must be non-degenerate.
pub fn exact_cell_prob(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta, m: usize) -> Result<OracleValue> {
    check_inputs(obs, pi, theta)?;
    let g = build_grid(obs, m)?;
    let ws = [pi.pi0, pi.pi1, 1.0 - pi.pi0, 1.0 - pi.pi1];
    if ws.iter().any(|&w| w < ORACLE_PI_EPS) {
        return invalid("exact_cell_prob needs non-degenerate weights");
    }
    let qt = ComponentParams {
        mu0: theta.tumour.mu0 + pi.pi0.ln(),
        mu1: theta.tumour.mu1 + pi.pi1.ln(),
        ..theta.tumour
    };
    let qb = ComponentParams {
        mu0: theta.background.mu0 + (1.0 - pi.pi0).ln(),
        mu1: theta.background.mu1 + (1.0 - pi.pi1).ln(),
        ..theta.background
    };
    let (y0, y1) = (obs.y0, obs.y1);
    let (s0, s1) = (g.width0(), g.width1());
    let (Some(i0), Some(i1)) = (
        log_interval(0.0, y0, qt.mu0, qt.tau0.sqrt()),
        log_interval(0.0, y1, qt.mu1, qt.tau1.sqrt()),
    ) else {
        return Ok(OracleValue { prob: 0.0, error_bound: 0.0 });
    };
    let b_cdf = |x0: f64, x1: f64| {
        if x0 <= 0.0 || x1 <= 0.0 {
            0.0
        } else {
            biv_lognormal_cdf(x0, x1, &qb).unwrap_or(f64::NAN)
        }
    };
    let res = integrate_2d(
        |u0, u1| {
            let (t0, t1) = (u0.exp(), u1.exp());
            let (h0, h1) = (y0 - t0, y1 - t1);
            let rect = b_cdf(h0, h1) - b_cdf(h0 - s0, h1) - b_cdf(h0, h1 - s1) + b_cdf(h0 - s0, h1 - s1);
            normal_density(&qt, u0, u1) * rect.max(0.0)
        },
        i0,
        i1,
        &QuadOptions {
            abs_tol: 1e-300,
            rel_tol: 1e-7,
            max_intervals: 400,
        },
    );
    if !(res.error <= ORACLE_REL_TOL * res.value) {
        return Err(Error::QuadratureNonConvergence {
            estimate: res.value,
            error_bound: res.error,
        });
    }
    Ok(OracleValue {
        prob: res.value,
        error_bound: res.error,
    })
}

/// Monte Carlo estimate of [`convolution_cell_prob`] and its standard error.
pub fn monte_carlo_cell_prob<R: Rng>(
    obs: &PairedObservation,
    pi: &TumourFractions,
    theta: &FeatureTheta,
    m: usize,
    draws: usize,
    rng: &mut R,
) -> Result<(f64, f64)> {
    check_inputs(obs, pi, theta)?;
    let g = build_grid(obs, m)?;
    let bin = |x: f64, width: f64| (x / width).floor() as usize;
    let (s0, s1) = (g.width0(), g.width1());
    let mut hits = 0usize;
    for _ in 0..draws {
        let (t0, t1) = draw_lognormal_pair(rng, &theta.tumour);
        let (b0, b1) = draw_lognormal_pair(rng, &theta.background);
        let bt = (bin(pi.pi0 * t0, s0), bin(pi.pi1 * t1, s1));
        let bb = (bin((1.0 - pi.pi0) * b0, s0), bin((1.0 - pi.pi1) * b1, s1));
        if bt.0 + bb.0 == m - 1 && bt.1 + bb.1 == m - 1 {
            hits += 1;
        }
    }
    let p = hits as f64 / draws as f64;
    Ok((p, (p * (1.0 - p) / draws as f64).sqrt()))
}

/// One configuration of the standard comparison battery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BatteryCase {
    pub obs: PairedObservation,
    pub pi: TumourFractions,
    pub theta: FeatureTheta,
}

/// Post-treatment fractions cycled through by the battery.
pub const BATTERY_PI1: [f64; 4] = [1e-4, 1e-2, 0.1, 0.3];

/// Parameter profile of the battery. Log-variances stay in [0.1, 0.5]; wider
/// tumour variances need finer grids for the same accuracy.
pub const BATTERY_PROFILE: ParametricProfile = ParametricProfile {
    background_mean: (1.5, 0.4),
    tumour_mean: (3.3, 0.5),
    min_gap: 0.5,
    background_var: (0.1, 0.5),
    tumour_var: (0.1, 0.5),
    background_drift_sd: 0.1,
};

/// The standard random battery: parameters from [`BATTERY_PROFILE`], `pi1` cycling through [`BATTERY_PI1`], `pi0 = min(0.95, pi1 + U(0.05, 0.3))`,
/// and an observation drawn from the model.
pub fn standard_battery(seed: u64, n: usize) -> Result<Vec<BatteryCase>> {
    let sim = SimConfig {
        n_patients: 1,
        n_features: n.max(1),
        seed,
        profile: BATTERY_PROFILE,
        ..SimConfig::default()
    };
    let truth = sample_truth(&sim, None)?;
    (0..n)
        .map(|k| {
            let mut rng = indexed_substream(seed, "battery", k as u64);
            let pi1 = BATTERY_PI1[k % BATTERY_PI1.len()];
            let pi0 = (pi1 + 0.05 + 0.25 * rng.random::<f64>()).min(0.95);
            let pi = TumourFractions::new(pi0, pi1)?;
            let theta = truth.theta[k];
            let (t0, t1) = draw_lognormal_pair(&mut rng, &theta.tumour);
            let (b0, b1) = draw_lognormal_pair(&mut rng, &theta.background);
            let obs = PairedObservation::new(pi0 * t0 + (1.0 - pi0) * b0, pi1 * t1 + (1.0 - pi1) * b1)?;
            Ok(BatteryCase { obs, pi, theta })
        })
        .collect()
}
