//! Discrete approximation of the convolution likelihood.
//!
//! For one observation pair `(y0, y1)` both axes are split into `m` equal
//! intervals from zero to the observed value. The probability that the
//! observation falls into the top-right cell is approximated by
//!
//! ```text
//! sum_{r,s} P(T~ in C0_r x C1_s) * P(B~ in C0_{m-1-r} x C1_{m-1-s})
//! ```
//!
//! (0-based cells), where `T~ = pi T` and `B~ = (1 - pi) B` are the weighted
//! tumour and background components. Cell masses are probabilities, not
//! densities: the Jacobian `S0 * S1` depends only on the data, so it does not
//! move the maximiser.
//!
//! Cell masses use the midpoint rule, except for edge cells: when a weighted
//! component's log-mean lies below the log of the first midpoint on an axis,
//! the first row (axis 0) or first column (axis 1) of that component's grid
//! is evaluated exactly from CDF differences. The same criterion is applied
//! to the background component on its own grid.

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairedObservation};
use crate::error::{invalid, Error, Result};
use crate::model::{lognormal_cdf, upper_orthant, ComponentParams, FeatureTheta, TumourFractions};

/// Likelihood value used when the cell sum underflows.
pub const LIK_FLOOR: f64 = 1e-300;

/// `ln(LIK_FLOOR)`.
pub fn loglik_floor() -> f64 {
    LIK_FLOOR.ln()
}

/// How individual cell masses are evaluated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum CellRule {
    /// Midpoint rule with CDF-evaluated edge cells.
    #[default]
    Hybrid,
    /// Midpoint rule everywhere.
    Midpoint,
    /// CDF differences everywhere.
    Exact,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LikelihoodConfig {
    /// Bins per axis.
    pub m: usize,
    pub rule: CellRule,
    /// Mixing weights below this are treated as exactly zero.
    pub pi_eps: f64,
}

impl Default for LikelihoodConfig {
    fn default() -> Self {
        Self {
            m: 8,
            rule: CellRule::Hybrid,
            pi_eps: 1e-6,
        }
    }
}

impl LikelihoodConfig {
    pub fn with_bins(m: usize) -> Self {
        Self { m, ..Self::default() }
    }

    pub fn validate(&self) -> Result<()> {
        if self.m < 2 {
            return invalid(format!("need at least 2 bins, got {}", self.m));
        }
        if !(self.pi_eps >= 0.0 && self.pi_eps < 0.5) {
            return invalid(format!("pi_eps must be in [0, 0.5), got {}", self.pi_eps));
        }
        Ok(())
    }
}

/// Equal-width discretisation of `[0, y0] x [0, y1]`.
///
/// Cells are 0-based: cell 0 touches the origin and cell `m - 1` ends at the
/// observed value.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Grid {
    m: usize,
    y0: f64,
    y1: f64,
}

/// Build the `m x m` grid for one observation pair.
pub fn build_grid(obs: &PairedObservation, m: usize) -> Result<Grid> {
    if m < 2 {
        return invalid(format!("need at least 2 bins, got {m}"));
    }
    if !(obs.y0 > 0.0 && obs.y1 > 0.0 && obs.y0.is_finite() && obs.y1.is_finite()) {
        return invalid(format!("grid needs positive observations, got ({}, {})", obs.y0, obs.y1));
    }
    Ok(Grid { m, y0: obs.y0, y1: obs.y1 })
}

impl Grid {
    /// Grid for observations already known to be positive and finite.
    pub(crate) fn unchecked(m: usize, y0: f64, y1: f64) -> Self {
        Self { m, y0, y1 }
    }

    #[inline]
    pub fn bins(&self) -> usize {
        self.m
    }

    /// Interval length on axis 0.
    #[inline]
    pub fn width0(&self) -> f64 {
        self.y0 / self.m as f64
    }

    #[inline]
    pub fn width1(&self) -> f64 {
        self.y1 / self.m as f64
    }

    #[inline]
    pub fn lower0(&self, r: usize) -> f64 {
        r as f64 * self.y0 / self.m as f64
    }

    #[inline]
    pub fn upper0(&self, r: usize) -> f64 {
        if r + 1 == self.m {
            self.y0
        } else {
            (r + 1) as f64 * self.y0 / self.m as f64
        }
    }

    #[inline]
    pub fn lower1(&self, s: usize) -> f64 {
        s as f64 * self.y1 / self.m as f64
    }

    #[inline]
    pub fn upper1(&self, s: usize) -> f64 {
        if s + 1 == self.m {
            self.y1
        } else {
            (s + 1) as f64 * self.y1 / self.m as f64
        }
    }

    #[inline]
    pub fn mid0(&self, r: usize) -> f64 {
        0.5 * (self.lower0(r) + self.upper0(r))
    }

    #[inline]
    pub fn mid1(&self, s: usize) -> f64 {
        0.5 * (self.lower1(s) + self.upper1(s))
    }

    fn check(&self, r: usize, s: usize) -> Result<()> {
        if r >= self.m || s >= self.m {
            return invalid(format!("cell ({r}, {s}) outside a {0}x{0} grid", self.m));
        }
        Ok(())
    }
}

/// Midpoint-rule mass `S0 * S1 * f(mid0(r), mid1(s))` of cell `(r, s)`.
pub fn cell_mass_midpoint(p: &ComponentParams, g: &Grid, r: usize, s: usize) -> Result<f64> {
    g.check(r, s)?;
    p.validate()?;
    Ok(g.width0() * g.width1() * p.ln_pdf_unchecked(g.mid0(r), g.mid1(s)).exp())
}

/// Whether cell `(r, s)` is an edge cell for the (already weighted) component `p`.
pub fn is_edge_cell(p: &ComponentParams, g: &Grid, r: usize, s: usize) -> bool {
    (r == 0 && p.mu0 < g.mid0(0).ln()) || (s == 0 && p.mu1 < g.mid1(0).ln())
}

/// Exact mass of cell `(r, s)` from four CDF corners.
pub fn cell_mass_cdf(p: &ComponentParams, g: &Grid, r: usize, s: usize) -> Result<f64> {
    g.check(r, s)?;
    p.validate()?;
    Ok(rectangle(p, g.lower0(r), g.upper0(r), g.lower1(s), g.upper1(s)))
}

fn rectangle(p: &ComponentParams, l0: f64, u0: f64, l1: f64, u1: f64) -> f64 {
    let f = |a, b| p.cdf_unchecked(a, b);
    let mut v = f(u0, u1);
    if l0 > 0.0 {
        v -= f(l0, u1);
    }
    if l1 > 0.0 {
        v -= f(u0, l1);
    }
    if l0 > 0.0 && l1 > 0.0 {
        v += f(l0, l1);
    }
    v.clamp(0.0, 1.0)
}

/// Reusable buffers for the per-axis terms of the midpoint rule.
#[derive(Debug, Clone, Default)]
pub(crate) struct AxisScratch {
    z0: Vec<f64>,
    z1: Vec<f64>,
    a: Vec<f64>,
    b: Vec<f64>,
    corner: Vec<f64>,
}

/// Log of the grid midpoints of `g` on both axes.
pub(crate) fn ln_mids(g: &Grid, out0: &mut Vec<f64>, out1: &mut Vec<f64>) {
    out0.clear();
    out1.clear();
    out0.extend((0..g.m).map(|r| g.mid0(r).ln()));
    out1.extend((0..g.m).map(|s| g.mid1(s).ln()));
}

/// Fill `out` (row-major, `m * m`) with the cell masses of component `p`
/// weighted by `(w0, w1)` on grid `g`.
pub(crate) fn fill_component_masses(
    p: &ComponentParams,
    w0: f64,
    w1: f64,
    g: &Grid,
    cfg: &LikelihoodConfig,
    out: &mut Vec<f64>,
    sc: &mut AxisScratch,
) {
    let (mut l0, mut l1) = (Vec::new(), Vec::new());
    ln_mids(g, &mut l0, &mut l1);
    fill_component_log_masses(p, w0, w1, g, &l0, &l1, cfg, out, sc);
    for v in out.iter_mut() {
        *v = v.exp();
    }
}

/// As [`fill_component_masses`] but storing log masses (`-inf` for empty
/// cells). `ln_mid0` and `ln_mid1` are the output of [`ln_mids`] for `g`.
#[allow(clippy::too_many_arguments)]
pub(crate) fn fill_component_log_masses(
    p: &ComponentParams,
    w0: f64,
    w1: f64,
    g: &Grid,
    ln_mid0: &[f64],
    ln_mid1: &[f64],
    cfg: &LikelihoodConfig,
    out: &mut Vec<f64>,
    sc: &mut AxisScratch,
) {
    let m = g.m;
    out.clear();
    out.resize(m * m, f64::NEG_INFINITY);
    let deg0 = w0 < cfg.pi_eps;
    let deg1 = w1 < cfg.pi_eps;

    match (deg0, deg1) {
        (true, true) => {
            // Point mass at the origin.
            out[0] = 0.0;
            return;
        }
        (false, true) => {
            // Axis 1 collapses to zero: exact marginal masses along axis 0.
            let mu = p.mu0 + w0.ln();
            let mut prev = 0.0;
            for r in 0..m {
                let c = lognormal_cdf(g.upper0(r), mu, p.tau0);
                out[r * m] = (c - prev).max(0.0).ln();
                prev = c;
            }
            return;
        }
        (true, false) => {
            let mu = p.mu1 + w1.ln();
            let mut prev = 0.0;
            for (s, cell) in out.iter_mut().take(m).enumerate() {
                let c = lognormal_cdf(g.upper1(s), mu, p.tau1);
                *cell = (c - prev).max(0.0).ln();
                prev = c;
            }
            return;
        }
        (false, false) => {}
    }

    let q = ComponentParams {
        mu0: p.mu0 + w0.ln(),
        mu1: p.mu1 + w1.ln(),
        ..*p
    };

    if cfg.rule == CellRule::Exact {
        fill_exact(&q, g, out, sc);
        for v in out.iter_mut() {
            *v = v.ln();
        }
        return;
    }

    let sd0 = q.tau0.sqrt();
    let sd1 = q.tau1.sqrt();
    let omr2 = 1.0 - q.rho * q.rho;
    let inv = 1.0 / omr2;
    let ln_s0 = g.width0().ln();
    let ln_s1 = g.width1().ln();
    let lc = -(2.0 * std::f64::consts::PI).ln() - 0.5 * (q.tau0 * q.tau1 * omr2).ln() + ln_s0 + ln_s1;

    sc.z0.clear();
    sc.a.clear();
    for &lm in ln_mid0 {
        let z = (lm - q.mu0) / sd0;
        sc.z0.push(z);
        sc.a.push(-lm - 0.5 * z * z * inv + lc);
    }
    sc.z1.clear();
    sc.b.clear();
    for &lm in ln_mid1 {
        let z = (lm - q.mu1) / sd1;
        sc.z1.push(z);
        sc.b.push(-lm - 0.5 * z * z * inv);
    }
    let c = q.rho * inv;
    for r in 0..m {
        let (ar, zr) = (sc.a[r], sc.z0[r] * c);
        let row = &mut out[r * m..(r + 1) * m];
        for s in 0..m {
            row[s] = ar + sc.b[s] + zr * sc.z1[s];
        }
    }

    if cfg.rule == CellRule::Midpoint {
        return;
    }

    let flag_row = q.mu0 < ln_mid0[0];
    let flag_col = q.mu1 < ln_mid1[0];
    let cdf = |x0: f64, x1: f64| upper_orthant(-(x0.ln() - q.mu0) / sd0, -(x1.ln() - q.mu1) / sd1, q.rho);
    if flag_row {
        // Row 0 spans [0, S0] on axis 0, so only the upper corners contribute.
        let u0 = g.upper0(0);
        let mut prev = 0.0;
        for s in 0..m {
            let f = cdf(u0, g.upper1(s));
            out[s] = (f - prev).max(0.0).ln();
            prev = f;
        }
    }
    if flag_col {
        let u1 = g.upper1(0);
        let mut prev = 0.0;
        for r in 0..m {
            let f = cdf(g.upper0(r), u1);
            out[r * m] = (f - prev).max(0.0).ln();
            prev = f;
        }
    }
}

fn fill_exact(q: &ComponentParams, g: &Grid, out: &mut [f64], sc: &mut AxisScratch) {
    let m = g.m;
    let n = m + 1;
    sc.corner.clear();
    sc.corner.resize(n * n, 0.0);
    for r in 1..n {
        for s in 1..n {
            sc.corner[r * n + s] = q.cdf_unchecked(g.upper0(r - 1), g.upper1(s - 1));
        }
    }
    for r in 0..m {
        for s in 0..m {
            let v = sc.corner[(r + 1) * n + s + 1] - sc.corner[r * n + s + 1] - sc.corner[(r + 1) * n + s]
                + sc.corner[r * n + s];
            out[r * m + s] = v.max(0.0);
        }
    }
}

/// `sum_k exp(lt[k] + lb[n-1-k])`, summed in an order that is symmetric in
/// the two components so that exchanging them is bit-exact.
#[inline]
pub(crate) fn convolve_top_right_log(lt: &[f64], lb: &[f64]) -> f64 {
    let n = lt.len();
    debug_assert_eq!(n, lb.len());
    let mut acc = 0.0;
    for k in 0..n / 2 {
        acc += (lt[k] + lb[n - 1 - k]).exp() + (lt[n - 1 - k] + lb[k]).exp();
    }
    if n % 2 == 1 {
        acc += (lt[n / 2] + lb[n / 2]).exp();
    }
    acc
}

/// Log of a cell sum with the underflow floor applied. Returns
/// `(value, floored)`, or `None` for NaN.
#[inline]
pub(crate) fn floored_ln(sum: f64) -> Option<(f64, bool)> {
    if sum.is_nan() {
        None
    } else if sum > LIK_FLOOR {
        Some((sum.ln(), false))
    } else {
        Some((loglik_floor(), true))
    }
}

/// Evaluates pair log-likelihoods while reusing buffers.
#[derive(Debug, Clone)]
pub struct PairEvaluator {
    cfg: LikelihoodConfig,
    t: Vec<f64>,
    b: Vec<f64>,
    l0: Vec<f64>,
    l1: Vec<f64>,
    sc: AxisScratch,
}

/// One evaluated pair.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PairValue {
    pub loglik: f64,
    /// The cell sum underflowed and the floor was returned.
    pub floored: bool,
}

impl PairEvaluator {
    pub fn new(cfg: LikelihoodConfig) -> Self {
        Self {
            cfg,
            t: Vec::new(),
            b: Vec::new(),
            l0: Vec::new(),
            l1: Vec::new(),
            sc: AxisScratch::default(),
        }
    }

    pub fn config(&self) -> &LikelihoodConfig {
        &self.cfg
    }

    /// Unchecked evaluation; inputs must already be valid. Returns `None` on NaN.
    pub(crate) fn eval(&mut self, obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta) -> Option<PairValue> {
        let g = Grid { m: self.cfg.m, y0: obs.y0, y1: obs.y1 };
        let (mut l0, mut l1) = (std::mem::take(&mut self.l0), std::mem::take(&mut self.l1));
        ln_mids(&g, &mut l0, &mut l1);
        let v = self.eval_with_mids(&g, &l0, &l1, pi, theta);
        self.l0 = l0;
        self.l1 = l1;
        v
    }

    /// [`Self::eval`] with precomputed log midpoints of `g`.
    pub(crate) fn eval_with_mids(
        &mut self,
        g: &Grid,
        ln_mid0: &[f64],
        ln_mid1: &[f64],
        pi: &TumourFractions,
        theta: &FeatureTheta,
    ) -> Option<PairValue> {
        let cfg = self.cfg;
        fill_component_log_masses(&theta.tumour, pi.pi0, pi.pi1, g, ln_mid0, ln_mid1, &cfg, &mut self.t, &mut self.sc);
        fill_component_log_masses(
            &theta.background,
            1.0 - pi.pi0,
            1.0 - pi.pi1,
            g,
            ln_mid0,
            ln_mid1,
            &cfg,
            &mut self.b,
            &mut self.sc,
        );
        floored_ln(convolve_top_right_log(&self.t, &self.b)).map(|(loglik, floored)| PairValue { loglik, floored })
    }

    /// Checked evaluation of one pair.
    pub fn pair(&mut self, obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta) -> Result<PairValue> {
        validate_pair_inputs(obs, pi, theta)?;
        self.eval(obs, pi, theta)
            .ok_or_else(|| Error::Numerical(format!("NaN likelihood for {obs:?}, {pi:?}, {theta:?}")))
    }

    /// Masses of one weighted component on the grid of `obs` (row-major).
    pub fn component_masses(&mut self, p: &ComponentParams, w0: f64, w1: f64, obs: &PairedObservation) -> Result<Vec<f64>> {
        p.validate()?;
        let g = build_grid(obs, self.cfg.m)?;
        let mut out = Vec::new();
        fill_component_masses(p, w0, w1, &g, &self.cfg, &mut out, &mut self.sc);
        Ok(out)
    }
}

fn validate_pair_inputs(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta) -> Result<()> {
    if !(obs.y0 > 0.0 && obs.y1 > 0.0 && obs.y0.is_finite() && obs.y1.is_finite()) {
        return invalid(format!("observations must be positive, got ({}, {})", obs.y0, obs.y1));
    }
    for w in [pi.pi0, pi.pi1] {
        if !(0.0..=1.0).contains(&w) {
            return invalid(format!("mixing weights must lie in [0, 1], got {pi:?}"));
        }
    }
    theta.tumour.validate()?;
    theta.background.validate()
}

/// Discrete log-likelihood of one observation pair.
pub fn pair_loglik(obs: &PairedObservation, pi: &TumourFractions, theta: &FeatureTheta, cfg: &LikelihoodConfig) -> Result<f64> {
    cfg.validate()?;
    Ok(PairEvaluator::new(*cfg).pair(obs, pi, theta)?.loglik)
}

/// Sum of pair log-likelihoods over all patients and features.
///
/// Values are added in ascending order, so the result does not depend on
/// the order in which patients or features are stored.
pub fn total_loglik(data: &Dataset, pis: &[TumourFractions], thetas: &[FeatureTheta], cfg: &LikelihoodConfig) -> Result<f64> {
    Ok(total_loglik_detail(data, pis, thetas, cfg)?.loglik)
}

/// Total log-likelihood with per-feature counts of floored pairs.
#[derive(Debug, Clone, PartialEq)]
pub struct TotalValue {
    pub loglik: f64,
    pub floored_per_feature: Vec<usize>,
}

pub fn total_loglik_detail(
    data: &Dataset,
    pis: &[TumourFractions],
    thetas: &[FeatureTheta],
    cfg: &LikelihoodConfig,
) -> Result<TotalValue> {
    use rayon::prelude::*;

    cfg.validate()?;
    if pis.len() != data.n_patients() || thetas.len() != data.n_features() {
        return invalid(format!(
            "dimension mismatch: data is {} x {}, got {} fractions and {} feature parameters",
            data.n_patients(),
            data.n_features(),
            pis.len(),
            thetas.len()
        ));
    }
    for theta in thetas {
        theta.tumour.validate()?;
        theta.background.validate()?;
    }
    for pi in pis {
        if !(0.0..=1.0).contains(&pi.pi0) || !(0.0..=1.0).contains(&pi.pi1) {
            return invalid(format!("mixing weights must lie in [0, 1], got {pi:?}"));
        }
    }

    let per_patient: Vec<Result<Vec<PairValue>>> = (0..data.n_patients())
        .into_par_iter()
        .map(|i| {
            let mut ev = PairEvaluator::new(*cfg);
            data.patient(i)
                .iter()
                .zip(thetas)
                .enumerate()
                .map(|(j, (obs, theta))| {
                    if !(obs.y0 > 0.0 && obs.y1 > 0.0) {
                        return invalid(format!("zero observation at (patient {i}, feature {j}); apply a pseudo-count first"));
                    }
                    match ev.eval(obs, &pis[i], theta) {
                        Some(v) if v.loglik.is_finite() => Ok(v),
                        _ => Err(Error::Numerical(format!("non-finite likelihood at (patient {i}, feature {j})"))),
                    }
                })
                .collect()
        })
        .collect();

    let mut values = Vec::with_capacity(data.n_patients() * data.n_features());
    let mut floored = vec![0usize; data.n_features()];
    for row in per_patient {
        for (j, v) in row?.into_iter().enumerate() {
            if v.floored {
                floored[j] += 1;
            }
            values.push(v.loglik);
        }
    }
    values.sort_unstable_by(f64::total_cmp);
    Ok(TotalValue {
        loglik: values.iter().sum(),
        floored_per_feature: floored,
    })
}

/// One-dimensional analogue of [`pair_loglik`] for a single measurement,
/// with univariate log-normal components `(mu, tau)`.
///
/// With zero correlation and the midpoint rule the bivariate likelihood
/// factorises into the two univariate ones.
pub fn univariate_pair_loglik(
    y: f64,
    pi: f64,
    tumour: (f64, f64),
    background: (f64, f64),
    cfg: &LikelihoodConfig,
) -> Result<f64> {
    cfg.validate()?;
    if !(y > 0.0 && y.is_finite()) || !(0.0..=1.0).contains(&pi) {
        return invalid(format!("invalid univariate inputs y={y}, pi={pi}"));
    }
    let t = univariate_masses(y, pi, tumour, cfg);
    let b = univariate_masses(y, 1.0 - pi, background, cfg);
    let n = t.len();
    let sum: f64 = (0..n).map(|k| t[k] * b[n - 1 - k]).sum();
    floored_ln(sum)
        .map(|(v, _)| v)
        .ok_or_else(|| Error::Numerical("NaN univariate likelihood".into()))
}

fn univariate_masses(y: f64, w: f64, (mu, tau): (f64, f64), cfg: &LikelihoodConfig) -> Vec<f64> {
    let m = cfg.m;
    let width = y / m as f64;
    let upper = |r: usize| if r + 1 == m { y } else { (r + 1) as f64 * width };
    let mut out = vec![0.0; m];
    if w < cfg.pi_eps {
        out[0] = 1.0;
        return out;
    }
    let mu = mu + w.ln();
    let exact = |r: usize| (lognormal_cdf(upper(r), mu, tau) - if r == 0 { 0.0 } else { lognormal_cdf(upper(r - 1), mu, tau) }).max(0.0);
    for (r, cell) in out.iter_mut().enumerate() {
        *cell = if cfg.rule == CellRule::Exact {
            exact(r)
        } else {
            let mid = (r as f64 + 0.5) * width;
            let z = (mid.ln() - mu) / tau.sqrt();
            width * crate::model::norm_pdf(z) / (mid * tau.sqrt())
        };
    }
    if cfg.rule == CellRule::Hybrid && mu < (0.5 * width).ln() {
        out[0] = exact(0);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::model::{biv_lognormal_cdf, ComponentParams};
    use proptest::prelude::*;

    fn theta() -> FeatureTheta {
        FeatureTheta {
            tumour: ComponentParams::new(3.0, 3.0, 0.3, 0.3, 0.9).unwrap(),
            background: ComponentParams::new(1.5, 1.6, 0.2, 0.25, 0.7).unwrap(),
        }
    }

    fn obs(y0: f64, y1: f64) -> PairedObservation {
        PairedObservation::new(y0, y1).unwrap()
    }

    #[test]
    fn grid_matches_figure_example() {
        let g = build_grid(&obs(30.0, 40.0), 8).unwrap();
        assert_eq!(g.width0(), 3.75);
        assert_eq!(g.width1(), 5.0);
        assert_eq!(g.mid0(0), 1.875);
        assert_eq!(g.mid1(7), 37.5);
        assert_eq!(g.upper0(7), 30.0);
    }

    #[test]
    fn grid_two_bins() {
        let g = build_grid(&obs(1.0, 1.0), 2).unwrap();
        assert_eq!((g.lower0(0), g.upper0(0), g.lower0(1), g.upper0(1)), (0.0, 0.5, 0.5, 1.0));
        assert_eq!((g.lower1(0), g.upper1(0), g.lower1(1), g.upper1(1)), (0.0, 0.5, 0.5, 1.0));
    }

    #[test]
    fn grid_rejects_bad_input() {
        assert!(build_grid(&obs(1.0, 1.0), 1).is_err());
        assert!(build_grid(&PairedObservation { y0: 0.0, y1: 1.0 }, 4).is_err());
        let g = build_grid(&obs(1.0, 1.0), 4).unwrap();
        let p = theta().tumour;
        assert!(cell_mass_midpoint(&p, &g, 4, 0).is_err());
        assert!(cell_mass_cdf(&p, &g, 0, 9).is_err());
    }

    proptest! {
        #[test]
        fn grid_tiles_interval(y0 in 1e-3f64..1e4, y1 in 1e-3f64..1e4, m in 2usize..100) {
            let g = build_grid(&obs(y0, y1), m).unwrap();
            prop_assert_eq!(g.lower0(0), 0.0);
            prop_assert_eq!(g.upper0(m - 1), y0);
            prop_assert_eq!(g.upper1(m - 1), y1);
            for r in 0..m - 1 {
                prop_assert_eq!(g.upper0(r), g.lower0(r + 1));
                prop_assert_eq!(g.upper1(r), g.lower1(r + 1));
            }
            for r in 0..m {
                prop_assert!((g.upper0(r) - g.lower0(r) - g.width0()).abs() <= 1e-12 * y0);
                prop_assert_eq!(g.mid0(r), 0.5 * (g.lower0(r) + g.upper0(r)));
            }
        }
    }

    #[test]
    fn far_tail_midpoint_mass_vanishes() {
        let g = build_grid(&obs(30.0, 40.0), 8).unwrap();
        let p = ComponentParams::new(12.0, 12.0, 0.1, 0.1, 0.0).unwrap();
        assert!(cell_mass_midpoint(&p, &g, 0, 0).unwrap() < 1e-100);
    }

    #[test]
    fn midpoint_sum_bounded_by_cdf() {
        let g = build_grid(&obs(60.0, 60.0), 64).unwrap();
        let p = ComponentParams::new(2.5, 2.4, 0.05, 0.06, 0.5).unwrap();
        let mut sum = 0.0;
        for r in 0..64 {
            for s in 0..64 {
                sum += cell_mass_midpoint(&p, &g, r, s).unwrap();
            }
        }
        let want = biv_lognormal_cdf(60.0, 60.0, &p).unwrap();
        assert!((sum - want).abs() < 1e-3, "{sum} vs {want}");
    }

    #[test]
    fn midpoint_converges_to_cdf_rectangle() {
        // Fixed rectangle [0, 20]^2; doubling m shrinks the midpoint error.
        let p = ComponentParams::new(2.0, 2.2, 0.2, 0.15, 0.6).unwrap();
        let o = obs(20.0, 20.0);
        let want = biv_lognormal_cdf(20.0, 20.0, &p).unwrap();
        let mut prev_err = f64::INFINITY;
        for m in [8, 16, 32, 64] {
            let g = build_grid(&o, m).unwrap();
            let mut sum = 0.0;
            for r in 0..m {
                for s in 0..m {
                    sum += cell_mass_midpoint(&p, &g, r, s).unwrap();
                }
            }
            let err = (sum - want).abs();
            assert!(err < prev_err, "m={m}: {err} !< {prev_err}");
            prev_err = err;
        }
        assert!(prev_err < 1e-4);
    }

    #[test]
    fn edge_criterion() {
        let g = build_grid(&obs(30.0, 40.0), 8).unwrap();
        let low = ComponentParams::new(-10.0, 5.0, 1.0, 1.0, 0.0).unwrap();
        assert!(is_edge_cell(&low, &g, 0, 4));
        assert!(!is_edge_cell(&low, &g, 1, 4));
        let very_low = ComponentParams::new(-10.0, -10.0, 1.0, 1.0, 0.0).unwrap();
        assert!(!is_edge_cell(&very_low, &g, 2, 2));
        // Tumour with pi1 = 1e-4 and mu1 = 3: shifted mean 3 + ln 1e-4 ~ -6.21 < ln 2.5.
        let t = crate::model::shift_params(&ComponentParams::new(3.0, 3.0, 1.0, 1.0, 0.5).unwrap(), 0.0, 1e-4f64.ln()).unwrap();
        assert!((t.mu1 - (-6.210_340_371_976_183)).abs() < 1e-12);
        for r in 0..8 {
            assert!(is_edge_cell(&t, &g, r, 0));
        }
        assert!(!is_edge_cell(&t, &g, 1, 1));
    }

    #[test]
    fn cdf_cell_full_support_and_telescoping() {
        let p = ComponentParams::new(1.0, 1.2, 0.3, 0.4, 0.8).unwrap();
        let big = build_grid(&obs(1e9, 1e9), 2).unwrap();
        let total: f64 = (0..2).flat_map(|r| (0..2).map(move |s| (r, s))).map(|(r, s)| cell_mass_cdf(&p, &big, r, s).unwrap()).sum();
        assert!((total - 1.0).abs() < 1e-12);

        let g = build_grid(&obs(6.0, 7.0), 8).unwrap();
        let mut sum = 0.0;
        for r in 0..8 {
            for s in 0..8 {
                let v = cell_mass_cdf(&p, &g, r, s).unwrap();
                assert!((0.0..=1.0).contains(&v));
                sum += v;
            }
        }
        let want = biv_lognormal_cdf(6.0, 7.0, &p).unwrap();
        assert!((sum - want).abs() < 1e-12);
    }

    #[test]
    fn label_swap_is_bit_exact() {
        let cfg = LikelihoodConfig::default();
        let th = theta();
        for pi in [
            // Dyadic weights so that 1 - (1 - pi) == pi exactly.
            TumourFractions { pi0: 0.375, pi1: 0.0625 },
            TumourFractions { pi0: 0.25, pi1: 0.0 },
            TumourFractions { pi0: 0.5, pi1: 2f64.powi(-13) },
        ] {
            for (y0, y1) in [(6.0, 4.0), (12.0, 5.5), (3.0, 30.0)] {
                let o = obs(y0, y1);
                let a = pair_loglik(&o, &pi, &th, &cfg).unwrap();
                let b = pair_loglik(&o, &pi.complement(), &th.swapped(), &cfg).unwrap();
                assert_eq!(a.to_bits(), b.to_bits(), "pi={pi:?} y=({y0},{y1})");
            }
        }
    }

    #[test]
    fn pure_background_is_top_right_cell() {
        let cfg = LikelihoodConfig::default();
        let th = theta();
        let o = obs(5.0, 4.0);
        let got = pair_loglik(&o, &TumourFractions { pi0: 0.0, pi1: 0.0 }, &th, &cfg).unwrap();
        let g = build_grid(&o, 8).unwrap();
        // Top-right cell evaluated by the same hybrid rule on the unshifted background.
        let mid = cell_mass_midpoint(&th.background, &g, 7, 7).unwrap();
        assert!((got - mid.ln()).abs() < 1e-12);
        let exact_cfg = LikelihoodConfig { rule: CellRule::Exact, ..cfg };
        let got = pair_loglik(&o, &TumourFractions { pi0: 0.0, pi1: 0.0 }, &th, &exact_cfg).unwrap();
        assert!((got - cell_mass_cdf(&th.background, &g, 7, 7).unwrap().ln()).abs() < 1e-12);
    }

    #[test]
    fn degenerate_weight_is_continuous() {
        // pi just above the threshold behaves like the collapsed component.
        let cfg = LikelihoodConfig::default();
        let th = theta();
        let o = obs(5.0, 4.0);
        let at_zero = pair_loglik(&o, &TumourFractions { pi0: 0.3, pi1: 0.0 }, &th, &cfg).unwrap();
        let near_zero = pair_loglik(&o, &TumourFractions { pi0: 0.3, pi1: 2e-6 }, &th, &cfg).unwrap();
        assert!((at_zero - near_zero).abs() < 1e-6, "{at_zero} vs {near_zero}");
    }

    #[test]
    fn floor_on_underflow() {
        let cfg = LikelihoodConfig::default();
        let th = FeatureTheta {
            tumour: ComponentParams::new(3.0, 3.0, 0.01, 0.01, 0.0).unwrap(),
            background: ComponentParams::new(1.5, 1.5, 0.01, 0.01, 0.0).unwrap(),
        };
        let got = pair_loglik(&obs(1e6, 1e6), &TumourFractions { pi0: 0.1, pi1: 0.1 }, &th, &cfg).unwrap();
        assert_eq!(got, loglik_floor());
    }

    #[test]
    fn pair_rejects_bad_inputs() {
        let cfg = LikelihoodConfig::default();
        assert!(pair_loglik(&obs(1.0, 1.0), &TumourFractions { pi0: 1.2, pi1: 0.0 }, &theta(), &cfg).is_err());
        assert!(pair_loglik(&obs(1.0, 1.0), &TumourFractions { pi0: 0.2, pi1: 0.1 }, &theta(), &LikelihoodConfig::with_bins(1)).is_err());
    }

    #[test]
    fn zero_correlation_midpoint_factorises() {
        let cfg = LikelihoodConfig { rule: CellRule::Midpoint, ..LikelihoodConfig::default() };
        let th = FeatureTheta {
            tumour: ComponentParams::new(3.0, 2.8, 0.3, 0.4, 0.0).unwrap(),
            background: ComponentParams::new(1.5, 1.6, 0.2, 0.25, 0.0).unwrap(),
        };
        let pi = TumourFractions { pi0: 0.25, pi1: 0.08 };
        let o = obs(7.0, 5.0);
        let biv = pair_loglik(&o, &pi, &th, &cfg).unwrap();
        let u0 = univariate_pair_loglik(7.0, 0.25, (3.0, 0.3), (1.5, 0.2), &cfg).unwrap();
        let u1 = univariate_pair_loglik(5.0, 0.08, (2.8, 0.4), (1.6, 0.25), &cfg).unwrap();
        assert!((biv - (u0 + u1)).abs() < 1e-12);
        // Hybrid with no edge cells flagged factorises too.
        let hyb = LikelihoodConfig::default();
        let biv = pair_loglik(&o, &pi, &th, &hyb).unwrap();
        let u0 = univariate_pair_loglik(7.0, 0.25, (3.0, 0.3), (1.5, 0.2), &hyb).unwrap();
        let u1 = univariate_pair_loglik(5.0, 0.08, (2.8, 0.4), (1.6, 0.25), &hyb).unwrap();
        assert!((biv - (u0 + u1)).abs() < 1e-12);
    }

    #[test]
    fn total_is_sum_and_order_free() {
        let cfg = LikelihoodConfig::default();
        let obs_list: Vec<PairedObservation> = (0..6).map(|k| obs(3.0 + k as f64, 4.0 + 0.5 * k as f64)).collect();
        let data = Dataset::from_matrix(2, 3, obs_list.clone()).unwrap();
        let pis = [TumourFractions { pi0: 0.3, pi1: 0.1 }, TumourFractions { pi0: 0.1, pi1: 0.0 }];
        let mut th = [theta(); 3];
        th[1].tumour.mu0 = 3.3;
        th[2].background.tau1 = 0.4;
        let total = total_loglik(&data, &pis, &th, &cfg).unwrap();
        let mut manual = 0.0;
        for i in 0..2 {
            for j in 0..3 {
                manual += pair_loglik(data.get(i, j), &pis[i], &th[j], &cfg).unwrap();
            }
        }
        assert!((total - manual).abs() < 1e-12);

        let perm = [2usize, 0, 1];
        let permuted = data.select_features(&perm).unwrap();
        let th_perm: Vec<FeatureTheta> = perm.iter().map(|&j| th[j]).collect();
        let total_perm = total_loglik(&permuted, &pis, &th_perm, &cfg).unwrap();
        assert_eq!(total.to_bits(), total_perm.to_bits());

        let single = Dataset::from_matrix(1, 1, vec![obs_list[0]]).unwrap();
        let one = total_loglik(&single, &pis[..1], &th[..1], &cfg).unwrap();
        assert_eq!(one, pair_loglik(&obs_list[0], &pis[0], &th[0], &cfg).unwrap());

        assert!(total_loglik(&data, &pis[..1], &th, &cfg).is_err());
    }
}
