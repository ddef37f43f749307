//! Maximum pseudo-likelihood estimation by block coordinate ascent.
//!
//! Each sweep runs three blocks in a fixed order:
//!
//! 1. tumour fractions, per patient, with the feature parameters fixed;
//! 2. correlations, per feature (skipped when correlations are fixed at zero);
//! 3. log-means and log-variances, per feature.
//!
//! Every scalar coordinate is updated with a bounded Brent search and only
//! accepted when it increases the objective, so the total log-likelihood
//! never decreases between blocks. The ordering `pi1 <= pi0` is handled by
//! searching over `(pi0, u)` with `pi1 = u * pi0` and `u` in `[0, 1]`.

use std::collections::BTreeMap;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairedObservation};
use crate::error::{invalid, Error, Result};
use crate::grid::{
    convolve_top_right_log, fill_component_log_masses, floored_ln, ln_mids, total_loglik_detail, AxisScratch,
    CellRule, Grid, LikelihoodConfig, PairEvaluator,
};
use crate::model::{ComponentParams, FeatureTheta, TumourFractions, RHO_BOUND};
use crate::optim::improve_coordinate;

/// Upper end of the search bracket for `pi0`.
pub const PI_MAX: f64 = 0.999;
/// Coordinate cycles for one patient's fractions. The two coordinates are
/// cheap and strongly coupled near `pi1 = pi0`, so this block is not capped
/// by `max_cycles`.
pub const PI_CYCLES: usize = 20;
/// Lower bound for log-variance proposals.
pub const TAU_MIN: f64 = 1e-4;
/// Smallest allowed gap between tumour and background log-means.
pub const MEAN_GAP: f64 = 1e-4;

/// How the two component correlations are treated.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum RhoMode {
    /// Tumour and background correlations estimated separately.
    #[default]
    Separate,
    /// One correlation per feature shared by both components.
    Shared,
    /// Both correlations fixed at zero (univariate model).
    Zero,
}

impl std::str::FromStr for RhoMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "separate" => Ok(Self::Separate),
            "shared" => Ok(Self::Shared),
            "zero" => Ok(Self::Zero),
            other => invalid(format!("unknown rho mode {other:?} (expected separate, shared or zero)")),
        }
    }
}

impl std::fmt::Display for RhoMode {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Separate => "separate",
            Self::Shared => "shared",
            Self::Zero => "zero",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FitConfig {
    /// Grid bins per axis.
    pub m: usize,
    /// Outer sweeps.
    pub iterations: usize,
    /// Scalar search tolerance, also the per-cycle improvement threshold.
    pub scalar_tol: f64,
    /// Mixing weights below this are treated as zero.
    pub pi_eps: f64,
    pub rho_mode: RhoMode,
    pub seed: u64,
    pub rule: CellRule,
    /// Cap on coordinate cycles within the correlation and mean/variance blocks;
    /// outer sweeps repeat every block anyway.
    pub max_cycles: usize,
    /// Half-width of the search bracket for log-means.
    pub mean_step: f64,
    /// Log-variances are searched in `[tau / f, tau * f]`.
    pub var_factor: f64,
    /// Starting tumour fractions for every patient.
    pub pi_init: TumourFractions,
}

impl Default for FitConfig {
    fn default() -> Self {
        Self {
            m: 8,
            iterations: 10,
            scalar_tol: 1e-4,
            pi_eps: 1e-6,
            rho_mode: RhoMode::Separate,
            seed: 0,
            rule: CellRule::Hybrid,
            max_cycles: 1,
            mean_step: 2.0,
            var_factor: 4.0,
            pi_init: TumourFractions { pi0: 0.1, pi1: 0.02 },
        }
    }
}

impl FitConfig {
    pub fn validate(&self) -> Result<()> {
        if self.iterations < 1 {
            return invalid("iterations must be >= 1");
        }
        if !(self.scalar_tol > 0.0) {
            return invalid(format!("scalar_tol must be positive, got {}", self.scalar_tol));
        }
        if self.max_cycles < 1 {
            return invalid("max_cycles must be >= 1");
        }
        if !(self.mean_step > 0.0 && self.var_factor > 1.0) {
            return invalid("mean_step must be positive and var_factor > 1");
        }
        if !self.pi_init.is_feasible() {
            return invalid(format!("infeasible pi_init {:?}", self.pi_init));
        }
        self.likelihood().validate()
    }

    pub fn likelihood(&self) -> LikelihoodConfig {
        LikelihoodConfig {
            m: self.m,
            rule: self.rule,
            pi_eps: self.pi_eps,
        }
    }
}

/// Which block produced a trace entry.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Block {
    Pi,
    Rho,
    MuTau,
}

impl std::fmt::Display for Block {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(match self {
            Self::Pi => "pi",
            Self::Rho => "rho",
            Self::MuTau => "mu_tau",
        })
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TraceEntry {
    /// 1-based sweep number.
    pub sweep: usize,
    pub block: Block,
    pub loglik: f64,
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct FeatureDiagnostics {
    /// A correlation sits on the `RHO_BOUND` clamp.
    pub rho_clamped: bool,
    /// Pairs of this feature whose likelihood hit the floor at the final estimate.
    pub floored_pairs: usize,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FitResult {
    pub pi: Vec<TumourFractions>,
    pub theta: Vec<FeatureTheta>,
    /// Total log-likelihood before the first block.
    pub initial_loglik: f64,
    /// One entry per completed block step.
    pub trace: Vec<TraceEntry>,
    pub converged: bool,
    pub features: Vec<FeatureDiagnostics>,
    /// Patients whose fraction update failed at least once; previous values were kept.
    pub pi_failures: Vec<usize>,
}

impl FitResult {
    pub fn loglik_trace(&self) -> Vec<f64> {
        self.trace.iter().map(|t| t.loglik).collect()
    }

    pub fn final_loglik(&self) -> f64 {
        self.trace.last().map_or(self.initial_loglik, |t| t.loglik)
    }
}

/// Reference log-scale mean and variance for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct RefEntry {
    pub log_mean: f64,
    pub log_var: f64,
}

/// Reference profile keyed by feature id.
pub type ReferenceProfile = BTreeMap<String, RefEntry>;

/// Initial feature parameters from tumour and background reference profiles.
///
/// Both measurements start from the same reference mean and variance; both
/// correlations start at `rho_init`.
pub fn init_theta(
    feature_ids: &[String],
    tumour: &ReferenceProfile,
    background: &ReferenceProfile,
    rho_init: f64,
) -> Result<Vec<FeatureTheta>> {
    if !(rho_init.abs() <= RHO_BOUND) {
        return invalid(format!("rho_init must lie in [-{RHO_BOUND}, {RHO_BOUND}], got {rho_init}"));
    }
    let missing: Vec<&str> = feature_ids
        .iter()
        .filter(|id| !tumour.contains_key(*id) || !background.contains_key(*id))
        .map(String::as_str)
        .collect();
    if !missing.is_empty() {
        return invalid(format!("features missing from a reference profile: {}", missing.join(", ")));
    }
    feature_ids
        .iter()
        .map(|id| {
            let component = |e: &RefEntry| {
                ComponentParams::new(e.log_mean, e.log_mean, e.log_var, e.log_var, rho_init)
                    .map_err(|err| Error::InvalidArgument(format!("feature {id}: {err}")))
            };
            Ok(FeatureTheta {
                tumour: component(&tumour[id])?,
                background: component(&background[id])?,
            })
        })
        .collect()
}

/// Draw both correlations of every feature uniformly from `range`.
pub fn randomise_rho(thetas: &mut [FeatureTheta], (lo, hi): (f64, f64), seed: u64) -> Result<()> {
    use rand::Rng;
    if !(lo <= hi && lo >= -RHO_BOUND && hi <= RHO_BOUND) {
        return invalid(format!("rho range [{lo}, {hi}] must lie within [-{RHO_BOUND}, {RHO_BOUND}]"));
    }
    let mut rng = crate::rng::substream(seed, "rho-init");
    for t in thetas {
        t.tumour.rho = lo + (hi - lo) * rng.random::<f64>();
        t.background.rho = lo + (hi - lo) * rng.random::<f64>();
    }
    Ok(())
}

fn project_rho(theta: &mut FeatureTheta, mode: RhoMode) {
    match mode {
        RhoMode::Zero => {
            theta.tumour.rho = 0.0;
            theta.background.rho = 0.0;
        }
        RhoMode::Shared => {
            let r = (0.5 * (theta.tumour.rho + theta.background.rho)).clamp(-RHO_BOUND, RHO_BOUND);
            theta.tumour.rho = r;
            theta.background.rho = r;
        }
        RhoMode::Separate => {
            theta.tumour.rho = theta.tumour.rho.clamp(-RHO_BOUND, RHO_BOUND);
            theta.background.rho = theta.background.rho.clamp(-RHO_BOUND, RHO_BOUND);
        }
    }
}

fn check_dims(data: &Dataset, pis: &[TumourFractions], thetas: &[FeatureTheta]) -> Result<()> {
    if pis.len() != data.n_patients() || thetas.len() != data.n_features() {
        return invalid(format!(
            "dimension mismatch: data is {} x {}, got {} fractions and {} feature parameters",
            data.n_patients(),
            data.n_features(),
            pis.len(),
            thetas.len()
        ));
    }
    if let Some((i, j)) = (0..data.n_patients())
        .flat_map(|i| (0..data.n_features()).map(move |j| (i, j)))
        .find(|&(i, j)| !(data.get(i, j).y0 > 0.0 && data.get(i, j).y1 > 0.0))
    {
        return invalid(format!("zero observation at (patient {i}, feature {j}); apply a pseudo-count first"));
    }
    Ok(())
}

/// Output of the fraction block.
#[derive(Debug, Clone, PartialEq)]
pub struct PiStep {
    pub pi: Vec<TumourFractions>,
    /// Patients whose update failed; their previous values were kept.
    pub failed: Vec<usize>,
}

/// Update every patient's tumour fractions with the feature parameters fixed.
pub fn step_pi(data: &Dataset, thetas: &[FeatureTheta], pis: &[TumourFractions], cfg: &FitConfig) -> Result<PiStep> {
    cfg.validate()?;
    check_dims(data, pis, thetas)?;
    let lik = cfg.likelihood();
    let updated: Vec<Option<TumourFractions>> = (0..data.n_patients())
        .into_par_iter()
        .map(|i| optimise_patient(data.patient(i), thetas, pis[i], cfg, lik))
        .collect();
    let mut failed = Vec::new();
    let pi = updated
        .into_iter()
        .enumerate()
        .map(|(i, u)| {
            u.unwrap_or_else(|| {
                failed.push(i);
                pis[i]
            })
        })
        .collect();
    Ok(PiStep { pi, failed })
}

fn optimise_patient(
    obs: &[PairedObservation],
    thetas: &[FeatureTheta],
    start: TumourFractions,
    cfg: &FitConfig,
    lik: LikelihoodConfig,
) -> Option<TumourFractions> {
    let mut ev = PairEvaluator::new(lik);
    let m = lik.m;
    let grids: Vec<Grid> = obs.iter().map(|o| Grid::unchecked(m, o.y0, o.y1)).collect();
    let mut mids = Vec::with_capacity(2 * m * obs.len());
    let (mut l0, mut l1) = (Vec::new(), Vec::new());
    for g in &grids {
        ln_mids(g, &mut l0, &mut l1);
        mids.extend_from_slice(&l0);
        mids.extend_from_slice(&l1);
    }
    let mut objective = |pi0: f64, pi1: f64| -> f64 {
        let pi = TumourFractions { pi0, pi1 };
        let mut acc = 0.0;
        for (j, (g, th)) in grids.iter().zip(thetas).enumerate() {
            let base = 2 * m * j;
            match ev.eval_with_mids(g, &mids[base..base + m], &mids[base + m..base + 2 * m], &pi, th) {
                Some(v) => acc += v.loglik,
                None => return f64::NAN,
            }
        }
        acc
    };

    let mut pi0 = start.pi0.clamp(0.0, PI_MAX);
    let mut u = if pi0 > 0.0 { (start.pi1 / pi0).clamp(0.0, 1.0) } else { 0.0 };
    let mut current = objective(pi0, u * pi0);
    if !current.is_finite() {
        return None;
    }
    for _ in 0..PI_CYCLES {
        let before = current;
        let r = improve_coordinate(|x| objective(x, u * x), pi0, current, (0.0, PI_MAX), cfg.scalar_tol, true);
        pi0 = r.x;
        current = r.value;
        if pi0 > 0.0 {
            let r = improve_coordinate(|x| objective(pi0, x * pi0), u, current, (0.0, 1.0), cfg.scalar_tol, true);
            u = r.x;
            current = r.value;
        }
        if !current.is_finite() {
            return None;
        }
        if current - before < cfg.scalar_tol {
            break;
        }
    }
    // u * pi0 <= pi0 holds exactly in floating point for u in [0, 1].
    Some(TumourFractions { pi0, pi1: u * pi0 })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Which {
    Tumour,
    Background,
}

/// Per-feature objective with the fixed component's log cell masses cached.
struct FeatureWork<'a> {
    grids: Vec<Grid>,
    /// Log midpoints per patient: `m` values for axis 0, then `m` for axis 1.
    mids: Vec<f64>,
    pis: &'a [TumourFractions],
    lik: LikelihoodConfig,
    cache: Vec<f64>,
    varying: Vec<f64>,
    other: Vec<f64>,
    sc: AxisScratch,
}

impl<'a> FeatureWork<'a> {
    fn new(data: &Dataset, j: usize, pis: &'a [TumourFractions], lik: LikelihoodConfig) -> Self {
        let grids: Vec<Grid> = data.feature(j).map(|o| Grid::unchecked(lik.m, o.y0, o.y1)).collect();
        let mut mids = Vec::with_capacity(2 * lik.m * grids.len());
        let (mut l0, mut l1) = (Vec::new(), Vec::new());
        for g in &grids {
            ln_mids(g, &mut l0, &mut l1);
            mids.extend_from_slice(&l0);
            mids.extend_from_slice(&l1);
        }
        Self {
            grids,
            mids,
            pis,
            lik,
            cache: Vec::new(),
            varying: Vec::new(),
            other: Vec::new(),
            sc: AxisScratch::default(),
        }
    }

    fn weights(&self, i: usize, which: Which) -> (f64, f64) {
        let pi = self.pis[i];
        match which {
            Which::Tumour => (pi.pi0, pi.pi1),
            Which::Background => (1.0 - pi.pi0, 1.0 - pi.pi1),
        }
    }

    fn fill(&mut self, i: usize, p: &ComponentParams, which: Which, into_other: bool) {
        let m = self.lik.m;
        let (w0, w1) = self.weights(i, which);
        let mids = &self.mids[2 * m * i..2 * m * (i + 1)];
        let out = if into_other { &mut self.other } else { &mut self.varying };
        fill_component_log_masses(p, w0, w1, &self.grids[i], &mids[..m], &mids[m..], &self.lik, out, &mut self.sc);
    }

    /// Cache the masses of the component that stays fixed.
    fn cache_fixed(&mut self, p: &ComponentParams, which: Which) {
        let mm = self.lik.m * self.lik.m;
        self.cache.clear();
        self.cache.reserve(mm * self.grids.len());
        for i in 0..self.grids.len() {
            self.fill(i, p, which, true);
            self.cache.extend_from_slice(&self.other);
        }
    }

    /// Objective with component `which` set to `p` and the other taken from the cache.
    fn eval_varying(&mut self, p: &ComponentParams, which: Which) -> f64 {
        let mm = self.lik.m * self.lik.m;
        let mut acc = 0.0;
        for i in 0..self.grids.len() {
            self.fill(i, p, which, false);
            match floored_ln(convolve_top_right_log(&self.varying, &self.cache[i * mm..(i + 1) * mm])) {
                Some((v, _)) => acc += v,
                None => return f64::NAN,
            }
        }
        acc
    }

    fn eval_both(&mut self, theta: &FeatureTheta) -> f64 {
        let mut acc = 0.0;
        for i in 0..self.grids.len() {
            self.fill(i, &theta.tumour, Which::Tumour, false);
            self.fill(i, &theta.background, Which::Background, true);
            match floored_ln(convolve_top_right_log(&self.varying, &self.other)) {
                Some((v, _)) => acc += v,
                None => return f64::NAN,
            }
        }
        acc
    }
}

fn component(theta: &mut FeatureTheta, which: Which) -> &mut ComponentParams {
    match which {
        Which::Tumour => &mut theta.tumour,
        Which::Background => &mut theta.background,
    }
}

/// Update the correlations of every feature with fractions and the other
/// feature parameters fixed. Correlations stay within `[-RHO_BOUND, RHO_BOUND]`.
pub fn step_rho(data: &Dataset, pis: &[TumourFractions], thetas: &[FeatureTheta], cfg: &FitConfig) -> Result<Vec<FeatureTheta>> {
    cfg.validate()?;
    check_dims(data, pis, thetas)?;
    if cfg.rho_mode == RhoMode::Zero {
        return invalid("step_rho called with correlations fixed at zero");
    }
    let lik = cfg.likelihood();
    Ok((0..data.n_features())
        .into_par_iter()
        .map(|j| {
            let mut theta = thetas[j];
            project_rho(&mut theta, cfg.rho_mode);
            let mut work = FeatureWork::new(data, j, pis, lik);
            let bracket = (-RHO_BOUND, RHO_BOUND);
            match cfg.rho_mode {
                RhoMode::Shared => {
                    // A single coordinate converges in one search.
                    let current = work.eval_both(&theta);
                    let r = improve_coordinate(
                        |x| {
                            let mut t = theta;
                            t.tumour.rho = x;
                            t.background.rho = x;
                            work.eval_both(&t)
                        },
                        theta.tumour.rho,
                        current,
                        bracket,
                        cfg.scalar_tol,
                        false,
                    );
                    theta.tumour.rho = r.x;
                    theta.background.rho = r.x;
                }
                _ => {
                    let mut current = work.eval_both(&theta);
                    for _ in 0..cfg.max_cycles {
                        let before = current;
                        for which in [Which::Tumour, Which::Background] {
                            let fixed = match which {
                                Which::Tumour => (theta.background, Which::Background),
                                Which::Background => (theta.tumour, Which::Tumour),
                            };
                            work.cache_fixed(&fixed.0, fixed.1);
                            let base = *component(&mut theta, which);
                            let r = improve_coordinate(
                                |x| work.eval_varying(&ComponentParams { rho: x, ..base }, which),
                                base.rho,
                                current,
                                bracket,
                                cfg.scalar_tol,
                                false,
                            );
                            component(&mut theta, which).rho = r.x;
                            current = r.value;
                        }
                        if !(current - before >= cfg.scalar_tol) {
                            break;
                        }
                    }
                }
            }
            theta
        })
        .collect())
}

/// Update log-means and log-variances of every feature with fractions and
/// correlations fixed. Tumour log-means are kept above background log-means
/// on each axis by bounding the search brackets.
pub fn step_mu_tau(data: &Dataset, pis: &[TumourFractions], thetas: &[FeatureTheta], cfg: &FitConfig) -> Result<Vec<FeatureTheta>> {
    cfg.validate()?;
    check_dims(data, pis, thetas)?;
    let lik = cfg.likelihood();
    Ok((0..data.n_features())
        .into_par_iter()
        .map(|j| {
            let mut theta = thetas[j];
            let mut work = FeatureWork::new(data, j, pis, lik);
            let mut current = work.eval_both(&theta);
            for _ in 0..cfg.max_cycles {
                let before = current;
                for which in [Which::Tumour, Which::Background] {
                    let fixed = match which {
                        Which::Tumour => (theta.background, Which::Background),
                        Which::Background => (theta.tumour, Which::Tumour),
                    };
                    work.cache_fixed(&fixed.0, fixed.1);
                    for coord in 0..4 {
                        let base = *component(&mut theta, which);
                        let (x, bracket) = coordinate_bracket(&theta, which, coord, cfg);
                        let r = improve_coordinate(
                            |v| work.eval_varying(&with_coordinate(base, coord, v), which),
                            x,
                            current,
                            bracket,
                            cfg.scalar_tol,
                            false,
                        );
                        *component(&mut theta, which) = with_coordinate(base, coord, r.x);
                        current = r.value;
                    }
                }
                if !(current - before >= cfg.scalar_tol) {
                    break;
                }
            }
            theta
        })
        .collect())
}

fn with_coordinate(p: ComponentParams, coord: usize, v: f64) -> ComponentParams {
    match coord {
        0 => ComponentParams { mu0: v, ..p },
        1 => ComponentParams { mu1: v, ..p },
        2 => ComponentParams { tau0: v, ..p },
        _ => ComponentParams { tau1: v, ..p },
    }
}

fn coordinate_bracket(theta: &FeatureTheta, which: Which, coord: usize, cfg: &FitConfig) -> (f64, (f64, f64)) {
    let (own, other) = match which {
        Which::Tumour => (theta.tumour, theta.background),
        Which::Background => (theta.background, theta.tumour),
    };
    match coord {
        0 | 1 => {
            let (x, limit) = if coord == 0 { (own.mu0, other.mu0) } else { (own.mu1, other.mu1) };
            let (mut lo, mut hi) = (x - cfg.mean_step, x + cfg.mean_step);
            match which {
                Which::Tumour => lo = lo.max(limit + MEAN_GAP),
                Which::Background => hi = hi.min(limit - MEAN_GAP),
            }
            (x, (lo, hi))
        }
        _ => {
            let x = if coord == 2 { own.tau0 } else { own.tau1 };
            (x, ((x / cfg.var_factor).max(TAU_MIN), x * cfg.var_factor))
        }
    }
}

/// Pairs whose likelihood is not finite under the given parameters.
fn nonfinite_pairs(data: &Dataset, pis: &[TumourFractions], thetas: &[FeatureTheta], lik: LikelihoodConfig) -> Vec<(usize, usize)> {
    let mut ev = PairEvaluator::new(lik);
    let mut bad = Vec::new();
    for (i, pi) in pis.iter().enumerate() {
        for (j, th) in thetas.iter().enumerate() {
            match ev.eval(data.get(i, j), pi, th) {
                Some(v) if v.loglik.is_finite() => {}
                _ => bad.push((i, j)),
            }
        }
    }
    bad
}

/// Fit tumour fractions and feature parameters by block coordinate ascent.
pub fn fit(data: &Dataset, init: &[FeatureTheta], cfg: &FitConfig) -> Result<FitResult> {
    let pis = vec![cfg.pi_init; data.n_patients()];
    fit_from(data, init, &pis, cfg)
}

/// [`fit`] with explicit starting fractions.
pub fn fit_from(data: &Dataset, init: &[FeatureTheta], pi_start: &[TumourFractions], cfg: &FitConfig) -> Result<FitResult> {
    fit_with_observer(data, init, pi_start, cfg, |_, _, _| {})
}

/// [`fit_from`] that reports the state after every block step to `observe`.
pub fn fit_with_observer<F>(
    data: &Dataset,
    init: &[FeatureTheta],
    pi_start: &[TumourFractions],
    cfg: &FitConfig,
    mut observe: F,
) -> Result<FitResult>
where
    F: FnMut(&TraceEntry, &[TumourFractions], &[FeatureTheta]),
{
    cfg.validate()?;
    check_dims(data, pi_start, init)?;
    if let Some(p) = pi_start.iter().find(|p| !p.is_feasible()) {
        return invalid(format!("infeasible starting fractions {p:?}"));
    }
    let mut theta = init.to_vec();
    for (j, t) in theta.iter_mut().enumerate() {
        project_rho(t, cfg.rho_mode);
        t.tumour.validate()?;
        t.background.validate()?;
        if !t.is_hypermethylated() {
            return invalid(format!(
                "feature {} violates the tumour > background log-mean constraint: {t:?}",
                data.feature_ids()[j]
            ));
        }
    }
    let mut pis = pi_start.to_vec();
    let lik = cfg.likelihood();

    let bad = nonfinite_pairs(data, &pis, &theta, lik);
    if !bad.is_empty() {
        return Err(Error::Initialisation(bad));
    }
    let initial_loglik = total_loglik_detail(data, &pis, &theta, &lik)?.loglik;

    let mut trace = Vec::new();
    let mut failures = Vec::new();
    let mut sweep_start = initial_loglik;
    let mut converged = false;
    for sweep in 1..=cfg.iterations {
        let step = step_pi(data, &theta, &pis, cfg)?;
        pis = step.pi;
        failures.extend(step.failed);
        record(data, &pis, &theta, &lik, sweep, Block::Pi, &mut trace, &mut observe)?;

        if cfg.rho_mode != RhoMode::Zero {
            theta = step_rho(data, &pis, &theta, cfg)?;
            record(data, &pis, &theta, &lik, sweep, Block::Rho, &mut trace, &mut observe)?;
        }

        theta = step_mu_tau(data, &pis, &theta, cfg)?;
        let end = record(data, &pis, &theta, &lik, sweep, Block::MuTau, &mut trace, &mut observe)?;
        converged = (end - sweep_start).abs() < 1e-3;
        sweep_start = end;
    }

    let detail = total_loglik_detail(data, &pis, &theta, &lik)?;
    let features = theta
        .iter()
        .zip(&detail.floored_per_feature)
        .map(|(t, &floored_pairs)| FeatureDiagnostics {
            rho_clamped: t.tumour.rho.abs() >= RHO_BOUND || t.background.rho.abs() >= RHO_BOUND,
            floored_pairs,
        })
        .collect();
    failures.sort_unstable();
    failures.dedup();
    Ok(FitResult {
        pi: pis,
        theta,
        initial_loglik,
        trace,
        converged,
        features,
        pi_failures: failures,
    })
}

#[allow(clippy::too_many_arguments)]
fn record<F>(
    data: &Dataset,
    pis: &[TumourFractions],
    theta: &[FeatureTheta],
    lik: &LikelihoodConfig,
    sweep: usize,
    block: Block,
    trace: &mut Vec<TraceEntry>,
    observe: &mut F,
) -> Result<f64>
where
    F: FnMut(&TraceEntry, &[TumourFractions], &[FeatureTheta]),
{
    let loglik = total_loglik_detail(data, pis, theta, lik)?.loglik;
    let entry = TraceEntry { sweep, block, loglik };
    observe(&entry, pis, theta);
    trace.push(entry);
    Ok(loglik)
}
