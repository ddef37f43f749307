//! Synthetic cohorts drawn from the generative model.
//!
//! Each observation is `(pi * T + (1 - pi) * B) * exp(eps)` with `T` and `B`
//! bivariate log-normal and `eps` independent Gaussian measurement noise.

use rand::seq::index;
use rand::Rng;
use rand_distr::{Beta, Distribution, Exp, StandardNormal};
use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairedObservation};
use crate::error::{invalid, Result};
use crate::estimator::ReferenceProfile;
use crate::evaluation::OutcomeRecord;
use crate::model::{ComponentParams, FeatureTheta, TumourFractions, RHO_BOUND};
use crate::rng::{indexed_substream, substream};

/// Largest simulated `pi0`; keeps the background weight away from zero.
pub const PI0_MAX: f64 = 0.95;

/// Distributions for feature parameters when no reference profile is given.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ParametricProfile {
    /// Background log-mean ~ N(mean, sd^2).
    pub background_mean: (f64, f64),
    /// Tumour log-mean ~ N(mean, sd^2), floored at background + `min_gap`.
    pub tumour_mean: (f64, f64),
    pub min_gap: f64,
    /// Log-variances ~ U(lo, hi).
    pub background_var: (f64, f64),
    pub tumour_var: (f64, f64),
    /// Sd of the shift between the two background measurements; applied to
    /// the log-mean additively and to the log-variance multiplicatively.
    pub background_drift_sd: f64,
}

impl Default for ParametricProfile {
    fn default() -> Self {
        Self {
            background_mean: (1.5, 0.4),
            tumour_mean: (3.0, 0.5),
            min_gap: 0.5,
            background_var: (0.15, 0.6),
            tumour_var: (0.5, 1.5),
            background_drift_sd: 0.1,
        }
    }
}

/// Simulation settings. `zero_fraction_post` patients, chosen at random,
/// have no tumour left at the second measurement.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub n_patients: usize,
    pub n_features: usize,
    pub noise_sd: f64,
    pub rho_t_range: (f64, f64),
    pub rho_b_range: (f64, f64),
    pub zero_fraction_post: f64,
    pub seed: u64,
    /// `pi0 ~ Beta(a, b)`, capped at [`PI0_MAX`].
    pub pi0_beta: (f64, f64),
    /// `pi1 = d * pi0` with `d ~ U(0, post_ratio_max)` for patients with residual tumour.
    pub post_ratio_max: f64,
    pub profile: ParametricProfile,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n_patients: 100,
            n_features: 600,
            noise_sd: 0.1,
            rho_t_range: (0.9, 1.0),
            rho_b_range: (0.5, 1.0),
            zero_fraction_post: 0.5,
            seed: 1,
            pi0_beta: (2.0, 8.0),
            post_ratio_max: 0.5,
            profile: ParametricProfile::default(),
        }
    }
}

fn check_range(name: &str, (lo, hi): (f64, f64), min: f64, max: f64) -> Result<()> {
    if !(lo <= hi && lo >= min && hi <= max) {
        return invalid(format!("{name} range ({lo}, {hi}) must be ordered and within [{min}, {max}]"));
    }
    Ok(())
}

impl SimConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_patients == 0 || self.n_features == 0 {
            return invalid("n_patients and n_features must be positive");
        }
        if !(self.noise_sd >= 0.0 && self.noise_sd.is_finite()) {
            return invalid(format!("noise_sd must be finite and >= 0, got {}", self.noise_sd));
        }
        check_range("rho_t", self.rho_t_range, -1.0, 1.0)?;
        check_range("rho_b", self.rho_b_range, -1.0, 1.0)?;
        if !(0.0..=1.0).contains(&self.zero_fraction_post) {
            return invalid(format!("zero_fraction_post must lie in [0, 1], got {}", self.zero_fraction_post));
        }
        if !(self.pi0_beta.0 > 0.0 && self.pi0_beta.1 > 0.0) {
            return invalid("pi0_beta parameters must be positive");
        }
        if !(0.0..=1.0).contains(&self.post_ratio_max) {
            return invalid("post_ratio_max must lie in [0, 1]");
        }
        let p = &self.profile;
        check_range("background_var", p.background_var, f64::MIN_POSITIVE, f64::INFINITY)?;
        check_range("tumour_var", p.tumour_var, f64::MIN_POSITIVE, f64::INFINITY)?;
        if !(p.background_mean.1 >= 0.0 && p.tumour_mean.1 >= 0.0 && p.background_drift_sd >= 0.0 && p.min_gap > 0.0) {
            return invalid("profile sds must be >= 0 and min_gap > 0");
        }
        Ok(())
    }
}

/// Ground truth of a simulated cohort.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SimTruth {
    pub pi: Vec<TumourFractions>,
    pub theta: Vec<FeatureTheta>,
}

fn uniform<R: Rng>(rng: &mut R, (lo, hi): (f64, f64)) -> f64 {
    lo + (hi - lo) * rng.random::<f64>()
}

fn normal<R: Rng>(rng: &mut R, (mean, sd): (f64, f64)) -> f64 {
    let z: f64 = StandardNormal.sample(rng);
    mean + sd * z
}

/// Draw true fractions and feature parameters.
///
/// With reference profiles, tumour and background parameters of every
/// feature come from them (both measurements share mean and variance);
/// `n_features` must then match the profile size. Correlations are drawn
/// from the configured ranges and clamped to `RHO_BOUND`.
pub fn sample_truth(cfg: &SimConfig, reference: Option<(&ReferenceProfile, &ReferenceProfile)>) -> Result<SimTruth> {
    cfg.validate()?;
    let theta = match reference {
        None => (0..cfg.n_features)
            .map(|j| sample_parametric(cfg, j))
            .collect::<Result<Vec<_>>>()?,
        Some((tumour, background)) => {
            if tumour.len() != cfg.n_features {
                return invalid(format!(
                    "reference profile has {} features but n_features is {}",
                    tumour.len(),
                    cfg.n_features
                ));
            }
            tumour
                .iter()
                .enumerate()
                .map(|(j, (id, t))| {
                    let Some(b) = background.get(id) else {
                        return invalid(format!("feature {id} missing from the background reference"));
                    };
                    let mut rng = indexed_substream(cfg.seed, "theta-rho", j as u64);
                    let rt = uniform(&mut rng, cfg.rho_t_range).clamp(-RHO_BOUND, RHO_BOUND);
                    let rb = uniform(&mut rng, cfg.rho_b_range).clamp(-RHO_BOUND, RHO_BOUND);
                    Ok(FeatureTheta {
                        tumour: ComponentParams::new(t.log_mean, t.log_mean, t.log_var, t.log_var, rt)?,
                        background: ComponentParams::new(b.log_mean, b.log_mean, b.log_var, b.log_var, rb)?,
                    })
                })
                .collect::<Result<Vec<_>>>()?
        }
    };
    Ok(SimTruth {
        pi: sample_fractions(cfg)?,
        theta,
    })
}

fn sample_parametric(cfg: &SimConfig, j: usize) -> Result<FeatureTheta> {
    let p = &cfg.profile;
    let mut rng = indexed_substream(cfg.seed, "theta", j as u64);
    let b_mu0 = normal(&mut rng, p.background_mean);
    let b_mu1 = b_mu0 + normal(&mut rng, (0.0, p.background_drift_sd));
    let t_mu = normal(&mut rng, p.tumour_mean).max(b_mu0.max(b_mu1) + p.min_gap);
    let b_tau0 = uniform(&mut rng, p.background_var);
    let b_tau1 = b_tau0 * normal(&mut rng, (0.0, p.background_drift_sd)).exp();
    let t_tau = uniform(&mut rng, p.tumour_var);
    let rt = uniform(&mut rng, cfg.rho_t_range).clamp(-RHO_BOUND, RHO_BOUND);
    let rb = uniform(&mut rng, cfg.rho_b_range).clamp(-RHO_BOUND, RHO_BOUND);
    Ok(FeatureTheta {
        tumour: ComponentParams::new(t_mu, t_mu, t_tau, t_tau, rt)?,
        background: ComponentParams::new(b_mu0, b_mu1, b_tau0, b_tau1, rb)?,
    })
}

fn sample_fractions(cfg: &SimConfig) -> Result<Vec<TumourFractions>> {
    let n = cfg.n_patients;
    let beta = Beta::new(cfg.pi0_beta.0, cfg.pi0_beta.1).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
    let mut rng = substream(cfg.seed, "pi");
    let mut pis: Vec<TumourFractions> = (0..n)
        .map(|_| {
            let pi0 = beta.sample(&mut rng).min(PI0_MAX);
            let d = uniform(&mut rng, (0.0, cfg.post_ratio_max));
            TumourFractions { pi0, pi1: d * pi0 }
        })
        .collect();
    let n_zero = (cfg.zero_fraction_post * n as f64).round() as usize;
    let mut zrng = substream(cfg.seed, "pi-zero");
    for i in index::sample(&mut zrng, n, n_zero.min(n)) {
        pis[i].pi1 = 0.0;
    }
    Ok(pis)
}

/// Draw observations for a known truth. Feature `j` uses its own substream,
/// so a feature's data do not depend on how many features are simulated.
pub fn simulate_dataset(truth: &SimTruth, noise_sd: f64, seed: u64) -> Result<Dataset> {
    if !(noise_sd >= 0.0 && noise_sd.is_finite()) {
        return invalid(format!("noise_sd must be finite and >= 0, got {noise_sd}"));
    }
    let n = truth.pi.len();
    let p = truth.theta.len();
    let mut obs = vec![PairedObservation { y0: 0.0, y1: 0.0 }; n * p];
    for (j, th) in truth.theta.iter().enumerate() {
        th.tumour.validate()?;
        th.background.validate()?;
        let mut rng = indexed_substream(seed, "observations", j as u64);
        for (i, pi) in truth.pi.iter().enumerate() {
            let (t0, t1) = draw_lognormal_pair(&mut rng, &th.tumour);
            let (b0, b1) = draw_lognormal_pair(&mut rng, &th.background);
            let e0: f64 = StandardNormal.sample(&mut rng);
            let e1: f64 = StandardNormal.sample(&mut rng);
            obs[i * p + j] = PairedObservation {
                y0: (pi.pi0 * t0 + (1.0 - pi.pi0) * b0) * (noise_sd * e0).exp(),
                y1: (pi.pi1 * t1 + (1.0 - pi.pi1) * b1) * (noise_sd * e1).exp(),
            };
        }
    }
    Dataset::from_matrix(n, p, obs)
}

/// One draw of a bivariate log-normal pair.
pub fn draw_lognormal_pair<R: Rng>(rng: &mut R, p: &ComponentParams) -> (f64, f64) {
    let z0: f64 = StandardNormal.sample(rng);
    let e: f64 = StandardNormal.sample(rng);
    let z1 = p.rho * z0 + (1.0 - p.rho * p.rho).max(0.0).sqrt() * e;
    ((p.mu0 + p.tau0.sqrt() * z0).exp(), (p.mu1 + p.tau1.sqrt() * z1).exp())
}

/// Settings for synthetic outcomes: exponential relapse times whose median
/// depends on whether tumour remains after treatment, censored at `follow_up_days`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutcomeConfig {
    pub median_days_residual: f64,
    pub median_days_clear: f64,
    pub follow_up_days: f64,
    pub seed: u64,
}

impl Default for OutcomeConfig {
    fn default() -> Self {
        Self {
            median_days_residual: 250.0,
            median_days_clear: 2000.0,
            follow_up_days: 1095.0,
            seed: 7,
        }
    }
}

/// Synthetic outcomes driven by the true post-treatment fraction.
pub fn simulate_outcomes(patient_ids: &[String], pi: &[TumourFractions], cfg: &OutcomeConfig) -> Result<Vec<OutcomeRecord>> {
    if patient_ids.len() != pi.len() {
        return invalid(format!("{} patient ids for {} fractions", patient_ids.len(), pi.len()));
    }
    if !(cfg.median_days_residual > 0.0 && cfg.median_days_clear > 0.0 && cfg.follow_up_days > 0.0) {
        return invalid("outcome medians and follow-up must be positive");
    }
    let mut rng = substream(cfg.seed, "outcomes");
    patient_ids
        .iter()
        .zip(pi)
        .map(|(id, p)| {
            let median = if p.pi1 > 0.0 { cfg.median_days_residual } else { cfg.median_days_clear };
            let exp = Exp::new(std::f64::consts::LN_2 / median).map_err(|e| crate::Error::InvalidArgument(e.to_string()))?;
            let t: f64 = exp.sample(&mut rng);
            let event = t <= cfg.follow_up_days;
            Ok(OutcomeRecord {
                patient_id: id.clone(),
                relapse_1yr: event && t <= 365.0,
                time_days: t.min(cfg.follow_up_days),
                event,
                group: false,
            })
        })
        .collect()
}
