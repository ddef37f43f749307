//! Bivariate log-normal components and the parameter types they act on.
//!
//! A component is parameterised on the log scale by its two means, two
//! variances and a correlation. The covariance is never stored; it is
//! `rho * sqrt(tau0 * tau1)`.

mod normal;

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

pub use normal::{norm_cdf, norm_pdf, std_binorm_cdf};
pub(crate) use normal::upper_orthant;

/// Correlations are kept inside this bound while optimising.
pub const RHO_BOUND: f64 = 0.999;

/// Log-scale parameters of one bivariate log-normal component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct ComponentParams {
    /// Log-scale mean, pre-surgery.
    pub mu0: f64,
    /// Log-scale mean, post-surgery.
    pub mu1: f64,
    /// Log-scale variance, pre-surgery.
    pub tau0: f64,
    /// Log-scale variance, post-surgery.
    pub tau1: f64,
    /// Correlation of the two log-scale coordinates.
    pub rho: f64,
}

impl ComponentParams {
    pub fn new(mu0: f64, mu1: f64, tau0: f64, tau1: f64, rho: f64) -> Result<Self> {
        let p = Self { mu0, mu1, tau0, tau1, rho };
        p.validate()?;
        Ok(p)
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.mu0.is_finite() && self.mu1.is_finite()) {
            return invalid(format!("non-finite log-mean in {self:?}"));
        }
        if !(self.tau0 > 0.0 && self.tau1 > 0.0 && self.tau0.is_finite() && self.tau1.is_finite()) {
            return invalid(format!("log-variances must be positive and finite in {self:?}"));
        }
        if !(self.rho.abs() < 1.0) {
            return invalid(format!("|rho| must be < 1 in {self:?}"));
        }
        Ok(())
    }

    /// Covariance of the two log-scale coordinates.
    pub fn covariance(&self) -> f64 {
        self.rho * (self.tau0 * self.tau1).sqrt()
    }

    /// Log-density at (x0, x1), both strictly positive. No validation.
    #[inline]
    pub(crate) fn ln_pdf_unchecked(&self, x0: f64, x1: f64) -> f64 {
        let (l0, l1) = (x0.ln(), x1.ln());
        let z0 = (l0 - self.mu0) / self.tau0.sqrt();
        let z1 = (l1 - self.mu1) / self.tau1.sqrt();
        let omr2 = 1.0 - self.rho * self.rho;
        let q = (z0 * z0 - 2.0 * self.rho * z0 * z1 + z1 * z1) / omr2;
        -(2.0 * std::f64::consts::PI).ln() - 0.5 * (self.tau0 * self.tau1 * omr2).ln() - l0 - l1 - 0.5 * q
    }

    /// CDF at (x0, x1) with x0, x1 >= 0. No validation.
    #[inline]
    pub(crate) fn cdf_unchecked(&self, x0: f64, x1: f64) -> f64 {
        if x0 <= 0.0 || x1 <= 0.0 {
            return 0.0;
        }
        let a = (x0.ln() - self.mu0) / self.tau0.sqrt();
        let b = (x1.ln() - self.mu1) / self.tau1.sqrt();
        upper_orthant(-a, -b, self.rho)
    }
}

/// Mean shift of a component, used to fold a mixing weight `w` into the
/// log-means as `mu + ln w`.
pub fn shift_params(p: &ComponentParams, delta0: f64, delta1: f64) -> Result<ComponentParams> {
    if !(delta0.is_finite() && delta1.is_finite()) {
        return invalid(format!("shift must be finite, got ({delta0}, {delta1})"));
    }
    Ok(ComponentParams {
        mu0: p.mu0 + delta0,
        mu1: p.mu1 + delta1,
        ..*p
    })
}

/// Bivariate log-normal density at (x0, x1).
pub fn biv_lognormal_pdf(x0: f64, x1: f64, p: &ComponentParams) -> Result<f64> {
    if !(x0 > 0.0 && x1 > 0.0) {
        return invalid(format!("pdf arguments must be positive, got ({x0}, {x1})"));
    }
    p.validate()?;
    Ok(p.ln_pdf_unchecked(x0, x1).exp())
}

/// Bivariate log-normal CDF, `P(X0 <= x0, X1 <= x1)`; zero on the axes.
pub fn biv_lognormal_cdf(x0: f64, x1: f64, p: &ComponentParams) -> Result<f64> {
    if !(x0 >= 0.0 && x1 >= 0.0) {
        return invalid(format!("cdf arguments must be non-negative, got ({x0}, {x1})"));
    }
    p.validate()?;
    Ok(p.cdf_unchecked(x0, x1))
}

/// Univariate log-normal CDF with log-mean `mu` and log-variance `tau`.
#[inline]
pub(crate) fn lognormal_cdf(x: f64, mu: f64, tau: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    norm_cdf((x.ln() - mu) / tau.sqrt())
}

/// Parameters of both latent components for one feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct FeatureTheta {
    pub tumour: ComponentParams,
    pub background: ComponentParams,
}

impl FeatureTheta {
    /// True when the tumour log-mean exceeds the background log-mean on both axes.
    pub fn is_hypermethylated(&self) -> bool {
        self.tumour.mu0 > self.background.mu0 && self.tumour.mu1 > self.background.mu1
    }

    /// Exchange the tumour and background roles.
    pub fn swapped(&self) -> Self {
        Self {
            tumour: self.background,
            background: self.tumour,
        }
    }
}

/// Per-patient tumour fractions before (`pi0`) and after (`pi1`) surgery.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TumourFractions {
    pub pi0: f64,
    pub pi1: f64,
}

impl TumourFractions {
    /// Checked constructor enforcing `0 <= pi1 <= pi0 < 1`.
    pub fn new(pi0: f64, pi1: f64) -> Result<Self> {
        if !(0.0 <= pi1 && pi1 <= pi0 && pi0 < 1.0) {
            return invalid(format!("tumour fractions must satisfy 0 <= pi1 <= pi0 < 1, got ({pi0}, {pi1})"));
        }
        Ok(Self { pi0, pi1 })
    }

    pub fn is_feasible(&self) -> bool {
        0.0 <= self.pi1 && self.pi1 <= self.pi0 && self.pi0 < 1.0
    }

    /// `(1 - pi0, 1 - pi1)`; the weights of the background component.
    pub fn complement(&self) -> Self {
        Self {
            pi0: 1.0 - self.pi0,
            pi1: 1.0 - self.pi1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use rand_distr::StandardNormal;

    fn uni_lognormal_pdf(x: f64, mu: f64, tau: f64) -> f64 {
        let z = (x.ln() - mu) / tau.sqrt();
        norm_pdf(z) / (x * tau.sqrt())
    }

    #[test]
    fn shift_identity_and_log_half() {
        let p = ComponentParams::new(2.0, 3.0, 0.5, 0.7, 0.3).unwrap();
        assert_eq!(shift_params(&p, 0.0, 0.0).unwrap(), p);
        let q = shift_params(&p, 0.5f64.ln(), 0.5f64.ln()).unwrap();
        assert!((q.mu0 - (2.0 - std::f64::consts::LN_2)).abs() < 1e-15);
        assert!((q.mu1 - (3.0 - std::f64::consts::LN_2)).abs() < 1e-15);
        assert_eq!((q.tau0, q.tau1, q.rho), (p.tau0, p.tau1, p.rho));
        assert!(shift_params(&p, f64::NEG_INFINITY, 0.0).is_err());
        assert!(shift_params(&p, 0.0, f64::NAN).is_err());
    }

    #[test]
    fn scaled_sample_log_mean_matches_shift() {
        // Scaling log-normal draws by 0.5 moves the log-mean by ln 0.5.
        let (mu, tau) = (2.0f64, 0.6f64);
        let mut rng = ChaCha8Rng::seed_from_u64(7);
        let n = 1_000_000;
        let mut sum = 0.0;
        let mut sumsq = 0.0;
        for _ in 0..n {
            let z: f64 = rng.sample(StandardNormal);
            let x = 0.5 * (mu + tau.sqrt() * z).exp();
            let l = x.ln();
            sum += l;
            sumsq += l * l;
        }
        let mean = sum / n as f64;
        let se = ((sumsq / n as f64 - mean * mean) / n as f64).sqrt();
        let shifted = shift_params(&ComponentParams::new(mu, mu, tau, tau, 0.0).unwrap(), 0.5f64.ln(), 0.0).unwrap();
        assert!((mean - shifted.mu0).abs() < 3.0 * se, "{mean} vs {}", shifted.mu0);
    }

    #[test]
    fn pdf_factorises_without_correlation() {
        let p = ComponentParams::new(1.0, -0.5, 0.4, 1.3, 0.0).unwrap();
        for &(x0, x1) in &[(0.3, 0.2), (2.7, 0.6), (10.0, 3.0)] {
            let got = biv_lognormal_pdf(x0, x1, &p).unwrap();
            let want = uni_lognormal_pdf(x0, 1.0, 0.4) * uni_lognormal_pdf(x1, -0.5, 1.3);
            assert!((got - want).abs() < 1e-14 * want.max(1.0));
        }
    }

    #[test]
    fn pdf_at_log_mean() {
        let p = ComponentParams::new(0.7, 1.9, 1.0, 1.0, 0.0).unwrap();
        let (x0, x1) = (0.7f64.exp(), 1.9f64.exp());
        let want = 1.0 / (2.0 * std::f64::consts::PI * x0 * x1);
        assert!((biv_lognormal_pdf(x0, x1, &p).unwrap() - want).abs() < 1e-15);
    }

    #[test]
    fn pdf_and_cdf_reject_bad_arguments() {
        let p = ComponentParams::new(0.0, 0.0, 1.0, 1.0, 0.5).unwrap();
        assert!(biv_lognormal_pdf(0.0, 1.0, &p).is_err());
        assert!(biv_lognormal_pdf(1.0, -2.0, &p).is_err());
        assert!(biv_lognormal_cdf(-1.0, 1.0, &p).is_err());
        assert!(ComponentParams::new(0.0, 0.0, 0.0, 1.0, 0.0).is_err());
        assert!(ComponentParams::new(0.0, 0.0, 1.0, 1.0, 1.0).is_err());
        assert!(ComponentParams::new(0.0, 0.0, 1.0, 1.0, -1.0).is_err());
    }

    #[test]
    fn cdf_on_axes_and_factorised() {
        let p = ComponentParams::new(0.5, 1.5, 0.3, 0.8, 0.0).unwrap();
        assert_eq!(biv_lognormal_cdf(0.0, 5.0, &p).unwrap(), 0.0);
        assert_eq!(biv_lognormal_cdf(5.0, 0.0, &p).unwrap(), 0.0);
        for &(x0, x1) in &[(0.5, 1.0), (1.6, 4.5), (9.0, 30.0)] {
            let got = biv_lognormal_cdf(x0, x1, &p).unwrap();
            let want = lognormal_cdf(x0, 0.5, 0.3) * lognormal_cdf(x1, 1.5, 0.8);
            assert!((got - want).abs() < 1e-14);
        }
        let q = ComponentParams::new(0.5, 1.5, 0.3, 0.8, 0.9).unwrap();
        assert!((biv_lognormal_cdf(1e12, 1e12, &q).unwrap() - 1.0).abs() < 1e-6);
    }

    #[test]
    fn shifted_density_is_change_of_variables() {
        // X scaled by c per coordinate: pdf_cX(x) = pdf_X(x0/c0, x1/c1) / (c0 c1).
        let p = ComponentParams::new(1.2, 0.4, 0.5, 0.9, -0.6).unwrap();
        let (c0, c1) = (0.3, 0.05);
        let q = shift_params(&p, f64::ln(c0), f64::ln(c1)).unwrap();
        for &(x0, x1) in &[(0.4, 0.02), (1.1, 0.09), (3.0, 0.2)] {
            let lhs = biv_lognormal_pdf(x0, x1, &q).unwrap();
            let rhs = biv_lognormal_pdf(x0 / c0, x1 / c1, &p).unwrap() / (c0 * c1);
            assert!((lhs - rhs).abs() < 1e-12 * rhs.max(1e-300));
        }
    }

    #[test]
    fn fractions_constraint() {
        assert!(TumourFractions::new(0.3, 0.1).is_ok());
        assert!(TumourFractions::new(0.2, 0.2).is_ok());
        assert!(TumourFractions::new(0.1, 0.2).is_err());
        assert!(TumourFractions::new(1.0, 0.0).is_err());
        assert!(TumourFractions::new(0.5, -0.1).is_err());
    }

    proptest! {
        #[test]
        fn pdf_non_negative_and_cdf_monotone(
            mu0 in -3.0f64..3.0, mu1 in -3.0f64..3.0,
            tau0 in 0.05f64..2.0, tau1 in 0.05f64..2.0, rho in -0.99f64..0.99,
            x0 in 0.01f64..20.0, x1 in 0.01f64..20.0, dx in 0.0f64..5.0,
        ) {
            let p = ComponentParams::new(mu0, mu1, tau0, tau1, rho).unwrap();
            prop_assert!(biv_lognormal_pdf(x0, x1, &p).unwrap() >= 0.0);
            let f = biv_lognormal_cdf(x0, x1, &p).unwrap();
            prop_assert!(biv_lognormal_cdf(x0 + dx, x1, &p).unwrap() >= f - 1e-15);
            prop_assert!(biv_lognormal_cdf(x0, x1 + dx, &p).unwrap() >= f - 1e-15);
        }

        #[test]
        fn binorm_exchange_symmetry(a in -6.0f64..6.0, b in -6.0f64..6.0, rho in -0.999f64..0.999) {
            let lhs = std_binorm_cdf(a, b, rho).unwrap();
            let rhs = std_binorm_cdf(b, a, rho).unwrap();
            prop_assert!((lhs - rhs).abs() < 1e-14);
        }
    }
}
