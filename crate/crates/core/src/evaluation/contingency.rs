use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// 2x2 table `[[a, b], [c, d]]`: rows are predictor 1/0, columns outcome 1/0.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Table2x2 {
    pub a: u64,
    pub b: u64,
    pub c: u64,
    pub d: u64,
}

impl Table2x2 {
    pub fn from_binary(predictor: &[bool], outcome: &[bool]) -> Result<Self> {
        if predictor.len() != outcome.len() {
            return Err(Error::InvalidArgument(format!(
                "length mismatch: {} vs {}",
                predictor.len(),
                outcome.len()
            )));
        }
        let mut t = Self { a: 0, b: 0, c: 0, d: 0 };
        for (&x, &y) in predictor.iter().zip(outcome) {
            match (x, y) {
                (true, true) => t.a += 1,
                (true, false) => t.b += 1,
                (false, true) => t.c += 1,
                (false, false) => t.d += 1,
            }
        }
        Ok(t)
    }

    pub fn total(&self) -> u64 {
        self.a + self.b + self.c + self.d
    }
}

fn ln_factorials(n: u64) -> Vec<f64> {
    let mut out = Vec::with_capacity(n as usize + 1);
    let mut acc = 0.0;
    out.push(0.0);
    for k in 1..=n {
        acc += (k as f64).ln();
        out.push(acc);
    }
    out
}

/// Two-sided Fisher exact test: the total probability of all tables with the
/// observed margins that are no more likely than the observed one.
pub fn fisher_exact_p(t: &Table2x2) -> Result<f64> {
    let (r1, r2) = (t.a + t.b, t.c + t.d);
    let (c1, c2) = (t.a + t.c, t.b + t.d);
    if r1 == 0 || r2 == 0 || c1 == 0 || c2 == 0 {
        return Err(Error::UndefinedStatistic(format!("table {t:?} has an empty margin")));
    }
    let n = t.total();
    let lf = ln_factorials(n);
    let fixed = lf[r1 as usize] + lf[r2 as usize] + lf[c1 as usize] + lf[c2 as usize] - lf[n as usize];
    let prob = |a: u64| {
        let (b, c) = (r1 - a, c1 - a);
        let d = r2 - c;
        (fixed - lf[a as usize] - lf[b as usize] - lf[c as usize] - lf[d as usize]).exp()
    };
    let lo = c1.saturating_sub(r2);
    let hi = r1.min(c1);
    let p_obs = prob(t.a);
    // Relative slack so that tables tied with the observed one are counted.
    let cut = p_obs * (1.0 + 1e-7);
    let p: f64 = (lo..=hi).map(prob).filter(|&q| q <= cut).sum();
    Ok(p.min(1.0))
}

/// Logistic regression on a single binary predictor.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LogisticFit {
    pub beta: f64,
    pub odds_ratio: f64,
    pub se: f64,
    pub ci95: (f64, f64),
    pub p_value: f64,
}

/// Closed-form logistic fit: `beta` is the log sample odds ratio with a Wald
/// standard error. Any empty cell means the MLE does not exist.
pub fn logistic_binary_fit(predictor: &[bool], outcome: &[bool]) -> Result<LogisticFit> {
    let t = Table2x2::from_binary(predictor, outcome)?;
    if t.a == 0 || t.b == 0 || t.c == 0 || t.d == 0 {
        return Err(Error::Separation(format!(
            "table {t:?} has an empty cell"
        )));
    }
    let (a, b, c, d) = (t.a as f64, t.b as f64, t.c as f64, t.d as f64);
    let odds_ratio = (a * d) / (b * c);
    let beta = odds_ratio.ln();
    let se = (1.0 / a + 1.0 / b + 1.0 / c + 1.0 / d).sqrt();
    let z = beta / se;
    Ok(LogisticFit {
        beta,
        odds_ratio,
        se,
        ci95: ((beta - 1.96 * se).exp(), (beta + 1.96 * se).exp()),
        p_value: libm::erfc(z.abs() / std::f64::consts::SQRT_2),
    })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn binom(n: u64, k: u64) -> u128 {
        (0..k).fold(1u128, |acc, i| acc * (n - i) as u128 / (i + 1) as u128)
    }

    /// Exact integer enumeration of the two-sided p-value.
    fn oracle(t: &Table2x2) -> f64 {
        let (r1, r2, c1) = (t.a + t.b, t.c + t.d, t.a + t.c);
        let weight = |a: u64| binom(r1, a) * binom(r2, c1 - a);
        let obs = weight(t.a);
        let lo = c1.saturating_sub(r2);
        let num: u128 = (lo..=r1.min(c1)).map(weight).filter(|&w| w <= obs).sum();
        num as f64 / binom(r1 + r2, c1) as f64
    }

    #[test]
    fn worked_example_and_identical_rows() {
        let t = Table2x2 { a: 3, b: 1, c: 1, d: 3 };
        assert!((fisher_exact_p(&t).unwrap() - 34.0 / 70.0).abs() < 1e-12);
        let t = Table2x2 { a: 4, b: 2, c: 4, d: 2 };
        assert!((fisher_exact_p(&t).unwrap() - 1.0).abs() < 1e-12);
        assert!(matches!(
            fisher_exact_p(&Table2x2 { a: 0, b: 0, c: 2, d: 3 }),
            Err(Error::UndefinedStatistic(_))
        ));
    }

    #[test]
    fn fisher_matches_enumeration_for_margins_up_to_twelve() {
        let mut checked = 0;
        for r1 in 1..=12u64 {
            for r2 in 1..=12u64 {
                for c1 in 1..(r1 + r2) {
                    if c1 > 12 || r1 + r2 - c1 > 12 {
                        continue;
                    }
                    for a in c1.saturating_sub(r2)..=r1.min(c1) {
                        let t = Table2x2 { a, b: r1 - a, c: c1 - a, d: r2 - (c1 - a) };
                        let got = fisher_exact_p(&t).unwrap();
                        let want = oracle(&t);
                        assert!((got - want).abs() <= 1e-9 * want.max(1e-300), "{t:?}: {got} vs {want}");
                        checked += 1;
                    }
                }
            }
        }
        assert!(checked > 1000);
    }

    fn table_vectors(t: Table2x2) -> (Vec<bool>, Vec<bool>) {
        let mut x = Vec::new();
        let mut y = Vec::new();
        for (n, px, py) in [(t.a, true, true), (t.b, true, false), (t.c, false, true), (t.d, false, false)] {
            for _ in 0..n {
                x.push(px);
                y.push(py);
            }
        }
        (x, y)
    }

    #[test]
    fn logistic_is_log_odds_ratio() {
        let (x, y) = table_vectors(Table2x2 { a: 5, b: 5, c: 5, d: 5 });
        let f = logistic_binary_fit(&x, &y).unwrap();
        assert_eq!(f.beta, 0.0);
        assert_eq!(f.odds_ratio, 1.0);
        assert!((f.p_value - 1.0).abs() < 1e-15);

        let (x, y) = table_vectors(Table2x2 { a: 12, b: 7, c: 4, d: 9 });
        let f = logistic_binary_fit(&x, &y).unwrap();
        assert_eq!(f.beta, ((12.0 * 9.0) / (7.0 * 4.0) as f64).ln());
        let se = (1.0f64 / 12.0 + 1.0 / 7.0 + 1.0 / 4.0 + 1.0 / 9.0).sqrt();
        assert!((f.se - se).abs() < 1e-15);
        assert!((f.ci95.0 - (f.beta - 1.96 * se).exp()).abs() < 1e-12);
        assert!(f.ci95.0 < f.odds_ratio && f.odds_ratio < f.ci95.1);

        let (x, y) = table_vectors(Table2x2 { a: 3, b: 0, c: 2, d: 4 });
        assert!(matches!(logistic_binary_fit(&x, &y), Err(Error::Separation(_))));
    }

    #[test]
    fn published_odds_ratios_map_to_published_betas() {
        assert!((3.429f64.ln() - 1.23).abs() < 0.005);
        assert!((2.388f64.ln() - 0.871).abs() < 0.005);
    }
}
