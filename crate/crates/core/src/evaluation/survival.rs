use serde::{Deserialize, Serialize};

use super::OutcomeRecord;
use crate::error::{invalid, Result};

/// One step of a Kaplan-Meier curve; `survival` holds from `time` onwards.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KmPoint {
    pub time: f64,
    pub n_risk: usize,
    pub n_event: usize,
    pub n_censor: usize,
    pub survival: f64,
}

/// Product-limit estimate. The first point is `(0, n, 0, 0, 1)`, followed by
/// one point per distinct observed time. Subjects censored at an event time
/// count as at risk for that event.
pub fn km_curve(records: &[OutcomeRecord]) -> Result<Vec<KmPoint>> {
    if let Some(r) = records.iter().find(|r| !(r.time_days >= 0.0)) {
        return invalid(format!("patient {} has invalid time {}", r.patient_id, r.time_days));
    }
    let mut obs: Vec<(f64, bool)> = records.iter().map(|r| (r.time_days, r.event)).collect();
    obs.sort_by(|x, y| x.0.total_cmp(&y.0));

    let mut out = vec![KmPoint {
        time: 0.0,
        n_risk: obs.len(),
        n_event: 0,
        n_censor: 0,
        survival: 1.0,
    }];
    let mut at_risk = obs.len();
    let mut s = 1.0;
    let mut i = 0;
    while i < obs.len() {
        let t = obs[i].0;
        let mut j = i;
        while j < obs.len() && obs[j].0 == t {
            j += 1;
        }
        let events = obs[i..j].iter().filter(|o| o.1).count();
        if events > 0 {
            s *= 1.0 - events as f64 / at_risk as f64;
        }
        let point = KmPoint {
            time: t,
            n_risk: at_risk,
            n_event: events,
            n_censor: j - i - events,
            survival: s,
        };
        if t == 0.0 {
            // Fold time-zero observations into the initial point.
            out[0] = point;
        } else {
            out.push(point);
        }
        at_risk -= j - i;
        i = j;
    }
    Ok(out)
}

/// Curves for the below-median (`false`) and above-median (`true`) groups.
pub fn km_by_group(records: &[OutcomeRecord]) -> Result<[(bool, Vec<KmPoint>); 2]> {
    let split = |g: bool| -> Vec<OutcomeRecord> { records.iter().filter(|r| r.group == g).cloned().collect() };
    Ok([(false, km_curve(&split(false))?), (true, km_curve(&split(true))?)])
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn rec(t: f64, event: bool) -> OutcomeRecord {
        OutcomeRecord {
            patient_id: String::new(),
            relapse_1yr: false,
            time_days: t,
            event,
            group: false,
        }
    }

    fn surv(curve: &[KmPoint]) -> Vec<(f64, f64)> {
        curve.iter().map(|p| (p.time, p.survival)).collect()
    }

    #[test]
    fn hand_computed_curves() {
        let c = km_curve(&[rec(5.0, false), rec(9.0, false)]).unwrap();
        assert!(c.iter().all(|p| p.survival == 1.0));

        let c = km_curve(&[rec(1.0, true), rec(2.0, true)]).unwrap();
        assert_eq!(surv(&c), [(0.0, 1.0), (1.0, 0.5), (2.0, 0.0)]);
        assert_eq!(c[2].n_risk, 1);

        let c = km_curve(&[rec(1.0, true), rec(1.5, false), rec(2.0, true)]).unwrap();
        let s = surv(&c);
        assert!((s[1].1 - 2.0 / 3.0).abs() < 1e-15);
        assert!((s[2].1 - 2.0 / 3.0).abs() < 1e-15);
        assert_eq!(s[3], (2.0, 0.0));
        assert_eq!(c[2].n_censor, 1);
        assert!(km_curve(&[rec(-1.0, true)]).is_err());
    }

    #[test]
    fn groups_split_records() {
        let mut r = vec![rec(1.0, true), rec(2.0, true), rec(3.0, false)];
        r[2].group = true;
        let [(g0, c0), (g1, c1)] = km_by_group(&r).unwrap();
        assert!(!g0 && g1);
        assert_eq!(c0[0].n_risk, 2);
        assert_eq!(c1[0].n_risk, 1);
    }

    proptest! {
        #[test]
        fn curve_is_non_increasing_from_one(
            v in proptest::collection::vec((0u32..20, any::<bool>()), 1..40)
        ) {
            let recs: Vec<OutcomeRecord> = v.iter().map(|&(t, e)| rec(t as f64, e)).collect();
            let c = km_curve(&recs).unwrap();
            prop_assert!(c[0].time == 0.0);
            prop_assert!(c[0].survival <= 1.0);
            if v.iter().all(|x| x.0 > 0) {
                prop_assert_eq!(c[0].survival, 1.0);
            }
            for w in c.windows(2) {
                prop_assert!(w[1].survival <= w[0].survival && w[1].time > w[0].time);
            }
            let total: usize = c.iter().map(|p| p.n_event + p.n_censor).sum();
            prop_assert_eq!(total, v.len());
        }
    }
}
