//! Paired observation matrix (patients x features).

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};

/// One (pre, post) normalised count pair for a patient and feature.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PairedObservation {
    pub y0: f64,
    pub y1: f64,
}

impl PairedObservation {
    pub fn new(y0: f64, y1: f64) -> Result<Self> {
        if !(y0.is_finite() && y1.is_finite() && y0 >= 0.0 && y1 >= 0.0) {
            return invalid(format!("observations must be finite and non-negative, got ({y0}, {y1})"));
        }
        Ok(Self { y0, y1 })
    }
}

/// Observations for `n` patients and `p` features, stored patient-major.
#[derive(Debug, Clone, PartialEq)]
pub struct Dataset {
    patient_ids: Vec<String>,
    feature_ids: Vec<String>,
    obs: Vec<PairedObservation>,
}

impl Dataset {
    /// `obs[i * p + j]` holds patient `i`, feature `j`.
    pub fn new(patient_ids: Vec<String>, feature_ids: Vec<String>, obs: Vec<PairedObservation>) -> Result<Self> {
        if patient_ids.is_empty() || feature_ids.is_empty() {
            return invalid("dataset needs at least one patient and one feature");
        }
        if obs.len() != patient_ids.len() * feature_ids.len() {
            return invalid(format!(
                "expected {} x {} = {} observations, got {}",
                patient_ids.len(),
                feature_ids.len(),
                patient_ids.len() * feature_ids.len(),
                obs.len()
            ));
        }
        for o in &obs {
            PairedObservation::new(o.y0, o.y1)?;
        }
        Ok(Self { patient_ids, feature_ids, obs })
    }

    /// Dataset with generated ids `P001..` and `F0001..`.
    pub fn from_matrix(n_patients: usize, n_features: usize, obs: Vec<PairedObservation>) -> Result<Self> {
        Self::new(
            (1..=n_patients).map(|i| format!("P{i:03}")).collect(),
            (1..=n_features).map(|j| format!("F{j:04}")).collect(),
            obs,
        )
    }

    pub fn n_patients(&self) -> usize {
        self.patient_ids.len()
    }

    pub fn n_features(&self) -> usize {
        self.feature_ids.len()
    }

    pub fn patient_ids(&self) -> &[String] {
        &self.patient_ids
    }

    pub fn feature_ids(&self) -> &[String] {
        &self.feature_ids
    }

    #[inline]
    pub fn get(&self, patient: usize, feature: usize) -> &PairedObservation {
        &self.obs[patient * self.feature_ids.len() + feature]
    }

    /// All features of one patient.
    pub fn patient(&self, patient: usize) -> &[PairedObservation] {
        let p = self.feature_ids.len();
        &self.obs[patient * p..(patient + 1) * p]
    }

    /// One feature across all patients.
    pub fn feature(&self, feature: usize) -> impl Iterator<Item = &PairedObservation> + '_ {
        self.obs.iter().skip(feature).step_by(self.feature_ids.len())
    }

    /// Keep only the listed features, in the given order.
    pub fn select_features(&self, keep: &[usize]) -> Result<Self> {
        if let Some(&bad) = keep.iter().find(|&&j| j >= self.n_features()) {
            return invalid(format!("feature index {bad} out of range"));
        }
        let mut obs = Vec::with_capacity(self.n_patients() * keep.len());
        for i in 0..self.n_patients() {
            obs.extend(keep.iter().map(|&j| *self.get(i, j)));
        }
        Self::new(
            self.patient_ids.clone(),
            keep.iter().map(|&j| self.feature_ids[j].clone()).collect(),
            obs,
        )
    }

    /// Replace zero counts by `floor`; returns the affected (patient, feature) pairs.
    ///
    /// Log-normal support excludes zero, so a zero count cannot be gridded.
    pub fn apply_pseudo_count(&mut self, floor: f64) -> Result<Vec<(usize, usize)>> {
        if !(floor > 0.0 && floor.is_finite()) {
            return invalid(format!("pseudo-count must be positive, got {floor}"));
        }
        let p = self.n_features();
        let mut flagged = Vec::new();
        for (k, o) in self.obs.iter_mut().enumerate() {
            if o.y0 == 0.0 || o.y1 == 0.0 {
                if o.y0 == 0.0 {
                    o.y0 = floor;
                }
                if o.y1 == 0.0 {
                    o.y1 = floor;
                }
                flagged.push((k / p, k % p));
            }
        }
        Ok(flagged)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    fn toy() -> Dataset {
        let obs = (0..6).map(|k| PairedObservation::new(k as f64, 10.0 + k as f64).unwrap()).collect();
        Dataset::from_matrix(2, 3, obs).unwrap()
    }

    #[test]
    fn indexing_is_patient_major() {
        let d = toy();
        assert_eq!(d.get(1, 2).y0, 5.0);
        assert_eq!(d.patient(1)[0].y0, 3.0);
        let col: Vec<f64> = d.feature(1).map(|o| o.y0).collect();
        assert_eq!(col, vec![1.0, 4.0]);
    }

    #[test]
    fn pseudo_count_flags_zero_pairs() {
        let mut d = toy();
        let flagged = d.apply_pseudo_count(0.5).unwrap();
        assert_eq!(flagged, vec![(0, 0)]);
        assert_eq!(d.get(0, 0).y0, 0.5);
        assert!(d.apply_pseudo_count(0.0).is_err());
    }

    #[test]
    fn rejects_bad_shapes_and_values() {
        assert!(Dataset::from_matrix(2, 2, vec![PairedObservation { y0: 1.0, y1: 1.0 }; 3]).is_err());
        assert!(PairedObservation::new(-1.0, 1.0).is_err());
        assert!(PairedObservation::new(f64::NAN, 1.0).is_err());
    }

    #[test]
    fn select_features_keeps_order() {
        let d = toy().select_features(&[2, 0]).unwrap();
        assert_eq!(d.feature_ids(), &["F0003".to_string(), "F0001".to_string()]);
        assert_eq!(d.get(1, 0).y0, 5.0);
    }
}
