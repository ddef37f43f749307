//! Flat-file formats.
//!
//! * observations: TSV, one row per feature, a `feature_id` column followed
//!   by `<patient>_pre` / `<patient>_post` column pairs;
//! * reference profiles: TSV with `feature_id`, `log_mean`, `log_var`;
//! * estimates, traces and outcomes: CSV with a header row.
//!
//! Floats are written in shortest round-trip form, so files are
//! byte-identical whenever the values are.

use std::collections::{BTreeMap, HashMap};
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::data::{Dataset, PairedObservation};
use crate::error::{Error, Result};
use crate::estimator::{FeatureDiagnostics, RefEntry, ReferenceProfile, TraceEntry};
use crate::evaluation::OutcomeRecord;
use crate::model::{ComponentParams, FeatureTheta, TumourFractions};
use crate::simulator::SimTruth;

fn data_err(path: &Path, msg: impl std::fmt::Display) -> Error {
    Error::Data(format!("{}: {msg}", path.display()))
}

fn tsv_reader<R: Read>(r: R) -> csv::Reader<R> {
    csv::ReaderBuilder::new().delimiter(b'\t').from_reader(r)
}

fn open(path: &Path) -> Result<BufReader<File>> {
    File::open(path)
        .map(BufReader::new)
        .map_err(|e| data_err(path, format!("cannot open: {e}")))
}

fn create(path: &Path) -> Result<BufWriter<File>> {
    Ok(BufWriter::new(File::create(path)?))
}

fn parse_f64(path: &Path, row: usize, col: &str, s: &str) -> Result<f64> {
    s.trim()
        .parse::<f64>()
        .map_err(|_| data_err(path, format!("row {row}, column {col}: cannot parse {s:?} as a number")))
}

/// Read an observation matrix.
pub fn read_observations(path: &Path) -> Result<Dataset> {
    let mut rdr = tsv_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    if headers.get(0) != Some("feature_id") {
        return Err(data_err(path, "first column must be feature_id"));
    }
    // Patient order follows the first appearance of either column.
    let mut patients: Vec<String> = Vec::new();
    let mut cols: HashMap<String, [Option<usize>; 2]> = HashMap::new();
    for (c, h) in headers.iter().enumerate().skip(1) {
        let (id, which) = if let Some(id) = h.strip_suffix("_pre") {
            (id, 0)
        } else if let Some(id) = h.strip_suffix("_post") {
            (id, 1)
        } else {
            return Err(data_err(path, format!("column {h:?} lacks a _pre or _post suffix")));
        };
        let entry = cols.entry(id.to_string()).or_insert_with(|| {
            patients.push(id.to_string());
            [None, None]
        });
        if entry[which].replace(c).is_some() {
            return Err(data_err(path, format!("duplicate column {h:?}")));
        }
    }
    let mut pairs = Vec::with_capacity(patients.len());
    for id in &patients {
        match cols[id] {
            [Some(a), Some(b)] => pairs.push((a, b)),
            _ => return Err(data_err(path, format!("patient {id} needs both _pre and _post columns"))),
        }
    }
    if patients.is_empty() {
        return Err(data_err(path, "no patient columns"));
    }

    let mut features = Vec::new();
    let mut by_feature: Vec<Vec<PairedObservation>> = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        if rec.len() != headers.len() {
            return Err(data_err(path, format!("row {row} has {} fields, expected {}", rec.len(), headers.len())));
        }
        features.push(rec[0].to_string());
        let mut obs = Vec::with_capacity(pairs.len());
        for &(a, b) in &pairs {
            let y0 = parse_f64(path, row, &headers[a], &rec[a])?;
            let y1 = parse_f64(path, row, &headers[b], &rec[b])?;
            obs.push(PairedObservation::new(y0, y1).map_err(|e| data_err(path, format!("row {row}: {e}")))?);
        }
        by_feature.push(obs);
    }
    let n = patients.len();
    let p = features.len();
    let mut obs = Vec::with_capacity(n * p);
    for i in 0..n {
        for f in &by_feature {
            obs.push(f[i]);
        }
    }
    Dataset::new(patients, features, obs).map_err(|e| data_err(path, e))
}

pub fn write_observations(path: &Path, data: &Dataset) -> Result<()> {
    let mut w = create(path)?;
    write!(w, "feature_id")?;
    for id in data.patient_ids() {
        write!(w, "\t{id}_pre\t{id}_post")?;
    }
    writeln!(w)?;
    for (j, f) in data.feature_ids().iter().enumerate() {
        write!(w, "{f}")?;
        for o in data.feature(j) {
            write!(w, "\t{}\t{}", o.y0, o.y1)?;
        }
        writeln!(w)?;
    }
    w.flush()?;
    Ok(())
}

/// Read a reference profile. Duplicate ids and non-positive variances are errors.
pub fn read_reference(path: &Path) -> Result<ReferenceProfile> {
    let mut rdr = tsv_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let expect = ["feature_id", "log_mean", "log_var"];
    if headers.iter().take(3).ne(expect) {
        return Err(data_err(path, format!("expected columns {}", expect.join(", "))));
    }
    let mut out = BTreeMap::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let log_mean = parse_f64(path, row, "log_mean", &rec[1])?;
        let log_var = parse_f64(path, row, "log_var", &rec[2])?;
        if !(log_mean.is_finite() && log_var > 0.0 && log_var.is_finite()) {
            return Err(data_err(path, format!("row {row}: need finite log_mean and positive log_var")));
        }
        if out.insert(rec[0].to_string(), RefEntry { log_mean, log_var }).is_some() {
            return Err(data_err(path, format!("duplicate feature {}", &rec[0])));
        }
    }
    Ok(out)
}

pub fn write_reference(path: &Path, ids: &[String], profile: &ReferenceProfile) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "feature_id\tlog_mean\tlog_var")?;
    for id in ids {
        let e = profile
            .get(id)
            .ok_or_else(|| Error::InvalidArgument(format!("feature {id} missing from profile")))?;
        writeln!(w, "{id}\t{}\t{}", e.log_mean, e.log_var)?;
    }
    w.flush()?;
    Ok(())
}

/// Tumour and background reference profiles implied by a simulated truth:
/// per-feature parameters averaged over the two measurements.
pub fn truth_references(ids: &[String], truth: &SimTruth) -> (ReferenceProfile, ReferenceProfile) {
    let avg = |p: &ComponentParams| RefEntry {
        log_mean: 0.5 * (p.mu0 + p.mu1),
        log_var: 0.5 * (p.tau0 + p.tau1),
    };
    let t = ids.iter().zip(&truth.theta).map(|(id, th)| (id.clone(), avg(&th.tumour))).collect();
    let b = ids.iter().zip(&truth.theta).map(|(id, th)| (id.clone(), avg(&th.background))).collect();
    (t, b)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PatientTruth {
    pub patient_id: String,
    pub pi0: f64,
    pub pi1: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FeatureTruth {
    pub feature_id: String,
    pub tumour: ComponentParams,
    pub background: ComponentParams,
}

/// Simulated truth with identifiers, as stored on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TruthFile {
    pub patients: Vec<PatientTruth>,
    pub features: Vec<FeatureTruth>,
}

impl TruthFile {
    pub fn new(patient_ids: &[String], feature_ids: &[String], truth: &SimTruth) -> Self {
        Self {
            patients: patient_ids
                .iter()
                .zip(&truth.pi)
                .map(|(id, p)| PatientTruth {
                    patient_id: id.clone(),
                    pi0: p.pi0,
                    pi1: p.pi1,
                })
                .collect(),
            features: feature_ids
                .iter()
                .zip(&truth.theta)
                .map(|(id, t)| FeatureTruth {
                    feature_id: id.clone(),
                    tumour: t.tumour,
                    background: t.background,
                })
                .collect(),
        }
    }

    pub fn fractions(&self) -> Vec<(String, TumourFractions)> {
        self.patients
            .iter()
            .map(|p| (p.patient_id.clone(), TumourFractions { pi0: p.pi0, pi1: p.pi1 }))
            .collect()
    }
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut w = create(path)?;
    serde_json::to_writer_pretty(&mut w, value)?;
    writeln!(w)?;
    w.flush()?;
    Ok(())
}

pub fn read_json<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<T> {
    serde_json::from_reader(open(path)?).map_err(|e| data_err(path, e))
}

pub fn write_fractions(path: &Path, ids: &[String], pi: &[TumourFractions]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "patient_id,pi0,pi1")?;
    for (id, p) in ids.iter().zip(pi) {
        writeln!(w, "{id},{},{}", p.pi0, p.pi1)?;
    }
    w.flush()?;
    Ok(())
}

/// Read `patient_id,pi0,pi1` rows.
pub fn read_fractions(path: &Path) -> Result<Vec<(String, TumourFractions)>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    if headers.iter().take(3).ne(["patient_id", "pi0", "pi1"]) {
        return Err(data_err(path, "expected columns patient_id, pi0, pi1"));
    }
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let pi0 = parse_f64(path, row, "pi0", &rec[1])?;
        let pi1 = parse_f64(path, row, "pi1", &rec[2])?;
        let f = TumourFractions::new(pi0, pi1).map_err(|e| data_err(path, format!("row {row}: {e}")))?;
        out.push((rec[0].to_string(), f));
    }
    Ok(out)
}

pub fn write_theta(path: &Path, ids: &[String], theta: &[FeatureTheta], diag: &[FeatureDiagnostics]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(
        w,
        "feature_id,t_mu0,t_mu1,t_tau0,t_tau1,t_rho,b_mu0,b_mu1,b_tau0,b_tau1,b_rho,rho_clamped,floored_pairs"
    )?;
    for ((id, t), d) in ids.iter().zip(theta).zip(diag) {
        let (a, b) = (&t.tumour, &t.background);
        writeln!(
            w,
            "{id},{},{},{},{},{},{},{},{},{},{},{},{}",
            a.mu0, a.mu1, a.tau0, a.tau1, a.rho, b.mu0, b.mu1, b.tau0, b.tau1, b.rho, d.rho_clamped as u8, d.floored_pairs
        )?;
    }
    w.flush()?;
    Ok(())
}

pub fn write_trace(path: &Path, initial: f64, trace: &[TraceEntry]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "step,sweep,block,loglik")?;
    writeln!(w, "0,0,init,{initial}")?;
    for (k, e) in trace.iter().enumerate() {
        writeln!(w, "{},{},{},{}", k + 1, e.sweep, e.block, e.loglik)?;
    }
    w.flush()?;
    Ok(())
}

fn parse_bool(path: &Path, row: usize, col: &str, s: &str) -> Result<bool> {
    match s.trim() {
        "1" | "true" => Ok(true),
        "0" | "false" => Ok(false),
        other => Err(data_err(path, format!("row {row}, column {col}: expected 0 or 1, got {other:?}"))),
    }
}

/// Read outcomes with columns `patient_id,relapse_1yr,time_days,event`;
/// the group column is filled in later.
pub fn read_outcomes(path: &Path) -> Result<Vec<OutcomeRecord>> {
    let mut rdr = csv::Reader::from_reader(open(path)?);
    let headers = rdr.headers()?.clone();
    let need = ["patient_id", "relapse_1yr", "time_days", "event"];
    let idx: Vec<usize> = need
        .iter()
        .map(|n| {
            headers
                .iter()
                .position(|h| h == *n)
                .ok_or_else(|| data_err(path, format!("missing column {n}")))
        })
        .collect::<Result<_>>()?;
    let mut out = Vec::new();
    for (row, rec) in rdr.records().enumerate() {
        let rec = rec?;
        let row = row + 2;
        let time_days = parse_f64(path, row, "time_days", &rec[idx[2]])?;
        if !(time_days >= 0.0) {
            return Err(data_err(path, format!("row {row}: time_days must be >= 0")));
        }
        out.push(OutcomeRecord {
            patient_id: rec[idx[0]].to_string(),
            relapse_1yr: parse_bool(path, row, "relapse_1yr", &rec[idx[1]])?,
            time_days,
            event: parse_bool(path, row, "event", &rec[idx[3]])?,
            group: false,
        });
    }
    Ok(out)
}

pub fn write_outcomes(path: &Path, records: &[OutcomeRecord]) -> Result<()> {
    let mut w = create(path)?;
    writeln!(w, "patient_id,relapse_1yr,time_days,event,group")?;
    for r in records {
        writeln!(
            w,
            "{},{},{},{},{}",
            r.patient_id, r.relapse_1yr as u8, r.time_days, r.event as u8, r.group as u8
        )?;
    }
    w.flush()?;
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::simulator::{sample_truth, simulate_dataset, SimConfig};

    #[test]
    fn observations_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let truth = sample_truth(
            &SimConfig {
                n_patients: 3,
                n_features: 4,
                ..SimConfig::default()
            },
            None,
        )
        .unwrap();
        let data = simulate_dataset(&truth, 0.1, 1).unwrap();
        let p = dir.path().join("obs.tsv");
        write_observations(&p, &data).unwrap();
        assert_eq!(read_observations(&p).unwrap(), data);
    }

    #[test]
    fn malformed_observations_are_data_errors() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("bad.tsv");
        for body in [
            "feature_id\tA_pre\nf1\t1\n",
            "feature_id\tA_pre\tA_post\nf1\t1\tx\n",
            "feature_id\tA_pre\tA_post\nf1\t1\t-2\n",
            "id\tA_pre\tA_post\nf1\t1\t2\n",
        ] {
            std::fs::write(&p, body).unwrap();
            assert!(matches!(read_observations(&p), Err(Error::Data(_))), "{body:?}");
        }
    }

    #[test]
    fn reference_round_trip_and_validation() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("ref.tsv");
        let mut prof = ReferenceProfile::new();
        prof.insert("f1".into(), RefEntry { log_mean: 3.0, log_var: 0.25 });
        prof.insert("f2".into(), RefEntry { log_mean: 1.5, log_var: 0.1 });
        write_reference(&p, &["f2".into(), "f1".into()], &prof).unwrap();
        assert_eq!(read_reference(&p).unwrap(), prof);
        std::fs::write(&p, "feature_id\tlog_mean\tlog_var\nf1\t1\t0\n").unwrap();
        assert!(read_reference(&p).is_err());
        std::fs::write(&p, "feature_id\tlog_mean\tlog_var\nf1\t1\t1\nf1\t1\t1\n").unwrap();
        assert!(read_reference(&p).is_err());
    }

    #[test]
    fn fractions_and_outcomes_round_trip() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("pi.csv");
        let ids = vec!["A".to_string(), "B".to_string()];
        let pi = vec![TumourFractions { pi0: 0.3, pi1: 0.1 }, TumourFractions { pi0: 0.05, pi1: 0.0 }];
        write_fractions(&p, &ids, &pi).unwrap();
        let back = read_fractions(&p).unwrap();
        assert_eq!(back[1], ("B".to_string(), pi[1]));
        let rec = vec![OutcomeRecord {
            patient_id: "A".into(),
            relapse_1yr: true,
            time_days: 120.5,
            event: true,
            group: false,
        }];
        let q = dir.path().join("out.csv");
        write_outcomes(&q, &rec).unwrap();
        assert_eq!(read_outcomes(&q).unwrap(), rec);
    }
}
