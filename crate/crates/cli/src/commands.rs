use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::fs;
use std::io::Write;
use std::path::Path;

use bideconv::estimator::{fit_from, init_theta, randomise_rho, FitConfig};
use bideconv::evaluation::{
    association, dichotomise_at_median, fisher_exact_p, km_by_group, km_curve, logistic_binary_fit, rmse, roc_auc,
    wilcoxon_ranksum, KmPoint, OutcomeRecord, Table2x2,
};
use bideconv::grid::{pair_loglik, CellRule, LikelihoodConfig};
use bideconv::io::{self, TruthFile};
use bideconv::oracle::{convolution_cell_prob, standard_battery};
use bideconv::simulator::{simulate_outcomes, OutcomeConfig};
use bideconv::{sample_truth, simulate_dataset, Error, SimConfig, TumourFractions};
use serde::{Deserialize, Serialize};

use crate::manifest::Manifest;
use crate::{CliError, EvalArgs, FitArgs, KmArgs, OracleArgs, Predictor, SimulateArgs};

/// Smallest share of observed features that must also be in both references.
const MIN_OVERLAP: f64 = 0.9;

fn warn(msg: impl std::fmt::Display) {
    eprintln!("warning: {msg}");
}

fn out_dir(path: &Path) -> Result<(), CliError> {
    fs::create_dir_all(path).map_err(|e| CliError::usage(format!("cannot create output directory {}: {e}", path.display())))
}

fn read_config<T: for<'de> Deserialize<'de> + Default>(path: Option<&Path>) -> Result<T, CliError> {
    match path {
        None => Ok(T::default()),
        Some(p) => {
            let text = fs::read_to_string(p).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))?;
            serde_json::from_str(&text).map_err(|e| CliError::usage(format!("{}: {e}", p.display())))
        }
    }
}

#[derive(Debug, Clone, Default, Serialize, Deserialize)]
#[serde(default)]
pub struct SimulateConfig {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub outcomes: OutcomeConfig,
}

pub fn simulate(args: SimulateArgs) -> Result<(), CliError> {
    let mut cfg: SimulateConfig = read_config(args.config.as_deref())?;
    if let Some(seed) = args.seed {
        cfg.sim.seed = seed;
    }
    // One seed drives every stream.
    cfg.outcomes.seed = cfg.sim.seed;
    cfg.sim.validate()?;
    out_dir(&args.out)?;
    let mut man = Manifest::new("simulate", Some(cfg.sim.seed), &cfg)?;
    if let Some(p) = &args.config {
        man.hash_input("config", p)?;
    }

    man.phase("simulate");
    let truth = sample_truth(&cfg.sim, None)?;
    let data = simulate_dataset(&truth, cfg.sim.noise_sd, cfg.sim.seed)?;
    let outcomes = simulate_outcomes(data.patient_ids(), &truth.pi, &cfg.outcomes)?;

    man.phase("write");
    let dir = &args.out;
    io::write_observations(&dir.join("observations.tsv"), &data)?;
    io::write_json(&dir.join("truth.json"), &TruthFile::new(data.patient_ids(), data.feature_ids(), &truth))?;
    let (rt, rb) = io::truth_references(data.feature_ids(), &truth);
    io::write_reference(&dir.join("ref_tumour.tsv"), data.feature_ids(), &rt)?;
    io::write_reference(&dir.join("ref_background.tsv"), data.feature_ids(), &rb)?;
    io::write_outcomes(&dir.join("outcomes.csv"), &outcomes)?;
    for f in ["observations.tsv", "truth.json", "ref_tumour.tsv", "ref_background.tsv", "outcomes.csv"] {
        man.output(f);
    }
    man.write(dir)
}

#[derive(Debug, Serialize)]
struct FitEcho<'a> {
    fit: &'a FitConfig,
    rho_init: &'a str,
    pseudo_count: f64,
}

#[derive(Debug, Serialize)]
struct FitReport {
    n_patients: usize,
    n_features: usize,
    dropped_missing_reference: Vec<String>,
    dropped_not_hypermethylated: Vec<String>,
    pseudo_count_pairs: usize,
    initial_loglik: f64,
    final_loglik: f64,
    converged: bool,
    pi_failures: Vec<String>,
    rho_clamped_features: usize,
    floored_pairs: usize,
}

pub fn fit(args: FitArgs) -> Result<(), CliError> {
    let cfg = FitConfig {
        m: args.bins,
        iterations: args.iters,
        scalar_tol: args.scalar_tol,
        rho_mode: args.rho_mode.into(),
        seed: args.seed,
        rule: args.rule.into(),
        max_cycles: args.max_cycles,
        ..FitConfig::default()
    };
    cfg.validate()?;
    let rho_init: Option<f64> = match args.rho_init.as_str() {
        "random" => None,
        s => Some(s.parse().map_err(|_| CliError::usage(format!("--rho-init must be a number or \"random\", got {s:?}")))?),
    };
    if !(args.pseudo_count > 0.0) {
        return Err(CliError::usage("--pseudo-count must be positive"));
    }
    out_dir(&args.out)?;
    let echo = FitEcho {
        fit: &cfg,
        rho_init: &args.rho_init,
        pseudo_count: args.pseudo_count,
    };
    let mut man = Manifest::new("fit", Some(cfg.seed), &echo)?;
    man.hash_input("counts", &args.counts)?;
    man.hash_input("ref_tumour", &args.ref_tumour)?;
    man.hash_input("ref_background", &args.ref_background)?;

    man.phase("read");
    let mut data = io::read_observations(&args.counts)?;
    let rt = io::read_reference(&args.ref_tumour)?;
    let rb = io::read_reference(&args.ref_background)?;

    let ids = data.feature_ids().to_vec();
    let (covered, missing): (Vec<usize>, Vec<usize>) =
        (0..ids.len()).partition(|&j| rt.contains_key(&ids[j]) && rb.contains_key(&ids[j]));
    let overlap = covered.len() as f64 / ids.len().max(1) as f64;
    if overlap < MIN_OVERLAP {
        return Err(CliError::data(format!(
            "only {} of {} features ({:.1}%) appear in both reference profiles; check the input files",
            covered.len(),
            ids.len(),
            100.0 * overlap
        )));
    }
    let dropped_missing: Vec<String> = missing.iter().map(|&j| ids[j].clone()).collect();
    if !dropped_missing.is_empty() {
        warn(format!("dropping {} features missing from a reference", dropped_missing.len()));
    }
    let (keep, not_hyper): (Vec<usize>, Vec<usize>) = covered
        .into_iter()
        .partition(|&j| rt[&ids[j]].log_mean > rb[&ids[j]].log_mean);
    let dropped_hyper: Vec<String> = not_hyper.iter().map(|&j| ids[j].clone()).collect();
    if !dropped_hyper.is_empty() {
        warn(format!(
            "dropping {} features whose tumour reference mean does not exceed the background mean",
            dropped_hyper.len()
        ));
    }
    if keep.is_empty() {
        return Err(CliError::data("no usable features"));
    }
    if keep.len() != ids.len() {
        data = data.select_features(&keep)?;
    }
    let flagged = data.apply_pseudo_count(args.pseudo_count)?;
    if !flagged.is_empty() {
        warn(format!("{} pairs with zero counts set to {}", flagged.len(), args.pseudo_count));
    }

    let mut theta = init_theta(data.feature_ids(), &rt, &rb, rho_init.unwrap_or(0.0))?;
    if rho_init.is_none() {
        randomise_rho(&mut theta, (0.0, 0.95), cfg.seed)?;
    }

    man.phase("fit");
    let start = vec![cfg.pi_init; data.n_patients()];
    let res = fit_from(&data, &theta, &start, &cfg)?;
    if !res.converged {
        warn("last sweep still changed the log-likelihood by more than 1e-3");
    }

    man.phase("write");
    let dir = &args.out;
    io::write_fractions(&dir.join("pi_hat.csv"), data.patient_ids(), &res.pi)?;
    io::write_theta(&dir.join("theta_hat.csv"), data.feature_ids(), &res.theta, &res.features)?;
    io::write_trace(&dir.join("trace.csv"), res.initial_loglik, &res.trace)?;
    let report = FitReport {
        n_patients: data.n_patients(),
        n_features: data.n_features(),
        dropped_missing_reference: dropped_missing,
        dropped_not_hypermethylated: dropped_hyper,
        pseudo_count_pairs: flagged.len(),
        initial_loglik: res.initial_loglik,
        final_loglik: res.final_loglik(),
        converged: res.converged,
        pi_failures: res.pi_failures.iter().map(|&i| data.patient_ids()[i].clone()).collect(),
        rho_clamped_features: res.features.iter().filter(|f| f.rho_clamped).count(),
        floored_pairs: res.features.iter().map(|f| f.floored_pairs).sum(),
    };
    io::write_json(&dir.join("fit_report.json"), &report)?;
    for f in ["pi_hat.csv", "theta_hat.csv", "trace.csv", "fit_report.json"] {
        man.output(f);
    }
    man.write(dir)
}

/// Pair up two id-keyed tables, failing with the orphans of either side.
fn align<A: Clone, B: Clone>(left: &[(String, A)], right: &[(String, B)], what: &str) -> Result<Vec<(String, A, B)>, CliError> {
    let rmap: HashMap<&str, &B> = right.iter().map(|(k, v)| (k.as_str(), v)).collect();
    let lset: BTreeSet<&str> = left.iter().map(|(k, _)| k.as_str()).collect();
    let only_left: Vec<&str> = left.iter().map(|(k, _)| k.as_str()).filter(|k| !rmap.contains_key(k)).collect();
    let only_right: Vec<&str> = right.iter().map(|(k, _)| k.as_str()).filter(|k| !lset.contains(k)).collect();
    if !only_left.is_empty() || !only_right.is_empty() {
        return Err(CliError::data(format!(
            "patient ids do not match between estimates and {what}: only in estimates [{}], only in {what} [{}]",
            only_left.join(", "),
            only_right.join(", ")
        )));
    }
    Ok(left
        .iter()
        .map(|(k, a)| (k.clone(), a.clone(), (*rmap[k.as_str()]).clone()))
        .collect())
}

fn predictor_value(p: Predictor, f: &TumourFractions) -> f64 {
    match p {
        Predictor::Pi0 => f.pi0,
        Predictor::Pi1 => f.pi1,
    }
}

fn predictor_name(p: Predictor) -> &'static str {
    match p {
        Predictor::Pi0 => "pi0",
        Predictor::Pi1 => "pi1",
    }
}

/// A statistic that may be undefined for the data at hand.
#[derive(Debug, Serialize)]
#[serde(untagged)]
enum Stat<T> {
    Value(T),
    Undefined { undefined: String },
}

fn stat<T>(r: bideconv::Result<T>) -> Result<Stat<T>, CliError> {
    match r {
        Ok(v) => Ok(Stat::Value(v)),
        Err(e @ (Error::UndefinedStatistic(_) | Error::Separation(_))) => {
            warn(&e);
            Ok(Stat::Undefined { undefined: e.to_string() })
        }
        Err(e) => Err(e.into()),
    }
}

#[derive(Debug, Serialize)]
struct TruthMetrics {
    mode: &'static str,
    n_patients: usize,
    association_method: String,
    rmse_pi0: f64,
    rmse_pi1: f64,
    association_pi0: Stat<f64>,
    association_pi1: Stat<f64>,
}

#[derive(Debug, Serialize)]
struct OutcomeMetrics {
    mode: &'static str,
    n_patients: usize,
    predictor: &'static str,
    n_relapse_1yr: usize,
    n_above_median: usize,
    wilcoxon: Stat<bideconv::evaluation::WilcoxonResult>,
    fisher_p: Stat<f64>,
    table: Table2x2,
    logistic: Stat<bideconv::evaluation::LogisticFit>,
    auc: Stat<f64>,
}

#[derive(Debug, Serialize)]
struct EvalEcho {
    predictor: &'static str,
    association: String,
    km: bool,
}

pub fn eval(args: EvalArgs) -> Result<(), CliError> {
    out_dir(&args.out)?;
    let assoc: bideconv::evaluation::Association = args.association.into();
    let echo = EvalEcho {
        predictor: predictor_name(args.predictor),
        association: format!("{assoc:?}").to_lowercase(),
        km: args.km,
    };
    let mut man = Manifest::new("eval", None, &echo)?;
    man.hash_input("pi_hat", &args.pi_hat)?;
    let est = io::read_fractions(&args.pi_hat)?;
    let dir = &args.out;
    man.phase("eval");

    if let Some(truth_path) = &args.truth {
        man.hash_input("truth", truth_path)?;
        let truth: TruthFile = io::read_json(truth_path)?;
        let rows = align(&est, &truth.fractions(), "truth")?;
        let col = |f: fn(&TumourFractions) -> f64, est: bool| -> Vec<f64> {
            rows.iter().map(|(_, a, b)| f(if est { a } else { b })).collect()
        };
        let (e0, t0) = (col(|p| p.pi0, true), col(|p| p.pi0, false));
        let (e1, t1) = (col(|p| p.pi1, true), col(|p| p.pi1, false));
        let metrics = TruthMetrics {
            mode: "truth",
            n_patients: rows.len(),
            association_method: echo.association.clone(),
            rmse_pi0: rmse(&e0, &t0)?,
            rmse_pi1: rmse(&e1, &t1)?,
            association_pi0: stat(association(&e0, &t0, assoc))?,
            association_pi1: stat(association(&e1, &t1, assoc))?,
        };
        io::write_json(&dir.join("metrics.json"), &metrics)?;
        man.output("metrics.json");
        if args.km {
            warn("--km needs outcomes; ignored in truth mode");
        }
        return man.write(dir);
    }

    let outcomes_path = args.outcomes.as_ref().expect("clap enforces truth or outcomes");
    man.hash_input("outcomes", outcomes_path)?;
    let outcomes = io::read_outcomes(outcomes_path)?;
    let keyed: Vec<(String, OutcomeRecord)> = outcomes.iter().map(|r| (r.patient_id.clone(), r.clone())).collect();
    let rows = align(&est, &keyed, "outcomes")?;
    let x: Vec<f64> = rows.iter().map(|(_, f, _)| predictor_value(args.predictor, f)).collect();
    let relapse: Vec<bool> = rows.iter().map(|(_, _, r)| r.relapse_1yr).collect();
    let groups = dichotomise_at_median(&x)?;
    let records: Vec<OutcomeRecord> = rows
        .iter()
        .zip(&groups)
        .map(|((_, _, r), &g)| OutcomeRecord { group: g, ..r.clone() })
        .collect();

    let (xr, xn): (Vec<f64>, Vec<f64>) = {
        let mut a = Vec::new();
        let mut b = Vec::new();
        for (&v, &r) in x.iter().zip(&relapse) {
            if r { a.push(v) } else { b.push(v) }
        }
        (a, b)
    };
    let wilcoxon = if xr.is_empty() || xn.is_empty() {
        Stat::Undefined { undefined: "one outcome class is empty".into() }
    } else {
        stat(wilcoxon_ranksum(&xr, &xn))?
    };
    let table = Table2x2::from_binary(&groups, &relapse)?;
    let metrics = OutcomeMetrics {
        mode: "outcomes",
        n_patients: rows.len(),
        predictor: echo.predictor,
        n_relapse_1yr: relapse.iter().filter(|&&r| r).count(),
        n_above_median: groups.iter().filter(|&&g| g).count(),
        wilcoxon,
        fisher_p: stat(fisher_exact_p(&table))?,
        table,
        logistic: stat(logistic_binary_fit(&groups, &relapse))?,
        auc: stat(roc_auc(&x, &relapse))?,
    };
    io::write_json(&dir.join("metrics.json"), &metrics)?;
    write_summary(&dir.join("summary.csv"), &metrics)?;
    io::write_outcomes(&dir.join("groups.csv"), &records)?;
    for f in ["metrics.json", "summary.csv", "groups.csv"] {
        man.output(f);
    }
    if args.km {
        let curves = km_by_group(&records)?;
        write_km(&dir.join("km.csv"), curves.iter().map(|(g, c)| (if *g { "above" } else { "below" }, c.as_slice())))?;
        man.output("km.csv");
    }
    man.write(dir)
}

fn fmt<T: std::fmt::Display>(s: &Stat<T>) -> String {
    match s {
        Stat::Value(v) => v.to_string(),
        Stat::Undefined { .. } => String::new(),
    }
}

fn note<T>(s: &Stat<T>) -> &str {
    match s {
        Stat::Value(_) => "",
        Stat::Undefined { .. } => "undefined",
    }
}

/// One row per test, mirroring the clinical summary table.
fn write_summary(path: &Path, m: &OutcomeMetrics) -> Result<(), CliError> {
    let mut w = std::io::BufWriter::new(fs::File::create(path).map_err(bideconv::Error::from)?);
    let mut line = |s: String| writeln!(w, "{s}").map_err(|e| CliError::from(bideconv::Error::from(e)));
    line("test,estimate,odds_ratio,ci_low,ci_high,p_value,note".into())?;
    let (w_est, w_p) = match &m.wilcoxon {
        Stat::Value(r) => (r.statistic.to_string(), r.p_value.to_string()),
        Stat::Undefined { .. } => (String::new(), String::new()),
    };
    line(format!("wilcoxon,{w_est},,,,{w_p},{}", note(&m.wilcoxon)))?;
    let t = &m.table;
    let sample_or = (t.a as f64 * t.d as f64) / (t.b as f64 * t.c as f64);
    let (or, or_note) = if sample_or.is_finite() && sample_or > 0.0 {
        (sample_or.to_string(), "")
    } else {
        (String::new(), "zero cell")
    };
    let fisher_note = if note(&m.fisher_p).is_empty() { or_note } else { note(&m.fisher_p) };
    line(format!("fisher,,{or},,,{},{fisher_note}", fmt(&m.fisher_p)))?;
    match &m.logistic {
        Stat::Value(f) => line(format!(
            "logistic,{},{},{},{},{},",
            f.beta, f.odds_ratio, f.ci95.0, f.ci95.1, f.p_value
        ))?,
        Stat::Undefined { .. } => line("logistic,,,,,,separation".into())?,
    }
    line(format!("auc,{},,,,,{}", fmt(&m.auc), note(&m.auc)))?;
    w.flush().map_err(|e| CliError::from(bideconv::Error::from(e)))
}

fn write_km<'a>(path: &Path, curves: impl IntoIterator<Item = (&'a str, &'a [KmPoint])>) -> Result<(), CliError> {
    let mut s = String::from("group,time,n_risk,n_event,n_censor,survival\n");
    for (g, c) in curves {
        for p in c {
            s.push_str(&format!("{g},{},{},{},{},{}\n", p.time, p.n_risk, p.n_event, p.n_censor, p.survival));
        }
    }
    fs::write(path, s).map_err(|e| CliError::from(bideconv::Error::from(e)))
}

pub fn km(args: KmArgs) -> Result<(), CliError> {
    out_dir(&args.out)?;
    let mut man = Manifest::new(
        "km",
        None,
        serde_json::json!({ "predictor": args.pi_hat.as_ref().map(|_| predictor_name(args.predictor)) }),
    )?;
    man.hash_input("outcomes", &args.outcomes)?;
    let outcomes = io::read_outcomes(&args.outcomes)?;
    man.phase("km");
    match &args.pi_hat {
        None => {
            let c = km_curve(&outcomes)?;
            write_km(&args.out.join("km.csv"), [("all", c.as_slice())])?;
        }
        Some(p) => {
            man.hash_input("pi_hat", p)?;
            let est = io::read_fractions(p)?;
            let keyed: Vec<(String, OutcomeRecord)> = outcomes.iter().map(|r| (r.patient_id.clone(), r.clone())).collect();
            let rows = align(&est, &keyed, "outcomes")?;
            let x: Vec<f64> = rows.iter().map(|(_, f, _)| predictor_value(args.predictor, f)).collect();
            let groups = dichotomise_at_median(&x)?;
            let records: Vec<OutcomeRecord> = rows
                .iter()
                .zip(&groups)
                .map(|((_, _, r), &g)| OutcomeRecord { group: g, ..r.clone() })
                .collect();
            let curves = km_by_group(&records)?;
            write_km(
                &args.out.join("km.csv"),
                curves.iter().map(|(g, c)| (if *g { "above" } else { "below" }, c.as_slice())),
            )?;
        }
    }
    man.output("km.csv");
    man.write(&args.out)
}

#[derive(Debug, Serialize)]
struct OracleGroup {
    m: usize,
    rule: CellRule,
    cases: usize,
    flagged: usize,
    mean_rel_error: f64,
    max_rel_error: f64,
}

#[derive(Debug, Serialize)]
struct OracleSummary {
    groups: Vec<OracleGroup>,
    /// Per grid size: hybrid beats midpoint on every case with pi1 <= 1e-3.
    hybrid_beats_midpoint_small_pi1: BTreeMap<usize, bool>,
}

pub fn oracle_check(args: OracleArgs) -> Result<(), CliError> {
    if args.cases == 0 || args.bins.iter().any(|&m| m < 2) {
        return Err(CliError::usage("need at least one case and bins >= 2"));
    }
    out_dir(&args.out)?;
    let mut man = Manifest::new(
        "oracle-check",
        Some(args.seed),
        serde_json::json!({ "cases": args.cases, "bins": args.bins }),
    )?;
    man.phase("oracle");
    let battery = standard_battery(args.seed, args.cases)?;
    let rules = [CellRule::Hybrid, CellRule::Midpoint];

    let mut report = String::from("case,pi0,pi1,y0,y1,m,rule,grid_loglik,oracle_loglik,rel_error,oracle_error_bound,flag\n");
    // (m, rule) -> relative errors of converged cases
    let mut errs: BTreeMap<(usize, usize), (Vec<f64>, usize)> = BTreeMap::new();
    let mut edge_ok: BTreeMap<usize, bool> = BTreeMap::new();
    for (k, c) in battery.iter().enumerate() {
        for &m in &args.bins {
            let oracle = convolution_cell_prob(&c.obs, &c.pi, &c.theta, m);
            let mut rel = [f64::NAN; 2];
            for (ri, &rule) in rules.iter().enumerate() {
                let cfg = LikelihoodConfig { m, rule, ..LikelihoodConfig::default() };
                let ll = pair_loglik(&c.obs, &c.pi, &c.theta, &cfg)?;
                let entry = errs.entry((m, ri)).or_default();
                let prefix = format!("{k},{},{},{},{},{m},{}", c.pi.pi0, c.pi.pi1, c.obs.y0, c.obs.y1, rule_name(rule));
                match &oracle {
                    Ok(o) => {
                        let r = (ll.exp() - o.prob).abs() / o.prob;
                        rel[ri] = r;
                        entry.0.push(r);
                        report.push_str(&format!("{prefix},{ll},{},{r},{},\n", o.prob.ln(), o.error_bound));
                    }
                    Err(e) => {
                        entry.1 += 1;
                        warn(format!("case {k}, m = {m}: {e}"));
                        report.push_str(&format!("{prefix},{ll},,,,oracle_nonconvergence\n"));
                    }
                }
            }
            if c.pi.pi1 <= 1e-3 {
                let ok = edge_ok.entry(m).or_insert(true);
                *ok &= rel[0] < rel[1];
            }
        }
    }
    let groups = errs
        .into_iter()
        .map(|((m, ri), (v, flagged))| OracleGroup {
            m,
            rule: rules[ri],
            cases: v.len(),
            flagged,
            mean_rel_error: v.iter().sum::<f64>() / v.len().max(1) as f64,
            max_rel_error: v.iter().copied().fold(0.0, f64::max),
        })
        .collect();
    let summary = OracleSummary {
        groups,
        hybrid_beats_midpoint_small_pi1: edge_ok,
    };
    man.phase("write");
    fs::write(args.out.join("oracle_report.csv"), report).map_err(bideconv::Error::from)?;
    io::write_json(&args.out.join("oracle_summary.json"), &summary)?;
    man.output("oracle_report.csv");
    man.output("oracle_summary.json");
    man.write(&args.out)
}

fn rule_name(r: CellRule) -> &'static str {
    match r {
        CellRule::Hybrid => "hybrid",
        CellRule::Midpoint => "midpoint",
        CellRule::Exact => "exact",
    }
}
