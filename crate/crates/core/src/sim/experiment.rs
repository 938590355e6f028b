//! Dataset generation, method dispatch and resumable record persistence.

use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{ChainSettings, Method, SimulationConfig, TruePrior};
use crate::chain::{posterior_means, AcceptanceSummary};
use crate::dist::{self, DistSpec};
use crate::dp::{dp_fit, DpConfig};
use crate::error::{Error, Result};
use crate::gibbs::{robustified_gibbs, standard_gibbs};
use crate::prior::PriorFamily;
use crate::quantile_map::{reorder_by_q, ErrorModel, ParallelDataset};
use crate::rng::{hash64, rng_from_seed};

/// Signed errors at the extremes: `low[j] = θ̂_{j+1} - θ_{j+1}` and
/// `high[j] = θ_{p-j} - θ̂_{p-j}` in q-order.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SideErrors {
    pub low: Vec<f64>,
    pub high: Vec<f64>,
}

impl SideErrors {
    fn new(estimate: &[f64], truth: &[f64], i_max: usize) -> Self {
        let p = truth.len();
        Self {
            low: (0..i_max).map(|j| estimate[j] - truth[j]).collect(),
            high: (0..i_max).map(|j| truth[p - 1 - j] - estimate[p - 1 - j]).collect(),
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum MethodStatus {
    Ok,
    Failed,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodResult {
    pub method: String,
    pub status: MethodStatus,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub reason: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub errors: Option<SideErrors>,
    /// Post-burn-in Metropolis-Hastings acceptance rate.
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub acceptance: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub final_k: Option<usize>,
    /// Wall-clock seconds; written to the timings file, not the record.
    #[serde(skip)]
    pub seconds: f64,
}

/// Everything persisted for one replication under one true prior.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReplicationRecord {
    pub prior: TruePrior,
    pub p: usize,
    pub rep: usize,
    pub seed: u64,
    /// Errors of the no-shrinkage estimate `θ̂ = y`.
    pub raw: SideErrors,
    pub methods: Vec<MethodResult>,
}

impl ReplicationRecord {
    pub fn method(&self, name: &str) -> Option<&MethodResult> {
        self.methods.iter().find(|m| m.method == name)
    }
}

/// Draws θ_i from the true prior and y_i = θ_i + ε_i with ε_i ~ N(0, 1),
/// then sorts by q-value. All θ are drawn before any ε.
pub fn generate_dataset(prior: TruePrior, p: usize, seed: u64) -> ParallelDataset {
    let mut rng = rng_from_seed(seed);
    let effect = prior.dist();
    let theta: Vec<f64> = (0..p).map(|_| dist::sample(&effect, &mut rng)).collect();
    let noise = DistSpec::standard_normal();
    let y: Vec<f64> = theta.iter().map(|t| t + dist::sample(&noise, &mut rng)).collect();
    let ds = ParallelDataset::new(y, ErrorModel::standard_normal(p))
        .and_then(|d| d.with_true_theta(theta))
        .expect("lengths agree");
    reorder_by_q(&ds)
}

/// Runs one method on a q-ordered dataset and returns θ̂ with its acceptance diagnostics.
pub fn run_method(
    method: Method,
    ds: &ParallelDataset,
    chain: &ChainSettings,
    seed: u64,
) -> Result<(Vec<f64>, AcceptanceSummary)> {
    let gibbs = chain.gibbs(seed);
    let out = match method {
        Method::Laplace => standard_gibbs(ds, PriorFamily::Laplace, &gibbs)?,
        Method::Normal => standard_gibbs(ds, PriorFamily::Normal, &gibbs)?,
        Method::Mixture => standard_gibbs(ds, PriorFamily::Mixture, &gibbs)?,
        Method::RLaplace => robustified_gibbs(ds, PriorFamily::Laplace, &gibbs)?,
        Method::RNormal => robustified_gibbs(ds, PriorFamily::Normal, &gibbs)?,
        Method::RMixture => robustified_gibbs(ds, PriorFamily::Mixture, &gibbs)?,
        Method::Dp => {
            dp_fit(ds, &DpConfig { n_scans: chain.scans, burn_in: chain.burn_in, seed, ..DpConfig::default() })?
        }
    };
    let means = posterior_means(&out)?;
    if means.iter().any(|m| !m.is_finite()) {
        return Err(Error::DegenerateTheta("non-finite posterior mean"));
    }
    Ok((means, out.acceptance))
}

/// Generates replication `rep` and runs every configured method on it.
pub fn run_replication(cfg: &SimulationConfig, prior: TruePrior, rep: usize) -> ReplicationRecord {
    let seed = hash64(cfg.base_seed, rep as u64);
    let ds = generate_dataset(prior, cfg.p, seed);
    let truth = ds.true_theta().expect("generated with truth");
    let methods = cfg
        .methods
        .iter()
        .map(|&m| {
            let start = Instant::now();
            let outcome = run_method(m, &ds, &cfg.chain_for(m), hash64(seed, m.id()));
            let seconds = start.elapsed().as_secs_f64();
            match outcome {
                Ok((est, acc)) => MethodResult {
                    method: m.name().into(),
                    status: MethodStatus::Ok,
                    reason: None,
                    errors: Some(SideErrors::new(&est, truth, cfg.i_max)),
                    acceptance: acc.post_burn_in,
                    final_k: acc.final_k,
                    seconds,
                },
                Err(e) => MethodResult {
                    method: m.name().into(),
                    status: MethodStatus::Failed,
                    reason: Some(e.to_string()),
                    errors: None,
                    acceptance: None,
                    final_k: None,
                    seconds,
                },
            }
        })
        .collect();
    ReplicationRecord { prior, p: cfg.p, rep, seed, raw: SideErrors::new(ds.y(), truth, cfg.i_max), methods }
}

pub fn records_path(dir: &Path, prior: TruePrior) -> PathBuf {
    dir.join(format!("records-{}.ndjson", prior.name()))
}

fn manifest_path(dir: &Path, prior: TruePrior) -> PathBuf {
    dir.join(format!("manifest-{}.json", prior.name()))
}

fn timings_path(dir: &Path, prior: TruePrior) -> PathBuf {
    dir.join(format!("timings-{}.ndjson", prior.name()))
}

// Settings that must match for existing records to be extended.
#[derive(Debug, PartialEq, Serialize, Deserialize)]
struct Manifest {
    prior: TruePrior,
    p: usize,
    base_seed: u64,
    i_max: usize,
    methods: Vec<String>,
    chains: BTreeMap<String, ChainSettings>,
}

impl Manifest {
    fn new(cfg: &SimulationConfig, prior: TruePrior) -> Self {
        Self {
            prior,
            p: cfg.p,
            base_seed: cfg.base_seed,
            i_max: cfg.i_max,
            methods: cfg.methods.iter().map(|m| m.name().to_string()).collect(),
            chains: cfg.methods.iter().map(|&m| (m.name().to_string(), cfg.chain_for(m))).collect(),
        }
    }
}

// Reads complete records, dropping a trailing partial line left by an interrupted run.
fn read_existing(path: &Path) -> Result<Vec<ReplicationRecord>> {
    if !path.exists() {
        return Ok(Vec::new());
    }
    let bytes = fs::read(path)?;
    let complete = bytes.iter().rposition(|&b| b == b'\n').map_or(0, |i| i + 1);
    if complete < bytes.len() {
        OpenOptions::new().write(true).open(path)?.set_len(complete as u64)?;
    }
    let mut records = Vec::new();
    for (n, line) in BufReader::new(&bytes[..complete]).lines().enumerate() {
        let line = line?;
        let record: ReplicationRecord = serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?;
        if record.rep != n {
            return Err(Error::Record {
                path: path.display().to_string(),
                line: n + 1,
                message: format!("expected replication {n}, found {}", record.rep),
            });
        }
        records.push(record);
    }
    Ok(records)
}

/// Runs every replication not already on disk under `out_dir`, appending one
/// JSON line per replication to `records-<prior>.ndjson` in replication order.
///
/// Replications run in parallel batches of `cfg.workers`; `progress` is
/// called after each record is written. Returns all records, old and new.
pub fn run_experiment(
    cfg: &SimulationConfig,
    out_dir: &Path,
    progress: &(dyn Fn(&ReplicationRecord) + Sync),
) -> Result<Vec<ReplicationRecord>> {
    cfg.validate()?;
    fs::create_dir_all(out_dir)?;
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(cfg.workers)
        .build()
        .map_err(|e| Error::Config(format!("cannot start {} workers: {e}", cfg.workers)))?;
    let mut all = Vec::new();
    for &prior in &cfg.true_priors {
        let manifest = Manifest::new(cfg, prior);
        let mpath = manifest_path(out_dir, prior);
        if mpath.exists() {
            let existing: Manifest = serde_json::from_slice(&fs::read(&mpath)?).map_err(|e| Error::Record {
                path: mpath.display().to_string(),
                line: e.line(),
                message: e.to_string(),
            })?;
            if existing != manifest {
                return Err(Error::Config(format!(
                    "{} holds results for a different configuration; use another output directory",
                    out_dir.display()
                )));
            }
        } else {
            let text = serde_json::to_string_pretty(&manifest).expect("serializable");
            fs::write(&mpath, text + "\n")?;
        }

        let rpath = records_path(out_dir, prior);
        let mut records = read_existing(&rpath)?;
        let mut file = OpenOptions::new().create(true).append(true).open(&rpath)?;
        let mut timings = OpenOptions::new().create(true).append(true).open(timings_path(out_dir, prior))?;
        let mut next = records.len();
        while next < cfg.n_reps {
            let batch: Vec<usize> = (next..cfg.n_reps.min(next + cfg.workers)).collect();
            let done: Vec<ReplicationRecord> =
                pool.install(|| batch.par_iter().map(|&r| run_replication(cfg, prior, r)).collect());
            for record in done {
                let line = serde_json::to_string(&record).expect("finite values serialize");
                file.write_all(line.as_bytes())?;
                file.write_all(b"\n")?;
                file.flush()?;
                let seconds: BTreeMap<&str, f64> =
                    record.methods.iter().map(|m| (m.method.as_str(), m.seconds)).collect();
                let t = serde_json::json!({ "rep": record.rep, "seconds": seconds });
                writeln!(timings, "{t}")?;
                progress(&record);
                records.push(record);
            }
            next += batch.len();
        }
        all.extend(records);
    }
    Ok(all)
}

/// Opens a records file for reading, for callers that post-process it.
pub(crate) fn open_records(path: &Path) -> Result<Vec<ReplicationRecord>> {
    let file = File::open(path)?;
    let mut out = Vec::new();
    for (n, line) in BufReader::new(file).lines().enumerate() {
        let line = line?;
        if line.trim().is_empty() {
            continue;
        }
        out.push(serde_json::from_str(&line).map_err(|e| Error::Record {
            path: path.display().to_string(),
            line: n + 1,
            message: e.to_string(),
        })?);
    }
    Ok(out)
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny(methods: Vec<Method>, n_reps: usize) -> SimulationConfig {
        SimulationConfig {
            p: 30,
            n_reps,
            true_priors: vec![TruePrior::T],
            methods,
            chain: ChainSettings { scans: 60, burn_in: 20, adapt_every: 50, ..ChainSettings::default() },
            ..SimulationConfig::default()
        }
    }

    #[test]
    fn normal_prior_effect_spread() {
        let ds = generate_dataset(TruePrior::Normal, 100_000, 1);
        let t = ds.true_theta().unwrap();
        let mean = t.iter().sum::<f64>() / t.len() as f64;
        let sd = (t.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / t.len() as f64).sqrt();
        assert!((sd - 2.0).abs() < 0.02);
    }

    #[test]
    fn hybrid_tail_fraction() {
        let ds = generate_dataset(TruePrior::Hybrid, 100_000, 2);
        let n = ds.len() as f64;
        let f = ds.true_theta().unwrap().iter().filter(|t| t.abs() > 4.0).count() as f64 / n;
        assert!((f - 0.1).abs() < 3.0 * (0.09 / n).sqrt());
    }

    #[test]
    fn generation_is_deterministic() {
        let a = generate_dataset(TruePrior::T, 500, 3);
        let b = generate_dataset(TruePrior::T, 500, 3);
        assert_eq!(a, b);
        assert!(a.is_reordered());
    }

    #[test]
    fn two_reps_two_records() {
        let dir = tempfile::tempdir().unwrap();
        let recs = run_experiment(&tiny(vec![Method::Normal], 2), dir.path(), &|_| {}).unwrap();
        assert_eq!(recs.len(), 2);
        for r in &recs {
            assert_eq!(r.methods.len(), 1);
            assert_eq!(r.methods[0].status, MethodStatus::Ok);
        }
    }

    #[test]
    fn resume_extends_without_touching_old_records() {
        let dir = tempfile::tempdir().unwrap();
        let methods = vec![Method::Normal, Method::RNormal];
        run_experiment(&tiny(methods.clone(), 1), dir.path(), &|_| {}).unwrap();
        let path = records_path(dir.path(), TruePrior::T);
        let first = fs::read(&path).unwrap();
        // Simulate a crash in the middle of writing the next record.
        OpenOptions::new().append(true).open(&path).unwrap().write_all(b"{\"prior\":\"t\",\"p\"").unwrap();
        run_experiment(&tiny(methods.clone(), 3), dir.path(), &|_| {}).unwrap();
        let resumed = fs::read(&path).unwrap();
        assert!(resumed.starts_with(&first));
        let other = tempfile::tempdir().unwrap();
        run_experiment(&tiny(methods, 3), other.path(), &|_| {}).unwrap();
        assert_eq!(resumed, fs::read(records_path(other.path(), TruePrior::T)).unwrap());
    }

    #[test]
    fn mismatched_manifest_is_refused() {
        let dir = tempfile::tempdir().unwrap();
        run_experiment(&tiny(vec![Method::Normal], 1), dir.path(), &|_| {}).unwrap();
        let err = run_experiment(&tiny(vec![Method::Laplace], 1), dir.path(), &|_| {}).unwrap_err();
        assert!(matches!(err, Error::Config(_)));
    }

    #[test]
    fn side_errors_use_both_extremes() {
        let e = SideErrors::new(&[1.0, 2.0, 3.0, 4.0], &[0.5, 2.0, 3.0, 5.0], 1);
        assert_eq!(e.low, vec![0.5]);
        assert_eq!(e.high, vec![1.0]);
    }
}
