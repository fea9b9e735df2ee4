//! Evaluation harness: a shared SCM cohort, the setup grid, dataset sizes
//! (including the infinite regime), all four methods, and reports.

mod metrics;
mod report;

use std::fmt;
use std::str::FromStr;
use std::time::Instant;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{enumerate_constraints, oracle_constraints};
use crate::error::{Error, Result};
use crate::features::{feature_count, feature_labels};
use crate::llc::{llc_discover, LlcConfig};
use crate::rng;
use crate::scm::{
    analytic_covariance, experiment_setup, graph_of, sample_data, sample_random_scm, Dataset, DatasetSize,
    LinearScm, ScmSamplerConfig, SETUP_IDS,
};
use crate::search::{confidence_table, ensemble_predict, SearchConfig, SeparationMode};

pub use metrics::{accuracy, auc_roc, weak_baseline};
pub use report::{emit_report, fmt_sig, pooled_auc, read_results, AucRow, Summary, SummaryRow};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Method {
    LlcNf,
    LlcF,
    AspD,
    AspS,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::LlcNf, Method::LlcF, Method::AspD, Method::AspS];

    pub fn name(&self) -> &'static str {
        match self {
            Method::LlcNf => "llc_nf",
            Method::LlcF => "llc_f",
            Method::AspD => "asp_d",
            Method::AspS => "asp_s",
        }
    }

    fn tag(&self) -> u64 {
        *self as u64
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::Usage(format!("unknown method {s:?}; use llc_nf, llc_f, asp_d or asp_s")))
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct BenchConfig {
    pub n_scms: usize,
    pub sizes: Vec<DatasetSize>,
    pub setup_ids: Vec<u32>,
    pub methods: Vec<Method>,
    pub seed: u64,
    pub sampler: ScmSamplerConfig,
    pub llc: LlcConfig,
    pub search: SearchConfig,
    /// Wall-clock timings make output files differ between runs, so they
    /// are reported as zero unless asked for.
    pub record_runtime: bool,
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self::paper()
    }
}

impl BenchConfig {
    /// The full grid: 150 SCMs, every setup, every size.
    pub fn paper() -> Self {
        Self {
            n_scms: 150,
            sizes: vec![
                DatasetSize::Finite(1000),
                DatasetSize::Finite(10_000),
                DatasetSize::Finite(100_000),
                DatasetSize::Infinite,
            ],
            setup_ids: SETUP_IDS.to_vec(),
            methods: Method::ALL.to_vec(),
            seed: 0,
            sampler: ScmSamplerConfig::default(),
            llc: LlcConfig::default(),
            search: SearchConfig::default(),
            record_runtime: false,
        }
    }

    /// 30 SCMs, n = 1000, setups 0, 11, 15, 21, 25.
    pub fn desk() -> Self {
        Self {
            n_scms: 30,
            sizes: vec![DatasetSize::Finite(1000)],
            setup_ids: vec![0, 11, 15, 21, 25],
            ..Self::paper()
        }
    }

    pub fn profile(name: &str) -> Result<Self> {
        match name {
            "desk" => Ok(Self::desk()),
            "paper" => Ok(Self::paper()),
            other => Err(Error::Usage(format!("unknown profile {other:?}; use desk or paper"))),
        }
    }

    pub fn validate(&self) -> Result<()> {
        let empty = |what: &str| Err(Error::Usage(format!("bench config: {what} must not be empty")));
        if self.n_scms == 0 {
            return empty("the SCM cohort");
        }
        if self.sizes.is_empty() {
            return empty("sizes");
        }
        if self.setup_ids.is_empty() {
            return empty("setup_ids");
        }
        if self.methods.is_empty() {
            return empty("methods");
        }
        if let Some(&id) = self.setup_ids.iter().find(|id| !SETUP_IDS.contains(id)) {
            return Err(Error::UnknownSetup { id });
        }
        self.sampler.validate()?;
        self.llc.validate()?;
        self.search.validate()
    }
}

/// One (SCM, setup, size, method) evaluation.
#[derive(Clone, Debug, PartialEq)]
pub struct CellResult {
    pub scm_id: usize,
    pub setup_id: u32,
    pub size: DatasetSize,
    pub method: Method,
    /// Per-feature scores in canonical feature order; empty for failed cells.
    pub scores: Vec<f64>,
    pub predictions: Vec<bool>,
    /// Ground-truth presence of each feature.
    pub truth: Vec<bool>,
    /// NaN for failed cells.
    pub accuracy: f64,
    pub runtime_s: f64,
    pub certified: bool,
    pub n_failed_features: usize,
    pub error: Option<String>,
}

impl CellResult {
    pub fn failed(&self) -> bool {
        self.error.is_some()
    }
}

#[derive(Clone, Debug)]
pub struct BenchRun {
    pub scms: Vec<LinearScm>,
    pub cells: Vec<CellResult>,
    pub auc: Vec<AucRow>,
}

fn size_code(size: DatasetSize) -> u64 {
    match size {
        DatasetSize::Finite(m) => m as u64,
        DatasetSize::Infinite => u64::MAX,
    }
}

/// Random-stream path of the datasets of one (SCM, setup, size) unit.
pub fn dataset_stream(scm_id: usize, setup_id: u32, size: DatasetSize) -> [u64; 4] {
    [1, scm_id as u64, setup_id as u64, size_code(size)]
}

/// The cohort: SCM `i` comes from its own stream of `seed`.
pub fn sample_cohort(sampler: &ScmSamplerConfig, n_scms: usize, seed: u64) -> Result<Vec<LinearScm>> {
    (0..n_scms)
        .into_par_iter()
        .map(|i| sample_random_scm(sampler, &mut rng::stream(seed, &[0, i as u64])))
        .collect()
}

/// Datasets of one setup: `size` rows per experiment, or exact covariances.
pub fn simulate_setup(scm: &LinearScm, setup_id: u32, size: DatasetSize, stream: &[u64], seed: u64) -> Result<Vec<Dataset>> {
    let setup = experiment_setup(setup_id, scm.n())?;
    match size {
        DatasetSize::Infinite => setup
            .into_iter()
            .map(|e| {
                let cov = analytic_covariance(scm, &e)?;
                Dataset::exact(e, cov)
            })
            .collect(),
        DatasetSize::Finite(m) => {
            let mut rng = rng::stream(seed, stream);
            setup.iter().map(|e| sample_data(scm, e, m, &mut rng)).collect()
        }
    }
}

struct Scored {
    scores: Vec<f64>,
    predictions: Vec<bool>,
    certified: bool,
    n_failed: usize,
}

fn score_cell(
    cfg: &BenchConfig,
    scm: &LinearScm,
    datasets: &[Dataset],
    size: DatasetSize,
    method: Method,
    llc_seed: u64,
) -> Result<Scored> {
    match method {
        Method::LlcNf | Method::LlcF => {
            let llc = cfg.llc.clone().with_faithfulness(method == Method::LlcF);
            let table = llc_discover(datasets, &llc, llc_seed)?;
            Ok(Scored {
                predictions: table.predict(llc.z_threshold),
                scores: table.scores().to_vec(),
                certified: true,
                n_failed: 0,
            })
        }
        Method::AspD | Method::AspS => {
            let mode = if method == Method::AspD {
                SeparationMode::D
            } else {
                SeparationMode::Sigma
            };
            let search = cfg.search.clone().with_mode(mode);
            let n = scm.n();
            let max_cond = search.max_cond.unwrap_or(n.saturating_sub(2));
            let setup: Vec<_> = datasets.iter().map(|d| d.experiment().clone()).collect();
            let k = if size.is_infinite() {
                oracle_constraints(scm, &setup, max_cond)
            } else {
                enumerate_constraints(datasets, search.alpha_asp, max_cond)
            };
            let out = confidence_table(&k, &setup, &search)?;
            Ok(Scored {
                predictions: ensemble_predict(&out.table, search.t_asp),
                scores: out.table.scores().to_vec(),
                certified: out.uncertified_features == 0,
                n_failed: out.uncertified_features,
            })
        }
    }
}

fn run_unit(cfg: &BenchConfig, scm_id: usize, scm: &LinearScm, setup_id: u32, size: DatasetSize) -> Vec<CellResult> {
    let truth = feature_labels(&graph_of(scm, 0.0));
    let path = dataset_stream(scm_id, setup_id, size);
    let datasets = simulate_setup(scm, setup_id, size, &path, cfg.seed);
    cfg.methods
        .iter()
        .map(|&method| {
            let start = Instant::now();
            let llc_seed = rng::derive_seed(cfg.seed, &[2, scm_id as u64, setup_id as u64, size_code(size), method.tag()]);
            let scored = datasets
                .as_ref()
                .map_err(|e| Error::Usage(e.to_string()))
                .and_then(|ds| score_cell(cfg, scm, ds, size, method, llc_seed));
            let runtime_s = if cfg.record_runtime {
                start.elapsed().as_secs_f64()
            } else {
                0.0
            };
            let base = CellResult {
                scm_id,
                setup_id,
                size,
                method,
                scores: Vec::new(),
                predictions: Vec::new(),
                truth: truth.clone(),
                accuracy: f64::NAN,
                runtime_s,
                certified: false,
                n_failed_features: truth.len(),
                error: None,
            };
            match scored {
                Ok(s) => CellResult {
                    accuracy: metrics::label_accuracy(&s.predictions, &truth),
                    scores: s.scores,
                    predictions: s.predictions,
                    certified: s.certified,
                    n_failed_features: s.n_failed,
                    ..base
                },
                Err(e) => {
                    log::warn!("scm {scm_id} setup {setup_id} size {size} {method}: {e}");
                    CellResult {
                        error: Some(e.to_string()),
                        ..base
                    }
                }
            }
        })
        .collect()
}

/// Every (SCM, setup, size, method) cell, in that nesting order, plus the
/// pooled AUC per (setup, size, method). Failed cells are kept with their
/// error message. Output does not depend on the thread count.
pub fn run_benchmark(cfg: &BenchConfig) -> Result<BenchRun> {
    cfg.validate()?;
    let scms = sample_cohort(&cfg.sampler, cfg.n_scms, cfg.seed)?;
    let mut units = Vec::new();
    for scm_id in 0..scms.len() {
        for &setup_id in &cfg.setup_ids {
            for &size in &cfg.sizes {
                units.push((scm_id, setup_id, size));
            }
        }
    }
    let cells: Vec<CellResult> = units
        .into_par_iter()
        .flat_map_iter(|(scm_id, setup_id, size)| run_unit(cfg, scm_id, &scms[scm_id], setup_id, size))
        .collect();
    debug_assert!(cells.iter().all(|c| c.truth.len() == feature_count(cfg.sampler.n_nodes)));
    let auc = pooled_auc(&cells);
    Ok(BenchRun { scms, cells, auc })
}

#[cfg(test)]
mod tests;
