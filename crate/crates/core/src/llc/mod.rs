//! Linear cyclic causal discovery from total effects across interventional
//! experiments, with optional faithfulness constraints and bootstrap scores.

mod effects;
mod faithfulness;
mod noise;
mod solver;
mod system;

pub use effects::{estimate_total_effects, total_effects_from_covariance, TotalEffects};
pub use faithfulness::{faithfulness_constraints, faithfulness_with, FaithfulnessConstraints};
pub use noise::{estimate_noise_covariance, noise_from_covariances};
pub use solver::{solve_penalized, solve_penalized_with, Penalty, SolverOptions};
pub use system::{
    assemble_system, column_index, column_pair, covariance_condition, pair_condition, LlcSystem, RowSource,
};

use nalgebra::DMatrix;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::CiTester;
use crate::error::{Error, Result};
use crate::features::{features, Feature, FeatureScoreTable};
use crate::scm::{Dataset, Experiment};

/// Scores are capped here, and exact-data scores use it as the "present" value.
pub const SCORE_CAP: f64 = 1e6;
/// Exact-data estimates with magnitude at or below this count as absent.
pub const EXACT_SUPPORT_TOL: f64 = 1e-7;
const STD_FLOOR: f64 = 1e-12;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LlcConfig {
    pub penalty: Penalty,
    pub lambda: f64,
    pub alpha_llc: f64,
    pub use_faithfulness: bool,
    pub bootstrap_reps: usize,
    pub z_threshold: f64,
    /// Largest conditioning set for the faithfulness tests; all by default.
    pub max_cond: Option<usize>,
    pub solver: SolverOptions,
}

impl Default for LlcConfig {
    fn default() -> Self {
        Self {
            penalty: Penalty::L1,
            lambda: 0.05,
            alpha_llc: 0.05,
            use_faithfulness: false,
            bootstrap_reps: 100,
            z_threshold: 5.0,
            max_cond: None,
            solver: SolverOptions::default(),
        }
    }
}

impl LlcConfig {
    pub fn with_faithfulness(mut self, on: bool) -> Self {
        self.use_faithfulness = on;
        self
    }

    pub fn method_name(&self) -> &'static str {
        if self.use_faithfulness {
            "llc_f"
        } else {
            "llc_nf"
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Usage(format!("lambda must be nonnegative, got {}", self.lambda)));
        }
        if !(self.alpha_llc > 0.0 && self.alpha_llc < 1.0) {
            return Err(Error::Usage(format!("alpha_llc must lie in (0, 1), got {}", self.alpha_llc)));
        }
        if self.bootstrap_reps < 2 {
            return Err(Error::Usage("bootstrap_reps must be at least 2".into()));
        }
        Ok(())
    }
}

/// Point estimate of the model.
#[derive(Clone, Debug, PartialEq)]
pub struct LlcFit {
    pub b: DMatrix<f64>,
    pub sigma_e: DMatrix<f64>,
    pub system: LlcSystem,
    pub faithfulness: Option<FaithfulnessConstraints>,
}

impl LlcFit {
    /// Estimated value per feature: `b[to, from]` for directed, `Σe[a, b]` for bidirected.
    pub fn feature_values(&self) -> Vec<f64> {
        features(self.b.nrows())
            .into_iter()
            .map(|f| match f {
                Feature::Directed { from, to } => self.b[(to, from)],
                Feature::Bidirected { a, b } => self.sigma_e[(a, b)],
            })
            .collect()
    }
}

fn check_datasets(datasets: &[Dataset]) -> Result<usize> {
    let n = datasets
        .first()
        .map(Dataset::n)
        .ok_or_else(|| Error::Usage("at least one dataset is required".into()))?;
    if datasets.iter().any(|d| d.n() != n) {
        return Err(Error::Usage("datasets disagree on the number of variables".into()));
    }
    Ok(n)
}

/// Full pipeline on one collection of datasets: total effects, linear system
/// (plus faithfulness rows if configured), penalised solve, noise covariance.
pub fn llc_fit(datasets: &[Dataset], cfg: &LlcConfig) -> Result<LlcFit> {
    let n = check_datasets(datasets)?;
    let setup: Vec<Experiment> = datasets.iter().map(|d| d.experiment().clone()).collect();
    let testers: Vec<CiTester> = datasets.iter().map(CiTester::new).collect();
    fit_from_testers(n, &setup, &testers, cfg)
}

fn fit_from_testers(n: usize, setup: &[Experiment], testers: &[CiTester], cfg: &LlcConfig) -> Result<LlcFit> {
    let effects = setup
        .iter()
        .zip(testers)
        .map(|(e, t)| total_effects_from_covariance(e, t.covariance()))
        .collect::<Result<Vec<_>>>()?;
    let mut system = assemble_system(n, &effects)?;
    let faithfulness = cfg.use_faithfulness.then(|| {
        let max_cond = cfg.max_cond.unwrap_or(n.saturating_sub(2));
        faithfulness::faithfulness_from_testers(setup, testers, cfg.alpha_llc, max_cond)
    });
    if let Some(fc) = &faithfulness {
        fc.extend_system(&mut system);
    }
    let b = solve_penalized_with(&system, cfg.penalty, cfg.lambda, cfg.solver)?;
    let covs: Vec<DMatrix<f64>> = testers.iter().map(|t| t.covariance().clone()).collect();
    let mut sigma_e = noise_from_covariances(&b, setup, &covs)?;
    if let Some(fc) = &faithfulness {
        for &(a, c) in fc.zero_noise.keys() {
            sigma_e[(a, c)] = 0.0;
            sigma_e[(c, a)] = 0.0;
        }
    }
    Ok(LlcFit {
        b,
        sigma_e,
        system,
        faithfulness,
    })
}

/// `|mean| / std` over resampled values, std floored and the score capped.
pub fn z_score(values: &[f64]) -> f64 {
    let k = values.len() as f64;
    let mean = values.iter().sum::<f64>() / k;
    let var = values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (k - 1.0).max(1.0);
    (mean.abs() / var.sqrt().max(STD_FLOOR)).min(SCORE_CAP)
}

/// Bootstrap feature scores. Exact (infinite-data) inputs skip the bootstrap
/// and score `SCORE_CAP` for every estimate above [`EXACT_SUPPORT_TOL`].
/// Each resample draws from its own stream derived from `seed`.
pub fn llc_discover(datasets: &[Dataset], cfg: &LlcConfig, seed: u64) -> Result<FeatureScoreTable> {
    cfg.validate()?;
    let n = check_datasets(datasets)?;
    let exact = datasets.iter().filter(|d| d.is_exact()).count();
    if exact == datasets.len() {
        let fit = llc_fit(datasets, cfg)?;
        let scores = fit
            .feature_values()
            .iter()
            .map(|v| if v.abs() > EXACT_SUPPORT_TOL { SCORE_CAP } else { 0.0 })
            .collect();
        return FeatureScoreTable::new(n, cfg.method_name(), scores);
    }
    if exact > 0 {
        return Err(Error::Usage("cannot mix exact and sampled datasets".into()));
    }
    let setup: Vec<Experiment> = datasets.iter().map(|d| d.experiment().clone()).collect();
    let draws = (0..cfg.bootstrap_reps)
        .into_par_iter()
        .map(|r| {
            let mut rng = crate::rng::stream(seed, &[r as u64]);
            let testers: Vec<CiTester> = datasets.iter().map(|d| CiTester::new(&d.resample(&mut rng))).collect();
            fit_from_testers(n, &setup, &testers, cfg)
                .map(|fit| fit.feature_values())
                .map_err(|e| Error::Resample {
                    index: r,
                    source: Box::new(e),
                })
        })
        .collect::<Result<Vec<Vec<f64>>>>()?;
    let scores = (0..draws[0].len())
        .map(|f| z_score(&draws.iter().map(|d| d[f]).collect::<Vec<_>>()))
        .collect();
    FeatureScoreTable::new(n, cfg.method_name(), scores)
}
