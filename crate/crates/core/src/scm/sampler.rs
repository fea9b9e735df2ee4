use nalgebra::DMatrix;
use rand::seq::index::sample as sample_indices;
use rand::Rng;
use serde::{Deserialize, Serialize};

use super::{grid_experiments, is_weakly_stable, min_eigenvalue, Experiment, LinearScm};
use crate::error::{Error, Result};
use crate::graph::has_directed_cycle;

/// Parameters of the random SCM generator.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ScmSamplerConfig {
    pub n_nodes: usize,
    pub n_confounders: usize,
    pub max_in_degree: usize,
    pub coef_low: f64,
    pub coef_high: f64,
    pub confounder_low: f64,
    pub confounder_high: f64,
    pub require_cycle: bool,
    pub max_attempts: usize,
}

impl Default for ScmSamplerConfig {
    fn default() -> Self {
        Self {
            n_nodes: 5,
            n_confounders: 2,
            max_in_degree: 2,
            coef_low: 0.1,
            coef_high: 1.1,
            confounder_low: 0.2,
            confounder_high: 0.8,
            require_cycle: true,
            max_attempts: 10_000,
        }
    }
}

impl ScmSamplerConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |msg: &str| Err(Error::Usage(format!("sampler config: {msg}")));
        if self.n_nodes < 2 {
            return bad("n_nodes must be at least 2");
        }
        if self.n_nodes > crate::graph::MAX_NODES {
            return bad("n_nodes exceeds the supported graph size");
        }
        if !(0.0 < self.coef_low && self.coef_low < self.coef_high) {
            return bad("need 0 < coef_low < coef_high");
        }
        if !(0.0 < self.confounder_low && self.confounder_low <= self.confounder_high) {
            return bad("need 0 < confounder_low <= confounder_high");
        }
        if self.n_confounders > self.n_nodes * (self.n_nodes - 1) / 2 {
            return bad("more confounders than node pairs");
        }
        if self.max_in_degree >= self.n_nodes {
            return bad("max_in_degree must be below n_nodes");
        }
        if self.max_attempts == 0 {
            return bad("max_attempts must be positive");
        }
        Ok(())
    }
}

fn signed_uniform<R: Rng + ?Sized>(rng: &mut R, low: f64, high: f64) -> f64 {
    let magnitude = rng.random_range(low..=high);
    if rng.random_bool(0.5) {
        magnitude
    } else {
        -magnitude
    }
}

fn draw_candidate<R: Rng + ?Sized>(cfg: &ScmSamplerConfig, rng: &mut R) -> LinearScm {
    let n = cfg.n_nodes;
    let mut b = DMatrix::zeros(n, n);
    for u in 0..n {
        // in-degree uniform on 0..=max, then a uniformly random parent set
        let k = rng.random_range(0..=cfg.max_in_degree);
        let others: Vec<usize> = (0..n).filter(|&i| i != u).collect();
        for idx in sample_indices(rng, others.len(), k) {
            b[(u, others[idx])] = signed_uniform(rng, cfg.coef_low, cfg.coef_high);
        }
    }
    let pairs: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (i + 1..n).map(move |j| (i, j)))
        .collect();
    let mut sigma = DMatrix::identity(n, n);
    for idx in sample_indices(rng, pairs.len(), cfg.n_confounders) {
        let (i, j) = pairs[idx];
        let c = signed_uniform(rng, cfg.confounder_low, cfg.confounder_high);
        sigma[(i, j)] = c;
        sigma[(j, i)] = c;
    }
    LinearScm { b, sigma_e: sigma }
}

/// Draw a random sparse cyclic SCM.
///
/// Each node draws its in-degree uniformly from `0..=max_in_degree` and then
/// a uniformly random parent set; coefficients are uniform on
/// `±[coef_low, coef_high]`. The noise covariance has a unit diagonal and
/// exactly `n_confounders` off-diagonal pairs. Candidates are rejected until
/// they contain a directed cycle (if required), have a PSD noise covariance
/// and are weakly stable for every experiment of the evaluation grid.
pub fn sample_random_scm<R: Rng + ?Sized>(cfg: &ScmSamplerConfig, rng: &mut R) -> Result<LinearScm> {
    cfg.validate()?;
    let checks: Vec<Experiment> = if cfg.n_nodes >= 5 {
        grid_experiments(cfg.n_nodes)
    } else {
        (0..cfg.n_nodes)
            .map(|v| Experiment::new(cfg.n_nodes, vec![v]).expect("in range"))
            .collect()
    };
    for _ in 0..cfg.max_attempts {
        let scm = draw_candidate(cfg, rng);
        if cfg.require_cycle && !has_directed_cycle(&super::graph_of(&scm, 0.0)) {
            continue;
        }
        if min_eigenvalue(&scm.sigma_e) < 1e-10 {
            continue;
        }
        if !is_weakly_stable(&scm, &checks) {
            continue;
        }
        return Ok(scm);
    }
    Err(Error::Generation(format!(
        "no admissible SCM within {} attempts",
        cfg.max_attempts
    )))
}
