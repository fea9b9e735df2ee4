//! Weighted constraint-loss minimisation over directed mixed graphs, the
//! run-twice feature confidence and the sparse-prior ensemble.

mod problem;
mod solve;

pub use problem::MAX_SEARCH_NODES;
pub use solve::TraceEvent;

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::ci::{covariance_constraints, enumerate_constraints, CiKind, ConstraintSet};
use crate::error::{Error, Result};
use crate::features::{features, Feature, FeatureScoreTable};
use crate::graph::{bit, d_separated, intervene_graph, sigma_separated, DirectedMixedGraph, SeparationQuery};
use crate::scm::{Dataset, Experiment};

use problem::Problem;
use solve::{solve, solve_sides, Solution, LOSS_EPS};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub enum SeparationMode {
    #[serde(rename = "d_sep")]
    D,
    #[serde(rename = "sigma_sep")]
    Sigma,
}

impl SeparationMode {
    pub fn method_name(&self) -> &'static str {
        match self {
            SeparationMode::D => "asp_d",
            SeparationMode::Sigma => "asp_s",
        }
    }

    pub fn separated(&self, g: &DirectedMixedGraph, q: &SeparationQuery) -> bool {
        match self {
            SeparationMode::D => d_separated(g, q),
            SeparationMode::Sigma => sigma_separated(g, q),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SearchConfig {
    pub mode: SeparationMode,
    /// Largest node count solved by branch and bound; larger graphs anneal.
    pub exact_node_limit: usize,
    /// Search-node budget per solve before falling back to annealing.
    pub node_budget: u64,
    pub anneal_steps: usize,
    pub anneal_start_temp: f64,
    pub anneal_end_temp: f64,
    pub anneal_seed: u64,
    pub alpha_asp: f64,
    pub t_asp: f64,
    /// Largest conditioning set tested; all by default.
    pub max_cond: Option<usize>,
}

impl Default for SearchConfig {
    fn default() -> Self {
        Self {
            mode: SeparationMode::D,
            exact_node_limit: 5,
            node_budget: 20_000_000,
            anneal_steps: 200_000,
            anneal_start_temp: 1.0,
            anneal_end_temp: 1e-3,
            anneal_seed: 0,
            alpha_asp: 0.05,
            t_asp: 0.0,
            max_cond: None,
        }
    }
}

impl SearchConfig {
    pub fn with_mode(mut self, mode: SeparationMode) -> Self {
        self.mode = mode;
        self
    }

    pub fn validate(&self) -> Result<()> {
        if self.node_budget == 0 {
            return Err(Error::Usage("node_budget must be positive".into()));
        }
        if !(self.anneal_start_temp > 0.0 && self.anneal_end_temp > 0.0) {
            return Err(Error::Usage("annealing temperatures must be positive".into()));
        }
        if !(self.alpha_asp > 0.0 && self.alpha_asp < 1.0) {
            return Err(Error::Usage(format!("alpha_asp must lie in (0, 1), got {}", self.alpha_asp)));
        }
        Ok(())
    }
}

/// Sum of the weights of constraints `g` does not entail: an independence is
/// entailed iff separated in the manipulated graph of its experiment, a
/// dependence iff connected.
pub fn graph_loss(g: &DirectedMixedGraph, k: &ConstraintSet, setup: &[Experiment], mode: SeparationMode) -> Result<f64> {
    let views: Vec<DirectedMixedGraph> = setup.iter().map(|e| intervene_graph(g, e.intervened())).collect();
    let mut loss = 0.0;
    for c in k.constraints() {
        let view = views.get(c.experiment).ok_or_else(|| {
            Error::Usage(format!("constraint refers to experiment {} outside the setup", c.experiment))
        })?;
        if c.j >= g.n() {
            return Err(Error::Usage(format!("constraint mentions node {} outside the graph", c.j)));
        }
        let q = SeparationQuery::new(c.i, c.j, c.s.clone())?;
        if mode.separated(view, &q) != (c.kind == CiKind::Independent) {
            loss += c.weight;
        }
    }
    Ok(loss)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SearchOutcome {
    pub loss: f64,
    pub graph: DirectedMixedGraph,
    /// False when the exact search did not finish and annealing supplied the answer.
    pub certified: bool,
    pub nodes: u64,
}

fn feature_bit(n: usize, f: Feature) -> Result<u64> {
    features(n)
        .iter()
        .position(|g| *g == f)
        .map(bit)
        .ok_or_else(|| Error::Usage(format!("feature {f} outside a {n}-node graph")))
}

fn outcome(p: &Problem, s: Solution) -> SearchOutcome {
    SearchOutcome {
        loss: s.loss,
        graph: p.graph(s.mask),
        certified: s.certified,
        nodes: s.nodes,
    }
}

/// A loss-minimising graph; ties go to fewer edges.
pub fn minimize_loss(k: &ConstraintSet, setup: &[Experiment], cfg: &SearchConfig) -> Result<SearchOutcome> {
    minimize_loss_pinned(k, setup, cfg, &[])
}

/// As [`minimize_loss`] with some features forced present (`true`) or absent.
pub fn minimize_loss_pinned(
    k: &ConstraintSet,
    setup: &[Experiment],
    cfg: &SearchConfig,
    pins: &[(Feature, bool)],
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let p = Problem::compile(k, setup, cfg.mode)?;
    let (on, off) = pin_masks(p.n, pins)?;
    Ok(outcome(&p, solve(&p, cfg, on, off, None, true, None)))
}

/// As [`minimize_loss`], reporting progress to `trace`.
pub fn minimize_loss_traced(
    k: &ConstraintSet,
    setup: &[Experiment],
    cfg: &SearchConfig,
    trace: &mut dyn FnMut(&TraceEvent),
) -> Result<SearchOutcome> {
    cfg.validate()?;
    let p = Problem::compile(k, setup, cfg.mode)?;
    Ok(outcome(&p, solve(&p, cfg, 0, 0, None, true, Some(trace))))
}

fn pin_masks(n: usize, pins: &[(Feature, bool)]) -> Result<(u64, u64)> {
    let (mut on, mut off) = (0, 0);
    for &(f, present) in pins {
        let b = feature_bit(n, f)?;
        if present {
            on |= b;
        } else {
            off |= b;
        }
    }
    if on & off != 0 {
        return Err(Error::Usage("a feature is pinned both present and absent".into()));
    }
    Ok((on, off))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct Confidence {
    /// `L*(absent) - L*(present)`; positive favours presence.
    pub score: f64,
    pub certified: bool,
}

fn snap(score: f64) -> f64 {
    if score.abs() <= LOSS_EPS {
        0.0
    } else {
        score
    }
}

/// Run-twice confidence of one feature.
pub fn feature_confidence(
    k: &ConstraintSet,
    setup: &[Experiment],
    cfg: &SearchConfig,
    feature: Feature,
) -> Result<Confidence> {
    cfg.validate()?;
    let p = Problem::compile(k, setup, cfg.mode)?;
    let b = feature_bit(p.n, feature)?;
    let with = solve(&p, cfg, b, 0, None, false, None);
    let without = solve(&p, cfg, 0, b, None, false, None);
    Ok(Confidence {
        score: snap(without.loss - with.loss),
        certified: with.certified && without.certified,
    })
}

/// Confidence scores for every feature plus the number of features whose
/// solves were not certified optimal.
#[derive(Clone, Debug, PartialEq)]
pub struct AspScores {
    pub table: FeatureScoreTable,
    pub optimum: SearchOutcome,
    pub uncertified_features: usize,
}

/// All feature confidences. The unconstrained optimum `G*` settles the side
/// of each feature it agrees with, so only the opposite side is solved.
pub fn confidence_table(k: &ConstraintSet, setup: &[Experiment], cfg: &SearchConfig) -> Result<AspScores> {
    cfg.validate()?;
    let p = Problem::compile(k, setup, cfg.mode)?;
    let best = solve(&p, cfg, 0, 0, None, true, None);
    let sides = solve_sides(&p, cfg, &best);
    let per_feature: Vec<(f64, bool)> = if sides.certified {
        (0..p.nf).map(|f| (snap(sides.off[f] - sides.on[f]), true)).collect()
    } else {
        log::debug!("shared search gave up after {} nodes; solving features separately", sides.nodes);
        (0..p.nf)
            .into_par_iter()
            .map(|f| {
                let b = bit(f);
                if best.mask & b != 0 {
                    let alt = solve(&p, cfg, 0, b, Some(best.mask), false, None);
                    (snap(alt.loss - best.loss), alt.certified && best.certified)
                } else {
                    let alt = solve(&p, cfg, b, 0, Some(best.mask), false, None);
                    (snap(best.loss - alt.loss), alt.certified && best.certified)
                }
            })
            .collect()
    };
    let uncertified_features = per_feature.iter().filter(|(_, c)| !c).count();
    let table = FeatureScoreTable::new(p.n, cfg.mode.method_name(), per_feature.iter().map(|s| s.0).collect())?;
    Ok(AspScores {
        table,
        optimum: outcome(&p, best),
        uncertified_features,
    })
}

/// Sparse-prior ensemble: present iff `score > t_asp`; undetermined
/// (zero-score) features fall to "absent".
pub fn ensemble_predict(scores: &FeatureScoreTable, t_asp: f64) -> Vec<bool> {
    scores.predict(t_asp)
}

/// Constraints from data (Fisher z weights on finite data, weight-one exact
/// constraints on infinite data) followed by [`confidence_table`].
pub fn asp_discover(datasets: &[Dataset], cfg: &SearchConfig) -> Result<AspScores> {
    let n = datasets
        .first()
        .map(Dataset::n)
        .ok_or_else(|| Error::Usage("at least one dataset is required".into()))?;
    let max_cond = cfg.max_cond.unwrap_or(n.saturating_sub(2));
    let exact = datasets.iter().filter(|d| d.is_exact()).count();
    let k = if exact == datasets.len() {
        covariance_constraints(datasets, max_cond)?
    } else if exact == 0 {
        enumerate_constraints(datasets, cfg.alpha_asp, max_cond)
    } else {
        return Err(Error::Usage("cannot mix exact and sampled datasets".into()));
    };
    let setup: Vec<Experiment> = datasets.iter().map(|d| d.experiment().clone()).collect();
    confidence_table(&k, &setup, cfg)
}
