use std::collections::BTreeMap;

use super::system::{LlcSystem, RowSource};
use crate::ci::{conditioning_sets, CiTester};
use crate::scm::{Dataset, Experiment};

/// Zero constraints implied by independences under faithfulness.
///
/// Keys of `zero_coefficients` are `(u, i)` meaning `b_ui = 0`; keys of
/// `zero_noise` are pairs `(a, b)` with `a < b`. Each value records the
/// first `(rule, experiment)` that produced the constraint.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct FaithfulnessConstraints {
    pub zero_coefficients: BTreeMap<(usize, usize), (u8, usize)>,
    pub zero_noise: BTreeMap<(usize, usize), (u8, usize)>,
}

impl FaithfulnessConstraints {
    fn coefficient(&mut self, u: usize, i: usize, rule: u8, k: usize) {
        self.zero_coefficients.entry((u, i)).or_insert((rule, k));
    }

    fn noise(&mut self, a: usize, b: usize, rule: u8, k: usize) {
        self.zero_noise.entry((a.min(b), a.max(b))).or_insert((rule, k));
    }

    pub fn is_empty(&self) -> bool {
        self.zero_coefficients.is_empty() && self.zero_noise.is_empty()
    }

    /// Append one `b_ui = 0` row per constrained coefficient.
    pub fn extend_system(&self, sys: &mut LlcSystem) {
        for (&(u, i), &(rule, experiment)) in &self.zero_coefficients {
            sys.push_zero_row(u, i, RowSource::Faithfulness { rule, experiment });
        }
    }
}

/// Apply the four faithfulness rules using a generic independence judge
/// `independent(k, i, j, s)` for experiment `k` of `setup`. Conditioning
/// sets range over all other variables up to `max_cond` elements.
pub fn faithfulness_with<F>(setup: &[Experiment], max_cond: usize, independent: F) -> FaithfulnessConstraints
where
    F: Fn(usize, usize, usize, &[usize]) -> bool,
{
    let mut out = FaithfulnessConstraints::default();
    for (k, e) in setup.iter().enumerate() {
        let n = e.n();
        let free = e.unintervened();
        let forced = e.intervened();
        let separable = |a: usize, b: usize| {
            let pool: Vec<usize> = (0..n).filter(|&v| v != a && v != b).collect();
            conditioning_sets(&pool, max_cond)
                .iter()
                .any(|s| independent(k, a, b, s))
        };
        // rule 1
        for (x, &i) in free.iter().enumerate() {
            for &j in &free[x + 1..] {
                if separable(i, j) {
                    out.coefficient(i, j, 1, k);
                    out.coefficient(j, i, 1, k);
                    out.noise(i, j, 1, k);
                }
            }
        }
        for &i in forced {
            // total effect of i on u is nonzero iff the pair is marginally dependent
            let reaches: Vec<bool> = (0..n)
                .map(|u| !e.is_intervened(u) && !independent(k, i, u, &[]))
                .collect();
            for &u in &free {
                // rule 2
                if separable(i, u) {
                    out.coefficient(u, i, 2, k);
                }
            }
            for &u in free.iter().filter(|&&u| reaches[u]) {
                for &v in free.iter().filter(|&&v| v != u) {
                    // rule 3
                    if !reaches[v] {
                        out.coefficient(v, u, 3, k);
                    }
                    // rule 4
                    if independent(k, i, v, &[u]) {
                        out.coefficient(u, v, 4, k);
                        out.noise(u, v, 4, k);
                    }
                }
            }
        }
    }
    out
}

/// Faithfulness constraints from data: Fisher z tests at level `alpha` on
/// finite datasets, vanishing partial correlations on exact ones. Tests that
/// cannot be carried out count as dependence.
pub fn faithfulness_constraints(datasets: &[Dataset], alpha: f64, max_cond: usize) -> FaithfulnessConstraints {
    let testers: Vec<CiTester> = datasets.iter().map(CiTester::new).collect();
    let setup: Vec<Experiment> = datasets.iter().map(|d| d.experiment().clone()).collect();
    faithfulness_from_testers(&setup, &testers, alpha, max_cond)
}

pub(crate) fn faithfulness_from_testers(
    setup: &[Experiment],
    testers: &[CiTester],
    alpha: f64,
    max_cond: usize,
) -> FaithfulnessConstraints {
    faithfulness_with(setup, max_cond, |k, i, j, s| {
        testers[k].independent(i, j, s, alpha).unwrap_or(false)
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::{d_separated, intervene_graph, DirectedMixedGraph, SeparationQuery};
    use crate::scm::{analytic_covariance, experiment_setup, graph_of, sample_random_scm, ScmSamplerConfig};
    use nalgebra::DMatrix;
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn oracle(g: &DirectedMixedGraph, setup: &[Experiment]) -> impl Fn(usize, usize, usize, &[usize]) -> bool {
        let graphs: Vec<DirectedMixedGraph> = setup.iter().map(|e| intervene_graph(g, e.intervened())).collect();
        move |k, i, j, s| d_separated(&graphs[k], &SeparationQuery::new(i, j, s.to_vec()).unwrap())
    }

    #[test]
    fn chain_fires_rule_one() {
        let g = DirectedMixedGraph::from_edges(3, &[(0, 1), (1, 2)], &[]).unwrap();
        let setup = vec![Experiment::observational(3)];
        let c = faithfulness_with(&setup, 1, oracle(&g, &setup));
        let keys: Vec<_> = c.zero_coefficients.keys().copied().collect();
        assert_eq!(keys, vec![(0, 2), (2, 0)]);
        assert_eq!(c.zero_noise.get(&(0, 2)), Some(&(1, 0)));
        assert_eq!(c.zero_noise.len(), 1);
    }

    #[test]
    fn isolated_node_fires_rule_three() {
        let g = DirectedMixedGraph::from_edges(3, &[(0, 1)], &[]).unwrap();
        let setup = vec![Experiment::new(3, vec![0]).unwrap()];
        let c = faithfulness_with(&setup, 1, oracle(&g, &setup));
        // rule 1 already separates the free pair
        assert_eq!(c.zero_coefficients.get(&(2, 1)), Some(&(1, 0)));
        assert_eq!(c.zero_coefficients.get(&(1, 2)), Some(&(1, 0)));
        // a judge that only sees marginal tests from the intervened node leaves rule 3 to fire
        let only_marginal = |k: usize, i: usize, j: usize, s: &[usize]| s.is_empty() && oracle(&g, &setup)(k, i, j, s) && i == 0;
        let c = faithfulness_with(&setup, 0, only_marginal);
        assert_eq!(c.zero_coefficients.get(&(2, 1)), Some(&(3, 0)));
    }

    #[test]
    fn dense_dependence_emits_nothing() {
        let setup = experiment_setup(15, 5).unwrap();
        let c = faithfulness_with(&setup, 3, |_, _, _, _| false);
        assert!(c.is_empty());
    }

    #[test]
    fn oracle_rows_hold_for_ground_truth() {
        let mut rng = ChaCha8Rng::seed_from_u64(77);
        let cfg = ScmSamplerConfig::default();
        for setup_id in [0, 11, 15, 21, 35] {
            for _ in 0..10 {
                let scm = sample_random_scm(&cfg, &mut rng).unwrap();
                let setup = experiment_setup(setup_id, 5).unwrap();
                let g = graph_of(&scm, 0.0);
                let c = faithfulness_with(&setup, 3, oracle(&g, &setup));
                for &(u, i) in c.zero_coefficients.keys() {
                    assert_eq!(scm.b()[(u, i)], 0.0, "b[{u},{i}] on {g:?}");
                }
                for &(a, b) in c.zero_noise.keys() {
                    assert_eq!(scm.sigma_e()[(a, b)], 0.0);
                }
                // the exact-covariance judge agrees with the graphical one
                let datasets: Vec<Dataset> = setup
                    .iter()
                    .map(|e| Dataset::exact(e.clone(), analytic_covariance(&scm, e).unwrap()).unwrap())
                    .collect();
                let from_cov = faithfulness_constraints(&datasets, 0.05, 3);
                assert_eq!(from_cov, c);
            }
        }
    }

    #[test]
    fn rows_extend_system() {
        let g = DirectedMixedGraph::from_edges(3, &[(0, 1), (1, 2)], &[]).unwrap();
        let setup = vec![Experiment::observational(3)];
        let c = faithfulness_with(&setup, 1, oracle(&g, &setup));
        let mut sys = crate::llc::assemble_system(3, &[]).unwrap();
        c.extend_system(&mut sys);
        assert_eq!(sys.rows(), 2);
        assert!(sys.residual(&DMatrix::from_element(3, 3, 0.0)) == 0.0);
    }
}
