//! Conditional-independence testing and weighted constraint sets.
//!
//! Finite data is tested with Fisher's z on partial correlations. In the
//! infinite regime constraints come either from the true graph
//! ([`oracle_constraints`]) or from exact covariances
//! ([`covariance_constraints`]), each with weight one.

use std::io::{BufRead, Write};

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};
use statrs::function::erf::erfc;

use crate::error::{Error, Result};
use crate::graph::{d_separated, intervene_graph, SeparationQuery};
use crate::scm::{graph_of, Dataset, Experiment, LinearScm};

/// Smallest p-value used inside logarithms.
pub const P_FLOOR: f64 = 1e-300;

/// |partial correlation| below which an exact covariance counts as independent.
pub const EXACT_INDEPENDENCE_TOL: f64 = 1e-8;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CiKind {
    Independent,
    Dependent,
}

/// One weighted (in)dependence statement `i ⫫ j | s` observed in experiment
/// `experiment` (an index into the setup).
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct CiConstraint {
    pub experiment: usize,
    pub i: usize,
    pub j: usize,
    pub s: Vec<usize>,
    pub kind: CiKind,
    pub weight: f64,
    #[serde(rename = "p")]
    pub p_value: Option<f64>,
}

impl CiConstraint {
    pub fn new(
        experiment: usize,
        i: usize,
        j: usize,
        mut s: Vec<usize>,
        kind: CiKind,
        weight: f64,
    ) -> Result<Self> {
        if i == j {
            return Err(Error::Usage(format!("constraint needs distinct nodes, got {i}")));
        }
        let (i, j) = if i < j { (i, j) } else { (j, i) };
        s.sort_unstable();
        s.dedup();
        if s.contains(&i) || s.contains(&j) {
            return Err(Error::Usage(format!("conditioning set {s:?} contains {i} or {j}")));
        }
        if !(weight >= 0.0) {
            return Err(Error::Usage(format!("constraint weight must be >= 0, got {weight}")));
        }
        Ok(Self {
            experiment,
            i,
            j,
            s,
            kind,
            weight,
            p_value: None,
        })
    }

    fn key(&self) -> (usize, usize, usize, &[usize]) {
        (self.experiment, self.i, self.j, &self.s)
    }
}

/// A collection of constraints with unique `(experiment, i, j, s)` keys.
#[derive(Clone, Debug, Default, PartialEq)]
pub struct ConstraintSet {
    constraints: Vec<CiConstraint>,
    alpha: Option<f64>,
    skipped: usize,
}

impl ConstraintSet {
    pub fn new(constraints: Vec<CiConstraint>, alpha: Option<f64>) -> Result<Self> {
        let mut keys: Vec<_> = constraints.iter().map(CiConstraint::key).collect();
        keys.sort();
        if let Some(w) = keys.windows(2).find(|w| w[0] == w[1]) {
            return Err(Error::Usage(format!("duplicate constraint key {:?}", w[0])));
        }
        Ok(Self {
            constraints,
            alpha,
            skipped: 0,
        })
    }

    pub fn constraints(&self) -> &[CiConstraint] {
        &self.constraints
    }

    pub fn len(&self) -> usize {
        self.constraints.len()
    }

    pub fn is_empty(&self) -> bool {
        self.constraints.is_empty()
    }

    /// Significance level the constraints were tested at (`None` for oracle sets).
    pub fn alpha(&self) -> Option<f64> {
        self.alpha
    }

    /// Tests that failed and were left out during enumeration.
    pub fn skipped(&self) -> usize {
        self.skipped
    }

    /// Write one JSON object per line.
    pub fn write_jsonl<W: Write>(&self, mut w: W) -> Result<()> {
        for c in &self.constraints {
            serde_json::to_writer(&mut w, c)?;
            w.write_all(b"\n").map_err(|e| Error::io("<constraints>", e))?;
        }
        Ok(())
    }

    pub fn read_jsonl<R: BufRead>(r: R, alpha: Option<f64>) -> Result<Self> {
        let mut out = Vec::new();
        for line in r.lines() {
            let line = line.map_err(|e| Error::io("<constraints>", e))?;
            if line.trim().is_empty() {
                continue;
            }
            let c: CiConstraint = serde_json::from_str(&line)?;
            out.push(CiConstraint::new(c.experiment, c.i, c.j, c.s, c.kind, c.weight).map(
                |mut checked| {
                    checked.p_value = c.p_value;
                    checked
                },
            )?);
        }
        Self::new(out, alpha)
    }
}

/// All subsets of `pool` with at most `max` elements, by size then lexicographically.
pub(crate) fn conditioning_sets(pool: &[usize], max: usize) -> Vec<Vec<usize>> {
    let mut out = vec![Vec::new()];
    let mut layer = vec![(Vec::new(), 0usize)];
    for _ in 0..max.min(pool.len()) {
        let mut next = Vec::new();
        for (set, start) in &layer {
            for (k, &v) in pool.iter().enumerate().skip(*start) {
                let mut grown = set.clone();
                grown.push(v);
                next.push((grown, k + 1));
            }
        }
        out.extend(next.iter().map(|(s, _)| s.clone()));
        layer = next;
    }
    out
}

/// Partial correlation of `i` and `j` given `s`, from the residual
/// covariance of `(i, j)` after regressing out `s` (equal to the
/// precision-matrix formula on the `{i, j} ∪ s` block).
pub fn partial_correlation(cov: &DMatrix<f64>, i: usize, j: usize, s: &[usize]) -> Result<f64> {
    let n = cov.nrows();
    if i >= n || j >= n || s.iter().any(|&v| v >= n) {
        return Err(Error::Usage(format!("partial correlation indices out of range for {n} variables")));
    }
    if i == j || s.contains(&i) || s.contains(&j) {
        return Err(Error::Usage(format!("invalid partial correlation query ({i}, {j} | {s:?})")));
    }
    let pair = [i, j];
    let mut resid = DMatrix::from_fn(2, 2, |a, b| cov[(pair[a], pair[b])]);
    if !s.is_empty() {
        let k = s.len();
        let ss = DMatrix::from_fn(k, k, |a, b| cov[(s[a], s[b])]);
        let ps = DMatrix::from_fn(2, k, |a, b| cov[(pair[a], s[b])]);
        let scale = ss.diagonal().amax().max(f64::MIN_POSITIVE);
        let chol = nalgebra::Cholesky::new(ss.clone())
            .filter(|c| c.l().diagonal().min() > 1e-12 * scale.sqrt())
            .ok_or_else(|| Error::Degenerate(format!("conditioning block {s:?} is singular")))?;
        resid -= &ps * chol.solve(&ps.transpose());
    }
    let (vi, vj) = (resid[(0, 0)], resid[(1, 1)]);
    let scale = cov[(i, i)].max(cov[(j, j)]).max(f64::MIN_POSITIVE);
    if vi <= 1e-14 * scale || vj <= 1e-14 * scale {
        return Err(Error::Degenerate(format!(
            "zero residual variance for ({i}, {j} | {s:?})"
        )));
    }
    Ok((resid[(0, 1)] / (vi * vj).sqrt()).clamp(-1.0, 1.0))
}

/// Two-sided p-value of Fisher's z test for a partial correlation `r`
/// estimated from `m` samples with `k` conditioning variables.
pub fn fisher_z_p_value(r: f64, m: usize, k: usize) -> Result<f64> {
    if m <= k + 3 {
        return Err(Error::InsufficientSamples { needed: k + 3, got: m });
    }
    if r.abs() >= 1.0 {
        return Ok(0.0);
    }
    let z = 0.5 * ((1.0 + r) / (1.0 - r)).ln();
    let stat = ((m - k - 3) as f64).sqrt() * z.abs();
    Ok(erfc(stat / std::f64::consts::SQRT_2).clamp(0.0, 1.0))
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct CiTestResult {
    pub p_value: f64,
    pub independent: bool,
}

/// Reusable tester over one dataset's covariance.
#[derive(Clone, Debug)]
pub struct CiTester {
    cov: DMatrix<f64>,
    samples: Option<usize>,
}

impl CiTester {
    pub fn new(ds: &Dataset) -> Self {
        Self {
            cov: ds.covariance(),
            samples: ds.samples().map(|s| s.nrows()),
        }
    }

    pub fn covariance(&self) -> &DMatrix<f64> {
        &self.cov
    }

    pub fn is_exact(&self) -> bool {
        self.samples.is_none()
    }

    /// Fisher z test on finite data. A duplicated variable (`|r| = 1`) gives
    /// `p = 0`.
    pub fn test(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CiTestResult> {
        let m = self.samples.ok_or_else(|| {
            Error::Usage("exact-covariance datasets are not hypothesis-tested".into())
        })?;
        if m <= s.len() + 3 {
            return Err(Error::InsufficientSamples { needed: s.len() + 3, got: m });
        }
        let r = partial_correlation(&self.cov, i, j, s)?;
        let p_value = fisher_z_p_value(r, m, s.len())?;
        Ok(CiTestResult {
            p_value,
            independent: p_value > alpha,
        })
    }

    /// Independence verdict: the Fisher z test on finite data, a
    /// vanishing exact partial correlation otherwise.
    pub fn independent(&self, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<bool> {
        if self.is_exact() {
            Ok(partial_correlation(&self.cov, i, j, s)?.abs() < EXACT_INDEPENDENCE_TOL)
        } else {
            Ok(self.test(i, j, s, alpha)?.independent)
        }
    }
}

/// Fisher z conditional-independence test of `i ⫫ j | s` on finite data.
pub fn ci_test(data: &Dataset, i: usize, j: usize, s: &[usize], alpha: f64) -> Result<CiTestResult> {
    CiTester::new(data).test(i, j, s, alpha)
}

/// Constraint weight `|ln p - ln alpha|`, with `p` floored at [`P_FLOOR`].
pub fn constraint_weight(p_value: f64, alpha: f64) -> f64 {
    (p_value.max(P_FLOOR).ln() - alpha.ln()).abs()
}

fn query_domain(n: usize, max_cond: usize) -> Vec<(usize, usize, Vec<usize>)> {
    let mut out = Vec::new();
    for i in 0..n {
        for j in i + 1..n {
            let pool: Vec<usize> = (0..n).filter(|&v| v != i && v != j).collect();
            for s in conditioning_sets(&pool, max_cond) {
                out.push((i, j, s));
            }
        }
    }
    out
}

/// Test every pair and every conditioning set of size `<= max_cond` in every
/// dataset. Failed tests are skipped and counted.
pub fn enumerate_constraints(datasets: &[Dataset], alpha: f64, max_cond: usize) -> ConstraintSet {
    let mut constraints = Vec::new();
    let mut skipped = 0;
    for (k, ds) in datasets.iter().enumerate() {
        let tester = CiTester::new(ds);
        for (i, j, s) in query_domain(ds.n(), max_cond) {
            match tester.test(i, j, &s, alpha) {
                Ok(res) => constraints.push(CiConstraint {
                    experiment: k,
                    i,
                    j,
                    s,
                    kind: if res.independent {
                        CiKind::Independent
                    } else {
                        CiKind::Dependent
                    },
                    weight: constraint_weight(res.p_value, alpha),
                    p_value: Some(res.p_value),
                }),
                Err(err) => {
                    log::warn!("skipping test ({i}, {j} | {s:?}) in experiment {k}: {err}");
                    skipped += 1;
                }
            }
        }
    }
    ConstraintSet {
        constraints,
        alpha: Some(alpha),
        skipped,
    }
}

/// Complete, contradiction-free constraints read off the true graph by
/// d-separation in each manipulated graph, all with weight one.
pub fn oracle_constraints(scm: &LinearScm, setup: &[Experiment], max_cond: usize) -> ConstraintSet {
    let mut constraints = Vec::new();
    for (k, e) in setup.iter().enumerate() {
        let g = intervene_graph(&graph_of(scm, 0.0), e.intervened());
        for (i, j, s) in query_domain(scm.n(), max_cond) {
            let q = SeparationQuery::new(i, j, s.clone()).expect("valid query");
            constraints.push(CiConstraint {
                experiment: k,
                i,
                j,
                s,
                kind: if d_separated(&g, &q) {
                    CiKind::Independent
                } else {
                    CiKind::Dependent
                },
                weight: 1.0,
                p_value: None,
            });
        }
    }
    ConstraintSet {
        constraints,
        alpha: None,
        skipped: 0,
    }
}

/// Weight-one constraints from exact covariances: independent iff the exact
/// partial correlation vanishes. Used when only infinite-regime data (and not
/// the generating model) is available.
pub fn covariance_constraints(datasets: &[Dataset], max_cond: usize) -> Result<ConstraintSet> {
    let mut constraints = Vec::new();
    for (k, ds) in datasets.iter().enumerate() {
        let cov = ds.covariance();
        for (i, j, s) in query_domain(ds.n(), max_cond) {
            let r = partial_correlation(&cov, i, j, &s)?;
            constraints.push(CiConstraint {
                experiment: k,
                i,
                j,
                s,
                kind: if r.abs() < EXACT_INDEPENDENCE_TOL {
                    CiKind::Independent
                } else {
                    CiKind::Dependent
                },
                weight: 1.0,
                p_value: None,
            });
        }
    }
    Ok(ConstraintSet {
        constraints,
        alpha: None,
        skipped: 0,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{analytic_covariance, sample_data};
    use rand::SeedableRng;
    use rand_chacha::ChaCha8Rng;

    fn chain3() -> LinearScm {
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.5;
        b[(2, 1)] = 0.5;
        LinearScm::new(b, DMatrix::identity(3, 3)).unwrap()
    }

    #[test]
    fn partial_correlation_examples() {
        let id = DMatrix::<f64>::identity(4, 4);
        assert_eq!(partial_correlation(&id, 0, 3, &[1, 2]).unwrap(), 0.0);
        let c = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.0]);
        assert!((partial_correlation(&c, 0, 1, &[]).unwrap() - 0.5).abs() < 1e-15);

        let cov = analytic_covariance(&chain3(), &Experiment::observational(3)).unwrap();
        assert!(partial_correlation(&cov, 0, 2, &[1]).unwrap().abs() < 1e-12);
        assert!(partial_correlation(&cov, 0, 2, &[]).unwrap().abs() > 0.1);
    }

    #[test]
    fn partial_correlation_matches_precision_formula() {
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[2.0, 0.6, -0.4, 0.6, 1.5, 0.3, -0.4, 0.3, 1.2],
        );
        let p: DMatrix<f64> = cov.clone().try_inverse().unwrap();
        let expected = -p[(0, 1)] / (p[(0, 0)] * p[(1, 1)]).sqrt();
        assert!((partial_correlation(&cov, 0, 1, &[2]).unwrap() - expected).abs() < 1e-12);
    }

    #[test]
    fn singular_conditioning_is_degenerate() {
        let cov = DMatrix::from_row_slice(
            3,
            3,
            &[1.0, 0.2, 0.3, 0.2, 0.0, 0.0, 0.3, 0.0, 1.0],
        );
        assert!(matches!(partial_correlation(&cov, 0, 2, &[1]), Err(Error::Degenerate(_))));
    }

    #[test]
    fn fisher_z_edge_cases() {
        assert_eq!(fisher_z_p_value(0.0, 100, 0).unwrap(), 1.0);
        assert_eq!(fisher_z_p_value(1.0, 100, 0).unwrap(), 0.0);
        assert!(matches!(fisher_z_p_value(0.1, 5, 2), Err(Error::InsufficientSamples { .. })));
        // z = atanh(0.2), stat = sqrt(97) z, p = erfc(stat / sqrt 2)
        let stat = 97f64.sqrt() * 0.2f64.atanh();
        assert!((fisher_z_p_value(0.2, 100, 0).unwrap() - erfc(stat / 2f64.sqrt())).abs() < 1e-15);
    }

    #[test]
    fn duplicated_column_is_dependent() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let base = sample_data(&chain3(), &Experiment::observational(3), 200, &mut rng).unwrap();
        let s = base.samples().unwrap();
        let dup = DMatrix::from_fn(200, 3, |r, c| if c == 2 { s[(r, 0)] } else { s[(r, c)] });
        let ds = Dataset::from_samples(Experiment::observational(3), dup).unwrap();
        let res = ci_test(&ds, 0, 2, &[], 0.05).unwrap();
        assert_eq!(res.p_value, 0.0);
        assert!(!res.independent);
    }

    #[test]
    fn weight_arithmetic() {
        assert_eq!(constraint_weight(0.05, 0.05), 0.0);
        assert!((constraint_weight(1.0, 0.05) - 0.05f64.ln().abs()).abs() < 1e-12);
        assert!((constraint_weight(1.0, 0.05) - 2.9957).abs() < 1e-4);
        assert!((constraint_weight(1e-6, 0.05) - (0.05f64.ln() - 1e-6f64.ln())).abs() < 1e-12);
        assert!((constraint_weight(1e-6, 0.05) - 10.8198).abs() < 1e-4);
        assert!(constraint_weight(0.0, 0.05).is_finite());
    }

    #[test]
    fn constraint_counts() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut b = DMatrix::zeros(5, 5);
        b[(1, 0)] = 0.7;
        let scm = LinearScm::new(b, DMatrix::identity(5, 5)).unwrap();
        let ds = sample_data(&scm, &Experiment::observational(5), 300, &mut rng).unwrap();
        let set = enumerate_constraints(&[ds], 0.05, 3);
        assert_eq!(set.len(), 80);
        assert!(set.constraints().iter().all(|c| c.weight >= 0.0));
        assert!(enumerate_constraints(&[], 0.05, 3).is_empty());
        assert_eq!(oracle_constraints(&scm, &[Experiment::observational(5)], 3).len(), 80);
        assert_eq!(conditioning_sets(&[0, 1, 2], 3).len(), 8);
        assert_eq!(conditioning_sets(&[0, 1, 2], 1).len(), 4);
    }

    #[test]
    fn oracle_on_chain() {
        let set = oracle_constraints(&chain3(), &[Experiment::observational(3)], 1);
        let find = |i, j, s: &[usize]| {
            set.constraints()
                .iter()
                .find(|c| c.i == i && c.j == j && c.s == s)
                .unwrap()
                .kind
        };
        assert_eq!(find(0, 2, &[1]), CiKind::Independent);
        assert_eq!(find(0, 1, &[]), CiKind::Dependent);
        assert!(set.constraints().iter().all(|c| c.weight == 1.0));

        let empty = LinearScm::new(DMatrix::zeros(4, 4), DMatrix::identity(4, 4)).unwrap();
        let set = oracle_constraints(&empty, &[Experiment::observational(4)], 2);
        assert!(set.constraints().iter().all(|c| c.kind == CiKind::Independent));
    }

    #[test]
    fn exact_constraints_agree_with_oracle_on_chain() {
        let e = Experiment::observational(3);
        let ds = Dataset::exact(e.clone(), analytic_covariance(&chain3(), &e).unwrap()).unwrap();
        let from_cov = covariance_constraints(&[ds], 1).unwrap();
        let oracle = oracle_constraints(&chain3(), &[e], 1);
        assert_eq!(from_cov, oracle);
    }

    #[test]
    fn jsonl_round_trip() {
        let set = oracle_constraints(&chain3(), &[Experiment::observational(3)], 1);
        let mut buf = Vec::new();
        set.write_jsonl(&mut buf).unwrap();
        let first = String::from_utf8(buf.clone()).unwrap();
        assert!(first.starts_with(r#"{"experiment":0,"i":0,"j":1,"s":[],"kind":"dependent","weight":1.0,"p":null}"#));
        let back = ConstraintSet::read_jsonl(&buf[..], None).unwrap();
        assert_eq!(back, set);
    }

    #[test]
    fn duplicate_keys_rejected() {
        let c = CiConstraint::new(0, 1, 0, vec![], CiKind::Dependent, 1.0).unwrap();
        assert_eq!((c.i, c.j), (0, 1));
        assert!(ConstraintSet::new(vec![c.clone(), c], None).is_err());
        assert!(CiConstraint::new(0, 1, 2, vec![1], CiKind::Dependent, 1.0).is_err());
        assert!(CiConstraint::new(0, 1, 2, vec![], CiKind::Dependent, -1.0).is_err());
    }

    #[test]
    fn markov_and_faithful_on_random_models() {
        let setup = crate::scm::experiment_setup(15, 5).unwrap();
        let cfg = crate::scm::ScmSamplerConfig::default();
        let mut unfaithful_models = 0;
        for id in 0..100u64 {
            let scm = crate::scm::sample_random_scm(&cfg, &mut crate::rng::stream(3, &[id])).unwrap();
            let k = oracle_constraints(&scm, &setup, 3);
            let covs: Vec<_> = setup.iter().map(|e| analytic_covariance(&scm, e).unwrap()).collect();
            let mut faithful = true;
            for c in k.constraints() {
                let r = partial_correlation(&covs[c.experiment], c.i, c.j, &c.s).unwrap().abs();
                match c.kind {
                    CiKind::Independent => assert!(r < 1e-9, "model {id}: {c:?} has |r| = {r}"),
                    CiKind::Dependent => faithful &= r > 1e-6,
                }
            }
            unfaithful_models += usize::from(!faithful);
        }
        assert!(unfaithful_models <= 1, "{unfaithful_models} models show cancellations");
    }
}
