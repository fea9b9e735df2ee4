//! Linear structural causal models `x = B x + e` with correlated noise,
//! surgical interventions, random generation and data simulation.

mod data;
mod experiment;
mod sampler;

use nalgebra::DMatrix;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::graph::DirectedMixedGraph;

pub use data::{sample_data, Dataset, DatasetSize};
pub use experiment::{experiment_setup, setup_group, Experiment, SETUP_IDS};
pub use sampler::{sample_random_scm, ScmSamplerConfig};

pub(crate) use experiment::grid_experiments;

/// Smallest singular value of `I - U B` below which a system counts as unstable.
pub const STABILITY_TOL: f64 = 1e-9;

/// A linear SCM. `b[(u, i)]` is the direct effect of `X_i` on `X_u`;
/// `sigma_e` is the noise covariance, whose off-diagonal entries encode
/// hidden confounding.
#[derive(Clone, Debug, PartialEq)]
pub struct LinearScm {
    b: DMatrix<f64>,
    sigma_e: DMatrix<f64>,
}

impl LinearScm {
    pub fn new(b: DMatrix<f64>, sigma_e: DMatrix<f64>) -> Result<Self> {
        let n = b.nrows();
        if b.ncols() != n || sigma_e.nrows() != n || sigma_e.ncols() != n {
            return Err(Error::InvalidModel(format!(
                "shape mismatch: B is {}x{}, sigma_e is {}x{}",
                b.nrows(),
                b.ncols(),
                sigma_e.nrows(),
                sigma_e.ncols()
            )));
        }
        if let Some(i) = (0..n).find(|&i| b[(i, i)] != 0.0) {
            return Err(Error::InvalidModel(format!("B has a self-loop at node {i}")));
        }
        let asym = (&sigma_e - sigma_e.transpose()).amax();
        if asym > 1e-12 {
            return Err(Error::InvalidModel(format!(
                "sigma_e is not symmetric (max asymmetry {asym:e})"
            )));
        }
        if min_eigenvalue(&sigma_e) < -1e-10 {
            return Err(Error::InvalidModel("sigma_e is not positive semidefinite".into()));
        }
        Ok(Self { b, sigma_e })
    }

    pub fn n(&self) -> usize {
        self.b.nrows()
    }

    pub fn b(&self) -> &DMatrix<f64> {
        &self.b
    }

    pub fn sigma_e(&self) -> &DMatrix<f64> {
        &self.sigma_e
    }

    /// `I - U B` for the experiment: intervened rows of `B` are zeroed.
    pub fn manipulated_system(&self, e: &Experiment) -> DMatrix<f64> {
        let n = self.n();
        let mut m = DMatrix::identity(n, n);
        for u in e.unintervened() {
            for i in 0..n {
                m[(u, i)] -= self.b[(u, i)];
            }
        }
        m
    }

    /// The SCM with intervened rows of `B` zeroed and intervened noise
    /// detached from every other variable.
    pub fn intervene(&self, e: &Experiment) -> LinearScm {
        let mut b = self.b.clone();
        let mut s = self.sigma_e.clone();
        for &j in e.intervened() {
            b.row_mut(j).fill(0.0);
            for k in 0..self.n() {
                if k != j {
                    s[(j, k)] = 0.0;
                    s[(k, j)] = 0.0;
                }
            }
        }
        LinearScm { b, sigma_e: s }
    }
}

pub(crate) fn min_eigenvalue(m: &DMatrix<f64>) -> f64 {
    if m.nrows() == 0 {
        return 0.0;
    }
    m.clone().symmetric_eigen().eigenvalues.min()
}

fn min_singular_value(m: &DMatrix<f64>) -> f64 {
    m.clone().singular_values().min()
}

/// Causal graph of an SCM: `i -> u` iff `|b[u][i]| > tol`, `i <-> j` iff
/// `|sigma_e[i][j]| > tol`.
pub fn graph_of(scm: &LinearScm, tol: f64) -> DirectedMixedGraph {
    let n = scm.n();
    let mut g = DirectedMixedGraph::new(n).expect("model size fits a graph");
    for u in 0..n {
        for i in 0..n {
            if i != u && scm.b[(u, i)].abs() > tol {
                g.add_directed(i, u).expect("valid edge");
            }
            if i < u && scm.sigma_e[(u, i)].abs() > tol {
                g.add_bidirected(i, u).expect("valid edge");
            }
        }
    }
    g
}

/// Whether `I - U_k B` is invertible for the null experiment and every
/// experiment in `setup`.
pub fn is_weakly_stable(scm: &LinearScm, setup: &[Experiment]) -> bool {
    let null = Experiment::observational(scm.n());
    std::iter::once(&null)
        .chain(setup)
        .all(|e| min_singular_value(&scm.manipulated_system(e)) > STABILITY_TOL)
}

/// Population covariance of the manipulated system, with intervened
/// variables drawn independently with unit variance:
/// `(I - U B)^-1 (U Σe U + J) (I - U B)^-T`.
pub fn analytic_covariance(scm: &LinearScm, e: &Experiment) -> Result<DMatrix<f64>> {
    let n = scm.n();
    let system = scm.manipulated_system(e);
    if min_singular_value(&system) <= STABILITY_TOL {
        return Err(Error::WeakStability {
            intervened: e.intervened().to_vec(),
        });
    }
    let inv = system.try_inverse().ok_or_else(|| Error::WeakStability {
        intervened: e.intervened().to_vec(),
    })?;
    let mut noise = DMatrix::zeros(n, n);
    let free = e.unintervened();
    for &a in &free {
        for &c in &free {
            noise[(a, c)] = scm.sigma_e[(a, c)];
        }
    }
    for &j in e.intervened() {
        noise[(j, j)] = 1.0;
    }
    let cov = &inv * noise * inv.transpose();
    Ok((&cov + cov.transpose()) * 0.5)
}

#[derive(Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ScmFile {
    b: Vec<Vec<f64>>,
    sigma_e: Vec<Vec<f64>>,
}

fn to_rows(m: &DMatrix<f64>) -> Vec<Vec<f64>> {
    (0..m.nrows()).map(|r| m.row(r).iter().copied().collect()).collect()
}

fn from_rows(rows: &[Vec<f64>]) -> std::result::Result<DMatrix<f64>, String> {
    let n = rows.len();
    if rows.iter().any(|r| r.len() != n) {
        return Err("matrix rows must all have length equal to the row count".into());
    }
    Ok(DMatrix::from_fn(n, n, |r, c| rows[r][c]))
}

impl Serialize for LinearScm {
    fn serialize<S: serde::Serializer>(&self, s: S) -> std::result::Result<S::Ok, S::Error> {
        ScmFile {
            b: to_rows(&self.b),
            sigma_e: to_rows(&self.sigma_e),
        }
        .serialize(s)
    }
}

impl<'de> Deserialize<'de> for LinearScm {
    fn deserialize<D: serde::Deserializer<'de>>(d: D) -> std::result::Result<Self, D::Error> {
        use serde::de::Error as _;
        let file = ScmFile::deserialize(d)?;
        let b = from_rows(&file.b).map_err(D::Error::custom)?;
        let s = from_rows(&file.sigma_e).map_err(D::Error::custom)?;
        LinearScm::new(b, s).map_err(D::Error::custom)
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::graph::intervene_graph;

    fn two_cycle(b10: f64, b01: f64) -> LinearScm {
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = b10;
        b[(0, 1)] = b01;
        LinearScm::new(b, DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn rejects_invalid_models() {
        let mut b = DMatrix::zeros(2, 2);
        b[(0, 0)] = 0.3;
        assert!(LinearScm::new(b, DMatrix::identity(2, 2)).is_err());
        let mut s = DMatrix::identity(2, 2);
        s[(0, 1)] = 2.0;
        s[(1, 0)] = 2.0;
        assert!(LinearScm::new(DMatrix::zeros(2, 2), s).is_err());
    }

    #[test]
    fn graph_extraction() {
        let empty = LinearScm::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
        assert_eq!(graph_of(&empty, 0.0).edge_count(), 0);

        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.5;
        let single = LinearScm::new(b, DMatrix::identity(3, 3)).unwrap();
        assert_eq!(graph_of(&single, 0.0).directed_edges(), vec![(0, 1)]);

        let mut s = DMatrix::identity(3, 3);
        s[(0, 2)] = 0.4;
        s[(2, 0)] = 0.4;
        let conf = LinearScm::new(DMatrix::zeros(3, 3), s).unwrap();
        assert!(graph_of(&conf, 0.0).has_bidirected(0, 2));
    }

    #[test]
    fn weak_stability() {
        let setup = experiment_setup(15, 5).unwrap();
        let zero = LinearScm::new(DMatrix::zeros(5, 5), DMatrix::identity(5, 5)).unwrap();
        assert!(is_weakly_stable(&zero, &setup));
        // det(I - B) = 1 - 1 * 1 = 0
        assert!(!is_weakly_stable(&two_cycle(1.0, 1.0), &[]));
        // det(I - B) = 1 - 0.5 * 0.3 = 0.85
        assert!(is_weakly_stable(&two_cycle(0.5, 0.3), &[]));
    }

    #[test]
    fn analytic_covariance_examples() {
        let zero = LinearScm::new(DMatrix::zeros(3, 3), DMatrix::identity(3, 3)).unwrap();
        let c = analytic_covariance(&zero, &Experiment::observational(3)).unwrap();
        assert!((c - DMatrix::<f64>::identity(3, 3)).amax() < 1e-15);

        let scm = two_cycle(0.5, 0.3);
        // (I-B)^-1 = [[1, .3], [.5, 1]] / .85, covariance = A A^T
        let c = analytic_covariance(&scm, &Experiment::observational(2)).unwrap();
        let expected = DMatrix::from_row_slice(
            2,
            2,
            &[1.09 / 0.7225, 0.8 / 0.7225, 0.8 / 0.7225, 1.25 / 0.7225],
        );
        assert!((&c - &expected).amax() < 1e-12, "{c}");
        assert!((c[(0, 0)] - 1.5086).abs() < 1e-4);
        assert!((c[(0, 1)] - 1.1073).abs() < 1e-4);
        assert!((c[(1, 1)] - 1.7301).abs() < 1e-4);

        // x0 = c, x1 = 0.5 x0 + e1
        let c = analytic_covariance(&scm, &Experiment::new(2, vec![0]).unwrap()).unwrap();
        let expected = DMatrix::from_row_slice(2, 2, &[1.0, 0.5, 0.5, 1.25]);
        assert!((c - expected).amax() < 1e-12);

        assert!(matches!(
            analytic_covariance(&two_cycle(1.0, 1.0), &Experiment::observational(2)),
            Err(Error::WeakStability { .. })
        ));
    }

    #[test]
    fn noise_round_trip() {
        let scm = two_cycle(0.5, 0.3);
        let c = analytic_covariance(&scm, &Experiment::observational(2)).unwrap();
        let sys = scm.manipulated_system(&Experiment::observational(2));
        let back = &sys * c * sys.transpose();
        assert!((back - scm.sigma_e()).amax() < 1e-12);
    }

    #[test]
    fn manipulation_commutes_with_graph_extraction() {
        let mut b = DMatrix::zeros(3, 3);
        b[(1, 0)] = 0.5;
        b[(0, 1)] = -0.4;
        b[(2, 1)] = 0.9;
        let mut s = DMatrix::identity(3, 3);
        s[(0, 2)] = 0.3;
        s[(2, 0)] = 0.3;
        let scm = LinearScm::new(b, s).unwrap();
        for j in [vec![], vec![0], vec![1], vec![0, 2]] {
            let e = Experiment::new(3, j.clone()).unwrap();
            assert_eq!(intervene_graph(&graph_of(&scm, 0.0), &j), graph_of(&scm.intervene(&e), 0.0));
        }
    }

    #[test]
    fn json_shape() {
        let scm = two_cycle(0.5, 0.3);
        let text = serde_json::to_string(&scm).unwrap();
        assert_eq!(text, r#"{"b":[[0.0,0.3],[0.5,0.0]],"sigma_e":[[1.0,0.0],[0.0,1.0]]}"#);
        let back: LinearScm = serde_json::from_str(&text).unwrap();
        assert_eq!(back, scm);
    }
}
