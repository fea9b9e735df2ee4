use nalgebra::{DMatrix, DVector};

use super::TotalEffects;
use crate::error::{Error, Result};
use crate::scm::Experiment;

/// Column of `b_ui` (effect of `i` on `u`): rows of `B` concatenated with the
/// diagonal dropped.
pub fn column_index(n: usize, u: usize, i: usize) -> usize {
    debug_assert!(u != i && u < n && i < n);
    u * (n - 1) + if i < u { i } else { i - 1 }
}

/// Inverse of [`column_index`]: `(u, i)`.
pub fn column_pair(n: usize, col: usize) -> (usize, usize) {
    let u = col / (n - 1);
    let r = col % (n - 1);
    (u, if r < u { r } else { r + 1 })
}

/// Where a row of the system came from. `experiment` indexes the setup.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum RowSource {
    TotalEffect { experiment: usize, i: usize, u: usize },
    Faithfulness { rule: u8, experiment: usize },
}

/// The linear system `T b = t` in the unknown off-diagonal entries of `B`.
#[derive(Clone, Debug, PartialEq)]
pub struct LlcSystem {
    n: usize,
    t_matrix: DMatrix<f64>,
    t_vector: DVector<f64>,
    provenance: Vec<RowSource>,
}

impl LlcSystem {
    pub fn n(&self) -> usize {
        self.n
    }

    pub fn unknowns(&self) -> usize {
        self.n * (self.n - 1)
    }

    pub fn rows(&self) -> usize {
        self.t_vector.len()
    }

    pub fn t_matrix(&self) -> &DMatrix<f64> {
        &self.t_matrix
    }

    pub fn t_vector(&self) -> &DVector<f64> {
        &self.t_vector
    }

    pub fn provenance(&self) -> &[RowSource] {
        &self.provenance
    }

    /// Append the row `b_ui = 0`.
    pub fn push_zero_row(&mut self, u: usize, i: usize, source: RowSource) {
        let cols = self.unknowns();
        let r = self.rows();
        let mut row = DVector::zeros(cols);
        row[column_index(self.n, u, i)] = 1.0;
        self.append(&row, 0.0, source);
        debug_assert_eq!(self.rows(), r + 1);
    }

    fn append(&mut self, row: &DVector<f64>, target: f64, source: RowSource) {
        let r = self.rows();
        let t = std::mem::replace(&mut self.t_matrix, DMatrix::zeros(0, 0));
        self.t_matrix = t.insert_row(r, 0.0);
        self.t_matrix.row_mut(r).copy_from(&row.transpose());
        let v = std::mem::replace(&mut self.t_vector, DVector::zeros(0));
        self.t_vector = v.push(target);
        self.provenance.push(source);
    }

    #[cfg(test)]
    pub(crate) fn set_targets(&mut self, t: DVector<f64>) {
        assert_eq!(t.len(), self.rows());
        self.t_vector = t;
    }

    #[cfg(test)]
    pub(crate) fn set_matrix(&mut self, m: DMatrix<f64>) {
        assert_eq!(m.shape(), self.t_matrix.shape());
        self.t_matrix = m;
    }

    /// Numerical column rank of `T` (singular values above `1e-9` relative).
    pub fn column_rank(&self) -> usize {
        if self.rows() == 0 {
            return 0;
        }
        let sv = self.t_matrix.clone().svd(false, false).singular_values;
        let top = sv.max();
        if top <= 0.0 {
            return 0;
        }
        sv.iter().filter(|&&s| s > 1e-9 * top).count()
    }

    pub fn has_full_column_rank(&self) -> bool {
        self.column_rank() == self.unknowns()
    }

    /// `max |T b - t|` for a candidate `B`.
    pub fn residual(&self, b: &DMatrix<f64>) -> f64 {
        let x = flatten(b);
        (&self.t_matrix * x - &self.t_vector).amax()
    }
}

pub(crate) fn flatten(b: &DMatrix<f64>) -> DVector<f64> {
    let n = b.nrows();
    DVector::from_fn(n * (n - 1), |c, _| {
        let (u, i) = column_pair(n, c);
        b[(u, i)]
    })
}

pub(crate) fn unflatten(n: usize, x: &DVector<f64>) -> DMatrix<f64> {
    let mut b = DMatrix::zeros(n, n);
    for (c, &v) in x.iter().enumerate() {
        let (u, i) = column_pair(n, c);
        b[(u, i)] = v;
    }
    b
}

/// One row per experiment `k`, intervened `i` and free `u`:
/// `b_ui + sum_{j in U, j != u} t(i ~> j) b_uj = t(i ~> u)`.
pub fn assemble_system(n: usize, effects: &[TotalEffects]) -> Result<LlcSystem> {
    if n < 2 {
        return Err(Error::Usage("the linear system needs at least two variables".into()));
    }
    let cols = n * (n - 1);
    let mut data = Vec::new();
    let mut targets = Vec::new();
    let mut provenance = Vec::new();
    for (k, te) in effects.iter().enumerate() {
        let e = te.experiment();
        if e.n() != n {
            return Err(Error::Usage(format!("experiment {k} has {} nodes, expected {n}", e.n())));
        }
        let free = e.unintervened();
        for &i in e.intervened() {
            for &u in &free {
                let mut row = vec![0.0; cols];
                row[column_index(n, u, i)] = 1.0;
                for &j in free.iter().filter(|&&j| j != u) {
                    row[column_index(n, u, j)] = te.get(i, j).expect("total effect for every free node");
                }
                data.extend(row);
                targets.push(te.get(i, u).expect("total effect for every free node"));
                provenance.push(RowSource::TotalEffect { experiment: k, i, u });
            }
        }
    }
    let rows = targets.len();
    Ok(LlcSystem {
        n,
        t_matrix: DMatrix::from_row_slice(rows, cols, &data),
        t_vector: DVector::from_vec(targets),
        provenance,
    })
}

/// Pair condition: every ordered pair `(i, j)` has an experiment intervening
/// on `i` and leaving `j` free. Returns the uncovered pairs.
pub fn pair_condition(n: usize, setup: &[Experiment]) -> (bool, Vec<(usize, usize)>) {
    let missing: Vec<(usize, usize)> = (0..n)
        .flat_map(|i| (0..n).filter(move |&j| j != i).map(move |j| (i, j)))
        .filter(|&(i, j)| !setup.iter().any(|e| e.is_intervened(i) && !e.is_intervened(j)))
        .collect();
    (missing.is_empty(), missing)
}

/// Covariance condition: every unordered pair is jointly free in some experiment.
pub fn covariance_condition(n: usize, setup: &[Experiment]) -> bool {
    uncovered_pair(n, setup).is_none()
}

pub(crate) fn uncovered_pair(n: usize, setup: &[Experiment]) -> Option<(usize, usize)> {
    (0..n)
        .flat_map(|i| (i..n).map(move |j| (i, j)))
        .find(|&(i, j)| !setup.iter().any(|e| !e.is_intervened(i) && !e.is_intervened(j)))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llc::total_effects_from_covariance;
    use crate::scm::{analytic_covariance, experiment_setup, LinearScm};

    fn exact_effects(scm: &LinearScm, setup: &[Experiment]) -> Vec<TotalEffects> {
        setup
            .iter()
            .map(|e| total_effects_from_covariance(e, &analytic_covariance(scm, e).unwrap()).unwrap())
            .collect()
    }

    #[test]
    fn column_layout_round_trips() {
        for n in 2..7 {
            for c in 0..n * (n - 1) {
                let (u, i) = column_pair(n, c);
                assert_ne!(u, i);
                assert_eq!(column_index(n, u, i), c);
            }
        }
        assert_eq!(column_index(5, 0, 1), 0);
        assert_eq!(column_index(5, 1, 0), 4);
        assert_eq!(column_index(5, 4, 3), 19);
    }

    #[test]
    fn two_node_system() {
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = 0.5;
        b[(0, 1)] = 0.3;
        let scm = LinearScm::new(b.clone(), DMatrix::identity(2, 2)).unwrap();
        let setup = vec![
            Experiment::observational(2),
            Experiment::new(2, vec![0]).unwrap(),
            Experiment::new(2, vec![1]).unwrap(),
        ];
        let sys = assemble_system(2, &exact_effects(&scm, &setup)).unwrap();
        // singleton free sets give pure identity rows; the first row is (i=0, u=1), i.e. b10
        assert_eq!(sys.t_matrix(), &DMatrix::from_row_slice(2, 2, &[0.0, 1.0, 1.0, 0.0]));
        assert!((sys.t_vector()[0] - 0.5).abs() < 1e-12);
        assert!((sys.t_vector()[1] - 0.3).abs() < 1e-12);
        assert!(sys.residual(&b) < 1e-12);
    }

    #[test]
    fn row_count_for_singletons() {
        let mut b = DMatrix::zeros(5, 5);
        b[(1, 0)] = 0.4;
        b[(0, 4)] = -0.7;
        let scm = LinearScm::new(b.clone(), DMatrix::identity(5, 5)).unwrap();
        let setup = experiment_setup(15, 5).unwrap();
        let sys = assemble_system(5, &exact_effects(&scm, &setup)).unwrap();
        assert_eq!(sys.rows(), 20);
        assert!(sys.has_full_column_rank());
        assert!(sys.residual(&b) < 1e-12);
        assert_eq!(sys.provenance()[0], RowSource::TotalEffect { experiment: 1, i: 0, u: 1 });
    }

    #[test]
    fn pair_and_covariance_conditions() {
        let (ok, missing) = pair_condition(5, &experiment_setup(0, 5).unwrap());
        assert!(!ok);
        assert_eq!(missing.len(), 20);
        assert!(pair_condition(5, &experiment_setup(15, 5).unwrap()).0);
        let (ok, missing) = pair_condition(5, &experiment_setup(11, 5).unwrap());
        assert!(!ok);
        assert!(missing.contains(&(1, 0)));
        for id in crate::scm::SETUP_IDS {
            assert!(covariance_condition(5, &experiment_setup(id, 5).unwrap()));
        }
        let all = Experiment::new(5, (0..5).collect()).unwrap();
        assert!(!covariance_condition(5, &[all]));
        assert!(covariance_condition(5, &[Experiment::observational(5)]));
    }

    #[test]
    fn zero_rows_append() {
        let mut sys = assemble_system(3, &[]).unwrap();
        assert_eq!(sys.rows(), 0);
        assert_eq!(sys.column_rank(), 0);
        sys.push_zero_row(2, 0, RowSource::Faithfulness { rule: 1, experiment: 0 });
        assert_eq!(sys.rows(), 1);
        assert_eq!(sys.t_matrix()[(0, column_index(3, 2, 0))], 1.0);
        assert_eq!(sys.t_matrix().row(0).sum(), 1.0);
    }
}
