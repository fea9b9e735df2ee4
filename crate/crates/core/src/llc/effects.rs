use std::collections::BTreeMap;

use nalgebra::DMatrix;

use crate::error::{Error, Result};
use crate::scm::{Dataset, Experiment};

/// Total effects `t(x_i ~> x_u || J)` of one experiment, keyed by `(i, u)`
/// with `i` intervened and `u` free.
#[derive(Clone, Debug, PartialEq)]
pub struct TotalEffects {
    experiment: Experiment,
    values: BTreeMap<(usize, usize), f64>,
}

impl TotalEffects {
    pub fn experiment(&self) -> &Experiment {
        &self.experiment
    }

    pub fn get(&self, i: usize, u: usize) -> Option<f64> {
        self.values.get(&(i, u)).copied()
    }

    pub fn len(&self) -> usize {
        self.values.len()
    }

    pub fn is_empty(&self) -> bool {
        self.values.is_empty()
    }

    pub fn iter(&self) -> impl Iterator<Item = ((usize, usize), f64)> + '_ {
        self.values.iter().map(|(&k, &v)| (k, v))
    }
}

/// `C[u, i] / C[i, i]` for every intervened `i` and free `u`.
pub fn total_effects_from_covariance(experiment: &Experiment, cov: &DMatrix<f64>) -> Result<TotalEffects> {
    let n = experiment.n();
    if cov.nrows() != n || cov.ncols() != n {
        return Err(Error::Usage(format!("covariance must be {n}x{n}")));
    }
    let free = experiment.unintervened();
    let mut values = BTreeMap::new();
    for &i in experiment.intervened() {
        let var = cov[(i, i)];
        if var <= 0.0 {
            return Err(Error::Degenerate(format!("intervened variable {i} has zero variance")));
        }
        for &u in &free {
            values.insert((i, u), cov[(u, i)] / var);
        }
    }
    Ok(TotalEffects {
        experiment: experiment.clone(),
        values,
    })
}

pub fn estimate_total_effects(ds: &Dataset) -> Result<TotalEffects> {
    total_effects_from_covariance(ds.experiment(), &ds.covariance())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::scm::{analytic_covariance, LinearScm};

    pub(crate) fn two_cycle() -> LinearScm {
        let mut b = DMatrix::zeros(2, 2);
        b[(1, 0)] = 0.5;
        b[(0, 1)] = 0.3;
        LinearScm::new(b, DMatrix::identity(2, 2)).unwrap()
    }

    #[test]
    fn totals_of_two_cycle() {
        let scm = two_cycle();
        for (j, i, u, want) in [(0, 0, 1, 0.5), (1, 1, 0, 0.3)] {
            let e = Experiment::new(2, vec![j]).unwrap();
            let t = total_effects_from_covariance(&e, &analytic_covariance(&scm, &e).unwrap()).unwrap();
            assert_eq!(t.len(), 1);
            assert!((t.get(i, u).unwrap() - want).abs() < 1e-12);
        }
        let obs = Experiment::observational(2);
        let t = total_effects_from_covariance(&obs, &analytic_covariance(&scm, &obs).unwrap()).unwrap();
        assert!(t.is_empty());
    }

    #[test]
    fn normalised_by_intervention_variance() {
        // scaling the intervened coordinate leaves the ratio unchanged
        let e = Experiment::new(2, vec![0]).unwrap();
        let cov = DMatrix::from_row_slice(2, 2, &[4.0, 2.0, 2.0, 2.0]);
        let t = total_effects_from_covariance(&e, &cov).unwrap();
        assert!((t.get(0, 1).unwrap() - 0.5).abs() < 1e-15);
        let flat = DMatrix::from_row_slice(2, 2, &[0.0, 0.0, 0.0, 1.0]);
        assert!(total_effects_from_covariance(&e, &flat).is_err());
    }
}
