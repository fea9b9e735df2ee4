use nalgebra::DMatrix;

use super::system::uncovered_pair;
use crate::error::{Error, Result};
use crate::scm::{Dataset, Experiment};

/// Noise covariance estimate: entry `(i, j)` averages
/// `[(I - U B) C (I - U B)^T]_ij` over the experiments leaving both free.
pub fn estimate_noise_covariance(b_hat: &DMatrix<f64>, datasets: &[Dataset]) -> Result<DMatrix<f64>> {
    let setup: Vec<Experiment> = datasets.iter().map(|d| d.experiment().clone()).collect();
    let covs: Vec<DMatrix<f64>> = datasets.iter().map(Dataset::covariance).collect();
    noise_from_covariances(b_hat, &setup, &covs)
}

pub fn noise_from_covariances(
    b_hat: &DMatrix<f64>,
    setup: &[Experiment],
    covariances: &[DMatrix<f64>],
) -> Result<DMatrix<f64>> {
    let n = b_hat.nrows();
    if setup.len() != covariances.len() {
        return Err(Error::Usage("one covariance per experiment is required".into()));
    }
    if let Some((i, j)) = uncovered_pair(n, setup) {
        return Err(Error::Condition(format!(
            "covariance condition fails: no experiment leaves both {i} and {j} unintervened"
        )));
    }
    let mut sum = DMatrix::zeros(n, n);
    let mut count = DMatrix::<f64>::zeros(n, n);
    for (e, c) in setup.iter().zip(covariances) {
        let mut m = DMatrix::identity(n, n) - b_hat;
        for &j in e.intervened() {
            m.row_mut(j).fill(0.0);
            m[(j, j)] = 1.0;
        }
        let resid = &m * c * m.transpose();
        let free = e.unintervened();
        for &i in &free {
            for &j in &free {
                sum[(i, j)] += resid[(i, j)];
                count[(i, j)] += 1.0;
            }
        }
    }
    Ok(sum.component_div(&count))
}
