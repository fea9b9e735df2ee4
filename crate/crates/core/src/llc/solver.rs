use nalgebra::{DMatrix, DVector};
use serde::{Deserialize, Serialize};

use super::system::{unflatten, LlcSystem};
use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Penalty {
    L1,
    L2,
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SolverOptions {
    pub tolerance: f64,
    pub max_iterations: usize,
}

impl Default for SolverOptions {
    fn default() -> Self {
        Self {
            tolerance: 1e-8,
            max_iterations: 10_000,
        }
    }
}

/// Minimise `|T b - t|^2 + lambda * pen(b)` and reshape `b` into `B` with a
/// zero diagonal. `lambda = 0` gives the minimum-norm least-squares solution.
pub fn solve_penalized(sys: &LlcSystem, penalty: Penalty, lambda: f64) -> Result<DMatrix<f64>> {
    solve_penalized_with(sys, penalty, lambda, SolverOptions::default())
}

pub fn solve_penalized_with(
    sys: &LlcSystem,
    penalty: Penalty,
    lambda: f64,
    opts: SolverOptions,
) -> Result<DMatrix<f64>> {
    if !(lambda >= 0.0) || !lambda.is_finite() {
        return Err(Error::Usage(format!("lambda must be a nonnegative number, got {lambda}")));
    }
    let x = if lambda == 0.0 {
        least_squares(sys.t_matrix(), sys.t_vector())?
    } else {
        let gram = sys.t_matrix().transpose() * sys.t_matrix();
        let rhs = sys.t_matrix().transpose() * sys.t_vector();
        match penalty {
            Penalty::L2 => ridge(gram, &rhs, lambda)?,
            Penalty::L1 => lasso(&gram, &rhs, sys.t_vector().norm_squared(), lambda, opts)?,
        }
    };
    Ok(unflatten(sys.n(), &x))
}

fn least_squares(t: &DMatrix<f64>, y: &DVector<f64>) -> Result<DVector<f64>> {
    if t.nrows() == 0 {
        return Ok(DVector::zeros(t.ncols()));
    }
    let svd = t.clone().svd(true, true);
    let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
    let pinv = |r: &DVector<f64>| svd.solve(r, eps).map_err(|e| Error::Usage(e.to_string()));
    // the factorisation is occasionally only accurate to ~1e-7, so refine
    let mut x = pinv(y)?;
    for _ in 0..8 {
        let step = pinv(&(y - t * &x))?;
        x += &step;
        if step.amax() <= 1e-15 * x.amax().max(1.0) {
            break;
        }
    }
    Ok(x)
}

fn ridge(mut gram: DMatrix<f64>, rhs: &DVector<f64>, lambda: f64) -> Result<DVector<f64>> {
    for d in 0..gram.nrows() {
        gram[(d, d)] += lambda;
    }
    let chol = nalgebra::Cholesky::new(gram)
        .ok_or_else(|| Error::Degenerate("regularised normal equations are not positive definite".into()))?;
    Ok(chol.solve(rhs))
}

fn soft_threshold(x: f64, t: f64) -> f64 {
    if x > t {
        x - t
    } else if x < -t {
        x + t
    } else {
        0.0
    }
}

/// Optimality violation of `b` for `|Tb - t|^2 + lambda |b|_1`, given the Gram
/// matrix and `T^T t`.
fn kkt_violation(gram: &DMatrix<f64>, rhs: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    let grad = (gram * b - rhs) * 2.0;
    grad.iter()
        .zip(b.iter())
        .map(|(&g, &x)| {
            if x != 0.0 {
                (g + lambda * x.signum()).abs()
            } else {
                (g.abs() - lambda).max(0.0)
            }
        })
        .fold(0.0, f64::max)
}

/// Duality gap of `|Tb - t|^2 + lambda |b|_1` at `b`, from the Gram matrix,
/// `T^T t` and `|t|^2`. The dual point is the scaled residual.
fn duality_gap(gram: &DMatrix<f64>, rhs: &DVector<f64>, tt: f64, b: &DVector<f64>, lambda: f64) -> f64 {
    let gb = gram * b;
    let rb = rhs.dot(b);
    let resid2 = (b.dot(&gb) - 2.0 * rb + tt).max(0.0);
    let corr = (rhs - &gb).amax();
    let alpha = lambda / 2.0;
    let scale = if corr > alpha { alpha / corr } else { 1.0 };
    let primal = 0.5 * resid2 + alpha * b.lp_norm(1);
    let dual = scale * (tt - rb) - 0.5 * scale * scale * resid2;
    2.0 * (primal - dual)
}

const POLISH_EVERY: usize = 200;

fn objective(gram: &DMatrix<f64>, rhs: &DVector<f64>, b: &DVector<f64>, lambda: f64) -> f64 {
    b.dot(&(gram * b)) - 2.0 * rhs.dot(b) + lambda * b.lp_norm(1)
}

/// Feature-sign active-set search started from `start`. Returns a point whose
/// optimality violation is within `tol`, or `None` if it does not get there.
fn feature_sign(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    lambda: f64,
    start: &DVector<f64>,
    tol: f64,
) -> Option<DVector<f64>> {
    let p = rhs.len();
    let mut x = start.clone();
    let mut sign: Vec<f64> = x.iter().map(|v| if *v == 0.0 { 0.0 } else { v.signum() }).collect();
    for _ in 0..8 * p.max(1) {
        let grad = (gram * &x - rhs) * 2.0;
        let active: Vec<usize> = (0..p).filter(|&j| sign[j] != 0.0).collect();
        let active_ok = active.iter().all(|&j| (grad[j] + lambda * sign[j]).abs() <= tol);
        if active_ok {
            if kkt_violation(gram, rhs, &x, lambda) <= tol {
                return Some(x);
            }
            // activate the worst zero coordinate
            let (j, g) = (0..p)
                .filter(|&j| sign[j] == 0.0 && gram[(j, j)] > 0.0)
                .map(|j| (j, grad[j]))
                .max_by(|a, b| a.1.abs().total_cmp(&b.1.abs()))?;
            if g.abs() <= lambda {
                return None;
            }
            sign[j] = -g.signum();
            continue;
        }
        let sub = gram.select_rows(&active).select_columns(&active);
        let target = DVector::from_iterator(active.len(), active.iter().map(|&j| rhs[j] - lambda * sign[j] / 2.0));
        let svd = sub.svd(true, true);
        let eps = 1e-12 * svd.singular_values.max().max(f64::MIN_POSITIVE);
        let from: Vec<f64> = active.iter().map(|&j| x[j]).collect();
        let v_t = svd.v_t.as_ref()?;
        // with a singular block the sign-fixed objective falls without bound
        // along the null space, so walk that way to the first sign change
        let mut ray = DVector::zeros(active.len());
        for (r, &sv) in svd.singular_values.iter().enumerate() {
            if sv <= eps {
                let v = v_t.row(r).transpose();
                ray += &v * v.dot(&target);
            }
        }
        if ray.amax() > 1e-12 * target.amax().max(1e-300) {
            let first = (0..active.len())
                .filter(|&k| from[k] * ray[k] < 0.0)
                .map(|k| (-from[k] / ray[k], k))
                .min_by(|a, b| a.0.total_cmp(&b.0))?;
            for (k, &j) in active.iter().enumerate() {
                x[j] = if k == first.1 { 0.0 } else { from[k] + first.0 * ray[k] };
            }
            for j in 0..p {
                sign[j] = if x[j] == 0.0 { 0.0 } else { x[j].signum() };
            }
            continue;
        }
        let goal = svd.solve(&target, eps).ok()?;
        // line search over the target and every sign crossing on the way
        let mut steps = vec![(1.0, None)];
        for (k, &f) in from.iter().enumerate() {
            let g = goal[k];
            if f != 0.0 && f * g < 0.0 {
                steps.push((f / (f - g), Some(k)));
            }
        }
        let mut best = (objective(gram, rhs, &x, lambda), x.clone());
        for (s, cross) in steps {
            let mut y = x.clone();
            for (k, &j) in active.iter().enumerate() {
                y[j] = if cross == Some(k) { 0.0 } else { from[k] + s * (goal[k] - from[k]) };
            }
            let val = objective(gram, rhs, &y, lambda);
            if val < best.0 {
                best = (val, y);
            }
        }
        if best.1 == x {
            return None;
        }
        x = best.1;
        for j in 0..p {
            sign[j] = if x[j] == 0.0 { 0.0 } else { x[j].signum() };
        }
    }
    None
}

/// Cyclic coordinate descent with exact soft-thresholded coordinate updates.
/// Stops when no coordinate moves by more than the tolerance or the duality
/// gap falls below it. Near-collinear columns make the sweeps crawl, so every
/// few hundred sweeps an active-set search tries to finish from the current
/// point.
fn lasso(
    gram: &DMatrix<f64>,
    rhs: &DVector<f64>,
    tt: f64,
    lambda: f64,
    opts: SolverOptions,
) -> Result<DVector<f64>> {
    let p = rhs.len();
    let mut b = DVector::zeros(p);
    for sweep in 0..opts.max_iterations {
        let mut largest = 0.0f64;
        for j in 0..p {
            let a = gram[(j, j)];
            if a <= 0.0 {
                b[j] = 0.0;
                continue;
            }
            let rho = rhs[j] - gram.row(j).dot(&b.transpose()) + a * b[j];
            let next = soft_threshold(rho, lambda / 2.0) / a;
            largest = largest.max((next - b[j]).abs());
            b[j] = next;
        }
        if largest < opts.tolerance {
            log::trace!("lasso converged after {} sweeps", sweep + 1);
            return Ok(b);
        }
        if duality_gap(gram, rhs, tt, &b, lambda) <= opts.tolerance {
            log::trace!("lasso gap closed after {} sweeps", sweep + 1);
            return Ok(b);
        }
        if (sweep + 1) % POLISH_EVERY == 0 {
            if let Some(x) = feature_sign(gram, rhs, lambda, &b, opts.tolerance) {
                log::trace!("lasso polished after {} sweeps", sweep + 1);
                return Ok(x);
            }
        }
    }
    Err(Error::NonConvergence {
        iterations: opts.max_iterations,
        residual: kkt_violation(gram, rhs, &b, lambda),
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::llc::system::{assemble_system, column_index, flatten, RowSource};
    use proptest::prelude::*;

    fn identity_system(n: usize, targets: &[f64]) -> LlcSystem {
        let mut sys = assemble_system(n, &[]).unwrap();
        // rows b_ui = 0 then overwrite targets through the public constructor path
        for c in 0..n * (n - 1) {
            let (u, i) = crate::llc::column_pair(n, c);
            sys.push_zero_row(u, i, RowSource::Faithfulness { rule: 0, experiment: 0 });
        }
        sys.set_targets(DVector::from_column_slice(targets));
        sys
    }

    #[test]
    fn identity_least_squares_returns_targets() {
        let t: Vec<f64> = (0..6).map(|k| k as f64 * 0.1 - 0.2).collect();
        let sys = identity_system(3, &t);
        for penalty in [Penalty::L1, Penalty::L2] {
            let b = solve_penalized(&sys, penalty, 0.0).unwrap();
            assert!((flatten(&b) - DVector::from_column_slice(&t)).amax() < 1e-12);
            assert!(b.diagonal().iter().all(|&d| d == 0.0));
        }
    }

    #[test]
    fn large_l1_penalty_shrinks_to_zero() {
        let sys = identity_system(3, &[0.5, -0.4, 0.3, 0.9, -1.0, 0.2]);
        let b = solve_penalized(&sys, Penalty::L1, 100.0).unwrap();
        assert_eq!(b.amax(), 0.0);
    }

    #[test]
    fn identity_penalised_closed_forms() {
        // with T = I the lasso soft-thresholds by lambda/2 and ridge divides by 1 + lambda
        let t = [0.5, -0.4, 0.03, 0.9, -1.0, 0.2];
        let sys = identity_system(3, &t);
        let l1 = flatten(&solve_penalized(&sys, Penalty::L1, 0.1).unwrap());
        let l2 = flatten(&solve_penalized(&sys, Penalty::L2, 0.1).unwrap());
        for (k, &v) in t.iter().enumerate() {
            let shrunk = v.signum() * (v.abs() - 0.05).max(0.0);
            assert!((l1[k] - shrunk).abs() < 1e-10);
            assert!((l2[k] - v / 1.1).abs() < 1e-12);
        }
    }

    #[test]
    fn rank_deficient_minimum_norm() {
        // b_10 + b_12 = 1 twice: minimum-norm splits evenly, b_01 etc. stay 0
        let mut sys = assemble_system(3, &[]).unwrap();
        sys.push_zero_row(1, 0, RowSource::Faithfulness { rule: 0, experiment: 0 });
        sys.push_zero_row(1, 0, RowSource::Faithfulness { rule: 0, experiment: 0 });
        let mut t = sys.t_matrix().clone();
        t[(0, column_index(3, 1, 2))] = 1.0;
        t[(1, column_index(3, 1, 2))] = 1.0;
        sys.set_matrix(t);
        sys.set_targets(DVector::from_column_slice(&[1.0, 1.0]));
        let b = solve_penalized(&sys, Penalty::L2, 0.0).unwrap();
        assert!((b[(1, 0)] - 0.5).abs() < 1e-12 && (b[(1, 2)] - 0.5).abs() < 1e-12);
        assert!(b[(0, 1)].abs() < 1e-12);
        let l1 = solve_penalized(&sys, Penalty::L1, 0.01).unwrap();
        assert!((l1[(1, 0)] + l1[(1, 2)] - (1.0 - 0.0025)).abs() < 1e-6);
    }

    #[test]
    fn negative_lambda_rejected() {
        let sys = identity_system(2, &[0.1, 0.2]);
        assert!(solve_penalized(&sys, Penalty::L1, -1.0).is_err());
    }

    #[test]
    fn iteration_cap_reports_residual() {
        let mut sys = assemble_system(2, &[]).unwrap();
        for _ in 0..3 {
            sys.push_zero_row(0, 1, RowSource::Faithfulness { rule: 0, experiment: 0 });
        }
        sys.set_matrix(DMatrix::from_row_slice(3, 2, &[1.0, 0.9, 0.9, 1.0, 0.5, 0.5]));
        sys.set_targets(DVector::from_column_slice(&[0.3, -0.2, 0.4]));
        let opts = SolverOptions {
            tolerance: 0.0,
            max_iterations: 1,
        };
        match solve_penalized_with(&sys, Penalty::L1, 0.01, opts) {
            Err(Error::NonConvergence { iterations: 1, residual }) => assert!(residual > 0.0 && residual.is_finite()),
            other => panic!("expected non-convergence, got {other:?}"),
        }
    }

    #[test]
    fn duplicate_columns_polish_to_optimum() {
        // two identical columns started with opposite signs
        let gram = DMatrix::from_row_slice(3, 3, &[1.0, 1.0, 0.2, 1.0, 1.0, 0.2, 0.2, 0.2, 0.05]);
        let rhs = DVector::from_column_slice(&[0.8, 0.8, 0.3]);
        let start = DVector::from_column_slice(&[0.7, -0.2, 0.0]);
        let x = feature_sign(&gram, &rhs, 0.1, &start, 1e-10).unwrap();
        assert!(kkt_violation(&gram, &rhs, &x, 0.1) <= 1e-10);
    }

    #[test]
    fn gap_vanishes_at_optimum() {
        let t = [0.5, -0.4, 0.03, 0.9, -1.0, 0.2];
        let gram = DMatrix::identity(6, 6);
        let rhs = DVector::from_column_slice(&t);
        let tt = rhs.norm_squared();
        let opt = rhs.map(|v| soft_threshold(v, 0.05));
        assert!(duality_gap(&gram, &rhs, tt, &opt, 0.1).abs() < 1e-14);
        assert!(duality_gap(&gram, &rhs, tt, &DVector::zeros(6), 0.1) > 0.1);
    }

    proptest! {
        #[test]
        fn lasso_satisfies_optimality(
            entries in proptest::collection::vec(-1.0f64..1.0, 8 * 6),
            targets in proptest::collection::vec(-1.0f64..1.0, 8),
            lambda in 0.001f64..1.0,
        ) {
            let mut sys = assemble_system(3, &[]).unwrap();
            for _ in 0..8 {
                sys.push_zero_row(0, 1, RowSource::Faithfulness { rule: 0, experiment: 0 });
            }
            sys.set_matrix(DMatrix::from_row_slice(8, 6, &entries));
            sys.set_targets(DVector::from_column_slice(&targets));
            let b = flatten(&solve_penalized(&sys, Penalty::L1, lambda).unwrap());
            let gram = sys.t_matrix().transpose() * sys.t_matrix();
            let rhs = sys.t_matrix().transpose() * sys.t_vector();
            prop_assert!(kkt_violation(&gram, &rhs, &b, lambda) < 1e-5);
        }
    }
}
