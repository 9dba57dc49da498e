//! Dual solvers shared by the ridge and ε-insensitive regressors.
//!
//! Both work on a precomputed Gram matrix `K` (N x N) and targets `Y`
//! (N x m). A solution is a dual weight matrix `A` (N x m) and an
//! unregularized bias `b` (length m), predicting `F(x_i) = (K A)_i + b`.
//! In this parameterization `½ Σ_l |w^l|² = ½ tr(Aᵀ K A)`.

use nalgebra::{DMatrix, DVector, RowDVector};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct SolverSettings {
    /// Stop once the relative objective decrease drops below this.
    pub tolerance: f64,
    pub max_iterations: usize,
    /// Maximum step halvings in the backtracking line search.
    pub max_halvings: usize,
}

impl Default for SolverSettings {
    fn default() -> Self {
        Self { tolerance: 1e-8, max_iterations: 500, max_halvings: 30 }
    }
}

#[derive(Clone, Debug, PartialEq)]
pub struct DualSolution {
    pub weights: DMatrix<f64>,
    pub bias: RowDVector<f64>,
    /// Objective after initialization and after every accepted step.
    pub objective_trace: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl DualSolution {
    pub fn objective(&self) -> f64 {
        *self.objective_trace.last().expect("trace is never empty")
    }
}

/// Solves the bordered system
///
/// ```text
/// [ K + diag(d)  1 ] [A]   [Y]
/// [ 1ᵀ           0 ] [b] = [0]
/// ```
///
/// which is the stationarity condition of a weighted kernel ridge problem
/// with a free bias. `K + diag(d)` must be positive definite.
pub(crate) fn solve_bordered(
    k: &DMatrix<f64>,
    diag: &[f64],
    y: &DMatrix<f64>,
) -> Result<(DMatrix<f64>, RowDVector<f64>)> {
    let n = k.nrows();
    let mut m = k.clone();
    for (i, d) in diag.iter().enumerate() {
        m[(i, i)] += d;
    }
    let ones = DVector::from_element(n, 1.0);
    let (z, u) = match m.clone().cholesky() {
        Some(ch) => (ch.solve(y), ch.solve(&ones)),
        None => {
            let lu = m.lu();
            let z = lu.solve(y).ok_or_else(|| Error::Numerical("singular regularized kernel system".into()))?;
            let u = lu.solve(&ones).ok_or_else(|| Error::Numerical("singular regularized kernel system".into()))?;
            (z, u)
        }
    };
    let denom = u.sum();
    if !(denom.is_finite() && denom.abs() > 0.0) {
        return Err(Error::Numerical("degenerate bias equation".into()));
    }
    let bias = z.row_sum() / denom;
    let weights = z - &u * &bias;
    if weights.iter().chain(bias.iter()).any(|v| !v.is_finite()) {
        return Err(Error::Numerical("non-finite dual solution".into()));
    }
    Ok((weights, bias))
}

/// Residuals `Y - K A - 1 bᵀ` given a precomputed `K A`.
fn residuals(y: &DMatrix<f64>, ka: &DMatrix<f64>, bias: &RowDVector<f64>) -> DMatrix<f64> {
    let mut r = y - ka;
    for mut row in r.row_iter_mut() {
        row -= bias;
    }
    r
}

/// `½ tr(Aᵀ K A) + C Σ_i |y_i - F(x_i)|²`.
pub fn ridge_objective(k: &DMatrix<f64>, y: &DMatrix<f64>, c: f64, a: &DMatrix<f64>, b: &RowDVector<f64>) -> f64 {
    let ka = k * a;
    let reg = 0.5 * a.dot(&ka);
    let r = residuals(y, &ka, b);
    reg + c * r.norm_squared()
}

/// `½ tr(Aᵀ K A) + C Σ_i L(|y_i - F(x_i)|)` with `L(u) = max(0, u - ε)²`.
pub fn tube_objective(
    k: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    epsilon: f64,
    a: &DMatrix<f64>,
    b: &RowDVector<f64>,
) -> f64 {
    let ka = k * a;
    objective_from_parts(a, &ka, y, b, c, epsilon)
}

fn objective_from_parts(
    a: &DMatrix<f64>,
    ka: &DMatrix<f64>,
    y: &DMatrix<f64>,
    b: &RowDVector<f64>,
    c: f64,
    epsilon: f64,
) -> f64 {
    let reg = 0.5 * a.dot(ka);
    let r = residuals(y, ka, b);
    let loss: f64 = r
        .row_iter()
        .map(|row| {
            let excess = (row.norm() - epsilon).max(0.0);
            excess * excess
        })
        .sum();
    reg + c * loss
}

/// Closed-form kernel ridge regression with a free bias, all outputs jointly.
pub fn fit_ridge(k: &DMatrix<f64>, y: &DMatrix<f64>, c: f64) -> Result<DualSolution> {
    check_problem(k, y, c)?;
    let diag = vec![1.0 / (2.0 * c); k.nrows()];
    let (weights, bias) = solve_bordered(k, &diag, y)?;
    let objective = ridge_objective(k, y, c, &weights, &bias);
    Ok(DualSolution { weights, bias, objective_trace: vec![objective], iterations: 1, converged: true })
}

fn check_problem(k: &DMatrix<f64>, y: &DMatrix<f64>, c: f64) -> Result<()> {
    if k.nrows() < 2 {
        return Err(Error::Input(format!("need at least 2 training samples, got {}", k.nrows())));
    }
    if k.nrows() != k.ncols() || k.nrows() != y.nrows() {
        return Err(Error::Input("kernel and target sizes disagree".into()));
    }
    if !(c > 0.0 && c.is_finite()) {
        return Err(Error::Config(format!("C must be finite and > 0, got {c}")));
    }
    Ok(())
}

/// Minimizes the tube objective by iteratively reweighted least squares.
///
/// The loss acts on the Euclidean norm of each residual row, so with
/// `m = 3` the outputs share one hyperspherical tube, and with `m = 1` this
/// is an ordinary (squared-slack) ε-SVR. Each iteration weights sample `i`
/// by `a_i = 2C (u_i - ε) / u_i` (zero inside the tube), solves the weighted
/// ridge system over the samples with `a_i > 0`, and backtracks along the
/// step until the true objective does not increase.
pub fn fit_tube(
    k: &DMatrix<f64>,
    y: &DMatrix<f64>,
    c: f64,
    epsilon: f64,
    settings: &SolverSettings,
) -> Result<DualSolution> {
    check_problem(k, y, c)?;
    if !(epsilon >= 0.0 && epsilon.is_finite()) {
        return Err(Error::Config(format!("epsilon must be finite and >= 0, got {epsilon}")));
    }
    let (n, m) = y.shape();

    let mut a = DMatrix::zeros(n, m);
    let mut b = y.row_mean();
    let mut ka = DMatrix::zeros(n, m);
    let mut obj = objective_from_parts(&a, &ka, y, &b, c, epsilon);
    let mut trace = vec![obj];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iterations {
        iterations += 1;
        let r = residuals(y, &ka, &b);
        let weights: Vec<f64> = r
            .row_iter()
            .map(|row| {
                let u = row.norm();
                if epsilon == 0.0 {
                    2.0 * c
                } else if u > epsilon {
                    2.0 * c * (u - epsilon) / u
                } else {
                    0.0
                }
            })
            .collect();
        let support: Vec<usize> = (0..n).filter(|&i| weights[i] > 0.0).collect();

        let mut target_a = DMatrix::zeros(n, m);
        let target_b = if support.is_empty() {
            b.clone()
        } else {
            let ks = DMatrix::from_fn(support.len(), support.len(), |i, j| k[(support[i], support[j])]);
            let ys = DMatrix::from_fn(support.len(), m, |i, j| y[(support[i], j)]);
            let diag: Vec<f64> = support.iter().map(|&i| 1.0 / weights[i]).collect();
            let (as_, bs) = solve_bordered(&ks, &diag, &ys)?;
            for (row, &i) in support.iter().enumerate() {
                target_a.set_row(i, &as_.row(row));
            }
            bs
        };

        let da = target_a - &a;
        let db = target_b - &b;
        let kda = k * &da;
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.max_halvings {
            let cand_a = &a + &da * step;
            let cand_ka = &ka + &kda * step;
            let cand_b = &b + &db * step;
            let cand_obj = objective_from_parts(&cand_a, &cand_ka, y, &cand_b, c, epsilon);
            if cand_obj <= obj {
                accepted = Some((cand_a, cand_ka, cand_b, cand_obj));
                break;
            }
            step *= 0.5;
        }
        let Some((na, nka, nb, nobj)) = accepted else {
            // No descent along the reweighted direction: stationary to
            // working precision.
            converged = true;
            break;
        };
        let decrease = obj - nobj;
        a = na;
        ka = nka;
        b = nb;
        obj = nobj;
        trace.push(obj);
        if decrease <= settings.tolerance * obj.abs().max(f64::MIN_POSITIVE) {
            converged = true;
            break;
        }
    }

    Ok(DualSolution { weights: a, bias: b, objective_trace: trace, iterations, converged })
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small_problem() -> (DMatrix<f64>, DMatrix<f64>) {
        let x = DMatrix::from_row_slice(4, 2, &[0.0, 1.0, 1.0, 0.5, 0.2, 0.3, 0.9, 0.9]);
        let k = &x * x.transpose();
        let y = DMatrix::from_row_slice(4, 3, &[0.6, 0.5, 0.4, 0.7, 0.5, 0.3, 0.5, 0.6, 0.6, 0.65, 0.55, 0.5]);
        (k, y)
    }

    #[test]
    fn bordered_solution_satisfies_its_equations() {
        let (k, y) = small_problem();
        let diag = vec![0.3; 4];
        let (a, b) = solve_bordered(&k, &diag, &y).unwrap();
        let mut lhs = &k * &a;
        for i in 0..4 {
            for j in 0..3 {
                lhs[(i, j)] += diag[i] * a[(i, j)] + b[j];
            }
        }
        assert!((lhs - &y).abs().max() < 1e-12);
        assert!(a.row_sum().abs().max() < 1e-12);
    }

    #[test]
    fn ridge_rejects_bad_inputs() {
        let (k, y) = small_problem();
        assert!(fit_ridge(&k, &y, 0.0).is_err());
        let k1 = DMatrix::from_element(1, 1, 1.0);
        let y1 = DMatrix::from_element(1, 3, 0.5);
        assert!(matches!(fit_ridge(&k1, &y1, 1.0), Err(Error::Input(_))));
        assert!(fit_tube(&k, &y, 1.0, -0.1, &SolverSettings::default()).is_err());
    }

    #[test]
    fn tube_at_zero_epsilon_is_ridge() {
        let (k, y) = small_problem();
        let ridge = fit_ridge(&k, &y, 3.0).unwrap();
        let tube = fit_tube(&k, &y, 3.0, 0.0, &SolverSettings::default()).unwrap();
        assert!(tube.converged);
        assert!((&ridge.weights - &tube.weights).abs().max() < 1e-9);
        assert!((ridge.objective() - tube.objective()).abs() < 1e-12);
    }

    #[test]
    fn wide_tube_keeps_constant_predictor() {
        let (k, y) = small_problem();
        let s = fit_tube(&k, &y, 10.0, 1.0, &SolverSettings::default()).unwrap();
        assert!(s.weights.iter().all(|&v| v == 0.0));
        assert_eq!(s.bias, y.row_mean());
        assert_eq!(s.objective(), 0.0);
        assert!(s.iterations <= 2);
    }

    #[test]
    fn iteration_cap_reports_non_convergence() {
        let (k, y) = small_problem();
        let settings = SolverSettings { tolerance: 0.0, max_iterations: 1, max_halvings: 30 };
        let s = fit_tube(&k, &y, 10.0, 0.01, &settings).unwrap();
        assert_eq!(s.iterations, 1);
        assert!(!s.converged);
    }

    #[test]
    fn trace_is_non_increasing() {
        let (k, y) = small_problem();
        let s = fit_tube(&k, &y, 50.0, 0.02, &SolverSettings::default()).unwrap();
        assert!(s.objective_trace.windows(2).all(|w| w[1] <= w[0]));
    }
}
