//! Small dense Levenberg-Marquardt engine shared by the point and pose
//! solvers. The damping schedule is Marquardt's multiplicative one: bump
//! lambda on a rejected step, shrink it on a strict improvement.

use nalgebra::{DMatrix, DVector};

use super::SolverConfig;
use crate::scalar::{c, Real};

/// A least-squares problem over a (possibly non-Euclidean) state.
pub(crate) trait LmProblem<T: Real> {
    type State: Clone;

    /// Parameter dimension (length of a step vector).
    fn dim(&self) -> usize;
    fn residuals(&self, x: &Self::State) -> DVector<T>;
    fn jacobian(&self, x: &Self::State) -> DMatrix<T>;
    /// Retraction: apply a step in the tangent space to the state.
    fn apply_step(&self, x: &Self::State, dx: &DVector<T>) -> Self::State;
}

pub(crate) struct LmOutcome<T: Real, S> {
    pub state: S,
    pub converged: bool,
    pub iterations: usize,
    /// Sum of squared residuals at the final state.
    pub final_cost: T,
    pub jacobian: DMatrix<T>,
    /// Cost after each accepted step (starting with the initial cost);
    /// non-increasing by construction.
    pub cost_history: Vec<T>,
}

pub(crate) fn minimize<T: Real, P: LmProblem<T>>(
    problem: &P,
    init: P::State,
    cfg: &SolverConfig<T>,
) -> LmOutcome<T, P::State> {
    let lambda_cap: T = c(1e14);
    // Window for the no-progress check: if 25 iterations shave less than a
    // relative 1e-12 off the cost, the iterate is pinned on a plateau or in
    // a sub-linear crawl and further iterations are wasted.
    const STALL_WINDOW: usize = 25;
    let mut x = init;
    let mut residuals = problem.residuals(&x);
    let mut cost = residuals.norm_squared();
    let mut lambda = cfg.initial_damping;
    let mut cost_history = vec![cost];
    let mut jacobian = problem.jacobian(&x);
    let mut iterations = 0;
    let mut converged = false;
    let mut window_cost = cost;

    for _ in 0..cfg.max_iterations {
        let gradient = jacobian.transpose() * &residuals;
        if gradient.norm() < cfg.gradient_tolerance {
            converged = true;
            break;
        }
        if iterations > 0 && iterations % STALL_WINDOW == 0 {
            if window_cost - cost <= cost * c(1e-12) {
                break;
            }
            window_cost = cost;
        }

        let hessian = jacobian.transpose() * &jacobian;
        // Marquardt scaling: damp each direction in proportion to its own
        // curvature so metres and radians are treated on their own scales.
        let mut diag_floor = T::zero();
        for i in 0..problem.dim() {
            diag_floor = diag_floor.max(hessian[(i, i)]);
        }
        diag_floor = (diag_floor * c(1e-12)).max(c(1e-300));
        let mut accepted = false;
        let mut step_norm = T::zero();
        while lambda <= lambda_cap {
            let mut damped = hessian.clone();
            for i in 0..problem.dim() {
                damped[(i, i)] += lambda * hessian[(i, i)].max(diag_floor);
            }
            let Some(chol) = damped.cholesky() else {
                lambda *= cfg.damping_up;
                continue;
            };
            let dx = chol.solve(&(-&gradient));
            let candidate = problem.apply_step(&x, &dx);
            let candidate_residuals = problem.residuals(&candidate);
            let candidate_cost = candidate_residuals.norm_squared();
            // Equal cost is accepted: near the optimum, improvements fall
            // below floating-point resolution while the step still drives
            // the gradient down. Only a strict decrease relaxes the damping,
            // so an undamped Gauss-Newton oscillation cannot persist.
            if candidate_cost <= cost {
                let strict = candidate_cost < cost;
                x = candidate;
                residuals = candidate_residuals;
                cost = candidate_cost;
                cost_history.push(cost);
                if strict {
                    lambda = (lambda * cfg.damping_down).max(c(1e-12));
                } else {
                    lambda = (lambda * cfg.damping_up).min(lambda_cap);
                }
                step_norm = dx.norm();
                accepted = true;
                break;
            }
            lambda *= cfg.damping_up;
        }
        iterations += 1;

        if !accepted {
            // No acceptable step at any damping level; report the gradient
            // state as-is.
            jacobian = problem.jacobian(&x);
            break;
        }

        jacobian = problem.jacobian(&x);
        // A short step only signals convergence when it was a genuine
        // Gauss-Newton step, not one shrunk by heavy damping.
        if step_norm < cfg.step_tolerance && lambda <= cfg.initial_damping {
            let g = jacobian.transpose() * &residuals;
            converged = g.norm() < cfg.gradient_tolerance;
            break;
        }
    }

    if !converged {
        let g = jacobian.transpose() * &residuals;
        converged = g.norm() < cfg.gradient_tolerance;
    }

    LmOutcome {
        state: x,
        converged,
        iterations,
        final_cost: cost,
        jacobian,
        cost_history,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Quadratic bowl: residuals x - target.
    struct Bowl {
        target: DVector<f64>,
    }

    impl LmProblem<f64> for Bowl {
        type State = DVector<f64>;

        fn dim(&self) -> usize {
            self.target.len()
        }

        fn residuals(&self, x: &Self::State) -> DVector<f64> {
            x - &self.target
        }

        fn jacobian(&self, _x: &Self::State) -> DMatrix<f64> {
            DMatrix::identity(self.dim(), self.dim())
        }

        fn apply_step(&self, x: &Self::State, dx: &DVector<f64>) -> Self::State {
            x + dx
        }
    }

    #[test]
    fn converges_on_quadratic() {
        let p = Bowl {
            target: DVector::from_vec(vec![1.0, -2.0, 3.0]),
        };
        let out = minimize(&p, DVector::zeros(3), &SolverConfig::default());
        assert!(out.converged);
        assert!((out.state - p.target).norm() < 1e-9);
        assert!(out.final_cost < 1e-18);
    }

    #[test]
    fn cost_history_non_increasing() {
        let p = Bowl {
            target: DVector::from_vec(vec![5.0, 5.0]),
        };
        let out = minimize(&p, DVector::zeros(2), &SolverConfig::default());
        for w in out.cost_history.windows(2) {
            assert!(w[1] <= w[0]);
        }
    }

    #[test]
    fn iteration_cap_respected() {
        let p = Bowl {
            target: DVector::from_vec(vec![1e6, 1e6]),
        };
        let cfg = SolverConfig {
            max_iterations: 1,
            gradient_tolerance: 1e-30,
            ..SolverConfig::default()
        };
        let out = minimize(&p, DVector::zeros(2), &cfg);
        assert_eq!(out.iterations, 1);
    }
}
