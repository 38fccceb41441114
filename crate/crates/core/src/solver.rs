//! Distributionally robust value iteration, robust policy evaluation and the
//! sub-optimality gap of a policy.

use serde::Serialize;

use crate::error::{Error, Result};
use crate::mdp::{default_max_iters, sup_norm_diff, Policy, QFunction, TabularMdp, ValueFunction};
use crate::robust::{robust_bellman_apply, robust_bellman_apply_par, worst_case_value, SortedValues, UncertaintySpec};

/// Output of a DRVI run.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct SolveReport {
    pub q_final: QFunction,
    pub v_final: ValueFunction,
    pub policy: Policy,
    pub iterations: usize,
    /// Sup-norm change of the last update.
    pub residual: f64,
    pub converged: bool,
    /// Bound `2 gamma eps_opt / (1 - gamma)` on the robust sub-optimality of
    /// `policy` in the model that was solved, with `eps_opt = residual`.
    pub policy_error_bound: f64,
}

/// Builder for a DRVI solve.
#[derive(Debug, Clone)]
pub struct Drvi<'a> {
    mdp: &'a TabularMdp,
    uncertainty: UncertaintySpec,
    tol: f64,
    max_iters: usize,
    parallel: bool,
}

impl<'a> Drvi<'a> {
    pub fn new(mdp: &'a TabularMdp, uncertainty: UncertaintySpec) -> Self {
        let tol = crate::mdp::DEFAULT_TOL;
        Drvi {
            mdp,
            uncertainty,
            tol,
            max_iters: default_max_iters(mdp.discount(), tol),
            parallel: false,
        }
    }

    /// Sets the tolerance and resets the iteration budget to its default for it.
    pub fn tol(mut self, tol: f64) -> Self {
        self.tol = tol;
        self.max_iters = default_max_iters(self.mdp.discount(), tol);
        self
    }

    pub fn max_iters(mut self, max_iters: usize) -> Self {
        self.max_iters = max_iters;
        self
    }

    /// Evaluate state-action rows in parallel within each sweep.
    pub fn parallel(mut self, parallel: bool) -> Self {
        self.parallel = parallel;
        self
    }

    /// Runs synchronous sweeps from `Q = 0`; a run that exhausts its budget is
    /// reported with `converged = false` rather than as an error.
    pub fn run(&self) -> Result<SolveReport> {
        self.run_inner(|_| {})
    }

    /// Like [`Drvi::run`], also returning every iterate `Q_0, Q_1, ..., Q_T`.
    pub fn run_traced(&self) -> Result<(SolveReport, Vec<QFunction>)> {
        let mut trace = Vec::new();
        let report = self.run_inner(|q| trace.push(q.clone()))?;
        Ok((report, trace))
    }

    fn run_inner(&self, mut observe: impl FnMut(&QFunction)) -> Result<SolveReport> {
        if !(self.tol > 0.0 && self.tol.is_finite()) {
            return Err(Error::InvalidTolerance(self.tol));
        }
        let m = self.mdp;
        let mut q = QFunction::zeros(m.num_states(), m.num_actions());
        observe(&q);
        let mut residual = f64::INFINITY;
        let mut iterations = 0;
        while iterations < self.max_iters {
            let next = if self.parallel {
                robust_bellman_apply_par(m, &self.uncertainty, &q)?
            } else {
                robust_bellman_apply(m, &self.uncertainty, &q)?
            };
            residual = next.sup_distance(&q);
            q = next;
            iterations += 1;
            observe(&q);
            if residual <= self.tol {
                break;
            }
        }
        let gamma = m.discount();
        Ok(SolveReport {
            v_final: q.state_values(),
            policy: q.greedy_policy(),
            iterations,
            residual,
            converged: residual <= self.tol,
            policy_error_bound: 2.0 * gamma * residual / (1.0 - gamma),
            q_final: q,
        })
    }
}

/// DRVI with the given tolerance and budget; non-convergence is an error.
pub fn drvi(m: &TabularMdp, u: &UncertaintySpec, tol: f64, max_iters: usize) -> Result<SolveReport> {
    let report = Drvi::new(m, *u).tol(tol).max_iters(max_iters).run()?;
    if report.converged {
        Ok(report)
    } else {
        Err(Error::NotConverged {
            iterations: report.iterations,
            residual: report.residual,
        })
    }
}

/// Robust value of a (possibly randomized) policy, by fixed-point iteration
/// of `V(s) = sum_a pi(a|s) [r(s,a) + gamma inf_P P V]` from zero.
pub fn robust_policy_eval(m: &TabularMdp, u: &UncertaintySpec, pi: &Policy, tol: f64) -> Result<ValueFunction> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidTolerance(tol));
    }
    pi.check_shape(m)?;
    let gamma = m.discount();
    let max_iters = default_max_iters(gamma, tol);
    let mut v = vec![0.0; m.num_states()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let sorted = SortedValues::new(&v)?;
        let next: Vec<f64> = (0..m.num_states())
            .map(|s| {
                let mut total = 0.0;
                for a in 0..m.num_actions() {
                    let w = pi.prob(s, a);
                    if w > 0.0 {
                        total += w * (m.reward(s, a) + gamma * worst_case_value(m.row(s, a), &sorted, u));
                    }
                }
                total
            })
            .collect();
        residual = sup_norm_diff(&next, &v);
        v = next;
        if residual <= tol {
            return Ok(ValueFunction(v));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// Gap between two value vectors, `max_s (optimal(s) - achieved(s))`.
pub fn max_gap(optimal: &[f64], achieved: &[f64]) -> f64 {
    optimal
        .iter()
        .zip(achieved)
        .map(|(a, b)| a - b)
        .fold(f64::NEG_INFINITY, f64::max)
}

/// Tolerance handed to the inner solves so that each value is within
/// `gamma * tol` of its fixed point.
pub(crate) fn inner_tol(gamma: f64, tol: f64) -> f64 {
    tol * (1.0 - gamma)
}

/// `max_s (V*(s) - V^pi(s))` on the model `m`; never below `-2 tol`.
pub fn suboptimality_gap(m: &TabularMdp, u: &UncertaintySpec, pi: &Policy, tol: f64) -> Result<f64> {
    if !(tol > 0.0 && tol.is_finite()) {
        return Err(Error::InvalidTolerance(tol));
    }
    let t = inner_tol(m.discount(), tol);
    let star = drvi(m, u, t, default_max_iters(m.discount(), t))?;
    let v_pi = robust_policy_eval(m, u, pi, t)?;
    Ok(max_gap(&star.v_final, &v_pi))
}
