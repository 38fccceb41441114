//! Tabular MDP model, policies, value/Q vectors and the standard (non-robust)
//! dynamic-programming routines used as the zero-radius baseline.

use std::fs;
use std::ops::Deref;
use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::Exp1;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Tolerance on the row sums of kernels and policies.
pub const ROW_SUM_TOL: f64 = 1e-12;

/// Default stopping tolerance on the sup-norm change between iterates.
pub const DEFAULT_TOL: f64 = 1e-10;

/// Iteration budget sufficient for a `gamma`-contraction started at zero to
/// reach a sup-norm change of `tol`.
pub fn default_max_iters(gamma: f64, tol: f64) -> usize {
    if gamma <= 0.0 {
        return 2;
    }
    let t = ((tol * (1.0 - gamma)).ln() / gamma.ln()).ceil();
    if t.is_finite() && t > 0.0 {
        (t as usize + 1).max(2)
    } else {
        2
    }
}

pub(crate) fn sup_norm_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

pub(crate) fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

/// A finite discounted MDP with a dense row-major nominal kernel.
///
/// Row `s * A + a` of the kernel is the next-state distribution of the pair
/// `(s, a)`. Instances are validated on construction and immutable afterwards.
#[derive(Debug, Clone, PartialEq)]
pub struct TabularMdp {
    num_states: usize,
    num_actions: usize,
    kernel: Vec<f64>,
    reward: Vec<f64>,
    discount: f64,
}

#[derive(Serialize, Deserialize)]
struct MdpFile {
    #[serde(rename = "S")]
    num_states: usize,
    #[serde(rename = "A")]
    num_actions: usize,
    gamma: f64,
    kernel: Vec<Vec<f64>>,
    reward: Vec<f64>,
}

impl TabularMdp {
    /// Builds an MDP from kernel rows (indexed `s * A + a`) and rewards,
    /// rejecting anything that violates the model invariants.
    pub fn new(
        num_states: usize,
        num_actions: usize,
        kernel_rows: Vec<Vec<f64>>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("S and A must be positive".into()));
        }
        let pairs = num_states * num_actions;
        if kernel_rows.len() != pairs {
            return Err(Error::Dimension(format!(
                "kernel has {} rows, expected S*A = {}",
                kernel_rows.len(),
                pairs
            )));
        }
        if reward.len() != pairs {
            return Err(Error::Dimension(format!(
                "reward has {} entries, expected S*A = {}",
                reward.len(),
                pairs
            )));
        }
        let mut kernel = Vec::with_capacity(pairs * num_states);
        for (i, row) in kernel_rows.iter().enumerate() {
            if row.len() != num_states {
                return Err(Error::Dimension(format!(
                    "kernel row {} has {} entries, expected S = {}",
                    i,
                    row.len(),
                    num_states
                )));
            }
            kernel.extend_from_slice(row);
        }
        Self::from_flat(num_states, num_actions, kernel, reward, discount)
    }

    /// Same as [`TabularMdp::new`] with the kernel already flattened to
    /// `S * A * S` entries.
    pub fn from_flat(
        num_states: usize,
        num_actions: usize,
        kernel: Vec<f64>,
        reward: Vec<f64>,
        discount: f64,
    ) -> Result<Self> {
        if num_states == 0 || num_actions == 0 {
            return Err(Error::Dimension("S and A must be positive".into()));
        }
        let pairs = num_states * num_actions;
        if kernel.len() != pairs * num_states || reward.len() != pairs {
            return Err(Error::Dimension("kernel or reward has the wrong length".into()));
        }
        let m = TabularMdp {
            num_states,
            num_actions,
            kernel,
            reward,
            discount,
        };
        validate_mdp(&m)?;
        Ok(m)
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn num_pairs(&self) -> usize {
        self.num_states * self.num_actions
    }

    pub fn discount(&self) -> f64 {
        self.discount
    }

    /// Next-state distribution of `(s, a)`.
    pub fn row(&self, s: usize, a: usize) -> &[f64] {
        self.pair_row(s * self.num_actions + a)
    }

    /// Next-state distribution of the pair with flat index `s * A + a`.
    pub fn pair_row(&self, pair: usize) -> &[f64] {
        let n = self.num_states;
        &self.kernel[pair * n..(pair + 1) * n]
    }

    pub fn reward(&self, s: usize, a: usize) -> f64 {
        self.reward[s * self.num_actions + a]
    }

    pub fn rewards(&self) -> &[f64] {
        &self.reward
    }

    pub fn kernel(&self) -> &[f64] {
        &self.kernel
    }

    /// Upper end of the value range, `1 / (1 - gamma)`.
    pub fn value_bound(&self) -> f64 {
        1.0 / (1.0 - self.discount)
    }

    /// Returns a copy with the kernel replaced (same shape, rewards, discount).
    pub fn with_kernel(&self, kernel: Vec<f64>) -> Result<Self> {
        Self::from_flat(
            self.num_states,
            self.num_actions,
            kernel,
            self.reward.clone(),
            self.discount,
        )
    }

    pub fn to_json(&self) -> Result<String> {
        let file = MdpFile {
            num_states: self.num_states,
            num_actions: self.num_actions,
            gamma: self.discount,
            kernel: self.kernel.chunks(self.num_states).map(<[f64]>::to_vec).collect(),
            reward: self.reward.clone(),
        };
        Ok(serde_json::to_string_pretty(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: MdpFile = serde_json::from_str(text)?;
        Self::new(f.num_states, f.num_actions, f.kernel, f.reward, f.gamma)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Checks every model invariant, naming the first offending index.
pub fn validate_mdp(m: &TabularMdp) -> Result<()> {
    if !(0.0..1.0).contains(&m.discount) {
        return Err(Error::BadDiscount(m.discount));
    }
    for s in 0..m.num_states {
        for a in 0..m.num_actions {
            let row = m.row(s, a);
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0)) || !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                return Err(Error::RowNotStochastic {
                    state: s,
                    action: a,
                    sum,
                });
            }
            let r = m.reward(s, a);
            if !(0.0..=1.0).contains(&r) {
                return Err(Error::RewardOutOfRange {
                    state: s,
                    action: a,
                    value: r,
                });
            }
        }
    }
    Ok(())
}

/// Random MDP with Dirichlet(1) kernel rows and uniform rewards on [0, 1).
pub fn random_mdp(num_states: usize, num_actions: usize, discount: f64, seed: u64) -> Result<TabularMdp> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let pairs = num_states * num_actions;
    let mut kernel = Vec::with_capacity(pairs * num_states);
    for _ in 0..pairs {
        let draws: Vec<f64> = (0..num_states).map(|_| rng.sample::<f64, _>(Exp1)).collect();
        let total: f64 = draws.iter().sum();
        kernel.extend(draws.iter().map(|x| x / total));
    }
    let reward = (0..pairs).map(|_| rng.random::<f64>()).collect();
    TabularMdp::from_flat(num_states, num_actions, kernel, reward, discount)
}

/// A vector over states.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ValueFunction(pub Vec<f64>);

impl Deref for ValueFunction {
    type Target = [f64];
    fn deref(&self) -> &[f64] {
        &self.0
    }
}

impl ValueFunction {
    pub fn zeros(num_states: usize) -> Self {
        ValueFunction(vec![0.0; num_states])
    }

    pub fn span(&self) -> f64 {
        let max = self.0.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
        let min = self.0.iter().cloned().fold(f64::INFINITY, f64::min);
        max - min
    }
}

/// A vector over state-action pairs, stored row-major (`s * A + a`).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(into = "Vec<Vec<f64>>", try_from = "Vec<Vec<f64>>")]
pub struct QFunction {
    values: Vec<f64>,
    num_actions: usize,
}

impl From<QFunction> for Vec<Vec<f64>> {
    fn from(q: QFunction) -> Self {
        q.values.chunks(q.num_actions).map(<[f64]>::to_vec).collect()
    }
}

impl TryFrom<Vec<Vec<f64>>> for QFunction {
    type Error = Error;
    fn try_from(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_actions == 0 || rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::Dimension("ragged or empty Q table".into()));
        }
        Ok(QFunction {
            values: rows.concat(),
            num_actions,
        })
    }
}

impl QFunction {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        QFunction {
            values: vec![0.0; num_states * num_actions],
            num_actions,
        }
    }

    pub fn from_flat(values: Vec<f64>, num_actions: usize) -> Result<Self> {
        if num_actions == 0 || !values.len().is_multiple_of(num_actions) {
            return Err(Error::Dimension(format!(
                "{} Q entries do not split into rows of {}",
                values.len(),
                num_actions
            )));
        }
        Ok(QFunction { values, num_actions })
    }

    pub fn num_states(&self) -> usize {
        self.values.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn get(&self, s: usize, a: usize) -> f64 {
        self.values[s * self.num_actions + a]
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn state_row(&self, s: usize) -> &[f64] {
        &self.values[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// `V(s) = max_a Q(s, a)`.
    pub fn state_values(&self) -> ValueFunction {
        ValueFunction(
            self.values
                .chunks(self.num_actions)
                .map(|row| row.iter().cloned().fold(f64::NEG_INFINITY, f64::max))
                .collect(),
        )
    }

    /// Greedy deterministic policy, ties broken towards the lowest action index.
    pub fn greedy_policy(&self) -> Policy {
        let actions: Vec<usize> = self.values.chunks(self.num_actions).map(argmax_first).collect();
        Policy::deterministic(&actions, self.num_actions).expect("greedy actions are in range")
    }

    pub fn sup_distance(&self, other: &QFunction) -> f64 {
        sup_norm_diff(&self.values, &other.values)
    }
}

fn argmax_first(row: &[f64]) -> usize {
    let mut best = 0;
    for (a, &x) in row.iter().enumerate().skip(1) {
        if x > row[best] {
            best = a;
        }
    }
    best
}

/// A stationary (possibly randomized) policy: one action distribution per state.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "PolicyFile", into = "PolicyFile")]
pub struct Policy {
    num_actions: usize,
    probs: Vec<f64>,
}

#[derive(Serialize, Deserialize)]
struct PolicyFile {
    probs: Vec<Vec<f64>>,
}

impl From<Policy> for PolicyFile {
    fn from(p: Policy) -> Self {
        PolicyFile {
            probs: p.probs.chunks(p.num_actions).map(<[f64]>::to_vec).collect(),
        }
    }
}

impl TryFrom<PolicyFile> for Policy {
    type Error = Error;
    fn try_from(f: PolicyFile) -> Result<Self> {
        Policy::from_rows(f.probs)
    }
}

impl Policy {
    pub fn from_rows(rows: Vec<Vec<f64>>) -> Result<Self> {
        let num_actions = rows.first().map_or(0, Vec::len);
        if num_actions == 0 || rows.iter().any(|r| r.len() != num_actions) {
            return Err(Error::Dimension("ragged or empty policy table".into()));
        }
        for (s, row) in rows.iter().enumerate() {
            let sum: f64 = row.iter().sum();
            if row.iter().any(|&x| !(x >= 0.0)) || !((sum - 1.0).abs() <= ROW_SUM_TOL) {
                return Err(Error::PolicyRowInvalid { state: s });
            }
        }
        Ok(Policy {
            num_actions,
            probs: rows.concat(),
        })
    }

    pub fn deterministic(actions: &[usize], num_actions: usize) -> Result<Self> {
        if num_actions == 0 {
            return Err(Error::Dimension("A must be positive".into()));
        }
        let mut probs = vec![0.0; actions.len() * num_actions];
        for (s, &a) in actions.iter().enumerate() {
            if a >= num_actions {
                return Err(Error::PolicyRowInvalid { state: s });
            }
            probs[s * num_actions + a] = 1.0;
        }
        Ok(Policy { num_actions, probs })
    }

    pub fn uniform(num_states: usize, num_actions: usize) -> Self {
        Policy {
            num_actions,
            probs: vec![1.0 / num_actions as f64; num_states * num_actions],
        }
    }

    pub fn num_states(&self) -> usize {
        self.probs.len() / self.num_actions
    }

    pub fn num_actions(&self) -> usize {
        self.num_actions
    }

    pub fn prob(&self, s: usize, a: usize) -> f64 {
        self.probs[s * self.num_actions + a]
    }

    pub fn row(&self, s: usize) -> &[f64] {
        &self.probs[s * self.num_actions..(s + 1) * self.num_actions]
    }

    /// The chosen action when the row at `s` is a point mass.
    pub fn action(&self, s: usize) -> Option<usize> {
        let row = self.row(s);
        row.iter().position(|&p| p == 1.0)
    }

    pub fn is_deterministic(&self) -> bool {
        (0..self.num_states()).all(|s| self.action(s).is_some())
    }

    pub(crate) fn check_shape(&self, m: &TabularMdp) -> Result<()> {
        if self.num_states() != m.num_states() || self.num_actions != m.num_actions() {
            return Err(Error::Dimension(format!(
                "policy is {}x{}, MDP is {}x{}",
                self.num_states(),
                self.num_actions,
                m.num_states(),
                m.num_actions()
            )));
        }
        Ok(())
    }
}

/// Every deterministic policy of an `S x A` problem, in lexicographic order.
pub fn all_deterministic_policies(num_states: usize, num_actions: usize) -> Vec<Policy> {
    let total = num_actions.pow(num_states as u32);
    (0..total)
        .map(|mut code| {
            let actions: Vec<usize> = (0..num_states)
                .map(|_| {
                    let a = code % num_actions;
                    code /= num_actions;
                    a
                })
                .collect();
            Policy::deterministic(&actions, num_actions).expect("in range")
        })
        .collect()
}

fn check_tol(tol: f64) -> Result<()> {
    if tol > 0.0 && tol.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidTolerance(tol))
    }
}

/// One application of the standard Bellman optimality operator.
pub fn standard_bellman_apply(m: &TabularMdp, q: &QFunction) -> QFunction {
    let v = q.state_values();
    let gamma = m.discount();
    let values = (0..m.num_pairs())
        .map(|i| m.rewards()[i] + gamma * dot(m.pair_row(i), &v))
        .collect();
    QFunction {
        values,
        num_actions: m.num_actions(),
    }
}

/// Standard value iteration from `Q = 0` until the sup-norm change drops to `tol`.
pub fn standard_value_iteration(
    m: &TabularMdp,
    tol: f64,
    max_iters: usize,
) -> Result<(QFunction, ValueFunction, Policy)> {
    check_tol(tol)?;
    let mut q = QFunction::zeros(m.num_states(), m.num_actions());
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next = standard_bellman_apply(m, &q);
        residual = next.sup_distance(&q);
        q = next;
        if residual <= tol {
            let v = q.state_values();
            let pi = q.greedy_policy();
            return Ok((q, v, pi));
        }
    }
    Err(Error::NotConverged {
        iterations: max_iters,
        residual,
    })
}

/// Iterative evaluation of `V = r_pi + gamma P_pi V` from zero.
pub fn standard_policy_eval(m: &TabularMdp, pi: &Policy, tol: f64) -> Result<ValueFunction> {
    check_tol(tol)?;
    pi.check_shape(m)?;
    let gamma = m.discount();
    let max_iters = default_max_iters(gamma, tol);
    let mut v = vec![0.0; m.num_states()];
    let mut residual = f64::INFINITY;
    for _ in 0..max_iters {
        let next: Vec<f64> = (0..m.num_states())
            .map(|s| {
                (0..m.num_actions())
                    .filter(|&a| pi.prob(s, a) > 0.0)
                    .map(|a| pi.prob(s, a) * (m.reward(s, a) + gamma * dot(m.row(s, a), &v)))
                    .sum()
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
