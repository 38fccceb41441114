//! Two-hypothesis lower-bound instances with closed-form robust values.
//!
//! Both families share one structure. State 1 is absorbing and is the only
//! rewarding state. From state 0, action `phi` reaches state 1 with
//! probability `p` and action `1 - phi` with probability `q < p`; otherwise
//! the chain stays in 0. Every state `s >= 2` moves to state 1 deterministically.
//! Actions `a >= 2` at states 0 and 1 duplicate action 1 so that the action
//! set is rectangular.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, ValueFunction};

/// Largest admissible `c0` for the TV family.
pub const DEFAULT_C0: f64 = 1.0 / 8.0;

fn default_c0() -> f64 {
    DEFAULT_C0
}

fn check_shape(num_states: usize, num_actions: usize, phi: u8) -> Result<()> {
    if num_states < 3 {
        return Err(Error::InvalidParams(format!("S = {num_states} < 3")));
    }
    if num_actions < 2 {
        return Err(Error::InvalidParams(format!("A = {num_actions} < 2")));
    }
    if phi > 1 {
        return Err(Error::InvalidParams(format!("phi = {phi} is not a bit")));
    }
    Ok(())
}

fn check_policy_mass(pi_phi_at_0: f64) -> Result<()> {
    if (0.0..=1.0).contains(&pi_phi_at_0) {
        Ok(())
    } else {
        Err(Error::InvalidParams(format!(
            "pi(phi|0) = {pi_phi_at_0} outside [0, 1]"
        )))
    }
}

fn build(num_states: usize, num_actions: usize, phi: u8, p: f64, q: f64, discount: f64) -> Result<TabularMdp> {
    let point = |target: usize| -> Vec<f64> { (0..num_states).map(|s| if s == target { 1.0 } else { 0.0 }).collect() };
    let two_point = |prob: f64| -> Vec<f64> {
        let mut row = vec![0.0; num_states];
        row[0] = 1.0 - prob;
        row[1] = prob;
        row
    };
    let phi = phi as usize;
    let mut rows = Vec::with_capacity(num_states * num_actions);
    let mut reward = Vec::with_capacity(num_states * num_actions);
    for s in 0..num_states {
        for a in 0..num_actions {
            let row = if s == 0 {
                // a >= 2 duplicates action 1
                let a_eff = a.min(1);
                two_point(if a_eff == phi { p } else { q })
            } else {
                point(1)
            };
            rows.push(row);
            reward.push(if s == 1 { 1.0 } else { 0.0 });
        }
    }
    TabularMdp::new(num_states, num_actions, rows, reward, discount)
}

/// Parameters of the TV instance family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TvInstanceParams {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub epsilon: f64,
    #[serde(default = "default_c0")]
    pub c0: f64,
    #[serde(default)]
    pub phi: u8,
}

impl TvInstanceParams {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64, sigma: f64, epsilon: f64) -> Self {
        TvInstanceParams {
            num_states,
            num_actions,
            gamma,
            sigma,
            epsilon,
            c0: DEFAULT_C0,
            phi: 0,
        }
    }

    pub fn with_phi(self, phi: u8) -> Self {
        TvInstanceParams { phi, ..self }
    }

    fn scale(&self) -> f64 {
        (1.0 - self.gamma).max(self.sigma)
    }

    /// `p = (1 + c0 / 2) max{1 - gamma, sigma}`.
    pub fn p(&self) -> f64 {
        (1.0 + self.c0 / 2.0) * self.scale()
    }

    /// `Delta = 32 (1 - gamma) max{1 - gamma, sigma} epsilon`.
    pub fn delta(&self) -> f64 {
        32.0 * (1.0 - self.gamma) * self.scale() * self.epsilon
    }

    pub fn q(&self) -> f64 {
        self.p() - self.delta()
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.num_states, self.num_actions, self.phi)?;
        if !(0.5..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma = {} outside [1/2, 1)", self.gamma)));
        }
        if !(self.c0 > 0.0 && self.c0 <= DEFAULT_C0) {
            return Err(Error::InvalidParams(format!("c0 = {} outside (0, 1/8]", self.c0)));
        }
        if !(self.sigma > 0.0 && self.sigma <= 1.0 - self.c0) {
            return Err(Error::InvalidParams(format!(
                "sigma = {} outside (0, 1 - c0]",
                self.sigma
            )));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        let (p, q, delta) = (self.p(), self.q(), self.delta());
        if p > 1.0 {
            return Err(Error::InvalidParams(format!("p = {p} > 1")));
        }
        if delta > self.c0 / 2.0 * self.scale() {
            return Err(Error::InvalidParams(format!(
                "Delta = {delta} exceeds (c0/2) max{{1-gamma, sigma}}; need epsilon <= c0 / (64 (1 - gamma))"
            )));
        }
        if q < 0.0 {
            return Err(Error::InvalidParams(format!("q = {q} < 0")));
        }
        Ok(())
    }
}

pub fn build_tv_instance(params: &TvInstanceParams) -> Result<TabularMdp> {
    params.validate()?;
    build(
        params.num_states,
        params.num_actions,
        params.phi,
        params.p(),
        params.q(),
        params.gamma,
    )
}

/// Closed-form TV-robust value of a policy that plays the planted action at
/// state 0 with probability `pi_phi_at_0` (and action `1 - phi` otherwise).
pub fn tv_analytic_value(params: &TvInstanceParams, pi_phi_at_0: f64) -> Result<ValueFunction> {
    params.validate()?;
    check_policy_mass(pi_phi_at_0)?;
    let (gamma, sigma) = (params.gamma, params.sigma);
    let z = params.p() * pi_phi_at_0 + params.q() * (1.0 - pi_phi_at_0);
    let stay = 1.0 - gamma * (1.0 - sigma);
    let lifted = gamma * (z - sigma);
    let v0 = lifted / ((1.0 - gamma) * (1.0 + lifted / stay) * stay);
    let v1 = (1.0 + gamma * sigma * v0) / stay;
    let v_rest = gamma * (1.0 - sigma) * v1 + gamma * sigma * v0;
    let mut v = vec![v_rest; params.num_states];
    v[0] = v0;
    v[1] = v1;
    Ok(ValueFunction(v))
}

/// `f_sigma(x) = x - sqrt(sigma x (1 - x))`, the least probability a two-point
/// distribution with mass `x` can retain inside a chi-square ball of radius `sigma`.
pub fn f_sigma(x: f64, sigma: f64) -> Result<f64> {
    let lower = sigma / (1.0 + sigma);
    if !(x >= lower && x <= 1.0) {
        return Err(Error::DomainError { x, lower });
    }
    Ok((x - (sigma * x * (1.0 - x)).sqrt()).max(0.0))
}

/// Parameters of the chi-square instance family.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Chi2InstanceParams {
    #[serde(rename = "S")]
    pub num_states: usize,
    #[serde(rename = "A")]
    pub num_actions: usize,
    pub gamma: f64,
    pub sigma: f64,
    pub epsilon: f64,
    #[serde(default)]
    pub phi: u8,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Chi2Regime {
    /// `sigma < (1 - gamma) / 4`
    Small,
    /// `(1 - gamma) / 4 <= sigma < 1 / (3 (1 - gamma))`
    Moderate,
    /// `sigma >= 1 / (3 (1 - gamma))`
    Large,
}

impl Chi2InstanceParams {
    pub fn new(num_states: usize, num_actions: usize, gamma: f64, sigma: f64, epsilon: f64) -> Self {
        Chi2InstanceParams {
            num_states,
            num_actions,
            gamma,
            sigma,
            epsilon,
            phi: 0,
        }
    }

    pub fn with_phi(self, phi: u8) -> Self {
        Chi2InstanceParams { phi, ..self }
    }

    fn regime(&self) -> Chi2Regime {
        let h = 1.0 - self.gamma;
        if self.sigma < h / 4.0 {
            Chi2Regime::Small
        } else if self.sigma < 1.0 / (3.0 * h) {
            Chi2Regime::Moderate
        } else {
            Chi2Regime::Large
        }
    }

    pub fn q(&self) -> f64 {
        match self.regime() {
            Chi2Regime::Small => 1.0 - self.gamma,
            _ => self.sigma / (1.0 + self.sigma),
        }
    }

    pub fn delta(&self) -> f64 {
        let h = 1.0 - self.gamma;
        match self.regime() {
            Chi2Regime::Small => 18.0 * h * h * self.epsilon,
            Chi2Regime::Moderate => 64.0 * (1.0 + self.sigma) * h * h * self.epsilon,
            Chi2Regime::Large => 16.0 / (3.0 * (1.0 + self.sigma)) * self.epsilon,
        }
    }

    pub fn p(&self) -> f64 {
        self.q() + self.delta()
    }

    /// Worst-case probability of reaching state 1 under the planted action.
    pub fn p_low(&self) -> Result<f64> {
        f_sigma(self.p(), self.sigma)
    }

    /// Worst-case probability of reaching state 1 under the other action.
    pub fn q_low(&self) -> Result<f64> {
        match self.regime() {
            Chi2Regime::Small => f_sigma(self.q(), self.sigma),
            // q = sigma / (1 + sigma) sits exactly on the boundary of the domain
            _ => Ok(0.0),
        }
    }

    pub fn validate(&self) -> Result<()> {
        check_shape(self.num_states, self.num_actions, self.phi)?;
        if !(0.75..1.0).contains(&self.gamma) {
            return Err(Error::InvalidParams(format!("gamma = {} outside [3/4, 1)", self.gamma)));
        }
        if !(self.sigma > 0.0 && self.sigma.is_finite()) {
            return Err(Error::InvalidParams(format!("sigma = {} must be positive", self.sigma)));
        }
        if !(self.epsilon > 0.0) {
            return Err(Error::InvalidParams(format!(
                "epsilon = {} must be positive",
                self.epsilon
            )));
        }
        let h = 1.0 - self.gamma;
        let bound = match self.regime() {
            Chi2Regime::Small => h / 4.0,
            _ => (h / 4.0).min(1.0 / (2.0 * (1.0 + self.sigma))),
        };
        let delta = self.delta();
        if delta > bound {
            return Err(Error::InvalidParams(format!(
                "Delta = {delta} exceeds its bound {bound}"
            )));
        }
        let p = self.p();
        if p >= 1.0 {
            return Err(Error::InvalidParams(format!("p = {p} >= 1")));
        }
        Ok(())
    }
}

pub fn build_chi2_instance(params: &Chi2InstanceParams) -> Result<TabularMdp> {
    params.validate()?;
    build(
        params.num_states,
        params.num_actions,
        params.phi,
        params.p(),
        params.q(),
        params.gamma,
    )
}

/// Closed-form chi-square-robust value of a policy that plays the planted
/// action at state 0 with probability `pi_phi_at_0`.
pub fn chi2_analytic_value(params: &Chi2InstanceParams, pi_phi_at_0: f64) -> Result<ValueFunction> {
    params.validate()?;
    check_policy_mass(pi_phi_at_0)?;
    let gamma = params.gamma;
    let z = params.p_low()? * pi_phi_at_0 + params.q_low()? * (1.0 - pi_phi_at_0);
    let v0 = gamma * z / ((1.0 - gamma) * (1.0 - gamma * (1.0 - z)));
    let mut v = vec![gamma / (1.0 - gamma); params.num_states];
    v[0] = v0;
    v[1] = 1.0 / (1.0 - gamma);
    Ok(ValueFunction(v))
}

/// Instance pair sharing all parameters except the planted action.
pub fn tv_instance_pair(params: &TvInstanceParams) -> Result<[TabularMdp; 2]> {
    Ok([
        build_tv_instance(&params.with_phi(0))?,
        build_tv_instance(&params.with_phi(1))?,
    ])
}

pub fn chi2_instance_pair(params: &Chi2InstanceParams) -> Result<[TabularMdp; 2]> {
    Ok([
        build_chi2_instance(&params.with_phi(0))?,
        build_chi2_instance(&params.with_phi(1))?,
    ])
}
