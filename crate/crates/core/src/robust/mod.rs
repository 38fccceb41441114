//! Worst-case expectations over divergence balls and the robust Bellman operator.
//!
//! Both inner problems `inf { P' V : P' in ball(P, sigma) }` are solved through
//! their scalar duals over a clipping level `alpha in [min V, max V]`:
//!
//! * TV:  `max_alpha  P [V]_alpha - sigma (alpha - min_s [V]_alpha(s))`
//! * chi2: `max_alpha  P [V]_alpha - sqrt(sigma Var_P([V]_alpha))`

mod bellman;
mod chi2;
mod tv;

use std::fmt;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub use bellman::{robust_bellman_apply, robust_bellman_apply_par, worst_case};
pub use chi2::{chi2_distance, chi2_dual};
pub use tv::{tv_distance, tv_dual, tv_worst_kernel};

pub(crate) use bellman::worst_case_value;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Divergence {
    Tv,
    Chi2,
}

impl Divergence {
    pub fn name(self) -> &'static str {
        match self {
            Divergence::Tv => "tv",
            Divergence::Chi2 => "chi2",
        }
    }
}

impl fmt::Display for Divergence {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl std::str::FromStr for Divergence {
    type Err = Error;
    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "tv" => Ok(Divergence::Tv),
            "chi2" => Ok(Divergence::Chi2),
            other => Err(Error::InvalidConfig(format!("unknown divergence {other:?}"))),
        }
    }
}

/// Divergence kind plus radius. A zero radius means the nominal expectation.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "RawSpec")]
pub struct UncertaintySpec {
    divergence: Divergence,
    radius: f64,
}

#[derive(Deserialize)]
struct RawSpec {
    divergence: Divergence,
    radius: f64,
}

impl TryFrom<RawSpec> for UncertaintySpec {
    type Error = Error;
    fn try_from(r: RawSpec) -> Result<Self> {
        UncertaintySpec::new(r.divergence, r.radius)
    }
}

impl UncertaintySpec {
    /// TV radii must lie in `[0, 1)`, chi2 radii in `[0, inf)`.
    pub fn new(divergence: Divergence, radius: f64) -> Result<Self> {
        let ok = match divergence {
            Divergence::Tv => (0.0..1.0).contains(&radius),
            Divergence::Chi2 => radius >= 0.0 && radius.is_finite(),
        };
        if !ok {
            return Err(Error::InvalidRadius {
                divergence: divergence.name(),
                radius,
            });
        }
        Ok(UncertaintySpec { divergence, radius })
    }

    pub fn tv(radius: f64) -> Result<Self> {
        Self::new(Divergence::Tv, radius)
    }

    pub fn chi2(radius: f64) -> Result<Self> {
        Self::new(Divergence::Chi2, radius)
    }

    pub fn divergence(&self) -> Divergence {
        self.divergence
    }

    pub fn radius(&self) -> f64 {
        self.radius
    }
}

/// Solution of one inner worst-case problem.
#[derive(Debug, Clone, PartialEq, Serialize)]
pub struct DualSolution {
    /// `inf` of `P' V` over the ball.
    pub value: f64,
    /// Maximizing clipping level of the scalar dual.
    pub alpha_star: f64,
    /// A kernel in the ball whose expectation of `V` attains `value`.
    pub worst_kernel: Vec<f64>,
}

/// `[V]_alpha`: entries above `alpha` are replaced by `alpha`.
pub fn clip(v: &[f64], alpha: f64) -> Vec<f64> {
    v.iter().map(|&x| if x > alpha { alpha } else { x }).collect()
}

/// `Var_P(V) = P (V o V) - (P V)^2`, evaluated in centered form.
pub fn variance(p: &[f64], v: &[f64]) -> f64 {
    let mean: f64 = p.iter().zip(v).map(|(pi, vi)| pi * vi).sum();
    let var: f64 = p
        .iter()
        .zip(v)
        .map(|(pi, vi)| {
            let d = vi - mean;
            pi * d * d
        })
        .sum();
    var.max(0.0)
}

/// A value vector sorted once so that many rows can be dualized against it.
#[derive(Debug, Clone)]
pub(crate) struct SortedValues<'a> {
    pub values: &'a [f64],
    /// Indices in ascending order of value, ties by index.
    pub order: Vec<usize>,
}

impl<'a> SortedValues<'a> {
    pub fn new(values: &'a [f64]) -> Result<Self> {
        if let Some((index, &value)) = values.iter().enumerate().find(|(_, &x)| !(x >= 0.0)) {
            return Err(Error::NegativeValueEntry { index, value });
        }
        let mut order: Vec<usize> = (0..values.len()).collect();
        order.sort_by(|&i, &j| values[i].total_cmp(&values[j]).then(i.cmp(&j)));
        Ok(SortedValues { values, order })
    }

    pub fn min(&self) -> f64 {
        self.values[self.order[0]]
    }

    pub fn max(&self) -> f64 {
        self.values[*self.order.last().expect("non-empty")]
    }

    pub fn argmin(&self) -> usize {
        self.order[0]
    }
}

pub(crate) fn check_radius(divergence: Divergence, sigma: f64) -> Result<()> {
    if sigma >= 0.0 && sigma.is_finite() {
        Ok(())
    } else {
        Err(Error::InvalidRadius {
            divergence: divergence.name(),
            radius: sigma,
        })
    }
}

pub(crate) fn check_lengths(p: &[f64], v: &[f64]) -> Result<()> {
    if p.len() != v.len() || p.is_empty() {
        return Err(Error::Dimension(format!(
            "distribution has {} entries, value vector {}",
            p.len(),
            v.len()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    #[test]
    fn clip_cases() {
        assert_eq!(clip(&[0.2, 0.9, 0.5], 0.5), vec![0.2, 0.5, 0.5]);
        assert_eq!(clip(&[0.2, 0.9, 0.5], 1.0), vec![0.2, 0.9, 0.5]);
        assert_eq!(clip(&[0.2, 0.9, 0.5], 0.0), vec![0.0, 0.0, 0.0]);
    }

    #[test]
    fn variance_cases() {
        assert!((variance(&[0.5, 0.5], &[0.0, 1.0]) - 0.25).abs() < 1e-15);
        assert_eq!(variance(&[0.3, 0.7], &[2.0, 2.0]), 0.0);
        // E[V^2] = 4.1, (E V)^2 = 3.61
        assert!((variance(&[0.2, 0.3, 0.5], &[3.0, 1.0, 2.0]) - 0.49).abs() < 1e-14);
    }

    #[test]
    fn radius_ranges() {
        assert!(UncertaintySpec::tv(0.0).is_ok());
        assert!(UncertaintySpec::tv(1.0).is_err());
        assert!(UncertaintySpec::tv(-0.1).is_err());
        assert!(UncertaintySpec::chi2(12.0).is_ok());
        assert!(UncertaintySpec::chi2(f64::NAN).is_err());
    }

    fn prob_and_values(n: usize) -> impl Strategy<Value = (Vec<f64>, Vec<f64>)> {
        (
            prop::collection::vec(0.01f64..1.0, n),
            prop::collection::vec(0.0f64..20.0, n),
        )
            .prop_map(|(w, v)| {
                let t: f64 = w.iter().sum();
                (w.iter().map(|x| x / t).collect(), v)
            })
    }

    proptest! {
        #[test]
        fn variance_is_shift_invariant((p, v) in (2usize..8).prop_flat_map(prob_and_values), b in -50.0f64..50.0) {
            let shifted: Vec<f64> = v.iter().map(|x| x - b).collect();
            prop_assert!((variance(&p, &v) - variance(&p, &shifted)).abs() <= 1e-12 * (1.0 + variance(&p, &v)));
        }

        #[test]
        fn variance_is_lipschitz(
            (p, v1) in (2usize..8).prop_flat_map(prob_and_values),
            noise in prop::collection::vec(-1.0f64..1.0, 8),
            x in 0.0f64..2.0,
        ) {
            // V in [0, 20] corresponds to gamma = 0.95
            let bound = 20.0;
            let v2: Vec<f64> = v1.iter().zip(&noise).map(|(a, n)| (a + n * x).clamp(0.0, bound)).collect();
            let dist = v1.iter().zip(&v2).map(|(a, b)| (a - b).abs()).fold(0.0, f64::max);
            let lhs = (variance(&p, &v1) - variance(&p, &v2)).abs();
            prop_assert!(lhs <= 2.0 * dist * bound + 1e-12);
        }
    }
}
