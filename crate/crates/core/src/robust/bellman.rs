use rayon::prelude::*;

use super::chi2::{chi2_dual, chi2_value};
use super::tv::{tv_dual, tv_value};
use super::{Divergence, DualSolution, SortedValues, UncertaintySpec};
use crate::error::{Error, Result};
use crate::mdp::{QFunction, TabularMdp};

/// Inner worst-case problem for the divergence named in `u`.
pub fn worst_case(p: &[f64], v: &[f64], u: &UncertaintySpec) -> Result<DualSolution> {
    match u.divergence() {
        Divergence::Tv => tv_dual(p, v, u.radius()),
        Divergence::Chi2 => chi2_dual(p, v, u.radius()),
    }
}

pub(crate) fn worst_case_value(p: &[f64], sorted: &SortedValues<'_>, u: &UncertaintySpec) -> f64 {
    match u.divergence() {
        Divergence::Tv => tv_value(p, sorted, u.radius()).0,
        Divergence::Chi2 => chi2_value(p, sorted, u.radius()).0,
    }
}

fn check_q(m: &TabularMdp, q: &QFunction) -> Result<()> {
    if q.num_states() != m.num_states() || q.num_actions() != m.num_actions() {
        return Err(Error::Dimension(format!(
            "Q is {}x{}, MDP is {}x{}",
            q.num_states(),
            q.num_actions(),
            m.num_states(),
            m.num_actions()
        )));
    }
    Ok(())
}

/// `T(Q)(s,a) = r(s,a) + gamma * inf_{P in ball(P0_sa)} P V` with `V = max_a Q`.
pub fn robust_bellman_apply(m: &TabularMdp, u: &UncertaintySpec, q: &QFunction) -> Result<QFunction> {
    check_q(m, q)?;
    let v = q.state_values();
    let sorted = SortedValues::new(&v)?;
    let gamma = m.discount();
    let values = (0..m.num_pairs())
        .map(|i| m.rewards()[i] + gamma * worst_case_value(m.pair_row(i), &sorted, u))
        .collect();
    QFunction::from_flat(values, m.num_actions())
}

/// Row-parallel variant of [`robust_bellman_apply`]; results are bitwise identical.
pub fn robust_bellman_apply_par(m: &TabularMdp, u: &UncertaintySpec, q: &QFunction) -> Result<QFunction> {
    check_q(m, q)?;
    let v = q.state_values();
    let sorted = SortedValues::new(&v)?;
    let gamma = m.discount();
    let values = (0..m.num_pairs())
        .into_par_iter()
        .map(|i| m.rewards()[i] + gamma * worst_case_value(m.pair_row(i), &sorted, u))
        .collect();
    QFunction::from_flat(values, m.num_actions())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::{random_mdp, standard_bellman_apply};
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_q(rng: &mut ChaCha8Rng, s: usize, a: usize, bound: f64) -> QFunction {
        QFunction::from_flat((0..s * a).map(|_| rng.random::<f64>() * bound).collect(), a).unwrap()
    }

    #[test]
    fn zero_radius_matches_standard_operator() {
        let m = random_mdp(4, 2, 0.9, 3).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let q = random_q(&mut rng, 4, 2, 10.0);
        let std = standard_bellman_apply(&m, &q);
        for u in [UncertaintySpec::tv(0.0).unwrap(), UncertaintySpec::chi2(0.0).unwrap()] {
            let rob = robust_bellman_apply(&m, &u, &q).unwrap();
            assert!(rob.sup_distance(&std) < 1e-14);
        }
    }

    #[test]
    fn zero_q_returns_reward() {
        let m = random_mdp(4, 3, 0.9, 5).unwrap();
        let q = QFunction::zeros(4, 3);
        for u in [UncertaintySpec::tv(0.4).unwrap(), UncertaintySpec::chi2(2.0).unwrap()] {
            let out = robust_bellman_apply(&m, &u, &q).unwrap();
            assert_eq!(out.values(), m.rewards());
        }
    }

    #[test]
    fn contraction_on_random_pairs() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for seed in 0..20 {
            let m = random_mdp(4, 2, 0.9, seed).unwrap();
            let bound = m.value_bound();
            for u in [UncertaintySpec::tv(0.3).unwrap(), UncertaintySpec::chi2(0.8).unwrap()] {
                let q1 = random_q(&mut rng, 4, 2, bound);
                let q2 = random_q(&mut rng, 4, 2, bound);
                let t1 = robust_bellman_apply(&m, &u, &q1).unwrap();
                let t2 = robust_bellman_apply(&m, &u, &q2).unwrap();
                assert!(t1.sup_distance(&t2) <= 0.9 * q1.sup_distance(&q2) + 1e-12);
                assert!(t1.values().iter().all(|&x| (0.0..=bound + 1e-12).contains(&x)));
            }
        }
    }

    #[test]
    fn parallel_is_bitwise_identical() {
        let m = random_mdp(12, 4, 0.95, 8).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let q = random_q(&mut rng, 12, 4, 20.0);
        for u in [UncertaintySpec::tv(0.2).unwrap(), UncertaintySpec::chi2(1.5).unwrap()] {
            let a = robust_bellman_apply(&m, &u, &q).unwrap();
            let b = robust_bellman_apply_par(&m, &u, &q).unwrap();
            assert_eq!(a, b);
        }
    }

    #[test]
    fn shape_mismatch_is_reported() {
        let m = random_mdp(3, 2, 0.9, 0).unwrap();
        let q = QFunction::zeros(2, 2);
        assert!(matches!(
            robust_bellman_apply(&m, &UncertaintySpec::tv(0.1).unwrap(), &q),
            Err(Error::Dimension(_))
        ));
    }
}
