mod common;

use robust_mdp::{random_mdp, standard_policy_eval, standard_value_iteration, Policy};

use common::{deterministic_policies, nominal_policy_value};

#[test]
fn value_iteration_matches_enumerated_optimum() {
    for seed in 0..10 {
        let gamma = if seed % 2 == 0 { 0.9 } else { 0.6 };
        let m = random_mdp(4, 2, gamma, 500 + seed).unwrap();
        let rows = |s: usize, a: usize| m.row(s, a).to_vec();
        let reward = |s: usize, a: usize| m.reward(s, a);

        let policies = deterministic_policies(4, 2);
        assert_eq!(policies.len(), 16);
        let mut best = [f64::NEG_INFINITY; 4];
        for actions in &policies {
            let v = nominal_policy_value(&rows, &reward, actions, gamma);
            for s in 0..4 {
                best[s] = best[s].max(v[s]);
            }
        }

        let (_, v, pi) = standard_value_iteration(&m, 1e-12, 100_000).unwrap();
        for s in 0..4 {
            assert!(
                (v[s] - best[s]).abs() < 1e-9,
                "seed {seed} s {s}: {} vs {}",
                v[s],
                best[s]
            );
        }
        // the greedy policy attains the optimum too
        let actions: Vec<usize> = (0..4).map(|s| pi.action(s).unwrap()).collect();
        let v_pi = nominal_policy_value(&rows, &reward, &actions, gamma);
        for s in 0..4 {
            assert!((v_pi[s] - best[s]).abs() < 1e-9);
        }
    }
}

#[test]
fn iterative_policy_evaluation_matches_linear_solve() {
    let m = random_mdp(5, 3, 0.95, 77).unwrap();
    let rows = |s: usize, a: usize| m.row(s, a).to_vec();
    let reward = |s: usize, a: usize| m.reward(s, a);
    for actions in [[0, 1, 2, 0, 1], [2, 2, 2, 2, 2], [1, 0, 0, 2, 1]] {
        let exact = nominal_policy_value(&rows, &reward, &actions, 0.95);
        let pi = Policy::deterministic(&actions, 3).unwrap();
        let v = standard_policy_eval(&m, &pi, 1e-13).unwrap();
        for s in 0..5 {
            assert!((v[s] - exact[s]).abs() < 1e-10);
        }
    }
}
