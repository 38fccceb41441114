//! Generative-model and offline samplers, and the plug-in kernel estimate.
//!
//! Randomness is counter based: every `(s, a)` pair draws from its own ChaCha
//! stream keyed by `(seed, pair index)`, so results do not depend on the order
//! or the thread on which pairs are processed.

use std::fs;
use std::path::Path;

use rand::distr::weighted::WeightedIndex;
use rand::distr::Distribution;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::mdp::{TabularMdp, ROW_SUM_TOL};

/// Stream reserved for drawing `(s, a)` pairs in the offline sampler.
const PAIR_SELECTION_STREAM: u64 = u64::MAX;

/// Visit counts `N(s,a)` and next-state counts per state-action pair.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct TransitionCounts {
    num_states: usize,
    visit: Vec<u64>,
    next: Vec<u64>,
}

#[derive(Serialize, Deserialize)]
struct CountsFile {
    visit: Vec<u64>,
    next: Vec<Vec<u64>>,
}

impl TransitionCounts {
    pub fn zeros(num_states: usize, num_actions: usize) -> Self {
        TransitionCounts {
            num_states,
            visit: vec![0; num_states * num_actions],
            next: vec![0; num_states * num_actions * num_states],
        }
    }

    /// Builds counts from per-pair next-state rows; visits are the row sums.
    pub fn from_next_rows(rows: Vec<Vec<u64>>) -> Result<Self> {
        let num_states = rows.first().map_or(0, Vec::len);
        if num_states == 0 || rows.iter().any(|r| r.len() != num_states) {
            return Err(Error::InvalidCounts("ragged or empty next-state table".into()));
        }
        Ok(TransitionCounts {
            num_states,
            visit: rows.iter().map(|r| r.iter().sum()).collect(),
            next: rows.concat(),
        })
    }

    pub fn num_states(&self) -> usize {
        self.num_states
    }

    pub fn num_pairs(&self) -> usize {
        self.visit.len()
    }

    pub fn visit(&self, pair: usize) -> u64 {
        self.visit[pair]
    }

    pub fn visits(&self) -> &[u64] {
        &self.visit
    }

    pub fn next_row(&self, pair: usize) -> &[u64] {
        &self.next[pair * self.num_states..(pair + 1) * self.num_states]
    }

    pub fn total(&self) -> u64 {
        self.visit.iter().sum()
    }

    pub fn min_visit(&self) -> u64 {
        self.visit.iter().copied().min().unwrap_or(0)
    }

    pub fn to_json(&self) -> Result<String> {
        let file = CountsFile {
            visit: self.visit.clone(),
            next: self.next.chunks(self.num_states).map(<[u64]>::to_vec).collect(),
        };
        Ok(serde_json::to_string(&file)?)
    }

    pub fn from_json(text: &str) -> Result<Self> {
        let f: CountsFile = serde_json::from_str(text)?;
        let visit = f.visit;
        let counts = Self::from_next_rows(f.next)?;
        if counts.visit != visit {
            return Err(Error::InvalidCounts(
                "visit does not equal the next-state row sums".into(),
            ));
        }
        Ok(counts)
    }

    pub fn read(path: impl AsRef<Path>) -> Result<Self> {
        Self::from_json(&fs::read_to_string(path)?)
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<()> {
        fs::write(path, self.to_json()? + "\n")?;
        Ok(())
    }
}

/// Behavior distribution over state-action pairs for offline data.
#[derive(Debug, Clone, PartialEq)]
pub struct BehaviorDistribution {
    probs: Vec<f64>,
    mu_min: f64,
}

impl BehaviorDistribution {
    pub fn new(probs: Vec<f64>) -> Result<Self> {
        if probs.is_empty() {
            return Err(Error::InvalidBehavior("empty".into()));
        }
        let sum: f64 = probs.iter().sum();
        if probs.iter().any(|&p| !(p >= 0.0)) || !((sum - 1.0).abs() <= ROW_SUM_TOL) {
            return Err(Error::InvalidBehavior(format!("not a probability vector (sum {sum})")));
        }
        let mu_min = probs.iter().cloned().fold(f64::INFINITY, f64::min);
        Ok(BehaviorDistribution { probs, mu_min })
    }

    pub fn uniform(num_pairs: usize) -> Self {
        BehaviorDistribution {
            probs: vec![1.0 / num_pairs as f64; num_pairs],
            mu_min: 1.0 / num_pairs as f64,
        }
    }

    pub fn probs(&self) -> &[f64] {
        &self.probs
    }

    pub fn mu_min(&self) -> f64 {
        self.mu_min
    }
}

fn pair_rng(seed: u64, stream: u64) -> ChaCha8Rng {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    rng.set_stream(stream);
    rng
}

fn draw_next_states(m: &TabularMdp, pair: usize, n: u64, seed: u64) -> Vec<u64> {
    let row = m.pair_row(pair);
    let mut counts = vec![0u64; m.num_states()];
    if n == 0 {
        return counts;
    }
    let dist = WeightedIndex::new(row).expect("validated kernel row");
    let mut rng = pair_rng(seed, pair as u64);
    for _ in 0..n {
        counts[dist.sample(&mut rng)] += 1;
    }
    counts
}

fn assemble(num_states: usize, rows: Vec<Vec<u64>>) -> TransitionCounts {
    TransitionCounts {
        num_states,
        visit: rows.iter().map(|r| r.iter().sum()).collect(),
        next: rows.concat(),
    }
}

/// `n_per_pair` i.i.d. next-state draws from every `(s, a)`.
pub fn sample_generative(m: &TabularMdp, n_per_pair: u64, seed: u64) -> Result<TransitionCounts> {
    if n_per_pair == 0 {
        return Err(Error::InvalidCounts("n_per_pair must be at least 1".into()));
    }
    let rows = (0..m.num_pairs())
        .map(|pair| draw_next_states(m, pair, n_per_pair, seed))
        .collect();
    Ok(assemble(m.num_states(), rows))
}

/// Pair-parallel variant of [`sample_generative`] with identical output.
pub fn sample_generative_par(m: &TabularMdp, n_per_pair: u64, seed: u64) -> Result<TransitionCounts> {
    if n_per_pair == 0 {
        return Err(Error::InvalidCounts("n_per_pair must be at least 1".into()));
    }
    let rows = (0..m.num_pairs())
        .into_par_iter()
        .map(|pair| draw_next_states(m, pair, n_per_pair, seed))
        .collect();
    Ok(assemble(m.num_states(), rows))
}

/// `n_total` tuples with `(s, a) ~ mu` and `s' ~ P0(. | s, a)`, all independent.
///
/// Pairs are drawn first from a dedicated stream; next states are then drawn
/// per pair from that pair's stream.
pub fn sample_offline(m: &TabularMdp, mu: &BehaviorDistribution, n_total: u64, seed: u64) -> Result<TransitionCounts> {
    if n_total == 0 {
        return Err(Error::InvalidCounts("n_total must be at least 1".into()));
    }
    if mu.probs().len() != m.num_pairs() {
        return Err(Error::InvalidBehavior(format!(
            "behavior covers {} pairs, MDP has {}",
            mu.probs().len(),
            m.num_pairs()
        )));
    }
    let pick = WeightedIndex::new(mu.probs()).map_err(|e| Error::InvalidBehavior(e.to_string()))?;
    let mut rng = pair_rng(seed, PAIR_SELECTION_STREAM);
    let mut visits = vec![0u64; m.num_pairs()];
    for _ in 0..n_total {
        visits[pick.sample(&mut rng)] += 1;
    }
    let rows = visits
        .iter()
        .enumerate()
        .map(|(pair, &n)| draw_next_states(m, pair, n, seed))
        .collect();
    Ok(assemble(m.num_states(), rows))
}

/// Treatment of pairs without samples when forming the empirical kernel.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ZeroVisit {
    Error,
    /// Unvisited pairs get a point mass on their own state.
    SelfLoop,
}

/// Plug-in estimate `P0_hat(s'|s,a) = next(s,a,s') / N(s,a)`, with rewards and
/// discount copied from `base`.
pub fn empirical_kernel(counts: &TransitionCounts, base: &TabularMdp, zero_visit: ZeroVisit) -> Result<TabularMdp> {
    let n = base.num_states();
    if counts.num_states() != n || counts.num_pairs() != base.num_pairs() {
        return Err(Error::InvalidCounts(format!(
            "counts cover {} pairs over {} states, MDP has {} pairs over {} states",
            counts.num_pairs(),
            counts.num_states(),
            base.num_pairs(),
            n
        )));
    }
    let a_count = base.num_actions();
    let mut kernel = Vec::with_capacity(base.num_pairs() * n);
    for pair in 0..base.num_pairs() {
        let visits = counts.visit(pair);
        if visits == 0 {
            let (state, action) = (pair / a_count, pair % a_count);
            match zero_visit {
                ZeroVisit::Error => return Err(Error::ZeroVisit { state, action }),
                ZeroVisit::SelfLoop => kernel.extend((0..n).map(|s| if s == state { 1.0 } else { 0.0 })),
            }
        } else {
            let total = visits as f64;
            kernel.extend(counts.next_row(pair).iter().map(|&c| c as f64 / total));
        }
    }
    base.with_kernel(kernel)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::mdp::random_mdp;

    fn coin() -> TabularMdp {
        TabularMdp::new(2, 1, vec![vec![0.5, 0.5], vec![0.0, 1.0]], vec![0.0, 1.0], 0.9).unwrap()
    }

    #[test]
    fn deterministic_row_collects_all_draws() {
        let c = sample_generative(&coin(), 50, 3).unwrap();
        assert_eq!(c.next_row(1), &[0, 50]);
        assert!(c.visits().iter().all(|&v| v == 50));
    }

    #[test]
    fn same_seed_same_counts() {
        let m = random_mdp(4, 3, 0.9, 2).unwrap();
        assert_eq!(
            sample_generative(&m, 200, 77).unwrap(),
            sample_generative(&m, 200, 77).unwrap()
        );
        assert_ne!(
            sample_generative(&m, 200, 77).unwrap(),
            sample_generative(&m, 200, 78).unwrap()
        );
        assert_eq!(
            sample_generative(&m, 200, 77).unwrap(),
            sample_generative_par(&m, 200, 77).unwrap()
        );
    }

    #[test]
    fn fair_coin_frequency() {
        let c = sample_generative(&coin(), 1_000_000, 12).unwrap();
        let freq = c.next_row(0)[0] as f64 / 1e6;
        assert!((freq - 0.5).abs() < 0.002, "{freq}");
    }

    #[test]
    fn offline_point_mass_and_conservation() {
        let m = random_mdp(3, 2, 0.9, 5).unwrap();
        let mut probs = vec![0.0; 6];
        probs[4] = 1.0;
        let c = sample_offline(&m, &BehaviorDistribution::new(probs).unwrap(), 300, 1).unwrap();
        assert_eq!(c.visit(4), 300);
        assert_eq!(c.total(), 300);

        let c = sample_offline(&m, &BehaviorDistribution::uniform(6), 1234, 9).unwrap();
        assert_eq!(c.total(), 1234);
        assert_eq!(
            c,
            sample_offline(&m, &BehaviorDistribution::uniform(6), 1234, 9).unwrap()
        );
    }

    #[test]
    fn empirical_ratios_and_fallbacks() {
        let base = TabularMdp::new(2, 1, vec![vec![0.5, 0.5], vec![0.5, 0.5]], vec![0.1, 0.2], 0.7).unwrap();
        let counts = TransitionCounts::from_next_rows(vec![vec![1, 3], vec![0, 0]]).unwrap();
        assert_eq!(
            empirical_kernel(&counts, &base, ZeroVisit::Error).unwrap_err(),
            Error::ZeroVisit { state: 1, action: 0 }
        );
        let m = empirical_kernel(&counts, &base, ZeroVisit::SelfLoop).unwrap();
        assert_eq!(m.row(0, 0), &[0.25, 0.75]);
        assert_eq!(m.row(1, 0), &[0.0, 1.0]);
        assert_eq!(m.rewards(), base.rewards());
        assert_eq!(m.discount(), 0.7);
    }

    #[test]
    fn counts_json_round_trip_and_consistency() {
        let m = random_mdp(3, 2, 0.9, 5).unwrap();
        let c = sample_generative(&m, 17, 4).unwrap();
        assert_eq!(TransitionCounts::from_json(&c.to_json().unwrap()).unwrap(), c);
        assert!(TransitionCounts::from_json(r#"{"visit":[3],"next":[[1,1]]}"#).is_err());
    }

    #[test]
    fn behavior_validation() {
        assert!(BehaviorDistribution::new(vec![0.5, 0.6]).is_err());
        let mu = BehaviorDistribution::new(vec![0.25, 0.75]).unwrap();
        assert_eq!(mu.mu_min(), 0.25);
    }
}
