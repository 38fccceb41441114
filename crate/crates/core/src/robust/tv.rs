use super::{check_lengths, check_radius, Divergence, DualSolution, SortedValues};
use crate::error::Result;
use crate::mdp::dot;

/// Total-variation distance `0.5 * ||q - p||_1`.
pub fn tv_distance(q: &[f64], p: &[f64]) -> f64 {
    0.5 * q.iter().zip(p).map(|(a, b)| (a - b).abs()).sum::<f64>()
}

/// Worst-case expectation of `v` over the TV ball of radius `sigma` around `p`.
///
/// The dual objective `g(alpha) = P [V]_alpha - sigma (alpha - min V)` is
/// concave and piecewise linear with kinks at the entries of `v`, so the
/// maximum is found exactly by scanning those entries.
pub fn tv_dual(p: &[f64], v: &[f64], sigma: f64) -> Result<DualSolution> {
    check_lengths(p, v)?;
    check_radius(Divergence::Tv, sigma)?;
    let sorted = SortedValues::new(v)?;
    let (value, alpha_star) = tv_value(p, &sorted, sigma);
    Ok(DualSolution {
        value,
        alpha_star,
        worst_kernel: greedy_kernel(p, &sorted, sigma),
    })
}

/// Kernel attaining the TV infimum: moves `min(sigma, 1 - p(argmin v))` of mass
/// from the highest-valued states onto the lowest-index minimizer of `v`.
pub fn tv_worst_kernel(p: &[f64], v: &[f64], sigma: f64) -> Result<Vec<f64>> {
    check_lengths(p, v)?;
    check_radius(Divergence::Tv, sigma)?;
    let sorted = SortedValues::new(v)?;
    Ok(greedy_kernel(p, &sorted, sigma))
}

pub(crate) fn tv_value(p: &[f64], sorted: &SortedValues<'_>, sigma: f64) -> (f64, f64) {
    let v = sorted.values;
    if sigma == 0.0 {
        return (dot(p, v), sorted.max());
    }
    let min = sorted.min();
    if sorted.max() == min {
        return (min, min);
    }
    let order = &sorted.order;
    let n = order.len();
    // tail[k] = mass of order[k..]
    let mut tail = vec![0.0; n + 1];
    for k in (0..n).rev() {
        tail[k] = tail[k + 1] + p[order[k]];
    }
    let mut lower = 0.0;
    let mut best = (f64::NEG_INFINITY, min);
    let mut k = 0;
    while k < n {
        let level = v[order[k]];
        while k < n && v[order[k]] == level {
            lower += p[order[k]] * level;
            k += 1;
        }
        let g = lower + level * tail[k] - sigma * (level - min);
        if g > best.0 {
            best = (g, level);
        }
    }
    best
}

fn greedy_kernel(p: &[f64], sorted: &SortedValues<'_>, sigma: f64) -> Vec<f64> {
    let mut out = p.to_vec();
    if sigma == 0.0 {
        return out;
    }
    let target = sorted.argmin();
    let movable: f64 = p.iter().enumerate().filter(|&(i, _)| i != target).map(|(_, x)| x).sum();
    let mut budget = sigma.min(movable);
    let mut moved = 0.0;
    // descending value; among equal values the lower index gives first
    let mut desc = sorted.order.clone();
    desc.sort_by(|&i, &j| sorted.values[j].total_cmp(&sorted.values[i]).then(i.cmp(&j)));
    for i in desc {
        if budget <= 0.0 {
            break;
        }
        if i == target {
            continue;
        }
        let take = out[i].min(budget);
        out[i] -= take;
        budget -= take;
        moved += take;
    }
    out[target] += moved;
    out
}
