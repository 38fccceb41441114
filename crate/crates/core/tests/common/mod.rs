//! Brute-force oracles shared by the integration tests. Nothing here calls
//! into the solver paths being checked.

#![allow(dead_code)]

use rand::rngs::SmallRng;
use rand::{Rng, SeedableRng};
use rand_distr::{Distribution, Exp1, StandardNormal};

pub fn rng(seed: u64) -> SmallRng {
    SmallRng::seed_from_u64(seed)
}

/// Random point of the simplex; with `sparse` some entries are zeroed.
pub fn random_simplex(rng: &mut impl Rng, n: usize, sparse: bool) -> Vec<f64> {
    loop {
        let mut w: Vec<f64> = (0..n)
            .map(|_| {
                if sparse && rng.random_bool(0.3) {
                    0.0
                } else {
                    Exp1.sample(rng)
                }
            })
            .collect();
        let total: f64 = w.iter().sum();
        if total > 0.0 {
            w.iter_mut().for_each(|x| *x /= total);
            return w;
        }
    }
}

pub fn random_values(rng: &mut impl Rng, n: usize, hi: f64) -> Vec<f64> {
    (0..n)
        .map(|_| {
            // occasional exact ties
            if rng.random_bool(0.15) {
                (rng.random_range(0..4) as f64) * hi / 4.0
            } else {
                rng.random_range(0.0..hi)
            }
        })
        .collect()
}

pub fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

pub fn tv(a: &[f64], b: &[f64]) -> f64 {
    0.5 * a.iter().zip(b).map(|(x, y)| (x - y).abs()).sum::<f64>()
}

pub fn chi2(candidate: &[f64], nominal: &[f64]) -> f64 {
    candidate
        .iter()
        .zip(nominal)
        .map(|(c, p)| {
            if *p > 0.0 {
                (c - p) * (c - p) / p
            } else if *c > 0.0 {
                f64::INFINITY
            } else {
                0.0
            }
        })
        .sum()
}

/// Smallest `P' v` over `count` kernels drawn from the TV ball around `p`.
/// Draws mix toward vertices, pairs of vertices and random interior points,
/// each pushed to the boundary (or a random fraction of it).
pub fn tv_ball_min(rng: &mut impl Rng, p: &[f64], v: &[f64], sigma: f64, count: usize) -> f64 {
    let n = p.len();
    let mut best = f64::INFINITY;
    let mut target = vec![0.0; n];
    for _ in 0..count {
        match rng.random_range(0..3) {
            0 => {
                target.iter_mut().for_each(|x| *x = 0.0);
                target[rng.random_range(0..n)] = 1.0;
            }
            1 => {
                target.iter_mut().for_each(|x| *x = 0.0);
                let w = rng.random_range(0.0..1.0);
                target[rng.random_range(0..n)] += w;
                target[rng.random_range(0..n)] += 1.0 - w;
            }
            _ => {
                let mut total = 0.0;
                for x in target.iter_mut() {
                    *x = if rng.random_bool(0.3) { 0.0 } else { Exp1.sample(rng) };
                    total += *x;
                }
                if total == 0.0 {
                    continue;
                }
                target.iter_mut().for_each(|x| *x /= total);
            }
        }
        let dist = tv(p, &target);
        let mut t = if dist > 0.0 { (sigma / dist).min(1.0) } else { 1.0 };
        if rng.random_bool(0.2) {
            t *= rng.random_range(0.0..1.0);
        }
        let (mut moved, mut value) = (0.0, 0.0);
        for i in 0..n {
            let c = p[i] + t * (target[i] - p[i]);
            moved += (c - p[i]).abs();
            value += c * v[i];
        }
        if 0.5 * moved <= sigma {
            best = best.min(value);
        }
    }
    best
}

/// Smallest `P' v` over up to `count` kernels rejection-sampled from the
/// chi-square ball around `p`. Candidates keep the support of `p`.
pub fn chi2_ball_min(rng: &mut impl Rng, p: &[f64], v: &[f64], sigma: f64, count: usize) -> f64 {
    let support: Vec<usize> = (0..p.len()).filter(|&i| p[i] > 0.0).collect();
    let mut best = dot(p, v);
    let mut cand = p.to_vec();
    for _ in 0..count {
        let mut d: Vec<f64> = support.iter().map(|_| StandardNormal.sample(rng)).collect();
        let mean = d.iter().sum::<f64>() / d.len() as f64;
        d.iter_mut().for_each(|x| *x -= mean);
        let energy: f64 = support.iter().zip(&d).map(|(&i, x)| x * x / p[i]).sum();
        if energy <= 0.0 {
            continue;
        }
        let mut t = (sigma / energy).sqrt();
        for (&i, x) in support.iter().zip(&d) {
            if *x < 0.0 {
                t = t.min(p[i] / -x);
            }
        }
        if rng.random_bool(0.2) {
            t *= rng.random_range(0.0..1.0);
        }
        for (&i, x) in support.iter().zip(&d) {
            cand[i] = (p[i] + t * x).max(0.0);
        }
        if chi2(&cand, p) <= sigma {
            best = best.min(dot(&cand, v));
        }
    }
    best
}

fn chi2_dual_objective(p: &[f64], v: &[f64], sigma: f64, alpha: f64) -> f64 {
    let clipped: Vec<f64> = v.iter().map(|&x| x.min(alpha)).collect();
    let mean = dot(p, &clipped);
    let var: f64 = p.iter().zip(&clipped).map(|(w, x)| w * (x - mean) * (x - mean)).sum();
    mean - (sigma * var.max(0.0)).sqrt()
}

/// Maximum of the scalar chi-square dual over a uniform grid of clipping
/// levels, refined by repeated zooming around the best grid cell.
pub fn chi2_grid_oracle(p: &[f64], v: &[f64], sigma: f64, points: usize) -> f64 {
    let lo = v.iter().cloned().fold(f64::INFINITY, f64::min);
    let hi = v.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    if hi - lo <= 0.0 {
        return chi2_dual_objective(p, v, sigma, hi);
    }
    let (mut a, mut b) = (lo, hi);
    let mut best = f64::NEG_INFINITY;
    let mut k = points;
    for _ in 0..4 {
        let step = (b - a) / (k - 1) as f64;
        let mut arg = a;
        for i in 0..k {
            let alpha = if i + 1 == k { b } else { a + step * i as f64 };
            let h = chi2_dual_objective(p, v, sigma, alpha);
            if h > best {
                best = h;
                arg = alpha;
            }
        }
        a = (arg - step).max(lo);
        b = (arg + step).min(hi);
        k = 2001;
    }
    best
}

/// Dense Gaussian elimination with partial pivoting.
pub fn solve_linear(mut a: Vec<Vec<f64>>, mut b: Vec<f64>) -> Vec<f64> {
    let n = b.len();
    for col in 0..n {
        let pivot = (col..n)
            .max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))
            .unwrap();
        a.swap(col, pivot);
        b.swap(col, pivot);
        let (upper, lower) = a.split_at_mut(col + 1);
        let pivot_row = &upper[col];
        for (i, row) in lower.iter_mut().enumerate() {
            let f = row[col] / pivot_row[col];
            if f != 0.0 {
                for (x, y) in row[col..].iter_mut().zip(&pivot_row[col..]) {
                    *x -= f * y;
                }
                b[col + 1 + i] -= f * b[col];
            }
        }
    }
    let mut x = vec![0.0; n];
    for row in (0..n).rev() {
        let s: f64 = (row + 1..n).map(|k| a[row][k] * x[k]).sum();
        x[row] = (b[row] - s) / a[row][row];
    }
    x
}

/// Nominal value of a deterministic policy, `(I - gamma P_pi) V = r_pi`.
pub fn nominal_policy_value(
    rows: &dyn Fn(usize, usize) -> Vec<f64>,
    reward: &dyn Fn(usize, usize) -> f64,
    actions: &[usize],
    gamma: f64,
) -> Vec<f64> {
    let n = actions.len();
    let mut a = vec![vec![0.0; n]; n];
    let mut b = vec![0.0; n];
    for s in 0..n {
        let row = rows(s, actions[s]);
        for t in 0..n {
            a[s][t] = if s == t { 1.0 } else { 0.0 } - gamma * row[t];
        }
        b[s] = reward(s, actions[s]);
    }
    solve_linear(a, b)
}

/// Every map from states to actions, in lexicographic order.
pub fn deterministic_policies(num_states: usize, num_actions: usize) -> Vec<Vec<usize>> {
    let mut out = vec![vec![]];
    for _ in 0..num_states {
        out = out
            .into_iter()
            .flat_map(|prefix: Vec<usize>| {
                (0..num_actions).map(move |a| {
                    let mut next = prefix.clone();
                    next.push(a);
                    next
                })
            })
            .collect();
    }
    out
}
