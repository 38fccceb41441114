use super::{check_lengths, check_radius, clip, variance, Divergence, DualSolution, SortedValues};
use crate::error::Result;
use crate::golden::golden_section_max;
use crate::mdp::dot;

/// Width of the final golden-section bracket on each segment.
pub const ALPHA_TOL: f64 = 1e-11;

/// `sum_s (q(s) - p(s))^2 / p(s)`; infinite if `q` puts mass where `p` has none.
pub fn chi2_distance(q: &[f64], p: &[f64]) -> f64 {
    let mut total = 0.0;
    for (&qi, &pi) in q.iter().zip(p) {
        if pi > 0.0 {
            let d = qi - pi;
            total += d * d / pi;
        } else if qi > 0.0 {
            return f64::INFINITY;
        }
    }
    total
}

/// Worst-case expectation of `v` over the chi-square ball of radius `sigma`
/// around `p`.
///
/// The dual objective `h(alpha) = P [V]_alpha - sqrt(sigma Var_P([V]_alpha))`
/// is evaluated at every distinct value of `v` on the support of `p`; between
/// consecutive values it is linear minus the square root of a convex quadratic,
/// hence concave, and is maximized there by golden-section search. States with
/// `p(s) = 0` cannot receive mass and are ignored.
pub fn chi2_dual(p: &[f64], v: &[f64], sigma: f64) -> Result<DualSolution> {
    check_lengths(p, v)?;
    check_radius(Divergence::Chi2, sigma)?;
    let sorted = SortedValues::new(v)?;
    let (value, alpha_star) = chi2_value(p, &sorted, sigma);
    let worst_kernel = if sigma == 0.0 {
        p.to_vec()
    } else {
        recover_kernel(p, v, sigma, alpha_star)
    };
    Ok(DualSolution {
        value,
        alpha_star,
        worst_kernel,
    })
}

pub(crate) fn chi2_value(p: &[f64], sorted: &SortedValues<'_>, sigma: f64) -> (f64, f64) {
    let v = sorted.values;
    if sigma == 0.0 {
        return (dot(p, v), sorted.max());
    }
    // distinct support values with their masses, ascending
    let mut levels: Vec<(f64, f64)> = Vec::with_capacity(v.len());
    for &i in &sorted.order {
        if p[i] > 0.0 {
            match levels.last_mut() {
                Some((level, mass)) if *level == v[i] => *mass += p[i],
                _ => levels.push((v[i], p[i])),
            }
        }
    }
    let base = levels[0].0;
    if levels.len() == 1 {
        return (base, base);
    }
    let k = levels.len();
    let mut tail = vec![0.0; k + 1];
    for j in (0..k).rev() {
        tail[j] = tail[j + 1] + levels[j].1;
    }

    // Running weight, mean and scatter of the unclipped part, in coordinates
    // shifted by the support minimum.
    let (mut w, mut mean, mut scatter) = (0.0, 0.0, 0.0);
    let mut best = (f64::NEG_INFINITY, base);
    for j in 0..k {
        let (level, mass) = levels[j];
        let x = level - base;
        let w_new = w + mass;
        let delta = x - mean;
        let mean_new = mean + mass * delta / w_new;
        scatter += mass * delta * (x - mean_new);
        w = w_new;
        mean = mean_new;
        let b = tail[j + 1];
        let objective = |a: f64| {
            let d = a - mean;
            let var = (scatter + w * b * d * d).max(0.0);
            w * mean + b * a - (sigma * var).sqrt()
        };
        let at_level = objective(x);
        if at_level > best.0 {
            best = (at_level, x);
        }
        if j + 1 < k {
            let hi = levels[j + 1].0 - base;
            let (a, h) = golden_section_max(objective, x, hi, ALPHA_TOL);
            if h > best.0 {
                best = (h, a);
            }
        }
    }
    (base + best.0, base + best.1)
}

/// Kernel in the ball attaining (or, in the fallback, bounding) the infimum.
///
/// For `W = [V]_alpha*` the stationary point of the Lagrangian is
/// `P'(s) = P(s) (1 - lambda (W(s) - P W))` with `lambda = sqrt(sigma / Var_P W)`.
fn recover_kernel(p: &[f64], v: &[f64], sigma: f64, alpha: f64) -> Vec<f64> {
    let w = clip(v, alpha);
    let (lo, hi) = p
        .iter()
        .zip(&w)
        .filter(|(&pi, _)| pi > 0.0)
        .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), (_, &wi)| {
            (lo.min(wi), hi.max(wi))
        });
    // a constant W has zero variance even when rounding says otherwise
    let var = if hi > lo { variance(p, &w) } else { 0.0 };
    let mut cand: Vec<f64> = if var > 0.0 {
        let mean = dot(p, &w);
        let lambda = (sigma / var).sqrt();
        p.iter()
            .zip(&w)
            .map(|(&pi, &wi)| {
                if pi > 0.0 {
                    pi * (1.0 - lambda * (wi - mean))
                } else {
                    0.0
                }
            })
            .collect()
    } else {
        // alpha* at the support minimum: keep only the minimizing states
        let low = p
            .iter()
            .zip(v)
            .filter(|(&pi, _)| pi > 0.0)
            .map(|(_, &vi)| vi)
            .fold(f64::INFINITY, f64::min);
        let mass: f64 = p
            .iter()
            .zip(v)
            .filter(|(&pi, &vi)| pi > 0.0 && vi == low)
            .map(|(pi, _)| pi)
            .sum();
        p.iter()
            .zip(v)
            .map(|(&pi, &vi)| if pi > 0.0 && vi == low { pi / mass } else { 0.0 })
            .collect()
    };
    if cand.iter().any(|&x| x < 0.0) {
        project_support(&mut cand, p);
    }
    let dist = chi2_distance(&cand, p);
    if dist > sigma {
        let t = (sigma / dist).sqrt();
        for (c, &pi) in cand.iter_mut().zip(p) {
            *c = pi + t * (*c - pi);
        }
    }
    cand
}

/// Euclidean projection of the support coordinates onto the simplex.
fn project_support(x: &mut [f64], p: &[f64]) {
    let idx: Vec<usize> = (0..x.len()).filter(|&i| p[i] > 0.0).collect();
    let mut sorted: Vec<f64> = idx.iter().map(|&i| x[i]).collect();
    sorted.sort_by(|a, b| b.total_cmp(a));
    let mut cumsum = 0.0;
    let mut theta = 0.0;
    for (k, &u) in sorted.iter().enumerate() {
        cumsum += u;
        let t = (cumsum - 1.0) / (k + 1) as f64;
        if u - t > 0.0 {
            theta = t;
        }
    }
    for &i in &idx {
        x[i] = (x[i] - theta).max(0.0);
    }
}
