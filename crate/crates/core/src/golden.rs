//! Golden-section search for the maximum of a unimodal scalar function.

const INV_PHI: f64 = 0.618_033_988_749_894_9;

/// Maximizes a function that is concave (or at least unimodal) on `[lo, hi]`,
/// shrinking the bracket until its width is at most `tol`.
///
/// Returns the best point evaluated and its value; the interval endpoints are
/// not evaluated.
pub fn golden_section_max<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> (f64, f64)
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = (lo, hi);
    let mut x1 = b - INV_PHI * (b - a);
    let mut x2 = a + INV_PHI * (b - a);
    let mut f1 = f(x1);
    let mut f2 = f(x2);
    // the bracket shrinks by INV_PHI per step; cap at the f64 resolution
    let floor = 4.0 * f64::EPSILON * a.abs().max(b.abs());
    let tol = tol.max(floor);
    while b - a > tol {
        if f1 < f2 {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = a + INV_PHI * (b - a);
            f2 = f(x2);
        } else {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = b - INV_PHI * (b - a);
            f1 = f(x1);
        }
    }
    if f1 >= f2 {
        (x1, f1)
    } else {
        (x2, f2)
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn finds_parabola_peak() {
        let (x, fx) = golden_section_max(|x| -(x - 0.3) * (x - 0.3) + 2.0, 0.0, 1.0, 1e-11);
        // the peak is flat to f64 resolution within ~1e-8 of the argmax
        assert!((x - 0.3).abs() < 1e-7);
        assert!((fx - 2.0).abs() < 1e-15);
    }

    #[test]
    fn monotone_function_converges_to_edge() {
        let (x, _) = golden_section_max(|x| x, 2.0, 5.0, 1e-11);
        assert!((x - 5.0).abs() < 1e-10);
    }

    #[test]
    fn degenerate_interval() {
        let (x, fx) = golden_section_max(|x| x * 2.0, 1.0, 1.0, 1e-11);
        assert_eq!(x, 1.0);
        assert_eq!(fx, 2.0);
    }
}
