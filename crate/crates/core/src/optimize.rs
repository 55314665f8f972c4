//! One-dimensional minimization.

/// `(3 - sqrt 5) / 2`, the fraction of the bracket cut off each step.
const INV_PHI_SQ: f64 = 0.381_966_011_250_105_1;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Minimum {
    pub x: f64,
    pub value: f64,
    pub evaluations: usize,
}

/// Golden-section search for a minimum of `f` on `[lo, hi]`.
///
/// Stops once the bracket is narrower than `tol`. The best point seen,
/// including the two end points, is returned, so a minimum sitting on a
/// bound is found exactly.
pub fn golden_section<F>(mut f: F, lo: f64, hi: f64, tol: f64) -> Minimum
where
    F: FnMut(f64) -> f64,
{
    let (mut a, mut b) = if lo <= hi { (lo, hi) } else { (hi, lo) };
    let mut evaluations = 0;
    let mut eval = |x: f64, evaluations: &mut usize| {
        *evaluations += 1;
        let v = f(x);
        if v.is_nan() { f64::INFINITY } else { v }
    };

    let mut best = Minimum {
        x: a,
        value: eval(a, &mut evaluations),
        evaluations: 0,
    };
    let fb = eval(b, &mut evaluations);
    if fb < best.value {
        best = Minimum { x: b, value: fb, evaluations: 0 };
    }

    let mut x1 = a + INV_PHI_SQ * (b - a);
    let mut x2 = b - INV_PHI_SQ * (b - a);
    let mut f1 = eval(x1, &mut evaluations);
    let mut f2 = eval(x2, &mut evaluations);

    while b - a > tol {
        if f1 <= f2 {
            b = x2;
            x2 = x1;
            f2 = f1;
            x1 = a + INV_PHI_SQ * (b - a);
            f1 = eval(x1, &mut evaluations);
        } else {
            a = x1;
            x1 = x2;
            f1 = f2;
            x2 = b - INV_PHI_SQ * (b - a);
            f2 = eval(x2, &mut evaluations);
        }
        // Bracket no longer shrinks in floating point.
        if !(x1 > a && x2 < b) {
            break;
        }
    }

    for (x, v) in [(x1, f1), (x2, f2)] {
        if v < best.value {
            best = Minimum { x, value: v, evaluations: 0 };
        }
    }
    best.evaluations = evaluations;
    best
}
