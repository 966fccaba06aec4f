//! Modified Bessel functions of the first kind for the Rician likelihood,
//! evaluated in log scale so large arguments do not overflow.

use std::f64::consts::PI;

/// Below this argument the power series is used, above it the asymptotic
/// expansion. Both are accurate to a few ulp at the switch.
const SERIES_LIMIT: f64 = 30.0;

/// Power series for `I0(x)` and `I1(x)` (unscaled), `x <= SERIES_LIMIT`.
fn series(x: f64) -> (f64, f64) {
    let q = 0.25 * x * x;
    let mut term0 = 1.0;
    let mut term1 = 0.5 * x;
    let (mut i0, mut i1) = (term0, term1);
    for k in 1..200 {
        let kf = k as f64;
        term0 *= q / (kf * kf);
        term1 *= q / (kf * (kf + 1.0));
        i0 += term0;
        i1 += term1;
        if term0 < 1e-17 * i0 && term1 < 1e-17 * i1.max(f64::MIN_POSITIVE) {
            break;
        }
    }
    (i0, i1)
}

/// Asymptotic series `sum_k (-1)^k a_k(nu) / x^k` for `I_nu(x) e^{-x} sqrt(2 pi x)`.
fn asymptotic(x: f64, nu: f64) -> f64 {
    let mu = 4.0 * nu * nu;
    let mut term = 1.0;
    let mut sum = 1.0;
    for k in 1..40 {
        let odd = (2 * k - 1) as f64;
        let next = -term * (mu - odd * odd) / (k as f64 * 8.0 * x);
        if next.abs() >= term.abs() {
            break;
        }
        term = next;
        sum += term;
        if term.abs() < 1e-17 * sum.abs() {
            break;
        }
    }
    sum
}

/// `ln I0(x)` for `x >= 0`.
pub fn ln_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        series(x).0.ln()
    } else {
        x - 0.5 * (2.0 * PI * x).ln() + asymptotic(x, 0.0).ln()
    }
}

/// `I1(x) / I0(x)` for `x >= 0`, the derivative of `ln I0`.
pub fn i1_over_i0(x: f64) -> f64 {
    let x = x.abs();
    if x <= SERIES_LIMIT {
        let (i0, i1) = series(x);
        i1 / i0
    } else {
        asymptotic(x, 1.0) / asymptotic(x, 0.0)
    }
}
