//! Special functions used across the crate.
//!
//! Log-gamma, log-beta and digamma come from `statrs`; trigamma is not
//! provided there and is computed here by recurrence plus asymptotic series.

pub use statrs::function::beta::ln_beta;
pub use statrs::function::gamma::{digamma, ln_gamma};
use statrs::function::factorial::ln_factorial;

/// Trigamma function ψ'(x) for x > 0.
pub fn trigamma(x: f64) -> f64 {
    if !(x > 0.0) {
        return f64::NAN;
    }
    let mut x = x;
    let mut acc = 0.0;
    // shift into the asymptotic regime
    while x < 10.0 {
        acc += 1.0 / (x * x);
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    // 1/x + 1/(2x²) + Σ B_2k / x^{2k+1}
    let bernoulli = [1.0 / 6.0, -1.0 / 30.0, 1.0 / 42.0, -1.0 / 30.0, 5.0 / 66.0, -691.0 / 2730.0, 7.0 / 6.0];
    let tail = bernoulli.iter().rev().fold(0.0, |acc, b| b + inv2 * acc);
    let series = inv + 0.5 * inv2 + inv * inv2 * tail;
    acc + series
}

/// ln C(n, k).
pub fn ln_choose(n: u64, k: u64) -> f64 {
    debug_assert!(k <= n);
    ln_factorial(n) - ln_factorial(k) - ln_factorial(n - k)
}

/// ln(exp(a) + exp(b)) without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let (hi, lo) = if a > b { (a, b) } else { (b, a) };
    hi + (lo - hi).exp().ln_1p()
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;

    #[test]
    fn trigamma_known_values() {
        // ψ'(1) = π²/6, ψ'(1/2) = π²/2
        let pi2 = std::f64::consts::PI.powi(2);
        assert_relative_eq!(trigamma(1.0), pi2 / 6.0, max_relative = 1e-13);
        assert_relative_eq!(trigamma(0.5), pi2 / 2.0, max_relative = 1e-13);
        // recurrence ψ'(x+1) = ψ'(x) - 1/x²
        for &x in &[0.3, 2.7, 11.0, 800.0] {
            assert_relative_eq!(trigamma(x + 1.0), trigamma(x) - 1.0 / (x * x), max_relative = 1e-12);
        }
    }

    #[test]
    fn trigamma_matches_digamma_difference() {
        for &x in &[0.7f64, 3.0, 50.0, 7166.0] {
            let h = 1e-4 * x.max(1.0);
            let fd = (digamma(x + h) - digamma(x - h)) / (2.0 * h);
            assert_relative_eq!(trigamma(x), fd, max_relative = 1e-6);
        }
    }

    #[test]
    fn ln_choose_small() {
        assert_relative_eq!(ln_choose(10, 3), 120f64.ln(), max_relative = 1e-13);
        assert_eq!(ln_choose(5, 0), 0.0);
    }

    #[test]
    fn log_add_exp_handles_neg_infinity() {
        assert_eq!(log_add_exp(f64::NEG_INFINITY, 1.5), 1.5);
        assert_relative_eq!(log_add_exp(0.0, 0.0), 2f64.ln(), max_relative = 1e-15);
        assert_relative_eq!(log_add_exp(-1000.0, -1000.0), -1000.0 + 2f64.ln(), max_relative = 1e-15);
    }
}
