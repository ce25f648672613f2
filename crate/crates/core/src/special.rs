//! Special functions not covered by `statrs`.

use statrs::function::{erf, gamma};

pub use statrs::function::erf::{erf, erfc};
pub use statrs::function::gamma::{gamma, ln_gamma};

const EULER_GAMMA: f64 = 0.577_215_664_901_532_9;

/// Exponential integral `E1(x) = ∫_x^∞ e^{-z}/z dz` for `x > 0`.
pub fn exp_integral_e1(x: f64) -> f64 {
    assert!(x > 0.0, "E1 requires x > 0, got {x}");
    if x <= 1.0 {
        let mut sum = 0.0;
        let mut term = 1.0;
        for k in 1..200 {
            term *= -x / k as f64;
            let add = term / k as f64;
            sum += add;
            if add.abs() < 1e-17 * sum.abs().max(1e-300) {
                break;
            }
        }
        -EULER_GAMMA - x.ln() - sum
    } else {
        // Modified Lentz on the continued fraction e^{-x}/(x+1-1/(x+3-4/(x+5-...)))
        let tiny = 1e-300;
        let mut b = x + 1.0;
        let mut c = 1.0 / tiny;
        let mut d = 1.0 / b;
        let mut h = d;
        for i in 1..500 {
            let an = -((i * i) as f64);
            b += 2.0;
            d = 1.0 / (an * d + b);
            c = b + an / c;
            let del = c * d;
            h *= del;
            if (del - 1.0).abs() < 1e-16 {
                break;
            }
        }
        h * (-x).exp()
    }
}

/// Upper incomplete gamma `Γ(a, x) = ∫_x^∞ e^{-z} z^{a-1} dz` for any real `a`
/// and `x > 0` (negative non-integer and zero `a` included).
pub fn upper_incomplete_gamma(a: f64, x: f64) -> f64 {
    assert!(x > 0.0, "upper incomplete gamma requires x > 0");
    if a > 0.0 {
        return gamma::gamma_ui(a, x);
    }
    if a == 0.0 {
        return exp_integral_e1(x);
    }
    // Γ(a, x) = (Γ(a+1, x) - x^a e^{-x}) / a, recursing upward.
    (upper_incomplete_gamma(a + 1.0, x) - x.powf(a) * (-x).exp()) / a
}

/// Mittag-Leffler function of order 1/2, `E_{1/2}(z) = e^{z²} erfc(-z)`.
pub fn mittag_leffler_half(z: f64) -> f64 {
    (z * z).exp() * erf::erfc(-z)
}

/// Natural log of `E_{1/2}(z)` for `z ≥ 0`, finite far beyond the f64 range of
/// the function itself.
pub fn ln_mittag_leffler_half(z: f64) -> f64 {
    assert!(z >= 0.0, "ln E_1/2 implemented for z >= 0");
    z * z + erf::erfc(-z).ln()
}

/// `ln(e^a + e^b)` without overflow.
pub fn log_add_exp(a: f64, b: f64) -> f64 {
    if a == f64::NEG_INFINITY {
        return b;
    }
    if b == f64::NEG_INFINITY {
        return a;
    }
    let m = a.max(b);
    m + ((a - m).exp() + (b - m).exp()).ln()
}

/// Surface area of the unit sphere in `R^d`.
pub fn unit_sphere_area(d: usize) -> f64 {
    let h = d as f64 / 2.0;
    2.0 * std::f64::consts::PI.powf(h) / gamma::gamma(h)
}
