//! Log-gamma and log-factorial in natural log space.
//!
//! Stationary distributions at scale `n` involve factorials of counts up to
//! `n * x`, which overflow f64 long before the scales of interest. Everything
//! downstream therefore works with `ln Γ`.

/// Lanczos coefficients, g = 7, 9 terms. Relative error below 2e-10 on the
/// positive real axis.
const LANCZOS_G: f64 = 7.0;
#[allow(clippy::excessive_precision)]
const LANCZOS_COEF: [f64; 9] = [
    0.999_999_999_999_809_93,
    676.520_368_121_885_1,
    -1_259.139_216_722_402_8,
    771.323_428_777_653_13,
    -176.615_029_162_140_6,
    12.507_343_278_686_905,
    -0.138_571_095_265_720_12,
    9.984_369_578_019_571_6e-6,
    1.505_632_735_149_311_6e-7,
];

/// Natural log of the gamma function for x > 0.
pub fn ln_gamma(x: f64) -> f64 {
    assert!(x > 0.0, "ln_gamma requires a positive argument, got {x}");
    if x < 0.5 {
        // Reflection: Γ(x)Γ(1−x) = π / sin(πx)
        let pi = std::f64::consts::PI;
        return (pi / (pi * x).sin()).ln() - ln_gamma(1.0 - x);
    }
    let x = x - 1.0;
    let mut acc = LANCZOS_COEF[0];
    for (i, &c) in LANCZOS_COEF.iter().enumerate().skip(1) {
        acc += c / (x + i as f64);
    }
    let t = x + LANCZOS_G + 0.5;
    0.5 * (2.0 * std::f64::consts::PI).ln() + (x + 0.5) * t.ln() - t + acc.ln()
}

/// ln(k!) for nonnegative integer counts. Exact table for k <= 20 (where k!
/// fits in the f64 mantissa), Lanczos beyond.
pub fn ln_factorial(k: u64) -> f64 {
    const EXACT: [f64; 21] = [
        1.0,
        1.0,
        2.0,
        6.0,
        24.0,
        120.0,
        720.0,
        5040.0,
        40320.0,
        362880.0,
        3628800.0,
        39916800.0,
        479001600.0,
        6227020800.0,
        87178291200.0,
        1307674368000.0,
        20922789888000.0,
        355687428096000.0,
        6402373705728000.0,
        121645100408832000.0,
        2432902008176640000.0,
    ];
    if k <= 20 {
        EXACT[k as usize].ln()
    } else {
        ln_gamma(k as f64 + 1.0)
    }
}

/// The convex entropy kernel ℓ(z) = z ln z − z + 1 with ℓ(0) = 1 (the
/// 0·ln 0 = 0 convention).
pub fn entropy_kernel(z: f64) -> f64 {
    debug_assert!(z >= 0.0);
    if z == 0.0 {
        1.0
    } else {
        z * z.ln() - z + 1.0
    }
}
