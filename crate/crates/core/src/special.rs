//! Special functions not covered by `statrs`: complex log-gamma, the scaled
//! complementary error function, trigamma and tail-accurate normal helpers.

use num_complex::Complex64;
use statrs::function::erf::erfc;
use std::f64::consts::{FRAC_1_SQRT_2, PI};

pub use statrs::function::gamma::{digamma, ln_gamma};

const LN_SQRT_2PI: f64 = 0.918_938_533_204_672_8;

pub fn norm_pdf(x: f64) -> f64 {
    (-0.5 * x * x - LN_SQRT_2PI).exp()
}

pub fn norm_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// Upper tail `1 − Φ(x)`, accurate for large positive `x`.
pub fn norm_sf(x: f64) -> f64 {
    0.5 * erfc(x * FRAC_1_SQRT_2)
}

/// `exp(x²)·erfc(x)` for `x ≥ 0`.
pub fn erfcx(x: f64) -> f64 {
    debug_assert!(x >= 0.0);
    if x < 26.0 {
        (x * x).exp() * erfc(x)
    } else {
        let x2 = x * x;
        let inv = 1.0 / (2.0 * x2);
        let series = 1.0 - inv + 3.0 * inv * inv - 15.0 * inv * inv * inv;
        series / (x * PI.sqrt())
    }
}

/// `log Φ(x)` without underflow in the lower tail.
pub fn log_norm_cdf(x: f64) -> f64 {
    if x > -5.0 {
        norm_cdf(x).ln()
    } else {
        (0.5 * erfcx(-x * FRAC_1_SQRT_2)).ln() - 0.5 * x * x
    }
}

/// Inverse Mills ratio `φ(x)/Φ(x)`, stable for very negative `x`.
pub fn inv_mills(x: f64) -> f64 {
    if x > -5.0 {
        norm_pdf(x) / norm_cdf(x)
    } else {
        (2.0 / PI).sqrt() / erfcx(-x * FRAC_1_SQRT_2)
    }
}

/// Standard normal quantile, full double precision on `(0, 1)`.
///
/// Acklam's rational approximation followed by one Halley step. For `p`
/// close to one the work is done on the upper tail so that tiny tail masses
/// keep their relative accuracy.
pub fn norm_quantile(p: f64) -> f64 {
    if p <= 0.0 {
        return f64::NEG_INFINITY;
    }
    if p >= 1.0 {
        return f64::INFINITY;
    }
    if p > 0.5 {
        return -lower_quantile(1.0 - p);
    }
    lower_quantile(p)
}

/// Upper-tail quantile: the `x` with `1 − Φ(x) = q`.
pub fn norm_isf(q: f64) -> f64 {
    if q <= 0.0 {
        return f64::INFINITY;
    }
    if q >= 1.0 {
        return f64::NEG_INFINITY;
    }
    if q > 0.5 {
        return lower_quantile(1.0 - q);
    }
    -lower_quantile(q)
}

// p ≤ 0.5 only.
fn lower_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969_683_028_665_376e1,
        2.209_460_984_245_205e2,
        -2.759_285_104_469_687e2,
        1.383_577_518_672_69e2,
        -3.066_479_806_614_716e1,
        2.506_628_277_459_239,
    ];
    const B: [f64; 5] = [
        -5.447_609_879_822_406e1,
        1.615_858_368_580_409e2,
        -1.556_989_798_598_866e2,
        6.680_131_188_771_972e1,
        -1.328_068_155_288_572e1,
    ];
    const C: [f64; 6] = [
        -7.784_894_002_430_293e-3,
        -3.223_964_580_411_365e-1,
        -2.400_758_277_161_838,
        -2.549_732_539_343_734,
        4.374_664_141_464_968,
        2.938_163_982_698_783,
    ];
    const D: [f64; 4] = [
        7.784_695_709_041_462e-3,
        3.224_671_290_700_398e-1,
        2.445_134_137_142_996,
        3.754_408_661_907_416,
    ];
    let x = if p < 0.02425 {
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    };
    // Halley refinement; relative error of the residual stays small because
    // the lower tail of Φ is computed from erfc.
    let e = norm_cdf(x) - p;
    let u = e * (2.0 * PI).sqrt() * (0.5 * x * x).exp();
    x - u / (1.0 + 0.5 * x * u)
}

/// Principal-branch `ln Γ(z)` for `Re z > 0`, continuous along vertical lines.
pub fn ln_gamma_complex(z: Complex64) -> Complex64 {
    debug_assert!(z.re > 0.0);
    // Shift right until Stirling's series is accurate, undoing the shift with
    // principal logs of arguments in the right half-plane.
    let mut shift = Complex64::new(0.0, 0.0);
    let mut w = z;
    while w.re < 15.0 {
        shift += w.ln();
        w += 1.0;
    }
    const COEF: [f64; 8] = [
        1.0 / 12.0,
        -1.0 / 360.0,
        1.0 / 1260.0,
        -1.0 / 1680.0,
        1.0 / 1188.0,
        -691.0 / 360_360.0,
        1.0 / 156.0,
        -3617.0 / 122_400.0,
    ];
    let inv = w.inv();
    let inv2 = inv * inv;
    let mut series = Complex64::new(0.0, 0.0);
    let mut pow = inv;
    for c in COEF {
        series += pow * c;
        pow *= inv2;
    }
    (w - 0.5) * w.ln() - w + LN_SQRT_2PI + series - shift
}

/// Trigamma `ψ′(x)` for `x > 0`.
pub fn trigamma(x: f64) -> f64 {
    debug_assert!(x > 0.0);
    let mut acc = 0.0;
    let mut y = x;
    while y < 20.0 {
        acc += 1.0 / (y * y);
        y += 1.0;
    }
    let inv = 1.0 / y;
    let inv2 = inv * inv;
    let tail = inv
        + 0.5 * inv2
        + inv * inv2 * (1.0 / 6.0 - inv2 * (1.0 / 30.0 - inv2 * (1.0 / 42.0 - inv2 * (1.0 / 30.0 - inv2 * 5.0 / 66.0))));
    acc + tail
}

/// `ln B(a, b)` for positive reals.
pub fn ln_beta_real(a: f64, b: f64) -> f64 {
    ln_gamma(a) + ln_gamma(b) - ln_gamma(a + b)
}

/// `|Γ(1/2 + i x)|² = π / cosh(π x)`.
pub fn abs_gamma_half_sq(x: f64) -> f64 {
    PI / (PI * x).cosh()
}
