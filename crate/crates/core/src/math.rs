//! Scalar special functions used by the output distributions and heads.
//!
//! Everything here is double precision. The normal CDF is accurate to a few
//! ulp (Cody's rational approximations for erf/erfc), which keeps the
//! truncated-Gaussian sampler and the quantile tests well away from being
//! approximation-limited.

/// ln(2π)/2, the Gaussian log-normalisation constant.
pub const HALF_LN_TWO_PI: f64 = 0.918_938_533_204_672_7;

/// 1/√(2π)
pub const INV_SQRT_TWO_PI: f64 = 0.398_942_280_401_432_7;

const INV_SQRT_PI: f64 = 0.564_189_583_547_756_3;

const FRAC_1_SQRT_2: f64 = std::f64::consts::FRAC_1_SQRT_2;

/// Overflow-safe softplus, log(1 + e^x).
pub fn softplus(x: f64) -> f64 {
    if x > 30.0 {
        x + (-x).exp().ln_1p()
    } else {
        x.exp().ln_1p()
    }
}

/// Derivative of softplus, the logistic function.
pub fn sigmoid(x: f64) -> f64 {
    if x >= 0.0 {
        1.0 / (1.0 + (-x).exp())
    } else {
        let e = x.exp();
        e / (1.0 + e)
    }
}

/// Standard normal density.
pub fn std_normal_pdf(x: f64) -> f64 {
    (-0.5 * x * x).exp() * INV_SQRT_TWO_PI
}

/// Log of the standard normal density.
pub fn std_normal_log_pdf(x: f64) -> f64 {
    -0.5 * x * x - HALF_LN_TWO_PI
}

/// Standard normal CDF, Φ(x) = erfc(-x/√2)/2.
pub fn std_normal_cdf(x: f64) -> f64 {
    0.5 * erfc(-x * FRAC_1_SQRT_2)
}

/// log Φ(x), safe far into the lower tail.
///
/// erfc carries Φ down to ~1e-305 (x ≈ -37.4); below that an asymptotic
/// expansion of the Mills ratio takes over.
pub fn std_normal_log_cdf(x: f64) -> f64 {
    if x > -37.0 {
        let p = std_normal_cdf(x);
        if p > 0.5 {
            // log(1 - Φ(-x)) evaluated as log1p for accuracy near 0
            (-std_normal_cdf(-x)).ln_1p()
        } else {
            p.ln()
        }
    } else {
        // Φ(x) ≈ φ(x)/(-x) · (1 - 1/x² + 3/x⁴ - 15/x⁶ + 105/x⁸)
        let inv2 = 1.0 / (x * x);
        let series = 1.0 + inv2 * (-1.0 + inv2 * (3.0 + inv2 * (-15.0 + inv2 * 105.0)));
        std_normal_log_pdf(x) - (-x).ln() + series.ln()
    }
}

/// Errors raised by the scalar domain checks.
#[derive(Debug, Clone, PartialEq)]
pub enum MathError {
    /// Argument outside the open unit interval.
    UnitIntervalViolation(f64),
}

impl std::fmt::Display for MathError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            MathError::UnitIntervalViolation(p) => {
                write!(f, "argument {p} must lie strictly inside (0, 1)")
            }
        }
    }
}

impl std::error::Error for MathError {}

/// Standard normal quantile Φ⁻¹(p), p in (0,1).
///
/// Acklam's rational approximation followed by one Newton step against the
/// high-accuracy CDF; |Φ(Φ⁻¹(p)) − p| stays below 1e-15.
pub fn std_normal_quantile(p: f64) -> Result<f64, MathError> {
    if !(p > 0.0 && p < 1.0) {
        return Err(MathError::UnitIntervalViolation(p));
    }
    let x = acklam_quantile(p);
    // Newton refinement: x ← x − (Φ(x) − p)/φ(x)
    let refined = x - (std_normal_cdf(x) - p) / std_normal_pdf(x);
    Ok(if refined.is_finite() { refined } else { x })
}

fn acklam_quantile(p: f64) -> f64 {
    const A: [f64; 6] = [
        -3.969683028665376e+01,
        2.209460984245205e+02,
        -2.759285104469687e+02,
        1.383577518672690e+02,
        -3.066479806614716e+01,
        2.506628277459239e+00,
    ];
    const B: [f64; 5] = [
        -5.447609879822406e+01,
        1.615858368580409e+02,
        -1.556989798598866e+02,
        6.680131188771972e+01,
        -1.328068155288572e+01,
    ];
    const C: [f64; 6] = [
        -7.784894002430293e-03,
        -3.223964580411365e-01,
        -2.400758277161838e+00,
        -2.549732539343734e+00,
        4.374664141464968e+00,
        2.938163982698783e+00,
    ];
    const D: [f64; 4] = [
        7.784695709041462e-03,
        3.224671290700398e-01,
        2.445134137142996e+00,
        3.754408661907416e+00,
    ];
    const P_LOW: f64 = 0.02425;

    if p < P_LOW {
        // the polynomial ratio is itself negative in the lower tail
        let q = (-2.0 * p.ln()).sqrt();
        (((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else if p > 1.0 - P_LOW {
        let q = (-2.0 * (1.0 - p).ln()).sqrt();
        -(((((C[0] * q + C[1]) * q + C[2]) * q + C[3]) * q + C[4]) * q + C[5])
            / ((((D[0] * q + D[1]) * q + D[2]) * q + D[3]) * q + 1.0)
    } else {
        let q = p - 0.5;
        let r = q * q;
        (((((A[0] * r + A[1]) * r + A[2]) * r + A[3]) * r + A[4]) * r + A[5]) * q
            / (((((B[0] * r + B[1]) * r + B[2]) * r + B[3]) * r + B[4]) * r + 1.0)
    }
}

/// Error function via Cody's rational Chebyshev approximations (netlib CALERF).
pub fn erf(x: f64) -> f64 {
    let y = x.abs();
    if y <= 0.46875 {
        let z = if y > 1.11e-16 { y * y } else { 0.0 };
        let mut num = ERF_A[4] * z;
        let mut den = z;
        for i in 0..3 {
            num = (num + ERF_A[i]) * z;
            den = (den + ERF_B[i]) * z;
        }
        x * (num + ERF_A[3]) / (den + ERF_B[3])
    } else if x < 0.0 {
        erfc_large(y) - 1.0
    } else {
        1.0 - erfc_large(y)
    }
}

/// Complementary error function, accurate for large arguments.
pub fn erfc(x: f64) -> f64 {
    if x.abs() <= 0.46875 {
        1.0 - erf(x)
    } else if x < 0.0 {
        2.0 - erfc_large(-x)
    } else {
        erfc_large(x)
    }
}

const ERF_A: [f64; 5] = [
    3.16112374387056560e+00,
    1.13864154151050156e+02,
    3.77485237685302021e+02,
    3.20937758913846947e+03,
    1.85777706184603153e-01,
];
const ERF_B: [f64; 4] = [
    2.36012909523441209e+01,
    2.44024637934444173e+02,
    1.28261652607737228e+03,
    2.84423683343917062e+03,
];
const ERF_C: [f64; 9] = [
    5.64188496988670089e-01,
    8.88314979438837594e+00,
    6.61191906371416295e+01,
    2.98635138197400131e+02,
    8.81952221241769090e+02,
    1.71204761263407058e+03,
    2.05107837782607147e+03,
    1.23033935479799725e+03,
    2.15311535474403846e-08,
];
const ERF_D: [f64; 8] = [
    1.57449261107098347e+01,
    1.17693950891312499e+02,
    5.37181101862009858e+02,
    1.62138957456669019e+03,
    3.29079923573345963e+03,
    4.36261909014324716e+03,
    3.43936767414372164e+03,
    1.23033935480374942e+03,
];
const ERF_P: [f64; 6] = [
    3.05326634961232344e-01,
    3.60344899949804439e-01,
    1.25781726111229246e-01,
    1.60837851487422766e-02,
    6.58749161529837803e-04,
    1.63153871373020978e-02,
];
const ERF_Q: [f64; 5] = [
    2.56852019228982242e+00,
    1.87295284992346047e+00,
    5.27905102951428412e-01,
    6.05183413124413191e-02,
    2.33520497626869185e-03,
];

// erfc(y) for y >= 0.46875
fn erfc_large(y: f64) -> f64 {
    let result = if y <= 4.0 {
        let mut num = ERF_C[8] * y;
        let mut den = y;
        for i in 0..7 {
            num = (num + ERF_C[i]) * y;
            den = (den + ERF_D[i]) * y;
        }
        (num + ERF_C[7]) / (den + ERF_D[7])
    } else if y < 26.543 {
        let z = 1.0 / (y * y);
        let mut num = ERF_P[5] * z;
        let mut den = z;
        for i in 0..4 {
            num = (num + ERF_P[i]) * z;
            den = (den + ERF_Q[i]) * z;
        }
        let r = z * (num + ERF_P[4]) / (den + ERF_Q[4]);
        (INV_SQRT_PI - r) / y
    } else {
        return 0.0;
    };
    // split the exponential so exp(-y²) keeps full precision
    let ysq = (y * 16.0).trunc() / 16.0;
    let del = (y - ysq) * (y + ysq);
    (-ysq * ysq).exp() * (-del).exp() * result
}

/// log Γ(x) for x > 0, Lanczos approximation (g = 7, 9 terms).
pub fn ln_gamma(x: f64) -> f64 {
    const COEF: [f64; 9] = [
        0.99999999999980993,
        676.5203681218851,
        -1259.1392167224028,
        771.32342877765313,
        -176.61502916214059,
        12.507343278686905,
        -0.13857109526572012,
        9.9843695780195716e-6,
        1.5056327351493116e-7,
    ];
    if x < 0.5 {
        // reflection: Γ(x)Γ(1−x) = π/sin(πx)
        let s = (std::f64::consts::PI * x).sin();
        std::f64::consts::PI.ln() - s.abs().ln() - ln_gamma(1.0 - x)
    } else {
        let z = x - 1.0;
        let mut a = COEF[0];
        for (i, c) in COEF.iter().enumerate().skip(1) {
            a += c / (z + i as f64);
        }
        let t = z + 7.5;
        0.5 * (2.0 * std::f64::consts::PI).ln() + (z + 0.5) * t.ln() - t + a.ln()
    }
}

/// Digamma ψ(x) for x > 0: recurrence up to x ≥ 10, then asymptotic series.
pub fn digamma(x: f64) -> f64 {
    let mut x = x;
    let mut acc = 0.0;
    while x < 10.0 {
        acc -= 1.0 / x;
        x += 1.0;
    }
    let inv = 1.0 / x;
    let inv2 = inv * inv;
    acc + x.ln() - 0.5 * inv
        - inv2
            * (1.0 / 12.0
                - inv2
                    * (1.0 / 120.0
                        - inv2 * (1.0 / 252.0 - inv2 * (1.0 / 240.0 - inv2 / 132.0))))
}

/// Numerically stable log Σ exp(xs).
pub fn log_sum_exp(xs: &[f64]) -> f64 {
    let m = xs.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    if !m.is_finite() {
        return m;
    }
    let s: f64 = xs.iter().map(|&x| (x - m).exp()).sum();
    m + s.ln()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn softplus_symmetry_point() {
        assert!((softplus(0.0) - std::f64::consts::LN_2).abs() < 1e-15);
    }

    #[test]
    fn softplus_asymptote() {
        assert!((softplus(50.0) - 50.0).abs() < 1e-12);
    }

    #[test]
    fn softplus_negative_tail() {
        // log1p(exp(-20)) evaluated at 40-digit precision
        assert!((softplus(-20.0) - 2.0611536203143807e-9).abs() < 1e-22);
    }

    #[test]
    fn normal_cdf_center() {
        assert_eq!(std_normal_cdf(0.0), 0.5);
    }

    #[test]
    fn normal_cdf_reference_point() {
        // Φ(1.96) from a 40-digit erfc evaluation
        assert!((std_normal_cdf(1.96) - 0.9750021048517796).abs() < 1e-13);
    }

    #[test]
    fn normal_cdf_symmetry() {
        for &x in &[0.1, 0.77, 1.5, 2.5, 4.0, 7.5] {
            let s = std_normal_cdf(x) + std_normal_cdf(-x);
            assert!((s - 1.0).abs() < 1e-14, "x={x}: sum={s}");
        }
    }

    #[test]
    fn normal_cdf_tail_against_quadrature() {
        // trapezoid integration of φ over [-10, x] as an independent check
        for &x in &[-3.0, -1.0, 0.3, 2.2] {
            let n = 400_000;
            let lo = -10.0;
            let h = (x - lo) / n as f64;
            let mut acc = 0.5 * (std_normal_pdf(lo) + std_normal_pdf(x));
            for i in 1..n {
                acc += std_normal_pdf(lo + h * i as f64);
            }
            let quad = acc * h;
            assert!(
                (std_normal_cdf(x) - quad).abs() < 1e-10,
                "x={x}: cdf={} quad={}",
                std_normal_cdf(x),
                quad
            );
        }
    }

    #[test]
    fn quantile_median() {
        assert_eq!(std_normal_quantile(0.5).unwrap(), 0.0);
    }

    #[test]
    fn quantile_upper_quartile() {
        // bisection on std_normal_cdf agrees with 0.6744897501960817
        assert!((std_normal_quantile(0.75).unwrap() - 0.6744897501960817).abs() < 1e-12);
    }

    #[test]
    fn quantile_bisection_oracle() {
        // independent route: bisect the CDF and compare
        for &p in &[0.001, 0.1, 0.3, 0.75, 0.999] {
            let (mut lo, mut hi) = (-10.0, 10.0);
            for _ in 0..80 {
                let mid = 0.5 * (lo + hi);
                if std_normal_cdf(mid) < p {
                    lo = mid;
                } else {
                    hi = mid;
                }
            }
            let q = std_normal_quantile(p).unwrap();
            assert!((q - 0.5 * (lo + hi)).abs() < 1e-11, "p={p}");
        }
    }

    #[test]
    fn quantile_roundtrip() {
        let mut x = -6.0;
        while x <= 6.0 {
            let p = std_normal_cdf(x);
            let back = std_normal_quantile(p).unwrap();
            // above x ≈ 5.2, p sits within ulp(1)/φ(x) > 1e-9 of 1, so the
            // recoverable accuracy is limited by the f64 representation of p
            let tol = if x <= 5.0 { 1e-9 } else { 0.5 * f64::EPSILON / std_normal_pdf(x) + 1e-9 };
            assert!((back - x).abs() < tol, "x={x} back={back}");
            assert!((std_normal_cdf(back) - p).abs() < 1e-12);
            x += 0.125;
        }
    }

    #[test]
    fn quantile_domain_errors() {
        assert!(std_normal_quantile(0.0).is_err());
        assert!(std_normal_quantile(1.0).is_err());
        assert!(std_normal_quantile(-0.2).is_err());
        assert!(std_normal_quantile(f64::NAN).is_err());
    }

    #[test]
    fn log_cdf_matches_direct_and_tail() {
        for &x in &[-5.0, -1.0, 0.0, 2.0] {
            assert!((std_normal_log_cdf(x) - std_normal_cdf(x).ln()).abs() < 1e-12);
        }
        // deep tail: compare against the Mills-ratio bound φ(x)/|x| · (1-1/x²) < Φ < φ(x)/|x|
        for &x in &[-40.0, -60.0, -120.0] {
            let lo = std_normal_log_pdf(x) - (-x).ln() + (1.0 - 1.0 / (x * x)).ln();
            let hi = std_normal_log_pdf(x) - (-x).ln();
            let v = std_normal_log_cdf(x);
            assert!(v > lo - 1e-9 && v < hi + 1e-9, "x={x} v={v} lo={lo} hi={hi}");
        }
    }

    #[test]
    fn ln_gamma_known_values() {
        // Γ(0.5)=√π, Γ(1)=1, Γ(2.5)=0.75√π, Γ(6)=120
        let pi = std::f64::consts::PI;
        assert!((ln_gamma(0.5) - 0.5 * pi.ln()).abs() < 1e-12);
        assert!(ln_gamma(1.0).abs() < 1e-13);
        assert!((ln_gamma(2.5) - (0.75 * pi.sqrt()).ln()).abs() < 1e-13);
        assert!((ln_gamma(6.0) - 120f64.ln()).abs() < 1e-12);
    }

    #[test]
    fn digamma_known_values() {
        const EULER_GAMMA: f64 = 0.5772156649015329;
        assert!((digamma(1.0) + EULER_GAMMA).abs() < 1e-12);
        // ψ(2) = 1 − γ
        assert!((digamma(2.0) - (1.0 - EULER_GAMMA)).abs() < 1e-12);
        // ψ(0.5) = −γ − 2 ln 2
        assert!((digamma(0.5) + EULER_GAMMA + 2.0 * std::f64::consts::LN_2).abs() < 1e-12);
    }

    #[test]
    fn log_sum_exp_extreme_inputs() {
        let v = log_sum_exp(&[-1000.0, -1001.0]);
        let expect = -1000.0 + (1.0 + (-1.0f64).exp()).ln();
        assert!((v - expect).abs() < 1e-12);
        assert_eq!(log_sum_exp(&[f64::NEG_INFINITY, f64::NEG_INFINITY]), f64::NEG_INFINITY);
    }
}
