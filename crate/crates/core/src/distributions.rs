//! Output probability families: Gaussian, Student-t, positive (zero-truncated)
//! Gaussian, and mixtures of one family, plus the projection heads that map a
//! recurrent hidden state to distribution parameters.
//!
//! The positive Gaussian is the distinguishing output component: a Gaussian
//! truncated from below at 0, with density
//!
//! ```text
//! p(z | μ, σ) = φ((z−μ)/σ) / (σ · (1 − Φ(−μ/σ)))      for z ≥ 0
//! ```
//!
//! sampled by inverse-CDF (Smirnov) transform of a uniform draw.

use serde::{Deserialize, Serialize};

use crate::linalg::{dot, Mat};
use crate::math::{
    digamma, log_sum_exp, ln_gamma, sigmoid, softplus, std_normal_cdf, std_normal_log_cdf,
    std_normal_log_pdf, std_normal_quantile,
};

/// Floor added to every σ head output; keeps likelihoods finite when the
/// optimizer pushes a component onto a single point.
pub const SIGMA_FLOOR: f64 = 1e-6;

/// Lower bound for the Student-t degrees of freedom (finite variance).
pub const NU_FLOOR: f64 = 2.0;

#[derive(Debug, Clone, PartialEq)]
pub enum DistError {
    NonPositiveSigma(f64),
    NegativeMu(f64),
    InvalidNu(f64),
    WeightsNotSimplex { sum: f64 },
    MixedFamilies,
    EmptyMixture,
    UnitIntervalViolation(f64),
    ShapeMismatch { expected: usize, got: usize },
}

impl std::fmt::Display for DistError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            DistError::NonPositiveSigma(s) => write!(f, "sigma must be > 0, got {s}"),
            DistError::NegativeMu(m) => write!(f, "positive Gaussian mu must be >= 0, got {m}"),
            DistError::InvalidNu(v) => write!(f, "degrees of freedom must be > 2, got {v}"),
            DistError::WeightsNotSimplex { sum } => {
                write!(f, "mixture weights must be nonnegative and sum to 1, got sum {sum}")
            }
            DistError::MixedFamilies => write!(f, "mixture components must share one family"),
            DistError::EmptyMixture => write!(f, "mixture needs at least one component"),
            DistError::UnitIntervalViolation(u) => {
                write!(f, "uniform draw {u} must lie strictly inside (0, 1)")
            }
            DistError::ShapeMismatch { expected, got } => {
                write!(f, "hidden state width {got} does not match head width {expected}")
            }
        }
    }
}

impl std::error::Error for DistError {}

/// Output distribution family tag.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Family {
    Gaussian,
    Student,
    PosGaussian,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct GaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct PositiveGaussianParams {
    pub mu: f64,
    pub sigma: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentTParams {
    pub mu: f64,
    pub sigma: f64,
    pub nu: f64,
}

/// Parameters of one mixture component.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "family", rename_all = "snake_case")]
pub enum ComponentParams {
    Gaussian(GaussianParams),
    Student(StudentTParams),
    PosGaussian(PositiveGaussianParams),
}

impl ComponentParams {
    pub fn family(&self) -> Family {
        match self {
            ComponentParams::Gaussian(_) => Family::Gaussian,
            ComponentParams::Student(_) => Family::Student,
            ComponentParams::PosGaussian(_) => Family::PosGaussian,
        }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        match *self {
            ComponentParams::Gaussian(GaussianParams { sigma, .. }) if sigma <= 0.0 => {
                Err(DistError::NonPositiveSigma(sigma))
            }
            ComponentParams::PosGaussian(PositiveGaussianParams { mu, sigma }) => {
                if sigma <= 0.0 {
                    Err(DistError::NonPositiveSigma(sigma))
                } else if mu < 0.0 {
                    Err(DistError::NegativeMu(mu))
                } else {
                    Ok(())
                }
            }
            ComponentParams::Student(StudentTParams { sigma, nu, .. }) => {
                if sigma <= 0.0 {
                    Err(DistError::NonPositiveSigma(sigma))
                } else if nu <= 2.0 {
                    Err(DistError::InvalidNu(nu))
                } else {
                    Ok(())
                }
            }
            _ => Ok(()),
        }
    }

    pub fn log_pdf(&self, z: f64) -> Result<f64, DistError> {
        self.validate()?;
        Ok(match *self {
            ComponentParams::Gaussian(p) => gaussian_log_pdf(z, p),
            ComponentParams::Student(p) => student_log_pdf(z, p),
            ComponentParams::PosGaussian(p) => pos_gaussian_log_pdf_unchecked(z, p),
        })
    }

    /// Inverse-CDF sample from one uniform draw in (0, 1).
    pub fn sample(&self, u: f64) -> Result<f64, DistError> {
        self.validate()?;
        if !(u > 0.0 && u < 1.0) {
            return Err(DistError::UnitIntervalViolation(u));
        }
        Ok(match *self {
            ComponentParams::Gaussian(p) => p.mu + p.sigma * std_normal_quantile(u).unwrap(),
            ComponentParams::Student(p) => p.mu + p.sigma * student_quantile(u, p.nu),
            ComponentParams::PosGaussian(p) => pos_gaussian_sample_unchecked(p, u),
        })
    }
}

/// Per-time-step output-head parameters: mixture weights plus one parameter
/// record per component, all of a single family.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MixtureParams {
    pub weights: Vec<f64>,
    pub components: Vec<ComponentParams>,
}

/// The head output consumed by the decoders; a mixture (K = 1 degenerates to
/// a single component with weight 1).
pub type DistributionParams = MixtureParams;

impl MixtureParams {
    pub fn single(component: ComponentParams) -> Self {
        MixtureParams { weights: vec![1.0], components: vec![component] }
    }

    pub fn validate(&self) -> Result<(), DistError> {
        if self.components.is_empty() {
            return Err(DistError::EmptyMixture);
        }
        if self.weights.len() != self.components.len() {
            return Err(DistError::ShapeMismatch {
                expected: self.components.len(),
                got: self.weights.len(),
            });
        }
        let sum: f64 = self.weights.iter().sum();
        if self.weights.iter().any(|&w| w < 0.0) || (sum - 1.0).abs() > 1e-9 {
            return Err(DistError::WeightsNotSimplex { sum });
        }
        let family = self.components[0].family();
        if self.components.iter().any(|c| c.family() != family) {
            return Err(DistError::MixedFamilies);
        }
        for c in &self.components {
            c.validate()?;
        }
        Ok(())
    }

    pub fn family(&self) -> Family {
        self.components[0].family()
    }
}

/// Log-density of a Gaussian location-scale family.
pub fn gaussian_log_pdf(z: f64, p: GaussianParams) -> f64 {
    let u = (z - p.mu) / p.sigma;
    std_normal_log_pdf(u) - p.sigma.ln()
}

/// Log-density of a Student-t location-scale family.
pub fn student_log_pdf(z: f64, p: StudentTParams) -> f64 {
    let u = (z - p.mu) / p.sigma;
    ln_gamma((p.nu + 1.0) / 2.0)
        - ln_gamma(p.nu / 2.0)
        - 0.5 * (p.nu * std::f64::consts::PI).ln()
        - p.sigma.ln()
        - 0.5 * (p.nu + 1.0) * (u * u / p.nu).ln_1p()
}

/// Log-density of the positive Gaussian (zero-truncated below).
///
/// Returns −∞ for z < 0. The log-denominator log(1 − Φ(−μ/σ)) = log Φ(μ/σ)
/// is evaluated through the tail-safe log-CDF.
pub fn pos_gaussian_log_pdf(z: f64, p: PositiveGaussianParams) -> Result<f64, DistError> {
    if p.sigma <= 0.0 {
        return Err(DistError::NonPositiveSigma(p.sigma));
    }
    Ok(pos_gaussian_log_pdf_unchecked(z, p))
}

fn pos_gaussian_log_pdf_unchecked(z: f64, p: PositiveGaussianParams) -> f64 {
    if z < 0.0 {
        return f64::NEG_INFINITY;
    }
    let u = (z - p.mu) / p.sigma;
    std_normal_log_pdf(u) - p.sigma.ln() - std_normal_log_cdf(p.mu / p.sigma)
}

/// Smirnov inverse-CDF sample of the positive Gaussian.
///
/// z = Φ⁻¹( Φ(−μ/σ) + u · (1 − Φ(−μ/σ)) ) · σ + μ, clamped at the support
/// edge to absorb rounding.
pub fn pos_gaussian_sample(p: PositiveGaussianParams, u: f64) -> Result<f64, DistError> {
    if p.sigma <= 0.0 {
        return Err(DistError::NonPositiveSigma(p.sigma));
    }
    if !(u > 0.0 && u < 1.0) {
        return Err(DistError::UnitIntervalViolation(u));
    }
    Ok(pos_gaussian_sample_unchecked(p, u))
}

fn pos_gaussian_sample_unchecked(p: PositiveGaussianParams, u: f64) -> f64 {
    let alpha = p.mu / p.sigma;
    // target probability mass: P = Φ(−α) + u·Φ(α); its complement Φ(α)(1−u)
    // is a plain product, so the upper branch keeps tail resolution
    let comp = std_normal_cdf(alpha) * (1.0 - u);
    let x = if comp < 0.5 {
        -std_normal_quantile(comp).unwrap()
    } else {
        let prob = std_normal_cdf(-alpha) + u * std_normal_cdf(alpha);
        std_normal_quantile(prob).unwrap()
    };
    (x * p.sigma + p.mu).max(0.0)
}

/// Analytic CDF of the positive Gaussian (used by tests and the KS checks).
pub fn pos_gaussian_cdf(z: f64, p: PositiveGaussianParams) -> f64 {
    if z < 0.0 {
        return 0.0;
    }
    let alpha = p.mu / p.sigma;
    let lower = std_normal_cdf(-alpha);
    ((std_normal_cdf((z - p.mu) / p.sigma) - lower) / (1.0 - lower)).clamp(0.0, 1.0)
}

/// Log-density of a mixture, via log-sum-exp over components.
pub fn mixture_log_pdf(z: f64, params: &MixtureParams) -> Result<f64, DistError> {
    params.validate()?;
    let mut terms = Vec::with_capacity(params.components.len());
    for (w, c) in params.weights.iter().zip(&params.components) {
        if *w == 0.0 {
            continue;
        }
        terms.push(w.ln() + c.log_pdf(z)?);
    }
    Ok(log_sum_exp(&terms))
}

/// Samples a mixture: component choice by inverse-CDF on the weights with
/// `u_select`, then the chosen component's inverse-CDF sampler with `u_value`.
pub fn mixture_sample(params: &MixtureParams, u_select: f64, u_value: f64) -> Result<f64, DistError> {
    params.validate()?;
    if !(u_select > 0.0 && u_select < 1.0) {
        return Err(DistError::UnitIntervalViolation(u_select));
    }
    let mut acc = 0.0;
    let mut idx = params.components.len() - 1;
    for (k, w) in params.weights.iter().enumerate() {
        acc += w;
        if u_select <= acc {
            idx = k;
            break;
        }
    }
    params.components[idx].sample(u_value)
}

/// Student-t quantile: bracketing bisection on the CDF, then Newton polish.
pub fn student_quantile(p: f64, nu: f64) -> f64 {
    if p == 0.5 {
        return 0.0;
    }
    // symmetric: solve for the upper half only
    if p < 0.5 {
        return -student_quantile(1.0 - p, nu);
    }
    let mut lo = 0.0;
    let mut hi = 1.0;
    while student_cdf(hi, nu) < p && hi < 1e12 {
        hi *= 2.0;
    }
    for _ in 0..70 {
        let mid = 0.5 * (lo + hi);
        if student_cdf(mid, nu) < p {
            lo = mid;
        } else {
            hi = mid;
        }
    }
    let mut x = 0.5 * (lo + hi);
    for _ in 0..2 {
        let pdf = student_log_pdf(x, StudentTParams { mu: 0.0, sigma: 1.0, nu }).exp();
        if pdf > 0.0 {
            x -= (student_cdf(x, nu) - p) / pdf;
        }
    }
    x
}

/// CDF of the standard Student-t via the regularized incomplete beta.
pub fn student_cdf(x: f64, nu: f64) -> f64 {
    let z = nu / (nu + x * x);
    let tail = 0.5 * betainc_reg(z, nu / 2.0, 0.5);
    if x >= 0.0 {
        1.0 - tail
    } else {
        tail
    }
}

/// Regularized incomplete beta I_x(a, b) via the standard continued fraction.
fn betainc_reg(x: f64, a: f64, b: f64) -> f64 {
    if x <= 0.0 {
        return 0.0;
    }
    if x >= 1.0 {
        return 1.0;
    }
    let ln_front = ln_gamma(a + b) - ln_gamma(a) - ln_gamma(b) + a * x.ln() + b * (1.0 - x).ln();
    if x < (a + 1.0) / (a + b + 2.0) {
        ln_front.exp() * betacf(x, a, b) / a
    } else {
        1.0 - ln_front.exp() * betacf(1.0 - x, b, a) / b
    }
}

// Lentz's continued fraction for the incomplete beta.
fn betacf(x: f64, a: f64, b: f64) -> f64 {
    const TINY: f64 = 1e-30;
    const EPS: f64 = 3e-16;
    let qab = a + b;
    let qap = a + 1.0;
    let qam = a - 1.0;
    let mut c = 1.0;
    let mut d = 1.0 - qab * x / qap;
    if d.abs() < TINY {
        d = TINY;
    }
    d = 1.0 / d;
    let mut h = d;
    for m in 1..300 {
        let m = m as f64;
        let m2 = 2.0 * m;
        let aa = m * (b - m) * x / ((qam + m2) * (a + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        h *= d * c;
        let aa = -(a + m) * (qab + m) * x / ((a + m2) * (qap + m2));
        d = 1.0 + aa * d;
        if d.abs() < TINY {
            d = TINY;
        }
        c = 1.0 + aa / c;
        if c.abs() < TINY {
            c = TINY;
        }
        d = 1.0 / d;
        let del = d * c;
        h *= del;
        if (del - 1.0).abs() < EPS {
            break;
        }
    }
    h
}

// ---------------------------------------------------------------------------
// Projection heads
// ---------------------------------------------------------------------------

/// Affine maps from the recurrent hidden state to distribution parameters.
///
/// Per component k: μ_k = w_mu[k]·h + b_mu[k] (softplus-wrapped for the
/// positive Gaussian), σ_k = softplus(w_sigma[k]·h + b_sigma[k]) + floor,
/// ν_k = 2 + softplus(affine) for Student. Mixture weights (K > 1) come from
/// a softmax over their own affine map.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ProjectionHead {
    pub family: Family,
    pub w_mu: Mat,
    pub b_mu: Vec<f64>,
    pub w_sigma: Mat,
    pub b_sigma: Vec<f64>,
    pub w_nu: Option<Mat>,
    pub b_nu: Option<Vec<f64>>,
    pub w_weights: Option<Mat>,
    pub b_weights: Option<Vec<f64>>,
}

impl ProjectionHead {
    pub fn zeros(family: Family, k: usize, hidden: usize) -> Self {
        let (w_nu, b_nu) = if family == Family::Student {
            (Some(Mat::zeros(k, hidden)), Some(vec![0.0; k]))
        } else {
            (None, None)
        };
        let (w_weights, b_weights) = if k > 1 {
            (Some(Mat::zeros(k, hidden)), Some(vec![0.0; k]))
        } else {
            (None, None)
        };
        ProjectionHead {
            family,
            w_mu: Mat::zeros(k, hidden),
            b_mu: vec![0.0; k],
            w_sigma: Mat::zeros(k, hidden),
            b_sigma: vec![0.0; k],
            w_nu,
            b_nu,
            w_weights,
            b_weights,
        }
    }

    pub fn mixture_size(&self) -> usize {
        self.b_mu.len()
    }

    pub fn hidden_size(&self) -> usize {
        self.w_mu.cols
    }
}

/// Pre-activation values saved by `apply_heads_cached` for the backward pass.
#[derive(Debug, Clone)]
pub struct HeadCache {
    pub pre_mu: Vec<f64>,
    pub pre_sigma: Vec<f64>,
    pub pre_nu: Vec<f64>,
}

/// Maps a hidden state through the projection head.
pub fn apply_heads(h: &[f64], head: &ProjectionHead) -> Result<DistributionParams, DistError> {
    apply_heads_cached(h, head).map(|(p, _)| p)
}

/// Same as [`apply_heads`] but also returns the pre-activations needed by
/// the analytic backward pass.
pub fn apply_heads_cached(
    h: &[f64],
    head: &ProjectionHead,
) -> Result<(DistributionParams, HeadCache), DistError> {
    if h.len() != head.hidden_size() {
        return Err(DistError::ShapeMismatch { expected: head.hidden_size(), got: h.len() });
    }
    let k = head.mixture_size();
    let mut pre_mu = Vec::with_capacity(k);
    let mut pre_sigma = Vec::with_capacity(k);
    let mut pre_nu = Vec::new();
    let mut components = Vec::with_capacity(k);
    for i in 0..k {
        let pm = dot(head.w_mu.row(i), h) + head.b_mu[i];
        let ps = dot(head.w_sigma.row(i), h) + head.b_sigma[i];
        pre_mu.push(pm);
        pre_sigma.push(ps);
        let sigma = softplus(ps) + SIGMA_FLOOR;
        components.push(match head.family {
            Family::Gaussian => ComponentParams::Gaussian(GaussianParams { mu: pm, sigma }),
            Family::PosGaussian => ComponentParams::PosGaussian(PositiveGaussianParams {
                mu: softplus(pm),
                sigma,
            }),
            Family::Student => {
                let pn = dot(head.w_nu.as_ref().unwrap().row(i), h) + head.b_nu.as_ref().unwrap()[i];
                pre_nu.push(pn);
                ComponentParams::Student(StudentTParams {
                    mu: pm,
                    sigma,
                    nu: NU_FLOOR + softplus(pn),
                })
            }
        });
    }
    let weights = if k == 1 {
        vec![1.0]
    } else {
        let mut logits: Vec<f64> =
            head.w_weights.as_ref().unwrap().matvec(h);
        for (l, b) in logits.iter_mut().zip(head.b_weights.as_ref().unwrap()) {
            *l += b;
        }
        softmax(&logits)
    };
    Ok((MixtureParams { weights, components }, HeadCache { pre_mu, pre_sigma, pre_nu }))
}

fn softmax(logits: &[f64]) -> Vec<f64> {
    let m = logits.iter().copied().fold(f64::NEG_INFINITY, f64::max);
    let exps: Vec<f64> = logits.iter().map(|&l| (l - m).exp()).collect();
    let sum: f64 = exps.iter().sum();
    exps.iter().map(|e| e / sum).collect()
}

// ---------------------------------------------------------------------------
// Analytic derivatives (negative log-likelihood w.r.t. head parameters)
// ---------------------------------------------------------------------------

/// Gradient of the per-step NLL with respect to the distribution parameters.
#[derive(Debug, Clone)]
pub struct ParamGrad {
    /// d NLL / d μ_k
    pub d_mu: Vec<f64>,
    /// d NLL / d σ_k
    pub d_sigma: Vec<f64>,
    /// d NLL / d ν_k (Student only; empty otherwise)
    pub d_nu: Vec<f64>,
    /// d NLL / d weight-logit_k (zero-length for K = 1)
    pub d_logits: Vec<f64>,
}

/// NLL of `z` under the mixture together with its parameter gradient.
pub fn mixture_nll_grad(z: f64, params: &MixtureParams) -> Result<(f64, ParamGrad), DistError> {
    params.validate()?;
    let k = params.components.len();
    let mut log_terms = Vec::with_capacity(k);
    let mut comp_logpdf = Vec::with_capacity(k);
    for (w, c) in params.weights.iter().zip(&params.components) {
        let lp = c.log_pdf(z)?;
        comp_logpdf.push(lp);
        log_terms.push(if *w > 0.0 { w.ln() + lp } else { f64::NEG_INFINITY });
    }
    let log_mix = log_sum_exp(&log_terms);
    let nll = -log_mix;

    // responsibilities r_k = w_k p_k / Σ w_j p_j
    let resp: Vec<f64> = log_terms.iter().map(|&lt| (lt - log_mix).exp()).collect();

    let mut d_mu = vec![0.0; k];
    let mut d_sigma = vec![0.0; k];
    let mut d_nu = Vec::new();
    for (i, c) in params.components.iter().enumerate() {
        let r = resp[i];
        match *c {
            ComponentParams::Gaussian(GaussianParams { mu, sigma }) => {
                let u = (z - mu) / sigma;
                d_mu[i] = -r * (u / sigma);
                d_sigma[i] = -r * ((u * u - 1.0) / sigma);
            }
            ComponentParams::PosGaussian(PositiveGaussianParams { mu, sigma }) => {
                let u = (z - mu) / sigma;
                let a = mu / sigma;
                // Mills-type ratio φ(a)/Φ(a), evaluated in log space
                let mills = (std_normal_log_pdf(a) - std_normal_log_cdf(a)).exp();
                d_mu[i] = -r * ((u - mills) / sigma);
                d_sigma[i] = -r * ((u * u - 1.0 + a * mills) / sigma);
            }
            ComponentParams::Student(StudentTParams { mu, sigma, nu }) => {
                let u = (z - mu) / sigma;
                let denom = nu + u * u;
                d_mu[i] = -r * ((nu + 1.0) * u / (sigma * denom));
                d_sigma[i] = -r * (-1.0 / sigma + (nu + 1.0) * u * u / (sigma * denom));
                let dlp_dnu = 0.5
                    * (digamma((nu + 1.0) / 2.0) - digamma(nu / 2.0) - 1.0 / nu
                        - (u * u / nu).ln_1p()
                        + (nu + 1.0) * u * u / (nu * denom));
                if d_nu.len() < k {
                    d_nu.resize(k, 0.0);
                }
                d_nu[i] = -r * dlp_dnu;
            }
        }
    }
    // weight logits: d NLL / d a_j = w_j − r_j (softmax-parametrized weights)
    let d_logits = if k > 1 {
        params.weights.iter().zip(&resp).map(|(w, r)| w - r).collect()
    } else {
        Vec::new()
    };
    Ok((nll, ParamGrad { d_mu, d_sigma, d_nu, d_logits }))
}

/// Back-propagates a [`ParamGrad`] through the head's affine + softplus maps.
///
/// Accumulates parameter gradients into `grad` (same shape as `head`) and the
/// hidden-state gradient into `dh`.
pub fn apply_heads_backward(
    head: &ProjectionHead,
    cache: &HeadCache,
    h: &[f64],
    pgrad: &ParamGrad,
    grad: &mut ProjectionHead,
    dh: &mut [f64],
) {
    let k = head.mixture_size();
    for i in 0..k {
        // μ chain: identity for Gaussian/Student, softplus for positive Gaussian
        let dpre_mu = match head.family {
            Family::PosGaussian => pgrad.d_mu[i] * sigmoid(cache.pre_mu[i]),
            _ => pgrad.d_mu[i],
        };
        // σ chain: softplus (+ constant floor)
        let dpre_sigma = pgrad.d_sigma[i] * sigmoid(cache.pre_sigma[i]);
        crate::linalg::axpy(dpre_mu, h, grad.w_mu.row_mut(i));
        grad.b_mu[i] += dpre_mu;
        crate::linalg::axpy(dpre_mu, head.w_mu.row(i), dh);
        crate::linalg::axpy(dpre_sigma, h, grad.w_sigma.row_mut(i));
        grad.b_sigma[i] += dpre_sigma;
        crate::linalg::axpy(dpre_sigma, head.w_sigma.row(i), dh);
        if head.family == Family::Student {
            let dpre_nu = pgrad.d_nu[i] * sigmoid(cache.pre_nu[i]);
            crate::linalg::axpy(dpre_nu, h, grad.w_nu.as_mut().unwrap().row_mut(i));
            grad.b_nu.as_mut().unwrap()[i] += dpre_nu;
            crate::linalg::axpy(dpre_nu, head.w_nu.as_ref().unwrap().row(i), dh);
        }
    }
    if k > 1 {
        let w_weights = head.w_weights.as_ref().unwrap();
        let gw = grad.w_weights.as_mut().unwrap();
        let gb = grad.b_weights.as_mut().unwrap();
        for i in 0..k {
            let dl = pgrad.d_logits[i];
            crate::linalg::axpy(dl, h, gw.row_mut(i));
            gb[i] += dl;
            crate::linalg::axpy(dl, w_weights.row(i), dh);
        }
    }
}
