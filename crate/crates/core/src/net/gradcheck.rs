//! Finite-difference verification of the analytic gradients.
//!
//! Central differences (ε = 1e-5) over every flat parameter coordinate of a
//! tiny network, repeated for each output family and for the feed-forward
//! baseline. This is the recurrent module's acceptance gate: max relative
//! error < 1e-4.

use rand::Rng;

use super::ffn::{ffn_gradients, init_ffn, FfnWeights};
use super::{batch_nll, compute_gradients, init_network, InputLayout, LossRange, NetError};
use crate::data::{SampleWindow, COVARIATE_COLS, WINDOW_LEN};
use crate::distributions::Family;
use crate::linalg::Mat;
use crate::rng::substream;

pub const FD_EPSILON: f64 = 1e-5;
pub const REL_TOLERANCE: f64 = 1e-4;

#[derive(Debug, Clone)]
pub struct GradCheckCase {
    pub name: String,
    pub params_checked: usize,
    pub max_rel_err: f64,
}

#[derive(Debug, Clone)]
pub struct GradCheckReport {
    pub cases: Vec<GradCheckCase>,
}

impl GradCheckReport {
    pub fn max_rel_err(&self) -> f64 {
        self.cases.iter().map(|c| c.max_rel_err).fold(0.0, f64::max)
    }

    pub fn passed(&self) -> bool {
        self.max_rel_err() < REL_TOLERANCE
    }
}

/// Relative error with an absolute floor for near-zero coordinate pairs.
fn rel_err(analytic: f64, fd: f64) -> f64 {
    let denom = analytic.abs().max(fd.abs());
    if denom < 1e-8 {
        // both effectively zero: require absolute agreement instead
        if (analytic - fd).abs() < 1e-8 {
            0.0
        } else {
            f64::INFINITY
        }
    } else {
        (analytic - fd).abs() / denom
    }
}

/// Small synthetic windows with plausible magnitudes, for gradient checking.
pub fn synthetic_windows(n: usize, n_systems: usize, seed: u64) -> Vec<SampleWindow> {
    let mut rng = substream(seed, "gradcheck-windows");
    (0..n)
        .map(|i| {
            let system_index = (i * (n_systems.max(2) - 1)) % n_systems;
            let targets: Vec<f64> =
                (0..WINDOW_LEN).map(|_| rng.gen_range(0.0..2000.0)).collect();
            let scale = crate::data::scale_factor(&targets[..48]);
            let covariates = Mat::from_fn(WINDOW_LEN, COVARIATE_COLS, |_, c| {
                if c < 3 {
                    rng.gen_range(0.0..2.0)
                } else {
                    rng.gen_range(-1.0..1.0)
                }
            });
            SampleWindow {
                system_id: format!("g{system_index}"),
                system_index,
                t0: chrono::DateTime::from_timestamp(1_609_459_200 + i as i64 * 86_400, 0)
                    .unwrap(),
                targets,
                observed: vec![true; WINDOW_LEN],
                covariates,
                static_features: (0..4).map(|_| rng.gen_range(-1.5..1.5)).collect(),
                scale,
                daylight: (0..WINDOW_LEN).map(|t| (8..18).contains(&(t % 24))).collect(),
                phys24_raw: vec![0.0; WINDOW_LEN],
                nominal_power_w: 2000.0,
            }
        })
        .collect()
}

fn check_recurrent(family: Family, mixture_k: usize, seed: u64) -> Result<GradCheckCase, NetError> {
    let layout = InputLayout {
        use_physical: true,
        use_static: true,
        static_width: 4,
        use_embedding: true,
        embedding_dim: 3,
    };
    let n_systems = 3;
    let mut rng = substream(seed, "gradcheck-init");
    let weights = init_network(4, 2, &layout, family, mixture_k, n_systems, &mut rng);
    let windows = synthetic_windows(2, n_systems, seed);
    let refs: Vec<&SampleWindow> = windows.iter().collect();

    let (_, grad) = compute_gradients(&refs, &weights, &layout, LossRange::ForecastOnly)?;
    let analytic = grad.flatten();
    let mut flat = weights.flatten();
    let mut max_err: f64 = 0.0;
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + FD_EPSILON;
        let mut wp = weights.clone();
        wp.assign_flat(&flat);
        let up = batch_nll(&refs, &wp, &layout, LossRange::ForecastOnly)?;
        flat[i] = orig - FD_EPSILON;
        wp.assign_flat(&flat);
        let down = batch_nll(&refs, &wp, &layout, LossRange::ForecastOnly)?;
        flat[i] = orig;
        let fd = (up - down) / (2.0 * FD_EPSILON);
        max_err = max_err.max(rel_err(analytic[i], fd));
    }
    let name = match (family, mixture_k) {
        (Family::Gaussian, 1) => "gaussian".to_string(),
        (Family::Student, 1) => "student".to_string(),
        (Family::PosGaussian, 1) => "pos_gaussian".to_string(),
        (f, k) => format!("{f:?}_k{k}").to_lowercase(),
    };
    Ok(GradCheckCase { name, params_checked: flat.len(), max_rel_err: max_err })
}

fn check_ffn(seed: u64) -> Result<GradCheckCase, NetError> {
    let mut rng = substream(seed, "gradcheck-ffn-init");
    let weights = init_ffn(6, Family::PosGaussian, 2, &mut rng);
    let windows = synthetic_windows(2, 2, seed);
    let refs: Vec<&SampleWindow> = windows.iter().collect();

    let (_, grad) = ffn_gradients(&refs, &weights)?;
    let analytic = grad.flatten();
    let mut flat = weights.flatten();
    let mut max_err: f64 = 0.0;
    let nll_of = |w: &FfnWeights| -> Result<f64, NetError> {
        let mut acc = 0.0;
        for win in &refs {
            acc += super::ffn::ffn_nll(win, w)?;
        }
        Ok(acc / refs.len() as f64)
    };
    for i in 0..flat.len() {
        let orig = flat[i];
        flat[i] = orig + FD_EPSILON;
        let mut wp = weights.clone();
        wp.assign_flat(&flat);
        let up = nll_of(&wp)?;
        flat[i] = orig - FD_EPSILON;
        wp.assign_flat(&flat);
        let down = nll_of(&wp)?;
        flat[i] = orig;
        let fd = (up - down) / (2.0 * FD_EPSILON);
        max_err = max_err.max(rel_err(analytic[i], fd));
    }
    Ok(GradCheckCase { name: "ffn".into(), params_checked: flat.len(), max_rel_err: max_err })
}

/// Runs the full finite-difference suite: the four head families on the
/// recurrent network plus the feed-forward baseline.
pub fn run_gradient_check(seed: u64) -> Result<GradCheckReport, NetError> {
    let cases = vec![
        check_recurrent(Family::Gaussian, 1, seed)?,
        check_recurrent(Family::Student, 1, seed.wrapping_add(1))?,
        check_recurrent(Family::PosGaussian, 1, seed.wrapping_add(2))?,
        check_recurrent(Family::PosGaussian, 3, seed.wrapping_add(3))?,
        check_ffn(seed.wrapping_add(4))?,
    ];
    Ok(GradCheckReport { cases })
}
