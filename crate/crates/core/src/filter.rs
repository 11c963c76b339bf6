//! Scalar trackers for the fusion center: the recursive LMMSE filter that
//! treats the random measurement coefficient through its moments, and the
//! Kalman filter that is handed the realized gains.

use nalgebra::DVector;

use crate::error::{Error, Result};
use crate::model::{lambda_h, prior_variance_step, CollaborationScheme, SystemStatistics};

const COV_CLAMP: f64 = 1e-10;

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct FilterState {
    pub theta_hat: f64,
    /// Mean squared error of `theta_hat`.
    pub p: f64,
    /// Prior variance of the parameter at step `k`.
    pub s: f64,
    pub k: usize,
}

impl FilterState {
    /// `theta_hat = 0` with error equal to the prior variance `s0`.
    pub fn initial(stats: &SystemStatistics) -> Self {
        Self {
            theta_hat: 0.0,
            p: stats.s0,
            s: stats.s0,
            k: 0,
        }
    }
}

/// Moments of `y_k = u_k theta_k + v_k` for a fixed scheme.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct MeasurementMoments {
    pub mean_u: f64,
    pub cov_u: f64,
    pub cov_v: f64,
}

impl MeasurementMoments {
    /// No sensor transmits: the fusion center hears channel noise only.
    pub fn silent(stats: &SystemStatistics) -> Self {
        Self {
            mean_u: 0.0,
            cov_u: 0.0,
            cov_v: stats.sigma_sigma2,
        }
    }
}

/// `b^T M b` with `b = W^T a`.
fn projected_form(scheme: &CollaborationScheme, a: &DVector<f64>, m: &nalgebra::DMatrix<f64>) -> f64 {
    let b = scheme.matrix().transpose() * a;
    b.dot(&(m * &b))
}

/// `E[u] = g^T W h`,
/// `cov(u) = g^T W Sigma_h W^T g + tr(W Lambda_h W^T Sigma_g)` and
/// `cov(v) = tr(W Sigma_eps W^T Lambda_g) + sigma_kappa2 tr(Lambda_g) + sigma_sigma2`.
/// The covariance of `u` is summed from its nonnegative parts rather than
/// as `E[u^2] - E[u]^2`, which avoids cancellation.
pub fn measurement_moments(scheme: &CollaborationScheme, stats: &SystemStatistics) -> Result<MeasurementMoments> {
    let w = scheme.matrix();
    let g = &stats.g_mean;
    let mean_u = scheme.bilinear(g, &stats.h_mean);
    let lh = lambda_h(stats);
    let spread_h = projected_form(scheme, g, &stats.h_cov);
    let spread_g = ((&w * &lh * w.transpose()).component_mul(&stats.g_cov)).sum();
    let mut cov_u = spread_h + spread_g;
    if cov_u < 0.0 {
        if cov_u > -COV_CLAMP {
            cov_u = 0.0;
        } else {
            return Err(Error::InvalidStatistics(format!(
                "variance of the measurement coefficient is negative ({cov_u:e})"
            )));
        }
    }
    let eps_part = projected_form(scheme, g, &stats.eps_cov)
        + ((&w * &stats.eps_cov * w.transpose()).component_mul(&stats.g_cov)).sum();
    let cov_v = eps_part
        + stats.sigma_kappa2 * (g.norm_squared() + stats.g_cov.trace())
        + stats.sigma_sigma2;
    Ok(MeasurementMoments {
        mean_u,
        cov_u,
        cov_v,
    })
}

/// Prediction followed by a scalar correction with coefficient `coef` and
/// innovation noise `noise`.
fn correct(
    state: &FilterState,
    y: f64,
    coef: f64,
    noise: f64,
    stats: &SystemStatistics,
) -> Result<(FilterState, f64)> {
    let s = prior_variance_step(state.s, stats.alpha, stats.sigma_tau2);
    let pred = stats.alpha * state.theta_hat;
    let p_pred = stats.alpha * stats.alpha * state.p + stats.sigma_tau2;
    let gain = if coef == 0.0 {
        0.0
    } else {
        let den = coef * coef * p_pred + noise;
        if !(den > 0.0) {
            return Err(Error::ZeroDenominator);
        }
        p_pred * coef / den
    };
    let next = FilterState {
        theta_hat: pred + gain * (y - coef * pred),
        p: (1.0 - gain * coef) * p_pred,
        s,
        k: state.k + 1,
    };
    Ok((next, gain))
}

/// One step of the recursive LMMSE tracker given precomputed moments.
/// Returns the new state and the gain `d_k`.
pub fn rlmmse_update(
    state: &FilterState,
    y: f64,
    moments: &MeasurementMoments,
    stats: &SystemStatistics,
) -> Result<(FilterState, f64)> {
    let s_next = prior_variance_step(state.s, stats.alpha, stats.sigma_tau2);
    let noise = moments.cov_v + moments.cov_u * s_next;
    correct(state, y, moments.mean_u, noise, stats)
}

pub fn rlmmse_step(
    state: &FilterState,
    y: f64,
    scheme: &CollaborationScheme,
    stats: &SystemStatistics,
) -> Result<FilterState> {
    let moments = measurement_moments(scheme, stats)?;
    Ok(rlmmse_update(state, y, &moments, stats)?.0)
}

/// Coefficient `g^T W h` and noise power
/// `g^T W Sigma_eps W^T g + sigma_kappa2 g^T g + sigma_sigma2` for realized gains.
pub fn csi_measurement(
    scheme: &CollaborationScheme,
    h: &DVector<f64>,
    g: &DVector<f64>,
    stats: &SystemStatistics,
) -> (f64, f64) {
    let coef = scheme.bilinear(g, h);
    let noise = projected_form(scheme, g, &stats.eps_cov)
        + stats.sigma_kappa2 * g.norm_squared()
        + stats.sigma_sigma2;
    (coef, noise)
}

/// One Kalman step with realized gains. Returns the new state and the
/// gain `q_k`.
pub fn kalman_update(
    state: &FilterState,
    y: f64,
    coef: f64,
    noise: f64,
    stats: &SystemStatistics,
) -> Result<(FilterState, f64)> {
    correct(state, y, coef, noise, stats)
}

pub fn kalman_csi_step(
    state: &FilterState,
    y: f64,
    scheme: &CollaborationScheme,
    h: &DVector<f64>,
    g: &DVector<f64>,
    stats: &SystemStatistics,
) -> Result<FilterState> {
    let (coef, noise) = csi_measurement(scheme, h, g, stats);
    Ok(kalman_update(state, y, coef, noise, stats)?.0)
}

/// Error trajectory `P_0, ..., P_{k_max}` of the LMMSE tracker under a
/// fixed scheme, starting from `P_0 = s0`.
pub fn theoretical_p_trajectory(
    scheme: &CollaborationScheme,
    stats: &SystemStatistics,
    k_max: usize,
) -> Result<Vec<f64>> {
    theoretical_p_trajectory_from(scheme, stats, stats.s0, k_max)
}

pub fn theoretical_p_trajectory_from(
    scheme: &CollaborationScheme,
    stats: &SystemStatistics,
    p0: f64,
    k_max: usize,
) -> Result<Vec<f64>> {
    let moments = measurement_moments(scheme, stats)?;
    let mut state = FilterState {
        theta_hat: 0.0,
        p: p0,
        s: stats.s0,
        k: 0,
    };
    let mut out = Vec::with_capacity(k_max + 1);
    out.push(p0);
    for _ in 0..k_max {
        state = rlmmse_update(&state, 0.0, &moments, stats)?.0;
        out.push(state.p);
    }
    Ok(out)
}
