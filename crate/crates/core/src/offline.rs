//! Offline design of the collaboration matrix under expected-energy
//! constraints, and the steady-state error it achieves.

use std::fmt::Write as _;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{lambda_g, lambda_h, CollaborationScheme, SystemStatistics, Topology};
use crate::sdpsolve::{
    homogenize, project_feasible, recover_with_fallback, solve_sdp, NormalizationConstant,
    SdpOptions,
};
use crate::vectorize::{CoefficientAssembler, QuadraticCoefficients};

/// Knobs shared by every ratio solve.
#[derive(Debug, Clone, Copy, Default)]
pub struct SolveOptions {
    pub sdp: SdpOptions,
    pub normalization: NormalizationConstant,
}

/// Maximizer of `(a^T w)^2 / (w^T D w + const)` over the energy constraints.
#[derive(Debug, Clone)]
pub struct RatioSolution {
    pub w: DVector<f64>,
    /// Ratio evaluated at the recovered `w`.
    pub ratio: f64,
    /// Optimal value of the SDP relaxation.
    pub relaxation_bound: f64,
    pub rank_ratio: f64,
    /// Rank test failed and the top eigenvector was used.
    pub fallback: bool,
    /// Factor applied to pull `w` back inside the constraints (1 if none).
    pub repair_factor: f64,
    pub sdp_iterations: usize,
}

/// Homogenizes, solves, and recovers `w` for one set of coefficients.
/// A vanishing numerator short-circuits to `w = 0`.
pub fn solve_ratio(
    coef: &QuadraticCoefficients,
    stats: &SystemStatistics,
    opts: &SolveOptions,
) -> Result<RatioSolution> {
    let l = coef.len();
    if coef.numerator.amax() == 0.0 || l == 0 {
        return Ok(RatioSolution {
            w: DVector::zeros(l),
            ratio: 0.0,
            relaxation_bound: 0.0,
            rank_ratio: 0.0,
            fallback: false,
            repair_factor: 1.0,
            sdp_iterations: 0,
        });
    }
    let prob = homogenize(coef, stats, opts.normalization);
    let sol = solve_sdp(&prob, &opts.sdp)?;
    let rec = recover_with_fallback(&sol, &coef.numerator)?;
    let mut w = rec.w;
    let repair_factor = project_feasible(coef, stats, &mut w);
    if 1.0 - repair_factor * repair_factor > 1e-6 {
        log::warn!(
            "recovered weights violated an energy constraint; scaled by {repair_factor}"
        );
    }
    if rec.fallback {
        log::debug!(
            "relaxation bound {} vs recovered ratio {}",
            sol.objective,
            coef.ratio(&w)
        );
    }
    Ok(RatioSolution {
        ratio: coef.ratio(&w),
        w,
        relaxation_bound: sol.objective,
        rank_ratio: rec.rank_ratio,
        fallback: rec.fallback,
        repair_factor,
        sdp_iterations: sol.iterations,
    })
}

#[derive(Debug, Clone)]
pub struct OfflineSolution {
    pub scheme: CollaborationScheme,
    pub f_value: f64,
    /// Steady-state one-step prediction error.
    pub p_inf: f64,
    pub expected_costs: DVector<f64>,
    pub rank_ratio: f64,
    pub relaxation_bound: f64,
    pub fallback: bool,
}

impl OfflineSolution {
    /// Steady-state error after the measurement update.
    pub fn filtered_p_inf(&self, stats: &SystemStatistics) -> f64 {
        let c = self.scheme.bilinear(&stats.g_mean, &stats.h_mean);
        filtered_p_inf(self.p_inf, c, d_bar(&self.scheme, stats))
    }

    /// Text artifact: topology shape, index map, weights, and summary values.
    pub fn to_artifact(&self) -> String {
        let topo = self.scheme.topology();
        let mut out = String::new();
        let _ = writeln!(out, "m = {}", topo.m());
        let _ = writeln!(out, "n = {}", topo.n());
        let entries: Vec<String> = topo
            .index_map()
            .iter()
            .map(|(r, c)| format!("{r}:{c}"))
            .collect();
        let _ = writeln!(out, "index = {}", entries.join(","));
        let w: Vec<String> = self.scheme.weights().iter().map(|v| v.to_string()).collect();
        let _ = writeln!(out, "w = {}", w.join(","));
        let _ = writeln!(out, "f_value = {}", self.f_value);
        let _ = writeln!(out, "p_inf = {}", self.p_inf);
        out
    }
}

/// Contents of an offline artifact.
#[derive(Debug, Clone)]
pub struct OfflineArtifact {
    pub scheme: CollaborationScheme,
    pub f_value: f64,
    pub p_inf: f64,
}

pub fn parse_artifact(text: &str) -> Result<OfflineArtifact> {
    let mut fields = std::collections::HashMap::new();
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let (k, v) = line
            .split_once('=')
            .ok_or_else(|| Error::Config(format!("malformed artifact line: {line}")))?;
        fields.insert(k.trim().to_string(), v.trim().to_string());
    }
    let get = |k: &str| {
        fields
            .get(k)
            .ok_or_else(|| Error::Config(format!("artifact is missing `{k}`")))
    };
    let num = |k: &str| -> Result<f64> {
        get(k)?
            .parse()
            .map_err(|_| Error::Config(format!("artifact field `{k}` is not a number")))
    };
    let count = |k: &str| -> Result<usize> {
        get(k)?
            .parse()
            .map_err(|_| Error::Config(format!("artifact field `{k}` is not a count")))
    };
    let (m, n) = (count("m")?, count("n")?);
    let mut a = vec![false; m * n];
    let mut order = Vec::new();
    for item in get("index")?.split(',').filter(|s| !s.is_empty()) {
        let (r, c) = item
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("bad index entry `{item}`")))?;
        let r: usize = r.trim().parse().map_err(|_| Error::Config(format!("bad row `{r}`")))?;
        let c: usize = c.trim().parse().map_err(|_| Error::Config(format!("bad column `{c}`")))?;
        if r >= m || c >= n {
            return Err(Error::Config(format!("index entry {r}:{c} out of range")));
        }
        a[r * n + c] = true;
        order.push((r, c));
    }
    let topo = Topology::new(m, n, a)?;
    if topo.index_map() != order.as_slice() {
        return Err(Error::Config("index map is not in column-major order".into()));
    }
    let w: Vec<f64> = get("w")?
        .split(',')
        .filter(|s| !s.is_empty())
        .map(|s| s.trim().parse::<f64>())
        .collect::<std::result::Result<_, _>>()
        .map_err(|_| Error::Config("weights are not numbers".into()))?;
    let scheme = CollaborationScheme::new(Arc::new(topo), DVector::from_vec(w))?;
    Ok(OfflineArtifact {
        scheme,
        f_value: num("f_value")?,
        p_inf: num("p_inf")?,
    })
}

pub fn solve_offline(stats: &SystemStatistics, topo: &Arc<Topology>) -> Result<OfflineSolution> {
    solve_offline_with(stats, topo, &SolveOptions::default())
}

pub fn solve_offline_with(
    stats: &SystemStatistics,
    topo: &Arc<Topology>,
    opts: &SolveOptions,
) -> Result<OfflineSolution> {
    let coef = CoefficientAssembler::new(stats, topo)?.assemble(stats.s_inf());
    let sol = solve_ratio(&coef, stats, opts)?;
    if sol.fallback {
        log::warn!(
            "offline relaxation is not tight (rank ratio {:e}); bound {} vs achieved {}",
            sol.rank_ratio,
            sol.relaxation_bound,
            sol.ratio
        );
    }
    let scheme = CollaborationScheme::new(topo.clone(), sol.w)?;
    let f_value = f_of_w(&scheme, stats)?;
    let c = scheme.bilinear(&stats.g_mean, &stats.h_mean);
    let p_inf = riccati_p_inf(c, d_bar(&scheme, stats), stats.alpha, stats.sigma_tau2);
    let expected_costs = expected_costs(&scheme, stats, stats.s_inf());
    Ok(OfflineSolution {
        scheme,
        f_value,
        p_inf,
        expected_costs,
        rank_ratio: sol.rank_ratio,
        relaxation_bound: sol.relaxation_bound,
        fallback: sol.fallback,
    })
}

/// `tr(W D W^T C)` evaluated on the dense matrix.
fn trace_sandwich(w: &DMatrix<f64>, d: &DMatrix<f64>, c: &DMatrix<f64>) -> f64 {
    (w * d * w.transpose() * c).trace()
}

/// Steady-state ratio `(g^T W h)^2 / (tr(W X W^T Lambda_g) + sigma_kappa2 tr(Lambda_g) + sigma_sigma2)`
/// with `X = Lambda_h s_inf + Sigma_eps`.
pub fn f_of_w(scheme: &CollaborationScheme, stats: &SystemStatistics) -> Result<f64> {
    let w = scheme.matrix();
    let lg = lambda_g(stats);
    let x = lambda_h(stats) * stats.s_inf() + &stats.eps_cov;
    let num = scheme.bilinear(&stats.g_mean, &stats.h_mean).powi(2);
    let den = trace_sandwich(&w, &x, &lg) + stats.sigma_kappa2 * lg.trace() + stats.sigma_sigma2;
    if den <= 0.0 {
        if num == 0.0 {
            return Ok(0.0);
        }
        return Err(Error::ZeroDenominator);
    }
    Ok(num / den)
}

/// Effective noise power of the steady-state scalar model:
/// `cov(v) + cov(u) s_inf`.
pub fn d_bar(scheme: &CollaborationScheme, stats: &SystemStatistics) -> f64 {
    let w = scheme.matrix();
    let lg = lambda_g(stats);
    let s = stats.s_inf();
    let c = scheme.bilinear(&stats.g_mean, &stats.h_mean);
    trace_sandwich(&w, &stats.eps_cov, &lg)
        + stats.sigma_kappa2 * lg.trace()
        + stats.sigma_sigma2
        + trace_sandwich(&w, &lambda_h(stats), &lg) * s
        - c * c * s
}

/// Positive root of `c^2 P^2 + (d (1 - alpha^2) - sigma_tau2 c^2) P - sigma_tau2 d = 0`,
/// the fixed point of `P = alpha^2 P d / (c^2 P + d) + sigma_tau2`.
pub fn riccati_p_inf(c_bar: f64, d_bar: f64, alpha: f64, sigma_tau2: f64) -> f64 {
    let a2 = alpha * alpha;
    let c2 = c_bar * c_bar;
    if c2 == 0.0 {
        return sigma_tau2 / (1.0 - a2);
    }
    let b = d_bar * (1.0 - a2) - sigma_tau2 * c2;
    let disc = (b * b + 4.0 * c2 * sigma_tau2 * d_bar).sqrt();
    // Pick the cancellation-free form of the same root.
    if b >= 0.0 {
        2.0 * sigma_tau2 * d_bar / (b + disc)
    } else {
        (disc - b) / (2.0 * c2)
    }
}

/// Iterates `P <- alpha^2 P d / (c^2 P + d) + sigma_tau2` from `p0`.
pub fn riccati_fixed_point(
    c_bar: f64,
    d_bar: f64,
    alpha: f64,
    sigma_tau2: f64,
    p0: f64,
    iterations: usize,
) -> f64 {
    let mut p = p0;
    for _ in 0..iterations {
        p = alpha * alpha * p * d_bar / (c_bar * c_bar * p + d_bar) + sigma_tau2;
    }
    p
}

/// Error after the measurement update given the predicted error `p_pred`.
pub fn filtered_p_inf(p_pred: f64, c_bar: f64, d_bar: f64) -> f64 {
    let den = c_bar * c_bar * p_pred + d_bar;
    if den == 0.0 {
        0.0
    } else {
        p_pred * d_bar / den
    }
}

/// Expected transmission costs evaluated on the dense matrix at prior
/// variance `s`: `X_jj sum_{i != j} W(i, j)^2` for every sensor, plus
/// `e_i^T W X W^T e_i + sigma_kappa2` for the `M` transmitting sensors.
pub fn expected_costs(scheme: &CollaborationScheme, stats: &SystemStatistics, s: f64) -> DVector<f64> {
    let w = scheme.matrix();
    let (m, n) = (w.nrows(), w.ncols());
    let x = lambda_h(stats) * s + &stats.eps_cov;
    let wxw = &w * &x * w.transpose();
    DVector::from_fn(n, |j, _| {
        let share: f64 = (0..m).filter(|&i| i != j).map(|i| w[(i, j)].powi(2)).sum();
        let mut cost = x[(j, j)] * share;
        if j < m {
            cost += wxw[(j, j)] + stats.sigma_kappa2;
        }
        cost
    })
}
