//! Homogenization of the ratio problem into an SDP, the interior-point
//! solve, and extraction of the collaboration vector from the rank-one
//! solution matrix.

mod dump;
mod ipm;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{quad_form, sym_eigen};
use crate::model::SystemStatistics;
use crate::vectorize::QuadraticCoefficients;

pub use dump::write_debug_dump;
pub use ipm::{IterationRecord, SdpOptions, SdpSolution, SdpStatus};

pub const DEFAULT_RANK_TOL: f64 = 1e-6;

/// Constant term of the normalization constraint.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum NormalizationConstant {
    /// `sigma_kappa2 tr(Lambda_g) + sigma_sigma2`, the constant of the ratio
    /// objective itself.
    #[default]
    TraceLambdaG,
    /// `sigma_kappa2 g^T g + sigma_sigma2`, mean gains only.
    MeanGains,
}

#[derive(Debug, Clone)]
pub struct SdpConstraint {
    pub q: DMatrix<f64>,
    pub rhs: f64,
}

/// `maximize tr(Q_0 X) s.t. tr(Q_j X) <= rhs_j, X >= 0`, of dimension `L + 1`.
#[derive(Debug, Clone)]
pub struct HomogeneousSdp {
    pub q0: DMatrix<f64>,
    pub constraints: Vec<SdpConstraint>,
    pub dim: usize,
}

fn bordered(block: &DMatrix<f64>, corner: f64) -> DMatrix<f64> {
    let l = block.nrows();
    let mut out = DMatrix::zeros(l + 1, l + 1);
    out.view_mut((0, 0), (l, l)).copy_from(block);
    out[(l, l)] = corner;
    out
}

/// Builds the homogeneous SDP with variable `[t w; t][t w; t]^T`: one energy
/// constraint per sensor followed by the normalization constraint.
pub fn homogenize(
    coef: &QuadraticCoefficients,
    stats: &SystemStatistics,
    norm: NormalizationConstant,
) -> HomogeneousSdp {
    let l = coef.len();
    let m = coef.omega_t.len();
    let mut constraints = Vec::with_capacity(stats.n() + 1);
    for (i, om) in coef.omega_t.iter().enumerate() {
        constraints.push(SdpConstraint {
            q: bordered(om, stats.sigma_kappa2 - stats.budget(i)),
            rhs: 0.0,
        });
    }
    for (j, om) in coef.omega_c.iter().enumerate() {
        constraints.push(SdpConstraint {
            q: bordered(om, -stats.budget(m + j)),
            rhs: 0.0,
        });
    }
    let corner = match norm {
        NormalizationConstant::TraceLambdaG => coef.const_d,
        NormalizationConstant::MeanGains => coef.const_d_mean,
    };
    constraints.push(SdpConstraint {
        q: bordered(&coef.omega_d, corner),
        rhs: 1.0,
    });
    HomogeneousSdp {
        q0: bordered(&coef.omega_n, 0.0),
        constraints,
        dim: l + 1,
    }
}

/// Runs the interior-point method and returns whatever it reached.
pub fn solve_sdp_raw(prob: &HomogeneousSdp, opts: &SdpOptions) -> SdpSolution {
    let a: Vec<DMatrix<f64>> = prob.constraints.iter().map(|c| c.q.clone()).collect();
    let b: Vec<f64> = prob.constraints.iter().map(|c| c.rhs).collect();
    ipm::solve(&prob.q0, &a, &b, opts)
}

/// Runs the interior-point method; non-optimal outcomes become errors.
pub fn solve_sdp(prob: &HomogeneousSdp, opts: &SdpOptions) -> Result<SdpSolution> {
    let sol = solve_sdp_raw(prob, opts);
    match sol.status {
        SdpStatus::Optimal => Ok(sol),
        SdpStatus::Infeasible => Err(Error::Infeasible(sol.message)),
        SdpStatus::MaxIterations => Err(Error::MaxIterations {
            iterations: sol.iterations,
            gap: sol.duality_gap,
        }),
        SdpStatus::NumericalFailure => Err(Error::NumericalFailure(sol.message)),
    }
}

/// Collaboration vector read off an SDP solution.
#[derive(Debug, Clone)]
pub struct Recovered {
    pub w: DVector<f64>,
    /// `lambda_2 / lambda_1` of the top-left `L x L` block.
    pub rank_ratio: f64,
    /// Set when the rank test failed and the top eigenvector was used anyway.
    pub fallback: bool,
}

/// Extracts `w = s / sqrt(X[L, L])` with `s = sqrt(lambda_1) u_1` from the
/// top eigenpair of the leading `L x L` block. The sign is chosen so that
/// `orientation^T w >= 0` (with `orientation^T w = g^T W h`).
pub fn recover_rank_one(
    sol: &SdpSolution,
    rank_tol: f64,
    orientation: &DVector<f64>,
) -> Result<DVector<f64>> {
    let rec = recover_with_fallback(sol, orientation)?;
    if rec.rank_ratio >= rank_tol {
        return Err(Error::RankViolation(rec.rank_ratio));
    }
    Ok(rec.w)
}

/// As [`recover_rank_one`] but always returns the top-eigenvector estimate,
/// flagging it when the rank ratio exceeds [`DEFAULT_RANK_TOL`].
pub fn recover_with_fallback(sol: &SdpSolution, orientation: &DVector<f64>) -> Result<Recovered> {
    if sol.status != SdpStatus::Optimal {
        return Err(Error::NumericalFailure(format!(
            "cannot recover from a {:?} solution",
            sol.status
        )));
    }
    let dim = sol.x.nrows();
    let l = dim - 1;
    if orientation.len() != l {
        return Err(Error::Dimension("orientation vector length differs from L".into()));
    }
    let corner = sol.x[(l, l)];
    if !(corner >= 1e-12) {
        return Err(Error::DegenerateScale(corner));
    }
    if l == 0 {
        return Ok(Recovered {
            w: DVector::zeros(0),
            rank_ratio: 0.0,
            fallback: false,
        });
    }
    let block = sol.x.view((0, 0), (l, l)).into_owned();
    let eig = sym_eigen(&block)
        .ok_or_else(|| Error::NumericalFailure("eigendecomposition of the solution failed".into()))?;
    let top = eig.values[l - 1].max(0.0);
    let second = if l > 1 { eig.values[l - 2].max(0.0) } else { 0.0 };
    let rank_ratio = if top > 0.0 { second / top } else { 0.0 };
    let mut w = eig.vectors.column(l - 1).into_owned() * (top.sqrt() / corner.sqrt());
    if orientation.dot(&w) < 0.0 {
        w = -w;
    }
    let fallback = rank_ratio >= DEFAULT_RANK_TOL;
    if fallback {
        log::debug!("SDP solution is not rank one (ratio {rank_ratio:e}); using its top eigenvector");
    }
    Ok(Recovered {
        w,
        rank_ratio,
        fallback,
    })
}

/// Largest violation ratio `w^T Omega_i w / cap_i` over all energy
/// constraints, where `cap_i` is the budget left after the collaboration
/// noise term. Values above one mean the constraint is violated.
pub fn constraint_load(coef: &QuadraticCoefficients, stats: &SystemStatistics, w: &DVector<f64>) -> f64 {
    let m = coef.omega_t.len();
    (0..stats.n())
        .map(|i| {
            let cap = if i < m {
                stats.budget(i) - stats.sigma_kappa2
            } else {
                stats.budget(i)
            };
            quad_form(coef.cost_matrix(i), w) / cap
        })
        .fold(0.0, f64::max)
}

/// Shrinks `w` onto the feasible set if any energy constraint is violated.
/// Returns the applied factor (1 when already feasible).
pub fn project_feasible(coef: &QuadraticCoefficients, stats: &SystemStatistics, w: &mut DVector<f64>) -> f64 {
    let load = constraint_load(coef, stats, w);
    if load > 1.0 {
        let factor = 1.0 / load.sqrt();
        *w *= factor;
        factor
    } else {
        1.0
    }
}
