//! System model: second-order statistics, topology, collaboration schemes and
//! one-step realizations of the sensing / collaboration / MAC chain.

mod sampling;
mod topology;

use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::{is_symmetric, min_eigenvalue, symmetrize};

pub use sampling::{
    Constant, GainDistribution, Gaussian, Rayleigh, RealizationSampler, Source, ThetaChain,
    TrialStreams,
};
pub use topology::Topology;

const PSD_TOL: f64 = 1e-10;

/// Second-order statistics of every random quantity in the model.
#[derive(Debug, Clone, PartialEq)]
pub struct SystemStatistics {
    pub alpha: f64,
    pub sigma_tau2: f64,
    pub h_mean: DVector<f64>,
    pub h_cov: DMatrix<f64>,
    pub g_mean: DVector<f64>,
    pub g_cov: DMatrix<f64>,
    pub eps_cov: DMatrix<f64>,
    pub sigma_kappa2: f64,
    pub sigma_sigma2: f64,
    /// Mean harvested energy per step, one entry per sensor.
    pub mu: DVector<f64>,
    /// Reserve-energy margin.
    pub eta: f64,
    /// Initial parameter variance.
    pub s0: f64,
}

impl SystemStatistics {
    /// Settings of the reference experiment: Rayleigh(1) gains, `alpha = 0.8`,
    /// `sigma_tau2 = 0.5`, `eps_cov = 0.5 (I + 11^T)`, `sigma_kappa2 = 0.5`,
    /// `sigma_sigma2 = 1`, `mu_i = 10`, `eta = 0.01`, `s0 = 100`.
    pub fn reference_defaults(n: usize, m: usize) -> Self {
        let ray = Rayleigh::new(1.0);
        Self {
            alpha: 0.8,
            sigma_tau2: 0.5,
            h_mean: DVector::from_element(n, ray.mean()),
            h_cov: DMatrix::identity(n, n) * ray.variance(),
            g_mean: DVector::from_element(m, ray.mean()),
            g_cov: DMatrix::identity(m, m) * ray.variance(),
            eps_cov: scaled_i_plus_ones(n, 0.5),
            sigma_kappa2: 0.5,
            sigma_sigma2: 1.0,
            mu: DVector::from_element(n, 10.0),
            eta: 0.01,
            s0: 100.0,
        }
    }

    pub fn n(&self) -> usize {
        self.h_mean.len()
    }

    pub fn m(&self) -> usize {
        self.g_mean.len()
    }

    /// Stationary parameter variance `sigma_tau2 / (1 - alpha^2)`.
    pub fn s_inf(&self) -> f64 {
        self.sigma_tau2 / (1.0 - self.alpha * self.alpha)
    }

    /// Energy budget `mu_i - eta` of sensor `i`.
    pub fn budget(&self, i: usize) -> f64 {
        self.mu[i] - self.eta
    }

    pub fn lambda_g(&self) -> DMatrix<f64> {
        lambda_g(self)
    }

    pub fn lambda_h(&self) -> DMatrix<f64> {
        lambda_h(self)
    }

    pub fn second_moment_x(&self, s: f64) -> DMatrix<f64> {
        second_moment_x(self, s)
    }

    pub fn validate(&self) -> Result<()> {
        let n = self.n();
        let m = self.m();
        let bad = |msg: String| Err(Error::InvalidStatistics(msg));
        if n == 0 || m == 0 {
            return bad("empty sensor set".into());
        }
        if m > n {
            return bad(format!("M = {m} exceeds N = {n}"));
        }
        if self.h_cov.shape() != (n, n) || self.eps_cov.shape() != (n, n) || self.mu.len() != n {
            return Err(Error::Dimension("sensor-indexed statistics disagree with N".into()));
        }
        if self.g_cov.shape() != (m, m) {
            return Err(Error::Dimension("channel covariance disagrees with M".into()));
        }
        if !(self.alpha.abs() < 1.0) {
            return bad(format!("|alpha| = {} is not below one", self.alpha.abs()));
        }
        for (name, v) in [
            ("sigma_tau2", self.sigma_tau2),
            ("sigma_kappa2", self.sigma_kappa2),
            ("sigma_sigma2", self.sigma_sigma2),
            ("s0", self.s0),
        ] {
            if !(v >= 0.0) || !v.is_finite() {
                return bad(format!("{name} = {v} must be a finite non-negative variance"));
            }
        }
        for (name, c) in [("h_cov", &self.h_cov), ("g_cov", &self.g_cov), ("eps_cov", &self.eps_cov)] {
            if !is_symmetric(c, 1e-12) {
                return bad(format!("{name} is not symmetric"));
            }
            let lo = min_eigenvalue(c);
            if lo < -PSD_TOL * c.amax().max(1.0) {
                return bad(format!("{name} is not PSD (min eigenvalue {lo:e})"));
            }
        }
        if !(self.eta > 0.0) {
            return bad(format!("eta = {} must be positive", self.eta));
        }
        for i in 0..n {
            let slack = if i < m {
                self.budget(i) - self.sigma_kappa2
            } else {
                self.budget(i)
            };
            if !(slack > 0.0) {
                return Err(Error::Infeasible(format!(
                    "sensor {i} has no strictly feasible energy budget (slack {slack})"
                )));
            }
        }
        Ok(())
    }
}

/// `s (I + 11^T)`, the named generator `scaled_i_plus_ones:s`.
pub fn scaled_i_plus_ones(n: usize, s: f64) -> DMatrix<f64> {
    (DMatrix::identity(n, n) + DMatrix::from_element(n, n, 1.0)) * s
}

/// `theta_k = alpha theta_{k-1} + tau_k`.
pub fn step_theta(theta_prev: f64, alpha: f64, tau: f64) -> f64 {
    alpha * theta_prev + tau
}

/// `s_k = alpha^2 s_{k-1} + sigma_tau2`.
pub fn prior_variance_step(s_prev: f64, alpha: f64, sigma_tau2: f64) -> f64 {
    alpha * alpha * s_prev + sigma_tau2
}

/// `E[x x^T] = eps_cov + s (h h^T + h_cov)`.
pub fn second_moment_x(stats: &SystemStatistics, s: f64) -> DMatrix<f64> {
    let hh = &stats.h_mean * stats.h_mean.transpose();
    symmetrize(&(&stats.eps_cov + (hh + &stats.h_cov) * s))
}

/// `Lambda_g = g g^T + g_cov`.
pub fn lambda_g(stats: &SystemStatistics) -> DMatrix<f64> {
    symmetrize(&(&stats.g_mean * stats.g_mean.transpose() + &stats.g_cov))
}

/// `Lambda_h = h h^T + h_cov`.
pub fn lambda_h(stats: &SystemStatistics) -> DMatrix<f64> {
    symmetrize(&(&stats.h_mean * stats.h_mean.transpose() + &stats.h_cov))
}

/// A collaboration matrix stored as its vector of supported weights.
#[derive(Debug, Clone, PartialEq)]
pub struct CollaborationScheme {
    topo: Arc<Topology>,
    w: DVector<f64>,
}

impl CollaborationScheme {
    pub fn new(topo: Arc<Topology>, w: DVector<f64>) -> Result<Self> {
        if w.len() != topo.len() {
            return Err(Error::Dimension(format!(
                "weight vector has length {}, topology has L = {}",
                w.len(),
                topo.len()
            )));
        }
        Ok(Self { topo, w })
    }

    pub fn zeros(topo: Arc<Topology>) -> Self {
        let l = topo.len();
        Self { topo, w: DVector::zeros(l) }
    }

    /// Reads the supported entries of a dense `M x N` matrix. Fails if the
    /// matrix has weight outside the topology support.
    pub fn from_matrix(topo: Arc<Topology>, mat: &DMatrix<f64>) -> Result<Self> {
        if mat.shape() != (topo.m(), topo.n()) {
            return Err(Error::Dimension(format!(
                "matrix is {:?}, topology is {}x{}",
                mat.shape(),
                topo.m(),
                topo.n()
            )));
        }
        for r in 0..topo.m() {
            for c in 0..topo.n() {
                if !topo.contains(r, c) && mat[(r, c)] != 0.0 {
                    return Err(Error::InvalidTopology(format!(
                        "weight at ({r}, {c}) lies outside the support"
                    )));
                }
            }
        }
        let w = DVector::from_iterator(topo.len(), topo.index_map().iter().map(|&(r, c)| mat[(r, c)]));
        Ok(Self { topo, w })
    }

    pub fn topology(&self) -> &Arc<Topology> {
        &self.topo
    }

    pub fn weights(&self) -> &DVector<f64> {
        &self.w
    }

    /// Dense `M x N` matrix `W`.
    pub fn matrix(&self) -> DMatrix<f64> {
        let mut mat = DMatrix::zeros(self.topo.m(), self.topo.n());
        for (l, &(r, c)) in self.topo.index_map().iter().enumerate() {
            mat[(r, c)] = self.w[l];
        }
        mat
    }

    pub fn scaled(&self, beta: f64) -> Self {
        Self {
            topo: Arc::clone(&self.topo),
            w: &self.w * beta,
        }
    }

    pub fn is_zero(&self) -> bool {
        self.w.iter().all(|&v| v == 0.0)
    }

    /// `W v` for an `N`-vector `v`.
    pub fn apply(&self, v: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.topo.m());
        for (l, &(r, c)) in self.topo.index_map().iter().enumerate() {
            out[r] += self.w[l] * v[c];
        }
        out
    }

    /// `a^T W b`.
    pub fn bilinear(&self, a: &DVector<f64>, b: &DVector<f64>) -> f64 {
        self.topo
            .index_map()
            .iter()
            .zip(self.w.iter())
            .map(|(&(r, c), w)| a[r] * w * b[c])
            .sum()
    }
}

/// One draw of every random quantity at a single time step.
#[derive(Debug, Clone, PartialEq)]
pub struct Realization {
    pub theta: f64,
    pub h: DVector<f64>,
    pub g: DVector<f64>,
    pub eps: DVector<f64>,
    pub kappa: DVector<f64>,
    pub sigma_fc: f64,
}

impl Realization {
    /// Raw measurements `x = h theta + eps`.
    pub fn measurements(&self) -> DVector<f64> {
        &self.h * self.theta + &self.eps
    }
}

/// Runs the sensing / collaboration / coherent-MAC chain:
/// `x = h theta + eps`, `z = W x + kappa`, `y = g^T z + sigma_fc`.
pub fn observe(real: &Realization, scheme: &CollaborationScheme) -> (f64, DVector<f64>) {
    let x = real.measurements();
    let z = scheme.apply(&x) + &real.kappa;
    let y = real.g.dot(&z) + real.sigma_fc;
    (y, z)
}
