use std::fmt::Debug;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;

use super::{step_theta, Realization, SystemStatistics};
use crate::error::{Error, Result};
use crate::linalg::sym_eigen;

/// Entry-wise distribution of observation or channel gains. Only the first
/// two moments reach the optimizer, so any distribution can be plugged in as
/// long as the statistics handed to it agree with `mean`/`variance`.
pub trait GainDistribution: Debug + Send + Sync {
    fn sample(&self, rng: &mut dyn RngCore) -> f64;
    fn mean(&self) -> f64;
    fn variance(&self) -> f64;
}

/// Rayleigh(xi): mean `xi sqrt(pi/2)`, variance `(4 - pi)/2 xi^2`.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Rayleigh {
    pub xi: f64,
}

impl Rayleigh {
    pub fn new(xi: f64) -> Self {
        Self { xi }
    }
}

impl GainDistribution for Rayleigh {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let u: f64 = rng.random();
        self.xi * (-2.0 * (1.0 - u).ln()).sqrt()
    }

    fn mean(&self) -> f64 {
        self.xi * (std::f64::consts::PI / 2.0).sqrt()
    }

    fn variance(&self) -> f64 {
        (4.0 - std::f64::consts::PI) / 2.0 * self.xi * self.xi
    }
}

/// Degenerate gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Constant(pub f64);

impl GainDistribution for Constant {
    fn sample(&self, _rng: &mut dyn RngCore) -> f64 {
        self.0
    }

    fn mean(&self) -> f64 {
        self.0
    }

    fn variance(&self) -> f64 {
        0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Gaussian {
    pub mean: f64,
    pub std_dev: f64,
}

impl GainDistribution for Gaussian {
    fn sample(&self, rng: &mut dyn RngCore) -> f64 {
        let z: f64 = rng.sample(StandardNormal);
        self.mean + self.std_dev * z
    }

    fn mean(&self) -> f64 {
        self.mean
    }

    fn variance(&self) -> f64 {
        self.std_dev * self.std_dev
    }
}

/// Named random sources. Each gets its own ChaCha stream per trial.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Source {
    Theta = 0,
    ObservationGain = 1,
    ChannelGain = 2,
    MeasurementNoise = 3,
    CollaborationNoise = 4,
    ChannelNoise = 5,
    Harvest = 6,
    Topology = 7,
}

const SOURCES: usize = 8;

/// Independently seeded generators for one trial.
#[derive(Debug, Clone)]
pub struct TrialStreams {
    rngs: Vec<ChaCha8Rng>,
}

impl TrialStreams {
    pub fn new(master_seed: u64, trial: u64) -> Self {
        let rngs = (0..SOURCES as u64)
            .map(|src| {
                let mut rng = ChaCha8Rng::seed_from_u64(master_seed);
                rng.set_stream(trial.wrapping_mul(SOURCES as u64).wrapping_add(src));
                rng
            })
            .collect();
        Self { rngs }
    }

    pub fn get(&mut self, source: Source) -> &mut ChaCha8Rng {
        &mut self.rngs[source as usize]
    }

    pub fn normal(&mut self, source: Source) -> f64 {
        self.get(source).sample(StandardNormal)
    }
}

/// Running Gauss-Markov chain with Gaussian driving noise, started from
/// `theta_0 ~ N(0, s0)`.
#[derive(Debug, Clone, Copy)]
pub struct ThetaChain {
    alpha: f64,
    sigma_tau: f64,
    theta: f64,
}

impl ThetaChain {
    pub fn start(stats: &SystemStatistics, streams: &mut TrialStreams) -> Self {
        let theta = stats.s0.sqrt() * streams.normal(Source::Theta);
        Self {
            alpha: stats.alpha,
            sigma_tau: stats.sigma_tau2.sqrt(),
            theta,
        }
    }

    pub fn current(&self) -> f64 {
        self.theta
    }

    pub fn advance(&mut self, streams: &mut TrialStreams) -> f64 {
        let tau = self.sigma_tau * streams.normal(Source::Theta);
        self.theta = step_theta(self.theta, self.alpha, tau);
        self.theta
    }
}

/// Draws gains and noises for one time step.
#[derive(Debug, Clone)]
pub struct RealizationSampler {
    h_dist: Arc<dyn GainDistribution>,
    g_dist: Arc<dyn GainDistribution>,
    eps_factor: DMatrix<f64>,
    sigma_kappa: f64,
    sigma_fc: f64,
    n: usize,
    m: usize,
}

impl RealizationSampler {
    pub fn new(
        stats: &SystemStatistics,
        h_dist: Arc<dyn GainDistribution>,
        g_dist: Arc<dyn GainDistribution>,
    ) -> Result<Self> {
        Ok(Self {
            h_dist,
            g_dist,
            eps_factor: psd_factor(&stats.eps_cov)?,
            sigma_kappa: stats.sigma_kappa2.sqrt(),
            sigma_fc: stats.sigma_sigma2.sqrt(),
            n: stats.n(),
            m: stats.m(),
        })
    }

    /// Rayleigh(xi) observation and channel gains.
    pub fn rayleigh(stats: &SystemStatistics, xi: f64) -> Result<Self> {
        let d: Arc<dyn GainDistribution> = Arc::new(Rayleigh::new(xi));
        Self::new(stats, Arc::clone(&d), d)
    }

    pub fn sample(&self, theta: f64, streams: &mut TrialStreams) -> Realization {
        let h = DVector::from_iterator(
            self.n,
            (0..self.n).map(|_| self.h_dist.sample(streams.get(Source::ObservationGain))),
        );
        let g = DVector::from_iterator(
            self.m,
            (0..self.m).map(|_| self.g_dist.sample(streams.get(Source::ChannelGain))),
        );
        let white = DVector::from_iterator(
            self.n,
            (0..self.n).map(|_| streams.normal(Source::MeasurementNoise)),
        );
        let eps = &self.eps_factor * white;
        let kappa = DVector::from_iterator(
            self.m,
            (0..self.m).map(|_| self.sigma_kappa * streams.normal(Source::CollaborationNoise)),
        );
        let sigma_fc = self.sigma_fc * streams.normal(Source::ChannelNoise);
        Realization {
            theta,
            h,
            g,
            eps,
            kappa,
            sigma_fc,
        }
    }
}

/// `F` with `F F^T = C` for a symmetric PSD `C`: Cholesky when it succeeds,
/// otherwise the eigen square root (singular covariances).
fn psd_factor(c: &DMatrix<f64>) -> Result<DMatrix<f64>> {
    if let Some(ch) = c.clone().cholesky() {
        return Ok(ch.l());
    }
    let eig = sym_eigen(c)
        .ok_or_else(|| Error::NumericalFailure("covariance eigendecomposition failed".into()))?;
    if eig.values.iter().any(|&v| v < -1e-10 * c.amax().max(1.0)) {
        return Err(Error::InvalidStatistics("covariance is not PSD".into()));
    }
    let sqrt = eig.values.map(|v| v.max(0.0).sqrt());
    Ok(&eig.vectors * DMatrix::from_diagonal(&sqrt))
}
