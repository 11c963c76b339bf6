//! Flat `key = value` configuration for simulations.
//!
//! Vectors are comma-separated decimals; covariance matrices are given by a
//! named generator such as `scaled_i_plus_ones:0.5`. Lines starting with `#`
//! are comments. Unknown keys are rejected.

use std::fmt;
use std::path::Path;
use std::str::FromStr;
use std::sync::Arc;

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::model::{scaled_i_plus_ones, Constant, GainDistribution, Gaussian, Rayleigh, SystemStatistics};
use crate::sdpsolve::NormalizationConstant;

/// Collaboration schemes the experiment engine can run.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum SchemeKind {
    /// Fixed `W*`, applied without looking at the buffers.
    Offline,
    /// `W*` scaled per step to fit the stored energy.
    Online,
    /// Per-step statistics-based design, scaled the same way.
    GreedyStat,
    /// Per-step design from realized gains with a Kalman tracker.
    GreedyCsi,
}

impl SchemeKind {
    pub const ALL: [SchemeKind; 4] = [
        SchemeKind::Offline,
        SchemeKind::Online,
        SchemeKind::GreedyStat,
        SchemeKind::GreedyCsi,
    ];

    pub fn name(self) -> &'static str {
        match self {
            SchemeKind::Offline => "offline",
            SchemeKind::Online => "online",
            SchemeKind::GreedyStat => "greedy-stat",
            SchemeKind::GreedyCsi => "greedy-csi",
        }
    }

    /// Whether the scheme must respect the stored energy at every step.
    pub fn is_real_time(self) -> bool {
        self != SchemeKind::Offline
    }
}

impl fmt::Display for SchemeKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for SchemeKind {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        SchemeKind::ALL
            .into_iter()
            .find(|k| k.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown scheme `{s}`")))
    }
}

pub fn parse_schemes(list: &str) -> Result<Vec<SchemeKind>> {
    let mut out: Vec<SchemeKind> = list
        .split(',')
        .filter(|s| !s.trim().is_empty())
        .map(str::parse)
        .collect::<Result<_>>()?;
    out.sort();
    out.dedup();
    if out.is_empty() {
        return Err(Error::Config("scheme list is empty".into()));
    }
    Ok(out)
}

/// Distribution of the observation or channel gains.
#[derive(Debug, Clone, Copy, PartialEq)]
pub enum GainSpec {
    Rayleigh(f64),
    Constant(f64),
    Gaussian { mean: f64, std_dev: f64 },
}

impl GainSpec {
    pub fn distribution(&self) -> Arc<dyn GainDistribution> {
        match *self {
            GainSpec::Rayleigh(xi) => Arc::new(Rayleigh::new(xi)),
            GainSpec::Constant(v) => Arc::new(Constant(v)),
            GainSpec::Gaussian { mean, std_dev } => Arc::new(Gaussian { mean, std_dev }),
        }
    }
}

impl FromStr for GainSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_generator(s)?;
        match (name, args.as_slice()) {
            ("rayleigh", [xi]) if *xi > 0.0 => Ok(GainSpec::Rayleigh(*xi)),
            ("constant", [v]) => Ok(GainSpec::Constant(*v)),
            ("gaussian", [mean, sd]) if *sd >= 0.0 => Ok(GainSpec::Gaussian {
                mean: *mean,
                std_dev: *sd,
            }),
            _ => Err(Error::Config(format!("bad gain distribution `{s}`"))),
        }
    }
}

impl fmt::Display for GainSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            GainSpec::Rayleigh(xi) => write!(f, "rayleigh:{xi}"),
            GainSpec::Constant(v) => write!(f, "constant:{v}"),
            GainSpec::Gaussian { mean, std_dev } => write!(f, "gaussian:{mean},{std_dev}"),
        }
    }
}

/// Named covariance generator.
#[derive(Debug, Clone, PartialEq)]
pub enum MatrixSpec {
    /// `s (I + 1 1^T)`.
    ScaledIPlusOnes(f64),
    /// `s I`.
    ScaledIdentity(f64),
    Diagonal(Vec<f64>),
}

impl MatrixSpec {
    pub fn build(&self, n: usize) -> Result<DMatrix<f64>> {
        match self {
            MatrixSpec::ScaledIPlusOnes(s) => Ok(scaled_i_plus_ones(n, *s)),
            MatrixSpec::ScaledIdentity(s) => Ok(DMatrix::identity(n, n) * *s),
            MatrixSpec::Diagonal(d) => {
                let v = broadcast(d, n, "diagonal")?;
                Ok(DMatrix::from_diagonal(&v))
            }
        }
    }

    /// The same generator with every entry multiplied by `factor`.
    pub fn scaled(&self, factor: f64) -> Self {
        match self {
            MatrixSpec::ScaledIPlusOnes(s) => MatrixSpec::ScaledIPlusOnes(s * factor),
            MatrixSpec::ScaledIdentity(s) => MatrixSpec::ScaledIdentity(s * factor),
            MatrixSpec::Diagonal(d) => MatrixSpec::Diagonal(d.iter().map(|v| v * factor).collect()),
        }
    }
}

impl FromStr for MatrixSpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, args) = split_generator(s)?;
        match (name, args.as_slice()) {
            ("scaled_i_plus_ones", [v]) => Ok(MatrixSpec::ScaledIPlusOnes(*v)),
            ("scaled_identity", [v]) => Ok(MatrixSpec::ScaledIdentity(*v)),
            ("diagonal", d) if !d.is_empty() => Ok(MatrixSpec::Diagonal(d.to_vec())),
            _ => Err(Error::Config(format!("bad matrix generator `{s}`"))),
        }
    }
}

impl fmt::Display for MatrixSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            MatrixSpec::ScaledIPlusOnes(v) => write!(f, "scaled_i_plus_ones:{v}"),
            MatrixSpec::ScaledIdentity(v) => write!(f, "scaled_identity:{v}"),
            MatrixSpec::Diagonal(d) => write!(f, "diagonal:{}", join(d)),
        }
    }
}

/// How the collaboration topology is obtained.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum TopologySpec {
    /// Random geometric graph with radius `r`.
    Rgg,
    Full,
    /// Self loops only (no collaboration).
    SelfLoops,
}

impl FromStr for TopologySpec {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.trim() {
            "rgg" => Ok(TopologySpec::Rgg),
            "full" => Ok(TopologySpec::Full),
            "self_loops" => Ok(TopologySpec::SelfLoops),
            other => Err(Error::Config(format!("unknown topology `{other}`"))),
        }
    }
}

impl fmt::Display for TopologySpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            TopologySpec::Rgg => "rgg",
            TopologySpec::Full => "full",
            TopologySpec::SelfLoops => "self_loops",
        })
    }
}

/// Parameter varied by a sweep.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SweepParam {
    Eta,
    Radius,
    Alpha,
    SensorCount,
    TransmitterCount,
    /// Factor on the measurement-noise covariance.
    MeasurementNoiseScale,
    /// Factor on the collaboration-noise variance.
    CollaborationNoiseScale,
}

impl SweepParam {
    pub fn name(self) -> &'static str {
        match self {
            SweepParam::Eta => "eta",
            SweepParam::Radius => "r",
            SweepParam::Alpha => "alpha",
            SweepParam::SensorCount => "n",
            SweepParam::TransmitterCount => "m",
            SweepParam::MeasurementNoiseScale => "eps_scale",
            SweepParam::CollaborationNoiseScale => "kappa_scale",
        }
    }

    /// Noise-scale sweeps report the implied SNR change in dB.
    pub fn is_noise_scale(self) -> bool {
        matches!(
            self,
            SweepParam::MeasurementNoiseScale | SweepParam::CollaborationNoiseScale
        )
    }
}

impl FromStr for SweepParam {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let all = [
            SweepParam::Eta,
            SweepParam::Radius,
            SweepParam::Alpha,
            SweepParam::SensorCount,
            SweepParam::TransmitterCount,
            SweepParam::MeasurementNoiseScale,
            SweepParam::CollaborationNoiseScale,
        ];
        all.into_iter()
            .find(|p| p.name() == s.trim())
            .ok_or_else(|| Error::Config(format!("unknown sweep parameter `{s}`")))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Sweep {
    pub param: SweepParam,
    pub values: Vec<f64>,
}

impl FromStr for Sweep {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        let (name, rest) = s
            .split_once(':')
            .ok_or_else(|| Error::Config(format!("sweep must look like `param:v1,v2`, got `{s}`")))?;
        let values = parse_list(rest)?;
        if values.is_empty() {
            return Err(Error::Config("sweep grid is empty".into()));
        }
        Ok(Sweep {
            param: name.parse()?,
            values,
        })
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct SimConfig {
    pub n: usize,
    pub m: usize,
    pub topology: TopologySpec,
    /// RGG radius on the unit square.
    pub r: f64,
    pub alpha: f64,
    pub sigma_tau2: f64,
    pub s0: f64,
    pub h_gain: GainSpec,
    pub g_gain: GainSpec,
    pub eps_cov: MatrixSpec,
    pub sigma_kappa2: f64,
    pub sigma_sigma2: f64,
    /// Mean harvest per sensor; a single value is broadcast.
    pub mu: Vec<f64>,
    pub eta: f64,
    pub normalization: NormalizationConstant,
    pub k_max: usize,
    pub trials: usize,
    pub schemes: Vec<SchemeKind>,
    pub seed: u64,
    pub sweep: Option<Sweep>,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            n: 10,
            m: 10,
            topology: TopologySpec::Rgg,
            r: 0.6,
            alpha: 0.8,
            sigma_tau2: 0.5,
            s0: 100.0,
            h_gain: GainSpec::Rayleigh(1.0),
            g_gain: GainSpec::Rayleigh(1.0),
            eps_cov: MatrixSpec::ScaledIPlusOnes(0.5),
            sigma_kappa2: 0.5,
            sigma_sigma2: 1.0,
            mu: vec![10.0],
            eta: 0.01,
            normalization: NormalizationConstant::TraceLambdaG,
            k_max: 20,
            trials: 500,
            schemes: SchemeKind::ALL.to_vec(),
            seed: 1,
            sweep: None,
        }
    }
}

impl SimConfig {
    pub fn from_file(path: &Path) -> Result<Self> {
        Self::parse(&std::fs::read_to_string(path)?)
    }

    /// Parses a config; keys not mentioned keep their defaults.
    pub fn parse(text: &str) -> Result<Self> {
        let mut cfg = SimConfig::default();
        for (lineno, raw) in text.lines().enumerate() {
            let line = raw.split('#').next().unwrap_or("").trim();
            if line.is_empty() {
                continue;
            }
            let (key, value) = line
                .split_once('=')
                .ok_or_else(|| Error::Config(format!("line {}: expected `key = value`", lineno + 1)))?;
            cfg.set(key.trim(), value.trim())
                .map_err(|e| Error::Config(format!("line {}: {e}", lineno + 1)))?;
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn set(&mut self, key: &str, value: &str) -> Result<()> {
        match key {
            "n" => self.n = parse_value(key, value)?,
            "m" => self.m = parse_value(key, value)?,
            "topology" => self.topology = value.parse()?,
            "r" => self.r = parse_value(key, value)?,
            "alpha" => self.alpha = parse_value(key, value)?,
            "sigma_tau2" => self.sigma_tau2 = parse_value(key, value)?,
            "s0" => self.s0 = parse_value(key, value)?,
            "h_gain" => self.h_gain = value.parse()?,
            "g_gain" => self.g_gain = value.parse()?,
            "eps_cov" => self.eps_cov = value.parse()?,
            "sigma_kappa2" => self.sigma_kappa2 = parse_value(key, value)?,
            "sigma_sigma2" => self.sigma_sigma2 = parse_value(key, value)?,
            "mu" => self.mu = parse_list(value)?,
            "eta" => self.eta = parse_value(key, value)?,
            "normalization" => {
                self.normalization = match value {
                    "trace_lambda_g" => NormalizationConstant::TraceLambdaG,
                    "mean_gains" => NormalizationConstant::MeanGains,
                    other => return Err(Error::Config(format!("unknown normalization `{other}`"))),
                }
            }
            "k_max" => self.k_max = parse_value(key, value)?,
            "trials" => self.trials = parse_value(key, value)?,
            "schemes" => self.schemes = parse_schemes(value)?,
            "seed" => self.seed = parse_value(key, value)?,
            "sweep" => {
                self.sweep = if value.is_empty() || value == "none" {
                    None
                } else {
                    Some(value.parse()?)
                }
            }
            other => return Err(Error::Config(format!("unknown key `{other}`"))),
        }
        Ok(())
    }

    pub fn validate(&self) -> Result<()> {
        if self.m == 0 || self.m > self.n {
            return Err(Error::Config(format!("need 1 <= M <= N, got M = {}, N = {}", self.m, self.n)));
        }
        if self.topology == TopologySpec::Rgg && !(self.r >= 0.0 && self.r <= 2f64.sqrt()) {
            return Err(Error::Config(format!("radius {} outside [0, sqrt 2]", self.r)));
        }
        if self.trials == 0 || self.k_max == 0 {
            return Err(Error::Config("trials and k_max must be positive".into()));
        }
        if self.schemes.is_empty() {
            return Err(Error::Config("no schemes selected".into()));
        }
        broadcast(&self.mu, self.n, "mu")?;
        Ok(())
    }

    pub fn statistics(&self) -> Result<SystemStatistics> {
        let h = self.h_gain.distribution();
        let g = self.g_gain.distribution();
        let stats = SystemStatistics {
            alpha: self.alpha,
            sigma_tau2: self.sigma_tau2,
            h_mean: DVector::from_element(self.n, h.mean()),
            h_cov: DMatrix::identity(self.n, self.n) * h.variance(),
            g_mean: DVector::from_element(self.m, g.mean()),
            g_cov: DMatrix::identity(self.m, self.m) * g.variance(),
            eps_cov: self.eps_cov.build(self.n)?,
            sigma_kappa2: self.sigma_kappa2,
            sigma_sigma2: self.sigma_sigma2,
            mu: broadcast(&self.mu, self.n, "mu")?,
            eta: self.eta,
            s0: self.s0,
        };
        stats.validate()?;
        Ok(stats)
    }

    /// Renders the config in the file format accepted by [`SimConfig::parse`].
    pub fn to_text(&self) -> String {
        let norm = match self.normalization {
            NormalizationConstant::TraceLambdaG => "trace_lambda_g",
            NormalizationConstant::MeanGains => "mean_gains",
        };
        let schemes: Vec<&str> = self.schemes.iter().map(|s| s.name()).collect();
        let mut lines = vec![
            format!("n = {}", self.n),
            format!("m = {}", self.m),
            format!("topology = {}", self.topology),
            format!("r = {}", self.r),
            format!("alpha = {}", self.alpha),
            format!("sigma_tau2 = {}", self.sigma_tau2),
            format!("s0 = {}", self.s0),
            format!("h_gain = {}", self.h_gain),
            format!("g_gain = {}", self.g_gain),
            format!("eps_cov = {}", self.eps_cov),
            format!("sigma_kappa2 = {}", self.sigma_kappa2),
            format!("sigma_sigma2 = {}", self.sigma_sigma2),
            format!("mu = {}", join(&self.mu)),
            format!("eta = {}", self.eta),
            format!("normalization = {norm}"),
            format!("k_max = {}", self.k_max),
            format!("trials = {}", self.trials),
            format!("schemes = {}", schemes.join(",")),
            format!("seed = {}", self.seed),
        ];
        if let Some(sw) = &self.sweep {
            lines.push(format!("sweep = {}:{}", sw.param.name(), join(&sw.values)));
        }
        let mut out = lines.join("\n");
        out.push('\n');
        out
    }
}

fn join(v: &[f64]) -> String {
    v.iter().map(|x| x.to_string()).collect::<Vec<_>>().join(",")
}

fn parse_value<T: FromStr>(key: &str, value: &str) -> Result<T> {
    value
        .parse()
        .map_err(|_| Error::Config(format!("cannot parse `{value}` for `{key}`")))
}

fn parse_list(s: &str) -> Result<Vec<f64>> {
    s.split(',')
        .map(str::trim)
        .filter(|t| !t.is_empty())
        .map(|t| t.parse().map_err(|_| Error::Config(format!("`{t}` is not a number"))))
        .collect()
}

fn split_generator(s: &str) -> Result<(&str, Vec<f64>)> {
    let (name, args) = s
        .trim()
        .split_once(':')
        .ok_or_else(|| Error::Config(format!("expected `name:args`, got `{s}`")))?;
    Ok((name.trim(), parse_list(args)?))
}

fn broadcast(v: &[f64], n: usize, what: &str) -> Result<DVector<f64>> {
    match v.len() {
        1 => Ok(DVector::from_element(n, v[0])),
        len if len == n => Ok(DVector::from_column_slice(v)),
        len => Err(Error::Config(format!("`{what}` has {len} entries, expected 1 or {n}"))),
    }
}
