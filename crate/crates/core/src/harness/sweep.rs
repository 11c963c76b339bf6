//! Parameter sweeps: one experiment per grid value at a fixed seed.

use std::sync::Arc;

use super::config::{SchemeKind, SimConfig, SweepParam, TopologySpec};
use super::experiment::{build_topology, draw_placement, run_with_topology, ExperimentResult};
use super::stats::Summary;
use crate::error::{Error, Result};

#[derive(Debug, Clone)]
pub struct SweepRow {
    pub param: SweepParam,
    pub value: f64,
    /// SNR change implied by a noise scale factor, `-10 log10(value)`.
    pub db: Option<f64>,
    pub scheme: SchemeKind,
    pub k: usize,
    pub summary: Summary,
}

#[derive(Debug, Clone)]
pub struct SweepResult {
    pub param: SweepParam,
    pub points: Vec<(f64, ExperimentResult)>,
    pub rows: Vec<SweepRow>,
}

impl SweepResult {
    /// MSE of `kind` at step `k` for every grid value.
    pub fn curve(&self, kind: SchemeKind, k: usize) -> Vec<(f64, Summary)> {
        self.points
            .iter()
            .filter_map(|(v, res)| res.mse(kind, k).map(|s| (*v, *s)))
            .collect()
    }
}

/// Config of one grid point.
pub fn point_config(base: &SimConfig, param: SweepParam, value: f64) -> Result<SimConfig> {
    let mut cfg = base.clone();
    cfg.sweep = None;
    match param {
        SweepParam::Eta => cfg.eta = value,
        SweepParam::Radius => {
            cfg.r = value;
            cfg.topology = TopologySpec::Rgg;
        }
        SweepParam::Alpha => cfg.alpha = value,
        SweepParam::SensorCount | SweepParam::TransmitterCount => {
            if value < 1.0 || value.fract() != 0.0 {
                return Err(Error::Config(format!("sensor count {value} is not a positive integer")));
            }
            if param == SweepParam::SensorCount {
                cfg.n = value as usize;
                cfg.m = cfg.m.min(cfg.n);
            } else {
                cfg.m = value as usize;
            }
        }
        SweepParam::MeasurementNoiseScale => cfg.eps_cov = base.eps_cov.scaled(value),
        SweepParam::CollaborationNoiseScale => cfg.sigma_kappa2 = base.sigma_kappa2 * value,
    }
    cfg.validate()?;
    Ok(cfg)
}

/// Runs every grid value. One placement is drawn from the seed and shared
/// by all points; it is redrawn only when the sensor count changes.
pub fn run_sweep(base: &SimConfig) -> Result<SweepResult> {
    let sweep = base
        .sweep
        .as_ref()
        .ok_or_else(|| Error::Config("no sweep configured".into()))?;
    let shared = draw_placement(base);
    let mut points = Vec::with_capacity(sweep.values.len());
    let mut rows = Vec::new();
    for &value in &sweep.values {
        let cfg = point_config(base, sweep.param, value)?;
        let placement = if cfg.n == base.n { shared.clone() } else { draw_placement(&cfg) };
        let topo = Arc::new(build_topology(&cfg, &placement)?);
        log::info!("sweep {} = {value}: L = {}", sweep.param.name(), topo.len());
        let res = run_with_topology(&cfg, topo)?;
        let db = sweep.param.is_noise_scale().then(|| -10.0 * value.log10());
        for (&kind, s) in &res.schemes {
            for (i, summary) in s.mse.iter().enumerate() {
                rows.push(SweepRow {
                    param: sweep.param,
                    value,
                    db,
                    scheme: kind,
                    k: i + 1,
                    summary: *summary,
                });
            }
        }
        points.push((value, res));
    }
    Ok(SweepResult {
        param: sweep.param,
        points,
        rows,
    })
}
