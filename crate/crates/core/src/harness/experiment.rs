//! Monte Carlo engine. Every trial draws one parameter path and one set of
//! gains, noises and harvests per step; all schemes consume the same draws.

use std::collections::BTreeMap;
use std::sync::Arc;

use rayon::prelude::*;

use super::config::{SchemeKind, SimConfig, TopologySpec};
use super::rgg::Placement;
use super::stats::{summarize, Summary};
use crate::error::{Error, Result};
use crate::filter::{
    csi_measurement, kalman_update, measurement_moments, rlmmse_update, FilterState, MeasurementMoments,
};
use crate::model::{
    observe, prior_variance_step, CollaborationScheme, RealizationSampler, Source, SystemStatistics, ThetaChain,
    Topology, TrialStreams,
};
use crate::offline::{solve_offline_with, OfflineSolution, SolveOptions};
use crate::sdpsolve::SdpOptions;
use crate::policy::{
    greedy_csi_scheme_with, greedy_stat_scheme_with, online_decide, realized_costs, sample_harvest, EnergyState,
};
use crate::vectorize::CoefficientAssembler;

/// Trial index reserved for drawing the sensor placement.
const PLACEMENT_TRIAL: u64 = u64::MAX >> 4;

/// Sensor placement drawn from the run seed.
pub fn draw_placement(cfg: &SimConfig) -> Placement {
    let mut streams = TrialStreams::new(cfg.seed, PLACEMENT_TRIAL);
    Placement::uniform(cfg.n, streams.get(Source::Topology))
}

pub fn build_topology(cfg: &SimConfig, placement: &Placement) -> Result<Topology> {
    match cfg.topology {
        TopologySpec::Rgg => placement.topology(cfg.r, cfg.m),
        TopologySpec::Full => Topology::full(cfg.m, cfg.n),
        TopologySpec::SelfLoops => Topology::self_loops(cfg.m, cfg.n),
    }
}

/// One row of the energy trace.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct EnergyRecord {
    pub k: usize,
    pub sensor: usize,
    /// Stored energy before this step's transmission.
    pub stored: f64,
    pub consumed: f64,
    pub harvested: f64,
    pub beta: f64,
}

/// Per-step history of one scheme in one trial.
#[derive(Debug, Clone, Default)]
pub struct SchemeTrace {
    pub estimates: Vec<f64>,
    pub squared_errors: Vec<f64>,
    pub betas: Vec<f64>,
    pub scaled: Vec<bool>,
    pub silent: Vec<bool>,
    /// Number of (step, sensor) pairs whose cost exceeded the stored energy.
    pub overdraws: usize,
    pub energy: Vec<EnergyRecord>,
}

#[derive(Debug, Clone)]
pub struct TrialOutcome {
    pub trial: usize,
    pub thetas: Vec<f64>,
    pub schemes: BTreeMap<SchemeKind, SchemeTrace>,
}

/// Everything fixed before the trials start.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub stats: SystemStatistics,
    pub topo: Arc<Topology>,
    pub offline: Option<OfflineSolution>,
    /// Statistics-based schemes for steps `1..=k_max`.
    pub stat_schemes: Vec<CollaborationScheme>,
    /// Prior variances `s_1..s_{k_max}`.
    pub prior_variances: Vec<f64>,
    pub options: SolveOptions,
    /// Options for the per-step CSI solves. Their relaxations are usually
    /// not rank one, so the top-eigenvector fallback decides the scheme
    /// and a looser gap saves iterations.
    pub csi_options: SolveOptions,
}

impl Prepared {
    pub fn new(cfg: &SimConfig, topo: Arc<Topology>) -> Result<Self> {
        let stats = cfg.statistics()?;
        let options = SolveOptions {
            normalization: cfg.normalization,
            ..SolveOptions::default()
        };
        let csi_options = SolveOptions {
            sdp: SdpOptions {
                tol: 1e-10,
                accept_tol: 1e-8,
                ..options.sdp
            },
            ..options
        };
        let mut prior_variances = Vec::with_capacity(cfg.k_max);
        let mut s = stats.s0;
        for _ in 0..cfg.k_max {
            s = prior_variance_step(s, stats.alpha, stats.sigma_tau2);
            prior_variances.push(s);
        }
        let needs_offline = cfg
            .schemes
            .iter()
            .any(|k| matches!(k, SchemeKind::Offline | SchemeKind::Online));
        let offline = if needs_offline {
            Some(solve_offline_with(&stats, &topo, &options)?)
        } else {
            None
        };
        let stat_schemes = if cfg.schemes.contains(&SchemeKind::GreedyStat) {
            let assembler = CoefficientAssembler::new(&stats, &topo)?;
            prior_variances
                .iter()
                .map(|&s| greedy_stat_scheme_with(&assembler, &stats, &topo, s, &options))
                .collect::<Result<_>>()?
        } else {
            Vec::new()
        };
        Ok(Self {
            stats,
            topo,
            offline,
            stat_schemes,
            prior_variances,
            options,
            csi_options,
        })
    }
}

struct Tracker {
    kind: SchemeKind,
    filter: FilterState,
    energy: EnergyState,
    trace: SchemeTrace,
}

/// Runs one trial. `record_energy` keeps the per-sensor energy rows.
pub fn run_trial(cfg: &SimConfig, prep: &Prepared, trial: usize, record_energy: bool) -> Result<TrialOutcome> {
    let stats = &prep.stats;
    let sampler = RealizationSampler::new(stats, cfg.h_gain.distribution(), cfg.g_gain.distribution())?;
    let mut streams = TrialStreams::new(cfg.seed, trial as u64);
    let mut chain = ThetaChain::start(stats, &mut streams);
    let initial = EnergyState::initial(stats, &mut streams)?;
    let offline_moments = match &prep.offline {
        Some(off) => Some(measurement_moments(&off.scheme, stats)?),
        None => None,
    };
    let mut trackers: Vec<Tracker> = cfg
        .schemes
        .iter()
        .map(|&kind| Tracker {
            kind,
            filter: FilterState::initial(stats),
            energy: initial.clone(),
            trace: SchemeTrace::default(),
        })
        .collect();
    let mut thetas = Vec::with_capacity(cfg.k_max);

    for k in 1..=cfg.k_max {
        let theta = chain.advance(&mut streams);
        thetas.push(theta);
        let real = sampler.sample(theta, &mut streams);
        let harvest = sample_harvest(stats, &mut streams)?;
        let s_k = prep.prior_variances[k - 1];

        for tr in &mut trackers {
            let wstar = || {
                prep.offline
                    .as_ref()
                    .map(|o| &o.scheme)
                    .ok_or_else(|| Error::Config("offline solution missing".into()))
            };
            let stored = tr.energy.stored.clone();
            let (costs, beta, scaled, silent, next_filter) = match tr.kind {
                SchemeKind::Offline => {
                    let scheme = wstar()?;
                    let (y, z) = observe(&real, scheme);
                    let costs = realized_costs(scheme, &real, &z);
                    let mom = offline_moments.expect("moments exist with the offline solution");
                    let (f, _) = rlmmse_update(&tr.filter, y, &mom, stats)?;
                    (costs, 1.0, false, false, f)
                }
                SchemeKind::Online | SchemeKind::GreedyStat => {
                    let candidate = if tr.kind == SchemeKind::Online {
                        wstar()?
                    } else {
                        &prep.stat_schemes[k - 1]
                    };
                    let d = online_decide(candidate, &tr.energy, &real);
                    let mom = if d.silent {
                        MeasurementMoments::silent(stats)
                    } else {
                        measurement_moments(&d.scheme, stats)?
                    };
                    let (f, _) = rlmmse_update(&tr.filter, d.y, &mom, stats)?;
                    (d.costs, d.beta, d.scaled, d.silent, f)
                }
                SchemeKind::GreedyCsi => {
                    let candidate = greedy_csi_scheme_with(stats, &prep.topo, s_k, &real.h, &real.g, &prep.csi_options)?;
                    let d = online_decide(&candidate, &tr.energy, &real);
                    let (coef, noise) = if d.silent {
                        (0.0, stats.sigma_sigma2)
                    } else {
                        csi_measurement(&d.scheme, &real.h, &real.g, stats)
                    };
                    let (f, _) = kalman_update(&tr.filter, d.y, coef, noise, stats)?;
                    (d.costs, d.beta, d.scaled, d.silent, f)
                }
            };
            tr.trace.overdraws += costs.iter().zip(stored.iter()).filter(|(t, s)| t > s).count();
            if record_energy {
                for i in 0..stored.len() {
                    tr.trace.energy.push(EnergyRecord {
                        k,
                        sensor: i,
                        stored: stored[i],
                        consumed: costs[i],
                        harvested: harvest[i],
                        beta,
                    });
                }
            }
            tr.energy = tr.energy.update(&costs, &harvest);
            tr.filter = next_filter;
            tr.trace.estimates.push(next_filter.theta_hat);
            tr.trace.squared_errors.push((next_filter.theta_hat - theta).powi(2));
            tr.trace.betas.push(beta);
            tr.trace.scaled.push(scaled);
            tr.trace.silent.push(silent);
        }
    }
    Ok(TrialOutcome {
        trial,
        thetas,
        schemes: trackers.into_iter().map(|t| (t.kind, t.trace)).collect(),
    })
}

/// Aggregated statistics of one scheme.
#[derive(Debug, Clone)]
pub struct SchemeSummary {
    /// Empirical MSE at `k = 1..=k_max`.
    pub mse: Vec<Summary>,
    pub scaled_fraction: Vec<f64>,
    pub silent_fraction: Vec<f64>,
    pub overdraws: usize,
    /// Number of (trial, step, sensor) feasibility checks.
    pub checks: usize,
    /// Squared errors indexed `[trial][k - 1]`.
    pub squared_errors: Vec<Vec<f64>>,
    pub estimates: Vec<Vec<f64>>,
}

#[derive(Debug, Clone)]
pub struct ExperimentResult {
    pub k_max: usize,
    pub trials: usize,
    pub failed_trials: usize,
    pub topology: Arc<Topology>,
    pub offline: Option<OfflineSolution>,
    pub schemes: BTreeMap<SchemeKind, SchemeSummary>,
    /// `E[(theta_online - theta_offline)^2]` per step when both ran.
    pub online_offline_gap: Option<Vec<Summary>>,
    /// Energy rows of the first successful trial, per scheme.
    pub energy: BTreeMap<SchemeKind, Vec<EnergyRecord>>,
}

pub fn run_experiment(cfg: &SimConfig) -> Result<ExperimentResult> {
    cfg.validate()?;
    let placement = draw_placement(cfg);
    let topo = Arc::new(build_topology(cfg, &placement)?);
    run_with_topology(cfg, topo)
}

pub fn run_with_topology(cfg: &SimConfig, topo: Arc<Topology>) -> Result<ExperimentResult> {
    let prep = Prepared::new(cfg, topo)?;
    run_prepared(cfg, &prep)
}

pub fn run_prepared(cfg: &SimConfig, prep: &Prepared) -> Result<ExperimentResult> {
    let outcomes: Vec<Result<TrialOutcome>> = (0..cfg.trials)
        .into_par_iter()
        .map(|t| run_trial(cfg, prep, t, t == 0))
        .collect();
    let mut ok = Vec::with_capacity(outcomes.len());
    let mut failed = 0;
    for (t, res) in outcomes.into_iter().enumerate() {
        match res {
            Ok(o) => ok.push(o),
            Err(e) => {
                log::warn!("trial {t} aborted: {e}");
                failed += 1;
            }
        }
    }
    if failed * 100 > cfg.trials || ok.is_empty() {
        return Err(Error::TrialFailures {
            failed,
            total: cfg.trials,
        });
    }
    Ok(aggregate(cfg, prep, ok, failed))
}

fn aggregate(cfg: &SimConfig, prep: &Prepared, outcomes: Vec<TrialOutcome>, failed: usize) -> ExperimentResult {
    let n_ok = outcomes.len() as f64;
    let n_sensors = prep.topo.n();
    let mut schemes = BTreeMap::new();
    let mut energy = BTreeMap::new();
    for &kind in &cfg.schemes {
        let traces: Vec<&SchemeTrace> = outcomes.iter().map(|o| &o.schemes[&kind]).collect();
        let mse = (0..cfg.k_max)
            .map(|k| summarize(&traces.iter().map(|t| t.squared_errors[k]).collect::<Vec<_>>()))
            .collect();
        let frac = |pick: fn(&SchemeTrace) -> &Vec<bool>| -> Vec<f64> {
            (0..cfg.k_max)
                .map(|k| traces.iter().filter(|t| pick(t)[k]).count() as f64 / n_ok)
                .collect()
        };
        schemes.insert(
            kind,
            SchemeSummary {
                mse,
                scaled_fraction: frac(|t| &t.scaled),
                silent_fraction: frac(|t| &t.silent),
                overdraws: traces.iter().map(|t| t.overdraws).sum(),
                checks: traces.len() * cfg.k_max * n_sensors,
                squared_errors: traces.iter().map(|t| t.squared_errors.clone()).collect(),
                estimates: traces.iter().map(|t| t.estimates.clone()).collect(),
            },
        );
        energy.insert(kind, traces[0].energy.clone());
    }
    let online_offline_gap = match (schemes.get(&SchemeKind::Online), schemes.get(&SchemeKind::Offline)) {
        (Some(on), Some(off)) => Some(
            (0..cfg.k_max)
                .map(|k| {
                    let d: Vec<f64> = on
                        .estimates
                        .iter()
                        .zip(&off.estimates)
                        .map(|(a, b)| (a[k] - b[k]).powi(2))
                        .collect();
                    summarize(&d)
                })
                .collect(),
        ),
        _ => None,
    };
    ExperimentResult {
        k_max: cfg.k_max,
        trials: outcomes.len(),
        failed_trials: failed,
        topology: Arc::clone(&prep.topo),
        offline: prep.offline.clone(),
        schemes,
        online_offline_gap,
        energy,
    }
}

impl ExperimentResult {
    pub fn mse(&self, kind: SchemeKind, k: usize) -> Option<&Summary> {
        self.schemes.get(&kind).and_then(|s| s.mse.get(k.checked_sub(1)?))
    }
}

/// Replays `S_{k+1} = (S_k - T_k)^+ + H_k` over energy rows and returns
/// the largest mismatch with the recorded next-step storage.
pub fn replay_energy(records: &[EnergyRecord]) -> f64 {
    let mut by_sensor: BTreeMap<usize, Vec<&EnergyRecord>> = BTreeMap::new();
    for r in records {
        by_sensor.entry(r.sensor).or_default().push(r);
    }
    let mut worst: f64 = 0.0;
    for rows in by_sensor.values() {
        for pair in rows.windows(2) {
            let expect = (pair[0].stored - pair[0].consumed).max(0.0) + pair[0].harvested;
            worst = worst.max((expect - pair[1].stored).abs());
        }
    }
    worst
}
