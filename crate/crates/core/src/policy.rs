//! Real-time side of the system: energy buffers, realized transmission
//! costs, the scaling policy that keeps every step within stored energy,
//! max-consensus for the common scale factor, and the per-step schemes.

use std::collections::VecDeque;
use std::sync::Arc;

use nalgebra::DVector;
use rand_distr::{Distribution, Exp};

use crate::error::{Error, Result};
use crate::model::{observe, CollaborationScheme, Realization, Source, SystemStatistics, Topology, TrialStreams};
use crate::offline::{solve_ratio, SolveOptions};
use crate::vectorize::{assemble_csi_coefficients, CoefficientAssembler};

/// Smallest scale factor tried before a step is skipped altogether.
pub const MIN_BETA: f64 = 1e-6;
/// Geometric factor of the repair loop.
pub const SHRINK: f64 = 0.9;

/// Stored energy per sensor.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyState {
    pub stored: DVector<f64>,
}

impl EnergyState {
    pub fn new(stored: DVector<f64>) -> Self {
        Self { stored }
    }

    /// Buffers holding one harvest draw each.
    pub fn initial(stats: &SystemStatistics, streams: &mut TrialStreams) -> Result<Self> {
        Ok(Self::new(sample_harvest(stats, streams)?))
    }

    pub fn update(&self, consumed: &DVector<f64>, harvested: &DVector<f64>) -> Self {
        update_energy(self, consumed, harvested)
    }
}

/// `S <- (S - T)^+ + H`, elementwise.
pub fn update_energy(state: &EnergyState, consumed: &DVector<f64>, harvested: &DVector<f64>) -> EnergyState {
    let stored = DVector::from_fn(state.stored.len(), |i, _| {
        (state.stored[i] - consumed[i]).max(0.0) + harvested[i]
    });
    EnergyState { stored }
}

/// Exponential harvests with means `mu_i`.
pub fn sample_harvest(stats: &SystemStatistics, streams: &mut TrialStreams) -> Result<DVector<f64>> {
    let rng = streams.get(Source::Harvest);
    let mut out = DVector::zeros(stats.mu.len());
    for (i, &mu) in stats.mu.iter().enumerate() {
        let dist = Exp::new(1.0 / mu)
            .map_err(|e| Error::InvalidStatistics(format!("harvest mean {mu}: {e}")))?;
        out[i] = dist.sample(rng);
    }
    Ok(out)
}

/// Energy spent by each sensor on one realization: `x_i^2` times the
/// squared weights sensor `i` shares with other rows, plus `z_i^2` for
/// the `M` sensors that transmit to the fusion center.
pub fn realized_costs(scheme: &CollaborationScheme, real: &Realization, z: &DVector<f64>) -> DVector<f64> {
    let topo = scheme.topology();
    let x = real.measurements();
    let mut costs = DVector::zeros(topo.n());
    for (&(r, c), w) in topo.index_map().iter().zip(scheme.weights().iter()) {
        if r != c {
            costs[c] += (w * x[c]).powi(2);
        }
    }
    for i in 0..topo.m() {
        costs[i] += z[i] * z[i];
    }
    costs
}

/// Outcome of the scaling policy at one step.
#[derive(Debug, Clone)]
pub struct PolicyDecision {
    pub scheme: CollaborationScheme,
    /// Scale applied to the candidate; 0 when the step is silent.
    pub beta: f64,
    pub costs: DVector<f64>,
    /// Fusion-center observation under the chosen scheme.
    pub y: f64,
    /// The candidate was not used as is.
    pub scaled: bool,
    /// Number of geometric shrinks after the closed-form scale.
    pub shrinks: usize,
    /// No scale down to `MIN_BETA` fit the budget; nobody transmits.
    pub silent: bool,
}

fn fits(costs: &DVector<f64>, stored: &DVector<f64>) -> bool {
    costs.iter().zip(stored.iter()).all(|(t, s)| t <= s)
}

/// Per-sensor scale `min{1, sqrt(S_i / T_i)}`, with 1 when `T_i = 0`.
pub fn local_betas(costs: &DVector<f64>, stored: &DVector<f64>) -> DVector<f64> {
    DVector::from_fn(costs.len(), |i, _| {
        if costs[i] <= 0.0 {
            1.0
        } else {
            (stored[i] / costs[i]).sqrt().min(1.0)
        }
    })
}

/// Scales `candidate` so that the realized costs fit the stored energy.
/// The closed-form scale is exact for the weight terms; the additive
/// collaboration noise does not scale, so a geometric repair follows.
pub fn online_decide(candidate: &CollaborationScheme, state: &EnergyState, real: &Realization) -> PolicyDecision {
    let (y, z) = observe(real, candidate);
    let costs = realized_costs(candidate, real, &z);
    if fits(&costs, &state.stored) {
        return PolicyDecision {
            scheme: candidate.clone(),
            beta: 1.0,
            costs,
            y,
            scaled: false,
            shrinks: 0,
            silent: false,
        };
    }
    let mut beta = local_betas(&costs, &state.stored).min();
    let mut shrinks = 0;
    while beta >= MIN_BETA {
        let scheme = candidate.scaled(beta);
        let (y, z) = observe(real, &scheme);
        let costs = realized_costs(&scheme, real, &z);
        if fits(&costs, &state.stored) {
            if shrinks > 0 {
                log::debug!("scale repaired by {shrinks} shrinks to {beta}");
            }
            return PolicyDecision {
                scheme,
                beta,
                costs,
                y,
                scaled: true,
                shrinks,
                silent: false,
            };
        }
        beta *= SHRINK;
        shrinks += 1;
    }
    log::debug!("no feasible scale; step is silent");
    PolicyDecision {
        scheme: CollaborationScheme::zeros(Arc::clone(candidate.topology())),
        beta: 0.0,
        costs: DVector::zeros(state.stored.len()),
        y: real.sigma_fc,
        scaled: true,
        shrinks,
        silent: true,
    }
}

/// Connected components of the undirected support.
pub fn components(topo: &Topology) -> usize {
    let adj = topo.undirected_neighbors();
    let mut seen = vec![false; adj.len()];
    let mut count = 0;
    for start in 0..adj.len() {
        if seen[start] {
            continue;
        }
        count += 1;
        seen[start] = true;
        let mut queue = VecDeque::from([start]);
        while let Some(v) = queue.pop_front() {
            for &u in &adj[v] {
                if !seen[u] {
                    seen[u] = true;
                    queue.push_back(u);
                }
            }
        }
    }
    count
}

/// Synchronous neighbor-max rounds on `-beta`. Entry `r` of the result
/// holds every node's estimate of the common scale after `r` rounds.
pub fn consensus_trace(local: &DVector<f64>, topo: &Topology, rounds: usize) -> Vec<DVector<f64>> {
    let adj = topo.undirected_neighbors();
    let mut state = -local;
    let mut trace = vec![-&state];
    for _ in 0..rounds {
        let next = DVector::from_fn(state.len(), |i, _| {
            adj[i].iter().map(|&j| state[j]).fold(state[i], f64::max)
        });
        state = next;
        trace.push(-&state);
    }
    trace
}

/// Every node's value of `min_i beta_i` after `rounds` rounds of
/// max-consensus on `-beta_i`.
pub fn max_consensus_beta(local: &DVector<f64>, topo: &Topology, rounds: usize) -> Result<DVector<f64>> {
    if local.len() != topo.n() {
        return Err(Error::Dimension("one local scale per sensor is required".into()));
    }
    let comps = components(topo);
    if comps > 1 {
        return Err(Error::Disconnected { components: comps });
    }
    Ok(consensus_trace(local, topo, rounds).pop().expect("trace has the initial entry"))
}

/// Statistics-based scheme for prior variance `s_k`: the offline problem
/// with `s_inf` replaced by `s_k`.
pub fn greedy_stat_scheme(stats: &SystemStatistics, topo: &Arc<Topology>, s_k: f64) -> Result<CollaborationScheme> {
    let assembler = CoefficientAssembler::new(stats, topo)?;
    greedy_stat_scheme_with(&assembler, stats, topo, s_k, &SolveOptions::default())
}

pub fn greedy_stat_scheme_with(
    assembler: &CoefficientAssembler,
    stats: &SystemStatistics,
    topo: &Arc<Topology>,
    s_k: f64,
    opts: &SolveOptions,
) -> Result<CollaborationScheme> {
    let coef = assembler.assemble(s_k);
    let sol = solve_ratio(&coef, stats, opts)?;
    CollaborationScheme::new(Arc::clone(topo), sol.w)
}

/// Scheme built from the realized gains `h_k`, `g_k`, with the expected
/// energy constraints evaluated at prior variance `s_k`.
pub fn greedy_csi_scheme(
    stats: &SystemStatistics,
    topo: &Arc<Topology>,
    s_k: f64,
    h_k: &DVector<f64>,
    g_k: &DVector<f64>,
) -> Result<CollaborationScheme> {
    greedy_csi_scheme_with(stats, topo, s_k, h_k, g_k, &SolveOptions::default())
}

pub fn greedy_csi_scheme_with(
    stats: &SystemStatistics,
    topo: &Arc<Topology>,
    s_k: f64,
    h_k: &DVector<f64>,
    g_k: &DVector<f64>,
    opts: &SolveOptions,
) -> Result<CollaborationScheme> {
    let coef = assemble_csi_coefficients(stats, topo, s_k, h_k, g_k)?;
    let sol = solve_ratio(&coef, stats, opts)?;
    CollaborationScheme::new(Arc::clone(topo), sol.w)
}
