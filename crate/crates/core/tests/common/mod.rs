//! Random instances shared by the integration tests.
#![allow(dead_code)]

use nalgebra::{DMatrix, DVector};
use rand::Rng;

use ehcollab::model::{SystemStatistics, Topology};

/// Random PSD matrix `B B^T / n * scale` plus `floor * I`.
pub fn random_psd<R: Rng>(rng: &mut R, n: usize, scale: f64, floor: f64) -> DMatrix<f64> {
    let b = DMatrix::from_fn(n, n, |_, _| rng.random_range(-1.0..1.0));
    let mut c = &b * b.transpose() * (scale / n as f64) + DMatrix::identity(n, n) * floor;
    c = (&c + c.transpose()) * 0.5;
    c
}

/// Statistics with `N = n`, `M = m` that keep every transmitting sensor
/// strictly feasible.
pub fn random_stats<R: Rng>(rng: &mut R, n: usize, m: usize) -> SystemStatistics {
    let sigma_kappa2 = rng.random_range(0.1..1.0);
    let eta = rng.random_range(0.01..0.5);
    let (h_scale, g_scale, eps_scale) = (
        rng.random_range(0.0..0.8),
        rng.random_range(0.0..0.8),
        rng.random_range(0.1..2.0),
    );
    SystemStatistics {
        alpha: rng.random_range(-0.95..0.95),
        sigma_tau2: rng.random_range(0.1..2.0),
        h_mean: DVector::from_fn(n, |_, _| rng.random_range(0.2..2.0)),
        h_cov: random_psd(rng, n, h_scale, 0.0),
        g_mean: DVector::from_fn(m, |_, _| rng.random_range(0.2..2.0)),
        g_cov: random_psd(rng, m, g_scale, 0.0),
        eps_cov: random_psd(rng, n, eps_scale, 0.05),
        sigma_kappa2,
        sigma_sigma2: rng.random_range(0.1..2.0),
        mu: DVector::from_fn(n, |_, _| eta + sigma_kappa2 + rng.random_range(0.5..10.0)),
        eta,
        s0: rng.random_range(1.0..100.0),
    }
}

/// Random support with the required self-loops and each other entry
/// present with probability `density`.
pub fn random_topology<R: Rng>(rng: &mut R, m: usize, n: usize, density: f64) -> Topology {
    let a = (0..m * n)
        .map(|idx| {
            let (i, j) = (idx / n, idx % n);
            i == j || rng.random_bool(density)
        })
        .collect();
    Topology::new(m, n, a).expect("self-loops are present")
}

pub fn rel_err(a: f64, b: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(1.0)
}
