//! Matrix-to-vector rewriting of the quadratic forms in the collaboration
//! problem. Every form in `W` is expressed in the vector of supported weights
//! `w`, which removes the sparsity constraint from the optimization.

use nalgebra::{DMatrix, DVector};

use crate::error::{Error, Result};
use crate::linalg::symmetrize_in_place;
use crate::model::{lambda_g, lambda_h, SystemStatistics, Topology};

/// Returns `B` (`L x N`) with `b^T W = w^T B`.
pub fn lift_linear(b: &DVector<f64>, topo: &Topology) -> Result<DMatrix<f64>> {
    if b.len() != topo.m() {
        return Err(Error::Dimension(format!(
            "vector has length {}, topology has M = {}",
            b.len(),
            topo.m()
        )));
    }
    let mut out = DMatrix::zeros(topo.len(), topo.n());
    for (l, &(r, c)) in topo.index_map().iter().enumerate() {
        out[(l, c)] = b[r];
    }
    Ok(out)
}

/// Returns `E` (`L x L`) with `tr(C W D W^T) = w^T E w`, where
/// `E[k, l] = C[m_k, m_l] D[n_k, n_l]`.
pub fn lift_quadratic(c: &DMatrix<f64>, d: &DMatrix<f64>, topo: &Topology) -> Result<DMatrix<f64>> {
    if c.shape() != (topo.m(), topo.m()) || d.shape() != (topo.n(), topo.n()) {
        return Err(Error::Dimension(format!(
            "C is {:?} and D is {:?} for a {}x{} topology",
            c.shape(),
            d.shape(),
            topo.m(),
            topo.n()
        )));
    }
    let map = topo.index_map();
    let l = map.len();
    let mut e = DMatrix::zeros(l, l);
    for (k, &(mk, nk)) in map.iter().enumerate() {
        for (j, &(mj, nj)) in map.iter().enumerate() {
            e[(k, j)] = c[(mk, mj)] * d[(nk, nj)];
        }
    }
    symmetrize_in_place(&mut e);
    Ok(e)
}

/// Selection matrix `F` (`(L - M) x L`) picking the off-diagonal weights.
pub fn selection_matrix_f(topo: &Topology) -> Result<DMatrix<f64>> {
    let diag = topo.index_map().iter().filter(|(r, c)| r == c).count();
    if diag != topo.m() {
        let missing = (0..topo.m()).find(|&i| !topo.contains(i, i)).unwrap_or(0);
        return Err(Error::MissingSelfLoop(missing));
    }
    let off = topo.off_diagonal_positions();
    let mut f = DMatrix::zeros(off.len(), topo.len());
    for (row, &col) in off.iter().enumerate() {
        f[(row, col)] = 1.0;
    }
    Ok(f)
}

/// Coefficients of the vectorized ratio problem
///
/// ```text
/// maximize   w^T Omega_N w / (w^T Omega_D w + const_d)
/// subject to w^T Omega_T[i] w + sigma_kappa2 <= mu_i - eta   (i < M)
///            w^T Omega_C[i] w               <= mu_i - eta   (M <= i < N)
/// ```
#[derive(Debug, Clone)]
pub struct QuadraticCoefficients {
    /// `Omega_N = a a^T` with `a^T w = g^T W h`.
    pub numerator: DVector<f64>,
    pub omega_n: DMatrix<f64>,
    pub omega_d: DMatrix<f64>,
    /// Indexed by FC-communicating sensor `i < M`.
    pub omega_t: Vec<DMatrix<f64>>,
    /// Indexed by `i - M` for the remaining sensors.
    pub omega_c: Vec<DMatrix<f64>>,
    /// `sigma_kappa2 tr(Lambda_g) + sigma_sigma2`.
    pub const_d: f64,
    /// `sigma_kappa2 g^T g + sigma_sigma2`.
    pub const_d_mean: f64,
}

impl QuadraticCoefficients {
    pub fn len(&self) -> usize {
        self.numerator.len()
    }

    pub fn is_empty(&self) -> bool {
        self.numerator.is_empty()
    }

    /// Energy-cost matrix of sensor `i` over all `N` sensors.
    pub fn cost_matrix(&self, i: usize) -> &DMatrix<f64> {
        let m = self.omega_t.len();
        if i < m {
            &self.omega_t[i]
        } else {
            &self.omega_c[i - m]
        }
    }

    pub fn ratio(&self, w: &DVector<f64>) -> f64 {
        let num = self.numerator.dot(w).powi(2);
        num / (w.dot(&(&self.omega_d * w)) + self.const_d)
    }
}

/// Assembles coefficients for repeated values of the prior variance `s`.
/// The `s`-independent pieces are lifted once; `assemble` only combines
/// `A + s B` for every coefficient block.
#[derive(Debug, Clone)]
pub struct CoefficientAssembler {
    m: usize,
    n: usize,
    numerator: DVector<f64>,
    d_eps: DMatrix<f64>,
    d_h: DMatrix<f64>,
    t2_eps: Vec<DMatrix<f64>>,
    t2_h: Vec<DMatrix<f64>>,
    f: DMatrix<f64>,
    off_cols: Vec<usize>,
    eps_diag: DVector<f64>,
    lh_diag: DVector<f64>,
    const_d: f64,
    const_d_mean: f64,
}

impl CoefficientAssembler {
    pub fn new(stats: &SystemStatistics, topo: &Topology) -> Result<Self> {
        stats.validate()?;
        check_dims(stats, topo)?;
        let lg = lambda_g(stats);
        let lh = lambda_h(stats);
        let g_lift = lift_linear(&stats.g_mean, topo)?;
        let numerator = &g_lift * &stats.h_mean;
        let m = topo.m();
        let mut t2_eps = Vec::with_capacity(m);
        let mut t2_h = Vec::with_capacity(m);
        for i in 0..m {
            let mut sel = DMatrix::zeros(m, m);
            sel[(i, i)] = 1.0;
            t2_eps.push(lift_quadratic(&sel, &stats.eps_cov, topo)?);
            t2_h.push(lift_quadratic(&sel, &lh, topo)?);
        }
        let off = topo.off_diagonal_positions();
        let off_cols = off.iter().map(|&l| topo.entry(l).1).collect();
        Ok(Self {
            m,
            n: topo.n(),
            numerator,
            d_eps: lift_quadratic(&lg, &stats.eps_cov, topo)?,
            d_h: lift_quadratic(&lg, &lh, topo)?,
            t2_eps,
            t2_h,
            f: selection_matrix_f(topo)?,
            off_cols,
            eps_diag: stats.eps_cov.diagonal(),
            lh_diag: lh.diagonal(),
            const_d: stats.sigma_kappa2 * lg.trace() + stats.sigma_sigma2,
            const_d_mean: stats.sigma_kappa2 * stats.g_mean.norm_squared() + stats.sigma_sigma2,
        })
    }

    pub fn assemble(&self, s: f64) -> QuadraticCoefficients {
        let omega_d = &self.d_eps + &self.d_h * s;
        let mut omega_t = Vec::with_capacity(self.m);
        let mut omega_c = Vec::with_capacity(self.n - self.m);
        for i in 0..self.n {
            let collab = self.collaboration_part(i, s);
            if i < self.m {
                let fc = &self.t2_eps[i] + &self.t2_h[i] * s;
                omega_t.push(collab + fc);
            } else {
                omega_c.push(collab);
            }
        }
        QuadraticCoefficients {
            omega_n: &self.numerator * self.numerator.transpose(),
            numerator: self.numerator.clone(),
            omega_d,
            omega_t,
            omega_c,
            const_d: self.const_d,
            const_d_mean: self.const_d_mean,
        }
    }

    /// `F^T Omega_i^{T(0)} F`, where `Omega_i^{T(0)}` is diagonal with
    /// `E[x_i^2]` on the off-diagonal weights leaving sensor `i`.
    fn collaboration_part(&self, i: usize, s: f64) -> DMatrix<f64> {
        let k = self.off_cols.len();
        let x_ii = self.eps_diag[i] + s * self.lh_diag[i];
        let mut t0 = DMatrix::zeros(k, k);
        for (kk, &col) in self.off_cols.iter().enumerate() {
            if col == i {
                t0[(kk, kk)] = x_ii;
            }
        }
        self.f.transpose() * t0 * &self.f
    }
}

/// Coefficients of the offline / statistics-based problem at prior variance `s`.
pub fn assemble_coefficients(
    stats: &SystemStatistics,
    topo: &Topology,
    s: f64,
) -> Result<QuadraticCoefficients> {
    if !(s >= 0.0) {
        return Err(Error::InvalidStatistics(format!("prior variance {s} is negative")));
    }
    Ok(CoefficientAssembler::new(stats, topo)?.assemble(s))
}

/// Coefficients of the CSI problem: realized gains replace the means in the
/// objective, giving `(g_k^T W h_k)^2 / (g_k^T W eps_cov W^T g_k +
/// sigma_kappa2 g_k^T g_k + sigma_sigma2)`; the energy constraints keep their
/// expected form at prior variance `s`.
pub fn assemble_csi_coefficients(
    stats: &SystemStatistics,
    topo: &Topology,
    s: f64,
    h_k: &DVector<f64>,
    g_k: &DVector<f64>,
) -> Result<QuadraticCoefficients> {
    if h_k.len() != topo.n() || g_k.len() != topo.m() {
        return Err(Error::Dimension("realized gains disagree with the topology".into()));
    }
    let mut coef = assemble_coefficients(stats, topo, s)?;
    let numerator = lift_linear(g_k, topo)? * h_k;
    let gg = g_k * g_k.transpose();
    coef.omega_d = lift_quadratic(&gg, &stats.eps_cov, topo)?;
    coef.omega_n = &numerator * numerator.transpose();
    coef.numerator = numerator;
    coef.const_d = stats.sigma_kappa2 * g_k.norm_squared() + stats.sigma_sigma2;
    coef.const_d_mean = coef.const_d;
    Ok(coef)
}

fn check_dims(stats: &SystemStatistics, topo: &Topology) -> Result<()> {
    if stats.n() != topo.n() || stats.m() != topo.m() {
        return Err(Error::Dimension(format!(
            "statistics are for N = {}, M = {}; topology is {}x{}",
            stats.n(),
            stats.m(),
            topo.m(),
            topo.n()
        )));
    }
    Ok(())
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::linalg::{min_eigenvalue, quad_form, sym_eigenvalues};
    use crate::model::CollaborationScheme;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;
    use std::sync::Arc;

    fn random_topology(rng: &mut ChaCha8Rng, m: usize, n: usize, p: f64) -> Topology {
        let mut a = vec![false; m * n];
        for r in 0..m {
            for c in 0..n {
                a[r * n + c] = r == c || rng.random::<f64>() < p;
            }
        }
        Topology::new(m, n, a).unwrap()
    }

    fn random_psd(rng: &mut ChaCha8Rng, n: usize) -> DMatrix<f64> {
        let a = DMatrix::from_fn(n, n, |_, _| rng.random::<f64>() * 2.0 - 1.0);
        &a * a.transpose()
    }

    fn a1() -> Topology {
        Topology::from_rows(&[vec![1, 0, 1], vec![0, 1, 1], vec![1, 0, 1]]).unwrap()
    }

    #[test]
    fn lift_linear_identity_topology() {
        let topo = Topology::self_loops(3, 3).unwrap();
        let b = DVector::from_vec(vec![2.0, -1.0, 0.5]);
        let big_b = lift_linear(&b, &topo).unwrap();
        assert_eq!(big_b, DMatrix::from_diagonal(&b));
    }

    #[test]
    fn lift_linear_matches_dense_product() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=n);
            let topo = Arc::new(random_topology(&mut rng, m, n, 0.5));
            let b = DVector::from_fn(m, |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let w = DVector::from_fn(topo.len(), |_, _| rng.random::<f64>() * 4.0 - 2.0);
            let scheme = CollaborationScheme::new(Arc::clone(&topo), w.clone()).unwrap();
            let dense = b.transpose() * scheme.matrix();
            let lifted = w.transpose() * lift_linear(&b, &topo).unwrap();
            assert!((dense - lifted).amax() < 1e-12);
        }
    }

    #[test]
    fn lift_quadratic_identity_and_zero() {
        let topo = a1();
        let e = lift_quadratic(&DMatrix::identity(3, 3), &DMatrix::identity(3, 3), &topo).unwrap();
        assert_eq!(e, DMatrix::identity(6, 6));
        let z = lift_quadratic(&DMatrix::zeros(3, 3), &DMatrix::identity(3, 3), &topo).unwrap();
        assert_eq!(z, DMatrix::zeros(6, 6));
    }

    #[test]
    fn lift_quadratic_matches_dense_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(5);
        for _ in 0..100 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=n);
            let topo = Arc::new(random_topology(&mut rng, m, n, 0.6));
            let c = random_psd(&mut rng, m);
            let d = random_psd(&mut rng, n);
            let w = DVector::from_fn(topo.len(), |_, _| rng.random::<f64>() * 2.0 - 1.0);
            let wm = CollaborationScheme::new(Arc::clone(&topo), w.clone()).unwrap().matrix();
            let dense = (&c * &wm * &d * wm.transpose()).trace();
            let e = lift_quadratic(&c, &d, &topo).unwrap();
            assert!((dense - quad_form(&e, &w)).abs() < 1e-12 * dense.abs().max(1.0));
        }
    }

    #[test]
    fn lift_quadratic_is_bilinear() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let topo = random_topology(&mut rng, 3, 5, 0.5);
        let (c1, c2) = (random_psd(&mut rng, 3), random_psd(&mut rng, 3));
        let d = random_psd(&mut rng, 5);
        let lhs = lift_quadratic(&(&c1 * 2.0 + &c2 * 3.0), &d, &topo).unwrap();
        let rhs = lift_quadratic(&c1, &d, &topo).unwrap() * 2.0 + lift_quadratic(&c2, &d, &topo).unwrap() * 3.0;
        assert!((lhs - rhs).amax() < 1e-12);
    }

    #[test]
    fn selection_matrix_worked_example() {
        let f = selection_matrix_f(&a1()).unwrap();
        let expect = DMatrix::from_row_slice(
            3,
            6,
            &[
                0.0, 1.0, 0.0, 0.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 1.0, 0.0, 0.0, //
                0.0, 0.0, 0.0, 0.0, 1.0, 0.0,
            ],
        );
        assert_eq!(f, expect);
        let none = selection_matrix_f(&Topology::self_loops(4, 4).unwrap()).unwrap();
        assert_eq!(none.shape(), (0, 4));
    }

    #[test]
    fn selection_matrix_rows_are_orthonormal() {
        let mut rng = ChaCha8Rng::seed_from_u64(17);
        for _ in 0..20 {
            let n = rng.random_range(1..=8);
            let m = rng.random_range(1..=n);
            let topo = random_topology(&mut rng, m, n, 0.5);
            let f = selection_matrix_f(&topo).unwrap();
            assert_eq!(f.nrows(), topo.len() - m);
            assert_eq!(&f * f.transpose(), DMatrix::identity(f.nrows(), f.nrows()));
        }
    }

    #[test]
    fn scalar_case_hand_expansion() {
        let mut st = SystemStatistics::reference_defaults(1, 1);
        st.g_mean[0] = 1.3;
        st.h_mean[0] = 0.7;
        let topo = Topology::full(1, 1).unwrap();
        let s = 2.0;
        let coef = assemble_coefficients(&st, &topo, s).unwrap();
        assert!((coef.omega_n[(0, 0)] - (1.3f64 * 0.7).powi(2)).abs() < 1e-14);
        let x = st.lambda_h()[(0, 0)] * s + st.eps_cov[(0, 0)];
        assert!((coef.omega_t[0][(0, 0)] - x).abs() < 1e-14);
        assert!(coef.omega_c.is_empty());
    }

    #[test]
    fn vanishing_second_moment() {
        let mut st = SystemStatistics::reference_defaults(3, 2);
        st.eps_cov = DMatrix::zeros(3, 3);
        let topo = Topology::full(2, 3).unwrap();
        let coef = assemble_coefficients(&st, &topo, 0.0).unwrap();
        assert_eq!(coef.omega_d.amax(), 0.0);
        assert!(coef.omega_t.iter().all(|t| t.amax() == 0.0));
    }

    #[test]
    fn assembled_matrices_are_psd_and_numerator_rank_one() {
        let mut rng = ChaCha8Rng::seed_from_u64(21);
        for _ in 0..30 {
            let n = rng.random_range(2..=8);
            let m = rng.random_range(1..=n);
            let topo = random_topology(&mut rng, m, n, 0.5);
            let st = SystemStatistics::reference_defaults(n, m);
            let coef = assemble_coefficients(&st, &topo, rng.random::<f64>() * 5.0).unwrap();
            let ev = sym_eigenvalues(&coef.omega_n);
            let top = *ev.last().unwrap();
            if ev.len() > 1 {
                assert!(ev[ev.len() - 2].abs() < 1e-10 * top);
            }
            assert!(min_eigenvalue(&coef.omega_n) >= -1e-9 * top);
            assert!(min_eigenvalue(&coef.omega_d) >= -1e-9);
            for i in 0..n {
                assert!(min_eigenvalue(coef.cost_matrix(i)) >= -1e-9);
            }
        }
    }

    #[test]
    fn denominator_matches_dense_trace() {
        let mut rng = ChaCha8Rng::seed_from_u64(23);
        let st = SystemStatistics::reference_defaults(5, 4);
        let topo = Arc::new(random_topology(&mut rng, 4, 5, 0.5));
        let s = 1.7;
        let coef = assemble_coefficients(&st, &topo, s).unwrap();
        let w = DVector::from_fn(topo.len(), |_, _| rng.random::<f64>() - 0.5);
        let wm = CollaborationScheme::new(Arc::clone(&topo), w.clone()).unwrap().matrix();
        let x = st.lambda_h() * s + &st.eps_cov;
        let dense = (st.lambda_g() * &wm * x * wm.transpose()).trace();
        assert!((dense - quad_form(&coef.omega_d, &w)).abs() < 1e-12 * dense.max(1.0));
    }

    #[test]
    fn assembler_matches_direct_lifts_at_any_s() {
        let st = SystemStatistics::reference_defaults(3, 3);
        let topo = a1();
        let asm = CoefficientAssembler::new(&st, &topo).unwrap();
        for s in [0.0, 1.0, 64.5] {
            let coef = asm.assemble(s);
            let x = st.second_moment_x(s);
            let direct = lift_quadratic(&st.lambda_g(), &x, &topo).unwrap();
            assert!((coef.omega_d - direct).amax() < 1e-12);
        }
    }
}
