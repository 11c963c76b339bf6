//! Dense primal-dual interior-point method for
//!
//! ```text
//! maximize   tr(C X)
//! subject to tr(A_j X) <= b_j,   j = 1..m
//!            X >= 0 (PSD)
//! ```
//!
//! Inequalities carry explicit slacks `s >= 0` whose dual is `y`. Search
//! directions use Nesterov-Todd scaling with a Mehrotra predictor-corrector.
//! In the NT-scaled space both `X` and `Z` map to the same diagonal matrix,
//! which makes the corrector and the step-length tests cheap.

use nalgebra::{Cholesky, DMatrix, DVector, Dyn};

use crate::linalg::{inner, sym_eigen, sym_eigenvalues, symmetrize_in_place};

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SdpOptions {
    /// Target relative duality gap and relative residuals.
    pub tol: f64,
    /// Looser level at which an iterate is still reported as optimal if
    /// the method breaks down before reaching `tol`.
    pub accept_tol: f64,
    pub max_iter: usize,
    /// Fraction of the distance to the cone boundary taken per step.
    pub step_fraction: f64,
}

impl Default for SdpOptions {
    fn default() -> Self {
        Self {
            tol: 1e-12,
            accept_tol: 1e-9,
            max_iter: 200,
            step_fraction: 0.98,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum SdpStatus {
    Optimal,
    Infeasible,
    MaxIterations,
    NumericalFailure,
}

/// Per-iteration log entry, in the caller's (unscaled) units.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct IterationRecord {
    pub iteration: usize,
    pub primal_objective: f64,
    pub dual_objective: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub relative_gap: f64,
    pub mu: f64,
}

#[derive(Debug, Clone)]
pub struct SdpSolution {
    pub x: DMatrix<f64>,
    /// Dual multipliers of the inequality constraints.
    pub y: DVector<f64>,
    /// Dual slack `sum_j y_j A_j - C`.
    pub z: DMatrix<f64>,
    pub objective: f64,
    pub dual_objective: f64,
    pub status: SdpStatus,
    pub iterations: usize,
    /// Relative duality gap `|dual - primal| / (1 + |primal| + |dual|)`.
    pub duality_gap: f64,
    pub primal_infeasibility: f64,
    pub dual_infeasibility: f64,
    pub trace: Vec<IterationRecord>,
    pub message: String,
}

struct Constraint {
    support: Vec<usize>,
    /// `A_j` restricted to `support x support` (scaled).
    sub: DMatrix<f64>,
    scale: f64,
}

impl Constraint {
    fn new(a: &DMatrix<f64>) -> Self {
        let n = a.nrows();
        let support: Vec<usize> = (0..n)
            .filter(|&i| (0..n).any(|j| a[(i, j)] != 0.0 || a[(j, i)] != 0.0))
            .collect();
        let norm = a.norm();
        let scale = if norm > 0.0 { norm } else { 1.0 };
        let sub = DMatrix::from_fn(support.len(), support.len(), |p, q| {
            a[(support[p], support[q])] / scale
        });
        Self {
            support,
            sub,
            scale,
        }
    }

    /// `tr(A_j X)`.
    fn apply(&self, x: &DMatrix<f64>) -> f64 {
        let s = &self.support;
        let mut acc = 0.0;
        for (p, &i) in s.iter().enumerate() {
            for (q, &j) in s.iter().enumerate() {
                acc += self.sub[(p, q)] * x[(j, i)];
            }
        }
        acc
    }

    /// `out += coef * A_j`.
    fn add_to(&self, out: &mut DMatrix<f64>, coef: f64) {
        let s = &self.support;
        for (p, &i) in s.iter().enumerate() {
            for (q, &j) in s.iter().enumerate() {
                out[(i, j)] += coef * self.sub[(p, q)];
            }
        }
    }

    /// `W A_j W`.
    fn sandwich(&self, w: &DMatrix<f64>) -> DMatrix<f64> {
        let cols = w.select_columns(&self.support);
        let left = &cols * &self.sub;
        left * cols.transpose()
    }
}

struct Scaling {
    w: DMatrix<f64>,
    g: DMatrix<f64>,
    /// Diagonal of the scaled point `V = G^{-1} X G^{-T} = G^T Z G`.
    v: DVector<f64>,
}

struct Direction {
    /// Primal step in the scaled space, `G^{-1} dX G^{-T}`.
    dx_s: DMatrix<f64>,
    /// `G^T dZ G`.
    dz_s: DMatrix<f64>,
    ds: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<f64>,
}

/// Solves the inequality-form SDP. The returned status says whether the
/// solution is usable; this function never fails outright.
pub fn solve(
    c: &DMatrix<f64>,
    a: &[DMatrix<f64>],
    b: &[f64],
    opts: &SdpOptions,
) -> SdpSolution {
    let n = c.nrows();
    let m = a.len();
    let c_norm = c.norm();
    let c_scale = if c_norm > 0.0 { c_norm } else { 1.0 };
    let cs = c / c_scale;
    let cons: Vec<Constraint> = a.iter().map(Constraint::new).collect();
    let bs = DVector::from_iterator(m, cons.iter().zip(b).map(|(k, &bj)| bj / k.scale));
    let b_norm = bs.norm();
    let cs_norm = cs.norm();

    // Start: X = rho I with every positive right-hand side strictly slack.
    let mut rho: f64 = 1.0;
    for (k, &bj) in cons.iter().zip(bs.iter()) {
        let tr: f64 = (0..k.support.len()).map(|p| k.sub[(p, p)]).sum();
        if bj > 0.0 && tr > 0.0 {
            rho = rho.min(0.5 * bj / tr);
        }
    }
    let mut x = DMatrix::identity(n, n) * rho;
    let mut z = DMatrix::identity(n, n);
    let mut y = DVector::from_element(m, 1.0);
    let mut s = DVector::from_iterator(
        m,
        cons.iter()
            .zip(bs.iter())
            .map(|(k, &bj)| (bj - k.apply(&x)).max(1.0)),
    );

    let mut trace = Vec::new();
    let mut status = SdpStatus::MaxIterations;
    let mut message = String::new();
    let mut iterations = 0;
    let mut stalls = 0;
    let mut accepted: Option<(DMatrix<f64>, DVector<f64>, usize)> = None;

    let unscaled_y = |y: &DVector<f64>| {
        DVector::from_iterator(m, y.iter().zip(&cons).map(|(v, k)| v * c_scale / k.scale))
    };

    for iter in 0..=opts.max_iter {
        iterations = iter;
        let ax = DVector::from_iterator(m, cons.iter().map(|k| k.apply(&x)));
        let r_p = &bs - &ax - &s;
        let mut r_d = &cs + &z;
        for (k, &yj) in cons.iter().zip(y.iter()) {
            k.add_to(&mut r_d, -yj);
        }
        let pobj = inner(&cs, &x);
        let dobj = bs.dot(&y);
        let gap_abs = inner(&x, &z) + s.dot(&y);
        let mu = gap_abs / (n + m) as f64;
        let rel_gap = (dobj - pobj).abs() / (1.0 + pobj.abs() + dobj.abs());
        let pinf = r_p.norm() / (1.0 + b_norm);
        let dinf = r_d.norm() / (1.0 + cs_norm);
        trace.push(IterationRecord {
            iteration: iter,
            primal_objective: pobj * c_scale,
            dual_objective: dobj * c_scale,
            primal_infeasibility: pinf,
            dual_infeasibility: dinf,
            relative_gap: rel_gap,
            mu,
        });

        if rel_gap < opts.tol && pinf < opts.tol && dinf < opts.tol {
            status = SdpStatus::Optimal;
            break;
        }
        let tol = opts.accept_tol;
        if rel_gap < tol && pinf < tol && dinf < tol {
            accepted = Some((x.clone(), y.clone(), iter));
        }
        if y.amax() > 1e12 {
            status = SdpStatus::Infeasible;
            message = "dual multipliers diverge (primal infeasible)".into();
            break;
        }
        if x.amax() > 1e12 {
            status = SdpStatus::Infeasible;
            message = "primal iterates diverge (dual infeasible)".into();
            break;
        }
        if iter == opts.max_iter {
            break;
        }

        let scaling = match nt_scaling(&x, &z) {
            Some(sc) => sc,
            None => {
                status = SdpStatus::NumericalFailure;
                message = "iterate lost positive definiteness".into();
                break;
            }
        };

        // Schur complement M_ij = tr(A_i W A_j W) + delta_ij s_i / y_i.
        let sandwiches: Vec<DMatrix<f64>> = cons.iter().map(|k| k.sandwich(&scaling.w)).collect();
        let mut schur = DMatrix::zeros(m, m);
        for i in 0..m {
            for j in 0..m {
                schur[(i, j)] = cons[i].apply(&sandwiches[j]);
            }
            schur[(i, i)] += s[i] / y[i];
        }
        symmetrize_in_place(&mut schur);
        let chol = match Cholesky::new(schur.clone()) {
            Some(ch) => ch,
            None => {
                let reg = 1e-14 * schur.diagonal().amax().max(1e-300);
                match Cholesky::new(schur + DMatrix::identity(m, m) * reg) {
                    Some(ch) => ch,
                    None => {
                        status = SdpStatus::NumericalFailure;
                        message = "Schur complement is not positive definite".into();
                        break;
                    }
                }
            }
        };
        let w_rd_w = &scaling.w * &r_d * &scaling.w;

        // Newton system for a complementarity residual given both unscaled
        // (`r_c`) and NT-scaled (`r_s = G^{-1} r_c G^{-T}`). Since
        // `G^{-1} W dZ W G^{-T} = G^T dZ G`, the scaled primal step is simply
        // `r_s - G^T dZ G`.
        let newton = |r_c: &DMatrix<f64>, r_s: &DMatrix<f64>, r_lp: &DVector<f64>| -> Direction {
            let target = r_c + &w_rd_w;
            let rhs = DVector::from_iterator(
                m,
                (0..m).map(|i| cons[i].apply(&target) + r_lp[i] / y[i] - r_p[i]),
            );
            let dy = chol.solve(&rhs);
            let mut dz = -&r_d;
            for (k, &d) in cons.iter().zip(dy.iter()) {
                k.add_to(&mut dz, d);
            }
            symmetrize_in_place(&mut dz);
            let mut dz_s = scaling.g.transpose() * &dz * &scaling.g;
            symmetrize_in_place(&mut dz_s);
            let dx_s = r_s - &dz_s;
            let ds = DVector::from_iterator(m, (0..m).map(|i| (r_lp[i] - s[i] * dy[i]) / y[i]));
            Direction { dx_s, dz_s, ds, dy, dz }
        };

        // Predictor.
        let v = &scaling.v;
        let r_s_aff = DMatrix::from_diagonal(&-v);
        let r_lp_aff = -s.component_mul(&y);
        let aff = newton(&(-&x), &r_s_aff, &r_lp_aff);
        let ap = step_to_boundary(v, &aff.dx_s, &s, &aff.ds).min(1.0);
        let ad = step_to_boundary(v, &aff.dz_s, &y, &aff.dy).min(1.0);
        // tr(XZ) is invariant under the scaling, so mu_aff is computed there.
        let mut xz_aff = 0.0;
        for j in 0..n {
            for i in 0..n {
                let xv = if i == j { v[i] } else { 0.0 };
                xz_aff += (xv + ap * aff.dx_s[(i, j)]) * (xv + ad * aff.dz_s[(i, j)]);
            }
        }
        let mu_aff = (xz_aff + (&s + &aff.ds * ap).dot(&(&y + &aff.dy * ad))) / (n + m) as f64;
        let sigma = (mu_aff / mu).clamp(0.0, 1.0).powi(3);

        // Corrector: V o (D_X + D_Z) = sigma mu I - V^2 - D_X^a o D_Z^a.
        let target_mu = sigma * mu;
        let prod = &aff.dx_s * &aff.dz_s;
        let mut t = -(&prod + prod.transpose()) * 0.5;
        for i in 0..n {
            t[(i, i)] += target_mu - v[i] * v[i];
        }
        let r_scaled = DMatrix::from_fn(n, n, |i, j| 2.0 * t[(i, j)] / (v[i] + v[j]));
        let mut r_c = &scaling.g * &r_scaled * scaling.g.transpose();
        symmetrize_in_place(&mut r_c);
        let r_lp = DVector::from_iterator(
            m,
            (0..m).map(|i| target_mu - s[i] * y[i] - aff.ds[i] * aff.dy[i]),
        );
        let dir = newton(&r_c, &r_scaled, &r_lp);
        let gamma = opts.step_fraction;
        let ap = safe_step(v, &dir.dx_s, &s, &dir.ds, gamma);
        let ad = safe_step(v, &dir.dz_s, &y, &dir.dy, gamma);
        if ap < 1e-10 && ad < 1e-10 {
            stalls += 1;
            if stalls > 3 {
                status = SdpStatus::NumericalFailure;
                message = "step lengths collapsed".into();
                break;
            }
        } else {
            stalls = 0;
        }

        let mut dx = &scaling.g * &dir.dx_s * scaling.g.transpose();
        symmetrize_in_place(&mut dx);
        x += dx * ap;
        s += &dir.ds * ap;
        y += &dir.dy * ad;
        z += &dir.dz * ad;
        symmetrize_in_place(&mut x);
        symmetrize_in_place(&mut z);
    }

    let mut last = *trace.last().expect("at least one iteration is recorded");
    if matches!(status, SdpStatus::MaxIterations | SdpStatus::NumericalFailure) {
        if let Some((xa, ya, it)) = accepted {
            message = format!("{message}; returning iterate {it} at the acceptance tolerance");
            x = xa;
            y = ya;
            last = trace[it];
            iterations = it;
            status = SdpStatus::Optimal;
        }
    }
    let mut z_out = -c.clone();
    let y_out = unscaled_y(&y);
    for (aj, &yj) in a.iter().zip(y_out.iter()) {
        z_out += aj * yj;
    }
    SdpSolution {
        objective: inner(c, &x),
        dual_objective: b.iter().zip(y_out.iter()).map(|(bj, yj)| bj * yj).sum(),
        x,
        y: y_out,
        z: z_out,
        status,
        iterations,
        duality_gap: last.relative_gap,
        primal_infeasibility: last.primal_infeasibility,
        dual_infeasibility: last.dual_infeasibility,
        trace,
        message,
    }
}

/// NT scaling point `W` with `W Z W = X`, built from `X = L L^T` and the
/// eigendecomposition `L^T Z L = U diag(lambda) U^T`:
/// `G = L U diag(lambda)^{-1/4}`, `W = G G^T`, `V = diag(lambda)^{1/2}`.
fn nt_scaling(x: &DMatrix<f64>, z: &DMatrix<f64>) -> Option<Scaling> {
    let l = Cholesky::<f64, Dyn>::new(x.clone())?.l();
    let mut lzl = l.transpose() * z * &l;
    symmetrize_in_place(&mut lzl);
    let eig = sym_eigen(&lzl)?;
    if eig.values.iter().any(|&v| !(v > 0.0)) {
        return None;
    }
    let quarter = eig.values.map(|v| v.powf(-0.25));
    let g = &l * &eig.vectors * DMatrix::from_diagonal(&quarter);
    let mut w = &g * g.transpose();
    symmetrize_in_place(&mut w);
    Some(Scaling {
        w,
        g,
        v: eig.values.map(f64::sqrt),
    })
}

/// `V^{-1/2} D V^{-1/2}`; `V + alpha D >= 0` iff `I + alpha` times this is.
fn normalized(v: &DVector<f64>, d: &DMatrix<f64>) -> DMatrix<f64> {
    let inv_sqrt = v.map(|x| 1.0 / x.sqrt());
    DMatrix::from_fn(v.len(), v.len(), |i, j| d[(i, j)] * inv_sqrt[i] * inv_sqrt[j])
}

fn step_from_eigenvalue(lo: f64, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
    let mut alpha = if lo < 0.0 { -1.0 / lo } else { f64::INFINITY };
    for (ui, dui) in u.iter().zip(du.iter()) {
        if *dui < 0.0 {
            alpha = alpha.min(-ui / dui);
        }
    }
    alpha
}

/// Largest `alpha` keeping `V + alpha D >= 0` and `u + alpha du >= 0`, with
/// the cone part estimated by Lanczos. Only used to pick the centering
/// parameter, so an estimate is enough.
fn step_to_boundary(v: &DVector<f64>, d: &DMatrix<f64>, u: &DVector<f64>, du: &DVector<f64>) -> f64 {
    step_from_eigenvalue(lanczos_min(&normalized(v, d)), u, du)
}

/// Step actually taken: `gamma` times the distance to the boundary, capped
/// at one. The Lanczos estimate can only overshoot, so the result is checked
/// with a Cholesky factorization and recomputed exactly when it fails.
fn safe_step(v: &DVector<f64>, d: &DMatrix<f64>, u: &DVector<f64>, du: &DVector<f64>, gamma: f64) -> f64 {
    let nd = normalized(v, d);
    let alpha = (gamma * step_from_eigenvalue(lanczos_min(&nd), u, du)).min(1.0);
    let n = v.len();
    let trial = DMatrix::identity(n, n) + &nd * alpha;
    if Cholesky::new(trial).is_some() {
        return alpha;
    }
    let lo = sym_eigenvalues(&nd).first().copied().unwrap_or(0.0);
    (gamma * step_from_eigenvalue(lo, u, du)).min(1.0)
}

/// Smallest Ritz value of a symmetric matrix after a short Lanczos run with
/// full reorthogonalization. Never below the true smallest eigenvalue.
fn lanczos_min(a: &DMatrix<f64>) -> f64 {
    const STEPS: usize = 24;
    let n = a.nrows();
    if n <= STEPS {
        return sym_eigenvalues(a).first().copied().unwrap_or(0.0);
    }
    let scale = a.amax();
    if scale == 0.0 {
        return 0.0;
    }
    let mut basis: Vec<DVector<f64>> = Vec::with_capacity(STEPS);
    let mut q = DVector::from_fn(n, |i, _| 1.0 + 0.5 * ((i as f64) * 0.6180).sin());
    q /= q.norm();
    let mut alphas = Vec::with_capacity(STEPS);
    let mut betas: Vec<f64> = Vec::with_capacity(STEPS);
    for _ in 0..STEPS {
        let mut r = a * &q;
        let alpha = q.dot(&r);
        alphas.push(alpha);
        basis.push(q.clone());
        for b in &basis {
            let c = b.dot(&r);
            r.axpy(-c, b, 1.0);
        }
        let beta = r.norm();
        if beta <= 1e-12 * scale {
            break;
        }
        betas.push(beta);
        q = r / beta;
    }
    let k = alphas.len();
    let t = DMatrix::from_fn(k, k, |i, j| {
        if i == j {
            alphas[i]
        } else if i + 1 == j || j + 1 == i {
            betas[i.min(j)]
        } else {
            0.0
        }
    });
    sym_eigenvalues(&t).first().copied().unwrap_or(0.0)
}
