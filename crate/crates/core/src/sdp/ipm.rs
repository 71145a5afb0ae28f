//! Infeasible-start primal-dual path-following method (HKM direction with a
//! Mehrotra predictor-corrector) for
//!
//! ```text
//! min  <C, X> + c·x    s.t.  A(X) + B x = b,   X ⪰ 0,  x ≥ 0
//! max  b·y             s.t.  C - A*(y) = Z ⪰ 0,  c - Bᵀy = z ≥ 0
//! ```
//!
//! `X` is a d×d Hermitian block handled in svec coordinates; `x` collects the
//! nonnegative scalars, and `B` is stored column-sparse.

use nalgebra::{Cholesky, DMatrix, DVector, LU};

use crate::linalg::{eig_hermitian, smat, svec, svec_into, HermitianMatrix, C64};

pub(crate) struct ConicForm {
    pub d: usize,
    /// m × d², row k = svec(A_k).
    pub ax: DMatrix<f64>,
    /// Column j of B as (row, value) pairs.
    pub lp_cols: Vec<Vec<(usize, f64)>>,
    pub cx: DVector<f64>,
    pub cs: DVector<f64>,
    pub b: DVector<f64>,
}

impl ConicForm {
    pub fn m(&self) -> usize {
        self.b.len()
    }

    pub fn p(&self) -> usize {
        self.lp_cols.len()
    }

    pub fn lp_apply(&self, xs: &DVector<f64>) -> DVector<f64> {
        let mut out = DVector::zeros(self.m());
        for (col, &v) in self.lp_cols.iter().zip(xs.iter()) {
            for &(r, a) in col {
                out[r] += a * v;
            }
        }
        out
    }

    pub fn lp_apply_t(&self, y: &DVector<f64>) -> DVector<f64> {
        DVector::from_iterator(
            self.p(),
            self.lp_cols
                .iter()
                .map(|col| col.iter().map(|&(r, a)| a * y[r]).sum::<f64>()),
        )
    }

    /// `A(X) + B x`.
    pub fn apply(&self, x: &DMatrix<C64>, xs: &DVector<f64>) -> DVector<f64> {
        &self.ax * svec(x) + self.lp_apply(xs)
    }
}

#[derive(Debug, Clone, Copy)]
pub(crate) struct IpmSettings {
    pub max_iter: usize,
    pub target: f64,
    pub step_fraction: f64,
    /// Iterations without a 2x merit improvement before giving up.
    pub stall_window: usize,
}

#[derive(Debug, Clone)]
pub(crate) struct Iterate {
    pub x: DMatrix<C64>,
    pub xs: DVector<f64>,
    pub y: DVector<f64>,
    pub z: DMatrix<C64>,
    pub zs: DVector<f64>,
}

#[derive(Debug, Clone)]
pub(crate) struct IpmOutcome {
    pub best: Iterate,
    pub iterations: usize,
}

struct Residuals {
    rp: DVector<f64>,
    rd: DMatrix<C64>,
    rds: DVector<f64>,
    mu: f64,
    merit: f64,
}

struct Direction {
    dx: DMatrix<C64>,
    dxs: DVector<f64>,
    dy: DVector<f64>,
    dz: DMatrix<C64>,
    dzs: DVector<f64>,
}

fn herm(m: &DMatrix<C64>) -> DMatrix<C64> {
    (m + m.adjoint()) * C64::new(0.5, 0.0)
}

fn re_trace_product(a: &DMatrix<C64>, b: &DMatrix<C64>) -> f64 {
    // Re tr(AB) for Hermitian A, B.
    a.iter().zip(b.iter()).map(|(x, y)| (x * y.conj()).re).sum()
}

fn hermitian_inverse(m: &DMatrix<C64>) -> DMatrix<C64> {
    let eig = eig_hermitian(&HermitianMatrix::from_matrix_unchecked(m.clone()))
        .expect("eigendecomposition of an interior iterate");
    let inv: Vec<f64> = eig.eigenvalues.iter().map(|&w| 1.0 / w).collect();
    eig.recompose(&inv).into_matrix()
}

/// Largest α with `M + α dM ⪰ 0` (M ≻ 0); `INFINITY` when unbounded.
fn psd_step(m: &DMatrix<C64>, dm: &DMatrix<C64>) -> f64 {
    let eig = match eig_hermitian(&HermitianMatrix::from_matrix_unchecked(m.clone())) {
        Ok(e) => e,
        Err(_) => return 0.0,
    };
    if eig.eigenvalues[0] <= 0.0 {
        return 0.0;
    }
    let inv_sqrt: Vec<f64> = eig.eigenvalues.iter().map(|w| 1.0 / w.sqrt()).collect();
    let s = eig.recompose(&inv_sqrt).into_matrix();
    let t = &s * dm * &s;
    let lmin = match eig_hermitian(&HermitianMatrix::from_matrix_unchecked(t)) {
        Ok(e) => e.eigenvalues[0],
        Err(_) => return 0.0,
    };
    if lmin >= 0.0 {
        f64::INFINITY
    } else {
        -1.0 / lmin
    }
}

fn lp_step(v: &DVector<f64>, dv: &DVector<f64>) -> f64 {
    v.iter()
        .zip(dv.iter())
        .filter(|(_, &d)| d < 0.0)
        .map(|(&x, &d)| -x / d)
        .fold(f64::INFINITY, f64::min)
}

/// `svec(herm(X B Zinv))` for every svec basis element `B`, as columns.
fn hkm_operator(x: &DMatrix<C64>, zinv: &DMatrix<C64>) -> DMatrix<f64> {
    let d = x.nrows();
    let n = d * d;
    let mut g = DMatrix::zeros(n, n);
    let mut k = DMatrix::<C64>::zeros(d, d);
    let mut col = vec![0.0; n];
    let s = std::f64::consts::FRAC_1_SQRT_2;
    // K_ab(p, q) = X[p, a] Zinv[b, q]
    let outer = |k: &mut DMatrix<C64>, a: usize, b: usize, w: C64| {
        for q in 0..d {
            let zb = zinv[(b, q)] * w;
            for p in 0..d {
                k[(p, q)] += x[(p, a)] * zb;
            }
        }
    };
    for a in 0..d {
        k.fill(C64::new(0.0, 0.0));
        outer(&mut k, a, a, C64::new(1.0, 0.0));
        svec_into(&k, &mut col);
        g.set_column(a, &DVector::from_column_slice(&col));
    }
    let mut idx = d;
    for a in 0..d {
        for b in (a + 1)..d {
            k.fill(C64::new(0.0, 0.0));
            outer(&mut k, a, b, C64::new(s, 0.0));
            outer(&mut k, b, a, C64::new(s, 0.0));
            svec_into(&k, &mut col);
            g.set_column(idx, &DVector::from_column_slice(&col));
            k.fill(C64::new(0.0, 0.0));
            outer(&mut k, a, b, C64::new(0.0, s));
            outer(&mut k, b, a, C64::new(0.0, -s));
            svec_into(&k, &mut col);
            g.set_column(idx + 1, &DVector::from_column_slice(&col));
            idx += 2;
        }
    }
    g
}

enum Solver {
    Chol(Cholesky<f64, nalgebra::Dyn>),
    Lu(LU<f64, nalgebra::Dyn, nalgebra::Dyn>),
}

/// Schur complement factorization with iterative refinement against the
/// unregularized matrix.
struct Factor {
    matrix: DMatrix<f64>,
    solver: Solver,
}

impl Factor {
    fn new(m: DMatrix<f64>) -> Self {
        let solver = Self::factor(&m);
        Factor { matrix: m, solver }
    }

    fn factor(m: &DMatrix<f64>) -> Solver {
        if let Some(c) = Cholesky::new(m.clone()) {
            return Solver::Chol(c);
        }
        let scale = m.diagonal().amax().max(1.0);
        let mut reg = 1e-14 * scale;
        while reg < 1e-4 * scale {
            let mut shifted = m.clone();
            for i in 0..shifted.nrows() {
                shifted[(i, i)] += reg;
            }
            if let Some(c) = Cholesky::new(shifted) {
                return Solver::Chol(c);
            }
            reg *= 100.0;
        }
        Solver::Lu(LU::new(m.clone()))
    }

    fn raw_solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        match &self.solver {
            Solver::Chol(c) => c.solve(rhs),
            Solver::Lu(lu) => lu.solve(rhs).unwrap_or_else(|| DVector::zeros(rhs.len())),
        }
    }

    fn solve(&self, rhs: &DVector<f64>) -> DVector<f64> {
        let mut x = self.raw_solve(rhs);
        let mut resid = rhs - &self.matrix * &x;
        let mut rnorm = resid.norm();
        for _ in 0..REFINEMENT_STEPS {
            if rnorm <= 1e-15 * rhs.norm() {
                break;
            }
            let cand = &x + self.raw_solve(&resid);
            let cand_resid = rhs - &self.matrix * &cand;
            let cand_norm = cand_resid.norm();
            if !(cand_norm < rnorm) {
                break;
            }
            x = cand;
            resid = cand_resid;
            rnorm = cand_norm;
        }
        x
    }
}

const REFINEMENT_STEPS: usize = 3;

fn norm2(v: &DVector<f64>) -> f64 {
    v.norm()
}

fn initial_point(form: &ConicForm) -> Iterate {
    let d = form.d;
    let m = form.m();
    let p = form.p();
    let df = d as f64;
    let mut xi: f64 = 10f64.max(df.sqrt());
    let mut eta: f64 = 10f64.max(df.sqrt());
    for k in 0..m {
        let row_norm = form.ax.row(k).norm();
        xi = xi.max(df * (1.0 + form.b[k].abs()) / (1.0 + row_norm));
        eta = eta.max(row_norm);
    }
    eta = eta.max(form.cx.norm()).max(form.cs.amax());
    Iterate {
        x: DMatrix::identity(d, d) * C64::new(xi, 0.0),
        xs: DVector::from_element(p, xi),
        y: DVector::zeros(m),
        z: DMatrix::identity(d, d) * C64::new(eta, 0.0),
        zs: DVector::from_element(p, eta),
    }
}

fn residuals(form: &ConicForm, it: &Iterate, nu: f64, bnorm: f64, cnorm: f64) -> Residuals {
    let rp = &form.b - form.apply(&it.x, &it.xs);
    let aty = form.ax.transpose() * &it.y;
    let rd = smat(form.d, (&form.cx - &aty).as_slice()) - &it.z;
    let rds = &form.cs - form.lp_apply_t(&it.y) - &it.zs;
    let mu = (re_trace_product(&it.x, &it.z) + it.xs.dot(&it.zs)) / nu;
    let pobj = form.cx.dot(&svec(&it.x)) + form.cs.dot(&it.xs);
    let dobj = form.b.dot(&it.y);
    let rel_p = norm2(&rp) / (1.0 + bnorm);
    let rd_norm = (svec(&rd).norm_squared() + rds.norm_squared()).sqrt();
    let rel_d = rd_norm / (1.0 + cnorm);
    let rel_gap = (pobj - dobj).abs() / (1.0 + pobj.abs() + dobj.abs());
    let rel_mu = mu * nu / (1.0 + pobj.abs() + dobj.abs());
    Residuals {
        rp,
        rd,
        rds,
        mu,
        merit: rel_p.max(rel_d).max(rel_gap).max(rel_mu),
    }
}

#[allow(clippy::too_many_arguments)]
fn direction(
    form: &ConicForm,
    it: &Iterate,
    res: &Residuals,
    zinv: &DMatrix<C64>,
    factor: &Factor,
    sigma_mu: f64,
    corr: Option<(&DMatrix<C64>, &DVector<f64>)>,
) -> Direction {
    let d = form.d;
    let mut rx = zinv * C64::new(sigma_mu, 0.0) - &it.x - herm(&(&it.x * &res.rd * zinv));
    let mut rs = DVector::from_fn(form.p(), |i, _| {
        sigma_mu / it.zs[i] - it.xs[i] - it.xs[i] * res.rds[i] / it.zs[i]
    });
    if let Some((cx, cs)) = corr {
        rx -= cx;
        rs -= cs;
    }
    let rhs = &res.rp - &form.ax * svec(&rx) - form.lp_apply(&rs);
    let mut dy = factor.solve(&rhs);
    let lift = |dy: &DVector<f64>| {
        let atdy = smat(d, (form.ax.transpose() * dy).as_slice());
        let btdy = form.lp_apply_t(dy);
        let dx = herm(&(&it.x * &atdy * zinv));
        let dxs = DVector::from_fn(form.p(), |i, _| it.xs[i] / it.zs[i] * btdy[i]);
        (atdy, btdy, dx, dxs)
    };
    let (mut atdy, mut btdy, lx, lxs) = lift(&dy);
    let mut dx = &rx + lx;
    let mut dxs = &rs + lxs;
    // Forming X Aᵀdy Z⁻¹ loses accuracy as Z becomes singular; correct dy
    // against the primal equations the direction actually satisfies.
    let mut err = &res.rp - form.apply(&dx, &dxs);
    let mut err_norm = err.norm();
    for _ in 0..REFINEMENT_STEPS {
        if err_norm <= 1e-15 * (1.0 + res.rp.norm()) {
            break;
        }
        let ddy = factor.solve(&err);
        let (a2, b2, lx, lxs) = lift(&ddy);
        let cand_dx = &dx + lx;
        let cand_dxs = &dxs + lxs;
        let cand_err = &res.rp - form.apply(&cand_dx, &cand_dxs);
        let cand_norm = cand_err.norm();
        if !(cand_norm < 0.5 * err_norm) {
            break;
        }
        dy += ddy;
        atdy += a2;
        btdy += b2;
        dx = cand_dx;
        dxs = cand_dxs;
        err = cand_err;
        err_norm = cand_norm;
    }
    let dz = &res.rd - &atdy;
    let dzs = &res.rds - &btdy;
    Direction {
        dx,
        dxs,
        dy,
        dz,
        dzs,
    }
}

fn step_lengths(it: &Iterate, dir: &Direction) -> (f64, f64) {
    let ap = psd_step(&it.x, &dir.dx).min(lp_step(&it.xs, &dir.dxs));
    let ad = psd_step(&it.z, &dir.dz).min(lp_step(&it.zs, &dir.dzs));
    (ap, ad)
}

pub(crate) fn run(form: &ConicForm, settings: &IpmSettings) -> IpmOutcome {
    let m = form.m();
    let p = form.p();
    let nu = (form.d + p) as f64;
    let bnorm = form.b.norm();
    let cnorm = (form.cx.norm_squared() + form.cs.norm_squared()).sqrt();

    let mut it = initial_point(form);
    let mut best = it.clone();
    let mut best_merit = f64::INFINITY;
    let mut anchor_merit = f64::INFINITY;
    let mut anchor_iter = 0usize;
    let mut iterations = 0usize;

    loop {
        let res = residuals(form, &it, nu, bnorm, cnorm);
        if res.merit.is_finite() && res.merit < best_merit {
            best_merit = res.merit;
            best = it.clone();
        }
        if res.merit <= settings.target {
            return IpmOutcome { best, iterations };
        }
        if best_merit < 0.5 * anchor_merit {
            anchor_merit = best_merit;
            anchor_iter = iterations;
        }
        if iterations >= settings.max_iter
            || iterations - anchor_iter > settings.stall_window
            || !res.merit.is_finite()
        {
            break;
        }
        iterations += 1;

        let zinv = hermitian_inverse(&it.z);
        let g = hkm_operator(&it.x, &zinv);
        let ag = &form.ax * &g;
        let mut schur = &ag * form.ax.transpose();
        for (j, col) in form.lp_cols.iter().enumerate() {
            let w = it.xs[j] / it.zs[j];
            for &(r1, a1) in col {
                for &(r2, a2) in col {
                    schur[(r1, r2)] += w * a1 * a2;
                }
            }
        }
        debug_assert_eq!(schur.nrows(), m);
        let factor = Factor::new(schur);

        let pred = direction(form, &it, &res, &zinv, &factor, 0.0, None);
        let (ap, ad) = step_lengths(&it, &pred);
        let ap = ap.min(1.0);
        let ad = ad.min(1.0);
        let x_aff = &it.x + &pred.dx * C64::new(ap, 0.0);
        let z_aff = &it.z + &pred.dz * C64::new(ad, 0.0);
        let xs_aff = &it.xs + &pred.dxs * ap;
        let zs_aff = &it.zs + &pred.dzs * ad;
        let mu_aff = (re_trace_product(&x_aff, &z_aff) + xs_aff.dot(&zs_aff)) / nu;
        let sigma = if res.mu > 0.0 {
            (mu_aff / res.mu).clamp(0.0, 1.0).powi(3)
        } else {
            0.0
        };

        let corr_x = herm(&(&pred.dx * &pred.dz * &zinv));
        let corr_s = DVector::from_fn(p, |i, _| pred.dxs[i] * pred.dzs[i] / it.zs[i]);
        let dir = direction(
            form,
            &it,
            &res,
            &zinv,
            &factor,
            sigma * res.mu,
            Some((&corr_x, &corr_s)),
        );
        let (ap, ad) = step_lengths(&it, &dir);
        let ap = (settings.step_fraction * ap).min(1.0);
        let ad = (settings.step_fraction * ad).min(1.0);
        if !(ap > 0.0) || !(ad > 0.0) {
            break;
        }
        it.x = herm(&(&it.x + &dir.dx * C64::new(ap, 0.0)));
        it.xs += &dir.dxs * ap;
        it.y += &dir.dy * ad;
        it.z = herm(&(&it.z + &dir.dz * C64::new(ad, 0.0)));
        it.zs += &dir.dzs * ad;
    }

    IpmOutcome { best, iterations }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha20Rng;

    #[test]
    fn hkm_operator_matches_direct_product() {
        let mut rng = ChaCha20Rng::seed_from_u64(4);
        let d = 3;
        let rand_h = |rng: &mut ChaCha20Rng| {
            let m = DMatrix::from_fn(d, d, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            });
            herm(&m)
        };
        let x = rand_h(&mut rng);
        let zinv = rand_h(&mut rng);
        let y = rand_h(&mut rng);
        let g = hkm_operator(&x, &zinv);
        let via_g = &g * svec(&y);
        let direct = svec(&herm(&(&x * &y * &zinv)));
        assert!((via_g - direct).norm() < 1e-12);
    }

    #[test]
    fn trace_product_of_complex_hermitians() {
        let mut rng = ChaCha20Rng::seed_from_u64(9);
        let rand_h = |rng: &mut ChaCha20Rng| {
            herm(&DMatrix::from_fn(3, 3, |_, _| {
                C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
            }))
        };
        let a = rand_h(&mut rng);
        let b = rand_h(&mut rng);
        assert!((re_trace_product(&a, &b) - (&a * &b).trace().re).abs() < 1e-12);
    }

    #[test]
    fn psd_step_diagonal() {
        let m = DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(1.0, 0.0),
            C64::new(2.0, 0.0),
        ]));
        let dm = DMatrix::from_diagonal(&DVector::from_vec(vec![
            C64::new(-0.5, 0.0),
            C64::new(1.0, 0.0),
        ]));
        assert!((psd_step(&m, &dm) - 2.0).abs() < 1e-12);
        assert_eq!(
            psd_step(&m, &(-dm.clone() * C64::new(0.0, 0.0))),
            f64::INFINITY
        );
    }
}
