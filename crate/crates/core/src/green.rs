//! Fundamental matrices, W(z), the Green function, the jump across the
//! continuous spectrum and its rank-2 factorization.
//!
//! Columns of Phi are the solutions decaying (or oscillating on the chosen
//! side) at +infinity followed by those decaying at -infinity. Each column
//! is normalized by its free solution at 0, so W = det(Pi^-1 Phi(0)) and the
//! free pair gives W = 1.

use std::f64::consts::PI;
use std::sync::Arc;

use nalgebra::DMatrix;

use crate::characteristic::{order_roots, real_roots, to_m4};
use crate::error::{Result, SpecError};
use crate::linalg::{c, null_space, C64, I, M4, V4};
use crate::ode_core::{solution_family, PicardConfig, SolutionFamily};
use crate::problem::OperatorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum Side {
    /// z off the real half-line [h_p, inf)
    Complex,
    /// lambda + i0
    Plus,
    /// lambda - i0
    Minus,
}

/// A column of Phi: phi_k (right-normalized) or chi_k (left-normalized).
#[derive(Clone, Copy, Debug)]
enum Col {
    Phi(usize),
    Chi(usize),
}

#[derive(Clone, Debug)]
pub struct GreenData {
    pub z: C64,
    pub side: Side,
    pub w: C64,
    pub w_floor: f64,
    fam: Arc<SolutionFamily>,
    cols: [Col; 4],
    norm_inv: M4,
}

impl GreenData {
    fn build(fam: Arc<SolutionFamily>, side: Side, norm_inv: M4) -> Result<Self> {
        let cols = match side {
            Side::Complex | Side::Plus => [Col::Phi(0), Col::Phi(1), Col::Chi(2), Col::Chi(3)],
            Side::Minus => [Col::Phi(0), Col::Phi(2), Col::Chi(1), Col::Chi(3)],
        };
        let mut g = GreenData { z: fam.z, side, w: c(0.0), w_floor: 1e-8, fam, cols, norm_inv };
        g.w = g.det_phi(0.0)?;
        Ok(g)
    }

    pub fn family(&self) -> &SolutionFamily {
        &self.fam
    }

    fn column(&self, col: Col, x: f64) -> Result<V4> {
        match col {
            Col::Phi(k) => self.fam.phi(k, x),
            Col::Chi(k) => self.fam.chi(k, x),
        }
    }

    pub fn phi_matrix(&self, x: f64) -> Result<M4> {
        let mut m = M4::zeros();
        for (j, &col) in self.cols.iter().enumerate() {
            m.set_column(j, &self.column(col, x)?);
        }
        Ok(m)
    }

    /// Normalized det Phi(x); independent of x since the system is traceless.
    pub fn det_phi(&self, x: f64) -> Result<C64> {
        Ok((self.norm_inv * self.phi_matrix(x)?).determinant())
    }

    /// |Pi^-1 phi_k(0) - e_k| over the two right-normalized columns.
    pub fn theta_plus(&self) -> Result<f64> {
        let m = self.norm_inv * self.phi_matrix(0.0)?;
        let mut worst: f64 = 0.0;
        for j in 0..2 {
            let mut col = m.column(j).into_owned();
            col[j] -= c(1.0);
            worst = worst.max(col.norm());
        }
        Ok(worst)
    }

    /// Green matrix K(x, tau) = Phi(x) P+ Phi(tau)^-1 for x >= tau and
    /// -Phi(x) P- Phi(tau)^-1 for x < tau.
    pub fn kernel(&self, x: f64, tau: f64) -> Result<M4> {
        if self.w.norm() <= self.w_floor {
            return Err(SpecError::NearSingularW { w: self.w.norm(), floor: self.w_floor });
        }
        let phx = self.phi_matrix(x)?;
        let inv = self
            .phi_matrix(tau)?
            .try_inverse()
            .ok_or(SpecError::NearSingularW { w: 0.0, floor: self.w_floor })?;
        let mut p = M4::zeros();
        let (range, sign) = if x >= tau { (0..2, 1.0) } else { (2..4, -1.0) };
        for j in range {
            p[(j, j)] = c(sign);
        }
        Ok(phx * p * inv)
    }

    /// The scalar Green function G = K_14 and its x-derivatives (column 4 of K).
    pub fn g_vec(&self, x: f64, tau: f64) -> Result<V4> {
        Ok(self.kernel(x, tau)?.column(3).into_owned())
    }

    pub fn g(&self, x: f64, tau: f64) -> Result<C64> {
        Ok(self.g_vec(x, tau)?[0])
    }
}

fn swap_rows_23(m: &M4) -> M4 {
    let mut out = *m;
    out.swap_rows(1, 2);
    out
}

/// Fundamental-matrix data at complex z (any side argument other than
/// Complex is rejected there) or the one-sided limits at real lambda > h_p.
pub fn fundamental_matrix(spec: &OperatorSpec, z: C64, side: Side, lambda_s: f64, cfg: &PicardConfig) -> Result<GreenData> {
    let k = spec.consts();
    let on_axis = z.im == 0.0 && z.re >= k.h_p;
    match (side, on_axis) {
        (Side::Complex, false) => {
            let rs = order_roots(z, &k)?;
            let fam = solution_family(spec, z, lambda_s, 2, cfg)?;
            GreenData::build(Arc::new(fam), Side::Complex, to_m4(&rs.pi_inv))
        }
        (Side::Complex, true) => Err(SpecError::DomainError(format!("z = {z} lies on the continuous spectrum; pick a side"))),
        (_, false) => Err(SpecError::DomainError(format!("one-sided limits need real z >= h_p, got {z}"))),
        (s, true) => {
            let (plus, minus) = boundary_pair(spec, z.re, lambda_s, cfg)?;
            Ok(if s == Side::Plus { plus } else { minus })
        }
    }
}

/// Both one-sided fundamental matrices at real lambda > h_p, sharing one
/// solution family.
pub fn boundary_pair(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<(GreenData, GreenData)> {
    let fam = Arc::new(solution_family(spec, c(lambda), lambda_s, 3, cfg)?);
    boundary_pair_from(fam)
}

fn boundary_pair_from(fam: Arc<SolutionFamily>) -> Result<(GreenData, GreenData)> {
    let rs = real_roots(fam.z.re, &fam.spec.consts())?;
    if rs.regime == crate::characteristic::Regime::BranchPoint {
        return Err(SpecError::DegenerateRoots { z: fam.z });
    }
    let pinv = to_m4(&rs.pi_inv);
    let plus = GreenData::build(fam.clone(), Side::Plus, pinv)?;
    let minus = GreenData::build(fam, Side::Minus, swap_rows_23(&pinv))?;
    Ok((plus, minus))
}

/// W(z) off the axis, or W+/W- at real lambda.
pub fn w_value(spec: &OperatorSpec, z: C64, side: Side, lambda_s: f64, cfg: &PicardConfig) -> Result<C64> {
    Ok(fundamental_matrix(spec, z, side, lambda_s, cfg)?.w)
}

/// Free Green function from residues: sum over Im mu > 0 of
/// i e^{i mu |x - tau|} / p_c'(mu).
pub fn free_green(spec: &OperatorSpec, z: C64, x: f64, tau: f64) -> Result<C64> {
    let k = spec.consts();
    let rs = order_roots(z, &k)?;
    let d = (x - tau).abs();
    let mut g = c(0.0);
    for m in crate::characteristic::mu_f64(&rs).iter().take(2) {
        let dp = c(4.0) * m * m * m + c(4.0 * k.h_a) * m;
        g += I * (I * m * d).exp() / dp;
    }
    Ok(g)
}

/// G+ - G- at real lambda.
pub fn jump_kernel(plus: &GreenData, minus: &GreenData, x: f64, tau: f64) -> Result<C64> {
    Ok(plus.g(x, tau)? - minus.g(x, tau)?)
}

/// lambda is in M_n when both |W+| and |W-| exceed 1/(2n).
pub fn in_m_n(w_plus: C64, w_minus: C64, n: usize) -> bool {
    let thr = 1.0 / (2.0 * n as f64);
    w_plus.norm() > thr && w_minus.norm() > thr
}

/// Jump kernel with the M_n membership check.
pub fn jump_kernel_checked(plus: &GreenData, minus: &GreenData, n: usize, x: f64, tau: f64) -> Result<C64> {
    if !in_m_n(plus.w, minus.w, n) {
        return Err(SpecError::ExcludedLambda { lambda: plus.z.re });
    }
    jump_kernel(plus, minus, x, tau)
}

/// 2 pi i sum_j phi_j(x) conj(phi*_j(tau)) = G+ - G-, with phi_j and phi*_j
/// bounded solutions of L and L* written in the phi/chi bases.
#[derive(Clone, Debug)]
pub struct JumpFactorization {
    pub lambda: f64,
    pub w_plus: C64,
    pub w_minus: C64,
    /// phi_j = sum_l alpha[(l, j)] phi_l for x >= 0 (l = 1..3)
    pub alpha: DMatrix<C64>,
    /// phi_j = sum_k beta[(k-2, j)] chi_k for x < 0 (k = 2..4)
    pub beta: DMatrix<C64>,
    pub alpha_star: DMatrix<C64>,
    pub beta_star: DMatrix<C64>,
    /// max |J - 2 pi i sum phi conj(phi*)| / max |J| on the sample grid
    pub sample_residual: f64,
    /// third / first singular value of the sampled jump matrix
    pub rank_ratio: f64,
    /// relative weight of phi_4 / chi_1 in the right factors
    pub unbounded: f64,
    /// sine of the largest principal angle between the jump range at 0 and
    /// the intersection of the decaying/oscillating spans
    pub subspace_angle: f64,
    fam: Arc<SolutionFamily>,
    adj: Arc<SolutionFamily>,
}

/// Sample points in [-2, 2] used for fits; none sits exactly at 0.
pub fn sample_points() -> Vec<f64> {
    (0..9).map(|i| -1.9 + 0.475 * i as f64).collect()
}

fn basis_at(fam: &SolutionFamily, left: bool, x: f64) -> Result<M4> {
    let mut m = M4::zeros();
    for k in 0..4 {
        let v = if left { fam.chi(k, x)? } else { fam.phi(k, x)? };
        m.set_column(k, &v);
    }
    Ok(m)
}

/// Initial data at 0 of the bounded solutions: the intersection of
/// span{phi_1, phi_2, phi_3} and span{chi_2, chi_3, chi_4}. Returns
/// (coefficients in phi_1..3, coefficients in chi_2..4), each 3 x 2.
fn bounded_intersection(fam: &SolutionFamily) -> Result<(DMatrix<C64>, DMatrix<C64>)> {
    let r = basis_at(fam, false, 0.0)?;
    let l = basis_at(fam, true, 0.0)?;
    let mut a = DMatrix::<C64>::zeros(4, 6);
    let mut scale = [0.0; 6];
    for j in 0..3 {
        let rc = r.column(j);
        let lc = l.column(j + 1);
        scale[j] = rc.norm();
        scale[j + 3] = lc.norm();
        for i in 0..4 {
            a[(i, j)] = rc[i] / scale[j];
            a[(i, j + 3)] = -lc[i] / scale[j + 3];
        }
    }
    let (ns, sv) = null_space(&a, 2);
    if sv[3] <= 1e-10 * sv[0] {
        // bounded-solution space of dimension above two
        return Err(SpecError::MultiplicityAmbiguous { lambda: fam.z.re });
    }
    let mut al = DMatrix::<C64>::zeros(3, 2);
    let mut be = DMatrix::<C64>::zeros(3, 2);
    for col in 0..2 {
        for j in 0..3 {
            al[(j, col)] = ns[(j, col)] / scale[j];
            be[(j, col)] = ns[(j + 3, col)] / scale[j + 3];
        }
    }
    Ok((al, be))
}

fn eval_combo(fam: &SolutionFamily, al: &DMatrix<C64>, be: &DMatrix<C64>, j: usize, x: f64) -> Result<V4> {
    let mut v = V4::zeros();
    for l in 0..3 {
        if x >= 0.0 {
            v += fam.phi(l, x)? * al[(l, j)];
        } else {
            v += fam.chi(l + 1, x)? * be[(l, j)];
        }
    }
    Ok(v)
}

fn lstsq(a: &DMatrix<C64>, b: &DMatrix<C64>) -> Result<DMatrix<C64>> {
    a.clone().svd(true, true).solve(b, 0.0).map_err(|_| SpecError::IllConditioned { cond: f64::INFINITY })
}

/// Rank-2 factorization of the jump at real lambda > h_p.
pub fn factor_jump(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<JumpFactorization> {
    let fam = Arc::new(solution_family(spec, c(lambda), lambda_s, 4, cfg)?);
    let adj = Arc::new(solution_family(&spec.adjoint(), c(lambda), lambda_s, 4, cfg)?);
    let (plus, minus) = boundary_pair_from(fam.clone())?;
    let pts = sample_points();
    let n = pts.len();

    // jump samples J(x_i, tau_b) and the 4-vectors of J(., tau_b) at x = 0
    let mut jm = DMatrix::<C64>::zeros(n, n);
    let mut at0 = DMatrix::<C64>::zeros(4, n);
    for (b, &tau) in pts.iter().enumerate() {
        for (i, &x) in pts.iter().enumerate() {
            jm[(i, b)] = jump_kernel(&plus, &minus, x, tau)?;
        }
        let v = plus.g_vec(0.0, tau)? - minus.g_vec(0.0, tau)?;
        at0.set_column(b, &v);
    }
    let sv = jm.clone().singular_values();
    let rank_ratio = if sv[0] > 0.0 { sv[2] / sv[0] } else { 0.0 };
    if sv[1] <= 1e-8 * sv[0] {
        return Err(SpecError::RankDeficient { lambda, ratio: sv[1] / sv[0] });
    }

    // range of the jump at 0, expressed in the full phi and chi bases
    let svd0 = at0.clone().svd(true, false);
    let mut idx: Vec<usize> = (0..svd0.singular_values.len()).collect();
    idx.sort_by(|&p, &q| svd0.singular_values[q].partial_cmp(&svd0.singular_values[p]).unwrap());
    let u0 = svd0.u.as_ref().unwrap();
    let range = DMatrix::from_fn(4, 2, |r, col| u0[(r, idx[col])]);
    let full_r = lstsq(&crate::linalg::to_dmatrix(&basis_at(&fam, false, 0.0)?), &range)?;
    let full_l = lstsq(&crate::linalg::to_dmatrix(&basis_at(&fam, true, 0.0)?), &range)?;
    let mut unbounded: f64 = 0.0;
    for col in 0..2 {
        unbounded = unbounded.max(full_r[(3, col)].norm() / full_r.column(col).norm());
        unbounded = unbounded.max(full_l[(0, col)].norm() / full_l.column(col).norm());
    }
    if unbounded > 1e-6 {
        return Err(SpecError::UnboundedComponent { lambda, coeff: unbounded });
    }

    // independent route: intersection of spans for L and for L*
    let (al_i, _) = bounded_intersection(&fam)?;
    let inter0 = {
        let r = crate::linalg::to_dmatrix(&basis_at(&fam, false, 0.0)?);
        let m = r.columns(0, 3) * &al_i;
        m.qr().q()
    };
    let proj = range.adjoint() * &inter0;
    let psv = proj.singular_values();
    let cmin = psv.iter().cloned().fold(f64::INFINITY, f64::min).min(1.0);
    let subspace_angle = (1.0 - cmin * cmin).max(0.0).sqrt();

    let al = full_r.rows(0, 3).into_owned();
    let be = full_l.rows(1, 3).into_owned();
    let (als, bes) = bounded_intersection(&adj)?;

    // J / (2 pi i) = sum_ab u_a(x) M_ab conj(v_b(tau))
    let mut design = DMatrix::<C64>::zeros(n * n, 4);
    let mut rhs = DMatrix::<C64>::zeros(n * n, 1);
    let u: Vec<[C64; 2]> = pts
        .iter()
        .map(|&x| Ok([eval_combo(&fam, &al, &be, 0, x)?[0], eval_combo(&fam, &al, &be, 1, x)?[0]]))
        .collect::<Result<_>>()?;
    let v: Vec<[C64; 2]> = pts
        .iter()
        .map(|&x| Ok([eval_combo(&adj, &als, &bes, 0, x)?[0], eval_combo(&adj, &als, &bes, 1, x)?[0]]))
        .collect::<Result<_>>()?;
    let two_pi_i = C64::new(0.0, 2.0 * PI);
    for i in 0..n {
        for b in 0..n {
            let row = i * n + b;
            for a in 0..2 {
                for bb in 0..2 {
                    design[(row, 2 * a + bb)] = u[i][a] * v[b][bb].conj();
                }
            }
            rhs[(row, 0)] = jm[(i, b)] / two_pi_i;
        }
    }
    let msol = lstsq(&design, &rhs)?;
    let fit = &design * &msol;
    let jmax = jm.iter().fold(0.0f64, |m, z| m.max(z.norm()));
    let mut sample_residual: f64 = 0.0;
    for row in 0..n * n {
        sample_residual = sample_residual.max((fit[(row, 0)] - rhs[(row, 0)]).norm() * 2.0 * PI / jmax);
    }
    let mm = DMatrix::from_fn(2, 2, |a, b| msol[(2 * a + b, 0)]);

    // M = U S V^H; phi_j = sqrt(s_j) sum_a u_a U_aj, phi*_j = sqrt(s_j) sum_b v_b V_bj
    let svd = mm.svd(true, true);
    let (uu, vt) = (svd.u.unwrap(), svd.v_t.unwrap());
    let mut alpha = DMatrix::<C64>::zeros(3, 2);
    let mut beta = DMatrix::<C64>::zeros(3, 2);
    let mut alpha_star = DMatrix::<C64>::zeros(3, 2);
    let mut beta_star = DMatrix::<C64>::zeros(3, 2);
    for j in 0..2 {
        let s = svd.singular_values[j].sqrt();
        let ucol = uu.column(j) * c(s);
        let vcol = vt.row(j).adjoint() * c(s);
        let mut a_j = &al * &ucol;
        let mut b_j = &be * &ucol;
        let mut as_j = &als * &vcol;
        let mut bs_j = &bes * &vcol;
        // gauge: phi_j(0) real positive, phi*_j rescaled by the conjugate inverse
        let f0: C64 = (0..3).map(|l| fam.phi(l, 0.0).map(|p| p[0] * a_j[l])).sum::<Result<C64>>()?;
        if f0.norm() > 0.0 {
            let g = f0.conj() / f0.norm();
            a_j *= g;
            b_j *= g;
            as_j *= g;
            bs_j *= g;
        }
        alpha.set_column(j, &a_j);
        beta.set_column(j, &b_j);
        alpha_star.set_column(j, &as_j);
        beta_star.set_column(j, &bs_j);
    }
    Ok(JumpFactorization {
        lambda,
        w_plus: plus.w,
        w_minus: minus.w,
        alpha,
        beta,
        alpha_star,
        beta_star,
        sample_residual,
        rank_ratio,
        unbounded,
        subspace_angle,
        fam,
        adj,
    })
}

impl JumpFactorization {
    /// (u, u', u'', u''') of phi_j at x.
    pub fn phi_vec(&self, j: usize, x: f64) -> Result<V4> {
        eval_combo(&self.fam, &self.alpha, &self.beta, j, x)
    }

    pub fn phi_star_vec(&self, j: usize, x: f64) -> Result<V4> {
        eval_combo(&self.adj, &self.alpha_star, &self.beta_star, j, x)
    }

    pub fn phi(&self, j: usize, x: f64) -> Result<C64> {
        Ok(self.phi_vec(j, x)?[0])
    }

    pub fn phi_star(&self, j: usize, x: f64) -> Result<C64> {
        Ok(self.phi_star_vec(j, x)?[0])
    }

    /// 2 pi i sum_j phi_j(x) conj(phi*_j(tau)).
    pub fn kernel(&self, x: f64, tau: f64) -> Result<C64> {
        let mut s = c(0.0);
        for j in 0..2 {
            s += self.phi(j, x)? * self.phi_star(j, tau)?.conj();
        }
        Ok(s * C64::new(0.0, 2.0 * PI))
    }

    /// Values of phi_j and phi*_j (first components) on a grid.
    pub fn on_grid(&self, xs: &[f64]) -> Result<[[Vec<C64>; 2]; 2]> {
        let mut out: [[Vec<C64>; 2]; 2] = Default::default();
        for j in 0..2 {
            out[0][j] = xs.iter().map(|&x| self.phi(j, x)).collect::<Result<_>>()?;
            out[1][j] = xs.iter().map(|&x| self.phi_star(j, x)).collect::<Result<_>>()?;
        }
        Ok(out)
    }
}

/// p_c'(nu) for the oscillatory root.
pub fn pc_prime(spec: &OperatorSpec, nu: f64) -> f64 {
    4.0 * nu * nu * nu + 4.0 * spec.consts().h_a * nu
}

/// max |J - 2i cos(nu (x - tau)) / p_c'(nu)| / max |2i cos / p_c'| over the
/// sample grid in [-2, 2]^2.
pub fn jump_asymptotic_deviation(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<f64> {
    let (plus, minus) = boundary_pair(spec, lambda, lambda_s, cfg)?;
    let (_, nu) = crate::characteristic::theta_nu(lambda, &spec.consts())?;
    let dp = pc_prime(spec, nu);
    let pts = sample_points();
    let (mut num, mut den): (f64, f64) = (0.0, 0.0);
    for &x in &pts {
        for &tau in &pts {
            let j = jump_kernel(&plus, &minus, x, tau)?;
            let a = C64::new(0.0, 2.0 * (nu * (x - tau)).cos() / dp);
            num = num.max((j - a).norm());
            den = den.max(a.norm());
        }
    }
    Ok(num / den)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode_core::select_lambda_s;

    fn cfg() -> PicardConfig {
        PicardConfig::default()
    }

    #[test]
    fn free_w_is_one() {
        let spec = OperatorSpec::free();
        for z in [C64::new(-1.0, 0.0), C64::new(3.0, 0.5), C64::new(50.0, -20.0), C64::new(0.5, 0.0)] {
            let w = w_value(&spec, z, Side::Complex, 2.5, &cfg()).unwrap();
            assert!((w - c(1.0)).norm() <= 1e-10, "{z}: {w}");
        }
        for side in [Side::Plus, Side::Minus] {
            let w = w_value(&spec, c(6.0), side, 2.5, &cfg()).unwrap();
            assert!((w - c(1.0)).norm() <= 1e-10);
        }
    }

    #[test]
    fn free_green_matches_residues() {
        let spec = OperatorSpec::free();
        let gd = fundamental_matrix(&spec, c(-1.0), Side::Complex, 2.5, &cfg()).unwrap();
        for (x, tau) in [(0.3, -1.2), (-1.0, 1.5), (2.0, 2.0), (0.0, 0.4)] {
            let want = free_green(&spec, c(-1.0), x, tau).unwrap();
            assert!((gd.g(x, tau).unwrap() - want).norm() <= 1e-10, "({x}, {tau})");
        }
    }

    #[test]
    fn green_third_derivative_jumps_by_one() {
        let spec = OperatorSpec::p2();
        let gd = fundamental_matrix(&spec, C64::new(3.0, 0.5), Side::Complex, 364.0, &cfg()).unwrap();
        let tau = 0.3;
        let eps = 1e-7;
        let above = gd.g_vec(tau + eps, tau).unwrap();
        let below = gd.g_vec(tau - eps, tau).unwrap();
        assert!((above[3] - below[3] - c(1.0)).norm() <= 1e-6);
        for m in 0..3 {
            assert!((above[m] - below[m]).norm() <= 1e-5, "derivative {m}");
        }
        // the finite-difference jump of G'' agrees
        let h = 1e-4;
        let d3 = |x: f64| (gd.g_vec(x + h, tau).unwrap()[2] - gd.g_vec(x - h, tau).unwrap()[2]) / (2.0 * h);
        assert!((d3(tau + 2.0 * h) - d3(tau - 2.0 * h) - c(1.0)).norm() <= 1e-3);
    }

    #[test]
    fn det_phi_is_x_independent() {
        let spec = OperatorSpec::p2();
        let gd = fundamental_matrix(&spec, C64::new(3.0, 0.5), Side::Complex, 364.0, &cfg()).unwrap();
        let dets: Vec<C64> = [-2.0, -1.0, 0.0, 0.8, 2.0].iter().map(|&x| gd.det_phi(x).unwrap()).collect();
        for d in &dets {
            assert!((d - dets[2]).norm() <= 1e-8 * dets[2].norm());
        }
    }

    #[test]
    fn green_solves_the_equation_off_diagonal() {
        let spec = OperatorSpec::p2();
        let z = C64::new(3.0, 0.5);
        let gd = fundamental_matrix(&spec, z, Side::Complex, 364.0, &cfg()).unwrap();
        let tau = -0.4;
        for x in [-1.5, 0.6, 1.8] {
            let h = 1e-3;
            let g = |s: f64| gd.g_vec(s, tau).unwrap();
            let u4 = (g(x - 2.0 * h)[3] - g(x - h)[3] * 8.0 + g(x + h)[3] * 8.0 - g(x + 2.0 * h)[3]) / (12.0 * h);
            let v = g(x);
            let [c0, c1, c2] = spec.l_coefficients(x);
            let r = u4 + v[2] * c2 + v[1] * c1 + v[0] * c0 - v[0] * z;
            assert!(r.norm() <= 1e-6 * (1.0 + u4.norm()), "x = {x}: {r}");
        }
    }

    #[test]
    fn one_sided_values_are_conjugate() {
        let spec = OperatorSpec::p2();
        let (p, m) = boundary_pair(&spec, 6.0, 364.0, &cfg()).unwrap();
        assert!((p.w - m.w.conj()).norm() <= 1e-8 * p.w.norm());
    }

    #[test]
    fn w_tends_to_one_along_a_ray() {
        let spec = OperatorSpec::p2();
        let mut prev_theta = f64::INFINITY;
        let mut prev_w = f64::INFINITY;
        for r in [1e2, 1e3, 1e4] {
            let z = C64::from_polar(r, PI / 4.0);
            let gd = fundamental_matrix(&spec, z, Side::Complex, 364.0, &cfg()).unwrap();
            let th = gd.theta_plus().unwrap();
            let dw = (gd.w - c(1.0)).norm();
            assert!(th < prev_theta && dw < prev_w, "|z| = {r}: theta {th}, |W-1| {dw}");
            prev_theta = th;
            prev_w = dw;
        }
    }

    #[test]
    fn free_jump_is_cosine_kernel() {
        let spec = OperatorSpec::free();
        let (p, m) = boundary_pair(&spec, 6.0, 2.5, &cfg()).unwrap();
        for (x, tau) in [(0.0f64, 0.0f64), (1.0, -0.5), (-2.0, 1.3)] {
            let want = C64::new(0.0, 2.0 * (x - tau).cos() / 10.0);
            assert!((jump_kernel(&p, &m, x, tau).unwrap() - want).norm() <= 1e-10);
        }
        let f = factor_jump(&spec, 6.0, 2.5, &cfg()).unwrap();
        for (x, tau) in [(0.0f64, 0.0f64), (1.0, -0.5), (-2.0, 1.3)] {
            let want = (x - tau).cos() / (PI * 10.0);
            let got = f.kernel(x, tau).unwrap() / C64::new(0.0, 2.0 * PI);
            assert!((got - c(want)).norm() <= 1e-9, "({x}, {tau})");
        }
    }

    #[test]
    fn jump_factorization_on_p2() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        let f = factor_jump(&spec, 6.0, ls, &cfg()).unwrap();
        assert!(f.sample_residual <= 1e-6, "{}", f.sample_residual);
        assert!(f.rank_ratio <= 1e-6, "{}", f.rank_ratio);
        assert!(f.subspace_angle <= 1e-6, "{}", f.subspace_angle);
        let (p, m) = boundary_pair(&spec, 6.0, ls, &cfg()).unwrap();
        for (x, tau) in [(0.5, -1.0), (-1.7, -0.2), (2.4, -2.4)] {
            let j = jump_kernel(&p, &m, x, tau).unwrap();
            assert!((f.kernel(x, tau).unwrap() - j).norm() <= 1e-6 * j.norm().max(1e-3));
        }
        // the jump for L* is minus the conjugate transpose of the jump for L
        let (pa, ma) = boundary_pair(&spec.adjoint(), 6.0, ls, &cfg()).unwrap();
        for (x, tau) in [(0.5, -1.0), (1.2, 1.9)] {
            let a = jump_kernel(&p, &m, x, tau).unwrap();
            let b = jump_kernel(&pa, &ma, tau, x).unwrap();
            assert!((a + b.conj()).norm() <= 1e-6 * a.norm(), "{a} vs {b}");
        }
    }

    #[test]
    fn jump_approaches_cosine_kernel() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        let d20 = jump_asymptotic_deviation(&spec, 20.0, ls, &cfg()).unwrap();
        let d320 = jump_asymptotic_deviation(&spec, 320.0, ls, &cfg()).unwrap();
        assert!(d320 < d20, "{d20} {d320}");
    }
}
