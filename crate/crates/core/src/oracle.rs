//! Dense finite-difference model of D1, D2, L = D2 D1 and
//! Lambda = D2^{1/2} D1 D2^{1/2} on (-X, X) with Dirichlet ends.

use std::sync::OnceLock;

use nalgebra::{DMatrix, DVector, SymmetricEigen};
use serde::Serialize;

use crate::error::{Result, SpecError};
use crate::linalg::C64;
use crate::problem::OperatorSpec;
use crate::quad::gauss_legendre;

/// Symmetric tridiagonal matrix (diagonal, constant off-diagonal).
#[derive(Clone, Debug)]
pub struct Tridiag {
    pub diag: Vec<f64>,
    pub off: f64,
}

impl Tridiag {
    /// Number of eigenvalues strictly below `sigma` (Sturm sequence).
    pub fn count_below(&self, sigma: f64) -> usize {
        let b2 = self.off * self.off;
        let mut d = 1.0;
        let mut count = 0;
        for (i, &a) in self.diag.iter().enumerate() {
            d = if i == 0 { a - sigma } else { a - sigma - b2 / d };
            if d == 0.0 {
                d = f64::EPSILON * (a.abs() + self.off.abs());
            }
            if d < 0.0 {
                count += 1;
            }
        }
        count
    }

    fn gershgorin(&self) -> (f64, f64) {
        let r = 2.0 * self.off.abs();
        let lo = self.diag.iter().cloned().fold(f64::INFINITY, f64::min) - r;
        let hi = self.diag.iter().cloned().fold(f64::NEG_INFINITY, f64::max) + r;
        (lo, hi)
    }

    /// k-th smallest eigenvalue (0-based) by bisection.
    pub fn eig_k(&self, k: usize) -> f64 {
        let (mut lo, mut hi) = self.gershgorin();
        for _ in 0..200 {
            let mid = 0.5 * (lo + hi);
            if self.count_below(mid) > k {
                hi = mid;
            } else {
                lo = mid;
            }
            if hi - lo <= 1e-15 * (lo.abs() + hi.abs()).max(1e-300) {
                break;
            }
        }
        0.5 * (lo + hi)
    }

    pub fn to_dense(&self) -> DMatrix<f64> {
        let n = self.diag.len();
        DMatrix::from_fn(n, n, |i, j| {
            if i == j {
                self.diag[i]
            } else if i.abs_diff(j) == 1 {
                self.off
            } else {
                0.0
            }
        })
    }

    pub fn apply(&self, v: &[f64]) -> Vec<f64> {
        let n = v.len();
        (0..n)
            .map(|i| {
                let mut s = self.diag[i] * v[i];
                if i > 0 {
                    s += self.off * v[i - 1];
                }
                if i + 1 < n {
                    s += self.off * v[i + 1];
                }
                s
            })
            .collect()
    }
}

/// Interior nodes x_i = -X + i h, i = 1..N, h = 2X/(N+1).
pub fn grid_nodes(half_width: f64, n: usize) -> (Vec<f64>, f64) {
    let h = 2.0 * half_width / (n + 1) as f64;
    ((1..=n).map(|i| -half_width + i as f64 * h).collect(), h)
}

fn schrodinger(q: &crate::problem::Potential, shift: f64, x: &[f64], h: f64) -> Tridiag {
    Tridiag { diag: x.iter().map(|&t| 2.0 / (h * h) + q.q(t) + shift).collect(), off: -1.0 / (h * h) }
}

/// Smallest eigenvalue of the grid D2 without building dense matrices.
pub fn d2_min_eig(spec: &OperatorSpec, half_width: f64, n: usize) -> f64 {
    let (x, h) = grid_nodes(half_width, n);
    schrodinger(&spec.q2, spec.h2, &x, h).eig_k(0)
}

/// Number of eigenvalues of Lambda_h (equivalently L_h) below sigma != 0.
/// The interleaved block matrix [[D1, I], [I, D2/sigma]] has Schur
/// complement D1 - sigma D2^-1, whose negative count is the answer; the
/// block D2/sigma contributes N negatives when sigma < 0. Entries stay at
/// the 1/h^2 scale, unlike the congruent product D2 D1 D2 - sigma D2.
fn count_l_below(d1: &Tridiag, d2: &Tridiag, sigma: f64) -> usize {
    const B: usize = 2;
    let n = d1.diag.len();
    let m = 2 * n;
    // band[i][k] = M(i, i + k), k = 0..=B; x_i at 2i, y_i at 2i + 1
    let mut band = vec![[0.0f64; B + 1]; m];
    for i in 0..n {
        band[2 * i][0] = d1.diag[i];
        band[2 * i][1] = 1.0;
        band[2 * i + 1][0] = d2.diag[i] / sigma;
        if i + 1 < n {
            band[2 * i][2] = d1.off;
            band[2 * i + 1][2] = d2.off / sigma;
        }
    }
    let mut l = vec![[0.0f64; B + 1]; m];
    let mut d = vec![0.0f64; m];
    let mut neg = 0;
    for i in 0..m {
        let mut di = band[i][0];
        for k in i.saturating_sub(B)..i {
            di -= l[k][i - k] * l[k][i - k] * d[k];
        }
        if di == 0.0 {
            di = f64::EPSILON * band[i][0].abs().max(1.0);
        }
        d[i] = di;
        if di < 0.0 {
            neg += 1;
        }
        for j in i + 1..(i + B + 1).min(m) {
            let mut v = band[i][j - i];
            for k in j.saturating_sub(B)..i {
                v -= l[k][i - k] * l[k][j - k] * d[k];
            }
            l[i][j - i] = v / di;
        }
    }
    if sigma < 0.0 {
        neg - n
    } else {
        neg
    }
}

/// Smallest eigenvalue of L_h by bisection on the inertia count; no dense
/// matrices, so it scales to fine grids.
pub fn l_min_eig(spec: &OperatorSpec, half_width: f64, n: usize) -> f64 {
    let (x, h) = grid_nodes(half_width, n);
    let d1 = schrodinger(&spec.q1, spec.h1, &x, h);
    let d2 = schrodinger(&spec.q2, spec.h2, &x, h);
    let (a1, b1) = d1.gershgorin();
    let (a2, b2) = d2.gershgorin();
    let bound = a1.abs().max(b1.abs()) * a2.abs().max(b2.abs());
    let (mut lo, mut hi) = (-bound - 1.0, bound + 1.0);
    for _ in 0..200 {
        let mut mid = 0.5 * (lo + hi);
        if mid == 0.0 {
            mid = 1e-300;
        }
        if count_l_below(&d1, &d2, mid) >= 1 {
            hi = mid;
        } else {
            lo = mid;
        }
        if hi - lo <= 1e-14 * (lo.abs() + hi.abs()).max(1e-12) {
            break;
        }
    }
    0.5 * (lo + hi)
}

pub struct GridOperator {
    pub spec: OperatorSpec,
    pub half_width: f64,
    pub n: usize,
    pub h: f64,
    pub x: Vec<f64>,
    pub d1: Tridiag,
    pub d2: Tridiag,
    /// eigenvalues of D2_h, ascending
    pub d2_eigs: Vec<f64>,
    pub s: DMatrix<f64>,
    pub s_inv: DMatrix<f64>,
    pub lambda_h: DMatrix<f64>,
    lam_eig: OnceLock<(Vec<f64>, DMatrix<f64>)>,
}

#[derive(Clone, Debug, Serialize)]
pub struct OracleSpectrum {
    /// eigenvalues of L_h sorted by real part, as (re, im)
    pub l_eigs: Vec<(f64, f64)>,
    pub lambda_eigs: Vec<f64>,
    pub l_norm: f64,
    pub max_imag_rel: f64,
    pub max_dev_rel: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct StoneReport {
    pub eps: Vec<f64>,
    pub errors: Vec<f64>,
    pub f_norm: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct QuasiSelfadjointReport {
    pub cond_s: f64,
    pub max_norm: f64,
    pub samples: usize,
    pub holds: bool,
}

impl GridOperator {
    pub fn new(spec: &OperatorSpec, half_width: f64, n: usize) -> Result<Self> {
        if n < 200 || half_width < 10.0 {
            return Err(SpecError::InvalidGrid(format!("need N >= 200 and X >= 10, got N = {n}, X = {half_width}")));
        }
        Self::build(spec, half_width, n)
    }

    /// Same as [`GridOperator::new`] without the production size limits;
    /// used for small algebraic checks.
    pub fn new_unchecked(spec: &OperatorSpec, half_width: f64, n: usize) -> Result<Self> {
        Self::build(spec, half_width, n)
    }

    fn build(spec: &OperatorSpec, half_width: f64, n: usize) -> Result<Self> {
        let (x, h) = grid_nodes(half_width, n);
        let d1 = schrodinger(&spec.q1, spec.h1, &x, h);
        let d2 = schrodinger(&spec.q2, spec.h2, &x, h);
        let eig = SymmetricEigen::new(d2.to_dense());
        let mut order: Vec<usize> = (0..n).collect();
        order.sort_by(|&a, &b| eig.eigenvalues[a].partial_cmp(&eig.eigenvalues[b]).unwrap());
        let w: Vec<f64> = order.iter().map(|&i| eig.eigenvalues[i]).collect();
        if w[0] <= 0.0 {
            return Err(SpecError::NonPositiveD2 { min_eig: w[0] });
        }
        let v = DMatrix::from_fn(n, n, |r, c| eig.eigenvectors[(r, order[c])]);
        let scaled = |p: f64| {
            let mut vs = v.clone();
            for (c, &wc) in w.iter().enumerate() {
                vs.column_mut(c).scale_mut(wc.powf(p));
            }
            let m = &vs * v.transpose();
            (&m + m.transpose()) * 0.5
        };
        let s = scaled(0.5);
        let s_inv = scaled(-0.5);
        // Lambda = S D1 S with the tridiagonal product done explicitly
        let mut sd1 = DMatrix::<f64>::zeros(n, n);
        for c in 0..n {
            let mut col = s.column(c) * d1.diag[c];
            if c > 0 {
                col += s.column(c - 1) * d1.off;
            }
            if c + 1 < n {
                col += s.column(c + 1) * d1.off;
            }
            sd1.set_column(c, &col);
        }
        let lam = &sd1 * &s;
        let lambda_h = (&lam + lam.transpose()) * 0.5;
        Ok(GridOperator {
            spec: *spec,
            half_width,
            n,
            h,
            x,
            d1,
            d2,
            d2_eigs: w,
            s,
            s_inv,
            lambda_h,
            lam_eig: OnceLock::new(),
        })
    }

    /// L_h = D2_h D1_h (pentadiagonal, returned dense).
    pub fn l_h(&self) -> DMatrix<f64> {
        product_dense(&self.d2, &self.d1)
    }

    /// L*_h = D1_h D2_h = L_h^T.
    pub fn lstar_h(&self) -> DMatrix<f64> {
        product_dense(&self.d1, &self.d2)
    }

    pub fn apply_l(&self, f: &[f64]) -> Vec<f64> {
        self.d2.apply(&self.d1.apply(f))
    }

    /// Eigenvalues (ascending) and orthonormal eigenvectors of Lambda_h.
    pub fn lambda_eigen(&self) -> &(Vec<f64>, DMatrix<f64>) {
        self.lam_eig.get_or_init(|| {
            let e = SymmetricEigen::new(self.lambda_h.clone());
            let n = self.n;
            let mut order: Vec<usize> = (0..n).collect();
            order.sort_by(|&a, &b| e.eigenvalues[a].partial_cmp(&e.eigenvalues[b]).unwrap());
            let vals = order.iter().map(|&i| e.eigenvalues[i]).collect();
            let vecs = DMatrix::from_fn(n, n, |r, c| e.eigenvectors[(r, order[c])]);
            (vals, vecs)
        })
    }

    pub fn cond_s(&self) -> f64 {
        (self.d2_eigs[self.n - 1] / self.d2_eigs[0]).sqrt()
    }

    /// Discrete L2 inner product (f, g) = h sum f conj(g).
    pub fn dot(&self, f: &[f64], g: &[f64]) -> f64 {
        self.h * f.iter().zip(g).map(|(a, b)| a * b).sum::<f64>()
    }

    pub fn norm(&self, f: &[f64]) -> f64 {
        self.dot(f, f).sqrt()
    }

    /// Eigenvalues of L_h and Lambda_h with the reality and similarity
    /// diagnostics. Deviations are normwise: divided by the spectral radius.
    pub fn oracle_spectrum(&self) -> Result<OracleSpectrum> {
        let l = self.l_h();
        let l_norm = l.norm();
        let ev = l.clone().schur().complex_eigenvalues();
        let mut le: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
        if le.iter().any(|p| !p.0.is_finite() || !p.1.is_finite()) {
            return Err(SpecError::EigFailure("non-finite eigenvalue of L_h".into()));
        }
        le.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        let lam = self.lambda_eigen().0.clone();
        let radius = lam.iter().fold(0.0f64, |a, v| a.max(v.abs()));
        let max_imag_rel = le.iter().fold(0.0f64, |a, p| a.max(p.1.abs())) / l_norm;
        let max_dev_rel = le.iter().zip(&lam).fold(0.0f64, |a, (p, q)| a.max((p.0 - q).abs())) / radius;
        Ok(OracleSpectrum { l_eigs: le, lambda_eigs: lam, l_norm, max_imag_rel, max_dev_rel })
    }

    /// ||L_h - S Lambda_h S^-1||_F / ||L_h||_F.
    pub fn similarity_defect(&self) -> f64 {
        let l = self.l_h();
        let r = &self.s * &self.lambda_h * &self.s_inv;
        (&l - r).norm() / l.norm()
    }

    fn spectral_coeffs(&self, f: &[f64]) -> DVector<f64> {
        let (_, v) = self.lambda_eigen();
        v.transpose() * (&self.s_inv * DVector::from_column_slice(f))
    }

    fn synth_real(&self, c: &DVector<f64>) -> Vec<f64> {
        let (_, v) = self.lambda_eigen();
        (&self.s * (v * c)).iter().cloned().collect()
    }

    /// (L_h - z)^-1 f through the similarity S (Lambda_h - z)^-1 S^-1.
    pub fn resolvent_apply(&self, z: C64, f: &[f64]) -> Result<Vec<C64>> {
        let (vals, v) = self.lambda_eigen();
        let dist = vals.iter().map(|&l| (C64::new(l, 0.0) - z).norm()).fold(f64::INFINITY, f64::min);
        if dist < 1e-6 {
            return Err(SpecError::NearSpectrum { z, dist });
        }
        let c = self.spectral_coeffs(f);
        let re: DVector<f64> = DVector::from_fn(self.n, |i, _| (c[i] / (C64::new(vals[i], 0.0) - z)).re);
        let im: DVector<f64> = DVector::from_fn(self.n, |i, _| (c[i] / (C64::new(vals[i], 0.0) - z)).im);
        let a = &self.s * (v * re);
        let b = &self.s * (v * im);
        Ok((0..self.n).map(|i| C64::new(a[i], b[i])).collect())
    }

    /// (L_h - z)^-1 f by a direct complex LU solve.
    pub fn resolvent_solve(&self, z: C64, f: &[f64]) -> Result<Vec<C64>> {
        let l = self.l_h();
        let m = DMatrix::from_fn(self.n, self.n, |i, j| C64::new(l[(i, j)], 0.0) - if i == j { z } else { C64::new(0.0, 0.0) });
        let rhs = DVector::from_fn(self.n, |i, _| C64::new(f[i], 0.0));
        let sol = m.lu().solve(&rhs).ok_or(SpecError::NearSpectrum { z, dist: 0.0 })?;
        Ok(sol.iter().cloned().collect())
    }

    /// B_L(b) f = S E_Lambda(b) S^-1 f for a finite union of closed intervals.
    pub fn projection_apply(&self, b: &[(f64, f64)], f: &[f64]) -> Vec<f64> {
        let (vals, _) = self.lambda_eigen();
        let mut c = self.spectral_coeffs(f);
        for (i, &l) in vals.iter().enumerate() {
            if !in_union(b, l) {
                c[i] = 0.0;
            }
        }
        self.synth_real(&c)
    }

    pub fn projection_matrix(&self, b: &[(f64, f64)]) -> DMatrix<f64> {
        let (vals, v) = self.lambda_eigen();
        let mut vb = v.clone();
        for (i, &l) in vals.iter().enumerate() {
            if !in_union(b, l) {
                vb.column_mut(i).fill(0.0);
            }
        }
        &self.s * (vb * v.transpose()) * &self.s_inv
    }

    /// Stone-formula approximation (2 pi i)^-1 int_a^b (R(l + i eps) - R(l - i eps)) dl f
    /// by graded Gauss-Legendre quadrature in l, compared with B([a, b]) f.
    pub fn stone_check(&self, a: f64, b: f64, eps_list: &[f64], f: &[f64]) -> Result<StoneReport> {
        let (vals, _) = self.lambda_eigen();
        for &e in &[a, b] {
            if vals.iter().any(|&l| (l - e).abs() < 1e-4) {
                return Err(SpecError::EndpointOnSpectrum { endpoint: e });
            }
        }
        let c = self.spectral_coeffs(f);
        let target = self.projection_apply(&[(a, b)], f);
        let mut errors = Vec::new();
        for &eps in eps_list {
            let mut ce = c.clone();
            for (i, &mu) in vals.iter().enumerate() {
                ce[i] *= stone_weight(a, b, mu, eps);
            }
            let g = self.synth_real(&ce);
            let diff: Vec<f64> = g.iter().zip(&target).map(|(p, q)| p - q).collect();
            errors.push(self.norm(&diff));
        }
        Ok(StoneReport { eps: eps_list.to_vec(), errors, f_norm: self.norm(f) })
    }

    /// cond(S) and the largest ||B(b)||_2 over random interval unions b.
    pub fn quasi_selfadjoint_diag(&self, samples: usize, seed: u64) -> QuasiSelfadjointReport {
        use rand::SeedableRng;
        let (vals, v) = self.lambda_eigen();
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        // ||S V_b V_b^T S^-1||^2 = lambda_max((V_b^T D2 V_b)(V_b^T D2^-1 V_b))
        let mut d2v = DMatrix::<f64>::zeros(self.n, self.n);
        for c in 0..self.n {
            let col: Vec<f64> = v.column(c).iter().cloned().collect();
            d2v.set_column(c, &DVector::from_vec(self.d2.apply(&col)));
        }
        let gp = v.transpose() * d2v;
        let sinv2 = &self.s_inv * &self.s_inv;
        let gm = v.transpose() * sinv2 * v;
        let (lo, hi) = (vals[0] - 1.0, vals[0] + 0.25 * (vals[self.n - 1] - vals[0]));
        let mut max_norm: f64 = 0.0;
        for _ in 0..samples {
            let b = random_union(&mut rng, lo, hi);
            let idx: Vec<usize> = (0..self.n).filter(|&i| in_union(&b, vals[i])).collect();
            if idx.is_empty() {
                continue;
            }
            let m = idx.len();
            let a = DMatrix::from_fn(m, m, |i, j| gp[(idx[i], idx[j])]);
            let bm = DMatrix::from_fn(m, m, |i, j| gm[(idx[i], idx[j])]);
            let nrm2 = match a.clone().cholesky() {
                Some(ch) => {
                    let l = ch.l();
                    let t = l.transpose() * bm * l;
                    let t = (&t + t.transpose()) * 0.5;
                    SymmetricEigen::new(t).eigenvalues.iter().cloned().fold(0.0, f64::max)
                }
                None => (a * bm).norm(),
            };
            max_norm = max_norm.max(nrm2.max(0.0).sqrt());
        }
        let cond_s = self.cond_s();
        QuasiSelfadjointReport { cond_s, max_norm, samples, holds: max_norm <= cond_s * (1.0 + 1e-8) }
    }

    /// Dimension of the near-kernel of D1_h (grid version of P0): eigenvalues
    /// with |l| <= min(1e-4 ||D1_h||, h1 / 2).
    pub fn p0_rank(&self) -> usize {
        let norm = self.d1.gershgorin().1;
        let thr = (1e-4 * norm).min(0.5 * self.spec.h1.abs());
        self.d1.count_below(thr) - self.d1.count_below(-thr)
    }

    /// Smallest eigenvalue of D1_h (its kernel approximation).
    pub fn d1_eig(&self, k: usize) -> f64 {
        self.d1.eig_k(k)
    }

    /// Fraction of the squared mass in the outer 10% of the grid.
    pub fn edge_mass(&self, v: &[f64]) -> f64 {
        let tot: f64 = v.iter().map(|a| a * a).sum();
        let cut = 0.9 * self.half_width;
        let edge: f64 = v.iter().zip(&self.x).filter(|(_, x)| x.abs() > cut).map(|(a, _)| a * a).sum();
        edge / tot
    }
}

fn product_dense(a: &Tridiag, b: &Tridiag) -> DMatrix<f64> {
    let n = a.diag.len();
    let mut m = DMatrix::<f64>::zeros(n, n);
    let mut e = vec![0.0; n];
    for j in 0..n {
        e[j] = 1.0;
        let col = a.apply(&b.apply(&e));
        for i in j.saturating_sub(2)..(j + 3).min(n) {
            m[(i, j)] = col[i];
        }
        e[j] = 0.0;
    }
    m
}

pub fn in_union(b: &[(f64, f64)], l: f64) -> bool {
    b.iter().any(|&(lo, hi)| l >= lo && l <= hi)
}

/// (1/pi) int_a^b eps / ((l - mu)^2 + eps^2) dl by composite Gauss-Legendre,
/// panels graded geometrically around mu.
pub fn stone_weight(a: f64, b: f64, mu: f64, eps: f64) -> f64 {
    let (nodes, weights) = gauss_legendre(16);
    let mut breaks = vec![a, b];
    if mu > a && mu < b {
        breaks.push(mu);
    }
    let mut s = eps;
    while s < (b - a) {
        for p in [mu - s, mu + s] {
            if p > a && p < b {
                breaks.push(p);
            }
        }
        s *= 2.0;
    }
    breaks.sort_by(|x, y| x.partial_cmp(y).unwrap());
    breaks.dedup();
    let mut total = 0.0;
    for w in breaks.windows(2) {
        let (lo, hi) = (w[0], w[1]);
        let half = 0.5 * (hi - lo);
        let mid = 0.5 * (hi + lo);
        for (t, wt) in nodes.iter().zip(&weights) {
            let l = mid + half * t;
            total += half * wt * eps / ((l - mu).powi(2) + eps * eps);
        }
    }
    total / std::f64::consts::PI
}

/// Random union of one to three closed intervals in [lo, hi].
pub fn random_union<R: rand::Rng>(rng: &mut R, lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let k = rng.random_range(1..=3);
    let mut out = Vec::new();
    for _ in 0..k {
        let a = rng.random_range(lo..hi);
        let b = rng.random_range(lo..hi);
        out.push((a.min(b), a.max(b)));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn small(spec: &OperatorSpec) -> GridOperator {
        GridOperator::new(spec, 10.0, 200).unwrap()
    }

    #[test]
    fn rejects_tiny_grids() {
        assert!(matches!(GridOperator::new(&OperatorSpec::free(), 10.0, 100), Err(SpecError::InvalidGrid(_))));
        assert!(matches!(GridOperator::new(&OperatorSpec::free(), 5.0, 400), Err(SpecError::InvalidGrid(_))));
    }

    #[test]
    fn inertia_bisection_matches_dense() {
        for spec in [OperatorSpec::p2(), OperatorSpec::free()] {
            let go = GridOperator::new(&spec, 10.0, 300).unwrap();
            let dense = go.lambda_eigen().0[0];
            let banded = l_min_eig(&spec, 10.0, 300);
            assert!((dense - banded).abs() <= 1e-9 * dense.abs().max(1.0), "{dense} {banded}");
        }
    }

    #[test]
    fn sturm_matches_dense() {
        let (x, h) = grid_nodes(10.0, 60);
        let t = schrodinger(&crate::problem::Potential::PoschlTeller { depth: 2.0 }, 1.0, &x, h);
        let e = SymmetricEigen::new(t.to_dense());
        let mut ev: Vec<f64> = e.eigenvalues.iter().cloned().collect();
        ev.sort_by(|a, b| a.partial_cmp(b).unwrap());
        for k in [0, 1, 5, 59] {
            assert!((t.eig_k(k) - ev[k]).abs() < 1e-9 * ev[k].abs().max(1.0));
        }
    }

    #[test]
    fn free_spectra_match_sine_basis() {
        // D1_h eigenvalues: 1 + (4/h^2) sin^2(k pi / (2(N+1)))
        let go = GridOperator::new(&OperatorSpec::free(), 20.0, 800).unwrap();
        let n = go.n;
        let lap = |k: usize| 4.0 / (go.h * go.h) * (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2);
        assert!((go.d1.eig_k(0) - 1.0).abs() < 1e-2 && go.d1.eig_k(0) >= 1.0 - 1e-6);
        assert!(go.d2_eigs[0] >= 2.0 - 1e-6);
        assert!(go.d1.eig_k(n - 1) <= 1.0 + 4.0 / (go.h * go.h));
        let (vals, _) = go.lambda_eigen();
        for k in [1usize, 7, 300] {
            let l = lap(k);
            let want = (l + 1.0) * (l + 2.0);
            assert!((vals[k - 1] - want).abs() < 1e-10 * want.max(1.0) * 1e2, "k={k}");
        }
    }

    #[test]
    fn similarity_identity_and_transpose() {
        let go = small(&OperatorSpec::p2());
        assert!(go.similarity_defect() < 1e-12);
        let l = go.l_h();
        assert!((go.lstar_h() - l.transpose()).norm() <= 1e-12 * l.norm());
    }

    #[test]
    fn p2_kernel_and_projector() {
        let go = GridOperator::new(&OperatorSpec::p2(), 10.0, 400).unwrap();
        assert!(go.d1_eig(0).abs() <= 1e-3);
        assert_eq!(go.p0_rank(), 1);
        let b = go.projection_matrix(&[(-0.5, 0.5)]);
        assert!((b.trace() - 1.0).abs() < 1e-8);
        assert!((&b * &b - &b).norm() < 1e-10 * b.norm());
        let all = go.projection_matrix(&[(-1e9, 1e9)]);
        assert!((all - DMatrix::<f64>::identity(go.n, go.n)).norm() < 1e-9);
        let (vals, _) = go.lambda_eigen();
        let cut = 5.0;
        let lo = go.projection_matrix(&[(-1e9, cut)]);
        let hi = go.projection_matrix(&[(cut + 1e-12, 1e9)]);
        assert!(vals.iter().all(|&v| (v - cut).abs() > 1e-9));
        assert!((lo + hi - DMatrix::<f64>::identity(go.n, go.n)).norm() < 1e-9);
        // projections commute with L_h
        let l = go.l_h();
        let p = go.projection_matrix(&[(2.5, 8.0)]);
        assert!((&l * &p - &p * &l).norm() <= 1e-9 * l.norm());
    }

    #[test]
    fn resolvent_routes_agree() {
        let go = small(&OperatorSpec::p2());
        let f: Vec<f64> = go.x.iter().map(|x| (-x * x / 2.0).exp()).collect();
        for z in [C64::new(-1.0, 0.0), C64::new(4.0, 1.0)] {
            let a = go.resolvent_apply(z, &f).unwrap();
            let b = go.resolvent_solve(z, &f).unwrap();
            let num: f64 = a.iter().zip(&b).map(|(p, q)| (p - q).norm_sqr()).sum::<f64>().sqrt();
            let den: f64 = b.iter().map(|p| p.norm_sqr()).sum::<f64>().sqrt();
            assert!(num <= 1e-10 * den, "z = {z}: {}", num / den);
        }
        let (vals, _) = go.lambda_eigen();
        assert!(matches!(go.resolvent_apply(C64::new(vals[3], 0.0), &f), Err(SpecError::NearSpectrum { .. })));
    }

    #[test]
    fn free_resolvent_is_a_multiplier() {
        // sine-basis diagonalization: (L_h + 1)^-1 on a single FD mode
        let go = small(&OperatorSpec::free());
        let n = go.n;
        let k = 5;
        let f: Vec<f64> = (1..=n).map(|i| (i as f64 * k as f64 * std::f64::consts::PI / (n + 1) as f64).sin()).collect();
        let l = 4.0 / (go.h * go.h) * (k as f64 * std::f64::consts::PI / (2.0 * (n + 1) as f64)).sin().powi(2);
        let mult = 1.0 / ((l + 1.0) * (l + 2.0) + 1.0);
        let r = go.resolvent_apply(C64::new(-1.0, 0.0), &f).unwrap();
        for i in 0..n {
            assert!((r[i].re - mult * f[i]).abs() < 1e-8 && r[i].im.abs() < 1e-12);
        }
    }

    #[test]
    fn stone_weight_matches_arctan() {
        for &(mu, eps) in &[(5.0f64, 1e-1f64), (5.0, 1e-3), (2.9, 1e-2), (7.0001, 1e-3), (100.0, 1e-2)] {
            let (a, b) = (3.0, 7.0);
            let exact = (((b - mu) / eps).atan() - ((a - mu) / eps).atan()) / std::f64::consts::PI;
            assert!((stone_weight(a, b, mu, eps) - exact).abs() < 1e-12, "mu={mu}, eps={eps}");
        }
    }

    #[test]
    fn stone_errors_decrease() {
        let go = small(&OperatorSpec::p2());
        let f: Vec<f64> = go.x.iter().map(|x| (-x * x / 2.0).exp()).collect();
        let r = go.stone_check(3.0, 7.0, &[1e-1, 1e-2, 1e-3], &f).unwrap();
        assert!(r.errors[0] > r.errors[1] && r.errors[1] > r.errors[2]);
        assert!(r.errors[2] <= 1e-2 * r.f_norm);
        // interval with no spectrum: limit is essentially zero
        let r = go.stone_check(-20.0, -10.0, &[1e-3], &f).unwrap();
        assert!(r.errors[0] < 1e-3 * r.f_norm);
    }

    #[test]
    fn single_mode_stone_profile() {
        // f = S v_k for an eigenvector of Lambda_h: the eps-integral returns
        // the arctan profile times f, which tends to f as eps -> 0
        let go = small(&OperatorSpec::p2());
        let (vals, v) = go.lambda_eigen();
        let k = vals.iter().position(|&l| l > 4.0).unwrap();
        let f: Vec<f64> = (&go.s * v.column(k)).iter().cloned().collect();
        let (a, b) = (vals[k] - 0.3, vals[k] + 0.2);
        let r = go.stone_check(a, b, &[1e-1, 1e-3], &f).unwrap();
        let w = stone_weight(a, b, vals[k], 1e-1);
        assert!((r.errors[0] - (1.0 - w) * r.f_norm).abs() < 1e-8 * r.f_norm);
        assert!(r.errors[1] < 1e-2 * r.f_norm);
    }

    #[test]
    fn quasi_selfadjoint_bound() {
        let go = small(&OperatorSpec::p2());
        let rep = go.quasi_selfadjoint_diag(50, 7);
        assert!(rep.holds, "{rep:?}");
        let free = small(&OperatorSpec::free());
        let cs = free.cond_s();
        assert!((cs - (free.d2_eigs[free.n - 1] / free.d2_eigs[0]).sqrt()).abs() < 1e-12);
        // off-spectrum singleton projects to zero
        let p = go.projection_matrix(&[(-50.0, -50.0)]);
        assert!(p.norm() == 0.0);
    }

    #[test]
    fn grid_spectrum_is_real() {
        let go = small(&OperatorSpec::p2());
        let sp = go.oracle_spectrum().unwrap();
        assert!(sp.max_imag_rel <= 1e-8);
        assert!(sp.max_dev_rel <= 1e-8);
    }
}

#[cfg(test)]
mod props {
    use super::*;
    use proptest::prelude::*;

    fn operator() -> &'static GridOperator {
        static OP: OnceLock<GridOperator> = OnceLock::new();
        OP.get_or_init(|| GridOperator::new(&OperatorSpec::p2(), 10.0, 200).unwrap())
    }

    proptest! {
        #[test]
        fn stone_weight_is_a_probability(a in -10.0f64..10.0, w in 0.0f64..10.0, mu in -15.0f64..15.0, eps in 1e-3f64..1.0) {
            let s = stone_weight(a, a + w, mu, eps);
            prop_assert!((-1e-12..=1.0 + 1e-12).contains(&s));
            // splitting the interval splits the weight
            let m = a + 0.5 * w;
            let parts = stone_weight(a, m, mu, eps) + stone_weight(m, a + w, mu, eps);
            prop_assert!((parts - s).abs() < 1e-10);
        }

        #[test]
        fn grid_projection_is_additive_on_disjoint_unions(cut in 0.5f64..400.0, seed in 0u64..1000) {
            let o = operator();
            let f: Vec<f64> = o.x.iter().map(|&x| (-(x - (seed % 7) as f64 * 0.3).powi(2)).exp()).collect();
            let whole = o.projection_apply(&[(-10.0, 1e6)], &f);
            let lo = o.projection_apply(&[(-10.0, cut)], &f);
            let hi = o.projection_apply(&[(cut + 1e-9, 1e6)], &f);
            let err = whole.iter().zip(lo.iter().zip(&hi)).map(|(w, (l, h))| (w - l - h).abs()).fold(0.0, f64::max);
            prop_assert!(err < 1e-10 * o.norm(&f).max(1.0), "err {err}");
        }
    }
}
