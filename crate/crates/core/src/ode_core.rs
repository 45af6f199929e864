//! Jost-type solutions by successive approximation.
//!
//! A solution with rate r_k is written y = e^{r_k x} M(x) (e_k + v(x)), where
//! M(x) D(x) is a fundamental matrix of the free system (M = Pi, or Psi(x)
//! near the branch point). Because B has a single nonzero row, the
//! transformed perturbation is M^{-1}(tau) e4 times the scalar
//! b(tau) . M(tau)(e_k + v(tau)), and the integral equation is
//!   v_j(x) = int_{x0}^x  e^{a_j (x - tau)} g_j   if Im mu_j > Im mu_k
//!   v_j(x) = -int_x^X    e^{a_j (x - tau)} g_j   otherwise
//! with a_j = r_j - r_k. Integrals use exponentially weighted product
//! quadrature (degree-5 interpolation of g) on a uniform grid.

use nalgebra::DMatrix;

use crate::characteristic::{branch_rates, invert4, order_roots, psi_matrix, real_roots, to_m4, Regime};
use crate::error::{Result, SpecError};
use crate::linalg::{c, cond2, norm1, C64, I, M4, V4};
use crate::ode::integrate_grid;
use crate::problem::OperatorSpec;
use crate::quad::{gauss_legendre, simpson_weights};

#[derive(Clone, Copy, Debug)]
pub struct PicardConfig {
    pub half_width: f64,
    pub tol: f64,
    pub ode_tol: f64,
    pub max_iter: usize,
    pub h_max: f64,
    /// left end of the stored range (solutions are extended to it by ODE)
    pub x_lo: f64,
    /// largest anchor tried when the iteration from 0 does not contract
    pub x0_max: f64,
}

impl Default for PicardConfig {
    fn default() -> Self {
        PicardConfig { half_width: 20.0, tol: 1e-10, ode_tol: 1e-11, max_iter: 200, h_max: 0.02, x_lo: -2.5, x0_max: 12.0 }
    }
}

#[derive(Clone, Debug)]
pub enum Frame {
    Vandermonde { mu: [C64; 4], pi: M4, pi_inv: M4 },
    Branch { theta: f64, nu: f64 },
}

impl Frame {
    pub fn vandermonde(spec: &OperatorSpec, z: C64) -> Result<Frame> {
        let k = spec.consts();
        let rs = if z.im == 0.0 && z.re >= k.h_p { real_roots(z.re, &k)? } else { order_roots(z, &k)? };
        if rs.regime == Regime::BranchPoint {
            return Err(SpecError::DegenerateRoots { z });
        }
        Ok(Frame::Vandermonde { mu: crate::characteristic::mu_f64(&rs), pi: to_m4(&rs.pi), pi_inv: to_m4(&rs.pi_inv) })
    }

    pub fn branch(spec: &OperatorSpec, lambda: f64) -> Result<Frame> {
        let (theta, nu) = crate::characteristic::theta_nu(lambda, &spec.consts())?;
        Ok(Frame::Branch { theta, nu })
    }

    /// Exponent rates r_j = i mu_j.
    pub fn rates(&self) -> [C64; 4] {
        match self {
            Frame::Vandermonde { mu, .. } => mu.map(|m| I * m),
            Frame::Branch { theta, nu } => branch_rates(*theta, *nu),
        }
    }

    pub fn mat(&self, x: f64) -> M4 {
        match self {
            Frame::Vandermonde { pi, .. } => *pi,
            Frame::Branch { theta, nu } => to_m4(&psi_matrix(x, *theta, *nu)),
        }
    }

    fn inv_e4(&self, x: f64) -> V4 {
        match self {
            Frame::Vandermonde { pi_inv, .. } => pi_inv.column(3).into_owned(),
            Frame::Branch { theta, nu } => {
                let inv = invert4(&psi_matrix(x, *theta, *nu)).expect("Psi is invertible for theta > 0");
                to_m4(&inv).column(3).into_owned()
            }
        }
    }

    pub fn is_branch(&self) -> bool {
        matches!(self, Frame::Branch { .. })
    }
}

/// A solution y(x) = e^{rate x} u(x) stored at x_lo + m h, m = 0..u.len().
#[derive(Clone, Debug)]
pub struct HalfLine {
    pub k: usize,
    pub z: C64,
    pub rate: C64,
    pub x_lo: f64,
    pub h: f64,
    pub u: Vec<V4>,
    /// anchor of the integral equation; [x_lo, x0] comes from the ODE
    pub x0: f64,
    pub iterations: usize,
    pub ratios: Vec<f64>,
    /// sup |T(v) - v| after convergence
    pub self_residual: f64,
    pub branch: bool,
}

impl HalfLine {
    pub fn x_hi(&self) -> f64 {
        self.x_lo + self.h * (self.u.len() - 1) as f64
    }

    pub fn node(&self, m: usize) -> f64 {
        self.x_lo + self.h * m as f64
    }

    /// Modulated value u(x) by cubic Hermite interpolation.
    pub fn eval_u(&self, spec: &OperatorSpec, x: f64) -> Result<V4> {
        let hi = self.x_hi();
        if x < self.x_lo - 1e-12 || x > hi + 1e-12 {
            return Err(SpecError::DomainError(format!("x = {x} outside [{}, {hi}]", self.x_lo)));
        }
        let t = ((x - self.x_lo) / self.h).clamp(0.0, (self.u.len() - 1) as f64);
        let m = (t.floor() as usize).min(self.u.len() - 2);
        let s = t - m as f64;
        if s == 0.0 {
            return Ok(self.u[m]);
        }
        let (x0, x1) = (self.node(m), self.node(m + 1));
        let a = crate::problem::a_full(self.z, &spec.consts()) - M4::identity() * self.rate;
        let d0 = (a + spec.b_pert_matrix(x0)) * self.u[m] * c(self.h);
        let d1 = (a + spec.b_pert_matrix(x1)) * self.u[m + 1] * c(self.h);
        let (s2, s3) = (s * s, s * s * s);
        let h00 = 2.0 * s3 - 3.0 * s2 + 1.0;
        let h10 = s3 - 2.0 * s2 + s;
        let h01 = -2.0 * s3 + 3.0 * s2;
        let h11 = s3 - s2;
        Ok(self.u[m] * c(h00) + d0 * c(h10) + self.u[m + 1] * c(h01) + d1 * c(h11))
    }

    /// y(x) = (u, u', u'', u''') of the solution.
    pub fn eval(&self, spec: &OperatorSpec, x: f64) -> Result<V4> {
        Ok(self.eval_u(spec, x)? * (self.rate * x).exp())
    }

    /// r_k(x) = e^{-i mu_k x} u(x) - 1, the relative remainder of the first
    /// component (Vandermonde frame: first entry of p_k is 1).
    pub fn remainder(&self, spec: &OperatorSpec, x: f64) -> Result<C64> {
        Ok(self.eval_u(spec, x)?[0] - c(1.0))
    }
}

fn grid_layout(frame: &Frame, cfg: &PicardConfig) -> (f64, usize, usize) {
    let r = frame.rates();
    let mut amax: f64 = 0.0;
    for a in &r {
        for b in &r {
            amax = amax.max((a - b).norm());
        }
    }
    let h_target = cfg.h_max.min(if amax > 0.0 { 0.5 / amax } else { f64::INFINITY });
    let n_right = (cfg.half_width / h_target).ceil() as usize;
    let h = cfg.half_width / n_right as f64;
    let n_left = (-cfg.x_lo / h).ceil().max(0.0) as usize;
    (h, n_left, n_right)
}

/// Points per interpolation stencil of the product quadrature.
const STENCIL: usize = 6;

struct ExpWeights {
    /// fwd[o][i]: weight of node base + i in the local integral over cell
    /// n, where base = n - o; o = 0..STENCIL-2 covers the edge cases
    fwd: Vec<[C64; STENCIL]>,
    bwd: Vec<[C64; STENCIL]>,
    step: C64,
}

fn lagrange(o: f64, s: f64) -> [f64; STENCIL] {
    let mut l = [1.0; STENCIL];
    for (i, li) in l.iter_mut().enumerate() {
        for j in 0..STENCIL {
            if i != j {
                *li *= (s - (j as f64 - o)) / (i as f64 - j as f64);
            }
        }
    }
    l
}

fn exp_weights(a: C64, h: f64, gl: &(Vec<f64>, Vec<f64>)) -> ExpWeights {
    let ch = a * h;
    let zero = c(0.0);
    let mut fwd = vec![[zero; STENCIL]; STENCIL - 1];
    let mut bwd = vec![[zero; STENCIL]; STENCIL - 1];
    for (xq, wq) in gl.0.iter().zip(&gl.1) {
        let s = 0.5 * (xq + 1.0);
        let w = 0.5 * wq * h;
        let ef = (ch * (1.0 - s)).exp() * w;
        let eb = (-ch * s).exp() * w;
        for o in 0..STENCIL - 1 {
            let l = lagrange(o as f64, s);
            for i in 0..STENCIL {
                fwd[o][i] += ef * l[i];
                bwd[o][i] += eb * l[i];
            }
        }
    }
    ExpWeights { fwd, bwd, step: ch.exp() }
}

struct PicardRun {
    v: Vec<V4>,
    iterations: usize,
    ratios: Vec<f64>,
    self_residual: f64,
}

/// Fixed-point iteration on the nodes x0 = m0 h, ..., X.
fn iterate(spec: &OperatorSpec, frame: &Frame, k: usize, h: f64, m0: usize, n_right: usize, cfg: &PicardConfig, z: C64) -> Result<PicardRun> {
    let rates = frame.rates();
    let nn = n_right - m0 + 1;
    if nn < STENCIL {
        return Err(SpecError::InvalidGrid(format!("anchor {} leaves fewer than {STENCIL} nodes", m0 as f64 * h)));
    }
    let xs: Vec<f64> = (0..nn).map(|i| (m0 + i) as f64 * h).collect();
    let mats: Vec<M4> = xs.iter().map(|&x| frame.mat(x)).collect();
    let inv4: Vec<V4> = xs.iter().map(|&x| frame.inv_e4(x)).collect();
    let bs: Vec<[f64; 3]> = xs.iter().map(|&x| spec.b_pert(x)).collect();
    let gl = gauss_legendre(16);
    let above: Vec<bool> = (0..4).map(|j| rates[j].re < rates[k].re).collect();
    let weights: Vec<ExpWeights> = (0..4).map(|j| exp_weights(rates[j] - rates[k], h, &gl)).collect();
    let ek = V4::from_fn(|i, _| if i == k { c(1.0) } else { c(0.0) });

    let apply = |v: &[V4]| -> Vec<V4> {
        let g: Vec<V4> = (0..nn)
            .map(|i| {
                let u = mats[i] * (ek + v[i]);
                let s = c(bs[i][0]) * u[0] + c(bs[i][1]) * u[1] + c(bs[i][2]) * u[2];
                inv4[i] * s
            })
            .collect();
        let mut out = vec![V4::zeros(); nn];
        for j in 0..4 {
            let w = &weights[j];
            let local = |n: usize, wt: &[[C64; STENCIL]]| -> C64 {
                let base = n.saturating_sub(STENCIL / 2 - 1).min(nn - STENCIL);
                let o = n - base;
                (0..STENCIL).fold(c(0.0), |acc, i| acc + wt[o][i] * g[base + i][j])
            };
            if above[j] {
                let mut acc = c(0.0);
                for n in 0..nn - 1 {
                    acc = w.step * acc + local(n, &w.fwd);
                    out[n + 1][j] = acc;
                }
            } else {
                let back = c(1.0) / w.step;
                let mut acc = c(0.0);
                for n in (0..nn - 1).rev() {
                    acc = back * acc + local(n, &w.bwd);
                    out[n][j] = -acc;
                }
            }
        }
        out
    };
    let sup = |a: &[V4], b: &[V4]| -> f64 {
        a.iter().zip(b).fold(0.0, |m, (x, y)| (x - y).iter().fold(m, |m, d| m.max(d.norm())))
    };

    let mut v = vec![V4::zeros(); nn];
    let mut prev = f64::NAN;
    let mut ratios = Vec::new();
    for it in 1..=cfg.max_iter {
        let next = apply(&v);
        let diff = sup(&next, &v);
        v = next;
        if !diff.is_finite() {
            return Err(SpecError::NoContraction { lambda: z.re, ratio: f64::INFINITY });
        }
        if it > 1 && prev > 0.0 {
            let r = diff / prev;
            ratios.push(r);
            if it >= 3 && r > 0.9 {
                return Err(SpecError::NoContraction { lambda: z.re, ratio: r });
            }
        }
        if diff <= cfg.tol {
            let self_residual = sup(&apply(&v), &v);
            return Ok(PicardRun { v, iterations: it, ratios, self_residual });
        }
        prev = diff;
    }
    Err(SpecError::NoContraction { lambda: z.re, ratio: ratios.last().copied().unwrap_or(f64::NAN) })
}

/// Bound on the contribution of the potentials beyond X.
fn tail_check(spec: &OperatorSpec, frame: &Frame, x: f64, tol: f64) -> Result<()> {
    let mut tail = 0.0;
    for p in [&spec.q1, &spec.q2] {
        for kk in 0..3 {
            tail += p.decay_tail(kk, x);
        }
    }
    let mut fac: f64 = 0.0;
    for r in frame.rates() {
        fac = fac.max(1.0 + r.norm() + r.norm().powi(2));
    }
    let m = norm1(&frame.inv_e4(x));
    let bound = tail * fac * m;
    if bound > tol {
        return Err(SpecError::TailTooFat { bound });
    }
    Ok(())
}

fn solve(spec: &OperatorSpec, frame: &Frame, k: usize, z: C64, cfg: &PicardConfig, anchors: &[f64]) -> Result<HalfLine> {
    if k >= 4 {
        return Err(SpecError::DomainError(format!("solution index {} out of range", k + 1)));
    }
    tail_check(spec, frame, cfg.half_width, cfg.tol)?;
    let (h, n_left, n_right) = grid_layout(frame, cfg);
    let rate = frame.rates()[k];
    let mut last_err = None;
    for &x0 in anchors {
        let m0 = (x0 / h).round() as usize;
        let run = match iterate(spec, frame, k, h, m0, n_right, cfg, z) {
            Ok(r) => r,
            Err(e @ SpecError::NoContraction { .. }) => {
                last_err = Some(e);
                continue;
            }
            Err(e) => return Err(e),
        };
        let ek = V4::from_fn(|i, _| if i == k { c(1.0) } else { c(0.0) });
        let right: Vec<V4> =
            run.v.iter().enumerate().map(|(i, v)| frame.mat((m0 + i) as f64 * h) * (ek + v)).collect();
        let back = integrate_grid(spec, z, rate, m0 as f64 * h, right[0], h, m0 + n_left, -1.0, cfg.ode_tol)?;
        let mut u: Vec<V4> = back.into_iter().rev().collect();
        u.extend_from_slice(&right[1..]);
        return Ok(HalfLine {
            k,
            z,
            rate,
            x_lo: -(n_left as f64) * h,
            h,
            u,
            x0: m0 as f64 * h,
            iterations: run.iterations,
            ratios: run.ratios,
            self_residual: run.self_residual,
            branch: frame.is_branch(),
        });
    }
    Err(last_err.unwrap_or(SpecError::NoContraction { lambda: z.re, ratio: f64::NAN }))
}

fn anchors(cfg: &PicardConfig) -> Vec<f64> {
    let top = cfg.x0_max.min(cfg.half_width / 2.0);
    let mut a = vec![0.0];
    let mut x = 1.0;
    while x <= top + 1e-12 {
        a.push(x);
        x += 1.0;
    }
    a
}

/// Solution with rate i mu_k (k = 0..3) for real lambda above the branch
/// point, integral equation anchored at 0. Refused when the contraction
/// certificate exceeds 1, i.e. when nothing guarantees the iteration.
pub fn picard_high(spec: &OperatorSpec, k: usize, lambda: f64, cfg: &PicardConfig) -> Result<HalfLine> {
    let kappa = contraction_certificate(spec, lambda, cfg.half_width)?;
    if kappa > 1.0 {
        return Err(SpecError::NoContraction { lambda, ratio: kappa });
    }
    let frame = Frame::vandermonde(spec, c(lambda))?;
    solve(spec, &frame, k, c(lambda), cfg, &[0.0])
}

/// Branch-point solution z_k built on Psi(x) D(x), lambda in [h_p, lambda_s].
/// The anchor moves right until the iteration contracts; [x_lo, x0] is
/// filled in by the ODE.
pub fn picard_branch(spec: &OperatorSpec, k: usize, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<HalfLine> {
    let h_p = spec.consts().h_p;
    if !(lambda >= h_p && lambda <= lambda_s) {
        return Err(SpecError::DomainError(format!("branch solutions need lambda in [{h_p}, {lambda_s}], got {lambda}")));
    }
    let frame = Frame::branch(spec, lambda)?;
    solve(spec, &frame, k, c(lambda), cfg, &anchors(cfg))
}

/// Solution for complex z (or real z below h_p) in the Vandermonde frame.
pub fn picard_complex(spec: &OperatorSpec, k: usize, z: C64, cfg: &PicardConfig) -> Result<HalfLine> {
    let frame = Frame::vandermonde(spec, z)?;
    solve(spec, &frame, k, z, cfg, &anchors(cfg))
}

/// kappa(lambda) = int_0^X max_j |(Pi^-1)_{j4}| sum_i |b(tau) . p_i| dtau,
/// a bound on the contraction constant of the iteration anchored at 0.
pub fn contraction_certificate(spec: &OperatorSpec, lambda: f64, half_width: f64) -> Result<f64> {
    let frame = Frame::vandermonde(spec, c(lambda))?;
    let Frame::Vandermonde { pi, pi_inv, .. } = &frame else { unreachable!() };
    let mmax = (0..4).fold(0.0f64, |m, j| m.max(pi_inv[(j, 3)].norm()));
    let n = 4001;
    let h = half_width / (n - 1) as f64;
    let w = simpson_weights(n, h);
    let mut acc = 0.0;
    for (i, wi) in w.iter().enumerate() {
        let b = spec.b_pert(i as f64 * h);
        let mut s = 0.0;
        for col in 0..4 {
            s += (c(b[0]) * pi[(0, col)] + c(b[1]) * pi[(1, col)] + c(b[2]) * pi[(2, col)]).norm();
        }
        acc += wi * s;
    }
    Ok(mmax * acc)
}

/// Smallest lambda on the grid h_p + 0.5 * 2^{j/4} whose certificate is at
/// most 1/4 (half the contraction bound 1/2).
pub fn select_lambda_s(spec: &OperatorSpec, half_width: f64) -> Result<f64> {
    let h_p = spec.consts().h_p;
    for j in 0..200 {
        let lambda = h_p + 0.5 * 2f64.powf(j as f64 / 4.0);
        if contraction_certificate(spec, lambda, half_width)? <= 0.25 {
            return Ok(lambda);
        }
    }
    Err(SpecError::NoContraction { lambda: f64::INFINITY, ratio: f64::NAN })
}

const REFLECT: [f64; 4] = [1.0, -1.0, 1.0, -1.0];

/// phi_k (normalized at +infinity) for k = 1..4 at one spectral parameter;
/// chi_k (normalized at -infinity) follow by reflection since every preset
/// potential is even: chi_k(x) = R phi_{5-k}(-x), R = diag(1, -1, 1, -1).
#[derive(Clone, Debug)]
pub struct SolutionFamily {
    pub spec: OperatorSpec,
    pub z: C64,
    pub lambda_s: f64,
    pub mu: [C64; 4],
    pub phi: Vec<HalfLine>,
}

impl SolutionFamily {
    pub fn phi(&self, k: usize, x: f64) -> Result<V4> {
        self.phi[k].eval(&self.spec, x)
    }

    pub fn chi(&self, k: usize, x: f64) -> Result<V4> {
        let v = self.phi[3 - k].eval(&self.spec, -x)?;
        Ok(V4::from_fn(|i, _| v[i] * REFLECT[i]))
    }

    pub fn iterations(&self) -> usize {
        self.phi.iter().map(|p| p.iterations).max().unwrap_or(0)
    }

    pub fn max_ratio(&self) -> f64 {
        self.phi.iter().flat_map(|p| p.ratios.iter().copied()).fold(0.0, f64::max)
    }
}

/// Solutions phi_1..phi_count at real lambda > h_p or complex z. For
/// lambda in (h_p, lambda_s) the branch frame is used and phi_3 is
/// recovered from the branch combination: phi_3 = (nu / gamma) z_3 + z_2.
pub fn solution_family(spec: &OperatorSpec, z: C64, lambda_s: f64, count: usize, cfg: &PicardConfig) -> Result<SolutionFamily> {
    if !spec.q1.is_even() || !spec.q2.is_even() {
        return Err(SpecError::InvalidSpec("left-normalized solutions need even potentials".into()));
    }
    let kc = spec.consts();
    let real_above = z.im == 0.0 && z.re > kc.h_p;
    let mut phi = Vec::with_capacity(count);
    let mu;
    if real_above && z.re < lambda_s {
        let frame = Frame::branch(spec, z.re)?;
        let Frame::Branch { theta, nu } = frame else { unreachable!() };
        if nu < crate::characteristic::MIN_ROOT_GAP {
            return Err(SpecError::DegenerateRoots { z });
        }
        mu = [C64::new(0.0, theta), c(nu), c(-nu), C64::new(0.0, -theta)];
        let anchors = anchors(cfg);
        let mut zs = Vec::new();
        for k in 0..count {
            zs.push(solve(spec, &frame, k, z, cfg, &anchors)?);
        }
        for k in 0..count {
            if k == 2 {
                let gamma = I / (2.0 * (theta * theta + nu * nu));
                let scale = c(nu) / gamma;
                let (z3, z2) = (&zs[2], &zs[1]);
                let mut comb = z3.clone();
                for (m, u) in comb.u.iter_mut().enumerate() {
                    let x = z3.node(m);
                    *u = *u * scale + z2.u[m] * ((z2.rate - z3.rate) * x).exp();
                }
                comb.iterations = z3.iterations.max(z2.iterations);
                comb.ratios = z3.ratios.iter().chain(&z2.ratios).copied().collect();
                comb.self_residual = z3.self_residual.max(z2.self_residual);
                phi.push(comb);
            } else {
                phi.push(zs[k].clone());
            }
        }
    } else {
        let frame = Frame::vandermonde(spec, z)?;
        let Frame::Vandermonde { mu: m, .. } = &frame else { unreachable!() };
        mu = *m;
        let anchors = if real_above { vec![0.0] } else { anchors(cfg) };
        for k in 0..count {
            phi.push(solve(spec, &frame, k, z, cfg, &anchors)?);
        }
    }
    Ok(SolutionFamily { spec: *spec, z, lambda_s, mu, phi })
}

/// Values of a stored solution on a fresh uniform grid over [x_from, x_to]
/// by adaptive integration from the anchor `x_from` (which must lie in the
/// stored range), with logarithmic rescaling for dominant growth.
pub fn extend_full_line(spec: &OperatorSpec, half: &HalfLine, x_from: f64, x_to: f64, step: f64, tol: f64) -> Result<(Vec<f64>, Vec<V4>, Vec<f64>)> {
    let u0 = half.eval_u(spec, x_from)?;
    let n = ((x_to - x_from).abs() / step).round() as usize;
    let dir = if x_to >= x_from { 1.0 } else { -1.0 };
    let (vals, logs) = crate::ode::integrate_scaled(spec, half.z, half.rate, x_from, u0, step, n, dir, tol)?;
    let xs = (0..=n).map(|m| x_from + dir * step * m as f64).collect();
    Ok((xs, vals, logs))
}

#[derive(Clone, Debug)]
pub struct ConnectionMatrix {
    pub lambda: f64,
    pub c: M4,
    pub cond: f64,
    /// max column residual of the least-squares fit relative to |chi_k|
    pub residual: f64,
}

/// chi_k = sum_j c_jk phi_j, fitted by least squares on x in {0, 0.37}.
pub fn connection(fam: &SolutionFamily) -> Result<ConnectionMatrix> {
    if fam.phi.len() < 4 {
        return Err(SpecError::DomainError("connection needs all four phi_k".into()));
    }
    let pts = [0.0, 0.37];
    let mut a = DMatrix::<C64>::zeros(8, 4);
    let mut b = DMatrix::<C64>::zeros(8, 4);
    for (p, &x) in pts.iter().enumerate() {
        for k in 0..4 {
            let ph = fam.phi(k, x)?;
            let ch = fam.chi(k, x)?;
            for r in 0..4 {
                a[(4 * p + r, k)] = ph[r];
                b[(4 * p + r, k)] = ch[r];
            }
        }
    }
    let cond = cond2(&a);
    if cond > 1e10 {
        return Err(SpecError::IllConditioned { cond });
    }
    let svd = a.clone().svd(true, true);
    let sol = svd.solve(&b, 0.0).map_err(|_| SpecError::IllConditioned { cond: f64::INFINITY })?;
    let fit = &a * &sol;
    let mut residual: f64 = 0.0;
    for k in 0..4 {
        let num = (fit.column(k) - b.column(k)).norm();
        residual = residual.max(num / b.column(k).norm().max(f64::MIN_POSITIVE));
    }
    Ok(ConnectionMatrix { lambda: fam.z.re, c: M4::from_fn(|i, j| sol[(i, j)]), cond, residual })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode::{hermite_midpoint_residual, node_defect};

    fn cfg() -> PicardConfig {
        PicardConfig::default()
    }

    #[test]
    fn free_solutions_are_exact_exponentials() {
        let spec = OperatorSpec::free();
        for lambda in [2.5, 6.0, 100.0] {
            for k in 0..4 {
                let sol = picard_high(&spec, k, lambda, &cfg()).unwrap();
                assert_eq!(sol.iterations, 1);
                for x in [-2.0, 0.0, 0.37, 5.0, 19.9] {
                    assert!(sol.remainder(&spec, x).unwrap().norm() <= 1e-10, "lambda {lambda} k {k} x {x}");
                }
            }
        }
        let sol = picard_branch(&spec, 0, 2.0, 50.0, &cfg()).unwrap();
        for x in [0.0, 1.0, 10.0] {
            let y = sol.eval(&spec, x).unwrap();
            let th = 3f64.sqrt();
            let want = V4::new(c(1.0), c(-th), c(th * th), c(-th * th * th)) * c((-th * x).exp());
            assert!((y - want).norm() <= 1e-10 * want.norm().max(1e-300));
        }
    }

    #[test]
    fn high_energy_iteration_contracts() {
        let spec = OperatorSpec::p2();
        let sol = picard_high(&spec, 1, 50.0, &cfg()).unwrap();
        assert!(sol.iterations <= 20, "{} iterations", sol.iterations);
        assert!(sol.ratios.iter().all(|&r| r <= 0.5), "{:?}", sol.ratios);
        assert!(sol.self_residual <= 2e-10);
    }

    #[test]
    fn low_energy_iteration_fails_to_contract() {
        let spec = OperatorSpec::p2();
        let err = picard_high(&spec, 1, 2.5, &cfg()).unwrap_err();
        assert!(matches!(err, SpecError::NoContraction { .. }), "{err:?}");
    }

    #[test]
    fn solutions_satisfy_the_system() {
        let spec = OperatorSpec::p2();
        let z = c(6.0);
        let fam = solution_family(&spec, z, select_lambda_s(&spec, 20.0).unwrap(), 4, &cfg()).unwrap();
        for k in 0..4 {
            let sol = &fam.phi[k];
            let (mut defect, mut interp): (f64, f64) = (0.0, 0.0);
            for m in (0..sol.u.len() - 1).step_by(7) {
                let (x0, x1) = (sol.node(m), sol.node(m + 1));
                let (y0, y1) = (sol.eval(&spec, x0).unwrap(), sol.eval(&spec, x1).unwrap());
                defect = defect.max(node_defect(&spec, z, x0, &y0, x1, &y1, 1e-12).unwrap());
                interp = interp.max(hermite_midpoint_residual(&spec, z, x0, &y0, x1, &y1));
            }
            assert!(defect < 1e-8, "k = {k}: defect {defect}");
            assert!(interp < 1e-3, "k = {k}: interpolant residual {interp}");
        }
    }

    #[test]
    fn wronskian_is_constant() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        let fam = solution_family(&spec, c(6.0), ls, 3, &cfg()).unwrap();
        let det_at = |x: f64| {
            let m = M4::from_fn(|r, col| if col < 3 { fam.phi(col, x).unwrap()[r] } else { fam.chi(3, x).unwrap()[r] });
            m.determinant()
        };
        let d0 = det_at(0.0);
        for x in [-1.5, -0.5, 0.7, 1.9] {
            assert!((det_at(x) - d0).norm() <= 1e-8 * d0.norm(), "x = {x}");
        }
    }

    #[test]
    fn branch_point_solution_is_bounded() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        let sol = picard_branch(&spec, 1, 2.0, ls, &cfg()).unwrap();
        let mut worst: f64 = 0.0;
        for m in 0..sol.u.len() {
            let x = sol.node(m);
            if x >= sol.x0 {
                let frame = Frame::branch(&spec, 2.0).unwrap();
                let p = frame.mat(x).column(1).into_owned();
                worst = worst.max((sol.u[m] - p).norm() * (1.0 + x));
            }
        }
        assert!(worst.is_finite() && worst < 50.0, "{worst}");
    }

    #[test]
    fn swapped_spec_gives_adjoint_solutions() {
        // L* = D1 D2 of the original pair, applied as two nested
        // Schrodinger operators to the swapped-pair solution; the fourth
        // derivative comes from a finite difference of the stored u'''.
        let spec = OperatorSpec::p2();
        let adj = spec.adjoint();
        let lambda = 300.0;
        let sol = picard_high(&adj, 1, lambda, &cfg()).unwrap();
        for m in [150usize, 170, 230, 400] {
            let x = sol.node(m);
            let h = sol.h;
            let y = |i: i64| sol.eval(&adj, sol.node((m as i64 + i) as usize)).unwrap();
            let u4 = (y(-2)[3] - y(-1)[3] * 8.0 + y(1)[3] * 8.0 - y(2)[3]) / (12.0 * h);
            let v = y(0);
            let [q2, dq2, ddq2] = spec.q2.derivs(x);
            let qq1 = spec.q1.q(x) + spec.h1;
            let qq2 = q2 + spec.h2;
            // w = D2 u, w'' = -u'''' + (Q2 u)''
            let w = -v[2] + v[0] * qq2;
            let w2 = -u4 + v[0] * ddq2 + v[1] * (2.0 * dq2) + v[2] * qq2;
            let lu = -w2 + w * qq1;
            let resid = (lu - v[0] * lambda).norm() / (lambda * v[0].norm());
            assert!(resid < 1e-5, "x = {x}: {resid}");
        }
    }

    #[test]
    fn connection_is_identity_for_free_pair() {
        let spec = OperatorSpec::free();
        let fam = solution_family(&spec, c(30.0), 2.5, 4, &cfg()).unwrap();
        let cm = connection(&fam).unwrap();
        assert!((cm.c - M4::identity()).norm() <= 1e-9, "{}", cm.c);
    }

    #[test]
    fn lambda_s_is_above_branch_point() {
        let ls = select_lambda_s(&OperatorSpec::p2(), 20.0).unwrap();
        assert!(ls > 2.0 && ls < 1e4, "{ls}");
        assert!(contraction_certificate(&OperatorSpec::p2(), ls, 20.0).unwrap() <= 0.25);
    }

    #[test]
    fn connection_tends_to_identity() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        for lams in [[50.0, 200.0, 800.0], [ls, 4.0 * ls, 16.0 * ls]] {
            let dev: Vec<f64> = lams
                .iter()
                .map(|&l| {
                    let fam = solution_family(&spec, c(l), ls, 4, &cfg()).unwrap();
                    let cm = connection(&fam).unwrap();
                    assert!(cm.residual < 1e-7);
                    (cm.c - M4::identity()).norm()
                })
                .collect();
            assert!(dev[0] > dev[1] && dev[1] > dev[2], "{dev:?}");
        }
    }

    #[test]
    fn remainder_bound_is_uniform() {
        let spec = OperatorSpec::p2();
        let ls = select_lambda_s(&spec, 20.0).unwrap();
        let mut consts = Vec::new();
        for f in [1.0, 10.0, 100.0] {
            let l = f * ls;
            let fam = solution_family(&spec, c(l), ls, 4, &cfg()).unwrap();
            assert!(fam.max_ratio() <= 0.5);
            let mut b: f64 = 0.0;
            for p in &fam.phi {
                for m in 0..p.u.len() {
                    let x = p.node(m);
                    if x >= 0.0 {
                        b = b.max(p.remainder(&spec, x).unwrap().norm() * l.powf(0.25) * (1.0 + x));
                    }
                }
            }
            consts.push(b);
        }
        assert!(consts.iter().all(|&b| b < 1.0), "{consts:?}");
    }
}
