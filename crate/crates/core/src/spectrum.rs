//! Point spectrum, biorthogonal eigenfamilies and the M_n / N_n partition.
//!
//! Eigenvalues are detected twice: as eigenvalues of the grid operator below
//! the continuum edge, and as sign changes of the real function W on
//! (-inf, h_p). Only candidates seen by both routes are confirmed.

use rayon::prelude::*;
use serde::Serialize;

use crate::error::{Result, SpecError};
use crate::green::{boundary_pair, fundamental_matrix, in_m_n, Side};
use crate::linalg::{c, null_space, to_dmatrix, C64, M4};
use crate::ode_core::{solution_family, PicardConfig};
use crate::oracle::GridOperator;
use crate::problem::OperatorSpec;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize)]
#[serde(rename_all = "snake_case")]
pub enum Source {
    WRoot,
    Oracle,
    Both,
}

#[derive(Clone, Debug)]
pub struct Eigenpair {
    pub lambda_e: f64,
    pub multiplicity: usize,
    /// xi = S psi on the oracle grid
    pub xi: Vec<Vec<f64>>,
    /// xi* = S^-1 psi, so (xi_a, xi*_b) = delta_ab
    pub xi_star: Vec<Vec<f64>>,
    pub source: Source,
    /// ||L_h xi - lambda xi|| / ||xi||, worst over the family
    pub residual: f64,
    /// |W(lambda_e)|, NaN when the W route did not run
    pub w_abs: f64,
    /// cosine similarity between the oracle xi and the W-route solution
    pub route_similarity: f64,
}

#[derive(Clone, Debug, Serialize)]
pub struct EigenSummary {
    pub lambda: f64,
    pub multiplicity: usize,
    pub residual: f64,
    pub source: Source,
}

impl Eigenpair {
    pub fn summary(&self) -> EigenSummary {
        EigenSummary { lambda: self.lambda_e, multiplicity: self.multiplicity, residual: self.residual, source: self.source }
    }

    pub fn confirmed(&self) -> bool {
        self.source == Source::Both
    }
}

/// Real W on (-inf, h_p) away from h_m.
pub fn w_real(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<f64> {
    let w = fundamental_matrix(spec, c(lambda), Side::Complex, lambda_s, cfg)?.w;
    Ok(w.re)
}

/// Bracketed root of a continuous function by bisection with secant steps,
/// to absolute tolerance `tol`.
pub fn refine_root<F: FnMut(f64) -> Result<f64>>(mut f: F, mut a: f64, mut b: f64, tol: f64) -> Result<f64> {
    let (mut fa, mut fb) = (f(a)?, f(b)?);
    if fa == 0.0 {
        return Ok(a);
    }
    if fb == 0.0 {
        return Ok(b);
    }
    if fa.signum() == fb.signum() {
        return Err(SpecError::DomainError(format!("no sign change on [{a}, {b}]")));
    }
    for it in 0..200 {
        if (b - a).abs() <= tol {
            break;
        }
        // secant on odd steps when it stays inside the bracket
        let mut m = 0.5 * (a + b);
        if it % 2 == 1 {
            let s = b - fb * (b - a) / (fb - fa);
            if s > a.min(b) && s < a.max(b) {
                m = s;
            }
        }
        let fm = f(m)?;
        if fm == 0.0 {
            return Ok(m);
        }
        if fm.signum() == fa.signum() {
            a = m;
            fa = fm;
        } else {
            b = m;
            fb = fm;
        }
    }
    Ok(0.5 * (a + b))
}

/// Sign changes of W on a uniform sweep of [lo, hi], skipping a small
/// neighbourhood of h_m where the roots coalesce. Returns refined roots and
/// the sampled |W| values.
pub fn w_roots(spec: &OperatorSpec, lo: f64, hi: f64, samples: usize, lambda_s: f64, cfg: &PicardConfig) -> Result<(Vec<f64>, Vec<f64>)> {
    let h_m = spec.consts().h_m;
    let xs: Vec<f64> = (0..samples)
        .map(|i| lo + (hi - lo) * i as f64 / (samples - 1) as f64)
        .filter(|l| (l - h_m).abs() > 1e-3)
        .collect();
    let ws: Vec<f64> = xs.par_iter().map(|&l| w_real(spec, l, lambda_s, cfg)).collect::<Result<_>>()?;
    let mut roots = Vec::new();
    for i in 0..xs.len() - 1 {
        if ws[i] == 0.0 {
            roots.push(xs[i]);
        } else if ws[i].signum() != ws[i + 1].signum() && ws[i + 1] != 0.0 {
            // a sign change across h_m is a normalization artefact, not a root
            if xs[i] < h_m && xs[i + 1] > h_m {
                continue;
            }
            roots.push(refine_root(|l| w_real(spec, l, lambda_s, cfg), xs[i], xs[i + 1], 1e-10)?);
        }
    }
    Ok((roots, ws.iter().map(|w| w.abs()).collect()))
}

/// Square-integrable solutions at lambda: null space of
/// [phi_1, phi_2, -chi_3, -chi_4](0). Returns the singular values (descending)
/// and the grid values of the first null vector's solution.
fn l2_solution(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig, xs: &[f64]) -> Result<(Vec<f64>, Vec<f64>)> {
    let fam = solution_family(spec, c(lambda), lambda_s, 2, cfg)?;
    let mut m = M4::zeros();
    let cols = [fam.phi(0, 0.0)?, fam.phi(1, 0.0)?, -fam.chi(2, 0.0)?, -fam.chi(3, 0.0)?];
    let scale: Vec<f64> = cols.iter().map(|v| v.norm()).collect();
    for (j, v) in cols.iter().enumerate() {
        m.set_column(j, &(v / c(scale[j])));
    }
    let (ns, sv) = null_space(&to_dmatrix(&m), 1);
    let a: Vec<C64> = (0..4).map(|j| ns[(j, 0)] / scale[j]).collect();
    let vals: Vec<C64> = xs
        .iter()
        .map(|&x| {
            if x >= 0.0 {
                Ok(fam.phi(0, x)?[0] * a[0] + fam.phi(1, x)?[0] * a[1])
            } else {
                Ok(fam.chi(2, x)?[0] * a[2] + fam.chi(3, x)?[0] * a[3])
            }
        })
        .collect::<Result<_>>()?;
    // rotate to real: the solution is real up to a constant phase
    let big = vals.iter().cloned().fold(c(0.0), |acc, v| if v.norm() > acc.norm() { v } else { acc });
    let ph = if big.norm() > 0.0 { big.conj() / big.norm() } else { c(1.0) };
    Ok((sv, vals.iter().map(|v| (v * ph).re).collect()))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
    (d / (na * nb)).abs()
}

/// Eigenvalues of L in [lo, hi] (hi below h_p) with biorthonormal families
/// built from the oracle's Lambda_h eigenvectors.
pub fn find_eigenvalues(
    spec: &OperatorSpec,
    oracle: &GridOperator,
    window: (f64, f64),
    lambda_s: f64,
    cfg: &PicardConfig,
) -> Result<Vec<Eigenpair>> {
    let k = spec.consts();
    let (lo, hi) = (window.0, window.1.min(k.h_p - 1e-2));
    if !(lo < hi) {
        return Ok(Vec::new());
    }
    let (vals, vecs) = oracle.lambda_eigen();
    // (a) grid eigenvalues, clustered at width 1e-6
    let mut clusters: Vec<Vec<usize>> = Vec::new();
    for (i, &l) in vals.iter().enumerate() {
        if l < lo || l > hi {
            continue;
        }
        match clusters.last_mut() {
            Some(cl) if (vals[*cl.last().unwrap()] - l).abs() <= 1e-6 => cl.push(i),
            _ => clusters.push(vec![i]),
        }
    }
    // (b) roots of W
    let samples = (((hi - lo) / 0.05).ceil() as usize).max(8) + 1;
    let (roots, _) = if spec.is_free() { (Vec::new(), Vec::new()) } else { w_roots(spec, lo, hi, samples, lambda_s, cfg)? };

    let mut out = Vec::new();
    let mut used_roots = vec![false; roots.len()];
    for cl in &clusters {
        if cl.len() > 2 {
            return Err(SpecError::MultiplicityAmbiguous { lambda: vals[cl[0]] });
        }
        let lam = cl.iter().map(|&i| vals[i]).sum::<f64>() / cl.len() as f64;
        let hit = roots.iter().position(|r| (r - lam).abs() <= 1e-3);
        let mut xi = Vec::new();
        let mut xi_star = Vec::new();
        for &i in cl {
            let psi = vecs.column(i).into_owned();
            xi.push((&oracle.s * &psi).iter().cloned().collect::<Vec<f64>>());
            xi_star.push((&oracle.s_inv * &psi).iter().cloned().collect::<Vec<f64>>());
        }
        // (xi, xi*) = psi^T S S^-1 psi / h in the grid inner product
        let scale = 1.0 / oracle.h.sqrt();
        for v in xi.iter_mut().chain(xi_star.iter_mut()) {
            v.iter_mut().for_each(|a| *a *= scale);
        }
        let mut residual: f64 = 0.0;
        for v in &xi {
            let lv = oracle.apply_l(v);
            let r: Vec<f64> = lv.iter().zip(v).map(|(a, b)| a - lam * b).collect();
            residual = residual.max(oracle.norm(&r) / oracle.norm(v));
        }
        let (source, w_abs, route_similarity) = match hit {
            Some(j) => {
                used_roots[j] = true;
                let root = roots[j];
                let w = w_real(spec, root, lambda_s, cfg)?.abs();
                let (_, sol) = l2_solution(spec, root, lambda_s, cfg, &oracle.x)?;
                (Source::Both, w, cosine(&sol, &xi[0]))
            }
            None => (Source::Oracle, f64::NAN, f64::NAN),
        };
        out.push(Eigenpair { lambda_e: lam, multiplicity: cl.len(), xi, xi_star, source, residual, w_abs, route_similarity });
    }
    // W roots without a grid eigenvalue: keep them, unconfirmed
    for (j, &r) in roots.iter().enumerate() {
        if used_roots[j] {
            continue;
        }
        let (sv, sol) = l2_solution(spec, r, lambda_s, cfg, &oracle.x)?;
        let mult = if sv[2] <= 1e-6 * sv[0] { 2 } else { 1 };
        let nrm = oracle.norm(&sol);
        let xi: Vec<f64> = sol.iter().map(|v| v / nrm).collect();
        out.push(Eigenpair {
            lambda_e: r,
            multiplicity: mult,
            xi_star: vec![xi.clone()],
            xi: vec![xi],
            source: Source::WRoot,
            residual: f64::NAN,
            w_abs: w_real(spec, r, lambda_s, cfg)?.abs(),
            route_similarity: f64::NAN,
        });
    }
    out.sort_by(|a, b| a.lambda_e.partial_cmp(&b.lambda_e).unwrap());
    Ok(out)
}

/// Median |W| over the sweep used for eigenvalue detection, for reporting
/// |W(lambda_e)| on a relative scale.
pub fn w_median(spec: &OperatorSpec, lo: f64, hi: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<f64> {
    let hi = hi.min(spec.consts().h_p - 1e-2);
    let samples = (((hi - lo) / 0.05).ceil() as usize).max(8) + 1;
    let (_, ws) = w_roots(spec, lo, hi, samples, lambda_s, cfg)?;
    let mut s = ws;
    s.sort_by(|a, b| a.partial_cmp(b).unwrap());
    Ok(s[s.len() / 2])
}

/// Largest |(xi_a, xi*_b) - delta_ab| over all pairs of eigenfunctions.
pub fn biorthonormality_residual(oracle: &GridOperator, eigs: &[Eigenpair]) -> f64 {
    let xs: Vec<&Vec<f64>> = eigs.iter().flat_map(|e| e.xi.iter()).collect();
    let ys: Vec<&Vec<f64>> = eigs.iter().flat_map(|e| e.xi_star.iter()).collect();
    let mut worst: f64 = 0.0;
    for (a, x) in xs.iter().enumerate() {
        for (b, y) in ys.iter().enumerate() {
            let want = if a == b { 1.0 } else { 0.0 };
            worst = worst.max((oracle.dot(x, y) - want).abs());
        }
    }
    worst
}

/// B(N) f = sum (f, xi*) xi over the given eigenpairs.
pub fn point_projection(oracle: &GridOperator, f: &[f64], eigs: &[Eigenpair]) -> Vec<f64> {
    let mut out = vec![0.0; f.len()];
    for e in eigs {
        for (xi, xs) in e.xi.iter().zip(&e.xi_star) {
            let coef = oracle.dot(f, xs);
            out.iter_mut().zip(xi).for_each(|(o, v)| *o += coef * v);
        }
    }
    out
}

/// Complex version: the pairing is bilinear over the real families.
pub fn point_projection_c(oracle: &GridOperator, f: &[C64], eigs: &[Eigenpair]) -> Vec<C64> {
    let re: Vec<f64> = f.iter().map(|v| v.re).collect();
    let im: Vec<f64> = f.iter().map(|v| v.im).collect();
    let a = point_projection(oracle, &re, eigs);
    let b = point_projection(oracle, &im, eigs);
    a.iter().zip(&b).map(|(p, q)| C64::new(*p, *q)).collect()
}

#[derive(Clone, Copy, Debug, Serialize)]
pub struct WSample {
    pub lambda: f64,
    pub w_plus: (f64, f64),
    pub w_minus: (f64, f64),
}

impl WSample {
    fn min_abs(&self) -> f64 {
        C64::new(self.w_plus.0, self.w_plus.1).norm().min(C64::new(self.w_minus.0, self.w_minus.1).norm())
    }

    pub fn in_m_n(&self, n: usize) -> bool {
        in_m_n(C64::new(self.w_plus.0, self.w_plus.1), C64::new(self.w_minus.0, self.w_minus.1), n)
    }
}

fn w_sample(spec: &OperatorSpec, lambda: f64, lambda_s: f64, cfg: &PicardConfig) -> Result<WSample> {
    let (p, m) = boundary_pair(spec, lambda, lambda_s, cfg)?;
    Ok(WSample { lambda, w_plus: (p.w.re, p.w.im), w_minus: (m.w.re, m.w.im) })
}

/// W+ and W- on (h_p, hi], uniform in nu with bisection wherever |W| moves
/// by more than 10% between neighbours. Fails with SweepTooCoarse if the
/// refinement depth runs out.
pub fn w_sweep(spec: &OperatorSpec, hi: f64, base: usize, lambda_s: f64, cfg: &PicardConfig) -> Result<Vec<WSample>> {
    let k = spec.consts();
    let p_c = |nu: f64| nu.powi(4) + 2.0 * k.h_a * nu * nu + k.h_p;
    let (_, nu_hi) = crate::characteristic::theta_nu(hi, &k)?;
    // start a little above the edge: |W| grows like 1/nu there
    let nu_lo = (1e-3f64).min(0.5 * nu_hi);
    let nus: Vec<f64> = (0..base).map(|i| nu_lo + (nu_hi - nu_lo) * i as f64 / (base - 1) as f64).collect();
    let mut pts: Vec<(f64, WSample)> =
        nus.par_iter().map(|&nu| Ok((nu, w_sample(spec, p_c(nu), lambda_s, cfg)?))).collect::<Result<_>>()?;
    for _depth in 0..12 {
        let bad: Vec<f64> = pts
            .windows(2)
            .filter(|w| {
                let (a, b) = (w[0].1.min_abs(), w[1].1.min_abs());
                (a - b).abs() > 0.1 * a.max(b)
            })
            .map(|w| 0.5 * (w[0].0 + w[1].0))
            .collect();
        if bad.is_empty() {
            return Ok(pts.into_iter().map(|p| p.1).collect());
        }
        let extra: Vec<(f64, WSample)> =
            bad.par_iter().map(|&nu| Ok((nu, w_sample(spec, p_c(nu), lambda_s, cfg)?))).collect::<Result<_>>()?;
        pts.extend(extra);
        pts.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    }
    let worst = pts
        .windows(2)
        .map(|w| {
            let (a, b) = (w[0].1.min_abs(), w[1].1.min_abs());
            ((a - b).abs() / a.max(b), w[0].1.lambda)
        })
        .fold((0.0, 0.0), |acc, v| if v.0 > acc.0 { v } else { acc });
    Err(SpecError::SweepTooCoarse { lambda: worst.1, change: worst.0 })
}

#[derive(Clone, Debug, Serialize)]
pub struct SpectralPartition {
    pub n: usize,
    pub lambda_s: f64,
    pub lambda_0: f64,
    /// closed intervals; isolated points appear as [a, a]
    pub n_set: Vec<(f64, f64)>,
    /// open intervals in the continuous spectrum; the last one is unbounded
    /// and written with the upper end "inf"
    #[serde(serialize_with = "intervals_with_inf")]
    pub m_set: Vec<(f64, f64)>,
    /// detected zeros of W (eigenvalues below h_p)
    pub zeros: Vec<f64>,
}

#[derive(Serialize)]
#[serde(untagged)]
enum End {
    Num(f64),
    Text(&'static str),
}

fn end(v: f64) -> End {
    if v == f64::INFINITY {
        End::Text("inf")
    } else if v == f64::NEG_INFINITY {
        End::Text("-inf")
    } else {
        End::Num(v)
    }
}

fn intervals_with_inf<S: serde::Serializer>(v: &[(f64, f64)], s: S) -> std::result::Result<S::Ok, S::Error> {
    s.collect_seq(v.iter().map(|&(a, b)| (end(a), end(b))))
}

impl SpectralPartition {
    pub fn in_m(&self, lambda: f64) -> bool {
        self.m_set.iter().any(|&(a, b)| lambda > a && lambda < b)
    }

    pub fn in_n(&self, lambda: f64) -> bool {
        self.n_set.iter().any(|&(a, b)| lambda >= a && lambda <= b)
    }
}

/// lambda_0 = min(h_m, lowest grid eigenvalue) - 1.
pub fn lambda_0(spec: &OperatorSpec, oracle: &GridOperator) -> f64 {
    spec.consts().h_m.min(oracle.lambda_eigen().0[0]) - 1.0
}

/// N_n from the sweep and the eigenvalues: runs of samples failing the
/// |W+-| > 1/(2n) test become closed intervals padded to the neighbouring
/// samples; every eigenvalue and the edge h_p are added as points.
pub fn partition(spec: &OperatorSpec, n: usize, sweep: &[WSample], eigs: &[Eigenpair], lambda_0: f64, lambda_s: f64) -> SpectralPartition {
    let h_p = spec.consts().h_p;
    let mut n_set: Vec<(f64, f64)> = eigs.iter().map(|e| (e.lambda_e, e.lambda_e)).collect();
    n_set.push((h_p, h_p));
    let mut i = 0;
    while i < sweep.len() {
        if sweep[i].in_m_n(n) {
            i += 1;
            continue;
        }
        let start = i;
        while i < sweep.len() && !sweep[i].in_m_n(n) {
            i += 1;
        }
        let a = if start == 0 { h_p } else { sweep[start - 1].lambda };
        let b = if i < sweep.len() { sweep[i].lambda } else { lambda_s };
        n_set.push((a, b));
    }
    n_set.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut merged: Vec<(f64, f64)> = Vec::new();
    for iv in n_set {
        match merged.last_mut() {
            Some(last) if iv.0 <= last.1 => last.1 = last.1.max(iv.1),
            _ => merged.push(iv),
        }
    }
    let mut m_set = Vec::new();
    let mut cur = h_p;
    for &(a, b) in merged.iter().filter(|iv| iv.1 >= h_p) {
        if a > cur {
            m_set.push((cur, a));
        }
        cur = cur.max(b);
    }
    m_set.push((cur, f64::INFINITY));
    SpectralPartition {
        n,
        lambda_s,
        lambda_0,
        n_set: merged,
        m_set,
        zeros: eigs.iter().filter(|e| e.source != Source::Oracle).map(|e| e.lambda_e).collect(),
    }
}
