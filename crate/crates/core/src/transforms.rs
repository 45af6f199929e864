//! Transforms T_j f, S_j f on the good part of the continuous spectrum,
//! synthesis, Parseval, the projection-valued measure E(b) on finite unions
//! of intervals, and L applied through its spectral representation.
//!
//! Quadrature runs in nu with lambda = p_c(nu), so d lambda = p_c'(nu) d nu
//! and the edge h_p becomes a regular endpoint. Panels have width at most
//! `panel` and carry Gauss-Legendre nodes; panel node data are cached so that
//! intervals whose endpoints land on existing panel edges reuse them.

use std::collections::HashMap;
use std::f64::consts::PI;
use std::sync::{Arc, Mutex};

use rand::{Rng, SeedableRng};
use rayon::prelude::*;
use serde::Serialize;

use crate::characteristic::theta_nu;
use crate::error::{Result, SpecError};
use crate::green::factor_jump;
use crate::linalg::{c, C64};
use crate::ode_core::PicardConfig;
use crate::oracle::{in_union, GridOperator};
use crate::problem::OperatorSpec;
use crate::quad::gauss_legendre;
use crate::spectrum::{Eigenpair, SpectralPartition};

/// Generalized eigenfunctions at one quadrature node, sampled on the grid.
#[derive(Debug)]
pub struct Node {
    pub lambda: f64,
    pub nu: f64,
    /// weight for d lambda
    pub weight: f64,
    pub phi: [Vec<C64>; 2],
    pub phi_star: [Vec<C64>; 2],
    /// sup over the grid of |phi_j|
    pub phi_sup: [f64; 2],
}

#[derive(Clone, Copy, Debug)]
pub struct CalculusConfig {
    pub n: usize,
    pub lambda_max: f64,
    pub panel: f64,
    pub order: usize,
}

impl Default for CalculusConfig {
    fn default() -> Self {
        CalculusConfig { n: 4, lambda_max: 0.0, panel: 0.2, order: 8 }
    }
}

/// Default Lambda_max: nu_max = 8.
pub fn default_lambda_max(spec: &OperatorSpec) -> f64 {
    let k = spec.consts();
    let nu: f64 = 8.0;
    nu.powi(4) + 2.0 * k.h_a * nu * nu + k.h_p
}

pub struct SpectralCalculus {
    pub spec: OperatorSpec,
    pub oracle: Arc<GridOperator>,
    pub eigs: Vec<Eigenpair>,
    pub partition: SpectralPartition,
    pub picard: PicardConfig,
    pub cfg: CalculusConfig,
    /// base node set covering M_n up to Lambda_max
    pub nodes: Vec<Arc<Node>>,
    /// nu of the base panel edges
    pub edges: Vec<f64>,
    cache: Mutex<HashMap<(i64, i64), Vec<Arc<Node>>>>,
}

#[derive(Clone, Debug)]
pub struct TransformData {
    pub n: usize,
    pub lambda: Vec<f64>,
    pub weight: Vec<f64>,
    /// T_1 f, T_2 f per node
    pub t: Vec<[C64; 2]>,
    /// S_1 f, S_2 f per node
    pub s: Vec<[C64; 2]>,
    /// (4/3) C Lambda_max^{-3/4} from the fitted integrand decay
    pub tail_bound: f64,
    /// L2 norm of the synthesized part from the last decade of nodes
    pub last_decade: f64,
    nodes: Vec<Arc<Node>>,
}

fn key(a: f64, b: f64) -> (i64, i64) {
    ((a * 1e9).round() as i64, (b * 1e9).round() as i64)
}

impl SpectralCalculus {
    pub fn new(
        spec: &OperatorSpec,
        oracle: Arc<GridOperator>,
        eigs: Vec<Eigenpair>,
        partition: SpectralPartition,
        picard: PicardConfig,
        mut cfg: CalculusConfig,
    ) -> Result<Self> {
        if cfg.lambda_max <= 0.0 {
            cfg.lambda_max = default_lambda_max(spec);
        }
        let mut sc = SpectralCalculus {
            spec: *spec,
            oracle,
            eigs,
            partition,
            picard,
            cfg,
            nodes: Vec::new(),
            edges: Vec::new(),
            cache: Mutex::new(HashMap::new()),
        };
        let mut edges = Vec::new();
        let ivs = sc.m_intervals_nu(&[(f64::NEG_INFINITY, f64::INFINITY)]);
        for &(a, b) in &ivs {
            let m = panel_count(a, b, cfg.panel);
            for i in 0..=m {
                edges.push(a + (b - a) * i as f64 / m as f64);
            }
        }
        sc.nodes = sc.nodes_for(&ivs)?;
        sc.edges = edges;
        Ok(sc)
    }

    pub fn h_p(&self) -> f64 {
        self.spec.consts().h_p
    }

    pub fn p_c(&self, nu: f64) -> f64 {
        let k = self.spec.consts();
        nu.powi(4) + 2.0 * k.h_a * nu * nu + k.h_p
    }

    pub fn nu_of(&self, lambda: f64) -> f64 {
        theta_nu(lambda.max(self.h_p()), &self.spec.consts()).map(|t| t.1).unwrap_or(0.0)
    }

    /// b intersected with M_n and (h_p, Lambda_max], as nu intervals.
    fn m_intervals_nu(&self, b: &[(f64, f64)]) -> Vec<(f64, f64)> {
        let mut out = Vec::new();
        for &(ma, mb) in &self.partition.m_set {
            for &(ba, bb) in b {
                let lo = ma.max(ba).max(self.h_p());
                let hi = mb.min(bb).min(self.cfg.lambda_max);
                if hi > lo {
                    out.push((self.nu_of(lo), self.nu_of(hi)));
                }
            }
        }
        out.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
        out
    }

    fn panel_nodes(&self, a: f64, b: f64) -> Result<Vec<Arc<Node>>> {
        if let Some(v) = self.cache.lock().unwrap().get(&key(a, b)) {
            return Ok(v.clone());
        }
        let (t, w) = gauss_legendre(self.cfg.order);
        let k = self.spec.consts();
        let half = 0.5 * (b - a);
        let mid = 0.5 * (b + a);
        let lambda_s = self.partition.lambda_s;
        let xs = &self.oracle.x;
        let nodes: Vec<Arc<Node>> = t
            .par_iter()
            .zip(w.par_iter())
            .map(|(&ti, &wi)| {
                let nu = mid + half * ti;
                let lambda = self.p_c(nu);
                let dp = 4.0 * nu * nu * nu + 4.0 * k.h_a * nu;
                let f = factor_jump(&self.spec, lambda, lambda_s, &self.picard)?;
                let [[p0, p1], [s0, s1]] = f.on_grid(xs)?;
                let sup = |v: &Vec<C64>| v.iter().fold(0.0f64, |m, z| m.max(z.norm()));
                Ok(Arc::new(Node {
                    lambda,
                    nu,
                    weight: half * wi * dp,
                    phi_sup: [sup(&p0), sup(&p1)],
                    phi: [p0, p1],
                    phi_star: [s0, s1],
                }))
            })
            .collect::<Result<_>>()?;
        self.cache.lock().unwrap().insert(key(a, b), nodes.clone());
        Ok(nodes)
    }

    fn nodes_for(&self, ivs: &[(f64, f64)]) -> Result<Vec<Arc<Node>>> {
        let mut out = Vec::new();
        for &(a, b) in ivs {
            let m = panel_count(a, b, self.cfg.panel);
            for i in 0..m {
                let pa = a + (b - a) * i as f64 / m as f64;
                let pb = a + (b - a) * (i + 1) as f64 / m as f64;
                out.extend(self.panel_nodes(pa, pb)?);
            }
        }
        Ok(out)
    }

    fn check_edges(&self, f: &[C64]) -> Result<()> {
        let sup = f.iter().fold(0.0f64, |m, z| m.max(z.norm()));
        let edge = f[0].norm().max(f[f.len() - 1].norm());
        if edge > 1e-6 * sup.max(f64::MIN_POSITIVE) {
            return Err(SpecError::DomainTruncation { edge });
        }
        Ok(())
    }

    fn analyze_on(&self, f: &[C64], nodes: &[Arc<Node>]) -> TransformData {
        let h = self.oracle.h;
        let pair = |v: &Vec<C64>| -> C64 { f.iter().zip(v).map(|(a, b)| a * b.conj()).sum::<C64>() * h };
        let (t, s): (Vec<[C64; 2]>, Vec<[C64; 2]>) = nodes
            .par_iter()
            .map(|nd| ([pair(&nd.phi_star[0]), pair(&nd.phi_star[1])], [pair(&nd.phi[0]), pair(&nd.phi[1])]))
            .unzip();
        let lmax = self.cfg.lambda_max;
        let mut cfit: f64 = 0.0;
        for (nd, tj) in nodes.iter().zip(&t) {
            if nd.lambda >= 0.1 * lmax {
                let integrand = tj[0].norm() * nd.phi_sup[0] + tj[1].norm() * nd.phi_sup[1];
                cfit = cfit.max(integrand * nd.lambda.powf(1.75));
            }
        }
        let mut td = TransformData {
            n: self.cfg.n,
            lambda: nodes.iter().map(|nd| nd.lambda).collect(),
            weight: nodes.iter().map(|nd| nd.weight).collect(),
            t,
            s,
            tail_bound: 4.0 / 3.0 * cfit * lmax.powf(-0.75),
            last_decade: 0.0,
            nodes: nodes.to_vec(),
        };
        let mask: Vec<bool> = td.lambda.iter().map(|&l| l >= 0.1 * lmax).collect();
        let g = self.synth_masked(&td, &mask, |_| 1.0);
        td.last_decade = norm_c(&self.oracle, &g);
        td
    }

    /// T_j f and S_j f on the base nodes. Fails with DomainTruncation when f
    /// is not small at the ends of the grid.
    pub fn analyze(&self, f: &[C64]) -> Result<TransformData> {
        self.check_edges(f)?;
        Ok(self.analyze_on(f, &self.nodes))
    }

    pub fn analyze_real(&self, f: &[f64]) -> Result<TransformData> {
        self.analyze(&to_c(f))
    }

    fn synth_masked<F: Fn(f64) -> f64 + Sync>(&self, td: &TransformData, mask: &[bool], mult: F) -> Vec<C64> {
        let n = self.oracle.x.len();
        let parts: Vec<Vec<C64>> = td
            .nodes
            .par_iter()
            .enumerate()
            .filter(|(i, _)| mask[*i])
            .map(|(i, nd)| {
                let w = c(td.weight[i] * mult(nd.lambda));
                let (a, b) = (td.t[i][0] * w, td.t[i][1] * w);
                (0..n).map(|x| nd.phi[0][x] * a + nd.phi[1][x] * b).collect()
            })
            .collect();
        let mut out = vec![c(0.0); n];
        for p in parts {
            out.iter_mut().zip(p).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// g(x) = int sum_j phi_j(x, lambda) T_j f(lambda) d lambda.
    pub fn synthesize(&self, td: &TransformData) -> Vec<C64> {
        self.synth_masked(td, &vec![true; td.lambda.len()], |_| 1.0)
    }

    /// Eigenpairs with eigenvalue in b.
    fn eigs_in(&self, b: &[(f64, f64)]) -> Vec<Eigenpair> {
        self.eigs.iter().filter(|e| in_union(b, e.lambda_e)).cloned().collect()
    }

    /// Continuous pieces of N_n (non-degenerate intervals).
    fn n_intervals(&self) -> Vec<(f64, f64)> {
        self.partition.n_set.iter().cloned().filter(|&(a, b)| b > a).collect()
    }

    /// B(N_n) f: eigenfunction part plus the oracle projection onto the
    /// continuous pieces of N_n.
    pub fn excluded_part(&self, f: &[C64]) -> Vec<C64> {
        let mut out = crate::spectrum::point_projection_c(&self.oracle, f, &self.eigs);
        let ivs = self.n_intervals();
        if !ivs.is_empty() {
            let add = oracle_projection_c(&self.oracle, &ivs, f);
            out.iter_mut().zip(add).for_each(|(o, v)| *o += v);
        }
        out
    }

    /// ||f - B(N_n) f - g|| / ||f||.
    pub fn reconstruction_residual(&self, f: &[C64]) -> Result<f64> {
        let td = self.analyze(f)?;
        let g = self.synthesize(&td);
        let b = self.excluded_part(f);
        let r: Vec<C64> = f.iter().zip(&g).zip(&b).map(|((a, p), q)| a - p - q).collect();
        Ok(norm_c(&self.oracle, &r) / norm_c(&self.oracle, f))
    }

    /// |(f, g) - (B f, g) - int sum T_j f conj(S_j g) d lambda| and the dual
    /// form with (f, B* g) in place of (B f, g).
    pub fn parseval_residual(&self, f: &[C64], g: &[C64]) -> Result<(f64, f64)> {
        let tf = self.analyze(f)?;
        let tg = self.analyze(g)?;
        let mut cont = c(0.0);
        for i in 0..tf.lambda.len() {
            for j in 0..2 {
                cont += tf.t[i][j] * tg.s[i][j].conj() * tf.weight[i];
            }
        }
        let fg = dot_c(&self.oracle, f, g);
        let bf = self.excluded_part(f);
        let primary = (fg - dot_c(&self.oracle, &bf, g) - cont).norm();
        // B* g = sum (g, xi) xi*
        let mut bsg = vec![c(0.0); g.len()];
        for e in &self.eigs {
            for (xi, xs) in e.xi.iter().zip(&e.xi_star) {
                let coef = dot_c(&self.oracle, g, &to_c(xi));
                bsg.iter_mut().zip(xs).for_each(|(o, v)| *o += coef * v);
            }
        }
        let dual = (fg - dot_c(&self.oracle, f, &bsg) - cont).norm();
        Ok((primary, dual))
    }

    /// E(b) f for a finite union of intervals b.
    pub fn spectral_projection(&self, b: &[(f64, f64)], f: &[C64]) -> Result<Vec<C64>> {
        self.spectral_integral(b, f, false)
    }

    /// int_b lambda dE f, i.e. L E(b) f computed on the spectral side.
    pub fn l_on_range(&self, b: &[(f64, f64)], f: &[C64]) -> Result<Vec<C64>> {
        self.spectral_integral(b, f, true)
    }

    fn spectral_integral(&self, b: &[(f64, f64)], f: &[C64], times_lambda: bool) -> Result<Vec<C64>> {
        let b = &merge_union(b);
        let ivs = self.m_intervals_nu(b);
        let nodes = self.nodes_for(&ivs)?;
        let td = self.analyze_on(f, &nodes);
        let mut out = self.synth_masked(&td, &vec![true; td.lambda.len()], |l| if times_lambda { l } else { 1.0 });
        for e in self.eigs_in(b) {
            let pe = crate::spectrum::point_projection_c(&self.oracle, f, std::slice::from_ref(&e));
            let m = if times_lambda { e.lambda_e } else { 1.0 };
            out.iter_mut().zip(pe).for_each(|(o, v)| *o += v * m);
        }
        // continuous pieces of N_n inside b come from the oracle
        let mut nb = Vec::new();
        for &(a, bb) in &self.n_intervals() {
            for &(ba, bbb) in b {
                if a.max(ba) < bb.min(bbb) {
                    nb.push((a.max(ba), bb.min(bbb)));
                }
            }
        }
        if !nb.is_empty() {
            let mut add = oracle_projection_c(&self.oracle, &nb, f);
            if times_lambda {
                // L_h commutes with the grid projection
                let re: Vec<f64> = add.iter().map(|v| v.re).collect();
                let im: Vec<f64> = add.iter().map(|v| v.im).collect();
                add = self.oracle.apply_l(&re).iter().zip(self.oracle.apply_l(&im)).map(|(a, b)| C64::new(*a, b)).collect();
            }
            out.iter_mut().zip(add).for_each(|(o, v)| *o += v);
        }
        Ok(out)
    }

    /// int lambda dE f: lambda-weighted synthesis plus sum lambda_e (f, xi*) xi.
    pub fn apply_l_spectrally(&self, f: &[C64]) -> Result<Vec<C64>> {
        let td = self.analyze(f)?;
        let mut out = self.synth_masked(&td, &vec![true; td.lambda.len()], |l| l);
        for e in &self.eigs {
            let pe = crate::spectrum::point_projection_c(&self.oracle, f, std::slice::from_ref(e));
            out.iter_mut().zip(pe).for_each(|(o, v)| *o += v * e.lambda_e);
        }
        Ok(out)
    }

    /// Norm on the transform side: (int sum_j |T_j|^2 d lambda)^{1/2}.
    pub fn j_norm(td: &TransformData) -> f64 {
        td.t.iter().zip(&td.weight).map(|(t, w)| w * (t[0].norm_sqr() + t[1].norm_sqr())).sum::<f64>().sqrt()
    }

    /// ||U R(z) f - (lambda - z)^-1 U f|| with the resolvent image supplied
    /// by the caller. Returns (absolute, relative to ||U f||).
    pub fn intertwine_residual(&self, f: &[C64], rf: &[C64], z: C64) -> Result<(f64, f64)> {
        let tf = self.analyze(f)?;
        let tr = self.analyze_on(rf, &self.nodes);
        let mut d = tf.clone();
        for i in 0..d.lambda.len() {
            let m = c(1.0) / (c(d.lambda[i]) - z);
            for j in 0..2 {
                d.t[i][j] = tr.t[i][j] - tf.t[i][j] * m;
            }
        }
        let abs = Self::j_norm(&d);
        let base = Self::j_norm(&tf);
        Ok((abs, if base > 0.0 { abs / base } else { abs }))
    }

    /// Snap lambda to the nearest base panel edge (through nu); values at or
    /// below h_p are returned unchanged.
    pub fn snap(&self, lambda: f64) -> f64 {
        if lambda <= self.h_p() || self.edges.is_empty() {
            return lambda;
        }
        let nu = self.nu_of(lambda);
        let e = self.edges.iter().cloned().fold(f64::NAN, |best, e| if best.is_nan() || (e - nu).abs() < (best - nu).abs() { e } else { best });
        self.p_c(e)
    }
}

fn panel_count(a: f64, b: f64, width: f64) -> usize {
    (((b - a) / width) - 1e-9).ceil().max(1.0) as usize
}

pub fn to_c(f: &[f64]) -> Vec<C64> {
    f.iter().map(|&v| c(v)).collect()
}

pub fn dot_c(o: &GridOperator, f: &[C64], g: &[C64]) -> C64 {
    f.iter().zip(g).map(|(a, b)| a * b.conj()).sum::<C64>() * o.h
}

pub fn norm_c(o: &GridOperator, f: &[C64]) -> f64 {
    (f.iter().map(|a| a.norm_sqr()).sum::<f64>() * o.h).sqrt()
}

pub fn oracle_projection_c(o: &GridOperator, b: &[(f64, f64)], f: &[C64]) -> Vec<C64> {
    let re: Vec<f64> = f.iter().map(|v| v.re).collect();
    let im: Vec<f64> = f.iter().map(|v| v.im).collect();
    let a = o.projection_apply(b, &re);
    let bb = o.projection_apply(b, &im);
    a.iter().zip(&bb).map(|(p, q)| C64::new(*p, *q)).collect()
}

pub fn rel_dev(o: &GridOperator, a: &[C64], b: &[C64]) -> f64 {
    let d: Vec<C64> = a.iter().zip(b).map(|(p, q)| p - q).collect();
    norm_c(o, &d) / norm_c(o, b).max(f64::MIN_POSITIVE)
}

/// exp(-a (x - x0)^2) with closed-form derivatives, used as test input.
#[derive(Clone, Copy, Debug)]
pub struct Gaussian {
    pub center: f64,
    pub a: f64,
}

impl Gaussian {
    pub fn value(&self, x: f64) -> f64 {
        (-self.a * (x - self.center).powi(2)).exp()
    }

    /// Derivatives of orders 0..=4 via Hermite polynomials.
    pub fn derivs(&self, x: f64) -> [f64; 5] {
        let sa = self.a.sqrt();
        let s = sa * (x - self.center);
        let mut h = [0.0; 5];
        h[0] = 1.0;
        h[1] = 2.0 * s;
        for m in 1..4 {
            h[m + 1] = 2.0 * s * h[m] - 2.0 * m as f64 * h[m - 1];
        }
        let e = (-s * s).exp();
        let mut out = [0.0; 5];
        for m in 0..5 {
            out[m] = (-sa).powi(m as i32) * h[m] * e;
        }
        out
    }

    /// L f = f'''' + c2 f'' + c1 f' + c0 f evaluated exactly.
    pub fn apply_l(&self, spec: &OperatorSpec, x: f64) -> f64 {
        let d = self.derivs(x);
        let [c0, c1, c2] = spec.l_coefficients(x);
        d[4] + c2 * d[2] + c1 * d[1] + c0 * d[0]
    }

    pub fn sample(&self, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.value(x)).collect()
    }

    pub fn sample_l(&self, spec: &OperatorSpec, xs: &[f64]) -> Vec<f64> {
        xs.iter().map(|&x| self.apply_l(spec, x)).collect()
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct SurveyReport {
    pub samples: usize,
    pub max_ratio: f64,
    pub median_ratio: f64,
    pub intersection: f64,
    pub idempotency: f64,
    pub disjoint: f64,
    pub commutation: f64,
}

/// Random unit function: sum of one to three Gaussians.
fn random_function<R: Rng>(rng: &mut R, o: &GridOperator) -> Vec<f64> {
    let k = rng.random_range(1..=3);
    let mut f = vec![0.0; o.x.len()];
    for _ in 0..k {
        let g = Gaussian { center: rng.random_range(-3.0..3.0), a: rng.random_range(0.3..2.0) };
        let amp = rng.random_range(-1.0..1.0);
        f.iter_mut().zip(&o.x).for_each(|(v, &x)| *v += amp * g.value(x));
    }
    let n = o.norm(&f);
    f.iter().map(|v| v / n).collect()
}

fn intersect(b1: &[(f64, f64)], b2: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut out = Vec::new();
    for &(a, b) in b1 {
        for &(p, q) in b2 {
            if a.max(p) < b.min(q) {
                out.push((a.max(p), b.min(q)));
            }
        }
    }
    out
}

impl SpectralCalculus {
    /// One to three intervals with endpoints uniform in t on [-1, t_max]:
    /// t >= 0 is nu (lambda = p_c(t)), t < 0 maps linearly onto [lambda_0, h_p].
    /// Uniform lambda would put almost every endpoint far above the spectral
    /// content of the test functions.
    fn random_snapped_union<R: Rng>(&self, rng: &mut R) -> Vec<(f64, f64)> {
        let (l0, hp) = (self.partition.lambda_0, self.h_p());
        let t_max = self.nu_of(self.cfg.lambda_max).min(6.0);
        let to_lambda = |t: f64| if t < 0.0 { hp + t * (hp - l0) } else { self.p_c(t) };
        let k = rng.random_range(1..=3);
        let mut out = Vec::new();
        for _ in 0..k {
            let a = to_lambda(rng.random_range(-1.0..t_max));
            let b = to_lambda(rng.random_range(-1.0..t_max));
            let (a, b) = (self.snap(a.min(b)), self.snap(a.max(b)));
            if b > a {
                out.push((a, b));
            }
        }
        out
    }

    /// Norms ||E(b) f|| / ||f|| over random snapped interval unions and unit
    /// f, with the algebra checks on each sample.
    pub fn projection_survey(&self, samples: usize, seed: u64) -> Result<SurveyReport> {
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(seed);
        let o = &self.oracle;
        let mut ratios = Vec::with_capacity(samples);
        let (mut inter, mut idem, mut disj, mut comm): (f64, f64, f64, f64) = (0.0, 0.0, 0.0, 0.0);
        for _ in 0..samples {
            let b1 = self.random_snapped_union(&mut rng);
            let b2 = self.random_snapped_union(&mut rng);
            let f = to_c(&random_function(&mut rng, o));
            let e1 = self.spectral_projection(&b1, &f)?;
            ratios.push(norm_c(o, &e1));
            let e2 = self.spectral_projection(&b2, &f)?;
            let e12 = self.spectral_projection(&b1, &e2)?;
            let e_int = self.spectral_projection(&intersect(&b1, &b2), &f)?;
            inter = inter.max(rel_dev(o, &e12, &e_int).min(norm_c(o, &diff(&e12, &e_int))));
            let e11 = self.spectral_projection(&b1, &e1)?;
            idem = idem.max(norm_c(o, &diff(&e11, &e1)));
            // the complement of b1 inside the window
            let comp = complement(&b1, self.partition.lambda_0, self.cfg.lambda_max);
            let ec = self.spectral_projection(&comp, &e1)?;
            disj = disj.max(norm_c(o, &ec));
            let fr: Vec<f64> = f.iter().map(|v| v.re).collect();
            let lf = to_c(&o.apply_l(&fr));
            let elf = self.spectral_projection(&b1, &lf)?;
            let le1 = self.l_on_range(&b1, &f)?;
            comm = comm.max(norm_c(o, &diff(&elf, &le1)) / norm_c(o, &lf));
        }
        let mut sorted = ratios.clone();
        sorted.sort_by(|a, b| a.partial_cmp(b).unwrap());
        Ok(SurveyReport {
            samples,
            max_ratio: sorted.last().cloned().unwrap_or(0.0),
            median_ratio: sorted.get(sorted.len() / 2).cloned().unwrap_or(0.0),
            intersection: inter,
            idempotency: idem,
            disjoint: disj,
            commutation: comm,
        })
    }
}

/// Sorted, pairwise disjoint form of a finite union of intervals.
pub fn merge_union(b: &[(f64, f64)]) -> Vec<(f64, f64)> {
    let mut s: Vec<(f64, f64)> = b.iter().cloned().filter(|(a, b)| b >= a).collect();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out: Vec<(f64, f64)> = Vec::new();
    for (a, b) in s {
        match out.last_mut() {
            Some(last) if a <= last.1 => last.1 = last.1.max(b),
            _ => out.push((a, b)),
        }
    }
    out
}

pub fn diff(a: &[C64], b: &[C64]) -> Vec<C64> {
    a.iter().zip(b).map(|(p, q)| p - q).collect()
}

/// [lo, hi] minus a finite union of intervals.
pub fn complement(b: &[(f64, f64)], lo: f64, hi: f64) -> Vec<(f64, f64)> {
    let mut s = b.to_vec();
    s.sort_by(|a, b| a.0.partial_cmp(&b.0).unwrap());
    let mut out = Vec::new();
    let mut cur = lo;
    for (a, bb) in s {
        if a > cur {
            out.push((cur, a));
        }
        cur = cur.max(bb);
    }
    if hi > cur {
        out.push((cur, hi));
    }
    out
}

/// R(z) f for the free pair by quadrature against the residue Green function.
pub fn free_resolvent(spec: &OperatorSpec, o: &GridOperator, z: C64, f: &[f64]) -> Result<Vec<C64>> {
    o.x.par_iter()
        .map(|&x| {
            let mut s = c(0.0);
            for (&t, &fv) in o.x.iter().zip(f) {
                s += crate::green::free_green(spec, z, x, t)? * fv;
            }
            Ok(s * o.h)
        })
        .collect()
}

/// The free pair's synthesis at x = 0 for the unit Gaussian, closed form.
pub fn free_gaussian_density(nu: f64, p_c_prime: f64) -> f64 {
    (2.0 * PI).sqrt() * (-0.5 * nu * nu).exp() / (PI * p_c_prime)
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::ode_core::select_lambda_s;
    use crate::spectrum::{find_eigenvalues, lambda_0, partition, w_sweep};

    fn calculus(spec: &OperatorSpec, points: usize, lambda_max: f64) -> SpectralCalculus {
        let oracle = Arc::new(GridOperator::new(spec, 20.0, points).unwrap());
        let cfg = PicardConfig::default();
        let ls = if spec.is_free() { spec.consts().h_p + 0.5 } else { select_lambda_s(spec, 20.0).unwrap() };
        let l0 = lambda_0(spec, &oracle);
        let eigs = find_eigenvalues(spec, &oracle, (l0, spec.consts().h_p), ls, &cfg).unwrap();
        let sweep = w_sweep(spec, ls, 40, ls, &cfg).unwrap();
        let part = partition(spec, 4, &sweep, &eigs, l0, ls);
        SpectralCalculus::new(spec, oracle, eigs, part, cfg, CalculusConfig { lambda_max, ..Default::default() }).unwrap()
    }

    #[test]
    fn gaussian_derivatives_match_finite_differences() {
        let g = Gaussian { center: 0.3, a: 0.7 };
        let h = 1e-3;
        for x in [-1.0, 0.2, 1.5] {
            let d = g.derivs(x);
            let dp = g.derivs(x + h);
            let dm = g.derivs(x - h);
            for m in 0..4 {
                assert!(((dp[m] - dm[m]) / (2.0 * h) - d[m + 1]).abs() <= 1e-5);
            }
        }
    }

    #[test]
    fn free_synthesis_at_one_node() {
        // sum_j phi_j(0, 6) T_j f(6) = sqrt(2 pi) e^{-1/2} / (10 pi)
        let spec = OperatorSpec::free();
        let o = GridOperator::new(&spec, 20.0, 1600).unwrap();
        let fj = factor_jump(&spec, 6.0, 2.5, &PicardConfig::default()).unwrap();
        let f: Vec<f64> = o.x.iter().map(|x| (-0.5 * x * x).exp()).collect();
        let mut s = c(0.0);
        for j in 0..2 {
            let t: C64 = o.x.iter().zip(&f).map(|(&x, &v)| fj.phi_star(j, x).unwrap().conj() * v).sum::<C64>() * o.h;
            s += fj.phi(j, 0.0).unwrap() * t;
        }
        let want = free_gaussian_density(1.0, 10.0);
        // the closed form, 0.0483941, against its four-digit rounding
        assert!((want - 0.048387).abs() <= 1e-5);
        assert!((s - c(want)).norm() <= 1e-9, "{s} vs {want}");
    }

    #[test]
    fn free_reconstruction_and_parseval() {
        let spec = OperatorSpec::free();
        let sc = calculus(&spec, 1600, 0.0);
        let f = to_c(&Gaussian { center: 0.0, a: 0.5 }.sample(&sc.oracle.x));
        assert!(sc.reconstruction_residual(&f).unwrap() <= 1e-6);
        let (p, d) = sc.parseval_residual(&f, &f).unwrap();
        assert!(p <= 1e-6 && d <= 1e-6, "{p} {d}");
        let nf = norm_c(&sc.oracle, &f);
        assert!((nf * nf - PI.sqrt()).abs() <= 1e-10);
        let zero = vec![c(0.0); f.len()];
        let tz = sc.analyze(&zero).unwrap();
        assert!(tz.t.iter().all(|t| t[0].norm() == 0.0 && t[1].norm() == 0.0));
        // odd against even: the full identity holds with (f, g) = 0
        let g = to_c(&sc.oracle.x.iter().map(|x| x * (-x * x).exp()).collect::<Vec<_>>());
        let (p, _) = sc.parseval_residual(&f, &g).unwrap();
        assert!(p <= 1e-8);
        assert!(dot_c(&sc.oracle, &f, &g).norm() <= 1e-14);
    }

    #[test]
    fn free_spectral_calculus() {
        let spec = OperatorSpec::free();
        let sc = calculus(&spec, 1600, 0.0);
        let gs = Gaussian { center: 0.0, a: 0.5 };
        let f = to_c(&gs.sample(&sc.oracle.x));
        // E of the whole window is the identity, E of nothing is zero
        let all = sc.spectral_projection(&[(-10.0, sc.cfg.lambda_max)], &f).unwrap();
        assert!(rel_dev(&sc.oracle, &all, &f) <= 1e-6);
        let none = sc.spectral_projection(&[], &f).unwrap();
        assert!(norm_c(&sc.oracle, &none) == 0.0);
        // L through the spectral representation against the closed form
        let lf = to_c(&gs.sample_l(&spec, &sc.oracle.x));
        let ls = sc.apply_l_spectrally(&f).unwrap();
        assert!(rel_dev(&sc.oracle, &ls, &lf) <= 1e-4);
        // intertwining with the exact resolvent at z = -1
        let z = c(-1.0);
        let fr: Vec<f64> = f.iter().map(|v| v.re).collect();
        let rf = free_resolvent(&spec, &sc.oracle, z, &fr).unwrap();
        let (_, rel) = sc.intertwine_residual(&f, &rf, z).unwrap();
        assert!(rel <= 1e-6, "{rel}");
        // additivity over adjacent intervals and support on the spectrum
        let (a, m, b) = (sc.snap(3.0), sc.snap(7.0), sc.snap(40.0));
        let e1 = sc.spectral_projection(&[(a, m)], &f).unwrap();
        let e2 = sc.spectral_projection(&[(m, b)], &f).unwrap();
        let e12 = sc.spectral_projection(&[(a, b)], &f).unwrap();
        let sum: Vec<C64> = e1.iter().zip(&e2).map(|(p, q)| p + q).collect();
        assert!(rel_dev(&sc.oracle, &sum, &e12) <= 1e-12);
        let below = sc.spectral_projection(&[(-5.0, 1.5)], &f).unwrap();
        assert!(norm_c(&sc.oracle, &below) == 0.0);
    }

    #[test]
    fn truncated_input_is_rejected() {
        let spec = OperatorSpec::free();
        let sc = calculus(&spec, 400, 200.0);
        let f = vec![c(1.0); sc.oracle.x.len()];
        assert!(matches!(sc.analyze(&f), Err(SpecError::DomainTruncation { .. })));
    }

    #[test]
    fn p2_identities() {
        let spec = OperatorSpec::p2();
        let sc = calculus(&spec, 1000, 0.0);
        let o = sc.oracle.clone();
        let gs = Gaussian { center: 0.0, a: 0.5 };
        let f = to_c(&gs.sample(&o.x));
        assert!(sc.reconstruction_residual(&f).unwrap() <= 1e-3);
        let sh = to_c(&Gaussian { center: 1.0, a: 1.0 }.sample(&o.x));
        let (p, d) = sc.parseval_residual(&sh, &sh).unwrap();
        let n2 = norm_c(&o, &sh).powi(2);
        assert!(p <= 1e-3 * n2 && d <= 1e-3 * n2, "{p} {d}");
        // eigenfunctions have no continuous part: the grid one up to its
        // discretization error, sech to quadrature accuracy
        let xi = to_c(&sc.eigs[0].xi[0]);
        let td = sc.analyze(&xi).unwrap();
        assert!(SpectralCalculus::j_norm(&td) <= 1e-4 * norm_c(&o, &xi));
        let sech = to_c(&o.x.iter().map(|x| 1.0 / x.cosh()).collect::<Vec<_>>());
        let td = sc.analyze(&sech).unwrap();
        assert!(SpectralCalculus::j_norm(&td) <= 1e-7 * norm_c(&o, &sech));
        // L sech = lambda_e B(N) sech, with lambda_e the grid eigenvalue
        let le = sc.eigs[0].lambda_e;
        assert!(le.abs() <= 1e-3);
        let lsech = sc.apply_l_spectrally(&sech).unwrap();
        let point: Vec<C64> = sc.excluded_part(&sech).iter().map(|v| v * le).collect();
        assert!(norm_c(&o, &diff(&lsech, &point)) <= 1e-5 * norm_c(&o, &sech));
        assert!(norm_c(&o, &lsech) <= 2.0 * le.abs() * norm_c(&o, &sech));
        let lf = to_c(&gs.sample_l(&spec, &o.x));
        let lsp = sc.apply_l_spectrally(&f).unwrap();
        assert!(rel_dev(&o, &lsp, &lf) <= 1e-2);
    }
}

#[cfg(test)]
mod union_props {
    use super::*;
    use proptest::prelude::*;

    fn union() -> impl Strategy<Value = Vec<(f64, f64)>> {
        prop::collection::vec((-50.0f64..50.0, 0.0f64..20.0).prop_map(|(a, w)| (a, a + w)), 0..6)
    }

    proptest! {
        #[test]
        fn merged_union_is_sorted_disjoint_and_same_set(b in union(), probe in prop::collection::vec(-60.0f64..80.0, 20)) {
            let m = merge_union(&b);
            for w in m.windows(2) {
                prop_assert!(w[0].1 < w[1].0);
            }
            for l in probe {
                prop_assert_eq!(in_union(&b, l), in_union(&m, l));
            }
        }

        #[test]
        fn complement_covers_the_rest(b in union(), probe in prop::collection::vec(-60.0f64..80.0, 20)) {
            let (lo, hi) = (-55.0, 75.0);
            let c = complement(&b, lo, hi);
            for l in probe {
                if l < lo || l > hi {
                    continue;
                }
                let inside_c = c.iter().any(|&(a, e)| l > a && l < e);
                let inside_b = in_union(&b, l);
                // endpoints belong to both, interiors to exactly one
                prop_assert!(inside_c != inside_b || c.iter().any(|&(a, e)| l == a || l == e));
            }
        }
    }
}
