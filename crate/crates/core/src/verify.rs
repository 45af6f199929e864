//! The acceptance suite: ten checks with pinned tolerances, shared by the
//! `verify` command and the acceptance test binary.

use std::collections::BTreeMap;
use std::time::Instant;

use serde::Serialize;

use crate::characteristic::{invert4, det4, p_char, p_char_deriv, psi_matrix, real_roots, to_m4};
use crate::error::Result;
use crate::green::{jump_asymptotic_deviation, w_value, Side};
use crate::linalg::{c, C64};
use crate::ode_core::{picard_complex, picard_high, HalfLine, PicardConfig};
use crate::oracle::l_min_eig;
use crate::pipeline::{self, FPreset, Spectral};
use crate::problem::{GridConfig, OperatorSpec, Problem};
use crate::spectrum::{biorthonormality_residual, point_projection, Source};
use crate::transforms::{diff, norm_c, oracle_projection_c, rel_dev, to_c, SpectralCalculus};

pub const FREE_W_TOL: f64 = 1e-10;
pub const FREE_REMAINDER_TOL: f64 = 1e-10;
pub const FREE_RECON_TOL: f64 = 1e-6;
pub const FREE_PARSEVAL_TOL: f64 = 1e-6;
pub const FREE_TAIL_TOL: f64 = 1e-8;
pub const FREE_RUNTIME_S: f64 = 120.0;
pub const ROOT_TOL: f64 = 1e-12;
pub const RATIO_MAX: f64 = 0.5;
pub const ORACLE_IMAG_TOL: f64 = 1e-8;
pub const ORACLE_DEV_TOL: f64 = 1e-8;
pub const ORACLE_SIM_TOL: f64 = 1e-12;
pub const KERNEL_LAMBDA_TOL: f64 = 1e-4;
pub const KERNEL_COSINE_MIN: f64 = 0.999;
pub const BIORTHO_TOL: f64 = 1e-6;
pub const POINT_IDEM_TOL: f64 = 2e-6;
pub const JUMP_FINAL_TOL: f64 = 0.15;
pub const JUMP_LAMBDAS: [f64; 3] = [20.0, 80.0, 320.0];
pub const IDENTITY_TOL: f64 = 1e-3;
pub const SCALAR_TYPE_TOL: f64 = 1e-2;
pub const STONE_EPS: [f64; 3] = [1e-1, 1e-2, 1e-3];
pub const STONE_FINAL_REL: f64 = 1e-2;
pub const SURVEY_SAMPLES: usize = 100;
pub const SURVEY_COND_FACTOR: f64 = 1.1;
pub const SURVEY_CHANGE: f64 = 0.2;
pub const ORDER_TARGET: f64 = 2.0;
pub const ORDER_BAND: f64 = 0.5;
/// below this many points the grid is too coarse for the convergence study
pub const MIN_POINTS: usize = 200;

const FREE_POINTS: usize = 1600;
const B1: (f64, f64) = (3.0, 7.0);
const B2: (f64, f64) = (5.0, 12.0);
const B3: (f64, f64) = (8.0, 20.0);

#[derive(Clone, Debug, Serialize)]
pub struct CriterionResult {
    pub id: u32,
    pub name: &'static str,
    pub pass: bool,
    pub skipped: bool,
    pub metrics: BTreeMap<String, f64>,
    pub note: String,
    /// wall time, kept out of the report so that it stays reproducible
    #[serde(skip)]
    pub seconds: f64,
}

impl CriterionResult {
    fn new(id: u32, name: &'static str) -> Self {
        CriterionResult { id, name, pass: true, skipped: false, metrics: BTreeMap::new(), note: String::new(), seconds: 0.0 }
    }

    fn metric(&mut self, key: &str, v: f64) {
        self.metrics.insert(key.to_string(), v);
    }

    /// Record v and require v <= tol.
    fn at_most(&mut self, key: &str, v: f64, tol: f64) {
        self.metric(key, v);
        if !(v <= tol) {
            self.fail(format!("{key} = {v:.3e} exceeds {tol:.0e}"));
        }
    }

    fn fail(&mut self, why: String) {
        self.pass = false;
        if !self.note.is_empty() {
            self.note.push_str("; ");
        }
        self.note.push_str(&why);
    }

    fn error(id: u32, name: &'static str, e: &crate::SpecError) -> Self {
        let mut r = CriterionResult::new(id, name);
        r.fail(format!("{}: {e}", e.kind()));
        r
    }

    /// One line for terminal output.
    pub fn line(&self) -> String {
        let status = if self.skipped {
            "SKIP"
        } else if self.pass {
            "PASS"
        } else {
            "FAIL"
        };
        let m: Vec<String> = self.metrics.iter().map(|(k, v)| format!("{k}={v:.3e}")).collect();
        let mut s = format!("criterion {}: {status} {}: {}", self.id, self.name, m.join(" "));
        if !self.note.is_empty() {
            s.push_str(&format!(" ({})", self.note));
        }
        s
    }
}

#[derive(Clone, Debug, Serialize)]
pub struct VerifyReport {
    pub half_width: f64,
    pub points: usize,
    pub n: usize,
    pub seed: u64,
    pub criteria: Vec<CriterionResult>,
    pub all_pass: bool,
}

#[derive(Clone, Copy, Debug)]
pub struct VerifyConfig {
    pub n: usize,
    pub lambda_max: f64,
    pub seed: u64,
}

impl Default for VerifyConfig {
    fn default() -> Self {
        VerifyConfig { n: 4, lambda_max: 0.0, seed: 7 }
    }
}

fn timed<F: FnOnce() -> CriterionResult>(f: F) -> CriterionResult {
    let t = Instant::now();
    let mut r = f();
    r.seconds = t.elapsed().as_secs_f64();
    r
}

/// The free pair with the problem's constants.
fn free_of(spec: &OperatorSpec) -> OperatorSpec {
    OperatorSpec { q1: crate::Potential::Zero, q2: crate::Potential::Zero, ..*spec }
}

fn max_remainder(spec: &OperatorSpec, hl: &HalfLine) -> Result<f64> {
    let mut m: f64 = 0.0;
    for i in (0..hl.u.len()).step_by(7) {
        m = m.max(hl.remainder(spec, hl.node(i))?.norm());
    }
    Ok(m)
}

fn free_exactness(problem: &Problem, cfg: &VerifyConfig) -> CriterionResult {
    const NAME: &str = "free operator exactness";
    let start = Instant::now();
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(1, NAME);
        let spec = free_of(&problem.spec);
        let free = Problem::from_spec(spec, GridConfig { half_width: 20.0, points: FREE_POINTS });
        let pc = pipeline::picard_config(&free);
        let ls = pipeline::lambda_s_for(&spec, 20.0)?;
        let hp = spec.consts().h_p;
        let zs: Vec<C64> = (0..20)
            .map(|j| {
                let a = 2.0 * std::f64::consts::PI * (j as f64 + 0.5) / 20.0;
                c(hp) + C64::from_polar(4.0, a)
            })
            .collect();
        let mut wdev: f64 = 0.0;
        for &z in &zs {
            wdev = wdev.max((w_value(&spec, z, Side::Complex, ls, &pc)? - c(1.0)).norm());
        }
        r.at_most("w_dev", wdev, FREE_W_TOL);
        let mut rem: f64 = 0.0;
        for k in 0..4 {
            rem = rem.max(max_remainder(&spec, &picard_high(&spec, k, 6.0, &pc)?)?);
            for &z in zs.iter().step_by(5) {
                rem = rem.max(max_remainder(&spec, &picard_complex(&spec, k, z, &pc)?)?);
            }
        }
        r.at_most("remainder", rem, FREE_REMAINDER_TOL);
        let sp = pipeline::spectral(&free, cfg.n)?;
        let f = to_c(&pipeline::sample_f(FPreset::Gaussian, &sp.oracle, &[])?);
        let (sc, td) = pipeline::calculus_for_tail(&free, &sp, cfg.n, 0.0, &f, FREE_TAIL_TOL)?;
        let nf = norm_c(&sp.oracle, &f);
        r.metric("lambda_max", sc.cfg.lambda_max);
        r.at_most("tail_bound", td.tail_bound / nf, FREE_TAIL_TOL);
        r.at_most("reconstruction", sc.reconstruction_residual(&f)?, FREE_RECON_TOL);
        let (p, _) = sc.parseval_residual(&f, &f)?;
        r.at_most("parseval", p, FREE_PARSEVAL_TOL);
        r.at_most("norm_sq_vs_sqrt_pi", (nf * nf - std::f64::consts::PI.sqrt()).abs(), FREE_PARSEVAL_TOL);
        Ok(r)
    };
    let mut r = run().unwrap_or_else(|e| CriterionResult::error(1, NAME, &e));
    let secs = start.elapsed().as_secs_f64();
    if secs > FREE_RUNTIME_S {
        r.fail(format!("runtime {secs:.0} s exceeds {FREE_RUNTIME_S:.0} s"));
    }
    r
}

fn root_algebra(problem: &Problem) -> CriterionResult {
    const NAME: &str = "root algebra";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(2, NAME);
        let k = problem.spec.consts();
        let lambda = 6.0;
        // closed forms: theta^2 = sqrt(lambda - h_m) + h_a, nu^2 = sqrt(lambda - h_m) - h_a
        let s = (lambda - k.h_m).sqrt();
        let (theta, nu) = ((s + k.h_a).sqrt(), (s - k.h_a).sqrt());
        let rs = real_roots(lambda, &k)?;
        let want = [c(0.0) + C64::new(0.0, theta), c(nu), c(-nu), C64::new(0.0, -theta)];
        let mut dev: f64 = 0.0;
        for (m, w) in rs.mu.iter().zip(&want) {
            dev = dev.max((C64::new(m.re, m.im) - w).norm());
            dev = dev.max((p_char(C64::new(m.re, m.im), &k) - c(lambda)).norm() / lambda);
        }
        r.at_most("root_dev", dev, ROOT_TOL);
        r.at_most("theta_dev", (rs.theta - theta).abs(), ROOT_TOL);
        r.at_most("nu_dev", (rs.nu - nu).abs(), ROOT_TOL);
        let pi_inv = to_m4(&rs.pi_inv);
        let want24 = C64::new(0.0, 1.0) / p_char_deriv(c(nu), &k);
        r.at_most("pi_inv_24_dev", (pi_inv[(1, 3)] - want24).norm(), ROOT_TOL);
        let want_det = 2.0 * theta * (theta * theta + nu * nu);
        let mut ddev: f64 = 0.0;
        for x in [0.0, 0.7, -1.9] {
            let psi = psi_matrix(x, theta, nu);
            if invert4(&psi).is_none() {
                r.fail(format!("Psi singular at x = {x}"));
            }
            let d = det4(&psi);
            ddev = ddev.max((C64::new(d.re, d.im) - c(want_det)).norm());
        }
        r.at_most("det_psi_dev", ddev, ROOT_TOL * want_det);
        if problem.spec.h1 == 1.0 && problem.spec.h2 == 2.0 {
            // the literal values for h1 = 1, h2 = 2
            let lit = (theta - 2.0).abs().max((nu - 1.0).abs()).max((want24 - C64::new(0.0, 0.1)).norm()).max((want_det - 20.0).abs());
            r.at_most("literal_dev", lit, ROOT_TOL);
        }
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(2, NAME, &e))
}

fn contraction(problem: &Problem, lambda_s: f64, picard: &PicardConfig) -> CriterionResult {
    const NAME: &str = "contraction";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(3, NAME);
        r.metric("lambda_s", lambda_s);
        let (mut ratio, mut resid): (f64, f64) = (0.0, 0.0);
        for m in [1.0, 2.0, 4.0, 10.0] {
            for k in 0..4 {
                let hl = picard_high(&problem.spec, k, m * lambda_s, picard)?;
                ratio = ratio.max(hl.ratios.iter().cloned().fold(0.0, f64::max));
                resid = resid.max(hl.self_residual);
            }
        }
        r.at_most("max_ratio", ratio, RATIO_MAX);
        r.at_most("self_residual", resid, 2.0 * picard.tol);
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(3, NAME, &e))
}

fn oracle_similarity(sp: &Spectral) -> CriterionResult {
    const NAME: &str = "oracle similarity";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(4, NAME);
        let os = sp.oracle.oracle_spectrum()?;
        r.at_most("max_imag_rel", os.max_imag_rel, ORACLE_IMAG_TOL);
        r.at_most("max_dev_rel", os.max_dev_rel, ORACLE_DEV_TOL);
        r.at_most("similarity_defect", sp.oracle.similarity_defect(), ORACLE_SIM_TOL);
        r.metric("cond_s", sp.oracle.cond_s());
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(4, NAME, &e))
}

fn cosine(a: &[f64], b: &[f64]) -> f64 {
    let d: f64 = a.iter().zip(b).map(|(p, q)| p * q).sum();
    let na: f64 = a.iter().map(|p| p * p).sum::<f64>().sqrt();
    let nb: f64 = b.iter().map(|p| p * p).sum::<f64>().sqrt();
    (d / (na * nb)).abs()
}

fn kernel_detection(problem: &Problem, sp: &Spectral) -> CriterionResult {
    let mut r = CriterionResult::new(5, "kernel detection");
    let o = &sp.oracle;
    let Some(e) = sp.eigs.iter().find(|e| e.lambda_e.abs() <= 1e-2) else {
        r.skipped = true;
        r.note = "no eigenvalue near 0".into();
        return r;
    };
    r.at_most("lambda_e", e.lambda_e.abs(), KERNEL_LAMBDA_TOL);
    if e.source != Source::Both {
        r.fail(format!("found by {:?} only", e.source));
    }
    if problem.spec == OperatorSpec::p2() {
        let sech: Vec<f64> = o.x.iter().map(|x| 1.0 / x.cosh()).collect();
        let cs = cosine(&e.xi[0], &sech);
        r.metric("cosine_sech", cs);
        if !(cs >= KERNEL_COSINE_MIN) {
            r.fail(format!("cosine to sech {cs:.6} below {KERNEL_COSINE_MIN}"));
        }
    }
    r.metric("route_similarity", e.route_similarity);
    if !(e.route_similarity >= KERNEL_COSINE_MIN) {
        r.fail(format!("W-root and grid eigenvectors differ, cosine {:.6}", e.route_similarity));
    }
    r.at_most("biorthonormality", biorthonormality_residual(o, &sp.eigs), BIORTHO_TOL);
    let f = FPreset::Gaussian.gaussian().unwrap().sample(&o.x);
    let p = point_projection(o, &f, &sp.eigs);
    let pp = point_projection(o, &p, &sp.eigs);
    let d: Vec<f64> = pp.iter().zip(&p).map(|(a, b)| a - b).collect();
    r.at_most("idempotency", o.norm(&d) / o.norm(&f), POINT_IDEM_TOL);
    r
}

fn jump_asymptotics(problem: &Problem, lambda_s: f64, picard: &PicardConfig) -> CriterionResult {
    const NAME: &str = "jump asymptotics";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(6, NAME);
        let mut devs = Vec::new();
        for &l in &JUMP_LAMBDAS {
            let d = jump_asymptotic_deviation(&problem.spec, l, lambda_s, picard)?;
            r.metric(&format!("dev_{l}"), d);
            devs.push(d);
        }
        // an exactly free kernel has nothing left to decrease
        let exact = devs.iter().all(|&d| d <= 1e-10);
        if !exact && !devs.windows(2).all(|w| w[1] < w[0]) {
            r.fail("deviation not strictly decreasing".into());
        }
        let last = *devs.last().unwrap();
        if !(last <= JUMP_FINAL_TOL) {
            r.fail(format!("deviation {last:.3e} at lambda = 320 exceeds {JUMP_FINAL_TOL}"));
        }
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(6, NAME, &e))
}

fn spectral_identities(problem: &Problem, sp: &Spectral, sc: &SpectralCalculus) -> CriterionResult {
    const NAME: &str = "spectral identities";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(7, NAME);
        let o = &sp.oracle;
        let g = FPreset::Gaussian.gaussian().unwrap();
        let f = to_c(&g.sample(&o.x));
        let nf = norm_c(o, &f);
        let td = sc.analyze(&f)?;
        r.metric("lambda_max", sc.cfg.lambda_max);
        r.at_most("tail_bound", td.tail_bound / nf, IDENTITY_TOL);
        r.metric("last_decade", td.last_decade / nf);
        r.at_most("reconstruction", sc.reconstruction_residual(&f)?, IDENTITY_TOL);
        let (p, d) = sc.parseval_residual(&f, &f)?;
        r.at_most("parseval", p / (nf * nf), IDENTITY_TOL);
        r.metric("parseval_dual", d / (nf * nf));

        let e1 = sc.spectral_projection(&[B1], &f)?;
        let oe1 = oracle_projection_c(o, &[B1], &f);
        r.at_most("oracle_deviation", rel_dev(o, &e1, &oe1), IDENTITY_TOL);

        let e2 = sc.spectral_projection(&[B2], &f)?;
        let e12 = sc.spectral_projection(&[B1], &e2)?;
        let e_int = sc.spectral_projection(&[(B2.0, B1.1)], &f)?;
        r.at_most("intersection", norm_c(o, &diff(&e12, &e_int)) / nf, IDENTITY_TOL);
        let e11 = sc.spectral_projection(&[B1], &e1)?;
        r.at_most("idempotency", norm_c(o, &diff(&e11, &e1)) / nf, IDENTITY_TOL);
        let e31 = sc.spectral_projection(&[B3], &e1)?;
        r.at_most("disjoint", norm_c(o, &e31) / nf, IDENTITY_TOL);

        let lf = to_c(&g.sample_l(&problem.spec, &o.x));
        let elf = sc.spectral_projection(&[B1], &lf)?;
        let nlf = norm_c(o, &lf);
        // L on ran E(b) through the spectral side; the grid L_h route is
        // reported too, but it sees E(b) f cut off at the box walls
        let le1 = sc.l_on_range(&[B1], &f)?;
        r.at_most("commutation", norm_c(o, &diff(&elf, &le1)) / nlf, IDENTITY_TOL);
        let re: Vec<f64> = e1.iter().map(|v| v.re).collect();
        let im: Vec<f64> = e1.iter().map(|v| v.im).collect();
        let le1h: Vec<C64> = o.apply_l(&re).iter().zip(o.apply_l(&im)).map(|(a, b)| C64::new(*a, b)).collect();
        r.metric("commutation_grid", norm_c(o, &diff(&elf, &le1h)) / nlf);
        let ls = sc.apply_l_spectrally(&f)?;
        r.at_most("scalar_type", norm_c(o, &diff(&ls, &lf)) / nlf, SCALAR_TYPE_TOL);

        // intertwining with the grid resolvent away from the spectrum
        let z = c(problem.spec.consts().h_m - 1.0);
        let fr: Vec<f64> = f.iter().map(|v| v.re).collect();
        let rf = o.resolvent_apply(z, &fr)?;
        let (_, rel) = sc.intertwine_residual(&f, &rf, z)?;
        r.metric("intertwine", rel);
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(7, NAME, &e))
}

fn stone(sp: &Spectral) -> CriterionResult {
    const NAME: &str = "stone formula";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(8, NAME);
        let o = &sp.oracle;
        let f = FPreset::Gaussian.gaussian().unwrap().sample(&o.x);
        let rep = o.stone_check(B1.0, B1.1, &STONE_EPS, &f)?;
        for (eps, err) in rep.eps.iter().zip(&rep.errors) {
            r.metric(&format!("err_{eps:.0e}"), err / rep.f_norm);
        }
        if !rep.errors.windows(2).all(|w| w[1] < w[0]) {
            r.fail("errors not strictly decreasing".into());
        }
        let last = *rep.errors.last().unwrap();
        if !(last <= STONE_FINAL_REL * rep.f_norm) {
            r.fail(format!("final error {:.3e} exceeds {STONE_FINAL_REL} ||f||", last / rep.f_norm));
        }
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(8, NAME, &e))
}

fn survey(sp: &Spectral, sc: &SpectralCalculus, seed: u64) -> CriterionResult {
    const NAME: &str = "uniform boundedness";
    let run = || -> Result<CriterionResult> {
        let mut r = CriterionResult::new(9, NAME);
        let cond = sp.oracle.cond_s();
        let a = sc.projection_survey(SURVEY_SAMPLES, seed)?;
        let b = sc.projection_survey(2 * SURVEY_SAMPLES, seed)?;
        r.metric("cond_s", cond);
        r.metric("median_ratio", b.median_ratio);
        r.metric("sup_100", a.max_ratio);
        r.at_most("sup_200", b.max_ratio, SURVEY_COND_FACTOR * cond);
        r.at_most("sup_change", (b.max_ratio - a.max_ratio).abs() / a.max_ratio, SURVEY_CHANGE);
        r.metric("survey_intersection", b.intersection);
        r.metric("survey_idempotency", b.idempotency);
        r.metric("survey_disjoint", b.disjoint);
        r.metric("survey_commutation", b.commutation);
        Ok(r)
    };
    run().unwrap_or_else(|e| CriterionResult::error(9, NAME, &e))
}

/// Observed order of the lowest eigenvalue of L_h on N, 2N + 1, 4N + 3
/// points (h, h/2, h/4 on the same box).
pub fn convergence_order(spec: &OperatorSpec, half_width: f64, n: usize) -> (f64, [f64; 3]) {
    let l = [n, 2 * n + 1, 4 * n + 3].map(|m| l_min_eig(spec, half_width, m));
    (((l[0] - l[1]) / (l[1] - l[2])).log2(), l)
}

fn grid_convergence(problem: &Problem) -> CriterionResult {
    let mut r = CriterionResult::new(10, "grid convergence");
    let (order, l) = convergence_order(&problem.spec, problem.grid.half_width, problem.grid.points);
    r.metric("lambda_h", l[0]);
    r.metric("lambda_h2", l[1]);
    r.metric("lambda_h4", l[2]);
    r.metric("order", order);
    if !((order - ORDER_TARGET).abs() <= ORDER_BAND) {
        r.fail(format!("GridConvergence: order {order:.3} outside {ORDER_TARGET} +- {ORDER_BAND}"));
    }
    if problem.grid.points < MIN_POINTS {
        r.fail(format!("GridConvergence: {} points is below the minimum of {MIN_POINTS}", problem.grid.points));
    }
    r
}

/// Run all ten checks. Checks 1, 2, 3, 6 and 10 need no grid oracle and run
/// even when the oracle cannot be built; the others then fail with its error.
pub fn run_suite(problem: &Problem, cfg: &VerifyConfig) -> VerifyReport {
    let mut out = vec![timed(|| free_exactness(problem, cfg)), timed(|| root_algebra(problem))];
    let picard = pipeline::picard_config(problem);
    let lambda_s = pipeline::lambda_s_for(&problem.spec, problem.grid.half_width);
    let (c3, c6) = match lambda_s {
        Ok(ls) => (timed(|| contraction(problem, ls, &picard)), timed(|| jump_asymptotics(problem, ls, &picard))),
        Err(e) => (CriterionResult::error(3, "contraction", &e), CriterionResult::error(6, "jump asymptotics", &e)),
    };
    out.push(c3);
    match pipeline::spectral(problem, cfg.n) {
        Ok(sp) => {
            out.push(timed(|| oracle_similarity(&sp)));
            out.push(timed(|| kernel_detection(problem, &sp)));
            out.push(c6);
            let f = to_c(&FPreset::Gaussian.gaussian().unwrap().sample(&sp.oracle.x));
            match pipeline::calculus_for_tail(problem, &sp, cfg.n, cfg.lambda_max, &f, IDENTITY_TOL) {
                Ok((sc, _)) => {
                    out.push(timed(|| spectral_identities(problem, &sp, &sc)));
                    out.push(timed(|| stone(&sp)));
                    out.push(timed(|| survey(&sp, &sc, cfg.seed)));
                }
                Err(e) => {
                    out.push(CriterionResult::error(7, "spectral identities", &e));
                    out.push(timed(|| stone(&sp)));
                    out.push(CriterionResult::error(9, "uniform boundedness", &e));
                }
            }
        }
        Err(e) => {
            out.push(CriterionResult::error(4, "oracle similarity", &e));
            out.push(CriterionResult::error(5, "kernel detection", &e));
            out.push(c6);
            for (id, name) in [(7, "spectral identities"), (8, "stone formula"), (9, "uniform boundedness")] {
                out.push(CriterionResult::error(id, name, &e));
            }
        }
    }
    out.push(timed(|| grid_convergence(problem)));
    let all_pass = out.iter().all(|r| r.pass);
    VerifyReport {
        half_width: problem.grid.half_width,
        points: problem.grid.points,
        n: cfg.n,
        seed: cfg.seed,
        criteria: out,
        all_pass,
    }
}
