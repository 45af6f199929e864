//! Operator pair D_i = -D^2 + q_i + h_i, hypotheses on the potentials and
//! problem-file ingestion.

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Result, SpecError};
use crate::linalg::{c, C64, M4};
use crate::scalar::{sech, Scalar};

/// Closed-form potential presets. All of them are even functions of x.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "preset", rename_all = "snake_case")]
pub enum Potential {
    Zero,
    /// q(x) = -depth * sech^2(x)
    PoschlTeller { depth: f64 },
    /// q(x) = amplitude * exp(-x^2 / (2 width^2))
    Gaussian { amplitude: f64, width: f64 },
}

impl Potential {
    /// (q, q', q'') at x.
    pub fn derivs<T: Scalar>(&self, x: T) -> [T; 3] {
        match *self {
            Potential::Zero => [T::zero(); 3],
            Potential::PoschlTeller { depth } => {
                let d = T::lit(depth);
                let s = sech(x);
                let t = x.tanh();
                let s2 = s * s;
                [
                    -d * s2,
                    T::lit(2.0) * d * s2 * t,
                    -d * (T::lit(4.0) * s2 - T::lit(6.0) * s2 * s2),
                ]
            }
            Potential::Gaussian { amplitude, width } => {
                let a = T::lit(amplitude);
                let w2 = T::lit(width * width);
                let g = a * (-(x * x) / (T::lit(2.0) * w2)).exp();
                [g, -x / w2 * g, (x * x / (w2 * w2) - T::one() / w2) * g]
            }
        }
    }

    pub fn q(&self, x: f64) -> f64 {
        self.derivs(x)[0]
    }

    pub fn is_zero(&self) -> bool {
        match *self {
            Potential::Zero => true,
            Potential::PoschlTeller { depth } => depth == 0.0,
            Potential::Gaussian { amplitude, .. } => amplitude == 0.0,
        }
    }

    fn validate(&self, name: &str) -> Result<()> {
        let bad = |m: String| Err(SpecError::InvalidSpec(format!("{name}.params: {m}")));
        match *self {
            Potential::Zero => Ok(()),
            Potential::PoschlTeller { depth } if !depth.is_finite() => bad("depth not finite".into()),
            Potential::PoschlTeller { .. } => Ok(()),
            Potential::Gaussian { amplitude, width } => {
                if !amplitude.is_finite() {
                    bad("amplitude not finite".into())
                } else if !(width.is_finite() && width > 0.0) {
                    bad(format!("width must be positive, got {width}"))
                } else {
                    Ok(())
                }
            }
        }
    }

    /// Every preset is an even function; left-normalized solutions are
    /// obtained by reflection, so this is checked before they are built.
    pub fn is_even(&self) -> bool {
        true
    }

    /// Upper bound of int_X^inf |q^(k)(x)| dx.
    pub fn decay_tail(&self, k: usize, x_cut: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::PoschlTeller { depth } => depth.abs() * [4.0, 8.0, 112.0][k] * (-2.0 * x_cut).exp() / 2.0,
            Potential::Gaussian { amplitude, width } => {
                let s2 = width * width;
                let x = x_cut.max(1e-300);
                let e = (-x * x / (2.0 * s2)).exp();
                let i0 = s2 / x * e;
                let i1 = s2 * e;
                let i2 = s2 * x * e + s2 * i0;
                amplitude.abs() * [i0, i1 / s2, i2 / (s2 * s2) + i0 / s2][k]
            }
        }
    }

    /// Upper bound of int_X^inf (1 + x^3) |q^(k)(x)| dx from closed-form
    /// envelopes of each preset.
    fn tail_integral(&self, k: usize, x_cut: f64) -> f64 {
        match *self {
            Potential::Zero => 0.0,
            Potential::PoschlTeller { depth } => {
                // sech^2 <= 4 e^{-2x}; |q'| <= 8|d| e^{-2x}; |q''| <= 112|d| e^{-2x}
                let ck = depth.abs() * [4.0, 8.0, 112.0][k];
                let x = x_cut;
                let e = (-2.0 * x).exp();
                let cubic = e * (x.powi(3) / 2.0 + 0.75 * x * x + 0.75 * x + 0.375);
                ck * (e / 2.0 + cubic)
            }
            Potential::Gaussian { amplitude, width } => {
                let s2 = width * width;
                let x = x_cut;
                let e = (-x * x / (2.0 * s2)).exp();
                // I_m = int_X^inf x^m e^{-x^2/(2 s2)} dx
                let mut im = [0.0f64; 6];
                im[0] = s2 / x * e;
                im[1] = s2 * e;
                for m in 2..6 {
                    im[m] = s2 * x.powi(m as i32 - 1) * e + (m as f64 - 1.0) * s2 * im[m - 2];
                }
                let a = amplitude.abs();
                match k {
                    0 => a * (im[0] + im[3]),
                    1 => a / s2 * (im[1] + im[4]),
                    _ => a * ((im[2] + im[5]) / (s2 * s2) + (im[0] + im[3]) / s2),
                }
            }
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct OperatorSpec {
    pub q1: Potential,
    pub q2: Potential,
    pub h1: f64,
    pub h2: f64,
}

#[derive(Clone, Copy, Debug, PartialEq)]
pub struct DerivedConstants<T> {
    pub h_a: T,
    pub h_p: T,
    pub h_m: T,
    pub theta0: T,
}

pub fn derived_constants<T: Scalar>(h1: T, h2: T) -> DerivedConstants<T> {
    let two = T::lit(2.0);
    let h_a = (h1 + h2) / two;
    let d = h2 - h1;
    DerivedConstants {
        h_a,
        h_p: h1 * h2,
        h_m: -(d * d) / T::lit(4.0),
        theta0: (two * h_a).sqrt(),
    }
}

impl OperatorSpec {
    pub fn new(q1: Potential, q2: Potential, h1: f64, h2: f64) -> Result<Self> {
        let s = OperatorSpec { q1, q2, h1, h2 };
        s.validate()?;
        Ok(s)
    }

    /// q1 = q2 = 0, h1 = 1, h2 = 2.
    pub fn free() -> Self {
        OperatorSpec { q1: Potential::Zero, q2: Potential::Zero, h1: 1.0, h2: 2.0 }
    }

    /// q1 = -2 sech^2, q2 = 2 sech^2, h1 = 1, h2 = 2. ker D1 is spanned by sech.
    pub fn p2() -> Self {
        OperatorSpec {
            q1: Potential::PoschlTeller { depth: 2.0 },
            q2: Potential::PoschlTeller { depth: -2.0 },
            h1: 1.0,
            h2: 2.0,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if !(self.h1.is_finite() && self.h2.is_finite()) {
            return Err(SpecError::InvalidSpec("h1/h2 must be finite".into()));
        }
        if self.h1 <= 0.0 {
            return Err(SpecError::InvalidSpec(format!("h1: must be positive, got {}", self.h1)));
        }
        if self.h2 <= self.h1 {
            return Err(SpecError::InvalidSpec(format!(
                "h2: must exceed h1, got h1 = {}, h2 = {}",
                self.h1, self.h2
            )));
        }
        self.q1.validate("q1")?;
        self.q2.validate("q2")
    }

    /// The pair defining L* = D1 D2, written as D2' D1' with swapped roles.
    /// The swapped spec has h1 > h2 and is only used internally.
    pub fn adjoint(&self) -> Self {
        OperatorSpec { q1: self.q2, q2: self.q1, h1: self.h2, h2: self.h1 }
    }

    pub fn is_free(&self) -> bool {
        self.q1.is_zero() && self.q2.is_zero()
    }

    pub fn consts(&self) -> DerivedConstants<f64> {
        derived_constants(self.h1, self.h2)
    }

    /// Entries (B41, B42, B43) of the decaying perturbation: the system
    /// y' = (A(z) + B(x)) y with y = (u, u', u'', u''') encodes
    /// u'''' = (Q1 + Q2) u'' + 2 q1' u' + (z - Q1 Q2 + q1'') u, Q_i = q_i + h_i.
    pub fn b_pert(&self, x: f64) -> [f64; 3] {
        let [q1, dq1, ddq1] = self.q1.derivs(x);
        let q2 = self.q2.q(x);
        [ddq1 - self.h1 * q2 - self.h2 * q1 - q1 * q2, 2.0 * dq1, q1 + q2]
    }

    pub fn b_pert_matrix(&self, x: f64) -> M4 {
        let b = self.b_pert(x);
        let mut m = M4::zeros();
        m[(3, 0)] = c(b[0]);
        m[(3, 1)] = c(b[1]);
        m[(3, 2)] = c(b[2]);
        m
    }

    /// The non-constant matrix exactly as printed in the source system
    /// (B41 = q2'' - (h1+q1)(h2+q2), B42 = 2 q2', B43 = h1+h2+q1+q2).
    /// It is the coefficient matrix of L* rather than L and keeps the
    /// constant terms; kept for reference and comparison only.
    pub fn eval_b_paper(&self, x: f64) -> M4 {
        let [q1, _, _] = self.q1.derivs(x);
        let [q2, dq2, ddq2] = self.q2.derivs(x);
        let mut m = M4::zeros();
        m[(3, 0)] = c(ddq2 - (self.h1 + q1) * (self.h2 + q2));
        m[(3, 1)] = c(2.0 * dq2);
        m[(3, 2)] = c(self.h1 + self.h2 + q1 + q2);
        m
    }

    /// Full coefficient matrix A(z) + B(x).
    pub fn system_matrix(&self, z: C64, x: f64) -> M4 {
        a_full(z, &self.consts()) + self.b_pert_matrix(x)
    }

    /// Coefficients (c0, c1, c2) of L u = u'''' + c2 u'' + c1 u' + c0 u, i.e.
    /// L u = u'''' - (Q1+Q2) u'' - 2 q1' u' + (Q1 Q2 - q1'') u.
    pub fn l_coefficients(&self, x: f64) -> [f64; 3] {
        let [q1, dq1, ddq1] = self.q1.derivs(x);
        let q2 = self.q2.q(x);
        let (qq1, qq2) = (q1 + self.h1, q2 + self.h2);
        [qq1 * qq2 - ddq1, -2.0 * dq1, -(qq1 + qq2)]
    }
}

/// Constant part of the first-order system: companion matrix of
/// mu^4 + 2 h_a mu^2 + h_p - z in the variable i*mu.
pub fn a_full(z: C64, k: &DerivedConstants<f64>) -> M4 {
    let mut a = M4::zeros();
    a[(0, 1)] = c(1.0);
    a[(1, 2)] = c(1.0);
    a[(2, 3)] = c(1.0);
    a[(3, 0)] = z - k.h_p;
    a[(3, 2)] = c(2.0 * k.h_a);
    a
}

#[derive(Clone, Debug, Serialize)]
pub struct HypothesisReport {
    /// truncated int_{-X}^{X} (1+|x|^3)|q_i^(k)| for i = 1, 2 and k = 0, 1, 2
    pub integrals: [[f64; 3]; 2],
    /// analytic bound of the part beyond |x| > X
    pub tails: [[f64; 3]; 2],
    pub min_eig_d2: f64,
    pub positive_definite: bool,
    pub exp_decay: bool,
}

pub fn check_hypotheses(spec: &OperatorSpec, half_width: f64, points: usize) -> Result<HypothesisReport> {
    if !(half_width > 0.0) {
        return Err(SpecError::DomainError(format!("half width must be positive, got {half_width}")));
    }
    let m = points.max(3) | 1;
    let h = 2.0 * half_width / (m - 1) as f64;
    let mut integrals = [[0.0; 3]; 2];
    let mut tails = [[0.0; 3]; 2];
    for (i, q) in [spec.q1, spec.q2].iter().enumerate() {
        for j in 0..m {
            let x = -half_width + j as f64 * h;
            // composite Simpson weights
            let w = if j == 0 || j == m - 1 {
                1.0
            } else if j % 2 == 1 {
                4.0
            } else {
                2.0
            } * h
                / 3.0;
            let d = q.derivs(x);
            for k in 0..3 {
                integrals[i][k] += w * (1.0 + x.abs().powi(3)) * d[k].abs();
            }
        }
        for k in 0..3 {
            tails[i][k] = 2.0 * q.tail_integral(k, half_width);
        }
    }
    let min_eig = crate::oracle::d2_min_eig(spec, half_width.max(10.0), points.max(200));
    if min_eig <= 0.0 {
        return Err(SpecError::NonPositiveD2 { min_eig });
    }
    Ok(HypothesisReport {
        integrals,
        tails,
        min_eig_d2: min_eig,
        positive_definite: min_eig >= spec.h2 / 2.0,
        // every preset decays at least like e^{-2|x|}
        exp_decay: true,
    })
}

/// Grid parameters from the problem file.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridConfig {
    #[serde(default = "default_half_width")]
    pub half_width: f64,
    #[serde(default = "default_points")]
    pub points: usize,
}

fn default_half_width() -> f64 {
    20.0
}
fn default_points() -> usize {
    2000
}

impl Default for GridConfig {
    fn default() -> Self {
        GridConfig { half_width: default_half_width(), points: default_points() }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Tolerances {
    pub picard: f64,
    pub ode: f64,
    pub matching: f64,
    pub jump: f64,
    pub algebra: f64,
    pub w_floor_rel: f64,
}

impl Default for Tolerances {
    fn default() -> Self {
        Tolerances { picard: 1e-10, ode: 1e-10, matching: 1e-8, jump: 1e-6, algebra: 1e-3, w_floor_rel: 1e-8 }
    }
}

impl Tolerances {
    pub fn validate(&self) -> Result<()> {
        let all = [self.picard, self.ode, self.matching, self.jump, self.algebra, self.w_floor_rel];
        if all.iter().all(|t| t.is_finite() && *t > 0.0) {
            Ok(())
        } else {
            Err(SpecError::InvalidSpec("tolerances: all entries must be positive".into()))
        }
    }
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct PotentialJson {
    preset: String,
    #[serde(default)]
    params: Vec<f64>,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
struct ProblemJson {
    h1: f64,
    h2: f64,
    q1: PotentialJson,
    q2: PotentialJson,
    #[serde(default)]
    grid: GridConfig,
    #[serde(default)]
    tolerances: Tolerances,
}

#[derive(Clone, Debug)]
pub struct Problem {
    pub spec: OperatorSpec,
    pub grid: GridConfig,
    pub tolerances: Tolerances,
    /// first 16 hex digits of the SHA-256 of the canonical JSON form
    pub hash: String,
}

fn potential_from_json(p: &PotentialJson, name: &str) -> Result<Potential> {
    let want = |n: usize| {
        if p.params.len() == n {
            Ok(())
        } else {
            Err(SpecError::InvalidSpec(format!(
                "{name}.params: preset '{}' takes {n} parameter(s), got {}",
                p.preset,
                p.params.len()
            )))
        }
    };
    match p.preset.as_str() {
        "zero" => want(0).map(|_| Potential::Zero),
        "poschl_teller" => want(1).map(|_| Potential::PoschlTeller { depth: p.params[0] }),
        "gaussian" => want(2).map(|_| Potential::Gaussian { amplitude: p.params[0], width: p.params[1] }),
        other => Err(SpecError::InvalidSpec(format!("{name}.preset: unknown preset '{other}'"))),
    }
}

impl Problem {
    pub fn from_json_str(text: &str) -> Result<Self> {
        let de = &mut serde_json::Deserializer::from_str(text);
        let raw: ProblemJson = serde_path_to_error::deserialize(de).map_err(|e| {
            let path = e.path().to_string();
            SpecError::InvalidSpec(format!("{path}: {}", e.inner()))
        })?;
        let spec = OperatorSpec {
            q1: potential_from_json(&raw.q1, "q1")?,
            q2: potential_from_json(&raw.q2, "q2")?,
            h1: raw.h1,
            h2: raw.h2,
        };
        spec.validate()?;
        raw.tolerances.validate()?;
        if !(raw.grid.half_width > 0.0) || raw.grid.points < 3 {
            return Err(SpecError::InvalidSpec("grid: half_width must be positive and points >= 3".into()));
        }
        let hash = hash_of(&raw);
        Ok(Problem { spec, grid: raw.grid, tolerances: raw.tolerances, hash })
    }

    pub fn from_spec(spec: OperatorSpec, grid: GridConfig) -> Self {
        let mut p = Problem { spec, grid, tolerances: Tolerances::default(), hash: String::new() };
        p.rehash();
        p
    }

    /// Replace the grid (command-line overrides) and update the hash.
    pub fn with_grid(mut self, grid: GridConfig) -> Self {
        self.grid = grid;
        self.rehash();
        self
    }

    fn rehash(&mut self) {
        let raw = ProblemJson {
            h1: self.spec.h1,
            h2: self.spec.h2,
            q1: potential_json(&self.spec.q1),
            q2: potential_json(&self.spec.q2),
            grid: self.grid,
            tolerances: self.tolerances,
        };
        self.hash = hash_of(&raw);
    }
}

fn hash_of(raw: &ProblemJson) -> String {
    let canonical = serde_json::to_string(raw).unwrap_or_default();
    let digest = Sha256::digest(canonical.as_bytes());
    digest.iter().take(8).map(|b| format!("{b:02x}")).collect()
}

fn potential_json(p: &Potential) -> PotentialJson {
    match *p {
        Potential::Zero => PotentialJson { preset: "zero".into(), params: vec![] },
        Potential::PoschlTeller { depth } => PotentialJson { preset: "poschl_teller".into(), params: vec![depth] },
        Potential::Gaussian { amplitude, width } => {
            PotentialJson { preset: "gaussian".into(), params: vec![amplitude, width] }
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use proptest::prelude::*;

    #[test]
    fn constants_for_unit_pair() {
        let k = derived_constants(1.0f64, 2.0);
        assert_eq!(k.h_a, 1.5);
        assert_eq!(k.h_p, 2.0);
        assert_eq!(k.h_m, -0.25);
        assert_relative_eq!(k.theta0, 3f64.sqrt(), epsilon = 1e-15);
        let kf = derived_constants(1.0f32, 2.0);
        assert_eq!(kf.h_m, -0.25f32);
    }

    #[test]
    fn near_equal_h_gives_small_h_m() {
        let eps = 1e-3;
        let k = derived_constants(1.0, 1.0 + eps);
        assert_relative_eq!(k.h_m, -eps * eps / 4.0, max_relative = 1e-9);
        assert!(k.h_m < 0.0);
    }

    #[test]
    fn constants_are_deterministic() {
        let a = derived_constants(0.7f64, 3.1);
        let b = derived_constants(0.7f64, 3.1);
        assert_eq!(a.h_a.to_bits(), b.h_a.to_bits());
        assert_eq!(a.h_m.to_bits(), b.h_m.to_bits());
        assert_eq!(a.theta0.to_bits(), b.theta0.to_bits());
    }

    #[test]
    fn rejects_bad_constants() {
        assert!(OperatorSpec::new(Potential::Zero, Potential::Zero, 1.0, 1.0).is_err());
        assert!(OperatorSpec::new(Potential::Zero, Potential::Zero, 0.0, 1.0).is_err());
        assert!(OperatorSpec::new(Potential::Zero, Potential::Gaussian { amplitude: 1.0, width: 0.0 }, 1.0, 2.0)
            .is_err());
    }

    fn fd_check(p: Potential) {
        // central differences converge at order 2 to the closed forms
        let errs: Vec<f64> = [1e-2, 5e-3]
            .iter()
            .map(|&h| {
                let mut e: f64 = 0.0;
                for i in 0..81 {
                    let x = -4.0 + 0.1 * i as f64;
                    let fd1 = (p.q(x + h) - p.q(x - h)) / (2.0 * h);
                    let d = p.derivs(x);
                    let fd2 = (p.derivs(x + h)[1] - p.derivs(x - h)[1]) / (2.0 * h);
                    e = e.max((fd1 - d[1]).abs()).max((fd2 - d[2]).abs());
                }
                e
            })
            .collect();
        let ratio = errs[0] / errs[1];
        assert!(ratio > 3.5 && ratio < 4.5, "ratio {ratio} for {p:?}");
    }

    #[test]
    fn derivatives_match_finite_differences() {
        fd_check(Potential::PoschlTeller { depth: 2.0 });
        fd_check(Potential::PoschlTeller { depth: -2.0 });
        fd_check(Potential::Gaussian { amplitude: 0.8, width: 1.3 });
    }

    #[test]
    fn free_pair_hypotheses() {
        let r = check_hypotheses(&OperatorSpec::free(), 20.0, 400).unwrap();
        assert!(r.integrals.iter().flatten().all(|&v| v == 0.0));
        assert!((r.min_eig_d2 - 2.0).abs() < 1e-2);
        assert!(r.positive_definite);
    }

    #[test]
    fn p2_is_positive_definite() {
        let r = check_hypotheses(&OperatorSpec::p2(), 20.0, 400).unwrap();
        assert!(r.positive_definite);
        assert!(r.min_eig_d2 >= 2.0 - 1e-9);
        // sech^2 tails at X = 20 are far below double precision of the bulk
        assert!(r.tails.iter().flatten().all(|&t| t < 1e-10));
    }

    #[test]
    fn deep_gaussian_well_breaks_d2() {
        let spec = OperatorSpec::new(
            Potential::Zero,
            Potential::Gaussian { amplitude: -5.0, width: 1.0 },
            1.0,
            2.0,
        )
        .unwrap();
        match check_hypotheses(&spec, 20.0, 400) {
            Err(SpecError::NonPositiveD2 { min_eig }) => assert!(min_eig < 0.0),
            other => panic!("expected NonPositiveD2, got {other:?}"),
        }
    }

    #[test]
    fn gaussian_tail_bound_dominates_quadrature() {
        let p = Potential::Gaussian { amplitude: 1.0, width: 2.0 };
        let x0 = 5.0;
        // brute force int_5^40 (1+x^3)|q^(k)|
        for k in 0..3 {
            let n = 20000;
            let h = 35.0 / n as f64;
            let s: f64 = (0..n)
                .map(|i| {
                    let x = x0 + (i as f64 + 0.5) * h;
                    h * (1.0 + x.powi(3)) * p.derivs(x)[k].abs()
                })
                .sum();
            let b = p.tail_integral(k, x0);
            assert!(b >= s * (1.0 - 1e-6), "k={k}: bound {b} < {s}");
            assert!(b <= 20.0 * s, "k={k}: bound {b} much larger than {s}");
        }
    }

    #[test]
    fn sech_tail_bound_dominates_quadrature() {
        let p = Potential::PoschlTeller { depth: 2.0 };
        for k in 0..3 {
            let n = 20000;
            let h = 30.0 / n as f64;
            let s: f64 = (0..n)
                .map(|i| {
                    let x = 3.0 + (i as f64 + 0.5) * h;
                    h * (1.0 + x.powi(3)) * p.derivs(x)[k].abs()
                })
                .sum();
            assert!(p.tail_integral(k, 3.0) >= s);
        }
    }

    #[test]
    fn p2_perturbation_decays() {
        let s = OperatorSpec::p2();
        let b = s.b_pert(30.0);
        assert!(b.iter().all(|v| v.abs() < 1e-10));
        let b = s.b_pert(25.0);
        assert!(b.iter().all(|v| v.abs() < 1e-8));
        // printed matrix tends to the free constants, not to zero
        let bp = s.eval_b_paper(30.0);
        assert!((bp[(3, 0)].re + 2.0).abs() < 1e-10);
        assert!((bp[(3, 2)].re - 3.0).abs() < 1e-10);
    }

    #[test]
    fn p2_perturbation_closed_form() {
        // for P2: B41 = -6 s^2 + 16 s^4, B42 = 8 s^2 t, B43 = 0
        let s = OperatorSpec::p2();
        for &x in &[0.0, 0.3, -1.1, 2.5] {
            let se = 1.0 / f64::cosh(x);
            let t = f64::tanh(x);
            let b = s.b_pert(x);
            assert_relative_eq!(b[0], -6.0 * se * se + 16.0 * se.powi(4), epsilon = 1e-13);
            assert_relative_eq!(b[1], 8.0 * se * se * t, epsilon = 1e-13);
            assert!(b[2].abs() < 1e-15);
        }
    }

    #[test]
    fn sech_solves_the_system_at_zero() {
        // u = sech spans ker D1 for P2, so (u, u', u'', u''') solves y' = (A(0)+B) y
        let spec = OperatorSpec::p2();
        for &x in &[-1.5, -0.2, 0.0, 0.7, 2.0] {
            let s = 1.0 / f64::cosh(x);
            let t = f64::tanh(x);
            let u = [s, -s * t, s * (2.0 * t * t - 1.0), s * t * (5.0 - 6.0 * t * t)];
            let u4 = s * (24.0 * t.powi(4) - 28.0 * t * t + 5.0);
            let y = crate::linalg::vec4([c(u[0]), c(u[1]), c(u[2]), c(u[3])]);
            let dy = spec.system_matrix(c(0.0), x) * y;
            assert_relative_eq!(dy[3].re, u4, epsilon = 1e-12);
            assert_relative_eq!(dy[0].re, u[1], epsilon = 1e-15);
        }
    }

    #[test]
    fn json_roundtrip_and_errors() {
        let text = r#"{"h1":1,"h2":2,"q1":{"preset":"poschl_teller","params":[2]},
            "q2":{"preset":"poschl_teller","params":[-2]},"grid":{"half_width":20,"points":2000}}"#;
        let p = Problem::from_json_str(text).unwrap();
        assert_eq!(p.spec, OperatorSpec::p2());
        assert_eq!(p.hash.len(), 16);
        let bad = r#"{"h1":1,"h2":2,"q1":{"preset":"zero"},"q2":{"preset":"zero","params":"x"}}"#;
        let e = Problem::from_json_str(bad).unwrap_err().to_string();
        assert!(e.contains("q2.params"), "{e}");
        let bad = r#"{"h1":1,"h2":2,"q1":{"preset":"gaussian","params":[1]},"q2":{"preset":"zero"}}"#;
        let e = Problem::from_json_str(bad).unwrap_err().to_string();
        assert!(e.contains("q1.params"), "{e}");
    }

    proptest! {
        #[test]
        fn constants_invariants(h1 in 0.01f64..10.0, dh in 1e-3f64..10.0) {
            let k = derived_constants(h1, h1 + dh);
            prop_assert!(k.h_m < 0.0 && k.h_p > 0.0 && k.theta0 > 0.0);
            prop_assert!((k.theta0 * k.theta0 - 2.0 * k.h_a).abs() < 1e-12 * k.h_a.max(1.0));
        }

        #[test]
        fn presets_are_even_and_decay(x in -30.0f64..30.0, d in -3.0f64..3.0, w in 0.3f64..3.0) {
            for p in [Potential::PoschlTeller { depth: d }, Potential::Gaussian { amplitude: d, width: w }] {
                let a = p.derivs(x);
                let b = p.derivs(-x);
                prop_assert!((a[0] - b[0]).abs() <= 1e-14 * a[0].abs().max(1e-300));
                prop_assert!((a[1] + b[1]).abs() <= 1e-14 * a[1].abs().max(1e-300));
                prop_assert!(a.iter().all(|v| v.is_finite()));
            }
            let p = Potential::PoschlTeller { depth: d };
            prop_assert!(p.q(x).abs() <= 4.0 * d.abs() * (-2.0 * x.abs()).exp() * (1.0 + 1e-12));
        }
    }
}
