//! End-to-end assembly: grid oracle, eigenvalues, W sweep, partition and
//! spectral calculus for one problem.

use std::sync::Arc;

use serde::{Deserialize, Serialize};

use crate::error::{Result, SpecError};
use crate::linalg::C64;
use crate::ode_core::{select_lambda_s, PicardConfig};
use crate::oracle::GridOperator;
use crate::problem::{OperatorSpec, Problem};
use crate::spectrum::{find_eigenvalues, lambda_0, partition, w_sweep, Eigenpair, SpectralPartition, WSample};
use crate::transforms::{norm_c, CalculusConfig, Gaussian, SpectralCalculus, TransformData};

/// Base sample count of the W sweep below lambda_s.
pub const SWEEP_BASE: usize = 40;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FPreset {
    Gaussian,
    ShiftedGaussian,
    Eigenmode,
}

impl FPreset {
    pub fn parse(s: &str) -> Result<Self> {
        match s {
            "gaussian" => Ok(FPreset::Gaussian),
            "shifted_gaussian" => Ok(FPreset::ShiftedGaussian),
            "eigenmode" => Ok(FPreset::Eigenmode),
            other => Err(SpecError::InvalidSpec(format!("f: unknown preset '{other}'"))),
        }
    }

    /// The Gaussian behind the preset, if it is one.
    pub fn gaussian(self) -> Option<Gaussian> {
        match self {
            FPreset::Gaussian => Some(Gaussian { center: 0.0, a: 0.5 }),
            FPreset::ShiftedGaussian => Some(Gaussian { center: 1.0, a: 1.0 }),
            FPreset::Eigenmode => None,
        }
    }
}

/// Picard settings derived from the problem file.
pub fn picard_config(problem: &Problem) -> PicardConfig {
    PicardConfig {
        half_width: problem.grid.half_width,
        tol: problem.tolerances.picard,
        ode_tol: problem.tolerances.ode,
        ..PicardConfig::default()
    }
}

/// Switch point between branch and Vandermonde frames. The free pair needs
/// no margin, any point above h_p will do.
pub fn lambda_s_for(spec: &OperatorSpec, half_width: f64) -> Result<f64> {
    if spec.is_free() {
        Ok(spec.consts().h_p + 0.5)
    } else {
        select_lambda_s(spec, half_width)
    }
}

pub struct Spectral {
    pub oracle: Arc<GridOperator>,
    pub lambda_s: f64,
    pub picard: PicardConfig,
    pub eigs: Vec<Eigenpair>,
    pub sweep: Vec<WSample>,
    pub partition: SpectralPartition,
}

/// Everything up to the partition; cheap compared with the calculus.
pub fn spectral(problem: &Problem, n: usize) -> Result<Spectral> {
    if n == 0 {
        return Err(SpecError::InvalidSpec("n: partition index must be at least 1".into()));
    }
    let spec = &problem.spec;
    let oracle = Arc::new(GridOperator::new(spec, problem.grid.half_width, problem.grid.points)?);
    let picard = picard_config(problem);
    let lambda_s = lambda_s_for(spec, problem.grid.half_width)?;
    let l0 = lambda_0(spec, &oracle);
    let eigs = find_eigenvalues(spec, &oracle, (l0, spec.consts().h_p), lambda_s, &picard)?;
    let sweep = w_sweep(spec, lambda_s, SWEEP_BASE, lambda_s, &picard)?;
    let partition = partition(spec, n, &sweep, &eigs, l0, lambda_s);
    Ok(Spectral { oracle, lambda_s, picard, eigs, sweep, partition })
}

pub fn calculus(problem: &Problem, sp: &Spectral, n: usize, lambda_max: f64) -> Result<SpectralCalculus> {
    SpectralCalculus::new(
        &problem.spec,
        sp.oracle.clone(),
        sp.eigs.clone(),
        sp.partition.clone(),
        sp.picard,
        CalculusConfig { n, lambda_max, ..CalculusConfig::default() },
    )
}

/// Samples of the input function on the oracle grid.
pub fn sample_f(preset: FPreset, oracle: &GridOperator, eigs: &[Eigenpair]) -> Result<Vec<f64>> {
    match preset.gaussian() {
        Some(g) => Ok(g.sample(&oracle.x)),
        None => eigs
            .iter()
            .find(|e| !e.xi.is_empty() && e.residual.is_finite())
            .map(|e| e.xi[0].clone())
            .ok_or_else(|| SpecError::InvalidSpec("f: preset 'eigenmode' needs an eigenvalue below h_p".into())),
    }
}

/// Calculus whose Lambda_max makes the fitted tail bound for f at most
/// target * ||f||: nu_max = 8, 9, ... up to 14. A positive `lambda_max`
/// is used as given. Returns the last attempt if no nu_max is enough.
pub fn calculus_for_tail(
    problem: &Problem,
    sp: &Spectral,
    n: usize,
    lambda_max: f64,
    f: &[C64],
    target: f64,
) -> Result<(SpectralCalculus, TransformData)> {
    if lambda_max > 0.0 {
        let sc = calculus(problem, sp, n, lambda_max)?;
        let td = sc.analyze(f)?;
        return Ok((sc, td));
    }
    let nf = norm_c(&sp.oracle, f);
    let k = problem.spec.consts();
    let mut nu: f64 = 8.0;
    loop {
        let lm = nu.powi(4) + 2.0 * k.h_a * nu * nu + k.h_p;
        let sc = calculus(problem, sp, n, lm)?;
        let td = sc.analyze(f)?;
        if td.tail_bound <= target * nf || nu >= 14.0 {
            return Ok((sc, td));
        }
        nu += 1.0;
    }
}
