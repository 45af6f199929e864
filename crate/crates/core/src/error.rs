use num_complex::Complex64;
use thiserror::Error;

#[derive(Debug, Error)]
pub enum SpecError {
    #[error("invalid spec: {0}")]
    InvalidSpec(String),
    #[error("D2 is not positive definite on the grid: smallest eigenvalue {min_eig:.6e}")]
    NonPositiveD2 { min_eig: f64 },
    #[error("invalid grid: {0}")]
    InvalidGrid(String),
    #[error("argument outside domain: {0}")]
    DomainError(String),
    #[error("degenerate roots at z = {z}")]
    DegenerateRoots { z: Complex64 },
    #[error("complex ordering requested for real z = {z}; use the real-axis regime")]
    DegenerateOrdering { z: Complex64 },
    #[error("Vandermonde matrix singular: minimal root gap {gap:.3e}")]
    SingularPi { gap: f64 },
    #[error("Picard iteration does not contract at lambda = {lambda}: ratio {ratio:.3}")]
    NoContraction { lambda: f64, ratio: f64 },
    #[error("perturbation tail beyond X too large: bound {bound:.3e}")]
    TailTooFat { bound: f64 },
    #[error("ODE step size underflow near x = {x}")]
    StepSizeUnderflow { x: f64 },
    #[error("ODE integration failed: {0}")]
    OdeFailure(String),
    #[error("connection system ill conditioned: cond {cond:.3e}")]
    IllConditioned { cond: f64 },
    #[error("|W| = {w:.3e} below floor {floor:.3e}")]
    NearSingularW { w: f64, floor: f64 },
    #[error("lambda = {lambda} is not in M_n")]
    ExcludedLambda { lambda: f64 },
    #[error("jump kernel rank deficient at lambda = {lambda}: sigma ratio {ratio:.3e}")]
    RankDeficient { lambda: f64, ratio: f64 },
    #[error("bounded solution has growing component {coeff:.3e} at lambda = {lambda}")]
    UnboundedComponent { lambda: f64, coeff: f64 },
    #[error("eigenvalue multiplicity ambiguous near {lambda}")]
    MultiplicityAmbiguous { lambda: f64 },
    #[error("eigen decomposition failed: {0}")]
    EigFailure(String),
    #[error("z = {z} within {dist:.3e} of the grid spectrum")]
    NearSpectrum { z: Complex64, dist: f64 },
    #[error("interval endpoint {endpoint} lies on the grid spectrum")]
    EndpointOnSpectrum { endpoint: f64 },
    #[error("W sweep too coarse: relative change {change:.3} between samples near {lambda}")]
    SweepTooCoarse { lambda: f64, change: f64 },
    #[error("input function not small at the domain edge: |f(+-X)| = {edge:.3e}")]
    DomainTruncation { edge: f64 },
    #[error("io: {0}")]
    Io(#[from] std::io::Error),
    #[error("{0}")]
    Output(String),
}

impl SpecError {
    /// Process exit code used by the CLI: 2 for bad input or violated
    /// hypotheses, 3 for numerical failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            SpecError::InvalidSpec(_)
            | SpecError::NonPositiveD2 { .. }
            | SpecError::InvalidGrid(_)
            | SpecError::DomainTruncation { .. } => 2,
            _ => 3,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            SpecError::InvalidSpec(_) => "InvalidSpec",
            SpecError::NonPositiveD2 { .. } => "NonPositiveD2",
            SpecError::InvalidGrid(_) => "InvalidGrid",
            SpecError::DomainError(_) => "DomainError",
            SpecError::DegenerateRoots { .. } => "DegenerateRoots",
            SpecError::DegenerateOrdering { .. } => "DegenerateOrdering",
            SpecError::SingularPi { .. } => "SingularPi",
            SpecError::NoContraction { .. } => "NoContraction",
            SpecError::TailTooFat { .. } => "TailTooFat",
            SpecError::StepSizeUnderflow { .. } => "StepSizeUnderflow",
            SpecError::OdeFailure(_) => "OdeFailure",
            SpecError::IllConditioned { .. } => "IllConditioned",
            SpecError::NearSingularW { .. } => "NearSingularW",
            SpecError::ExcludedLambda { .. } => "ExcludedLambda",
            SpecError::RankDeficient { .. } => "RankDeficient",
            SpecError::UnboundedComponent { .. } => "UnboundedComponent",
            SpecError::MultiplicityAmbiguous { .. } => "MultiplicityAmbiguous",
            SpecError::EigFailure(_) => "EigFailure",
            SpecError::NearSpectrum { .. } => "NearSpectrum",
            SpecError::EndpointOnSpectrum { .. } => "EndpointOnSpectrum",
            SpecError::SweepTooCoarse { .. } => "SweepTooCoarse",
            SpecError::DomainTruncation { .. } => "DomainTruncation",
            SpecError::Io(_) => "Io",
            SpecError::Output(_) => "Output",
        }
    }
}

pub type Result<T> = std::result::Result<T, SpecError>;
