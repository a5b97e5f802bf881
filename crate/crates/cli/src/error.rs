use std::io;
use std::path::PathBuf;

use thiserror::Error;
use tunnelgrid::case::CaseError;
use tunnelgrid::eigensolve::EigenError;
use tunnelgrid::frame::FrameError;
use tunnelgrid::grid::GridError;
use tunnelgrid::potential::PotentialError;
use tunnelgrid::presets::PresetError;
use tunnelgrid::renorm::RenormError;
use tunnelgrid::strain::StrainError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Config(String),
    #[error("cannot read {}: {source}", path.display())]
    Read { path: PathBuf, source: io::Error },
    #[error("{} exists; pass --force to overwrite", .0.display())]
    OutputExists(PathBuf),
    #[error("cannot write {}: {source}", path.display())]
    Write { path: PathBuf, source: io::Error },
    #[error(transparent)]
    Potential(#[from] PotentialError),
    #[error(transparent)]
    Grid(#[from] GridError),
    #[error(transparent)]
    Frame(#[from] FrameError),
    #[error(transparent)]
    Case(#[from] CaseError),
    #[error(transparent)]
    Renorm(#[from] RenormError),
    #[error(transparent)]
    Strain(#[from] StrainError),
    #[error("thread pool: {0}")]
    Threads(String),
}

impl From<PresetError> for CliError {
    fn from(e: PresetError) -> Self {
        match e {
            PresetError::Potential(p) => Self::Potential(p),
            PresetError::Grid(g) => Self::Grid(g),
            other => Self::Config(other.to_string()),
        }
    }
}

fn case_code(e: &CaseError) -> &'static str {
    match e {
        CaseError::Eigen(EigenError::NoConvergence { .. }) => "solver-no-convergence",
        CaseError::Eigen(_) => "solver-invalid",
        CaseError::Operator(_) => "operator-invalid",
        CaseError::Spectra(_) => "analysis-failed",
        CaseError::Potential(_) => "potential-invalid",
        CaseError::UnknownAxis(_) => "config-invalid",
    }
}

impl CliError {
    /// Stable machine-readable code printed on stderr.
    pub fn code(&self) -> &'static str {
        match self {
            Self::Config(_) => "config-invalid",
            Self::Read { .. } => "io-read",
            Self::OutputExists(_) => "output-exists",
            Self::Write { .. } => "io-write",
            Self::Potential(_) => "potential-invalid",
            Self::Grid(_) => "grid-invalid",
            Self::Frame(_) => "frame-invalid",
            Self::Case(e) => case_code(e),
            Self::Renorm(RenormError::Case(e)) => case_code(e),
            Self::Renorm(_) => "subspace-invalid",
            Self::Strain(StrainError::Case(e)) => case_code(e),
            Self::Strain(_) => "strain-invalid",
            Self::Threads(_) => "threads-invalid",
        }
    }
}
