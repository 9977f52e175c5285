use thiserror::Error;
use wgmopo_core::coincidence::SimError;
use wgmopo_core::correlations::CorrelationError;
use wgmopo_core::data::DataError;
use wgmopo_core::evanescent::TuningError;
use wgmopo_core::material::MaterialError;
use wgmopo_core::phase_matching::PhaseMatchError;
use wgmopo_core::spectrum::SpectrumError;
use wgmopo_core::vapor::VaporError;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("{0}")]
    Usage(String),

    #[error("scenario: {0}")]
    Scenario(String),

    #[error("io error on {path}: {source}")]
    Io { path: String, source: std::io::Error },

    #[error(transparent)]
    Data(#[from] DataError),
    #[error(transparent)]
    Material(#[from] MaterialError),
    #[error(transparent)]
    Spectrum(#[from] SpectrumError),
    #[error(transparent)]
    PhaseMatch(#[from] PhaseMatchError),
    #[error(transparent)]
    Tuning(#[from] TuningError),
    #[error(transparent)]
    Vapor(#[from] VaporError),
    #[error(transparent)]
    Correlation(#[from] CorrelationError),
    #[error(transparent)]
    Simulation(#[from] SimError),
}

impl CliError {
    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Usage(_) => "usage",
            CliError::Scenario(_) => "scenario",
            CliError::Io { .. } => "io",
            CliError::Data(_) | CliError::Material(_) => "data",
            CliError::Spectrum(_) => "spectrum",
            CliError::PhaseMatch(_) => "phase_matching",
            CliError::Tuning(_) => "tuning",
            CliError::Vapor(_) => "vapor",
            CliError::Correlation(_) => "fit",
            CliError::Simulation(_) => "simulation",
        }
    }

    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 2,
            _ => 1,
        }
    }
}

pub type Result<T> = std::result::Result<T, CliError>;
