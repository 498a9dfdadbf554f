use swirl_core::analysis::AnalysisError;
use swirl_core::degiorgi::DeGiorgiError;
use swirl_core::fields::FieldError;
use swirl_core::geometry::GeometryError;
use swirl_core::norms::NormError;
use thiserror::Error;

pub const EXIT_VALIDATION: i32 = 1;
pub const EXIT_NUMERICAL: i32 = 2;
pub const EXIT_USAGE: i32 = 64;

#[derive(Debug, Error)]
pub enum CliError {
    #[error("invalid config: {0}")]
    Config(String),
    #[error("validation failed: {0}")]
    Validation(String),
    #[error("numerical failure: {0}")]
    Numerical(String),
    #[error("cannot write {path}: {source}")]
    Output { path: String, source: std::io::Error },
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Validation(_) | CliError::Output { .. } => EXIT_VALIDATION,
            CliError::Numerical(_) => EXIT_NUMERICAL,
        }
    }
}

fn numerical(e: impl ToString) -> CliError {
    CliError::Numerical(e.to_string())
}

fn validation(e: impl ToString) -> CliError {
    CliError::Validation(e.to_string())
}

impl From<GeometryError> for CliError {
    fn from(e: GeometryError) -> Self {
        match e {
            GeometryError::StepUnderflow
            | GeometryError::ZeroVelocity
            | GeometryError::DegenerateSection
            | GeometryError::NoCrossing(_) => numerical(e),
            GeometryError::ZeroVelocityAtStart | GeometryError::OnAxis | GeometryError::InvalidArgument(_) => {
                validation(e)
            }
        }
    }
}

impl From<FieldError> for CliError {
    fn from(e: FieldError) -> Self {
        match e {
            FieldError::SingularSwirl(_) => numerical(e),
            FieldError::Geometry(g) => g.into(),
            _ => validation(e),
        }
    }
}

impl From<NormError> for CliError {
    fn from(e: NormError) -> Self {
        match e {
            NormError::NonFiniteSample { .. } => numerical(e),
            NormError::Field(f) => f.into(),
            _ => validation(e),
        }
    }
}

impl From<DeGiorgiError> for CliError {
    fn from(e: DeGiorgiError) -> Self {
        match e {
            DeGiorgiError::NonFiniteSample { .. } | DeGiorgiError::DegenerateFit(_) => numerical(e),
            _ => validation(e),
        }
    }
}

impl From<AnalysisError> for CliError {
    fn from(e: AnalysisError) -> Self {
        validation(e)
    }
}
