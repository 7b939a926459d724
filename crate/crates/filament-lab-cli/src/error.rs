use filament_lab::backlund::BacklundError;
use filament_lab::flows::FlowsError;
use filament_lab::frames::FramesError;
use filament_lab::hierarchy::HierarchyError;
use filament_lab::io::IoError;
use thiserror::Error;

/// Failure of one command, carrying its process exit code.
#[derive(Debug, Error)]
pub enum CliError {
    #[error("verification failed: {0}")]
    Verify(String),
    #[error("config rejected: {0}")]
    Schema(String),
    #[error("gate '{gate}' failed: {detail}")]
    Gate { gate: String, detail: String },
    #[error("unreadable input: {0}")]
    Input(String),
    #[error("cannot write output: {0}")]
    Output(String),
}

impl CliError {
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Verify(_) => 1,
            CliError::Schema(_) => 2,
            CliError::Gate { .. } | CliError::Output(_) => 3,
            CliError::Input(_) => 4,
        }
    }

    pub fn output(e: impl std::fmt::Display) -> Self {
        CliError::Output(e.to_string())
    }

    pub fn gate(gate: &str, detail: impl Into<String>) -> Self {
        CliError::Gate { gate: gate.into(), detail: detail.into() }
    }
}

impl From<FramesError> for CliError {
    fn from(e: FramesError) -> Self {
        match e {
            FramesError::FlatnessTooLarge { .. } => CliError::gate("flatness", e.to_string()),
            FramesError::RealityDrift { .. } => CliError::gate("reality", e.to_string()),
            FramesError::SingularDressing { .. } | FramesError::DressingPole(_) => CliError::gate("nonsingular", e.to_string()),
            FramesError::Hierarchy(h) => h.into(),
            FramesError::WrongMetric | FramesError::MissingDerivativeChannel(_) | FramesError::NoPotential => CliError::Schema(e.to_string()),
            _ => CliError::Input(e.to_string()),
        }
    }
}

impl From<HierarchyError> for CliError {
    fn from(e: HierarchyError) -> Self {
        match e {
            HierarchyError::NonPeriodicSource { .. } => CliError::gate("periodicity", e.to_string()),
            HierarchyError::LengthMismatch { .. } => CliError::Input(e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<FlowsError> for CliError {
    fn from(e: FlowsError) -> Self {
        match e {
            FlowsError::UnstableStep { .. } => CliError::gate("stability", e.to_string()),
            FlowsError::InvalidInput(m) => CliError::Schema(m),
            FlowsError::Frames(f) => f.into(),
            FlowsError::Hierarchy(h) => h.into(),
        }
    }
}

impl From<BacklundError> for CliError {
    fn from(e: BacklundError) -> Self {
        match e {
            BacklundError::Frames(f) => f.into(),
            BacklundError::Hierarchy(h) => h.into(),
            BacklundError::VanishingY2 { .. } | BacklundError::RiccatiBlowup { .. } => CliError::gate("nonsingular", e.to_string()),
            _ => CliError::Schema(e.to_string()),
        }
    }
}

impl From<IoError> for CliError {
    fn from(e: IoError) -> Self {
        match e {
            IoError::Frames(f) => f.into(),
            IoError::Hierarchy(h) => h.into(),
            _ => CliError::Input(e.to_string()),
        }
    }
}
