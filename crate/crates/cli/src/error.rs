use anharmonic_core::Error as CoreError;

#[derive(Debug, thiserror::Error)]
pub enum CliError {
    #[error("config error: {0}")]
    Config(String),
    #[error("i/o error: {0}")]
    Io(String),
    #[error(transparent)]
    Core(#[from] CoreError),
}

impl CliError {
    /// 2 for configuration problems, 3 for numerical-validity failures,
    /// 4 for requests beyond what the engine can compute.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Config(_) | CliError::Io(_) => 2,
            CliError::Core(e) => match e {
                CoreError::InvalidArgument(_) => 2,
                CoreError::Capability(_) | CoreError::DimensionCap { .. } => 4,
                _ => 3,
            },
        }
    }
}
