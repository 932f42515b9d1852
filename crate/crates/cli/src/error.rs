use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Kind {
    /// Missing or malformed input or configuration; exit code 2.
    Input,
    /// A stage ran and failed; exit code 1.
    Stage,
}

#[derive(Debug)]
pub struct CliError {
    pub kind: Kind,
    pub stage: &'static str,
    pub message: String,
}

impl CliError {
    pub fn input(stage: &'static str, message: impl fmt::Display) -> Self {
        Self { kind: Kind::Input, stage, message: message.to_string() }
    }

    pub fn stage(stage: &'static str, message: impl fmt::Display) -> Self {
        Self { kind: Kind::Stage, stage, message: message.to_string() }
    }

    pub fn exit_code(&self) -> i32 {
        match self.kind {
            Kind::Input => 2,
            Kind::Stage => 1,
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}", self.stage, self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
