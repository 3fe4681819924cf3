use std::fmt;

/// Broad failure class; each maps to its own exit code.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    MissingInput,
    Input,
    Module,
    Output,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Self::Config => 2,
            Self::MissingInput => 3,
            Self::Input => 4,
            Self::Module => 5,
            Self::Output => 6,
        }
    }

    fn label(self) -> &'static str {
        match self {
            Self::Config => "config",
            Self::MissingInput => "missing input",
            Self::Input => "invalid input",
            Self::Module => "stage failure",
            Self::Output => "output",
        }
    }
}

#[derive(Debug)]
pub struct CliError {
    pub stage: String,
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(stage: &str, category: Category, message: impl fmt::Display) -> Self {
        Self {
            stage: stage.to_string(),
            category,
            message: message.to_string(),
        }
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "{}: {}: {}", self.stage, self.category.label(), self.message)
    }
}

impl std::error::Error for CliError {}

pub type CliResult<T> = Result<T, CliError>;
