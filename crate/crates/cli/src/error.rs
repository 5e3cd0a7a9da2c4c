use std::fmt;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Category {
    Config,
    Solver,
    Sizing,
    Io,
}

impl Category {
    pub fn exit_code(self) -> u8 {
        match self {
            Category::Config => 2,
            Category::Solver => 3,
            Category::Sizing => 4,
            Category::Io => 5,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            Category::Config => "config",
            Category::Solver => "solver",
            Category::Sizing => "sizing",
            Category::Io => "io",
        }
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct CliError {
    pub category: Category,
    pub message: String,
}

impl CliError {
    pub fn new(category: Category, message: impl Into<String>) -> Self {
        Self {
            category,
            message: message.into(),
        }
    }

    pub fn config(message: impl Into<String>) -> Self {
        Self::new(Category::Config, message)
    }

    pub fn io(message: impl Into<String>) -> Self {
        Self::new(Category::Io, message)
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        // Single line, whatever the message contains.
        let flat = self
            .message
            .split_whitespace()
            .collect::<Vec<_>>()
            .join(" ");
        write!(f, "error[{}]: {flat}", self.category.as_str())
    }
}

impl std::error::Error for CliError {}

impl From<gpiodac::Error> for CliError {
    fn from(e: gpiodac::Error) -> Self {
        use gpiodac::Error as E;
        let category = match &e {
            E::Domain(_) | E::Precondition(_) | E::Hdl(_) => Category::Config,
            E::NoConduction { .. }
            | E::NoConvergence { .. }
            | E::ZeroSpan
            | E::Transient { .. } => Category::Solver,
            E::Infeasible { .. } | E::Extraction(_) => Category::Sizing,
        };
        Self::new(category, e.to_string())
    }
}
