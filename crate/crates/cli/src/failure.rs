use covshift_core::{Error, Violation};

/// Longest row-level violation list printed before truncating.
const MAX_LISTED_VIOLATIONS: usize = 50;

#[derive(Debug)]
pub enum CliError {
    Usage(String),
    Core(Error),
}

impl From<Error> for CliError {
    fn from(e: Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Core(Error::Io(e))
    }
}

impl CliError {
    pub fn exit_code(&self) -> u8 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_numerical() => 3,
            CliError::Core(Error::InvalidArgument(_) | Error::InvalidStrategy(_) | Error::Io(_)) => 1,
            CliError::Core(Error::NuisanceMissing(_)) => 3,
            CliError::Core(_) => 2,
        }
    }

    pub fn report(&self) {
        match self {
            CliError::Usage(msg) => eprintln!("error: {msg}"),
            CliError::Core(Error::Validation(v)) => print_violations(v),
            CliError::Core(e) => eprintln!("error: {e}"),
        }
    }
}

fn print_violations(violations: &[Violation]) {
    eprintln!("error: dataset failed validation with {} violation(s)", violations.len());
    for v in violations.iter().take(MAX_LISTED_VIOLATIONS) {
        eprintln!("  {v}");
    }
    if violations.len() > MAX_LISTED_VIOLATIONS {
        eprintln!("  ... and {} more", violations.len() - MAX_LISTED_VIOLATIONS);
    }
}
