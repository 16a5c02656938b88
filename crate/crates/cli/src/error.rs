use std::fmt;

use serde_json::json;

/// Failure of a CLI run, classified by exit status.
#[derive(Debug, Clone, PartialEq)]
pub enum CliError {
    /// Unreadable, malformed or invalid configuration (status 2).
    Config(String),
    /// A computation failed numerically (status 3).
    Numerical(String),
    /// A bound, certificate or invariant check failed (status 4).
    Failure(String),
    /// Reports could not be written (status 1).
    Io(String),
}

impl CliError {
    pub fn status(&self) -> i32 {
        match self {
            CliError::Io(_) => 1,
            CliError::Config(_) => 2,
            CliError::Numerical(_) => 3,
            CliError::Failure(_) => 4,
        }
    }

    pub fn kind(&self) -> &'static str {
        match self {
            CliError::Io(_) => "io",
            CliError::Config(_) => "config",
            CliError::Numerical(_) => "numerical",
            CliError::Failure(_) => "failure",
        }
    }

    fn message(&self) -> &str {
        match self {
            CliError::Io(m) | CliError::Config(m) | CliError::Numerical(m) | CliError::Failure(m) => m,
        }
    }

    /// One-line JSON error record.
    pub fn record(&self) -> String {
        json!({
            "error": {
                "kind": self.kind(),
                "status": self.status(),
                "message": self.message(),
            }
        })
        .to_string()
    }
}

impl fmt::Display for CliError {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.message())
    }
}

impl std::error::Error for CliError {}

impl From<kmfl::Error> for CliError {
    fn from(e: kmfl::Error) -> Self {
        use kmfl::Error as E;
        let msg = e.to_string();
        match e {
            // every parameter, point and input originates in the config
            E::Domain { .. } | E::Dimension { .. } | E::Parameter { .. } | E::Input { .. } => {
                CliError::Config(msg)
            }
            E::Numerical(_) | E::Size { .. } | E::Estimation(_) => CliError::Numerical(msg),
            E::Invariant(_) | E::Certificate(_) => CliError::Failure(msg),
        }
    }
}
