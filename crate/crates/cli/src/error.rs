use serde::Serialize;

#[derive(Debug)]
pub enum CliError {
    /// Invalid flag combination.
    Usage(String),
    Core(ldperc_core::Error),
    Io(std::io::Error),
}

impl From<ldperc_core::Error> for CliError {
    fn from(e: ldperc_core::Error) -> Self {
        CliError::Core(e)
    }
}

impl From<std::io::Error> for CliError {
    fn from(e: std::io::Error) -> Self {
        CliError::Io(e)
    }
}

#[derive(Serialize)]
struct ErrorRecord<'a> {
    error: &'a str,
    kind: &'a str,
    message: String,
}

impl CliError {
    /// 1 for usage and parameter errors, 2 for numerical or I/O failures.
    pub fn exit_code(&self) -> i32 {
        match self {
            CliError::Usage(_) => 1,
            CliError::Core(e) if e.is_parameter() => 1,
            CliError::Core(_) | CliError::Io(_) => 2,
        }
    }

    /// One-line JSON record for standard error.
    pub fn record(&self) -> String {
        let (error, kind, message) = match self {
            CliError::Usage(m) => ("usage", "usage", m.clone()),
            CliError::Core(e) => (
                if e.is_parameter() { "parameter" } else { "numerical" },
                match e {
                    ldperc_core::Error::Parameter(_) => "parameter",
                    ldperc_core::Error::Convergence { .. } => "convergence",
                    ldperc_core::Error::Quadrature(_) => "quadrature",
                    ldperc_core::Error::Domain(_) => "domain",
                    ldperc_core::Error::Invariant(_) => "invariant",
                },
                e.to_string(),
            ),
            CliError::Io(e) => ("io", "io", e.to_string()),
        };
        serde_json::to_string(&ErrorRecord { error, kind, message }).expect("error record serializes")
    }
}
