use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    /// Syntax or type error; the message carries the line and column.
    #[error("config parse error: {0}")]
    Parse(String),

    #[error("config field `{field}`: {message}")]
    Field { field: String, message: String },

    #[error("{context}: {source}")]
    Build {
        context: String,
        #[source]
        source: lipgeom::Error,
    },

    #[error("io error on {path}: {message}")]
    Io { path: String, message: String },

    #[error("report parse error: {0}")]
    Report(String),

    #[error("unsupported report schema version {found} (this tool reads {supported}.x)")]
    SchemaVersion { found: String, supported: u64 },
}

impl CliError {
    pub fn field(field: impl Into<String>, message: impl Into<String>) -> Self {
        CliError::Field {
            field: field.into(),
            message: message.into(),
        }
    }

    pub fn build(context: impl Into<String>, source: lipgeom::Error) -> Self {
        CliError::Build {
            context: context.into(),
            source,
        }
    }
}
