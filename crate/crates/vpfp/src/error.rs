use thiserror::Error;

/// Errors raised by the library layer.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum VpfpError {
    #[error("domain error in {op}: {msg}")]
    Domain { op: &'static str, msg: String },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("blow-up at t = {t}: {reason}")]
    BlowUp { t: f64, reason: String },

    #[error("invalid fit: {0}")]
    InvalidFit(String),

    #[error("consistency error: {0}")]
    Consistency(String),

    #[error("i/o error: {0}")]
    Io(String),

    #[error("malformed snapshot: {0}")]
    Format(String),
}

impl VpfpError {
    pub(crate) fn domain(op: &'static str, msg: impl Into<String>) -> Self {
        VpfpError::Domain {
            op,
            msg: msg.into(),
        }
    }
}

impl From<std::io::Error> for VpfpError {
    fn from(e: std::io::Error) -> Self {
        VpfpError::Io(e.to_string())
    }
}


impl From<serde_json::Error> for VpfpError {
    fn from(e: serde_json::Error) -> Self {
        VpfpError::Io(e.to_string())
    }
}

pub type Result<T> = std::result::Result<T, VpfpError>;
