use alloc::string::String;

/// Errors raised across the numerical core.
///
/// Each variant carries a human readable message naming the offending
/// shapes or values.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("dimension error: {0}")]
    Dimension(String),
    #[error("configuration error: {0}")]
    Config(String),
    #[error("data error: {0}")]
    Data(String),
    #[error("label error: {0}")]
    Label(String),
    #[error("degenerate batch: {0}")]
    DegenerateBatch(String),
    #[error("degenerate labels: {0}")]
    DegenerateLabels(String),
    #[error("contract error: {0}")]
    Contract(String),
    #[error("divergence: {0}")]
    Divergence(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;

macro_rules! bail {
    ($kind:ident, $($arg:tt)*) => {
        return Err($crate::error::Error::$kind(alloc::format!($($arg)*)))
    };
}
pub(crate) use bail;
