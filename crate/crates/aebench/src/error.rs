use std::path::PathBuf;

/// Errors raised while reading or writing sequence artifacts.
#[derive(Debug, thiserror::Error)]
pub enum FormatError {
    #[error("missing file: {}", .0.display())]
    MissingFile(PathBuf),
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
    #[error("{}: malformed CSV{}: {message}", path.display(), line.map(|l| format!(" at line {l}")).unwrap_or_default())]
    MalformedCsv {
        path: PathBuf,
        line: Option<u64>,
        message: String,
    },
    #[error("{}: bad PGM: {message}", path.display())]
    Pgm { path: PathBuf, message: String },
    #[error("{}: pixel value {value} exceeds 4095", path.display())]
    DnOutOfRange { path: PathBuf, value: u16 },
    #[error("{}: invalid response curve: {message}", path.display())]
    InvalidCurve { path: PathBuf, message: String },
    #[error("{}: bad trajectory at line {line}: {message}", path.display())]
    Trajectory {
        path: PathBuf,
        line: usize,
        message: String,
    },
    #[error("{}: {message}", path.display())]
    Manifest { path: PathBuf, message: String },
    #[error(transparent)]
    Core(#[from] aebench_core::Error),
}

pub type FormatResult<T> = std::result::Result<T, FormatError>;

pub(crate) fn io_error(path: &std::path::Path, source: std::io::Error) -> FormatError {
    if source.kind() == std::io::ErrorKind::NotFound {
        FormatError::MissingFile(path.to_path_buf())
    } else {
        FormatError::Io {
            path: path.to_path_buf(),
            source,
        }
    }
}
