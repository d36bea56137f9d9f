use std::io;
use std::path::Path;

use crate::encoder::EncoderError;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("configuration error: {0}")]
    Config(String),

    #[error("missing column {0:?}")]
    MissingColumn(String),

    #[error("data error: {0}")]
    Data(String),

    #[error(transparent)]
    Encoder(#[from] EncoderError),

    #[error(transparent)]
    Core(#[from] factify_core::Error),

    #[error("{context}: {source}")]
    Io {
        context: String,
        #[source]
        source: io::Error,
    },

    #[error("{0}")]
    Runtime(String),
}

impl Error {
    pub fn io(path: &Path, source: io::Error) -> Self {
        Error::Io {
            context: path.display().to_string(),
            source,
        }
    }

    /// CLI exit status: 1 configuration, 2 data, 3 runtime.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Config(_) => 1,
            Error::Encoder(EncoderError::UnknownBackend(_)) => 1,
            Error::Core(factify_core::Error::InvalidConfig(_)) => 1,
            Error::MissingColumn(_) | Error::Data(_) | Error::Io { .. } => 2,
            Error::Encoder(_) | Error::Core(_) | Error::Runtime(_) => 3,
        }
    }
}

pub type Result<T, E = Error> = std::result::Result<T, E>;

pub(crate) trait IoContext<T> {
    fn at(self, path: &Path) -> Result<T>;
}

impl<T> IoContext<T> for io::Result<T> {
    fn at(self, path: &Path) -> Result<T> {
        self.map_err(|e| Error::io(path, e))
    }
}
