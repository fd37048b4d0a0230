use std::path::PathBuf;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error("{}: {source}", path.display())]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("{}:{line}: {msg}", path.display())]
    Parse { path: PathBuf, line: u64, msg: String },

    #[error("{}: {msg}", path.display())]
    Format { path: PathBuf, msg: String },

    #[error("{module}: {source}")]
    Core {
        module: &'static str,
        #[source]
        source: tubo_core::Error,
    },

    #[error("artifacts in {} were trained under config hash {expected}, current config hashes to {found}; retrain first", dir.display())]
    HashMismatch { dir: PathBuf, expected: String, found: String },

    #[error("self-check failed: {0}")]
    SelfCheck(String),

    #[error("{0}")]
    Usage(String),
}

impl Error {
    pub fn io(path: impl Into<PathBuf>) -> impl FnOnce(std::io::Error) -> Error {
        let path = path.into();
        move |source| Error::Io { path, source }
    }

    pub fn format(path: impl Into<PathBuf>, msg: impl std::fmt::Display) -> Error {
        Error::Format { path: path.into(), msg: msg.to_string() }
    }
}

/// Attribute a core error to the module that raised it.
pub trait InModule<T> {
    fn in_module(self, module: &'static str) -> Result<T>;
}

impl<T> InModule<T> for tubo_core::Result<T> {
    fn in_module(self, module: &'static str) -> Result<T> {
        self.map_err(|source| Error::Core { module, source })
    }
}
