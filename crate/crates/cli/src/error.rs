use std::path::{Path, PathBuf};

use thiserror::Error;

#[derive(Debug, Error)]
pub enum CliError {
    #[error(transparent)]
    Core(#[from] mdl_epi::Error),

    #[error("cannot access `{path}`: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },

    #[error("missing input `{path}`: {hint}")]
    MissingArtifact { path: PathBuf, hint: &'static str },

    #[error("configuration: {0}")]
    Config(String),

    #[error("download failed: {0}")]
    Network(String),

    #[error("checksum mismatch: expected {expected}, got {actual}")]
    Integrity { expected: String, actual: String },
}

impl CliError {
    pub fn io(path: &Path, source: std::io::Error) -> Self {
        CliError::Io {
            path: path.to_path_buf(),
            source,
        }
    }

    pub fn exit_code(&self) -> i32 {
        use mdl_epi::Error as E;
        match self {
            CliError::Core(E::CalibrationFailed(_) | E::SearchFailed(_) | E::RefinementFailed(_)) => 2,
            CliError::Core(E::Io { .. } | E::Parse { .. } | E::NotFound(_)) => 3,
            CliError::Io { .. } | CliError::MissingArtifact { .. } => 3,
            CliError::Network(_) => 4,
            CliError::Integrity { .. } => 5,
            CliError::Core(_) | CliError::Config(_) => 1,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exit_codes() {
        assert_eq!(CliError::from(mdl_epi::Error::CalibrationFailed("x".into())).exit_code(), 2);
        assert_eq!(CliError::from(mdl_epi::Error::SearchFailed("x".into())).exit_code(), 2);
        let io = std::io::Error::new(std::io::ErrorKind::NotFound, "gone");
        assert_eq!(CliError::io(Path::new("a"), io).exit_code(), 3);
        assert_eq!(CliError::Network("x".into()).exit_code(), 4);
        let e = CliError::Integrity {
            expected: "a".into(),
            actual: "b".into(),
        };
        assert_eq!(e.exit_code(), 5);
        assert_eq!(CliError::Config("x".into()).exit_code(), 1);
        assert_eq!(CliError::from(mdl_epi::Error::UnsupportedModel("saphire".into())).exit_code(), 1);
    }
}
