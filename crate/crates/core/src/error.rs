use thiserror::Error;

pub type Result<T> = std::result::Result<T, ShapleyError>;

#[derive(Debug, Error)]
pub enum ShapleyError {
    #[error("oracle returned non-finite value {value} for coalition {coalition}")]
    NonFinite { coalition: String, value: f64 },

    #[error("player {player} is out of range for a game with {n} players")]
    PlayerOutOfRange { player: usize, n: usize },

    #[error("player {player} is already a member of coalition {coalition}")]
    PlayerInCoalition { player: usize, coalition: String },

    #[error("coalition sized for {found} players used with a game of {expected} players")]
    SizeMismatch { expected: usize, found: usize },

    #[error("invalid value for `{key}`: {reason}")]
    InvalidConfig { key: String, reason: String },

    #[error("{what} refused: {n} players exceeds the cap of {cap}")]
    TooManyPlayers { what: &'static str, n: usize, cap: usize },

    #[error("method `{method}` is not applicable to this game: {reason}")]
    MethodMismatch { method: String, reason: String },

    #[error("empty evaluation set: {0}")]
    EmptySet(String),

    #[error("training diverged at epoch {epoch} (loss = {loss}); try a smaller learning rate")]
    Diverged { epoch: usize, loss: f64 },

    #[error("format `{format}` version mismatch: expected {expected}, found {found}")]
    VersionMismatch {
        format: String,
        expected: u32,
        found: u32,
    },

    #[error("corrupt checkpoint {path}: {reason}")]
    CorruptCheckpoint { path: String, reason: String },

    #[error("cannot construct game: {0}")]
    Game(String),

    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },

    #[error("{path}: {source}")]
    Json {
        path: String,
        #[source]
        source: serde_json::Error,
    },

    #[error("{path}: {source}")]
    Csv {
        path: String,
        #[source]
        source: csv::Error,
    },

    #[error("worker failed: {0}")]
    Worker(String),
}

impl ShapleyError {
    pub fn invalid(key: impl Into<String>, reason: impl Into<String>) -> Self {
        ShapleyError::InvalidConfig {
            key: key.into(),
            reason: reason.into(),
        }
    }

    pub fn io(path: impl AsRef<std::path::Path>, source: std::io::Error) -> Self {
        ShapleyError::Io {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    pub fn json(path: impl AsRef<std::path::Path>, source: serde_json::Error) -> Self {
        ShapleyError::Json {
            path: path.as_ref().display().to_string(),
            source,
        }
    }

    /// True for failures caused by bad user input rather than the environment.
    pub fn is_validation(&self) -> bool {
        matches!(
            self,
            ShapleyError::InvalidConfig { .. }
                | ShapleyError::TooManyPlayers { .. }
                | ShapleyError::MethodMismatch { .. }
                | ShapleyError::PlayerOutOfRange { .. }
                | ShapleyError::PlayerInCoalition { .. }
                | ShapleyError::SizeMismatch { .. }
                | ShapleyError::VersionMismatch { .. }
                | ShapleyError::Game(_)
        )
    }
}
