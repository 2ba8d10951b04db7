use std::path::PathBuf;

use thiserror::Error;

/// Errors raised anywhere in the detection pipeline.
#[derive(Debug, Error)]
pub enum Error {
    #[error("node `{node}` has fewer than 2 observed training points")]
    DegenerateNode { node: String },

    #[error("invalid split: {0}")]
    Split(String),

    #[error("shape mismatch: {0}")]
    Shape(String),

    #[error("invalid panel: {0}")]
    Panel(String),

    #[error("invalid graph: {0}")]
    Graph(String),

    #[error("non-finite value at time step {step}")]
    NonFinite { step: usize },

    #[error("training diverged at epoch {epoch} (loss {loss})")]
    Divergence { epoch: usize, loss: f64 },

    #[error("degree-preserving rewiring requires an undirected graph")]
    UnsupportedAblation,

    #[error("{file}: {msg}")]
    Format { file: String, msg: String },

    #[error("unknown node id `{0}`")]
    UnknownNode(String),

    #[error("infeasible injection: {0}")]
    Infeasible(String),

    #[error("synthetic generation failed: {0}")]
    Generation(String),

    #[error("coverage mismatch: {0}")]
    Coverage(String),

    #[error("empty validation residuals for node `{0}`")]
    EmptyValidation(String),

    #[error("forecasts carry no interval half-widths")]
    MissingHalfWidths,

    #[error("invalid config: {0}")]
    Config(String),

    #[error("invalid checkpoint: {0}")]
    Checkpoint(String),

    #[error("{model}: {source}")]
    Model {
        model: String,
        #[source]
        source: Box<Error>,
    },

    #[error("io error on {path}: {source}")]
    Io {
        path: PathBuf,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;

impl Error {
    pub(crate) fn io(path: impl Into<PathBuf>, source: std::io::Error) -> Self {
        Error::Io {
            path: path.into(),
            source,
        }
    }

    pub(crate) fn format(file: impl Into<String>, msg: impl Into<String>) -> Self {
        Error::Format {
            file: file.into(),
            msg: msg.into(),
        }
    }

    /// Wraps an error with the name of the model that produced it.
    /// Stable kebab-case tag for machine-readable error lines.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::DegenerateNode { .. } => "degenerate-node",
            Error::Split(_) => "split",
            Error::Shape(_) => "shape",
            Error::Panel(_) => "panel",
            Error::Graph(_) => "graph",
            Error::NonFinite { .. } => "non-finite",
            Error::Divergence { .. } => "divergence",
            Error::UnsupportedAblation => "unsupported-ablation",
            Error::Format { .. } => "format",
            Error::UnknownNode(_) => "unknown-node",
            Error::Infeasible(_) => "infeasible",
            Error::Generation(_) => "generation",
            Error::Coverage(_) => "coverage",
            Error::EmptyValidation(_) => "empty-validation",
            Error::MissingHalfWidths => "missing-half-widths",
            Error::Config(_) => "config",
            Error::Checkpoint(_) => "checkpoint",
            Error::Model { source, .. } => source.kind(),
            Error::Io { .. } => "io",
        }
    }

    pub fn in_model(self, model: &str) -> Self {
        Error::Model {
            model: model.to_string(),
            source: Box::new(self),
        }
    }
}
