use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid parameter axis `{axis}`: {reason}")]
    InvalidAxis { axis: String, reason: String },

    #[error("parameter `{axis}` = {value} outside [{lo}, {hi}]")]
    OutOfRange {
        axis: String,
        value: f64,
        lo: f64,
        hi: f64,
    },

    #[error("missing value for parameter axis `{0}`")]
    MissingAxis(String),

    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("singular element Jacobian on element {element}")]
    SingularJacobian { element: usize },

    #[error("singular matrix: zero pivot at row {row}")]
    SingularMatrix { row: usize },

    #[error("singular collocation point: axis {axis}, node {node}")]
    SingularCollocation { axis: usize, node: usize },

    #[error("configuration error: {0}")]
    Config(String),

    #[error("subproblem `{id}` failed: {source}")]
    Subproblem {
        id: String,
        #[source]
        source: Box<Error>,
    },

    #[error("Krylov solver did not converge: {0}")]
    NotConverged(String),

    #[error("corrupt surrogate container: {0}")]
    Container(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Toml(#[from] toml::de::Error),
}

pub type Result<T> = std::result::Result<T, Error>;
