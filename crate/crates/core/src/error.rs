use thiserror::Error;

use crate::flops::Step;

pub type Result<T> = std::result::Result<T, Error>;

#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid degree {degree}: {reason}")]
    InvalidDegree { degree: i64, reason: &'static str },

    #[error("malformed velocity pair: vx has degree {vx}, vy has degree {vy}")]
    VelocityDegreeMismatch { vx: i64, vy: i64 },

    #[error("invalid acoustic parameters: {0}")]
    InvalidParams(String),

    #[error("invalid coefficient provider: {0}")]
    InvalidProvider(String),

    #[error("invalid mesh: {0}")]
    InvalidMesh(String),

    #[error("init vector has {found} slots, expected {expected}")]
    InitLength { expected: usize, found: usize },

    #[error("kernel of {operator} at degree {degree} has dimension {found}, expected {expected}")]
    RankDeficiency {
        operator: &'static str,
        degree: usize,
        expected: usize,
        found: usize,
    },

    #[error("Taylor coefficient matrix is numerically rank deficient: sigma_min = {sigma_min:e}, sigma_max = {sigma_max:e}")]
    Conditioning { sigma_min: f64, sigma_max: f64 },

    #[error("flop count mismatch in {step:?}: expected {expected}, measured {measured}")]
    FlopMismatch {
        step: Step,
        expected: u64,
        measured: u64,
    },

    #[error("element {index}: {source}")]
    Element {
        index: usize,
        #[source]
        source: Box<Error>,
    },

    #[error("unknown {what} '{name}'")]
    Unknown { what: &'static str, name: String },

    #[error(transparent)]
    Json(#[from] serde_json::Error),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

impl Error {
    pub fn at_element(self, index: usize) -> Error {
        Error::Element {
            index,
            source: Box::new(self),
        }
    }
}
