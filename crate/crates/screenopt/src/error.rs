//! Crate-wide error type.

use thiserror::Error;

#[derive(Debug, Error)]
pub enum Error {
    #[error("dimension mismatch: {context}")]
    DimensionMismatch { context: String },

    #[error("empty matrix")]
    EmptyMatrix,

    #[error("non-finite entries in input")]
    NonFiniteInput,

    #[error("probability {0} outside (0, 1)")]
    InvalidProbability(f64),

    #[error("invalid degrees of freedom: {0}")]
    InvalidDegreesOfFreedom(usize),

    #[error("X1'X1 is singular; the main-effect model is not estimable")]
    SingularX1,

    #[error("no error degrees of freedom (g = 0); the criterion/analysis is undefined")]
    NoErrorDf,

    #[error("no conference matrix of order {order} in the catalog (available: {available:?})")]
    UnsupportedConferenceOrder { order: usize, available: Vec<usize> },

    #[error("invalid design: {0}")]
    InvalidDesign(String),

    #[error("invalid model specification: {0}")]
    InvalidModelSpec(String),

    #[error("csv error in {path}: {message}")]
    Csv { path: String, message: String },

    #[error(
        "no design meets the ECI threshold S = {threshold}; \
         re-evaluate with a larger alpha or a smaller tau^2"
    )]
    NoDesignMeetsThreshold { threshold: f64 },

    #[error("infeasible search configuration: {0}")]
    InfeasibleConfig(String),

    #[error("could not reach a full-rank X1 in {attempts} random starts (n too small?)")]
    RankInfeasible { attempts: usize },

    #[error("invalid scenario: {0}")]
    InvalidScenario(String),

    #[error("io error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
