use alloc::string::String;

use crate::geometry::Plane;

/// Errors raised by the positioning pipeline.
#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    /// The sweep model is undefined at this position: the sensor is on the
    /// drum axis or the arcsine argument leaves [-1, 1].
    #[error("sweep angle undefined at this position ({0})")]
    Domain(&'static str),
    #[error("sweep planes are parallel, no ray can be formed")]
    DegenerateRay,
    #[error("rotation matrix is not orthonormal with determinant +1")]
    NotOrthonormal,
    #[error("sensor offsets must be centred on the body origin")]
    OffCentreDeck,
    #[error("rays are parallel")]
    ParallelRays,
    #[error("epoch incomplete: sensor {sensor} lacks plane {plane:?} of station {station}")]
    IncompleteEpoch { station: u8, sensor: u8, plane: Plane },
    #[error("measurement rejected: innovation {innovation} rad exceeds gate {gate} rad")]
    MeasurementRejected { innovation: f64, gate: f64 },
    #[error("clock anchors do not span a positive interval")]
    InvalidAnchors,
    #[error("point pairs are collinear or too few for a rigid fit")]
    DegenerateGeometry,
    #[error("only {pairs} valid pairs overlap with ground truth (need {needed})")]
    InsufficientOverlap { pairs: usize, needed: usize },
    #[error("need at least {needed} samples, got {got}")]
    TooFewSamples { needed: usize, got: usize },
    #[error("dataset is empty")]
    EmptyDataset,
    #[error("session lacks {0}")]
    MissingStream(&'static str),
    #[error("invalid scenario: {0}")]
    InvalidConfig(String),
}

pub type Result<T, E = Error> = core::result::Result<T, E>;
