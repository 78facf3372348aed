//! Error type shared by all modules.

/// Errors raised by the library.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    /// A matrix expected to be symmetric positive definite is not.
    #[error("matrix is not symmetric positive definite: {0}")]
    NotSpd(String),

    /// A point lies outside the metric's domain (or too close to the
    /// boundary for the finite-difference stencil of a sampled metric).
    #[error("point ({x1}, {x2}) is outside the admissible domain")]
    OutOfDomain { x1: f64, x2: f64 },

    /// Field data does not match the mesh or grid it is paired with.
    #[error("mesh mismatch: {0}")]
    MeshMismatch(String),

    /// Too many cells of an immersion have a vanishing tangent cross
    /// product, so the normal field is not usable.
    #[error("degenerate immersion: {degenerate} of {cells} cells have |∂1y×∂2y| below threshold")]
    DegenerateImmersion { degenerate: usize, cells: usize },

    /// A classifier or fit was asked to run on fewer rows than it needs.
    #[error("too few rows: need at least {needed}, got {got}")]
    TooFewRows { needed: usize, got: usize },

    /// A plot or study was requested for an empty result set.
    #[error("empty result")]
    EmptyResult,

    /// Malformed configuration or input file.
    #[error("invalid input: {0}")]
    Parse(String),

    #[error(transparent)]
    Io(#[from] std::io::Error),
}

/// Library-wide result alias.
pub type Result<V> = std::result::Result<V, Error>;
