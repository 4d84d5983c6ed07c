use thiserror::Error;

/// Errors shared by every module of the library.
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    InvalidInput(String),

    #[error("dimension error: {0}")]
    Dimension(String),

    #[error("domain error: {0}")]
    Domain(String),

    /// A zero was detected on (or too close to) an integration boundary
    /// circle; the caller should perturb the radii and retry.
    #[error("boundary-degenerate: zero of modulus {modulus:.3e} detected on the circle of radius {radius}")]
    BoundaryDegenerate { radius: f64, modulus: f64 },

    #[error("transversality violation: {0}")]
    TransversalityViolation(String),

    /// Evaluation of a weighted-hopping cocycle at a phase where det W vanishes.
    #[error("singular phase: det W vanishes at z = {re}+{im}i (|det| = {modulus:.3e})")]
    SingularPhase { re: f64, im: f64, modulus: f64 },

    #[error("precondition failed: {0}")]
    Precondition(String),

    #[error("compound dimension overflow: C({m},{k}) = {dim} exceeds the limit {limit}")]
    CompoundOverflow {
        m: usize,
        k: usize,
        dim: usize,
        limit: usize,
    },

    /// No circle avoiding every zero cluster was found; this signals an
    /// upstream root-finding failure since exact counts always leave room.
    #[error("no qualifying circle found in the sub-annulus [{inner}, {outer}]")]
    NoGoodCircle { inner: f64, outer: f64 },
}

pub type Result<T> = std::result::Result<T, Error>;
