use alloc::string::String;

pub type Result<T, E = Error> = core::result::Result<T, E>;

#[derive(Debug, Clone, PartialEq, thiserror::Error)]
pub enum Error {
    #[error("empty coefficient list")]
    EmptyCoefficients,
    #[error("polynomial degenerates to a constant after order reduction")]
    DegeneratePolynomial,
    #[error("non-finite value in {0}")]
    NonFinite(&'static str),
    #[error("basis of {rows} samples cannot hold {roots} roots")]
    UnderdeterminedBasis { rows: usize, roots: usize },
    #[error("rank-deficient Vandermonde basis (coincident roots, condition {condition:.3e})")]
    RankDeficientBasis { condition: f64 },
    #[error("window {window:?} does not fit image {image:?}")]
    WindowTooLarge {
        window: (usize, usize),
        image: (usize, usize),
    },
    #[error("dimension mismatch: {0}")]
    DimensionMismatch(String),
    #[error("singular system in {context} (condition {condition:.3e})")]
    Singular {
        context: &'static str,
        condition: f64,
    },
    #[error("order {0} must be even")]
    OddOrder(usize),
    #[error("invalid argument: {0}")]
    InvalidArgument(String),
    #[error("aliased duplicate frequency ({fx}, {fy})")]
    AliasedFrequency { fx: f64, fy: f64 },
    #[error("model order {order} exceeds numerical rank {rank}")]
    OrderExceedsRank { order: usize, rank: usize },
    #[error("splitting parameter {split} outside [{min}, {max}]")]
    SplitOutOfRange {
        split: usize,
        min: usize,
        max: usize,
    },
    #[error("rank deficiency at update step {step} (denominator {denominator:.3e})")]
    GramRankDeficient { step: usize, denominator: f64 },
    #[error("flat level cannot be reached: {0}")]
    UnreachableFlatLevel(String),
    #[error("histogram ring around the object is empty")]
    EmptyRing,
}

impl Error {
    /// True for failures of the numeric core (singular systems, rank loss)
    /// as opposed to malformed input.
    pub fn is_numeric(&self) -> bool {
        matches!(
            self,
            Error::DegeneratePolynomial
                | Error::NonFinite(_)
                | Error::RankDeficientBasis { .. }
                | Error::Singular { .. }
                | Error::OrderExceedsRank { .. }
                | Error::GramRankDeficient { .. }
                | Error::UnreachableFlatLevel(_)
        )
    }
}

/// Non-fatal diagnostics raised while estimating or designing.
#[derive(Debug, Clone, PartialEq)]
pub enum Warning {
    /// A spectral component too small to invert was dropped from the filter.
    DroppedComponent {
        row: usize,
        col: usize,
        magnitude: f64,
    },
    /// No prominent maximum in the order scan; the maximum order was used.
    NoOrderMaximum { order: usize },
    /// The model has an all-zero amplitude row or column.
    ZeroAmplitudeLine { axis: char, index: usize },
    /// The extended box was clipped to the image.
    ClippedBox,
    /// Imaginary residue of the kernel synthesis above tolerance.
    KernelImaginaryResidue(f64),
    /// A root was appended or snapped to `z = 1` for the flat level.
    DcRootInserted { axis: char },
}

impl core::fmt::Display for Warning {
    fn fmt(&self, f: &mut core::fmt::Formatter<'_>) -> core::fmt::Result {
        match self {
            Warning::DroppedComponent {
                row,
                col,
                magnitude,
            } => {
                write!(
                    f,
                    "dropped spectral component ({row}, {col}) with |A| = {magnitude:e}"
                )
            }
            Warning::NoOrderMaximum { order } => {
                write!(f, "no prominent order maximum; using order {order}")
            }
            Warning::ZeroAmplitudeLine { axis, index } => {
                write!(f, "all-zero amplitude line {axis}[{index}]")
            }
            Warning::ClippedBox => write!(f, "extended box clipped to the image"),
            Warning::KernelImaginaryResidue(r) => write!(f, "kernel imaginary residue {r:e}"),
            Warning::DcRootInserted { axis } => write!(f, "constant root added on axis {axis}"),
        }
    }
}
