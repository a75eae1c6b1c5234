use thiserror::Error;

/// Errors raised by the solver stack.
#[derive(Debug, Error, Clone, PartialEq)]
pub enum KwcError {
    #[error("incompatible discretizations: {0}")]
    GridMismatch(String),

    #[error("invalid grid: {0}")]
    InvalidGrid(String),

    #[error("invalid field: {0}")]
    InvalidField(String),

    #[error("unsupported parameter: {0}")]
    UnsupportedParameter(String),

    #[error("singular subdifferential at y = 0 with eps = 0; use sgn-set diagnostic")]
    SingularSubdifferential,

    #[error("material functions violate {clause}: {detail}")]
    MaterialValidation { clause: &'static str, detail: String },

    #[error("conjugate gradient did not converge at step {step}: relative residual {residual:e} after {iterations} iterations")]
    CgNonConvergence {
        step: usize,
        iterations: usize,
        residual: f64,
    },

    #[error("newton iteration did not converge at step {step}: update norm {update:e}")]
    NewtonNonConvergence { step: usize, update: f64 },

    #[error("coefficient outside the admissible class: {0}")]
    CoefficientClass(String),

    #[error("infeasible constraint: {0}")]
    InfeasibleConstraint(String),

    #[error("line search failed at iterate {iterate} after {halvings} halvings (cost {cost:e}, slope {slope:e})")]
    LineSearch {
        iterate: usize,
        halvings: usize,
        cost: f64,
        slope: f64,
    },

    #[error("bound search failed: {0}")]
    BoundSearch(String),

    #[error("config error: {0}")]
    Config(String),

    #[error("io error: {0}")]
    Io(String),
}

impl From<std::io::Error> for KwcError {
    fn from(e: std::io::Error) -> Self {
        KwcError::Io(e.to_string())
    }
}

impl KwcError {
    /// Stable machine-readable name of the variant.
    pub fn kind(&self) -> &'static str {
        match self {
            KwcError::GridMismatch(_) => "grid-mismatch",
            KwcError::InvalidGrid(_) => "invalid-grid",
            KwcError::InvalidField(_) => "invalid-field",
            KwcError::UnsupportedParameter(_) => "unsupported-parameter",
            KwcError::SingularSubdifferential => "singular-subdifferential",
            KwcError::MaterialValidation { .. } => "material-validation",
            KwcError::CgNonConvergence { .. } => "cg-non-convergence",
            KwcError::NewtonNonConvergence { .. } => "newton-non-convergence",
            KwcError::CoefficientClass(_) => "coefficient-class",
            KwcError::InfeasibleConstraint(_) => "infeasible-constraint",
            KwcError::LineSearch { .. } => "line-search",
            KwcError::BoundSearch(_) => "bound-search",
            KwcError::Config(_) => "config",
            KwcError::Io(_) => "io",
        }
    }
}

pub type Result<T> = std::result::Result<T, KwcError>;
