use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes shared by every module of the toolkit.
#[derive(Debug, Clone, PartialEq, Error)]
pub enum Error {
    /// Caller supplied an argument outside an operation's domain.
    #[error("argument error: {0}")]
    Argument(String),
    /// The oracle lacks a capability the operation requires.
    #[error("capability error: {0}")]
    Capability(String),
    /// A numerical procedure broke down (singular solve, non-symmetric graph, ...).
    #[error("numeric error: {0}")]
    Numeric(String),
    /// `(+inf) + (-inf)` or another indeterminate extended-real expression.
    #[error("indeterminate extended-real arithmetic: {0}")]
    Indeterminate(String),
    /// Envelope or prox computation ran off to `-inf` (prox-bound violated).
    #[error("unbounded: {0}")]
    Unbounded(String),
    #[error("not differentiable: {0}")]
    NotDifferentiable(String),
    /// Hypotheses of the prox-regular machinery are not met at the point.
    #[error("prox-regularity violated: {0}")]
    ProxRegularity(String),
    #[error("unknown name: {0}")]
    Lookup(String),
    #[error("syntax error at line {line}, column {column}: {message}")]
    Syntax {
        line: usize,
        column: usize,
        message: String,
    },
}

impl Error {
    pub fn argument(msg: impl Into<String>) -> Self {
        Error::Argument(msg.into())
    }

    pub fn numeric(msg: impl Into<String>) -> Self {
        Error::Numeric(msg.into())
    }

    pub fn capability(msg: impl Into<String>) -> Self {
        Error::Capability(msg.into())
    }

    /// Stable machine-readable tag used in CLI error objects.
    pub fn kind(&self) -> &'static str {
        match self {
            Error::Argument(_) => "argument",
            Error::Capability(_) => "capability",
            Error::Numeric(_) => "numeric",
            Error::Indeterminate(_) => "indeterminate",
            Error::Unbounded(_) => "unbounded",
            Error::NotDifferentiable(_) => "not_differentiable",
            Error::ProxRegularity(_) => "prox_regularity",
            Error::Lookup(_) => "lookup",
            Error::Syntax { .. } => "syntax",
        }
    }

    /// Argument-class failures are the caller's fault; everything else is numeric.
    pub fn is_argument_class(&self) -> bool {
        matches!(
            self,
            Error::Argument(_)
                | Error::Capability(_)
                | Error::Lookup(_)
                | Error::Syntax { .. }
                | Error::ProxRegularity(_)
        )
    }
}
