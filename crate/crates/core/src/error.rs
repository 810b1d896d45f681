use thiserror::Error;

pub type Result<T> = std::result::Result<T, Error>;

/// Failure modes of the toolkit. Variants are grouped by the exit code the
/// CLI maps them to (see [`Error::exit_code`]).
#[derive(Debug, Error)]
pub enum Error {
    #[error("invalid input: {0}")]
    Validation(String),
    #[error("torus mismatch: {0}")]
    TorusMismatch(String),
    #[error("field has nonzero mean (|mean| = {0:e})")]
    NonZeroMean(f64),
    #[error("field is not real (max imaginary residue {0:e})")]
    NotReal(f64),
    #[error("truncated system is nearly singular (condition estimate {cond:e}); perturb R_m")]
    NearSingular { cond: f64 },
    #[error("Neumann series diverges (term norms {0:?})")]
    Diverging(Vec<f64>),
    #[error("alpha2 shift certificate failed (max deviation {0:e})")]
    CertificateFailed(f64),
    #[error("eigenvalue gap {gap} unreachable after {doublings} doublings")]
    GapUnreachable { gap: f64, doublings: u32 },
    #[error("direction lies outside the admissible cone (S = {0:e})")]
    OutsideCone(f64),
    #[error("alpha has degenerate symmetric spectrum {0:?}")]
    DegenerateAlpha([f64; 3]),
    #[error("no admissible wavevector direction in scan")]
    NoViableXi,
    #[error("iteration did not converge after {iterations} iterations (residual {residual:e})")]
    NoConvergence { iterations: usize, residual: f64 },
    #[error("shift {0} is numerically an eigenvalue")]
    SingularShift(String),
    #[error("continuation lost the branch at eps = {eps} (residual {residual:e})")]
    BranchLoss { eps: f64, residual: f64 },
    #[error("no unstable branch: Re mu <= 0 across the sweep")]
    NoUnstableBranch,
    #[error("big-torus period {0} is not an integer multiple of the cell")]
    NonIntegerPeriod(f64),
    #[error("time step {dt} exceeds the advective bound {bound}")]
    CflViolation { dt: f64, bound: f64 },
    #[error("NaN detected at t = {0}")]
    NanDetected(f64),
    #[error("stage `{stage}`: {source}")]
    Stage {
        stage: &'static str,
        #[source]
        source: Box<Error>,
    },
    #[error("acceptance check failed: {0}")]
    AcceptanceFailed(String),
    #[error(transparent)]
    Io(#[from] std::io::Error),
    #[error(transparent)]
    Json(#[from] serde_json::Error),
}

impl Error {
    /// 2 validation, 3 numerical failure, 4 failed acceptance check.
    pub fn exit_code(&self) -> i32 {
        match self {
            Error::Stage { source, .. } => source.exit_code(),
            Error::AcceptanceFailed(_) => 4,
            Error::NearSingular { .. }
            | Error::Diverging(_)
            | Error::CertificateFailed(_)
            | Error::GapUnreachable { .. }
            | Error::NoConvergence { .. }
            | Error::SingularShift(_)
            | Error::BranchLoss { .. }
            | Error::NoUnstableBranch
            | Error::NanDetected(_)
            | Error::DegenerateAlpha(_)
            | Error::OutsideCone(_)
            | Error::NoViableXi => 3,
            _ => 2,
        }
    }

    pub fn in_stage(self, stage: &'static str) -> Error {
        Error::Stage { stage, source: Box::new(self) }
    }
}
