use thiserror::Error;

pub type Result<T, E = Error> = std::result::Result<T, E>;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum Error {
    #[error("dimension mismatch for {what}: expected {expected}, found {found}")]
    DimensionMismatch {
        what: &'static str,
        expected: usize,
        found: usize,
    },

    #[error("task dimension must be at least 1")]
    ZeroDimension,

    #[error("matrix is not symmetric (max asymmetry {asymmetry:e})")]
    NotSymmetric { asymmetry: f64 },

    #[error("matrix is not positive definite: pivot {pivot} is {value:e}")]
    NotPositiveDefinite { pivot: usize, value: f64 },

    #[error("noise variance must be finite and nonnegative, got {0}")]
    InvalidNoiseVariance(f64),

    #[error("batch must contain at least one sample")]
    EmptyBatch,

    #[error("stepsize must be finite and positive, got {0}")]
    InvalidStepsize(f64),

    #[error("stepsize {stepsize} for task {task} is unstable: max_stepsize is {max_stepsize} (2/lambda_max)")]
    UnstableStepsize {
        task: usize,
        stepsize: f64,
        max_stepsize: f64,
    },

    #[error("threshold lambda must be finite and nonnegative, got {0}")]
    InvalidLambda(f64),

    #[error("budget p={budget} must satisfy 1 <= p <= m={tasks}")]
    InvalidBudget { budget: usize, tasks: usize },

    #[error("oracle gain mode requires the task definition")]
    MissingOracleTask,

    #[error("cannot select from an empty set of tasks")]
    NoTasks,

    #[error("{0} must be at least 1")]
    ZeroCount(&'static str),

    #[error("contraction factor rho={0} >= 1: convergence envelope is vacuous")]
    VacuousBound(f64),

    #[error("communication budget is unbounded for lambda=0")]
    UnboundedBudget,

    #[error("horizon mismatch: bound has {bound} points, empirical data has {empirical}")]
    HorizonMismatch { bound: usize, empirical: usize },

    #[error("at iteration {iter}: {source}")]
    AtIteration {
        iter: usize,
        #[source]
        source: Box<Error>,
    },
}

impl Error {
    pub(crate) fn at_iteration(self, iter: usize) -> Self {
        Error::AtIteration {
            iter,
            source: Box::new(self),
        }
    }
}

pub(crate) fn check_dim(what: &'static str, expected: usize, found: usize) -> Result<()> {
    if expected == found {
        Ok(())
    } else {
        Err(Error::DimensionMismatch {
            what,
            expected,
            found,
        })
    }
}

pub(crate) fn check_stepsize(stepsize: f64) -> Result<()> {
    if stepsize.is_finite() && stepsize > 0.0 {
        Ok(())
    } else {
        Err(Error::InvalidStepsize(stepsize))
    }
}
