use thiserror::Error;

use crate::drcc::DrccError;
use crate::eval::EvalError;
use crate::opf::OpfError;
use crate::pwl::PwlError;
use crate::solve::SolveError;
use crate::stats::StatsError;

/// Crate-level error, wrapping each module's error type.
#[derive(Debug, Error)]
pub enum Error {
    #[error(transparent)]
    Stats(#[from] StatsError),
    #[error(transparent)]
    Pwl(#[from] PwlError),
    #[error(transparent)]
    Drcc(#[from] DrccError),
    #[error(transparent)]
    Opf(#[from] OpfError),
    #[error(transparent)]
    Solve(#[from] SolveError),
    #[error(transparent)]
    Eval(#[from] EvalError),
    #[error("i/o error on {path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
}

pub type Result<T> = std::result::Result<T, Error>;
