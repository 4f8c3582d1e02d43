//! Mapping from library errors to process exit codes.

use dropf_core::Error;
use dropf_core::drcc::DrccError;
use dropf_core::pwl::PwlError;
use dropf_core::solve::SolveError;
use dropf_core::stats::StatsError;

pub const INPUT: u8 = 1;
pub const UNIMODAL_MODEL: u8 = 4;
pub const NUMERICAL: u8 = 5;

#[derive(Debug)]
pub struct Failure {
    pub code: u8,
    pub message: String,
}

impl Failure {
    pub fn input(message: impl Into<String>) -> Self {
        Self {
            code: INPUT,
            message: message.into(),
        }
    }
}

fn is_unimodal(e: &StatsError) -> bool {
    matches!(e, StatsError::IndefiniteUnimodal { .. })
}

fn unimodal_in_drcc(e: &DrccError) -> bool {
    matches!(e, DrccError::Model(s) if is_unimodal(s))
}

fn code_of(e: &Error) -> u8 {
    match e {
        Error::Stats(s) if is_unimodal(s) => UNIMODAL_MODEL,
        Error::Drcc(d) if unimodal_in_drcc(d) => UNIMODAL_MODEL,
        Error::Solve(SolveError::Drcc(d)) if unimodal_in_drcc(d) => UNIMODAL_MODEL,
        Error::Solve(
            SolveError::Backend(_)
            | SolveError::BackendIterationLimit
            | SolveError::Unbounded
            | SolveError::Numerical(_)
            | SolveError::Drcc(DrccError::MissingAsymptoticCut { .. })
            | SolveError::Pwl(PwlError::NoConvergence { .. } | PwlError::NotOuter { .. }),
        ) => NUMERICAL,
        Error::Pwl(PwlError::NoConvergence { .. } | PwlError::NotOuter { .. }) => NUMERICAL,
        _ => INPUT,
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        let code = code_of(&e);
        let message = if code == UNIMODAL_MODEL {
            format!("validate_unimodal_model rejected the model: {e}")
        } else {
            e.to_string()
        };
        Self { code, message }
    }
}

macro_rules! via_core_error {
    ($($t:ty),*) => {
        $(impl From<$t> for Failure {
            fn from(e: $t) -> Self {
                Error::from(e).into()
            }
        })*
    };
}

via_core_error!(StatsError, PwlError, DrccError, SolveError);
