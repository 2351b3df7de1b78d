//! Probability-shift causal effects of a binary treatment on qualitative
//! outcomes.
//!
//! For every category `m` of a multinomial or ordered outcome the library
//! estimates `P(Y(1) = m) − P(Y(0) = m)` over some population:
//!
//! | design | estimand | entry point |
//! |---|---|---|
//! | selection on observables | PS, PST | [`soo::estimate_ps`], [`soo::estimate_pst`] |
//! | binary instrument | LPS (compliers) | [`iv::estimate_lps`] |
//! | sharp discontinuity | PSC (at the cutoff) | [`rd::estimate_psc`] |
//! | difference-in-differences | PST | [`did::estimate_pst_did`] |
//!
//! The [`dgp`] module simulates the four designs with known truths and runs
//! replication studies.

pub mod cli;
pub mod dgp;
pub mod did;
pub mod estimate;
pub mod io;
pub mod iv;
pub mod linalg;
pub mod nuisance;
pub mod rd;
pub mod sample;
pub mod soo;

pub use estimate::{CategoryEstimate, Estimand, ShiftEstimate};
pub use sample::{validate_sample, Covariates, Design, Period, QualSample, ValidationError};

/// Any error the library can return.
#[derive(Debug, thiserror::Error)]
pub enum Error {
    #[error(transparent)]
    Validation(#[from] ValidationError),
    #[error(transparent)]
    Io(#[from] io::IoError),
    #[error(transparent)]
    Soo(#[from] soo::SooError),
    #[error(transparent)]
    Iv(#[from] iv::IvError),
    #[error(transparent)]
    Rd(#[from] rd::RdError),
    #[error(transparent)]
    Did(#[from] did::DidError),
    #[error(transparent)]
    Truth(#[from] dgp::TruthError),
    #[error(transparent)]
    Estimate(#[from] estimate::EstimateError),
    #[error("{0}")]
    Config(String),
}

impl Error {
    /// True when the input (data or configuration) is at fault rather than the
    /// estimation itself.
    pub fn is_input_error(&self) -> bool {
        matches!(
            self,
            Error::Validation(_)
                | Error::Io(_)
                | Error::Config(_)
                | Error::Truth(_)
                | Error::Soo(soo::SooError::Validation(_))
                | Error::Iv(iv::IvError::Validation(_))
                | Error::Rd(rd::RdError::Validation(_))
                | Error::Did(did::DidError::Validation(_))
                | Error::Rd(rd::RdError::InvalidBandwidth(_))
                | Error::Estimate(estimate::EstimateError::InvalidAlpha(_))
                | Error::Soo(soo::SooError::Estimate(estimate::EstimateError::InvalidAlpha(_)))
                | Error::Iv(iv::IvError::Estimate(estimate::EstimateError::InvalidAlpha(_)))
                | Error::Rd(rd::RdError::Estimate(estimate::EstimateError::InvalidAlpha(_)))
                | Error::Did(did::DidError::Estimate(estimate::EstimateError::InvalidAlpha(_)))
        )
    }

    /// Process exit code: 2 for bad input, 3 for estimation failures.
    pub fn exit_code(&self) -> i32 {
        if self.is_input_error() {
            2
        } else {
            3
        }
    }
}
