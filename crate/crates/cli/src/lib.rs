//! Library half of the `hfa` binary: exit-code mapping and the acceptance grid.

pub mod suites;

use hfa_core::HfaError;

pub const EXIT_USAGE: i32 = 1;
pub const EXIT_INPUT: i32 = 2;
pub const EXIT_BUDGET: i32 = 3;
pub const EXIT_CERTIFICATE: i32 = 4;

pub fn exit_code(e: &HfaError) -> i32 {
    match e {
        HfaError::Structural(_) | HfaError::Precondition(_) | HfaError::Input(_) => EXIT_INPUT,
        HfaError::Budget(_) => EXIT_BUDGET,
        HfaError::Certificate(_) | HfaError::Numerical(_) => EXIT_CERTIFICATE,
    }
}

/// Default enumeration cap when neither `--cap` nor `HFA_CAP` is given.
pub const DEFAULT_CAP: u64 = 1 << 26;
