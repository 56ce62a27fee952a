//! Two-cell downlink coordination toolkit.
//!
//! Models a pair of neighbouring base stations that each serve one user and
//! can spend spatial degrees of freedom either on beamforming towards their
//! own user or on cancelling the interference they cause next door.  The
//! crate provides:
//!
//! * closed-form ergodic throughput for every combination of transmit
//!   strategies under perfect, trained, analog-fed-back, and quantized CSI
//!   ([`rate`]),
//! * the special functions those formulas are built on ([`special`],
//!   [`quad`]),
//! * scenario/geometry/resource bookkeeping ([`model`]),
//! * optimisers for the training/data power split, training length, feedback
//!   power split, and feedback bit split, plus adaptive strategy selection
//!   ([`optimize`]),
//! * a reproducible Monte-Carlo simulator of the full
//!   train → feed back → precode → transmit chain ([`sim`]),
//! * experiment drivers and CSV/config plumbing for the command-line tool
//!   ([`harness`]).

pub mod error;
pub mod harness;
pub mod model;
pub mod optimize;
pub mod quad;
pub mod rate;
pub mod sim;
pub mod special;

#[cfg(test)]
pub(crate) mod teststat;

pub use error::{Error, Result};
