//! Simulation and verification toolkit for d-dimensional phase-matching
//! quantum key distribution.
//!
//! - [`galois`]: arithmetic over GF(p^r) and dit strings
//! - [`qudit`]: Heisenberg-Weyl operators, parity measurements and their checks
//! - [`encoding`]: two-mode optical states and the entangled encoding
//! - [`channel`]: lossy channel with phase misalignment and threshold detectors
//! - [`keyrate`]: entropies, asymptotic key rate, PLOB bound and decoy estimates
//! - [`montecarlo`]: seeded round-by-round detection simulator

pub mod channel;
pub mod encoding;
pub mod galois;
pub mod keyrate;
pub mod montecarlo;
pub mod qudit;

pub use channel::{
    ChannelError, ChannelParams, DetectionStats, Detector, FluctuationMode, MisalignmentModel,
    ProtocolParams, Truncation,
};
pub use encoding::EncodingError;
pub use galois::{DitString, Fe, FieldSpec, GaloisError};
pub use keyrate::{DecoyEstimate, KeyRateError, RateCurve, RatePoint};
pub use montecarlo::{McConfig, McResult};
pub use qudit::QuditError;
