//! Dual-blind deconvolution for radar-communications coexistence.
//!
//! A single overlaid measurement carries a radar return (unknown waveform,
//! sparse delay/Doppler/direction channel) and a multi-carrier message
//! (unknown symbols, sparse multipath channel). Both channels and both
//! coefficient vectors are recovered by minimizing a sum of two atomic norms
//! through the dual semidefinite program, localizing the peaks of the dual
//! polynomials and solving a least-squares system for the coefficients.
//!
//! Pipeline: [`scene`] → [`lifting`] → [`sdp`] → [`solver`] → [`recovery`].

pub mod error;
pub mod lifting;
pub mod linalg;
pub mod pipeline;
pub mod recovery;
pub mod scene;
pub mod sdp;
pub mod solver;

pub use error::{Error, Result};
pub use lifting::{LiftedPair, Measurement};
pub use linalg::{CMatrix, C64};
pub use recovery::RecoveryResult;
pub use scene::{AmplitudeMode, ChannelSpec, Dims, ParamTriple, Scene, SceneConfig, Subspaces};
pub use sdp::{ConicProblem, DualSolution, GramMode};
pub use solver::{RawSolution, SolverOptions, SolverStatus};
