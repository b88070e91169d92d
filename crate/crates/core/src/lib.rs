//! Multi-target radar detection in Gaussian interference with unknown range
//! positions, angles of arrival and target count.
//!
//! A two-level latent variable model (target present per range bin, grid
//! angle per target) is fitted by a penalized EM procedure; MAP rules on the
//! final responsibilities classify range bins and angles, and the fitted
//! mixture feeds a likelihood-ratio detector whose threshold is calibrated by
//! Monte Carlo.

pub mod detect;
pub mod em;
pub mod error;
pub mod harness;
pub mod linalg;
pub mod metrics;
pub mod montecarlo;
pub mod rng;
pub mod scene;

pub use detect::{Classification, Decision, DetectionReport};
pub use em::{EmConfig, EmState, Responsibilities};
pub use error::{Error, Result};
pub use linalg::{CMat, CVec, HermitianPd, C64};
pub use metrics::{MetricSummary, TrialOutcome};
pub use montecarlo::TrialSetup;
pub use scene::{AngleGrid, InterferenceConfig, Scene, TargetSpec};
