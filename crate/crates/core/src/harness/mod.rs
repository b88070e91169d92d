//! Experiment configuration, execution and artifact output.
//!
//! A run reads one TOML file naming a preset, overlays its keys on the
//! preset's defaults, executes the Monte Carlo batches and writes a fixed set
//! of CSV files plus `manifest.json` into the output directory.
//!
//! | preset           | files                                      |
//! |------------------|--------------------------------------------|
//! | `convergence`    | `convergence.csv`                          |
//! | `snapshot`       | `snapshot.csv`                             |
//! | `ccp`            | `ccp.csv`, `summary.csv`, `summary.json`   |
//! | `pc`             | `pc.csv`, `pc_mean.csv`, `aoa_hist.csv`, summary |
//! | `estimation_rms` | `estimation.csv`, summary                  |
//! | `pd_curve`       | `pd.csv`, summary                          |
//! | `cfar_rho`       | `cfar_rho.csv`                             |
//! | `cfar_cnr`       | `cfar_cnr.csv`                             |

mod config;
mod runner;

use serde::Serialize;
use sha2::{Digest, Sha256};

pub use config::{
    parse_preset_name, ExperimentConfig, Preset, Scenario, SceneConfig, TargetConfig, DEFAULT_SEED,
};
pub use runner::{
    run_config, run_experiment, RunManifest, RunOptions, ThresholdInfo, DEFAULT_CACHE_PATH,
    SEED_RULE,
};

use crate::error::Error;

/// Hex SHA-256 of the canonical JSON encoding of `value`.
pub fn digest_json<T: Serialize + ?Sized>(value: &T) -> String {
    let bytes = serde_json::to_vec(value).expect("config types serialize");
    hex::encode(Sha256::digest(&bytes))
}

pub const EXIT_CONFIG: i32 = 2;
pub const EXIT_IO: i32 = 3;
pub const EXIT_NUMERIC: i32 = 4;

/// Process exit status for a failed run: 2 configuration, 3 I/O, 4 numerical.
pub fn exit_code(err: &Error) -> i32 {
    match err {
        Error::Config(_)
        | Error::InvalidParameter(_)
        | Error::DuplicateBin(_)
        | Error::BinOutOfRange { .. } => EXIT_CONFIG,
        Error::Io(_) | Error::Json(_) => EXIT_IO,
        Error::NotPositiveDefinite { .. }
        | Error::NotHermitian(_)
        | Error::DimensionMismatch { .. }
        | Error::NoTargetMass
        | Error::DegeneratePosterior(_)
        | Error::EmptyBatch => EXIT_NUMERIC,
    }
}
