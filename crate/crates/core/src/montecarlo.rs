//! Independent Monte Carlo trials of the full estimation/detection pipeline.
//!
//! Trials run on the current rayon pool; results come back ordered by trial
//! index, so downstream aggregation is independent of scheduling.

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::detect::{classify, decide, lrt_statistic_with};
use crate::em::{run_em_with, EmConfig, EmState};
use crate::error::{Error, Result};
use crate::linalg::{CVec, HermitianPd};
use crate::metrics::TrialOutcome;
use crate::rng::{derive_trial_rng, TrialRng};
use crate::scene::{
    generate_scene_with, interference_covariance, reference_targets, AngleGrid, InterferenceConfig,
    Scene, TargetSpec,
};

/// Everything needed to simulate and process one data matrix.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialSetup {
    pub range_bins: usize,
    pub grid: AngleGrid,
    pub interference: InterferenceConfig,
    pub targets: Vec<TargetSpec>,
    pub em: EmConfig,
}

impl TrialSetup {
    /// K = 24, N = 8, default grid and clutter, three targets at `sinr_db`.
    pub fn reference(sinr_db: f64, mismatched: bool) -> Self {
        Self {
            range_bins: 24,
            grid: AngleGrid::default(),
            interference: InterferenceConfig::default(),
            targets: reference_targets(sinr_db, mismatched),
            em: EmConfig::default(),
        }
    }

    pub fn null_hypothesis(&self) -> Self {
        Self {
            targets: Vec::new(),
            ..self.clone()
        }
    }

    pub fn with_sinr(&self, sinr_db: f64) -> Self {
        let mut s = self.clone();
        s.targets.iter_mut().for_each(|t| t.sinr_db = sinr_db);
        s
    }

    pub fn prepare(&self) -> Result<Prepared> {
        self.em.validate()?;
        if self.range_bins < self.interference.channels {
            return Err(Error::InvalidParameter(format!(
                "K = {} range bins cannot support N = {} channels",
                self.range_bins, self.interference.channels
            )));
        }
        Ok(Prepared {
            m_true: interference_covariance(&self.interference)?,
            steering: self.grid.steering_vectors(self.interference.channels),
        })
    }
}

/// Per-batch precomputation shared by all trials.
#[derive(Debug, Clone)]
pub struct Prepared {
    pub m_true: HermitianPd,
    pub steering: Vec<CVec>,
}

pub fn simulate_scene(setup: &TrialSetup, prep: &Prepared, rng: &mut TrialRng) -> Result<Scene> {
    generate_scene_with(
        setup.range_bins,
        &setup.grid,
        &prep.m_true,
        &setup.targets,
        rng,
    )
}

/// One trial: draw a scene, run EM, compute the LRT statistic and classify.
/// A threshold of `+∞` always decides H0.
pub fn run_trial(
    setup: &TrialSetup,
    prep: &Prepared,
    threshold: f64,
    rng: &mut TrialRng,
) -> Result<TrialOutcome> {
    let scene = simulate_scene(setup, prep, rng)?;
    let traj = run_em_with(&scene.z, &prep.steering, &setup.em, None)?;
    let last = traj.last().expect("trajectory is never empty");
    let statistic = lrt_statistic_with(&scene.z, last, &prep.steering)?;
    let resp = last.resp.as_ref().expect("at least one EM iteration");
    Ok(TrialOutcome {
        truth_bins: scene.truth_bins(),
        truth_grid_idx: scene
            .truth
            .iter()
            .zip(&scene.truth_grid_index)
            .map(|(t, &i)| (t.range_bin, i))
            .collect(),
        est: classify(resp, &setup.grid),
        statistic,
        decision: decide(statistic, threshold),
    })
}

/// Maps `f` over trials `0..n_trials`, each with its own derived RNG.
pub fn map_trials<T, F>(n_trials: usize, base_seed: u64, f: F) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&mut TrialRng) -> Result<T> + Sync,
{
    (0..n_trials as u64)
        .into_par_iter()
        .map(|i| f(&mut derive_trial_rng(base_seed, i)))
        .collect()
}

pub fn run_batch(
    setup: &TrialSetup,
    threshold: f64,
    n_trials: usize,
    base_seed: u64,
) -> Result<Vec<TrialOutcome>> {
    let prep = setup.prepare()?;
    map_trials(n_trials, base_seed, |rng| {
        run_trial(setup, &prep, threshold, rng)
    })
}

/// LRT statistics only.
pub fn run_statistics(setup: &TrialSetup, n_trials: usize, base_seed: u64) -> Result<Vec<f64>> {
    let prep = setup.prepare()?;
    map_trials(n_trials, base_seed, |rng| {
        let scene = simulate_scene(setup, &prep, rng)?;
        let traj = run_em_with(&scene.z, &prep.steering, &setup.em, None)?;
        lrt_statistic_with(&scene.z, traj.last().expect("nonempty"), &prep.steering)
    })
}

/// Full EM trajectories reduced by `f`, e.g. to per-iteration variations.
pub fn run_trajectories<T, F>(
    setup: &TrialSetup,
    n_trials: usize,
    base_seed: u64,
    f: F,
) -> Result<Vec<T>>
where
    T: Send,
    F: Fn(&[EmState]) -> T + Sync,
{
    let prep = setup.prepare()?;
    map_trials(n_trials, base_seed, |rng| {
        let scene = simulate_scene(setup, &prep, rng)?;
        let traj = run_em_with(&scene.z, &prep.steering, &setup.em, None)?;
        Ok(f(&traj))
    })
}
