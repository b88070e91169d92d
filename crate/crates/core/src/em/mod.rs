//! Penalized EM over the two-level latent model: an outer class per range
//! bin (interference only / target present) and an inner grid angle for the
//! target case.
//!
//! Each iteration runs an E-step with the parameters of the previous
//! iteration and then the M-step updates in the order mixing probabilities,
//! angle PMF, amplitudes (one cyclic sweep over the grid), covariance. The
//! covariance is evaluated at the post-sweep amplitudes, so every stored
//! state is a joint maximizer in `(α, M)` for its responsibilities.

mod estep;
mod likelihood;
mod mstep;

pub use estep::{e_step, gic_penalty};
pub use likelihood::{
    amf_amplitudes, complete_data_objective, component_loglik, log_likelihood, log_sum_exp,
    scatter_logdet, scatter_matrix,
};
pub use mstep::{
    sweep_amplitudes, update_amplitudes, update_angle_pmf, update_covariance, update_mixing,
};

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, HermitianPd};
use crate::scene::AngleGrid;

use likelihood::{log_likelihood_from_table, ComponentTable};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EmConfig {
    /// Penalty tuning, `ρ ≥ 1`.
    pub rho: f64,
    /// Iteration cap `m̄`.
    pub max_iters: usize,
    /// Relative log-likelihood variation that stops the iteration.
    pub delta: f64,
    /// Stop as soon as the relative variation drops below `delta`; when false
    /// exactly `max_iters` iterations are run.
    pub stop_early: bool,
    pub amplitude_sweeps: usize,
    /// Relative diagonal loading applied to a singular `B_n`.
    pub jitter: f64,
}

impl Default for EmConfig {
    fn default() -> Self {
        Self {
            rho: 3.0,
            max_iters: 4,
            delta: 1e-4,
            stop_early: true,
            amplitude_sweeps: 1,
            jitter: 1e-10,
        }
    }
}

impl EmConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.rho >= 1.0) {
            return Err(Error::InvalidParameter("rho must be >= 1".into()));
        }
        if self.max_iters == 0 {
            return Err(Error::InvalidParameter("max_iters must be >= 1".into()));
        }
        if !(self.delta > 0.0) {
            return Err(Error::InvalidParameter("delta must be > 0".into()));
        }
        if self.amplitude_sweeps == 0 {
            return Err(Error::InvalidParameter(
                "amplitude_sweeps must be >= 1".into(),
            ));
        }
        if !(self.jitter >= 0.0) {
            return Err(Error::InvalidParameter("jitter must be >= 0".into()));
        }
        Ok(())
    }
}

/// Posterior probabilities of the latent variables. Indices are 0-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Responsibilities {
    q: Vec<[f64; 2]>,
    r: Vec<f64>,
    k_theta: usize,
}

impl Responsibilities {
    /// `q[k] = (q_k(0), q_k(1))`; `r` is row-major K × K_θ.
    pub fn new(q: Vec<[f64; 2]>, r: Vec<f64>, k_theta: usize) -> Self {
        assert_eq!(q.len() * k_theta, r.len(), "r must be K × K_θ");
        Self { q, r, k_theta }
    }

    pub fn range_bins(&self) -> usize {
        self.q.len()
    }

    pub fn grid_size(&self) -> usize {
        self.k_theta
    }

    pub fn q(&self, k: usize) -> [f64; 2] {
        self.q[k]
    }

    pub fn q0(&self, k: usize) -> f64 {
        self.q[k][0]
    }

    pub fn q1(&self, k: usize) -> f64 {
        self.q[k][1]
    }

    pub fn r(&self, k: usize, n: usize) -> f64 {
        self.r[k * self.k_theta + n]
    }

    pub fn r_row(&self, k: usize) -> &[f64] {
        &self.r[k * self.k_theta..(k + 1) * self.k_theta]
    }
}

#[derive(Debug, Clone)]
pub struct EmState {
    pub pi: [f64; 2],
    pub p: Vec<f64>,
    pub m_hat: HermitianPd,
    /// K × K_θ amplitudes `α_{k,n}`.
    pub alpha: CMat,
    /// Responsibilities from which this state was computed (`None` for the
    /// initial state).
    pub resp: Option<Responsibilities>,
    /// Unpenalized observed-data log-likelihood at this state.
    pub loglik: f64,
    pub iter: usize,
}

/// `M̂₀ = Z Z† / K`
pub fn sample_covariance(z: &CMat) -> Result<HermitianPd> {
    let n = z.rows();
    let mut s = CMat::zeros(n, n);
    for col in z.columns() {
        s.add_outer(col, 1.0);
    }
    HermitianPd::new(s.scaled(1.0 / z.cols() as f64))
}

/// Starting point: `π = (1/2, 1/2)`, uniform angle PMF, `M = ZZ†/K` and the
/// adaptive-matched-filter amplitudes under that covariance.
pub fn initial_state(z: &CMat, steering: &[CVec]) -> Result<EmState> {
    let m_hat = sample_covariance(z)?;
    let alpha = amf_amplitudes(z, steering, &m_hat);
    let k_theta = steering.len();
    let mut state = EmState {
        pi: [0.5, 0.5],
        p: vec![1.0 / k_theta as f64; k_theta],
        m_hat,
        alpha,
        resp: None,
        loglik: f64::NAN,
        iter: 0,
    };
    state.loglik = log_likelihood(z, steering, &state)?;
    Ok(state)
}

/// All M-step updates for fixed responsibilities. When no bin carries
/// target mass the previous angle PMF is kept.
pub fn m_step(
    z: &CMat,
    steering: &[CVec],
    resp: &Responsibilities,
    prev: &EmState,
    cfg: &EmConfig,
) -> Result<EmState> {
    let pi = update_mixing(resp);
    let p = match update_angle_pmf(resp) {
        Ok(p) => p,
        Err(Error::NoTargetMass) => prev.p.clone(),
        Err(e) => return Err(e),
    };
    let alpha = update_amplitudes(z, resp, &prev.alpha, steering, cfg)?;
    let m_hat = update_covariance(z, resp, &alpha, steering)?;
    Ok(EmState {
        pi,
        p,
        m_hat,
        alpha,
        resp: Some(resp.clone()),
        loglik: f64::NAN,
        iter: prev.iter + 1,
    })
}

/// Runs EM and returns the whole trajectory, starting with the initial state.
pub fn run_em(
    z: &CMat,
    grid: &AngleGrid,
    cfg: &EmConfig,
    init: Option<EmState>,
) -> Result<Vec<EmState>> {
    cfg.validate()?;
    let steering = grid.steering_vectors(z.rows());
    run_em_with(z, &steering, cfg, init)
}

/// [`run_em`] with precomputed steering vectors.
pub fn run_em_with(
    z: &CMat,
    steering: &[CVec],
    cfg: &EmConfig,
    init: Option<EmState>,
) -> Result<Vec<EmState>> {
    let first = match init {
        Some(mut s) => {
            s.loglik = log_likelihood(z, steering, &s)?;
            s
        }
        None => initial_state(z, steering)?,
    };
    let mut traj = vec![first];
    for _ in 0..cfg.max_iters {
        let prev = traj.last().expect("trajectory is never empty");
        let table = ComponentTable::build(z, steering, &prev.m_hat, &prev.alpha);
        let resp = estep::e_step_from_table(&table, prev, cfg, z.rows())?;
        let mut next = m_step(z, steering, &resp, prev, cfg)?;
        let table = ComponentTable::build(z, steering, &next.m_hat, &next.alpha);
        next.loglik = log_likelihood_from_table(&table, next.pi, &next.p);
        let variation = relative_variation(prev.loglik, next.loglik);
        traj.push(next);
        if cfg.stop_early && variation < cfg.delta {
            break;
        }
    }
    Ok(traj)
}

/// `|L_m − L_{m−1}| / |L_m|`
pub fn relative_variation(prev: f64, cur: f64) -> f64 {
    (cur - prev).abs() / cur.abs()
}

/// Relative log-likelihood variation at each iteration `m ≥ 1`.
pub fn trajectory_variations(traj: &[EmState]) -> Vec<f64> {
    traj.windows(2)
        .map(|w| relative_variation(w[0].loglik, w[1].loglik))
        .collect()
}

/// Per-iteration summary used for the convergence JSON dump.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct IterationRecord {
    pub iter: usize,
    pub loglik: f64,
    pub pi: [f64; 2],
    pub p: Vec<f64>,
    pub relative_variation: Option<f64>,
}

pub fn trajectory_records(traj: &[EmState]) -> Vec<IterationRecord> {
    traj.iter()
        .enumerate()
        .map(|(i, s)| IterationRecord {
            iter: s.iter,
            loglik: s.loglik,
            pi: s.pi,
            p: s.p.clone(),
            relative_variation: (i > 0).then(|| relative_variation(traj[i - 1].loglik, s.loglik)),
        })
        .collect()
}
