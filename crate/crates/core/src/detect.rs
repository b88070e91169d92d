//! MAP classification of range bins and angles, and the likelihood-ratio
//! detector built on the fitted mixture.

use std::collections::{BTreeMap, BTreeSet, HashMap};
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::em::{self, log_sum_exp, run_em_with, EmConfig, EmState, Responsibilities};
use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, HermitianPd};
use crate::montecarlo::{self, TrialSetup};
use crate::scene::AngleGrid;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Decision {
    H0,
    H1,
}

/// `H1` iff `statistic > threshold`.
pub fn decide(statistic: f64, threshold: f64) -> Decision {
    if statistic > threshold {
        Decision::H1
    } else {
        Decision::H0
    }
}

/// Range-bin and angle estimates. Bins and grid indices are 1-based.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
pub struct Classification {
    pub s_hat: Vec<u8>,
    pub omega_t_hat: BTreeSet<usize>,
    pub n_hat: BTreeMap<usize, usize>,
    pub theta_hat: BTreeMap<usize, f64>,
    pub t_hat: usize,
}

/// `ŝ_k = argmax_s q_k(s)`; an exact tie goes to 0.
pub fn classify_bins(resp: &Responsibilities) -> Vec<u8> {
    (0..resp.range_bins())
        .map(|k| u8::from(resp.q1(k) > resp.q0(k)))
        .collect()
}

/// Per flagged bin, the grid index maximizing `r_k(n)` (first maximum wins).
pub fn estimate_aoas(
    resp: &Responsibilities,
    omega_t_hat: &BTreeSet<usize>,
    grid: &AngleGrid,
) -> (BTreeMap<usize, usize>, BTreeMap<usize, f64>, usize) {
    let mut n_hat = BTreeMap::new();
    let mut theta_hat = BTreeMap::new();
    for &bin in omega_t_hat {
        let row = resp.r_row(bin - 1);
        let mut best = 0;
        for (n, &r) in row.iter().enumerate() {
            if r > row[best] {
                best = n;
            }
        }
        n_hat.insert(bin, best + 1);
        theta_hat.insert(bin, grid.angle(best + 1));
    }
    (n_hat, theta_hat, omega_t_hat.len())
}

pub fn classify(resp: &Responsibilities, grid: &AngleGrid) -> Classification {
    let s_hat = classify_bins(resp);
    let omega_t_hat: BTreeSet<usize> = s_hat
        .iter()
        .enumerate()
        .filter(|(_, &s)| s == 1)
        .map(|(k, _)| k + 1)
        .collect();
    let (n_hat, theta_hat, t_hat) = estimate_aoas(resp, &omega_t_hat, grid);
    Classification {
        s_hat,
        omega_t_hat,
        n_hat,
        theta_hat,
        t_hat,
    }
}

/// Maximum-likelihood interference covariance under H0, `ZZ†/K`.
pub fn h0_covariance(z: &CMat) -> Result<HermitianPd> {
    em::sample_covariance(z)
}

/// Log-LRT: fitted mixture log-likelihood minus the H0 log-likelihood at `M̂₀`.
pub fn lrt_statistic(z: &CMat, final_state: &EmState, grid: &AngleGrid) -> Result<f64> {
    let steering = grid.steering_vectors(z.rows());
    lrt_statistic_with(z, final_state, &steering)
}

pub fn lrt_statistic_with(z: &CMat, final_state: &EmState, steering: &[CVec]) -> Result<f64> {
    let m0 = h0_covariance(z)?;
    lrt_statistic_against(z, final_state, steering, &m0)
}

pub(crate) fn lrt_statistic_against(
    z: &CMat,
    final_state: &EmState,
    steering: &[CVec],
    m0: &HermitianPd,
) -> Result<f64> {
    let n = z.rows() as f64;
    let norm1 = -n * std::f64::consts::PI.ln() - final_state.m_hat.logdet();
    let norm0 = -n * std::f64::consts::PI.ln() - m0.logdet();
    let wv: Vec<CVec> = steering
        .iter()
        .map(|v| final_state.m_hat.whiten(v))
        .collect();
    let log_p: Vec<f64> = final_state.p.iter().map(|x| x.ln()).collect();
    let (l0, l1) = (final_state.pi[0].ln(), final_state.pi[1].ln());

    let mut total = 0.0;
    for (k, zk) in z.columns().enumerate() {
        let wz = final_state.m_hat.whiten(zk);
        let null = norm1 - wz.norm_sqr();
        let f1 = log_sum_exp(wv.iter().enumerate().map(|(ni, u)| {
            let a = final_state.alpha[(k, ni)];
            let d: f64 = wz
                .iter()
                .zip(u.iter())
                .map(|(x, y)| (x - a * y).norm_sqr())
                .sum();
            norm1 - d + log_p[ni]
        }));
        let h1 = log_sum_exp([l0 + null, l1 + f1]);
        let h0 = norm0 - m0.whiten(zk).norm_sqr();
        total += h1 - h0;
    }
    Ok(total)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DetectionReport {
    pub statistic: f64,
    pub threshold: f64,
    pub decision: Decision,
    pub classification: Classification,
}

/// EM fit, LRT statistic, threshold comparison and MAP classification. The
/// classification is filled in whatever the decision.
pub fn detect(z: &CMat, eta: f64, grid: &AngleGrid, cfg: &EmConfig) -> Result<DetectionReport> {
    let steering = grid.steering_vectors(z.rows());
    detect_with(z, eta, grid, &steering, cfg)
}

pub fn detect_with(
    z: &CMat,
    eta: f64,
    grid: &AngleGrid,
    steering: &[CVec],
    cfg: &EmConfig,
) -> Result<DetectionReport> {
    let traj = run_em_with(z, steering, cfg, None)?;
    let last = traj.last().expect("trajectory is never empty");
    let statistic = lrt_statistic_with(z, last, steering)?;
    let resp = last
        .resp
        .as_ref()
        .ok_or_else(|| Error::InvalidParameter("EM ran zero iterations".into()))?;
    Ok(DetectionReport {
        statistic,
        threshold: eta,
        decision: decide(statistic, eta),
        classification: classify(resp, grid),
    })
}

/// Sorted (descending) H0 statistics from which thresholds are read off.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdCalibration {
    descending: Vec<f64>,
}

impl ThresholdCalibration {
    pub fn from_statistics(mut stats: Vec<f64>) -> Self {
        stats.sort_by(|a, b| b.total_cmp(a));
        Self { descending: stats }
    }

    pub fn len(&self) -> usize {
        self.descending.len()
    }

    pub fn is_empty(&self) -> bool {
        self.descending.is_empty()
    }

    pub fn statistics(&self) -> &[f64] {
        &self.descending
    }

    /// The `⌈pfa · n⌉`-th largest statistic.
    pub fn threshold(&self, pfa: f64) -> Result<f64> {
        if !(pfa > 0.0 && pfa < 1.0) {
            return Err(Error::InvalidParameter(format!("pfa {pfa} outside (0, 1)")));
        }
        if self.descending.is_empty() {
            return Err(Error::EmptyBatch);
        }
        let rank = ((pfa * self.descending.len() as f64).ceil() as usize).max(1);
        Ok(self.descending[rank.min(self.descending.len()) - 1])
    }
}

/// Runs EM and the LRT on `n_trials` independent interference-only scenes
/// (the targets of `setup` are ignored) and returns the threshold whose
/// empirical exceedance rate is `pfa`.
pub fn calibrate_threshold(
    setup: &TrialSetup,
    pfa: f64,
    n_trials: usize,
    base_seed: u64,
) -> Result<f64> {
    calibrate(setup, n_trials, base_seed)?.threshold(pfa)
}

pub fn calibrate(
    setup: &TrialSetup,
    n_trials: usize,
    base_seed: u64,
) -> Result<ThresholdCalibration> {
    let h0 = setup.null_hypothesis();
    let stats = montecarlo::run_statistics(&h0, n_trials, base_seed)?;
    Ok(ThresholdCalibration::from_statistics(stats))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct CacheEntry {
    pub pfa: f64,
    pub n_trials: usize,
    pub eta: f64,
    pub base_seed: u64,
}

/// Calibrated thresholds keyed by a digest of the calibration setup.
#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ThresholdCache {
    entries: HashMap<String, CacheEntry>,
}

impl ThresholdCache {
    /// Missing file yields an empty cache.
    pub fn load(path: &Path) -> Result<Self> {
        match std::fs::read(path) {
            Ok(bytes) => Ok(serde_json::from_slice(&bytes)?),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(Self::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, path: &Path) -> Result<()> {
        if let Some(dir) = path.parent() {
            if !dir.as_os_str().is_empty() {
                std::fs::create_dir_all(dir)?;
            }
        }
        let sorted: BTreeMap<_, _> = self.entries.iter().collect();
        std::fs::write(path, serde_json::to_vec_pretty(&sorted)?)?;
        Ok(())
    }

    pub fn get(&self, digest: &str) -> Option<&CacheEntry> {
        self.entries.get(digest)
    }

    pub fn insert(&mut self, digest: String, entry: CacheEntry) {
        self.entries.insert(digest, entry);
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }
}

/// Digest identifying a threshold: everything that shapes the H0 statistic
/// distribution plus the trial budget and seed.
pub fn calibration_digest(setup: &TrialSetup, pfa: f64, n_trials: usize, base_seed: u64) -> String {
    #[derive(Serialize)]
    struct Key<'a> {
        range_bins: usize,
        grid: &'a [f64],
        channels: usize,
        noise_power: f64,
        cnr_db: String,
        rho_c: f64,
        em: &'a EmConfig,
        pfa: f64,
        n_trials: usize,
        base_seed: u64,
    }
    let key = Key {
        range_bins: setup.range_bins,
        grid: setup.grid.angles(),
        channels: setup.interference.channels,
        noise_power: setup.interference.noise_power,
        // serde_json cannot encode infinities
        cnr_db: format!("{:?}", setup.interference.cnr_db),
        rho_c: setup.interference.rho_c,
        em: &setup.em,
        pfa,
        n_trials,
        base_seed,
    };
    crate::harness::digest_json(&key)
}
