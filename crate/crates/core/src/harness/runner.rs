use std::path::{Path, PathBuf};
use std::time::{SystemTime, UNIX_EPOCH};

use serde::{Deserialize, Serialize};

use super::config::{ExperimentConfig, Preset};
use crate::detect::{
    calibrate_threshold, calibration_digest, classify, CacheEntry, ThresholdCache,
};
use crate::error::{Error, Result};
use crate::metrics::{
    aoa_histogram, cfar_sweep, summarize, MetricSummary, SweepAxis, TrialOutcome,
};
use crate::montecarlo::{run_batch, run_trajectories, simulate_scene, TrialSetup};
use crate::rng::{derive_batch_seed, derive_trial_rng};

pub const DEFAULT_CACHE_PATH: &str = ".emstad/threshold_cache.json";

/// Seed labels for the independent sub-batches of an experiment. Every SINR
/// point of a curve reuses the `h1` streams.
pub const SEED_RULE: &str = "trial i of a sub-batch uses ChaCha20 seeded with seed_from_u64(s) on stream i, \
where s = splitmix64(base_seed ^ fnv1a64(label)) and label is one of calibration, h1, cfar, snapshot";

#[derive(Debug, Clone)]
pub struct RunOptions {
    pub out_dir: PathBuf,
    pub workers: Option<usize>,
    pub fast: bool,
    pub recalibrate: bool,
    /// Threshold cache location; `None` disables caching.
    pub cache_path: Option<PathBuf>,
}

impl RunOptions {
    pub fn new(out_dir: impl Into<PathBuf>) -> Self {
        Self {
            out_dir: out_dir.into(),
            workers: None,
            fast: false,
            recalibrate: false,
            cache_path: Some(PathBuf::from(DEFAULT_CACHE_PATH)),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ThresholdInfo {
    pub eta: f64,
    pub pfa: f64,
    pub calibration_trials: usize,
    pub base_seed: u64,
    pub cache_key: String,
    pub from_cache: bool,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RunManifest {
    pub name: String,
    pub config_digest: String,
    pub code_version: String,
    pub started_unix_s: u64,
    pub finished_unix_s: u64,
    pub fast: bool,
    pub workers: usize,
    pub seed_rule: String,
    pub outputs: Vec<String>,
    /// Configuration after `--fast` scaling.
    pub effective_config: ExperimentConfig,
    pub threshold: Option<ThresholdInfo>,
}

pub fn run_experiment(config_path: &Path, opts: &RunOptions) -> Result<RunManifest> {
    let cfg = ExperimentConfig::load(config_path)?;
    run_config(&cfg, opts)
}

/// Runs one experiment and writes its CSV files and `manifest.json` into
/// `opts.out_dir`.
pub fn run_config(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    cfg.validate()?;
    match opts.workers {
        Some(0) => Err(Error::Config("workers must be at least 1".into())),
        Some(n) => rayon::ThreadPoolBuilder::new()
            .num_threads(n)
            .build()
            .map_err(|e| Error::Config(format!("thread pool: {e}")))?
            .install(|| run_in_pool(cfg, opts)),
        None => run_in_pool(cfg, opts),
    }
}

fn unix_now() -> u64 {
    SystemTime::now()
        .duration_since(UNIX_EPOCH)
        .map(|d| d.as_secs())
        .unwrap_or(0)
}

fn run_in_pool(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<RunManifest> {
    let started = unix_now();
    let eff = if opts.fast {
        cfg.scaled_down()
    } else {
        cfg.clone()
    };
    std::fs::create_dir_all(&opts.out_dir)?;
    let mut out = Artifacts {
        dir: &opts.out_dir,
        written: Vec::new(),
    };

    let threshold = if eff.preset.needs_threshold() {
        Some(acquire_threshold(&eff, opts)?)
    } else {
        None
    };
    let h1_seed = derive_batch_seed(eff.base_seed, "h1");

    match eff.preset {
        Preset::Convergence => convergence(&eff, h1_seed, &mut out)?,
        Preset::Snapshot => snapshot(&eff, &mut out)?,
        Preset::Ccp | Preset::Pc | Preset::EstimationRms => {
            let batches = h1_batches(&eff, f64::INFINITY, h1_seed)?;
            match eff.preset {
                Preset::Ccp => ccp(&batches, &eff, &mut out)?,
                Preset::Pc => pc(&batches, &eff, &mut out)?,
                _ => estimation(&batches, &mut out)?,
            }
            summary(&batches, &mut out)?;
        }
        Preset::PdCurve => {
            let th = threshold.as_ref().expect("pd_curve calibrates");
            let batches = h1_batches(&eff, th.eta, h1_seed)?;
            pd(&batches, th, &mut out)?;
            summary(&batches, &mut out)?;
        }
        Preset::CfarRho | Preset::CfarCnr => {
            let th = threshold.as_ref().expect("cfar calibrates");
            cfar(&eff, th, &mut out)?;
        }
    }

    let manifest = RunManifest {
        name: eff.name(),
        config_digest: cfg.digest(),
        code_version: env!("CARGO_PKG_VERSION").to_string(),
        started_unix_s: started,
        finished_unix_s: unix_now(),
        fast: opts.fast,
        workers: rayon::current_num_threads(),
        seed_rule: SEED_RULE.to_string(),
        outputs: out.written.clone(),
        effective_config: eff,
        threshold,
    };
    std::fs::write(
        opts.out_dir.join("manifest.json"),
        serde_json::to_vec_pretty(&manifest)?,
    )?;
    Ok(manifest)
}

fn acquire_threshold(cfg: &ExperimentConfig, opts: &RunOptions) -> Result<ThresholdInfo> {
    let setup = cfg.null_setup()?;
    let seed = derive_batch_seed(cfg.base_seed, "calibration");
    let key = calibration_digest(&setup, cfg.pfa, cfg.calibration_trials, seed);
    let mut cache = match &opts.cache_path {
        Some(path) => ThresholdCache::load(path)?,
        None => ThresholdCache::default(),
    };
    if !opts.recalibrate {
        if let Some(entry) = cache.get(&key) {
            return Ok(ThresholdInfo {
                eta: entry.eta,
                pfa: entry.pfa,
                calibration_trials: entry.n_trials,
                base_seed: entry.base_seed,
                cache_key: key,
                from_cache: true,
            });
        }
    }
    let eta = calibrate_threshold(&setup, cfg.pfa, cfg.calibration_trials, seed)?;
    if let Some(path) = &opts.cache_path {
        cache.insert(
            key.clone(),
            CacheEntry {
                pfa: cfg.pfa,
                n_trials: cfg.calibration_trials,
                eta,
                base_seed: seed,
            },
        );
        cache.save(path)?;
    }
    Ok(ThresholdInfo {
        eta,
        pfa: cfg.pfa,
        calibration_trials: cfg.calibration_trials,
        base_seed: seed,
        cache_key: key,
        from_cache: false,
    })
}

struct Batch {
    sinr_db: f64,
    setup: TrialSetup,
    outcomes: Vec<TrialOutcome>,
}

fn h1_batches(cfg: &ExperimentConfig, eta: f64, seed: u64) -> Result<Vec<Batch>> {
    cfg.sinr_grid
        .iter()
        .map(|&sinr_db| {
            let setup = cfg.trial_setup(sinr_db)?;
            let outcomes = run_batch(&setup, eta, cfg.n_trials, seed)?;
            Ok(Batch {
                sinr_db,
                setup,
                outcomes,
            })
        })
        .collect()
}

fn batch_summary(b: &Batch) -> Result<MetricSummary> {
    let angles: Vec<f64> = b.setup.targets.iter().map(|t| t.aoa_deg).collect();
    summarize(
        &b.outcomes,
        b.setup.range_bins,
        &angles,
        b.setup.grid.span(),
    )
}

struct Artifacts<'a> {
    dir: &'a Path,
    written: Vec<String>,
}

impl Artifacts<'_> {
    fn csv<R: Serialize>(&mut self, name: &str, rows: impl IntoIterator<Item = R>) -> Result<()> {
        let path = self.dir.join(name);
        let mut w = csv::Writer::from_path(&path).map_err(csv_error)?;
        let mut any = false;
        for row in rows {
            w.serialize(row).map_err(csv_error)?;
            any = true;
        }
        if !any {
            return Err(Error::EmptyBatch);
        }
        w.flush()?;
        self.written.push(name.to_string());
        Ok(())
    }

    fn json<T: Serialize>(&mut self, name: &str, value: &T) -> Result<()> {
        std::fs::write(self.dir.join(name), serde_json::to_vec_pretty(value)?)?;
        self.written.push(name.to_string());
        Ok(())
    }
}

fn csv_error(e: csv::Error) -> Error {
    match e.into_kind() {
        csv::ErrorKind::Io(io) => Error::Io(io),
        other => Error::Io(std::io::Error::other(format!("{other:?}"))),
    }
}

#[derive(Serialize)]
struct ConvergenceRow {
    sinr_db: f64,
    m: usize,
    mean_rel_variation: f64,
    n_trials: usize,
}

fn convergence(cfg: &ExperimentConfig, seed: u64, out: &mut Artifacts) -> Result<()> {
    let mut rows = Vec::new();
    for &sinr_db in &cfg.sinr_grid {
        let setup = cfg.trial_setup(sinr_db)?;
        let per_trial = run_trajectories(&setup, cfg.n_trials, seed, |traj| {
            crate::em::trajectory_variations(traj)
        })?;
        for m in 1..=cfg.em.max_iters {
            let vals: Vec<f64> = per_trial
                .iter()
                .filter_map(|v| v.get(m - 1).copied())
                .collect();
            rows.push(ConvergenceRow {
                sinr_db,
                m,
                mean_rel_variation: vals.iter().sum::<f64>() / vals.len().max(1) as f64,
                n_trials: vals.len(),
            });
        }
    }
    out.csv("convergence.csv", rows)
}

#[derive(Serialize)]
struct SnapshotRow {
    sinr_db: f64,
    trial: usize,
    range_bin: usize,
    /// 1 interference only, 2 target present.
    class: u8,
    q1: f64,
    aoa_hat_deg: Option<f64>,
}

fn snapshot(cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<()> {
    let seed = derive_batch_seed(cfg.base_seed, "snapshot");
    let mut rows = Vec::new();
    for &sinr_db in &cfg.sinr_grid {
        let setup = cfg.trial_setup(sinr_db)?;
        let prep = setup.prepare()?;
        for trial in 0..cfg.n_trials {
            let mut rng = derive_trial_rng(seed, trial as u64);
            let scene = simulate_scene(&setup, &prep, &mut rng)?;
            let traj = crate::em::run_em_with(&scene.z, &prep.steering, &setup.em, None)?;
            let resp = traj
                .last()
                .and_then(|s| s.resp.as_ref())
                .ok_or_else(|| Error::InvalidParameter("EM ran zero iterations".into()))?;
            let c = classify(resp, &setup.grid);
            for k in 0..setup.range_bins {
                rows.push(SnapshotRow {
                    sinr_db,
                    trial,
                    range_bin: k + 1,
                    class: c.s_hat[k] + 1,
                    q1: resp.q1(k),
                    aoa_hat_deg: c.theta_hat.get(&(k + 1)).copied(),
                });
            }
        }
    }
    out.csv("snapshot.csv", rows)
}

#[derive(Serialize)]
struct CcpRow {
    sinr_db: f64,
    range_bin: usize,
    ccp_pct: f64,
}

fn ccp(batches: &[Batch], cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<()> {
    let mut rows = Vec::new();
    for b in batches {
        let s = batch_summary(b)?;
        rows.extend(s.ccp_per_bin.iter().enumerate().map(|(k, &c)| CcpRow {
            sinr_db: b.sinr_db,
            range_bin: k + 1,
            ccp_pct: c,
        }));
    }
    debug_assert_eq!(rows.len(), cfg.sinr_grid.len() * cfg.scene.range_bins);
    out.csv("ccp.csv", rows)
}

#[derive(Serialize)]
struct PcRow {
    sinr_db: f64,
    range_bin: usize,
    true_aoa_deg: f64,
    nearest_grid_deg: f64,
    pc_pct: f64,
}

#[derive(Serialize)]
struct PcMeanRow {
    sinr_db: f64,
    pc_mean_pct: f64,
    n_trials: usize,
}

#[derive(Serialize)]
struct HistRow {
    sinr_db: f64,
    range_bin: usize,
    aoa_deg: f64,
    count: usize,
}

fn pc(batches: &[Batch], _cfg: &ExperimentConfig, out: &mut Artifacts) -> Result<()> {
    let mut pc_rows = Vec::new();
    let mut mean_rows = Vec::new();
    let mut hist_rows = Vec::new();
    for b in batches {
        let s = batch_summary(b)?;
        let mut targets = b.setup.targets.clone();
        targets.sort_by_key(|t| t.range_bin);
        for (t, &pc) in targets.iter().zip(&s.pc_per_target) {
            let grid = &b.setup.grid;
            pc_rows.push(PcRow {
                sinr_db: b.sinr_db,
                range_bin: t.range_bin,
                true_aoa_deg: t.aoa_deg,
                nearest_grid_deg: grid.angle(grid.nearest_index(t.aoa_deg)),
                pc_pct: pc,
            });
            let hist = aoa_histogram(&b.outcomes, t.range_bin);
            hist_rows.extend((1..=grid.len()).map(|n| HistRow {
                sinr_db: b.sinr_db,
                range_bin: t.range_bin,
                aoa_deg: grid.angle(n),
                count: hist.get(&n).copied().unwrap_or(0),
            }));
        }
        mean_rows.push(PcMeanRow {
            sinr_db: b.sinr_db,
            pc_mean_pct: s.pc_mean,
            n_trials: s.n_trials,
        });
    }
    out.csv("pc.csv", pc_rows)?;
    out.csv("pc_mean.csv", mean_rows)?;
    out.csv("aoa_hist.csv", hist_rows)
}

#[derive(Serialize)]
struct EstimationRow {
    sinr_db: f64,
    hd_rms: f64,
    rmse_aoa_deg: f64,
    rmse_t: f64,
    n_trials: usize,
}

fn estimation(batches: &[Batch], out: &mut Artifacts) -> Result<()> {
    let rows = batches
        .iter()
        .map(|b| {
            let s = batch_summary(b)?;
            Ok(EstimationRow {
                sinr_db: b.sinr_db,
                hd_rms: s.hd_rms,
                rmse_aoa_deg: s.rmse_aoa,
                rmse_t: s.rmse_t,
                n_trials: s.n_trials,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("estimation.csv", rows)
}

#[derive(Serialize)]
struct PdRow {
    sinr_db: f64,
    pd: f64,
    n_trials: usize,
    eta: f64,
    pfa: f64,
}

fn pd(batches: &[Batch], th: &ThresholdInfo, out: &mut Artifacts) -> Result<()> {
    let rows = batches
        .iter()
        .map(|b| {
            let s = batch_summary(b)?;
            Ok(PdRow {
                sinr_db: b.sinr_db,
                pd: s.pd.unwrap_or(f64::NAN),
                n_trials: s.n_trials,
                eta: th.eta,
                pfa: th.pfa,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv("pd.csv", rows)
}

#[derive(Serialize)]
struct SummaryRow {
    sinr_db: f64,
    n_trials: usize,
    ccp_min_pct: f64,
    pc_mean_pct: f64,
    hd_rms: f64,
    rmse_aoa_deg: f64,
    rmse_t: f64,
    detection_rate: f64,
}

#[derive(Serialize)]
struct SummaryEntry {
    sinr_db: f64,
    #[serde(flatten)]
    summary: MetricSummary,
}

fn summary(batches: &[Batch], out: &mut Artifacts) -> Result<()> {
    let entries = batches
        .iter()
        .map(|b| {
            Ok(SummaryEntry {
                sinr_db: b.sinr_db,
                summary: batch_summary(b)?,
            })
        })
        .collect::<Result<Vec<_>>>()?;
    out.csv(
        "summary.csv",
        entries.iter().map(|e| SummaryRow {
            sinr_db: e.sinr_db,
            n_trials: e.summary.n_trials,
            ccp_min_pct: e
                .summary
                .ccp_per_bin
                .iter()
                .copied()
                .fold(f64::INFINITY, f64::min),
            pc_mean_pct: e.summary.pc_mean,
            hd_rms: e.summary.hd_rms,
            rmse_aoa_deg: e.summary.rmse_aoa,
            rmse_t: e.summary.rmse_t,
            detection_rate: e.summary.pd.or(e.summary.pfa).unwrap_or(f64::NAN),
        }),
    )?;
    out.json("summary.json", &entries)
}

#[derive(Serialize)]
struct CfarRhoRow {
    rho_c: f64,
    pfa_hat: f64,
    n_trials: usize,
    eta: f64,
    pfa_nominal: f64,
}

#[derive(Serialize)]
struct CfarCnrRow {
    cnr_db: f64,
    pfa_hat: f64,
    n_trials: usize,
    eta: f64,
    pfa_nominal: f64,
}

fn cfar(cfg: &ExperimentConfig, th: &ThresholdInfo, out: &mut Artifacts) -> Result<()> {
    let nominal = cfg.null_setup()?;
    let seed = derive_batch_seed(cfg.base_seed, "cfar");
    let axis = match cfg.preset {
        Preset::CfarRho => SweepAxis::RhoC,
        _ => SweepAxis::CnrDb,
    };
    let points = cfar_sweep(
        &nominal,
        th.eta,
        axis,
        &cfg.sweep_values,
        cfg.n_trials,
        seed,
    )?;
    let n = cfg.n_trials;
    match axis {
        SweepAxis::RhoC => out.csv(
            "cfar_rho.csv",
            points.into_iter().map(|(v, p)| CfarRhoRow {
                rho_c: v,
                pfa_hat: p,
                n_trials: n,
                eta: th.eta,
                pfa_nominal: th.pfa,
            }),
        ),
        SweepAxis::CnrDb => out.csv(
            "cfar_cnr.csv",
            points.into_iter().map(|(v, p)| CfarCnrRow {
                cnr_db: v,
                pfa_hat: p,
                n_trials: n,
                eta: th.eta,
                pfa_nominal: th.pfa,
            }),
        ),
    }
}
