//! Estimation and detection performance measures over batches of trials.

use std::collections::{BTreeMap, BTreeSet};

use serde::{Deserialize, Serialize};

use crate::detect::{Classification, Decision};
use crate::error::{Error, Result};
use crate::montecarlo::{run_batch, TrialSetup};

/// Ground truth and estimates of one trial. Bins and grid indices are 1-based.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrialOutcome {
    pub truth_bins: BTreeSet<usize>,
    /// True bin → nearest grid index of its AoA.
    pub truth_grid_idx: BTreeMap<usize, usize>,
    pub est: Classification,
    pub statistic: f64,
    pub decision: Decision,
}

/// Hausdorff distance between index sets with `d(x, y) = |x − y|`.
/// Two empty sets are at distance 0; an empty set is at distance `k` from any
/// nonempty one.
pub fn hausdorff(x: &BTreeSet<usize>, y: &BTreeSet<usize>, k: usize) -> f64 {
    match (x.is_empty(), y.is_empty()) {
        (true, true) => return 0.0,
        (true, false) | (false, true) => return k as f64,
        _ => {}
    }
    let directed = |a: &BTreeSet<usize>, b: &BTreeSet<usize>| {
        a.iter()
            .map(|&i| b.iter().map(|&j| i.abs_diff(j)).min().unwrap_or(0))
            .max()
            .unwrap_or(0)
    };
    directed(x, y).max(directed(y, x)) as f64
}

/// RMS of the per-trial Hausdorff distance between estimated and true bins.
pub fn hausdorff_rms(outcomes: &[TrialOutcome], k: usize) -> f64 {
    rms(outcomes
        .iter()
        .map(|o| hausdorff(&o.est.omega_t_hat, &o.truth_bins, k)))
}

fn rms(xs: impl Iterator<Item = f64>) -> f64 {
    let (mut s, mut n) = (0.0, 0usize);
    for x in xs {
        s += x * x;
        n += 1;
    }
    if n == 0 {
        f64::NAN
    } else {
        (s / n as f64).sqrt()
    }
}

/// AoA RMSE: for each true angle the closest estimated angle counts. A trial
/// with no estimated targets charges `empty_penalty_deg²` per true target.
pub fn rmse_aoa(outcomes: &[TrialOutcome], truth_angles: &[f64], empty_penalty_deg: f64) -> f64 {
    if outcomes.is_empty() || truth_angles.is_empty() {
        return f64::NAN;
    }
    let t = truth_angles.len() as f64;
    let total: f64 = outcomes
        .iter()
        .map(|o| {
            if o.est.theta_hat.is_empty() {
                return empty_penalty_deg * empty_penalty_deg;
            }
            truth_angles
                .iter()
                .map(|&theta| {
                    o.est
                        .theta_hat
                        .values()
                        .map(|&e| (theta - e).powi(2))
                        .fold(f64::INFINITY, f64::min)
                })
                .sum::<f64>()
                / t
        })
        .sum();
    (total / outcomes.len() as f64).sqrt()
}

/// RMS error of the estimated target count.
pub fn rmse_count(outcomes: &[TrialOutcome]) -> f64 {
    rms(outcomes
        .iter()
        .map(|o| o.est.t_hat as f64 - o.truth_bins.len() as f64))
}

/// Percentage of trials in which each bin (1..=k, returned 0-based) is
/// classified correctly.
pub fn ccp_per_bin(outcomes: &[TrialOutcome], k: usize) -> Vec<f64> {
    let mut hits = vec![0usize; k];
    for o in outcomes {
        for (bin, h) in (1..=k).zip(hits.iter_mut()) {
            let truth = o.truth_bins.contains(&bin);
            let est = o.est.s_hat.get(bin - 1).is_some_and(|&s| s == 1);
            *h += usize::from(truth == est);
        }
    }
    hits.iter()
        .map(|&h| percentage(h, outcomes.len()))
        .collect()
}

fn percentage(count: usize, total: usize) -> f64 {
    if total == 0 {
        f64::NAN
    } else {
        100.0 * count as f64 / total as f64
    }
}

/// Per true target (ordered by bin): percentage of all trials in which its
/// bin is flagged and the selected grid index equals the nearest grid point
/// to its true AoA.
pub fn pc_aoa(outcomes: &[TrialOutcome]) -> Vec<f64> {
    let Some(first) = outcomes.first() else {
        return Vec::new();
    };
    first
        .truth_grid_idx
        .keys()
        .map(|bin| {
            let hits = outcomes
                .iter()
                .filter(|o| {
                    let truth = o.truth_grid_idx.get(bin);
                    truth.is_some() && o.est.n_hat.get(bin) == truth
                })
                .count();
            percentage(hits, outcomes.len())
        })
        .collect()
}

/// Count of selected grid indices at `bin` over trials where it is flagged.
pub fn aoa_histogram(outcomes: &[TrialOutcome], bin: usize) -> BTreeMap<usize, usize> {
    let mut hist = BTreeMap::new();
    for o in outcomes {
        if let Some(&n) = o.est.n_hat.get(&bin) {
            *hist.entry(n).or_insert(0) += 1;
        }
    }
    hist
}

/// Most frequent grid index in a histogram; ties go to the smaller index.
pub fn modal_index(hist: &BTreeMap<usize, usize>) -> Option<usize> {
    let mut best: Option<(usize, usize)> = None;
    for (&idx, &count) in hist {
        if best.is_none_or(|(_, c)| count > c) {
            best = Some((idx, count));
        }
    }
    best.map(|(idx, _)| idx)
}

/// Fraction of H1 decisions: Pd on H1 data, Pfa on H0 data.
pub fn estimate_rate(outcomes: &[TrialOutcome]) -> Result<f64> {
    if outcomes.is_empty() {
        return Err(Error::EmptyBatch);
    }
    let hits = outcomes
        .iter()
        .filter(|o| o.decision == Decision::H1)
        .count();
    Ok(hits as f64 / outcomes.len() as f64)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetricSummary {
    pub ccp_per_bin: Vec<f64>,
    pub pc_per_target: Vec<f64>,
    pub pc_mean: f64,
    pub hd_rms: f64,
    pub rmse_aoa: f64,
    pub rmse_t: f64,
    /// Detection rate when the batch holds targets.
    pub pd: Option<f64>,
    /// Detection rate when the batch is interference only.
    pub pfa: Option<f64>,
    pub n_trials: usize,
}

pub fn summarize(
    outcomes: &[TrialOutcome],
    k: usize,
    truth_angles: &[f64],
    empty_penalty_deg: f64,
) -> Result<MetricSummary> {
    let rate = estimate_rate(outcomes)?;
    let has_targets = outcomes.iter().any(|o| !o.truth_bins.is_empty());
    let pc = pc_aoa(outcomes);
    let pc_mean = if pc.is_empty() {
        f64::NAN
    } else {
        pc.iter().sum::<f64>() / pc.len() as f64
    };
    Ok(MetricSummary {
        ccp_per_bin: ccp_per_bin(outcomes, k),
        pc_per_target: pc,
        pc_mean,
        hd_rms: hausdorff_rms(outcomes, k),
        rmse_aoa: rmse_aoa(outcomes, truth_angles, empty_penalty_deg),
        rmse_t: rmse_count(outcomes),
        pd: has_targets.then_some(rate),
        pfa: (!has_targets).then_some(rate),
        n_trials: outcomes.len(),
    })
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SweepAxis {
    RhoC,
    CnrDb,
}

/// False-alarm rate against a fixed threshold as one clutter parameter is
/// varied. Every sweep point reuses the same trial streams.
pub fn cfar_sweep(
    nominal: &TrialSetup,
    eta: f64,
    axis: SweepAxis,
    values: &[f64],
    trials_per_point: usize,
    base_seed: u64,
) -> Result<Vec<(f64, f64)>> {
    let h0 = nominal.null_hypothesis();
    values
        .iter()
        .map(|&value| {
            let mut setup = h0.clone();
            match axis {
                SweepAxis::RhoC => setup.interference.rho_c = value,
                SweepAxis::CnrDb => setup.interference.cnr_db = value,
            }
            let outcomes = run_batch(&setup, eta, trials_per_point, base_seed)?;
            Ok((value, estimate_rate(&outcomes)?))
        })
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    fn set(xs: &[usize]) -> BTreeSet<usize> {
        xs.iter().copied().collect()
    }

    fn outcome(truth: &[(usize, usize)], est: &[(usize, usize)], k: usize) -> TrialOutcome {
        let grid = crate::scene::AngleGrid::default();
        let mut s_hat = vec![0u8; k];
        for &(b, _) in est {
            s_hat[b - 1] = 1;
        }
        TrialOutcome {
            truth_bins: truth.iter().map(|t| t.0).collect(),
            truth_grid_idx: truth.iter().copied().collect(),
            est: Classification {
                s_hat,
                omega_t_hat: est.iter().map(|e| e.0).collect(),
                n_hat: est.iter().copied().collect(),
                theta_hat: est.iter().map(|&(b, n)| (b, grid.angle(n))).collect(),
                t_hat: est.len(),
            },
            statistic: 0.0,
            decision: if est.is_empty() {
                Decision::H0
            } else {
                Decision::H1
            },
        }
    }

    const TRUTH: [(usize, usize); 3] = [(6, 3), (13, 13), (16, 17)];

    #[test]
    fn hausdorff_examples() {
        assert_eq!(hausdorff(&set(&[6, 13, 16]), &set(&[6, 13, 16]), 24), 0.0);
        assert_eq!(hausdorff(&set(&[6, 13]), &set(&[6, 13, 16]), 24), 3.0);
        assert_eq!(hausdorff(&set(&[]), &set(&[6, 13, 16]), 24), 24.0);
        assert_eq!(hausdorff(&set(&[]), &set(&[]), 24), 0.0);
    }

    #[test]
    fn hausdorff_is_a_metric_on_small_subsets() {
        let subsets: Vec<BTreeSet<usize>> = (1u32..64)
            .map(|mask| (1..=6).filter(|i| mask & (1 << (i - 1)) != 0).collect())
            .collect();
        for a in &subsets {
            assert_eq!(hausdorff(a, a, 6), 0.0);
            for b in &subsets {
                let ab = hausdorff(a, b, 6);
                assert_eq!(ab, hausdorff(b, a, 6));
                assert_eq!(ab == 0.0, a == b);
                for c in &subsets {
                    assert!(hausdorff(a, c, 6) <= ab + hausdorff(b, c, 6));
                }
            }
        }
    }

    #[test]
    fn rmse_aoa_examples() {
        let perfect = vec![outcome(&TRUTH, &TRUTH, 24); 3];
        assert_eq!(rmse_aoa(&perfect, &[-16.0, 4.0, 12.0], 40.0), 0.0);

        // estimates at 2° and 6° around a 4° target
        let o = outcome(&[(13, 13)], &[(12, 12), (13, 14)], 24);
        assert!((rmse_aoa(&[o], &[4.0], 40.0) - 2.0).abs() < 1e-12);

        let empty = outcome(&TRUTH, &[], 24);
        assert_eq!(rmse_aoa(&[empty], &[-16.0, 4.0, 12.0], 40.0), 40.0);
    }

    #[test]
    fn rmse_count_examples() {
        let exact = outcome(&TRUTH, &TRUTH, 24);
        assert_eq!(rmse_count(&[exact.clone(), exact.clone()]), 0.0);
        let extra = outcome(&TRUTH, &[(6, 3), (13, 13), (16, 17), (20, 1)], 24);
        assert!((rmse_count(&[exact, extra]) - 0.5f64.sqrt()).abs() < 1e-15);
        assert_eq!(rmse_count(&[outcome(&TRUTH, &[], 24)]), 3.0);
    }

    #[test]
    fn constant_count_offset() {
        let plus_two = outcome(&TRUTH, &[(6, 3), (13, 13), (16, 17), (1, 1), (2, 1)], 24);
        assert_eq!(rmse_count(&vec![plus_two; 5]), 2.0);
    }

    #[test]
    fn ccp_examples() {
        let perfect = vec![outcome(&TRUTH, &TRUTH, 24); 4];
        assert!(ccp_per_bin(&perfect, 24).iter().all(|&c| c == 100.0));

        let mut batch = vec![outcome(&TRUTH, &TRUTH, 24); 900];
        batch.extend(vec![outcome(&TRUTH, &[(13, 13), (16, 17)], 24); 100]);
        assert!((ccp_per_bin(&batch, 24)[5] - 90.0).abs() < 1e-12);

        let never = vec![outcome(&TRUTH, &[], 24); 10];
        let ccp = ccp_per_bin(&never, 24);
        for (i, c) in ccp.iter().enumerate() {
            let expected = if [6, 13, 16].contains(&(i + 1)) {
                0.0
            } else {
                100.0
            };
            assert_eq!(*c, expected);
        }
    }

    #[test]
    fn pc_examples() {
        let perfect = vec![outcome(&TRUTH, &TRUTH, 24); 5];
        assert_eq!(pc_aoa(&perfect), vec![100.0; 3]);

        let mut batch = vec![outcome(&TRUTH, &TRUTH, 24); 700];
        batch.extend(vec![
            outcome(&TRUTH, &[(6, 4), (13, 13), (16, 17)], 24);
            300
        ]);
        let pc = pc_aoa(&batch);
        assert!((pc[0] - 70.0).abs() < 1e-12);
        assert_eq!(pc[1], 100.0);

        let never = vec![outcome(&TRUTH, &[(13, 13), (16, 17)], 24); 5];
        assert_eq!(pc_aoa(&never)[0], 0.0);
    }

    #[test]
    fn ccp_and_pc_ignore_trial_order() {
        let mut batch = vec![outcome(&TRUTH, &TRUTH, 24); 3];
        batch.push(outcome(&TRUTH, &[(6, 4)], 24));
        batch.push(outcome(&TRUTH, &[(2, 1), (13, 13)], 24));
        let mut rev = batch.clone();
        rev.reverse();
        assert_eq!(ccp_per_bin(&batch, 24), ccp_per_bin(&rev, 24));
        assert_eq!(pc_aoa(&batch), pc_aoa(&rev));
    }

    #[test]
    fn rate_examples() {
        let all = vec![outcome(&TRUTH, &TRUTH, 24); 10];
        assert_eq!(estimate_rate(&all).unwrap(), 1.0);
        let mut h0 = vec![outcome(&[], &[], 24); 99_900];
        h0.extend(vec![outcome(&[], &[(3, 1)], 24); 100]);
        assert_eq!(estimate_rate(&h0).unwrap(), 1e-3);
        assert!(matches!(estimate_rate(&[]), Err(Error::EmptyBatch)));
    }

    #[test]
    fn modal_index_prefers_smaller_on_tie() {
        let hist = BTreeMap::from([(2, 5), (3, 5), (4, 1)]);
        assert_eq!(modal_index(&hist), Some(2));
        assert_eq!(modal_index(&BTreeMap::new()), None);
    }

    #[test]
    fn summary_splits_pd_and_pfa() {
        let s = summarize(
            &vec![outcome(&TRUTH, &TRUTH, 24); 2],
            24,
            &[-16.0, 4.0, 12.0],
            40.0,
        )
        .unwrap();
        assert_eq!(s.pd, Some(1.0));
        assert_eq!(s.pfa, None);
        assert_eq!(s.pc_mean, 100.0);
        let s = summarize(&vec![outcome(&[], &[], 24); 2], 24, &[], 40.0).unwrap();
        assert_eq!(s.pfa, Some(0.0));
    }
}
