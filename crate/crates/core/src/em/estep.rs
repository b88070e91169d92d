use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec};

use super::likelihood::{log_sum_exp, ComponentTable};
use super::{EmConfig, EmState, Responsibilities};

/// GIC-style exponent `u(s, ρ) = (N² + 3s)(1 + ρ)/2`.
pub fn gic_penalty(s: usize, channels: usize, rho: f64) -> f64 {
    let n2 = (channels * channels) as f64;
    (n2 + 3.0 * s as f64) * (1.0 + rho) / 2.0
}

/// Posterior class and angle probabilities given the current parameters,
/// with the class posterior tilted by `e^{−u(s, ρ)}`. Everything is carried
/// in the log domain.
pub fn e_step(
    z: &CMat,
    steering: &[CVec],
    state: &EmState,
    cfg: &EmConfig,
) -> Result<Responsibilities> {
    let table = ComponentTable::build(z, steering, &state.m_hat, &state.alpha);
    e_step_from_table(&table, state, cfg, z.rows())
}

pub(crate) fn e_step_from_table(
    table: &ComponentTable,
    state: &EmState,
    cfg: &EmConfig,
    channels: usize,
) -> Result<Responsibilities> {
    let k_bins = table.null.len();
    let k_theta = table.k_theta;
    let log_p: Vec<f64> = state.p.iter().map(|x| x.ln()).collect();
    let prior0 = state.pi[0].ln() - gic_penalty(0, channels, cfg.rho);
    let prior1 = state.pi[1].ln() - gic_penalty(1, channels, cfg.rho);

    let mut q = Vec::with_capacity(k_bins);
    let mut r = Vec::with_capacity(k_bins * k_theta);
    for k in 0..k_bins {
        let log_f1 = table.log_f1(k, &log_p);
        let a0 = prior0 + table.null[k];
        let a1 = prior1 + log_f1;
        let norm = log_sum_exp([a0, a1]);
        if !norm.is_finite() {
            return Err(Error::DegeneratePosterior(k + 1));
        }
        let (q0, q1) = ((a0 - norm).exp(), (a1 - norm).exp());
        let s = q0 + q1;
        q.push([q0 / s, q1 / s]);

        let row_start = r.len();
        if log_f1.is_finite() {
            r.extend(
                table
                    .target_row(k)
                    .iter()
                    .zip(&log_p)
                    .map(|(f, lp)| (f + lp - log_f1).exp()),
            );
        } else {
            // Angle posterior is undefined with no target likelihood; fall back to the prior.
            r.extend_from_slice(&state.p);
        }
        let row = &mut r[row_start..];
        let s: f64 = row.iter().sum();
        row.iter_mut().for_each(|x| *x /= s);
    }
    Ok(Responsibilities::new(q, r, k_theta))
}
