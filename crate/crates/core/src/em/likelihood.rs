//! Log densities of the hierarchical mixture, its observed-data
//! log-likelihood, and the two surrogate objectives the M-step maximizes.

use std::f64::consts::PI;

use crate::error::Result;
use crate::linalg::{dot, CMat, CVec, HermitianPd, C64};
use crate::scene::steering_vector;

use super::{EmState, Responsibilities};

/// `log Σ exp(x_i)`, with `-inf` entries contributing nothing.
pub fn log_sum_exp(xs: impl IntoIterator<Item = f64> + Clone) -> f64 {
    let max = xs.clone().into_iter().fold(f64::NEG_INFINITY, f64::max);
    if max == f64::NEG_INFINITY || !max.is_finite() {
        return max;
    }
    max + xs.into_iter().map(|x| (x - max).exp()).sum::<f64>().ln()
}

/// `x log y` with `0 log 0 = 0`.
pub(crate) fn xlogy(x: f64, y: f64) -> f64 {
    if x == 0.0 {
        0.0
    } else {
        x * y.ln()
    }
}

/// `log CN(z; α v(θ), M)`; `α = 0` gives the interference-only density.
pub fn component_loglik(z: &[C64], alpha: C64, theta_deg: f64, m: &HermitianPd) -> f64 {
    let n = m.dim();
    let v = steering_vector(theta_deg, n);
    let resid: Vec<C64> = z
        .iter()
        .zip(v.iter())
        .map(|(zi, vi)| zi - alpha * vi)
        .collect();
    let w = m.whiten(&resid);
    -(n as f64) * PI.ln() - m.logdet() - w.norm_sqr()
}

/// Per-bin component log densities under one set of parameters.
pub(crate) struct ComponentTable {
    /// `log f(z_k | c_k = 0)`
    pub null: Vec<f64>,
    /// `log f(z_k | c_k = 1, e_k = n)`, row-major K × K_θ
    pub target: Vec<f64>,
    pub k_theta: usize,
}

impl ComponentTable {
    pub fn build(z: &CMat, steering: &[CVec], m: &HermitianPd, alpha: &CMat) -> Self {
        let n = m.dim() as f64;
        let norm = -n * PI.ln() - m.logdet();
        let wv: Vec<CVec> = steering.iter().map(|v| m.whiten(v)).collect();
        let k_theta = steering.len();
        let mut null = Vec::with_capacity(z.cols());
        let mut target = Vec::with_capacity(z.cols() * k_theta);
        for (k, zk) in z.columns().enumerate() {
            let wz = m.whiten(zk);
            null.push(norm - wz.norm_sqr());
            for (ni, u) in wv.iter().enumerate() {
                let a = alpha[(k, ni)];
                let d: f64 = wz
                    .iter()
                    .zip(u.iter())
                    .map(|(x, y)| (x - a * y).norm_sqr())
                    .sum();
                target.push(norm - d);
            }
        }
        Self {
            null,
            target,
            k_theta,
        }
    }

    pub fn target_row(&self, k: usize) -> &[f64] {
        &self.target[k * self.k_theta..(k + 1) * self.k_theta]
    }

    /// `log Σ_n f(z_k | c=1, e=n) p_n`
    pub fn log_f1(&self, k: usize, log_p: &[f64]) -> f64 {
        log_sum_exp(self.target_row(k).iter().zip(log_p).map(|(f, lp)| f + lp))
    }
}

/// Observed-data log-likelihood `Σ_k log[π₀ f₀ + π₁ Σ_n f_n p_n]` (unpenalized).
pub fn log_likelihood(z: &CMat, steering: &[CVec], state: &EmState) -> Result<f64> {
    let table = ComponentTable::build(z, steering, &state.m_hat, &state.alpha);
    Ok(log_likelihood_from_table(&table, state.pi, &state.p))
}

pub(crate) fn log_likelihood_from_table(table: &ComponentTable, pi: [f64; 2], p: &[f64]) -> f64 {
    let log_p: Vec<f64> = p.iter().map(|x| x.ln()).collect();
    let (l0, l1) = (pi[0].ln(), pi[1].ln());
    (0..table.null.len())
        .map(|k| log_sum_exp([l0 + table.null[k], l1 + table.log_f1(k, &log_p)]))
        .sum()
}

/// Expected complete-data log-likelihood maximized by the M-step, at fixed
/// responsibilities.
pub fn complete_data_objective(
    z: &CMat,
    steering: &[CVec],
    resp: &Responsibilities,
    pi: [f64; 2],
    p: &[f64],
    alpha: &CMat,
    m: &HermitianPd,
) -> f64 {
    let table = ComponentTable::build(z, steering, m, alpha);
    let mut total = 0.0;
    for k in 0..resp.range_bins() {
        let (q0, q1) = (resp.q0(k), resp.q1(k));
        total += q0 * table.null[k] + xlogy(q0, pi[0]) + xlogy(q1, pi[1]);
        for (n, f) in table.target_row(k).iter().enumerate() {
            let w = q1 * resp.r(k, n);
            if w > 0.0 {
                total += w * (f + p[n].ln());
            }
        }
    }
    total
}

/// Unnormalized weighted scatter `Σ_k q_k(0) S_k + Σ_k Σ_n Q_{k,n} S_{n,k}`.
pub fn scatter_matrix(z: &CMat, resp: &Responsibilities, alpha: &CMat, steering: &[CVec]) -> CMat {
    let n = z.rows();
    let mut acc = CMat::zeros(n, n);
    let mut resid = vec![C64::new(0.0, 0.0); n];
    for (k, zk) in z.columns().enumerate() {
        acc.add_outer(zk, resp.q0(k));
        let q1 = resp.q1(k);
        for (ni, v) in steering.iter().enumerate() {
            let w = q1 * resp.r(k, ni);
            if w == 0.0 {
                continue;
            }
            let a = alpha[(k, ni)];
            for ((r, zi), vi) in resid.iter_mut().zip(zk).zip(v.iter()) {
                *r = zi - a * vi;
            }
            acc.add_outer(&resid, w);
        }
    }
    acc
}

/// `log det(scatter / K)`, the quantity the amplitude updates minimize.
pub fn scatter_logdet(
    z: &CMat,
    resp: &Responsibilities,
    alpha: &CMat,
    steering: &[CVec],
) -> Result<f64> {
    let s = scatter_matrix(z, resp, alpha, steering).scaled(1.0 / z.cols() as f64);
    Ok(HermitianPd::new(s)?.logdet())
}

/// Adaptive matched filter estimate `v† M⁻¹ z / v† M⁻¹ v` for every bin and
/// grid angle.
pub fn amf_amplitudes(z: &CMat, steering: &[CVec], m: &HermitianPd) -> CMat {
    let wz: Vec<CVec> = z.columns().map(|c| m.whiten(c)).collect();
    let mut alpha = CMat::zeros(z.cols(), steering.len());
    for (ni, v) in steering.iter().enumerate() {
        let wv = m.whiten(v);
        let a = wv.norm_sqr();
        for (k, w) in wz.iter().enumerate() {
            alpha[(k, ni)] = dot(&wv, w) / a;
        }
    }
    alpha
}
