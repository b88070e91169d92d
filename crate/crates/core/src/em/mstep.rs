//! Closed-form coordinate maximizers of the expected complete-data
//! log-likelihood.

use crate::error::{Error, Result};
use crate::linalg::{dot, CMat, CVec, HermitianPd, C64};

use super::likelihood::scatter_matrix;
use super::{EmConfig, Responsibilities};

/// `π̂_s = Σ_k q_k(s) / K`
pub fn update_mixing(resp: &Responsibilities) -> [f64; 2] {
    let k = resp.range_bins() as f64;
    let s1: f64 = (0..resp.range_bins()).map(|i| resp.q1(i)).sum();
    let s0: f64 = (0..resp.range_bins()).map(|i| resp.q0(i)).sum();
    [s0 / k, s1 / k]
}

/// `p̂_n = Σ_k q_k(1) r_k(n) / Σ_k q_k(1)`
pub fn update_angle_pmf(resp: &Responsibilities) -> Result<Vec<f64>> {
    let mass: f64 = (0..resp.range_bins()).map(|k| resp.q1(k)).sum();
    if !(mass > 0.0) {
        return Err(Error::NoTargetMass);
    }
    let mut p = vec![0.0; resp.grid_size()];
    for k in 0..resp.range_bins() {
        let q1 = resp.q1(k);
        for (pn, r) in p.iter_mut().zip(resp.r_row(k)) {
            *pn += q1 * r;
        }
    }
    p.iter_mut().for_each(|x| *x /= mass);
    Ok(p)
}

/// `M̂ = scatter / K` at the given amplitudes.
pub fn update_covariance(
    z: &CMat,
    resp: &Responsibilities,
    alpha: &CMat,
    steering: &[CVec],
) -> Result<HermitianPd> {
    let s = scatter_matrix(z, resp, alpha, steering).scaled(1.0 / z.cols() as f64);
    HermitianPd::new(s)
}

/// One or more cyclic sweeps over the grid, each replacing the column
/// `ᾱ_n` by the exact minimizer of the scatter determinant with the other
/// columns held at their current values.
pub fn update_amplitudes(
    z: &CMat,
    resp: &Responsibilities,
    alpha: &CMat,
    steering: &[CVec],
    cfg: &EmConfig,
) -> Result<CMat> {
    sweep_amplitudes(z, resp, alpha, steering, cfg, |_, _| {})
}

/// [`update_amplitudes`] with a callback receiving the grid index and the
/// unnormalized scatter matrix after each column update.
pub fn sweep_amplitudes(
    z: &CMat,
    resp: &Responsibilities,
    alpha: &CMat,
    steering: &[CVec],
    cfg: &EmConfig,
    mut on_column: impl FnMut(usize, &CMat),
) -> Result<CMat> {
    let dim = z.rows();
    let mut alpha = alpha.clone();
    let mut resid = vec![C64::new(0.0, 0.0); dim];

    for _ in 0..cfg.amplitude_sweeps {
        let mut scatter = scatter_matrix(z, resp, &alpha, steering);
        for (ni, v) in steering.iter().enumerate() {
            // B_n: scatter without the n-th angle's terms.
            let mut b = scatter;
            for (k, zk) in z.columns().enumerate() {
                let w = resp.q1(k) * resp.r(k, ni);
                if w == 0.0 {
                    continue;
                }
                fill_residual(&mut resid, zk, alpha[(k, ni)], v);
                b.add_outer(&resid, -w);
            }
            b.symmetrize();

            let b_pd = HermitianPd::new_with_loading(b.clone(), cfg.jitter)?;
            let wv = b_pd.whiten(v);
            let gain = wv.norm_sqr();
            for (k, zk) in z.columns().enumerate() {
                alpha[(k, ni)] = dot(&wv, &b_pd.whiten(zk)) / gain;
            }

            scatter = b;
            for (k, zk) in z.columns().enumerate() {
                let w = resp.q1(k) * resp.r(k, ni);
                if w == 0.0 {
                    continue;
                }
                fill_residual(&mut resid, zk, alpha[(k, ni)], v);
                scatter.add_outer(&resid, w);
            }
            on_column(ni, &scatter);
        }
    }
    Ok(alpha)
}

#[inline]
fn fill_residual(out: &mut [C64], z: &[C64], a: C64, v: &[C64]) {
    for ((o, zi), vi) in out.iter_mut().zip(z).zip(v) {
        *o = zi - a * vi;
    }
}
