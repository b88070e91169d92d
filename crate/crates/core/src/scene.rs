//! Simulated array data: steering vectors, the clutter-plus-noise covariance,
//! SINR-calibrated target amplitudes and complex Gaussian snapshots.
//!
//! Range bins and grid indices exposed here are 1-based; the `z` matrix is
//! indexed 0-based by column as usual.

use std::collections::BTreeSet;
use std::f64::consts::PI;
use std::io::Write;

use rand::Rng;
use rand_distr::StandardNormal;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::linalg::{CMat, CVec, HermitianPd, C64};

/// Ordered set of candidate angles of arrival, in degrees.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AngleGrid {
    angles: Vec<f64>,
}

impl AngleGrid {
    pub fn new(angles: Vec<f64>) -> Result<Self> {
        if angles.is_empty() {
            return Err(Error::InvalidParameter("angle grid is empty".into()));
        }
        if angles.iter().any(|a| !a.is_finite()) || angles.windows(2).any(|w| w[1] <= w[0]) {
            return Err(Error::InvalidParameter(
                "angle grid must be finite and strictly increasing".into(),
            ));
        }
        Ok(Self { angles })
    }

    /// `start:step:stop`, inclusive of `stop` when it falls on the lattice.
    pub fn uniform(start_deg: f64, stop_deg: f64, step_deg: f64) -> Result<Self> {
        if !(step_deg > 0.0) || stop_deg < start_deg {
            return Err(Error::InvalidParameter(format!(
                "bad grid {start_deg}:{step_deg}:{stop_deg}"
            )));
        }
        let count = ((stop_deg - start_deg) / step_deg + 1e-9).floor() as usize + 1;
        Self::new(
            (0..count)
                .map(|i| start_deg + step_deg * i as f64)
                .collect(),
        )
    }

    pub fn len(&self) -> usize {
        self.angles.len()
    }

    pub fn is_empty(&self) -> bool {
        self.angles.is_empty()
    }

    pub fn angles(&self) -> &[f64] {
        &self.angles
    }

    /// Angle at a 1-based grid index.
    pub fn angle(&self, index: usize) -> f64 {
        self.angles[index - 1]
    }

    pub fn span(&self) -> f64 {
        self.angles[self.angles.len() - 1] - self.angles[0]
    }

    /// 1-based index of the closest grid angle; ties go to the smaller angle.
    pub fn nearest_index(&self, theta_deg: f64) -> usize {
        let mut best = 0;
        let mut best_d = f64::INFINITY;
        for (i, a) in self.angles.iter().enumerate() {
            let d = (a - theta_deg).abs();
            if d < best_d {
                best = i;
                best_d = d;
            }
        }
        best + 1
    }

    pub fn steering_vectors(&self, channels: usize) -> Vec<CVec> {
        self.angles
            .iter()
            .map(|&a| steering_vector(a, channels))
            .collect()
    }
}

impl Default for AngleGrid {
    /// −20°:2°:20°, 21 points.
    fn default() -> Self {
        Self::uniform(-20.0, 20.0, 2.0).expect("default grid is valid")
    }
}

/// Half-wavelength ULA response, `v_m = exp(iπ m sin θ)`, unnormalized.
pub fn steering_vector(theta_deg: f64, channels: usize) -> CVec {
    let s = theta_deg.to_radians().sin();
    CVec::from_fn(channels, |m| C64::from_polar(1.0, PI * m as f64 * s))
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InterferenceConfig {
    pub channels: usize,
    pub noise_power: f64,
    pub cnr_db: f64,
    pub rho_c: f64,
}

impl Default for InterferenceConfig {
    fn default() -> Self {
        Self {
            channels: 8,
            noise_power: 1.0,
            cnr_db: 15.0,
            rho_c: 0.9,
        }
    }
}

impl InterferenceConfig {
    pub fn validate(&self) -> Result<()> {
        if self.channels < 2 {
            return Err(Error::InvalidParameter("need at least 2 channels".into()));
        }
        if !(self.noise_power > 0.0) || !self.noise_power.is_finite() {
            return Err(Error::InvalidParameter(
                "noise power must be positive".into(),
            ));
        }
        if !(0.0..1.0).contains(&self.rho_c) {
            return Err(Error::InvalidParameter("rho_c must lie in [0, 1)".into()));
        }
        if self.cnr_db.is_nan() || self.cnr_db == f64::INFINITY {
            return Err(Error::InvalidParameter(
                "cnr_db must be finite or -inf".into(),
            ));
        }
        Ok(())
    }

    /// `σ_c² = 10^{CNR/10} σ_n²`; zero for CNR = −∞.
    pub fn clutter_power(&self) -> f64 {
        db_to_linear(self.cnr_db) * self.noise_power
    }
}

pub fn db_to_linear(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// `σ_n² I + σ_c² R_c` with `R_c[i][j] = ρ_c^{|i−j|}`.
pub fn interference_covariance(cfg: &InterferenceConfig) -> Result<HermitianPd> {
    cfg.validate()?;
    let clutter = cfg.clutter_power();
    let m = CMat::from_fn(cfg.channels, cfg.channels, |i, j| {
        let r = cfg.rho_c.powi(i.abs_diff(j) as i32);
        let d = if i == j { cfg.noise_power } else { 0.0 };
        C64::new(d + clutter * r, 0.0)
    });
    HermitianPd::new(m)
}

/// Complex amplitude whose SINR `|α|² v†M⁻¹v` equals `sinr_db`.
pub fn amplitude_from_sinr(sinr_db: f64, theta_deg: f64, m: &HermitianPd, phase: f64) -> C64 {
    let v = steering_vector(theta_deg, m.dim());
    let gain = m.quad_form(&v, &v).re;
    C64::from_polar((db_to_linear(sinr_db) / gain).sqrt(), phase)
}

/// Unit complex normal: real and imaginary parts each of variance 1/2.
pub fn complex_normal<R: Rng + ?Sized>(rng: &mut R) -> C64 {
    let re: f64 = rng.sample(StandardNormal);
    let im: f64 = rng.sample(StandardNormal);
    C64::new(re, im) * std::f64::consts::FRAC_1_SQRT_2
}

/// Draws from `CN(mean, M)` as `mean + L w`.
pub fn sample_gaussian<R: Rng + ?Sized>(mean: &[C64], m: &HermitianPd, rng: &mut R) -> CVec {
    let n = m.dim();
    assert_eq!(mean.len(), n);
    let w: Vec<C64> = (0..n).map(|_| complex_normal(rng)).collect();
    let l = m.cholesky();
    CVec::from_fn(n, |i| {
        let mut s = mean[i];
        for (k, wk) in w.iter().enumerate().take(i + 1) {
            s += l[(i, k)] * wk;
        }
        s
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TargetSpec {
    /// 1-based range bin.
    pub range_bin: usize,
    pub aoa_deg: f64,
    pub sinr_db: f64,
}

impl TargetSpec {
    pub fn new(range_bin: usize, aoa_deg: f64, sinr_db: f64) -> Self {
        Self {
            range_bin,
            aoa_deg,
            sinr_db,
        }
    }
}

/// The three-target layout (bins 6, 13, 16) at a common SINR. `mismatched`
/// moves the first two AoAs off the grid to −15° and 5°.
pub fn reference_targets(sinr_db: f64, mismatched: bool) -> Vec<TargetSpec> {
    let aoas = if mismatched {
        [-15.0, 5.0, 12.0]
    } else {
        [-16.0, 4.0, 12.0]
    };
    [6, 13, 16]
        .into_iter()
        .zip(aoas)
        .map(|(bin, aoa)| TargetSpec::new(bin, aoa, sinr_db))
        .collect()
}

#[derive(Debug, Clone)]
pub struct Scene {
    /// N × K data matrix, one snapshot per column.
    pub z: CMat,
    pub truth: Vec<TargetSpec>,
    /// 1-based nearest grid index of each true AoA, parallel to `truth`.
    pub truth_grid_index: Vec<usize>,
    pub amplitudes: Vec<C64>,
    pub m_true: HermitianPd,
}

impl Scene {
    pub fn range_bins(&self) -> usize {
        self.z.cols()
    }

    pub fn truth_bins(&self) -> BTreeSet<usize> {
        self.truth.iter().map(|t| t.range_bin).collect()
    }

    /// One row per range bin, `2N` values interleaved re/im.
    pub fn write_csv<W: Write>(&self, mut w: W) -> std::io::Result<()> {
        let n = self.z.rows();
        let header: Vec<String> = (0..n)
            .flat_map(|m| [format!("re{m}"), format!("im{m}")])
            .collect();
        writeln!(w, "{}", header.join(","))?;
        for col in self.z.columns() {
            let row: Vec<String> = col
                .iter()
                .flat_map(|x| [format!("{:e}", x.re), format!("{:e}", x.im)])
                .collect();
            writeln!(w, "{}", row.join(","))?;
        }
        Ok(())
    }
}

/// Draws one data matrix: interference in every bin, plus `α v(θ)` in each
/// target bin. Target phases are drawn first (uniform on [0, 2π), in target
/// order), then the K columns in order.
pub fn generate_scene<R: Rng + ?Sized>(
    k: usize,
    grid: &AngleGrid,
    cfg: &InterferenceConfig,
    targets: &[TargetSpec],
    rng: &mut R,
) -> Result<Scene> {
    let m_true = interference_covariance(cfg)?;
    generate_scene_with(k, grid, &m_true, targets, rng)
}

/// As [`generate_scene`] with a precomputed interference covariance.
pub fn generate_scene_with<R: Rng + ?Sized>(
    k: usize,
    grid: &AngleGrid,
    m_true: &HermitianPd,
    targets: &[TargetSpec],
    rng: &mut R,
) -> Result<Scene> {
    let n = m_true.dim();
    let mut seen = BTreeSet::new();
    for t in targets {
        if t.range_bin == 0 || t.range_bin > k {
            return Err(Error::BinOutOfRange {
                bin: t.range_bin,
                k,
            });
        }
        if !seen.insert(t.range_bin) {
            return Err(Error::DuplicateBin(t.range_bin));
        }
    }

    let amplitudes: Vec<C64> = targets
        .iter()
        .map(|t| {
            let phase = rng.random_range(0.0..2.0 * PI);
            amplitude_from_sinr(t.sinr_db, t.aoa_deg, m_true, phase)
        })
        .collect();

    let mut means = vec![CVec::zeros(n); k];
    for (t, a) in targets.iter().zip(&amplitudes) {
        let v = steering_vector(t.aoa_deg, n);
        means[t.range_bin - 1] = CVec::from_fn(n, |i| a * v[i]);
    }
    let columns: Vec<CVec> = means
        .iter()
        .map(|mean| sample_gaussian(mean, m_true, rng))
        .collect();

    Ok(Scene {
        z: CMat::from_columns(&columns),
        truth: targets.to_vec(),
        truth_grid_index: targets
            .iter()
            .map(|t| grid.nearest_index(t.aoa_deg))
            .collect(),
        amplitudes,
        m_true: m_true.clone(),
    })
}
