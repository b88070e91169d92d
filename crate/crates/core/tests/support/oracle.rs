//! Closed-form M-step updates against brute-force numerical maximizers on
//! small random problems (N = 2 channels, K = 3 bins, two grid angles), plus
//! the monotonicity guarantees of a single EM iteration.

use emstad_core::em::{
    complete_data_objective, e_step, sweep_amplitudes, update_amplitudes, update_angle_pmf,
    update_covariance, update_mixing, EmConfig, EmState,
};
use emstad_core::linalg::{CMat, CVec, HermitianPd, C64};
use emstad_core::scene::steering_vector;
use emstad_core::Responsibilities;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

const N: usize = 2;
const K: usize = 3;
const KT: usize = 2;
const SEEDS: u64 = 100;
const PARAM_TOL: f64 = 1e-4;

struct Instance {
    z: CMat,
    steering: Vec<CVec>,
    resp: Responsibilities,
    state: EmState,
}

fn cn(rng: &mut impl Rng) -> C64 {
    C64::new(rng.random_range(-1.0..1.0), rng.random_range(-1.0..1.0))
}

fn instance(seed: u64) -> Instance {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let z = CMat::from_fn(N, K, |_, _| cn(&mut rng));
    let steering = vec![steering_vector(-10.0, N), steering_vector(25.0, N)];
    let q: Vec<[f64; 2]> = (0..K)
        .map(|_| {
            let q1 = rng.random_range(0.05..0.95);
            [1.0 - q1, q1]
        })
        .collect();
    let r: Vec<f64> = (0..K)
        .flat_map(|_| {
            let r0 = rng.random_range(0.05..0.95);
            [r0, 1.0 - r0]
        })
        .collect();
    let alpha = CMat::from_fn(K, KT, |_, _| cn(&mut rng));
    let a = CMat::from_fn(N, N, |_, _| cn(&mut rng));
    let mut m = a.matmul(&a.conj_transpose());
    m.add_assign(&CMat::identity(N).scaled(0.5));
    let pi1 = rng.random_range(0.1..0.9);
    let p0 = rng.random_range(0.1..0.9);
    Instance {
        z,
        steering,
        resp: Responsibilities::new(q, r, KT),
        state: EmState {
            pi: [1.0 - pi1, pi1],
            p: vec![p0, 1.0 - p0],
            m_hat: HermitianPd::new(m).unwrap(),
            alpha,
            resp: None,
            loglik: f64::NAN,
            iter: 0,
        },
    }
}

/// Maximizer of a unimodal function on `[lo, hi]`.
fn golden_max(f: impl Fn(f64) -> f64, mut lo: f64, mut hi: f64) -> f64 {
    let g = (5f64.sqrt() - 1.0) / 2.0;
    let mut x1 = hi - g * (hi - lo);
    let mut x2 = lo + g * (hi - lo);
    let (mut f1, mut f2) = (f(x1), f(x2));
    for _ in 0..200 {
        if f1 < f2 {
            lo = x1;
            x1 = x2;
            f1 = f2;
            x2 = lo + g * (hi - lo);
            f2 = f(x2);
        } else {
            hi = x2;
            x2 = x1;
            f2 = f1;
            x1 = hi - g * (hi - lo);
            f1 = f(x1);
        }
        if hi - lo < 1e-14 * (1.0 + lo.abs()) {
            break;
        }
    }
    0.5 * (lo + hi)
}

/// Coordinate ascent with golden-section line searches; `bracket` gives the
/// feasible interval of coordinate `i` at the current point.
fn coordinate_ascent(
    x: &mut [f64],
    f: impl Fn(&[f64]) -> f64,
    bracket: impl Fn(&[f64], usize) -> (f64, f64),
) {
    let mut current = f(x);
    for _ in 0..100_000 {
        for i in 0..x.len() {
            let (lo, hi) = bracket(x, i);
            let trial = std::cell::RefCell::new(x.to_vec());
            let best = golden_max(
                |t| {
                    trial.borrow_mut()[i] = t;
                    f(&trial.borrow())
                },
                lo,
                hi,
            );
            let mut candidate = x.to_vec();
            candidate[i] = best;
            if f(&candidate) >= f(x) {
                x[i] = best;
            }
        }
        let next = f(x);
        if next - current <= 1e-15 * (1.0 + current.abs()) {
            return;
        }
        current = next;
    }
    panic!("coordinate ascent did not converge");
}

// 2 × 2 Hermitian matrices as (a, b, c) = ([0,0], [1,1], [0,1]).
type Herm2 = (f64, f64, C64);

fn herm_det(h: Herm2) -> f64 {
    h.0 * h.1 - h.2.norm_sqr()
}

fn outer_add(acc: &mut Herm2, x: [C64; 2], w: f64) {
    acc.0 += w * x[0].norm_sqr();
    acc.1 += w * x[1].norm_sqr();
    acc.2 += w * x[0] * x[1].conj();
}

/// Weighted scatter `Σ q0 z z† + Σ q1 r (z − α v)(z − α v)†`, written out
/// independently of the library.
fn scatter(inst: &Instance, alpha: &[[C64; KT]; K]) -> Herm2 {
    let mut w = (0.0, 0.0, C64::new(0.0, 0.0));
    for k in 0..K {
        let z = [inst.z[(0, k)], inst.z[(1, k)]];
        outer_add(&mut w, z, inst.resp.q0(k));
        for n in 0..KT {
            let v = &inst.steering[n];
            let e = [z[0] - alpha[k][n] * v[0], z[1] - alpha[k][n] * v[1]];
            outer_add(&mut w, e, inst.resp.q1(k) * inst.resp.r(k, n));
        }
    }
    w
}

fn alpha_array(m: &CMat) -> [[C64; KT]; K] {
    let mut a = [[C64::new(0.0, 0.0); KT]; K];
    for (k, row) in a.iter_mut().enumerate() {
        for (n, x) in row.iter_mut().enumerate() {
            *x = m[(k, n)];
        }
    }
    a
}

pub fn mixing_matches_brute_force() {
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let closed = update_mixing(&inst.resp);
        let (s0, s1): (f64, f64) = (0..K).fold((0.0, 0.0), |(a, b), k| {
            (a + inst.resp.q0(k), b + inst.resp.q1(k))
        });
        let pi1 = golden_max(|t| s0 * (1.0 - t).ln() + s1 * t.ln(), 1e-12, 1.0 - 1e-12);
        assert!((closed[1] - pi1).abs() < PARAM_TOL, "seed {seed}");
        assert!((closed[0] - (1.0 - pi1)).abs() < PARAM_TOL, "seed {seed}");
    }
}

pub fn angle_pmf_matches_brute_force() {
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let closed = update_angle_pmf(&inst.resp).unwrap();
        let w: Vec<f64> = (0..KT)
            .map(|n| (0..K).map(|k| inst.resp.q1(k) * inst.resp.r(k, n)).sum())
            .collect();
        let p0 = golden_max(
            |t| w[0] * t.ln() + w[1] * (1.0 - t).ln(),
            1e-12,
            1.0 - 1e-12,
        );
        assert!((closed[0] - p0).abs() < PARAM_TOL, "seed {seed}");
        assert!((closed[1] - (1.0 - p0)).abs() < PARAM_TOL, "seed {seed}");
    }
}

pub fn covariance_matches_brute_force() {
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let closed =
            update_covariance(&inst.z, &inst.resp, &inst.state.alpha, &inst.steering).unwrap();
        let w = scatter(&inst, &alpha_array(&inst.state.alpha));
        let kf = K as f64;
        // Concave in the precision P = M⁻¹ = [[a, c], [c*, b]]:
        // K log det P − tr(P W).
        let objective = |x: &[f64]| {
            let c = C64::new(x[2], x[3]);
            let det = x[0] * x[1] - c.norm_sqr();
            if det <= 0.0 {
                return f64::NEG_INFINITY;
            }
            kf * det.ln() - (x[0] * w.0 + x[1] * w.1 + 2.0 * (c * w.2.conj()).re)
        };
        let bracket = |x: &[f64], i: usize| -> (f64, f64) {
            let c2 = x[2] * x[2] + x[3] * x[3];
            match i {
                0 => (c2 / x[1] + 1e-12, c2 / x[1] + 1e4),
                1 => (c2 / x[0] + 1e-12, c2 / x[0] + 1e4),
                2 => {
                    let r = (x[0] * x[1] - x[3] * x[3]).max(0.0).sqrt();
                    (-r, r)
                }
                _ => {
                    let r = (x[0] * x[1] - x[2] * x[2]).max(0.0).sqrt();
                    (-r, r)
                }
            }
        };
        let mut x = [1.0, 1.0, 0.0, 0.0];
        coordinate_ascent(&mut x, objective, bracket);
        let c = C64::new(x[2], x[3]);
        let det = x[0] * x[1] - c.norm_sqr();
        let brute = [
            [C64::new(x[1] / det, 0.0), -c / det],
            [-c.conj() / det, C64::new(x[0] / det, 0.0)],
        ];
        for (i, row) in brute.iter().enumerate() {
            for (j, b) in row.iter().enumerate() {
                let err = (closed.matrix()[(i, j)] - b).norm();
                assert!(err < PARAM_TOL, "seed {seed} entry ({i},{j}) error {err:e}");
            }
        }
    }
}

pub fn amplitude_sweep_matches_brute_force() {
    let cfg = EmConfig::default();
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let closed =
            update_amplitudes(&inst.z, &inst.resp, &inst.state.alpha, &inst.steering, &cfg)
                .unwrap();
        let mut alpha = alpha_array(&inst.state.alpha);
        for n in 0..KT {
            let mut x: Vec<f64> = (0..K)
                .flat_map(|k| [alpha[k][n].re, alpha[k][n].im])
                .collect();
            let base = alpha;
            let objective = |x: &[f64]| {
                let mut a = base;
                for k in 0..K {
                    a[k][n] = C64::new(x[2 * k], x[2 * k + 1]);
                }
                -herm_det(scatter(&inst, &a)).ln()
            };
            coordinate_ascent(&mut x, objective, |x, i| (x[i] - 50.0, x[i] + 50.0));
            for k in 0..K {
                alpha[k][n] = C64::new(x[2 * k], x[2 * k + 1]);
            }
        }
        for k in 0..K {
            for n in 0..KT {
                let err = (closed[(k, n)] - alpha[k][n]).norm();
                assert!(err < PARAM_TOL, "seed {seed} α[{k},{n}] error {err:e}");
            }
        }
    }
}

pub fn e_step_rows_are_distributions() {
    let cfg = EmConfig::default();
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let resp = e_step(&inst.z, &inst.steering, &inst.state, &cfg).unwrap();
        for k in 0..K {
            assert!(
                (resp.q0(k) + resp.q1(k) - 1.0).abs() <= 1e-12,
                "seed {seed}"
            );
            let s: f64 = resp.r_row(k).iter().sum();
            assert!((s - 1.0).abs() <= 1e-12, "seed {seed}");
            assert!(resp.r_row(k).iter().all(|&r| (0.0..=1.0).contains(&r)));
        }
    }
}

pub fn each_m_step_update_never_decreases_the_bound() {
    let cfg = EmConfig::default();
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let (z, st, resp) = (&inst.z, &inst.steering, &inst.resp);
        let s = &inst.state;
        let obj = |pi, p: &[f64], alpha: &CMat, m: &HermitianPd| {
            complete_data_objective(z, st, resp, pi, p, alpha, m)
        };
        let pi = update_mixing(resp);
        let p = update_angle_pmf(resp).unwrap();
        let m_old_alpha = update_covariance(z, resp, &s.alpha, st).unwrap();
        let alpha = update_amplitudes(z, resp, &s.alpha, st, &cfg).unwrap();
        let m_new = update_covariance(z, resp, &alpha, st).unwrap();

        let steps = [
            obj(s.pi, &s.p, &s.alpha, &s.m_hat),
            obj(pi, &s.p, &s.alpha, &s.m_hat),
            obj(pi, &p, &s.alpha, &s.m_hat),
            obj(pi, &p, &s.alpha, &m_old_alpha),
            obj(pi, &p, &alpha, &m_new),
        ];
        for (i, w) in steps.windows(2).enumerate() {
            assert!(
                w[1] >= w[0] - 1e-9,
                "seed {seed} update {i}: {} -> {}",
                w[0],
                w[1]
            );
        }
    }
}

pub fn determinant_is_nonincreasing_across_the_sweep() {
    let cfg = EmConfig::default();
    for seed in 0..SEEDS {
        let inst = instance(seed);
        let mut dets = vec![herm_det(scatter(&inst, &alpha_array(&inst.state.alpha)))];
        sweep_amplitudes(
            &inst.z,
            &inst.resp,
            &inst.state.alpha,
            &inst.steering,
            &cfg,
            |_, w| {
                dets.push(herm_det((w[(0, 0)].re, w[(1, 1)].re, w[(0, 1)])));
            },
        )
        .unwrap();
        assert_eq!(dets.len(), KT + 1);
        for w in dets.windows(2) {
            assert!(w[1] <= w[0] * (1.0 + 1e-9), "seed {seed}: {dets:?}");
        }
    }
}

pub const CHECKS: &[(&str, fn())] = &[
    ("mixing", mixing_matches_brute_force),
    ("angle pmf", angle_pmf_matches_brute_force),
    ("covariance", covariance_matches_brute_force),
    ("amplitude sweep", amplitude_sweep_matches_brute_force),
    ("e-step rows", e_step_rows_are_distributions),
    (
        "bound monotone",
        each_m_step_update_never_decreases_the_bound,
    ),
    (
        "determinant monotone",
        determinant_is_nonincreasing_across_the_sweep,
    ),
];
