//! Multi-start projected gradient descent on the Stiefel manifold `V_k(ℝⁿ)`.
//!
//! Frames are stored as `k` orthonormal rows of a flat `k × n` buffer. Each
//! local run takes the Euclidean gradient, projects it onto the tangent space
//! `ξ = G − sym(G Xᵀ) X`, steps along `−ξ` with a Barzilai–Borwein trial length
//! and nonmonotone step halving, and retracts by Gram–Schmidt.

use std::collections::VecDeque;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::StandardNormal;
use rayon::prelude::*;
use rand::Rng;

use crate::frame::orthonormalize_flat;

/// A smooth (or min-of-smooth) function of an orthonormal frame.
pub trait FrameObjective: Sync {
    /// Number of frame vectors `k`.
    fn frame_size(&self) -> usize;
    /// Ambient dimension `n`.
    fn dim(&self) -> usize;
    /// Value at orthonormal `rows`; writes the Euclidean gradient into `grad`
    /// and returns any inner parameters (λ, μ) chosen for this frame.
    fn evaluate(&self, rows: &[f64], grad: &mut [f64]) -> (f64, [f64; 2]);
    /// Magnitude used to make tolerances relative.
    fn scale(&self) -> f64;
}

#[derive(Debug, Clone, PartialEq)]
pub struct OptimizerSettings {
    pub restarts: usize,
    pub max_iters: usize,
    /// Stationarity tolerance on the Riemannian gradient, relative to [`FrameObjective::scale`].
    pub grad_tol: f64,
    pub seed: u64,
}

impl Default for OptimizerSettings {
    fn default() -> Self {
        Self {
            restarts: 64,
            max_iters: 3000,
            grad_tol: 1e-10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone)]
pub struct LocalMinimum {
    pub rows: Vec<f64>,
    pub value: f64,
    pub params: [f64; 2],
    pub grad_norm: f64,
    pub iterations: usize,
    pub converged: bool,
    /// Index of the starting point (warm starts first, then random restarts).
    pub start: usize,
}

#[derive(Debug, Clone)]
pub struct MultiStartOutcome {
    pub best: LocalMinimum,
    pub runs: Vec<LocalMinimum>,
}

impl MultiStartOutcome {
    pub fn converged_runs(&self) -> usize {
        self.runs.iter().filter(|r| r.converged).count()
    }
}

/// Deterministic per-restart stream derived from the base seed.
pub fn restart_rng(seed: u64, index: usize) -> ChaCha8Rng {
    let mut z = seed ^ (index as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    ChaCha8Rng::seed_from_u64(z ^ (z >> 31))
}

fn random_rows(k: usize, n: usize, rng: &mut ChaCha8Rng) -> Vec<f64> {
    loop {
        let mut rows: Vec<f64> = (0..k * n).map(|_| rng.sample(StandardNormal)).collect();
        if orthonormalize_flat(&mut rows, n) {
            return rows;
        }
    }
}

/// Runs `settings.restarts` random starts plus the given warm starts and
/// returns the best local minimum. Runs execute in parallel; the reduction is
/// ordered by start index, so the result does not depend on scheduling.
pub fn minimize_frames<O: FrameObjective>(
    objective: &O,
    settings: &OptimizerSettings,
    warm_starts: &[Vec<f64>],
) -> MultiStartOutcome {
    let k = objective.frame_size();
    let n = objective.dim();
    let total = warm_starts.len() + settings.restarts;
    let runs: Vec<LocalMinimum> = (0..total)
        .into_par_iter()
        .map(|index| {
            let start = if index < warm_starts.len() {
                warm_starts[index].clone()
            } else {
                random_rows(k, n, &mut restart_rng(settings.seed, index))
            };
            let mut run = descend(objective, start, settings);
            run.start = index;
            run
        })
        .collect();
    let mut best = 0;
    for (i, run) in runs.iter().enumerate() {
        if run.value < runs[best].value {
            best = i;
        }
    }
    MultiStartOutcome {
        best: runs[best].clone(),
        runs,
    }
}

fn project(x: &[f64], g: &[f64], k: usize, n: usize, xi: &mut [f64]) {
    let mut m = [[0.0; 4]; 4];
    for a in 0..k {
        for b in 0..k {
            m[a][b] = (0..n).map(|i| g[a * n + i] * x[b * n + i]).sum();
        }
    }
    xi.copy_from_slice(g);
    for a in 0..k {
        for b in 0..k {
            let s = 0.5 * (m[a][b] + m[b][a]);
            for i in 0..n {
                xi[a * n + i] -= s * x[b * n + i];
            }
        }
    }
}

fn norm(v: &[f64]) -> f64 {
    v.iter().map(|x| x * x).sum::<f64>().sqrt()
}

const NONMONOTONE_WINDOW: usize = 8;
const ARMIJO: f64 = 1e-4;

/// One local descent from `start`.
pub fn descend<O: FrameObjective>(objective: &O, start: Vec<f64>, settings: &OptimizerSettings) -> LocalMinimum {
    let k = objective.frame_size();
    let n = objective.dim();
    assert!(k <= 4 && k <= n);
    let scale = objective.scale().max(f64::MIN_POSITIVE);
    let tol = settings.grad_tol * scale;
    let stall_tol = 1e-6 * scale;

    let mut x = start;
    if !orthonormalize_flat(&mut x, n) {
        x = random_rows(k, n, &mut restart_rng(settings.seed, usize::MAX));
    }
    let mut g = vec![0.0; k * n];
    let (mut f, mut params) = objective.evaluate(&x, &mut g);
    let mut xi = vec![0.0; k * n];
    project(&x, &g, k, n, &mut xi);
    let mut gn = norm(&xi);
    let mut step = if gn > 0.0 { 0.1 / gn } else { 1.0 };
    let mut history: VecDeque<f64> = VecDeque::with_capacity(NONMONOTONE_WINDOW);
    history.push_back(f);

    let mut cand = vec![0.0; k * n];
    let mut gc = vec![0.0; k * n];
    let mut xic = vec![0.0; k * n];
    let mut converged = false;
    let mut iterations = 0;

    while iterations < settings.max_iters {
        if gn <= tol {
            converged = true;
            break;
        }
        iterations += 1;
        let reference = history.iter().copied().fold(f64::NEG_INFINITY, f64::max);
        let mut t = step;
        let mut accepted = None;
        for _ in 0..60 {
            for i in 0..k * n {
                cand[i] = x[i] - t * xi[i];
            }
            if orthonormalize_flat(&mut cand, n) {
                let (fc, pc) = objective.evaluate(&cand, &mut gc);
                if fc.is_finite() && fc <= reference - ARMIJO * t * gn * gn {
                    accepted = Some((fc, pc));
                    break;
                }
            }
            t *= 0.5;
        }
        let Some((fc, pc)) = accepted else {
            converged = gn <= stall_tol;
            break;
        };
        project(&cand, &gc, k, n, &mut xic);
        let mut ss = 0.0;
        let mut sy = 0.0;
        for i in 0..k * n {
            let s = cand[i] - x[i];
            let y = xic[i] - xi[i];
            ss += s * s;
            sy += s * y;
        }
        step = if sy > 0.0 { (ss / sy).clamp(1e-14, 1e6) } else { (2.0 * t).min(1e6) };
        std::mem::swap(&mut x, &mut cand);
        std::mem::swap(&mut g, &mut gc);
        std::mem::swap(&mut xi, &mut xic);
        f = fc;
        params = pc;
        gn = norm(&xi);
        if history.len() == NONMONOTONE_WINDOW {
            history.pop_front();
        }
        history.push_back(f);
    }
    if !converged && gn <= tol {
        converged = true;
    }
    LocalMinimum {
        rows: x,
        value: f,
        params,
        grad_norm: gn,
        iterations,
        converged,
        start: 0,
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    /// Rayleigh quotient of a diagonal matrix on the unit sphere (k = 1):
    /// minimum is the smallest diagonal entry.
    struct Rayleigh(Vec<f64>);

    impl FrameObjective for Rayleigh {
        fn frame_size(&self) -> usize {
            1
        }
        fn dim(&self) -> usize {
            self.0.len()
        }
        fn evaluate(&self, rows: &[f64], grad: &mut [f64]) -> (f64, [f64; 2]) {
            let mut v = 0.0;
            for i in 0..rows.len() {
                v += self.0[i] * rows[i] * rows[i];
                grad[i] = 2.0 * self.0[i] * rows[i];
            }
            (v, [0.0; 2])
        }
        fn scale(&self) -> f64 {
            1.0
        }
    }

    #[test]
    fn finds_smallest_eigenvalue() {
        let obj = Rayleigh(vec![3.0, -1.5, 2.0, 0.25, 7.0]);
        let out = minimize_frames(&obj, &OptimizerSettings { restarts: 8, ..Default::default() }, &[]);
        assert!((out.best.value + 1.5).abs() < 1e-12);
        assert!(out.best.converged);
        assert_eq!(out.runs.len(), 8);
    }

    #[test]
    fn deterministic_per_seed() {
        let obj = Rayleigh(vec![1.0, 2.0, 3.0, 4.0]);
        let s = OptimizerSettings { restarts: 5, seed: 42, ..Default::default() };
        let a = minimize_frames(&obj, &s, &[]);
        let b = minimize_frames(&obj, &s, &[]);
        assert_eq!(a.best.rows, b.best.rows);
        assert_eq!(a.best.start, b.best.start);
    }
}
