//! Multi-start BFGS with finite-difference gradients.
//!
//! Controls are optimized in the scaled coordinates `z_k = ḟ_k √Δt`, where
//! the energy is `½|z|²`; tolerances then mean the same thing on every grid.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Result};
use crate::paths::TimeGrid;
use crate::rng::aux_rng;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OptimizerConfig {
    /// Total starts, the zero control included.
    pub n_starts: usize,
    pub max_iterations: usize,
    pub gradient_tolerance: f64,
    /// Relative central-difference step.
    pub finite_difference_step: f64,
    pub start_scale: f64,
    pub constraint_penalty_schedule: Vec<f64>,
    pub seed: u64,
}

impl Default for OptimizerConfig {
    fn default() -> Self {
        Self {
            n_starts: 8,
            max_iterations: 500,
            gradient_tolerance: 1e-6,
            finite_difference_step: 1e-6,
            start_scale: 0.5,
            constraint_penalty_schedule: vec![1e2, 1e4, 1e6],
            seed: 0x5eed,
        }
    }
}

impl OptimizerConfig {
    pub fn validate(&self) -> Result<()> {
        if self.n_starts == 0 {
            return Err(invalid("n_starts must be at least 1"));
        }
        if self.max_iterations == 0 {
            return Err(invalid("max_iterations must be at least 1"));
        }
        for (name, v) in [
            ("gradient_tolerance", self.gradient_tolerance),
            ("finite_difference_step", self.finite_difference_step),
            ("start_scale", self.start_scale),
        ] {
            if !(v.is_finite() && v > 0.0) {
                return Err(invalid(format!("{name} must be positive, got {v}")));
            }
        }
        if self.constraint_penalty_schedule.is_empty() {
            return Err(invalid("constraint_penalty_schedule must not be empty"));
        }
        if self.constraint_penalty_schedule.iter().any(|v| !(v.is_finite() && *v > 0.0))
            || self.constraint_penalty_schedule.windows(2).any(|w| w[1] <= w[0])
        {
            return Err(invalid("constraint_penalty_schedule must be positive and strictly increasing"));
        }
        Ok(())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum StopReason {
    GradientTolerance,
    /// The line search cannot decrease the objective along the steepest
    /// descent direction: numerically stationary.
    NoProgress,
    MaxIterations,
    NonFinite,
}

impl StopReason {
    pub fn converged(self) -> bool {
        matches!(self, StopReason::GradientTolerance | StopReason::NoProgress)
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct LocalResult {
    pub z: Vec<f64>,
    pub value: f64,
    pub gradient_norm: f64,
    pub iterations: usize,
    pub reason: StopReason,
}

pub trait Objective: Sync {
    fn dim(&self) -> usize;

    /// Non-finite values mark points outside the domain.
    fn value(&self, z: &[f64]) -> f64;

    /// Central differences with step `h·max(1, |z_i|)`.
    fn gradient(&self, z: &[f64], h: f64, grad: &mut [f64]) {
        let mut w = z.to_vec();
        for i in 0..z.len() {
            let step = h * z[i].abs().max(1.0);
            w[i] = z[i] + step;
            let up = self.value(&w);
            w[i] = z[i] - step;
            let down = self.value(&w);
            w[i] = z[i];
            grad[i] = (up - down) / (2.0 * step);
        }
    }
}

impl<F: Fn(&[f64]) -> f64 + Sync> Objective for (usize, F) {
    fn dim(&self) -> usize {
        self.0
    }

    fn value(&self, z: &[f64]) -> f64 {
        (self.1)(z)
    }
}

fn dot(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| x * y).sum()
}

fn norm(a: &[f64]) -> f64 {
    dot(a, a).sqrt()
}

/// BFGS on the inverse Hessian with a backtracking Armijo search.
pub fn bfgs<O: Objective + ?Sized>(obj: &O, z0: &[f64], cfg: &OptimizerConfig) -> LocalResult {
    let n = obj.dim();
    assert_eq!(z0.len(), n);
    let mut z = z0.to_vec();
    let mut f = obj.value(&z);
    if !f.is_finite() {
        return LocalResult { z, value: f, gradient_norm: f64::INFINITY, iterations: 0, reason: StopReason::NonFinite };
    }
    let h = cfg.finite_difference_step;
    let mut g = vec![0.0; n];
    obj.gradient(&z, h, &mut g);
    let mut hinv = identity(n);
    let mut fresh = true;
    let mut p = vec![0.0; n];
    let mut trial = vec![0.0; n];
    let mut g_new = vec![0.0; n];
    let mut iterations = 0;
    let reason = loop {
        let gn = norm(&g);
        if !gn.is_finite() {
            break StopReason::NonFinite;
        }
        if gn <= cfg.gradient_tolerance {
            break StopReason::GradientTolerance;
        }
        if iterations >= cfg.max_iterations {
            break StopReason::MaxIterations;
        }
        mat_vec_neg(&hinv, &g, &mut p);
        let mut slope = dot(&g, &p);
        if !(slope < 0.0) {
            reset(&mut hinv, &mut fresh);
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = -gn * gn;
        }
        let mut accepted = line_search(obj, &z, f, &p, slope, &mut trial);
        if accepted.is_none() && !fresh {
            reset(&mut hinv, &mut fresh);
            p.iter_mut().zip(&g).for_each(|(pi, gi)| *pi = -gi);
            slope = -gn * gn;
            accepted = line_search(obj, &z, f, &p, slope, &mut trial);
        }
        let Some((alpha, f_new)) = accepted else {
            break StopReason::NoProgress;
        };
        iterations += 1;
        obj.gradient(&trial, h, &mut g_new);
        let s: Vec<f64> = p.iter().map(|v| alpha * v).collect();
        let y: Vec<f64> = g_new.iter().zip(&g).map(|(a, b)| a - b).collect();
        let sy = dot(&s, &y);
        if sy > 1e-12 * norm(&s) * norm(&y) && sy > 0.0 {
            if fresh {
                let scale = sy / dot(&y, &y);
                hinv.iter_mut().for_each(|v| *v *= scale);
            }
            bfgs_update(&mut hinv, &s, &y, sy);
            fresh = false;
        }
        std::mem::swap(&mut z, &mut trial);
        std::mem::swap(&mut g, &mut g_new);
        f = f_new;
    };
    LocalResult { gradient_norm: norm(&g), z, value: f, iterations, reason }
}

fn identity(n: usize) -> Vec<f64> {
    let mut m = vec![0.0; n * n];
    for i in 0..n {
        m[i * n + i] = 1.0;
    }
    m
}

fn reset(hinv: &mut [f64], fresh: &mut bool) {
    let n = (hinv.len() as f64).sqrt() as usize;
    hinv.iter_mut().for_each(|v| *v = 0.0);
    for i in 0..n {
        hinv[i * n + i] = 1.0;
    }
    *fresh = true;
}

fn mat_vec_neg(m: &[f64], v: &[f64], out: &mut [f64]) {
    let n = v.len();
    for (i, o) in out.iter_mut().enumerate() {
        *o = -dot(&m[i * n..(i + 1) * n], v);
    }
}

/// `H ← (I − ρsyᵀ) H (I − ρysᵀ) + ρssᵀ`, expanded with `Hy`.
fn bfgs_update(hinv: &mut [f64], s: &[f64], y: &[f64], sy: f64) {
    let n = s.len();
    let rho = 1.0 / sy;
    let hy: Vec<f64> = (0..n).map(|i| dot(&hinv[i * n..(i + 1) * n], y)).collect();
    let yhy = dot(y, &hy);
    let coef = rho * rho * yhy + rho;
    for i in 0..n {
        let row = &mut hinv[i * n..(i + 1) * n];
        for j in 0..n {
            row[j] += coef * s[i] * s[j] - rho * (hy[i] * s[j] + s[i] * hy[j]);
        }
    }
}

fn line_search<O: Objective + ?Sized>(
    obj: &O,
    z: &[f64],
    f: f64,
    p: &[f64],
    slope: f64,
    trial: &mut [f64],
) -> Option<(f64, f64)> {
    const C1: f64 = 1e-4;
    let mut alpha = 1.0;
    for _ in 0..40 {
        for ((t, zi), pi) in trial.iter_mut().zip(z).zip(p) {
            *t = zi + alpha * pi;
        }
        let ft = obj.value(trial);
        if ft.is_finite() && ft <= f + C1 * alpha * slope && ft < f {
            return Some((alpha, ft));
        }
        alpha *= 0.5;
    }
    None
}

#[derive(Debug, Clone, PartialEq)]
pub struct MultiStartResult {
    pub best: LocalResult,
    pub runs: Vec<LocalResult>,
}

impl MultiStartResult {
    pub fn converged_starts(&self) -> usize {
        self.runs.iter().filter(|r| r.reason.converged()).count()
    }
}

/// Runs every start concurrently and keeps the smallest converged value;
/// values within 1e−12 are broken by the smaller `½|z|²`. When no start
/// converged the best finite run is returned anyway and the caller decides.
pub fn multistart<O: Objective + ?Sized>(obj: &O, starts: &[Vec<f64>], cfg: &OptimizerConfig) -> MultiStartResult {
    let runs: Vec<LocalResult> = starts.par_iter().map(|z0| bfgs(obj, z0, cfg)).collect();
    let any_converged = runs.iter().any(|r| r.reason.converged());
    let energy = |z: &[f64]| 0.5 * dot(z, z);
    let mut best: Option<&LocalResult> = None;
    for r in &runs {
        if !r.value.is_finite() || (any_converged && !r.reason.converged()) {
            continue;
        }
        best = match best {
            None => Some(r),
            Some(b) => {
                if r.value < b.value - 1e-12 || ((r.value - b.value).abs() <= 1e-12 && energy(&r.z) < energy(&b.z)) {
                    Some(r)
                } else {
                    Some(b)
                }
            }
        };
    }
    let best = best.cloned().unwrap_or_else(|| runs[0].clone());
    MultiStartResult { best, runs }
}

/// Zero control followed by `n_starts − 1` smooth random controls
/// `start_scale · (c₀ + Σ_{j≤3} c_j cos(jπt/T))`, all in `z` coordinates.
pub fn smooth_starts(grid: &TimeGrid, cfg: &OptimizerConfig) -> Vec<Vec<f64>> {
    let n = grid.n_steps();
    let sdt = grid.dt().sqrt();
    let mut rng = aux_rng(cfg.seed, 1000);
    let mut out = vec![vec![0.0; n]];
    for _ in 1..cfg.n_starts {
        let c: [f64; 4] = std::array::from_fn(|_| StandardNormal.sample(&mut rng));
        let z = (0..n)
            .map(|k| {
                let t = (k as f64 + 0.5) / n as f64;
                let mut v = c[0];
                for (j, cj) in c.iter().enumerate().skip(1) {
                    v += cj * (j as f64 * std::f64::consts::PI * t).cos();
                }
                cfg.start_scale * v * sdt
            })
            .collect();
        out.push(z);
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn minimizes_a_quadratic() {
        let target: Vec<f64> = (0..10).map(|i| i as f64 * 0.1).collect();
        let t = target.clone();
        let obj = (10usize, move |z: &[f64]| {
            z.iter().zip(&t).enumerate().map(|(i, (a, b))| (i + 1) as f64 * (a - b).powi(2)).sum::<f64>()
        });
        let r = bfgs(&obj, &vec![0.0; 10], &OptimizerConfig::default());
        assert!(r.reason.converged());
        for (a, b) in r.z.iter().zip(&target) {
            assert!((a - b).abs() < 1e-6);
        }
    }

    #[test]
    fn rosenbrock() {
        let obj = (2usize, |z: &[f64]| (1.0 - z[0]).powi(2) + 100.0 * (z[1] - z[0] * z[0]).powi(2));
        let r = bfgs(&obj, &[-1.2, 1.0], &OptimizerConfig::default());
        assert!(r.reason.converged(), "{:?}", r.reason);
        assert!((r.z[0] - 1.0).abs() < 1e-4 && (r.z[1] - 1.0).abs() < 1e-4);
    }

    #[test]
    fn multistart_prefers_global_minimum() {
        // double well with the deeper well at z = 2
        let obj = (1usize, |z: &[f64]| (z[0] * z[0] - 4.0).powi(2) * 0.1 + (z[0] - 2.0).powi(2) * 0.01 - 0.0);
        let starts = vec![vec![-3.0], vec![3.0], vec![0.5]];
        let r = multistart(&obj, &starts, &OptimizerConfig::default());
        assert!((r.best.z[0] - 2.0).abs() < 1e-3);
        assert_eq!(r.converged_starts(), 3);
    }

    #[test]
    fn infinite_start_is_reported() {
        let obj = (1usize, |z: &[f64]| if z[0] < 0.0 { f64::INFINITY } else { z[0] * z[0] });
        let r = bfgs(&obj, &[-1.0], &OptimizerConfig::default());
        assert_eq!(r.reason, StopReason::NonFinite);
        let r = bfgs(&obj, &[1.0], &OptimizerConfig::default());
        assert!(r.value < 1e-10);
    }

    #[test]
    fn starts_are_deterministic_and_include_zero() {
        let g = TimeGrid::new(1.0, 30).unwrap();
        let cfg = OptimizerConfig::default();
        let a = smooth_starts(&g, &cfg);
        assert_eq!(a, smooth_starts(&g, &cfg));
        assert_eq!(a.len(), 8);
        assert!(a[0].iter().all(|v| *v == 0.0));
        assert!(a[1].iter().any(|v| *v != 0.0));
    }

    #[test]
    fn config_validation() {
        assert!(OptimizerConfig::default().validate().is_ok());
        let bad = OptimizerConfig { constraint_penalty_schedule: vec![10.0, 1.0], ..Default::default() };
        assert!(bad.validate().is_err());
        let bad = OptimizerConfig { n_starts: 0, ..Default::default() };
        assert!(bad.validate().is_err());
    }
}
