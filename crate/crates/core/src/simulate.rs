//! Euler simulation of the reflected volatility and the log-price, and the
//! replica-parallel estimator built on it.

use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::ModelSpec;
use crate::paths::{Path, TimeGrid};
use crate::rng::{aux_rng, fill_replica, NoiseBundle};

#[derive(Debug, Clone, PartialEq)]
pub struct SimulatedTriple {
    pub u: Path,
    pub y: Path,
    /// Log-price, starting at `x₀` (not centered).
    pub x: Path,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MCEstimate {
    pub mean: f64,
    pub stderr: f64,
    /// Replicas that contributed.
    pub n: usize,
    pub aborted: usize,
    pub seed: u64,
    pub eps: f64,
}

/// One simulated replica, borrowed from worker scratch space.
#[derive(Debug, Clone, Copy)]
pub struct ReplicaView<'a> {
    pub grid: &'a TimeGrid,
    pub u: &'a [f64],
    pub y: &'a [f64],
    pub x: &'a [f64],
    pub dw: &'a [f64],
    pub db: &'a [f64],
}

/// Path functionals understood by [`batch_estimate`].
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case")]
pub enum Statistic {
    One,
    TerminalLogPrice,
    TerminalVolatility,
    SupVolatility,
    /// `1{X_T − x₀ ≥ level}`.
    TerminalLogPriceAbove { level: f64 },
    /// `1{max_k Y_k ≥ level}`.
    SupVolatilityAbove { level: f64 },
    /// `1{max_k X_k − x₀ ≥ level}`.
    MaxLogPriceAbove { level: f64 },
    /// `1{min_k X_k − x₀ ≤ level}`.
    MinLogPriceBelow { level: f64 },
    /// `e^{−rT} S_T`.
    DiscountedPrice,
}

impl Statistic {
    pub fn evaluate(&self, spec: &ModelSpec, rep: &ReplicaView<'_>) -> f64 {
        let x0 = spec.x0();
        let last = rep.x.len() - 1;
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        match *self {
            Statistic::One => 1.0,
            Statistic::TerminalLogPrice => rep.x[last],
            Statistic::TerminalVolatility => rep.y[last],
            Statistic::SupVolatility => max_of(rep.y),
            Statistic::TerminalLogPriceAbove { level } => ind(rep.x[last] - x0 >= level),
            Statistic::SupVolatilityAbove { level } => ind(max_of(rep.y) >= level),
            Statistic::MaxLogPriceAbove { level } => ind(max_of(rep.x) - x0 >= level),
            Statistic::MinLogPriceBelow { level } => ind(min_of(rep.x) - x0 <= level),
            Statistic::DiscountedPrice => (rep.x[last] - spec.r * spec.horizon).exp(),
        }
    }
}

pub(crate) fn max_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::NEG_INFINITY, f64::max)
}

pub(crate) fn min_of(v: &[f64]) -> f64 {
    v.iter().copied().fold(f64::INFINITY, f64::min)
}

fn check_eps(eps: f64) -> Result<()> {
    if eps.is_finite() && eps > 0.0 && eps <= 1.0 {
        Ok(())
    } else {
        Err(invalid(format!("eps must lie in (0, 1], got {eps}")))
    }
}

fn check_grid(spec: &ModelSpec, grid: &TimeGrid) -> Result<()> {
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::GridMismatch(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    Ok(())
}

#[derive(Debug, Clone)]
struct Scratch {
    u: Vec<f64>,
    y: Vec<f64>,
    x: Vec<f64>,
    dw: Vec<f64>,
    db: Vec<f64>,
}

impl Scratch {
    fn new(grid: &TimeGrid) -> Self {
        let n = grid.n_steps();
        Self {
            u: vec![0.0; n + 1],
            y: vec![0.0; n + 1],
            x: vec![0.0; n + 1],
            dw: vec![0.0; n],
            db: vec![0.0; n],
        }
    }

    fn view<'a>(&'a self, grid: &'a TimeGrid) -> ReplicaView<'a> {
        ReplicaView { grid, u: &self.u, y: &self.y, x: &self.x, dw: &self.dw, db: &self.db }
    }
}

/// The Euler recursion with incremental reflection. Returns the first step
/// whose state is not finite.
#[allow(clippy::too_many_arguments)]
fn euler(
    spec: &ModelSpec,
    eps: f64,
    grid: &TimeGrid,
    dw: &[f64],
    db: &[f64],
    u: &mut [f64],
    y: &mut [f64],
    x: &mut [f64],
) -> std::result::Result<(), usize> {
    let cs = &spec.coefficients;
    let dt = grid.dt();
    let se = eps.sqrt();
    let (rho, rho_bar) = (spec.rho, spec.rho_bar());
    u[0] = spec.y0;
    y[0] = spec.y0;
    x[0] = spec.x0();
    let mut running_min = 0.0_f64;
    for k in 0..grid.n_steps() {
        let t = grid.node(k);
        let yk = y[k];
        let uk1 = u[k] + cs.a(t, yk) * dt + se * cs.c(t, yk) * db[k];
        let s = cs.sigma(t, yk);
        let xk1 = x[k] + cs.b(t, yk) * dt - 0.5 * eps * s * s * dt
            + se * s * (rho_bar * dw[k] + rho * db[k]);
        if !(uk1.is_finite() && xk1.is_finite()) {
            return Err(k + 1);
        }
        running_min = running_min.min(uk1);
        u[k + 1] = uk1;
        y[k + 1] = uk1 - running_min;
        x[k + 1] = xk1;
    }
    Ok(())
}

fn simulate_checked(spec: &ModelSpec, eps: f64, noise: &NoiseBundle) -> Result<Scratch> {
    check_eps(eps)?;
    check_grid(spec, &noise.grid)?;
    let n = noise.grid.n_steps();
    if noise.dw.len() != n || noise.db.len() != n {
        return Err(Error::GridMismatch("noise length differs from the grid step count".into()));
    }
    let mut s = Scratch::new(&noise.grid);
    s.dw.copy_from_slice(&noise.dw);
    s.db.copy_from_slice(&noise.db);
    euler(spec, eps, &noise.grid, &noise.dw, &noise.db, &mut s.u, &mut s.y, &mut s.x)
        .map_err(|step| Error::NonFiniteState { step })?;
    Ok(s)
}

/// `(U, Y)` with `Y = ΓU` and `U(0) = y₀`.
pub fn simulate_volatility(spec: &ModelSpec, eps: f64, noise: &NoiseBundle) -> Result<(Path, Path)> {
    let s = simulate_checked(spec, eps, noise)?;
    Ok((Path::from_raw(noise.grid, s.u), Path::from_raw(noise.grid, s.y)))
}

pub fn simulate_logprice(spec: &ModelSpec, eps: f64, noise: &NoiseBundle) -> Result<SimulatedTriple> {
    let s = simulate_checked(spec, eps, noise)?;
    Ok(SimulatedTriple {
        u: Path::from_raw(noise.grid, s.u),
        y: Path::from_raw(noise.grid, s.y),
        x: Path::from_raw(noise.grid, s.x),
    })
}

/// Runs `n_replicas` replicas and lets `eval` write `n_outputs` numbers per
/// replica. Results are stored by replica index and reduced in that order,
/// so they do not depend on the number of workers.
pub fn batch_estimate_with<F>(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    n_outputs: usize,
    eval: F,
) -> Result<Vec<MCEstimate>>
where
    F: Fn(&ReplicaView<'_>, &mut [f64]) + Sync,
{
    batch_estimate_coupled(spec, eps, grid, n_replicas, seed, 1, n_outputs, eval)
}

/// As [`batch_estimate_with`], but the Brownian increments are drawn on the
/// grid refined `substeps` times and summed back onto `grid`. Runs on
/// `grid` and on `grid.refined(substeps)` with the same seed then see the
/// same Brownian paths, which isolates the discretization error.
#[allow(clippy::too_many_arguments)]
pub fn batch_estimate_coupled<F>(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    substeps: usize,
    n_outputs: usize,
    eval: F,
) -> Result<Vec<MCEstimate>>
where
    F: Fn(&ReplicaView<'_>, &mut [f64]) + Sync,
{
    if substeps == 0 {
        return Err(invalid("substeps must be at least 1"));
    }
    check_eps(eps)?;
    check_grid(spec, &grid)?;
    if n_replicas < 2 {
        return Err(invalid("n_replicas must be at least 2"));
    }
    if n_outputs == 0 {
        return Err(invalid("need at least one statistic"));
    }
    let fine = if substeps == 1 { TimeGrid::new(grid.horizon(), 1)? } else { grid.refined(substeps) };
    let mut values = vec![0.0_f64; n_replicas * n_outputs];
    let mut ok = vec![true; n_replicas];
    values
        .par_chunks_mut(n_outputs)
        .zip(ok.par_iter_mut())
        .enumerate()
        .for_each_init(
            || (Scratch::new(&grid), Scratch::new(&fine)),
            |(s, f), (i, (out, flag))| {
                if substeps == 1 {
                    fill_replica(grid, seed, i as u64, &mut s.dw, &mut s.db);
                } else {
                    fill_replica(fine, seed, i as u64, &mut f.dw, &mut f.db);
                    coarsen(&f.dw, substeps, &mut s.dw);
                    coarsen(&f.db, substeps, &mut s.db);
                }
                let Scratch { u, y, x, dw, db } = s;
                if euler(spec, eps, &grid, dw, db, u, y, x).is_err() {
                    *flag = false;
                    return;
                }
                eval(&s.view(&grid), out);
                if out.iter().any(|v| !v.is_finite()) {
                    *flag = false;
                }
            },
        );
    let aborted = ok.iter().filter(|f| !**f).count();
    let mut column = Vec::with_capacity(n_replicas);
    let mut out = Vec::with_capacity(n_outputs);
    for j in 0..n_outputs {
        column.clear();
        column.extend(
            values
                .chunks(n_outputs)
                .zip(&ok)
                .filter(|(_, f)| **f)
                .map(|(row, _)| row[j]),
        );
        let (mean, stderr) = mean_stderr(&column);
        out.push(MCEstimate { mean, stderr, n: column.len(), aborted, seed, eps });
    }
    Ok(out)
}

pub fn batch_estimate(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    statistic: Statistic,
) -> Result<MCEstimate> {
    let mut v = batch_estimate_many(spec, eps, grid, n_replicas, seed, &[statistic])?;
    Ok(v.remove(0))
}

fn coarsen(fine: &[f64], substeps: usize, out: &mut [f64]) {
    for (o, chunk) in out.iter_mut().zip(fine.chunks(substeps)) {
        *o = chunk.iter().sum();
    }
}

/// Several statistics on the same replicas.
pub fn batch_estimate_many(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    statistics: &[Statistic],
) -> Result<Vec<MCEstimate>> {
    batch_estimate_with(spec, eps, grid, n_replicas, seed, statistics.len(), |rep, out| {
        for (o, s) in out.iter_mut().zip(statistics) {
            *o = s.evaluate(spec, rep);
        }
    })
}

/// [`batch_estimate`] on noise drawn `substeps` times finer; see
/// [`batch_estimate_coupled`].
pub fn batch_estimate_refined(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    substeps: usize,
    statistic: Statistic,
) -> Result<MCEstimate> {
    let mut v = batch_estimate_coupled(spec, eps, grid, n_replicas, seed, substeps, 1, |rep, out| {
        out[0] = statistic.evaluate(spec, rep);
    })?;
    Ok(v.remove(0))
}

/// One value of `statistic` per replica, in replica order. Aborted replicas
/// are an error here because the caller wants the whole sample.
pub fn replica_values(
    spec: &ModelSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    statistic: Statistic,
) -> Result<Vec<f64>> {
    check_eps(eps)?;
    check_grid(spec, &grid)?;
    let mut values = vec![f64::NAN; n_replicas];
    values.par_iter_mut().enumerate().for_each_init(
        || Scratch::new(&grid),
        |s, (i, out)| {
            fill_replica(grid, seed, i as u64, &mut s.dw, &mut s.db);
            let Scratch { u, y, x, dw, db } = s;
            if euler(spec, eps, &grid, dw, db, u, y, x).is_ok() {
                *out = statistic.evaluate(spec, &s.view(&grid));
            }
        },
    );
    let aborted = values.iter().filter(|v| !v.is_finite()).count();
    if aborted > 0 {
        return Err(Error::AbortedReplicas { aborted, requested: n_replicas });
    }
    Ok(values)
}

/// Pairwise summation; error grows like `log n` instead of `n`.
pub fn pairwise_sum(v: &[f64]) -> f64 {
    if v.len() <= 32 {
        return v.iter().sum();
    }
    let mid = v.len() / 2;
    pairwise_sum(&v[..mid]) + pairwise_sum(&v[mid..])
}

/// Sample mean and its standard error (two-pass variance).
pub fn mean_stderr(v: &[f64]) -> (f64, f64) {
    let n = v.len();
    if n == 0 {
        return (f64::NAN, f64::NAN);
    }
    let mean = pairwise_sum(v) / n as f64;
    if n < 2 {
        return (mean, f64::NAN);
    }
    let dev: Vec<f64> = v.iter().map(|x| (x - mean) * (x - mean)).collect();
    let var = pairwise_sum(&dev) / (n - 1) as f64;
    (mean, (var / n as f64).sqrt())
}

/// Exact samples of `|U_T|` for the unreflected OU
/// `dU = q(m − U)dt + √ε ξ dB`, `U(0) = y₀`.
pub fn abs_ou_terminal_samples(
    q: f64,
    m: f64,
    xi: f64,
    y0: f64,
    horizon: f64,
    eps: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let decay = (-q * horizon).exp();
    let mean = decay * y0 + m * (1.0 - decay);
    let var = if q > 0.0 {
        eps * xi * xi * (1.0 - (-2.0 * q * horizon).exp()) / (2.0 * q)
    } else {
        eps * xi * xi * horizon
    };
    gaussian_abs_samples(mean, var.sqrt(), n, seed, 0)
}

/// Exact samples of `|y₀ + aT + √ε ξ B_T|`.
pub fn abs_bm_drift_terminal_samples(
    a: f64,
    xi: f64,
    y0: f64,
    horizon: f64,
    eps: f64,
    n: usize,
    seed: u64,
) -> Vec<f64> {
    let sd = (eps * horizon).sqrt() * xi;
    gaussian_abs_samples(y0 + a * horizon, sd, n, seed, 1)
}

fn gaussian_abs_samples(mean: f64, sd: f64, n: usize, seed: u64, index: u64) -> Vec<f64> {
    let mut rng = aux_rng(seed, index);
    (0..n)
        .map(|_| {
            let z: f64 = StandardNormal.sample(&mut rng);
            (mean + sd * z).abs()
        })
        .collect()
}

/// Pathwise bound on `max_{s≤t} Y(s)` for the reflected OU model.
pub fn gronwall_bound(q: f64, m: f64, xi: f64, y0: f64, eps: f64, t: f64, max_abs_b: f64) -> f64 {
    let g = (2.0 * q * t).exp();
    2.0 * g * y0 + m * (g - 1.0) + 2.0 * eps.sqrt() * xi * g * max_abs_b
}
