//! Uniformly sampled paths and controls on `[0, T]`, the Skorokhod map,
//! and the path functionals (sup norm, modulus of continuity, energy) used
//! by every other module.
//!
//! A [`Path`] is the discrete stand-in for a continuous function: node values
//! joined by straight lines. A [`Control`] is an element of the Cameron–Martin
//! space stored through its piecewise-constant derivative, so the control
//! itself is piecewise linear and starts at zero.

use std::collections::VecDeque;
use std::io::{Read, Write};

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};

/// Uniform time grid `0 = t_0 < t_1 < ... < t_n = T`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct TimeGrid {
    horizon: f64,
    n_steps: usize,
}

impl TimeGrid {
    pub fn new(horizon: f64, n_steps: usize) -> Result<Self> {
        if !(horizon.is_finite() && horizon > 0.0) {
            return Err(invalid(format!("horizon must be positive and finite, got {horizon}")));
        }
        if n_steps == 0 {
            return Err(invalid("n_steps must be at least 1"));
        }
        Ok(Self { horizon, n_steps })
    }

    pub fn horizon(&self) -> f64 {
        self.horizon
    }

    pub fn n_steps(&self) -> usize {
        self.n_steps
    }

    pub fn n_nodes(&self) -> usize {
        self.n_steps + 1
    }

    pub fn dt(&self) -> f64 {
        self.horizon / self.n_steps as f64
    }

    /// Node `k`, computed as `k·T/n` so that `node(n) == T` exactly.
    #[inline]
    pub fn node(&self, k: usize) -> f64 {
        if k == self.n_steps {
            self.horizon
        } else {
            k as f64 * self.horizon / self.n_steps as f64
        }
    }

    pub fn nodes(&self) -> impl Iterator<Item = f64> + '_ {
        (0..=self.n_steps).map(move |k| self.node(k))
    }

    /// Same horizon, `factor` times as many steps.
    pub fn refined(&self, factor: usize) -> Self {
        Self {
            horizon: self.horizon,
            n_steps: self.n_steps * factor.max(1),
        }
    }

    pub(crate) fn ensure_same(&self, other: &TimeGrid, what: &str) -> Result<()> {
        if self.n_steps != other.n_steps || (self.horizon - other.horizon).abs() > 1e-12 * self.horizon {
            return Err(Error::GridMismatch(format!(
                "{what}: grid (T={}, n={}) does not match (T={}, n={})",
                self.horizon, self.n_steps, other.horizon, other.n_steps
            )));
        }
        Ok(())
    }
}

/// Node values of a continuous path; linear between nodes.
#[derive(Debug, Clone, PartialEq)]
pub struct Path {
    grid: TimeGrid,
    values: Vec<f64>,
}

impl Path {
    pub fn new(grid: TimeGrid, values: Vec<f64>) -> Result<Self> {
        if values.len() != grid.n_nodes() {
            return Err(invalid(format!(
                "path needs {} node values, got {}",
                grid.n_nodes(),
                values.len()
            )));
        }
        if let Some(k) = values.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("path value at node {k} is not finite")));
        }
        Ok(Self { grid, values })
    }

    /// Internal constructor for values already known to be finite and sized.
    pub(crate) fn from_raw(grid: TimeGrid, values: Vec<f64>) -> Self {
        debug_assert_eq!(values.len(), grid.n_nodes());
        Self { grid, values }
    }

    pub fn from_fn(grid: TimeGrid, f: impl Fn(f64) -> f64) -> Result<Self> {
        Self::new(grid, grid.nodes().map(f).collect())
    }

    pub fn constant(grid: TimeGrid, value: f64) -> Result<Self> {
        Self::new(grid, vec![value; grid.n_nodes()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn values(&self) -> &[f64] {
        &self.values
    }

    pub fn into_values(self) -> Vec<f64> {
        self.values
    }

    pub fn first(&self) -> f64 {
        self.values[0]
    }

    pub fn last(&self) -> f64 {
        self.values[self.values.len() - 1]
    }

    /// Linear interpolation; `t` is clamped to `[0, T]`.
    pub fn value_at(&self, t: f64) -> f64 {
        let s = (t / self.grid.dt()).clamp(0.0, self.grid.n_steps() as f64);
        interpolate(&self.values, s)
    }

    /// Forward differences `(p_{k+1} - p_k)/Δt`, one per step.
    pub fn forward_differences(&self) -> Vec<f64> {
        let dt = self.grid.dt();
        self.values.windows(2).map(|w| (w[1] - w[0]) / dt).collect()
    }

    pub fn scaled(&self, alpha: f64) -> Path {
        Path::from_raw(self.grid, self.values.iter().map(|v| alpha * v).collect())
    }

    /// Writes `t,value` rows with shortest round-trip decimals.
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "value"])?;
        for (t, v) in self.grid.nodes().zip(&self.values) {
            w.write_record([t.to_string(), v.to_string()])?;
        }
        w.flush()?;
        Ok(())
    }

    /// Reads a `t,value` CSV. The grid is inferred from the node count and
    /// the last time stamp, and the time column must be uniform.
    pub fn read_csv<R: Read>(reader: R) -> Result<Path> {
        let mut r = csv::Reader::from_reader(reader);
        let headers = r.headers()?.clone();
        if headers.len() != 2 || &headers[0] != "t" || &headers[1] != "value" {
            return Err(invalid("path CSV must have header `t,value`"));
        }
        let mut ts = Vec::new();
        let mut vs = Vec::new();
        for record in r.records() {
            let record = record?;
            let parse = |s: &str| {
                s.trim()
                    .parse::<f64>()
                    .map_err(|_| invalid(format!("cannot parse `{s}` as a number")))
            };
            ts.push(parse(&record[0])?);
            vs.push(parse(&record[1])?);
        }
        if ts.len() < 2 {
            return Err(invalid("path CSV needs at least two rows"));
        }
        let grid = TimeGrid::new(ts[ts.len() - 1], ts.len() - 1)?;
        for (k, t) in ts.iter().enumerate() {
            if (t - grid.node(k)).abs() > 1e-9 * grid.horizon() {
                return Err(invalid(format!("path CSV time column is not uniform at row {k}")));
            }
        }
        Path::new(grid, vs)
    }
}

#[inline]
fn interpolate(values: &[f64], s: f64) -> f64 {
    let k = s.floor() as usize;
    if k + 1 >= values.len() {
        return values[values.len() - 1];
    }
    let lambda = s - k as f64;
    values[k] + lambda * (values[k + 1] - values[k])
}

/// Element of `H¹₀[0,T]` stored as its piecewise-constant derivative.
#[derive(Debug, Clone, PartialEq)]
pub struct Control {
    grid: TimeGrid,
    derivative: Vec<f64>,
}

impl Control {
    pub fn new(grid: TimeGrid, derivative: Vec<f64>) -> Result<Self> {
        if derivative.len() != grid.n_steps() {
            return Err(invalid(format!(
                "control needs {} derivative samples, got {}",
                grid.n_steps(),
                derivative.len()
            )));
        }
        if let Some(k) = derivative.iter().position(|v| !v.is_finite()) {
            return Err(invalid(format!("control derivative at step {k} is not finite")));
        }
        Ok(Self { grid, derivative })
    }

    pub(crate) fn from_raw(grid: TimeGrid, derivative: Vec<f64>) -> Self {
        debug_assert_eq!(derivative.len(), grid.n_steps());
        Self { grid, derivative }
    }

    pub fn zero(grid: TimeGrid) -> Self {
        Self::from_raw(grid, vec![0.0; grid.n_steps()])
    }

    pub fn constant(grid: TimeGrid, rate: f64) -> Result<Self> {
        Self::new(grid, vec![rate; grid.n_steps()])
    }

    pub fn grid(&self) -> &TimeGrid {
        &self.grid
    }

    pub fn derivative(&self) -> &[f64] {
        &self.derivative
    }

    pub fn energy(&self) -> f64 {
        control_energy(self)
    }

    pub fn integrate(&self) -> Path {
        integrate_control(self)
    }
}

/// Discrete Skorokhod map: `p_k - min_{j<=k} min(p_j, 0)`, one pass.
pub fn skorokhod_map(input: &Path) -> Path {
    Path::from_raw(input.grid, reflect_values(&input.values))
}

pub(crate) fn reflect_values(values: &[f64]) -> Vec<f64> {
    let mut running_min = 0.0_f64;
    values
        .iter()
        .map(|&v| {
            running_min = running_min.min(v);
            v - running_min
        })
        .collect()
}

pub fn sup_norm(p: &Path) -> f64 {
    p.values.iter().fold(0.0, |acc, v| acc.max(v.abs()))
}

/// Largest `|p(t) - p(s)|` over `|t - s| <= delta` for the piecewise-linear
/// interpolant.
///
/// The difference `p(t) - p(s)` is linear on every grid cell of the
/// `(s, t)` plane, so its extremes on the band `0 <= t - s <= delta` sit
/// at node pairs or at pairs `(t_i, t_i ± delta)` with one end off-node.
/// Both families are scanned with monotone deques, so the cost is O(n).
pub fn modulus_of_continuity(p: &Path, delta: f64) -> Result<f64> {
    let horizon = p.grid.horizon();
    if !(delta > 0.0 && delta <= horizon * (1.0 + 1e-12)) {
        return Err(invalid(format!("delta must lie in (0, T], got {delta}")));
    }
    let n = p.grid.n_steps();
    let v = &p.values;
    let ratio = (delta / p.grid.dt()).min(n as f64);
    let mut width = ratio.floor() as usize;
    let mut frac = ratio - width as f64;
    // Treat ratios within rounding of an integer as exact.
    if 1.0 - frac < 1e-9 {
        width += 1;
        frac = 0.0;
    } else if frac < 1e-9 {
        frac = 0.0;
    }
    let width = width.min(n);

    let mut best = 0.0_f64;
    // Node pairs (i, j) with j - i <= width: sliding max/min over windows.
    if width > 0 {
        let mut maxq: VecDeque<usize> = VecDeque::new();
        let mut minq: VecDeque<usize> = VecDeque::new();
        for j in 0..=n {
            while maxq.back().is_some_and(|&b| v[b] <= v[j]) {
                maxq.pop_back();
            }
            maxq.push_back(j);
            while minq.back().is_some_and(|&b| v[b] >= v[j]) {
                minq.pop_back();
            }
            minq.push_back(j);
            let lo = j.saturating_sub(width);
            while maxq.front().is_some_and(|&f| f < lo) {
                maxq.pop_front();
            }
            while minq.front().is_some_and(|&f| f < lo) {
                minq.pop_front();
            }
            let hi = v[*maxq.front().unwrap()];
            let lo_v = v[*minq.front().unwrap()];
            best = best.max(hi - v[j]).max(v[j] - lo_v).max(hi - lo_v);
        }
    }
    // Off-node partners at distance exactly delta.
    if frac > 0.0 {
        for i in 0..=n {
            let fwd = i as f64 + ratio;
            if fwd <= n as f64 {
                best = best.max((interpolate(v, fwd) - v[i]).abs());
            }
            let back = i as f64 - ratio;
            if back >= 0.0 {
                best = best.max((interpolate(v, back) - v[i]).abs());
            }
        }
    }
    Ok(best)
}

/// `½∫ḟ² = ½·Δt·Σ ḟ_k²`.
pub fn control_energy(f: &Control) -> f64 {
    0.5 * f.grid.dt() * f.derivative.iter().map(|d| d * d).sum::<f64>()
}

/// `f(t_k) = Δt·Σ_{j<k} ḟ_j`, with `f(0) = 0`.
pub fn integrate_control(f: &Control) -> Path {
    Path::from_raw(f.grid, cumulative(&f.derivative, f.grid.dt(), 0.0))
}

pub(crate) fn cumulative(rates: &[f64], dt: f64, start: f64) -> Vec<f64> {
    let mut out = Vec::with_capacity(rates.len() + 1);
    let mut acc = start;
    out.push(acc);
    for r in rates {
        acc += r * dt;
        out.push(acc);
    }
    out
}
