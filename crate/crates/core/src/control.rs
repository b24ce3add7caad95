//! Skeleton maps: the controlled equation `G`, the composite `f ↦ f̂`, and
//! the inverse-control operator.

use std::io::Write;

use crate::error::{invalid, Error, Result};
use crate::models::CoefficientSet;
use crate::paths::{reflect_values, Control, Path};

#[derive(Debug, Clone, PartialEq)]
pub struct ControlledSolution {
    pub phi: Path,
    pub reflected: Path,
    pub control: Control,
}

impl ControlledSolution {
    pub fn write_csv<W: Write>(&self, writer: W) -> Result<()> {
        let mut w = csv::Writer::from_writer(writer);
        w.write_record(["t", "phi", "reflected"])?;
        let grid = self.phi.grid();
        for (k, t) in grid.nodes().enumerate() {
            w.write_record([
                t.to_string(),
                self.phi.values()[k].to_string(),
                self.reflected.values()[k].to_string(),
            ])?;
        }
        w.flush()?;
        Ok(())
    }
}

/// One forward-Euler step of the controlled equation at the reflected state.
#[inline]
pub(crate) fn euler_step(cs: &CoefficientSet, t: f64, dt: f64, phi: f64, refl: f64, g: f64) -> f64 {
    phi + (cs.a(t, refl) + cs.c(t, refl) * g) * dt
}

/// Discrete `G`: `φ(k+1) = φ(k) + [a(t_k, Γφ(k)) + c(t_k, Γφ(k)) g(k)] Δt`,
/// with `Γφ` carried incrementally.
pub fn solve_controlled(cs: &CoefficientSet, y0: f64, g: &Control) -> Result<ControlledSolution> {
    if !(y0.is_finite() && y0 >= 0.0) {
        return Err(invalid(format!("y0 must be nonnegative, got {y0}")));
    }
    let grid = *g.grid();
    let dt = grid.dt();
    let n = grid.n_steps();
    let mut phi = Vec::with_capacity(n + 1);
    let mut refl = Vec::with_capacity(n + 1);
    phi.push(y0);
    refl.push(y0);
    let mut running_min = 0.0_f64;
    for (k, &gk) in g.derivative().iter().enumerate() {
        let next = euler_step(cs, grid.node(k), dt, phi[k], refl[k], gk);
        if !next.is_finite() {
            return Err(Error::NonFiniteState { step: k + 1 });
        }
        running_min = running_min.min(next);
        phi.push(next);
        refl.push(next - running_min);
    }
    Ok(ControlledSolution {
        phi: Path::from_raw(grid, phi),
        reflected: Path::from_raw(grid, refl),
        control: g.clone(),
    })
}

/// `f̂ = Γ(G ḟ)`.
pub fn hat_map(cs: &CoefficientSet, y0: f64, f: &Control) -> Result<Path> {
    Ok(solve_controlled(cs, y0, f)?.reflected)
}

/// Recovers the driving control from a path:
/// `ḟ(k) = [φ̇(k) − a(t_k, Γφ(k))] / c(t_k, Γφ(k))` with forward differences.
pub fn m_operator(cs: &CoefficientSet, y0: f64, phi: &Path) -> Result<Control> {
    if !cs.c_strictly_positive {
        return Err(Error::Hypothesis("the inverse-control map needs c > 0".into()));
    }
    if (phi.first() - y0).abs() > 1e-12 * (1.0 + y0.abs()) {
        return Err(invalid(format!("path starts at {}, expected y0 = {y0}", phi.first())));
    }
    let grid = *phi.grid();
    let refl = reflect_values(phi.values());
    let slopes = phi.forward_differences();
    let mut out = Vec::with_capacity(slopes.len());
    for (k, s) in slopes.iter().enumerate() {
        let t = grid.node(k);
        let c = cs.c(t, refl[k]);
        if !(c > 0.0) {
            return Err(Error::Hypothesis(format!("c(t={t}, x={}) = {c} is not positive", refl[k])));
        }
        out.push((s - cs.a(t, refl[k])) / c);
    }
    Control::new(grid, out)
}
