//! Rate functions of the small-noise LDP, evaluated by optimizing over
//! piecewise-constant controls, plus the closed forms used as oracles.

use serde::{Deserialize, Serialize};

use crate::control::{hat_map, m_operator};
use crate::error::{invalid, Error, Result};
use crate::models::{Family, ModelSpec};
use crate::optim::{bfgs, multistart, smooth_starts, MultiStartResult, Objective, OptimizerConfig};
use crate::paths::{Control, Path, TimeGrid};

/// Integrated squared volatility below this is treated as zero.
pub const DEGENERATE_THRESHOLD: f64 = 1e-14;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", content = "value", rename_all = "snake_case")]
pub enum RateValue {
    Finite(f64),
    Infinite,
}

impl RateValue {
    pub fn finite(self) -> Option<f64> {
        match self {
            RateValue::Finite(v) => Some(v),
            RateValue::Infinite => None,
        }
    }

    pub fn is_infinite(self) -> bool {
        matches!(self, RateValue::Infinite)
    }

    fn min(self, other: RateValue) -> RateValue {
        match (self, other) {
            (RateValue::Finite(a), RateValue::Finite(b)) => RateValue::Finite(a.min(b)),
            (RateValue::Finite(a), RateValue::Infinite) | (RateValue::Infinite, RateValue::Finite(a)) => {
                RateValue::Finite(a)
            }
            _ => RateValue::Infinite,
        }
    }
}

/// Which part of the rate function produced the reported value.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum Branch {
    /// Optimization over controls with non-degenerate volatility.
    Regular,
    /// Controls whose skeleton volatility vanishes identically.
    Degenerate,
    /// No optimization needed.
    Direct,
}

#[derive(Debug, Clone, PartialEq)]
pub struct RateResult {
    pub value: RateValue,
    pub branch: Branch,
    /// Value of the regular branch when it was evaluated.
    pub regular_value: Option<RateValue>,
    /// `½ inf ∫ḟ²` over the degenerate set when it was evaluated.
    pub degenerate_value: Option<f64>,
    pub minimizer_f: Control,
    pub minimizer_g: Option<Path>,
    pub n_starts: usize,
    pub converged_starts: usize,
    pub best_gradient_norm: f64,
    pub grid: TimeGrid,
}

// ---------------------------------------------------------------------------
// Forward sweeps with cached prefixes.

/// An objective computed by one forward recursion over the control samples.
/// Perturbing `z_i` leaves the states before step `i` unchanged, so the
/// finite-difference gradient restarts each perturbed sweep at step `i`.
pub(crate) trait Sweep: Sync {
    type State: Copy + Send;
    fn n(&self) -> usize;
    fn init(&self) -> Self::State;
    fn step(&self, k: usize, zk: f64, s: &Self::State) -> Self::State;
    fn finish(&self, s: &Self::State) -> f64;

    fn run(&self, z: &[f64]) -> f64 {
        let mut s = self.init();
        for (k, &zk) in z.iter().enumerate() {
            s = self.step(k, zk, &s);
        }
        self.finish(&s)
    }
}

pub(crate) struct Swept<'a, S>(pub &'a S);

impl<S: Sweep> Objective for Swept<'_, S> {
    fn dim(&self) -> usize {
        self.0.n()
    }

    fn value(&self, z: &[f64]) -> f64 {
        self.0.run(z)
    }

    fn gradient(&self, z: &[f64], h: f64, grad: &mut [f64]) {
        let sw = self.0;
        let n = z.len();
        let mut states = Vec::with_capacity(n + 1);
        let mut s = sw.init();
        states.push(s);
        for (k, &zk) in z.iter().enumerate() {
            s = sw.step(k, zk, &s);
            states.push(s);
        }
        for i in 0..n {
            let step = h * z[i].abs().max(1.0);
            let tail = |zi: f64| {
                let mut s = sw.step(i, zi, &states[i]);
                for (k, &zk) in z.iter().enumerate().skip(i + 1) {
                    s = sw.step(k, zk, &s);
                }
                sw.finish(&s)
            };
            grad[i] = (tail(z[i] + step) - tail(z[i] - step)) / (2.0 * step);
        }
    }
}

#[derive(Debug, Clone, Copy)]
struct SkeletonState {
    phi: f64,
    running_min: f64,
}

impl SkeletonState {
    fn start(y0: f64) -> Self {
        Self { phi: y0, running_min: 0.0 }
    }

    #[inline]
    fn reflected(&self) -> f64 {
        self.phi - self.running_min
    }

    #[inline]
    fn advance(&self, spec: &ModelSpec, t: f64, dt: f64, fdot: f64) -> Self {
        let refl = self.reflected();
        let cs = &spec.coefficients;
        let phi = self.phi + (cs.a(t, refl) + cs.c(t, refl) * fdot) * dt;
        Self { phi, running_min: self.running_min.min(phi) }
    }
}

struct Scaling {
    grid: TimeGrid,
    dt: f64,
    sdt: f64,
}

impl Scaling {
    fn new(grid: TimeGrid) -> Self {
        Self { grid, dt: grid.dt(), sdt: grid.dt().sqrt() }
    }
}

fn z_to_control(grid: TimeGrid, z: &[f64]) -> Control {
    let sdt = grid.dt().sqrt();
    Control::from_raw(grid, z.iter().map(|v| v / sdt).collect())
}

fn control_to_z(f: &Control) -> Vec<f64> {
    let sdt = f.grid().dt().sqrt();
    f.derivative().iter().map(|v| v * sdt).collect()
}

// ---------------------------------------------------------------------------
// Ĩ_T.

struct ItildeSweep<'a> {
    spec: &'a ModelSpec,
    x: f64,
    sc: Scaling,
    rho_bar_sq: f64,
}

#[derive(Debug, Clone, Copy)]
struct ItildeState {
    sk: SkeletonState,
    drift_int: f64,
    var_int: f64,
    energy: f64,
}

impl Sweep for ItildeSweep<'_> {
    type State = ItildeState;

    fn n(&self) -> usize {
        self.sc.grid.n_steps()
    }

    fn init(&self) -> ItildeState {
        ItildeState { sk: SkeletonState::start(self.spec.y0), drift_int: 0.0, var_int: 0.0, energy: 0.0 }
    }

    #[inline]
    fn step(&self, k: usize, zk: f64, s: &ItildeState) -> ItildeState {
        let t = self.sc.grid.node(k);
        let fdot = zk / self.sc.sdt;
        let refl = s.sk.reflected();
        let cs = &self.spec.coefficients;
        let sig = cs.sigma(t, refl);
        ItildeState {
            sk: s.sk.advance(self.spec, t, self.sc.dt, fdot),
            drift_int: s.drift_int + (cs.b(t, refl) + self.spec.rho * sig * fdot) * self.sc.dt,
            var_int: s.var_int + sig * sig * self.sc.dt,
            energy: s.energy + 0.5 * zk * zk,
        }
    }

    fn finish(&self, s: &ItildeState) -> f64 {
        if !(s.var_int >= DEGENERATE_THRESHOLD) || !s.sk.phi.is_finite() {
            return f64::INFINITY;
        }
        let num = self.x - s.drift_int;
        num * num / (2.0 * self.rho_bar_sq * s.var_int) + s.energy
    }
}

/// `(x − ∫[b + ρσḟ])² / (2ρ̄²∫σ²) + ½∫ḟ²` along `f̂ = Γ(Gḟ)`.
pub fn itilde_objective(spec: &ModelSpec, x: f64, f: &Control) -> Result<f64> {
    check_horizon(spec, f.grid())?;
    let grid = *f.grid();
    let fh = hat_map(&spec.coefficients, spec.y0, f)?;
    let cs = &spec.coefficients;
    let dt = grid.dt();
    let (mut drift, mut var) = (0.0, 0.0);
    for (k, &fd) in f.derivative().iter().enumerate() {
        let t = grid.node(k);
        let y = fh.values()[k];
        let sig = cs.sigma(t, y);
        drift += (cs.b(t, y) + spec.rho * sig * fd) * dt;
        var += sig * sig * dt;
    }
    if !(var >= DEGENERATE_THRESHOLD) {
        return Err(Error::DegenerateDenominator(var));
    }
    let num = x - drift;
    Ok(num * num / (2.0 * (1.0 - spec.rho * spec.rho) * var) + f.energy())
}

fn check_horizon(spec: &ModelSpec, grid: &TimeGrid) -> Result<()> {
    if (grid.horizon() - spec.horizon).abs() > 1e-12 * spec.horizon {
        return Err(Error::GridMismatch(format!(
            "grid horizon {} differs from model horizon {}",
            grid.horizon(),
            spec.horizon
        )));
    }
    Ok(())
}

fn require_converged(ms: &MultiStartResult, n_starts: usize) -> Result<()> {
    if ms.converged_starts() == 0 {
        return Err(Error::NonConvergence {
            n_starts,
            best_value: ms.best.value,
            best_gradient_norm: ms.best.gradient_norm,
        });
    }
    Ok(())
}

/// `∫₀ᵀ b(s, 0) ds`: the only target reachable with zero volatility.
fn zero_vol_drift(spec: &ModelSpec, grid: &TimeGrid) -> f64 {
    let dt = grid.dt();
    (0..grid.n_steps()).map(|k| spec.coefficients.b(grid.node(k), 0.0) * dt).sum()
}

/// Whether the degenerate branch is part of `Ĩ_T(x)`.
pub fn degenerate_branch_applies(spec: &ModelSpec, grid: &TimeGrid, x: f64) -> bool {
    !spec.coefficients.sigma_strictly_positive
        && spec.y0 == 0.0
        && (x - zero_vol_drift(spec, grid)).abs() <= 1e-12 * (1.0 + x.abs())
}

pub fn itilde(spec: &ModelSpec, x: f64, grid: TimeGrid, opt: &OptimizerConfig) -> Result<RateResult> {
    itilde_warm(spec, x, grid, opt, &[])
}

/// `Ĩ_T(x)` with extra starting points (in `z` coordinates) added to the
/// multi-start pool.
pub(crate) fn itilde_warm(
    spec: &ModelSpec,
    x: f64,
    grid: TimeGrid,
    opt: &OptimizerConfig,
    extra_starts: &[Vec<f64>],
) -> Result<RateResult> {
    opt.validate()?;
    check_horizon(spec, &grid)?;
    if !x.is_finite() {
        return Err(invalid(format!("target x must be finite, got {x}")));
    }
    let sweep = ItildeSweep {
        spec,
        x,
        sc: Scaling::new(grid),
        rho_bar_sq: 1.0 - spec.rho * spec.rho,
    };
    let obj = Swept(&sweep);
    let mut starts = smooth_starts(&grid, opt);
    if !sweep.run(&starts[0]).is_finite() {
        // zero volatility along the zero control: start just inside instead
        starts[0] = vec![opt.start_scale * grid.dt().sqrt(); grid.n_steps()];
    }
    starts.extend(extra_starts.iter().filter(|z| z.len() == grid.n_steps()).cloned());
    let ms = multistart(&obj, &starts, opt);
    require_converged(&ms, starts.len())?;
    let regular = RateValue::Finite(ms.best.value);
    let mut result = RateResult {
        value: regular,
        branch: Branch::Regular,
        regular_value: Some(regular),
        degenerate_value: None,
        minimizer_f: z_to_control(grid, &ms.best.z),
        minimizer_g: None,
        n_starts: starts.len(),
        converged_starts: ms.converged_starts(),
        best_gradient_norm: ms.best.gradient_norm,
        grid,
    };
    if degenerate_branch_applies(spec, &grid, x) {
        let (inf_energy, minimizer) = degenerate_infimum(spec, grid, opt)?;
        let half = 0.5 * inf_energy;
        result.degenerate_value = Some(half);
        if half < ms.best.value {
            result.value = RateValue::Finite(half);
            result.branch = Branch::Degenerate;
            result.minimizer_f = minimizer;
        }
        result.value = result.value.min(regular);
    }
    Ok(result)
}

/// `inf ∫ḟ²` over controls with `Γ(Gḟ) ≡ 0`, started at `y₀ = 0`, with the
/// minimizing control.
fn degenerate_infimum(spec: &ModelSpec, grid: TimeGrid, opt: &OptimizerConfig) -> Result<(f64, Control)> {
    match spec.coefficients.family {
        Family::ReflectedBmDrift { .. } => l1_infimum_with_minimizer(spec, grid, opt),
        _ => l1_penalty(spec, grid, opt),
    }
}

// ---------------------------------------------------------------------------
// Degenerate set.

/// `inf_{f∈L₁} ∫ḟ² = a²T/ξ²` for the reflected drifted Brownian motion from
/// zero, cross-checked by a penalized optimization of `ḟ ≤ −a/ξ`.
pub fn l1_infimum(spec: &ModelSpec, grid: TimeGrid, opt: &OptimizerConfig) -> Result<f64> {
    Ok(l1_infimum_with_minimizer(spec, grid, opt)?.0)
}

fn l1_infimum_with_minimizer(spec: &ModelSpec, grid: TimeGrid, opt: &OptimizerConfig) -> Result<(f64, Control)> {
    let Family::ReflectedBmDrift { a, xi, .. } = spec.coefficients.family else {
        return Err(invalid(format!(
            "the closed-form degenerate infimum needs reflected_bm_drift, got {}",
            spec.coefficients.family_name()
        )));
    };
    if spec.y0 != 0.0 {
        return Err(invalid("the degenerate set is empty unless y0 = 0"));
    }
    opt.validate()?;
    check_horizon(spec, &grid)?;
    let closed = a * a * spec.horizon / (xi * xi);
    let bound = -a / xi;
    let n = grid.n_steps();
    let dt = grid.dt();
    let sdt = dt.sqrt();
    let mut z = vec![0.0; n];
    for &mu in &opt.constraint_penalty_schedule {
        let obj = (n, move |z: &[f64]| {
            z.iter()
                .map(|&zk| {
                    let viol = (zk / sdt - bound).max(0.0);
                    0.5 * zk * zk + mu * viol * viol * dt
                })
                .sum::<f64>()
        });
        z = bfgs(&obj, &z, opt).z;
    }
    // restore feasibility
    let fdot: Vec<f64> = z.iter().map(|zk| (zk / sdt).min(bound)).collect();
    let minimizer = Control::new(grid, fdot)?;
    let fh = hat_map(&spec.coefficients, 0.0, &minimizer)?;
    let residual = fh.values().iter().fold(0.0_f64, |m, v| m.max(v.abs()));
    let numeric = 2.0 * minimizer.energy();
    if (numeric - closed).abs() > 1e-4 || residual > 1e-9 {
        return Err(Error::CrossCheck(format!(
            "degenerate infimum: closed form {closed}, penalized optimum {numeric}, residual {residual:e}"
        )));
    }
    Ok((closed, minimizer))
}

struct PenaltySweep<'a> {
    spec: &'a ModelSpec,
    sc: Scaling,
    mu: f64,
}

#[derive(Debug, Clone, Copy)]
struct PenaltyState {
    sk: SkeletonState,
    max_refl: f64,
    energy: f64,
}

impl Sweep for PenaltySweep<'_> {
    type State = PenaltyState;

    fn n(&self) -> usize {
        self.sc.grid.n_steps()
    }

    fn init(&self) -> PenaltyState {
        PenaltyState { sk: SkeletonState::start(self.spec.y0), max_refl: 0.0, energy: 0.0 }
    }

    fn step(&self, k: usize, zk: f64, s: &PenaltyState) -> PenaltyState {
        let sk = s.sk.advance(self.spec, self.sc.grid.node(k), self.sc.dt, zk / self.sc.sdt);
        PenaltyState { sk, max_refl: s.max_refl.max(sk.reflected()), energy: s.energy + 0.5 * zk * zk }
    }

    fn finish(&self, s: &PenaltyState) -> f64 {
        s.energy + self.mu * s.max_refl * s.max_refl
    }
}

/// Generic degenerate branch: energy plus `μ·(max_k f̂_k)²` along an
/// increasing penalty schedule (the final weight is the largest entry).
fn l1_penalty(spec: &ModelSpec, grid: TimeGrid, opt: &OptimizerConfig) -> Result<(f64, Control)> {
    let mut z = vec![0.0; grid.n_steps()];
    let mut last = None;
    for &mu in &opt.constraint_penalty_schedule {
        let sweep = PenaltySweep { spec, sc: Scaling::new(grid), mu };
        let r = bfgs(&Swept(&sweep), &z, opt);
        z = r.z.clone();
        last = Some(r);
    }
    let r = last.expect("schedule is non-empty");
    if !r.reason.converged() {
        return Err(Error::NonConvergence { n_starts: 1, best_value: r.value, best_gradient_norm: r.gradient_norm });
    }
    let f = z_to_control(grid, &z);
    Ok((2.0 * f.energy(), f))
}

// ---------------------------------------------------------------------------
// Q̃_T for a fixed path.

struct QtildeSweep<'a> {
    spec: &'a ModelSpec,
    sc: Scaling,
    gdot: Vec<f64>,
    rho_bar: f64,
}

#[derive(Debug, Clone, Copy)]
struct QtildeState {
    sk: SkeletonState,
    cost: f64,
    energy: f64,
}

impl Sweep for QtildeSweep<'_> {
    type State = QtildeState;

    fn n(&self) -> usize {
        self.sc.grid.n_steps()
    }

    fn init(&self) -> QtildeState {
        QtildeState { sk: SkeletonState::start(self.spec.y0), cost: 0.0, energy: 0.0 }
    }

    fn step(&self, k: usize, zk: f64, s: &QtildeState) -> QtildeState {
        let t = self.sc.grid.node(k);
        let fdot = zk / self.sc.sdt;
        let refl = s.sk.reflected();
        let cs = &self.spec.coefficients;
        let sig = cs.sigma(t, refl);
        let term = (self.gdot[k] - cs.b(t, refl) - self.spec.rho * sig * fdot) / (self.rho_bar * sig);
        QtildeState {
            sk: s.sk.advance(self.spec, t, self.sc.dt, fdot),
            cost: s.cost + 0.5 * term * term * self.sc.dt,
            energy: s.energy + 0.5 * zk * zk,
        }
    }

    fn finish(&self, s: &QtildeState) -> f64 {
        s.cost + s.energy
    }
}

fn require_positive_sigma(spec: &ModelSpec) -> Result<()> {
    if !spec.coefficients.sigma_strictly_positive {
        return Err(Error::Hypothesis(format!(
            "{} does not have a strictly positive volatility map",
            spec.coefficients.family_name()
        )));
    }
    Ok(())
}

/// `inf_f ½∫[(ġ − b − ρσḟ)/(ρ̄σ)]² + ½∫ḟ²` along `f̂`.
pub fn qtilde(spec: &ModelSpec, g: &Path, opt: &OptimizerConfig) -> Result<RateResult> {
    require_positive_sigma(spec)?;
    opt.validate()?;
    let grid = *g.grid();
    check_horizon(spec, &grid)?;
    if g.first().abs() > 1e-12 {
        return Err(invalid(format!("g must start at 0, got {}", g.first())));
    }
    let sweep = QtildeSweep {
        spec,
        sc: Scaling::new(grid),
        gdot: g.forward_differences(),
        rho_bar: spec.rho_bar(),
    };
    let starts = smooth_starts(&grid, opt);
    let ms = multistart(&Swept(&sweep), &starts, opt);
    require_converged(&ms, starts.len())?;
    Ok(RateResult {
        value: RateValue::Finite(ms.best.value),
        branch: Branch::Regular,
        regular_value: Some(RateValue::Finite(ms.best.value)),
        degenerate_value: None,
        minimizer_f: z_to_control(grid, &ms.best.z),
        minimizer_g: Some(g.clone()),
        n_starts: starts.len(),
        converged_starts: ms.converged_starts(),
        best_gradient_norm: ms.best.gradient_norm,
        grid,
    })
}

/// Evaluates the `Q̃_T` integrand sum for a given `(f, g)` pair.
pub fn qtilde_objective(spec: &ModelSpec, g: &Path, f: &Control) -> Result<f64> {
    require_positive_sigma(spec)?;
    f.grid().ensure_same(g.grid(), "qtilde_objective")?;
    let sweep = QtildeSweep {
        spec,
        sc: Scaling::new(*g.grid()),
        gdot: g.forward_differences(),
        rho_bar: spec.rho_bar(),
    };
    Ok(sweep.run(&control_to_z(f)))
}

// ---------------------------------------------------------------------------
// Barrier sets.

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum BarrierKind {
    UpIn,
    UpOut,
    DownIn,
    DownOut,
}

impl BarrierKind {
    pub fn is_up(self) -> bool {
        matches!(self, BarrierKind::UpIn | BarrierKind::UpOut)
    }

    pub fn is_hitting(self) -> bool {
        matches!(self, BarrierKind::UpIn | BarrierKind::DownIn)
    }
}

/// Paths `g` of the centered log-price that touch (in) or avoid (out) the
/// level `log K − x₀` at some grid node.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct BarrierSet {
    pub kind: BarrierKind,
    pub barrier: f64,
}

impl BarrierSet {
    pub(crate) fn level(&self, spec: &ModelSpec) -> Result<f64> {
        if !(self.barrier.is_finite() && self.barrier > 0.0) {
            return Err(invalid(format!("barrier must be positive, got {}", self.barrier)));
        }
        if self.kind.is_up() && !(spec.s0 < self.barrier) {
            return Err(invalid(format!("up barrier {} must lie above s0 = {}", self.barrier, spec.s0)));
        }
        if !self.kind.is_up() && !(self.barrier < spec.s0) {
            return Err(invalid(format!("down barrier {} must lie below s0 = {}", self.barrier, spec.s0)));
        }
        Ok(self.barrier.ln() - spec.x0())
    }
}

/// Drift increments `δ_k = (b + ρσḟ)Δt` and variance increments
/// `ω_k = ρ̄²σ²Δt` along `f̂`.
fn drift_variance(spec: &ModelSpec, sc: &Scaling, z: &[f64]) -> (Vec<f64>, Vec<f64>) {
    let cs = &spec.coefficients;
    let rbs = 1.0 - spec.rho * spec.rho;
    let mut sk = SkeletonState::start(spec.y0);
    let mut delta = Vec::with_capacity(z.len());
    let mut omega = Vec::with_capacity(z.len());
    for (k, &zk) in z.iter().enumerate() {
        let t = sc.grid.node(k);
        let fdot = zk / sc.sdt;
        let refl = sk.reflected();
        let sig = cs.sigma(t, refl);
        delta.push((cs.b(t, refl) + spec.rho * sig * fdot) * sc.dt);
        omega.push(rbs * sig * sig * sc.dt);
        sk = sk.advance(spec, t, sc.dt, fdot);
    }
    (delta, omega)
}

struct HittingSweep<'a> {
    spec: &'a ModelSpec,
    sc: Scaling,
    level: f64,
    up: bool,
}

#[derive(Debug, Clone, Copy)]
struct HittingState {
    sk: SkeletonState,
    d: f64,
    w: f64,
    best: f64,
    energy: f64,
}

impl Sweep for HittingSweep<'_> {
    type State = HittingState;

    fn n(&self) -> usize {
        self.sc.grid.n_steps()
    }

    fn init(&self) -> HittingState {
        HittingState { sk: SkeletonState::start(self.spec.y0), d: 0.0, w: 0.0, best: f64::INFINITY, energy: 0.0 }
    }

    fn step(&self, k: usize, zk: f64, s: &HittingState) -> HittingState {
        let t = self.sc.grid.node(k);
        let fdot = zk / self.sc.sdt;
        let refl = s.sk.reflected();
        let cs = &self.spec.coefficients;
        let sig = cs.sigma(t, refl);
        let d = s.d + (cs.b(t, refl) + self.spec.rho * sig * fdot) * self.sc.dt;
        let w = s.w + (1.0 - self.spec.rho * self.spec.rho) * sig * sig * self.sc.dt;
        let gap = (if self.up { self.level - d } else { d - self.level }).max(0.0);
        HittingState {
            sk: s.sk.advance(self.spec, t, self.sc.dt, fdot),
            d,
            w,
            best: s.best.min(gap * gap / (2.0 * w)),
            energy: s.energy + 0.5 * zk * zk,
        }
    }

    fn finish(&self, s: &HittingState) -> f64 {
        s.best + s.energy
    }
}

/// Cheapest path that reaches `level` at some node, for fixed increments.
/// Returns the cost and the path.
fn hitting_path(delta: &[f64], omega: &[f64], level: f64, up: bool) -> (f64, Vec<f64>) {
    let (mut d, mut w) = (0.0, 0.0);
    let mut best = (f64::INFINITY, 0usize, 0.0);
    for k in 0..delta.len() {
        d += delta[k];
        w += omega[k];
        let gap = (if up { level - d } else { d - level }).max(0.0);
        let cost = gap * gap / (2.0 * w);
        if cost < best.0 {
            best = (cost, k + 1, (if up { gap } else { -gap }) / w);
        }
    }
    let (cost, hit, lambda) = best;
    let mut g = Vec::with_capacity(delta.len() + 1);
    g.push(0.0);
    let mut acc = 0.0;
    for k in 0..delta.len() {
        acc += delta[k] + if k < hit { lambda * omega[k] } else { 0.0 };
        g.push(acc);
    }
    (cost, g)
}

/// Cheapest path that stays on the allowed side of `level` at every node
/// `j ≥ 1`. In the variance clock `τ_j = Σ_{k<j} ω_k` the deviation from
/// the drift path is an energy-minimizing curve below the obstacle
/// `level − D_j` (mirrored for down sets); the minimizer is the greatest
/// convex minorant of the obstacle, pinned at the origin and flat after its
/// lowest point.
fn avoiding_path(delta: &[f64], omega: &[f64], level: f64, up: bool) -> (f64, Vec<f64>) {
    let sgn = if up { 1.0 } else { -1.0 };
    let n = delta.len();
    let mut tau = Vec::with_capacity(n + 1);
    let mut obstacle = Vec::with_capacity(n + 1);
    let mut drift = Vec::with_capacity(n + 1);
    let (mut d, mut w) = (0.0, 0.0);
    tau.push(0.0);
    obstacle.push(0.0);
    drift.push(0.0);
    for k in 0..n {
        d += delta[k];
        w += omega[k];
        tau.push(w);
        drift.push(d);
        obstacle.push(sgn * (level - d));
    }
    // leftmost lowest point; the origin counts
    let mut low = 0;
    for j in 1..=n {
        if obstacle[j] < obstacle[low] {
            low = j;
        }
    }
    let mut hull: Vec<usize> = vec![0];
    for j in 1..=low {
        while hull.len() >= 2 {
            let (a, b) = (hull[hull.len() - 2], hull[hull.len() - 1]);
            let cross = (tau[b] - tau[a]) * (obstacle[j] - obstacle[a]) - (obstacle[b] - obstacle[a]) * (tau[j] - tau[a]);
            if cross <= 0.0 {
                hull.pop();
            } else {
                break;
            }
        }
        hull.push(j);
    }
    let mut dev = vec![obstacle[low]; n + 1];
    let mut cost = 0.0;
    for seg in hull.windows(2) {
        let (a, b) = (seg[0], seg[1]);
        let slope = (obstacle[b] - obstacle[a]) / (tau[b] - tau[a]);
        for j in a..=b {
            dev[j] = obstacle[a] + slope * (tau[j] - tau[a]);
        }
        cost += slope * slope * (tau[b] - tau[a]) / 2.0;
    }
    dev[0] = 0.0;
    let g = (0..=n).map(|j| drift[j] + sgn * dev[j]).collect();
    (cost, g)
}

/// `inf_{g ∈ A} Q̃_T(g)` for a barrier set `A`. The inner minimization over
/// `g` has a closed form for fixed `f`, so only `f` is optimized.
pub fn qtilde_pathset_inf(spec: &ModelSpec, set: BarrierSet, grid: TimeGrid, opt: &OptimizerConfig) -> Result<RateResult> {
    require_positive_sigma(spec)?;
    opt.validate()?;
    check_horizon(spec, &grid)?;
    let level = set.level(spec)?;
    let up = set.kind.is_up();
    let starts = smooth_starts(&grid, opt);
    let ms = if set.kind.is_hitting() {
        let sweep = HittingSweep { spec, sc: Scaling::new(grid), level, up };
        multistart(&Swept(&sweep), &starts, opt)
    } else {
        let sc = Scaling::new(grid);
        let obj = (grid.n_steps(), |z: &[f64]| {
            let (delta, omega) = drift_variance(spec, &sc, z);
            avoiding_path(&delta, &omega, level, up).0 + 0.5 * z.iter().map(|v| v * v).sum::<f64>()
        });
        multistart(&obj, &starts, opt)
    };
    require_converged(&ms, starts.len())?;
    let (delta, omega) = drift_variance(spec, &Scaling::new(grid), &ms.best.z);
    let (_, g) = if set.kind.is_hitting() {
        hitting_path(&delta, &omega, level, up)
    } else {
        avoiding_path(&delta, &omega, level, up)
    };
    Ok(RateResult {
        value: RateValue::Finite(ms.best.value),
        branch: Branch::Regular,
        regular_value: Some(RateValue::Finite(ms.best.value)),
        degenerate_value: None,
        minimizer_f: z_to_control(grid, &ms.best.z),
        minimizer_g: Some(Path::from_raw(grid, g)),
        n_starts: starts.len(),
        converged_starts: ms.converged_starts(),
        best_gradient_norm: ms.best.gradient_norm,
        grid,
    })
}

// ---------------------------------------------------------------------------
// J for the volatility driver.

/// `J(φ) = ½∫(𝓝φ)²`; infinite when `φ(0) ≠ y₀`.
pub fn j_rate(spec: &ModelSpec, target: &Path) -> Result<RateResult> {
    if !spec.coefficients.c_strictly_positive {
        return Err(Error::Hypothesis("J needs c > 0".into()));
    }
    let grid = *target.grid();
    check_horizon(spec, &grid)?;
    let base = RateResult {
        value: RateValue::Infinite,
        branch: Branch::Direct,
        regular_value: None,
        degenerate_value: None,
        minimizer_f: Control::zero(grid),
        minimizer_g: None,
        n_starts: 0,
        converged_starts: 0,
        best_gradient_norm: 0.0,
        grid,
    };
    if (target.first() - spec.y0).abs() > 1e-12 * (1.0 + spec.y0) {
        return Ok(base);
    }
    let f = m_operator(&spec.coefficients, spec.y0, target)?;
    let value = f.energy();
    if !value.is_finite() {
        return Ok(base);
    }
    Ok(RateResult { value: RateValue::Finite(value), minimizer_f: f, ..base })
}
