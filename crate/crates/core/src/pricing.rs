//! Monte Carlo prices at finite ε and the reports that compare their decay
//! with the variational rates.

use serde::{Deserialize, Serialize};

use crate::error::{invalid, Error, Result};
use crate::models::{Family, ModelSpec};
use crate::optim::OptimizerConfig;
use crate::paths::TimeGrid;
use crate::rate::{itilde, itilde_warm, qtilde_pathset_inf, BarrierKind, BarrierSet, RateValue};
use crate::simulate::{batch_estimate_with, max_of, min_of, MCEstimate, ReplicaView};
use crate::stats::{extrapolate_to_zero, Extrapolation};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OptionKind {
    BinaryUpIn,
    BinaryUpOut,
    BinaryDownIn,
    BinaryDownOut,
    DigitalCall,
    VanillaCall,
}

impl OptionKind {
    pub fn barrier_kind(self) -> Option<BarrierKind> {
        match self {
            OptionKind::BinaryUpIn => Some(BarrierKind::UpIn),
            OptionKind::BinaryUpOut => Some(BarrierKind::UpOut),
            OptionKind::BinaryDownIn => Some(BarrierKind::DownIn),
            OptionKind::BinaryDownOut => Some(BarrierKind::DownOut),
            _ => None,
        }
    }
}

/// `strike` is the barrier for binaries and the strike otherwise; `cash` is
/// the fixed payout of binaries and digitals.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct OptionSpec {
    pub kind: OptionKind,
    pub strike: f64,
    pub cash: f64,
}

impl OptionSpec {
    pub fn new(kind: OptionKind, strike: f64, cash: f64) -> Result<Self> {
        if !(strike.is_finite() && strike > 0.0) {
            return Err(invalid(format!("strike must be positive, got {strike}")));
        }
        if !(cash.is_finite() && cash > 0.0) {
            return Err(invalid(format!("cash must be positive, got {cash}")));
        }
        Ok(Self { kind, strike, cash })
    }

    pub fn validate(&self, spec: &ModelSpec) -> Result<()> {
        if let Some(kind) = self.kind.barrier_kind() {
            BarrierSet { kind, barrier: self.strike }.level(spec)?;
        }
        Ok(())
    }

    /// Undiscounted payoff divided by the cash amount for binaries and
    /// digitals, so that its mean is the event probability.
    fn unit_payoff(&self, log_strike: f64, rep: &ReplicaView<'_>) -> f64 {
        let ind = |b: bool| if b { 1.0 } else { 0.0 };
        let last = rep.x[rep.x.len() - 1];
        match self.kind {
            OptionKind::BinaryUpIn => ind(max_of(rep.x) >= log_strike),
            OptionKind::BinaryUpOut => ind(max_of(rep.x) < log_strike),
            OptionKind::BinaryDownIn => ind(min_of(rep.x) <= log_strike),
            OptionKind::BinaryDownOut => ind(min_of(rep.x) > log_strike),
            OptionKind::DigitalCall => ind(last >= log_strike),
            OptionKind::VanillaCall => (last.exp() - self.strike).max(0.0),
        }
    }

    fn price_factor(&self, spec: &ModelSpec) -> f64 {
        let disc = (-spec.r * spec.horizon).exp();
        match self.kind {
            OptionKind::VanillaCall => disc,
            _ => self.cash * disc,
        }
    }
}

fn estimate_options(
    spec: &ModelSpec,
    options: &[OptionSpec],
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    scaled: bool,
) -> Result<Vec<MCEstimate>> {
    spec.require_risk_neutral()?;
    for o in options {
        o.validate(spec)?;
    }
    let logs: Vec<f64> = options.iter().map(|o| o.strike.ln()).collect();
    let mut est = batch_estimate_with(spec, eps, grid, n_replicas, seed, options.len(), |rep, out| {
        for ((o, opt), ls) in out.iter_mut().zip(options).zip(&logs) {
            *o = opt.unit_payoff(*ls, rep);
        }
    })?;
    if scaled {
        for (e, o) in est.iter_mut().zip(options) {
            let f = o.price_factor(spec);
            e.mean *= f;
            e.stderr *= f;
        }
    }
    Ok(est)
}

/// Discounted expected payoff; barriers are monitored at the grid nodes.
pub fn mc_option_price(
    spec: &ModelSpec,
    opt: &OptionSpec,
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
) -> Result<MCEstimate> {
    Ok(estimate_options(spec, std::slice::from_ref(opt), eps, grid, n_replicas, seed, true)?.remove(0))
}

/// Several options priced on the same replicas.
pub fn mc_option_prices(
    spec: &ModelSpec,
    opts: &[OptionSpec],
    eps: f64,
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
) -> Result<Vec<MCEstimate>> {
    estimate_options(spec, opts, eps, grid, n_replicas, seed, true)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct LdpPoint {
    pub eps: f64,
    /// Normalized probability for binaries and digitals, price for calls.
    pub p_hat: f64,
    pub stderr: f64,
    /// `ε log p̂`; `None` when no replica hit (censored).
    pub eps_log_p: Option<f64>,
    /// `ε log p̂ ± 2ε·stderr/p̂`.
    pub band: Option<(f64, f64)>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct LdpReport {
    pub option: OptionSpec,
    pub eps_ladder: Vec<f64>,
    pub points: Vec<LdpPoint>,
    pub censored: Vec<f64>,
    /// Extrapolated `lim ε log p̂` as `ε → 0`; compare with `−variational_value`.
    pub extrapolated_slope: f64,
    /// Same limit from a straight-line fit, kept as a diagnostic.
    pub linear_slope: f64,
    pub variational_value: f64,
    pub relative_gap: f64,
    /// Extra branch information for the two-branch rate function.
    pub regular_value: Option<f64>,
    pub degenerate_value: Option<f64>,
    /// Argmin of the target grid, for terminal-set reports.
    pub argmin_x: Option<f64>,
}

fn check_ladder(ladder: &[f64]) -> Result<()> {
    if ladder.is_empty() {
        return Err(invalid("eps ladder is empty"));
    }
    if ladder.iter().any(|e| !(e.is_finite() && *e > 0.0 && *e <= 1.0)) {
        return Err(invalid("eps ladder entries must lie in (0, 1]"));
    }
    if ladder.windows(2).any(|w| w[1] >= w[0]) {
        return Err(invalid("eps ladder must be strictly decreasing"));
    }
    Ok(())
}

fn ladder_points(
    spec: &ModelSpec,
    opt: &OptionSpec,
    ladder: &[f64],
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    scaled: bool,
) -> Result<Vec<LdpPoint>> {
    let mut points = Vec::with_capacity(ladder.len());
    for &eps in ladder {
        let e = estimate_options(spec, std::slice::from_ref(opt), eps, grid, n_replicas, seed, scaled)?.remove(0);
        if e.aborted > 0 {
            return Err(Error::AbortedReplicas { aborted: e.aborted, requested: n_replicas });
        }
        let (eps_log_p, band) = if e.mean > 0.0 {
            let y = eps * e.mean.ln();
            let half = 2.0 * eps * e.stderr / e.mean;
            (Some(y), Some((y - half, y + half)))
        } else {
            (None, None)
        };
        points.push(LdpPoint { eps, p_hat: e.mean, stderr: e.stderr, eps_log_p, band });
    }
    Ok(points)
}

fn assemble(
    option: OptionSpec,
    ladder: &[f64],
    points: Vec<LdpPoint>,
    variational_value: f64,
) -> LdpReport {
    let used: Vec<&LdpPoint> = points.iter().filter(|p| p.eps_log_p.is_some()).collect();
    let eps: Vec<f64> = used.iter().map(|p| p.eps).collect();
    let y: Vec<f64> = used.iter().map(|p| p.eps_log_p.unwrap()).collect();
    let var: Vec<f64> = used.iter().map(|p| (p.eps * p.stderr / p.p_hat).powi(2)).collect();
    let Extrapolation { intercept, linear_intercept, .. } = extrapolate_to_zero(&eps, &y, &var);
    let censored = points.iter().filter(|p| p.eps_log_p.is_none()).map(|p| p.eps).collect();
    let relative_gap = if variational_value > 1e-12 {
        (intercept + variational_value).abs() / variational_value
    } else {
        intercept.abs()
    };
    LdpReport {
        option,
        eps_ladder: ladder.to_vec(),
        points,
        censored,
        extrapolated_slope: intercept,
        linear_slope: linear_intercept,
        variational_value,
        relative_gap,
        regular_value: None,
        degenerate_value: None,
        argmin_x: None,
    }
}

/// Binary barrier decay: `ε log P(event)` against `−inf_A Q̃_T`.
#[allow(clippy::too_many_arguments)]
pub fn barrier_ldp_report(
    spec: &ModelSpec,
    option: &OptionSpec,
    eps_ladder: &[f64],
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    optcfg: &OptimizerConfig,
) -> Result<LdpReport> {
    check_ladder(eps_ladder)?;
    let kind = option
        .kind
        .barrier_kind()
        .ok_or_else(|| invalid("barrier report needs a binary barrier option"))?;
    spec.require_risk_neutral()?;
    let rate = qtilde_pathset_inf(spec, BarrierSet { kind, barrier: option.strike }, grid, optcfg)?;
    let v = rate.value.finite().unwrap_or(f64::INFINITY);
    let points = ladder_points(spec, option, eps_ladder, grid, n_replicas, seed, false)?;
    Ok(assemble(*option, eps_ladder, points, v))
}

/// Terminal-set decay: `ε log P(X_T − x₀ ≥ level)` against `−Ĩ_T(level)`.
/// The model drift need not be risk-neutral.
#[allow(clippy::too_many_arguments)]
pub fn terminal_ldp_report(
    spec: &ModelSpec,
    level: f64,
    eps_ladder: &[f64],
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    optcfg: &OptimizerConfig,
) -> Result<LdpReport> {
    check_ladder(eps_ladder)?;
    let rate = itilde(spec, level, grid, optcfg)?;
    let v = rate.value.finite().unwrap_or(f64::INFINITY);
    let x0 = spec.x0();
    let mut points = Vec::with_capacity(eps_ladder.len());
    for &eps in eps_ladder {
        let e = batch_estimate_with(spec, eps, grid, n_replicas, seed, 1, |rep, out| {
            out[0] = if rep.x[rep.x.len() - 1] - x0 >= level { 1.0 } else { 0.0 };
        })?
        .remove(0);
        if e.aborted > 0 {
            return Err(Error::AbortedReplicas { aborted: e.aborted, requested: n_replicas });
        }
        let (eps_log_p, band) = if e.mean > 0.0 {
            let y = eps * e.mean.ln();
            let half = 2.0 * eps * e.stderr / e.mean;
            (Some(y), Some((y - half, y + half)))
        } else {
            (None, None)
        };
        points.push(LdpPoint { eps, p_hat: e.mean, stderr: e.stderr, eps_log_p, band });
    }
    let option = OptionSpec { kind: OptionKind::DigitalCall, strike: (x0 + level).exp(), cash: 1.0 };
    let mut report = assemble(option, eps_ladder, points, v);
    report.regular_value = rate.regular_value.and_then(RateValue::finite);
    report.degenerate_value = rate.degenerate_value;
    report.argmin_x = Some(level);
    Ok(report)
}

/// Number of targets on the half-line grid of [`call_ldp_report`].
pub const CALL_GRID_POINTS: usize = 64;

/// Rough volatility scale used to size the target grid.
fn vol_scale(spec: &ModelSpec) -> f64 {
    let sq = spec.horizon.sqrt();
    match spec.coefficients.family {
        Family::ReflectedOu { m, xi, .. } => m + spec.y0 + xi * sq,
        Family::ReflectedBmDrift { a, xi, .. } => a * spec.horizon + spec.y0 + xi * sq,
        Family::ConstantVol { sigma0, .. } => sigma0,
        Family::ExponentialVol { k, .. } => (spec.y0 - k).exp(),
    }
}

/// `min_{x ≥ log K − x₀} Ĩ_T(x)` on a uniform grid of [`CALL_GRID_POINTS`]
/// targets, each solve warm-started from its neighbour. Returns the value,
/// its argmin, the regular-branch minimum, and the degenerate-branch value
/// when relevant.
pub fn call_variational_value(
    spec: &ModelSpec,
    strike: f64,
    grid: TimeGrid,
    optcfg: &OptimizerConfig,
) -> Result<(f64, f64, f64, Option<f64>)> {
    let lo = strike.ln() - spec.x0();
    let span = 5.0 * vol_scale(spec) * spec.horizon.sqrt();
    let mut best = (f64::INFINITY, lo);
    let mut regular_best = f64::INFINITY;
    let mut degenerate = None;
    let mut warm: Vec<Vec<f64>> = Vec::new();
    let sdt = grid.dt().sqrt();
    for i in 0..CALL_GRID_POINTS {
        let x = lo + span * i as f64 / (CALL_GRID_POINTS - 1) as f64;
        let r = itilde_warm(spec, x, grid, optcfg, &warm)?;
        let v = r.value.finite().unwrap_or(f64::INFINITY);
        if v < best.0 {
            best = (v, x);
        }
        if let Some(rv) = r.regular_value.and_then(RateValue::finite) {
            regular_best = regular_best.min(rv);
        }
        if r.degenerate_value.is_some() {
            degenerate = r.degenerate_value;
        }
        warm = vec![r.minimizer_f.derivative().iter().map(|d| d * sdt).collect()];
    }
    if degenerate.is_none() && spec.y0 == 0.0 && !spec.coefficients.sigma_strictly_positive {
        // the degenerate branch sits at x = ∫b(s,0)ds, outside the half-line; it
        // is still reported for comparison
        let x_deg: f64 = (0..grid.n_steps()).map(|k| spec.coefficients.b(grid.node(k), 0.0) * grid.dt()).sum();
        degenerate = itilde(spec, x_deg, grid, optcfg)?.degenerate_value;
    }
    Ok((best.0, best.1, regular_best, degenerate))
}

/// Call-price decay: `ε log C^{(ε)}(T, K)` against `−min_{x ≥ log K − x₀} Ĩ_T(x)`.
#[allow(clippy::too_many_arguments)]
pub fn call_ldp_report(
    spec: &ModelSpec,
    strike: f64,
    eps_ladder: &[f64],
    grid: TimeGrid,
    n_replicas: usize,
    seed: u64,
    optcfg: &OptimizerConfig,
) -> Result<LdpReport> {
    check_ladder(eps_ladder)?;
    spec.require_risk_neutral()?;
    if matches!(spec.coefficients.family, Family::ExponentialVol { .. }) {
        return Err(Error::Hypothesis("call asymptotics are provided for the reflected and constant-volatility families".into()));
    }
    if !(strike.is_finite() && strike > 0.0) {
        return Err(invalid(format!("strike must be positive, got {strike}")));
    }
    if !spec.coefficients.sigma_strictly_positive
        && spec.y0 == 0.0
        && strike <= spec.s0 * (spec.r * spec.horizon).exp()
    {
        return Err(Error::Hypothesis(
            "with y0 = 0 the call must be out of the money (K > s0·e^{rT})".into(),
        ));
    }
    let (value, argmin, regular, degenerate) = call_variational_value(spec, strike, grid, optcfg)?;
    let option = OptionSpec { kind: OptionKind::VanillaCall, strike, cash: 1.0 };
    let points = ladder_points(spec, &option, eps_ladder, grid, n_replicas, seed, true)?;
    let mut report = assemble(option, eps_ladder, points, value);
    report.regular_value = Some(regular);
    report.degenerate_value = degenerate;
    report.argmin_x = Some(argmin);
    Ok(report)
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct MartingaleReport {
    /// `e^{−rT} S_T` at `ε = 1`.
    pub estimate: MCEstimate,
    pub passes: bool,
    pub supermartingale_ok: bool,
    pub alpha: Option<f64>,
    /// `E exp(α max_t Y_t²)` on the same replicas.
    pub exp_moment: Option<MCEstimate>,
    pub exp_moment_stable: Option<bool>,
}

pub fn martingale_check(spec: &ModelSpec, grid: TimeGrid, n_replicas: usize, seed: u64) -> Result<MartingaleReport> {
    spec.require_risk_neutral()?;
    let (q, xi) = match spec.coefficients.family {
        Family::ReflectedOu { q, xi, .. } => (Some(q), Some(xi)),
        Family::ReflectedBmDrift { xi, .. } => (Some(0.0), Some(xi)),
        Family::ExponentialVol { dynamics, .. } => match dynamics {
            crate::models::VolDynamics::ReflectedOu { q, xi, .. } => (Some(q), Some(xi)),
            crate::models::VolDynamics::ReflectedBmDrift { xi, .. } => (Some(0.0), Some(xi)),
        },
        Family::ConstantVol { .. } => (None, None),
    };
    let t = spec.horizon;
    let alpha = match (q, xi) {
        (Some(q), Some(xi)) => Some(1.0 / (16.0 * xi * xi * (4.0 * q * t).exp() * t)),
        _ => None,
    };
    let rt = spec.r * t;
    let est = batch_estimate_with(spec, 1.0, grid, n_replicas, seed, 2, |rep, out| {
        out[0] = (rep.x[rep.x.len() - 1] - rt).exp();
        out[1] = match alpha {
            Some(a) => {
                let m = max_of(rep.y);
                (a * m * m).exp()
            }
            None => 0.0,
        };
    })?;
    let (price, moment) = (est[0], est[1]);
    if price.aborted > 0 {
        return Err(Error::AbortedReplicas { aborted: price.aborted, requested: n_replicas });
    }
    let slack = 3.0 * price.stderr + 1e-12 * spec.s0;
    let diff = price.mean - spec.s0;
    let exp_moment = alpha.map(|_| moment);
    Ok(MartingaleReport {
        estimate: price,
        passes: diff.abs() <= slack,
        supermartingale_ok: diff <= slack,
        alpha,
        exp_moment,
        exp_moment_stable: exp_moment.map(|m| m.mean.is_finite() && m.stderr / m.mean <= 0.05),
    })
}
