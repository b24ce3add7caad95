//! Subcommand pipelines. Each writes its data files into the output
//! directory and returns their names.

use std::fs::File;
use std::io::{BufWriter, Write};
use std::path::Path as FsPath;

use serde::Serialize;
use serde_json::{json, Value};

use reflectvol::optim::OptimizerConfig;
use reflectvol::pricing::{mc_option_prices, LdpReport};
use reflectvol::{
    barrier_ldp_report, batch_estimate, call_ldp_report, hat_map, itilde, j_rate, l1_infimum, qtilde,
    qtilde_pathset_inf, terminal_ldp_report, BarrierSet, Branch, Error, MCEstimate, OptionKind, Path, RateResult,
    RateValue,
};

use crate::config::{PathRate, RateTarget, Resolved};

#[derive(Debug)]
pub enum Failure {
    /// Bad input: exit status 2.
    Validation(String),
    /// Non-convergence, aborted replicas and similar: exit status 3.
    Numerical(String),
}

impl Failure {
    pub fn exit_code(&self) -> u8 {
        match self {
            Failure::Validation(_) => 2,
            Failure::Numerical(_) => 3,
        }
    }

    pub fn message(&self) -> &str {
        match self {
            Failure::Validation(m) | Failure::Numerical(m) => m,
        }
    }
}

impl From<Error> for Failure {
    fn from(e: Error) -> Self {
        if e.is_numerical() {
            Failure::Numerical(e.to_string())
        } else {
            Failure::Validation(e.to_string())
        }
    }
}

pub type Outcome = Result<Vec<String>, Failure>;

fn io_err(path: &FsPath, e: impl std::fmt::Display) -> Failure {
    Failure::Validation(format!("{}: {e}", path.display()))
}

pub fn write_json(dir: &FsPath, name: &str, value: &impl Serialize) -> Result<String, Failure> {
    let path = dir.join(name);
    let file = File::create(&path).map_err(|e| io_err(&path, e))?;
    let mut w = BufWriter::new(file);
    serde_json::to_writer_pretty(&mut w, value).map_err(|e| io_err(&path, e))?;
    w.write_all(b"\n").and_then(|_| w.flush()).map_err(|e| io_err(&path, e))?;
    Ok(name.to_string())
}

fn write_csv(dir: &FsPath, name: &str, header: &[&str], rows: &[Vec<String>]) -> Result<String, Failure> {
    let path = dir.join(name);
    let mut w = csv::Writer::from_path(&path).map_err(|e| io_err(&path, e))?;
    w.write_record(header).map_err(|e| io_err(&path, e))?;
    for r in rows {
        w.write_record(r).map_err(|e| io_err(&path, e))?;
    }
    w.flush().map_err(|e| io_err(&path, e))?;
    Ok(name.to_string())
}

fn num(v: f64) -> String {
    v.to_string()
}

fn opt_num(v: Option<f64>) -> String {
    v.map(num).unwrap_or_default()
}

fn estimate_row(e: &MCEstimate) -> Vec<String> {
    vec![num(e.eps), num(e.mean), num(e.stderr), e.n.to_string(), e.aborted.to_string()]
}

fn estimate_json(e: &MCEstimate) -> Value {
    json!({ "eps": e.eps, "mean": e.mean, "stderr": e.stderr, "n": e.n, "aborted": e.aborted })
}

fn check_aborted(est: &[MCEstimate], requested: usize) -> Result<(), Failure> {
    match est.iter().map(|e| e.aborted).max() {
        Some(a) if a > 0 => Err(Error::AbortedReplicas { aborted: a, requested }.into()),
        _ => Ok(()),
    }
}

pub fn simulate(r: &Resolved, dir: &FsPath) -> Outcome {
    let mc = r.mc.as_ref().expect("resolved");
    let stat = mc.statistic.expect("resolved");
    let mut est = Vec::with_capacity(mc.eps.len());
    for &eps in &mc.eps {
        est.push(batch_estimate(&r.spec, eps, r.grid, mc.replicas, mc.seed, stat)?);
    }
    let mut files = Vec::new();
    if r.csv {
        let rows: Vec<Vec<String>> = est.iter().map(estimate_row).collect();
        files.push(write_csv(dir, "simulate.csv", &["eps", "mean", "stderr", "n", "aborted"], &rows)?);
    }
    if r.json {
        let body = json!({ "statistic": stat, "estimates": est.iter().map(estimate_json).collect::<Vec<_>>() });
        files.push(write_json(dir, "simulate.json", &body)?);
    }
    check_aborted(&est, mc.replicas)?;
    Ok(files)
}

fn rate_value(v: RateValue) -> Value {
    match v {
        RateValue::Finite(x) => json!(x),
        RateValue::Infinite => Value::Null,
    }
}

fn minimizer_rows(res: &RateResult, hat: Option<&Path>) -> Vec<Vec<String>> {
    let f = res.minimizer_f.integrate();
    let grid = *f.grid();
    (0..grid.n_nodes())
        .map(|k| {
            vec![
                num(grid.node(k)),
                num(f.values()[k]),
                opt_num(hat.map(|h| h.values()[k])),
                opt_num(res.minimizer_g.as_ref().map(|g| g.values()[k])),
            ]
        })
        .collect()
}

pub fn rate(r: &Resolved, dir: &FsPath) -> Outcome {
    let target = r.target.as_ref().expect("resolved");
    let opt: &OptimizerConfig = &r.optimizer;
    let (label, res) = match target {
        RateTarget::L1 => {
            let v = l1_infimum(&r.spec, r.grid, opt)?;
            let body = json!({
                "target": "l1",
                "value": v,
                "branch": Branch::Degenerate,
                "converged_starts": Value::Null,
                "minimizer": Value::Null,
            });
            return Ok(vec![write_json(dir, "rate.json", &body)?]);
        }
        RateTarget::Terminal(x) => (json!({ "x": x }), itilde(&r.spec, *x, r.grid, opt)?),
        RateTarget::Barrier(kind, level) => (
            json!({ "barrier_kind": kind, "barrier": level }),
            qtilde_pathset_inf(&r.spec, BarrierSet { kind: *kind, barrier: *level }, r.grid, opt)?,
        ),
        RateTarget::Path(file, which) => {
            let f = File::open(file).map_err(|e| io_err(file, e))?;
            let p = Path::read_csv(f)?;
            if p.grid().horizon() != r.spec.horizon {
                return Err(Failure::Validation(format!(
                    "{}: path horizon {} differs from model.T",
                    file.display(),
                    p.grid().horizon()
                )));
            }
            let res = match which {
                PathRate::Qtilde => qtilde(&r.spec, &p, opt)?,
                PathRate::J => j_rate(&r.spec, &p)?,
            };
            (json!({ "path": file, "path_rate": which }), res)
        }
    };
    let hat = match res.branch {
        Branch::Direct => None,
        _ => Some(hat_map(&r.spec.coefficients, r.spec.y0, &res.minimizer_f)?),
    };
    let mut files = Vec::new();
    let minimizer = if r.csv {
        let name = write_csv(dir, "minimizer.csv", &["t", "f", "f_hat", "g"], &minimizer_rows(&res, hat.as_ref()))?;
        files.push(name.clone());
        Value::from(name)
    } else {
        Value::Null
    };
    let body = json!({
        "target": label,
        "value": rate_value(res.value),
        "branch": res.branch,
        "regular_value": res.regular_value.map(rate_value),
        "degenerate_value": res.degenerate_value,
        "n_starts": res.n_starts,
        "converged_starts": res.converged_starts,
        "best_gradient_norm": res.best_gradient_norm,
        "n_steps": res.grid.n_steps(),
        "minimizer": minimizer,
    });
    files.insert(0, write_json(dir, "rate.json", &body)?);
    Ok(files)
}

pub fn price(r: &Resolved, dir: &FsPath) -> Outcome {
    let mc = r.mc.as_ref().expect("resolved");
    let opt = r.option.expect("resolved");
    let mut est = Vec::with_capacity(mc.eps.len());
    for &eps in &mc.eps {
        est.push(mc_option_prices(&r.spec, &[opt], eps, r.grid, mc.replicas, mc.seed)?.remove(0));
    }
    let mut files = Vec::new();
    if r.json {
        let body = json!({ "option": opt, "prices": est.iter().map(estimate_json).collect::<Vec<_>>() });
        files.push(write_json(dir, "price.json", &body)?);
    }
    if r.csv {
        let rows: Vec<Vec<String>> = est.iter().map(estimate_row).collect();
        files.push(write_csv(dir, "price.csv", &["eps", "mean", "stderr", "n", "aborted"], &rows)?);
    }
    check_aborted(&est, mc.replicas)?;
    Ok(files)
}

pub fn ldp_check(r: &Resolved, dir: &FsPath) -> Outcome {
    let mc = r.mc.as_ref().expect("resolved");
    let opt = r.option.expect("resolved");
    let (spec, grid, cfg) = (&r.spec, r.grid, &r.optimizer);
    let report: LdpReport = match opt.kind {
        OptionKind::VanillaCall => call_ldp_report(spec, opt.strike, &mc.eps, grid, mc.replicas, mc.seed, cfg)?,
        OptionKind::DigitalCall => {
            let level = opt.strike.ln() - spec.x0();
            terminal_ldp_report(spec, level, &mc.eps, grid, mc.replicas, mc.seed, cfg)?
        }
        _ => barrier_ldp_report(spec, &opt, &mc.eps, grid, mc.replicas, mc.seed, cfg)?,
    };
    let mut files = Vec::new();
    if r.json {
        let points: Vec<Value> = report
            .points
            .iter()
            .map(|p| json!({ "eps": p.eps, "p_hat": p.p_hat, "stderr": p.stderr, "eps_log_p": p.eps_log_p }))
            .collect();
        let body = json!({
            "option": opt,
            "eps_ladder": report.eps_ladder,
            "mc_points": points,
            "slope": report.extrapolated_slope,
            "linear_slope": report.linear_slope,
            "variational_value": report.variational_value,
            "relative_gap": report.relative_gap,
            "censored": report.censored,
            "regular_value": report.regular_value,
            "degenerate_value": report.degenerate_value,
            "argmin_x": report.argmin_x,
        });
        files.push(write_json(dir, "ldp_check.json", &body)?);
    }
    if r.csv {
        let rows: Vec<Vec<String>> = report
            .points
            .iter()
            .map(|p| {
                vec![
                    num(p.eps),
                    opt_num(p.eps_log_p),
                    opt_num(p.band.map(|b| b.0)),
                    opt_num(p.band.map(|b| b.1)),
                    num(report.variational_value),
                ]
            })
            .collect();
        files.push(write_csv(
            dir,
            "ldp_check.csv",
            &["eps", "eps_log_p", "band_lo", "band_hi", "variational_value"],
            &rows,
        )?);
    }
    Ok(files)
}
