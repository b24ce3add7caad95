//! Exact-property checks that need no configuration.

use serde_json::{json, Value};

use reflectvol::optim::OptimizerConfig;
use reflectvol::{
    hat_map, itilde, m_operator, make_constant_vol, make_reflected_bm_drift, make_reflected_ou, modulus_of_continuity,
    skorokhod_map, solve_controlled, sup_norm, Control, ModelSpec, NoiseBundle, Path, TimeGrid,
};

struct Check {
    name: &'static str,
    passed: bool,
    detail: String,
}

fn random_path(grid: TimeGrid, seed: u64, i: u64) -> Path {
    let noise = NoiseBundle::generate(grid, seed, i);
    let mut v = Vec::with_capacity(grid.n_nodes());
    let mut x = noise.dw[0];
    v.push(x);
    for d in &noise.db {
        x += 2.0 * d;
        v.push(x);
    }
    Path::new(grid, v).expect("finite path")
}

fn skorokhod_suite(seed: u64) -> Check {
    let mut failures = Vec::new();
    for i in 0..500u64 {
        let grid = TimeGrid::new(1.0, if i % 2 == 0 { 16 } else { 500 }).unwrap();
        let p = random_path(grid, seed, i);
        let gp = skorokhod_map(&p);
        let s = sup_norm(&p);
        let tol = 1e-12 * (1.0 + s);
        if gp.values().iter().any(|v| *v < 0.0) {
            failures.push(format!("path {i}: negative output"));
        }
        let abs = Path::new(grid, p.values().iter().map(|v| v.abs()).collect()).unwrap();
        if skorokhod_map(&abs) != abs {
            failures.push(format!("path {i}: fixed point"));
        }
        let scaled = skorokhod_map(&p.scaled(1.7));
        if scaled.values().iter().zip(gp.values()).any(|(a, b)| (a - 1.7 * b).abs() > 1.7 * tol) {
            failures.push(format!("path {i}: homogeneity"));
        }
        if sup_norm(&gp) > 2.0 * s + tol {
            failures.push(format!("path {i}: sup bound"));
        }
        let q = random_path(grid, seed ^ 0x9e37, i);
        let gq = skorokhod_map(&q);
        let mut run = 0.0_f64;
        for k in 0..grid.n_nodes() {
            run = run.max((p.values()[k] - q.values()[k]).abs());
            if (gp.values()[k] - gq.values()[k]).abs() > 2.0 * run + tol {
                failures.push(format!("path {i}: Lipschitz at node {k}"));
                break;
            }
        }
        for delta in [grid.dt(), 0.1, 0.5] {
            let (a, b) = (modulus_of_continuity(&gp, delta).unwrap(), modulus_of_continuity(&p, delta).unwrap());
            if a > b + tol {
                failures.push(format!("path {i}: modulus at delta {delta}"));
            }
        }
    }
    Check {
        name: "skorokhod map properties",
        passed: failures.is_empty(),
        detail: if failures.is_empty() { "500 paths".into() } else { failures.join("; ") },
    }
}

fn round_trip_suite(seed: u64) -> Check {
    let models = [
        (make_reflected_ou(1.0, 0.3, 0.5, 0.0).unwrap(), 0.2),
        (make_reflected_bm_drift(0.5, 0.7, 0.0).unwrap(), 0.0),
    ];
    let mut worst = 0.0_f64;
    let mut exact = true;
    for i in 0..200u64 {
        let (cs, y0) = &models[i as usize % 2];
        let grid = TimeGrid::new(1.0, 100).unwrap();
        let noise = NoiseBundle::generate(grid, seed, i);
        let sdt = grid.dt().sqrt();
        let ctl = Control::new(grid, noise.db.iter().map(|d| d / sdt).collect()).unwrap();
        let sol = solve_controlled(cs, *y0, &ctl).unwrap();
        let back = m_operator(cs, *y0, &sol.phi).unwrap();
        for (a, b) in back.derivative().iter().zip(ctl.derivative()) {
            worst = worst.max((a - b).abs() / (1.0 + b.abs()));
        }
        exact &= hat_map(cs, *y0, &ctl).unwrap() == skorokhod_map(&sol.phi);
    }
    Check {
        name: "controlled map round trip",
        passed: worst <= 1e-10 && exact,
        detail: format!("worst relative error {worst:e}, hat map exact: {exact}"),
    }
}

fn rate_oracle() -> Check {
    let spec = ModelSpec::new(make_constant_vol(0.3, 0.0).unwrap(), 0.0, 1.0, 0.5, 0.0, 1.0).unwrap();
    let grid = TimeGrid::new(1.0, 50).unwrap();
    let v = itilde(&spec, 0.09, grid, &OptimizerConfig::default()).ok().and_then(|r| r.value.finite());
    Check {
        name: "constant-vol rate oracle",
        passed: v.is_some_and(|v| (v - 0.045).abs() < 1e-6),
        detail: format!("{v:?} vs 0.045"),
    }
}

/// Runs the suites; returns the report and whether every check passed.
pub fn run(seed: u64) -> (Value, bool) {
    let checks = [skorokhod_suite(seed), round_trip_suite(seed), rate_oracle()];
    let ok = checks.iter().all(|c| c.passed);
    for c in &checks {
        eprintln!("{} {}: {}", if c.passed { "PASS" } else { "FAIL" }, c.name, c.detail);
    }
    let body = json!({
        "passed": ok,
        "checks": checks.iter().map(|c| json!({ "name": c.name, "passed": c.passed, "detail": c.detail })).collect::<Vec<_>>(),
    });
    (body, ok)
}
