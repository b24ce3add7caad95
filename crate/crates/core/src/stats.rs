//! Small statistical helpers: two-sample Kolmogorov–Smirnov and the
//! weighted least-squares fits behind the slope extraction.

use serde::{Deserialize, Serialize};

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct KsResult {
    pub statistic: f64,
    pub critical_value: f64,
    pub alpha: f64,
    pub reject: bool,
}

/// Asymptotic critical value `√(−½ ln(α/2)) · √((n+m)/(nm))`.
pub fn ks_critical_value(alpha: f64, n: usize, m: usize) -> f64 {
    let c = (-0.5 * (alpha / 2.0).ln()).sqrt();
    c * ((n + m) as f64 / (n as f64 * m as f64)).sqrt()
}

/// `sup |F_a − F_b|` over the pooled sample.
pub fn ks_statistic(a: &[f64], b: &[f64]) -> f64 {
    let mut a = a.to_vec();
    let mut b = b.to_vec();
    a.sort_by(f64::total_cmp);
    b.sort_by(f64::total_cmp);
    let (na, nb) = (a.len() as f64, b.len() as f64);
    let (mut i, mut j) = (0, 0);
    let mut d = 0.0_f64;
    while i < a.len() && j < b.len() {
        let v = a[i].min(b[j]);
        while i < a.len() && a[i] <= v {
            i += 1;
        }
        while j < b.len() && b[j] <= v {
            j += 1;
        }
        d = d.max((i as f64 / na - j as f64 / nb).abs());
    }
    d
}

pub fn ks_two_sample(a: &[f64], b: &[f64], alpha: f64) -> KsResult {
    let statistic = ks_statistic(a, b);
    let critical_value = ks_critical_value(alpha, a.len(), b.len());
    KsResult { statistic, critical_value, alpha, reject: statistic > critical_value }
}

/// Weighted least squares `min Σ w_i (y_i − Σ_j β_j X_ij)²` via the normal
/// equations. Returns `None` when the system is singular.
pub fn weighted_least_squares(rows: &[Vec<f64>], y: &[f64], w: &[f64]) -> Option<Vec<f64>> {
    let p = rows.first()?.len();
    let mut a = vec![vec![0.0; p + 1]; p];
    for ((x, yi), wi) in rows.iter().zip(y).zip(w) {
        for r in 0..p {
            for c in 0..p {
                a[r][c] += wi * x[r] * x[c];
            }
            a[r][p] += wi * x[r] * yi;
        }
    }
    // Gaussian elimination with partial pivoting.
    for col in 0..p {
        let piv = (col..p).max_by(|&i, &j| a[i][col].abs().total_cmp(&a[j][col].abs()))?;
        let scale = a.iter().map(|r| r[col].abs()).fold(0.0, f64::max);
        if a[piv][col].abs() <= 1e-14 * scale.max(f64::MIN_POSITIVE) {
            return None;
        }
        a.swap(col, piv);
        for r in 0..p {
            if r != col {
                let f = a[r][col] / a[col][col];
                for c in col..=p {
                    a[r][c] -= f * a[col][c];
                }
            }
        }
    }
    Some((0..p).map(|r| a[r][p] / a[r][r]).collect())
}

/// Extrapolation of `y(ε) = ε log p(ε)` to `ε = 0`.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Extrapolation {
    /// Intercept of the fit on `{1, ε, ε log ε}`, falling back to the
    /// straight line when fewer than three points are usable.
    pub intercept: f64,
    /// Intercept of the straight-line fit on `{1, ε}`.
    pub linear_intercept: f64,
    pub points_used: usize,
}

/// Fits `y = c₀ + c₁ε + c₂ ε log ε`, the shape of `ε log p` when
/// `p ≈ C ε^β e^{−V/ε}`, weighted by `1/var`.
pub fn extrapolate_to_zero(eps: &[f64], y: &[f64], var: &[f64]) -> Extrapolation {
    let floor = 1e-14;
    let w: Vec<f64> = var
        .iter()
        .zip(y)
        .map(|(v, yi)| 1.0 / v.max(floor * (1.0 + yi * yi)))
        .collect();
    let n = eps.len();
    let linear = if n >= 2 {
        let rows: Vec<Vec<f64>> = eps.iter().map(|e| vec![1.0, *e]).collect();
        weighted_least_squares(&rows, y, &w).map(|b| b[0]).unwrap_or(f64::NAN)
    } else if n == 1 {
        y[0]
    } else {
        f64::NAN
    };
    let intercept = if n >= 3 {
        let rows: Vec<Vec<f64>> = eps.iter().map(|e| vec![1.0, *e, e * e.ln()]).collect();
        weighted_least_squares(&rows, y, &w).map(|b| b[0]).unwrap_or(linear)
    } else {
        linear
    };
    Extrapolation { intercept, linear_intercept: linear, points_used: n }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn ks_identical_and_disjoint() {
        let a: Vec<f64> = (0..100).map(|i| i as f64).collect();
        assert_eq!(ks_statistic(&a, &a), 0.0);
        let b: Vec<f64> = (0..100).map(|i| 1000.0 + i as f64).collect();
        assert_eq!(ks_statistic(&a, &b), 1.0);
        let r = ks_two_sample(&a, &b, 0.01);
        assert!(r.reject);
    }

    #[test]
    fn ks_critical_value_at_one_percent() {
        let c = ks_critical_value(0.01, 10_000, 10_000);
        assert!((c - 1.6276 * (2.0f64 / 10_000.0).sqrt()).abs() < 1e-5);
    }

    #[test]
    fn ks_handles_ties() {
        let a = [1.0, 1.0, 2.0, 3.0];
        let b = [1.0, 2.0, 2.0, 3.0];
        assert!((ks_statistic(&a, &b) - 0.25).abs() < 1e-15);
    }

    #[test]
    fn wls_recovers_exact_fit() {
        let eps = [0.4, 0.3, 0.2, 0.15, 0.1];
        let y: Vec<f64> = eps.iter().map(|e: &f64| -0.5 + 0.3 * e - 0.2 * e * e.ln()).collect();
        let var = vec![1e-4; 5];
        let ex = extrapolate_to_zero(&eps, &y, &var);
        assert!((ex.intercept + 0.5).abs() < 1e-10);
        let lin: Vec<f64> = eps.iter().map(|e| 2.0 - 3.0 * e).collect();
        let ex = extrapolate_to_zero(&eps[..2], &lin[..2], &var[..2]);
        assert!((ex.intercept - 2.0).abs() < 1e-12);
    }

    #[test]
    fn singular_system() {
        assert!(weighted_least_squares(&[vec![1.0, 1.0], vec![1.0, 1.0]], &[1.0, 2.0], &[1.0, 1.0]).is_none());
    }
}
