//! Scaling rows and least-squares exponent fits of convergence time against n.

use serde::{Deserialize, Serialize};

/// One benchmark run. `convergence_time` is `None` for runs that hit the step
/// limit; `error` carries a per-row failure message.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ResultRow {
    pub n: usize,
    pub m: usize,
    pub generator: String,
    pub controller: String,
    pub convergence_time: Option<u64>,
    pub steps: u64,
    pub wall_ms: u64,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

/// Least-squares line `ln T = intercept + exponent * ln n`.
#[derive(Clone, Copy, Debug, PartialEq, Serialize, Deserialize)]
pub struct ExponentFit {
    pub exponent: f64,
    pub intercept: f64,
    /// Root mean square of the residuals in log space.
    pub rms_residual: f64,
    pub points: usize,
    pub distinct_n: usize,
}

pub const MIN_DISTINCT_N: usize = 3;

/// Fits over `(n, T)` pairs with `T > 0`; `None` with fewer than three distinct n.
pub fn fit_points(points: &[(usize, u64)]) -> Option<ExponentFit> {
    let pts: Vec<(f64, f64)> = points
        .iter()
        .filter(|&&(n, t)| n > 0 && t > 0)
        .map(|&(n, t)| ((n as f64).ln(), (t as f64).ln()))
        .collect();
    let mut ns: Vec<usize> = points.iter().filter(|p| p.0 > 0 && p.1 > 0).map(|p| p.0).collect();
    ns.sort_unstable();
    ns.dedup();
    if ns.len() < MIN_DISTINCT_N {
        return None;
    }
    let len = pts.len() as f64;
    let mx = pts.iter().map(|p| p.0).sum::<f64>() / len;
    let my = pts.iter().map(|p| p.1).sum::<f64>() / len;
    let sxx: f64 = pts.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    let sxy: f64 = pts.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let exponent = sxy / sxx;
    let intercept = my - exponent * mx;
    let sse: f64 = pts
        .iter()
        .map(|p| {
            let r = p.1 - (intercept + exponent * p.0);
            r * r
        })
        .sum();
    Some(ExponentFit {
        exponent,
        intercept,
        rms_residual: (sse / len).sqrt(),
        points: pts.len(),
        distinct_n: ns.len(),
    })
}

/// Fits over rows that converged without error.
pub fn fit_rows(rows: &[ResultRow]) -> Option<ExponentFit> {
    let pts: Vec<(usize, u64)> = rows
        .iter()
        .filter(|r| r.error.is_none())
        .filter_map(|r| r.convergence_time.map(|t| (r.n, t)))
        .collect();
    fit_points(&pts)
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn exact_power_law() {
        let pts: Vec<(usize, u64)> = [10usize, 20, 40, 80].iter().map(|&n| (n, (n * n) as u64)).collect();
        let f = fit_points(&pts).unwrap();
        assert!((f.exponent - 2.0).abs() < 1e-12);
        assert!(f.rms_residual < 1e-12);
        assert_eq!(f.distinct_n, 4);
    }

    #[test]
    fn needs_three_sizes() {
        assert!(fit_points(&[(10, 5), (20, 9), (20, 11)]).is_none());
        assert!(fit_points(&[(10, 5), (20, 9), (40, 0)]).is_none());
    }

    #[test]
    fn skips_unconverged_rows() {
        let row = |n: usize, t: Option<u64>| ResultRow {
            n,
            m: 0,
            generator: "g".into(),
            controller: "c".into(),
            convergence_time: t,
            steps: 0,
            wall_ms: 0,
            error: None,
        };
        let rows = vec![row(10, Some(10)), row(20, Some(20)), row(40, None), row(80, Some(80))];
        let f = fit_rows(&rows).unwrap();
        assert_eq!(f.points, 3);
        assert!((f.exponent - 1.0).abs() < 1e-12);
    }
}
