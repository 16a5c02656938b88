use std::fmt::Write as _;

use serde::{Deserialize, Serialize};

/// Max, mean and median of a sampled discrepancy.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct Summary {
    pub max: f64,
    pub mean: f64,
    pub median: f64,
    pub n_samples: usize,
}

impl Summary {
    /// Summarizes `values` after sorting, so the result does not depend on
    /// the order in which samples were produced.
    pub fn from_values(mut values: Vec<f64>) -> Summary {
        assert!(!values.is_empty(), "summary of an empty sample");
        values.sort_by(f64::total_cmp);
        let n = values.len();
        let mean = values.iter().sum::<f64>() / n as f64;
        let median = if n % 2 == 1 {
            values[n / 2]
        } else {
            0.5 * (values[n / 2 - 1] + values[n / 2])
        };
        Summary {
            max: values[n - 1],
            mean,
            median,
            n_samples: n,
        }
    }
}

/// Which statistic the log-log rate is fitted on.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum FitStatistic {
    Max,
    Median,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    #[serde(rename = "M")]
    pub m: usize,
    #[serde(flatten)]
    pub summary: Summary,
    pub seed: u64,
}

/// Per-`M` discrepancy statistics and the fitted rate of decay.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ConvergenceReport {
    pub experiment: String,
    pub rows: Vec<ReportRow>,
    pub fit_on: FitStatistic,
    /// Least-squares slope of `log(statistic)` against `log(M)`; absent when
    /// fewer than two rows are given or some statistic is zero.
    pub slope: Option<f64>,
    /// Root-mean-square residual of the log-log fit.
    pub residual: Option<f64>,
    pub seeds: Vec<u64>,
}

impl ConvergenceReport {
    pub fn new(experiment: &str, rows: Vec<ReportRow>, fit_on: FitStatistic) -> Self {
        let pick = |r: &ReportRow| match fit_on {
            FitStatistic::Max => r.summary.max,
            FitStatistic::Median => r.summary.median,
        };
        let points: Vec<(f64, f64)> = rows.iter().map(|r| (r.m as f64, pick(r))).collect();
        let (slope, residual) = match fit_loglog(&points) {
            Some((s, r)) => (Some(s), Some(r)),
            None => (None, None),
        };
        let mut seeds: Vec<u64> = rows.iter().map(|r| r.seed).collect();
        seeds.dedup();
        ConvergenceReport {
            experiment: experiment.to_string(),
            rows,
            fit_on,
            slope,
            residual,
            seeds,
        }
    }

    pub fn statistic(&self, m: usize) -> Option<&Summary> {
        self.rows.iter().find(|r| r.m == m).map(|r| &r.summary)
    }

    /// CSV with header `M,max,mean,median,n_samples,seed`; floats carry 17
    /// significant digits.
    pub fn to_csv(&self) -> String {
        let mut out = String::from("M,max,mean,median,n_samples,seed\n");
        for r in &self.rows {
            writeln!(
                out,
                "{},{},{},{},{},{}",
                r.m,
                fmt_f64(r.summary.max),
                fmt_f64(r.summary.mean),
                fmt_f64(r.summary.median),
                r.summary.n_samples,
                r.seed
            )
            .expect("writing to a String");
        }
        out
    }
}

/// Lossless 17-significant-digit rendering.
pub fn fmt_f64(v: f64) -> String {
    format!("{v:.16e}")
}

/// Least-squares line through `(log x, log y)`. Returns slope and RMS
/// residual, or `None` for fewer than two points or nonpositive values.
pub fn fit_loglog(points: &[(f64, f64)]) -> Option<(f64, f64)> {
    if points.len() < 2 || points.iter().any(|(x, y)| !(*x > 0.0 && *y > 0.0)) {
        return None;
    }
    let logs: Vec<(f64, f64)> = points.iter().map(|(x, y)| (x.ln(), y.ln())).collect();
    let n = logs.len() as f64;
    let mx = logs.iter().map(|p| p.0).sum::<f64>() / n;
    let my = logs.iter().map(|p| p.1).sum::<f64>() / n;
    let sxx: f64 = logs.iter().map(|p| (p.0 - mx) * (p.0 - mx)).sum();
    if sxx == 0.0 {
        return None;
    }
    let sxy: f64 = logs.iter().map(|p| (p.0 - mx) * (p.1 - my)).sum();
    let slope = sxy / sxx;
    let intercept = my - slope * mx;
    let rss: f64 = logs
        .iter()
        .map(|(x, y)| {
            let e = y - (intercept + slope * x);
            e * e
        })
        .sum();
    Some((slope, (rss / n).sqrt()))
}
