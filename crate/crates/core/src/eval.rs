//! Repeatability statistics and baseline-vs-refined comparison.

use serde::{Deserialize, Serialize};

use crate::geom::Point3;
use crate::{Error, Result};

/// Repeated-localization spread of a stationary marker.
///
/// Both standard-deviation conventions are reported: `std_sample` uses the
/// n−1 denominator; `std_population` uses n. Reference tables in this
/// domain print the population form, so comparisons against published
/// summary rows use that field.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RepeatabilityReport {
    pub n_runs: usize,
    pub n_failures: usize,
    /// Successful run centers, in input order.
    pub centers: Vec<[f64; 3]>,
    pub mean: [f64; 3],
    pub std_sample: [f64; 3],
    pub std_population: [f64; 3],
    /// Per successful run: Euclidean distance from the run's center to the
    /// mean center.
    pub deviations: Vec<f64>,
    pub mean_deviation: f64,
}

/// Aggregates localization runs; `None` entries are failures (excluded
/// from the statistics but counted).
pub fn repeatability(results: &[Option<Point3>]) -> Result<RepeatabilityReport> {
    let centers: Vec<Point3> = results.iter().filter_map(|r| *r).collect();
    let n_failures = results.len() - centers.len();
    if centers.len() < 2 {
        return Err(Error::InvalidArgument(format!(
            "repeatability needs >= 2 successful runs, got {}",
            centers.len()
        )));
    }
    let n = centers.len() as f64;
    let mut mean = [0.0; 3];
    for c in &centers {
        mean[0] += c.x;
        mean[1] += c.y;
        mean[2] += c.z;
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut ss = [0.0; 3];
    for c in &centers {
        ss[0] += (c.x - mean[0]).powi(2);
        ss[1] += (c.y - mean[1]).powi(2);
        ss[2] += (c.z - mean[2]).powi(2);
    }
    let std_sample = [
        (ss[0] / (n - 1.0)).sqrt(),
        (ss[1] / (n - 1.0)).sqrt(),
        (ss[2] / (n - 1.0)).sqrt(),
    ];
    let std_population = [(ss[0] / n).sqrt(), (ss[1] / n).sqrt(), (ss[2] / n).sqrt()];
    let mean_point = Point3::new(mean[0], mean[1], mean[2]);
    let deviations: Vec<f64> = centers.iter().map(|c| c.distance(&mean_point)).collect();
    let mean_deviation = deviations.iter().sum::<f64>() / n;
    Ok(RepeatabilityReport {
        n_runs: results.len(),
        n_failures,
        centers: centers.iter().map(|c| [c.x, c.y, c.z]).collect(),
        mean,
        std_sample,
        std_population,
        deviations,
        mean_deviation,
    })
}

/// Improvement factors of a refined run set over a baseline run set.
/// Ratios are baseline/refined, so > 1 means the refined method is tighter.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Comparison {
    pub mean_deviation_ratio: f64,
    pub std_sample_ratio: [f64; 3],
    pub failure_rate_baseline: f64,
    pub failure_rate_refined: f64,
    pub improved: bool,
}

fn ratio(baseline: f64, refined: f64) -> f64 {
    if baseline == refined {
        1.0
    } else if refined == 0.0 {
        f64::INFINITY
    } else {
        baseline / refined
    }
}

pub fn compare(baseline: &RepeatabilityReport, refined: &RepeatabilityReport) -> Comparison {
    let mean_deviation_ratio = ratio(baseline.mean_deviation, refined.mean_deviation);
    let std_sample_ratio = [
        ratio(baseline.std_sample[0], refined.std_sample[0]),
        ratio(baseline.std_sample[1], refined.std_sample[1]),
        ratio(baseline.std_sample[2], refined.std_sample[2]),
    ];
    let failure_rate_baseline = baseline.n_failures as f64 / baseline.n_runs.max(1) as f64;
    let failure_rate_refined = refined.n_failures as f64 / refined.n_runs.max(1) as f64;
    Comparison {
        mean_deviation_ratio,
        std_sample_ratio,
        failure_rate_baseline,
        failure_rate_refined,
        improved: mean_deviation_ratio >= 1.0 && failure_rate_refined <= failure_rate_baseline,
    }
}

/// Renders a report as an aligned plain-text table.
pub fn report_table(title: &str, report: &RepeatabilityReport) -> String {
    let mut s = String::new();
    s.push_str(&format!("{title}\n"));
    s.push_str(&format!(
        "{:<8} {:>16} {:>16} {:>16} {:>18}\n",
        "run", "x [mm]", "y [mm]", "z [mm]", "deviation [mm]"
    ));
    for (i, (c, d)) in report.centers.iter().zip(&report.deviations).enumerate() {
        s.push_str(&format!(
            "{:<8} {:>16.9} {:>16.9} {:>16.9} {:>18.9}\n",
            i + 1,
            c[0],
            c[1],
            c[2],
            d
        ));
    }
    s.push_str(&format!(
        "{:<8} {:>16.9} {:>16.9} {:>16.9} {:>18.9}\n",
        "mean", report.mean[0], report.mean[1], report.mean[2], report.mean_deviation
    ));
    s.push_str(&format!(
        "{:<8} {:>16.9} {:>16.9} {:>16.9}\n",
        "std(n)", report.std_population[0], report.std_population[1], report.std_population[2]
    ));
    s.push_str(&format!(
        "{:<8} {:>16.9} {:>16.9} {:>16.9}\n",
        "std(n-1)", report.std_sample[0], report.std_sample[1], report.std_sample[2]
    ));
    s.push_str(&format!(
        "runs: {}   failures: {}\n",
        report.n_runs, report.n_failures
    ));
    s
}
