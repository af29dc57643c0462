use serde::{Deserialize, Serialize};

use crate::{MetricsError, Result};

/// Per-scan values of the six metrics.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct ScanMetrics {
    pub scan: String,
    pub dice: f64,
    pub hausdorff_mm: f64,
    pub avg_dist_mm: f64,
    pub precision: f64,
    pub recall: f64,
    pub avd_ml: f64,
}

#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricStats {
    pub dice: f64,
    pub hausdorff_mm: f64,
    pub avg_dist_mm: f64,
    pub precision: f64,
    pub recall: f64,
    pub avd_ml: f64,
}

/// Rows plus mean and sample standard deviation for one configuration.
#[derive(Debug, Clone, Serialize, Deserialize, PartialEq)]
pub struct MetricsReport {
    pub config: String,
    pub rows: Vec<ScanMetrics>,
    pub mean: MetricStats,
    pub std: MetricStats,
}

const METRIC_COUNT: usize = 6;

fn fields(r: &ScanMetrics) -> [f64; METRIC_COUNT] {
    [r.dice, r.hausdorff_mm, r.avg_dist_mm, r.precision, r.recall, r.avd_ml]
}

fn stats_from(values: [f64; METRIC_COUNT]) -> MetricStats {
    MetricStats {
        dice: values[0],
        hausdorff_mm: values[1],
        avg_dist_mm: values[2],
        precision: values[3],
        recall: values[4],
        avd_ml: values[5],
    }
}

/// Mean and sample (n-1) standard deviation per metric; a single row has
/// std 0 by convention.
pub fn aggregate(config: &str, rows: Vec<ScanMetrics>) -> Result<MetricsReport> {
    if rows.is_empty() {
        return Err(MetricsError::EmptyReport);
    }
    let n = rows.len() as f64;
    let mut mean = [0.0f64; METRIC_COUNT];
    for r in &rows {
        for (m, v) in mean.iter_mut().zip(fields(r)) {
            *m += v;
        }
    }
    for m in &mut mean {
        *m /= n;
    }
    let mut var = [0.0f64; METRIC_COUNT];
    if rows.len() > 1 {
        for r in &rows {
            for ((v, &m), x) in var.iter_mut().zip(&mean).zip(fields(r)) {
                *v += (x - m) * (x - m);
            }
        }
        for v in &mut var {
            *v /= n - 1.0;
        }
    }
    Ok(MetricsReport {
        config: config.to_string(),
        rows,
        mean: stats_from(mean),
        std: stats_from(var.map(f64::sqrt)),
    })
}

const METRIC_LABELS: [(&str, &str); METRIC_COUNT] = [
    ("Dice", "up"),
    ("Hausdorff Distance (mm)", "down"),
    ("Average Distance (mm)", "down"),
    ("Precision", "up"),
    ("Recall", "up"),
    ("Absolute Volume Difference (ml)", "down"),
];

fn stat_fields(s: &MetricStats) -> [f64; METRIC_COUNT] {
    [s.dice, s.hausdorff_mm, s.avg_dist_mm, s.precision, s.recall, s.avd_ml]
}

fn arrow(direction: &str) -> char {
    if direction == "up" {
        '^'
    } else {
        'v'
    }
}

/// Aligned plain-text table for one configuration.
pub fn render_report(report: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<34}{:>10}  {}  {:<10}\n",
        "Metric", "mean", "+-", "std"
    ));
    let means = stat_fields(&report.mean);
    let stds = stat_fields(&report.std);
    for (i, (label, dir)) in METRIC_LABELS.iter().enumerate() {
        out.push_str(&format!(
            "{} {:<32}{:>10.4}  {}  {:<10.4}\n",
            arrow(dir),
            label,
            means[i],
            "+-",
            stds[i]
        ));
    }
    out
}

/// Side-by-side comparison of two configurations in the six-metric table
/// layout (metric, mean, +-, std per configuration).
pub fn render_comparison(a: &MetricsReport, b: &MetricsReport) -> String {
    let mut out = String::new();
    out.push_str(&format!(
        "{:<34}| {:^24} | {:^24}\n",
        "Metric", a.config, b.config
    ));
    out.push_str(&format!("{:-<34}+{:-<26}+{:-<25}\n", "", "", ""));
    let (ma, sa) = (stat_fields(&a.mean), stat_fields(&a.std));
    let (mb, sb) = (stat_fields(&b.mean), stat_fields(&b.std));
    for (i, (label, dir)) in METRIC_LABELS.iter().enumerate() {
        out.push_str(&format!(
            "{} {:<32}| {:>9.4}  +-  {:<7.4}  | {:>9.4}  +-  {:<7.4}\n",
            arrow(dir),
            label,
            ma[i],
            sa[i],
            mb[i],
            sb[i]
        ));
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;

    fn row(scan: &str, v: f64) -> ScanMetrics {
        ScanMetrics {
            scan: scan.to_string(),
            dice: v,
            hausdorff_mm: 10.0 * v,
            avg_dist_mm: 2.0 * v,
            precision: v,
            recall: v,
            avd_ml: v / 2.0,
        }
    }

    #[test]
    fn single_row_mean_is_row_and_std_zero() {
        let r = aggregate("FCN", vec![row("s1_t0", 0.4)]).unwrap();
        assert_eq!(r.mean.dice, 0.4);
        assert_eq!(r.std.dice, 0.0);
        assert_eq!(r.std.hausdorff_mm, 0.0);
    }

    #[test]
    fn two_rows_sample_std() {
        let r = aggregate("FCN", vec![row("a", 0.4), row("b", 0.6)]).unwrap();
        assert!((r.mean.dice - 0.5).abs() < 1e-12);
        // sample std of {0.4, 0.6} = sqrt(2 * 0.01 / 1) = 0.14142...
        assert!((r.std.dice - 0.1414).abs() < 1e-4);
    }

    #[test]
    fn twenty_rows_match_two_pass_oracle() {
        let rows: Vec<ScanMetrics> = (0..20)
            .map(|i| row(&format!("s{i}"), 0.3 + 0.02 * i as f64))
            .collect();
        let values: Vec<f64> = rows.iter().map(|r| r.dice).collect();
        let r = aggregate("FCN", rows).unwrap();
        let mean: f64 = values.iter().sum::<f64>() / 20.0;
        let var: f64 = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / 19.0;
        assert!((r.mean.dice - mean).abs() < 1e-9);
        assert!((r.std.dice - var.sqrt()).abs() < 1e-9);
    }

    #[test]
    fn empty_input_rejected() {
        assert!(matches!(aggregate("FCN", vec![]), Err(MetricsError::EmptyReport)));
    }

    #[test]
    fn comparison_table_lists_all_six_metrics() {
        let a = aggregate("FCN", vec![row("a", 0.5)]).unwrap();
        let b = aggregate("FCN-CGAN", vec![row("a", 0.55)]).unwrap();
        let table = render_comparison(&a, &b);
        for (label, _) in METRIC_LABELS {
            assert!(table.contains(label), "missing {label}");
        }
        assert!(table.contains("FCN-CGAN"));
        assert_eq!(table.lines().count(), 2 + 6);
    }
}
