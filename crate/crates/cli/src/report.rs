//! Line-oriented `key=value` renderings of scenes, metrics and reports.

use gma3d_core::flowmetrics::{FlowMetrics, SplitMetrics};
use gma3d_core::trainer::{ExperimentReport, GradCheckReport};
use gma3d_core::Result;

use crate::runconfig::{num, RunConfig};

/// `epe_<suffix>`, `acc_strict_<suffix>`, ... ; nothing when the split is empty.
pub fn metric_lines(prefix: &str, suffix: &str, m: &Result<FlowMetrics>, out: &mut String) {
    if let Ok(m) = m {
        for (name, v) in [
            ("epe", num(m.epe_m)),
            ("acc_strict", num(m.acc_strict)),
            ("acc_relax", num(m.acc_relax)),
            ("outliers", num(m.outliers)),
            ("n", m.n_points.to_string()),
        ] {
            out.push_str(&format!("{prefix}{name}_{suffix}={v}\n"));
        }
    }
}

pub fn split_lines(prefix: &str, s: &SplitMetrics, out: &mut String) {
    metric_lines(prefix, "all", &s.all, out);
    metric_lines(prefix, "occluded", &s.occluded, out);
    metric_lines(prefix, "non_occluded", &s.non_occluded, out);
}

/// Report body without the config echo. Wall time is left out so that the
/// text depends only on the inputs.
pub fn report_body(r: &ExperimentReport) -> String {
    let mut out = String::new();
    out.push_str(&format!("variant={}\n", r.variant));
    out.push_str(&format!("steps={}\n", r.losses.len()));
    out.push_str(&format!("alpha={}\n", num(r.model.gma.alpha())));
    out.push_str(&format!("final_loss={}\n", num(r.final_loss)));
    split_lines("initial_", &r.initial, &mut out);
    split_lines("final_", &r.final_metrics, &mut out);
    let series: Vec<String> = r.losses.iter().map(|&l| num(l)).collect();
    out.push_str(&format!("loss_series={}\n", series.join(",")));
    out
}

/// Full report: body plus `config.`-prefixed echo of every training key.
pub fn render_report(r: &ExperimentReport, gradcheck_defaults: &RunConfig) -> String {
    let mut out = report_body(r);
    let echo = RunConfig {
        train: r.config.clone(),
        gradcheck: gradcheck_defaults.gradcheck,
    };
    for (k, v) in echo.entries() {
        if !k.starts_with("train.gradcheck_") {
            out.push_str(&format!("config.{k}={v}\n"));
        }
    }
    out
}

pub fn render_gradcheck(r: &GradCheckReport, tolerance: f64) -> String {
    let mut out = String::new();
    out.push_str(&format!("max_discrepancy={:e}\n", r.max_discrepancy));
    out.push_str(&format!("worst_tensor={}\n", r.worst_tensor));
    out.push_str(&format!("n_params={}\n", r.n_params));
    out.push_str(&format!("tolerance={tolerance:e}\n"));
    out.push_str(&format!("pass={}\n", r.max_discrepancy < tolerance));
    for (name, d) in &r.per_tensor {
        out.push_str(&format!("tensor.{name}={d:e}\n"));
    }
    out
}

/// Fixed-width comparison table, one row per variant.
pub fn ablation_table(reports: &[ExperimentReport]) -> String {
    let cell = |m: &Result<FlowMetrics>| match m {
        Ok(m) => format!("{:>12.6}", m.epe_m),
        Err(_) => format!("{:>12}", "-"),
    };
    let mut out = format!(
        "{:<12}{:>12}{:>12}{:>12}{:>12}\n",
        "variant", "epe_occ", "epe_nonocc", "epe_all", "alpha"
    );
    for r in reports {
        out.push_str(&format!(
            "{:<12}{}{}{}{:>12.4}\n",
            r.variant,
            cell(&r.final_metrics.occluded),
            cell(&r.final_metrics.non_occluded),
            cell(&r.final_metrics.all),
            r.model.gma.alpha()
        ));
    }
    out
}

/// Parses `key=value` lines (blank lines and `#` comments skipped).
pub fn parse_pairs(text: &str) -> Vec<(String, String)> {
    text.lines()
        .filter(|l| !l.trim().is_empty() && !l.trim_start().starts_with('#'))
        .filter_map(|l| l.split_once('='))
        .map(|(k, v)| (k.trim().to_string(), v.trim().to_string()))
        .collect()
}

/// Splits blank-line separated blocks into key/value lists.
pub fn parse_blocks(text: &str) -> Vec<Vec<(String, String)>> {
    text.split("\n\n")
        .map(parse_pairs)
        .filter(|b| !b.is_empty())
        .collect()
}
