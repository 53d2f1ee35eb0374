//! `report`: SVG plots of loss curves, noise sweeps and weighting
//! comparisons, plus the plotted numbers as CSV.

use std::fmt::Write as _;
use std::path::Path;

use crate::common::{csv_column, labelled_list, prepare_output, read_csv};
use crate::config::{key, Key, RunConfig};
use crate::error::{write, CliError};
use crate::eval::SUMMARY_FILE;
use crate::svg::{bar_chart, line_chart};

pub const KEYS: &[Key] = &[
    key("out", "", "Directory for the plots"),
    key("loss", "", "Loss curves as label=path/to/loss.csv, comma separated"),
    key("sweep", "", "Noise sweep as sigma=eval-dir, comma separated"),
    key("compare", "", "Weighting comparison as label=eval-dir, comma separated"),
    key("sweep-metric", "median_trans_err_m", "summary.csv column plotted against noise"),
    key("compare-metric", "mean_trans_err_m", "summary.csv column compared across labels"),
];

fn summary_value(dir: &Path, column: &str) -> Result<f64, CliError> {
    let path = dir.join(SUMMARY_FILE);
    let (header, rows) = read_csv(&path)?;
    let values = csv_column(&path, &header, &rows, column)?;
    values.first().copied().ok_or_else(|| CliError::format(&path, "no data row"))
}

pub fn run(cfg: &RunConfig) -> Result<(), CliError> {
    let losses = labelled_list(cfg.raw("loss"));
    let sweep = labelled_list(cfg.raw("sweep"));
    let compare = labelled_list(cfg.raw("compare"));
    if losses.is_empty() && sweep.is_empty() && compare.is_empty() {
        return Err(CliError::Usage("give at least one of `loss`, `sweep` or `compare`".into()));
    }
    let mut table = String::from("kind,label,x,value\n");
    let mut loss_series = Vec::new();
    for (label, path) in &losses {
        let path = Path::new(path);
        let (header, rows) = read_csv(path)?;
        let epochs = csv_column(path, &header, &rows, "epoch")?;
        let values = csv_column(path, &header, &rows, "loss")?;
        for (e, v) in epochs.iter().zip(&values) {
            let _ = writeln!(table, "loss,{label},{e},{v}");
        }
        loss_series.push((label.clone(), epochs.into_iter().zip(values).collect::<Vec<_>>()));
    }
    let sweep_metric = cfg.raw("sweep-metric");
    let mut sweep_points = Vec::new();
    for (sigma, dir) in &sweep {
        let x: f64 = sigma
            .parse()
            .map_err(|_| CliError::Usage(format!("`sweep`: noise level `{sigma}` is not a number")))?;
        let v = summary_value(Path::new(dir), sweep_metric)?;
        let _ = writeln!(table, "sweep,{sweep_metric},{x},{v}");
        sweep_points.push((x, v));
    }
    sweep_points.sort_by(|a, b| a.0.total_cmp(&b.0));
    let compare_metric = cfg.raw("compare-metric");
    let mut bars = Vec::new();
    for (label, dir) in &compare {
        let v = summary_value(Path::new(dir), compare_metric)?;
        let _ = writeln!(table, "compare,{label},,{v}");
        bars.push((label.clone(), v));
    }

    let out = prepare_output(cfg)?;
    if !loss_series.is_empty() {
        write(&out.join("loss.svg"), line_chart("Training loss", "epoch", "loss", &loss_series, true))?;
    }
    if !sweep_points.is_empty() {
        let series = vec![(sweep_metric.to_string(), sweep_points)];
        write(
            &out.join("noise_sweep.svg"),
            line_chart("Pose error vs. flow noise", "pixel noise sigma", sweep_metric, &series, false),
        )?;
    }
    if !bars.is_empty() {
        write(&out.join("comparison.svg"), bar_chart("Joint weighting", compare_metric, &bars))?;
    }
    write(&out.join("report.csv"), table)
}
