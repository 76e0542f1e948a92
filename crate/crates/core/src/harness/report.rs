use std::fmt::Write as _;
use std::path::Path;

use serde::{Deserialize, Serialize};

use super::config::ExperimentConfig;
use super::pipeline::{
    read_rows, read_trial_records, require, write_manifest, DiagnosticRecord, LatencyRecord, Layout, Manifest, Stage,
    TrialRecord,
};
use crate::error::{Error, Result};
use crate::io::create_file;
use crate::models::ControllerKind;

/// Success counts laid out with evaluations as rows and controllers as
/// columns.
#[derive(Clone, Debug, PartialEq)]
pub struct SuccessTable {
    pub evaluations: Vec<String>,
    pub controllers: Vec<ControllerKind>,
    /// `cells[e][c] = (successes, trials)`
    pub cells: Vec<Vec<(usize, usize)>>,
}

fn push_unique<T: PartialEq + Clone>(v: &mut Vec<T>, x: &T) -> usize {
    match v.iter().position(|y| y == x) {
        Some(i) => i,
        None => {
            v.push(x.clone());
            v.len() - 1
        }
    }
}

fn percent(s: usize, n: usize) -> f64 {
    if n == 0 {
        0.0
    } else {
        100.0 * s as f64 / n as f64
    }
}

impl SuccessTable {
    pub fn from_records(records: &[TrialRecord]) -> Self {
        let mut evaluations = Vec::new();
        let mut controllers = Vec::new();
        for r in records {
            push_unique(&mut evaluations, &r.evaluation);
            push_unique(&mut controllers, &r.controller);
        }
        let mut cells = vec![vec![(0, 0); controllers.len()]; evaluations.len()];
        for r in records {
            let e = evaluations.iter().position(|x| *x == r.evaluation).unwrap();
            let c = controllers.iter().position(|x| *x == r.controller).unwrap();
            cells[e][c].1 += 1;
            if r.success {
                cells[e][c].0 += 1;
            }
        }
        SuccessTable {
            evaluations,
            controllers,
            cells,
        }
    }

    pub fn successes(&self, evaluation: &str, controller: ControllerKind) -> Option<(usize, usize)> {
        let e = self.evaluations.iter().position(|x| x == evaluation)?;
        let c = self.controllers.iter().position(|x| *x == controller)?;
        Some(self.cells[e][c])
    }

    /// Success percentages, one row per evaluation.
    pub fn write_csv(&self, path: &Path) -> Result<()> {
        let mut w = csv::Writer::from_writer(create_file(path)?);
        let mut header = vec!["evaluation".to_string()];
        header.extend(self.controllers.iter().map(|c| c.name().to_string()));
        w.write_record(&header)?;
        for (e, row) in self.evaluations.iter().zip(&self.cells) {
            let mut rec = vec![e.clone()];
            rec.extend(row.iter().map(|&(s, n)| percent(s, n).to_string()));
            w.write_record(&rec)?;
        }
        w.flush()
            .map_err(|e| Error::io(format!("writing {}", path.display()), e))?;
        Ok(())
    }

    pub fn to_text(&self) -> String {
        let width = self.evaluations.iter().map(String::len).max().unwrap_or(0).max(10);
        let mut s = format!("{:width$}", "success %");
        for c in &self.controllers {
            let _ = write!(s, " {:>9}", c.name());
        }
        s.push('\n');
        for (e, row) in self.evaluations.iter().zip(&self.cells) {
            let _ = write!(s, "{e:width$}");
            for &(k, n) in row {
                let _ = write!(s, " {:>9}", format!("{:.0} ({k}/{n})", percent(k, n)));
            }
            s.push('\n');
        }
        s
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyStats {
    pub steps: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

/// Mean, nearest-rank percentiles and maximum of per-step latencies.
pub fn latency_stats(values_ms: &[f64]) -> LatencyStats {
    if values_ms.is_empty() {
        return LatencyStats {
            steps: 0,
            mean_ms: 0.0,
            p50_ms: 0.0,
            p95_ms: 0.0,
            max_ms: 0.0,
        };
    }
    let mut v = values_ms.to_vec();
    v.sort_by(f64::total_cmp);
    let rank = |q: f64| v[((q * v.len() as f64).ceil() as usize).clamp(1, v.len()) - 1];
    LatencyStats {
        steps: v.len(),
        mean_ms: values_ms.iter().sum::<f64>() / values_ms.len() as f64,
        p50_ms: rank(0.5),
        p95_ms: rank(0.95),
        max_ms: v[v.len() - 1],
    }
}

/// One row of the aggregate report. Fusion statistics are empty for
/// controllers without candidate weighting.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct ReportRow {
    pub evaluation: String,
    pub controller: ControllerKind,
    pub trials: usize,
    pub successes: usize,
    pub success_rate: f64,
    /// m
    pub mean_placement_error: f64,
    pub entropy_mean: Option<f64>,
    pub entropy_min: Option<f64>,
    pub entropy_max: Option<f64>,
    pub effective_samples_mean: Option<f64>,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct LatencyRow {
    pub evaluation: String,
    pub controller: ControllerKind,
    pub steps: usize,
    pub mean_ms: f64,
    pub p50_ms: f64,
    pub p95_ms: f64,
    pub max_ms: f64,
}

impl LatencyRow {
    fn new(evaluation: &str, controller: ControllerKind, s: LatencyStats) -> Self {
        LatencyRow {
            evaluation: evaluation.into(),
            controller,
            steps: s.steps,
            mean_ms: s.mean_ms,
            p50_ms: s.p50_ms,
            p95_ms: s.p95_ms,
            max_ms: s.max_ms,
        }
    }
}

/// Evaluation name used for rows pooled over all evaluations.
pub const ALL_EVALUATIONS: &str = "all";

fn report_row(
    evaluation: &str,
    controller: ControllerKind,
    trials: &[&TrialRecord],
    diags: &[DiagnosticRecord],
) -> ReportRow {
    let n = trials.len();
    let successes = trials.iter().filter(|t| t.success).count();
    let (mut e_mean, mut e_min, mut e_max, mut ess) = (None, None, None, None);
    if !diags.is_empty() {
        let m = diags.len() as f64;
        e_mean = Some(diags.iter().map(|d| d.entropy).sum::<f64>() / m);
        e_min = Some(diags.iter().map(|d| d.entropy).fold(f64::INFINITY, f64::min));
        e_max = Some(diags.iter().map(|d| d.entropy).fold(f64::NEG_INFINITY, f64::max));
        ess = Some(diags.iter().map(|d| d.effective_samples).sum::<f64>() / m);
    }
    ReportRow {
        evaluation: evaluation.into(),
        controller,
        trials: n,
        successes,
        success_rate: if n == 0 { 0.0 } else { successes as f64 / n as f64 },
        mean_placement_error: if n == 0 {
            0.0
        } else {
            trials.iter().map(|t| t.placement_error).sum::<f64>() / n as f64
        },
        entropy_mean: e_mean,
        entropy_min: e_min,
        entropy_max: e_max,
        effective_samples_mean: ess,
    }
}

fn optional_rows<T: for<'de> Deserialize<'de>>(path: &Path) -> Result<Vec<T>> {
    if path.exists() {
        read_rows(path)
    } else {
        Ok(Vec::new())
    }
}

fn fmt_opt(x: Option<f64>) -> String {
    x.map_or_else(|| "-".to_string(), |v| format!("{v:.3}"))
}

pub(crate) fn eval_report(cfg: &ExperimentConfig, layout: &Layout) -> Result<Manifest> {
    let stage = Stage::EvalReport;
    require(stage, Stage::Run, &layout.results())?;
    let records = read_trial_records(&layout.results())?;
    let table = SuccessTable::from_records(&records);
    let mut rows = Vec::new();
    let mut lat_rows = Vec::new();
    let mut inputs = vec![layout.results()];
    let mut pooled: Vec<(Vec<&TrialRecord>, Vec<DiagnosticRecord>, Vec<f64>)> =
        vec![(Vec::new(), Vec::new(), Vec::new()); table.controllers.len()];
    for ev in &table.evaluations {
        for (ci, &c) in table.controllers.iter().enumerate() {
            let trials: Vec<&TrialRecord> = records
                .iter()
                .filter(|r| r.evaluation == *ev && r.controller == c)
                .collect();
            if trials.is_empty() {
                continue;
            }
            let cell = layout.run_cell(ev, c);
            let diags: Vec<DiagnosticRecord> = optional_rows(&cell.join("diagnostics.csv"))?;
            let lat_path = cell.join("latency.csv");
            let lats: Vec<LatencyRecord> = optional_rows(&lat_path)?;
            if lat_path.exists() {
                inputs.push(lat_path);
            }
            let ms: Vec<f64> = lats.iter().map(|l| l.latency_ms).collect();
            rows.push(report_row(ev, c, &trials, &diags));
            lat_rows.push(LatencyRow::new(ev, c, latency_stats(&ms)));
            pooled[ci].0.extend(trials);
            pooled[ci].1.extend(diags);
            pooled[ci].2.extend(ms);
        }
    }
    for (&c, (trials, diags, ms)) in table.controllers.iter().zip(&pooled) {
        rows.push(report_row(ALL_EVALUATIONS, c, trials, diags));
        lat_rows.push(LatencyRow::new(ALL_EVALUATIONS, c, latency_stats(ms)));
    }

    let dir = layout.report();
    let write =
        |name: &str, rows: &dyn Fn(&mut csv::Writer<std::io::BufWriter<std::fs::File>>) -> Result<()>| -> Result<()> {
            let path = dir.join(name);
            let mut w = csv::Writer::from_writer(create_file(&path)?);
            rows(&mut w)?;
            w.flush()
                .map_err(|e| Error::io(format!("writing {}", path.display()), e))
        };
    write("report.csv", &|w| {
        rows.iter().try_for_each(|r| w.serialize(r).map_err(Error::from))
    })?;
    write("latency.csv", &|w| {
        lat_rows.iter().try_for_each(|r| w.serialize(r).map_err(Error::from))
    })?;

    let mut text = String::from("Success rates\n\n");
    text.push_str(&table.to_text());
    text.push_str("\nPer controller\n\n");
    let _ = writeln!(
        text,
        "{:<12} {:<10} {:>8} {:>12} {:>9} {:>9} {:>9} {:>9}",
        "evaluation", "controller", "success", "placement_m", "H_mean", "H_min", "H_max", "ESS_mean"
    );
    for r in &rows {
        let _ = writeln!(
            text,
            "{:<12} {:<10} {:>8} {:>12.4} {:>9} {:>9} {:>9} {:>9}",
            r.evaluation,
            r.controller.name(),
            format!("{}/{}", r.successes, r.trials),
            r.mean_placement_error,
            fmt_opt(r.entropy_mean),
            fmt_opt(r.entropy_min),
            fmt_opt(r.entropy_max),
            fmt_opt(r.effective_samples_mean),
        );
    }
    std::fs::write(dir.join("report.txt"), text).map_err(|e| Error::io("writing report.txt", e))?;

    let mut lat_text = String::from("Per-step controller latency (ms)\n\n");
    let _ = writeln!(
        lat_text,
        "{:<12} {:<10} {:>8} {:>9} {:>9} {:>9} {:>9}",
        "evaluation", "controller", "steps", "mean", "p50", "p95", "max"
    );
    for s in &lat_rows {
        let _ = writeln!(
            lat_text,
            "{:<12} {:<10} {:>8} {:>9.3} {:>9.3} {:>9.3} {:>9.3}",
            s.evaluation,
            s.controller.name(),
            s.steps,
            s.mean_ms,
            s.p50_ms,
            s.p95_ms,
            s.max_ms
        );
    }
    std::fs::write(dir.join("latency.txt"), lat_text).map_err(|e| Error::io("writing latency.txt", e))?;

    let outputs: Vec<_> = ["report.csv", "report.txt", "latency.csv", "latency.txt"]
        .iter()
        .map(|n| dir.join(n))
        .collect();
    write_manifest(cfg, layout, stage, &dir, &inputs, &outputs)
}

/// Reads the aggregate rows written by `eval-report`.
pub fn read_report(out: &Path) -> Result<(Vec<ReportRow>, Vec<LatencyRow>)> {
    let layout = Layout::new(out);
    Ok((
        read_rows(&layout.report().join("report.csv"))?,
        read_rows(&layout.report().join("latency.csv"))?,
    ))
}
