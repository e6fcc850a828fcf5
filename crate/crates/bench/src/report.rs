//! Report emission: benchmark tables as CSV and figures as CSV plus SVG.
//!
//! The three metric tables share one shape: a block of rows per dataset
//! (one row per training strategy, the isolated baseline excluded) and two
//! metric columns per detector. Each value column carries a companion flag
//! column marking the best and second-best entry within its dataset block.
//! Missing (dataset, detector, strategy) cells stay empty and are listed
//! explicitly — in the returned output and in a sidecar file — instead of
//! failing the report. With no records at all, reports are header-only.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use fedanom_core::federation::Strategy;
use fedanom_core::models::ModelKind;

use crate::experiment::ResultsRecord;

/// Report family selector.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ReportKind {
    /// AUC-ROC and AUC-PR per detector.
    AucTable,
    /// Point-adjusted precision and recall per detector.
    PrTable,
    /// Raw and point-adjusted best F1 per detector.
    F1Table,
    /// Mean wall-clock seconds per global epoch, per strategy.
    TimeTable,
    /// Metric under different client partitions (data file plus plot).
    BetaFigure,
    /// Isolated baseline against federated strategies (data file plus plot).
    IsolationFigure,
}

impl ReportKind {
    /// Every kind, in a stable order.
    pub fn all() -> [ReportKind; 6] {
        [
            ReportKind::AucTable,
            ReportKind::PrTable,
            ReportKind::F1Table,
            ReportKind::TimeTable,
            ReportKind::BetaFigure,
            ReportKind::IsolationFigure,
        ]
    }

    /// File stem for this kind.
    pub fn stem(self) -> &'static str {
        match self {
            ReportKind::AucTable => "auc_table",
            ReportKind::PrTable => "pr_table",
            ReportKind::F1Table => "f1_table",
            ReportKind::TimeTable => "time_table",
            ReportKind::BetaFigure => "beta_figure",
            ReportKind::IsolationFigure => "isolation_figure",
        }
    }
}

impl FromStr for ReportKind {
    type Err = anyhow::Error;

    fn from_str(s: &str) -> anyhow::Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "auc_table" => Ok(ReportKind::AucTable),
            "pr_table" => Ok(ReportKind::PrTable),
            "f1_table" => Ok(ReportKind::F1Table),
            "time_table" => Ok(ReportKind::TimeTable),
            "beta_figure" => Ok(ReportKind::BetaFigure),
            "isolation_figure" => Ok(ReportKind::IsolationFigure),
            other => anyhow::bail!("unknown report kind '{other}'"),
        }
    }
}

/// Files written and cells that had no backing record.
#[derive(Debug, Clone, Default)]
pub struct ReportOutput {
    pub files: Vec<PathBuf>,
    pub missing: Vec<String>,
}

/// Dataset block order in every table.
const DATASET_ORDER: [&str; 3] = ["smd", "smap", "psm"];
/// Strategy row order inside a dataset block (isolated is a figure, not a row).
const TABLE_STRATEGIES: [Strategy; 5] = [
    Strategy::Central,
    Strategy::FedAvg,
    Strategy::FedProx,
    Strategy::Scaffold,
    Strategy::Moon,
];
/// Detector column order.
const MODEL_ORDER: [ModelKind; 5] = [
    ModelKind::DeepSvdd,
    ModelKind::LstmAe,
    ModelKind::Usad,
    ModelKind::Gdn,
    ModelKind::TranAd,
];

/// The two metric columns of a table kind, by name.
fn table_metrics(kind: ReportKind) -> Option<[&'static str; 2]> {
    match kind {
        ReportKind::AucTable => Some(["auc_roc", "auc_pr"]),
        ReportKind::PrTable => Some(["precision_adj", "recall_adj"]),
        ReportKind::F1Table => Some(["f1", "f1_adj"]),
        _ => None,
    }
}

/// Pull one metric by name out of a record's evaluation.
fn metric_value(record: &ResultsRecord, metric: &str) -> Option<f64> {
    let e = record.evaluation.as_ref()?;
    Some(match metric {
        "auc_roc" => e.auc_roc,
        "auc_pr" => e.auc_pr,
        "precision" => e.precision,
        "recall" => e.recall,
        "f1" => e.f1,
        "precision_adj" => e.precision_adj,
        "recall_adj" => e.recall_adj,
        "f1_adj" => e.f1_adj,
        _ => return None,
    })
}

/// Mean metric over all completed records matching the cell, if any.
fn cell_mean(
    records: &[ResultsRecord],
    dataset: &str,
    model: ModelKind,
    strategy: Strategy,
    metric: &str,
) -> Option<f64> {
    let mut sum = 0.0;
    let mut n = 0usize;
    for r in records {
        if r.is_ok()
            && r.dataset == dataset
            && r.model == model.name()
            && r.strategy == strategy.name()
        {
            if let Some(v) = metric_value(r, metric) {
                sum += v;
                n += 1;
            }
        }
    }
    (n > 0).then(|| sum / n as f64)
}

/// Indices of the best and second-best value; larger is better, ties keep
/// the earlier row. `None` entries are absent cells.
pub fn best_two(values: &[Option<f64>]) -> (Option<usize>, Option<usize>) {
    let mut best: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if let Some(v) = v {
            if best.is_none_or(|b| *v > values[b].unwrap()) {
                best = Some(i);
            }
        }
    }
    let mut second: Option<usize> = None;
    for (i, v) in values.iter().enumerate() {
        if Some(i) == best {
            continue;
        }
        if let Some(v) = v {
            if second.is_none_or(|s| *v > values[s].unwrap()) {
                second = Some(i);
            }
        }
    }
    (best, second)
}

/// Datasets that appear in the records, in canonical order. Unknown names
/// (not part of the benchmark trio) are appended alphabetically.
fn datasets_present(records: &[ResultsRecord]) -> Vec<String> {
    let mut present: Vec<String> = Vec::new();
    for d in DATASET_ORDER {
        if records.iter().any(|r| r.dataset == d) {
            present.push(d.to_string());
        }
    }
    let mut extras: Vec<String> = records
        .iter()
        .map(|r| r.dataset.clone())
        .filter(|d| !DATASET_ORDER.contains(&d.as_str()))
        .collect();
    extras.sort();
    extras.dedup();
    present.extend(extras);
    present
}

/// Emit one metric table (the AUC, PR, or F1 family).
fn emit_metric_table(
    records: &[ResultsRecord],
    kind: ReportKind,
    out_dir: &Path,
) -> anyhow::Result<ReportOutput> {
    let metrics = table_metrics(kind).expect("emit_metric_table called with a table kind");
    let mut csv = String::from("dataset,strategy");
    for model in MODEL_ORDER {
        for metric in metrics {
            write!(csv, ",{m}_{metric},{m}_{metric}_flag", m = model.name()).unwrap();
        }
    }
    csv.push('\n');

    let mut missing = Vec::new();
    for dataset in datasets_present(records) {
        // Collect the whole block first so flags can be computed per column.
        let mut block: Vec<Vec<Option<f64>>> = Vec::new(); // [column][row]
        for model in MODEL_ORDER {
            for metric in metrics {
                let column: Vec<Option<f64>> = TABLE_STRATEGIES
                    .iter()
                    .map(|&s| cell_mean(records, &dataset, model, s, metric))
                    .collect();
                block.push(column);
            }
        }
        let flags: Vec<(Option<usize>, Option<usize>)> =
            block.iter().map(|col| best_two(col)).collect();

        for (row, strategy) in TABLE_STRATEGIES.iter().enumerate() {
            write!(csv, "{dataset},{}", strategy.name()).unwrap();
            for (col, column) in block.iter().enumerate() {
                match column[row] {
                    Some(v) => {
                        let (best, second) = flags[col];
                        let flag = if best == Some(row) {
                            "best"
                        } else if second == Some(row) {
                            "second"
                        } else {
                            ""
                        };
                        write!(csv, ",{v:.6},{flag}").unwrap();
                    }
                    None => {
                        let model = MODEL_ORDER[col / metrics.len()];
                        let metric = metrics[col % metrics.len()];
                        missing.push(format!(
                            "{}: {dataset}/{}/{} ({metric})",
                            kind.stem(),
                            model.name(),
                            strategy.name()
                        ));
                        csv.push_str(",,");
                    }
                }
            }
            csv.push('\n');
        }
    }
    write_report_files(kind, out_dir, csv, None, missing)
}

/// Emit the per-strategy timing table.
fn emit_time_table(records: &[ResultsRecord], out_dir: &Path) -> anyhow::Result<ReportOutput> {
    let order = [
        Strategy::Central,
        Strategy::Isolated,
        Strategy::FedAvg,
        Strategy::FedProx,
        Strategy::Scaffold,
        Strategy::Moon,
    ];
    let mut csv = String::from("strategy,mean_secs_per_global_epoch,records\n");
    let mut missing = Vec::new();
    let mut any = false;
    for strategy in order {
        let per_record: Vec<f64> = records
            .iter()
            .filter(|r| r.is_ok() && r.strategy == strategy.name() && !r.round_secs.is_empty())
            .map(|r| r.round_secs.iter().sum::<f64>() / r.round_secs.len() as f64)
            .collect();
        if per_record.is_empty() {
            if !records.is_empty() {
                missing.push(format!("time_table: {}", strategy.name()));
                writeln!(csv, "{},,0", strategy.name()).unwrap();
            }
            continue;
        }
        any = true;
        let mean = per_record.iter().sum::<f64>() / per_record.len() as f64;
        writeln!(csv, "{},{mean:.6},{}", strategy.name(), per_record.len()).unwrap();
    }
    if !any && records.is_empty() {
        csv = String::from("strategy,mean_secs_per_global_epoch,records\n");
    }
    write_report_files(ReportKind::TimeTable, out_dir, csv, None, missing)
}

/// Group label for a record's partition in the beta figure.
fn partition_label(record: &ResultsRecord) -> String {
    match record.partition.as_str() {
        "dirichlet" => format!("beta={}", record.beta),
        other => other.to_string(),
    }
}

/// Aggregate rows of (label, dataset, model) means for the figure kinds.
struct FigureRow {
    label: String,
    dataset: String,
    model: String,
    auc_roc: f64,
    auc_pr: f64,
    f1: f64,
    f1_adj: f64,
    n: usize,
}

fn figure_rows<F, K>(records: &[ResultsRecord], keep: F, label: K) -> Vec<FigureRow>
where
    F: Fn(&ResultsRecord) -> bool,
    K: Fn(&ResultsRecord) -> String,
{
    let mut rows: Vec<FigureRow> = Vec::new();
    for r in records.iter().filter(|r| r.is_ok() && keep(r)) {
        let e = r.evaluation.as_ref().unwrap();
        let lab = label(r);
        if let Some(row) = rows.iter_mut().find(|row| {
            row.label == lab && row.dataset == r.dataset && row.model == r.model
        }) {
            row.auc_roc += e.auc_roc;
            row.auc_pr += e.auc_pr;
            row.f1 += e.f1;
            row.f1_adj += e.f1_adj;
            row.n += 1;
        } else {
            rows.push(FigureRow {
                label: lab,
                dataset: r.dataset.clone(),
                model: r.model.clone(),
                auc_roc: e.auc_roc,
                auc_pr: e.auc_pr,
                f1: e.f1,
                f1_adj: e.f1_adj,
                n: 1,
            });
        }
    }
    for row in &mut rows {
        let n = row.n as f64;
        row.auc_roc /= n;
        row.auc_pr /= n;
        row.f1 /= n;
        row.f1_adj /= n;
    }
    rows
}

/// Render rows to the figure CSV plus a bar-chart SVG of AUC-ROC.
fn emit_figure(
    kind: ReportKind,
    title: &str,
    mut rows: Vec<FigureRow>,
    label_order: impl Fn(&str) -> (usize, String),
    out_dir: &Path,
) -> anyhow::Result<ReportOutput> {
    rows.sort_by(|a, b| {
        label_order(&a.label)
            .cmp(&label_order(&b.label))
            .then(a.dataset.cmp(&b.dataset))
            .then(a.model.cmp(&b.model))
    });
    let mut csv = String::from("group,dataset,model,auc_roc,auc_pr,f1,f1_adj,records\n");
    for row in &rows {
        writeln!(
            csv,
            "{},{},{},{:.6},{:.6},{:.6},{:.6},{}",
            row.label, row.dataset, row.model, row.auc_roc, row.auc_pr, row.f1, row.f1_adj, row.n
        )
        .unwrap();
    }
    let bars: Vec<(String, f64)> = rows
        .iter()
        .map(|r| {
            (
                format!("{} {}/{}", r.label, r.dataset, r.model),
                r.auc_roc,
            )
        })
        .collect();
    let svg = bar_chart_svg(title, "AUC-ROC", &bars);
    write_report_files(kind, out_dir, csv, Some(svg), Vec::new())
}

/// Minimal self-contained SVG bar chart.
fn bar_chart_svg(title: &str, y_label: &str, bars: &[(String, f64)]) -> String {
    let bar_w = 46.0;
    let gap = 22.0;
    let margin_l = 60.0;
    let margin_b = 110.0;
    let margin_t = 40.0;
    let plot_h = 260.0;
    let width = margin_l + 20.0 + bars.len() as f64 * (bar_w + gap);
    let height = margin_t + plot_h + margin_b;
    let y_max = bars
        .iter()
        .map(|(_, v)| *v)
        .fold(0.0_f64, f64::max)
        .max(1.0)
        * 1.05;

    let mut s = String::new();
    write!(
        s,
        "<svg xmlns=\"http://www.w3.org/2000/svg\" width=\"{width:.0}\" height=\"{height:.0}\" \
         viewBox=\"0 0 {width:.0} {height:.0}\" font-family=\"sans-serif\" font-size=\"11\">\n"
    )
    .unwrap();
    write!(
        s,
        "<text x=\"{:.0}\" y=\"20\" font-size=\"14\" text-anchor=\"middle\">{title}</text>\n",
        width / 2.0
    )
    .unwrap();
    // Axes.
    write!(
        s,
        "<line x1=\"{margin_l}\" y1=\"{margin_t}\" x2=\"{margin_l}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        margin_t + plot_h
    )
    .unwrap();
    write!(
        s,
        "<line x1=\"{margin_l}\" y1=\"{:.1}\" x2=\"{:.1}\" y2=\"{:.1}\" stroke=\"black\"/>\n",
        margin_t + plot_h,
        width - 10.0,
        margin_t + plot_h
    )
    .unwrap();
    write!(
        s,
        "<text x=\"14\" y=\"{:.1}\" transform=\"rotate(-90 14 {:.1})\" text-anchor=\"middle\">{y_label}</text>\n",
        margin_t + plot_h / 2.0,
        margin_t + plot_h / 2.0
    )
    .unwrap();
    // Y ticks at 0, .25, .5, .75, 1 of y_max.
    for k in 0..=4 {
        let frac = k as f64 / 4.0;
        let y = margin_t + plot_h * (1.0 - frac);
        write!(
            s,
            "<line x1=\"{:.1}\" y1=\"{y:.1}\" x2=\"{margin_l}\" y2=\"{y:.1}\" stroke=\"black\"/>\n",
            margin_l - 4.0
        )
        .unwrap();
        write!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"end\">{:.2}</text>\n",
            margin_l - 7.0,
            y + 4.0,
            y_max * frac
        )
        .unwrap();
    }
    if bars.is_empty() {
        write!(
            s,
            "<text x=\"{:.0}\" y=\"{:.0}\" text-anchor=\"middle\">no data</text>\n",
            width / 2.0,
            margin_t + plot_h / 2.0
        )
        .unwrap();
    }
    for (i, (label, value)) in bars.iter().enumerate() {
        let x = margin_l + 10.0 + i as f64 * (bar_w + gap);
        let h = plot_h * (value / y_max).clamp(0.0, 1.0);
        let y = margin_t + plot_h - h;
        write!(
            s,
            "<rect x=\"{x:.1}\" y=\"{y:.1}\" width=\"{bar_w}\" height=\"{h:.1}\" fill=\"#4878a8\"/>\n"
        )
        .unwrap();
        write!(
            s,
            "<text x=\"{:.1}\" y=\"{:.1}\" text-anchor=\"middle\">{value:.3}</text>\n",
            x + bar_w / 2.0,
            y - 4.0
        )
        .unwrap();
        let lx = x + bar_w / 2.0;
        let ly = margin_t + plot_h + 12.0;
        write!(
            s,
            "<text x=\"{lx:.1}\" y=\"{ly:.1}\" transform=\"rotate(45 {lx:.1} {ly:.1})\" text-anchor=\"start\">{}</text>\n",
            xml_escape(label)
        )
        .unwrap();
    }
    s.push_str("</svg>\n");
    s
}

fn xml_escape(s: &str) -> String {
    s.replace('&', "&amp;").replace('<', "&lt;").replace('>', "&gt;")
}

/// Write the CSV (and SVG), plus a sidecar listing missing cells.
fn write_report_files(
    kind: ReportKind,
    out_dir: &Path,
    csv: String,
    svg: Option<String>,
    missing: Vec<String>,
) -> anyhow::Result<ReportOutput> {
    std::fs::create_dir_all(out_dir)?;
    let mut files = Vec::new();
    let csv_path = out_dir.join(format!("{}.csv", kind.stem()));
    std::fs::write(&csv_path, csv)?;
    files.push(csv_path);
    if let Some(svg) = svg {
        let svg_path = out_dir.join(format!("{}.svg", kind.stem()));
        std::fs::write(&svg_path, svg)?;
        files.push(svg_path);
    }
    if !missing.is_empty() {
        let miss_path = out_dir.join(format!("{}_missing.txt", kind.stem()));
        std::fs::write(&miss_path, missing.join("\n") + "\n")?;
        files.push(miss_path);
    }
    Ok(ReportOutput { files, missing })
}

/// Emit one report from a set of records into `out_dir`.
///
/// Tables mirror the benchmark layout: dataset blocks by row, strategies
/// within a block, two metric columns per detector, and flag columns that
/// mark the best and second-best value per column within each block.
/// Figure kinds write a grouped data CSV and a rendered SVG. Missing cells
/// never fail the report; they are listed in the returned output (and in a
/// `*_missing.txt` sidecar). Empty input produces header-only files.
pub fn emit_report(
    records: &[ResultsRecord],
    kind: ReportKind,
    out_dir: &Path,
) -> anyhow::Result<ReportOutput> {
    match kind {
        ReportKind::AucTable | ReportKind::PrTable | ReportKind::F1Table => {
            emit_metric_table(records, kind, out_dir)
        }
        ReportKind::TimeTable => emit_time_table(records, out_dir),
        ReportKind::BetaFigure => {
            let rows = figure_rows(
                records,
                |r| r.strategy == Strategy::FedAvg.name(),
                partition_label,
            );
            emit_figure(
                kind,
                "Aggregation under different client partitions",
                rows,
                |label| match label {
                    "equal" => (0, String::new()),
                    l if l.starts_with("beta=") => {
                        // Numeric sort for the concentration parameter.
                        let v: f64 = l["beta=".len()..].parse().unwrap_or(f64::MAX);
                        (1, format!("{:020.6}", v))
                    }
                    l => (2, l.to_string()),
                },
                out_dir,
            )
        }
        ReportKind::IsolationFigure => {
            let rows = figure_rows(records, |_| true, |r| r.strategy.clone());
            emit_figure(
                kind,
                "Isolated training against federated strategies",
                rows,
                |label| {
                    let rank = [
                        Strategy::Isolated,
                        Strategy::Central,
                        Strategy::FedAvg,
                        Strategy::FedProx,
                        Strategy::Scaffold,
                        Strategy::Moon,
                    ]
                    .iter()
                    .position(|s| s.name() == label)
                    .unwrap_or(usize::MAX);
                    (rank, label.to_string())
                },
                out_dir,
            )
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use fedanom_core::metrics::EvaluationResult;

    fn record(dataset: &str, model: &str, strategy: &str, auc_roc: f64) -> ResultsRecord {
        ResultsRecord {
            fingerprint: format!("{dataset}-{model}-{strategy}-{auc_roc}"),
            dataset: dataset.into(),
            model: model.into(),
            strategy: strategy.into(),
            partition: "dirichlet".into(),
            beta: 0.5,
            clients: 4,
            seed: 0,
            smoke: true,
            global_epochs: 3,
            local_epochs: 10,
            status: "ok".into(),
            error: None,
            evaluation: Some(EvaluationResult {
                auc_roc,
                auc_pr: auc_roc - 0.05,
                precision: 0.5,
                recall: 0.5,
                f1: auc_roc / 2.0,
                precision_adj: 0.6,
                recall_adj: 0.6,
                f1_adj: auc_roc / 2.0 + 0.1,
                threshold: 0.5,
                threshold_adj: 0.5,
                config_fingerprint: String::new(),
            }),
            round_secs: vec![0.5, 0.7],
            loss_curve: vec![1.0, 0.9],
            total_secs: 1.3,
            created_unix: 0,
        }
    }

    #[test]
    fn empty_records_emit_header_only() {
        let dir = tempfile::tempdir().unwrap();
        for kind in ReportKind::all() {
            let out = emit_report(&[], kind, dir.path()).unwrap();
            let csv = std::fs::read_to_string(&out.files[0]).unwrap();
            assert_eq!(csv.lines().count(), 1, "{}: header only", kind.stem());
            assert!(out.missing.is_empty());
        }
    }

    #[test]
    fn table_structure_and_flags() {
        let dir = tempfile::tempdir().unwrap();
        let mut records = Vec::new();
        for (s, v) in [
            ("central", 0.90),
            ("fedavg", 0.95),
            ("fedprox", 0.85),
            ("scaffold", 0.80),
            ("moon", 0.75),
        ] {
            records.push(record("psm", "usad", s, v));
        }
        let out = emit_report(&records, ReportKind::AucTable, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 1 + 5, "one dataset block of five strategies");
        let header: Vec<&str> = lines[0].split(',').collect();
        assert_eq!(header.len(), 2 + 5 * 2 * 2, "2 id cols + 5 models x 2 metrics x 2");
        assert_eq!(header[2], "deepsvdd_auc_roc");
        assert_eq!(header[3], "deepsvdd_auc_roc_flag");

        // usad_auc_roc lives after deepsvdd and lstmae (2 metrics, 2 cols each).
        let col = header.iter().position(|h| *h == "usad_auc_roc").unwrap();
        let flag_of = |strategy: &str| -> String {
            let row = lines.iter().find(|l| l.contains(strategy)).unwrap();
            row.split(',').nth(col + 1).unwrap().to_string()
        };
        assert_eq!(flag_of("fedavg"), "best");
        assert_eq!(flag_of("central"), "second");
        assert_eq!(flag_of("moon"), "");

        // Cells for the other four detectors are missing and listed.
        assert!(!out.missing.is_empty());
        assert!(out.missing.iter().any(|m| m.contains("psm/deepsvdd/central")));
        assert!(out
            .files
            .iter()
            .any(|f| f.file_name().unwrap() == "auc_table_missing.txt"));
    }

    #[test]
    fn best_two_handles_ties_and_gaps() {
        let (b, s) = best_two(&[Some(1.0), Some(1.0), Some(0.5)]);
        assert_eq!((b, s), (Some(0), Some(1)), "ties keep the earlier row");
        let (b, s) = best_two(&[None, Some(0.2), None]);
        assert_eq!((b, s), (Some(1), None));
        let (b, s) = best_two(&[None, None]);
        assert_eq!((b, s), (None, None));
    }

    #[test]
    fn time_table_orders_strategies() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            record("psm", "usad", "moon", 0.9),
            record("psm", "usad", "central", 0.9),
        ];
        let out = emit_report(&records, ReportKind::TimeTable, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert!(lines[1].starts_with("central,0.6"), "{}", lines[1]);
        assert!(lines.last().unwrap().starts_with("moon,0.6"));
        assert!(out.missing.iter().any(|m| m.contains("fedavg")));
    }

    #[test]
    fn beta_figure_groups_partitions() {
        let dir = tempfile::tempdir().unwrap();
        let mut equal = record("psm", "usad", "fedavg", 0.8);
        equal.partition = "equal".into();
        let mut b01 = record("psm", "usad", "fedavg", 0.7);
        b01.beta = 0.1;
        b01.fingerprint = "x1".into();
        let mut b5 = record("psm", "usad", "fedavg", 0.9);
        b5.beta = 5.0;
        b5.fingerprint = "x2".into();
        // A second seed for beta=5 to verify averaging.
        let mut b5b = record("psm", "usad", "fedavg", 0.7);
        b5b.beta = 5.0;
        b5b.fingerprint = "x3".into();
        let ignored = record("psm", "usad", "central", 0.99);

        let out = emit_report(
            &[equal, b01, b5, b5b, ignored],
            ReportKind::BetaFigure,
            dir.path(),
        )
        .unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 4, "three groups plus header: {csv}");
        assert!(lines[1].starts_with("equal,"));
        assert!(lines[2].starts_with("beta=0.1,"));
        assert!(lines[3].starts_with("beta=5,"));
        assert!(lines[3].contains(",0.800000"), "beta=5 rows must average: {csv}");
        assert!(out.files.iter().any(|f| f.extension().unwrap() == "svg"));
        let svg = std::fs::read_to_string(&out.files[1]).unwrap();
        assert!(svg.starts_with("<svg"));
        assert!(svg.contains("rect"));
    }

    #[test]
    fn isolation_figure_includes_isolated_first() {
        let dir = tempfile::tempdir().unwrap();
        let records = vec![
            record("psm", "usad", "fedavg", 0.9),
            record("psm", "usad", "isolated", 0.6),
        ];
        let out = emit_report(&records, ReportKind::IsolationFigure, dir.path()).unwrap();
        let csv = std::fs::read_to_string(&out.files[0]).unwrap();
        let lines: Vec<&str> = csv.lines().collect();
        assert_eq!(lines.len(), 3);
        assert!(lines[1].starts_with("isolated,"));
        assert!(lines[2].starts_with("fedavg,"));
    }
}
