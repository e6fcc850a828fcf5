//! `fedanom` — command-line front end for the benchmark harness.
//!
//! A run needs a dataset, a detector, and a training regime, supplied by
//! flags or a TOML config file (flags override the file). Results land in
//! an append-only store under `--out`; rerunning a finished config is a
//! no-op thanks to fingerprint resume. `--emit-reports` turns the store
//! into the benchmark tables and figures. Exit status is zero on success;
//! failures name the pipeline stage that broke.

use std::path::PathBuf;
use std::process::ExitCode;

use clap::Parser;
use fedanom_bench::config::{FileConfig, GridSpec, RawConfig, RawGrid};
use fedanom_bench::experiment::{run_grid, Stage};
use fedanom_bench::report::{emit_report, ReportKind};
use fedanom_bench::store::RecordStore;
use fedanom_bench::synth::{generate_all, SynthSpec};

#[derive(Parser, Debug)]
#[command(
    name = "fedanom",
    about = "Federated time-series anomaly-detection benchmark",
    version
)]
struct Cli {
    /// Dataset: smd, smap, or psm.
    #[arg(long)]
    dataset: Option<String>,
    /// Detector: deepsvdd, lstmae, usad, gdn, or tranad.
    #[arg(long)]
    model: Option<String>,
    /// Training regime: central, isolated, fedavg, fedprox, scaffold, or moon.
    #[arg(long)]
    fl: Option<String>,
    /// Number of clients (default: the dataset's canonical client count).
    #[arg(long)]
    clients: Option<usize>,
    /// Dirichlet concentration for the dirichlet partition.
    #[arg(long)]
    beta: Option<f64>,
    /// Partition scheme: per_series, dirichlet, or equal.
    #[arg(long)]
    partition: Option<String>,
    /// Communication rounds (pseudo-rounds for the baselines).
    #[arg(long)]
    global_epochs: Option<usize>,
    /// Local epochs per round (default 10).
    #[arg(long)]
    local_epochs: Option<usize>,
    /// Master seed for every random stream.
    #[arg(long)]
    seed: Option<u64>,
    /// Output directory for the result store and reports.
    #[arg(long, default_value = "runs")]
    out: PathBuf,
    /// Shrink models, cap training rows, and cap global epochs at 3.
    #[arg(long)]
    smoke: bool,
    /// TOML config file; command-line flags override its values.
    #[arg(long)]
    config: Option<PathBuf>,
    /// Directory holding `<dataset>/meta.txt` and the series CSVs.
    #[arg(long, default_value = "data")]
    data_root: PathBuf,
    /// Generate the synthetic datasets under --data-root first.
    #[arg(long)]
    gen_synth: bool,
    /// Run each config with this many consecutive seeds.
    #[arg(long, default_value_t = 1)]
    repeats: u64,
    /// Emit every report from the store after running.
    #[arg(long)]
    emit_reports: bool,
}

impl Cli {
    /// The flag layer as a partial config.
    fn as_raw(&self) -> RawConfig {
        RawConfig {
            dataset: self.dataset.clone(),
            model: self.model.clone(),
            fl: self.fl.clone(),
            clients: self.clients,
            partition: self.partition.clone(),
            beta: self.beta,
            global_epochs: self.global_epochs,
            local_epochs: self.local_epochs,
            seed: self.seed,
            smoke: self.smoke.then_some(true),
            lr: None,
            batch_size: None,
            mu: None,
            tau: None,
            contrastive_weight: None,
        }
    }
}

fn fail(stage: Stage, err: &dyn std::fmt::Display) -> ExitCode {
    eprintln!("fedanom: error in stage {stage}: {err}");
    ExitCode::FAILURE
}

fn main() -> ExitCode {
    let cli = Cli::parse();

    // Layer the configuration: file first, then flags.
    let file = match &cli.config {
        Some(path) => {
            let text = match std::fs::read_to_string(path) {
                Ok(t) => t,
                Err(e) => return fail(Stage::Config, &e),
            };
            match FileConfig::parse(&text) {
                Ok(f) => f,
                Err(e) => return fail(Stage::Config, &e),
            }
        }
        None => FileConfig::default(),
    };
    let mut base = file.experiment.unwrap_or_default();
    base.overlay(&cli.as_raw());

    if cli.gen_synth {
        if let Err(e) = generate_all(&cli.data_root, &SynthSpec::small()) {
            return fail(Stage::Load, &e);
        }
        println!(
            "generated synthetic datasets under {}",
            cli.data_root.display()
        );
    }

    let selection_given = base.dataset.is_some() || base.model.is_some() || base.fl.is_some();
    let store = match RecordStore::open(&cli.out.join("records.ndjson")) {
        Ok(s) => s,
        Err(e) => return fail(Stage::Persist, &e),
    };

    let mut exit = ExitCode::SUCCESS;
    if selection_given || file.grid.is_some() {
        // Expand the grid (a single run is a grid of one cell).
        let grid = match GridSpec::from_parts(base, file.grid.unwrap_or_else(RawGrid::default)) {
            Ok(g) => g,
            Err(e) => return fail(Stage::Config, &e),
        };
        let mut configs = match grid.expand() {
            Ok(c) => c,
            Err(e) => return fail(Stage::Config, &e),
        };
        if cli.repeats > 1 {
            let mut repeated = Vec::with_capacity(configs.len() * cli.repeats as usize);
            for cfg in configs {
                for k in 0..cli.repeats {
                    let mut c = cfg.clone();
                    c.seed = cfg.seed.wrapping_add(k);
                    repeated.push(c);
                }
            }
            configs = repeated;
        }

        let summary = match run_grid(&configs, &cli.data_root, &store) {
            Ok(s) => s,
            Err(e) => return fail(e.stage, &e.source),
        };
        for record in &summary.records {
            if let Some(e) = &record.evaluation {
                println!(
                    "{}/{}/{} seed={}: auc_roc={:.4} auc_pr={:.4} f1={:.4} f1_adj={:.4}",
                    record.dataset,
                    record.model,
                    record.strategy,
                    record.seed,
                    e.auc_roc,
                    e.auc_pr,
                    e.f1,
                    e.f1_adj
                );
            }
        }
        if summary.resumed > 0 {
            println!("resumed {} completed run(s) from the store", summary.resumed);
        }
        for failure in &summary.failures {
            eprintln!("fedanom: failed: {failure}");
        }
        if summary.failed > 0 {
            let stage = summary.first_error_stage.unwrap_or(Stage::Train);
            eprintln!(
                "fedanom: {} of {} run(s) failed; first failure in stage {stage}",
                summary.failed,
                configs.len()
            );
            exit = ExitCode::FAILURE;
        }
    } else if !cli.emit_reports && !cli.gen_synth {
        return fail(
            Stage::Config,
            &"nothing to do: pass --dataset/--model/--fl, a --config file, \
              --gen-synth, or --emit-reports",
        );
    }

    if cli.emit_reports {
        let records = store.records();
        let report_dir = cli.out.join("reports");
        for kind in ReportKind::all() {
            match emit_report(&records, kind, &report_dir) {
                Ok(out) => {
                    for f in &out.files {
                        println!("wrote {}", f.display());
                    }
                    if !out.missing.is_empty() {
                        println!(
                            "{}: {} missing cell(s) listed in the sidecar",
                            kind.stem(),
                            out.missing.len()
                        );
                    }
                }
                Err(e) => return fail(Stage::Report, &e),
            }
        }
    }

    exit
}
