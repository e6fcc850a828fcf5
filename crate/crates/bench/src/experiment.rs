//! End-to-end experiment and grid runners.
//!
//! [`run_experiment`] drives one config through the whole pipeline — load,
//! normalize, partition, train, score, evaluate — and appends the outcome to
//! the result store. Completed runs are found by fingerprint and returned
//! without recomputation, which makes grids resumable. Failures at any stage
//! are themselves persisted as failed records so a grid can keep going and a
//! report can list the missing cells.

use std::path::Path;
use std::time::{Instant, SystemTime, UNIX_EPOCH};

use fedanom_core::dataset::{
    self, load_dataset, make_test_windows, make_windows, DatasetBundle, WindowSet,
};
use fedanom_core::federation::{self, pooled_windows, Strategy, TrainingOutcome};
use fedanom_core::metrics::{self, EvaluationResult};
use fedanom_core::models::{self, ModelConfig};
use fedanom_core::partition::{partition, ClientAssignment, PartitionScheme};
use fedanom_core::ParameterSet;
use serde::{Deserialize, Serialize};

use crate::config::{ExperimentConfig, SMOKE_TRAIN_ROWS};
use crate::store::RecordStore;

/// Pipeline stage, used to name where a run failed.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum Stage {
    Config,
    Load,
    Partition,
    Train,
    Evaluate,
    Persist,
    Report,
}

impl std::fmt::Display for Stage {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let s = match self {
            Stage::Config => "config",
            Stage::Load => "load",
            Stage::Partition => "partition",
            Stage::Train => "train",
            Stage::Evaluate => "evaluate",
            Stage::Persist => "persist",
            Stage::Report => "report",
        };
        f.write_str(s)
    }
}

/// An error tagged with the pipeline stage that produced it.
#[derive(Debug)]
pub struct StageError {
    pub stage: Stage,
    pub source: anyhow::Error,
}

impl std::fmt::Display for StageError {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "stage {}: {:#}", self.stage, self.source)
    }
}

impl std::error::Error for StageError {}

/// Tag an error with its stage.
fn at_stage<E: Into<anyhow::Error>>(stage: Stage) -> impl FnOnce(E) -> StageError {
    move |e| StageError {
        stage,
        source: e.into(),
    }
}

/// Short stable name for a partition scheme in records and reports.
pub fn scheme_name(scheme: PartitionScheme) -> &'static str {
    match scheme {
        PartitionScheme::PerSeries => "per_series",
        PartitionScheme::DirichletContiguous => "dirichlet",
        PartitionScheme::Equal => "equal",
    }
}

/// One line of the append-only result store.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ResultsRecord {
    pub fingerprint: String,
    pub dataset: String,
    pub model: String,
    pub strategy: String,
    pub partition: String,
    pub beta: f64,
    pub clients: usize,
    pub seed: u64,
    pub smoke: bool,
    /// Rounds actually run (after any smoke cap).
    pub global_epochs: usize,
    pub local_epochs: usize,
    /// "ok" or "failed".
    pub status: String,
    /// Failure description when status is "failed".
    pub error: Option<String>,
    /// Metrics; present only on success. Deterministic given the fingerprint.
    pub evaluation: Option<EvaluationResult>,
    /// Wall-clock seconds per round; timing only, excluded from determinism.
    pub round_secs: Vec<f64>,
    /// Mean training loss per round.
    pub loss_curve: Vec<f64>,
    pub total_secs: f64,
    pub created_unix: u64,
}

impl ResultsRecord {
    /// True when the run completed and carries an evaluation.
    pub fn is_ok(&self) -> bool {
        self.status == "ok" && self.evaluation.is_some()
    }

    /// Skeleton record with identity fields filled from a config.
    fn skeleton(cfg: &ExperimentConfig, fingerprint: String) -> Self {
        Self {
            fingerprint,
            dataset: cfg.dataset.dir_name().to_string(),
            model: cfg.model.name().to_string(),
            strategy: cfg.strategy.name().to_string(),
            partition: scheme_name(cfg.partition).to_string(),
            beta: cfg.beta,
            clients: cfg.clients,
            seed: cfg.seed,
            smoke: cfg.smoke,
            global_epochs: cfg.effective_global_epochs(),
            local_epochs: cfg.local_epochs,
            status: "failed".to_string(),
            error: None,
            evaluation: None,
            round_secs: Vec::new(),
            loss_curve: Vec::new(),
            total_secs: 0.0,
            created_unix: SystemTime::now()
                .duration_since(UNIX_EPOCH)
                .map(|d| d.as_secs())
                .unwrap_or(0),
        }
    }
}

/// Result of one `run_experiment` call.
#[derive(Debug, Clone)]
pub struct RunOutcome {
    pub record: ResultsRecord,
    /// True when the record came from the store instead of a fresh run.
    pub resumed: bool,
}

/// Everything the successful pipeline produces besides identity fields.
struct Computed {
    evaluation: EvaluationResult,
    round_secs: Vec<f64>,
    loss_curve: Vec<f64>,
}

/// Cap each series' training split at the smoke budget.
fn truncate_for_smoke(bundle: &mut DatasetBundle, cap: usize) {
    for series in &mut bundle.series {
        if series.train.rows() > cap {
            series.train = series.train.slice_rows(0, cap);
        }
    }
}

/// Windows each client can see: sliding windows inside each owned slice.
/// Slices shorter than the window contribute nothing; a client may end up
/// with an empty set, which training carries at zero weight.
pub fn client_windows(
    bundle: &DatasetBundle,
    assignment: &ClientAssignment,
    window_len: usize,
) -> anyhow::Result<Vec<WindowSet>> {
    let mut out = Vec::with_capacity(assignment.n_clients);
    for slices in &assignment.assignment {
        let mut windows = Vec::new();
        let mut anchors = Vec::new();
        for slice in slices {
            let series = bundle
                .series
                .iter()
                .find(|s| s.entity_id == slice.entity_id)
                .ok_or_else(|| {
                    anyhow::anyhow!("assignment references unknown entity {}", slice.entity_id)
                })?;
            if slice.len() < window_len {
                continue;
            }
            let sub = series.train.slice_rows(slice.row_start, slice.row_end);
            let mut ws = make_windows(&sub, window_len, 1)?;
            windows.append(&mut ws.windows);
            for a in ws.anchors {
                anchors.push(slice.row_start + a);
            }
        }
        out.push(WindowSet { windows, anchors });
    }
    Ok(out)
}

/// Score the full test split of every series with one model and pool the
/// scores against the concatenated labels, in dataset series order.
fn score_all_series(
    params: &ParameterSet,
    model_cfg: &ModelConfig,
    bundle: &DatasetBundle,
) -> anyhow::Result<(Vec<f64>, Vec<u8>)> {
    let mut scores = Vec::new();
    let mut labels = Vec::new();
    for series in &bundle.series {
        let tw = make_test_windows(&series.test, model_cfg.window_len)?;
        let s = models::score_series(params, model_cfg, &tw, series.test.rows())?;
        scores.extend_from_slice(&s);
        labels.extend_from_slice(&series.test_labels);
    }
    Ok((scores, labels))
}

/// Mean of evaluation results, field by field (isolated baseline summary).
fn mean_evaluation(results: &[EvaluationResult]) -> EvaluationResult {
    let n = results.len() as f64;
    let mut mean = EvaluationResult {
        auc_roc: 0.0,
        auc_pr: 0.0,
        precision: 0.0,
        recall: 0.0,
        f1: 0.0,
        precision_adj: 0.0,
        recall_adj: 0.0,
        f1_adj: 0.0,
        threshold: 0.0,
        threshold_adj: 0.0,
        config_fingerprint: String::new(),
    };
    for r in results {
        mean.auc_roc += r.auc_roc / n;
        mean.auc_pr += r.auc_pr / n;
        mean.precision += r.precision / n;
        mean.recall += r.recall / n;
        mean.f1 += r.f1 / n;
        mean.precision_adj += r.precision_adj / n;
        mean.recall_adj += r.recall_adj / n;
        mean.f1_adj += r.f1_adj / n;
        mean.threshold += r.threshold / n;
        mean.threshold_adj += r.threshold_adj / n;
    }
    mean
}

/// Evaluate a finished training run.
///
/// Shared-model regimes calibrate the final global model on the pooled
/// client windows and score every series' full test split once. The isolated
/// baseline calibrates and scores per client on the full test split and
/// reports the field-wise mean over clients.
fn evaluate_outcome(
    cfg: &ExperimentConfig,
    model_cfg: &ModelConfig,
    bundle: &DatasetBundle,
    windows: &[WindowSet],
    outcome: &TrainingOutcome,
) -> anyhow::Result<EvaluationResult> {
    if cfg.strategy == Strategy::Isolated {
        let per_client = outcome
            .per_client
            .as_ref()
            .ok_or_else(|| anyhow::anyhow!("isolated run missing per-client models"))?;
        let mut evals = Vec::with_capacity(per_client.len());
        for (i, params) in per_client.iter().enumerate() {
            let mut p = params.clone();
            models::calibrate_scoring(&mut p, model_cfg, &windows[i])?;
            let (scores, labels) = score_all_series(&p, model_cfg, bundle)?;
            evals.push(metrics::evaluate(&scores, &labels)?);
        }
        Ok(mean_evaluation(&evals))
    } else {
        let mut params = outcome.global.clone();
        models::calibrate_scoring(&mut params, model_cfg, &pooled_windows(windows))?;
        let (scores, labels) = score_all_series(&params, model_cfg, bundle)?;
        Ok(metrics::evaluate(&scores, &labels)?)
    }
}

/// The full pipeline for one config; returns metrics and timing.
fn compute(cfg: &ExperimentConfig, data_root: &Path) -> Result<Computed, StageError> {
    let mut bundle = load_dataset(cfg.dataset, data_root).map_err(at_stage(Stage::Load))?;
    if cfg.smoke {
        truncate_for_smoke(&mut bundle, SMOKE_TRAIN_ROWS);
    }
    let bundle = dataset::normalize(&bundle).map_err(at_stage(Stage::Load))?;

    let model_cfg = cfg.model_config(bundle.dims);
    model_cfg.validate().map_err(at_stage(Stage::Config))?;

    let assignment =
        partition(&bundle, &cfg.partition_config()).map_err(at_stage(Stage::Partition))?;
    let windows = client_windows(&bundle, &assignment, model_cfg.window_len)
        .map_err(at_stage(Stage::Partition))?;

    let outcome = federation::run_training(
        &model_cfg,
        &cfg.train_config(),
        &cfg.federation_config(),
        &windows,
    )
    .map_err(at_stage(Stage::Train))?;

    let evaluation = evaluate_outcome(cfg, &model_cfg, &bundle, &windows, &outcome)
        .map_err(at_stage(Stage::Evaluate))?;

    Ok(Computed {
        evaluation,
        round_secs: outcome
            .rounds
            .iter()
            .map(|r| r.duration.as_secs_f64())
            .collect(),
        loss_curve: outcome.rounds.iter().map(|r| r.mean_loss).collect(),
    })
}

/// Run one experiment, resuming from the store when a completed record with
/// the same fingerprint exists. Failures are persisted as failed records
/// before the error is returned, so grids can continue.
pub fn run_experiment(
    cfg: &ExperimentConfig,
    data_root: &Path,
    store: &RecordStore,
) -> Result<RunOutcome, StageError> {
    cfg.validate().map_err(at_stage(Stage::Config))?;
    let fingerprint = cfg.fingerprint();

    if let Some(record) = store.get_ok(&fingerprint) {
        return Ok(RunOutcome {
            record,
            resumed: true,
        });
    }

    let started = Instant::now();
    let mut record = ResultsRecord::skeleton(cfg, fingerprint.clone());

    match compute(cfg, data_root) {
        Ok(computed) => {
            let mut evaluation = computed.evaluation;
            evaluation.config_fingerprint = fingerprint;
            record.status = "ok".to_string();
            record.evaluation = Some(evaluation);
            record.round_secs = computed.round_secs;
            record.loss_curve = computed.loss_curve;
            record.total_secs = started.elapsed().as_secs_f64();
            store.append(&record).map_err(at_stage(Stage::Persist))?;
            Ok(RunOutcome {
                record,
                resumed: false,
            })
        }
        Err(err) => {
            record.error = Some(err.to_string());
            record.total_secs = started.elapsed().as_secs_f64();
            store.append(&record).map_err(at_stage(Stage::Persist))?;
            Err(err)
        }
    }
}

/// Summary of a grid run.
#[derive(Debug, Clone)]
pub struct GridSummary {
    pub records: Vec<ResultsRecord>,
    /// Configs answered from the store without training.
    pub resumed: usize,
    /// Configs that failed this invocation (their failures are persisted).
    pub failed: usize,
    /// One message per failure, in grid order.
    pub failures: Vec<String>,
    /// Stage of the first failure, for exit diagnostics.
    pub first_error_stage: Option<Stage>,
}

/// Run every config in order, resuming completed ones and carrying on past
/// failures. Only a broken store aborts the grid.
pub fn run_grid(
    configs: &[ExperimentConfig],
    data_root: &Path,
    store: &RecordStore,
) -> Result<GridSummary, StageError> {
    let mut summary = GridSummary {
        records: Vec::with_capacity(configs.len()),
        resumed: 0,
        failed: 0,
        failures: Vec::new(),
        first_error_stage: None,
    };
    for cfg in configs {
        match run_experiment(cfg, data_root, store) {
            Ok(outcome) => {
                if outcome.resumed {
                    summary.resumed += 1;
                }
                summary.records.push(outcome.record);
            }
            Err(err) if err.stage == Stage::Persist => return Err(err),
            Err(err) => {
                summary.failed += 1;
                summary.first_error_stage.get_or_insert(err.stage);
                summary
                    .failures
                    .push(format!("{}: {err}", crate::config::config_label(cfg)));
            }
        }
    }
    Ok(summary)
}
