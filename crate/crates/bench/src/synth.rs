//! Seeded synthetic datasets in the on-disk layout the loader expects.
//!
//! Each generated dataset matches the series/dimension geometry of its real
//! counterpart (28x38, 54x25, 1x25) but with a configurable, much smaller
//! number of rows, so smoke runs and the acceptance suite stay fast while
//! exercising the full pipeline. Training splits are clean periodic signals
//! with cross-dimension structure riding on a slow shared regime drift —
//! machine metrics are non-stationary in practice, and the drift means a
//! narrow time slice is not representative of the whole series. All periods
//! divide a common base cycle, so the joint signal state recurs and the
//! test split (which continues the clock) revisits the state space training
//! covered instead of extrapolating past it. Test splits inject labeled
//! anomaly segments (level shifts, noise bursts, and frozen dimensions).

use std::f64::consts::TAU;
use std::fs;
use std::path::{Path, PathBuf};

use fedanom_core::dataset::DatasetName;
use fedanom_core::rng;
use rand::Rng;

/// Row counts and seed for a generated dataset.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SynthSpec {
    /// Training rows per series.
    pub train_rows: usize,
    /// Test rows per series.
    pub test_rows: usize,
    pub seed: u64,
}

impl SynthSpec {
    /// Enough rows to train and evaluate at smoke scale.
    pub fn small() -> Self {
        Self {
            train_rows: 1600,
            test_rows: 1200,
            seed: 7777,
        }
    }

    /// Minimal rows; useful when only geometry matters.
    pub fn tiny() -> Self {
        Self {
            train_rows: 120,
            test_rows: 100,
            seed: 7777,
        }
    }
}

/// One dimension's clean-signal parameters.
struct DimSignal {
    period: f64,
    phase: f64,
    amplitude: f64,
    /// Coupling to the series-wide shared factor.
    shared_weight: f64,
    /// Coupling to the series-wide slow regime drift.
    drift_weight: f64,
}

/// Injected anomaly shapes.
///
/// Level shifts carry an independent random sign per affected dimension:
/// coherent all-dims moves already occur legitimately through the shared
/// factor and the regime drift, so a detectable fault has to break the
/// cross-dimension structure rather than ride along it.
enum AnomalyKind {
    LevelShift(f64),
    NoiseBurst(f64),
    Freeze,
}

/// Clean value of one dimension at absolute time `t` (before noise).
fn clean_value(sig: &DimSignal, shared: f64, drift: f64, t: usize) -> f64 {
    0.5 + sig.amplitude * (TAU * t as f64 / sig.period + sig.phase).sin()
        + sig.shared_weight * shared
        + sig.drift_weight * drift
}

/// Generate one series and write its three files; returns the label vector.
fn write_series(
    dir: &Path,
    entity: &str,
    dims: usize,
    spec: &SynthSpec,
    series_index: u64,
) -> anyhow::Result<Vec<u8>> {
    let mut stream = rng::derive(spec.seed, "synth", &[series_index]);

    // Base cycle: ten per training split. Every component period divides
    // either the cycle or the drift period (four cycles), so the joint
    // signal state recurs every four cycles and training sees it at least
    // twice end to end.
    let cycle = spec.train_rows as f64 / 10.0;
    let signals: Vec<DimSignal> = (0..dims)
        .map(|_| DimSignal {
            period: cycle / stream.random_range(1..=6) as f64,
            phase: stream.random_range(0.0..TAU),
            amplitude: stream.random_range(0.15..0.30),
            shared_weight: if stream.random_range(0.0..1.0) < 0.5 {
                0.15
            } else {
                0.0
            },
            drift_weight: stream.random_range(0.15..0.35),
        })
        .collect();
    let shared_period: f64 = cycle / stream.random_range(2..=4) as f64;
    let shared_phase: f64 = stream.random_range(0.0..TAU);
    // The slow regime drift: any narrow time slice sees it as roughly
    // constant, while the full training split covers its whole range.
    let drift_period: f64 = cycle * 4.0;
    let drift_phase: f64 = stream.random_range(0.0..TAU);
    let noise = 0.02;

    let shared_at = |t: usize| (TAU * t as f64 / shared_period + shared_phase).sin();
    let drift_at = |t: usize| (TAU * t as f64 / drift_period + drift_phase).sin();

    let mut train = String::new();
    for t in 0..spec.train_rows {
        let shared = shared_at(t);
        let drift = drift_at(t);
        for (d, sig) in signals.iter().enumerate() {
            if d > 0 {
                train.push(',');
            }
            let v = clean_value(sig, shared, drift, t) + stream.random_range(-noise..noise);
            train.push_str(&format!("{v:.6}"));
        }
        train.push('\n');
    }

    // Non-overlapping anomaly segments over the test split.
    let n_segments = (spec.test_rows / 200).max(3);
    let mut occupied: Vec<(usize, usize)> = Vec::new();
    let mut segments: Vec<(usize, usize, AnomalyKind)> = Vec::new();
    for k in 0..n_segments {
        for _attempt in 0..60 {
            let len = stream.random_range(15..45usize);
            if spec.test_rows <= len + 20 {
                break;
            }
            let start = stream.random_range(10..spec.test_rows - len - 5);
            let end = start + len;
            if occupied.iter().any(|&(s, e)| start < e + 5 && s < end + 5) {
                continue;
            }
            occupied.push((start, end));
            let kind = match k % 3 {
                0 => AnomalyKind::LevelShift(0.4),
                1 => AnomalyKind::NoiseBurst(8.0),
                _ => AnomalyKind::Freeze,
            };
            segments.push((start, end, kind));
            break;
        }
    }

    // Every segment hits a sizable random subset of the dimensions, each
    // affected dimension with its own shift direction.
    let seg_dims: Vec<Vec<(usize, f64)>> = segments
        .iter()
        .map(|_| {
            let mut chosen: Vec<(usize, f64)> = (0..dims)
                .filter_map(|d| {
                    let keep = stream.random_range(0.0..1.0) < 0.6;
                    let sign = if stream.random_range(0.0..1.0) < 0.5 { 1.0 } else { -1.0 };
                    keep.then_some((d, sign))
                })
                .collect();
            if chosen.len() < (dims / 3).max(1) {
                chosen = (0..dims)
                    .map(|d| (d, if d % 2 == 0 { 1.0 } else { -1.0 }))
                    .collect();
            }
            chosen
        })
        .collect();

    let mut labels = vec![0u8; spec.test_rows];
    let mut test = String::new();
    for t in 0..spec.test_rows {
        let abs_t = spec.train_rows + t;
        let shared = shared_at(abs_t);
        let drift = drift_at(abs_t);
        let active = segments
            .iter()
            .position(|&(s, e, _)| t >= s && t < e);
        if active.is_some() {
            labels[t] = 1;
        }
        for (d, sig) in signals.iter().enumerate() {
            if d > 0 {
                test.push(',');
            }
            let base = clean_value(sig, shared, drift, abs_t);
            let mut v = base + stream.random_range(-noise..noise);
            if let Some(seg) = active {
                if let Some(&(_, sign)) = seg_dims[seg].iter().find(|&&(dim, _)| dim == d) {
                    let (start, _, ref kind) = segments[seg];
                    let start_abs = spec.train_rows + start;
                    v = match *kind {
                        AnomalyKind::LevelShift(delta) => base + sign * delta,
                        AnomalyKind::NoiseBurst(scale) => {
                            base + stream.random_range(-noise * scale..noise * scale)
                        }
                        AnomalyKind::Freeze => {
                            clean_value(sig, shared_at(start_abs), drift_at(start_abs), start_abs)
                        }
                    };
                }
            }
            test.push_str(&format!("{v:.6}"));
        }
        test.push('\n');
    }

    let mut label_text = String::with_capacity(labels.len() * 2);
    for l in &labels {
        label_text.push_str(&format!("{l}\n"));
    }

    fs::write(dir.join(format!("{entity}_train.csv")), train)?;
    fs::write(dir.join(format!("{entity}_test.csv")), test)?;
    fs::write(dir.join(format!("{entity}_labels.csv")), label_text)?;
    Ok(labels)
}

/// Entity id stem per dataset, mirroring each source's naming flavor.
fn entity_stem(name: DatasetName) -> &'static str {
    match name {
        DatasetName::Smd => "machine",
        DatasetName::Smap => "channel",
        DatasetName::Psm => "system",
    }
}

/// Generate one dataset under `<root>/<dir_name>/`; returns written paths.
///
/// The series count and dimension count follow the dataset's canonical
/// geometry; row counts come from `spec`. Generation is deterministic in
/// `spec.seed`.
pub fn generate_dataset(
    root: &Path,
    name: DatasetName,
    spec: &SynthSpec,
) -> anyhow::Result<Vec<PathBuf>> {
    if spec.train_rows < 40 || spec.test_rows < 60 {
        anyhow::bail!("synthetic spec too small to carry signal and anomalies");
    }
    let dir = root.join(name.dir_name());
    fs::create_dir_all(&dir)?;

    let n_series = name.expected_series();
    let dims = name.expected_dims();
    let entities: Vec<String> = (1..=n_series)
        .map(|i| format!("{}-{i:02}", entity_stem(name)))
        .collect();

    let mut meta = format!("dims: {dims}\n");
    meta.push_str(&format!("entities: {}\n", entities.join(", ")));
    fs::write(dir.join("meta.txt"), meta)?;

    let mut written = vec![dir.join("meta.txt")];
    for (i, entity) in entities.iter().enumerate() {
        let labels = write_series(&dir, entity, dims, spec, i as u64)?;
        if !labels.contains(&1) || !labels.contains(&0) {
            anyhow::bail!("{entity}: generated labels must contain both classes");
        }
        written.push(dir.join(format!("{entity}_train.csv")));
        written.push(dir.join(format!("{entity}_test.csv")));
        written.push(dir.join(format!("{entity}_labels.csv")));
    }
    Ok(written)
}

/// Generate all three datasets under `root`.
pub fn generate_all(root: &Path, spec: &SynthSpec) -> anyhow::Result<()> {
    for name in [DatasetName::Smd, DatasetName::Smap, DatasetName::Psm] {
        generate_dataset(root, name, spec)?;
    }
    Ok(())
}
