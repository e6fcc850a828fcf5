//! Dataset loading, normalization, and windowing.
//!
//! Three multivariate benchmark datasets are supported, all stored in the
//! same on-disk layout:
//!
//! ```text
//! <root>/<dataset>/meta.txt                  # key: value manifest
//! <root>/<dataset>/<entity>_train.csv        # T_train x n, headerless
//! <root>/<dataset>/<entity>_test.csv         # T_test x n, headerless
//! <root>/<dataset>/<entity>_labels.csv       # T_test rows of {0,1}
//! ```
//!
//! The manifest lists `dims:` and a comma-separated `entities:` line. CSV
//! cells are plain reals; empty cells or `NaN` mark missing values, which
//! are zero-filled after normalization.

use std::fmt;
use std::fs;
use std::path::Path;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::matrix::Matrix;

/// The three benchmark datasets.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum DatasetName {
    Smd,
    Smap,
    Psm,
}

impl DatasetName {
    /// Directory name under the data root.
    pub fn dir_name(self) -> &'static str {
        match self {
            DatasetName::Smd => "smd",
            DatasetName::Smap => "smap",
            DatasetName::Psm => "psm",
        }
    }

    /// Number of series (entities) in the reference corpus.
    pub fn expected_series(self) -> usize {
        match self {
            DatasetName::Smd => 28,
            DatasetName::Smap => 54,
            DatasetName::Psm => 1,
        }
    }

    /// Number of metric dimensions per series in the reference corpus.
    pub fn expected_dims(self) -> usize {
        match self {
            DatasetName::Smd => 38,
            DatasetName::Smap => 25,
            DatasetName::Psm => 25,
        }
    }

    /// Default client count for federated runs: one client per series for
    /// the multi-series datasets, 24 clients for the single-series one.
    pub fn default_clients(self) -> usize {
        match self {
            DatasetName::Smd => 28,
            DatasetName::Smap => 54,
            DatasetName::Psm => 24,
        }
    }

    /// All dataset names.
    pub fn all() -> [DatasetName; 3] {
        [DatasetName::Smd, DatasetName::Smap, DatasetName::Psm]
    }
}

impl fmt::Display for DatasetName {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.dir_name())
    }
}

impl FromStr for DatasetName {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s.to_ascii_lowercase().as_str() {
            "smd" => Ok(DatasetName::Smd),
            "smap" => Ok(DatasetName::Smap),
            "psm" => Ok(DatasetName::Psm),
            other => Err(Error::Config(format!("unknown dataset '{other}'"))),
        }
    }
}

/// One entity: a training split, a test split, and per-timestamp test labels.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MultivariateSeries {
    pub entity_id: String,
    /// T_train x n training matrix.
    pub train: Matrix,
    /// T_test x n test matrix.
    pub test: Matrix,
    /// One {0,1} label per test row.
    pub test_labels: Vec<u8>,
}

/// Per-dimension normalization record.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DimStats {
    pub min: f64,
    pub max: f64,
    /// True when max == min (or the dimension had no finite training value),
    /// in which case the dimension maps to all zeros.
    pub constant: bool,
}

/// Normalization audit trail.
#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
pub struct NormalizationStats {
    /// One record per dimension, pooled over all series' training splits.
    pub per_dim: Vec<DimStats>,
    /// Count of missing cells zero-filled across train and test splits.
    pub filled_missing: usize,
}

/// A loaded dataset: every entity plus shared geometry and (after
/// [`normalize`]) the statistics that were applied.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetBundle {
    pub name: DatasetName,
    pub series: Vec<MultivariateSeries>,
    /// Shared column count n.
    pub dims: usize,
    /// Present once [`normalize`] has run.
    pub normalization_stats: Option<NormalizationStats>,
}

impl DatasetBundle {
    /// Total training rows across all series.
    pub fn total_train_rows(&self) -> usize {
        self.series.iter().map(|s| s.train.rows()).sum()
    }

    /// Total test rows across all series.
    pub fn total_test_rows(&self) -> usize {
        self.series.iter().map(|s| s.test.rows()).sum()
    }
}

/// Sliding windows over one series matrix, with the timestamp each window
/// scores (its last row).
#[derive(Debug, Clone, PartialEq)]
pub struct WindowSet {
    /// Each window is a `window_len x n` matrix.
    pub windows: Vec<Matrix>,
    /// `anchors[k]` is the source row index scored by window k.
    pub anchors: Vec<usize>,
}

impl WindowSet {
    /// Number of windows.
    pub fn len(&self) -> usize {
        self.windows.len()
    }

    /// True if there are no windows.
    pub fn is_empty(&self) -> bool {
        self.windows.is_empty()
    }

    /// A sub-selection of windows by index, preserving order.
    pub fn select(&self, indices: &[usize]) -> WindowSet {
        WindowSet {
            windows: indices.iter().map(|&i| self.windows[i].clone()).collect(),
            anchors: indices.iter().map(|&i| self.anchors[i]).collect(),
        }
    }
}

// ---------------------------------------------------------------------------
// Loading
// ---------------------------------------------------------------------------

/// Parse one CSV cell; empty cells and `NaN` count as missing.
fn parse_cell(s: &str, path: &Path, line: usize) -> Result<f64> {
    let t = s.trim();
    if t.is_empty() || t.eq_ignore_ascii_case("nan") {
        return Ok(f64::NAN);
    }
    t.parse::<f64>().map_err(|_| {
        Error::Format(format!(
            "{}:{}: cannot parse '{t}' as a number",
            path.display(),
            line + 1
        ))
    })
}

/// Read a headerless CSV of reals into a matrix.
fn read_csv_matrix(path: &Path) -> Result<Matrix> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut data = Vec::new();
    let mut rows = 0usize;
    let mut cols = None;
    for (lineno, line) in text.lines().enumerate() {
        if line.trim().is_empty() {
            continue;
        }
        let mut width = 0usize;
        for cell in line.split(',') {
            data.push(parse_cell(cell, path, lineno)?);
            width += 1;
        }
        match cols {
            None => cols = Some(width),
            Some(c) if c != width => {
                return Err(Error::Format(format!(
                    "{}:{}: row has {width} columns, expected {c}",
                    path.display(),
                    lineno + 1
                )))
            }
            Some(_) => {}
        }
        rows += 1;
    }
    let cols = cols.ok_or_else(|| Error::EmptyInput(format!("{} has no rows", path.display())))?;
    Ok(Matrix::from_vec(rows, cols, data))
}

/// Read a single-column {0,1} label file.
fn read_labels(path: &Path) -> Result<Vec<u8>> {
    let m = read_csv_matrix(path)?;
    if m.cols() != 1 {
        return Err(Error::Format(format!(
            "{}: labels must be a single column, found {}",
            path.display(),
            m.cols()
        )));
    }
    m.as_slice()
        .iter()
        .map(|&v| {
            if v == 0.0 {
                Ok(0)
            } else if v == 1.0 {
                Ok(1)
            } else {
                Err(Error::Format(format!(
                    "{}: label value {v} is not 0 or 1",
                    path.display()
                )))
            }
        })
        .collect()
}

/// Parsed `meta.txt` manifest.
struct Manifest {
    dims: usize,
    entities: Vec<String>,
}

fn read_manifest(path: &Path) -> Result<Manifest> {
    let text = fs::read_to_string(path).map_err(|e| Error::Load {
        path: path.display().to_string(),
        reason: e.to_string(),
    })?;
    let mut dims = None;
    let mut entities = None;
    for line in text.lines() {
        let line = line.trim();
        if line.is_empty() || line.starts_with('#') {
            continue;
        }
        let Some((key, value)) = line.split_once(':') else {
            return Err(Error::Format(format!(
                "{}: manifest line '{line}' is not 'key: value'",
                path.display()
            )));
        };
        match key.trim() {
            "dims" => {
                dims = Some(value.trim().parse::<usize>().map_err(|_| {
                    Error::Format(format!("{}: bad dims value '{value}'", path.display()))
                })?)
            }
            "entities" => {
                entities = Some(
                    value
                        .split(',')
                        .map(|e| e.trim().to_string())
                        .filter(|e| !e.is_empty())
                        .collect::<Vec<_>>(),
                )
            }
            _ => {} // unknown keys are permitted for forward compatibility
        }
    }
    let dims = dims.ok_or_else(|| {
        Error::Format(format!("{}: manifest missing 'dims'", path.display()))
    })?;
    let entities = entities.ok_or_else(|| {
        Error::Format(format!("{}: manifest missing 'entities'", path.display()))
    })?;
    if entities.is_empty() {
        return Err(Error::EmptyInput(format!(
            "{}: manifest lists no entities",
            path.display()
        )));
    }
    Ok(Manifest { dims, entities })
}

/// Load a dataset from `<root>/<name>/` without normalizing.
///
/// # Errors
/// Missing files produce a load error naming the file; inconsistent column
/// counts across splits or against the manifest produce format errors.
pub fn load_dataset(name: DatasetName, root: &Path) -> Result<DatasetBundle> {
    let dir = root.join(name.dir_name());
    let manifest = read_manifest(&dir.join("meta.txt"))?;

    let mut series = Vec::with_capacity(manifest.entities.len());
    for entity in &manifest.entities {
        let train = read_csv_matrix(&dir.join(format!("{entity}_train.csv")))?;
        let test = read_csv_matrix(&dir.join(format!("{entity}_test.csv")))?;
        let test_labels = read_labels(&dir.join(format!("{entity}_labels.csv")))?;

        if train.cols() != manifest.dims || test.cols() != manifest.dims {
            return Err(Error::Format(format!(
                "{entity}: splits have {} / {} columns, manifest says {}",
                train.cols(),
                test.cols(),
                manifest.dims
            )));
        }
        if test_labels.len() != test.rows() {
            return Err(Error::Format(format!(
                "{entity}: {} labels for {} test rows",
                test_labels.len(),
                test.rows()
            )));
        }
        series.push(MultivariateSeries {
            entity_id: entity.clone(),
            train,
            test,
            test_labels,
        });
    }

    Ok(DatasetBundle {
        name,
        series,
        dims: manifest.dims,
        normalization_stats: None,
    })
}

// ---------------------------------------------------------------------------
// Normalization
// ---------------------------------------------------------------------------

/// Min-max normalize a bundle to [0, 1] per dimension.
///
/// Statistics are computed over the training split only, pooled across all
/// series of the dataset, and then applied to both splits (test values may
/// fall outside [0, 1]). Constant dimensions map to all zeros; missing cells
/// are zero-filled after scaling. The applied statistics are recorded on the
/// returned bundle.
pub fn normalize(bundle: &DatasetBundle) -> Result<DatasetBundle> {
    if bundle.series.is_empty() {
        return Err(Error::EmptyInput("bundle has no series".into()));
    }
    let n = bundle.dims;

    // Pooled per-dimension min/max over every series' training split,
    // ignoring missing cells.
    let mut mins = vec![f64::INFINITY; n];
    let mut maxs = vec![f64::NEG_INFINITY; n];
    for s in &bundle.series {
        for r in 0..s.train.rows() {
            for (c, &v) in s.train.row(r).iter().enumerate() {
                if v.is_finite() {
                    mins[c] = mins[c].min(v);
                    maxs[c] = maxs[c].max(v);
                }
            }
        }
    }

    let per_dim: Vec<DimStats> = (0..n)
        .map(|c| {
            let seen = mins[c].is_finite() && maxs[c].is_finite();
            DimStats {
                min: if seen { mins[c] } else { 0.0 },
                max: if seen { maxs[c] } else { 0.0 },
                constant: !seen || mins[c] == maxs[c],
            }
        })
        .collect();

    let mut filled = 0usize;
    let mut apply = |m: &Matrix| -> Matrix {
        let mut out = m.clone();
        for r in 0..out.rows() {
            for c in 0..out.cols() {
                let v = out.get(r, c);
                let stat = &per_dim[c];
                let scaled = if stat.constant {
                    if v.is_nan() {
                        f64::NAN
                    } else {
                        0.0
                    }
                } else {
                    (v - stat.min) / (stat.max - stat.min)
                };
                let value = if scaled.is_nan() {
                    filled += 1;
                    0.0
                } else {
                    scaled
                };
                out.set(r, c, value);
            }
        }
        out
    };

    let series = bundle
        .series
        .iter()
        .map(|s| MultivariateSeries {
            entity_id: s.entity_id.clone(),
            train: apply(&s.train),
            test: apply(&s.test),
            test_labels: s.test_labels.clone(),
        })
        .collect();

    Ok(DatasetBundle {
        name: bundle.name,
        series,
        dims: n,
        normalization_stats: Some(NormalizationStats {
            per_dim,
            filled_missing: filled,
        }),
    })
}

// ---------------------------------------------------------------------------
// Windowing
// ---------------------------------------------------------------------------

/// Extract sliding windows: window k covers rows
/// `[k*stride, k*stride + window_len)` and is anchored at its last row.
///
/// # Errors
/// Returns an empty-input error when `window_len` exceeds the row count.
pub fn make_windows(series_matrix: &Matrix, window_len: usize, stride: usize) -> Result<WindowSet> {
    assert!(window_len > 0 && stride > 0, "window_len and stride must be positive");
    let t = series_matrix.rows();
    if window_len > t {
        return Err(Error::EmptyInput(format!(
            "window_len {window_len} exceeds {t} rows"
        )));
    }
    let mut windows = Vec::new();
    let mut anchors = Vec::new();
    let mut start = 0usize;
    while start + window_len <= t {
        windows.push(series_matrix.slice_rows(start, start + window_len));
        anchors.push(start + window_len - 1);
        start += stride;
    }
    Ok(WindowSet { windows, anchors })
}

/// Windows for scoring a test split: stride is forced to 1 so every
/// timestamp from `window_len - 1` onward is anchored exactly once.
pub fn make_test_windows(series_matrix: &Matrix, window_len: usize) -> Result<WindowSet> {
    make_windows(series_matrix, window_len, 1)
}

/// Spread per-window scores over every source timestamp.
///
/// Window k's score lands on its anchor; timestamps before the first anchor
/// inherit the first window's score so every labeled timestamp is scored.
pub fn expand_scores(window_scores: &[f64], anchors: &[usize], t_total: usize) -> Vec<f64> {
    assert_eq!(window_scores.len(), anchors.len(), "score/anchor mismatch");
    assert!(!anchors.is_empty(), "cannot expand an empty score list");
    let mut out = vec![window_scores[0]; t_total];
    for (&score, &anchor) in window_scores.iter().zip(anchors) {
        out[anchor] = score;
    }
    out
}
