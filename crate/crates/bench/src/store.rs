//! Append-only NDJSON result store with fingerprint lookup.
//!
//! One [`ResultsRecord`] per line. Opening a store replays the existing
//! file to index completed runs by fingerprint, so interrupted grids can
//! resume by skipping work that already finished. A torn final line (for
//! example from a killed process) is ignored rather than poisoning the
//! store. Appends are serialized through a mutex and flushed line by line.

use std::collections::HashMap;
use std::fs::{File, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use crate::experiment::ResultsRecord;

struct Inner {
    file: File,
    /// Latest completed record per fingerprint.
    ok_index: HashMap<String, ResultsRecord>,
    /// Lines in the file, counting both statuses.
    lines: usize,
    /// Unparseable lines found while replaying the file.
    corrupt: usize,
}

/// Durable store of experiment results.
pub struct RecordStore {
    path: PathBuf,
    inner: Mutex<Inner>,
}

/// Parse every well-formed record in a store file, in file order. Also
/// reports whether the file ends mid-line (a torn write from a crash).
fn read_all(path: &Path) -> anyhow::Result<(Vec<ResultsRecord>, usize, bool)> {
    let mut records = Vec::new();
    let mut corrupt = 0usize;
    let mut torn_tail = false;
    if path.exists() {
        let text = std::fs::read_to_string(path)?;
        torn_tail = !text.is_empty() && !text.ends_with('\n');
        for line in text.lines() {
            if line.trim().is_empty() {
                continue;
            }
            match serde_json::from_str::<ResultsRecord>(line) {
                Ok(r) => records.push(r),
                Err(_) => corrupt += 1,
            }
        }
    }
    Ok((records, corrupt, torn_tail))
}

impl RecordStore {
    /// Open (or create) a store file, replaying existing records.
    pub fn open(path: &Path) -> anyhow::Result<Self> {
        if let Some(parent) = path.parent() {
            if !parent.as_os_str().is_empty() {
                std::fs::create_dir_all(parent)?;
            }
        }
        let (records, corrupt, torn_tail) = read_all(path)?;
        let mut ok_index = HashMap::new();
        let lines = records.len();
        for record in records {
            if record.is_ok() {
                ok_index.insert(record.fingerprint.clone(), record);
            }
        }
        let mut file = OpenOptions::new().create(true).append(true).open(path)?;
        if torn_tail {
            // Seal a torn final line so the next append starts cleanly.
            writeln!(file)?;
        }
        Ok(Self {
            path: path.to_path_buf(),
            inner: Mutex::new(Inner {
                file,
                ok_index,
                lines,
                corrupt,
            }),
        })
    }

    /// File backing this store.
    pub fn path(&self) -> &Path {
        &self.path
    }

    /// Append one record and flush it to disk.
    pub fn append(&self, record: &ResultsRecord) -> anyhow::Result<()> {
        let line = serde_json::to_string(record)?;
        let mut inner = self.inner.lock().expect("store mutex poisoned");
        writeln!(inner.file, "{line}")?;
        inner.file.flush()?;
        inner.lines += 1;
        if record.is_ok() {
            inner
                .ok_index
                .insert(record.fingerprint.clone(), record.clone());
        }
        Ok(())
    }

    /// Latest completed record with this fingerprint, if any.
    pub fn get_ok(&self, fingerprint: &str) -> Option<ResultsRecord> {
        let inner = self.inner.lock().expect("store mutex poisoned");
        inner.ok_index.get(fingerprint).cloned()
    }

    /// Number of records appended or replayed (failed ones included).
    pub fn len(&self) -> usize {
        self.inner.lock().expect("store mutex poisoned").lines
    }

    /// True when the store holds no records.
    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    /// Unparseable lines skipped while opening the file.
    pub fn corrupt_lines(&self) -> usize {
        self.inner.lock().expect("store mutex poisoned").corrupt
    }

    /// All records currently on disk, failed ones included, in file order.
    pub fn records(&self) -> Vec<ResultsRecord> {
        // Hold the lock so a concurrent append cannot tear a line mid-read.
        let _guard = self.inner.lock().expect("store mutex poisoned");
        read_all(&self.path).map(|(r, _, _)| r).unwrap_or_default()
    }
}
