use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{BufRead, BufReader, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use super::{CompletionRecord, GatewayError};

pub const CACHE_FILE_NAME: &str = "completions.jsonl";

/// Append-only JSONL store of completion records keyed by prompt hash.
/// The first record for a hash wins; later duplicates are ignored.
pub struct ResponseCache {
    path: PathBuf,
    records: Mutex<HashMap<String, CompletionRecord>>,
    file: Mutex<File>,
}

impl ResponseCache {
    /// Opens (creating if needed) the cache in `dir`. Lines that do not
    /// decode, such as a line cut short by a crash, are skipped.
    pub fn open(dir: &Path) -> Result<Self, GatewayError> {
        let err = |e: std::io::Error| GatewayError::Cache(format!("{}: {e}", dir.display()));
        fs::create_dir_all(dir).map_err(err)?;
        let path = dir.join(CACHE_FILE_NAME);
        let mut records = HashMap::new();
        if path.exists() {
            let reader = BufReader::new(File::open(&path).map_err(err)?);
            for (n, line) in reader.lines().enumerate() {
                let line = line.map_err(err)?;
                if line.trim().is_empty() {
                    continue;
                }
                match serde_json::from_str::<CompletionRecord>(&line) {
                    Ok(r) => {
                        records.entry(r.prompt_hash.clone()).or_insert(r);
                    }
                    Err(e) => tracing::warn!("{}:{}: skipping cache line: {e}", path.display(), n + 1),
                }
            }
        }
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&path)
            .map_err(err)?;
        // Terminate a torn final line so the next record starts cleanly.
        let bytes = fs::read(&path).map_err(err)?;
        if bytes.last().is_some_and(|&b| b != b'\n') {
            file.write_all(b"\n").map_err(err)?;
        }
        Ok(Self {
            path,
            records: Mutex::new(records),
            file: Mutex::new(file),
        })
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    pub fn len(&self) -> usize {
        self.records.lock().unwrap().len()
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn get(&self, hash: &str) -> Option<CompletionRecord> {
        self.records.lock().unwrap().get(hash).cloned()
    }

    pub fn insert(&self, record: &CompletionRecord) -> Result<(), GatewayError> {
        let mut records = self.records.lock().unwrap();
        if records.contains_key(&record.prompt_hash) {
            return Ok(());
        }
        let mut line = serde_json::to_string(record).map_err(|e| GatewayError::Cache(e.to_string()))?;
        line.push('\n');
        let mut file = self.file.lock().unwrap();
        file.write_all(line.as_bytes())
            .and_then(|_| file.flush())
            .map_err(|e| GatewayError::Cache(format!("{}: {e}", self.path.display())))?;
        records.insert(record.prompt_hash.clone(), record.clone());
        Ok(())
    }
}
