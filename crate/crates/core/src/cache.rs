//! Persistence: content-addressed stage cache and the JSONL transcript store.

use std::collections::HashMap;
use std::fs::{self, OpenOptions};
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};

use crate::backend::GenerationParams;
use crate::chain::ChainTranscript;
use crate::hash::sha256_parts;
use crate::prompt::{ChainStage, PromptVariant};

pub struct StageKey<'a> {
    pub case_id: &'a str,
    pub variant: PromptVariant,
    pub stage: ChainStage,
    pub run_index: u32,
    pub template_hash: &'a str,
    pub backend_id: &'a str,
    pub params: &'a GenerationParams,
    pub prompt_hash: &'a str,
}

impl StageKey<'_> {
    pub fn digest(&self) -> String {
        let variant = self.variant.name();
        let run = self.run_index.to_string();
        let params = self.params.cache_key();
        sha256_parts([
            self.case_id.as_bytes(),
            variant.as_bytes(),
            self.stage.label().as_bytes(),
            run.as_bytes(),
            self.template_hash.as_bytes(),
            self.backend_id.as_bytes(),
            params.as_bytes(),
            self.prompt_hash.as_bytes(),
        ])
    }
}

#[derive(Debug, Clone, PartialEq, Eq, Serialize, Deserialize)]
pub struct StageRecordCache {
    pub completion: String,
    pub latency_ms: u64,
    #[serde(default)]
    pub warnings: Vec<String>,
}

/// Completed stage results, keyed by content hash. Lets an interrupted chain
/// resume at the stage that failed.
pub struct StageCache {
    dir: Option<PathBuf>,
    mem: Mutex<HashMap<String, StageRecordCache>>,
}

impl StageCache {
    pub fn in_memory() -> Self {
        StageCache {
            dir: None,
            mem: Mutex::new(HashMap::new()),
        }
    }

    pub fn on_disk(dir: impl Into<PathBuf>) -> std::io::Result<Self> {
        let dir = dir.into();
        fs::create_dir_all(&dir)?;
        Ok(StageCache {
            dir: Some(dir),
            mem: Mutex::new(HashMap::new()),
        })
    }

    pub fn get(&self, key: &StageKey<'_>) -> Result<Option<StageRecordCache>, String> {
        let digest = key.digest();
        if let Some(hit) = self.mem.lock().expect("cache poisoned").get(&digest) {
            return Ok(Some(hit.clone()));
        }
        let Some(dir) = &self.dir else {
            return Ok(None);
        };
        let path = dir.join(format!("{digest}.json"));
        match fs::read_to_string(&path) {
            Ok(text) => serde_json::from_str(&text)
                .map(Some)
                .map_err(|e| format!("{}: {e}", path.display())),
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(format!("{}: {e}", path.display())),
        }
    }

    pub fn put(&self, key: &StageKey<'_>, record: &StageRecordCache) -> Result<(), String> {
        let digest = key.digest();
        if let Some(dir) = &self.dir {
            let path = dir.join(format!("{digest}.json"));
            let tmp = dir.join(format!("{digest}.json.tmp"));
            let body = serde_json::to_string(record).expect("record serializes");
            fs::write(&tmp, body)
                .and_then(|_| fs::rename(&tmp, &path))
                .map_err(|e| format!("{}: {e}", path.display()))?;
        }
        self.mem
            .lock()
            .expect("cache poisoned")
            .insert(digest, record.clone());
        Ok(())
    }

    pub fn len(&self) -> usize {
        match &self.dir {
            Some(dir) => fs::read_dir(dir)
                .map(|it| {
                    it.filter_map(Result::ok)
                        .filter(|e| e.path().extension().is_some_and(|x| x == "json"))
                        .count()
                })
                .unwrap_or(0),
            None => self.mem.lock().expect("cache poisoned").len(),
        }
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

#[derive(Debug, thiserror::Error)]
pub enum StoreError {
    #[error("{path}: {source}")]
    Io {
        path: String,
        #[source]
        source: std::io::Error,
    },
    #[error("{path}:{line}: {message}")]
    Record {
        path: String,
        line: usize,
        message: String,
    },
}

/// Append-only JSONL file, one transcript per line.
#[derive(Debug, Clone)]
pub struct TranscriptStore {
    path: PathBuf,
}

impl TranscriptStore {
    pub fn new(path: impl Into<PathBuf>) -> Self {
        TranscriptStore { path: path.into() }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }

    fn io(&self, source: std::io::Error) -> StoreError {
        StoreError::Io {
            path: self.path.display().to_string(),
            source,
        }
    }

    /// Reads every transcript. A torn final line (interrupted write) is skipped.
    pub fn load(&self) -> Result<Vec<ChainTranscript>, StoreError> {
        let text = match fs::read_to_string(&self.path) {
            Ok(t) => t,
            Err(e) if e.kind() == std::io::ErrorKind::NotFound => return Ok(Vec::new()),
            Err(e) => return Err(self.io(e)),
        };
        let lines: Vec<&str> = text.lines().collect();
        let mut out = Vec::with_capacity(lines.len());
        for (i, line) in lines.iter().enumerate() {
            if line.trim().is_empty() {
                continue;
            }
            let record = |message: String| StoreError::Record {
                path: self.path.display().to_string(),
                line: i + 1,
                message,
            };
            match serde_json::from_str::<ChainTranscript>(line) {
                Ok(t) => {
                    t.check().map_err(record)?;
                    out.push(t);
                }
                Err(e) if i + 1 == lines.len() && !text.ends_with('\n') => {
                    log::warn!("{}: ignoring torn final line: {e}", self.path.display());
                }
                Err(e) => return Err(record(e.to_string())),
            }
        }
        Ok(out)
    }

    pub fn writer(&self) -> Result<StoreWriter, StoreError> {
        if let Some(parent) = self.path.parent().filter(|p| !p.as_os_str().is_empty()) {
            fs::create_dir_all(parent).map_err(|e| self.io(e))?;
        }
        // a torn line from an earlier crash must not merge with the next record
        let needs_newline = fs::read(&self.path)
            .map(|b| !b.is_empty() && !b.ends_with(b"\n"))
            .unwrap_or(false);
        let mut file = OpenOptions::new()
            .create(true)
            .append(true)
            .open(&self.path)
            .map_err(|e| self.io(e))?;
        if needs_newline {
            file.write_all(b"\n").map_err(|e| self.io(e))?;
        }
        Ok(StoreWriter {
            file,
            path: self.path.clone(),
        })
    }
}

pub struct StoreWriter {
    file: fs::File,
    path: PathBuf,
}

impl StoreWriter {
    pub fn append(&mut self, transcript: &ChainTranscript) -> Result<(), StoreError> {
        let mut line = serde_json::to_string(transcript).expect("transcript serializes");
        line.push('\n');
        self.file
            .write_all(line.as_bytes())
            .and_then(|_| self.file.flush())
            .map_err(|source| StoreError::Io {
                path: self.path.display().to_string(),
                source,
            })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::chain::{StageRecord, Verdict};

    fn transcript(id: &str) -> ChainTranscript {
        ChainTranscript {
            case_id: id.into(),
            variant: "None".parse().unwrap(),
            run_index: 0,
            stages: vec![
                StageRecord {
                    stage: ChainStage::Analysis,
                    prompt_hash: "h1".into(),
                    prompt: "p1".into(),
                    completion: "a".into(),
                    latency_ms: 3,
                },
                StageRecord {
                    stage: ChainStage::Verdict,
                    prompt_hash: "h2".into(),
                    prompt: "p2".into(),
                    completion: "NO".into(),
                    latency_ms: 1,
                },
            ],
            explanation: "a".into(),
            verdict: Verdict::No,
            template_hash: "t".into(),
            backend_id: "b".into(),
            params: GenerationParams::default(),
            warnings: vec![],
        }
    }

    #[test]
    fn store_roundtrip_and_torn_line() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        assert!(store.load().unwrap().is_empty());
        let mut w = store.writer().unwrap();
        w.append(&transcript("a")).unwrap();
        w.append(&transcript("b")).unwrap();
        drop(w);
        assert_eq!(
            store.load().unwrap(),
            vec![transcript("a"), transcript("b")]
        );

        let mut f = OpenOptions::new().append(true).open(store.path()).unwrap();
        f.write_all(b"{\"case_id\": \"c\", \"vari").unwrap();
        drop(f);
        assert_eq!(store.load().unwrap().len(), 2);

        let mut w = store.writer().unwrap();
        w.append(&transcript("d")).unwrap();
        drop(w);
        // the torn line is now in the middle of the file
        assert!(matches!(
            store.load(),
            Err(StoreError::Record { line: 3, .. })
        ));
    }

    #[test]
    fn store_rejects_inconsistent_transcript() {
        let dir = tempfile::tempdir().unwrap();
        let store = TranscriptStore::new(dir.path().join("t.jsonl"));
        let mut bad = transcript("a");
        bad.verdict = Verdict::Yes;
        store.writer().unwrap().append(&bad).unwrap();
        assert!(store.load().is_err());
    }

    #[test]
    fn disk_cache_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let params = GenerationParams::default();
        let key = StageKey {
            case_id: "c",
            variant: "C".parse().unwrap(),
            stage: ChainStage::Ratio,
            run_index: 0,
            template_hash: "t",
            backend_id: "b",
            params: &params,
            prompt_hash: "p",
        };
        let rec = StageRecordCache {
            completion: "r".into(),
            latency_ms: 5,
            warnings: vec![],
        };
        {
            let cache = StageCache::on_disk(dir.path()).unwrap();
            assert_eq!(cache.get(&key).unwrap(), None);
            cache.put(&key, &rec).unwrap();
        }
        let cache = StageCache::on_disk(dir.path()).unwrap();
        assert_eq!(cache.get(&key).unwrap(), Some(rec));
        assert_eq!(cache.len(), 1);
        let other = StageKey {
            run_index: 1,
            ..key
        };
        assert_eq!(cache.get(&other).unwrap(), None);
    }
}
