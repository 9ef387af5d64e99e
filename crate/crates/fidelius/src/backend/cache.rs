//! Persistent response cache. One JSON file per entry, named by the hex
//! digest of the request identity, plus an append-only `manifest.jsonl`.

use std::collections::BTreeMap;
use std::fs;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use super::{
    BackendError, CompletionRequest, CompletionResult, DecodeMode, LanguageModelBackend,
};

#[derive(Debug, Serialize, Deserialize)]
struct CacheEntry {
    text: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    label_logprobs: Option<BTreeMap<String, f64>>,
    #[serde(default)]
    logprob_truncated: bool,
}

#[derive(Debug, Serialize)]
struct ManifestLine<'a> {
    key: &'a str,
    backend_id: &'a str,
    model: &'a str,
    mode: DecodeMode,
    temperature: f64,
    top_p: f64,
    #[serde(skip_serializing_if = "Option::is_none")]
    sample_index: Option<u32>,
    prompt_sha256: String,
}

/// Wraps any backend with a directory-backed replay cache.
///
/// Greedy entries are always replayed. Sampled requests are cached only when
/// the caller supplies a `sample_index`; without one each call must stay an
/// independent draw, so the cache passes it straight through.
pub struct CachedBackend<B> {
    inner: B,
    dir: PathBuf,
    manifest: Mutex<fs::File>,
    tmp_counter: AtomicU64,
}

impl<B: LanguageModelBackend> CachedBackend<B> {
    pub fn new(inner: B, dir: &Path) -> Result<Self, BackendError> {
        fs::create_dir_all(dir).map_err(|e| {
            BackendError::InvalidRequest(format!(
                "cache directory {} not writable: {e}",
                dir.display()
            ))
        })?;
        let manifest = fs::OpenOptions::new()
            .create(true)
            .append(true)
            .open(dir.join("manifest.jsonl"))
            .map_err(|e| {
                BackendError::InvalidRequest(format!(
                    "cache manifest in {} not writable: {e}",
                    dir.display()
                ))
            })?;
        Ok(Self {
            inner,
            dir: dir.to_path_buf(),
            manifest: Mutex::new(manifest),
            tmp_counter: AtomicU64::new(0),
        })
    }

    /// Request identity. Greedy decoding ignores temperature/top_p, so those
    /// components are canonicalized to 0/1 for greedy keys; that is what lets
    /// temperature sweeps replay the same greedy chains.
    fn key(&self, request: &CompletionRequest) -> String {
        let (temperature, top_p) = match request.params.mode {
            DecodeMode::Greedy => (0.0_f64, 1.0_f64),
            DecodeMode::Sample => (request.params.temperature, request.params.top_p),
        };
        let mode = match request.params.mode {
            DecodeMode::Greedy => "greedy",
            DecodeMode::Sample => "sample",
        };
        let mut hasher = Sha256::new();
        for part in [
            self.inner.id().as_bytes(),
            self.inner.model_name().as_bytes(),
            request.prompt.as_bytes(),
            &temperature.to_bits().to_le_bytes()[..],
            &top_p.to_bits().to_le_bytes()[..],
            mode.as_bytes(),
        ] {
            hasher.update(part);
            hasher.update([0]);
        }
        match request.sample_index {
            Some(i) => hasher.update(i.to_le_bytes()),
            None => hasher.update([0xff; 4]),
        }
        hex(&hasher.finalize())
    }

    fn entry_path(&self, key: &str) -> PathBuf {
        self.dir.join(format!("{key}.json"))
    }

    fn read_entry(&self, key: &str) -> Option<CacheEntry> {
        let path = self.entry_path(key);
        let bytes = match fs::read(&path) {
            Ok(b) => b,
            Err(_) => return None,
        };
        match serde_json::from_slice(&bytes) {
            Ok(entry) => Some(entry),
            Err(e) => {
                log::warn!("ignoring corrupt cache entry {}: {e}", path.display());
                None
            }
        }
    }

    fn write_entry(&self, key: &str, request: &CompletionRequest, entry: &CacheEntry) {
        let path = self.entry_path(key);
        let tmp = self.dir.join(format!(
            ".{key}.{}.{}.tmp",
            std::process::id(),
            self.tmp_counter.fetch_add(1, Ordering::Relaxed)
        ));
        let body = serde_json::to_vec(entry).expect("serialize cache entry");
        let write = fs::File::create(&tmp)
            .and_then(|mut f| f.write_all(&body))
            .and_then(|_| fs::rename(&tmp, &path));
        if let Err(e) = write {
            log::warn!("failed writing cache entry {}: {e}", path.display());
            let _ = fs::remove_file(&tmp);
            return;
        }
        let line = ManifestLine {
            key,
            backend_id: self.inner.id(),
            model: self.inner.model_name(),
            mode: request.params.mode,
            temperature: request.params.temperature,
            top_p: request.params.top_p,
            sample_index: request.sample_index,
            prompt_sha256: hex(&Sha256::digest(request.prompt.as_bytes())),
        };
        let mut manifest = self.manifest.lock().expect("manifest lock");
        let _ = writeln!(
            manifest,
            "{}",
            serde_json::to_string(&line).expect("serialize manifest line")
        );
    }
}

fn hex(bytes: &[u8]) -> String {
    bytes.iter().map(|b| format!("{b:02x}")).collect()
}

impl<B: LanguageModelBackend> LanguageModelBackend for CachedBackend<B> {
    fn id(&self) -> &str {
        self.inner.id()
    }

    fn model_name(&self) -> &str {
        self.inner.model_name()
    }

    fn complete(&self, request: &CompletionRequest) -> Result<CompletionResult, BackendError> {
        request.validate()?;
        if request.params.mode == DecodeMode::Sample && request.sample_index.is_none() {
            return self.inner.complete(request);
        }
        let key = self.key(request);
        if let Some(entry) = self.read_entry(&key) {
            let usable = !request.want_label_logprobs || entry.label_logprobs.is_some();
            if usable {
                return Ok(CompletionResult {
                    text: entry.text,
                    label_logprobs: entry.label_logprobs,
                    backend_id: self.inner.id().to_string(),
                    cached: true,
                    logprob_truncated: entry.logprob_truncated,
                });
            }
        }
        let result = self.inner.complete(request)?;
        self.write_entry(
            &key,
            request,
            &CacheEntry {
                text: result.text.clone(),
                label_logprobs: result.label_logprobs.clone(),
                logprob_truncated: result.logprob_truncated,
            },
        );
        Ok(result)
    }

    fn supports_label_logprobs(&self) -> bool {
        self.inner.supports_label_logprobs()
    }

    fn wants_prompt_trailer(&self) -> bool {
        self.inner.wants_prompt_trailer()
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::backend::{DecodeParams, ScriptedBackend};

    fn greedy_req(prompt: &str) -> CompletionRequest {
        CompletionRequest {
            prompt: prompt.to_string(),
            params: DecodeParams::greedy(),
            want_label_logprobs: false,
            allowed_labels: vec![],
            sample_index: None,
        }
    }

    #[test]
    fn greedy_requests_replay_from_cache() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::new(["A", "B"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        let first = cached.complete(&greedy_req("p")).unwrap();
        assert!(!first.cached);
        assert_eq!(first.text, "A");
        let second = cached.complete(&greedy_req("p")).unwrap();
        assert!(second.cached);
        assert_eq!(second.text, "A");
    }

    #[test]
    fn sampled_temperature_changes_the_key() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::new(["A", "B"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        let mut req = greedy_req("p");
        req.params = DecodeParams::sample(1.0, 1.0, None);
        req.sample_index = Some(0);
        assert_eq!(cached.complete(&req).unwrap().text, "A");
        req.params.temperature = 0.5;
        assert_eq!(cached.complete(&req).unwrap().text, "B");
    }

    #[test]
    fn distinct_sample_indices_get_distinct_entries() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::new(["A", "B"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        let mut req = greedy_req("p");
        req.params = DecodeParams::sample(1.0, 1.0, None);
        req.sample_index = Some(0);
        assert_eq!(cached.complete(&req).unwrap().text, "A");
        req.sample_index = Some(1);
        assert_eq!(cached.complete(&req).unwrap().text, "B");
        // both replay now
        req.sample_index = Some(0);
        assert_eq!(cached.complete(&req).unwrap().text, "A");
        req.sample_index = Some(1);
        assert_eq!(cached.complete(&req).unwrap().text, "B");
    }

    #[test]
    fn sampled_without_index_passes_through() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::new(["A", "B"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        let mut req = greedy_req("p");
        req.params = DecodeParams::sample(1.0, 1.0, None);
        assert_eq!(cached.complete(&req).unwrap().text, "A");
        assert_eq!(cached.complete(&req).unwrap().text, "B");
    }

    #[test]
    fn corrupt_entry_is_ignored_and_refetched() {
        let dir = tempfile::tempdir().unwrap();
        let inner = ScriptedBackend::new(["A", "B"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        cached.complete(&greedy_req("p")).unwrap();
        // clobber the entry
        let entry = std::fs::read_dir(dir.path())
            .unwrap()
            .filter_map(|e| e.ok())
            .find(|e| {
                let name = e.file_name();
                let name = name.to_string_lossy();
                name.ends_with(".json") && name != "manifest.jsonl"
            })
            .unwrap();
        std::fs::write(entry.path(), b"{not json").unwrap();
        let refetched = cached.complete(&greedy_req("p")).unwrap();
        assert!(!refetched.cached);
        assert_eq!(refetched.text, "B");
        // and the rewritten entry replays again
        assert!(cached.complete(&greedy_req("p")).unwrap().cached);
    }

    #[test]
    fn transparency_first_call_matches_uncached_backend() {
        let dir = tempfile::tempdir().unwrap();
        let bare = ScriptedBackend::new(["A"]);
        let direct = bare.complete(&greedy_req("p")).unwrap();
        let inner = ScriptedBackend::new(["A"]);
        let cached = CachedBackend::new(inner, dir.path()).unwrap();
        let through = cached.complete(&greedy_req("p")).unwrap();
        assert_eq!(direct.text, through.text);
    }
}
