use std::collections::HashMap;
use std::io::Write;
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex};
use std::time::Duration;

use image::RgbImage;
use sha2::{Digest, Sha256};

#[derive(Debug, thiserror::Error)]
pub enum FetchError {
    #[error("fetch {reference}: {reason}")]
    Fetch { reference: String, reason: String },
    #[error("decode {reference}: {reason}")]
    Decode { reference: String, reason: String },
}

/// Byte source for remote image references.
pub trait Transport: Send + Sync {
    fn get(&self, uri: &str) -> Result<Vec<u8>, String>;
}

#[derive(Debug)]
pub struct HttpTransport {
    agent: ureq::Agent,
}

const MAX_IMAGE_BYTES: u64 = 64 * 1024 * 1024;

impl HttpTransport {
    pub fn new(timeout: Duration) -> Self {
        let agent = ureq::Agent::config_builder()
            .timeout_global(Some(timeout))
            .build()
            .into();
        HttpTransport { agent }
    }
}

impl Transport for HttpTransport {
    fn get(&self, uri: &str) -> Result<Vec<u8>, String> {
        let mut resp = self.agent.get(uri).call().map_err(|e| e.to_string())?;
        resp.body_mut()
            .with_config()
            .limit(MAX_IMAGE_BYTES)
            .read_to_vec()
            .map_err(|e| e.to_string())
    }
}

/// Resolves image references to bytes. Remote references are downloaded at
/// most once per process (concurrent requests for one URI wait on the first)
/// and kept in an on-disk cache; local references are read relative to the
/// split's directory.
pub struct ImageFetcher {
    cache_dir: PathBuf,
    transport: Arc<dyn Transport>,
    retries: u32,
    backoff: Duration,
    in_flight: Mutex<HashMap<String, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for ImageFetcher {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("ImageFetcher")
            .field("cache_dir", &self.cache_dir)
            .field("retries", &self.retries)
            .field("backoff", &self.backoff)
            .finish_non_exhaustive()
    }
}

fn is_remote(reference: &str) -> bool {
    reference.starts_with("http://") || reference.starts_with("https://")
}

impl ImageFetcher {
    pub fn new(
        cache_root: &Path,
        transport: Arc<dyn Transport>,
        retries: u32,
        backoff: Duration,
    ) -> Self {
        ImageFetcher {
            cache_dir: cache_root.join("images"),
            transport,
            retries,
            backoff,
            in_flight: Mutex::new(HashMap::new()),
        }
    }

    /// `<cache_root>/images/<sha256(uri)>[.<ext>]`, keeping a short
    /// alphanumeric extension from the URI path when there is one.
    pub fn cached_path(&self, uri: &str) -> PathBuf {
        let mut name = hex::encode(Sha256::digest(uri.as_bytes()));
        let path = uri.split(['?', '#']).next().unwrap_or(uri);
        let last = path.rsplit('/').next().unwrap_or("");
        if let Some((_, ext)) = last.rsplit_once('.') {
            if (1..=5).contains(&ext.len()) && ext.chars().all(|c| c.is_ascii_alphanumeric()) {
                name.push('.');
                name.push_str(&ext.to_ascii_lowercase());
            }
        }
        self.cache_dir.join(name)
    }

    pub fn fetch(&self, reference: &str, base_dir: &Path) -> Result<Vec<u8>, FetchError> {
        let fail = |reason: String| FetchError::Fetch {
            reference: reference.to_owned(),
            reason,
        };
        if reference.is_empty() {
            return Err(fail("empty reference".into()));
        }
        if !is_remote(reference) {
            let local = reference.strip_prefix("file://").unwrap_or(reference);
            let path = base_dir.join(local);
            return std::fs::read(&path).map_err(|e| fail(format!("{}: {e}", path.display())));
        }

        let gate = {
            let mut map = self.in_flight.lock().unwrap_or_else(|p| p.into_inner());
            Arc::clone(map.entry(reference.to_owned()).or_default())
        };
        let _held = gate.lock().unwrap_or_else(|p| p.into_inner());
        let cached = self.cached_path(reference);
        if let Ok(bytes) = std::fs::read(&cached) {
            return Ok(bytes);
        }
        let mut last = String::new();
        for attempt in 0..=self.retries {
            if attempt > 0 {
                std::thread::sleep(self.backoff * 2u32.saturating_pow(attempt - 1));
            }
            match self.transport.get(reference) {
                Ok(bytes) => {
                    if let Err(e) = self.persist(&cached, &bytes) {
                        log::warn!("image cache write {}: {e}", cached.display());
                    }
                    return Ok(bytes);
                }
                Err(e) => {
                    log::debug!("fetch {reference} attempt {}: {e}", attempt + 1);
                    last = e;
                }
            }
        }
        Err(fail(format!("{} attempts: {last}", self.retries + 1)))
    }

    fn persist(&self, path: &Path, bytes: &[u8]) -> std::io::Result<()> {
        std::fs::create_dir_all(&self.cache_dir)?;
        let mut tmp = tempfile::NamedTempFile::new_in(&self.cache_dir)?;
        tmp.write_all(bytes)?;
        tmp.persist(path).map_err(|e| e.error)?;
        Ok(())
    }

    pub fn load(&self, reference: &str, base_dir: &Path) -> Result<RgbImage, FetchError> {
        let bytes = self.fetch(reference, base_dir)?;
        decode_rgb(reference, &bytes)
    }
}

pub fn decode_rgb(reference: &str, bytes: &[u8]) -> Result<RgbImage, FetchError> {
    image::load_from_memory(bytes)
        .map(|img| img.to_rgb8())
        .map_err(|e| FetchError::Decode {
            reference: reference.to_owned(),
            reason: e.to_string(),
        })
}
