//! Function deployment with a digest-keyed image cache.
//!
//! Layout under the cache root: `<label>/<digest>/{func.py,
//! requirements.txt, recipe, Boot, image.json}`.

use std::collections::BTreeMap;
use std::fs;
use std::io;
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicU64, Ordering};
use std::sync::Mutex;

use gatefaas_core::codec;
use gatefaas_core::{value_map, FunctionLabel, Value};
use log::info;
use thiserror::Error;

use super::backend::{BackendError, ExecutionBackend, Image};
use super::clerk::{ClerkClient, ClerkError};
use crate::controller::functions::{REQUIREMENTS_FILE, SOURCE_FILE};

#[derive(Debug, Error)]
pub enum DeployError {
    #[error(transparent)]
    Clerk(#[from] ClerkError),
    #[error("clerk sent `{got}` while deploying `{label}` at digest {expected}")]
    DigestMismatch { label: FunctionLabel, expected: String, got: String },
    #[error(transparent)]
    Build(#[from] BackendError),
    #[error("cache i/o: {0}")]
    Io(#[from] io::Error),
}

const MANIFEST: &str = "image.json";

#[derive(Debug)]
pub struct ImageCache {
    root: PathBuf,
    entries: Mutex<BTreeMap<FunctionLabel, Image>>,
    builds: AtomicU64,
}

impl ImageCache {
    pub fn new(root: impl Into<PathBuf>) -> Self {
        ImageCache {
            root: root.into(),
            entries: Mutex::new(BTreeMap::new()),
            builds: AtomicU64::new(0),
        }
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    /// Images built by this cache since it was created.
    pub fn builds(&self) -> u64 {
        self.builds.load(Ordering::Relaxed)
    }

    pub fn entries(&self) -> Vec<Image> {
        self.entries.lock().expect("image cache").values().cloned().collect()
    }

    fn image_dir(&self, label: &FunctionLabel, digest: &str) -> PathBuf {
        self.root.join(label.as_str()).join(digest)
    }

    fn load_manifest(&self, label: &FunctionLabel, digest: &str, backend: &str) -> Option<Image> {
        let dir = self.image_dir(label, digest);
        let text = fs::read_to_string(dir.join(MANIFEST)).ok()?;
        let m = codec::parse_text(&text).ok()?;
        if m.get("backend").and_then(Value::as_str) != Some(backend)
            || m.get("digest").and_then(Value::as_str) != Some(digest)
        {
            return None;
        }
        Some(Image {
            label: label.clone(),
            digest: digest.to_owned(),
            id: m.get("image")?.as_str()?.to_owned(),
            dir,
        })
    }

    /// Makes sure an image for the controller's current package of `label`
    /// exists. Source is fetched only when the digest is not cached.
    pub fn deploy(
        &self,
        label: &FunctionLabel,
        clerk: &mut ClerkClient,
        backend: &dyn ExecutionBackend,
    ) -> Result<Image, DeployError> {
        let digest = clerk.digest(label)?;
        {
            let entries = self.entries.lock().expect("image cache");
            if let Some(img) = entries.get(label).filter(|i| i.digest == digest) {
                return Ok(img.clone());
            }
        }
        if let Some(img) = self.load_manifest(label, &digest, backend.name()) {
            self.remember(img.clone());
            return Ok(img);
        }

        let pkg = clerk.source(label)?;
        let got = pkg.digest();
        if got != digest {
            // package changed between the two calls; the next scaling retries
            return Err(DeployError::DigestMismatch {
                label: label.clone(),
                expected: digest,
                got,
            });
        }
        let dir = self.image_dir(label, &digest);
        fs::create_dir_all(&dir)?;
        fs::write(dir.join(SOURCE_FILE), &pkg.source)?;
        fs::write(dir.join(REQUIREMENTS_FILE), &pkg.requirements)?;
        fs::write(dir.join("recipe"), backend.recipe(label))?;
        fs::write(dir.join("Boot"), "")?;
        let id = backend.build(label, &digest, &dir)?;
        self.builds.fetch_add(1, Ordering::Relaxed);
        let manifest = value_map! {
            "label" => label.clone(),
            "digest" => digest.clone(),
            "backend" => backend.name(),
            "image" => id.clone(),
        };
        fs::write(dir.join(MANIFEST), codec::to_text(&manifest).map_err(io::Error::other)?)?;
        info!("built image {id} for {label}");
        let img = Image {
            label: label.clone(),
            digest,
            id,
            dir,
        };
        self.remember(img.clone());
        Ok(img)
    }

    fn remember(&self, img: Image) {
        self.entries.lock().expect("image cache").insert(img.label.clone(), img);
    }
}
