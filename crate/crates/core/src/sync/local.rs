use std::fs::{self, File};
use std::io::{self, Write};
use std::path::{Path, PathBuf};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use super::{validate_key, Precondition, RemoteObject, RemoteStore, SyncError, Version};

/// A remote backed by a plain directory. Versions are content hashes, so
/// two stores holding the same bytes agree on versions.
#[derive(Debug)]
pub struct LocalDirStore {
    root: PathBuf,
    // serializes check-then-write for preconditioned puts
    write_lock: Mutex<()>,
}

fn content_version(bytes: &[u8]) -> Version {
    Version::new(hex::encode(&Sha256::digest(bytes)[..16]))
}

impl LocalDirStore {
    pub fn new(root: impl Into<PathBuf>) -> Result<Self, SyncError> {
        let root = root.into();
        fs::create_dir_all(&root).map_err(|e| SyncError::StoreUnreachable(format!("{}: {e}", root.display())))?;
        Ok(LocalDirStore { root, write_lock: Mutex::new(()) })
    }

    pub fn root(&self) -> &Path {
        &self.root
    }

    fn path_of(&self, key: &str) -> Result<PathBuf, SyncError> {
        validate_key(key)?;
        Ok(self.root.join(key))
    }

    fn current_version(&self, path: &Path) -> Result<Option<Version>, SyncError> {
        match fs::read(path) {
            Ok(bytes) => Ok(Some(content_version(&bytes))),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(None),
            Err(e) => Err(e.into()),
        }
    }
}

impl RemoteStore for LocalDirStore {
    fn put_object(&self, key: &str, bytes: &[u8], precondition: Precondition) -> Result<Version, SyncError> {
        let path = self.path_of(key)?;
        let _guard = self.write_lock.lock().unwrap_or_else(|e| e.into_inner());
        let current = self.current_version(&path)?;
        if !precondition.admits(current.as_ref()) {
            return Err(SyncError::PreconditionFailed(key.to_owned()));
        }
        if let Some(parent) = path.parent() {
            fs::create_dir_all(parent)?;
        }
        let tmp = path.with_file_name(format!(
            ".{}.upload",
            path.file_name().and_then(|n| n.to_str()).unwrap_or("object")
        ));
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, &path)?;
        Ok(content_version(bytes))
    }

    fn get_object(&self, key: &str) -> Result<(Vec<u8>, Version), SyncError> {
        let path = self.path_of(key)?;
        match fs::read(&path) {
            Ok(bytes) => {
                let version = content_version(&bytes);
                Ok((bytes, version))
            }
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(SyncError::NotFound(key.to_owned())),
            Err(e) => Err(e.into()),
        }
    }

    fn list(&self, prefix: &str) -> Result<Vec<RemoteObject>, SyncError> {
        let mut out = Vec::new();
        let mut pending = vec![self.root.clone()];
        while let Some(dir) = pending.pop() {
            for entry in fs::read_dir(&dir)? {
                let entry = entry?;
                let path = entry.path();
                if entry.file_type()?.is_dir() {
                    pending.push(path);
                    continue;
                }
                let Some(key) = path
                    .strip_prefix(&self.root)
                    .ok()
                    .and_then(|p| p.to_str())
                    .map(|k| k.replace(std::path::MAIN_SEPARATOR, "/"))
                else {
                    continue;
                };
                if !key.starts_with(prefix) || key.ends_with(".upload") {
                    continue;
                }
                let bytes = fs::read(&path)?;
                out.push(RemoteObject { version: content_version(&bytes), size: bytes.len() as u64, key });
            }
        }
        out.sort_by(|a, b| a.key.cmp(&b.key));
        Ok(out)
    }

    fn delete(&self, key: &str) -> Result<(), SyncError> {
        let path = self.path_of(key)?;
        match fs::remove_file(&path) {
            Ok(()) => Ok(()),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Err(SyncError::NotFound(key.to_owned())),
            Err(e) => Err(e.into()),
        }
    }
}
