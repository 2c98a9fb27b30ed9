use std::collections::BTreeMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, Write};
use std::path::{Path, PathBuf};

use sha2::{Digest, Sha256};

use super::{SyncError, Version};

pub const STATE_MAGIC: [u8; 4] = *b"SSYN";
pub const STATE_FORMAT_VERSION: u32 = 1;
/// Stored beside `vault.cfg`, outside the encrypted `d/` tree.
pub const STATE_FILE: &str = ".sync-state";
const STATE_LOCK_FILE: &str = ".sync-state.lock";

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct StateEntry {
    pub version: Version,
    pub digest: [u8; 32],
}

/// What was last agreed between the local tree and the remote, per
/// physical key.
///
/// ```text
/// "SSYN" | version u32 | count u32
/// count * (key_len u32 | key | version_len u32 | version | digest 32)
/// sha256 of everything above
/// ```
#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyncState {
    entries: BTreeMap<String, StateEntry>,
}

impl SyncState {
    pub fn get(&self, key: &str) -> Option<&StateEntry> {
        self.entries.get(key)
    }

    pub fn insert(&mut self, key: String, entry: StateEntry) {
        self.entries.insert(key, entry);
    }

    pub fn remove(&mut self, key: &str) {
        self.entries.remove(key);
    }

    pub fn keys(&self) -> impl Iterator<Item = &String> {
        self.entries.keys()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(&STATE_MAGIC);
        out.extend_from_slice(&STATE_FORMAT_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.entries.len() as u32).to_le_bytes());
        for (key, entry) in &self.entries {
            for field in [key.as_bytes(), entry.version.as_str().as_bytes()] {
                out.extend_from_slice(&(field.len() as u32).to_le_bytes());
                out.extend_from_slice(field);
            }
            out.extend_from_slice(&entry.digest);
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, SyncError> {
        let corrupt = SyncError::StateCorrupt;
        if bytes.len() < 12 + 32 {
            return Err(corrupt("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(corrupt("checksum mismatch"));
        }
        let mut rest = body;
        let mut take = |n: usize| -> Result<&[u8], SyncError> {
            if rest.len() < n {
                return Err(corrupt("truncated"));
            }
            let (head, tail) = rest.split_at(n);
            rest = tail;
            Ok(head)
        };
        if take(4)? != STATE_MAGIC {
            return Err(corrupt("bad magic"));
        }
        let u32_at = |b: &[u8]| u32::from_le_bytes(b.try_into().unwrap());
        if u32_at(take(4)?) != STATE_FORMAT_VERSION {
            return Err(corrupt("unsupported version"));
        }
        let count = u32_at(take(4)?);
        let mut entries = BTreeMap::new();
        for _ in 0..count {
            let len = u32_at(take(4)?) as usize;
            let key = String::from_utf8(take(len)?.to_vec()).map_err(|_| corrupt("key is not utf-8"))?;
            let len = u32_at(take(4)?) as usize;
            let version = String::from_utf8(take(len)?.to_vec()).map_err(|_| corrupt("version is not utf-8"))?;
            let digest: [u8; 32] = take(32)?.try_into().unwrap();
            entries.insert(key, StateEntry { version: Version::new(version), digest });
        }
        if !rest.is_empty() {
            return Err(corrupt("trailing bytes"));
        }
        Ok(SyncState { entries })
    }

    /// Loads the state stored under `vault_root`; a missing file is an empty state.
    pub fn load(vault_root: &Path) -> Result<Self, SyncError> {
        match fs::read(vault_root.join(STATE_FILE)) {
            Ok(bytes) => Self::from_bytes(&bytes),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(SyncState::default()),
            Err(e) => Err(e.into()),
        }
    }

    pub fn save(&self, vault_root: &Path) -> Result<(), SyncError> {
        let target = vault_root.join(STATE_FILE);
        let tmp = vault_root.join(format!("{STATE_FILE}.tmp"));
        let mut f = File::create(&tmp)?;
        f.write_all(&self.to_bytes())?;
        f.sync_all()?;
        fs::rename(tmp, target)?;
        Ok(())
    }
}

/// Exclusive lock held for the duration of one sync run.
#[derive(Debug)]
pub struct StateLock {
    _file: File,
    path: PathBuf,
}

impl StateLock {
    pub fn acquire(vault_root: &Path) -> Result<Self, SyncError> {
        let path = vault_root.join(STATE_LOCK_FILE);
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(&path)?;
        match file.try_lock() {
            Ok(()) => Ok(StateLock { _file: file, path }),
            Err(fs::TryLockError::WouldBlock) => Err(SyncError::Busy),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }

    pub fn path(&self) -> &Path {
        &self.path
    }
}
