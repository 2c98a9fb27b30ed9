//! Mirrors the encrypted vault tree to a remote object store.
//!
//! Only physical objects move: `vault.cfg` and everything under `d/`.
//! Every key is reconciled three ways, comparing the local content digest
//! and the remote version against what the last run recorded in
//! [`SyncState`]. A key changed on one side only is copied over; a key
//! changed on both sides is a conflict. On conflict the remote copy is saved
//! beside the local one as `<key>.conflict-<version>`, the local copy is
//! kept, and the next run pushes it over the version it was compared with.

mod http;
mod local;
mod opacity;
mod state;

use std::collections::{BTreeMap, BTreeSet};
use std::fs::{self, File};
use std::io::{self, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::atomic::{AtomicBool, AtomicUsize, Ordering};
use std::sync::Mutex;

use sha2::{Digest, Sha256};

use crate::vault::{CONFIG_FILE, DATA_DIR, TEMP_SUFFIX};

pub use http::HttpStore;
pub use local::LocalDirStore;
pub use opacity::{verify_remote_opacity, OpacityFinding, OpacityReport, MIN_LEAK_LEN};
pub use state::{StateEntry, StateLock, SyncState, STATE_FILE, STATE_FORMAT_VERSION, STATE_MAGIC};

const CONFLICT_MARKER: &str = ".conflict-";

#[derive(Debug, thiserror::Error)]
pub enum SyncError {
    #[error("remote store unreachable: {0}")]
    StoreUnreachable(String),
    #[error("sync state is corrupt: {0}")]
    StateCorrupt(&'static str),
    #[error("object not found: {0}")]
    NotFound(String),
    #[error("remote object changed concurrently: {0}")]
    PreconditionFailed(String),
    #[error("invalid object key: {0:?}")]
    InvalidKey(String),
    #[error("remote protocol error: {0}")]
    Protocol(String),
    #[error("another sync is running on this vault")]
    Busy,
    #[error(transparent)]
    Io(#[from] io::Error),
}

/// Opaque object version; only equality is meaningful.
#[derive(Clone, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub struct Version(String);

impl Version {
    pub fn new(v: impl Into<String>) -> Self {
        Version(v.into())
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }

    /// Filesystem-safe rendering for conflict file names.
    fn file_tag(&self) -> String {
        let tag: String = self.0.chars().filter(|c| c.is_ascii_alphanumeric() || *c == '-').take(32).collect();
        if tag.is_empty() {
            hex::encode(&Sha256::digest(self.0.as_bytes())[..8])
        } else {
            tag
        }
    }
}

impl std::fmt::Display for Version {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str(&self.0)
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum Precondition {
    None,
    /// The key must not exist yet.
    Absent,
    /// The current remote version must equal this one.
    Matches(Version),
}

impl Precondition {
    pub fn admits(&self, current: Option<&Version>) -> bool {
        match self {
            Precondition::None => true,
            Precondition::Absent => current.is_none(),
            Precondition::Matches(v) => current == Some(v),
        }
    }
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct RemoteObject {
    pub key: String,
    pub version: Version,
    pub size: u64,
}

pub trait RemoteStore: Send + Sync {
    fn put_object(&self, key: &str, bytes: &[u8], precondition: Precondition) -> Result<Version, SyncError>;
    fn get_object(&self, key: &str) -> Result<(Vec<u8>, Version), SyncError>;
    fn list(&self, prefix: &str) -> Result<Vec<RemoteObject>, SyncError>;
    fn delete(&self, key: &str) -> Result<(), SyncError>;
}

/// Keys are relative `/`-separated paths over `[A-Za-z0-9._-]`.
pub(crate) fn validate_key(key: &str) -> Result<(), SyncError> {
    let ok = !key.is_empty()
        && key.split('/').all(|c| !c.is_empty() && c != "." && c != "..")
        && key.bytes().all(|b| b.is_ascii_alphanumeric() || b"._-/".contains(&b));
    if ok {
        Ok(())
    } else {
        Err(SyncError::InvalidKey(key.to_owned()))
    }
}

/// Opens a remote by URL: `http(s)://` for [`HttpStore`], `file://` or a
/// bare path for [`LocalDirStore`].
pub fn open_store(url: &str, token: Option<String>) -> Result<Box<dyn RemoteStore>, SyncError> {
    if url.starts_with("http://") || url.starts_with("https://") {
        return Ok(Box::new(HttpStore::new(url, token)?));
    }
    let path = url.strip_prefix("file://").unwrap_or(url);
    if path.is_empty() || url.contains("://") && !url.starts_with("file://") {
        return Err(SyncError::StoreUnreachable(format!("unsupported remote url {url}")));
    }
    Ok(Box::new(LocalDirStore::new(path)?))
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ConflictRecord {
    pub key: String,
    pub remote_version: Version,
    /// Local path (relative to the vault root) holding the remote copy.
    pub saved_as: String,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct SyncReport {
    pub pushed: usize,
    pub pulled: usize,
    pub conflicts: Vec<ConflictRecord>,
}

impl SyncReport {
    pub fn is_noop(&self) -> bool {
        self.pushed == 0 && self.pulled == 0 && self.conflicts.is_empty()
    }
}

impl std::fmt::Display for SyncReport {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "{}/{}/{}", self.pushed, self.pulled, self.conflicts.len())
    }
}

#[derive(Clone, Debug)]
pub struct SyncOptions {
    /// Transfers in flight at once.
    pub concurrency: usize,
}

impl Default for SyncOptions {
    fn default() -> Self {
        SyncOptions { concurrency: 4 }
    }
}

fn is_synced_key(key: &str) -> bool {
    (key == CONFIG_FILE || key.starts_with(&format!("{DATA_DIR}/")))
        && !key.ends_with(TEMP_SUFFIX)
        && !key.contains(CONFLICT_MARKER)
        && validate_key(key).is_ok()
}

fn local_path(root: &Path, key: &str) -> PathBuf {
    key.split('/').fold(root.to_path_buf(), |p, c| p.join(c))
}

fn digest_file(path: &Path) -> Result<[u8; 32], SyncError> {
    let mut hasher = Sha256::new();
    let mut file = File::open(path)?;
    let mut buf = vec![0u8; 1 << 16];
    loop {
        match file.read(&mut buf)? {
            0 => return Ok(hasher.finalize().into()),
            n => hasher.update(&buf[..n]),
        }
    }
}

/// Content digests of every synced object under the vault root.
fn scan_local(root: &Path) -> Result<BTreeMap<String, [u8; 32]>, SyncError> {
    let mut out = BTreeMap::new();
    let config = root.join(CONFIG_FILE);
    if config.is_file() {
        out.insert(CONFIG_FILE.to_owned(), digest_file(&config)?);
    }
    let mut pending = vec![(root.join(DATA_DIR), DATA_DIR.to_owned())];
    while let Some((dir, prefix)) = pending.pop() {
        let listing = match fs::read_dir(&dir) {
            Ok(l) => l,
            Err(e) if e.kind() == io::ErrorKind::NotFound => continue,
            Err(e) => return Err(e.into()),
        };
        for entry in listing {
            let entry = entry?;
            let Ok(name) = entry.file_name().into_string() else { continue };
            let key = format!("{prefix}/{name}");
            if entry.file_type()?.is_dir() {
                pending.push((entry.path(), key));
            } else if is_synced_key(&key) {
                out.insert(key, digest_file(&entry.path())?);
            }
        }
    }
    Ok(out)
}

fn write_local(root: &Path, key: &str, bytes: &[u8]) -> Result<(), SyncError> {
    let path = local_path(root, key);
    let parent = path.parent().expect("keys have a parent");
    fs::create_dir_all(parent)?;
    let tmp = parent.join(format!(".pull-{}{TEMP_SUFFIX}", hex::encode(&Sha256::digest(key.as_bytes())[..6])));
    let mut f = File::create(&tmp)?;
    f.write_all(bytes)?;
    f.sync_all()?;
    fs::rename(&tmp, &path)?;
    Ok(())
}

fn remove_local(root: &Path, key: &str) -> Result<(), SyncError> {
    let path = local_path(root, key);
    match fs::remove_file(&path) {
        Ok(()) => {}
        Err(e) if e.kind() == io::ErrorKind::NotFound => {}
        Err(e) => return Err(e.into()),
    }
    // drop directories emptied by the removal, such as a moved directory node
    let stop = root.join(DATA_DIR);
    let mut dir = path.parent();
    while let Some(d) = dir {
        if d == stop || !d.starts_with(&stop) || fs::remove_dir(d).is_err() {
            break;
        }
        dir = d.parent();
    }
    Ok(())
}

#[derive(Debug)]
enum Action {
    Push { precondition: Precondition },
    DeleteRemote,
    Pull,
    DeleteLocal,
    /// Both sides changed; fetch the remote to tell identical bytes from a conflict.
    Reconcile,
    Forget,
}

fn plan(
    local: &BTreeMap<String, [u8; 32]>,
    remote: &BTreeMap<String, Version>,
    state: &SyncState,
) -> Vec<(String, Action)> {
    let keys: BTreeSet<&String> = local.keys().chain(remote.keys()).chain(state.keys()).collect();
    let mut actions = Vec::new();
    for key in keys {
        let l = local.get(key);
        let r = remote.get(key);
        let s = state.get(key);
        let local_changed = l != s.map(|e| &e.digest);
        let remote_changed = r != s.map(|e| &e.version);
        let action = match (local_changed, remote_changed, l, r) {
            (false, false, ..) => continue,
            (true, false, Some(_), r) => Action::Push {
                precondition: r.cloned().map(Precondition::Matches).unwrap_or(Precondition::Absent),
            },
            (true, false, None, Some(_)) => Action::DeleteRemote,
            (false, true, _, Some(_)) => Action::Pull,
            (false, true, Some(_), None) => Action::DeleteLocal,
            (true, true, Some(_), Some(_)) => Action::Reconcile,
            (true, true, None, Some(_)) => Action::Pull,
            (true, true, Some(_), None) => Action::Push { precondition: Precondition::Absent },
            (_, _, None, None) => Action::Forget,
        };
        actions.push((key.clone(), action));
    }
    actions
}

struct Run<'a> {
    root: &'a Path,
    store: &'a dyn RemoteStore,
    local: &'a BTreeMap<String, [u8; 32]>,
    state: Mutex<&'a mut SyncState>,
    report: Mutex<SyncReport>,
}

impl Run<'_> {
    fn record(&self, key: &str, version: Version, digest: [u8; 32]) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).insert(key.to_owned(), StateEntry { version, digest });
    }

    fn forget(&self, key: &str) {
        self.state.lock().unwrap_or_else(|e| e.into_inner()).remove(key);
    }

    fn bump(&self, f: impl FnOnce(&mut SyncReport)) {
        f(&mut self.report.lock().unwrap_or_else(|e| e.into_inner()));
    }

    fn execute(&self, key: &str, action: Action) -> Result<(), SyncError> {
        log::debug!("sync {key}: {action:?}");
        match action {
            Action::Push { precondition } => {
                let bytes = fs::read(local_path(self.root, key))?;
                let digest: [u8; 32] = Sha256::digest(&bytes).into();
                match self.store.put_object(key, &bytes, precondition) {
                    Ok(version) => {
                        self.record(key, version, digest);
                        self.bump(|r| r.pushed += 1);
                    }
                    Err(SyncError::PreconditionFailed(_)) => self.reconcile(key)?,
                    Err(e) => return Err(e),
                }
            }
            Action::DeleteRemote => {
                match self.store.delete(key) {
                    Ok(()) | Err(SyncError::NotFound(_)) => {}
                    Err(e) => return Err(e),
                }
                self.forget(key);
                self.bump(|r| r.pushed += 1);
            }
            Action::Pull => {
                let (bytes, version) = self.store.get_object(key)?;
                write_local(self.root, key, &bytes)?;
                self.record(key, version, Sha256::digest(&bytes).into());
                self.bump(|r| r.pulled += 1);
            }
            Action::DeleteLocal => {
                remove_local(self.root, key)?;
                self.forget(key);
                self.bump(|r| r.pulled += 1);
            }
            Action::Reconcile => self.reconcile(key)?,
            Action::Forget => self.forget(key),
        }
        Ok(())
    }

    fn reconcile(&self, key: &str) -> Result<(), SyncError> {
        let (bytes, version) = self.store.get_object(key)?;
        let remote_digest: [u8; 32] = Sha256::digest(&bytes).into();
        if self.local.get(key) == Some(&remote_digest) {
            self.record(key, version, remote_digest);
            return Ok(());
        }
        let saved_as = format!("{key}{CONFLICT_MARKER}{}", version.file_tag());
        write_local(self.root, &saved_as, &bytes)?;
        log::warn!("conflict on {key}: remote version saved as {saved_as}");
        // the local copy wins on the next run, preconditioned on this version
        self.record(key, version.clone(), remote_digest);
        self.bump(|r| r.conflicts.push(ConflictRecord { key: key.to_owned(), remote_version: version, saved_as }));
        Ok(())
    }
}

/// One reconciliation pass. `state` is updated for every completed
/// transfer, also when the run fails part way.
pub fn sync(
    vault_root: &Path,
    store: &dyn RemoteStore,
    state: &mut SyncState,
    options: &SyncOptions,
) -> Result<SyncReport, SyncError> {
    let local = scan_local(vault_root)?;
    let remote: BTreeMap<String, Version> = store
        .list("")?
        .into_iter()
        .filter(|o| is_synced_key(&o.key))
        .map(|o| (o.key, o.version))
        .collect();
    let actions = plan(&local, &remote, state);
    log::info!("sync: {} local, {} remote, {} actions", local.len(), remote.len(), actions.len());

    let run = Run {
        root: vault_root,
        store,
        local: &local,
        state: Mutex::new(state),
        report: Mutex::new(SyncReport::default()),
    };
    let actions: Vec<Mutex<Option<(String, Action)>>> = actions.into_iter().map(|a| Mutex::new(Some(a))).collect();
    let next = AtomicUsize::new(0);
    let failed = AtomicBool::new(false);
    let first_error: Mutex<Option<SyncError>> = Mutex::new(None);
    let workers = options.concurrency.clamp(1, actions.len().max(1));
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| {
                while !failed.load(Ordering::Relaxed) {
                    let i = next.fetch_add(1, Ordering::Relaxed);
                    let Some(slot) = actions.get(i) else { break };
                    let Some((key, action)) = slot.lock().unwrap_or_else(|e| e.into_inner()).take() else {
                        continue;
                    };
                    if let Err(e) = run.execute(&key, action) {
                        failed.store(true, Ordering::Relaxed);
                        first_error.lock().unwrap_or_else(|e| e.into_inner()).get_or_insert(e);
                    }
                }
            });
        }
    });
    if let Some(e) = first_error.into_inner().unwrap_or_else(|e| e.into_inner()) {
        return Err(e);
    }
    Ok(run.report.into_inner().unwrap_or_else(|e| e.into_inner()))
}

/// Locks the vault's sync state, runs [`sync`] and persists the state.
pub fn sync_vault(vault_root: &Path, store: &dyn RemoteStore, options: &SyncOptions) -> Result<SyncReport, SyncError> {
    let _lock = StateLock::acquire(vault_root)?;
    let mut state = SyncState::load(vault_root)?;
    let result = sync(vault_root, store, &mut state, options);
    state.save(vault_root)?;
    result
}
