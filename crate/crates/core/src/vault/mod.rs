//! The on-disk vault: configuration, obfuscated directory tree and
//! block-encrypted file objects.
//!
//! A read goes: logical path -> directory ids resolved through `dir.id`
//! objects -> shard directory -> encrypted name -> object header -> file
//! key -> blocks decrypted in index order. Writes run the same path in
//! reverse into a temporary file that is renamed over the target.

mod config;
mod layout;
mod object;

use std::collections::HashMap;
use std::fs::{self, File, OpenOptions};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::sync::{Arc, Mutex, RwLock};

use rand::RngCore;
use zeroize::Zeroizing;

use crate::modes::{
    decrypt_filename, derive_kek, encrypt_filename, unwrap_key, wrap_key, CryptoError, EnclaveSession,
    MasterKeys, ModeId, DEFAULT_KDF_ITERATIONS, ENCRYPTED_NAME_SUFFIX,
};
use crate::tee::{measure_enclave, PlatformIdentity, SealedBlob, SealingPolicy};

pub use config::{
    ConfigError, ContentKeyProtection, EnclaveDescriptor, KdfParams, VaultConfig, CONFIG_FORMAT_VERSION,
    CONFIG_MAGIC, SEALED_KEY_BLOB_LEN,
};
pub use layout::{shard_path, VaultPath, CONFIG_FILE, DATA_DIR, DIR_ID_FILE, ROOT_DIR_ID, TEMP_SUFFIX};
pub use object::{ciphertext_size, cleartext_size, FILE_HEADER_LEN};

use layout::{decrypt_dir_id, encrypt_dir_id, new_id};
use object::{write_object, ContentKeys, OpenObject};

/// Code image of the enclave that guards sealed vaults. Its measurement is
/// recorded in the config, so a different build cannot unlock the vault.
pub const VAULT_ENCLAVE_CODE: &[u8] = b"sealvault vault enclave: seal/unseal content blocks, format 1";
pub const VAULT_ENCLAVE_SIGNER: &[u8] = b"sealvault release signer";
pub const VAULT_ENCLAVE_PRODUCT_ID: u16 = 1;
pub const VAULT_ENCLAVE_ISV_SVN: u16 = 1;

const NAME_KEY_LABEL: &[u8] = b"sealvault/name-key";
const CONTENT_KEY_LABEL: &[u8] = b"sealvault/content-key";
const LOCK_FILE: &str = ".lock";

#[derive(Debug, thiserror::Error)]
pub enum VaultError {
    #[error("target directory {0} is not empty")]
    TargetNotEmpty(PathBuf),
    #[error("sealed mode requires a platform identity")]
    MissingPlatform,
    #[error("wrong password")]
    WrongPassword,
    #[error("cannot unseal vault key on this platform or enclave")]
    UnsealFailure,
    #[error(transparent)]
    CorruptConfig(#[from] ConfigError),
    #[error("vault is locked")]
    VaultLocked,
    #[error("not found: {0}")]
    NotFound(String),
    #[error("already exists: {0}")]
    AlreadyExists(String),
    #[error("not a directory: {0}")]
    NotADirectory(String),
    #[error("is a directory: {0}")]
    IsADirectory(String),
    #[error("directory not empty: {0}")]
    DirectoryNotEmpty(String),
    #[error("name of {0} bytes exceeds the limit")]
    NameTooLong(usize),
    #[error("invalid name: {0}")]
    InvalidName(&'static str),
    #[error("no space left on device")]
    StorageFull,
    #[error("authentication failed: data was modified or belongs elsewhere")]
    AuthenticationFailure,
    #[error("malformed block: {0}")]
    MalformedBlock(&'static str),
    #[error("malformed object: {0}")]
    MalformedObject(&'static str),
    #[error("vault is in use by another process")]
    Busy,
    #[error("write interrupted before commit")]
    Interrupted,
    #[error(transparent)]
    Crypto(CryptoError),
    #[error(transparent)]
    Io(io::Error),
}

impl From<CryptoError> for VaultError {
    fn from(e: CryptoError) -> Self {
        match e {
            CryptoError::AuthenticationFailure => VaultError::AuthenticationFailure,
            CryptoError::MalformedBlock(why) => VaultError::MalformedBlock(why),
            CryptoError::NameTooLong(n) => VaultError::NameTooLong(n),
            CryptoError::InvalidName(why) => VaultError::InvalidName(why),
            CryptoError::SessionDestroyed => VaultError::VaultLocked,
            other => VaultError::Crypto(other),
        }
    }
}

impl From<io::Error> for VaultError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull || e.raw_os_error() == Some(28) {
            VaultError::StorageFull
        } else if e.kind() == io::ErrorKind::UnexpectedEof {
            VaultError::MalformedBlock("object truncated")
        } else {
            VaultError::Io(e)
        }
    }
}

/// Tunables for new vaults.
#[derive(Clone, Debug)]
pub struct VaultOptions {
    pub kdf_iterations: u32,
    pub sealing_policy: SealingPolicy,
}

impl Default for VaultOptions {
    fn default() -> Self {
        VaultOptions { kdf_iterations: DEFAULT_KDF_ITERATIONS, sealing_policy: SealingPolicy::MrEnclave }
    }
}

fn vault_enclave(platform: &PlatformIdentity, policy: SealingPolicy) -> Result<EnclaveSession, VaultError> {
    let identity = measure_enclave(
        VAULT_ENCLAVE_CODE,
        VAULT_ENCLAVE_SIGNER,
        VAULT_ENCLAVE_PRODUCT_ID,
        VAULT_ENCLAVE_ISV_SVN,
    );
    let session = EnclaveSession::new();
    session.initialize(platform.clone(), identity, policy)?;
    Ok(session)
}

fn key_label(label: &[u8], vault_id: &[u8; 16], mode: ModeId) -> Vec<u8> {
    let mut out = label.to_vec();
    out.extend_from_slice(vault_id);
    out.push(mode.code());
    out
}

/// Writes `bytes` to `path` via a temp file in the same directory.
fn write_atomic(path: &Path, bytes: &[u8]) -> Result<(), VaultError> {
    let tmp = temp_path(path);
    let result = (|| {
        let mut f = File::create(&tmp)?;
        f.write_all(bytes)?;
        f.sync_all()?;
        fs::rename(&tmp, path)
    })();
    if result.is_err() {
        let _ = fs::remove_file(&tmp);
    }
    Ok(result?)
}

fn temp_path(target: &Path) -> PathBuf {
    let mut suffix = [0u8; 6];
    rand::rng().fill_bytes(&mut suffix);
    let dir = target.parent().unwrap_or_else(|| Path::new("."));
    dir.join(format!(".{}{}", hex::encode(suffix), TEMP_SUFFIX))
}

/// Creates a new vault under `root`, which must be empty or absent.
pub fn create_vault(
    root: &Path,
    password: &str,
    mode: ModeId,
    platform: Option<&PlatformIdentity>,
) -> Result<VaultConfig, VaultError> {
    create_vault_with(root, password, mode, platform, &VaultOptions::default())
}

pub fn create_vault_with(
    root: &Path,
    password: &str,
    mode: ModeId,
    platform: Option<&PlatformIdentity>,
    options: &VaultOptions,
) -> Result<VaultConfig, VaultError> {
    if mode == ModeId::Sealed && platform.is_none() {
        return Err(VaultError::MissingPlatform);
    }
    if root.exists() {
        if fs::read_dir(root)?.next().is_some() {
            return Err(VaultError::TargetNotEmpty(root.to_path_buf()));
        }
    } else {
        fs::create_dir_all(root)?;
    }

    let vault_id = new_id();
    let mut salt = [0u8; 16];
    rand::rng().fill_bytes(&mut salt);
    let kdf = KdfParams { salt, iterations: options.kdf_iterations };
    let kek = derive_kek(password, &kdf.salt, kdf.iterations)?;
    let keys = MasterKeys::generate();

    let wrapped_name_key = wrap_key(&kek, &keys.name_key, &key_label(NAME_KEY_LABEL, &vault_id, mode));
    let (content_key, enclave) = match (mode, platform) {
        (ModeId::V1, _) => (
            ContentKeyProtection::Wrapped(wrap_key(
                &kek,
                &keys.content_key,
                &key_label(CONTENT_KEY_LABEL, &vault_id, mode),
            )),
            None,
        ),
        (ModeId::Sealed, Some(platform)) => {
            let session = vault_enclave(platform, options.sealing_policy)?;
            let identity = session.identity()?;
            let blob = session.seal(&keys.content_key, &key_label(CONTENT_KEY_LABEL, &vault_id, mode))?;
            session.destroy()?;
            (
                ContentKeyProtection::Sealed(blob),
                Some(EnclaveDescriptor { measurement: identity.measurement, signer: identity.signer }),
            )
        }
        (ModeId::Sealed, None) => unreachable!("checked above"),
    };

    let config = VaultConfig {
        format_version: CONFIG_FORMAT_VERSION,
        vault_id,
        mode,
        kdf,
        wrapped_name_key,
        content_key,
        enclave,
    };
    write_atomic(&root.join(CONFIG_FILE), &config.to_bytes())?;
    fs::create_dir_all(shard_path(root, &keys.name_key, &ROOT_DIR_ID))?;
    log::debug!("created {mode} vault at {}", root.display());
    Ok(config)
}

pub fn read_config(root: &Path) -> Result<VaultConfig, VaultError> {
    let bytes = match fs::read(root.join(CONFIG_FILE)) {
        Ok(b) => b,
        Err(e) if e.kind() == io::ErrorKind::NotFound => {
            return Err(VaultError::NotFound(root.join(CONFIG_FILE).display().to_string()))
        }
        Err(e) => return Err(e.into()),
    };
    Ok(VaultConfig::from_bytes(&bytes)?)
}

/// Opens a vault. Sealed vaults need both the password and the platform
/// they were created on.
pub fn unlock_vault(
    root: &Path,
    password: &str,
    platform: Option<&PlatformIdentity>,
) -> Result<VaultHandle, VaultError> {
    let config = read_config(root)?;
    let kek = derive_kek(password, &config.kdf.salt, config.kdf.iterations).map_err(|e| match e {
        CryptoError::EmptyPassword => VaultError::WrongPassword,
        other => other.into(),
    })?;
    let name_key = unwrap_key(&kek, &config.wrapped_name_key, &key_label(NAME_KEY_LABEL, &config.vault_id, config.mode))
        .map_err(|_| VaultError::WrongPassword)?;

    let (content_key, session) = match &config.content_key {
        ContentKeyProtection::Wrapped(w) => {
            let key = unwrap_key(&kek, w, &key_label(CONTENT_KEY_LABEL, &config.vault_id, config.mode))
                .map_err(|_| VaultError::WrongPassword)?;
            (key, None)
        }
        ContentKeyProtection::Sealed(blob) => {
            let platform = platform.ok_or(VaultError::MissingPlatform)?;
            let session = vault_enclave(platform, blob.policy())?;
            let identity = session.identity()?;
            let expected = config.enclave.expect("validated sealed config");
            if expected.measurement != identity.measurement || expected.signer != identity.signer {
                return Err(VaultError::UnsealFailure);
            }
            let key = session
                .unseal(blob, &key_label(CONTENT_KEY_LABEL, &config.vault_id, config.mode))
                .map_err(|_| VaultError::UnsealFailure)?;
            let key = Zeroizing::new(key);
            let key: [u8; 32] = key.as_slice().try_into().map_err(|_| VaultError::UnsealFailure)?;
            (Zeroizing::new(key), Some(session))
        }
    };

    let keys = MasterKeys { content_key: *content_key, name_key: *name_key };
    Ok(VaultHandle {
        root: root.to_path_buf(),
        config,
        unlocked: RwLock::new(Some(Unlocked { keys, session })),
        path_locks: Mutex::new(HashMap::new()),
    })
}

struct Unlocked {
    keys: MasterKeys,
    session: Option<EnclaveSession>,
}

impl Unlocked {
    fn content_keys(&self) -> ContentKeys<'_> {
        match &self.session {
            None => ContentKeys::V1 { master: &self.keys.content_key },
            Some(session) => ContentKeys::Sealed { session, master: &self.keys.content_key },
        }
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum EntryKind {
    File,
    Directory,
    /// A `.sc` entry whose name does not decrypt under this vault's keys.
    Unreadable,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct DirEntry {
    /// Cleartext name, or the physical name for unreadable entries.
    pub name: String,
    pub kind: EntryKind,
    /// Cleartext size for files.
    pub size: Option<u64>,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct WriteStats {
    pub cleartext_len: u64,
    pub stored_len: u64,
}

/// Failure injection points for crash tests.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
enum Fault {
    BeforeRename,
}

/// An unlocked vault.
pub struct VaultHandle {
    root: PathBuf,
    config: VaultConfig,
    unlocked: RwLock<Option<Unlocked>>,
    path_locks: Mutex<HashMap<VaultPath, Arc<Mutex<()>>>>,
}

impl std::fmt::Debug for VaultHandle {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("VaultHandle")
            .field("root", &self.root)
            .field("mode", &self.config.mode)
            .field("locked", &!self.is_unlocked())
            .finish()
    }
}

/// What a logical path resolves to on disk.
enum Resolved {
    File(PathBuf),
    Directory { node: PathBuf, dir_id: [u8; 16] },
    Missing(PathBuf),
}

impl VaultHandle {
    pub fn root(&self) -> &Path {
        &self.root
    }

    pub fn config(&self) -> &VaultConfig {
        &self.config
    }

    pub fn mode(&self) -> ModeId {
        self.config.mode
    }

    pub fn is_unlocked(&self) -> bool {
        self.unlocked.read().unwrap_or_else(|e| e.into_inner()).is_some()
    }

    /// Drops the keys and tears down the enclave. Further I/O fails with
    /// [`VaultError::VaultLocked`].
    pub fn lock(&self) {
        let mut guard = self.unlocked.write().unwrap_or_else(|e| e.into_inner());
        if let Some(u) = guard.take() {
            if let Some(s) = &u.session {
                let _ = s.destroy();
            }
        }
    }

    fn with_keys<T>(&self, f: impl FnOnce(&Unlocked) -> Result<T, VaultError>) -> Result<T, VaultError> {
        let guard = self.unlocked.read().unwrap_or_else(|e| e.into_inner());
        match guard.as_ref() {
            Some(u) => f(u),
            None => Err(VaultError::VaultLocked),
        }
    }

    fn path_lock(&self, path: &VaultPath) -> Arc<Mutex<()>> {
        let mut locks = self.path_locks.lock().unwrap_or_else(|e| e.into_inner());
        locks.entry(path.clone()).or_default().clone()
    }

    /// Resolves a directory path to its id and shard directory.
    fn resolve_dir(&self, keys: &Unlocked, path: &VaultPath) -> Result<([u8; 16], PathBuf), VaultError> {
        let name_key = &keys.keys.name_key;
        let mut dir_id = ROOT_DIR_ID;
        let mut shard = shard_path(&self.root, name_key, &dir_id);
        for (depth, component) in path.components().iter().enumerate() {
            let node = shard.join(encrypt_filename(name_key, &dir_id, component)?);
            let shown = || format!("/{}", path.components()[..=depth].join("/"));
            match fs::metadata(&node) {
                Ok(m) if m.is_dir() => {}
                Ok(_) => return Err(VaultError::NotADirectory(shown())),
                Err(e) if e.kind() == io::ErrorKind::NotFound => return Err(VaultError::NotFound(shown())),
                Err(e) => return Err(e.into()),
            }
            let object = fs::read(node.join(DIR_ID_FILE))?;
            dir_id = decrypt_dir_id(name_key, &object)?;
            shard = shard_path(&self.root, name_key, &dir_id);
        }
        Ok((dir_id, shard))
    }

    fn resolve(&self, keys: &Unlocked, path: &VaultPath) -> Result<Resolved, VaultError> {
        let Some((parent, name)) = path.split_last() else {
            return Ok(Resolved::Directory {
                node: shard_path(&self.root, &keys.keys.name_key, &ROOT_DIR_ID),
                dir_id: ROOT_DIR_ID,
            });
        };
        let (parent_id, shard) = self.resolve_dir(keys, &parent)?;
        let physical = shard.join(encrypt_filename(&keys.keys.name_key, &parent_id, name)?);
        match fs::metadata(&physical) {
            Ok(m) if m.is_dir() => {
                let object = fs::read(physical.join(DIR_ID_FILE))?;
                let dir_id = decrypt_dir_id(&keys.keys.name_key, &object)?;
                Ok(Resolved::Directory { node: physical, dir_id })
            }
            Ok(_) => Ok(Resolved::File(physical)),
            Err(e) if e.kind() == io::ErrorKind::NotFound => Ok(Resolved::Missing(physical)),
            Err(e) => Err(e.into()),
        }
    }

    /// Physical location of the entry at `path`. Parent directories must exist.
    pub fn map_path(&self, path: &str) -> Result<PathBuf, VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            Ok(match self.resolve(keys, &path)? {
                Resolved::File(p) | Resolved::Missing(p) => p,
                Resolved::Directory { node, .. } => node,
            })
        })
    }

    pub fn create_dir(&self, path: &str) -> Result<(), VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| self.create_dir_inner(keys, &path))
    }

    fn create_dir_inner(&self, keys: &Unlocked, path: &VaultPath) -> Result<(), VaultError> {
        let physical = match self.resolve(keys, path)? {
            Resolved::Missing(p) => p,
            _ => return Err(VaultError::AlreadyExists(path.to_string())),
        };
        let dir_id = new_id();
        fs::create_dir_all(shard_path(&self.root, &keys.keys.name_key, &dir_id))?;
        if let Some(parent) = physical.parent() {
            fs::create_dir_all(parent)?;
        }
        // the node appears together with its dir.id, so concurrent resolvers never see it half-made
        let staging = temp_path(&physical);
        let result = (|| {
            fs::create_dir(&staging)?;
            write_atomic(&staging.join(DIR_ID_FILE), &encrypt_dir_id(&keys.keys.name_key, &dir_id))?;
            if physical.exists() {
                return Err(VaultError::AlreadyExists(path.to_string()));
            }
            match fs::rename(&staging, &physical) {
                Err(e) if matches!(e.kind(), io::ErrorKind::DirectoryNotEmpty | io::ErrorKind::AlreadyExists) => {
                    Err(VaultError::AlreadyExists(path.to_string()))
                }
                other => Ok(other?),
            }
        })();
        if result.is_err() {
            let _ = fs::remove_dir_all(&staging);
        }
        result
    }

    /// `mkdir -p`: creates every missing directory along `path`.
    pub fn create_dir_all(&self, path: &str) -> Result<(), VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            let mut current = VaultPath::root();
            for component in path.components() {
                current = current.join(component);
                match self.resolve(keys, &current)? {
                    Resolved::Directory { .. } => {}
                    Resolved::Missing(_) => match self.create_dir_inner(keys, &current) {
                        Err(VaultError::AlreadyExists(_))
                            if matches!(self.resolve(keys, &current)?, Resolved::Directory { .. }) => {}
                        other => other?,
                    },
                    Resolved::File(_) => return Err(VaultError::NotADirectory(current.to_string())),
                }
            }
            Ok(())
        })
    }

    /// Encrypts everything `content` yields into the file at `path`,
    /// replacing any previous version atomically.
    pub fn write_file(&self, path: &str, content: &mut impl Read) -> Result<WriteStats, VaultError> {
        self.write_file_inner(path, content, None)
    }

    pub fn write_bytes(&self, path: &str, content: &[u8]) -> Result<WriteStats, VaultError> {
        self.write_file(path, &mut &content[..])
    }

    fn write_file_inner(
        &self,
        path: &str,
        content: &mut impl Read,
        fault: Option<Fault>,
    ) -> Result<WriteStats, VaultError> {
        let path = VaultPath::parse(path)?;
        if path.is_root() {
            return Err(VaultError::IsADirectory("/".into()));
        }
        let lock = self.path_lock(&path);
        let _serialized = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.with_keys(|keys| {
            let target = match self.resolve(keys, &path)? {
                Resolved::Directory { .. } => return Err(VaultError::IsADirectory(path.to_string())),
                Resolved::File(p) | Resolved::Missing(p) => p,
            };
            // shard directories are not synced when empty, so a replica may lack one
            if let Some(parent) = target.parent() {
                fs::create_dir_all(parent)?;
            }
            let tmp = temp_path(&target);
            let result = (|| {
                let file = OpenOptions::new().read(true).write(true).create_new(true).open(&tmp)?;
                let mut out = BufWriter::with_capacity(1 << 20, file);
                let cleartext_len = write_object(&keys.content_keys(), &new_id(), content, &mut out)?;
                let file = out.into_inner().map_err(|e| e.into_error())?;
                let stored_len = file.metadata()?.len();
                drop(file);
                if fault == Some(Fault::BeforeRename) {
                    return Err(VaultError::Interrupted);
                }
                fs::rename(&tmp, &target)?;
                Ok(WriteStats { cleartext_len, stored_len })
            })();
            if let Err(e) = &result {
                if !matches!(e, VaultError::Interrupted) {
                    let _ = fs::remove_file(&tmp);
                }
            }
            result
        })
    }

    fn open_file(&self, keys: &Unlocked, path: &VaultPath) -> Result<PathBuf, VaultError> {
        match self.resolve(keys, path)? {
            Resolved::File(p) => Ok(p),
            Resolved::Missing(_) => Err(VaultError::NotFound(path.to_string())),
            Resolved::Directory { .. } => Err(VaultError::IsADirectory(path.to_string())),
        }
    }

    /// Decrypts the file at `path` into `sink`; returns its length.
    pub fn read_file_to(&self, path: &str, sink: &mut impl Write) -> Result<u64, VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            let physical = self.open_file(keys, &path)?;
            let file = File::open(&physical)?;
            let stored_len = file.metadata()?.len();
            let mut input = BufReader::with_capacity(1 << 20, file);
            let object = OpenObject::open(keys.content_keys(), &mut input, stored_len)?;
            object.read_all(&mut input, sink)
        })
    }

    pub fn read_file(&self, path: &str) -> Result<Vec<u8>, VaultError> {
        let mut out = Vec::new();
        self.read_file_to(path, &mut out)?;
        Ok(out)
    }

    /// Reads a byte range, decrypting only the blocks that overlap it.
    pub fn read_range(&self, path: &str, offset: u64, len: u64) -> Result<Vec<u8>, VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            let physical = self.open_file(keys, &path)?;
            let mut file = File::open(&physical)?;
            let stored_len = file.metadata()?.len();
            let object = OpenObject::open(keys.content_keys(), &mut file, stored_len)?;
            object.read_range(&mut file, offset, len)
        })
    }

    /// Cleartext size of a file, computed from its stored size.
    pub fn file_size(&self, path: &str) -> Result<u64, VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            let physical = self.open_file(keys, &path)?;
            let stored = fs::metadata(physical)?.len();
            cleartext_size(self.mode(), stored).ok_or(VaultError::MalformedObject("impossible object size"))
        })
    }

    pub fn list_dir(&self, path: &str) -> Result<Vec<DirEntry>, VaultError> {
        let path = VaultPath::parse(path)?;
        self.with_keys(|keys| {
            let (dir_id, shard) = match self.resolve(keys, &path)? {
                Resolved::Directory { dir_id, .. } => (dir_id, shard_path(&self.root, &keys.keys.name_key, &dir_id)),
                Resolved::File(_) => return Err(VaultError::NotADirectory(path.to_string())),
                Resolved::Missing(_) => return Err(VaultError::NotFound(path.to_string())),
            };
            let mut entries = Vec::new();
            let listing = match fs::read_dir(&shard) {
                Ok(l) => l,
                Err(e) if e.kind() == io::ErrorKind::NotFound => return Ok(entries),
                Err(e) => return Err(e.into()),
            };
            for item in listing {
                let item = item?;
                let Ok(physical_name) = item.file_name().into_string() else { continue };
                if !physical_name.ends_with(ENCRYPTED_NAME_SUFFIX) {
                    continue;
                }
                let is_dir = item.file_type()?.is_dir();
                let entry = match decrypt_filename(&keys.keys.name_key, &dir_id, &physical_name) {
                    Ok(name) if is_dir => DirEntry { name, kind: EntryKind::Directory, size: None },
                    Ok(name) => match cleartext_size(self.mode(), item.metadata()?.len()) {
                        Some(size) => DirEntry { name, kind: EntryKind::File, size: Some(size) },
                        None => DirEntry { name: physical_name, kind: EntryKind::Unreadable, size: None },
                    },
                    Err(_) => DirEntry { name: physical_name, kind: EntryKind::Unreadable, size: None },
                };
                entries.push(entry);
            }
            entries.sort_by(|a, b| a.name.cmp(&b.name));
            Ok(entries)
        })
    }

    pub fn remove_file(&self, path: &str) -> Result<(), VaultError> {
        let path = VaultPath::parse(path)?;
        let lock = self.path_lock(&path);
        let _serialized = lock.lock().unwrap_or_else(|e| e.into_inner());
        self.with_keys(|keys| {
            let physical = self.open_file(keys, &path)?;
            fs::remove_file(physical)?;
            Ok(())
        })
    }

    /// Removes an empty directory.
    pub fn remove_dir(&self, path: &str) -> Result<(), VaultError> {
        let path = VaultPath::parse(path)?;
        if path.is_root() {
            return Err(VaultError::InvalidName("cannot remove the root directory"));
        }
        self.with_keys(|keys| {
            let (node, dir_id) = match self.resolve(keys, &path)? {
                Resolved::Directory { node, dir_id } => (node, dir_id),
                Resolved::File(_) => return Err(VaultError::NotADirectory(path.to_string())),
                Resolved::Missing(_) => return Err(VaultError::NotFound(path.to_string())),
            };
            let shard = shard_path(&self.root, &keys.keys.name_key, &dir_id);
            if let Ok(mut listing) = fs::read_dir(&shard) {
                if listing.next().is_some() {
                    return Err(VaultError::DirectoryNotEmpty(path.to_string()));
                }
            }
            fs::remove_file(node.join(DIR_ID_FILE))?;
            fs::remove_dir(&node)?;
            let _ = fs::remove_dir(&shard);
            Ok(())
        })
    }

    /// Moves a file or directory. Only the encrypted name changes; the
    /// stored object bytes are left untouched.
    pub fn rename(&self, from: &str, to: &str) -> Result<(), VaultError> {
        let from = VaultPath::parse(from)?;
        let to = VaultPath::parse(to)?;
        if from.is_root() || to.is_root() {
            return Err(VaultError::InvalidName("cannot rename the root directory"));
        }
        self.with_keys(|keys| {
            let source = match self.resolve(keys, &from)? {
                Resolved::File(p) => p,
                Resolved::Directory { node, .. } => node,
                Resolved::Missing(_) => return Err(VaultError::NotFound(from.to_string())),
            };
            let target = match self.resolve(keys, &to)? {
                Resolved::Missing(p) => p,
                Resolved::File(p) if source.is_file() => p,
                _ => return Err(VaultError::AlreadyExists(to.to_string())),
            };
            fs::rename(source, target)?;
            Ok(())
        })
    }

    /// Walks the whole tree and returns every file's logical path.
    pub fn walk_files(&self) -> Result<Vec<String>, VaultError> {
        let mut out = Vec::new();
        let mut pending = vec![String::from("/")];
        while let Some(dir) = pending.pop() {
            for entry in self.list_dir(&dir)? {
                let child = if dir == "/" { format!("/{}", entry.name) } else { format!("{dir}/{}", entry.name) };
                match entry.kind {
                    EntryKind::File => out.push(child),
                    EntryKind::Directory => pending.push(child),
                    EntryKind::Unreadable => {}
                }
            }
        }
        out.sort();
        Ok(out)
    }
}

impl Drop for VaultHandle {
    fn drop(&mut self) {
        self.lock();
    }
}

/// Advisory exclusive lock on a vault directory, held until dropped.
#[derive(Debug)]
pub struct VaultLock {
    _file: File,
}

impl VaultLock {
    pub fn acquire(root: &Path) -> Result<Self, VaultError> {
        let file = OpenOptions::new().create(true).truncate(false).write(true).open(root.join(LOCK_FILE))?;
        match file.try_lock() {
            Ok(()) => Ok(VaultLock { _file: file }),
            Err(fs::TryLockError::WouldBlock) => Err(VaultError::Busy),
            Err(fs::TryLockError::Error(e)) => Err(e.into()),
        }
    }
}

/// Name of the vault's advisory lock file, for callers that scan the vault root.
pub const VAULT_LOCK_FILE: &str = LOCK_FILE;

/// Parses a sealed blob from stored bytes; exposed for diagnostics.
pub fn parse_sealed(bytes: &[u8]) -> Result<SealedBlob, VaultError> {
    SealedBlob::parse(bytes).map_err(|e| VaultError::from(CryptoError::from(e)))
}
