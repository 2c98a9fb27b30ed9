use std::path::{Path, PathBuf};

use aes_gcm::aead::{AeadInOut, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use hmac::{Hmac, Mac};
use rand::RngCore;
use sha2::Sha256;

use crate::modes::{validate_name, CryptoError};

pub const CONFIG_FILE: &str = "vault.cfg";
pub const DATA_DIR: &str = "d";
/// Reserved entry inside an encrypted directory node holding its dir id.
pub const DIR_ID_FILE: &str = "dir.id";
pub const ROOT_DIR_ID: [u8; 16] = [0; 16];
/// Suffix of in-flight writes. These never end in ".sc" so listings skip them.
pub const TEMP_SUFFIX: &str = ".tmp";

const SHARD_LABEL: &[u8] = b"sealvault/dir-shard";
const DIR_ID_LABEL: &[u8] = b"sealvault/dir-id";
/// IV 12 | dir id 16 | tag 16
pub const DIR_ID_OBJECT_LEN: usize = 44;

/// A logical path inside the vault, split into validated components.
#[derive(Clone, Debug, PartialEq, Eq, Hash)]
pub struct VaultPath {
    components: Vec<String>,
}

impl VaultPath {
    pub fn parse(path: &str) -> Result<Self, CryptoError> {
        let components = path
            .split('/')
            .filter(|c| !c.is_empty())
            .map(|c| validate_name(c).map(|_| c.to_owned()))
            .collect::<Result<Vec<_>, _>>()?;
        Ok(VaultPath { components })
    }

    pub fn root() -> Self {
        VaultPath { components: Vec::new() }
    }

    pub fn is_root(&self) -> bool {
        self.components.is_empty()
    }

    pub fn components(&self) -> &[String] {
        &self.components
    }

    /// Parent path and final component; `None` for the root.
    pub fn split_last(&self) -> Option<(VaultPath, &str)> {
        let (last, parent) = self.components.split_last()?;
        Some((VaultPath { components: parent.to_vec() }, last.as_str()))
    }

    pub fn join(&self, name: &str) -> VaultPath {
        let mut components = self.components.clone();
        components.push(name.to_owned());
        VaultPath { components }
    }
}

impl std::fmt::Display for VaultPath {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        write!(f, "/{}", self.components.join("/"))
    }
}

/// `d/<2 hex>/<30 hex>` for a directory id, keyed by the name key so the
/// tree shape is not visible on disk.
pub fn shard_path(root: &Path, name_key: &[u8; 32], dir_id: &[u8; 16]) -> PathBuf {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(name_key).expect("any key length");
    mac.update(SHARD_LABEL);
    mac.update(dir_id);
    let digest = mac.finalize().into_bytes();
    let hexed = hex::encode(&digest[..16]);
    root.join(DATA_DIR).join(&hexed[..2]).join(&hexed[2..])
}

pub fn new_id() -> [u8; 16] {
    let mut id = [0u8; 16];
    rand::rng().fill_bytes(&mut id);
    id
}

pub fn encrypt_dir_id(name_key: &[u8; 32], dir_id: &[u8; 16]) -> [u8; DIR_ID_OBJECT_LEN] {
    let mut iv = [0u8; 12];
    rand::rng().fill_bytes(&mut iv);
    let cipher = Aes256Gcm::new_from_slice(name_key).expect("32-byte key");
    let mut out = [0u8; DIR_ID_OBJECT_LEN];
    out[..12].copy_from_slice(&iv);
    out[12..28].copy_from_slice(dir_id);
    let tag = cipher
        .encrypt_inout_detached(&Nonce::from(iv), DIR_ID_LABEL, (&mut out[12..28]).into())
        .expect("16-byte message");
    out[28..].copy_from_slice(&tag);
    out
}

pub fn decrypt_dir_id(name_key: &[u8; 32], object: &[u8]) -> Result<[u8; 16], CryptoError> {
    if object.len() != DIR_ID_OBJECT_LEN {
        return Err(CryptoError::MalformedBlock("dir id object has wrong length"));
    }
    let cipher = Aes256Gcm::new_from_slice(name_key).expect("32-byte key");
    let iv: [u8; 12] = object[..12].try_into().unwrap();
    let tag: [u8; 16] = object[28..].try_into().unwrap();
    let mut id: [u8; 16] = object[12..28].try_into().unwrap();
    cipher
        .decrypt_inout_detached(&Nonce::from(iv), DIR_ID_LABEL, id.as_mut_slice().into(), &Tag::from(tag))
        .map_err(|_| CryptoError::AuthenticationFailure)?;
    Ok(id)
}
