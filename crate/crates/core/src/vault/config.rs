//! `vault.cfg`: a versioned, length-prefixed binary record.
//!
//! ```text
//! magic "SVCF" | format_version u32
//! field*        each as u32 length | bytes, in this order:
//!               vault_id, mode, kdf salt, kdf iterations (u32),
//!               wrapped name key, content key protection (tag byte | body),
//!               enclave descriptor (empty, or measurement | signer)
//! sha256        of everything above
//! ```
//! All integers little-endian. The trailing digest catches corruption;
//! tampering with key material is caught again by the AEAD labels.

use std::fmt;

use sha2::{Digest, Sha256};

use crate::modes::{ModeId, WRAPPED_KEY_LEN};
use crate::tee::SealedBlob;

pub const CONFIG_MAGIC: [u8; 4] = *b"SVCF";
pub const CONFIG_FORMAT_VERSION: u32 = 1;
/// A sealed 32-byte content key.
pub const SEALED_KEY_BLOB_LEN: usize = 592;

const TAG_WRAPPED: u8 = 1;
const TAG_SEALED: u8 = 2;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct KdfParams {
    pub salt: [u8; 16],
    pub iterations: u32,
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub enum ContentKeyProtection {
    Wrapped([u8; WRAPPED_KEY_LEN]),
    Sealed(SealedBlob),
}

/// Which enclave build may unseal the content key.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct EnclaveDescriptor {
    pub measurement: [u8; 32],
    pub signer: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct VaultConfig {
    pub format_version: u32,
    pub vault_id: [u8; 16],
    pub mode: ModeId,
    pub kdf: KdfParams,
    pub wrapped_name_key: [u8; WRAPPED_KEY_LEN],
    pub content_key: ContentKeyProtection,
    pub enclave: Option<EnclaveDescriptor>,
}

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
#[error("corrupt vault config: {0}")]
pub struct ConfigError(pub &'static str);

fn put_field(out: &mut Vec<u8>, bytes: &[u8]) {
    out.extend_from_slice(&(bytes.len() as u32).to_le_bytes());
    out.extend_from_slice(bytes);
}

struct Reader<'a> {
    buf: &'a [u8],
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], ConfigError> {
        if self.buf.len() < n {
            return Err(ConfigError("truncated"));
        }
        let (head, tail) = self.buf.split_at(n);
        self.buf = tail;
        Ok(head)
    }

    fn field(&mut self) -> Result<&'a [u8], ConfigError> {
        let len = u32::from_le_bytes(self.take(4)?.try_into().unwrap()) as usize;
        self.take(len)
    }

    fn fixed<const N: usize>(&mut self) -> Result<[u8; N], ConfigError> {
        self.field()?.try_into().map_err(|_| ConfigError("field has wrong length"))
    }
}

impl VaultConfig {
    pub fn validate(&self) -> Result<(), ConfigError> {
        if self.format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError("unsupported format version"));
        }
        if self.kdf.iterations == 0 {
            return Err(ConfigError("zero kdf iterations"));
        }
        match (self.mode, &self.content_key, &self.enclave) {
            (ModeId::V1, ContentKeyProtection::Wrapped(_), None) => Ok(()),
            (ModeId::Sealed, ContentKeyProtection::Sealed(blob), Some(_)) => {
                if blob.len() != SEALED_KEY_BLOB_LEN {
                    return Err(ConfigError("sealed content key has wrong length"));
                }
                Ok(())
            }
            _ => Err(ConfigError("content key protection does not match mode")),
        }
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(1024);
        out.extend_from_slice(&CONFIG_MAGIC);
        out.extend_from_slice(&self.format_version.to_le_bytes());
        put_field(&mut out, &self.vault_id);
        put_field(&mut out, &[self.mode.code()]);
        put_field(&mut out, &self.kdf.salt);
        put_field(&mut out, &self.kdf.iterations.to_le_bytes());
        put_field(&mut out, &self.wrapped_name_key);
        let mut protection = Vec::new();
        match &self.content_key {
            ContentKeyProtection::Wrapped(w) => {
                protection.push(TAG_WRAPPED);
                protection.extend_from_slice(w);
            }
            ContentKeyProtection::Sealed(blob) => {
                protection.push(TAG_SEALED);
                protection.extend_from_slice(blob.as_bytes());
            }
        }
        put_field(&mut out, &protection);
        match &self.enclave {
            None => put_field(&mut out, &[]),
            Some(d) => {
                let mut desc = [0u8; 64];
                desc[..32].copy_from_slice(&d.measurement);
                desc[32..].copy_from_slice(&d.signer);
                put_field(&mut out, &desc);
            }
        }
        let digest = Sha256::digest(&out);
        out.extend_from_slice(&digest);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self, ConfigError> {
        if bytes.len() < 8 + 32 {
            return Err(ConfigError("truncated"));
        }
        let (body, digest) = bytes.split_at(bytes.len() - 32);
        if Sha256::digest(body).as_slice() != digest {
            return Err(ConfigError("checksum mismatch"));
        }
        let mut r = Reader { buf: body };
        if r.take(4)? != CONFIG_MAGIC {
            return Err(ConfigError("bad magic"));
        }
        let format_version = u32::from_le_bytes(r.take(4)?.try_into().unwrap());
        if format_version != CONFIG_FORMAT_VERSION {
            return Err(ConfigError("unsupported format version"));
        }
        let vault_id = r.fixed::<16>()?;
        let [mode] = r.fixed::<1>()?;
        let mode = ModeId::from_code(mode).ok_or(ConfigError("unknown mode"))?;
        let salt = r.fixed::<16>()?;
        let iterations = u32::from_le_bytes(r.fixed::<4>()?);
        let wrapped_name_key = r.fixed::<WRAPPED_KEY_LEN>()?;
        let protection = r.field()?;
        let content_key = match protection.split_first() {
            Some((&TAG_WRAPPED, rest)) => ContentKeyProtection::Wrapped(
                rest.try_into().map_err(|_| ConfigError("wrapped content key has wrong length"))?,
            ),
            Some((&TAG_SEALED, rest)) => ContentKeyProtection::Sealed(
                SealedBlob::parse(rest).map_err(|_| ConfigError("sealed content key is malformed"))?,
            ),
            _ => return Err(ConfigError("unknown content key protection")),
        };
        let desc = r.field()?;
        let enclave = match desc.len() {
            0 => None,
            64 => Some(EnclaveDescriptor {
                measurement: desc[..32].try_into().unwrap(),
                signer: desc[32..].try_into().unwrap(),
            }),
            _ => return Err(ConfigError("enclave descriptor has wrong length")),
        };
        if !r.buf.is_empty() {
            return Err(ConfigError("trailing bytes"));
        }
        let cfg = VaultConfig {
            format_version,
            vault_id,
            mode,
            kdf: KdfParams { salt, iterations },
            wrapped_name_key,
            content_key,
            enclave,
        };
        cfg.validate()?;
        Ok(cfg)
    }
}

/// Human-readable dump for diagnostics. Only public or protected values
/// are printed.
impl fmt::Display for VaultConfig {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        writeln!(f, "format_version: {}", self.format_version)?;
        writeln!(f, "vault_id:       {}", hex::encode(self.vault_id))?;
        writeln!(f, "mode:           {}", self.mode)?;
        writeln!(f, "kdf:            pbkdf2-hmac-sha256")?;
        writeln!(f, "  salt:         {}", hex::encode(self.kdf.salt))?;
        writeln!(f, "  iterations:   {}", self.kdf.iterations)?;
        writeln!(f, "name_key:       wrapped ({} bytes)", self.wrapped_name_key.len())?;
        match &self.content_key {
            ContentKeyProtection::Wrapped(w) => writeln!(f, "content_key:    wrapped ({} bytes)", w.len())?,
            ContentKeyProtection::Sealed(b) => writeln!(
                f,
                "content_key:    sealed ({} bytes, policy {:?}, isv_svn {})",
                b.len(),
                b.policy(),
                b.isv_svn()
            )?,
        }
        if let Some(d) = &self.enclave {
            writeln!(f, "enclave:")?;
            writeln!(f, "  measurement:  {}", hex::encode(d.measurement))?;
            writeln!(f, "  signer:       {}", hex::encode(d.signer))?;
        }
        Ok(())
    }
}
