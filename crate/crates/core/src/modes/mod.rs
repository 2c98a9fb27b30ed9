//! Crypto modes: the pluggable layer that turns cleartext blocks, keys and
//! file names into their stored form.
//!
//! Two modes exist. [`ModeId::V1`] encrypts blocks with AES-256-GCM under a
//! password-protected key. [`ModeId::Sealed`] hands every block to an
//! [`EnclaveSession`], which seals it under a platform-bound key. File
//! names are always encrypted with the password-derived name key, in both
//! modes, because a sealed name would not fit in a directory entry.

mod block;
mod kdf;
mod names;
mod session;

use std::fmt;
use std::str::FromStr;

pub use block::{
    block_aad, decrypt_block, encrypt_block, BlockKeys, BLOCK_SIZE, SEALED_BLOCK_OVERHEAD,
    V1_BLOCK_OVERHEAD,
};
pub use kdf::{
    derive_kek, unwrap_key, wrap_key, Kek, MasterKeys, DEFAULT_KDF_ITERATIONS, WRAPPED_KEY_LEN,
};
pub use names::{
    decrypt_filename, encrypt_filename, encoded_name_len, validate_name, ENCRYPTED_NAME_SUFFIX,
    MAX_NAME_BYTES,
};
pub use session::{
    destroy_enclave, init_enclave, EnclaveSession, DEFAULT_ENCLAVE_ISV_SVN,
    DEFAULT_ENCLAVE_PRODUCT_ID,
};

use crate::tee::TeeError;

#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("password must not be empty")]
    EmptyPassword,
    #[error("iteration count must be at least 1")]
    InvalidIterations,
    #[error("authentication failed")]
    AuthenticationFailure,
    #[error("malformed block: {0}")]
    MalformedBlock(&'static str),
    #[error("block of {0} bytes exceeds the block size")]
    BlockTooLarge(usize),
    #[error("empty block")]
    EmptyBlock,
    #[error("enclave session has been destroyed")]
    SessionDestroyed,
    #[error("enclave session is not initialized")]
    SessionNotInitialized,
    #[error("enclave session is already initialized")]
    AlreadyInitialized,
    #[error("enclave session is already destroyed")]
    AlreadyDestroyed,
    #[error("name of {0} bytes exceeds the limit")]
    NameTooLong(usize),
    #[error("invalid name: {0}")]
    InvalidName(&'static str),
    #[error("malformed encrypted name: {0}")]
    MalformedName(&'static str),
    #[error(transparent)]
    Tee(TeeError),
}

impl From<TeeError> for CryptoError {
    fn from(e: TeeError) -> Self {
        match e {
            TeeError::AuthenticationFailure => CryptoError::AuthenticationFailure,
            TeeError::MalformedBlob(why) => CryptoError::MalformedBlock(why),
            other => CryptoError::Tee(other),
        }
    }
}

/// Crypto mode of a vault.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub enum ModeId {
    V1,
    Sealed,
}

impl ModeId {
    pub fn code(self) -> u8 {
        match self {
            ModeId::V1 => 1,
            ModeId::Sealed => 2,
        }
    }

    pub fn from_code(code: u8) -> Option<Self> {
        match code {
            1 => Some(ModeId::V1),
            2 => Some(ModeId::Sealed),
            _ => None,
        }
    }

    /// Stored bytes added to every cleartext block.
    pub fn block_overhead(self) -> usize {
        match self {
            ModeId::V1 => V1_BLOCK_OVERHEAD,
            ModeId::Sealed => SEALED_BLOCK_OVERHEAD,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            ModeId::V1 => "v1",
            ModeId::Sealed => "sealed",
        }
    }
}

impl fmt::Display for ModeId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for ModeId {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "v1" => Ok(ModeId::V1),
            "sealed" | "sgx" => Ok(ModeId::Sealed),
            other => Err(format!("unknown mode '{other}' (expected v1 or sealed)")),
        }
    }
}
