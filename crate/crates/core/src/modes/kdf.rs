use aes_gcm::aead::{AeadInOut, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use rand::RngCore;
use sha2::Sha256;
use zeroize::{Zeroize, ZeroizeOnDrop, Zeroizing};

use super::CryptoError;

pub const DEFAULT_KDF_ITERATIONS: u32 = 600_000;

/// IV 12 | ciphertext 32 | tag 16
pub const WRAPPED_KEY_LEN: usize = 60;

/// Key-encryption key derived from the user's password.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct Kek([u8; 32]);

impl Kek {
    pub fn as_bytes(&self) -> &[u8; 32] {
        &self.0
    }

    /// Uses raw key bytes as a KEK, e.g. a master key protecting per-file keys.
    pub fn from_key(bytes: &[u8; 32]) -> Self {
        Kek(*bytes)
    }
}

impl std::fmt::Debug for Kek {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("Kek(..)")
    }
}

/// PBKDF2-HMAC-SHA-256 with a 32-byte output.
pub fn derive_kek(password: &str, salt: &[u8; 16], iterations: u32) -> Result<Kek, CryptoError> {
    if password.is_empty() {
        return Err(CryptoError::EmptyPassword);
    }
    if iterations == 0 {
        return Err(CryptoError::InvalidIterations);
    }
    let mut out = [0u8; 32];
    pbkdf2::pbkdf2_hmac::<Sha256>(password.as_bytes(), salt, iterations, &mut out);
    Ok(Kek(out))
}

/// The two vault master keys.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct MasterKeys {
    pub content_key: [u8; 32],
    pub name_key: [u8; 32],
}

impl MasterKeys {
    pub fn generate() -> Self {
        let mut rng = rand::rng();
        let mut keys = MasterKeys { content_key: [0; 32], name_key: [0; 32] };
        rng.fill_bytes(&mut keys.content_key);
        rng.fill_bytes(&mut keys.name_key);
        keys
    }
}

impl std::fmt::Debug for MasterKeys {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("MasterKeys(..)")
    }
}

/// AES-256-GCM key wrap with `label` as associated data.
pub fn wrap_key(kek: &Kek, key: &[u8; 32], label: &[u8]) -> [u8; WRAPPED_KEY_LEN] {
    let mut iv = [0u8; 12];
    rand::rng().fill_bytes(&mut iv);
    let cipher = Aes256Gcm::new_from_slice(kek.as_bytes()).expect("32-byte key");
    let mut out = [0u8; WRAPPED_KEY_LEN];
    out[..12].copy_from_slice(&iv);
    out[12..44].copy_from_slice(key);
    let tag = cipher
        .encrypt_inout_detached(&Nonce::from(iv), label, (&mut out[12..44]).into())
        .expect("32-byte message");
    out[44..].copy_from_slice(&tag);
    out
}

pub fn unwrap_key(kek: &Kek, wrapped: &[u8], label: &[u8]) -> Result<Zeroizing<[u8; 32]>, CryptoError> {
    if wrapped.len() != WRAPPED_KEY_LEN {
        return Err(CryptoError::AuthenticationFailure);
    }
    let cipher = Aes256Gcm::new_from_slice(kek.as_bytes()).expect("32-byte key");
    let iv: [u8; 12] = wrapped[..12].try_into().unwrap();
    let tag: [u8; 16] = wrapped[44..].try_into().unwrap();
    let mut key = Zeroizing::new([0u8; 32]);
    key.copy_from_slice(&wrapped[12..44]);
    cipher
        .decrypt_inout_detached(&Nonce::from(iv), label, key.as_mut_slice().into(), &Tag::from(tag))
        .map_err(|_| CryptoError::AuthenticationFailure)?;
    Ok(key)
}
