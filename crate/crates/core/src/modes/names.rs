use aes_siv::siv::Aes128Siv;
use aes_siv::KeyInit;
use base64::engine::general_purpose::URL_SAFE_NO_PAD;
use base64::Engine;

use super::CryptoError;

/// Longest cleartext name component, in UTF-8 bytes. Keeps the encoded
/// name plus suffix within a 255-byte directory entry.
pub const MAX_NAME_BYTES: usize = 160;
pub const ENCRYPTED_NAME_SUFFIX: &str = ".sc";

const SIV_TAG_LEN: usize = 16;

/// Length of the encoded form of a `name_len`-byte name, suffix included.
pub const fn encoded_name_len(name_len: usize) -> usize {
    (4 * (name_len + SIV_TAG_LEN)).div_ceil(3) + ENCRYPTED_NAME_SUFFIX.len()
}

pub fn validate_name(name: &str) -> Result<(), CryptoError> {
    if name.is_empty() {
        return Err(CryptoError::InvalidName("empty"));
    }
    if name.len() > MAX_NAME_BYTES {
        return Err(CryptoError::NameTooLong(name.len()));
    }
    if name == "." || name == ".." {
        return Err(CryptoError::InvalidName("dot entry"));
    }
    if name.contains(['/', '\\', '\0']) {
        return Err(CryptoError::InvalidName("contains a path separator or NUL"));
    }
    Ok(())
}

fn siv(name_key: &[u8; 32]) -> Aes128Siv {
    Aes128Siv::new_from_slice(name_key).expect("32-byte SIV key")
}

/// Deterministic AES-SIV encryption of one name component, bound to the
/// id of the directory that contains it.
pub fn encrypt_filename(name_key: &[u8; 32], dir_id: &[u8; 16], name: &str) -> Result<String, CryptoError> {
    validate_name(name)?;
    let sealed = siv(name_key)
        .encrypt([dir_id.as_slice()], name.as_bytes())
        .map_err(|_| CryptoError::InvalidName("cannot encrypt"))?;
    let mut out = URL_SAFE_NO_PAD.encode(sealed);
    out.push_str(ENCRYPTED_NAME_SUFFIX);
    Ok(out)
}

pub fn decrypt_filename(name_key: &[u8; 32], dir_id: &[u8; 16], encoded: &str) -> Result<String, CryptoError> {
    let body = encoded
        .strip_suffix(ENCRYPTED_NAME_SUFFIX)
        .ok_or(CryptoError::MalformedName("missing suffix"))?;
    let raw = URL_SAFE_NO_PAD
        .decode(body)
        .map_err(|_| CryptoError::MalformedName("invalid base64"))?;
    if raw.len() <= SIV_TAG_LEN {
        return Err(CryptoError::MalformedName("too short"));
    }
    let plain = siv(name_key)
        .decrypt([dir_id.as_slice()], &raw)
        .map_err(|_| CryptoError::AuthenticationFailure)?;
    String::from_utf8(plain).map_err(|_| CryptoError::MalformedName("not UTF-8"))
}
