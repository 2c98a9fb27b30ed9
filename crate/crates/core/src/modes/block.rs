use aes_gcm::aead::{AeadInOut, KeyInit};
use aes_gcm::{Aes256Gcm, Nonce, Tag};
use rand::RngCore;

use crate::tee::{SealedBlob, SEALED_HEADER_LEN};

use super::{CryptoError, EnclaveSession, ModeId};

/// Cleartext bytes per block; only the last block of a file may be shorter.
pub const BLOCK_SIZE: usize = 32768;
/// IV 12 + tag 16.
pub const V1_BLOCK_OVERHEAD: usize = 28;
pub const SEALED_BLOCK_OVERHEAD: usize = SEALED_HEADER_LEN;

/// Key material for one file's blocks.
#[derive(Clone, Copy)]
pub enum BlockKeys<'a> {
    /// AES-256-GCM under the file's content key.
    V1 { content_key: &'a [u8; 32] },
    /// Sealed by the enclave. The file key is bound into the associated
    /// data so a block only opens together with its file header.
    Sealed { session: &'a EnclaveSession, file_key: &'a [u8; 32] },
}

impl BlockKeys<'_> {
    pub fn mode(&self) -> ModeId {
        match self {
            BlockKeys::V1 { .. } => ModeId::V1,
            BlockKeys::Sealed { .. } => ModeId::Sealed,
        }
    }
}

/// file_id (16) || block index (u64 big-endian)
pub fn block_aad(file_id: &[u8; 16], index: u64) -> [u8; 24] {
    let mut aad = [0u8; 24];
    aad[..16].copy_from_slice(file_id);
    aad[16..].copy_from_slice(&index.to_be_bytes());
    aad
}

fn sealed_aad(file_id: &[u8; 16], index: u64, file_key: &[u8; 32]) -> [u8; 56] {
    let mut aad = [0u8; 56];
    aad[..24].copy_from_slice(&block_aad(file_id, index));
    aad[24..].copy_from_slice(file_key);
    aad
}

pub fn encrypt_block(
    keys: &BlockKeys<'_>,
    file_id: &[u8; 16],
    index: u64,
    cleartext: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    if cleartext.is_empty() {
        return Err(CryptoError::EmptyBlock);
    }
    if cleartext.len() > BLOCK_SIZE {
        return Err(CryptoError::BlockTooLarge(cleartext.len()));
    }
    match *keys {
        BlockKeys::V1 { content_key } => {
            let mut iv = [0u8; 12];
            rand::rng().fill_bytes(&mut iv);
            let cipher = Aes256Gcm::new_from_slice(content_key).expect("32-byte key");
            let mut out = Vec::with_capacity(cleartext.len() + V1_BLOCK_OVERHEAD);
            out.extend_from_slice(&iv);
            out.extend_from_slice(cleartext);
            let tag = cipher
                .encrypt_inout_detached(&Nonce::from(iv), &block_aad(file_id, index), (&mut out[12..]).into())
                .expect("block within GCM limits");
            out.extend_from_slice(&tag);
            Ok(out)
        }
        BlockKeys::Sealed { session, file_key } => {
            let blob = session.seal(cleartext, &sealed_aad(file_id, index, file_key))?;
            Ok(blob.into_bytes())
        }
    }
}

pub fn decrypt_block(
    keys: &BlockKeys<'_>,
    file_id: &[u8; 16],
    index: u64,
    block: &[u8],
) -> Result<Vec<u8>, CryptoError> {
    match *keys {
        BlockKeys::V1 { content_key } => {
            if block.len() <= V1_BLOCK_OVERHEAD {
                return Err(CryptoError::MalformedBlock("shorter than block overhead"));
            }
            if block.len() > V1_BLOCK_OVERHEAD + BLOCK_SIZE {
                return Err(CryptoError::MalformedBlock("longer than a full block"));
            }
            let iv: [u8; 12] = block[..12].try_into().unwrap();
            let split = block.len() - 16;
            let tag: [u8; 16] = block[split..].try_into().unwrap();
            let mut out = block[12..split].to_vec();
            let cipher = Aes256Gcm::new_from_slice(content_key).expect("32-byte key");
            cipher
                .decrypt_inout_detached(
                    &Nonce::from(iv),
                    &block_aad(file_id, index),
                    out.as_mut_slice().into(),
                    &Tag::from(tag),
                )
                .map_err(|_| CryptoError::AuthenticationFailure)?;
            Ok(out)
        }
        BlockKeys::Sealed { session, file_key } => {
            let blob = SealedBlob::parse(block)?;
            if blob.payload_len() == 0 || blob.payload_len() > BLOCK_SIZE {
                return Err(CryptoError::MalformedBlock("sealed payload outside block bounds"));
            }
            session.unseal(&blob, &sealed_aad(file_id, index, file_key))
        }
    }
}
