use aes::Aes256;
use aes_gcm::aead::{AeadInOut, KeyInit};
use aes_gcm::{Aes128Gcm, Nonce, Tag};
use cmac::{Cmac, Mac};
use rand::RngCore;
use zeroize::{Zeroize, ZeroizeOnDrop};

use super::blob::{HeaderFields, SealedBlob, SEALED_HEADER_LEN};
use super::{EnclaveIdentity, PlatformIdentity, SealingPolicy, TeeError};

const SEAL_KEY_LABEL: &[u8] = b"SEALKEYv1";

/// Largest payload whose total blob length still fits the u32 length field.
pub const MAX_SEAL_PAYLOAD: usize = (u32::MAX as usize) - SEALED_HEADER_LEN;

/// 128-bit key derived on demand; never stored or serialized.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct SealingKey([u8; 16]);

impl SealingKey {
    pub fn as_bytes(&self) -> &[u8; 16] {
        &self.0
    }
}

impl std::fmt::Debug for SealingKey {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("SealingKey(..)")
    }
}

/// Serialized key request, in derivation order.
fn key_request(
    enclave: &EnclaveIdentity,
    policy: SealingPolicy,
    key_id: &[u8; 32],
    isv_svn: u16,
    cpu_svn: &[u8; 16],
) -> Vec<u8> {
    let mut msg = Vec::with_capacity(SEAL_KEY_LABEL.len() + 2 + 32 + 2 + 16 + 34);
    msg.extend_from_slice(SEAL_KEY_LABEL);
    msg.extend_from_slice(&policy.code().to_le_bytes());
    msg.extend_from_slice(key_id);
    msg.extend_from_slice(&isv_svn.to_le_bytes());
    msg.extend_from_slice(cpu_svn);
    match policy {
        SealingPolicy::MrEnclave => msg.extend_from_slice(&enclave.measurement),
        SealingPolicy::MrSigner => {
            msg.extend_from_slice(&enclave.signer);
            msg.extend_from_slice(&enclave.product_id.to_le_bytes());
        }
    }
    msg
}

pub(crate) fn cmac_aes256(key: &[u8; 32], msg: &[u8]) -> [u8; 16] {
    let mut mac = <Cmac<Aes256> as KeyInit>::new_from_slice(key).expect("32-byte key");
    mac.update(msg);
    mac.finalize().into_bytes().into()
}

/// Derives the sealing key for a request. An enclave may ask for keys of
/// its own security version or older ones, never newer.
pub fn derive_sealing_key(
    platform: &PlatformIdentity,
    enclave: &EnclaveIdentity,
    policy: SealingPolicy,
    key_id: &[u8; 32],
    isv_svn_request: u16,
    cpu_svn_request: &[u8; 16],
) -> Result<SealingKey, TeeError> {
    if isv_svn_request > enclave.isv_svn {
        return Err(TeeError::SvnViolation {
            requested: isv_svn_request,
            available: enclave.isv_svn,
        });
    }
    let mut msg = key_request(enclave, policy, key_id, isv_svn_request, cpu_svn_request);
    let key = SealingKey(cmac_aes256(platform.root_key(), &msg));
    msg.zeroize();
    Ok(key)
}

fn full_aad(blob: &SealedBlob, aad: &[u8]) -> Vec<u8> {
    let mut out = Vec::with_capacity(blob.aad_prefix().len() + aad.len());
    out.extend_from_slice(blob.aad_prefix());
    out.extend_from_slice(aad);
    out
}

/// Seals `payload` for `enclave` on `platform`. `aad` is authenticated but
/// not stored; the same bytes must be supplied to [`unseal`].
pub fn seal(
    platform: &PlatformIdentity,
    enclave: &EnclaveIdentity,
    policy: SealingPolicy,
    payload: &[u8],
    aad: &[u8],
) -> Result<SealedBlob, TeeError> {
    if payload.len() >= MAX_SEAL_PAYLOAD {
        return Err(TeeError::PayloadTooLarge(payload.len()));
    }
    let mut rng = rand::rng();
    let mut key_id = [0u8; 32];
    let mut iv = [0u8; 12];
    rng.fill_bytes(&mut key_id);
    rng.fill_bytes(&mut iv);

    let key = derive_sealing_key(platform, enclave, policy, &key_id, enclave.isv_svn, platform.cpu_svn())?;
    let mut blob = SealedBlob::with_header(&HeaderFields {
        policy,
        isv_svn: enclave.isv_svn,
        cpu_svn: platform.cpu_svn(),
        key_id: &key_id,
        measurement: &enclave.measurement,
        signer: &enclave.signer,
        product_id: enclave.product_id,
        payload_len: payload.len() as u32,
    });
    blob.set_iv(&iv);
    let associated = full_aad(&blob, aad);

    let cipher = Aes128Gcm::new_from_slice(key.as_bytes()).expect("16-byte key");
    let nonce = Nonce::from(iv);
    let body = blob.ciphertext_mut();
    body.copy_from_slice(payload);
    let tag = cipher
        .encrypt_inout_detached(&nonce, &associated, body.into())
        .map_err(|_| TeeError::PayloadTooLarge(payload.len()))?;
    blob.set_tag(&tag);
    Ok(blob)
}

/// Recovers the payload of `blob`, re-deriving the key from the blob's key
/// request and the *caller's* identity. Any identity, platform, AAD or
/// content mismatch surfaces as [`TeeError::AuthenticationFailure`].
pub fn unseal(
    platform: &PlatformIdentity,
    enclave: &EnclaveIdentity,
    blob: &SealedBlob,
    aad: &[u8],
) -> Result<Vec<u8>, TeeError> {
    let key = derive_sealing_key(
        platform,
        enclave,
        blob.policy(),
        blob.key_id(),
        blob.isv_svn(),
        blob.cpu_svn(),
    )?;
    let associated = full_aad(blob, aad);
    let cipher = Aes128Gcm::new_from_slice(key.as_bytes()).expect("16-byte key");
    let nonce = Nonce::from(*blob.iv());
    let tag = Tag::from(*blob.tag());
    let mut out = blob.ciphertext().to_vec();
    cipher
        .decrypt_inout_detached(&nonce, &associated, out.as_mut_slice().into(), &tag)
        .map_err(|_| {
            out.zeroize();
            TeeError::AuthenticationFailure
        })?;
    Ok(out)
}
