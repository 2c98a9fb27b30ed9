//! Software model of enclave data sealing and local attestation.
//!
//! An "enclave" here is a module boundary with a measured identity, not a
//! memory-protection boundary. Keys are derived from a per-platform root
//! secret and the caller's identity, the same way the hardware `EGETKEY`
//! instruction binds sealing keys to a CPU and an enclave:
//!
//! * sealing keys are AES-CMAC outputs over a fixed-order key request,
//!   keyed by the platform root secret;
//! * sealed payloads are AES-128-GCM encrypted, with the whole 532-byte
//!   header prefix authenticated as associated data;
//! * reports carry a CMAC that only the target enclave on the same
//!   platform can recompute.
//!
//! All functions are pure apart from the randomness drawn for key ids and
//! IVs, so they can be called concurrently without coordination.

mod blob;
mod report;
mod seal;

use std::fmt;

use hmac::{Hmac, KeyInit, Mac};
use sha2::{Digest, Sha256};
use zeroize::{Zeroize, ZeroizeOnDrop};

pub use blob::{reserved_ranges, SealedBlob, SEALED_AAD_PREFIX_LEN, SEALED_HEADER_LEN, SEAL_FORMAT_VERSION, SEAL_MAGIC};
pub use report::{create_report, verify_report, Report, ReportBody, REPORT_BODY_LEN};
pub use seal::{derive_sealing_key, seal, unseal, SealingKey, MAX_SEAL_PAYLOAD};

/// Errors raised by the sealing simulation.
#[derive(Debug, thiserror::Error, PartialEq, Eq)]
pub enum TeeError {
    #[error("malformed sealed blob: {0}")]
    MalformedBlob(&'static str),
    #[error("security version violation: requested {requested}, enclave is at {available}")]
    SvnViolation { requested: u16, available: u16 },
    #[error("sealed data failed authentication")]
    AuthenticationFailure,
    #[error("payload of {0} bytes is too large to seal")]
    PayloadTooLarge(usize),
}

/// Per-machine identity. `platform_key` plays the role of the fused root
/// sealing secret and never leaves this struct.
#[derive(Clone, PartialEq, Eq, Zeroize, ZeroizeOnDrop)]
pub struct PlatformIdentity {
    platform_key: [u8; 32],
    cpu_svn: [u8; 16],
    platform_id: [u8; 16],
}

const PLATFORM_KEY_LABEL: &[u8] = b"sealvault/platform/root-key";
const PLATFORM_CPU_SVN_LABEL: &[u8] = b"sealvault/platform/cpu-svn";
const PLATFORM_ID_LABEL: &[u8] = b"sealvault/platform/id";

fn keyed_digest(key: &[u8], label: &[u8]) -> [u8; 32] {
    let mut mac = <Hmac<Sha256> as KeyInit>::new_from_slice(key).expect("hmac accepts any key length");
    mac.update(label);
    mac.finalize().into_bytes().into()
}

/// Deterministically builds a simulated platform from a 32-byte seed.
pub fn create_platform(seed: &[u8; 32]) -> PlatformIdentity {
    let platform_key = keyed_digest(seed, PLATFORM_KEY_LABEL);
    let svn = keyed_digest(seed, PLATFORM_CPU_SVN_LABEL);
    let id = keyed_digest(seed, PLATFORM_ID_LABEL);
    let mut cpu_svn = [0u8; 16];
    cpu_svn.copy_from_slice(&svn[..16]);
    let mut platform_id = [0u8; 16];
    platform_id.copy_from_slice(&id[..16]);
    PlatformIdentity { platform_key, cpu_svn, platform_id }
}

impl PlatformIdentity {
    pub fn cpu_svn(&self) -> &[u8; 16] {
        &self.cpu_svn
    }

    pub fn platform_id(&self) -> &[u8; 16] {
        &self.platform_id
    }

    pub(crate) fn root_key(&self) -> &[u8; 32] {
        &self.platform_key
    }

    /// Test-only view of the root secret, for leak scans.
    #[doc(hidden)]
    pub fn root_key_for_leak_scan(&self) -> [u8; 32] {
        self.platform_key
    }
}

impl fmt::Debug for PlatformIdentity {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.debug_struct("PlatformIdentity")
            .field("platform_id", &hex::encode(self.platform_id))
            .field("cpu_svn", &hex::encode(self.cpu_svn))
            .finish_non_exhaustive()
    }
}

/// Measured identity of an enclave.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash)]
pub struct EnclaveIdentity {
    pub measurement: [u8; 32],
    pub signer: [u8; 32],
    pub product_id: u16,
    pub isv_svn: u16,
}

/// Measures an enclave: SHA-256 of the code blob and of the signer identity.
pub fn measure_enclave(
    code_blob: &[u8],
    signer_identity: &[u8],
    product_id: u16,
    isv_svn: u16,
) -> EnclaveIdentity {
    EnclaveIdentity {
        measurement: Sha256::digest(code_blob).into(),
        signer: Sha256::digest(signer_identity).into(),
        product_id,
        isv_svn,
    }
}

/// Which part of the enclave identity a sealing key is bound to.
#[derive(Clone, Copy, Debug, Default, PartialEq, Eq, Hash)]
pub enum SealingPolicy {
    /// Bind to the exact code measurement.
    #[default]
    MrEnclave,
    /// Bind to signer and product id, so later builds from the same
    /// signer can unseal.
    MrSigner,
}

impl SealingPolicy {
    pub fn code(self) -> u16 {
        match self {
            SealingPolicy::MrEnclave => 1,
            SealingPolicy::MrSigner => 2,
        }
    }

    pub fn from_code(code: u16) -> Option<Self> {
        match code {
            1 => Some(SealingPolicy::MrEnclave),
            2 => Some(SealingPolicy::MrSigner),
            _ => None,
        }
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn platform_is_deterministic() {
        let seed = [7u8; 32];
        assert_eq!(create_platform(&seed), create_platform(&seed));
    }

    #[test]
    fn distinct_seeds_give_distinct_root_keys() {
        let a = create_platform(&[1u8; 32]);
        let b = create_platform(&[2u8; 32]);
        assert_ne!(a.root_key(), b.root_key());
        assert_ne!(a.platform_id(), b.platform_id());
    }

    #[test]
    fn zero_seed_platform_matches_hmac_vector() {
        // HMAC-SHA256(key = 32 zero bytes, msg = label), computed with Python's hmac module.
        let p = create_platform(&[0u8; 32]);
        assert_ne!(p.root_key(), &[0u8; 32]);
        assert_eq!(
            hex::encode(p.root_key()),
            "df556014c1bfed4b0d4e90454910d1efaffa63cae915920a9757980a6f5e02ba"
        );
        assert_eq!(hex::encode(p.cpu_svn()), "43937f5425ace1a43c40130eeb014a28");
        assert_eq!(hex::encode(p.platform_id()), "f4da70d216c60d276a4a104d19e41f79");
    }

    #[test]
    fn debug_output_hides_root_key() {
        let p = create_platform(&[3u8; 32]);
        let dbg = format!("{p:?}");
        assert!(!dbg.contains(&hex::encode(p.root_key())));
    }

    #[test]
    fn measurement_of_empty_blob_is_sha256_of_empty_input() {
        let id = measure_enclave(b"", b"", 0, 0);
        assert_eq!(
            hex::encode(id.measurement),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
    }

    #[test]
    fn measurement_is_sensitive_to_single_bit() {
        let code = vec![0x5au8; 4096];
        let mut flipped = code.clone();
        flipped[1234] ^= 0x10;
        let a = measure_enclave(&code, b"signer", 1, 1);
        let b = measure_enclave(&flipped, b"signer", 1, 1);
        assert_ne!(a.measurement, b.measurement);
        assert_eq!(a.signer, b.signer);
        assert_eq!(a, measure_enclave(&code, b"signer", 1, 1));
    }

    #[test]
    fn policy_codes_round_trip() {
        for p in [SealingPolicy::MrEnclave, SealingPolicy::MrSigner] {
            assert_eq!(SealingPolicy::from_code(p.code()), Some(p));
        }
        assert_eq!(SealingPolicy::from_code(0), None);
        assert_eq!(SealingPolicy::from_code(3), None);
    }
}
