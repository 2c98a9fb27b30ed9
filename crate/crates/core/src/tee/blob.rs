use super::{SealingPolicy, TeeError};

/// Fixed header size of every sealed blob. This is the per-block
/// storage overhead of sealed mode.
pub const SEALED_HEADER_LEN: usize = 560;
/// Length of the header prefix that is fed to the AEAD as associated data
/// (everything before the IV and tag).
pub const SEALED_AAD_PREFIX_LEN: usize = 532;
pub const SEAL_MAGIC: [u8; 4] = *b"SSB1";
pub const SEAL_FORMAT_VERSION: u32 = 1;

// Byte offsets, little-endian integers throughout.
const OFF_MAGIC: usize = 0;
const OFF_VERSION: usize = 4;
const OFF_POLICY: usize = 8;
const OFF_ISV_SVN: usize = 10;
const OFF_CPU_SVN: usize = 12;
const OFF_KEY_ID: usize = 28;
const OFF_MEASUREMENT: usize = 60;
const OFF_SIGNER: usize = 92;
const OFF_PRODUCT_ID: usize = 124;
const OFF_RESERVED_A: usize = 126;
const OFF_PAYLOAD_LEN: usize = 128;
const OFF_AAD_LEN: usize = 132;
const OFF_RESERVED_B: usize = 136;
const OFF_IV: usize = 532;
const OFF_TAG: usize = 544;

/// A sealed payload: the 560-byte header followed by the ciphertext.
///
/// The byte layout is the wire format; accessors read straight out of it.
/// Values of this type are always well formed.
#[derive(Clone, PartialEq, Eq)]
pub struct SealedBlob {
    bytes: Vec<u8>,
}

pub(crate) struct HeaderFields<'a> {
    pub policy: SealingPolicy,
    pub isv_svn: u16,
    pub cpu_svn: &'a [u8; 16],
    pub key_id: &'a [u8; 32],
    pub measurement: &'a [u8; 32],
    pub signer: &'a [u8; 32],
    pub product_id: u16,
    pub payload_len: u32,
}

impl SealedBlob {
    /// Lays out a header with IV and tag zeroed, followed by room for
    /// `payload_len` bytes of ciphertext.
    pub(crate) fn with_header(fields: &HeaderFields<'_>) -> Self {
        let mut bytes = vec![0u8; SEALED_HEADER_LEN + fields.payload_len as usize];
        bytes[OFF_MAGIC..OFF_VERSION].copy_from_slice(&SEAL_MAGIC);
        bytes[OFF_VERSION..OFF_POLICY].copy_from_slice(&SEAL_FORMAT_VERSION.to_le_bytes());
        bytes[OFF_POLICY..OFF_ISV_SVN].copy_from_slice(&fields.policy.code().to_le_bytes());
        bytes[OFF_ISV_SVN..OFF_CPU_SVN].copy_from_slice(&fields.isv_svn.to_le_bytes());
        bytes[OFF_CPU_SVN..OFF_KEY_ID].copy_from_slice(fields.cpu_svn);
        bytes[OFF_KEY_ID..OFF_MEASUREMENT].copy_from_slice(fields.key_id);
        bytes[OFF_MEASUREMENT..OFF_SIGNER].copy_from_slice(fields.measurement);
        bytes[OFF_SIGNER..OFF_PRODUCT_ID].copy_from_slice(fields.signer);
        bytes[OFF_PRODUCT_ID..OFF_RESERVED_A].copy_from_slice(&fields.product_id.to_le_bytes());
        bytes[OFF_PAYLOAD_LEN..OFF_AAD_LEN].copy_from_slice(&fields.payload_len.to_le_bytes());
        // aad_len stays 0: caller AAD is authenticated but never stored.
        SealedBlob { bytes }
    }

    /// Validates the layout and takes ownership of the bytes.
    pub fn from_bytes(bytes: Vec<u8>) -> Result<Self, TeeError> {
        Self::validate(&bytes)?;
        Ok(SealedBlob { bytes })
    }

    pub fn parse(bytes: &[u8]) -> Result<Self, TeeError> {
        Self::validate(bytes)?;
        Ok(SealedBlob { bytes: bytes.to_vec() })
    }

    fn validate(bytes: &[u8]) -> Result<(), TeeError> {
        if bytes.len() < SEALED_HEADER_LEN {
            return Err(TeeError::MalformedBlob("shorter than header"));
        }
        if bytes[OFF_MAGIC..OFF_VERSION] != SEAL_MAGIC {
            return Err(TeeError::MalformedBlob("bad magic"));
        }
        if read_u32(bytes, OFF_VERSION) != SEAL_FORMAT_VERSION {
            return Err(TeeError::MalformedBlob("unsupported format version"));
        }
        if SealingPolicy::from_code(read_u16(bytes, OFF_POLICY)).is_none() {
            return Err(TeeError::MalformedBlob("unknown policy"));
        }
        let payload_len = read_u32(bytes, OFF_PAYLOAD_LEN) as usize;
        if bytes.len() != SEALED_HEADER_LEN + payload_len {
            return Err(TeeError::MalformedBlob("length does not match payload_len"));
        }
        if read_u32(bytes, OFF_AAD_LEN) != 0 {
            return Err(TeeError::MalformedBlob("nonzero aad_len"));
        }
        let reserved_zero = bytes[OFF_RESERVED_A..OFF_PAYLOAD_LEN]
            .iter()
            .chain(&bytes[OFF_RESERVED_B..OFF_IV])
            .all(|&b| b == 0);
        if !reserved_zero {
            return Err(TeeError::MalformedBlob("reserved bytes not zero"));
        }
        Ok(())
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.bytes
    }

    pub fn into_bytes(self) -> Vec<u8> {
        self.bytes
    }

    pub fn len(&self) -> usize {
        self.bytes.len()
    }

    /// Never true: a blob is at least a header.
    pub fn is_empty(&self) -> bool {
        false
    }

    pub fn policy(&self) -> SealingPolicy {
        SealingPolicy::from_code(read_u16(&self.bytes, OFF_POLICY)).expect("validated")
    }

    pub fn isv_svn(&self) -> u16 {
        read_u16(&self.bytes, OFF_ISV_SVN)
    }

    pub fn cpu_svn(&self) -> &[u8; 16] {
        self.bytes[OFF_CPU_SVN..OFF_KEY_ID].try_into().unwrap()
    }

    pub fn key_id(&self) -> &[u8; 32] {
        self.bytes[OFF_KEY_ID..OFF_MEASUREMENT].try_into().unwrap()
    }

    /// Measurement of the enclave that sealed the blob.
    pub fn measurement(&self) -> &[u8; 32] {
        self.bytes[OFF_MEASUREMENT..OFF_SIGNER].try_into().unwrap()
    }

    pub fn signer(&self) -> &[u8; 32] {
        self.bytes[OFF_SIGNER..OFF_PRODUCT_ID].try_into().unwrap()
    }

    pub fn product_id(&self) -> u16 {
        read_u16(&self.bytes, OFF_PRODUCT_ID)
    }

    pub fn payload_len(&self) -> usize {
        read_u32(&self.bytes, OFF_PAYLOAD_LEN) as usize
    }

    pub fn iv(&self) -> &[u8; 12] {
        self.bytes[OFF_IV..OFF_TAG].try_into().unwrap()
    }

    pub fn tag(&self) -> &[u8; 16] {
        self.bytes[OFF_TAG..SEALED_HEADER_LEN].try_into().unwrap()
    }

    pub fn ciphertext(&self) -> &[u8] {
        &self.bytes[SEALED_HEADER_LEN..]
    }

    pub(crate) fn aad_prefix(&self) -> &[u8] {
        &self.bytes[..SEALED_AAD_PREFIX_LEN]
    }

    pub(crate) fn set_iv(&mut self, iv: &[u8; 12]) {
        self.bytes[OFF_IV..OFF_TAG].copy_from_slice(iv);
    }

    pub(crate) fn set_tag(&mut self, tag: &[u8]) {
        self.bytes[OFF_TAG..SEALED_HEADER_LEN].copy_from_slice(tag);
    }

    pub(crate) fn ciphertext_mut(&mut self) -> &mut [u8] {
        &mut self.bytes[SEALED_HEADER_LEN..]
    }
}

impl std::fmt::Debug for SealedBlob {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("SealedBlob")
            .field("policy", &self.policy())
            .field("isv_svn", &self.isv_svn())
            .field("payload_len", &self.payload_len())
            .finish_non_exhaustive()
    }
}

fn read_u16(bytes: &[u8], off: usize) -> u16 {
    u16::from_le_bytes([bytes[off], bytes[off + 1]])
}

fn read_u32(bytes: &[u8], off: usize) -> u32 {
    u32::from_le_bytes(bytes[off..off + 4].try_into().unwrap())
}

/// Byte ranges that must be zero in every well-formed blob.
#[doc(hidden)]
pub fn reserved_ranges() -> [std::ops::Range<usize>; 3] {
    [OFF_RESERVED_A..OFF_PAYLOAD_LEN, OFF_AAD_LEN..OFF_RESERVED_B, OFF_RESERVED_B..OFF_IV]
}
