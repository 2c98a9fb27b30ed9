//! Stored file objects: a fixed 640-byte header followed by the encrypted
//! blocks in index order.
//!
//! ```text
//! file_id 16 | protected file key (v1: 60, sealed: 592) | zero padding to 640
//! block 0 | block 1 | ... (each cleartext block is 32768 bytes, the last may be shorter)
//! ```
//!
//! The file key is protected with the cleartext length in its associated
//! data. The header is written last, once the length is known, so a
//! reader that sees a file cut at a block boundary fails to open the key.

use std::io::{self, Read, Seek, SeekFrom, Write};

use zeroize::Zeroizing;

use crate::modes::{
    decrypt_block, encrypt_block, unwrap_key, wrap_key, BlockKeys, CryptoError, EnclaveSession, Kek, ModeId,
    BLOCK_SIZE,
};
use crate::tee::SealedBlob;

use super::VaultError;

pub const FILE_HEADER_LEN: usize = 640;
const FILE_KEY_LABEL: &[u8] = b"sealvault/file-key";

/// Stored size of a file with `cleartext` bytes.
pub fn ciphertext_size(mode: ModeId, cleartext: u64) -> u64 {
    let blocks = cleartext.div_ceil(BLOCK_SIZE as u64);
    FILE_HEADER_LEN as u64 + blocks * mode.block_overhead() as u64 + cleartext
}

/// Inverse of [`ciphertext_size`]; `None` when no cleartext size maps to `stored`.
pub fn cleartext_size(mode: ModeId, stored: u64) -> Option<u64> {
    let body = stored.checked_sub(FILE_HEADER_LEN as u64)?;
    let overhead = mode.block_overhead() as u64;
    let full = BLOCK_SIZE as u64 + overhead;
    let (whole, rest) = (body / full, body % full);
    let cleartext = match rest {
        0 => whole * BLOCK_SIZE as u64,
        r if r > overhead => whole * BLOCK_SIZE as u64 + (r - overhead),
        _ => return None,
    };
    Some(cleartext)
}

/// Master-key material used to protect per-file keys.
#[derive(Clone, Copy)]
pub(crate) enum ContentKeys<'a> {
    V1 { master: &'a [u8; 32] },
    Sealed { session: &'a EnclaveSession, master: &'a [u8; 32] },
}

impl ContentKeys<'_> {
    pub fn mode(&self) -> ModeId {
        match self {
            ContentKeys::V1 { .. } => ModeId::V1,
            ContentKeys::Sealed { .. } => ModeId::Sealed,
        }
    }

    fn block_keys<'k>(&'k self, file_key: &'k [u8; 32]) -> BlockKeys<'k> {
        match *self {
            ContentKeys::V1 { .. } => BlockKeys::V1 { content_key: file_key },
            ContentKeys::Sealed { session, .. } => BlockKeys::Sealed { session, file_key },
        }
    }
}

fn file_key_context(file_id: &[u8; 16], cleartext_len: u64) -> Vec<u8> {
    let mut ctx = Vec::with_capacity(FILE_KEY_LABEL.len() + 24 + 32);
    ctx.extend_from_slice(FILE_KEY_LABEL);
    ctx.extend_from_slice(file_id);
    ctx.extend_from_slice(&cleartext_len.to_le_bytes());
    ctx
}

fn protect_file_key(
    keys: &ContentKeys<'_>,
    file_id: &[u8; 16],
    cleartext_len: u64,
    file_key: &[u8; 32],
) -> Result<Vec<u8>, CryptoError> {
    let mut ctx = file_key_context(file_id, cleartext_len);
    match *keys {
        ContentKeys::V1 { master } => Ok(wrap_key(&Kek::from_key(master), file_key, &ctx).to_vec()),
        ContentKeys::Sealed { session, master } => {
            ctx.extend_from_slice(master);
            Ok(session.seal(file_key, &ctx)?.into_bytes())
        }
    }
}

fn unprotect_file_key(
    keys: &ContentKeys<'_>,
    file_id: &[u8; 16],
    cleartext_len: u64,
    protected: &[u8],
) -> Result<Zeroizing<[u8; 32]>, CryptoError> {
    let mut ctx = file_key_context(file_id, cleartext_len);
    match *keys {
        ContentKeys::V1 { master } => unwrap_key(&Kek::from_key(master), protected, &ctx),
        ContentKeys::Sealed { session, master } => {
            ctx.extend_from_slice(master);
            let blob = SealedBlob::parse(protected)?;
            let key = Zeroizing::new(session.unseal(&blob, &ctx)?);
            let key: [u8; 32] = key
                .as_slice()
                .try_into()
                .map_err(|_| CryptoError::MalformedBlock("sealed file key has wrong length"))?;
            Ok(Zeroizing::new(key))
        }
    }
}

fn protected_key_len(mode: ModeId) -> usize {
    match mode {
        ModeId::V1 => crate::modes::WRAPPED_KEY_LEN,
        ModeId::Sealed => super::config::SEALED_KEY_BLOB_LEN,
    }
}

struct Header {
    file_id: [u8; 16],
    protected: Vec<u8>,
}

fn parse_header(mode: ModeId, bytes: &[u8; FILE_HEADER_LEN]) -> Result<Header, VaultError> {
    let key_end = 16 + protected_key_len(mode);
    if bytes[key_end..].iter().any(|&b| b != 0) {
        return Err(VaultError::MalformedObject("header padding is not zero"));
    }
    Ok(Header { file_id: bytes[..16].try_into().unwrap(), protected: bytes[16..key_end].to_vec() })
}

/// Reads until `buf` is full or EOF; returns the number of bytes read.
fn read_full(src: &mut impl Read, buf: &mut [u8]) -> io::Result<usize> {
    let mut filled = 0;
    while filled < buf.len() {
        match src.read(&mut buf[filled..]) {
            Ok(0) => break,
            Ok(n) => filled += n,
            Err(e) if e.kind() == io::ErrorKind::Interrupted => continue,
            Err(e) => return Err(e),
        }
    }
    Ok(filled)
}

/// Encrypts `src` into `out` (positioned at 0). Returns the cleartext length.
pub(crate) fn write_object<W: Write + Seek>(
    keys: &ContentKeys<'_>,
    file_id: &[u8; 16],
    src: &mut impl Read,
    out: &mut W,
) -> Result<u64, VaultError> {
    let mut file_key = Zeroizing::new([0u8; 32]);
    rand::RngCore::fill_bytes(&mut rand::rng(), file_key.as_mut_slice());
    let block_keys = keys.block_keys(&file_key);

    out.write_all(&[0u8; FILE_HEADER_LEN])?;
    let mut buf = Zeroizing::new(vec![0u8; BLOCK_SIZE]);
    let mut total = 0u64;
    let mut index = 0u64;
    loop {
        let n = read_full(src, &mut buf)?;
        if n == 0 {
            break;
        }
        let block = encrypt_block(&block_keys, file_id, index, &buf[..n])?;
        out.write_all(&block)?;
        total += n as u64;
        index += 1;
        if n < BLOCK_SIZE {
            break;
        }
    }

    let protected = protect_file_key(keys, file_id, total, &file_key)?;
    let mut header = [0u8; FILE_HEADER_LEN];
    header[..16].copy_from_slice(file_id);
    header[16..16 + protected.len()].copy_from_slice(&protected);
    out.seek(SeekFrom::Start(0))?;
    out.write_all(&header)?;
    out.flush()?;
    Ok(total)
}

/// Opened object: header checked, file key recovered.
pub(crate) struct OpenObject<'a> {
    keys: ContentKeys<'a>,
    file_id: [u8; 16],
    file_key: Zeroizing<[u8; 32]>,
    cleartext_len: u64,
}

impl<'a> OpenObject<'a> {
    pub fn open(keys: ContentKeys<'a>, input: &mut impl Read, stored_len: u64) -> Result<Self, VaultError> {
        let mode = keys.mode();
        let cleartext_len =
            cleartext_size(mode, stored_len).ok_or(VaultError::MalformedObject("impossible object size"))?;
        let mut header = [0u8; FILE_HEADER_LEN];
        input.read_exact(&mut header)?;
        let header = parse_header(mode, &header)?;
        let file_key = unprotect_file_key(&keys, &header.file_id, cleartext_len, &header.protected)?;
        Ok(OpenObject { keys, file_id: header.file_id, file_key, cleartext_len })
    }

    fn stored_block_len(&self) -> u64 {
        (BLOCK_SIZE + self.keys.mode().block_overhead()) as u64
    }

    fn block_count(&self) -> u64 {
        self.cleartext_len.div_ceil(BLOCK_SIZE as u64)
    }

    fn stored_len_of_block(&self, index: u64) -> usize {
        let start = index * BLOCK_SIZE as u64;
        let clear = (self.cleartext_len - start).min(BLOCK_SIZE as u64) as usize;
        clear + self.keys.mode().block_overhead()
    }

    fn decrypt(&self, index: u64, stored: &[u8]) -> Result<Vec<u8>, VaultError> {
        let block_keys = self.keys.block_keys(&self.file_key);
        Ok(decrypt_block(&block_keys, &self.file_id, index, stored)?)
    }

    /// Streams every block, in order, into `sink`. `input` must be positioned
    /// right after the header.
    pub fn read_all(&self, input: &mut impl Read, sink: &mut impl Write) -> Result<u64, VaultError> {
        let mut buf = vec![0u8; self.stored_block_len() as usize];
        for index in 0..self.block_count() {
            let want = self.stored_len_of_block(index);
            input.read_exact(&mut buf[..want])?;
            let clear = Zeroizing::new(self.decrypt(index, &buf[..want])?);
            sink.write_all(&clear)?;
        }
        Ok(self.cleartext_len)
    }

    /// Reads `len` cleartext bytes starting at `offset`, touching only the
    /// blocks that overlap the range.
    pub fn read_range<R: Read + Seek>(&self, input: &mut R, offset: u64, len: u64) -> Result<Vec<u8>, VaultError> {
        let end = offset.saturating_add(len).min(self.cleartext_len);
        if offset >= end {
            return Ok(Vec::new());
        }
        let first = offset / BLOCK_SIZE as u64;
        let last = (end - 1) / BLOCK_SIZE as u64;
        let mut out = Vec::with_capacity((end - offset) as usize);
        let mut buf = vec![0u8; self.stored_block_len() as usize];
        input.seek(SeekFrom::Start(FILE_HEADER_LEN as u64 + first * self.stored_block_len()))?;
        for index in first..=last {
            let want = self.stored_len_of_block(index);
            input.read_exact(&mut buf[..want])?;
            let clear = self.decrypt(index, &buf[..want])?;
            let block_start = index * BLOCK_SIZE as u64;
            let lo = offset.saturating_sub(block_start) as usize;
            let hi = ((end - block_start) as usize).min(clear.len());
            out.extend_from_slice(&clear[lo..hi]);
        }
        Ok(out)
    }
}
