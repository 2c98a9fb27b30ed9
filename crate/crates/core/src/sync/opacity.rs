use std::collections::BTreeMap;

use rustc_hash::FxHashMap;

use super::{RemoteStore, SyncError};

/// Shortest cleartext run the scan reports.
pub const MIN_LEAK_LEN: usize = 8;
/// Corpus windows held in memory per pass.
const WINDOW_BUDGET: usize = 1 << 23;
const MAX_PASSES: u64 = 1 << 10;

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct OpacityFinding {
    pub key: String,
    /// The match is in the object key rather than its bytes.
    pub in_key: bool,
    /// Offset of the first match in the key or object.
    pub offset: u64,
    /// Index of the corpus sample that leaked.
    pub sample: usize,
}

#[derive(Clone, Debug, Default, PartialEq, Eq)]
pub struct OpacityReport {
    pub findings: Vec<OpacityFinding>,
    pub objects_scanned: usize,
    pub bytes_scanned: u64,
}

impl OpacityReport {
    pub fn is_clean(&self) -> bool {
        self.findings.is_empty()
    }
}

fn window(bytes: &[u8], at: usize) -> u64 {
    u64::from_le_bytes(bytes[at..at + MIN_LEAK_LEN].try_into().unwrap())
}

fn partition_of(w: u64, parts: u64) -> u64 {
    (w.wrapping_mul(0x9E37_79B9_7F4A_7C15) >> 32) % parts
}

type Hits = BTreeMap<(String, bool, usize), u64>;

/// Searches every remote key and object for any run of at least
/// [`MIN_LEAK_LEN`] bytes that also occurs in a corpus sample.
///
/// Every 8-byte window of the corpus is indexed, so the scan is exact.
/// Large corpora are split by window hash into several passes, each of
/// which re-reads the remote.
pub fn verify_remote_opacity<S: AsRef<[u8]>>(
    store: &dyn RemoteStore,
    corpus: &[S],
) -> Result<OpacityReport, SyncError> {
    scan_with_budget(store, corpus, WINDOW_BUDGET)
}

fn scan_with_budget<S: AsRef<[u8]>>(
    store: &dyn RemoteStore,
    corpus: &[S],
    budget: usize,
) -> Result<OpacityReport, SyncError> {
    let objects = store.list("")?;
    let mut parts = 1u64;
    'restart: loop {
        let mut hits = Hits::new();
        let mut report = OpacityReport {
            objects_scanned: objects.len(),
            bytes_scanned: objects.iter().map(|o| o.size).sum(),
            ..Default::default()
        };
        #[allow(clippy::mut_range_bound)]
        for part in 0..parts {
            let mut index: FxHashMap<u64, u32> = FxHashMap::default();
            for (i, sample) in corpus.iter().enumerate() {
                let sample = sample.as_ref();
                for at in 0..sample.len().saturating_sub(MIN_LEAK_LEN - 1) {
                    let w = window(sample, at);
                    if partition_of(w, parts) == part {
                        index.entry(w).or_insert(i as u32);
                    }
                }
                if index.len() > budget && parts < MAX_PASSES {
                    parts *= 2;
                    log::debug!("opacity scan: corpus too large, retrying with {parts} passes");
                    continue 'restart;
                }
            }
            if index.is_empty() {
                continue;
            }
            let mut scan = |key: &str, in_key: bool, bytes: &[u8]| {
                for at in 0..bytes.len().saturating_sub(MIN_LEAK_LEN - 1) {
                    let w = window(bytes, at);
                    if let Some(&sample) = index.get(&w) {
                        let first = hits.entry((key.to_owned(), in_key, sample as usize)).or_insert(at as u64);
                        *first = (*first).min(at as u64);
                    }
                }
            };
            for object in &objects {
                scan(&object.key, true, object.key.as_bytes());
                let (bytes, _) = store.get_object(&object.key)?;
                scan(&object.key, false, &bytes);
            }
        }
        report.findings = hits
            .into_iter()
            .map(|((key, in_key, sample), offset)| OpacityFinding { key, in_key, offset, sample })
            .collect();
        return Ok(report);
    }
}
