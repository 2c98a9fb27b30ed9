use std::fmt;
use std::fs::{self, File};
use std::io::{BufWriter, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;

use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use crate::BenchError;

pub const MIN_TREE_FILE: u64 = 1024;
pub const MAX_TREE_FILE: u64 = 8 << 20;
/// Default size of the single-file workload.
pub const DEFAULT_SINGLE_BYTES: u64 = 256 << 20;

#[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
pub enum WorkloadKind {
    Single,
    Tree,
}

impl WorkloadKind {
    pub fn as_str(self) -> &'static str {
        match self {
            WorkloadKind::Single => "SINGLE",
            WorkloadKind::Tree => "TREE",
        }
    }
}

impl fmt::Display for WorkloadKind {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.as_str())
    }
}

impl FromStr for WorkloadKind {
    type Err = BenchError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_uppercase().as_str() {
            "SINGLE" => Ok(WorkloadKind::Single),
            "TREE" => Ok(WorkloadKind::Tree),
            _ => Err(BenchError::InvalidSpec(format!("unknown workload {s:?}"))),
        }
    }
}

/// A reproducible corpus description.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Workload {
    pub kind: WorkloadKind,
    pub total_bytes: u64,
    /// TREE only. `None` keeps drawing sizes until the total is reached.
    pub file_count: Option<usize>,
    pub seed: u64,
}

impl Workload {
    pub fn single(total_bytes: u64, seed: u64) -> Self {
        Workload { kind: WorkloadKind::Single, total_bytes, file_count: None, seed }
    }

    pub fn tree(total_bytes: u64, file_count: Option<usize>, seed: u64) -> Self {
        Workload { kind: WorkloadKind::Tree, total_bytes, file_count, seed }
    }

    /// File sizes in generation order; they sum to `total_bytes` exactly.
    pub fn file_sizes(&self) -> Result<Vec<u64>, BenchError> {
        if self.total_bytes == 0 {
            return Err(BenchError::InvalidSpec("workload of zero bytes".into()));
        }
        match self.kind {
            WorkloadKind::Single => Ok(vec![self.total_bytes]),
            WorkloadKind::Tree => tree_sizes(self.total_bytes, self.file_count, self.seed),
        }
    }
}

fn log_uniform(rng: &mut impl Rng) -> f64 {
    let (lo, hi) = ((MIN_TREE_FILE as f64).ln(), (MAX_TREE_FILE as f64).ln());
    (lo + rng.random::<f64>() * (hi - lo)).exp()
}

fn tree_sizes(total: u64, count: Option<usize>, seed: u64) -> Result<Vec<u64>, BenchError> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0x7472_6565);
    let mut sizes = Vec::new();
    match count {
        Some(0) => return Err(BenchError::InvalidSpec("tree workload with zero files".into())),
        Some(n) if n as u64 > total => {
            return Err(BenchError::InvalidSpec(format!("{n} files cannot share {total} bytes")))
        }
        Some(n) => {
            // draw shapes from the distribution, then scale them onto the requested total
            let draws: Vec<f64> = (0..n).map(|_| log_uniform(&mut rng)).collect();
            let scale = total as f64 / draws.iter().sum::<f64>();
            sizes.extend(draws.iter().map(|d| ((d * scale) as u64).max(1)));
        }
        None => {
            let mut sum = 0u64;
            while sum < total {
                let s = (log_uniform(&mut rng) as u64).min(total - sum);
                sizes.push(s);
                sum += s;
            }
        }
    }
    // settle rounding on the largest file so the sum is exact
    let sum: u64 = sizes.iter().sum();
    let largest = sizes.iter().enumerate().max_by_key(|(_, s)| **s).map(|(i, _)| i).unwrap();
    sizes[largest] = (sizes[largest] + total).checked_sub(sum).filter(|s| *s > 0).unwrap_or(1);
    Ok(sizes)
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ManifestEntry {
    /// Path relative to the corpus root, `/`-separated.
    pub path: String,
    pub size: u64,
    pub digest: [u8; 32],
}

#[derive(Clone, Debug, PartialEq, Eq)]
pub struct Manifest {
    pub root: PathBuf,
    pub kind: WorkloadKind,
    pub entries: Vec<ManifestEntry>,
}

impl Manifest {
    pub fn total_bytes(&self) -> u64 {
        self.entries.iter().map(|e| e.size).sum()
    }

    pub fn source(&self, entry: &ManifestEntry) -> PathBuf {
        self.root.join(&entry.path)
    }
}

fn relative_path(kind: WorkloadKind, index: usize) -> String {
    match kind {
        WorkloadKind::Single => "single.bin".into(),
        WorkloadKind::Tree => format!("d{:02}/f{index:05}.bin", index / 16),
    }
}

/// Writes the corpus under `staging` and returns its manifest. The same
/// workload always produces the same bytes.
pub fn generate_workload(spec: &Workload, staging: &Path) -> Result<Manifest, BenchError> {
    let sizes = spec.file_sizes()?;
    let mut entries = Vec::with_capacity(sizes.len());
    let mut buf = vec![0u8; 1 << 20];
    for (i, size) in sizes.into_iter().enumerate() {
        let path = relative_path(spec.kind, i);
        let full = staging.join(&path);
        fs::create_dir_all(full.parent().unwrap())?;
        let mut rng = ChaCha8Rng::seed_from_u64(spec.seed.wrapping_add(i as u64).wrapping_mul(0x9E37_79B9_7F4A_7C15));
        let mut out = BufWriter::new(File::create(&full)?);
        let mut hasher = Sha256::new();
        let mut left = size;
        while left > 0 {
            let n = left.min(buf.len() as u64) as usize;
            rng.fill_bytes(&mut buf[..n]);
            hasher.update(&buf[..n]);
            out.write_all(&buf[..n])?;
            left -= n as u64;
        }
        out.into_inner().map_err(|e| e.into_error())?;
        entries.push(ManifestEntry { path, size, digest: hasher.finalize().into() });
    }
    log::debug!("generated {} files under {}", entries.len(), staging.display());
    Ok(Manifest { root: staging.to_path_buf(), kind: spec.kind, entries })
}
