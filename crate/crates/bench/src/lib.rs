//! Throughput benchmarks for the sealvault storage modes.
//!
//! A run stages a deterministic corpus, then times copying it into and out
//! of each storage mode. `PLAIN` is a straight file copy and serves as the
//! unencrypted baseline; `V1` and `SEALED` go through a vault of that mode.
//! Every READ is checked against the corpus digests before its record is
//! kept, so a run never reports throughput for corrupted data.

mod workload;

use std::fmt;
use std::fs::{self, File};
use std::io::{self, BufReader, BufWriter, Read, Write};
use std::path::{Path, PathBuf};
use std::str::FromStr;
use std::sync::atomic::{AtomicUsize, Ordering};
use std::sync::Mutex;
use std::time::Instant;

use sealvault_core::vault::{create_vault_with, unlock_vault, VaultHandle, VaultOptions};
use sealvault_core::{create_platform, ModeId, PlatformIdentity, VaultError};
use sha2::{Digest, Sha256};

pub use workload::{
    generate_workload, Manifest, ManifestEntry, Workload, WorkloadKind, DEFAULT_SINGLE_BYTES, MAX_TREE_FILE,
    MIN_TREE_FILE,
};

pub const CSV_HEADER: &str = "mode,workload,direction,rep,bytes,seconds,mbps";
pub const DEFAULT_REPETITIONS: usize = 10;
/// Iteration count for bench vaults; unlocking is outside the timed region.
pub const BENCH_KDF_ITERATIONS: u32 = 10_000;

const BENCH_PASSWORD: &str = "sealvault-bench";

#[derive(Debug, thiserror::Error)]
pub enum BenchError {
    #[error("invalid bench specification: {0}")]
    InvalidSpec(String),
    #[error("storage full")]
    StorageFull,
    #[error("{mode} {workload}: {path} does not match the corpus digest")]
    VerificationFailure { mode: StorageMode, workload: WorkloadKind, path: String },
    #[error("no records to summarize")]
    EmptyInput,
    #[error(transparent)]
    Vault(VaultError),
    #[error(transparent)]
    Io(io::Error),
    #[error(transparent)]
    Csv(#[from] csv::Error),
}

impl From<io::Error> for BenchError {
    fn from(e: io::Error) -> Self {
        if e.kind() == io::ErrorKind::StorageFull || e.raw_os_error() == Some(28) {
            BenchError::StorageFull
        } else {
            BenchError::Io(e)
        }
    }
}

impl From<VaultError> for BenchError {
    fn from(e: VaultError) -> Self {
        match e {
            VaultError::StorageFull => BenchError::StorageFull,
            other => BenchError::Vault(other),
        }
    }
}

macro_rules! labelled_enum {
    ($name:ident { $($variant:ident => $label:literal),+ $(,)? }) => {
        #[derive(Clone, Copy, Debug, PartialEq, Eq, Hash, PartialOrd, Ord)]
        pub enum $name {
            $($variant),+
        }

        impl $name {
            pub const ALL: &'static [$name] = &[$($name::$variant),+];

            pub fn as_str(self) -> &'static str {
                match self {
                    $($name::$variant => $label),+
                }
            }
        }

        impl fmt::Display for $name {
            fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
                f.write_str(self.as_str())
            }
        }

        impl FromStr for $name {
            type Err = BenchError;

            fn from_str(s: &str) -> Result<Self, Self::Err> {
                $name::ALL
                    .iter()
                    .copied()
                    .find(|v| v.as_str().eq_ignore_ascii_case(s))
                    .ok_or_else(|| BenchError::InvalidSpec(format!("unknown {} {s:?}", stringify!($name))))
            }
        }
    };
}

labelled_enum!(StorageMode { Plain => "PLAIN", V1 => "V1", Sealed => "SEALED" });
labelled_enum!(Direction { Read => "READ", Write => "WRITE" });

impl StorageMode {
    fn vault_mode(self) -> Option<ModeId> {
        match self {
            StorageMode::Plain => None,
            StorageMode::V1 => Some(ModeId::V1),
            StorageMode::Sealed => Some(ModeId::Sealed),
        }
    }
}

/// One timed transfer of a whole workload.
#[derive(Clone, Debug, PartialEq)]
pub struct BenchRecord {
    pub mode: StorageMode,
    pub workload: WorkloadKind,
    pub direction: Direction,
    pub rep: usize,
    pub bytes: u64,
    pub seconds: f64,
    pub mbps: f64,
}

impl BenchRecord {
    pub fn new(
        mode: StorageMode,
        workload: WorkloadKind,
        direction: Direction,
        rep: usize,
        bytes: u64,
        seconds: f64,
    ) -> Self {
        // a zero reading only happens below timer resolution
        let seconds = seconds.max(1e-9);
        BenchRecord { mode, workload, direction, rep, bytes, seconds, mbps: bytes as f64 / 1e6 / seconds }
    }
}

#[derive(Clone, Debug)]
pub struct BenchConfig {
    pub modes: Vec<StorageMode>,
    pub workloads: Vec<Workload>,
    pub directions: Vec<Direction>,
    pub repetitions: usize,
    /// Where the corpus is staged; WRITE transfers read from here.
    pub source_dir: PathBuf,
    /// Where stores and per-repetition namespaces are created.
    pub target_dir: PathBuf,
    pub platform_seed: [u8; 32],
    pub kdf_iterations: u32,
    /// Worker threads per transfer; `None` copies files one at a time.
    pub parallel: Option<usize>,
}

impl BenchConfig {
    pub fn new(work_dir: &Path) -> Self {
        BenchConfig {
            modes: StorageMode::ALL.to_vec(),
            workloads: vec![Workload::single(DEFAULT_SINGLE_BYTES, 1), Workload::tree(DEFAULT_SINGLE_BYTES, None, 2)],
            directions: Direction::ALL.to_vec(),
            repetitions: DEFAULT_REPETITIONS,
            source_dir: work_dir.join("source"),
            target_dir: work_dir.join("target"),
            platform_seed: [0x5b; 32],
            kdf_iterations: BENCH_KDF_ITERATIONS,
            parallel: None,
        }
    }

    fn validate(&self) -> Result<(), BenchError> {
        if self.modes.is_empty() || self.workloads.is_empty() || self.directions.is_empty() {
            return Err(BenchError::InvalidSpec("modes, workloads and directions must be non-empty".into()));
        }
        if self.repetitions == 0 {
            return Err(BenchError::InvalidSpec("at least one repetition is required".into()));
        }
        if self.parallel == Some(0) {
            return Err(BenchError::InvalidSpec("parallel worker count must be positive".into()));
        }
        for w in &self.workloads {
            w.file_sizes()?;
        }
        Ok(())
    }
}

/// Where a mode keeps data: a plain directory or an unlocked vault.
enum Store {
    Plain(PathBuf),
    Vault(Box<VaultHandle>),
}

impl Store {
    fn create(mode: StorageMode, root: &Path, config: &BenchConfig, platform: &PlatformIdentity) -> Result<Self, BenchError> {
        match mode.vault_mode() {
            None => {
                fs::create_dir_all(root)?;
                Ok(Store::Plain(root.to_path_buf()))
            }
            Some(vault_mode) => {
                let options = VaultOptions { kdf_iterations: config.kdf_iterations, ..VaultOptions::default() };
                create_vault_with(root, BENCH_PASSWORD, vault_mode, Some(platform), &options)?;
                Ok(Store::Vault(Box::new(unlock_vault(root, BENCH_PASSWORD, Some(platform))?)))
            }
        }
    }

    fn put(&self, manifest: &Manifest, entry: &ManifestEntry) -> Result<(), BenchError> {
        let source = manifest.source(entry);
        match self {
            Store::Plain(root) => {
                let target = root.join(&entry.path);
                fs::create_dir_all(target.parent().unwrap())?;
                fs::copy(&source, &target)?;
            }
            Store::Vault(vault) => {
                if let Some((parent, _)) = entry.path.rsplit_once('/') {
                    vault.create_dir_all(parent)?;
                }
                let mut input = BufReader::with_capacity(1 << 20, File::open(&source)?);
                vault.write_file(&entry.path, &mut input)?;
            }
        }
        Ok(())
    }

    fn get(&self, entry: &ManifestEntry, out_root: &Path) -> Result<(), BenchError> {
        let target = out_root.join(&entry.path);
        fs::create_dir_all(target.parent().unwrap())?;
        match self {
            Store::Plain(root) => {
                fs::copy(root.join(&entry.path), &target)?;
            }
            Store::Vault(vault) => {
                let mut out = BufWriter::with_capacity(1 << 20, File::create(&target)?);
                vault.read_file_to(&entry.path, &mut out)?;
                out.into_inner().map_err(|e| e.into_error())?;
            }
        }
        Ok(())
    }
}

fn for_each_entry(
    manifest: &Manifest,
    parallel: Option<usize>,
    op: impl Fn(&ManifestEntry) -> Result<(), BenchError> + Sync,
) -> Result<(), BenchError> {
    let workers = parallel.unwrap_or(1).min(manifest.entries.len()).max(1);
    if workers == 1 {
        return manifest.entries.iter().try_for_each(op);
    }
    let next = AtomicUsize::new(0);
    let failure = Mutex::new(None);
    std::thread::scope(|scope| {
        for _ in 0..workers {
            scope.spawn(|| loop {
                if failure.lock().unwrap().is_some() {
                    return;
                }
                let Some(entry) = manifest.entries.get(next.fetch_add(1, Ordering::Relaxed)) else { return };
                if let Err(e) = op(entry) {
                    failure.lock().unwrap().get_or_insert(e);
                    return;
                }
            });
        }
    });
    failure.into_inner().unwrap().map_or(Ok(()), Err)
}

fn file_digest(path: &Path) -> io::Result<[u8; 32]> {
    let mut file = File::open(path)?;
    let mut hasher = Sha256::new();
    let mut buf = vec![0u8; 1 << 20];
    loop {
        let n = file.read(&mut buf)?;
        if n == 0 {
            return Ok(hasher.finalize().into());
        }
        hasher.update(&buf[..n]);
    }
}

fn verify(manifest: &Manifest, out_root: &Path, mode: StorageMode) -> Result<(), BenchError> {
    for entry in &manifest.entries {
        let ok = match file_digest(&out_root.join(&entry.path)) {
            Ok(d) => d == entry.digest,
            Err(e) if e.kind() == io::ErrorKind::NotFound => false,
            Err(e) => return Err(e.into()),
        };
        if !ok {
            return Err(BenchError::VerificationFailure { mode, workload: manifest.kind, path: entry.path.clone() });
        }
    }
    Ok(())
}

fn remove_tree(path: &Path) -> Result<(), BenchError> {
    match fs::remove_dir_all(path) {
        Err(e) if e.kind() != io::ErrorKind::NotFound => Err(e.into()),
        _ => Ok(()),
    }
}

fn time<T>(f: impl FnOnce() -> Result<T, BenchError>) -> Result<f64, BenchError> {
    let start = Instant::now();
    f()?;
    Ok(start.elapsed().as_secs_f64())
}

/// Runs every (mode, workload, direction) cell `repetitions` times and
/// returns the records in execution order.
pub fn run_bench(config: &BenchConfig) -> Result<Vec<BenchRecord>, BenchError> {
    run_bench_with(config, |_| {})
}

/// Like [`run_bench`], calling `progress` as each record is produced.
pub fn run_bench_with(config: &BenchConfig, mut progress: impl FnMut(&BenchRecord)) -> Result<Vec<BenchRecord>, BenchError> {
    config.validate()?;
    let platform = create_platform(&config.platform_seed);
    fs::create_dir_all(&config.target_dir)?;

    let mut manifests = Vec::with_capacity(config.workloads.len());
    for (i, w) in config.workloads.iter().enumerate() {
        let staging = config.source_dir.join(format!("corpus-{i}-{}", w.kind.as_str().to_lowercase()));
        remove_tree(&staging)?;
        manifests.push(generate_workload(w, &staging)?);
    }

    let mut records = Vec::new();
    for &mode in &config.modes {
        for (wi, manifest) in manifests.iter().enumerate() {
            let cell = format!("{}-{wi}", mode.as_str().to_lowercase());
            let bytes = manifest.total_bytes();
            // READ repetitions all copy out of one pre-filled store
            let read_store_root = config.target_dir.join(format!("{cell}-store"));
            let mut read_store = None;
            for &direction in &config.directions {
                for rep in 0..config.repetitions {
                    let ns = config.target_dir.join(format!("{cell}-{}-{rep}", direction.as_str().to_lowercase()));
                    remove_tree(&ns)?;
                    let seconds = match direction {
                        Direction::Write => {
                            let store = Store::create(mode, &ns, config, &platform)?;
                            time(|| for_each_entry(manifest, config.parallel, |e| store.put(manifest, e)))?
                        }
                        Direction::Read => {
                            if read_store.is_none() {
                                remove_tree(&read_store_root)?;
                                let store = Store::create(mode, &read_store_root, config, &platform)?;
                                for_each_entry(manifest, config.parallel, |e| store.put(manifest, e))?;
                                read_store = Some(store);
                            }
                            let store = read_store.as_ref().unwrap();
                            fs::create_dir_all(&ns)?;
                            let seconds = time(|| for_each_entry(manifest, config.parallel, |e| store.get(e, &ns)))?;
                            verify(manifest, &ns, mode)?;
                            seconds
                        }
                    };
                    remove_tree(&ns)?;
                    let record = BenchRecord::new(mode, manifest.kind, direction, rep, bytes, seconds);
                    log::info!("{} {} {} rep {} {:.1} MB/s", mode, manifest.kind, direction, rep, record.mbps);
                    progress(&record);
                    records.push(record);
                }
            }
            drop(read_store);
            remove_tree(&read_store_root)?;
        }
    }
    for m in &manifests {
        remove_tree(&m.root)?;
    }
    Ok(records)
}

#[derive(Clone, Debug, PartialEq)]
pub struct SummaryRow {
    pub mode: StorageMode,
    pub workload: WorkloadKind,
    pub direction: Direction,
    pub count: usize,
    pub mean_mbps: f64,
    /// Sample standard deviation; zero for a single record.
    pub stddev_mbps: f64,
    pub mean_seconds: f64,
}

/// One row per (mode, workload, direction), in order of first appearance.
pub fn summarize(records: &[BenchRecord]) -> Result<Vec<SummaryRow>, BenchError> {
    if records.is_empty() {
        return Err(BenchError::EmptyInput);
    }
    type Cell = (StorageMode, WorkloadKind, Direction);
    let mut cells: Vec<(Cell, Vec<&BenchRecord>)> = Vec::new();
    for r in records {
        let key = (r.mode, r.workload, r.direction);
        match cells.iter_mut().find(|(k, _)| *k == key) {
            Some((_, v)) => v.push(r),
            None => cells.push((key, vec![r])),
        }
    }
    Ok(cells
        .into_iter()
        .map(|((mode, workload, direction), rs)| {
            let n = rs.len() as f64;
            let mean = rs.iter().map(|r| r.mbps).sum::<f64>() / n;
            let var = if rs.len() > 1 { rs.iter().map(|r| (r.mbps - mean).powi(2)).sum::<f64>() / (n - 1.0) } else { 0.0 };
            SummaryRow {
                mode,
                workload,
                direction,
                count: rs.len(),
                mean_mbps: mean,
                stddev_mbps: var.sqrt(),
                mean_seconds: rs.iter().map(|r| r.seconds).sum::<f64>() / n,
            }
        })
        .collect())
}

pub fn write_csv<W: Write>(records: &[BenchRecord], out: W) -> Result<(), BenchError> {
    let mut w = csv::Writer::from_writer(out);
    w.write_record(CSV_HEADER.split(','))?;
    for r in records {
        w.write_record([
            r.mode.as_str().to_string(),
            r.workload.as_str().to_string(),
            r.direction.as_str().to_string(),
            r.rep.to_string(),
            r.bytes.to_string(),
            r.seconds.to_string(),
            r.mbps.to_string(),
        ])?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_csv<R: Read>(input: R) -> Result<Vec<BenchRecord>, BenchError> {
    let mut reader = csv::Reader::from_reader(input);
    if reader.headers()?.iter().collect::<Vec<_>>().join(",") != CSV_HEADER {
        return Err(BenchError::InvalidSpec("unexpected CSV header".into()));
    }
    let bad = |what: &str| BenchError::InvalidSpec(format!("bad {what} in CSV"));
    let mut records = Vec::new();
    for row in reader.records() {
        let row = row?;
        let field = |i: usize| row.get(i).ok_or_else(|| bad("row length"));
        records.push(BenchRecord {
            mode: field(0)?.parse()?,
            workload: field(1)?.parse()?,
            direction: field(2)?.parse()?,
            rep: field(3)?.parse().map_err(|_| bad("rep"))?,
            bytes: field(4)?.parse().map_err(|_| bad("bytes"))?,
            seconds: field(5)?.parse().map_err(|_| bad("seconds"))?,
            mbps: field(6)?.parse().map_err(|_| bad("mbps"))?,
        });
    }
    Ok(records)
}

/// Fixed-width table of summary rows for terminals.
pub fn summary_table(rows: &[SummaryRow]) -> String {
    let mut out = format!(
        "{:<8} {:<8} {:<6} {:>5} {:>12} {:>10} {:>10}\n",
        "mode", "workload", "dir", "n", "mean MB/s", "sd MB/s", "mean s"
    );
    for r in rows {
        out.push_str(&format!(
            "{:<8} {:<8} {:<6} {:>5} {:>12.2} {:>10.2} {:>10.4}\n",
            r.mode.as_str(),
            r.workload.as_str(),
            r.direction.as_str(),
            r.count,
            r.mean_mbps,
            r.stddev_mbps,
            r.mean_seconds
        ));
    }
    out
}
