//! `sealvault` command-line front end.
//!
//! Exit codes: 0 success, 1 generic failure, 2 usage error, 3 authentication
//! or unsealing failure, 4 not found.

use std::fs;
use std::io::{self, BufRead, BufReader, BufWriter, Write};
use std::path::{Path, PathBuf};
use std::process::ExitCode;

use anyhow::{Context, Result};
use clap::{Args, Parser, Subcommand, ValueEnum};
use zeroize::Zeroizing;

use sealvault_bench::{
    run_bench_with, summarize, summary_table, write_csv, BenchConfig, BenchError, Direction, StorageMode, Workload,
    WorkloadKind, DEFAULT_REPETITIONS, DEFAULT_SINGLE_BYTES,
};
use sealvault_core::sync::{open_store, sync_vault, SyncError, SyncOptions};
use sealvault_core::vault::{
    create_vault_with, read_config, unlock_vault, ContentKeyProtection, EntryKind, VaultHandle, VaultLock,
    VaultOptions, CONFIG_FILE,
};
use sealvault_core::{create_platform, ModeId, PlatformIdentity, SealingPolicy, VaultError};

const SEED_ENV: &str = "SEALVAULT_PLATFORM_SEED_FILE";
const TOKEN_ENV: &str = "SEALVAULT_REMOTE_TOKEN";

#[derive(Parser)]
#[command(name = "sealvault", version, about = "Client-side encrypted vault with password and sealed key modes")]
struct Cli {
    /// Vault directory.
    #[arg(long, global = true, env = "SEALVAULT_VAULT")]
    vault: Option<PathBuf>,

    #[command(flatten)]
    secrets: SecretArgs,

    /// More log output (-v info, -vv debug, -vvv trace).
    #[arg(short, long, global = true, action = clap::ArgAction::Count)]
    verbose: u8,

    #[command(subcommand)]
    command: Command,
}

#[derive(Args)]
struct SecretArgs {
    /// Read the password from the first line of standard input.
    #[arg(long, global = true, conflicts_with = "password_file")]
    password_stdin: bool,

    /// Read the password from the first line of a file.
    #[arg(long, global = true, value_name = "PATH")]
    password_file: Option<PathBuf>,

    /// File holding the 32-byte platform seed (raw or 64 hex digits).
    #[arg(long, global = true, value_name = "PATH", env = SEED_ENV)]
    platform_seed_file: Option<PathBuf>,
}

#[derive(Clone, Copy, ValueEnum)]
enum ModeArg {
    V1,
    Sealed,
}

#[derive(Clone, Copy, ValueEnum)]
enum PolicyArg {
    Enclave,
    Signer,
}

#[derive(Subcommand)]
enum Command {
    /// Create a new vault.
    Init {
        #[arg(long, value_enum)]
        mode: ModeArg,
        #[arg(long, default_value_t = sealvault_core::modes::DEFAULT_KDF_ITERATIONS)]
        kdf_iterations: u32,
        /// Sealing policy for sealed vaults.
        #[arg(long, value_enum, default_value = "enclave")]
        policy: PolicyArg,
    },
    /// Encrypt a local file into the vault.
    Put { src: PathBuf, vpath: String },
    /// Decrypt a vault file to a local path.
    Get { vpath: String, dst: PathBuf },
    /// List a vault directory.
    Ls {
        #[arg(default_value = "/")]
        vpath: String,
    },
    /// Remove a file or an empty directory.
    Rm { vpath: String },
    /// Rename or move an entry.
    Mv { from: String, to: String },
    /// Create a directory.
    Mkdir {
        vpath: String,
        /// Create missing parents too.
        #[arg(short, long)]
        parents: bool,
    },
    /// Synchronize the vault's ciphertext with a remote store.
    Sync {
        /// `http(s)://...` object store, `file://` URL or a directory path.
        #[arg(long)]
        remote: String,
        #[arg(long, default_value_t = 4)]
        jobs: usize,
    },
    /// Measure transfer throughput of the storage modes.
    Bench(BenchArgs),
    /// Print the non-secret parts of the vault configuration.
    DumpConfig,
}

#[derive(Args)]
struct BenchArgs {
    #[arg(long, value_delimiter = ',', default_value = "plain,v1,sealed")]
    modes: Vec<StorageMode>,
    #[arg(long, value_delimiter = ',', default_value = "single,tree")]
    workload: Vec<WorkloadKind>,
    #[arg(long, value_delimiter = ',', default_value = "read,write")]
    directions: Vec<Direction>,
    #[arg(long, default_value_t = DEFAULT_REPETITIONS)]
    reps: usize,
    /// Bytes per workload; accepts K/M/G and KiB/MiB/GiB suffixes.
    #[arg(long, value_parser = parse_size, default_value_t = DEFAULT_SINGLE_BYTES)]
    size: u64,
    /// Number of files in the TREE workload (default: drawn until the size is reached).
    #[arg(long)]
    files: Option<usize>,
    #[arg(long, default_value_t = 1)]
    seed: u64,
    /// CSV output path.
    #[arg(long)]
    out: Option<PathBuf>,
    /// Scratch directory; the corpus is staged under `source/`, stores under `target/`.
    #[arg(long)]
    work_dir: Option<PathBuf>,
    /// Stage the corpus here instead (e.g. a RAM disk).
    #[arg(long)]
    source_dir: Option<PathBuf>,
    #[arg(long)]
    target_dir: Option<PathBuf>,
    /// Copy files with this many worker threads.
    #[arg(long)]
    parallel: Option<usize>,
}

/// Failure caused by how the command was invoked.
#[derive(Debug, thiserror::Error)]
#[error("{0}")]
struct UsageError(String);

fn usage(msg: impl Into<String>) -> anyhow::Error {
    UsageError(msg.into()).into()
}

fn parse_size(s: &str) -> Result<u64, String> {
    let s = s.trim();
    let split = s.find(|c: char| !c.is_ascii_digit()).unwrap_or(s.len());
    let (digits, unit) = s.split_at(split);
    let n: u64 = digits.parse().map_err(|_| format!("invalid size {s:?}"))?;
    let scale: u64 = match unit.trim().to_ascii_lowercase().as_str() {
        "" | "b" => 1,
        "k" | "kb" => 1_000,
        "kib" => 1 << 10,
        "m" | "mb" => 1_000_000,
        "mib" => 1 << 20,
        "g" | "gb" => 1_000_000_000,
        "gib" => 1 << 30,
        other => return Err(format!("unknown size unit {other:?}")),
    };
    n.checked_mul(scale).ok_or_else(|| format!("size {s:?} overflows"))
}

fn exit_code(err: &anyhow::Error) -> u8 {
    for cause in err.chain() {
        if cause.is::<UsageError>() {
            return 2;
        }
        if let Some(e) = cause.downcast_ref::<VaultError>() {
            return match e {
                VaultError::WrongPassword
                | VaultError::UnsealFailure
                | VaultError::MissingPlatform
                | VaultError::AuthenticationFailure => 3,
                VaultError::NotFound(_) => 4,
                VaultError::TargetNotEmpty(_) | VaultError::NameTooLong(_) | VaultError::InvalidName(_) => 2,
                _ => 1,
            };
        }
        if let Some(e) = cause.downcast_ref::<BenchError>() {
            return match e {
                BenchError::InvalidSpec(_) => 2,
                BenchError::Vault(VaultError::AuthenticationFailure) => 3,
                _ => 1,
            };
        }
        if cause.is::<SyncError>() {
            return 1;
        }
        if let Some(e) = cause.downcast_ref::<io::Error>() {
            return if e.kind() == io::ErrorKind::NotFound { 4 } else { 1 };
        }
    }
    1
}

fn init_logging(verbosity: u8) {
    let level = match verbosity {
        0 => log::LevelFilter::Warn,
        1 => log::LevelFilter::Info,
        2 => log::LevelFilter::Debug,
        _ => log::LevelFilter::Trace,
    };
    // only our own crates log; transport crates may print request headers at trace level
    env_logger::Builder::new()
        .filter_level(log::LevelFilter::Off)
        .filter_module("sealvault", level)
        .filter_module("sealvault_core", level)
        .filter_module("sealvault_bench", level)
        .format_timestamp(None)
        .init();
}

fn first_line(reader: &mut impl BufRead) -> Result<Zeroizing<String>> {
    let mut line = Zeroizing::new(String::new());
    reader.read_line(&mut line)?;
    let trimmed = line.trim_end_matches(['\n', '\r']).len();
    line.truncate(trimmed);
    Ok(line)
}

impl SecretArgs {
    fn password(&self, confirm: bool) -> Result<Zeroizing<String>> {
        let password = if self.password_stdin {
            first_line(&mut io::stdin().lock()).context("reading password from standard input")?
        } else if let Some(path) = &self.password_file {
            let file = fs::File::open(path).with_context(|| format!("opening password file {}", path.display()))?;
            first_line(&mut BufReader::new(file))?
        } else {
            let first = Zeroizing::new(
                rpassword::prompt_password("Vault password: ")
                    .map_err(|e| usage(format!("cannot prompt for a password ({e}); use --password-stdin or --password-file")))?,
            );
            if confirm && *first != rpassword::prompt_password("Repeat password: ")? {
                return Err(usage("passwords do not match"));
            }
            first
        };
        if password.is_empty() {
            return Err(usage("empty password"));
        }
        Ok(password)
    }

    fn seed(&self) -> Result<Option<Zeroizing<[u8; 32]>>> {
        let Some(path) = &self.platform_seed_file else { return Ok(None) };
        let raw = Zeroizing::new(fs::read(path).with_context(|| format!("reading platform seed {}", path.display()))?);
        let decoded = match raw.len() {
            32 => Zeroizing::new(raw.to_vec()),
            _ => Zeroizing::new(hex::decode(std::str::from_utf8(&raw).unwrap_or("").trim()).unwrap_or_default()),
        };
        let seed: [u8; 32] = decoded
            .as_slice()
            .try_into()
            .map_err(|_| usage(format!("{}: platform seed must be 32 raw bytes or 64 hex digits", path.display())))?;
        Ok(Some(Zeroizing::new(seed)))
    }

    fn platform(&self) -> Result<Option<PlatformIdentity>> {
        Ok(self.seed()?.map(|seed| create_platform(&seed)))
    }
}

struct Session<'a> {
    vault: Option<&'a Path>,
    secrets: &'a SecretArgs,
}

impl Session<'_> {
    fn root(&self) -> Result<&Path> {
        self.vault.ok_or_else(|| usage("no vault given; pass --vault or set SEALVAULT_VAULT"))
    }

    fn open(&self) -> Result<VaultHandle> {
        let root = self.root()?;
        let config = read_config(root)?;
        let platform = self.secrets.platform()?;
        if config.mode == ModeId::Sealed && platform.is_none() {
            return Err(VaultError::MissingPlatform.into());
        }
        let password = self.secrets.password(false)?;
        Ok(unlock_vault(root, &password, platform.as_ref())?)
    }

    fn lock(&self) -> Result<VaultLock> {
        Ok(VaultLock::acquire(self.root()?)?)
    }
}

fn cmd_init(ctx: &Session, mode: ModeArg, kdf_iterations: u32, policy: PolicyArg) -> Result<()> {
    let root = ctx.root()?;
    let mode = match mode {
        ModeArg::V1 => ModeId::V1,
        ModeArg::Sealed => ModeId::Sealed,
    };
    let platform = ctx.secrets.platform()?;
    if mode == ModeId::Sealed && platform.is_none() {
        return Err(VaultError::MissingPlatform.into());
    }
    if root.exists() && fs::read_dir(root)?.next().is_some() {
        return Err(VaultError::TargetNotEmpty(root.to_path_buf()).into());
    }
    let password = ctx.secrets.password(true)?;
    let sealing_policy = match policy {
        PolicyArg::Enclave => SealingPolicy::MrEnclave,
        PolicyArg::Signer => SealingPolicy::MrSigner,
    };
    let options = VaultOptions { kdf_iterations, sealing_policy };
    let config = create_vault_with(root, &password, mode, platform.as_ref(), &options)?;
    println!("created {} vault {} at {}", config.mode, hex::encode(config.vault_id), root.display());
    Ok(())
}

fn cmd_put(ctx: &Session, src: &Path, vpath: &str) -> Result<()> {
    let _lock = ctx.lock()?;
    let vault = ctx.open()?;
    let file = fs::File::open(src).with_context(|| format!("opening {}", src.display()))?;
    let stats = vault.write_file(vpath, &mut BufReader::with_capacity(1 << 20, file))?;
    log::info!("stored {} bytes as {} bytes", stats.cleartext_len, stats.stored_len);
    Ok(())
}

fn cmd_get(ctx: &Session, vpath: &str, dst: &Path) -> Result<()> {
    let vault = ctx.open()?;
    let dir = match dst.parent() {
        Some(p) if !p.as_os_str().is_empty() => p,
        _ => Path::new("."),
    };
    let tmp = tempfile::NamedTempFile::new_in(dir).with_context(|| format!("creating a file in {}", dir.display()))?;
    let mut out = BufWriter::with_capacity(1 << 20, tmp);
    vault.read_file_to(vpath, &mut out)?;
    let tmp = out.into_inner().map_err(|e| e.into_error())?;
    tmp.as_file().sync_all()?;
    tmp.persist(dst).map_err(|e| e.error).with_context(|| format!("writing {}", dst.display()))?;
    Ok(())
}

fn cmd_ls(ctx: &Session, vpath: &str) -> Result<()> {
    let vault = ctx.open()?;
    let stdout = io::stdout();
    let mut out = stdout.lock();
    for entry in vault.list_dir(vpath)? {
        match entry.kind {
            EntryKind::Directory => writeln!(out, "d {:>14} {}/", "-", entry.name)?,
            EntryKind::File => writeln!(out, "f {:>14} {}", entry.size.unwrap_or(0), entry.name)?,
            EntryKind::Unreadable => writeln!(out, "? {:>14} {}", "-", entry.name)?,
        }
    }
    Ok(())
}

fn cmd_rm(ctx: &Session, vpath: &str) -> Result<()> {
    let _lock = ctx.lock()?;
    let vault = ctx.open()?;
    match vault.remove_file(vpath) {
        Err(VaultError::IsADirectory(_)) => Ok(vault.remove_dir(vpath)?),
        other => Ok(other?),
    }
}

fn cmd_sync(ctx: &Session, remote: &str, jobs: usize) -> Result<()> {
    if jobs == 0 {
        return Err(usage("--jobs must be at least 1"));
    }
    let root = ctx.root()?;
    read_config(root)?;
    let _lock = ctx.lock()?;
    let token = std::env::var(TOKEN_ENV).ok().filter(|t| !t.is_empty());
    let store = open_store(remote, token)?;
    let report = sync_vault(root, store.as_ref(), &SyncOptions { concurrency: jobs })?;
    for conflict in &report.conflicts {
        eprintln!("conflict: {} (remote copy saved as {})", conflict.key, conflict.saved_as);
    }
    println!("{report}");
    Ok(())
}

fn cmd_bench(ctx: &Session, args: BenchArgs) -> Result<()> {
    let scratch;
    let work_dir = match &args.work_dir {
        Some(dir) => dir.clone(),
        None => {
            scratch = tempfile::tempdir()?;
            scratch.path().to_path_buf()
        }
    };
    let mut config = BenchConfig::new(&work_dir);
    config.modes = args.modes;
    config.directions = args.directions;
    config.repetitions = args.reps;
    config.parallel = args.parallel;
    config.workloads = args
        .workload
        .iter()
        .enumerate()
        .map(|(i, kind)| {
            let seed = args.seed.wrapping_add(i as u64);
            match kind {
                WorkloadKind::Single => Workload::single(args.size, seed),
                WorkloadKind::Tree => Workload::tree(args.size, args.files, seed),
            }
        })
        .collect();
    if let Some(dir) = args.source_dir {
        config.source_dir = dir;
    }
    if let Some(dir) = args.target_dir {
        config.target_dir = dir;
    }
    if let Some(seed) = ctx.secrets.seed()? {
        config.platform_seed = *seed;
    }

    let records = run_bench_with(&config, |r| {
        eprintln!("{} {} {} rep {}: {:.1} MB/s", r.mode, r.workload, r.direction, r.rep, r.mbps)
    })?;
    if let Some(out) = &args.out {
        let file = fs::File::create(out).with_context(|| format!("creating {}", out.display()))?;
        write_csv(&records, BufWriter::new(file))?;
    }
    print!("{}", summary_table(&summarize(&records)?));
    Ok(())
}

fn cmd_dump_config(ctx: &Session) -> Result<()> {
    let root = ctx.root()?;
    let config = read_config(root)?;
    println!("config          {}", root.join(CONFIG_FILE).display());
    println!("format_version  {}", config.format_version);
    println!("vault_id        {}", hex::encode(config.vault_id));
    println!("mode            {}", config.mode);
    println!("kdf             pbkdf2-hmac-sha256, {} iterations", config.kdf.iterations);
    println!("salt            {}", hex::encode(config.kdf.salt));
    match &config.content_key {
        ContentKeyProtection::Wrapped(_) => println!("content_key     wrapped with the password key"),
        ContentKeyProtection::Sealed(blob) => {
            println!("content_key     sealed, policy {:?}, isv_svn {}", blob.policy(), blob.isv_svn())
        }
    }
    if let Some(enclave) = &config.enclave {
        println!("measurement     {}", hex::encode(enclave.measurement));
        println!("signer          {}", hex::encode(enclave.signer));
    }
    Ok(())
}

fn run(cli: Cli) -> Result<()> {
    let ctx = Session { vault: cli.vault.as_deref(), secrets: &cli.secrets };
    match cli.command {
        Command::Init { mode, kdf_iterations, policy } => cmd_init(&ctx, mode, kdf_iterations, policy),
        Command::Put { src, vpath } => cmd_put(&ctx, &src, &vpath),
        Command::Get { vpath, dst } => cmd_get(&ctx, &vpath, &dst),
        Command::Ls { vpath } => cmd_ls(&ctx, &vpath),
        Command::Rm { vpath } => cmd_rm(&ctx, &vpath),
        Command::Mv { from, to } => {
            let _lock = ctx.lock()?;
            Ok(ctx.open()?.rename(&from, &to)?)
        }
        Command::Mkdir { vpath, parents } => {
            let _lock = ctx.lock()?;
            let vault = ctx.open()?;
            if parents {
                vault.create_dir_all(&vpath)?;
            } else {
                vault.create_dir(&vpath)?;
            }
            Ok(())
        }
        Command::Sync { remote, jobs } => cmd_sync(&ctx, &remote, jobs),
        Command::Bench(args) => cmd_bench(&ctx, args),
        Command::DumpConfig => cmd_dump_config(&ctx),
    }
}

fn main() -> ExitCode {
    let cli = Cli::parse();
    init_logging(cli.verbose);
    match run(cli) {
        Ok(()) => ExitCode::SUCCESS,
        Err(err) => {
            eprintln!("error: {err:#}");
            ExitCode::from(exit_code(&err))
        }
    }
}
