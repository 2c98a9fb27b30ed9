//! Acceptance suite: runs every criterion and prints one PASS/FAIL line each.
//!
//! `cargo test -p sealvault-bench --test acceptance` runs all of them; pass
//! criterion numbers (`-- 2 7`) to run a subset.

use std::collections::BTreeMap;
use std::fs;
use std::io::{self, Read};
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use proptest::test_runner::{Config as PropConfig, TestRunner};
use rand::{Rng, RngCore, SeedableRng};
use rand_chacha::ChaCha8Rng;
use sha2::{Digest, Sha256};

use sealvault_bench::{run_bench, summarize, BenchConfig, Direction, StorageMode, Workload, WorkloadKind};
use sealvault_core::modes::{derive_kek, encrypt_filename, decrypt_filename, BLOCK_SIZE, MAX_NAME_BYTES};
use sealvault_core::sync::{sync_vault, verify_remote_opacity, LocalDirStore, SyncOptions};
use sealvault_core::tee::{create_platform, measure_enclave, seal, unseal, SealedBlob, TeeError};
use sealvault_core::vault::{create_vault_with, unlock_vault, EntryKind, VaultHandle, VaultOptions};
use sealvault_core::{ModeId, SealingPolicy, VaultError};

type Outcome = Result<String, String>;
type Criterion = (u32, &'static str, fn() -> Outcome);

macro_rules! check {
    ($cond:expr, $($msg:tt)+) => {
        if $cond {
        } else {
            return Err(format!($($msg)+));
        }
    };
}

const PASSWORD: &str = "acceptance password";

fn quick_options() -> VaultOptions {
    VaultOptions { kdf_iterations: 1000, ..VaultOptions::default() }
}

fn new_vault(root: &Path, mode: ModeId, seed: u8) -> VaultHandle {
    let platform = create_platform(&[seed; 32]);
    create_vault_with(root, PASSWORD, mode, Some(&platform), &quick_options()).unwrap();
    unlock_vault(root, PASSWORD, Some(&platform)).unwrap()
}

fn c1_overhead_law() -> Outcome {
    let start = Instant::now();
    let platform = create_platform(&[1; 32]);
    let enclave = measure_enclave(b"acceptance enclave", b"acceptance signer", 1, 1);
    let full = seal(&platform, &enclave, SealingPolicy::MrEnclave, &[0x61; 32768], b"").unwrap();
    check!(full.len() == 33328, "32768-byte payload sealed to {} bytes", full.len());

    let sealed_len = |len: usize| {
        let payload = vec![len as u8; len];
        let blob = seal(&platform, &enclave, SealingPolicy::MrSigner, &payload, b"x").unwrap();
        let back = unseal(&platform, &enclave, &blob, b"x").unwrap();
        (blob.len(), back == payload)
    };
    for len in [0usize, 1, 16, 32767, 32768] {
        let (sealed, round_trips) = sealed_len(len);
        check!(sealed == len + 560 && round_trips, "payload {len} sealed to {sealed} bytes");
    }
    let mut runner = TestRunner::new(PropConfig { failure_persistence: None, ..PropConfig::with_cases(256) });
    runner
        .run(&(0usize..=32768), |len| {
            let (sealed, round_trips) = sealed_len(len);
            proptest::prop_assert_eq!(sealed, len + 560);
            proptest::prop_assert!(round_trips);
            Ok(())
        })
        .map_err(|e| e.to_string())?;
    let elapsed = start.elapsed().as_secs_f64();
    check!(elapsed < 1.0, "took {elapsed:.3} s");
    Ok(format!("32768 -> 33328 B; 5 boundary + 256 random sizes in 0..=32768 all len+560; {elapsed:.3} s"))
}

fn c2_inflation_ratio() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let start = Instant::now();
    let vault = new_vault(tmp.path(), ModeId::Sealed, 2);
    const CLEARTEXT: u64 = 100 << 20;
    let stats = vault.write_file("/image.iso", &mut io::repeat(0xa5).take(CLEARTEXT)).unwrap();
    let elapsed = start.elapsed().as_secs_f64();

    let on_disk = fs::metadata(vault.map_path("/image.iso").unwrap()).unwrap().len();
    check!(stats.cleartext_len == CLEARTEXT, "wrote {} cleartext bytes", stats.cleartext_len);
    check!(on_disk == 106_650_240 && stats.stored_len == on_disk, "stored {on_disk} B");
    let listed = vault.list_dir("/").unwrap();
    check!(listed[0].size == Some(CLEARTEXT), "listing reports {:?}", listed[0].size);
    check!(vault.read_range("/image.iso", CLEARTEXT - 3, 10).unwrap() == [0xa5; 3], "tail read back wrong");
    let ratio = (on_disk - CLEARTEXT) as f64 / CLEARTEXT as f64 * 100.0;
    check!((ratio - 1.7093).abs() <= 0.05, "overhead ratio {ratio:.4}%");
    check!(elapsed < 30.0, "took {elapsed:.1} s");
    Ok(format!("104857600 -> {on_disk} B, overhead {ratio:.4}%; {elapsed:.1} s"))
}

fn c3_platform_binding() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(3);
    let (mut refused, mut restored) = (0, 0);
    for case in 0..100 {
        let (mut seed_a, mut seed_b) = ([0u8; 32], [0u8; 32]);
        rng.fill_bytes(&mut seed_a);
        rng.fill_bytes(&mut seed_b);
        check!(seed_a != seed_b, "seed collision");
        let (home, other) = (create_platform(&seed_a), create_platform(&seed_b));
        let mut code = vec![0u8; rng.random_range(1..512)];
        rng.fill_bytes(&mut code);
        let enclave = measure_enclave(&code, b"signer", rng.random(), rng.random_range(0..8));
        let policy = if case % 2 == 0 { SealingPolicy::MrEnclave } else { SealingPolicy::MrSigner };
        let mut payload = vec![0u8; rng.random_range(0..4096)];
        rng.fill_bytes(&mut payload);

        let blob = SealedBlob::parse(seal(&home, &enclave, policy, &payload, b"ctx").unwrap().as_bytes()).unwrap();
        match unseal(&other, &enclave, &blob, b"ctx") {
            Err(TeeError::AuthenticationFailure) => refused += 1,
            other => return Err(format!("case {case}: foreign platform gave {other:?}")),
        }
        if unseal(&home, &enclave, &blob, b"ctx").as_deref() == Ok(payload.as_slice()) {
            restored += 1;
        }
    }
    check!(refused == 100 && restored == 100, "refused {refused}/100, restored {restored}/100");
    Ok("100/100 refused on foreign platforms with AuthenticationFailure, 100/100 unsealed at home".into())
}

fn c4_two_factor() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let (home, foreign) = (create_platform(&[4; 32]), create_platform(&[5; 32]));
    create_vault_with(tmp.path(), PASSWORD, ModeId::Sealed, Some(&home), &quick_options()).unwrap();
    unlock_vault(tmp.path(), PASSWORD, Some(&home)).unwrap().write_bytes("/secret", b"two factors").unwrap();

    let mut cells = Vec::new();
    for (password, pw_ok) in [(PASSWORD, true), ("not the password", false)] {
        for (platform, plat_ok) in [(&home, true), (&foreign, false)] {
            let result = unlock_vault(tmp.path(), password, Some(platform));
            let opened = match &result {
                Ok(v) => v.read_file("/secret").map_err(|e| e.to_string())? == b"two factors",
                Err(VaultError::WrongPassword | VaultError::UnsealFailure) => false,
                Err(e) => return Err(format!("unexpected error {e:?}")),
            };
            check!(opened == (pw_ok && plat_ok), "password ok={pw_ok} platform ok={plat_ok}: opened={opened}");
            cells.push(match result {
                Ok(_) => "open".to_string(),
                Err(e) => format!("{e:?}"),
            });
        }
    }
    check!(
        matches!(unlock_vault(tmp.path(), PASSWORD, None), Err(VaultError::MissingPlatform)),
        "unlock without platform did not report MissingPlatform"
    );
    Ok(format!("matrix [pw+plat, pw+foreign, bad pw+plat, bad pw+foreign] = {cells:?}"))
}

fn random_name(rng: &mut impl Rng) -> String {
    const ALPHABET: &[&str] = &["a", "Z", "7", " ", "-", "_", ".", "~", "é", "ß", "日", "本", "😀", "Ω", "(", "'"];
    let target = rng.random_range(1..=MAX_NAME_BYTES);
    let mut name = String::new();
    loop {
        let next = ALPHABET[rng.random_range(0..ALPHABET.len())];
        if name.len() + next.len() > target {
            break;
        }
        name.push_str(next);
    }
    if name.is_empty() || name == "." || name == ".." {
        name = "x".into();
    }
    name
}

fn c5_filename_ceiling() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(5);
    let mut longest = 0;
    for i in 0..10_000 {
        let name = random_name(&mut rng);
        let (key, dir) = (rng.random::<[u8; 32]>(), rng.random::<[u8; 16]>());
        let enc = encrypt_filename(&key, &dir, &name).map_err(|e| format!("name {i} ({} B): {e}", name.len()))?;
        check!(enc.len() <= 255, "{}-byte name encrypted to {} chars", name.len(), enc.len());
        check!(decrypt_filename(&key, &dir, &enc).as_deref() == Ok(name.as_str()), "name {i} did not round trip");
        longest = longest.max(enc.len());
    }
    let max_name = "n".repeat(MAX_NAME_BYTES);
    let max_len = encrypt_filename(&[0; 32], &[0; 16], &max_name).unwrap().len();
    check!(max_len <= 255, "160-byte name encrypted to {max_len} chars");

    let too_long = "n".repeat(161);
    let direct = encrypt_filename(&[0; 32], &[0; 16], &too_long);
    check!(
        matches!(direct, Err(sealvault_core::CryptoError::NameTooLong(161))),
        "161-byte name gave {direct:?}"
    );
    let tmp = tempfile::tempdir().unwrap();
    let vault = new_vault(tmp.path(), ModeId::V1, 0);
    let through_vault = vault.write_bytes(&format!("/{too_long}"), b"");
    check!(matches!(through_vault, Err(VaultError::NameTooLong(161))), "vault write gave {through_vault:?}");
    Ok(format!("10000 names, longest {longest} chars; 160 B -> {max_len} chars; 161 B -> NameTooLong"))
}

fn c6_tamper_detection() -> Outcome {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let platform = create_platform(&[6; 32]);
    let enclave = measure_enclave(b"tamper enclave", b"signer", 1, 1);
    let mut kinds: BTreeMap<&str, usize> = BTreeMap::new();

    for i in 0..240 {
        let mut payload = vec![0u8; rng.random_range(0..=2 * 560)];
        rng.fill_bytes(&mut payload);
        let mut bytes = seal(&platform, &enclave, SealingPolicy::MrEnclave, &payload, b"aad").unwrap().into_bytes();
        let bit = rng.random_range(0..bytes.len() * 8);
        bytes[bit / 8] ^= 1 << (bit % 8);
        let result = SealedBlob::parse(&bytes).and_then(|blob| unseal(&platform, &enclave, &blob, b"aad"));
        match result {
            Err(TeeError::AuthenticationFailure) => *kinds.entry("mac mismatch").or_default() += 1,
            Err(TeeError::MalformedBlob(_)) => *kinds.entry("header rejected").or_default() += 1,
            Err(TeeError::SvnViolation { .. }) => *kinds.entry("key request refused").or_default() += 1,
            other => return Err(format!("flip {i} at bit {bit}: {other:?}")),
        }
    }

    let tmp = tempfile::tempdir().unwrap();
    let vault = new_vault(tmp.path(), ModeId::Sealed, 6);
    const BLOCKS: usize = 4;
    let stored_block = BLOCK_SIZE + 560;
    let names = ["/a", "/b", "/c"];
    for name in names {
        let mut data = vec![0u8; BLOCKS * BLOCK_SIZE];
        rng.fill_bytes(&mut data);
        vault.write_bytes(name, &data).unwrap();
    }
    let objects: Vec<_> = names.iter().map(|n| fs::read(vault.map_path(n).unwrap()).unwrap()).collect();
    let block_at = |i: usize| 640 + i * stored_block..640 + (i + 1) * stored_block;

    let mut transplants = 0;
    while transplants < 60 {
        let (sf, si) = (rng.random_range(0..names.len()), rng.random_range(0..BLOCKS));
        let (df, di) = (rng.random_range(0..names.len()), rng.random_range(0..BLOCKS));
        if (sf, si) == (df, di) {
            continue;
        }
        let mut forged = objects[df].clone();
        forged[block_at(di)].copy_from_slice(&objects[sf][block_at(si)]);
        let target = vault.map_path(names[df]).unwrap();
        fs::write(&target, &forged).unwrap();
        let result = vault.read_file(names[df]);
        fs::write(&target, &objects[df]).unwrap();
        match result {
            Err(VaultError::AuthenticationFailure) => transplants += 1,
            other => return Err(format!("block {si} of {} moved to block {di} of {}: {:?}", names[sf], names[df], other.map(|v| v.len()))),
        }
    }

    let mut object_flips = 0;
    for _ in 0..60 {
        let f = rng.random_range(0..names.len());
        let mut forged = objects[f].clone();
        let bit = rng.random_range(640 * 8..forged.len() * 8);
        forged[bit / 8] ^= 1 << (bit % 8);
        let target = vault.map_path(names[f]).unwrap();
        fs::write(&target, &forged).unwrap();
        let result = vault.read_file(names[f]);
        fs::write(&target, &objects[f]).unwrap();
        match result {
            Err(VaultError::AuthenticationFailure | VaultError::MalformedBlock(_)) => object_flips += 1,
            other => return Err(format!("flip at bit {bit} of {}: {:?}", names[f], other.map(|v| v.len()))),
        }
    }
    for (name, original) in names.iter().zip(&objects) {
        check!(vault.read_file(name).is_ok() && fs::read(vault.map_path(name).unwrap()).unwrap() == *original, "restore failed");
    }
    Ok(format!(
        "240 blob flips rejected {kinds:?}; {object_flips} vault block flips rejected; {transplants} transplants -> AuthenticationFailure; 0 silent"
    ))
}

const WORDS: &[&str] = &[
    "the", "vault", "stores", "every", "file", "as", "a", "sequence", "of", "blocks", "each", "block", "is",
    "sealed", "under", "key", "that", "never", "leaves", "enclave", "remote", "copy", "holds", "only",
    "ciphertext", "names", "are", "encrypted", "too", "so", "directory", "structure", "stays", "hidden", "from",
    "provider", "quarterly", "report", "draft", "budget", "meeting", "notes", "invoice", "contract", "photo",
    "archive", "backup", "project", "alpha", "beta", "release", "customer", "address", "salary", "review",
    "password", "hint", "medical", "record", "travel", "plan", "recipe", "letter", "summary",
];

fn text_like(rng: &mut impl Rng, len: usize) -> Vec<u8> {
    let mut out = Vec::with_capacity(len + 16);
    let mut column = 0;
    while out.len() < len {
        let word = WORDS[rng.random_range(0..WORDS.len())];
        out.extend_from_slice(word.as_bytes());
        column += word.len() + 1;
        if column > 72 {
            out.push(b'\n');
            column = 0;
        } else {
            out.push(b' ');
        }
    }
    out.truncate(len);
    out
}

fn c7_end_to_end() -> Outcome {
    let start = Instant::now();
    let tmp = tempfile::tempdir().unwrap();
    let (origin, replica, remote) = (tmp.path().join("origin"), tmp.path().join("replica"), tmp.path().join("remote"));
    let vault = new_vault(&origin, ModeId::V1, 0);
    let mut rng = ChaCha8Rng::seed_from_u64(7);

    let mut files = Vec::new();
    for i in 0..200 {
        let path = format!("/projects/{}/{}-{i:03}.txt", WORDS[i % 9 + 40], WORDS[rng.random_range(0..WORDS.len())]);
        let len = rng.random_range(0..=4usize << 20);
        let data = text_like(&mut rng, len);
        vault.create_dir_all(path.rsplit_once('/').unwrap().0).unwrap();
        vault.write_bytes(&path, &data).unwrap();
        files.push((path, data));
    }
    let total: usize = files.iter().map(|(_, d)| d.len()).sum();
    drop(vault);

    let store = LocalDirStore::new(&remote).unwrap();
    let pushed = sync_vault(&origin, &store, &SyncOptions::default()).map_err(|e| e.to_string())?;
    fs::create_dir_all(&replica).unwrap();
    let pulled = sync_vault(&replica, &store, &SyncOptions::default()).map_err(|e| e.to_string())?;
    let again = sync_vault(&origin, &store, &SyncOptions::default()).map_err(|e| e.to_string())?;
    check!(again.is_noop(), "second origin sync reported {again}");

    let copy = unlock_vault(&replica, PASSWORD, None).map_err(|e| e.to_string())?;
    check!(copy.walk_files().unwrap().len() == files.len(), "replica lists {} files", copy.walk_files().unwrap().len());
    for (path, data) in &files {
        let back = copy.read_file(path).map_err(|e| format!("{path}: {e}"))?;
        check!(Sha256::digest(&back) == Sha256::digest(data), "{path} differs in the replica");
    }

    let mut corpus: Vec<Vec<u8>> = files.iter().map(|(_, d)| d.clone()).collect();
    corpus.extend(files.iter().map(|(p, _)| p.as_bytes().to_vec()));
    corpus.extend(WORDS.iter().map(|w| w.as_bytes().to_vec()));
    let report = verify_remote_opacity(&store, &corpus).map_err(|e| e.to_string())?;
    check!(report.is_clean(), "{} cleartext findings, first {:?}", report.findings.len(), report.findings.first());
    Ok(format!(
        "200 files / {:.1} MiB: sync {pushed} then replica {pulled}, all byte-identical; opacity scan of {} objects / {:.1} MiB clean; {:.0} s",
        total as f64 / 1048576.0,
        report.objects_scanned,
        report.bytes_scanned as f64 / 1048576.0,
        start.elapsed().as_secs_f64()
    ))
}

fn c8_bench_shape() -> Outcome {
    let tmp = tempfile::tempdir().unwrap();
    let mut config = BenchConfig::new(tmp.path());
    config.workloads = vec![Workload::single(16 << 20, 81), Workload::tree(16 << 20, None, 82)];
    config.kdf_iterations = 1000;
    let start = Instant::now();
    let records = run_bench(&config).map_err(|e| e.to_string())?;
    check!(records.len() == 120, "{} records", records.len());
    check!(records.iter().all(|r| r.bytes == 16 << 20 && r.seconds > 0.0 && r.mbps.is_finite()), "malformed record");

    let rows = summarize(&records).unwrap();
    let mean = |m: StorageMode, w: WorkloadKind, d: Direction| {
        rows.iter().find(|r| (r.mode, r.workload, r.direction) == (m, w, d)).map(|r| r.mean_mbps).unwrap()
    };
    let mut cells = Vec::new();
    for w in [WorkloadKind::Single, WorkloadKind::Tree] {
        for &d in Direction::ALL {
            let (plain, v1, sealed) =
                (mean(StorageMode::Plain, w, d), mean(StorageMode::V1, w, d), mean(StorageMode::Sealed, w, d));
            check!(plain >= v1 && v1 >= 0.0 && sealed > 0.0, "{w} {d}: PLAIN {plain:.1} V1 {v1:.1} SEALED {sealed:.1} MB/s");
            cells.push(format!("{w}/{d} {plain:.0}/{v1:.0}/{sealed:.0}"));
        }
    }
    Ok(format!(
        "120 verified records in {:.0} s; mean MB/s PLAIN/V1/SEALED: {}",
        start.elapsed().as_secs_f64(),
        cells.join(", ")
    ))
}

fn hmac_sha256(key: &[u8], msg: &[u8]) -> [u8; 32] {
    let mut k = [0u8; 64];
    if key.len() > 64 {
        k[..32].copy_from_slice(&Sha256::digest(key));
    } else {
        k[..key.len()].copy_from_slice(key);
    }
    let inner = Sha256::new().chain_update(k.map(|b| b ^ 0x36)).chain_update(msg).finalize();
    Sha256::new().chain_update(k.map(|b| b ^ 0x5c)).chain_update(inner).finalize().into()
}

fn pbkdf2_sha256(password: &[u8], salt: &[u8], iterations: u32) -> [u8; 32] {
    let mut u = hmac_sha256(password, &[salt, &1u32.to_be_bytes()].concat());
    let mut t = u;
    for _ in 1..iterations {
        u = hmac_sha256(password, &u);
        t.iter_mut().zip(u).for_each(|(a, b)| *a ^= b);
    }
    t
}

fn c9_kdf_conformance() -> Outcome {
    let published = [
        (1, "120fb6cffcf8b32c43e7225256c4f837a86548c92ccc35480805987cb70be17b"),
        (2, "ae4d0c95af6b46d32d0adff928f06dd02a303f8ef3c251dfd6e2d85a95474c43"),
        (4096, "c5e478d59288c841aa530db6845c4c8d962893a001ce4e11a4963873aa98134a"),
    ];
    for (iterations, want) in published {
        check!(hex::encode(pbkdf2_sha256(b"password", b"salt", iterations)) == want, "oracle wrong at c={iterations}");
    }
    let counting: [u8; 16] = std::array::from_fn(|i| i as u8);
    let vectors: [(&str, [u8; 16], u32); 7] = [
        ("password", counting, 1),
        ("password", counting, 2),
        ("password", counting, 4096),
        ("correct horse battery staple", [0xff; 16], 1000),
        ("pässwörd", [0; 16], 10),
        ("a", [0x5a; 16], 3),
        (&"long password ".repeat(10), [0x11; 16], 7),
    ];
    for (password, salt, iterations) in &vectors {
        let got = derive_kek(password, salt, *iterations).unwrap();
        check!(
            *got.as_bytes() == pbkdf2_sha256(password.as_bytes(), salt, *iterations),
            "derive_kek differs for {password:?} at {iterations} iterations"
        );
    }
    Ok(format!("oracle matches 3 published vectors; derive_kek matches oracle on {} vectors (c = 1, 2, 4096, ...)", vectors.len()))
}

fn c10_size_inversion() -> Outcome {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(10);
    let mut sizes: Vec<u64> = vec![0, 1, 32767, 32768, 32769, 65536, 10_000_000];
    while sizes.len() < 1000 {
        sizes.push(rng.random_range(0..=10_000_000));
    }
    let mut summary = Vec::new();
    for mode in [ModeId::V1, ModeId::Sealed] {
        let tmp = tempfile::tempdir().unwrap();
        let vault = new_vault(tmp.path(), mode, 10);
        for (batch_no, batch) in sizes.chunks(25).enumerate() {
            for (i, &size) in batch.iter().enumerate() {
                vault.write_file(&format!("/f{i:02}"), &mut io::repeat(b's').take(size)).unwrap();
            }
            let listing = vault.list_dir("/").unwrap();
            check!(listing.len() == batch.len(), "{mode}: batch {batch_no} lists {} entries", listing.len());
            for entry in listing {
                let i: usize = entry.name[1..].parse().unwrap();
                check!(
                    entry.kind == EntryKind::File && entry.size == Some(batch[i]),
                    "{mode}: size {} listed as {:?}",
                    batch[i],
                    entry.size
                );
                vault.remove_file(&format!("/{}", entry.name)).unwrap();
            }
        }
        summary.push(format!("{mode} 1000/1000"));
    }
    Ok(format!("{} exact; {:.0} s", summary.join(", "), start.elapsed().as_secs_f64()))
}

fn main() {
    let criteria: [Criterion; 10] = [
        (1, "overhead law", c1_overhead_law),
        (2, "inflation ratio", c2_inflation_ratio),
        (3, "platform binding", c3_platform_binding),
        (4, "two-factor access", c4_two_factor),
        (5, "filename ceiling", c5_filename_ceiling),
        (6, "tamper/reorder detection", c6_tamper_detection),
        (7, "end-to-end round trip", c7_end_to_end),
        (8, "bench reproduction shape", c8_bench_shape),
        (9, "KDF conformance", c9_kdf_conformance),
        (10, "size-formula inversion", c10_size_inversion),
    ];
    let selected: Vec<u32> = std::env::args().skip(1).filter_map(|a| a.parse().ok()).collect();
    let mut failed = 0;
    for (n, name, run) in criteria {
        if !selected.is_empty() && !selected.contains(&n) {
            continue;
        }
        let outcome = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|panic| {
            let msg = panic.downcast_ref::<String>().cloned().or_else(|| panic.downcast_ref::<&str>().map(|s| s.to_string()));
            Err(format!("panicked: {}", msg.unwrap_or_default()))
        });
        match outcome {
            Ok(detail) => println!("criterion {n:>2} PASS  {name}: {detail}"),
            Err(why) => {
                failed += 1;
                println!("criterion {n:>2} FAIL  {name}: {why}");
            }
        }
    }
    if failed > 0 {
        println!("{failed} acceptance criteria failed");
        std::process::exit(1);
    }
}
