use std::fs;
use std::path::{Path, PathBuf};

use sealvault_core::modes::{encoded_name_len, ModeId, BLOCK_SIZE, MAX_NAME_BYTES};
use sealvault_core::tee::create_platform;
use sealvault_core::vault::{
    ciphertext_size, create_vault_with, read_config, unlock_vault, EntryKind, VaultError, VaultHandle, VaultOptions,
    CONFIG_FILE, DATA_DIR, FILE_HEADER_LEN,
};
use sealvault_core::PlatformIdentity;

const FAST: VaultOptions =
    VaultOptions { kdf_iterations: 2, sealing_policy: sealvault_core::SealingPolicy::MrEnclave };

fn platform() -> PlatformIdentity {
    create_platform(&[0x42; 32])
}

fn open(dir: &Path, mode: ModeId) -> VaultHandle {
    let p = platform();
    let p = (mode == ModeId::Sealed).then_some(&p);
    create_vault_with(dir, "hunter2", mode, p, &FAST).unwrap();
    unlock_vault(dir, "hunter2", p).unwrap()
}

fn pattern(len: usize, seed: u8) -> Vec<u8> {
    (0..len).map(|i| (i as u8).wrapping_mul(31).wrapping_add(seed)).collect()
}

fn physical_files(root: &Path) -> Vec<PathBuf> {
    let mut out = Vec::new();
    let mut pending = vec![root.join(DATA_DIR)];
    while let Some(d) = pending.pop() {
        for e in fs::read_dir(d).unwrap() {
            let p = e.unwrap().path();
            if p.is_dir() {
                pending.push(p);
            } else {
                out.push(p);
            }
        }
    }
    out
}

#[test]
fn round_trip_both_modes() {
    for mode in [ModeId::V1, ModeId::Sealed] {
        let tmp = tempfile::tempdir().unwrap();
        let v = open(tmp.path(), mode);
        for len in [0, 1, BLOCK_SIZE - 1, BLOCK_SIZE, BLOCK_SIZE + 1, 3 * BLOCK_SIZE + 17] {
            let data = pattern(len, len as u8);
            let path = format!("/f{len}");
            let stats = v.write_bytes(&path, &data).unwrap();
            assert_eq!(stats.cleartext_len, len as u64);
            assert_eq!(stats.stored_len, ciphertext_size(mode, len as u64), "{mode} {len}");
            assert_eq!(v.read_file(&path).unwrap(), data, "{mode} {len}");
            assert_eq!(v.file_size(&path).unwrap(), len as u64);
        }
    }
}

#[test]
fn directories_nest_and_list() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    v.create_dir_all("/docs/2024/q1").unwrap();
    v.write_bytes("/docs/readme", b"hi").unwrap();
    v.write_bytes("/docs/2024/q1/report", &pattern(70_000, 1)).unwrap();
    let top = v.list_dir("/docs").unwrap();
    assert_eq!(top.len(), 2);
    assert_eq!((top[0].name.as_str(), top[0].kind), ("2024", EntryKind::Directory));
    assert_eq!((top[1].name.as_str(), top[1].kind, top[1].size), ("readme", EntryKind::File, Some(2)));
    assert_eq!(v.list_dir("/docs/2024/q1").unwrap()[0].size, Some(70_000));
    assert_eq!(v.walk_files().unwrap(), ["/docs/2024/q1/report", "/docs/readme"]);
    assert!(matches!(v.create_dir("/docs"), Err(VaultError::AlreadyExists(_))));
    assert!(matches!(v.list_dir("/nope"), Err(VaultError::NotFound(_))));
    assert!(matches!(v.read_file("/docs"), Err(VaultError::IsADirectory(_))));
    assert!(matches!(v.write_bytes("/docs/readme/x", b""), Err(VaultError::NotADirectory(_))));
}

#[test]
fn cleartext_names_never_reach_disk() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    v.create_dir("/very-secret-project").unwrap();
    v.write_bytes("/very-secret-project/salary-list.xlsx", b"contents that are secret").unwrap();
    for path in physical_files(tmp.path()) {
        let rel = path.strip_prefix(tmp.path()).unwrap().to_string_lossy().into_owned();
        assert!(!rel.contains("secret") && !rel.contains("salary"), "{rel}");
        let bytes = fs::read(&path).unwrap();
        assert!(!bytes.windows(6).any(|w| w == b"secret"), "{rel}");
    }
}

#[test]
fn rename_moves_files_and_directories() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    v.create_dir_all("/a/b").unwrap();
    v.create_dir("/c").unwrap();
    v.write_bytes("/a/b/file", b"payload").unwrap();
    v.rename("/a/b/file", "/c/moved").unwrap();
    assert_eq!(v.read_file("/c/moved").unwrap(), b"payload");
    assert!(matches!(v.read_file("/a/b/file"), Err(VaultError::NotFound(_))));
    v.rename("/a/b", "/c/b2").unwrap();
    assert!(v.list_dir("/c/b2").unwrap().is_empty());
    v.write_bytes("/x", b"1").unwrap();
    assert!(matches!(v.rename("/x", "/c"), Err(VaultError::AlreadyExists(_))));
}

#[test]
fn remove_file_and_dir() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    v.create_dir("/d").unwrap();
    v.write_bytes("/d/f", b"x").unwrap();
    assert!(matches!(v.remove_dir("/d"), Err(VaultError::DirectoryNotEmpty(_))));
    v.remove_file("/d/f").unwrap();
    v.remove_dir("/d").unwrap();
    assert!(v.list_dir("/").unwrap().is_empty());
    assert!(matches!(v.remove_file("/d/f"), Err(VaultError::NotFound(_))));
}

#[test]
fn range_reads_touch_only_needed_blocks() {
    for mode in [ModeId::V1, ModeId::Sealed] {
        let tmp = tempfile::tempdir().unwrap();
        let v = open(tmp.path(), mode);
        let data = pattern(5 * BLOCK_SIZE + 100, 7);
        v.write_bytes("/big", &data).unwrap();
        for (off, len) in [(0, 10), (BLOCK_SIZE as u64 - 3, 6), (4 * BLOCK_SIZE as u64, 2000), (0, u64::MAX)] {
            let got = v.read_range("/big", off, len).unwrap();
            let end = (off.saturating_add(len)).min(data.len() as u64) as usize;
            assert_eq!(got, &data[off as usize..end]);
        }
        assert!(v.read_range("/big", data.len() as u64 + 5, 10).unwrap().is_empty());
    }
}

#[test]
fn wrong_password_is_rejected() {
    let tmp = tempfile::tempdir().unwrap();
    drop(open(tmp.path(), ModeId::V1));
    assert!(matches!(unlock_vault(tmp.path(), "wrong", None), Err(VaultError::WrongPassword)));
    assert!(matches!(unlock_vault(tmp.path(), "", None), Err(VaultError::WrongPassword)));
}

#[test]
fn sealed_vault_needs_password_and_platform() {
    let tmp = tempfile::tempdir().unwrap();
    drop(open(tmp.path(), ModeId::Sealed));
    let right = platform();
    let wrong = create_platform(&[0x43; 32]);
    assert!(unlock_vault(tmp.path(), "hunter2", Some(&right)).is_ok());
    assert!(matches!(unlock_vault(tmp.path(), "nope", Some(&right)), Err(VaultError::WrongPassword)));
    assert!(matches!(unlock_vault(tmp.path(), "hunter2", Some(&wrong)), Err(VaultError::UnsealFailure)));
    assert!(matches!(unlock_vault(tmp.path(), "nope", Some(&wrong)), Err(VaultError::WrongPassword)));
    assert!(matches!(unlock_vault(tmp.path(), "hunter2", None), Err(VaultError::MissingPlatform)));
}

#[test]
fn creation_preconditions() {
    let tmp = tempfile::tempdir().unwrap();
    assert!(matches!(
        create_vault_with(tmp.path(), "pw", ModeId::Sealed, None, &FAST),
        Err(VaultError::MissingPlatform)
    ));
    fs::write(tmp.path().join("stray"), b"x").unwrap();
    assert!(matches!(
        create_vault_with(tmp.path(), "pw", ModeId::V1, None, &FAST),
        Err(VaultError::TargetNotEmpty(_))
    ));
    let fresh = tmp.path().join("new/nested");
    create_vault_with(&fresh, "pw", ModeId::V1, None, &FAST).unwrap();
    assert!(matches!(
        create_vault_with(&fresh, "pw", ModeId::V1, None, &FAST),
        Err(VaultError::TargetNotEmpty(_))
    ));
    assert_eq!(read_config(&fresh).unwrap().kdf.iterations, 2);
}

#[test]
fn corrupt_config_is_reported() {
    let tmp = tempfile::tempdir().unwrap();
    drop(open(tmp.path(), ModeId::V1));
    let cfg = tmp.path().join(CONFIG_FILE);
    let mut bytes = fs::read(&cfg).unwrap();
    bytes[20] ^= 1;
    fs::write(&cfg, bytes).unwrap();
    assert!(matches!(unlock_vault(tmp.path(), "hunter2", None), Err(VaultError::CorruptConfig(_))));
}

#[test]
fn tampered_and_swapped_objects_fail_authentication() {
    for mode in [ModeId::V1, ModeId::Sealed] {
        let tmp = tempfile::tempdir().unwrap();
        let v = open(tmp.path(), mode);
        v.write_bytes("/a", &pattern(2 * BLOCK_SIZE, 1)).unwrap();
        v.write_bytes("/b", &pattern(2 * BLOCK_SIZE, 2)).unwrap();
        let pa = v.map_path("/a").unwrap();
        let pb = v.map_path("/b").unwrap();
        let original = fs::read(&pa).unwrap();

        let mut flipped = original.clone();
        flipped[FILE_HEADER_LEN + 100] ^= 0x10;
        fs::write(&pa, &flipped).unwrap();
        assert!(matches!(v.read_file("/a"), Err(VaultError::AuthenticationFailure)), "{mode} flip");

        // a block taken from another file carries that file's id in its AAD
        let other = fs::read(&pb).unwrap();
        let block = BLOCK_SIZE + mode.block_overhead();
        let mut spliced = original.clone();
        spliced[FILE_HEADER_LEN..FILE_HEADER_LEN + block]
            .copy_from_slice(&other[FILE_HEADER_LEN..FILE_HEADER_LEN + block]);
        fs::write(&pa, &spliced).unwrap();
        assert!(matches!(v.read_file("/a"), Err(VaultError::AuthenticationFailure)), "{mode} splice");

        let mut reordered = original.clone();
        let (b0, b1) = (FILE_HEADER_LEN, FILE_HEADER_LEN + block);
        reordered[b0..b0 + block].copy_from_slice(&original[b1..b1 + block]);
        reordered[b1..b1 + block].copy_from_slice(&original[b0..b0 + block]);
        fs::write(&pa, &reordered).unwrap();
        assert!(matches!(v.read_file("/a"), Err(VaultError::AuthenticationFailure)), "{mode} reorder");

        fs::write(&pa, &original[..original.len() - block]).unwrap();
        assert!(v.read_file("/a").is_err(), "{mode} truncated by a block");

        fs::write(&pa, &original).unwrap();
        assert_eq!(v.read_file("/a").unwrap(), pattern(2 * BLOCK_SIZE, 1));
    }
}

#[test]
fn foreign_names_list_as_unreadable() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    v.write_bytes("/real", b"1").unwrap();
    let shard = v.map_path("/real").unwrap().parent().unwrap().to_path_buf();
    fs::write(shard.join("AAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAAA.sc"), vec![0u8; FILE_HEADER_LEN]).unwrap();
    fs::write(shard.join("ignored.txt"), b"").unwrap();
    let entries = v.list_dir("/").unwrap();
    assert_eq!(entries.len(), 2);
    assert!(entries.iter().any(|e| e.kind == EntryKind::Unreadable));
}

#[test]
fn longest_name_fits_the_platform_limit() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    let name = "n".repeat(MAX_NAME_BYTES);
    v.write_bytes(&format!("/{name}"), b"x").unwrap();
    let physical = v.map_path(&format!("/{name}")).unwrap();
    let len = physical.file_name().unwrap().len();
    assert_eq!(len, encoded_name_len(MAX_NAME_BYTES));
    assert!(len <= 255);
    assert!(matches!(
        v.write_bytes(&format!("/{}", "n".repeat(MAX_NAME_BYTES + 1)), b"x"),
        Err(VaultError::NameTooLong(161))
    ));
}

#[test]
fn concurrent_writers_on_distinct_files() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::Sealed);
    std::thread::scope(|s| {
        for t in 0..4u8 {
            let v = &v;
            s.spawn(move || {
                for i in 0..5 {
                    let data = pattern(BLOCK_SIZE + i * 100, t);
                    v.write_bytes(&format!("/t{t}-{i}"), &data).unwrap();
                    assert_eq!(v.read_file(&format!("/t{t}-{i}")).unwrap(), data);
                }
            });
        }
    });
    assert_eq!(v.walk_files().unwrap().len(), 20);
}

#[test]
fn concurrent_writers_on_one_file_leave_a_whole_version() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    let versions: Vec<Vec<u8>> = (0..4u8).map(|t| pattern(3 * BLOCK_SIZE, t)).collect();
    std::thread::scope(|s| {
        for data in &versions {
            let v = &v;
            s.spawn(move || v.write_bytes("/shared", data).unwrap());
        }
    });
    assert!(versions.contains(&v.read_file("/shared").unwrap()));
}

#[test]
fn concurrent_mkdir_of_one_path_converges() {
    let tmp = tempfile::tempdir().unwrap();
    let v = open(tmp.path(), ModeId::V1);
    for round in 0..20 {
        let dir = format!("/r{round}/shared/leaf");
        std::thread::scope(|s| {
            for t in 0..4u8 {
                let (v, dir) = (&v, &dir);
                s.spawn(move || {
                    v.create_dir_all(dir).unwrap();
                    v.write_bytes(&format!("{dir}/f{t}"), &[t; 10]).unwrap();
                });
            }
        });
        let names: Vec<_> = v.list_dir(&dir).unwrap().into_iter().map(|e| e.name).collect();
        assert_eq!(names, ["f0", "f1", "f2", "f3"]);
        assert_eq!(v.list_dir(&format!("/r{round}")).unwrap().len(), 1);
    }
    assert!(matches!(v.create_dir("/r0"), Err(VaultError::AlreadyExists(_))));
}
