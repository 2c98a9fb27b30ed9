//! Encrypted file vault with a simulated trusted execution environment.
//!
//! * [`tee`]: platform identities, sealing and local attestation reports.
//! * [`modes`]: the two content-protection modes, key derivation and name
//!   encryption.
//! * [`vault`]: on-disk layout, file objects and the vault handle.
//! * [`sync`]: reconciling a vault directory with a remote object store.

pub mod modes;
pub mod sync;
pub mod tee;
pub mod vault;

pub use modes::{CryptoError, ModeId};
pub use tee::{create_platform, PlatformIdentity, SealingPolicy};
pub use vault::{create_vault, create_vault_with, unlock_vault, VaultError, VaultHandle, VaultOptions};
