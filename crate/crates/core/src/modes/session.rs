use std::sync::RwLock;

use crate::tee::{self, EnclaveIdentity, PlatformIdentity, SealedBlob, SealingPolicy};

use super::CryptoError;

pub const DEFAULT_ENCLAVE_PRODUCT_ID: u16 = 1;
pub const DEFAULT_ENCLAVE_ISV_SVN: u16 = 1;

struct ActiveEnclave {
    platform: PlatformIdentity,
    identity: EnclaveIdentity,
    policy: SealingPolicy,
}

enum SessionState {
    Uninitialized,
    Active(Box<ActiveEnclave>),
    Destroyed,
}

/// A loaded enclave. Crypto calls take a shared lock; `destroy` takes the
/// exclusive one, so it waits for in-flight calls and later calls fail.
pub struct EnclaveSession {
    state: RwLock<SessionState>,
}

impl Default for EnclaveSession {
    fn default() -> Self {
        Self::new()
    }
}

impl EnclaveSession {
    pub fn new() -> Self {
        EnclaveSession { state: RwLock::new(SessionState::Uninitialized) }
    }

    pub fn initialize(
        &self,
        platform: PlatformIdentity,
        identity: EnclaveIdentity,
        policy: SealingPolicy,
    ) -> Result<(), CryptoError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        match *state {
            SessionState::Uninitialized => {
                *state = SessionState::Active(Box::new(ActiveEnclave { platform, identity, policy }));
                Ok(())
            }
            _ => Err(CryptoError::AlreadyInitialized),
        }
    }

    fn with_active<T>(&self, f: impl FnOnce(&ActiveEnclave) -> Result<T, CryptoError>) -> Result<T, CryptoError> {
        let state = self.state.read().unwrap_or_else(|e| e.into_inner());
        match &*state {
            SessionState::Active(enclave) => f(enclave),
            SessionState::Uninitialized => Err(CryptoError::SessionNotInitialized),
            SessionState::Destroyed => Err(CryptoError::SessionDestroyed),
        }
    }

    pub fn identity(&self) -> Result<EnclaveIdentity, CryptoError> {
        self.with_active(|e| Ok(e.identity))
    }

    pub fn policy(&self) -> Result<SealingPolicy, CryptoError> {
        self.with_active(|e| Ok(e.policy))
    }

    pub fn seal(&self, payload: &[u8], aad: &[u8]) -> Result<SealedBlob, CryptoError> {
        self.with_active(|e| Ok(tee::seal(&e.platform, &e.identity, e.policy, payload, aad)?))
    }

    pub fn unseal(&self, blob: &SealedBlob, aad: &[u8]) -> Result<Vec<u8>, CryptoError> {
        self.with_active(|e| Ok(tee::unseal(&e.platform, &e.identity, blob, aad)?))
    }

    /// Tears the enclave down; the platform secret is zeroized on drop.
    pub fn destroy(&self) -> Result<(), CryptoError> {
        let mut state = self.state.write().unwrap_or_else(|e| e.into_inner());
        if matches!(*state, SessionState::Destroyed) {
            return Err(CryptoError::AlreadyDestroyed);
        }
        *state = SessionState::Destroyed;
        Ok(())
    }

    pub fn is_active(&self) -> bool {
        self.with_active(|_| Ok(())).is_ok()
    }
}

impl std::fmt::Debug for EnclaveSession {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        let state = self.state.read().unwrap_or_else(|e| e.into_inner());
        let name = match &*state {
            SessionState::Uninitialized => "uninitialized",
            SessionState::Active(_) => "active",
            SessionState::Destroyed => "destroyed",
        };
        f.debug_struct("EnclaveSession").field("state", &name).finish()
    }
}

/// Loads an enclave from its code and signer identity, with the default
/// product id, security version and MRENCLAVE policy.
pub fn init_enclave(
    platform: &PlatformIdentity,
    enclave_code: &[u8],
    signer: &[u8],
) -> Result<EnclaveSession, CryptoError> {
    let identity = tee::measure_enclave(
        enclave_code,
        signer,
        DEFAULT_ENCLAVE_PRODUCT_ID,
        DEFAULT_ENCLAVE_ISV_SVN,
    );
    let session = EnclaveSession::new();
    session.initialize(platform.clone(), identity, SealingPolicy::MrEnclave)?;
    Ok(session)
}

pub fn destroy_enclave(session: &EnclaveSession) -> Result<(), CryptoError> {
    session.destroy()
}
