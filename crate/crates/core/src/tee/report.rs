use aes::Aes128;
use cmac::{Cmac, KeyInit, Mac};
use zeroize::Zeroizing;

use super::seal::cmac_aes256;
use super::{EnclaveIdentity, PlatformIdentity};

const REPORT_KEY_LABEL: &[u8] = b"REPORTv1";

/// measurement 32 | signer 32 | product_id u16 | isv_svn u16 | report_data 64
pub const REPORT_BODY_LEN: usize = 132;

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct ReportBody {
    pub measurement: [u8; 32],
    pub signer: [u8; 32],
    pub product_id: u16,
    pub isv_svn: u16,
    pub report_data: [u8; 64],
}

impl ReportBody {
    pub fn to_bytes(&self) -> [u8; REPORT_BODY_LEN] {
        let mut out = [0u8; REPORT_BODY_LEN];
        out[0..32].copy_from_slice(&self.measurement);
        out[32..64].copy_from_slice(&self.signer);
        out[64..66].copy_from_slice(&self.product_id.to_le_bytes());
        out[66..68].copy_from_slice(&self.isv_svn.to_le_bytes());
        out[68..132].copy_from_slice(&self.report_data);
        out
    }

    pub fn from_bytes(bytes: &[u8; REPORT_BODY_LEN]) -> Self {
        ReportBody {
            measurement: bytes[0..32].try_into().unwrap(),
            signer: bytes[32..64].try_into().unwrap(),
            product_id: u16::from_le_bytes([bytes[64], bytes[65]]),
            isv_svn: u16::from_le_bytes([bytes[66], bytes[67]]),
            report_data: bytes[68..132].try_into().unwrap(),
        }
    }
}

/// Local attestation report: who produced it plus a MAC only the target
/// enclave on the same platform can check.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct Report {
    pub body: ReportBody,
    pub mac: [u8; 16],
}

impl Report {
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = self.body.to_bytes().to_vec();
        out.extend_from_slice(&self.mac);
        out
    }

    pub fn from_bytes(bytes: &[u8]) -> Option<Self> {
        if bytes.len() != REPORT_BODY_LEN + 16 {
            return None;
        }
        Some(Report {
            body: ReportBody::from_bytes(bytes[..REPORT_BODY_LEN].try_into().unwrap()),
            mac: bytes[REPORT_BODY_LEN..].try_into().unwrap(),
        })
    }
}

fn report_key(platform: &PlatformIdentity, target: &EnclaveIdentity) -> Zeroizing<[u8; 16]> {
    let mut msg = Vec::with_capacity(REPORT_KEY_LABEL.len() + 32);
    msg.extend_from_slice(REPORT_KEY_LABEL);
    msg.extend_from_slice(&target.measurement);
    Zeroizing::new(cmac_aes256(platform.root_key(), &msg))
}

fn body_mac(key: &[u8; 16]) -> Cmac<Aes128> {
    <Cmac<Aes128> as KeyInit>::new_from_slice(key).expect("16-byte key")
}

pub fn create_report(
    platform: &PlatformIdentity,
    self_enclave: &EnclaveIdentity,
    target: &EnclaveIdentity,
    report_data: &[u8; 64],
) -> Report {
    let body = ReportBody {
        measurement: self_enclave.measurement,
        signer: self_enclave.signer,
        product_id: self_enclave.product_id,
        isv_svn: self_enclave.isv_svn,
        report_data: *report_data,
    };
    let key = report_key(platform, target);
    let mut mac = body_mac(&key);
    mac.update(&body.to_bytes());
    Report { body, mac: mac.finalize().into_bytes().into() }
}

/// Constant-time check of the report MAC under `target`'s report key.
pub fn verify_report(platform: &PlatformIdentity, target: &EnclaveIdentity, report: &Report) -> bool {
    let key = report_key(platform, target);
    let mut mac = body_mac(&key);
    mac.update(&report.body.to_bytes());
    mac.verify_slice(&report.mac).is_ok()
}
