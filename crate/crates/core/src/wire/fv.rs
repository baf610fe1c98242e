//! Firmware version code and the inner plaintext layout.

use serde::{Deserialize, Serialize};

use super::WireError;
use crate::crypto::{self, CryptoProfile};

/// Identifies which firmware line a device runs.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
pub struct DeviceKey {
    pub vendor_id: u16,
    pub device_type: u16,
    pub hw_revision: u8,
}

impl DeviceKey {
    pub const ENCODED_LEN: usize = 5;

    pub fn write(&self, out: &mut Vec<u8>) {
        out.extend_from_slice(&self.vendor_id.to_le_bytes());
        out.extend_from_slice(&self.device_type.to_le_bytes());
        out.push(self.hw_revision);
    }

    pub fn read(b: &[u8]) -> Self {
        Self {
            vendor_id: u16::from_le_bytes([b[0], b[1]]),
            device_type: u16::from_le_bytes([b[2], b[3]]),
            hw_revision: b[4],
        }
    }
}

/// The 200-bit firmware version code.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
pub struct FirmwareVersion {
    pub vendor_id: u16,
    pub device_type: u16,
    pub hw_revision: u8,
    pub sw_revision: u32,
    /// Epoch seconds after which the image must not be installed.
    pub best_before: u64,
    pub release_ts: u64,
}

impl FirmwareVersion {
    pub const ENCODED_LEN: usize = 25;

    pub fn device_key(&self) -> DeviceKey {
        DeviceKey {
            vendor_id: self.vendor_id,
            device_type: self.device_type,
            hw_revision: self.hw_revision,
        }
    }

    pub fn for_device(key: DeviceKey, sw_revision: u32, release_ts: u64, best_before: u64) -> Self {
        Self {
            vendor_id: key.vendor_id,
            device_type: key.device_type,
            hw_revision: key.hw_revision,
            sw_revision,
            best_before,
            release_ts,
        }
    }

    pub fn to_bytes(&self) -> [u8; Self::ENCODED_LEN] {
        let mut v = Vec::with_capacity(Self::ENCODED_LEN);
        self.device_key().write(&mut v);
        v.extend_from_slice(&self.sw_revision.to_le_bytes());
        v.extend_from_slice(&self.best_before.to_le_bytes());
        v.extend_from_slice(&self.release_ts.to_le_bytes());
        v.try_into().expect("fixed layout")
    }

    pub fn from_bytes(b: &[u8; Self::ENCODED_LEN]) -> Self {
        let key = DeviceKey::read(&b[..5]);
        let u64_at = |i: usize| u64::from_le_bytes(b[i..i + 8].try_into().unwrap());
        Self::for_device(
            key,
            u32::from_le_bytes(b[5..9].try_into().unwrap()),
            u64_at(17),
            u64_at(9),
        )
    }
}

/// `le32(len FI) || FI || FV || hash(le32(len) || FI || FV)`.
pub fn encode_inner(profile: CryptoProfile, image: &[u8], fv: &FirmwareVersion) -> Vec<u8> {
    let len = u32::try_from(image.len()).expect("image below 4 GiB");
    let mut out = Vec::with_capacity(4 + image.len() + FirmwareVersion::ENCODED_LEN + profile.digest_bytes());
    out.extend_from_slice(&len.to_le_bytes());
    out.extend_from_slice(image);
    out.extend_from_slice(&fv.to_bytes());
    let d = crypto::hash(profile, &out);
    out.extend_from_slice(&d);
    out
}

/// Parses and checks an inner plaintext. Any inconsistency, including a
/// digest mismatch from decrypting under the wrong key, is an error.
pub fn decode_inner(profile: CryptoProfile, bytes: &[u8]) -> Result<(Vec<u8>, FirmwareVersion), WireError> {
    let dlen = profile.digest_bytes();
    if bytes.len() < 4 + FirmwareVersion::ENCODED_LEN + dlen {
        return Err(WireError::Truncated);
    }
    let len = u32::from_le_bytes(bytes[..4].try_into().unwrap()) as usize;
    if bytes.len() != 4 + len + FirmwareVersion::ENCODED_LEN + dlen {
        return Err(WireError::InnerLength);
    }
    let (body, digest) = bytes.split_at(bytes.len() - dlen);
    if !super::ct_eq(&crypto::hash(profile, body), digest) {
        return Err(WireError::InnerDigest);
    }
    let fv_at = 4 + len;
    let fv = FirmwareVersion::from_bytes(bytes[fv_at..fv_at + FirmwareVersion::ENCODED_LEN].try_into().unwrap());
    Ok((bytes[4..fv_at].to_vec(), fv))
}
