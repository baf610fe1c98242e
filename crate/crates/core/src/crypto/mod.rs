//! Hash and cipher profiles, key derivation and the session-key rule.
//!
//! Three profiles pair a hash with a cipher:
//!
//! | profile     | hash       | cipher                 |
//! |-------------|------------|------------------------|
//! | Lightweight | SHA-256    | SIMON 64/128, CTR mode |
//! | Midweight   | SHA-256    | Twofish-128, CTR mode  |
//! | Heavyweight | SHA3-512   | AES-128-GCM            |
//!
//! The CTR-mode ciphers carry no integrity of their own; the protocol layer
//! supplies it with digests.

mod simon;

use std::fmt;
use std::str::FromStr;

use aes_gcm::aead::{AeadInPlace, KeyInit};
use aes_gcm::{Aes128Gcm, Nonce as GcmNonce, Tag};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};
use sha3::Sha3_512;
use thiserror::Error;
use twofish::cipher::{generic_array::GenericArray, BlockEncrypt};
use twofish::Twofish;

pub use simon::Simon64_128;

pub const KEY_BYTES: usize = 16;
pub const NONCE_BYTES: usize = 12;
pub const GCM_TAG_BYTES: usize = 16;

#[derive(Debug, Error, PartialEq, Eq)]
pub enum CryptoError {
    #[error("authentication tag mismatch")]
    Authentication,
    #[error("ciphertext shorter than the authentication tag")]
    Truncated,
    #[error("unknown profile `{0}`")]
    UnknownProfile(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, PartialOrd, Ord, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum CryptoProfile {
    #[serde(alias = "light")]
    Lightweight,
    #[serde(alias = "mid")]
    Midweight,
    #[serde(alias = "heavy")]
    Heavyweight,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum HashAlgorithm {
    Sha256,
    Sha3_512,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum CipherAlgorithm {
    Simon64_128Ctr,
    Twofish128Ctr,
    Aes128Gcm,
}

impl CryptoProfile {
    pub const ALL: [CryptoProfile; 3] = [
        CryptoProfile::Lightweight,
        CryptoProfile::Midweight,
        CryptoProfile::Heavyweight,
    ];

    pub fn hash_algorithm(self) -> HashAlgorithm {
        match self {
            CryptoProfile::Lightweight | CryptoProfile::Midweight => HashAlgorithm::Sha256,
            CryptoProfile::Heavyweight => HashAlgorithm::Sha3_512,
        }
    }

    pub fn cipher(self) -> CipherAlgorithm {
        match self {
            CryptoProfile::Lightweight => CipherAlgorithm::Simon64_128Ctr,
            CryptoProfile::Midweight => CipherAlgorithm::Twofish128Ctr,
            CryptoProfile::Heavyweight => CipherAlgorithm::Aes128Gcm,
        }
    }

    pub fn digest_bits(self) -> usize {
        match self.hash_algorithm() {
            HashAlgorithm::Sha256 => 256,
            HashAlgorithm::Sha3_512 => 512,
        }
    }

    pub fn digest_bytes(self) -> usize {
        self.digest_bits() / 8
    }

    pub fn key_bits(self) -> usize {
        KEY_BYTES * 8
    }

    /// Bytes a ciphertext grows by relative to its plaintext.
    pub fn tag_bytes(self) -> usize {
        match self.cipher() {
            CipherAlgorithm::Aes128Gcm => GCM_TAG_BYTES,
            _ => 0,
        }
    }

    /// 2-bit identifier carried in wire frames.
    pub fn wire_id(self) -> u8 {
        match self {
            CryptoProfile::Lightweight => 0,
            CryptoProfile::Midweight => 1,
            CryptoProfile::Heavyweight => 2,
        }
    }

    pub fn from_wire_id(id: u8) -> Option<Self> {
        match id {
            0 => Some(CryptoProfile::Lightweight),
            1 => Some(CryptoProfile::Midweight),
            2 => Some(CryptoProfile::Heavyweight),
            _ => None,
        }
    }

    pub fn short_name(self) -> &'static str {
        match self {
            CryptoProfile::Lightweight => "light",
            CryptoProfile::Midweight => "mid",
            CryptoProfile::Heavyweight => "heavy",
        }
    }
}

impl fmt::Display for CryptoProfile {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        let s = match self {
            CryptoProfile::Lightweight => "Lightweight",
            CryptoProfile::Midweight => "Midweight",
            CryptoProfile::Heavyweight => "Heavyweight",
        };
        f.write_str(s)
    }
}

impl FromStr for CryptoProfile {
    type Err = CryptoError;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        match s.to_ascii_lowercase().as_str() {
            "light" | "lightweight" => Ok(CryptoProfile::Lightweight),
            "mid" | "midweight" => Ok(CryptoProfile::Midweight),
            "heavy" | "heavyweight" => Ok(CryptoProfile::Heavyweight),
            _ => Err(CryptoError::UnknownProfile(s.to_string())),
        }
    }
}

/// 128-bit symmetric key.
#[derive(Clone, Copy, PartialEq, Eq, Hash)]
pub struct CipherKey(pub [u8; KEY_BYTES]);

impl fmt::Debug for CipherKey {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        write!(f, "CipherKey({})", hex::encode(self.0))
    }
}

/// Per-update session key, `kdf(I1) XOR pad128(timestamp)`.
pub type SessionKey = CipherKey;

#[derive(Clone, Copy, PartialEq, Eq, Hash, Debug)]
pub struct Nonce(pub [u8; NONCE_BYTES]);

pub fn hash(profile: CryptoProfile, data: &[u8]) -> Vec<u8> {
    hash_parts(profile, &[data])
}

/// Digest of the concatenation of `parts`.
pub fn hash_parts(profile: CryptoProfile, parts: &[&[u8]]) -> Vec<u8> {
    match profile.hash_algorithm() {
        HashAlgorithm::Sha256 => {
            let mut h = Sha256::new();
            parts.iter().for_each(|p| h.update(p));
            h.finalize().to_vec()
        }
        HashAlgorithm::Sha3_512 => {
            let mut h = Sha3_512::new();
            parts.iter().for_each(|p| h.update(p));
            h.finalize().to_vec()
        }
    }
}

/// `truncate(hash(le64(element)), 128)`.
pub fn kdf_from_element(profile: CryptoProfile, element: u64) -> CipherKey {
    let d = hash(profile, &element.to_le_bytes());
    let mut k = [0u8; KEY_BYTES];
    k.copy_from_slice(&d[..KEY_BYTES]);
    CipherKey(k)
}

/// Timestamp as a 128-bit block: little-endian seconds then eight zero bytes.
pub fn timestamp_block(timestamp: u64) -> [u8; KEY_BYTES] {
    let mut b = [0u8; KEY_BYTES];
    b[..8].copy_from_slice(&timestamp.to_le_bytes());
    b
}

pub fn derive_session_key(element_key: &CipherKey, timestamp: u64) -> SessionKey {
    let pad = timestamp_block(timestamp);
    CipherKey(core::array::from_fn(|i| element_key.0[i] ^ pad[i]))
}

pub fn encrypt(profile: CryptoProfile, key: &CipherKey, plaintext: &[u8], nonce: &Nonce) -> Vec<u8> {
    match profile.cipher() {
        CipherAlgorithm::Aes128Gcm => {
            let cipher = Aes128Gcm::new(GenericArray::from_slice(&key.0));
            let mut buf = plaintext.to_vec();
            let tag = cipher
                .encrypt_in_place_detached(GcmNonce::from_slice(&nonce.0), b"", &mut buf)
                .expect("GCM plaintext within length limit");
            buf.extend_from_slice(&tag);
            buf
        }
        _ => {
            let mut buf = plaintext.to_vec();
            apply_ctr(profile, key, nonce, &mut buf);
            buf
        }
    }
}

pub fn decrypt(
    profile: CryptoProfile,
    key: &CipherKey,
    ciphertext: &[u8],
    nonce: &Nonce,
) -> Result<Vec<u8>, CryptoError> {
    match profile.cipher() {
        CipherAlgorithm::Aes128Gcm => {
            if ciphertext.len() < GCM_TAG_BYTES {
                return Err(CryptoError::Truncated);
            }
            let (body, tag) = ciphertext.split_at(ciphertext.len() - GCM_TAG_BYTES);
            let cipher = Aes128Gcm::new(GenericArray::from_slice(&key.0));
            let mut buf = body.to_vec();
            cipher
                .decrypt_in_place_detached(GcmNonce::from_slice(&nonce.0), b"", &mut buf, Tag::from_slice(tag))
                .map_err(|_| CryptoError::Authentication)?;
            Ok(buf)
        }
        _ => {
            let mut buf = ciphertext.to_vec();
            apply_ctr(profile, key, nonce, &mut buf);
            Ok(buf)
        }
    }
}

/// XORs the keystream into `buf`.
///
/// 128-bit blocks: counter block = nonce || be32(i).
/// 64-bit blocks: counter block = fold32(nonce) || be32(i), where fold32 XORs
/// the three little-endian nonce words.
fn apply_ctr(profile: CryptoProfile, key: &CipherKey, nonce: &Nonce, buf: &mut [u8]) {
    match profile.cipher() {
        CipherAlgorithm::Twofish128Ctr => {
            let cipher = Twofish::new_from_slice(&key.0).expect("16-byte key");
            let mut ctr_block = [0u8; 16];
            ctr_block[..NONCE_BYTES].copy_from_slice(&nonce.0);
            for (i, chunk) in buf.chunks_mut(16).enumerate() {
                let i = u32::try_from(i).expect("counter overflow");
                ctr_block[12..].copy_from_slice(&i.to_be_bytes());
                let mut ks = GenericArray::clone_from_slice(&ctr_block);
                cipher.encrypt_block(&mut ks);
                chunk.iter_mut().zip(ks.iter()).for_each(|(b, k)| *b ^= k);
            }
        }
        CipherAlgorithm::Simon64_128Ctr => {
            let cipher = Simon64_128::new(&key.0);
            let w = |i: usize| u32::from_le_bytes([nonce.0[i], nonce.0[i + 1], nonce.0[i + 2], nonce.0[i + 3]]);
            let fold = w(0) ^ w(4) ^ w(8);
            for (i, chunk) in buf.chunks_mut(8).enumerate() {
                let i = u32::try_from(i).expect("counter overflow");
                let mut ks = [0u8; 8];
                ks[..4].copy_from_slice(&fold.to_le_bytes());
                ks[4..].copy_from_slice(&i.to_be_bytes());
                cipher.encrypt_block(&mut ks);
                chunk.iter_mut().zip(ks.iter()).for_each(|(b, k)| *b ^= k);
            }
        }
        CipherAlgorithm::Aes128Gcm => unreachable!("GCM handled by the AEAD path"),
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use proptest::prelude::*;

    fn h(p: CryptoProfile, d: &[u8]) -> String {
        hex::encode(hash(p, d))
    }

    #[test]
    fn sha256_known_answers() {
        let p = CryptoProfile::Lightweight;
        assert_eq!(
            h(p, b""),
            "e3b0c44298fc1c149afbf4c8996fb92427ae41e4649b934ca495991b7852b855"
        );
        assert_eq!(
            h(p, b"abc"),
            "ba7816bf8f01cfea414140de5dae2223b00361a396177a9cb410ff61f20015ad"
        );
        assert_eq!(
            h(p, b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"),
            "248d6a61d20638b8e5c026930c3e6039a33ce45964ff2167f6ecedd419db06c1"
        );
    }

    #[test]
    fn sha3_512_known_answers() {
        let p = CryptoProfile::Heavyweight;
        assert_eq!(
            h(p, b""),
            "a69f73cca23a9ac5c8b567dc185a756e97c982164fe25859e0d1dcc1475c80a6\
             15b2123af1f5f94c11e3e9402c3ac558f500199d95b6d3e301758586281dcd26"
        );
        assert_eq!(
            h(p, b"abc"),
            "b751850b1a57168a5693cd924b6b096e08f621827444f70d884f5d0240d2712e\
             10e116e9192af3c91a7ec57647e3934057340b4cf408d5a56592f8274eec53f0"
        );
        assert_eq!(
            h(p, b"abcdbcdecdefdefgefghfghighijhijkijkljklmklmnlmnomnopnopq"),
            "04a371e84ecfb5b8b77cb48610fca8182dd457ce6f326a0fd3d7ec2f1e91636d\
             ee691fbe0c985302ba1b0d8dc78c086346b533b49c030d99a27daf1139d6e75e"
        );
    }

    #[test]
    fn twofish_known_answer() {
        let c = Twofish::new_from_slice(&[0u8; 16]).unwrap();
        let mut b = GenericArray::clone_from_slice(&[0u8; 16]);
        c.encrypt_block(&mut b);
        assert_eq!(hex::encode(b), "9f589f5cf6122c32b6bfec2f2ae8c35a");
    }

    #[test]
    fn aes_gcm_known_answer() {
        // McGrew/Viega test case 2.
        let ct = encrypt(
            CryptoProfile::Heavyweight,
            &CipherKey([0; 16]),
            &[0u8; 16],
            &Nonce([0; 12]),
        );
        assert_eq!(hex::encode(&ct[..16]), "0388dace60b6a392f328c2b971b2fe78");
        assert_eq!(hex::encode(&ct[16..]), "ab6e47d42cec13bdf53a67b21257bddf");
    }

    #[test]
    fn digest_widths() {
        assert_eq!(hash(CryptoProfile::Lightweight, b"x").len() * 8, 256);
        assert_eq!(hash(CryptoProfile::Midweight, b"x").len() * 8, 256);
        assert_eq!(hash(CryptoProfile::Heavyweight, b"x").len() * 8, 512);
    }

    #[test]
    fn gcm_bit_flip_fails_authentication() {
        let key = CipherKey([7; 16]);
        let n = Nonce([1; 12]);
        let mut ct = encrypt(CryptoProfile::Heavyweight, &key, b"firmware", &n);
        ct[3] ^= 0x10;
        assert_eq!(
            decrypt(CryptoProfile::Heavyweight, &key, &ct, &n),
            Err(CryptoError::Authentication)
        );
    }

    #[test]
    fn kdf_definition_and_separation() {
        let k0 = kdf_from_element(CryptoProfile::Lightweight, 0);
        assert_eq!(&k0.0[..], &hash(CryptoProfile::Lightweight, &[0u8; 8])[..16]);
        assert_eq!(k0, kdf_from_element(CryptoProfile::Midweight, 0));
        assert_ne!(k0, kdf_from_element(CryptoProfile::Heavyweight, 0));
    }

    #[test]
    fn kdf_no_collisions_over_1e5_elements() {
        let mut seen = std::collections::HashSet::new();
        for e in 0..100_000u64 {
            assert!(seen.insert(kdf_from_element(CryptoProfile::Lightweight, e).0));
        }
    }

    #[test]
    fn session_key_xor_rules() {
        let k = CipherKey([0xa5; 16]);
        assert_eq!(derive_session_key(&k, 0), k);
        let sk = derive_session_key(&k, 1_700_000_000);
        assert_eq!(derive_session_key(&sk, 1_700_000_000), k);
        assert_eq!(&sk.0[8..], &k.0[8..]);
    }

    #[test]
    fn profile_names_roundtrip() {
        for p in CryptoProfile::ALL {
            assert_eq!(p.short_name().parse::<CryptoProfile>().unwrap(), p);
            assert_eq!(CryptoProfile::from_wire_id(p.wire_id()), Some(p));
        }
        assert!(CryptoProfile::from_wire_id(3).is_none());
    }

    #[test]
    fn large_payload_roundtrip_all_profiles() {
        use rand::{RngCore, SeedableRng};
        let mut rng = rand_chacha::ChaCha8Rng::seed_from_u64(3);
        let mut payload = vec![0u8; 1183 * 1024];
        rng.fill_bytes(&mut payload);
        for p in CryptoProfile::ALL {
            let key = CipherKey([9; 16]);
            let n = Nonce([4; 12]);
            let ct = encrypt(p, &key, &payload, &n);
            assert_eq!(ct.len(), payload.len() + p.tag_bytes());
            assert_ne!(&ct[..64], &payload[..64]);
            assert_eq!(decrypt(p, &key, &ct, &n).unwrap(), payload);
        }
    }

    proptest! {
        #[test]
        fn roundtrip_any_length(data in proptest::collection::vec(any::<u8>(), 0..300), k in any::<[u8; 16]>(), n in any::<[u8; 12]>()) {
            for p in CryptoProfile::ALL {
                let ct = encrypt(p, &CipherKey(k), &data, &Nonce(n));
                prop_assert_eq!(decrypt(p, &CipherKey(k), &ct, &Nonce(n)).unwrap(), data.clone());
            }
        }

        #[test]
        fn hash_is_deterministic_and_sensitive(data in proptest::collection::vec(any::<u8>(), 1..200), bit in 0usize..8) {
            for p in CryptoProfile::ALL {
                let mut flipped = data.clone();
                flipped[0] ^= 1 << bit;
                prop_assert_eq!(hash(p, &data), hash(p, &data));
                prop_assert_ne!(hash(p, &data), hash(p, &flipped));
            }
        }
    }
}
