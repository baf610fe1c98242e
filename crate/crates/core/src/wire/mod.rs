//! Byte-exact message layouts and checksum framing.
//!
//! Every message travels in one frame:
//!
//! ```text
//! magic "PPFW" | version u8 | kind u8 | flags u8 | body len u32 | body | checksum
//! ```
//!
//! The low two flag bits carry the profile id, the other six must be zero.
//! The checksum is the profile's hash over everything before it. Integers
//! are little-endian; bit strings are a `u16` bit count followed by the
//! MSB-first packed bytes.

mod fv;

use thiserror::Error;

use crate::bits::{BitString, Challenge, Response};
use crate::crypto::{self, CryptoProfile, Nonce, NONCE_BYTES};
use crate::dppuf::{SearchError, SetDescriptor, MAX_SET_SIZE};

pub use fv::{decode_inner, encode_inner, DeviceKey, FirmwareVersion};

pub const MAGIC: [u8; 4] = *b"PPFW";
pub const VERSION: u8 = 1;
/// Magic, version, kind, flags and body length.
pub const HEADER_LEN: usize = 11;

pub type InstanceId = [u8; 16];

#[derive(Debug, Error, Clone, PartialEq, Eq)]
pub enum WireError {
    #[error("input truncated")]
    Truncated,
    #[error("bad magic")]
    Magic,
    #[error("unsupported version {0}")]
    Version(u8),
    #[error("unknown message kind {0}")]
    Kind(u8),
    #[error("reserved bits set")]
    Reserved,
    #[error("unknown profile id {0}")]
    Profile(u8),
    #[error("frame is {got} bytes, header says {expected}")]
    FrameLength { expected: usize, got: usize },
    #[error("checksum mismatch")]
    Checksum,
    #[error("frame uses profile {got}, expected {expected}")]
    ProfileMismatch {
        expected: CryptoProfile,
        got: CryptoProfile,
    },
    #[error("{0} trailing body bytes")]
    Trailing(usize),
    #[error("invalid set descriptor")]
    Set,
    #[error("encrypted timestamp must be {expected} bytes, got {got}")]
    TimestampLength { expected: usize, got: usize },
    #[error("bit string padding is not zero")]
    Padding,
    #[error("inner plaintext length fields are inconsistent")]
    InnerLength,
    #[error("inner plaintext digest mismatch")]
    InnerDigest,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
#[repr(u8)]
pub enum MessageKind {
    /// ED to repository: first leg of the update request.
    Relay = 1,
    /// Repository to server: request with the response already attached.
    UpdateRequest = 2,
    ModelQuery = 3,
    ModelResponse = 4,
    FirmwarePackage = 5,
}

impl MessageKind {
    pub fn from_u8(b: u8) -> Option<Self> {
        Some(match b {
            1 => Self::Relay,
            2 => Self::UpdateRequest,
            3 => Self::ModelQuery,
            4 => Self::ModelResponse,
            5 => Self::FirmwarePackage,
            _ => return None,
        })
    }

    pub fn name(self) -> &'static str {
        match self {
            Self::Relay => "relay_request",
            Self::UpdateRequest => "update_request",
            Self::ModelQuery => "model_query",
            Self::ModelResponse => "model_response",
            Self::FirmwarePackage => "firmware_package",
        }
    }
}

/// Sent by the device towards the repository, which answers the challenge
/// with the server's model and forwards the rest.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct RelayRequest {
    pub fds_id: InstanceId,
    pub ed_id: InstanceId,
    pub device_key: DeviceKey,
    pub set: SetDescriptor,
    pub nonce: Nonce,
    pub encrypted_timestamp: Vec<u8>,
    /// `H(I1)` fitted to the PUF width.
    pub challenge: Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct UpdateRequest {
    pub ed_id: InstanceId,
    pub device_key: DeviceKey,
    pub set: SetDescriptor,
    pub nonce: Nonce,
    pub encrypted_timestamp: Vec<u8>,
    pub o1: Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelQuery {
    pub correlation: u64,
    pub instance_id: InstanceId,
    pub challenge: Challenge,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ModelResponse {
    pub correlation: u64,
    pub response: Response,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FirmwarePackage {
    pub o2: Response,
    pub nonce_outer: Nonce,
    pub nonce_inner: Nonce,
    /// `enc(kdf(I2), enc(SK, inner plaintext))`.
    pub payload: Vec<u8>,
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Message {
    Relay(RelayRequest),
    UpdateRequest(UpdateRequest),
    ModelQuery(ModelQuery),
    ModelResponse(ModelResponse),
    FirmwarePackage(FirmwarePackage),
}

impl Message {
    pub fn kind(&self) -> MessageKind {
        match self {
            Message::Relay(_) => MessageKind::Relay,
            Message::UpdateRequest(_) => MessageKind::UpdateRequest,
            Message::ModelQuery(_) => MessageKind::ModelQuery,
            Message::ModelResponse(_) => MessageKind::ModelResponse,
            Message::FirmwarePackage(_) => MessageKind::FirmwarePackage,
        }
    }
}

/// Length of the encrypted timestamp field under `profile`.
pub fn encrypted_timestamp_len(profile: CryptoProfile) -> usize {
    16 + profile.tag_bytes()
}

/// Compares in time independent of where the inputs differ.
pub(crate) fn ct_eq(a: &[u8], b: &[u8]) -> bool {
    a.len() == b.len() && a.iter().zip(b).fold(0u8, |acc, (x, y)| acc | (x ^ y)) == 0
}

pub fn compute_checksum(profile: CryptoProfile, covered: &[u8]) -> Vec<u8> {
    crypto::hash(profile, covered)
}

/// Hashes all of `covered` before comparing.
pub fn verify_checksum(profile: CryptoProfile, covered: &[u8], checksum: &[u8]) -> bool {
    let d = compute_checksum(profile, covered);
    ct_eq(&d, checksum)
}

fn put_bits(out: &mut Vec<u8>, b: &BitString) {
    out.extend_from_slice(&(b.len() as u16).to_le_bytes());
    out.extend_from_slice(b.as_bytes());
}

fn put_set(out: &mut Vec<u8>, s: &SetDescriptor) {
    out.extend_from_slice(&s.size.to_le_bytes()[..3]);
    out.extend_from_slice(&s.start.to_le_bytes());
}

fn encode_body(profile: CryptoProfile, m: &Message) -> Vec<u8> {
    let mut b = Vec::new();
    match m {
        Message::Relay(r) => {
            b.extend_from_slice(&r.fds_id);
            b.extend_from_slice(&r.ed_id);
            r.device_key.write(&mut b);
            put_set(&mut b, &r.set);
            b.extend_from_slice(&r.nonce.0);
            debug_assert_eq!(r.encrypted_timestamp.len(), encrypted_timestamp_len(profile));
            b.extend_from_slice(&r.encrypted_timestamp);
            put_bits(&mut b, &r.challenge);
        }
        Message::UpdateRequest(r) => {
            b.extend_from_slice(&r.ed_id);
            r.device_key.write(&mut b);
            put_set(&mut b, &r.set);
            b.extend_from_slice(&r.nonce.0);
            debug_assert_eq!(r.encrypted_timestamp.len(), encrypted_timestamp_len(profile));
            b.extend_from_slice(&r.encrypted_timestamp);
            put_bits(&mut b, &r.o1);
        }
        Message::ModelQuery(q) => {
            b.extend_from_slice(&q.correlation.to_le_bytes());
            b.extend_from_slice(&q.instance_id);
            put_bits(&mut b, &q.challenge);
        }
        Message::ModelResponse(r) => {
            b.extend_from_slice(&r.correlation.to_le_bytes());
            put_bits(&mut b, &r.response);
        }
        Message::FirmwarePackage(p) => {
            put_bits(&mut b, &p.o2);
            b.extend_from_slice(&p.nonce_outer.0);
            b.extend_from_slice(&p.nonce_inner.0);
            let len = u32::try_from(p.payload.len()).expect("payload below 4 GiB");
            b.extend_from_slice(&len.to_le_bytes());
            b.extend_from_slice(&p.payload);
        }
    }
    b
}

/// Frames and checksums `m`.
pub fn encode(profile: CryptoProfile, m: &Message) -> Vec<u8> {
    let body = encode_body(profile, m);
    let mut out = Vec::with_capacity(HEADER_LEN + body.len() + profile.digest_bytes());
    out.extend_from_slice(&MAGIC);
    out.push(VERSION);
    out.push(m.kind() as u8);
    out.push(profile.wire_id());
    out.extend_from_slice(&(u32::try_from(body.len()).expect("body below 4 GiB")).to_le_bytes());
    out.extend_from_slice(&body);
    let sum = compute_checksum(profile, &out);
    out.extend_from_slice(&sum);
    out
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub kind: MessageKind,
    pub profile: CryptoProfile,
    pub body_len: usize,
}

/// Parses the fixed header without touching the checksum.
pub fn peek_header(bytes: &[u8]) -> Result<Header, WireError> {
    if bytes.len() < HEADER_LEN {
        return Err(WireError::Truncated);
    }
    if bytes[..4] != MAGIC {
        return Err(WireError::Magic);
    }
    if bytes[4] != VERSION {
        return Err(WireError::Version(bytes[4]));
    }
    let kind = MessageKind::from_u8(bytes[5]).ok_or(WireError::Kind(bytes[5]))?;
    let flags = bytes[6];
    if flags & !0b11 != 0 {
        return Err(WireError::Reserved);
    }
    let profile = CryptoProfile::from_wire_id(flags).ok_or(WireError::Profile(flags))?;
    let body_len = u32::from_le_bytes(bytes[7..11].try_into().unwrap()) as usize;
    Ok(Header {
        kind,
        profile,
        body_len,
    })
}

/// Validates framing and checksum, then parses the body strictly.
pub fn decode(bytes: &[u8]) -> Result<(CryptoProfile, Message), WireError> {
    let h = peek_header(bytes)?;
    let expected = HEADER_LEN
        .checked_add(h.body_len)
        .and_then(|x| x.checked_add(h.profile.digest_bytes()))
        .ok_or(WireError::Truncated)?;
    if bytes.len() != expected {
        return Err(WireError::FrameLength {
            expected,
            got: bytes.len(),
        });
    }
    let (covered, sum) = bytes.split_at(HEADER_LEN + h.body_len);
    if !verify_checksum(h.profile, covered, sum) {
        return Err(WireError::Checksum);
    }
    let mut r = Reader {
        buf: &covered[HEADER_LEN..],
        at: 0,
    };
    let p = h.profile;
    let m = match h.kind {
        MessageKind::Relay => Message::Relay(RelayRequest {
            fds_id: r.id()?,
            ed_id: r.id()?,
            device_key: DeviceKey::read(r.take(DeviceKey::ENCODED_LEN)?),
            set: r.set()?,
            nonce: r.nonce()?,
            encrypted_timestamp: r.take(encrypted_timestamp_len(p))?.to_vec(),
            challenge: r.bits()?,
        }),
        MessageKind::UpdateRequest => Message::UpdateRequest(UpdateRequest {
            ed_id: r.id()?,
            device_key: DeviceKey::read(r.take(DeviceKey::ENCODED_LEN)?),
            set: r.set()?,
            nonce: r.nonce()?,
            encrypted_timestamp: r.take(encrypted_timestamp_len(p))?.to_vec(),
            o1: r.bits()?,
        }),
        MessageKind::ModelQuery => Message::ModelQuery(ModelQuery {
            correlation: r.u64()?,
            instance_id: r.id()?,
            challenge: r.bits()?,
        }),
        MessageKind::ModelResponse => Message::ModelResponse(ModelResponse {
            correlation: r.u64()?,
            response: r.bits()?,
        }),
        MessageKind::FirmwarePackage => {
            let o2 = r.bits()?;
            let nonce_outer = r.nonce()?;
            let nonce_inner = r.nonce()?;
            let len = r.u32()? as usize;
            Message::FirmwarePackage(FirmwarePackage {
                o2,
                nonce_outer,
                nonce_inner,
                payload: r.take(len)?.to_vec(),
            })
        }
    };
    if r.at != r.buf.len() {
        return Err(WireError::Trailing(r.buf.len() - r.at));
    }
    Ok((p, m))
}

/// [`decode`] that also insists on the expected profile.
pub fn decode_as(profile: CryptoProfile, bytes: &[u8]) -> Result<Message, WireError> {
    let (got, m) = decode(bytes)?;
    if got != profile {
        return Err(WireError::ProfileMismatch { expected: profile, got });
    }
    Ok(m)
}

struct Reader<'a> {
    buf: &'a [u8],
    at: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8], WireError> {
        let end = self.at.checked_add(n).ok_or(WireError::Truncated)?;
        let s = self.buf.get(self.at..end).ok_or(WireError::Truncated)?;
        self.at = end;
        Ok(s)
    }

    fn u32(&mut self) -> Result<u32, WireError> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().unwrap()))
    }

    fn u64(&mut self) -> Result<u64, WireError> {
        Ok(u64::from_le_bytes(self.take(8)?.try_into().unwrap()))
    }

    fn id(&mut self) -> Result<InstanceId, WireError> {
        Ok(self.take(16)?.try_into().unwrap())
    }

    fn nonce(&mut self) -> Result<Nonce, WireError> {
        Ok(Nonce(self.take(NONCE_BYTES)?.try_into().unwrap()))
    }

    fn set(&mut self) -> Result<SetDescriptor, WireError> {
        let n = self.take(3)?;
        let size = u32::from_le_bytes([n[0], n[1], n[2], 0]);
        if size > MAX_SET_SIZE {
            return Err(WireError::Reserved);
        }
        let start = self.u64()?;
        SetDescriptor::new(start, size).map_err(|_: SearchError| WireError::Set)
    }

    fn bits(&mut self) -> Result<BitString, WireError> {
        let len = u16::from_le_bytes(self.take(2)?.try_into().unwrap()) as usize;
        let bytes = self.take(len.div_ceil(8))?;
        BitString::from_bytes(len, bytes).map_err(|_| WireError::Padding)
    }
}
