//! Simulated cross-platform indexing.
//!
//! Each platform hashes its own QoS columns locally and publishes a
//! [`SignatureMessage`] carrying only service ids and packed bits. Service
//! indices are assembled exclusively from decoded messages, so nothing
//! real-valued ever leaves a platform.
//!
//! Wire layout (all integers little-endian):
//!
//! ```text
//! "PDSR" | version u8 = 1 | platform_id u32 | round u32 | H u16 | count u32
//!        | count × (service_id u64, ceil(H/8) signature bytes)
//! ```
//!
//! Signature bits are packed LSB-first within each byte and zero-padded.

use crate::error::{PdsrError, Result};
use crate::lsh::{LshFamily, ServiceSignature};
use crate::rng::{derive_seed, stream};

/// One platform's QoS observations: an `M × N_r` matrix, service-major.
///
/// Value 0 means the user never invoked the service.
#[derive(Debug, Clone, PartialEq)]
pub struct PlatformDataset {
    platform_id: u32,
    user_ids: Vec<u64>,
    n_services: usize,
    qos: Vec<f64>,
}

impl PlatformDataset {
    /// `qos` is row-major with one row per service and one column per local user.
    pub fn new(platform_id: u32, user_ids: Vec<u64>, n_services: usize, qos: Vec<f64>) -> Result<Self> {
        if qos.len() != n_services * user_ids.len() {
            return Err(PdsrError::invalid(format!(
                "platform {platform_id}: matrix has {} entries, expected {} × {}",
                qos.len(),
                n_services,
                user_ids.len()
            )));
        }
        if let Some(bad) = qos.iter().find(|v| !(v.is_finite() && **v >= 0.0)) {
            return Err(PdsrError::invalid(format!(
                "platform {platform_id}: QoS values must be finite and non-negative, found {bad}"
            )));
        }
        let mut sorted = user_ids.clone();
        sorted.sort_unstable();
        if sorted.windows(2).any(|w| w[0] == w[1]) {
            return Err(PdsrError::invalid(format!("platform {platform_id}: duplicate user id")));
        }
        Ok(PlatformDataset {
            platform_id,
            user_ids,
            n_services,
            qos,
        })
    }

    /// Builds a dataset from per-service columns (`columns[i][j]` = service `i`, local user `j`).
    pub fn from_rows(platform_id: u32, user_ids: Vec<u64>, rows: &[Vec<f64>]) -> Result<Self> {
        let n = user_ids.len();
        if let Some(r) = rows.iter().find(|r| r.len() != n) {
            return Err(PdsrError::invalid(format!(
                "service row has {} entries, platform has {n} users",
                r.len()
            )));
        }
        let qos = rows.iter().flatten().copied().collect();
        Self::new(platform_id, user_ids, rows.len(), qos)
    }

    pub fn platform_id(&self) -> u32 {
        self.platform_id
    }

    pub fn user_ids(&self) -> &[u64] {
        &self.user_ids
    }

    pub fn n_users(&self) -> usize {
        self.user_ids.len()
    }

    pub fn n_services(&self) -> usize {
        self.n_services
    }

    /// QoS vector of `service` over this platform's users.
    pub fn service_vector(&self, service: usize) -> &[f64] {
        let n = self.n_users();
        &self.qos[service * n..(service + 1) * n]
    }

    pub fn value(&self, service: usize, local_user: usize) -> f64 {
        self.qos[service * self.n_users() + local_user]
    }

    pub(crate) fn set_value(&mut self, service: usize, local_user: usize, v: f64) {
        let n = self.n_users();
        self.qos[service * n + local_user] = v;
    }

    /// Local column position of a global user id.
    pub fn local_index(&self, user_id: u64) -> Option<usize> {
        self.user_ids.iter().position(|&u| u == user_id)
    }

    /// Services the local user has a nonzero value for.
    pub fn observed_services(&self, local_user: usize) -> impl Iterator<Item = usize> + '_ {
        (0..self.n_services).filter(move |&i| self.value(i, local_user) != 0.0)
    }
}

/// Concatenated per-platform signatures of one service, ascending platform id.
#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct ServiceIndex {
    pub service_id: u64,
    pub bits: Vec<bool>,
}

pub const MAGIC: &[u8; 4] = b"PDSR";
pub const VERSION: u8 = 1;
/// magic + version + platform_id + round + H + count
pub const HEADER_LEN: usize = 4 + 1 + 4 + 4 + 2 + 4;

/// The only payload a platform ever sends: ids and bits.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct SignatureMessage {
    pub platform_id: u32,
    pub round: u32,
    /// Bits per signature, `H_r`.
    pub h: u16,
    pub payload: Vec<(u64, Vec<bool>)>,
}

fn packed_len(h: u16) -> usize {
    (h as usize).div_ceil(8)
}

impl SignatureMessage {
    pub fn from_signatures(platform_id: u32, round: u32, signatures: &[ServiceSignature]) -> Result<Self> {
        let h = signatures.first().map_or(0, |s| s.bits.len());
        if signatures.iter().any(|s| s.bits.len() != h) {
            return Err(PdsrError::invalid("signatures in one message must share a length"));
        }
        let h = u16::try_from(h).map_err(|_| PdsrError::invalid(format!("H = {h} does not fit the wire format")))?;
        Ok(SignatureMessage {
            platform_id,
            round,
            h,
            payload: signatures.iter().map(|s| (s.service_id, s.bits.clone())).collect(),
        })
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload.len() * (8 + packed_len(self.h))
    }

    pub fn encode(&self) -> Result<Vec<u8>> {
        if let Some((id, _)) = self.payload.iter().find(|(_, b)| b.len() != self.h as usize) {
            return Err(PdsrError::invalid(format!("service {id}: signature length differs from H = {}", self.h)));
        }
        let count = u32::try_from(self.payload.len()).map_err(|_| PdsrError::invalid("too many services for one message"))?;
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&self.platform_id.to_le_bytes());
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.h.to_le_bytes());
        out.extend_from_slice(&count.to_le_bytes());
        let width = packed_len(self.h);
        for (id, bits) in &self.payload {
            out.extend_from_slice(&id.to_le_bytes());
            let start = out.len();
            out.resize(start + width, 0);
            for (k, _) in bits.iter().enumerate().filter(|(_, b)| **b) {
                out[start + k / 8] |= 1 << (k % 8);
            }
        }
        Ok(out)
    }

    /// Strict decode: rejects trailing bytes and nonzero padding bits.
    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let scan = scan(bytes)?;
        if let Some(v) = scan.violations.first() {
            return Err(PdsrError::decode(v.to_string()));
        }
        Ok(scan.message)
    }
}

struct Reader<'a> {
    bytes: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize, what: &str) -> Result<&'a [u8]> {
        if self.bytes.len() - self.pos < n {
            return Err(PdsrError::decode(format!(
                "truncated {what} at byte {}: need {n}, have {}",
                self.pos,
                self.bytes.len() - self.pos
            )));
        }
        let s = &self.bytes[self.pos..self.pos + n];
        self.pos += n;
        Ok(s)
    }

    fn u16(&mut self, what: &str) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2, what)?.try_into().unwrap()))
    }

    fn u32(&mut self, what: &str) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4, what)?.try_into().unwrap()))
    }

    fn u64(&mut self, what: &str) -> Result<u64> {
        Ok(u64::from_le_bytes(self.take(8, what)?.try_into().unwrap()))
    }
}

/// Something in a message that is not an id or a signature bit.
#[derive(Debug, Clone, PartialEq)]
pub enum Violation {
    /// Bytes beyond the declared payload.
    TrailingData {
        offset: usize,
        len: usize,
        /// Finite `f64` readings of the trailing bytes, 8 at a time.
        float_readings: Vec<f64>,
    },
    /// Padding bits past `H` are set, i.e. the signature slot smuggles data.
    NonzeroPadding { service_id: u64 },
}

impl std::fmt::Display for Violation {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        match self {
            Violation::TrailingData { offset, len, float_readings } => {
                write!(f, "{len} undeclared bytes at offset {offset}")?;
                if !float_readings.is_empty() {
                    write!(f, " (readable as f64: {float_readings:?})")?;
                }
                Ok(())
            }
            Violation::NonzeroPadding { service_id } => {
                write!(f, "service {service_id}: nonzero padding bits in signature")
            }
        }
    }
}

struct Scan {
    message: SignatureMessage,
    violations: Vec<Violation>,
}

fn scan(bytes: &[u8]) -> Result<Scan> {
    let mut r = Reader { bytes, pos: 0 };
    if r.take(4, "magic")? != MAGIC {
        return Err(PdsrError::decode("bad magic"));
    }
    let version = r.take(1, "version")?[0];
    if version != VERSION {
        return Err(PdsrError::decode(format!("unsupported version {version}")));
    }
    let platform_id = r.u32("platform id")?;
    let round = r.u32("round")?;
    let h = r.u16("H")?;
    let count = r.u32("count")? as usize;
    let width = packed_len(h);
    count
        .checked_mul(8 + width)
        .filter(|n| *n <= bytes.len() - r.pos)
        .ok_or_else(|| PdsrError::decode(format!("payload of {count} entries exceeds message length")))?;

    let mut payload = Vec::with_capacity(count);
    let mut violations = Vec::new();
    for _ in 0..count {
        let id = r.u64("service id")?;
        let packed = r.take(width, "signature")?;
        let bits: Vec<bool> = (0..h as usize).map(|k| packed[k / 8] >> (k % 8) & 1 == 1).collect();
        let used = h as usize % 8;
        if used != 0 && packed[width - 1] >> used != 0 {
            violations.push(Violation::NonzeroPadding { service_id: id });
        }
        payload.push((id, bits));
    }
    if r.pos < bytes.len() {
        let rest = &bytes[r.pos..];
        let float_readings = rest
            .chunks_exact(8)
            .map(|c| f64::from_le_bytes(c.try_into().unwrap()))
            .filter(|x| x.is_finite())
            .collect();
        violations.push(Violation::TrailingData {
            offset: r.pos,
            len: rest.len(),
            float_readings,
        });
    }
    Ok(Scan {
        message: SignatureMessage {
            platform_id,
            round,
            h,
            payload,
        },
        violations,
    })
}

/// Outcome of [`audit_privacy`].
#[derive(Debug, Clone, PartialEq)]
pub struct AuditReport {
    pub platform_id: u32,
    pub round: u32,
    pub entries: usize,
    pub violations: Vec<Violation>,
}

impl AuditReport {
    pub fn passed(&self) -> bool {
        self.violations.is_empty()
    }
}

/// Checks that a message on the wire carries nothing but service ids and bits.
///
/// Messages whose header or declared payload cannot be read are decode errors;
/// readable messages with extra content are reported as failed audits.
pub fn audit_privacy(bytes: &[u8]) -> Result<AuditReport> {
    let scan = scan(bytes)?;
    Ok(AuditReport {
        platform_id: scan.message.platform_id,
        round: scan.message.round,
        entries: scan.message.payload.len(),
        violations: scan.violations,
    })
}

/// Seed of platform `platform_id`'s hyperplanes in indexing round `round`.
pub fn platform_round_seed(master_seed: u64, platform_id: u32, round: u32) -> u64 {
    derive_seed(master_seed, &[stream::LSH, platform_id as u64, round as u64])
}

/// Indices for every service plus the encoded messages that produced them.
#[derive(Debug, Clone)]
pub struct IndexingRound {
    pub round: u32,
    pub indices: Vec<ServiceIndex>,
    /// One encoded [`SignatureMessage`] per platform, ascending platform id.
    pub transcript: Vec<Vec<u8>>,
}

fn check_platforms(platforms: &[PlatformDataset], h_counts: &[usize]) -> Result<usize> {
    let first = platforms
        .first()
        .ok_or_else(|| PdsrError::invalid("at least one platform is required"))?;
    if h_counts.len() != platforms.len() {
        return Err(PdsrError::invalid(format!(
            "{} hyperplane counts for {} platforms",
            h_counts.len(),
            platforms.len()
        )));
    }
    let m = first.n_services();
    if let Some(p) = platforms.iter().find(|p| p.n_services() != m) {
        return Err(PdsrError::invalid(format!(
            "platform {} covers {} services, platform {} covers {m}",
            p.platform_id(),
            p.n_services(),
            first.platform_id()
        )));
    }
    let mut ids: Vec<u32> = platforms.iter().map(|p| p.platform_id()).collect();
    ids.sort_unstable();
    if ids.windows(2).any(|w| w[0] == w[1]) {
        return Err(PdsrError::invalid("duplicate platform id"));
    }
    Ok(m)
}

/// Runs one platform's side of a round: sample, hash every service, encode.
pub fn platform_message(platform: &PlatformDataset, h: usize, master_seed: u64, round: u32) -> Result<Vec<u8>> {
    let seed = platform_round_seed(master_seed, platform.platform_id(), round);
    let family = LshFamily::sample(platform.platform_id(), platform.n_users(), h, seed)?;
    let signatures = (0..platform.n_services())
        .map(|i| family.hash(i as u64, platform.service_vector(i)))
        .collect::<Result<Vec<_>>>()?;
    SignatureMessage::from_signatures(platform.platform_id(), round, &signatures)?.encode()
}

/// Assembles service indices from one round's messages alone.
pub fn gather_indices(n_services: usize, transcript: &[Vec<u8>]) -> Result<Vec<ServiceIndex>> {
    let mut messages = transcript
        .iter()
        .map(|b| SignatureMessage::decode(b))
        .collect::<Result<Vec<_>>>()?;
    messages.sort_by_key(|m| m.platform_id);
    let total: usize = messages.iter().map(|m| m.h as usize).sum();
    let mut indices: Vec<ServiceIndex> = (0..n_services as u64)
        .map(|id| ServiceIndex {
            service_id: id,
            bits: Vec::with_capacity(total),
        })
        .collect();
    let mut filled = vec![0usize; n_services];
    for msg in &messages {
        for (id, bits) in &msg.payload {
            let slot = usize::try_from(*id)
                .ok()
                .filter(|&i| i < n_services)
                .ok_or_else(|| PdsrError::decode(format!("platform {}: unknown service {id}", msg.platform_id)))?;
            indices[slot].bits.extend_from_slice(bits);
            filled[slot] += 1;
        }
    }
    if let Some(i) = filled.iter().position(|&c| c != messages.len()) {
        return Err(PdsrError::decode(format!(
            "service {i} appears in {} of {} messages",
            filled[i],
            messages.len()
        )));
    }
    Ok(indices)
}

/// One full indexing round across all platforms.
pub fn index_round(platforms: &[PlatformDataset], h_counts: &[usize], master_seed: u64, round: u32) -> Result<IndexingRound> {
    let m = check_platforms(platforms, h_counts)?;
    let mut order: Vec<usize> = (0..platforms.len()).collect();
    order.sort_by_key(|&k| platforms[k].platform_id());
    let transcript = order
        .iter()
        .map(|&k| platform_message(&platforms[k], h_counts[k], master_seed, round))
        .collect::<Result<Vec<_>>>()?;
    let indices = gather_indices(m, &transcript)?;
    Ok(IndexingRound {
        round,
        indices,
        transcript,
    })
}

/// Service indices from a single round (round 1) of the given master seed.
///
/// `h_counts[k]` is the hyperplane count of `platforms[k]`.
pub fn build_indices(platforms: &[PlatformDataset], h_counts: &[usize], seed: u64) -> Result<Vec<ServiceIndex>> {
    Ok(index_round(platforms, h_counts, seed, 1)?.indices)
}
