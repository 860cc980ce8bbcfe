//! Blocks, their canonical byte encoding, and the size model.
//!
//! Canonical block encoding (big-endian):
//!
//! ```text
//! prev_hash 32 | timestamp 8 | gps 8 | kind 1 | count 2 | coin ids 8*count
//! | merkle_root 32 | bloom_anchor 32 | sig count 2 | (monitor id 2 | sig 64)*
//! ```
//!
//! Size model used for the full/lightweight comparison:
//!
//! * full: `prev_hash | timestamp | gps | monitor count + ids | kind | count | coin ids`
//! * lightweight: `timestamp | gps | monitor count + ids | kind | count | merkle_root`,
//!   plus one bloom anchor for the whole chain. The Merkle root commits to
//!   the previous block hash, the block's bloom anchor and every coin ID.

use crate::constants::*;
use crate::crypto::{hash, hash_parts, Digest, Signature};
use crate::ledger::{merkle_root, CoinId, LedgerError};
use crate::{EntityId, Position, SimTime};

#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Event {
    Hello,
    Spend(Vec<CoinId>),
    Receive(Vec<CoinId>),
    /// First beacon after the chain went stale (phone off, out of range).
    Rejoin,
}

impl Event {
    pub fn tag(&self) -> u8 {
        match self {
            Event::Hello => 0,
            Event::Spend(_) => 1,
            Event::Receive(_) => 2,
            Event::Rejoin => 3,
        }
    }

    pub fn coins(&self) -> &[CoinId] {
        match self {
            Event::Spend(c) | Event::Receive(c) => c,
            Event::Hello | Event::Rejoin => &[],
        }
    }

    pub fn spends(&self) -> &[CoinId] {
        match self {
            Event::Spend(c) => c,
            _ => &[],
        }
    }

    fn from_tag(tag: u8, coins: Vec<CoinId>) -> Option<Self> {
        match tag {
            0 if coins.is_empty() => Some(Event::Hello),
            1 => Some(Event::Spend(coins)),
            2 => Some(Event::Receive(coins)),
            3 if coins.is_empty() => Some(Event::Rejoin),
            _ => None,
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct Block {
    pub prev_hash: Digest,
    pub event: Event,
    /// Reported (noisy) position, quantized to the f32 wire form.
    pub gps: Position,
    pub timestamp: SimTime,
    pub merkle_root: Digest,
    pub bloom_anchor: Digest,
    pub monitor_signatures: Vec<Signature>,
}

/// Merkle leaves of a block: previous hash, bloom anchor, kind, coin IDs.
pub(crate) fn event_leaves(prev_hash: &Digest, bloom_anchor: &Digest, event: &Event) -> Vec<Digest> {
    let mut leaves = Vec::with_capacity(3 + event.coins().len());
    leaves.push(*prev_hash);
    leaves.push(*bloom_anchor);
    leaves.push(hash(&[b'k', event.tag()]));
    leaves.extend(event.coins().iter().map(|c| hash_parts(&[b"c", &c.0])));
    leaves
}

pub(crate) fn compute_merkle_root(prev_hash: &Digest, bloom_anchor: &Digest, event: &Event) -> Digest {
    merkle_root(&event_leaves(prev_hash, bloom_anchor, event)).expect("leaves are never empty")
}

/// Bytes a monitor signs: `prev_hash | merkle_root | bloom_anchor | gps | timestamp`.
pub(crate) fn attestation_bytes(
    prev_hash: &Digest,
    merkle_root: &Digest,
    bloom_anchor: &Digest,
    gps: Position,
    timestamp: SimTime,
) -> Vec<u8> {
    let mut out = Vec::with_capacity(3 * DIGEST_LEN + GPS_LEN + TIMESTAMP_LEN);
    out.extend_from_slice(prev_hash);
    out.extend_from_slice(merkle_root);
    out.extend_from_slice(bloom_anchor);
    out.extend_from_slice(&gps.to_gps_bytes());
    out.extend_from_slice(&timestamp.to_be_bytes());
    out
}

impl Block {
    pub fn attestation_bytes(&self) -> Vec<u8> {
        attestation_bytes(&self.prev_hash, &self.merkle_root, &self.bloom_anchor, self.gps, self.timestamp)
    }

    pub fn hash(&self) -> Digest {
        hash(&self.to_bytes())
    }

    pub fn monitor_ids(&self) -> impl Iterator<Item = EntityId> + '_ {
        self.monitor_signatures.iter().map(|s| s.signer)
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let coins = self.event.coins();
        let mut out = Vec::with_capacity(
            DIGEST_LEN * 3
                + TIMESTAMP_LEN
                + GPS_LEN
                + EVENT_TAG_LEN
                + 2 * COUNT_LEN
                + coins.len() * COIN_ID_LEN
                + self.monitor_signatures.len() * (ENTITY_ID_LEN + SIGNATURE_LEN),
        );
        out.extend_from_slice(&self.prev_hash);
        out.extend_from_slice(&self.timestamp.to_be_bytes());
        out.extend_from_slice(&self.gps.to_gps_bytes());
        out.push(self.event.tag());
        out.extend_from_slice(&(coins.len() as u16).to_be_bytes());
        for c in coins {
            out.extend_from_slice(&c.0);
        }
        out.extend_from_slice(&self.merkle_root);
        out.extend_from_slice(&self.bloom_anchor);
        out.extend_from_slice(&(self.monitor_signatures.len() as u16).to_be_bytes());
        for s in &self.monitor_signatures {
            out.extend_from_slice(&s.signer.to_be_bytes());
            out.extend_from_slice(&s.bytes);
        }
        out
    }

    /// Decodes one block from the front of `bytes`, returning it and the
    /// number of bytes consumed.
    pub fn from_bytes(bytes: &[u8]) -> Result<(Block, usize), LedgerError> {
        let mut r = Reader { bytes, pos: 0 };
        let prev_hash = r.array::<32>()?;
        let timestamp = SimTime(u64::from_be_bytes(r.array::<8>()?));
        let gps = Position::from_gps_bytes(&r.array::<8>()?);
        let tag_pos = r.pos;
        let tag = r.array::<1>()?[0];
        let count = u16::from_be_bytes(r.array::<2>()?) as usize;
        let mut coins = Vec::with_capacity(count);
        for _ in 0..count {
            coins.push(CoinId(r.array::<8>()?));
        }
        let event = Event::from_tag(tag, coins).ok_or(LedgerError::Malformed(tag_pos))?;
        let merkle_root = r.array::<32>()?;
        let bloom_anchor = r.array::<32>()?;
        let nsig = u16::from_be_bytes(r.array::<2>()?) as usize;
        let mut monitor_signatures = Vec::with_capacity(nsig);
        for _ in 0..nsig {
            let signer = EntityId(u16::from_be_bytes(r.array::<2>()?));
            let bytes = r.array::<64>()?;
            monitor_signatures.push(Signature { bytes, signer });
        }
        Ok((Block { prev_hash, event, gps, timestamp, merkle_root, bloom_anchor, monitor_signatures }, r.pos))
    }
}

pub(crate) struct Reader<'a> {
    pub bytes: &'a [u8],
    pub pos: usize,
}

impl Reader<'_> {
    pub fn array<const N: usize>(&mut self) -> Result<[u8; N], LedgerError> {
        let end = self.pos.checked_add(N).ok_or(LedgerError::Malformed(self.pos))?;
        let slice = self.bytes.get(self.pos..end).ok_or(LedgerError::Malformed(self.pos))?;
        self.pos = end;
        Ok(slice.try_into().unwrap())
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum SizeMode {
    Full,
    Lightweight,
}

/// Size of one block under the size model.
pub fn block_size_bytes(b: &Block, mode: SizeMode) -> usize {
    let common =
        TIMESTAMP_LEN + GPS_LEN + COUNT_LEN + b.monitor_signatures.len() * ENTITY_ID_LEN + EVENT_TAG_LEN + COUNT_LEN;
    match mode {
        SizeMode::Full => DIGEST_LEN + common + b.event.coins().len() * COIN_ID_LEN,
        SizeMode::Lightweight => common + DIGEST_LEN,
    }
}

/// Size of a chain: the sum of its blocks, plus one bloom anchor in
/// lightweight mode.
pub fn chain_size_bytes(blocks: &[Block], mode: SizeMode) -> usize {
    let body: usize = blocks.iter().map(|b| block_size_bytes(b, mode)).sum();
    match mode {
        SizeMode::Full => body,
        SizeMode::Lightweight => body + DIGEST_LEN,
    }
}

/// What a monitor receives to countersign one new block.
pub fn monitor_view_bytes(b: &Block, mode: SizeMode) -> usize {
    match mode {
        SizeMode::Full => block_size_bytes(b, mode),
        SizeMode::Lightweight => block_size_bytes(b, mode) + DIGEST_LEN,
    }
}

/// What a merchant downloads to validate an endorser's chain: every block
/// in full mode; in lightweight mode the head block, a Merkle root over the
/// chain and the spent-coin filter.
pub fn merchant_view_bytes(blocks: &[Block], filter_bytes: usize, mode: SizeMode) -> usize {
    match mode {
        SizeMode::Full => chain_size_bytes(blocks, SizeMode::Full),
        SizeMode::Lightweight => {
            blocks.last().map_or(0, |b| block_size_bytes(b, SizeMode::Lightweight)) + DIGEST_LEN + filter_bytes
        }
    }
}
