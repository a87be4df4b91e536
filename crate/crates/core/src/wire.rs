//! Byte-exact message formats exchanged between producer and consumers.
//!
//! Every message is a 13-byte envelope followed by a packed payload. The
//! envelope is tile row (u32 LE), tile col (u32 LE), payload kind (u8), and
//! payload length in bytes (u32 LE). A perimeter payload packs, for P
//! perimeter cells in walk order, P direction bytes, then P accumulations as
//! f64 LE, then P link values as u16 LE: 11 bytes per perimeter cell. An
//! offset payload packs P offsets as f64 LE: 8 bytes per perimeter cell.
//! Payload byte counters exclude the envelope.

use crate::error::{Error, Result};
use crate::layout::TileId;

/// Envelope size in bytes: row + col + kind + length.
pub const ENVELOPE_BYTES: u64 = 4 + 4 + 1 + 4;

/// Bytes per perimeter cell in a stage-1 perimeter payload.
pub const PERIMETER_CELL_BYTES: usize = 1 + 8 + 2;

/// Bytes per perimeter cell in a stage-2 offset payload.
pub const OFFSET_CELL_BYTES: usize = 8;

const KIND_JOB: u8 = 0;
const KIND_PERIMETER: u8 = 1;
const KIND_OFFSETS: u8 = 2;

/// Stage-1 message body: the perimeter view of one solved tile.
#[derive(Debug, Clone, PartialEq)]
pub struct PerimeterPayload {
    /// Raw flow-direction byte per perimeter cell.
    pub dirs: Vec<u8>,
    /// Intermediate accumulation per perimeter cell (NaN on NoData cells).
    pub accum: Vec<f64>,
    /// Encoded link per perimeter cell.
    pub links: Vec<u16>,
}

impl PerimeterPayload {
    pub fn perimeter_len(&self) -> usize {
        self.dirs.len()
    }

    pub fn byte_len(&self) -> usize {
        self.dirs.len() * PERIMETER_CELL_BYTES
    }

    pub fn encode(&self) -> Vec<u8> {
        let p = self.dirs.len();
        debug_assert_eq!(self.accum.len(), p);
        debug_assert_eq!(self.links.len(), p);
        let mut out = Vec::with_capacity(self.byte_len());
        out.extend_from_slice(&self.dirs);
        for a in &self.accum {
            out.extend_from_slice(&a.to_bits().to_le_bytes());
        }
        for l in &self.links {
            out.extend_from_slice(&l.to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], expected_perimeter: usize) -> Result<PerimeterPayload> {
        if bytes.len() != expected_perimeter * PERIMETER_CELL_BYTES {
            return Err(Error::Protocol(format!(
                "perimeter payload is {} bytes, expected {} for P={}",
                bytes.len(),
                expected_perimeter * PERIMETER_CELL_BYTES,
                expected_perimeter
            )));
        }
        let p = expected_perimeter;
        let dirs = bytes[..p].to_vec();
        let mut accum = Vec::with_capacity(p);
        for i in 0..p {
            let o = p + i * 8;
            let bits = u64::from_le_bytes(bytes[o..o + 8].try_into().unwrap());
            accum.push(f64::from_bits(bits));
        }
        let mut links = Vec::with_capacity(p);
        for i in 0..p {
            let o = p * 9 + i * 2;
            links.push(u16::from_le_bytes(bytes[o..o + 2].try_into().unwrap()));
        }
        Ok(PerimeterPayload { dirs, accum, links })
    }
}

/// Stage-2 message body: external inbound flow per perimeter cell.
#[derive(Debug, Clone, PartialEq)]
pub struct OffsetPayload {
    pub offsets: Vec<f64>,
}

impl OffsetPayload {
    pub fn byte_len(&self) -> usize {
        self.offsets.len() * OFFSET_CELL_BYTES
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.byte_len());
        for a in &self.offsets {
            out.extend_from_slice(&a.to_bits().to_le_bytes());
        }
        out
    }

    pub fn decode(bytes: &[u8], expected_perimeter: usize) -> Result<OffsetPayload> {
        if bytes.len() != expected_perimeter * OFFSET_CELL_BYTES {
            return Err(Error::Protocol(format!(
                "offset payload is {} bytes, expected {} for P={}",
                bytes.len(),
                expected_perimeter * OFFSET_CELL_BYTES,
                expected_perimeter
            )));
        }
        let offsets = bytes
            .chunks_exact(8)
            .map(|c| f64::from_bits(u64::from_le_bytes(c.try_into().unwrap())))
            .collect();
        Ok(OffsetPayload { offsets })
    }
}

/// A framed message: which tile, which payload kind, and the payload bytes.
///
/// `Job` delegates a tile to a consumer and carries no payload.
#[derive(Debug, Clone, PartialEq)]
pub enum Message {
    Job { tile: TileId },
    Perimeter { tile: TileId, body: Vec<u8> },
    Offsets { tile: TileId, body: Vec<u8> },
}

impl Message {
    pub fn tile(&self) -> TileId {
        match self {
            Message::Job { tile }
            | Message::Perimeter { tile, .. }
            | Message::Offsets { tile, .. } => *tile,
        }
    }

    pub fn body(&self) -> &[u8] {
        match self {
            Message::Job { .. } => &[],
            Message::Perimeter { body, .. } | Message::Offsets { body, .. } => body,
        }
    }

    pub fn encode(&self) -> Vec<u8> {
        let (kind, tile, body) = match self {
            Message::Job { tile } => (KIND_JOB, tile, &[][..]),
            Message::Perimeter { tile, body } => (KIND_PERIMETER, tile, body.as_slice()),
            Message::Offsets { tile, body } => (KIND_OFFSETS, tile, body.as_slice()),
        };
        let mut out = Vec::with_capacity(ENVELOPE_BYTES as usize + body.len());
        out.extend_from_slice(&(tile.row as u32).to_le_bytes());
        out.extend_from_slice(&(tile.col as u32).to_le_bytes());
        out.push(kind);
        out.extend_from_slice(&(body.len() as u32).to_le_bytes());
        out.extend_from_slice(body);
        out
    }

    pub fn decode(bytes: &[u8]) -> Result<Message> {
        if bytes.len() < ENVELOPE_BYTES as usize {
            return Err(Error::Protocol(format!(
                "message of {} bytes is shorter than the envelope",
                bytes.len()
            )));
        }
        let row = u32::from_le_bytes(bytes[0..4].try_into().unwrap()) as usize;
        let col = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
        let kind = bytes[8];
        let len = u32::from_le_bytes(bytes[9..13].try_into().unwrap()) as usize;
        let body = &bytes[13..];
        if body.len() != len {
            return Err(Error::Protocol(format!(
                "envelope declares {len} payload bytes but {} are present",
                body.len()
            )));
        }
        let tile = TileId::new(row, col);
        match kind {
            KIND_JOB if body.is_empty() => Ok(Message::Job { tile }),
            KIND_JOB => Err(Error::Protocol("job message with a payload".into())),
            KIND_PERIMETER => Ok(Message::Perimeter {
                tile,
                body: body.to_vec(),
            }),
            KIND_OFFSETS => Ok(Message::Offsets {
                tile,
                body: body.to_vec(),
            }),
            other => Err(Error::Protocol(format!("unknown payload kind {other}"))),
        }
    }
}
