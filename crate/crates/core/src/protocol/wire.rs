//! Binary framing for round messages.
//!
//! Layout, all integers little-endian:
//!
//! ```text
//! magic "EDSL" | version u8 = 1 | kind u8 | round u32 | sender u16 | payload_len u32 | payload_len x f64
//! ```

use std::io::{self, Read, Write};

use crate::error::{Error, Result};
use crate::model::DenseVector;

pub const MAGIC: [u8; 4] = *b"EDSL";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 16;
/// Round number carried by the worker's opening message.
pub const HANDSHAKE_ROUND: u32 = 0xFFFF_FFFF;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
#[repr(u8)]
pub enum MessageKind {
    ModelBroadcast = 0,
    GradientReport = 1,
    Shutdown = 2,
}

impl MessageKind {
    fn from_byte(b: u8) -> Result<Self> {
        match b {
            0 => Ok(Self::ModelBroadcast),
            1 => Ok(Self::GradientReport),
            2 => Ok(Self::Shutdown),
            other => Err(Error::Transport(format!("unknown message kind {other}"))),
        }
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct RoundMessage {
    pub kind: MessageKind,
    pub round: u32,
    pub sender: u16,
    pub payload: Option<DenseVector>,
}

impl RoundMessage {
    pub fn broadcast(round: u32, beta: DenseVector) -> Self {
        Self { kind: MessageKind::ModelBroadcast, round, sender: 0, payload: Some(beta) }
    }

    pub fn report(round: u32, sender: u16, gradient: DenseVector) -> Self {
        Self { kind: MessageKind::GradientReport, round, sender, payload: Some(gradient) }
    }

    pub fn handshake(sender: u16) -> Self {
        Self { kind: MessageKind::GradientReport, round: HANDSHAKE_ROUND, sender, payload: None }
    }

    pub fn shutdown(round: u32) -> Self {
        Self { kind: MessageKind::Shutdown, round, sender: 0, payload: None }
    }

    pub fn is_handshake(&self) -> bool {
        self.kind == MessageKind::GradientReport && self.round == HANDSHAKE_ROUND && self.payload.is_none()
    }

    /// Bytes of model or gradient values, excluding the header.
    pub fn payload_bytes(&self) -> u64 {
        self.payload.as_ref().map_or(0, |v| 8 * v.len() as u64)
    }

    pub fn encoded_len(&self) -> usize {
        HEADER_LEN + self.payload_bytes() as usize
    }

    pub fn encode(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(self.encoded_len());
        out.extend_from_slice(&MAGIC);
        out.push(VERSION);
        out.push(self.kind as u8);
        out.extend_from_slice(&self.round.to_le_bytes());
        out.extend_from_slice(&self.sender.to_le_bytes());
        let len = self.payload.as_ref().map_or(0, |v| v.len() as u32);
        out.extend_from_slice(&len.to_le_bytes());
        if let Some(v) = &self.payload {
            for x in v.iter() {
                out.extend_from_slice(&x.to_le_bytes());
            }
        }
        out
    }

    pub fn write_to<W: Write>(&self, w: &mut W) -> io::Result<()> {
        w.write_all(&self.encode())?;
        w.flush()
    }

    /// Reads one message. Payload values must be finite.
    pub fn read_from<R: Read>(r: &mut R) -> Result<Self> {
        let mut header = [0u8; HEADER_LEN];
        r.read_exact(&mut header)?;
        let (kind, round, sender, len) = parse_header(&header)?;
        let payload = if len == 0 && kind != MessageKind::ModelBroadcast {
            None
        } else {
            let mut buf = vec![0u8; len * 8];
            r.read_exact(&mut buf)?;
            let values = buf
                .chunks_exact(8)
                .map(|c| f64::from_le_bytes(c.try_into().expect("8-byte chunk")))
                .collect();
            Some(DenseVector::new(values).map_err(|e| Error::Transport(format!("bad payload: {e}")))?)
        };
        Ok(Self { kind, round, sender, payload })
    }

    pub fn decode(bytes: &[u8]) -> Result<Self> {
        let mut cursor = bytes;
        let msg = Self::read_from(&mut cursor)?;
        if !cursor.is_empty() {
            return Err(Error::Transport(format!("{} trailing bytes after message", cursor.len())));
        }
        Ok(msg)
    }
}

fn parse_header(h: &[u8; HEADER_LEN]) -> Result<(MessageKind, u32, u16, usize)> {
    if h[0..4] != MAGIC {
        return Err(Error::Transport(format!("bad magic {:?}", &h[0..4])));
    }
    if h[4] != VERSION {
        return Err(Error::Transport(format!("unsupported version {}", h[4])));
    }
    let kind = MessageKind::from_byte(h[5])?;
    let round = u32::from_le_bytes(h[6..10].try_into().unwrap());
    let sender = u16::from_le_bytes(h[10..12].try_into().unwrap());
    let len = u32::from_le_bytes(h[12..16].try_into().unwrap()) as usize;
    Ok((kind, round, sender, len))
}
