use std::fmt::Write as _;

use super::{format_ps, OperatingMode, SimTime, PS_PER_S};
use crate::{Error, Result};

/// Radio payloads. All integers are little-endian.
#[derive(Debug, Clone, PartialEq, Eq)]
pub enum Packet {
    /// Samples as unsigned 16-bit words, then the timestamp. 20 bytes for
    /// 8 samples.
    Raw { samples: Vec<i16>, timestamp_ms: u32 },
    /// `bpm:u8, timestamp:u32`.
    Peak { bpm: u8, timestamp_ms: u32 },
    /// `bpm:u8, label:u8, timestamp:u32`.
    Cnn { bpm: u8, label: u8, timestamp_ms: u32 },
}

impl Packet {
    pub fn mode(&self) -> OperatingMode {
        match self {
            Packet::Raw { .. } => OperatingMode::RawData,
            Packet::Peak { .. } => OperatingMode::PeakDetection,
            Packet::Cnn { .. } => OperatingMode::CnnProcessing,
        }
    }

    pub fn timestamp_ms(&self) -> u32 {
        match *self {
            Packet::Raw { timestamp_ms, .. } | Packet::Peak { timestamp_ms, .. } | Packet::Cnn { timestamp_ms, .. } => {
                timestamp_ms
            }
        }
    }
}

/// Rounds to the nearest integer bpm; values above 255 saturate and set the
/// flag. Missing or negative rates encode as 0.
pub fn saturate_bpm(bpm: Option<f64>) -> (u8, bool) {
    match bpm {
        Some(b) if b > 255.0 => (255, true),
        Some(b) if b > 0.0 => (b.round().min(255.0) as u8, false),
        _ => (0, false),
    }
}

/// Milliseconds since simulation start, wrapping at 32 bits.
pub fn timestamp_ms(t: SimTime) -> u32 {
    (t / (PS_PER_S / 1000)) as u32
}

pub fn encode_packet(packet: &Packet) -> Vec<u8> {
    let mut out = Vec::with_capacity(20);
    match packet {
        Packet::Raw { samples, timestamp_ms } => {
            for &s in samples {
                out.extend_from_slice(&(s as u16).to_le_bytes());
            }
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
        }
        Packet::Peak { bpm, timestamp_ms } => {
            out.push(*bpm);
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
        }
        Packet::Cnn {
            bpm,
            label,
            timestamp_ms,
        } => {
            out.push(*bpm);
            out.push(*label);
            out.extend_from_slice(&timestamp_ms.to_le_bytes());
        }
    }
    out
}

fn ts(bytes: &[u8]) -> u32 {
    u32::from_le_bytes(bytes.try_into().expect("4 timestamp bytes"))
}

pub fn decode_packet(mode: OperatingMode, bytes: &[u8]) -> Result<Packet> {
    let bad = || Error::InvalidArgument(format!("{} byte payload is not a valid {mode} packet", bytes.len()));
    match mode {
        OperatingMode::RawData => {
            if bytes.len() < 6 || bytes.len() % 2 != 0 {
                return Err(bad());
            }
            let (data, t) = bytes.split_at(bytes.len() - 4);
            Ok(Packet::Raw {
                samples: data
                    .chunks_exact(2)
                    .map(|c| u16::from_le_bytes([c[0], c[1]]) as i16)
                    .collect(),
                timestamp_ms: ts(t),
            })
        }
        OperatingMode::PeakDetection if bytes.len() == 5 => Ok(Packet::Peak {
            bpm: bytes[0],
            timestamp_ms: ts(&bytes[1..]),
        }),
        OperatingMode::CnnProcessing if bytes.len() == 6 => Ok(Packet::Cnn {
            bpm: bytes[0],
            label: bytes[1],
            timestamp_ms: ts(&bytes[2..]),
        }),
        _ => Err(bad()),
    }
}

/// A transmitted packet and the time its send task completed.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PacketRecord {
    pub t: SimTime,
    pub packet: Packet,
}

/// Binary packet log: per packet a `u16` little-endian length, then the
/// encoded bytes.
pub fn write_packet_log(records: &[PacketRecord]) -> Vec<u8> {
    let mut out = Vec::new();
    for r in records {
        let bytes = encode_packet(&r.packet);
        out.extend_from_slice(&(bytes.len() as u16).to_le_bytes());
        out.extend_from_slice(&bytes);
    }
    out
}

/// Splits a binary packet log back into payloads.
pub fn read_packet_log(mut data: &[u8]) -> Result<Vec<Vec<u8>>> {
    let mut out = Vec::new();
    while !data.is_empty() {
        if data.len() < 2 {
            return Err(Error::InvalidArgument("truncated packet length".into()));
        }
        let n = u16::from_le_bytes([data[0], data[1]]) as usize;
        data = &data[2..];
        if data.len() < n {
            return Err(Error::InvalidArgument("truncated packet".into()));
        }
        out.push(data[..n].to_vec());
        data = &data[n..];
    }
    Ok(out)
}

/// CSV index of a packet log: `t_s,mode,size`.
pub fn format_packet_index(records: &[PacketRecord]) -> String {
    let mut out = String::from("t_s,mode,size\n");
    for r in records {
        let _ = writeln!(out, "{},{},{}", format_ps(r.t), r.packet.mode(), encode_packet(&r.packet).len());
    }
    out
}
