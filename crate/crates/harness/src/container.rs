//! Stream file: a fixed header followed by one record per frame.
//!
//! ```text
//! "CLDS"  u8 version  u32 sample_rate  u16 frame_size  u16 bytes_per_frame
//! u8 flags (bit 0: SECDED)  u32 table_version  u64 num_samples  u32 num_packets
//! num_packets x (u8 status, bytes_per_frame bytes)
//! ```
//!
//! Integers are little-endian. Status 0 is a received packet, 1 a lost one
//! (its bytes are zero).

use std::io::Write;

use celtld::codec::{CodecConfig, SAMPLE_RATE};
use celtld::transform::FRAME_SIZE;

use crate::error::{format_err, Result};

pub const MAGIC: &[u8; 4] = b"CLDS";
pub const VERSION: u8 = 1;
pub const HEADER_LEN: usize = 30;
pub const FLAG_SECDED: u8 = 1;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct Header {
    pub bytes_per_frame: u16,
    pub secded: bool,
    pub table_version: u32,
    pub num_samples: u64,
}

impl Header {
    pub fn num_packets(&self) -> usize {
        (self.num_samples as usize).div_ceil(FRAME_SIZE)
    }

    pub fn codec_config(&self) -> Result<CodecConfig> {
        Ok(CodecConfig::new(self.bytes_per_frame as usize)?.with_parity(self.secded))
    }

    pub fn bitrate(&self) -> f64 {
        self.bytes_per_frame as f64 * 8.0 * SAMPLE_RATE as f64 / FRAME_SIZE as f64
    }
}

#[derive(Debug, Clone, PartialEq, Eq)]
pub struct Stream {
    pub header: Header,
    /// `None` marks a lost packet.
    pub packets: Vec<Option<Vec<u8>>>,
}

impl Stream {
    pub fn payload_bytes(&self) -> usize {
        self.packets.len() * self.header.bytes_per_frame as usize
    }

    pub fn lost(&self) -> usize {
        self.packets.iter().filter(|p| p.is_none()).count()
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let h = &self.header;
        let b = h.bytes_per_frame as usize;
        let mut out = Vec::with_capacity(HEADER_LEN + self.packets.len() * (b + 1));
        out.extend_from_slice(MAGIC);
        out.push(VERSION);
        out.extend_from_slice(&SAMPLE_RATE.to_le_bytes());
        out.extend_from_slice(&(FRAME_SIZE as u16).to_le_bytes());
        out.extend_from_slice(&h.bytes_per_frame.to_le_bytes());
        out.push(if h.secded { FLAG_SECDED } else { 0 });
        out.extend_from_slice(&h.table_version.to_le_bytes());
        out.extend_from_slice(&h.num_samples.to_le_bytes());
        out.extend_from_slice(&(self.packets.len() as u32).to_le_bytes());
        for p in &self.packets {
            match p {
                Some(bytes) => {
                    out.push(0);
                    out.extend_from_slice(bytes);
                }
                None => {
                    out.push(1);
                    out.extend(std::iter::repeat_n(0, b));
                }
            }
        }
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        if bytes.len() < HEADER_LEN || &bytes[..4] != MAGIC {
            return Err(format_err("not a stream file"));
        }
        let u16_at = |i: usize| u16::from_le_bytes([bytes[i], bytes[i + 1]]);
        let u32_at = |i: usize| u32::from_le_bytes(bytes[i..i + 4].try_into().expect("four bytes"));
        if bytes[4] != VERSION {
            return Err(format_err(format!("unsupported stream version {}", bytes[4])));
        }
        if u32_at(5) != SAMPLE_RATE || u16_at(9) as usize != FRAME_SIZE {
            return Err(format_err("stream sample rate or frame size not supported"));
        }
        let flags = bytes[13];
        if flags & !FLAG_SECDED != 0 {
            return Err(format_err(format!("unknown stream flags {flags:#04x}")));
        }
        let header = Header {
            bytes_per_frame: u16_at(11),
            secded: flags & FLAG_SECDED != 0,
            table_version: u32_at(14),
            num_samples: u64::from_le_bytes(bytes[18..26].try_into().expect("eight bytes")),
        };
        header.codec_config()?;
        let count = u32_at(26) as usize;
        if count != header.num_packets() {
            return Err(format_err(format!("{count} packets for {} samples", header.num_samples)));
        }
        let b = header.bytes_per_frame as usize;
        let body = &bytes[HEADER_LEN..];
        if body.len() != count * (b + 1) {
            return Err(format_err("stream length does not match its header"));
        }
        let packets = body
            .chunks_exact(b + 1)
            .map(|rec| match rec[0] {
                0 => Ok(Some(rec[1..].to_vec())),
                1 => Ok(None),
                s => Err(format_err(format!("bad packet status {s}"))),
            })
            .collect::<Result<_>>()?;
        Ok(Stream { header, packets })
    }

    pub fn read(path: &std::path::Path) -> Result<Self> {
        Self::parse(&std::fs::read(path)?)
    }

    pub fn write(&self, path: &std::path::Path) -> Result<()> {
        std::fs::File::create(path)?.write_all(&self.to_bytes())?;
        Ok(())
    }
}
