//! Whole-file encoding and decoding.

use celtld::codec::{CodecConfig, Decoder, Encoder};
use celtld::tables::Tables;
use celtld::transform::FRAME_SIZE;

use crate::container::{Header, Stream};
use crate::error::{format_err, Result};
use crate::secded;

/// Encodes `pcm`, zero-padding the last frame.
pub fn encode(pcm: &[f64], bytes_per_frame: usize, secded: bool, tables: &Tables) -> Result<Stream> {
    let config = CodecConfig::new(bytes_per_frame)?.with_parity(secded);
    let mut enc = Encoder::new(config, tables.clone());
    let mut packets = Vec::with_capacity(pcm.len().div_ceil(FRAME_SIZE));
    for chunk in pcm.chunks(FRAME_SIZE) {
        let mut frame = [0.0; FRAME_SIZE];
        frame[..chunk.len()].copy_from_slice(chunk);
        let mut packet = enc.encode_frame(&frame)?;
        if secded {
            secded::protect(&mut packet);
        }
        packets.push(Some(packet));
    }
    Ok(Stream {
        header: Header {
            bytes_per_frame: bytes_per_frame as u16,
            secded,
            table_version: tables.version_id(),
            num_samples: pcm.len() as u64,
        },
        packets,
    })
}

/// Decodes a stream to `num_samples` samples, concealing lost packets. The
/// output is not delay-compensated.
pub fn decode(stream: &Stream, tables: &Tables) -> Result<Vec<f64>> {
    if stream.header.table_version != tables.version_id() {
        return Err(format_err(format!(
            "stream was encoded with tables {:08x}, decoder has {:08x}",
            stream.header.table_version,
            tables.version_id()
        )));
    }
    let config = stream.header.codec_config()?;
    let mut dec = Decoder::new(config, tables.clone());
    let mut out = Vec::with_capacity(stream.packets.len() * FRAME_SIZE);
    for p in &stream.packets {
        let payload = p.as_deref().map(|p| &p[..config.payload_bytes()]);
        out.extend_from_slice(&dec.decode_frame(payload));
    }
    out.truncate(stream.header.num_samples as usize);
    Ok(out)
}
