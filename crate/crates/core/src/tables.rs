//! Trained data shared by encoder and decoder, and its binary file format.
//!
//! All integers are little-endian:
//!
//! ```text
//! "CLTB"  u16 version  u8 bands  u8 reserved
//! bands x i16           mean band energy, dB in Q8
//! bands x (u16, u16)    Laplace zero probability and decay, Q15
//! 1024 bytes            gain codebook, 128 entries x 8 values
//! u8 rows, rows x (u32 level, bands x u32 share)   allocation, bits in Q8
//! bands x u8            fine-energy priority order
//! ```

use crate::alloc::{default_fine_priority, AllocRow, AllocTable};
use crate::bands::CODED_BANDS;
use crate::energy::BandDb;
use crate::error::{CodecError, Result};
use crate::pitch::{GainCodebook, GAIN_ENTRIES, GAIN_VALUES};
use crate::rangecoder::{LaplaceModel, LaplaceParams};

pub const MAGIC: &[u8; 4] = b"CLTB";
pub const FORMAT_VERSION: u16 = 1;

static DEFAULT_TABLES: &[u8] = include_bytes!("../tables/default.tbl");

#[derive(Debug, Clone, PartialEq)]
pub struct Tables {
    pub mean_db: BandDb,
    pub laplace: [LaplaceParams; CODED_BANDS],
    pub codebook: GainCodebook,
    pub alloc: AllocTable,
    pub fine_priority: [u8; CODED_BANDS],
}

impl Tables {
    /// The tables shipped with the library.
    pub fn shipped() -> Self {
        Self::parse(DEFAULT_TABLES).expect("shipped tables are valid")
    }

    pub fn shipped_bytes() -> &'static [u8] {
        DEFAULT_TABLES
    }

    /// Untrained starting point: flat means, a generic Laplace shape, and a
    /// codebook spread evenly over the warped gain range.
    pub fn bootstrap() -> Self {
        let mean_db = std::array::from_fn(|b| 70.0 - 1.5 * b as f64);
        let laplace = [LaplaceParams { zero_q15: 12_000, decay_q15: 16_000 }; CODED_BANDS];
        let entries = (0..GAIN_ENTRIES)
            .map(|i| {
                let level = (i * 255 / (GAIN_ENTRIES - 1)) as u8;
                std::array::from_fn(|j| if i == 0 { 0 } else { level.saturating_sub((j * 8) as u8) })
            })
            .collect();
        Tables {
            mean_db,
            laplace,
            codebook: GainCodebook::new(entries).expect("bootstrap codebook is valid"),
            alloc: AllocTable::reference(),
            fine_priority: default_fine_priority(),
        }
    }

    pub fn laplace_model(&self) -> LaplaceModel {
        LaplaceModel::new(&self.laplace)
    }

    /// Identifier carried in stream headers: CRC-32 of the serialised tables.
    pub fn version_id(&self) -> u32 {
        crc32fast::hash(&self.to_bytes())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::new();
        out.extend_from_slice(MAGIC);
        out.extend_from_slice(&FORMAT_VERSION.to_le_bytes());
        out.push(CODED_BANDS as u8);
        out.push(0);
        for &m in &self.mean_db {
            let q = (m * 256.0).round().clamp(i16::MIN as f64, i16::MAX as f64) as i16;
            out.extend_from_slice(&q.to_le_bytes());
        }
        for p in &self.laplace {
            out.extend_from_slice(&p.zero_q15.to_le_bytes());
            out.extend_from_slice(&p.decay_q15.to_le_bytes());
        }
        out.extend_from_slice(&self.codebook.to_bytes());
        out.push(self.alloc.rows().len() as u8);
        for row in self.alloc.rows() {
            out.extend_from_slice(&row.level_q8.to_le_bytes());
            for s in &row.shares_q8 {
                out.extend_from_slice(&s.to_le_bytes());
            }
        }
        out.extend_from_slice(&self.fine_priority);
        out
    }

    pub fn parse(bytes: &[u8]) -> Result<Self> {
        let mut r = Reader { buf: bytes, pos: 0 };
        if r.take(4)? != MAGIC {
            return Err(bad("bad magic"));
        }
        let version = r.u16()?;
        if version != FORMAT_VERSION {
            return Err(bad(&format!("unsupported table version {version}")));
        }
        if r.u8()? as usize != CODED_BANDS {
            return Err(bad("band count mismatch"));
        }
        r.u8()?;
        let mut mean_db = [0.0; CODED_BANDS];
        for m in &mut mean_db {
            *m = r.u16()? as i16 as f64 / 256.0;
        }
        let mut laplace = [LaplaceParams { zero_q15: 0, decay_q15: 0 }; CODED_BANDS];
        for p in &mut laplace {
            p.zero_q15 = r.u16()?;
            p.decay_q15 = r.u16()?;
            if p.zero_q15 >= 1 << 15 || p.decay_q15 >= 1 << 15 {
                return Err(bad("Laplace parameter out of range"));
            }
        }
        let codebook = GainCodebook::from_bytes(r.take(GAIN_ENTRIES * GAIN_VALUES)?)?;
        let rows = r.u8()? as usize;
        let mut alloc_rows = Vec::with_capacity(rows);
        for _ in 0..rows {
            let level_q8 = r.u32()?;
            let mut shares_q8 = [0u32; CODED_BANDS];
            for s in &mut shares_q8 {
                *s = r.u32()?;
            }
            alloc_rows.push(AllocRow { level_q8, shares_q8 });
        }
        let alloc = AllocTable::new(alloc_rows)?;
        let fine_priority: [u8; CODED_BANDS] = r.take(CODED_BANDS)?.try_into().expect("twenty bytes");
        let mut seen = [false; CODED_BANDS];
        for &b in &fine_priority {
            match seen.get_mut(b as usize) {
                Some(s) if !*s => *s = true,
                _ => return Err(bad("fine priority is not a permutation of the bands")),
            }
        }
        if r.pos != bytes.len() {
            return Err(bad("trailing bytes"));
        }
        Ok(Tables { mean_db, laplace, codebook, alloc, fine_priority })
    }
}

fn bad(msg: &str) -> CodecError {
    CodecError::InvalidTables(msg.to_string())
}

struct Reader<'a> {
    buf: &'a [u8],
    pos: usize,
}

impl<'a> Reader<'a> {
    fn take(&mut self, n: usize) -> Result<&'a [u8]> {
        let end = self.pos.checked_add(n).filter(|&e| e <= self.buf.len()).ok_or_else(|| bad("truncated table file"))?;
        let s = &self.buf[self.pos..end];
        self.pos = end;
        Ok(s)
    }

    fn u8(&mut self) -> Result<u8> {
        Ok(self.take(1)?[0])
    }

    fn u16(&mut self) -> Result<u16> {
        Ok(u16::from_le_bytes(self.take(2)?.try_into().expect("two bytes")))
    }

    fn u32(&mut self) -> Result<u32> {
        Ok(u32::from_le_bytes(self.take(4)?.try_into().expect("four bytes")))
    }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn bootstrap_roundtrips() {
        let t = Tables::bootstrap();
        let bytes = t.to_bytes();
        let back = Tables::parse(&bytes).unwrap();
        assert_eq!(back.to_bytes(), bytes);
        assert_eq!(back.version_id(), t.version_id());
    }

    #[test]
    fn corrupt_files_are_rejected() {
        let bytes = Tables::bootstrap().to_bytes();
        assert!(Tables::parse(&bytes[..bytes.len() - 1]).is_err());
        let mut extra = bytes.clone();
        extra.push(0);
        assert!(Tables::parse(&extra).is_err());
        let mut magic = bytes.clone();
        magic[0] = b'X';
        assert!(Tables::parse(&magic).is_err());
        let mut prio = bytes.clone();
        let n = prio.len();
        prio[n - 1] = prio[n - 2];
        assert!(Tables::parse(&prio).is_err());
    }

    #[test]
    fn shipped_tables_parse() {
        let t = Tables::shipped();
        assert_eq!(t.to_bytes(), Tables::shipped_bytes());
    }
}
