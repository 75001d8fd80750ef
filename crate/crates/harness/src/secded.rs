//! (72,64) extended Hamming code over the first 64 payload bits.
//!
//! Data bits occupy the non-power-of-two positions 3, 5, 6, 7, 9, ... 71 of
//! a Hamming codeword. The parity byte holds the seven check bits (bit `i`
//! covers position `2^i`) and, in bit 7, the parity of the whole word.

pub const DATA_BYTES: usize = 8;
pub const PROTECTED_BITS: usize = 72;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Outcome {
    Clean,
    /// Bit index into the 72-bit region (0..64 data, 64..72 parity byte).
    Corrected(usize),
    /// Two or more errors; the frame must be dropped.
    Detected,
}

static POSITIONS: std::sync::OnceLock<[u8; 64]> = std::sync::OnceLock::new();

/// Codeword position of each data bit.
fn positions() -> &'static [u8; 64] {
    POSITIONS.get_or_init(|| {
        let mut out = [0u8; 64];
        let mut it = (1u8..).filter(|p| !p.is_power_of_two());
        out.iter_mut().for_each(|o| *o = it.next().expect("infinite"));
        out
    })
}

fn syndrome(data: u64) -> u8 {
    positions().iter().enumerate().filter(|(i, _)| data >> i & 1 == 1).fold(0, |s, (_, &p)| s ^ p)
}

pub fn parity(data: u64) -> u8 {
    let check = syndrome(data);
    let overall = (data.count_ones() + check.count_ones()) & 1;
    check | (overall as u8) << 7
}

/// Checks and repairs `data`/`parity` in place.
pub fn correct(data: &mut u64, parity_byte: &mut u8) -> Outcome {
    let s = syndrome(*data) ^ (*parity_byte & 0x7f);
    let overall = (data.count_ones() + parity_byte.count_ones()) & 1;
    match (s, overall) {
        (0, 0) => Outcome::Clean,
        (_, 0) => Outcome::Detected,
        (0, _) => {
            *parity_byte ^= 0x80;
            Outcome::Corrected(64 + 7)
        }
        (s, _) if s.is_power_of_two() => {
            *parity_byte ^= s;
            Outcome::Corrected(64 + s.trailing_zeros() as usize)
        }
        (s, _) => match positions().iter().position(|&p| p == s) {
            Some(i) => {
                *data ^= 1 << i;
                Outcome::Corrected(i)
            }
            None => Outcome::Detected,
        },
    }
}

/// Appends the parity byte to a payload of at least 8 bytes.
pub fn protect(payload: &mut Vec<u8>) {
    let data = u64::from_le_bytes(payload[..DATA_BYTES].try_into().expect("eight bytes"));
    payload.push(parity(data));
}

/// Repairs a protected packet in place; the parity byte is its last byte.
pub fn check(packet: &mut [u8]) -> Outcome {
    let last = packet.len() - 1;
    let mut data = u64::from_le_bytes(packet[..DATA_BYTES].try_into().expect("eight bytes"));
    let mut p = packet[last];
    let outcome = correct(&mut data, &mut p);
    packet[..DATA_BYTES].copy_from_slice(&data.to_le_bytes());
    packet[last] = p;
    outcome
}
