//! Byte-oriented range coder.
//!
//! The coder keeps a 32-bit interval and emits one byte at a time with
//! deferred carry propagation. Every symbol in the bitstream goes through
//! here: uniform integers of arbitrary alphabet size (which cost exactly
//! `log2(n)` bits plus a vanishing rounding term) and Laplace-distributed
//! coarse-energy residuals.
//!
//! Both ends expose [`RangeEncoder::tell_frac`] / [`RangeDecoder::tell_frac`]
//! in 1/256-bit units. The two values are computed from the same quantities
//! (bytes shifted through the coder and the current range), so after the same
//! symbol sequence they agree exactly. Implicit bit allocation depends on it.

use crate::error::{CodecError, Result};

const SYM_BITS: u32 = 8;
const CODE_BITS: u32 = 32;
const SYM_MAX: u32 = (1 << SYM_BITS) - 1;
const CODE_SHIFT: u32 = CODE_BITS - SYM_BITS - 1;
const CODE_TOP: u32 = 1 << (CODE_BITS - 1);
const CODE_BOT: u32 = CODE_TOP >> SYM_BITS;
const CODE_EXTRA: u32 = (CODE_BITS - 2) % SYM_BITS + 1;

/// Fractional resolution of `tell_frac`: 1/256 bit.
pub const BITRES: u32 = 8;
/// One bit in `tell_frac` units.
pub const ONE_BIT: u32 = 1 << BITRES;

/// Largest alphabet coded as a single range-coder symbol.
const MAX_DIRECT_FT: u128 = 1 << 16;
const CHUNK_BITS: u32 = 16;

/// Total frequency of every Laplace table.
pub const LAPLACE_FT: u32 = 1 << 15;
/// Residuals are clamped to `[-LAPLACE_MAX, LAPLACE_MAX]`.
pub const LAPLACE_MAX: i32 = 40;
const LAPLACE_SYMBOLS: usize = (2 * LAPLACE_MAX + 1) as usize;

#[inline]
fn ilog(x: u32) -> u32 {
    32 - x.leading_zeros()
}

fn tell_frac_of(nbits_total: u32, rng: u32) -> u32 {
    let nbits = nbits_total << BITRES;
    let mut l = ilog(rng);
    let mut r = rng >> (l - 16);
    for _ in 0..BITRES {
        r = (r * r) >> 15;
        let b = r >> 16;
        l = 2 * l + b;
        r >>= b;
    }
    nbits - l
}

/// `floor(log2(v) * 2^16)` up to a few units of truncation error, for `v >= 1`.
pub fn log2_q16(v: u128) -> u64 {
    assert!(v > 0, "log2 of zero");
    let l = 128 - v.leading_zeros();
    let mut r: u64 = if l > 32 {
        (v >> (l - 32)) as u64
    } else {
        (v << (32 - l)) as u64
    };
    let mut frac: u64 = 0;
    for _ in 0..16 {
        r = (r * r) >> 31;
        let b = r >> 32;
        frac = 2 * frac + b;
        r >>= b;
    }
    ((l as u64 - 1) << 16) + frac
}

/// Upper bound on `log2(v)` in 1/65536-bit units. Exact for powers of two.
pub fn log2_ceil_q16(v: u128) -> u64 {
    if v <= 1 {
        return 0;
    }
    if v.is_power_of_two() {
        return ((127 - v.leading_zeros()) as u64) << 16;
    }
    log2_q16(v) + 2
}

/// Upper bound on `log2(v)` in 1/256-bit units. Exact for powers of two.
pub fn log2_ceil_q8(v: u128) -> u32 {
    if v <= 1 {
        return 0;
    }
    if v.is_power_of_two() {
        return (127 - v.leading_zeros()) << BITRES;
    }
    ((log2_q16(v) + 2 + 255) >> 8) as u32
}

/// Parameters of one band's two-sided geometric distribution, Q15.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct LaplaceParams {
    /// Probability of a zero residual.
    pub zero_q15: u16,
    /// Ratio between successive magnitudes.
    pub decay_q15: u16,
}

/// Integer frequency tables for the coarse-energy residuals, one per band.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct LaplaceModel {
    freqs: Vec<[u32; LAPLACE_SYMBOLS]>,
    cums: Vec<[u32; LAPLACE_SYMBOLS]>,
}

impl LaplaceModel {
    pub fn new(params: &[LaplaceParams]) -> Self {
        let freqs: Vec<_> = params.iter().map(|p| build_laplace_freqs(*p)).collect();
        let cums = freqs
            .iter()
            .map(|f| {
                let mut c = [0u32; LAPLACE_SYMBOLS];
                let mut acc = 0;
                for (i, &fi) in f.iter().enumerate() {
                    c[i] = acc;
                    acc += fi;
                }
                debug_assert_eq!(acc, LAPLACE_FT);
                c
            })
            .collect();
        LaplaceModel { freqs, cums }
    }

    pub fn bands(&self) -> usize {
        self.freqs.len()
    }

    /// Frequency assigned to `residual` (after clamping) in `band`.
    pub fn freq(&self, band: usize, residual: i32) -> u32 {
        self.freqs[band][Self::slot(residual)]
    }

    /// Ideal cost of a residual, `-log2 P`, in bits.
    pub fn cost_bits(&self, band: usize, residual: i32) -> f64 {
        (LAPLACE_FT as f64 / self.freq(band, residual) as f64).log2()
    }

    /// Conservative cost of a residual in 1/256-bit units.
    pub fn cost_q8(&self, band: usize, residual: i32) -> u32 {
        let f = self.freq(band, residual);
        let floor_log_f = (log2_q16(f as u128) >> 8) as u32;
        (15 << BITRES) - floor_log_f + 1
    }

    fn slot(residual: i32) -> usize {
        (residual.clamp(-LAPLACE_MAX, LAPLACE_MAX) + LAPLACE_MAX) as usize
    }
}

fn build_laplace_freqs(p: LaplaceParams) -> [u32; LAPLACE_SYMBOLS] {
    let ft = LAPLACE_FT;
    let m = LAPLACE_MAX as usize;
    let decay = (p.decay_q15 as u32).clamp(1, 32_700);
    let f0 = (p.zero_q15 as u32).clamp(64, ft - 64 - 2 * m as u32);
    let tail = ft - f0;
    let mut side = vec![0u32; m + 1];
    side[1] = ((tail * (32_768 - decay)) >> 16).max(1);
    for k in 2..=m {
        side[k] = ((side[k - 1] * decay) >> 15).max(1);
    }
    let mut freqs = [0u32; LAPLACE_SYMBOLS];
    freqs[m] = f0;
    for k in 1..=m {
        freqs[m + k] = side[k];
        freqs[m - k] = side[k];
    }
    let sum: u32 = freqs.iter().sum();
    if sum <= ft {
        freqs[m] += ft - sum;
    } else {
        // Minimum-frequency floors pushed the total over; trim the largest
        // tail entries symmetrically, then the centre.
        let mut excess = sum - ft;
        let mut k = 1;
        while excess > 0 && k <= m {
            let spare = side[k].saturating_sub(1);
            let take_each = spare.min(excess.div_ceil(2));
            freqs[m + k] -= take_each;
            freqs[m - k] -= take_each;
            excess = excess.saturating_sub(2 * take_each);
            k += 1;
        }
        freqs[m] -= excess;
        let total: u32 = freqs.iter().sum();
        freqs[m] += ft - total;
    }
    freqs
}

/// Range encoder writing into a growable byte buffer.
#[derive(Debug, Clone)]
pub struct RangeEncoder {
    buf: Vec<u8>,
    val: u32,
    rng: u32,
    rem: i32,
    ext: u32,
    nbits_total: u32,
    trace: Option<Vec<u32>>,
}

impl Default for RangeEncoder {
    fn default() -> Self {
        Self::new()
    }
}

impl RangeEncoder {
    pub fn new() -> Self {
        RangeEncoder {
            buf: Vec::new(),
            val: 0,
            rng: CODE_TOP,
            rem: -1,
            ext: 0,
            nbits_total: CODE_BITS + 1,
            trace: None,
        }
    }

    /// Records `tell_frac` after every coded symbol.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> Option<&[u32]> {
        self.trace.as_deref()
    }

    fn carry_out(&mut self, c: u32) {
        if c != SYM_MAX {
            let carry = c >> SYM_BITS;
            if self.rem >= 0 {
                self.buf.push((self.rem as u32 + carry) as u8);
            }
            if self.ext > 0 {
                let sym = ((SYM_MAX + carry) & SYM_MAX) as u8;
                self.buf.extend(std::iter::repeat_n(sym, self.ext as usize));
                self.ext = 0;
            }
            self.rem = (c & SYM_MAX) as i32;
        } else {
            self.ext += 1;
        }
    }

    fn normalize(&mut self) {
        while self.rng <= CODE_BOT {
            self.carry_out(self.val >> CODE_SHIFT);
            self.val = (self.val << SYM_BITS) & (CODE_TOP - 1);
            self.rng <<= SYM_BITS;
            self.nbits_total += SYM_BITS;
        }
    }

    /// Encodes the cumulative-frequency interval `[fl, fh)` out of `ft`.
    pub fn encode(&mut self, fl: u32, fh: u32, ft: u32) {
        debug_assert!(fl < fh && fh <= ft && ft as u128 <= MAX_DIRECT_FT);
        let r = self.rng / ft;
        if fl > 0 {
            self.val += self.rng - r * (ft - fl);
            self.rng = r * (fh - fl);
        } else {
            self.rng -= r * (ft - fh);
        }
        self.normalize();
        if self.trace.is_some() {
            let t = self.tell_frac();
            self.trace.as_mut().expect("checked").push(t);
        }
    }

    /// Encodes `value` uniformly over `[0, n)`.
    pub fn encode_uniform(&mut self, value: u128, n: u128) -> Result<()> {
        if value >= n {
            return Err(CodecError::ContractViolation(format!(
                "uniform value {value} outside alphabet of size {n}"
            )));
        }
        if n <= 1 {
            return Ok(());
        }
        if n <= MAX_DIRECT_FT {
            let v = value as u32;
            self.encode(v, v + 1, n as u32);
            return Ok(());
        }
        let bits = 128 - (n - 1).leading_zeros();
        let shift = bits - CHUNK_BITS;
        let top_ft = (((n - 1) >> shift) + 1) as u32;
        let top = (value >> shift) as u32;
        self.encode(top, top + 1, top_ft);
        let mut left = shift;
        while left > 0 {
            let c = left.min(CHUNK_BITS);
            left -= c;
            let chunk = ((value >> left) & ((1u128 << c) - 1)) as u32;
            self.encode(chunk, chunk + 1, 1 << c);
        }
        Ok(())
    }

    /// Encodes a coarse-energy residual; out-of-range values are clamped and
    /// the clamped value is returned.
    pub fn encode_laplace(&mut self, residual: i32, model: &LaplaceModel, band: usize) -> i32 {
        let q = residual.clamp(-LAPLACE_MAX, LAPLACE_MAX);
        let slot = LaplaceModel::slot(q);
        let fl = model.cums[band][slot];
        let fh = fl + model.freqs[band][slot];
        self.encode(fl, fh, LAPLACE_FT);
        q
    }

    /// Bits consumed so far, in 1/256-bit units (an upper bound on what
    /// [`RangeEncoder::finish`] needs to flush).
    pub fn tell_frac(&self) -> u32 {
        tell_frac_of(self.nbits_total, self.rng)
    }

    /// Bits consumed so far.
    pub fn tell(&self) -> f64 {
        self.tell_frac() as f64 / ONE_BIT as f64
    }

    /// Whole bits consumed, rounded up.
    pub fn tell_bits(&self) -> u32 {
        self.nbits_total - ilog(self.rng)
    }

    /// Flushes the coder and pads the output to exactly `bytes` bytes.
    pub fn finish(mut self, bytes: usize) -> Result<Vec<u8>> {
        let used = self.tell_bits();
        let budget = 8 * bytes as u32;
        if used > budget {
            return Err(CodecError::FrameOverrun {
                used_bits: used,
                budget_bits: budget,
            });
        }
        let mut l = CODE_BITS as i32 - ilog(self.rng) as i32;
        let mut msk = (CODE_TOP - 1) >> l;
        let mut end = (self.val + msk) & !msk;
        if (end | msk) >= self.val + self.rng {
            l += 1;
            msk >>= 1;
            end = (self.val + msk) & !msk;
        }
        while l > 0 {
            self.carry_out(end >> CODE_SHIFT);
            end = (end << SYM_BITS) & (CODE_TOP - 1);
            l -= SYM_BITS as i32;
        }
        if self.rem >= 0 || self.ext > 0 {
            self.carry_out(0);
        }
        if self.buf.len() > bytes {
            return Err(CodecError::FrameOverrun {
                used_bits: 8 * self.buf.len() as u32,
                budget_bits: budget,
            });
        }
        self.buf.resize(bytes, 0);
        Ok(self.buf)
    }
}

/// Range decoder over a fixed packet.
///
/// Reads past the end of the packet yield zero bytes. Once the decoder has
/// consumed more bits than the packet holds it latches an underrun flag and
/// every further symbol decodes as 0 (or the smallest-magnitude Laplace
/// residual), so damaged packets still produce a frame.
#[derive(Debug, Clone)]
pub struct RangeDecoder<'a> {
    buf: &'a [u8],
    offs: usize,
    val: u32,
    rng: u32,
    rem: u32,
    ext: u32,
    nbits_total: u32,
    underrun: bool,
    corrupt: bool,
    trace: Option<Vec<u32>>,
}

impl<'a> RangeDecoder<'a> {
    pub fn new(buf: &'a [u8]) -> Self {
        let mut d = RangeDecoder {
            buf,
            offs: 0,
            val: 0,
            rng: 1 << CODE_EXTRA,
            rem: 0,
            ext: 0,
            nbits_total: CODE_BITS + 1 - ((CODE_BITS - CODE_EXTRA) / SYM_BITS) * SYM_BITS,
            underrun: false,
            corrupt: false,
            trace: None,
        };
        d.rem = d.read_byte();
        d.val = d.rng - 1 - (d.rem >> (SYM_BITS - CODE_EXTRA));
        d.normalize();
        d
    }

    /// Records `tell_frac` after every decoded symbol.
    pub fn with_trace(mut self) -> Self {
        self.trace = Some(Vec::new());
        self
    }

    pub fn trace(&self) -> Option<&[u32]> {
        self.trace.as_deref()
    }

    fn read_byte(&mut self) -> u32 {
        let b = self.buf.get(self.offs).copied().unwrap_or(0);
        self.offs += 1;
        b as u32
    }

    fn normalize(&mut self) {
        while self.rng <= CODE_BOT {
            self.nbits_total += SYM_BITS;
            self.rng <<= SYM_BITS;
            let sym = self.rem;
            self.rem = self.read_byte();
            let sym = ((sym << SYM_BITS) | self.rem) >> (SYM_BITS - CODE_EXTRA);
            self.val = ((self.val << SYM_BITS) + (SYM_MAX & !sym)) & (CODE_TOP - 1);
        }
    }

    fn exhausted(&mut self) -> bool {
        if !self.underrun && self.tell_bits() > 8 * self.buf.len() as u32 {
            self.underrun = true;
        }
        self.underrun
    }

    fn decode(&mut self, ft: u32) -> u32 {
        self.ext = self.rng / ft;
        let s = self.val / self.ext;
        ft - (s + 1).min(ft)
    }

    fn update(&mut self, fl: u32, fh: u32, ft: u32) {
        let s = self.ext * (ft - fh);
        self.val -= s;
        self.rng = if fl > 0 {
            self.ext * (fh - fl)
        } else {
            self.rng - s
        };
        self.normalize();
        if self.trace.is_some() {
            let t = self.tell_frac();
            self.trace.as_mut().expect("checked").push(t);
        }
    }

    fn decode_direct(&mut self, ft: u32) -> u32 {
        let s = self.decode(ft);
        self.update(s, s + 1, ft);
        s
    }

    /// Decodes a value coded with [`RangeEncoder::encode_uniform`].
    pub fn decode_uniform(&mut self, n: u128) -> u128 {
        if n <= 1 || self.exhausted() {
            return 0;
        }
        if n <= MAX_DIRECT_FT {
            return self.decode_direct(n as u32) as u128;
        }
        let bits = 128 - (n - 1).leading_zeros();
        let shift = bits - CHUNK_BITS;
        let top_ft = (((n - 1) >> shift) + 1) as u32;
        let mut value = self.decode_direct(top_ft) as u128;
        let mut left = shift;
        while left > 0 {
            let c = left.min(CHUNK_BITS);
            left -= c;
            value = (value << c) | self.decode_direct(1 << c) as u128;
        }
        if value >= n {
            self.corrupt = true;
            value = n - 1;
        }
        value
    }

    pub fn decode_laplace(&mut self, model: &LaplaceModel, band: usize) -> i32 {
        if self.exhausted() {
            return 0;
        }
        let s = self.decode(LAPLACE_FT);
        let cums = &model.cums[band];
        let slot = cums.partition_point(|&c| c <= s) - 1;
        let fl = cums[slot];
        self.update(fl, fl + model.freqs[band][slot], LAPLACE_FT);
        slot as i32 - LAPLACE_MAX
    }

    pub fn tell_frac(&self) -> u32 {
        tell_frac_of(self.nbits_total, self.rng)
    }

    pub fn tell(&self) -> f64 {
        self.tell_frac() as f64 / ONE_BIT as f64
    }

    pub fn tell_bits(&self) -> u32 {
        self.nbits_total - ilog(self.rng)
    }

    /// True once the decoder has run past the end of its packet.
    pub fn underrun(&self) -> bool {
        self.underrun
    }

    /// True if a decoded uniform value fell outside its alphabet.
    pub fn corrupt(&self) -> bool {
        self.corrupt
    }
}
