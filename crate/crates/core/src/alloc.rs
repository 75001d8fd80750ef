//! Implicit bit allocation. Both ends derive fine-energy bits and pulse
//! counts from the bits left after pitch and coarse energy.
//!
//! Costs are integers in 1/65536 bit (`Q16`). Budgets arrive from the range
//! coder in 1/256 bit (`Q8`).

use crate::bands::{BandLayout, CODED_BANDS, PITCH_BANDS};
use crate::energy::{FineBits, MAX_FINE_BITS};
use crate::error::{CodecError, Result};
use crate::pvq::{codebook_size, MAX_K};
use crate::rangecoder::log2_ceil_q16;

pub const Q16_ONE: u64 = 1 << 16;
/// Most pulses a band may receive.
pub const MAX_PULSES: u32 = MAX_K as u32;
/// Most index bits a band may spend.
pub const MAX_BAND_BITS: u64 = 112;
/// Fraction of the remaining bits given to fine energy, in percent.
pub const FINE_SHARE_PERCENT: u64 = 18;
/// Pulse counts of the reference frame the shipped table is calibrated on.
pub const GOLDEN_PULSES: [u32; CODED_BANDS] = [38, 28, 20, 15, 15, 15, 15, 14, 20, 28, 13, 7, 6, 5, 5, 6, 5, 4, 2, 0];

/// Whether a band carries a folding sign bit when it has any share.
pub fn has_fold_sign(band: usize) -> bool {
    band >= PITCH_BANDS
}

/// Cost of a `K`-pulse index in a band of width `n`, or `None` if the
/// codebook exceeds the per-band limits.
pub fn pulse_cost_q16(n: usize, k: u32) -> Option<u64> {
    if k > MAX_PULSES {
        return None;
    }
    let cost = log2_ceil_q16(codebook_size(n, k as usize)?);
    (cost <= MAX_BAND_BITS * Q16_ONE).then_some(cost)
}

/// Largest `K` whose index cost fits in `bits_q16`.
pub fn bits_to_pulses(bits_q16: u64, n: usize) -> u32 {
    let mut k = 0;
    while pulse_cost_q16(n, k + 1).is_some_and(|c| c <= bits_q16) {
        k += 1;
    }
    k
}

/// One row of the allocation table: per-band shares at one innovation level.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocRow {
    pub level_q8: u32,
    pub shares_q8: [u32; CODED_BANDS],
}

/// Static per-band innovation shares as a function of the innovation budget,
/// linearly interpolated between rows.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct AllocTable {
    rows: Vec<AllocRow>,
}

impl AllocTable {
    pub fn new(rows: Vec<AllocRow>) -> Result<Self> {
        if rows.is_empty() {
            return Err(CodecError::InvalidTables("allocation table has no rows".into()));
        }
        for w in rows.windows(2) {
            if w[1].level_q8 <= w[0].level_q8 {
                return Err(CodecError::InvalidTables("allocation levels must increase".into()));
            }
            if w[0].shares_q8.iter().zip(&w[1].shares_q8).any(|(a, b)| b < a) {
                return Err(CodecError::InvalidTables("allocation shares must not decrease".into()));
            }
        }
        Ok(AllocTable { rows })
    }

    pub fn rows(&self) -> &[AllocRow] {
        &self.rows
    }

    /// Reference table: the golden frame's per-band costs at their total,
    /// scaled proportionally below it and extended in proportion to band
    /// width above it.
    pub fn reference() -> Self {
        let golden = golden_costs_q16();
        let level_q16: u64 = golden.iter().sum();
        let golden_level = level_q16.div_ceil(256) as u32;
        let g_q8: Vec<u64> = golden.iter().map(|c| c.div_ceil(256)).collect();
        let total_width = BandLayout.coded_bins() as u64;
        let step = 32 * 256;
        let below = (0..golden_level).step_by(step as usize);
        let above = (golden_level.div_ceil(step) * step..=800 * 256).step_by(step as usize);
        let rows = below
            .chain(std::iter::once(golden_level))
            .chain(above.filter(|&l| l > golden_level))
            .map(|level| {
                let mut shares = [0u32; CODED_BANDS];
                for (b, s) in shares.iter_mut().enumerate() {
                    *s = if level < golden_level {
                        g_q8[b] * level as u64 / golden_level as u64
                    } else {
                        g_q8[b] + (level - golden_level) as u64 * BandLayout.width(b) as u64 / total_width
                    } as u32;
                }
                AllocRow { level_q8: level, shares_q8: shares }
            })
            .collect();
        AllocTable::new(rows).expect("reference table is monotone")
    }

    /// Per-band shares at an innovation budget.
    pub fn shares_q16(&self, budget_q16: u64) -> [u64; CODED_BANDS] {
        let mut out = [0u64; CODED_BANDS];
        let first = &self.rows[0];
        let last = &self.rows[self.rows.len() - 1];
        let at = |r: &AllocRow, b: usize| (r.shares_q8[b] as u64) << 8;
        let level_of = |r: &AllocRow| (r.level_q8 as u64) << 8;
        if budget_q16 <= level_of(first) {
            for (b, o) in out.iter_mut().enumerate() {
                *o = if level_of(first) == 0 { at(first, b) } else { at(first, b) * budget_q16 / level_of(first) };
            }
            return out;
        }
        if budget_q16 >= level_of(last) {
            for (b, o) in out.iter_mut().enumerate() {
                *o = at(last, b);
            }
            return out;
        }
        let hi = self.rows.partition_point(|r| level_of(r) <= budget_q16);
        let (r0, r1) = (&self.rows[hi - 1], &self.rows[hi]);
        let (l0, l1) = (level_of(r0), level_of(r1));
        for (b, o) in out.iter_mut().enumerate() {
            let (s0, s1) = (at(r0, b), at(r1, b));
            *o = s0 + (s1 - s0) * (budget_q16 - l0) / (l1 - l0);
        }
        out
    }
}

/// Exact per-band costs of the golden frame, fold signs included.
pub fn golden_costs_q16() -> [u64; CODED_BANDS] {
    let mut out = [0; CODED_BANDS];
    for (b, o) in out.iter_mut().enumerate() {
        let sign = if has_fold_sign(b) { Q16_ONE } else { 0 };
        *o = pulse_cost_q16(BandLayout.width(b), GOLDEN_PULSES[b]).expect("golden row is codable") + sign;
    }
    out
}

/// Pulses and fold signs for every band, with their total cost.
#[derive(Debug, Clone, PartialEq, Eq, Default)]
pub struct InnovationAllocation {
    pub pulses: [u32; CODED_BANDS],
    pub fold_sign: [bool; CODED_BANDS],
    pub cost_q16: u64,
}

impl InnovationAllocation {
    fn band_cost(&self, b: usize) -> u64 {
        let sign = if self.fold_sign[b] { Q16_ONE } else { 0 };
        sign + pulse_cost_q16(BandLayout.width(b), self.pulses[b]).expect("allocated pulses are codable")
    }

    fn total(&self) -> u64 {
        (0..CODED_BANDS).map(|b| self.band_cost(b)).sum()
    }

    /// Cost of the next step up in band `b`: the sign if it is still
    /// missing, otherwise one more pulse.
    fn step_cost(&self, b: usize) -> Option<u64> {
        if has_fold_sign(b) && !self.fold_sign[b] {
            return Some(Q16_ONE);
        }
        let n = BandLayout.width(b);
        let next = pulse_cost_q16(n, self.pulses[b] + 1)?;
        Some(next - pulse_cost_q16(n, self.pulses[b])?)
    }

    fn step(&mut self, b: usize) {
        if has_fold_sign(b) && !self.fold_sign[b] {
            self.fold_sign[b] = true;
        } else {
            self.pulses[b] += 1;
        }
    }
}

/// Table stage: each band independently takes the most pulses its share
/// affords. Monotone in the budget.
pub fn table_allocation(budget_q16: u64, table: &AllocTable) -> InnovationAllocation {
    let shares = table.shares_q16(budget_q16);
    let mut a = InnovationAllocation::default();
    for b in 0..CODED_BANDS {
        let mut share = shares[b];
        if has_fold_sign(b) {
            if share < Q16_ONE {
                continue;
            }
            a.fold_sign[b] = true;
            share -= Q16_ONE;
        }
        a.pulses[b] = bits_to_pulses(share, BandLayout.width(b));
    }
    a.cost_q16 = a.total();
    a
}

/// Full innovation allocation: the table stage, trimmed from the top band
/// down if it overshoots, then a round-robin sweep that adds one step per
/// band per pass while anything still fits.
pub fn allocate_innovation(budget_q16: u64, table: &AllocTable) -> InnovationAllocation {
    let mut a = table_allocation(budget_q16, table);
    let mut total = a.cost_q16;
    'trim: while total > budget_q16 {
        for b in (0..CODED_BANDS).rev() {
            if a.pulses[b] > 0 {
                a.pulses[b] -= 1;
            } else if a.fold_sign[b] {
                a.fold_sign[b] = false;
            } else {
                continue;
            }
            total = a.total();
            continue 'trim;
        }
        break;
    }
    loop {
        let mut progressed = false;
        for b in 0..CODED_BANDS {
            if let Some(c) = a.step_cost(b) {
                if total + c <= budget_q16 {
                    a.step(b);
                    total += c;
                    progressed = true;
                }
            }
        }
        if !progressed {
            break;
        }
    }
    a.cost_q16 = total;
    a
}

/// Distributes `total` fine-energy bits round-robin over `priority`, at most
/// `MAX_FINE_BITS` per band.
pub fn fine_allocation(total: u32, priority: &[u8; CODED_BANDS]) -> FineBits {
    let mut bits = [0u8; CODED_BANDS];
    let mut left = total.min(MAX_FINE_BITS as u32 * CODED_BANDS as u32);
    'outer: for _ in 0..MAX_FINE_BITS {
        for &b in priority {
            if left == 0 {
                break 'outer;
            }
            bits[b as usize] += 1;
            left -= 1;
        }
    }
    bits
}

/// Everything the decoder needs to parse the rest of a frame.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct FrameAllocation {
    pub fine: FineBits,
    pub innovation: InnovationAllocation,
    pub innovation_budget_q16: u64,
}

impl FrameAllocation {
    pub fn fine_total(&self) -> u32 {
        self.fine.iter().map(|&b| b as u32).sum()
    }

    /// Planned cost of fine energy and innovation.
    pub fn planned_q16(&self) -> u64 {
        self.fine_total() as u64 * Q16_ONE + self.innovation.cost_q16
    }
}

/// Splits the remaining budget (1/256 bit, after pitch, coarse energy and
/// the safety margin) into fine-energy bits and innovation. Fine energy
/// takes its share first and any whole bits left after the pulse
/// allocation.
pub fn compute_allocation(remaining_q8: i64, table: &AllocTable, fine_priority: &[u8; CODED_BANDS]) -> FrameAllocation {
    let remaining_q16 = (remaining_q8.max(0) as u64) << 8;
    let fine_total = (remaining_q8.max(0) as u64 * FINE_SHARE_PERCENT / 100) >> 8;
    let fine = fine_allocation(fine_total as u32, fine_priority);
    let fine_q16 = fine.iter().map(|&b| b as u64).sum::<u64>() * Q16_ONE;
    let innovation_budget_q16 = remaining_q16 - fine_q16;
    let innovation = allocate_innovation(innovation_budget_q16, table);
    // Whole bits the pulse search could not use go back to fine energy.
    let spare = (innovation_budget_q16 - innovation.cost_q16) / Q16_ONE;
    let fine = fine_allocation(fine_q16 as u32 / Q16_ONE as u32 + spare as u32, fine_priority);
    FrameAllocation { fine, innovation, innovation_budget_q16 }
}

/// Default fine-energy priority: low bands first, alternating with the
/// widest bands so that both ends of the spectrum get refinement early.
pub fn default_fine_priority() -> [u8; CODED_BANDS] {
    let mut order: Vec<u8> = (0..CODED_BANDS as u8).collect();
    order.sort_by_key(|&b| (b as usize % 5, b));
    order.try_into().expect("twenty bands")
}
