//! Long-term prediction: period search over the decoded history, per-band
//! gains quantised with a warped vector codebook, and spectral folding for
//! the high bands.

use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

use crate::bands::{BandLayout, CODED_BANDS, PITCH_BANDS};
use crate::error::{CodecError, Result};
use crate::transform::{FrameSpectrum, Mdct, FRAME_SIZE, WINDOW_PAD, WINDOW_SIZE};

/// Decoded samples kept for the period search.
pub const HISTORY_LEN: usize = 1024;
pub const MIN_PERIOD: usize = 384;
pub const MAX_PERIOD: usize = HISTORY_LEN;
/// Number of admissible periods.
pub const PERIOD_COUNT: usize = MAX_PERIOD - MIN_PERIOD + 1;
/// Upper bound on every pitch gain.
pub const GAIN_DAMP: f64 = 0.9;
/// Gain values per codebook entry.
pub const GAIN_VALUES: usize = 8;
pub const GAIN_ENTRIES: usize = 128;
/// Folding gain constant: `g = N / (N + FOLD_DELTA * K)`.
pub const FOLD_DELTA: f64 = 6.0;

const GCC_SIZE: usize = 2048;
const GCC_FLOOR: f64 = 1e-3;
/// Offset in the history of the first sample of the current window.
const WINDOW_START: usize = HISTORY_LEN - WINDOW_PAD;
/// Non-zero span of the analysis window.
const ACTIVE: std::ops::Range<usize> = WINDOW_PAD..WINDOW_SIZE - WINDOW_PAD;

/// Decoded synthesis covering the 1024 samples that end where the current
/// window's non-zero part begins.
pub type History = [f64; HISTORY_LEN];

pub fn warp(g: f64) -> f64 {
    1.0 - (1.0 - g * g).max(0.0).sqrt()
}

pub fn unwarp(w: f64) -> f64 {
    let d = 1.0 - w;
    (1.0 - d * d).max(0.0).sqrt()
}

/// Codebook value that covers pitch band `b`.
pub fn gain_slot(band: usize) -> usize {
    (band / 2).min(GAIN_VALUES - 1)
}

/// Delayed copy of the history for period `t`, laid out as a window.
fn delayed_window(history: &History, t: usize) -> [f64; WINDOW_SIZE] {
    let mut d = [0.0; WINDOW_SIZE];
    for n in ACTIVE {
        d[n] = history[WINDOW_START + n - t];
    }
    d
}

/// Frequency-domain generalised cross-correlation period search.
#[derive(Clone)]
pub struct PeriodSearch {
    fwd: Arc<dyn Fft<f64>>,
    inv: Arc<dyn Fft<f64>>,
    window: [f64; WINDOW_SIZE],
}

impl std::fmt::Debug for PeriodSearch {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.write_str("PeriodSearch")
    }
}

impl Default for PeriodSearch {
    fn default() -> Self {
        Self::new()
    }
}

impl PeriodSearch {
    pub fn new() -> Self {
        let mut planner = FftPlanner::new();
        PeriodSearch {
            fwd: planner.plan_fft_forward(GCC_SIZE),
            inv: planner.plan_fft_inverse(GCC_SIZE),
            window: crate::transform::window(),
        }
    }

    /// Cross-correlation score for every admissible period, indexed by
    /// `T - MIN_PERIOD`. `None` when input or history is silent.
    pub fn scores(&self, history: &History, input: &[f64; WINDOW_SIZE]) -> Option<Vec<f64>> {
        let mut a = vec![Complex64::default(); GCC_SIZE];
        for (m, n) in ACTIVE.enumerate() {
            a[m] = Complex64::new(input[n] * self.window[n], 0.0);
        }
        let mut h: Vec<Complex64> = history.iter().map(|&v| Complex64::new(v, 0.0)).collect();
        h.resize(GCC_SIZE, Complex64::default());
        if a.iter().all(|c| c.re == 0.0) || history.iter().all(|&v| v == 0.0) {
            return None;
        }
        self.fwd.process(&mut a);
        self.fwd.process(&mut h);
        let peak = a.iter().map(|c| c.norm()).fold(0.0, f64::max);
        let floor = GCC_FLOOR * peak;
        let mut c: Vec<Complex64> = a.iter().zip(&h).map(|(a, h)| a.conj() * h / (a.norm() + floor)).collect();
        self.inv.process(&mut c);
        // Lag s = HISTORY_LEN - T lines the delayed window up with the input.
        Some((MIN_PERIOD..=MAX_PERIOD).map(|t| c[HISTORY_LEN - t].re).collect())
    }

    /// Best period in `[MIN_PERIOD, MAX_PERIOD]`; ties go to the smaller
    /// period and silence gives `MIN_PERIOD`.
    pub fn find_period(&self, history: &History, input: &[f64; WINDOW_SIZE]) -> usize {
        let Some(scores) = self.scores(history, input) else {
            return MIN_PERIOD;
        };
        let mut best = 0;
        for (i, &s) in scores.iter().enumerate() {
            if s > scores[best] {
                best = i;
            }
        }
        MIN_PERIOD + best
    }
}

/// Per-band unit-norm pitch vectors for bands below the fold start. Bands
/// whose delayed signal is silent are zero.
#[derive(Debug, Clone, PartialEq)]
pub struct PitchVector {
    pub bins: FrameSpectrum,
    pub silent: [bool; PITCH_BANDS],
}

pub fn adaptive_vector(mdct: &Mdct, history: &History, period: usize) -> PitchVector {
    let spec = mdct.forward(&delayed_window(history, period));
    let mut bins = [0.0; FRAME_SIZE];
    let mut silent = [false; PITCH_BANDS];
    for (b, flag) in silent.iter_mut().enumerate() {
        let r = BandLayout.range(b);
        let e: f64 = spec[r.clone()].iter().map(|v| v * v).sum();
        if e > 0.0 {
            let g = 1.0 / e.sqrt();
            for i in r {
                bins[i] = spec[i] * g;
            }
        } else {
            *flag = true;
        }
    }
    PitchVector { bins, silent }
}

/// Unquantised gains `0.9 * x.p`, clamped to `[0, 0.9]`.
pub fn raw_gains(x: &[f64; FRAME_SIZE], p: &PitchVector) -> [f64; PITCH_BANDS] {
    let mut g = [0.0; PITCH_BANDS];
    for (b, gb) in g.iter_mut().enumerate() {
        let r = BandLayout.range(b);
        let dot: f64 = x[r.clone()].iter().zip(&p.bins[r]).map(|(a, b)| a * b).sum();
        *gb = (GAIN_DAMP * dot).clamp(0.0, GAIN_DAMP);
    }
    g
}

/// Warped-domain targets: the mean warped gain over the bands each codebook
/// value covers.
pub fn gain_targets(raw: &[f64; PITCH_BANDS]) -> [f64; GAIN_VALUES] {
    let mut sum = [0.0; GAIN_VALUES];
    let mut count = [0usize; GAIN_VALUES];
    for (b, &g) in raw.iter().enumerate() {
        sum[gain_slot(b)] += warp(g);
        count[gain_slot(b)] += 1;
    }
    let mut t = [0.0; GAIN_VALUES];
    for j in 0..GAIN_VALUES {
        t[j] = sum[j] / count[j] as f64;
    }
    t
}

/// 128 entries of 8 warped gains stored as bytes; byte 255 is the warped
/// damping bound. Entry 0 is all zeros.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct GainCodebook {
    entries: Vec<[u8; GAIN_VALUES]>,
}

impl GainCodebook {
    pub fn new(entries: Vec<[u8; GAIN_VALUES]>) -> Result<Self> {
        if entries.len() != GAIN_ENTRIES {
            return Err(CodecError::InvalidTables(format!("gain codebook has {} entries, expected {GAIN_ENTRIES}", entries.len())));
        }
        if entries[0] != [0; GAIN_VALUES] {
            return Err(CodecError::InvalidTables("gain codebook entry 0 must be all zeros".into()));
        }
        Ok(GainCodebook { entries })
    }

    pub fn from_bytes(bytes: &[u8]) -> Result<Self> {
        if bytes.len() != GAIN_ENTRIES * GAIN_VALUES {
            return Err(CodecError::InvalidTables(format!("gain codebook is {} bytes", bytes.len())));
        }
        Self::new(bytes.chunks_exact(GAIN_VALUES).map(|c| c.try_into().expect("chunk of 8")).collect())
    }

    pub fn to_bytes(&self) -> Vec<u8> {
        self.entries.iter().flatten().copied().collect()
    }

    pub fn entries(&self) -> &[[u8; GAIN_VALUES]] {
        &self.entries
    }

    pub fn byte_to_warped(v: u8) -> f64 {
        v as f64 / 255.0 * warp(GAIN_DAMP)
    }

    pub fn warped_to_byte(w: f64) -> u8 {
        (w / warp(GAIN_DAMP) * 255.0).round().clamp(0.0, 255.0) as u8
    }

    pub fn warped(&self, index: usize) -> [f64; GAIN_VALUES] {
        self.entries[index].map(Self::byte_to_warped)
    }

    /// Nearest entry to the warped targets; lowest index wins ties.
    pub fn quantize(&self, targets: &[f64; GAIN_VALUES]) -> usize {
        let dist = |i: usize| -> f64 { self.warped(i).iter().zip(targets).map(|(a, b)| (a - b) * (a - b)).sum() };
        (0..GAIN_ENTRIES).fold(0, |best, i| if dist(i) < dist(best) { i } else { best })
    }

    /// Unwarped per-band gains of an entry.
    pub fn band_gains(&self, index: usize) -> [f64; PITCH_BANDS] {
        let w = self.warped(index);
        std::array::from_fn(|b| unwarp(w[gain_slot(b)]))
    }
}

/// Folding gain for a band of width `n` with `k` pulses.
pub fn folding_gain(n: usize, k: u32) -> f64 {
    n as f64 / (n as f64 + FOLD_DELTA * k as f64)
}

/// Adaptive vector for a folded band: the already quantised excitation from
/// bin 0 upward, repeated as needed, normalised and signed. Zero if the
/// source is silent.
pub fn folding_vector(quantized: &[f64; FRAME_SIZE], band: usize, negative: bool) -> Vec<f64> {
    debug_assert!(band >= PITCH_BANDS && band < CODED_BANDS);
    let start = BandLayout.start(band);
    let n = BandLayout.width(band);
    let mut p: Vec<f64> = (0..n).map(|i| quantized[i % start]).collect();
    let e: f64 = p.iter().map(|v| v * v).sum();
    if e > 0.0 {
        let g = if negative { -1.0 } else { 1.0 } / e.sqrt();
        p.iter_mut().for_each(|v| *v *= g);
    }
    p
}
