//! Frame encoder and decoder.
//!
//! Packet layout, in coding order: pitch gain index (uniform over 128),
//! period minus 384 (uniform over 641, only for a non-zero index), coarse
//! energy for all bands, fine energy, then for each band in ascending order
//! the folding sign where allocated and the pulse-vector index. The rest of
//! the packet is padding.
//!
//! The encoder runs the same synthesis as the decoder so that the pitch
//! history and the energy predictor stay identical on both sides.

use crate::alloc::{compute_allocation, FrameAllocation};
use crate::bands::{energy_to_db, split_and_normalize, BandEnergies, BandLayout, CODED_BANDS, PITCH_BANDS};
use crate::energy::{fine_decode, fine_encode, BandDb, EnergyPredictor};
use crate::error::{CodecError, Result};
use crate::pitch::{
    adaptive_vector, folding_gain, folding_vector, gain_targets, raw_gains, History, PeriodSearch, PitchVector, GAIN_ENTRIES,
    HISTORY_LEN, MIN_PERIOD, PERIOD_COUNT,
};
use crate::pvq::{codebook_size, decode_index, encode_index, fixed_gain, search_fast, PulseVector};
use crate::rangecoder::{RangeDecoder, RangeEncoder, ONE_BIT};
use crate::tables::Tables;
use crate::transform::{inverse_wola, AnalysisBuffer, FrameSpectrum, Mdct, OverlapState, FINAL_LOOKAHEAD, FRAME_SIZE};

pub const MIN_BYTES: usize = 16;
pub const MAX_BYTES: usize = 96;
/// Bits held back from the allocation so the range coder can always flush.
pub const MARGIN_Q8: u32 = ONE_BIT;
/// Per-loss attenuation of the reused pitch gains during concealment.
pub const CONCEAL_GAIN_DECAY: f64 = 0.9;
pub const SAMPLE_RATE: u32 = 44_100;
/// No band of a full-scale frame can exceed 512 units of energy.
pub const PEAK_BAND_DB: f64 = 27.093;

/// Stream parameters shared by encoder and decoder.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct CodecConfig {
    /// Packet size in bytes.
    pub bytes_per_frame: usize,
    /// Keep the last byte of every packet free for an 8-bit parity code.
    pub reserve_parity: bool,
}

impl CodecConfig {
    pub fn new(bytes_per_frame: usize) -> Result<Self> {
        if !(MIN_BYTES..=MAX_BYTES).contains(&bytes_per_frame) {
            return Err(CodecError::InvalidConfig(format!(
                "bytes per frame must be in {MIN_BYTES}..={MAX_BYTES}, got {bytes_per_frame}"
            )));
        }
        Ok(CodecConfig { bytes_per_frame, reserve_parity: false })
    }

    pub fn with_parity(mut self, on: bool) -> Self {
        self.reserve_parity = on;
        self
    }

    /// Bytes written by the range coder.
    pub fn payload_bytes(&self) -> usize {
        self.bytes_per_frame - self.reserve_parity as usize
    }

    pub fn budget_q8(&self) -> u32 {
        8 * self.payload_bytes() as u32 * ONE_BIT
    }

    pub fn bitrate(&self) -> f64 {
        self.bytes_per_frame as f64 * 8.0 * SAMPLE_RATE as f64 / FRAME_SIZE as f64
    }
}

/// `tell_frac` after each section of a frame.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub struct SectionMarks {
    pub gain: u32,
    pub period: u32,
    pub coarse: u32,
    pub fine: u32,
    pub innovation: u32,
}

/// What happened in the most recent frame.
#[derive(Debug, Clone, PartialEq, Default)]
pub struct FrameInfo {
    pub gain_index: usize,
    pub period: Option<usize>,
    /// Energies used for synthesis, in dB.
    pub energies_db: BandDb,
    /// Spectrum handed to the inverse transform.
    pub spectrum: Vec<f64>,
    pub allocation: Option<FrameAllocation>,
    pub marks: SectionMarks,
    pub concealed: bool,
    /// Output samples clipped to full scale.
    pub saturated: usize,
    /// `tell_frac` after every symbol, when tracing is on.
    pub trace: Option<Vec<u32>>,
}

/// Decoder-side state, which the encoder carries as well.
#[derive(Debug, Clone, PartialEq)]
pub struct SynthState {
    overlap: OverlapState,
    emitted: Vec<f64>,
    predictor: EnergyPredictor,
    frame: u64,
    last_period: usize,
    last_gain_index: usize,
    losses: u32,
}

impl SynthState {
    fn new(tables: &Tables) -> Self {
        SynthState {
            overlap: OverlapState::default(),
            emitted: vec![0.0; HISTORY_LEN - FINAL_LOOKAHEAD],
            predictor: EnergyPredictor::new(tables.mean_db),
            frame: 0,
            last_period: MIN_PERIOD,
            last_gain_index: 0,
            losses: 0,
        }
    }

    pub fn frame(&self) -> u64 {
        self.frame
    }

    pub fn predictor(&self) -> &EnergyPredictor {
        &self.predictor
    }

    /// Decoded signal ending where the next window's non-zero part begins.
    pub fn history(&self) -> History {
        let mut h = [0.0; HISTORY_LEN];
        let split = HISTORY_LEN - FINAL_LOOKAHEAD;
        h[..split].copy_from_slice(&self.emitted);
        h[split..].copy_from_slice(self.overlap.finalized_tail());
        h
    }

    fn synthesize(&mut self, mdct: &Mdct, excitation: &FrameSpectrum, energies_db: &BandDb) -> ([f64; FRAME_SIZE], FrameSpectrum) {
        let energies = BandEnergies::from_db(limit_energies(energies_db));
        let spectrum = crate::bands::denormalize(excitation, &energies, &BandLayout);
        let out = inverse_wola(mdct, &spectrum, &mut self.overlap);
        self.emitted.copy_within(FRAME_SIZE.., 0);
        let n = self.emitted.len();
        self.emitted[n - FRAME_SIZE..].copy_from_slice(&out);
        self.predictor.commit(energies_db);
        self.frame += 1;
        (out, spectrum)
    }
}

/// Scales band energies down so the frame stays within what a full-scale
/// input can produce. Only a decoder that has lost track of the energy
/// predictor after packet loss gets here.
fn limit_energies(db: &BandDb) -> BandDb {
    let db = db.map(|e| e.min(PEAK_BAND_DB));
    let total: f64 = db.iter().map(|&e| 10f64.powf(e / 10.0)).sum();
    let excess = 10.0 * (total / 10f64.powf(PEAK_BAND_DB / 10.0)).log10();
    if excess > 0.0 { db.map(|e| e - excess) } else { db }
}

/// Deterministic unit-norm noise for band `band` of frame `frame`.
pub fn noise_vector(frame: u64, band: usize, n: usize) -> Vec<f64> {
    let mut s = (frame as u32).wrapping_mul(0x9E37_79B9) ^ (band as u32).wrapping_mul(0x85EB_CA6B) ^ 0x2545_F491;
    let mut v: Vec<f64> = (0..n)
        .map(|_| {
            s = s.wrapping_mul(1_664_525).wrapping_add(1_013_904_223);
            ((s >> 16) as i32 - 32_768) as f64
        })
        .collect();
    let e = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    if e > 0.0 {
        v.iter_mut().for_each(|x| *x /= e);
    } else {
        v[0] = 1.0;
    }
    v
}

/// Combines the adaptive vector and the pulse vector into a unit-norm band.
pub fn mix_excitation(p: &[f64], ga: f64, y: &PulseVector) -> Vec<f64> {
    let gf = fixed_gain(ga, y.dot(p), y.norm_sq());
    p.iter().zip(&y.0).map(|(&p, &y)| ga * p + gf * y as f64).collect()
}

fn is_zero(v: &[f64]) -> bool {
    v.iter().all(|&x| x == 0.0)
}

/// Unit vector for a band that has neither pulses nor a usable adaptive
/// vector: the lower spectrum folded up, or noise if that is silent too.
fn substitute(excitation: &FrameSpectrum, band: usize, frame: u64) -> Vec<f64> {
    let start = BandLayout.start(band);
    let n = BandLayout.width(band);
    if start > 0 {
        let mut v: Vec<f64> = (0..n).map(|i| excitation[i % start]).collect();
        let e = v.iter().map(|x| x * x).sum::<f64>().sqrt();
        if e > 0.0 {
            v.iter_mut().for_each(|x| *x /= e);
            return v;
        }
    }
    noise_vector(frame, band, n)
}

/// Final unit-norm excitation of one band.
fn band_excitation(excitation: &FrameSpectrum, band: usize, frame: u64, p: &[f64], ga: f64, y: &PulseVector) -> Vec<f64> {
    if y.pulses() > 0 {
        mix_excitation(p, ga, y)
    } else if ga > 0.0 && !is_zero(p) {
        p.to_vec()
    } else {
        substitute(excitation, band, frame)
    }
}

/// Adaptive vector and gain of a pitch band.
fn pitch_adaptive(band: usize, pitch: Option<&(PitchVector, [f64; PITCH_BANDS])>) -> (Vec<f64>, f64) {
    let r = BandLayout.range(band);
    match pitch {
        Some((pv, gains)) if !pv.silent[band] => (pv.bins[r].to_vec(), gains[band]),
        _ => (vec![0.0; r.len()], 0.0),
    }
}

fn fold_adaptive(excitation: &FrameSpectrum, band: usize, negative: bool, pulses: u32) -> (Vec<f64>, f64) {
    let p = folding_vector(excitation, band, negative);
    let g = if is_zero(&p) { 0.0 } else { folding_gain(p.len(), pulses) };
    (p, g)
}

fn pitch_gains(tables: &Tables, index: usize, pv: &PitchVector, scale: f64) -> [f64; PITCH_BANDS] {
    let mut g = tables.codebook.band_gains(index);
    for (b, v) in g.iter_mut().enumerate() {
        *v = if pv.silent[b] { 0.0 } else { *v * scale };
    }
    g
}

fn remaining_q8(config: &CodecConfig, tell: u32) -> i64 {
    config.budget_q8() as i64 - tell as i64 - MARGIN_Q8 as i64
}

#[derive(Clone)]
pub struct Encoder {
    config: CodecConfig,
    tables: Tables,
    model: crate::rangecoder::LaplaceModel,
    mdct: Mdct,
    search: PeriodSearch,
    analysis: AnalysisBuffer,
    synth: SynthState,
    trace: bool,
    last: FrameInfo,
}

impl Encoder {
    pub fn new(config: CodecConfig, tables: Tables) -> Self {
        Encoder {
            config,
            model: tables.laplace_model(),
            synth: SynthState::new(&tables),
            tables,
            mdct: Mdct::new(),
            search: PeriodSearch::new(),
            analysis: AnalysisBuffer::default(),
            trace: false,
            last: FrameInfo::default(),
        }
    }

    /// Record `tell_frac` after every symbol in [`FrameInfo::trace`].
    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    /// Changes the packet size from the next frame on. The decoder must
    /// switch at the same frame.
    pub fn set_config(&mut self, config: CodecConfig) {
        self.config = config;
    }

    /// The embedded decoder's state.
    pub fn synth_state(&self) -> &SynthState {
        &self.synth
    }

    pub fn last_frame(&self) -> &FrameInfo {
        &self.last
    }

    /// Encodes 256 samples into one packet of `payload_bytes()` bytes.
    pub fn encode_frame(&mut self, pcm: &[f64]) -> Result<Vec<u8>> {
        let frame: &[f64; FRAME_SIZE] = pcm
            .try_into()
            .map_err(|_| CodecError::ContractViolation(format!("frame has {} samples, expected {FRAME_SIZE}", pcm.len())))?;
        let window = *self.analysis.push(frame);
        let (energies, x) = split_and_normalize(&self.mdct.forward(&window), &BandLayout);
        let history = self.synth.history();
        let mut enc = if self.trace { RangeEncoder::new().with_trace() } else { RangeEncoder::new() };
        let mut marks = SectionMarks::default();

        let (gain_index, period, pitch) = if self.synth.frame == 0 {
            (0, MIN_PERIOD, None)
        } else {
            let t = self.search.find_period(&history, &window);
            let pv = adaptive_vector(&self.mdct, &history, t);
            let index = self.tables.codebook.quantize(&gain_targets(&raw_gains(&x.bins, &pv)));
            (index, t, Some(pv))
        };
        enc.encode_uniform(gain_index as u128, GAIN_ENTRIES as u128)?;
        marks.gain = enc.tell_frac();
        if gain_index != 0 {
            enc.encode_uniform((period - MIN_PERIOD) as u128, PERIOD_COUNT as u128)?;
        }
        marks.period = enc.tell_frac();
        let pitch = pitch.filter(|_| gain_index != 0).map(|pv| {
            let g = pitch_gains(&self.tables, gain_index, &pv, 1.0);
            (pv, g)
        });

        let limit = self.config.budget_q8() - MARGIN_Q8;
        let coarse = self.synth.predictor.encode(&energies.db, &mut enc, &self.model, Some(limit));
        marks.coarse = enc.tell_frac();
        let alloc = compute_allocation(remaining_q8(&self.config, marks.coarse), &self.tables.alloc, &self.tables.fine_priority);
        let final_db = fine_encode(&energies.db, &coarse.db, &alloc.fine, &mut enc);
        marks.fine = enc.tell_frac();

        let frame_no = self.synth.frame;
        let mut excitation = [0.0; FRAME_SIZE];
        for b in 0..CODED_BANDS {
            let r = BandLayout.range(b);
            let k = alloc.innovation.pulses[b];
            let (p, ga) = if b < PITCH_BANDS {
                pitch_adaptive(b, pitch.as_ref())
            } else {
                let negative = alloc.innovation.fold_sign[b] && {
                    let probe = folding_vector(&excitation, b, false);
                    probe.iter().zip(&x.bins[r.clone()]).map(|(a, b)| a * b).sum::<f64>() < 0.0
                };
                if alloc.innovation.fold_sign[b] {
                    enc.encode_uniform(negative as u128, 2)?;
                }
                fold_adaptive(&excitation, b, negative, k)
            };
            let y = if k > 0 {
                let target: Vec<f64> = x.bins[r.clone()].iter().zip(&p).map(|(x, p)| x - ga * p).collect();
                let y = search_fast(&target, &p, ga, k as usize)?.y;
                let size = codebook_size(r.len(), k as usize).expect("allocated codebooks fit");
                enc.encode_uniform(encode_index(&y)?, size)?;
                y
            } else {
                PulseVector::zeros(r.len())
            };
            let xb = band_excitation(&excitation, b, frame_no, &p, ga, &y);
            excitation[r].copy_from_slice(&xb);
        }
        marks.innovation = enc.tell_frac();
        let trace = enc.trace().map(<[u32]>::to_vec);
        let packet = enc.finish(self.config.payload_bytes())?;

        let (_, spectrum) = self.synth.synthesize(&self.mdct, &excitation, &final_db);
        self.synth.losses = 0;
        self.synth.last_gain_index = gain_index;
        self.synth.last_period = if gain_index != 0 { period } else { MIN_PERIOD };
        self.last = FrameInfo {
            gain_index,
            period: (gain_index != 0).then_some(period),
            energies_db: final_db,
            spectrum: spectrum.to_vec(),
            allocation: Some(alloc),
            marks,
            concealed: false,
            saturated: 0,
            trace,
        };
        Ok(packet)
    }
}

#[derive(Clone)]
pub struct Decoder {
    config: CodecConfig,
    tables: Tables,
    model: crate::rangecoder::LaplaceModel,
    mdct: Mdct,
    synth: SynthState,
    trace: bool,
    last: FrameInfo,
}

impl Decoder {
    pub fn new(config: CodecConfig, tables: Tables) -> Self {
        Decoder {
            config,
            model: tables.laplace_model(),
            synth: SynthState::new(&tables),
            tables,
            mdct: Mdct::new(),
            trace: false,
            last: FrameInfo::default(),
        }
    }

    pub fn set_trace(&mut self, on: bool) {
        self.trace = on;
    }

    pub fn config(&self) -> &CodecConfig {
        &self.config
    }

    pub fn set_config(&mut self, config: CodecConfig) {
        self.config = config;
    }

    pub fn synth_state(&self) -> &SynthState {
        &self.synth
    }

    pub fn last_frame(&self) -> &FrameInfo {
        &self.last
    }

    /// Decodes one packet, or conceals a lost one when `packet` is `None`.
    /// Output is clipped to [-1, 1].
    pub fn decode_frame(&mut self, packet: Option<&[u8]>) -> [f64; FRAME_SIZE] {
        let mut out = match packet {
            Some(p) => self.decode_packet(p),
            None => self.conceal(),
        };
        // The pitch history keeps the unclipped signal.
        self.last.saturated = out.iter().filter(|v| v.abs() > 1.0).count();
        out.iter_mut().for_each(|v| *v = v.clamp(-1.0, 1.0));
        out
    }

    fn decode_packet(&mut self, packet: &[u8]) -> [f64; FRAME_SIZE] {
        let mut dec = if self.trace { RangeDecoder::new(packet).with_trace() } else { RangeDecoder::new(packet) };
        let mut marks = SectionMarks::default();
        let gain_index = dec.decode_uniform(GAIN_ENTRIES as u128) as usize;
        marks.gain = dec.tell_frac();
        let period = if gain_index != 0 { MIN_PERIOD + dec.decode_uniform(PERIOD_COUNT as u128) as usize } else { MIN_PERIOD };
        marks.period = dec.tell_frac();
        let pitch = (gain_index != 0).then(|| {
            let pv = adaptive_vector(&self.mdct, &self.synth.history(), period);
            let g = pitch_gains(&self.tables, gain_index, &pv, 1.0);
            (pv, g)
        });

        let coarse = self.synth.predictor.decode(&mut dec, &self.model);
        marks.coarse = dec.tell_frac();
        let alloc = compute_allocation(remaining_q8(&self.config, marks.coarse), &self.tables.alloc, &self.tables.fine_priority);
        let final_db = fine_decode(&coarse.db, &alloc.fine, &mut dec);
        marks.fine = dec.tell_frac();

        let frame_no = self.synth.frame;
        let mut excitation = [0.0; FRAME_SIZE];
        for b in 0..CODED_BANDS {
            let r = BandLayout.range(b);
            let k = alloc.innovation.pulses[b];
            let (p, ga) = if b < PITCH_BANDS {
                pitch_adaptive(b, pitch.as_ref())
            } else {
                let negative = alloc.innovation.fold_sign[b] && dec.decode_uniform(2) == 1;
                fold_adaptive(&excitation, b, negative, k)
            };
            let y = if k > 0 {
                let size = codebook_size(r.len(), k as usize).expect("allocated codebooks fit");
                let index = dec.decode_uniform(size);
                decode_index(index, r.len(), k as usize).expect("decoded index is in range")
            } else {
                PulseVector::zeros(r.len())
            };
            let xb = band_excitation(&excitation, b, frame_no, &p, ga, &y);
            excitation[r].copy_from_slice(&xb);
        }
        marks.innovation = dec.tell_frac();
        let trace = dec.trace().map(<[u32]>::to_vec);

        let (out, spectrum) = self.synth.synthesize(&self.mdct, &excitation, &final_db);
        self.synth.losses = 0;
        self.synth.last_gain_index = gain_index;
        self.synth.last_period = period;
        self.last = FrameInfo {
            gain_index,
            period: (gain_index != 0).then_some(period),
            energies_db: final_db,
            spectrum: spectrum.to_vec(),
            allocation: Some(alloc),
            marks,
            concealed: false,
            saturated: 0,
            trace,
        };
        out
    }

    fn conceal(&mut self) -> [f64; FRAME_SIZE] {
        self.synth.losses += 1;
        if self.synth.frame == 0 {
            // Nothing received yet: hold silence rather than the mean.
            self.synth.predictor.commit(&[energy_to_db(0.0); CODED_BANDS]);
        }
        let energies = self.synth.predictor.conceal();
        let gain_index = self.synth.last_gain_index;
        let period = self.synth.last_period;
        let scale = CONCEAL_GAIN_DECAY.powi(self.synth.losses as i32);
        let pitch = (gain_index != 0).then(|| {
            let pv = adaptive_vector(&self.mdct, &self.synth.history(), period);
            let g = pitch_gains(&self.tables, gain_index, &pv, scale);
            (pv, g)
        });
        let frame_no = self.synth.frame;
        let mut excitation = [0.0; FRAME_SIZE];
        for b in 0..CODED_BANDS {
            let r = BandLayout.range(b);
            let xb = if b < PITCH_BANDS {
                let (p, ga) = pitch_adaptive(b, pitch.as_ref());
                let noise = noise_vector(frame_no, b, r.len());
                if ga > 0.0 {
                    let gf = fixed_gain(ga, noise.iter().zip(&p).map(|(a, b)| a * b).sum(), 1.0);
                    p.iter().zip(&noise).map(|(p, n)| ga * p + gf * n).collect()
                } else {
                    substitute(&excitation, b, frame_no)
                }
            } else {
                let (p, ga) = fold_adaptive(&excitation, b, false, 0);
                band_excitation(&excitation, b, frame_no, &p, ga, &PulseVector::zeros(r.len()))
            };
            excitation[r].copy_from_slice(&xb);
        }
        let (out, spectrum) = self.synth.synthesize(&self.mdct, &excitation, &energies);
        self.last = FrameInfo {
            gain_index,
            period: (gain_index != 0).then_some(period),
            energies_db: energies,
            spectrum: spectrum.to_vec(),
            allocation: None,
            marks: SectionMarks::default(),
            concealed: true,
            saturated: 0,
            trace: None,
        };
        out
    }
}
