//! Band-energy quantiser: predicted 6 dB coarse step, Laplace coded, plus
//! equiprobable fine refinement.

use crate::bands::CODED_BANDS;
use crate::rangecoder::{LaplaceModel, RangeDecoder, RangeEncoder, LAPLACE_MAX};

pub const ALPHA: f64 = 0.8;
pub const BETA: f64 = 0.6;
/// Coarse quantiser step in dB.
pub const STEP_DB: f64 = 6.0;
/// Attenuation applied to the held energies for every lost frame.
pub const CONCEAL_DECAY_DB: f64 = 3.0;
/// Most fine-energy bits a band can take.
pub const MAX_FINE_BITS: u8 = 5;
/// Reconstructed coarse energies are kept inside this range. A frame of
/// samples in [-1, 1] has at most 512 units of energy (27.1 dB), so the
/// ceiling only bites on corrupt or concealment-shifted predictor state.
pub const MIN_DB: f64 = -120.0;
pub const MAX_DB: f64 = 30.0;

pub type BandDb = [f64; CODED_BANDS];

/// Coefficients of the two-dimensional prediction filter.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct PredictorCoefficients {
    pub alpha: f64,
    pub beta: f64,
}

impl Default for PredictorCoefficients {
    fn default() -> Self {
        PredictorCoefficients { alpha: ALPHA, beta: BETA }
    }
}

/// Result of coarse quantisation of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct Coarse {
    pub q: [i32; CODED_BANDS],
    pub db: BandDb,
}

/// Inter-frame and inter-band predictor shared by encoder and decoder.
///
/// Prediction runs on energies with the per-band mean removed. The
/// inter-band part restarts at band 0 on every frame.
#[derive(Debug, Clone, PartialEq)]
pub struct EnergyPredictor {
    mean: BandDb,
    prev: BandDb,
    coef: PredictorCoefficients,
}

impl EnergyPredictor {
    pub fn new(mean: BandDb) -> Self {
        Self::with_coefficients(mean, PredictorCoefficients::default())
    }

    pub fn with_coefficients(mean: BandDb, coef: PredictorCoefficients) -> Self {
        EnergyPredictor { mean, prev: mean, coef }
    }

    pub fn reset(&mut self) {
        self.prev = self.mean;
    }

    pub fn coefficients(&self) -> PredictorCoefficients {
        self.coef
    }

    pub fn mean(&self) -> &BandDb {
        &self.mean
    }

    /// Previous frame's quantised energies in dB.
    pub fn previous(&self) -> &BandDb {
        &self.prev
    }

    /// Runs the predictor over one frame. `pick(b, predicted)` returns the
    /// residual index for band `b` given the predicted mean-removed value.
    fn run(&self, mut pick: impl FnMut(usize, f64) -> i32) -> Coarse {
        let PredictorCoefficients { alpha, beta } = self.coef;
        let mut q = [0i32; CODED_BANDS];
        let mut db = [0.0; CODED_BANDS];
        let mut d = 0.0;
        for b in 0..CODED_BANDS {
            let pred = alpha * (self.prev[b] - self.mean[b]) + d;
            q[b] = pick(b, pred);
            let step = STEP_DB * q[b] as f64;
            db[b] = (self.mean[b] + pred + step).clamp(MIN_DB, MAX_DB);
            d += (1.0 - beta) * step;
        }
        Coarse { q, db }
    }

    /// Coarse quantisation without entropy coding.
    pub fn quantize(&self, e_db: &BandDb) -> Coarse {
        self.run(|b, pred| nearest_index(e_db[b] - self.mean[b] - pred))
    }

    /// Energies the decoder reconstructs from residual indices.
    pub fn reconstruct(&self, q: &[i32; CODED_BANDS]) -> Coarse {
        self.run(|b, _| q[b])
    }

    /// Codes the coarse residuals. When `limit_q8` is given, each residual
    /// is pulled toward zero as needed so that coding the remaining bands
    /// with zero residuals still ends at or below that many 1/256 bits.
    pub fn encode(&self, e_db: &BandDb, enc: &mut RangeEncoder, model: &LaplaceModel, limit_q8: Option<u32>) -> Coarse {
        let reserve: Vec<u32> = (0..CODED_BANDS)
            .map(|b| ((b + 1)..CODED_BANDS).map(|c| model.cost_q8(c, 0)).sum())
            .collect();
        self.run(|b, pred| {
            let mut q = nearest_index(e_db[b] - self.mean[b] - pred).clamp(-LAPLACE_MAX, LAPLACE_MAX);
            if let Some(limit) = limit_q8 {
                while q != 0 {
                    let mut trial = enc.clone();
                    trial.encode_laplace(q, model, b);
                    if trial.tell_frac() + reserve[b] <= limit {
                        break;
                    }
                    q -= q.signum();
                }
            }
            enc.encode_laplace(q, model, b)
        })
    }

    pub fn decode(&self, dec: &mut RangeDecoder<'_>, model: &LaplaceModel) -> Coarse {
        self.run(|b, _| dec.decode_laplace(model, b))
    }

    /// Residuals of the unquantised filter: the input is passed through the
    /// prediction-error filter exactly, without rounding. The state is
    /// updated with the input itself.
    pub fn bypass(&mut self, e_db: &BandDb) -> BandDb {
        let PredictorCoefficients { alpha, beta } = self.coef;
        let mut out = [0.0; CODED_BANDS];
        let mut d = 0.0;
        for b in 0..CODED_BANDS {
            let pred = alpha * (self.prev[b] - self.mean[b]) + d;
            let step = e_db[b] - self.mean[b] - pred;
            out[b] = step / STEP_DB;
            d += (1.0 - beta) * step;
        }
        self.prev = *e_db;
        out
    }

    /// Makes `final_db` (coarse plus fine) the history for the next frame.
    pub fn commit(&mut self, final_db: &BandDb) {
        self.prev = *final_db;
    }

    /// Energies for a lost frame: the previous frame attenuated by 3 dB. The
    /// state advances as if these had been received.
    pub fn conceal(&mut self) -> BandDb {
        for v in &mut self.prev {
            *v = (*v - CONCEAL_DECAY_DB).max(MIN_DB);
        }
        self.prev
    }
}

fn nearest_index(err_db: f64) -> i32 {
    (err_db / STEP_DB).round().clamp(-(LAPLACE_MAX as f64), LAPLACE_MAX as f64) as i32
}

/// Per-band fine-energy bit counts for one frame.
pub type FineBits = [u8; CODED_BANDS];

fn fine_index(err_db: f64, bits: u8) -> u32 {
    let levels = 1u32 << bits;
    let i = ((err_db + STEP_DB / 2.0) / STEP_DB * levels as f64).floor();
    i.clamp(0.0, (levels - 1) as f64) as u32
}

fn fine_offset(index: u32, bits: u8) -> f64 {
    (index as f64 + 0.5) * STEP_DB / (1u32 << bits) as f64 - STEP_DB / 2.0
}

/// Refines the coarse energies with `bits[b]` uniform levels across the
/// 6 dB cell of each band.
pub fn fine_encode(e_db: &BandDb, coarse: &BandDb, bits: &FineBits, enc: &mut RangeEncoder) -> BandDb {
    let mut out = *coarse;
    for b in 0..CODED_BANDS {
        if bits[b] == 0 {
            continue;
        }
        let i = fine_index(e_db[b] - coarse[b], bits[b]);
        enc.encode_uniform(i as u128, 1u128 << bits[b]).expect("fine index is within its alphabet");
        out[b] = coarse[b] + fine_offset(i, bits[b]);
    }
    out
}

pub fn fine_decode(coarse: &BandDb, bits: &FineBits, dec: &mut RangeDecoder<'_>) -> BandDb {
    let mut out = *coarse;
    for b in 0..CODED_BANDS {
        if bits[b] == 0 {
            continue;
        }
        let i = dec.decode_uniform(1u128 << bits[b]) as u32;
        out[b] = coarse[b] + fine_offset(i, bits[b]);
    }
    out
}
