//! Offline training of the codec tables and the predictor entropy sweep.

use celtld::alloc::{default_fine_priority, AllocTable};
use celtld::bands::{split_and_normalize, BandLayout, CODED_BANDS};
use celtld::energy::{BandDb, EnergyPredictor, PredictorCoefficients, ALPHA, BETA};
use celtld::pitch::{adaptive_vector, gain_targets, raw_gains, GainCodebook, History, PeriodSearch, GAIN_ENTRIES, GAIN_VALUES, HISTORY_LEN};
use celtld::rangecoder::{LaplaceModel, LaplaceParams, LAPLACE_MAX};
use celtld::tables::Tables;
use celtld::transform::{AnalysisBuffer, Mdct, FRAME_SIZE, WINDOW_PAD, WINDOW_SIZE};
use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::corpus::Clip;
use crate::error::{format_err, Result};

/// Band energies below this are treated as silence when averaging.
const ACTIVE_DB: f64 = -90.0;
const KMEANS_ITERATIONS: usize = 30;
/// Frames whose strongest gain target is below this do not train the codebook.
const VOICED_TARGET: f64 = 0.02;

/// Per-frame analysis of one clip.
struct FrameData {
    db: BandDb,
    gain_targets: Option<[f64; GAIN_VALUES]>,
}

/// Band energies of every frame, one vector per clip.
pub fn clip_energies(clips: &[Clip]) -> Vec<Vec<BandDb>> {
    clips.iter().map(|c| crate::metrics::band_db(&c.samples)).collect()
}

fn analyse(clip: &Clip, mdct: &Mdct, search: &PeriodSearch) -> Vec<FrameData> {
    let mut buf = AnalysisBuffer::default();
    let x = &clip.samples;
    (0..x.len().div_ceil(FRAME_SIZE))
        .map(|l| {
            let mut frame = [0.0; FRAME_SIZE];
            let chunk = &x[l * FRAME_SIZE..((l + 1) * FRAME_SIZE).min(x.len())];
            frame[..chunk.len()].copy_from_slice(chunk);
            let w: [f64; WINDOW_SIZE] = *buf.push(&frame);
            let (energies, norm) = split_and_normalize(&mdct.forward(&w), &BandLayout);
            // Open loop: the clean input stands in for the decoded history.
            let gain_targets = (l > 0).then(|| {
                let end = (l as isize - 1) * FRAME_SIZE as isize + WINDOW_PAD as isize;
                let h: History = std::array::from_fn(|i| {
                    let n = end - HISTORY_LEN as isize + i as isize;
                    if n >= 0 { x.get(n as usize).copied().unwrap_or(0.0) } else { 0.0 }
                });
                let t = search.find_period(&h, &w);
                gain_targets(&raw_gains(&norm.bins, &adaptive_vector(mdct, &h, t)))
            });
            FrameData { db: energies.db, gain_targets }
        })
        .collect()
}

/// Coarse residual indices with the given predictor, one frame per entry.
/// The predictor restarts at the start of every clip.
pub fn coarse_residuals(energies: &[Vec<BandDb>], mean: &BandDb, coef: PredictorCoefficients) -> Vec<[i32; CODED_BANDS]> {
    let mut out = Vec::new();
    for clip in energies {
        let mut p = EnergyPredictor::with_coefficients(*mean, coef);
        for e in clip {
            let c = p.quantize(e);
            p.commit(&c.db);
            out.push(c.q.map(|q| q.clamp(-LAPLACE_MAX, LAPLACE_MAX)));
        }
    }
    out
}

/// Sum over bands of the empirical entropy of the residuals, in bits per frame.
pub fn empirical_entropy(q: &[[i32; CODED_BANDS]]) -> f64 {
    if q.is_empty() {
        return 0.0;
    }
    let n = q.len() as f64;
    (0..CODED_BANDS)
        .map(|b| {
            let mut counts = std::collections::BTreeMap::new();
            q.iter().for_each(|f| *counts.entry(f[b]).or_insert(0usize) += 1);
            counts.values().map(|&c| -(c as f64 / n) * (c as f64 / n).log2()).sum::<f64>()
        })
        .sum()
}

/// Mean Laplace coding cost in bits per frame.
pub fn laplace_cost(q: &[[i32; CODED_BANDS]], model: &LaplaceModel) -> f64 {
    let total: f64 = q.iter().flat_map(|f| f.iter().enumerate().map(|(b, &r)| model.cost_bits(b, r))).sum();
    total / q.len().max(1) as f64
}

/// Probability of zero and the geometric decay of the magnitudes, per band.
pub fn fit_laplace(q: &[[i32; CODED_BANDS]]) -> [LaplaceParams; CODED_BANDS] {
    std::array::from_fn(|b| {
        let n = q.len().max(1) as f64;
        let nonzero: Vec<f64> = q.iter().map(|f| f[b].unsigned_abs() as f64).filter(|&a| a > 0.0).collect();
        let p0 = 1.0 - nonzero.len() as f64 / n;
        let mean_mag = if nonzero.is_empty() { 1.0 } else { nonzero.iter().sum::<f64>() / nonzero.len() as f64 };
        let decay = 1.0 - 1.0 / mean_mag;
        LaplaceParams {
            zero_q15: (p0 * 32768.0).round().clamp(64.0, 32_000.0) as u16,
            decay_q15: (decay * 32768.0).round().clamp(1.0, 32_700.0) as u16,
        }
    })
}

fn mean_energies(energies: &[Vec<BandDb>]) -> BandDb {
    std::array::from_fn(|b| {
        let active: Vec<f64> = energies.iter().flatten().map(|e| e[b]).filter(|&v| v > ACTIVE_DB).collect();
        let m = if active.is_empty() { ACTIVE_DB } else { active.iter().sum::<f64>() / active.len() as f64 };
        (m * 256.0).round() / 256.0
    })
}

fn nearest(centroids: &[[f64; GAIN_VALUES]], v: &[f64; GAIN_VALUES]) -> usize {
    let d = |c: &[f64; GAIN_VALUES]| c.iter().zip(v).map(|(a, b)| (a - b) * (a - b)).sum::<f64>();
    (0..centroids.len()).fold(0, |best, i| if d(&centroids[i]) < d(&centroids[best]) { i } else { best })
}

/// k-means in the warped domain with entry 0 pinned at zero.
fn train_codebook(points: &[[f64; GAIN_VALUES]], seed: u64) -> Result<GainCodebook> {
    if points.is_empty() {
        return Err(format_err("corpus has no voiced frames to train the gain codebook"));
    }
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut order: Vec<usize> = (0..points.len()).collect();
    order.shuffle(&mut rng);
    let mut centroids = vec![[0.0; GAIN_VALUES]];
    centroids.extend((0..GAIN_ENTRIES - 1).map(|i| points[order[i % order.len()]]));
    for _ in 0..KMEANS_ITERATIONS {
        let mut sum = vec![[0.0; GAIN_VALUES]; GAIN_ENTRIES];
        let mut count = vec![0usize; GAIN_ENTRIES];
        for p in points {
            let k = nearest(&centroids, p);
            count[k] += 1;
            sum[k].iter_mut().zip(p).for_each(|(s, v)| *s += v);
        }
        for k in 1..GAIN_ENTRIES {
            if count[k] > 0 {
                centroids[k] = sum[k].map(|s| s / count[k] as f64);
            }
        }
    }
    let mut entries: Vec<[u8; GAIN_VALUES]> = centroids.iter().map(|c| c.map(GainCodebook::warped_to_byte)).collect();
    entries[0] = [0; GAIN_VALUES];
    Ok(GainCodebook::new(entries)?)
}

/// Trains all tables from `clips`. The result depends only on the clips and
/// the seed.
pub fn train(clips: &[Clip], seed: u64) -> Result<Tables> {
    if clips.iter().all(|c| c.samples.is_empty()) {
        return Err(format_err("empty corpus"));
    }
    let mdct = Mdct::new();
    let search = PeriodSearch::new();
    let frames: Vec<Vec<FrameData>> = clips.iter().map(|c| analyse(c, &mdct, &search)).collect();
    let energies: Vec<Vec<BandDb>> = frames.iter().map(|c| c.iter().map(|f| f.db).collect()).collect();
    let mean_db = mean_energies(&energies);
    let q = coarse_residuals(&energies, &mean_db, PredictorCoefficients::default());
    let points: Vec<_> = frames
        .iter()
        .flatten()
        .filter_map(|f| f.gain_targets)
        .filter(|t| t.iter().any(|&v| v > VOICED_TARGET))
        .collect();
    let tables = Tables {
        mean_db,
        laplace: fit_laplace(&q),
        codebook: train_codebook(&points, seed)?,
        alloc: AllocTable::reference(),
        fine_priority: default_fine_priority(),
    };
    Ok(Tables::parse(&tables.to_bytes())?)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SweepRow {
    pub alpha: f64,
    pub beta: f64,
    /// Empirical entropy of the coarse residuals, bits per frame.
    pub bits: f64,
}

pub const SWEEP_ALPHAS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 0.95];
pub const SWEEP_BETAS: [f64; 11] = [0.0, 0.1, 0.2, 0.3, 0.4, 0.5, 0.6, 0.7, 0.8, 0.9, 1.0];

pub fn entropy_at(energies: &[Vec<BandDb>], mean: &BandDb, alpha: f64, beta: f64) -> f64 {
    empirical_entropy(&coarse_residuals(energies, mean, PredictorCoefficients { alpha, beta }))
}

/// For each alpha, the beta with the lowest residual entropy.
pub fn sweep(energies: &[Vec<BandDb>], mean: &BandDb) -> Vec<SweepRow> {
    SWEEP_ALPHAS
        .iter()
        .map(|&alpha| {
            SWEEP_BETAS
                .iter()
                .map(|&beta| SweepRow { alpha, beta, bits: entropy_at(energies, mean, alpha, beta) })
                .fold(None, |best: Option<SweepRow>, r| match best {
                    Some(b) if b.bits <= r.bits => Some(b),
                    _ => Some(r),
                })
                .expect("beta grid is not empty")
        })
        .collect()
}

/// Entropy at the shipped coefficients.
pub fn shipped_point(energies: &[Vec<BandDb>], mean: &BandDb) -> SweepRow {
    SweepRow { alpha: ALPHA, beta: BETA, bits: entropy_at(energies, mean, ALPHA, BETA) }
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn entropy_of_constant_is_zero() {
        assert_eq!(empirical_entropy(&[[0; CODED_BANDS]; 10]), 0.0);
        let mut q = vec![[0; CODED_BANDS]; 2];
        q[1][0] = 1;
        assert!((empirical_entropy(&q) - 1.0).abs() < 1e-12);
    }

    #[test]
    fn laplace_fit_tracks_statistics() {
        let q: Vec<[i32; CODED_BANDS]> = (0..1000).map(|i| [[0, 0, 1, -1, 2][i % 5]; CODED_BANDS]).collect();
        let p = fit_laplace(&q);
        assert!((p[0].zero_q15 as f64 / 32768.0 - 0.4).abs() < 1e-3);
        // Magnitudes 1, 1, 2: mean 4/3, decay 1/4.
        assert!((p[0].decay_q15 as f64 / 32768.0 - 0.25).abs() < 1e-3);
    }
}
