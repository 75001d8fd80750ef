//! Objective quality measures between a reference and a decoded signal.

use celtld::bands::{split_and_normalize, BandLayout, CODED_BANDS};
use celtld::transform::{AnalysisBuffer, Mdct, CODEC_DELAY, FRAME_SIZE};

use crate::error::{HarnessError, Result};

pub const SNR_CAP_DB: f64 = 99.0;
const SNR_FLOOR_DB: f64 = -10.0;
/// Reference frames quieter than this (mean square) are left out of the
/// segmental SNR and the band statistics.
const SILENCE: f64 = 1e-8;

pub const DEFAULT_DELAY: usize = CODEC_DELAY;

#[derive(Debug, Clone, PartialEq)]
pub struct Report {
    pub segments: usize,
    pub seg_snr_db: f64,
    /// Root-mean-square band log-energy difference, per band.
    pub lsd_db: [f64; CODED_BANDS],
    /// Mean absolute band log-energy difference, per band.
    pub tracking_db: [f64; CODED_BANDS],
}

impl Report {
    pub fn mean_lsd_db(&self) -> f64 {
        self.lsd_db.iter().sum::<f64>() / CODED_BANDS as f64
    }

    pub fn mean_tracking_db(&self) -> f64 {
        self.tracking_db.iter().sum::<f64>() / CODED_BANDS as f64
    }
}

/// Band energies in dB of every analysis frame of `pcm`.
pub fn band_db(pcm: &[f64]) -> Vec<[f64; CODED_BANDS]> {
    let mdct = Mdct::new();
    let mut buf = AnalysisBuffer::default();
    pcm.chunks(FRAME_SIZE)
        .map(|c| {
            let mut frame = [0.0; FRAME_SIZE];
            frame[..c.len()].copy_from_slice(c);
            let w = *buf.push(&frame);
            split_and_normalize(&mdct.forward(&w), &BandLayout).0.db
        })
        .collect()
}

/// Compares `reference[n]` with `degraded[n + delay]`. Both files must have
/// the same length.
pub fn compare(reference: &[f64], degraded: &[f64], delay: usize) -> Result<Report> {
    if reference.len() != degraded.len() {
        return Err(HarnessError::Input(format!("length mismatch: {} vs {} samples", reference.len(), degraded.len())));
    }
    let n = reference.len().saturating_sub(delay);
    let r = &reference[..n];
    let d = &degraded[delay..delay + n];

    let snrs: Vec<f64> = r
        .chunks_exact(FRAME_SIZE)
        .zip(d.chunks_exact(FRAME_SIZE))
        .filter(|(a, _)| a.iter().map(|v| v * v).sum::<f64>() / FRAME_SIZE as f64 > SILENCE)
        .map(|(a, b)| {
            let sig: f64 = a.iter().map(|v| v * v).sum();
            let err: f64 = a.iter().zip(b).map(|(x, y)| (x - y) * (x - y)).sum();
            if err == 0.0 {
                SNR_CAP_DB
            } else {
                (10.0 * (sig / err).log10()).clamp(SNR_FLOOR_DB, SNR_CAP_DB)
            }
        })
        .collect();
    let seg_snr_db = if snrs.is_empty() { SNR_CAP_DB } else { snrs.iter().sum::<f64>() / snrs.len() as f64 };

    // Drop the last frame, whose window runs past the end of the signal.
    let er = band_db(r);
    let ed = band_db(d);
    let frames = er.len().saturating_sub(1);
    let active: Vec<usize> = (0..frames)
        .filter(|&f| {
            let s = &r[f.saturating_sub(1) * FRAME_SIZE..((f + 1) * FRAME_SIZE).min(n)];
            s.iter().map(|v| v * v).sum::<f64>() / s.len().max(1) as f64 > SILENCE
        })
        .collect();
    let mut lsd_db = [0.0; CODED_BANDS];
    let mut tracking_db = [0.0; CODED_BANDS];
    if !active.is_empty() {
        for b in 0..CODED_BANDS {
            let diffs = active.iter().map(|&f| er[f][b] - ed[f][b]);
            lsd_db[b] = (diffs.clone().map(|x| x * x).sum::<f64>() / active.len() as f64).sqrt();
            tracking_db[b] = diffs.map(f64::abs).sum::<f64>() / active.len() as f64;
        }
    }
    Ok(Report { segments: snrs.len(), seg_snr_db, lsd_db, tracking_db })
}
