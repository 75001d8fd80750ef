//! Band partition, energy measurement and (de)normalisation.

use crate::transform::{FrameSpectrum, FRAME_SIZE};

/// Number of coded bands. The 21st band (bins 233..256) is never coded.
pub const CODED_BANDS: usize = 20;

/// Bands below this index use pitch prediction; the rest use folding.
pub const PITCH_BANDS: usize = 15;

/// Linear-energy floor used when converting to dB.
pub const ENERGY_FLOOR: f64 = 1e-10;

/// `(start bin, width)` for every band, including the uncoded tail.
pub const BAND_TABLE: [(usize, usize); CODED_BANDS + 1] = [
    (0, 3),
    (3, 3),
    (6, 3),
    (9, 3),
    (12, 3),
    (15, 3),
    (18, 3),
    (21, 3),
    (24, 3),
    (27, 4),
    (31, 6),
    (37, 6),
    (43, 8),
    (51, 11),
    (62, 12),
    (74, 16),
    (90, 20),
    (110, 30),
    (140, 40),
    (180, 53),
    (233, 23),
];

/// Static band layout over the 256 MDCT bins.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct BandLayout;

impl BandLayout {
    pub fn coded_bands(&self) -> usize {
        CODED_BANDS
    }

    pub fn start(&self, band: usize) -> usize {
        BAND_TABLE[band].0
    }

    pub fn width(&self, band: usize) -> usize {
        BAND_TABLE[band].1
    }

    pub fn range(&self, band: usize) -> std::ops::Range<usize> {
        let (s, w) = BAND_TABLE[band];
        s..s + w
    }

    /// First bin of the uncoded tail.
    pub fn coded_bins(&self) -> usize {
        BAND_TABLE[CODED_BANDS].0
    }
}

pub fn energy_to_db(e: f64) -> f64 {
    10.0 * (e + ENERGY_FLOOR).log10()
}

pub fn db_to_energy(db: f64) -> f64 {
    10f64.powf(db / 10.0)
}

/// Per-band energies of one frame.
#[derive(Debug, Clone, PartialEq)]
pub struct BandEnergies {
    pub linear: [f64; CODED_BANDS],
    pub db: [f64; CODED_BANDS],
}

impl BandEnergies {
    pub fn from_linear(linear: [f64; CODED_BANDS]) -> Self {
        let mut db = [0.0; CODED_BANDS];
        for (d, e) in db.iter_mut().zip(&linear) {
            *d = energy_to_db(*e);
        }
        BandEnergies { linear, db }
    }

    pub fn from_db(db: [f64; CODED_BANDS]) -> Self {
        let mut linear = [0.0; CODED_BANDS];
        for (e, d) in linear.iter_mut().zip(&db) {
            *e = db_to_energy(*d);
        }
        BandEnergies { linear, db }
    }
}

/// Unit-norm excitation over the coded bins, with a per-band flag for bands
/// that had no energy (their vector is all zeros).
#[derive(Debug, Clone, PartialEq)]
pub struct NormalizedExcitation {
    pub bins: [f64; FRAME_SIZE],
    pub degenerate: [bool; CODED_BANDS],
}

impl NormalizedExcitation {
    pub fn band(&self, b: usize) -> &[f64] {
        &self.bins[BandLayout.range(b)]
    }
}

pub fn band_energy(spec: &[f64], layout: &BandLayout, band: usize) -> f64 {
    spec[layout.range(band)].iter().map(|v| v * v).sum()
}

/// Splits a spectrum into band energies and a unit-norm excitation.
pub fn split_and_normalize(spec: &FrameSpectrum, layout: &BandLayout) -> (BandEnergies, NormalizedExcitation) {
    let mut linear = [0.0; CODED_BANDS];
    let mut bins = [0.0; FRAME_SIZE];
    let mut degenerate = [false; CODED_BANDS];
    for b in 0..CODED_BANDS {
        let r = layout.range(b);
        let e = band_energy(spec, layout, b);
        linear[b] = e;
        if e > 0.0 {
            let g = 1.0 / e.sqrt();
            for i in r {
                bins[i] = spec[i] * g;
            }
        } else {
            degenerate[b] = true;
        }
    }
    (BandEnergies::from_linear(linear), NormalizedExcitation { bins, degenerate })
}

/// Scales each band of a unit-norm excitation to the given energy. The
/// uncoded tail is left at zero.
pub fn denormalize(x: &[f64; FRAME_SIZE], energies: &BandEnergies, layout: &BandLayout) -> FrameSpectrum {
    let mut out = [0.0; FRAME_SIZE];
    for b in 0..CODED_BANDS {
        let g = energies.linear[b].sqrt();
        for i in layout.range(b) {
            out[i] = x[i] * g;
        }
    }
    out
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    #[test]
    fn layout_tiles_the_spectrum() {
        let mut next = 0;
        for (s, w) in BAND_TABLE {
            assert_eq!(s, next);
            next = s + w;
        }
        assert_eq!(next, FRAME_SIZE);
        assert_eq!(BandLayout.coded_bins(), 233);
        // Pitch bands end below 8 kHz at 44.1 kHz.
        assert!(BandLayout.start(15) as f64 * 22_050.0 / 256.0 < 8_000.0);
    }

    #[test]
    fn three_four_five() {
        let mut spec = [0.0; FRAME_SIZE];
        spec[0] = 3.0;
        spec[1] = 4.0;
        let (e, x) = split_and_normalize(&spec, &BandLayout);
        assert_eq!(e.linear[0], 25.0);
        for (a, b) in x.band(0).iter().zip([0.6, 0.8, 0.0]) {
            assert!((a - b).abs() < 1e-15);
        }
        assert!(!x.degenerate[0]);
    }

    #[test]
    fn silent_band_is_flagged() {
        let (e, x) = split_and_normalize(&[0.0; FRAME_SIZE], &BandLayout);
        assert!(x.degenerate.iter().all(|&d| d));
        assert!(x.bins.iter().all(|&v| v == 0.0));
        assert!((e.db[3] - energy_to_db(0.0)).abs() < 1e-12);
        assert!((e.db[3] + 100.0).abs() < 1e-9);
    }

    #[test]
    fn split_then_denormalize_reproduces_spectrum() {
        let mut rng = ChaCha8Rng::seed_from_u64(2);
        let mut spec = [0.0; FRAME_SIZE];
        spec.iter_mut().for_each(|v| *v = rng.random_range(-3.0..3.0));
        let (e, x) = split_and_normalize(&spec, &BandLayout);
        for b in 0..CODED_BANDS {
            let n: f64 = x.band(b).iter().map(|v| v * v).sum();
            assert!((n - 1.0).abs() < 1e-9);
        }
        let back = denormalize(&x.bins, &e, &BandLayout);
        for i in 0..BandLayout.coded_bins() {
            assert!((back[i] - spec[i]).abs() < 1e-9);
        }
        assert!(back[233..].iter().all(|&v| v == 0.0));
    }

    #[test]
    fn denormalized_bands_carry_requested_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(4);
        let mut x = [0.0; FRAME_SIZE];
        for b in 0..CODED_BANDS {
            let r = BandLayout.range(b);
            let v: Vec<f64> = r.clone().map(|_| rng.random_range(-1.0..1.0)).collect();
            let n = v.iter().map(|a| a * a).sum::<f64>().sqrt();
            for (i, a) in r.zip(v) {
                x[i] = a / n;
            }
        }
        let e = BandEnergies::from_linear([1.0; CODED_BANDS]);
        let spec = denormalize(&x, &e, &BandLayout);
        for b in 0..CODED_BANDS {
            assert!((band_energy(&spec, &BandLayout, b) - 1.0).abs() < 1e-12);
        }
    }
}
