//! Reduced-overlap MDCT and weighted overlap-add synthesis.
//!
//! A window spans two frames (512 samples) but is zero for 64 samples at each
//! end, flat in the middle, and uses the Vorbis power-complementary shape over
//! the 128-sample overlaps. Analysis and synthesis use the same window.

use std::f64::consts::PI;
use std::sync::Arc;

use rustfft::num_complex::Complex64;
use rustfft::{Fft, FftPlanner};

/// Samples per frame, and MDCT coefficients per frame.
pub const FRAME_SIZE: usize = 256;
/// Overlap between consecutive windows.
pub const OVERLAP: usize = 128;
/// Zeros at each end of the window.
pub const WINDOW_PAD: usize = (FRAME_SIZE - OVERLAP) / 2;
/// Full window length.
pub const WINDOW_SIZE: usize = 2 * FRAME_SIZE;
/// Input-to-output delay of the analysis/synthesis chain.
pub const CODEC_DELAY: usize = FRAME_SIZE + OVERLAP;
/// Synthesis samples that are final but not yet emitted after each frame.
pub const FINAL_LOOKAHEAD: usize = OVERLAP + WINDOW_PAD;

/// Power-complementary rising edge, `w(n)` for `n` in `[0, L)`.
pub fn overlap_window(n: usize) -> f64 {
    let l = OVERLAP as f64;
    let s = (PI * (n as f64 + 0.5) / (2.0 * l)).sin();
    (0.5 * PI * s * s).sin()
}

/// The full 512-sample analysis/synthesis window.
pub fn window() -> [f64; WINDOW_SIZE] {
    let mut w = [0.0; WINDOW_SIZE];
    for n in 0..OVERLAP {
        let v = overlap_window(n);
        w[WINDOW_PAD + n] = v;
        w[WINDOW_SIZE - WINDOW_PAD - 1 - n] = v;
    }
    for v in &mut w[WINDOW_PAD + OVERLAP..WINDOW_SIZE - WINDOW_PAD - OVERLAP] {
        *v = 1.0;
    }
    w
}

/// MDCT coefficients for one frame.
pub type FrameSpectrum = [f64; FRAME_SIZE];

/// Windowed MDCT of size 512 -> 256 computed through a 64-point complex FFT.
///
/// Scaling is orthonormal: analysis and synthesis both use `sqrt(2/N)`, so
/// the lapped transform preserves energy summed over frames.
#[derive(Clone)]
pub struct Mdct {
    window: [f64; WINDOW_SIZE],
    fft: Arc<dyn Fft<f64>>,
    pre: Vec<Complex64>,
    post: Vec<Complex64>,
    scale: f64,
}

impl std::fmt::Debug for Mdct {
    fn fmt(&self, f: &mut std::fmt::Formatter<'_>) -> std::fmt::Result {
        f.debug_struct("Mdct").field("n", &FRAME_SIZE).finish()
    }
}

impl Default for Mdct {
    fn default() -> Self {
        Self::new()
    }
}

impl Mdct {
    pub fn new() -> Self {
        let n = FRAME_SIZE;
        let m = n / 2;
        let fft = FftPlanner::new().plan_fft_forward(m);
        let pre = (0..m)
            .map(|k| Complex64::from_polar(1.0, -PI * k as f64 / n as f64))
            .collect();
        let post = (0..m)
            .map(|k| Complex64::from_polar(1.0, -PI * (k as f64 + 0.25) / n as f64))
            .collect();
        Mdct {
            window: window(),
            fft,
            pre,
            post,
            scale: (2.0 / n as f64).sqrt(),
        }
    }

    pub fn window(&self) -> &[f64; WINDOW_SIZE] {
        &self.window
    }

    /// Unscaled DCT-IV of length `FRAME_SIZE`.
    fn dct4(&self, v: &[f64; FRAME_SIZE], out: &mut [f64; FRAME_SIZE]) {
        let n = FRAME_SIZE;
        let m = n / 2;
        let mut buf: Vec<Complex64> = (0..m)
            .map(|k| Complex64::new(v[2 * k], v[n - 1 - 2 * k]) * self.pre[k])
            .collect();
        self.fft.process(&mut buf);
        for k in 0..m {
            let y = buf[k] * self.post[k];
            out[2 * k] = y.re;
            out[n - 1 - 2 * k] = -y.im;
        }
    }

    /// Windows `input` and returns its 256 MDCT coefficients.
    pub fn forward(&self, input: &[f64; WINDOW_SIZE]) -> FrameSpectrum {
        let n = FRAME_SIZE;
        let h = n / 2;
        let x: Vec<f64> = input.iter().zip(&self.window).map(|(a, w)| a * w).collect();
        // Fold (a, b, c, d) into (-c_r - d, a - b_r).
        let mut v = [0.0; FRAME_SIZE];
        for i in 0..h {
            v[i] = -x[3 * h - 1 - i] - x[3 * h + i];
            v[h + i] = x[i] - x[n - 1 - i];
        }
        let mut out = [0.0; FRAME_SIZE];
        self.dct4(&v, &mut out);
        for c in &mut out {
            *c *= self.scale;
        }
        out
    }

    /// Inverse MDCT followed by the synthesis window (512 samples).
    pub fn inverse(&self, spec: &FrameSpectrum) -> [f64; WINDOW_SIZE] {
        let n = FRAME_SIZE;
        let h = n / 2;
        let mut v = [0.0; FRAME_SIZE];
        self.dct4(spec, &mut v);
        let mut y = [0.0; WINDOW_SIZE];
        for i in 0..h {
            y[i] = v[h + i];
        }
        for i in h..3 * h {
            y[i] = -v[3 * h - 1 - i];
        }
        for i in 3 * h..2 * n {
            y[i] = -v[i - 3 * h];
        }
        for (s, w) in y.iter_mut().zip(&self.window) {
            *s *= w * self.scale;
        }
        y
    }
}

/// Overlap-add state for the synthesis side.
///
/// `acc[0]` is the next sample to emit. The window of the next frame starts
/// `OVERLAP` samples after it, so each emitted block lags the window start by
/// `OVERLAP` and the chain delay is `FRAME_SIZE + OVERLAP`.
#[derive(Debug, Clone, PartialEq)]
pub struct OverlapState {
    acc: Vec<f64>,
}

impl Default for OverlapState {
    fn default() -> Self {
        OverlapState {
            acc: vec![0.0; OVERLAP + WINDOW_SIZE],
        }
    }
}

impl OverlapState {
    /// Samples that no future frame will touch but that have not been emitted.
    pub fn finalized_tail(&self) -> &[f64] {
        &self.acc[..FINAL_LOOKAHEAD]
    }

    pub fn samples(&self) -> &[f64] {
        &self.acc
    }
}

/// Inverse-transforms one frame, overlap-adds it, and returns the next 256
/// output samples.
pub fn inverse_wola(mdct: &Mdct, spec: &FrameSpectrum, state: &mut OverlapState) -> [f64; FRAME_SIZE] {
    let y = mdct.inverse(spec);
    for (a, v) in state.acc[OVERLAP..].iter_mut().zip(y.iter()) {
        *a += v;
    }
    let mut out = [0.0; FRAME_SIZE];
    out.copy_from_slice(&state.acc[..FRAME_SIZE]);
    state.acc.copy_within(FRAME_SIZE.., 0);
    let len = state.acc.len();
    state.acc[len - FRAME_SIZE..].fill(0.0);
    out
}

/// Sliding two-frame input buffer for the analysis side.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalysisBuffer {
    buf: [f64; WINDOW_SIZE],
}

impl Default for AnalysisBuffer {
    fn default() -> Self {
        AnalysisBuffer {
            buf: [0.0; WINDOW_SIZE],
        }
    }
}

impl AnalysisBuffer {
    /// Shifts in a new frame and returns the 512-sample window region
    /// (previous frame followed by the current one).
    pub fn push(&mut self, frame: &[f64; FRAME_SIZE]) -> &[f64; WINDOW_SIZE] {
        self.buf.copy_within(FRAME_SIZE.., 0);
        self.buf[FRAME_SIZE..].copy_from_slice(frame);
        &self.buf
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    /// Direct O(N^2) windowed MDCT with the same scaling.
    fn mdct_direct(input: &[f64; WINDOW_SIZE]) -> Vec<f64> {
        let n = FRAME_SIZE as f64;
        let w = window();
        (0..FRAME_SIZE)
            .map(|k| {
                let s: f64 = (0..WINDOW_SIZE)
                    .map(|i| {
                        w[i] * input[i]
                            * (PI / n * (i as f64 + 0.5 + n / 2.0) * (k as f64 + 0.5)).cos()
                    })
                    .sum();
                s * (2.0 / n).sqrt()
            })
            .collect()
    }

    fn run_chain(signal: &[f64]) -> Vec<f64> {
        let mdct = Mdct::new();
        let mut ana = AnalysisBuffer::default();
        let mut syn = OverlapState::default();
        let mut out = Vec::new();
        for chunk in signal.chunks(FRAME_SIZE) {
            let mut frame = [0.0; FRAME_SIZE];
            frame[..chunk.len()].copy_from_slice(chunk);
            let spec = mdct.forward(ana.push(&frame));
            out.extend_from_slice(&inverse_wola(&mdct, &spec, &mut syn));
        }
        out
    }

    #[test]
    fn window_is_power_complementary() {
        for n in 0..OVERLAP {
            let a = overlap_window(n);
            let b = overlap_window(OVERLAP - 1 - n);
            assert!((a * a + b * b - 1.0).abs() < 1e-12);
        }
        let w = window();
        assert!(w[..WINDOW_PAD].iter().all(|&v| v == 0.0));
        assert!(w[WINDOW_SIZE - WINDOW_PAD..].iter().all(|&v| v == 0.0));
        assert!(w[WINDOW_PAD + OVERLAP..WINDOW_PAD + OVERLAP + 128].iter().all(|&v| v == 1.0));
        for i in 0..FRAME_SIZE {
            assert!((w[i] * w[i] + w[i + FRAME_SIZE] * w[i + FRAME_SIZE] - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn fast_mdct_matches_direct_sum() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let mdct = Mdct::new();
        for _ in 0..5 {
            let mut x = [0.0; WINDOW_SIZE];
            x.iter_mut().for_each(|v| *v = rng.random_range(-1.0..1.0));
            let fast = mdct.forward(&x);
            let slow = mdct_direct(&x);
            let norm: f64 = slow.iter().map(|v| v * v).sum::<f64>().sqrt();
            let err: f64 = fast.iter().zip(&slow).map(|(a, b)| (a - b).powi(2)).sum::<f64>().sqrt();
            assert!(err / norm < 1e-9, "relative error {}", err / norm);
        }
    }

    #[test]
    fn zero_in_zero_out() {
        let mdct = Mdct::new();
        assert!(mdct.forward(&[0.0; WINDOW_SIZE]).iter().all(|&v| v == 0.0));
        let mut st = OverlapState::default();
        assert!(inverse_wola(&mdct, &[0.0; FRAME_SIZE], &mut st).iter().all(|&v| v == 0.0));
    }

    #[test]
    fn bin_centred_cosine_concentrates_energy() {
        let mdct = Mdct::new();
        let k0 = 40;
        // Phase matched to the MDCT basis so the tone lands in one bin.
        let n = FRAME_SIZE as f64;
        let mut x = [0.0; WINDOW_SIZE];
        for (i, v) in x.iter_mut().enumerate() {
            *v = (PI / n * (i as f64 + 0.5 + n / 2.0) * (k0 as f64 + 0.5)).cos();
        }
        let spec = mdct.forward(&x);
        let total: f64 = spec.iter().map(|v| v * v).sum();
        assert!(spec[k0] * spec[k0] / total > 0.9);
    }

    #[test]
    fn perfect_reconstruction_of_noise() {
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        let sig: Vec<f64> = (0..50 * FRAME_SIZE).map(|_| rng.random_range(-1.0..1.0)).collect();
        let out = run_chain(&sig);
        let mut err = 0.0;
        let mut pow = 0.0;
        for t in CODEC_DELAY..sig.len() {
            err += (out[t] - sig[t - CODEC_DELAY]).powi(2);
            pow += sig[t - CODEC_DELAY].powi(2);
        }
        let snr = 10.0 * (pow / err).log10();
        assert!(snr >= 100.0, "snr {snr}");
    }

    #[test]
    fn impulse_comes_out_after_codec_delay() {
        let mut sig = vec![0.0; 8 * FRAME_SIZE];
        sig[700] = 1.0;
        let out = run_chain(&sig);
        for (t, &v) in out.iter().enumerate() {
            if t == 700 + CODEC_DELAY {
                assert!((v - 1.0).abs() < 1e-12);
            } else {
                assert!(v.abs() < 1e-12, "sample {t} = {v}");
            }
        }
    }

    #[test]
    fn lapped_transform_preserves_energy() {
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        let mdct = Mdct::new();
        let mut ana = AnalysisBuffer::default();
        let mut sig = vec![0.0; 20 * FRAME_SIZE];
        // Leave silence at both ends so every sample is covered by two windows.
        for v in &mut sig[3 * FRAME_SIZE..17 * FRAME_SIZE] {
            *v = rng.random_range(-1.0..1.0);
        }
        let mut spec_energy = 0.0;
        for chunk in sig.chunks(FRAME_SIZE) {
            let frame: [f64; FRAME_SIZE] = chunk.try_into().unwrap();
            spec_energy += mdct.forward(ana.push(&frame)).iter().map(|v| v * v).sum::<f64>();
        }
        let time_energy: f64 = sig.iter().map(|v| v * v).sum();
        assert!((spec_energy / time_energy - 1.0).abs() < 1e-9);
    }
}
