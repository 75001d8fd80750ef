//! Deterministic synthetic test corpus: speech-like and music-like clips.

use std::f64::consts::PI;
use std::path::Path;

use celtld::codec::SAMPLE_RATE;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use crate::error::{format_err, Result};
use crate::wav;

const FS: f64 = SAMPLE_RATE as f64;
pub const CLIP_SECONDS: f64 = 5.0;

#[derive(Debug, Clone)]
pub struct Clip {
    pub name: String,
    pub samples: Vec<f64>,
}

fn len() -> usize {
    (CLIP_SECONDS * FS) as usize
}

/// Two-pole resonator.
struct Resonator {
    a1: f64,
    a2: f64,
    gain: f64,
    y1: f64,
    y2: f64,
}

impl Resonator {
    fn new() -> Self {
        Resonator { a1: 0.0, a2: 0.0, gain: 0.0, y1: 0.0, y2: 0.0 }
    }

    fn tune(&mut self, freq: f64, bw: f64) {
        let r = (-PI * bw / FS).exp();
        self.a1 = 2.0 * r * (2.0 * PI * freq / FS).cos();
        self.a2 = -r * r;
        self.gain = 1.0 - r;
    }

    fn run(&mut self, x: f64) -> f64 {
        let y = self.gain * x + self.a1 * self.y1 + self.a2 * self.y2;
        self.y2 = self.y1;
        self.y1 = y;
        y
    }
}

const VOWELS: [[f64; 3]; 5] = [[730.0, 1090.0, 2440.0], [270.0, 2290.0, 3010.0], [530.0, 1840.0, 2480.0], [570.0, 840.0, 2410.0], [300.0, 870.0, 2240.0]];

/// Voiced syllables through three formants, with fricatives and pauses.
fn speech(seed: u64, f0: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len()];
    let mut formants = [Resonator::new(), Resonator::new(), Resonator::new()];
    let mut hp = 0.0;
    let mut i = 0;
    let mut phase = 0.0;
    while i < out.len() {
        let syllable = rng.random_range(0.12..0.3) * FS;
        let pause = rng.random_range(0.02..0.15) * FS;
        let vowel = VOWELS[rng.random_range(0..VOWELS.len())];
        let next = VOWELS[rng.random_range(0..VOWELS.len())];
        let pitch0 = f0 * rng.random_range(0.8..1.25);
        let glide = rng.random_range(-0.3..0.3);
        let fricative = rng.random_bool(0.4);
        let s_len = syllable as usize;
        for n in 0..s_len {
            if i + n >= out.len() {
                break;
            }
            let t = n as f64 / s_len as f64;
            for (k, r) in formants.iter_mut().enumerate() {
                r.tune(vowel[k] + (next[k] - vowel[k]) * t, 60.0 + 40.0 * k as f64);
            }
            let f = pitch0 * (1.0 + glide * t);
            phase += f / FS;
            let pulse = if phase >= 1.0 {
                phase -= 1.0;
                1.0
            } else {
                0.0
            };
            hp = 0.97 * hp + pulse;
            let src = pulse - 0.9 * hp / 30.0;
            let v: f64 = formants.iter_mut().map(|r| r.run(src)).sum();
            let env = (PI * t).sin().powf(0.6);
            let mut s = 6.0 * env * v;
            if fricative && t < 0.25 {
                s += 0.03 * (1.0 - t / 0.25) * rng.random_range(-1.0..1.0);
            }
            out[i + n] = s;
        }
        i += s_len + pause as usize;
    }
    out
}

fn adsr(t: f64, dur: f64, attack: f64, release: f64) -> f64 {
    if t < attack {
        t / attack
    } else if t > dur - release {
        ((dur - t) / release).max(0.0)
    } else {
        1.0 - 0.3 * ((t - attack) / (dur - attack)).min(1.0)
    }
}

/// Harmonic melody with vibrato.
fn melody(seed: u64, base: f64, harmonics: usize, rolloff: f64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len()];
    let mut i = 0;
    while i < out.len() {
        let dur = rng.random_range(0.15..0.6);
        let n_len = (dur * FS) as usize;
        let f = base * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
        let vib = rng.random_range(4.0..6.5);
        let mut phase = 0.0;
        for n in 0..n_len.min(out.len() - i) {
            let t = n as f64 / FS;
            phase += 2.0 * PI * f * (1.0 + 0.006 * (2.0 * PI * vib * t).sin()) / FS;
            let s: f64 = (1..=harmonics).map(|h| (h as f64 * phase).sin() / (h as f64).powf(rolloff)).sum();
            out[i + n] = 0.15 * adsr(t, dur, 0.02, 0.05) * s;
        }
        i += n_len;
    }
    out
}

/// Sustained three-note chords.
fn chords(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len()];
    let chord_len = (1.25 * FS) as usize;
    for (c, block) in out.chunks_mut(chord_len).enumerate() {
        let root = 110.0 * 2f64.powf(rng.random_range(0..12) as f64 / 12.0);
        let notes = [root, root * 2f64.powf(4.0 / 12.0), root * 1.5];
        let dur = block.len() as f64 / FS;
        for (n, s) in block.iter_mut().enumerate() {
            let t = n as f64 / FS;
            let tt = (c * chord_len + n) as f64 / FS;
            let v: f64 = notes.iter().flat_map(|&f| (1..8).map(move |h| (2.0 * PI * f * h as f64 * tt).sin() / (h * h) as f64)).sum();
            *s = 0.12 * adsr(t, dur, 0.15, 0.2) * v;
        }
    }
    out
}

/// Plucked strings (Karplus-Strong).
fn plucks(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len()];
    let mut i = 0;
    while i < out.len() {
        let f = 82.4 * 2f64.powf(rng.random_range(0..24) as f64 / 12.0);
        let period = (FS / f).round() as usize;
        let mut line: Vec<f64> = (0..period).map(|_| rng.random_range(-0.4..0.4)).collect();
        let n_len = (rng.random_range(0.2..0.5) * FS) as usize;
        for n in 0..n_len.min(out.len() - i) {
            let k = n % period;
            let v = line[k];
            line[k] = 0.996 * 0.5 * (v + line[(k + 1) % period]);
            out[i + n] += v;
        }
        i += n_len;
    }
    out
}

/// Kick drums, snares and hats on a grid.
fn drums(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut out = vec![0.0; len()];
    let step = (0.125 * FS) as usize;
    for (k, start) in (0..out.len()).step_by(step).enumerate() {
        let hit = k % 8;
        let (kind, amp) = match hit {
            0 | 5 => (0, 0.6),
            2 | 6 => (1, 0.35),
            _ => (2, 0.08 * rng.random_range(0.5..1.0)),
        };
        let mut lp = 0.0;
        let mut phase = 0.0;
        for n in 0..step.min(out.len() - start) {
            let t = n as f64 / FS;
            let noise = rng.random_range(-1.0..1.0);
            out[start + n] += amp
                * match kind {
                    0 => {
                        phase += 2.0 * PI * (50.0 + 100.0 * (-t * 30.0).exp()) / FS;
                        phase.sin() * (-t * 12.0).exp()
                    }
                    1 => {
                        lp = 0.6 * lp + 0.4 * noise;
                        (lp + 0.3 * (2.0 * PI * 190.0 * t).sin()) * (-t * 25.0).exp()
                    }
                    _ => {
                        let hpn = noise - lp;
                        lp = noise;
                        hpn * (-t * 60.0).exp()
                    }
                };
        }
    }
    out
}

/// Voiced speech over a quiet noise floor with a slow level change.
fn noisy_speech(seed: u64) -> Vec<f64> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed ^ 0xabc);
    let s = speech(seed, 180.0);
    s.iter()
        .enumerate()
        .map(|(i, v)| v * (0.6 + 0.4 * (i as f64 / FS * 0.7).sin()) + 0.004 * rng.random_range(-1.0..1.0))
        .collect()
}

/// The full desk corpus, rounded to 16-bit PCM.
pub fn desk_corpus() -> Vec<Clip> {
    let clips: Vec<(&str, Vec<f64>)> = vec![
        ("speech_low", speech(1, 105.0)),
        ("speech_high", speech(2, 210.0)),
        ("speech_noisy", noisy_speech(3)),
        ("melody_bright", melody(4, 220.0, 16, 1.0)),
        ("melody_mellow", melody(5, 130.0, 8, 2.0)),
        ("chords", chords(6)),
        ("plucks", plucks(7)),
        ("drums", drums(8)),
    ];
    clips
        .into_iter()
        .map(|(name, s)| {
            let peak = s.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            let scale = if peak > 0.7 { 0.7 / peak } else { 1.0 };
            Clip { name: name.to_string(), samples: wav::quantize(&s.iter().map(|v| v * scale).collect::<Vec<_>>()) }
        })
        .collect()
}

pub fn write_corpus(dir: &Path) -> Result<Vec<String>> {
    std::fs::create_dir_all(dir)?;
    desk_corpus()
        .into_iter()
        .map(|c| {
            let name = format!("{}.wav", c.name);
            wav::write(&dir.join(&name), &c.samples)?;
            Ok(name)
        })
        .collect()
}

/// All `.wav` files in `dir`, sorted by name.
pub fn read_corpus(dir: &Path) -> Result<Vec<Clip>> {
    let mut paths: Vec<_> = std::fs::read_dir(dir)?
        .filter_map(|e| e.ok().map(|e| e.path()))
        .filter(|p| p.extension().is_some_and(|e| e.eq_ignore_ascii_case("wav")))
        .collect();
    paths.sort();
    if paths.is_empty() {
        return Err(format_err(format!("no .wav files in {}", dir.display())));
    }
    paths
        .into_iter()
        .map(|p| Ok(Clip { name: p.file_stem().unwrap_or_default().to_string_lossy().into_owned(), samples: wav::read(&p)? }))
        .collect()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn corpus_is_deterministic_and_in_range() {
        let a = desk_corpus();
        let b = desk_corpus();
        assert_eq!(a.len(), 8);
        for (x, y) in a.iter().zip(&b) {
            assert_eq!(x.samples, y.samples);
            assert_eq!(x.samples.len(), len());
            let peak = x.samples.iter().fold(0.0f64, |m, v| m.max(v.abs()));
            assert!(peak > 0.05 && peak <= 0.71, "{} peak {peak}", x.name);
        }
    }
}
