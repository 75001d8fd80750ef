//! Acceptance suite. Runs every criterion, prints one PASS/FAIL line each
//! and exits non-zero if any fails.

use std::panic::{catch_unwind, AssertUnwindSafe};

use celtld::alloc::{compute_allocation, has_fold_sign, GOLDEN_PULSES};
use celtld::bands::{band_energy, BandLayout, CODED_BANDS};
use celtld::codec::{mix_excitation, CodecConfig, Decoder, Encoder, MARGIN_Q8};
use celtld::energy::{PredictorCoefficients, ALPHA, BETA};
use celtld::pvq::{codebook_size, decode_index, encode_index, fixed_gain, search, search_with, PulseVector, SearchCost};
use celtld::rangecoder::ONE_BIT;
use celtld::tables::Tables;
use celtld::transform::{inverse_wola, window, AnalysisBuffer, Mdct, OverlapState, CODEC_DELAY, FRAME_SIZE};
use celtld_harness::corpus::{desk_corpus, Clip};
use celtld_harness::secded::{self, Outcome, PROTECTED_BITS};
use celtld_harness::train::{coarse_residuals, clip_energies, empirical_entropy, entropy_at, laplace_cost, SWEEP_BETAS};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

type Verdict = Result<String, String>;

fn check(ok: bool, detail: String) -> Verdict {
    if ok {
        Ok(detail)
    } else {
        Err(detail)
    }
}

fn frames(pcm: &[f64]) -> impl Iterator<Item = [f64; FRAME_SIZE]> + '_ {
    pcm.chunks(FRAME_SIZE).map(|c| {
        let mut f = [0.0; FRAME_SIZE];
        f[..c.len()].copy_from_slice(c);
        f
    })
}

fn unit(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let mut v: Vec<f64> = (0..n).map(|_| rng.random_range(-1.0..1.0)).collect();
    let e = v.iter().map(|x| x * x).sum::<f64>().sqrt();
    v.iter_mut().for_each(|x| *x /= e);
    v
}

fn random_pulses(rng: &mut ChaCha8Rng, n: usize, k: usize) -> PulseVector {
    let mut y = vec![0i32; n];
    for _ in 0..k {
        let i = rng.random_range(0..n);
        y[i] += if y[i] == 0 { if rng.random_bool(0.5) { 1 } else { -1 } } else { y[i].signum() };
    }
    PulseVector(y)
}

/// All codewords with `k` pulses in `n` dimensions.
fn enumerate(n: usize, k: i32) -> Vec<Vec<i32>> {
    if n == 0 {
        return if k == 0 { vec![vec![]] } else { vec![] };
    }
    let mut out = Vec::new();
    for v in -k..=k {
        for mut rest in enumerate(n - 1, k - v.abs()) {
            rest.insert(0, v);
            out.push(rest);
        }
    }
    out
}

fn band_error(x: &[f64], p: &[f64], ga: f64, y: &[i32]) -> f64 {
    let yf: Vec<f64> = y.iter().map(|&v| v as f64).collect();
    let ryy: f64 = yf.iter().map(|v| v * v).sum();
    let ryp: f64 = yf.iter().zip(p).map(|(a, b)| a * b).sum();
    let gf = fixed_gain(ga, ryp, ryy);
    x.iter().zip(p).zip(&yf).map(|((x, p), y)| (x - ga * p - gf * y).powi(2)).sum()
}

fn frame_budget(corpus: &[Clip]) -> Verdict {
    let mut lines = Vec::new();
    let mut ok = true;
    for bytes in [47usize, 34] {
        let cfg = CodecConfig::new(bytes).unwrap();
        let (mut n, mut voiced) = (0usize, 0usize);
        let (mut gain, mut period, mut energy, mut innov, mut slack, mut worst) = (0.0, 0.0, 0.0, 0.0, 0.0, 0.0f64);
        for clip in corpus {
            let mut enc = Encoder::new(cfg, Tables::shipped());
            for f in frames(&clip.samples) {
                let p = enc.encode_frame(&f).unwrap();
                ok &= p.len() * 8 == bytes * 8 && p.len() == bytes;
                let m = enc.last_frame().marks;
                let bits = |a: u32, b: u32| (b as f64 - a as f64) / ONE_BIT as f64;
                let g = bits(ONE_BIT, m.gain);
                ok &= (g - 7.0).abs() < 1e-9;
                if enc.last_frame().period.is_some() {
                    let t = bits(m.gain, m.period);
                    // One symbol's tell() step wobbles by a few 1/256 bit around log2(641).
                    ok &= (t - 641f64.log2()).abs() <= 1.0 / 32.0;
                    period += t;
                    voiced += 1;
                }
                let s = bits(m.innovation, cfg.budget_q8());
                ok &= (0.0..=2.0).contains(&s);
                gain += g;
                energy += bits(m.period, m.fine);
                innov += bits(m.fine, m.innovation);
                slack += s;
                worst = worst.max(s);
                n += 1;
            }
        }
        let n_f = n as f64;
        lines.push(format!(
            "B={bytes}: {} bits = 1 coder + gain {:.2} + period {:.2} ({} of {n} frames) + energy {:.2} + innovation {:.2} + slack {:.2} (max {:.2})",
            bytes * 8,
            gain / n_f,
            period / voiced.max(1) as f64,
            voiced,
            energy / n_f,
            innov / n_f,
            slack / n_f,
            worst
        ));
    }
    check(ok, lines.join("; "))
}

fn golden_allocation() -> Verdict {
    const PAPER_BITS: [f64; CODED_BANDS] =
        [12.5, 11.6, 10.6, 9.8, 9.8, 9.8, 9.8, 9.6, 10.6, 15.8, 17.7, 13.4, 14.7, 15.4, 16.1, 21.6, 20.7, 20.0, 12.6, 1.0];
    let t = Tables::shipped();
    // A typical 47-byte frame: 376 bits minus coder, pitch and coarse energy
    // leaves about 320.5 bits, of which 57 go to fine energy.
    let a = compute_allocation((320.45 * ONE_BIT as f64) as i64, &t.alloc, &t.fine_priority);
    let mut worst = 0.0f64;
    for b in 0..CODED_BANDS {
        let n = BandLayout.width(b);
        let k = a.innovation.pulses[b] as usize;
        let bits = (codebook_size(n, k).unwrap() as f64).log2() + if has_fold_sign(b) && a.innovation.fold_sign[b] { 1.0 } else { 0.0 };
        worst = worst.max((bits - PAPER_BITS[b]).abs());
    }
    let v338 = (codebook_size(3, 38).unwrap() as f64).log2();
    check(
        a.innovation.pulses == GOLDEN_PULSES && worst <= 0.05,
        format!(
            "innovation budget {:.3} bits, fine {} bits, K = {:?}, total {:.3} bits, max |bits - table| {:.3}, V(3,38) -> {:.3} bits",
            a.innovation_budget_q16 as f64 / 65536.0,
            a.fine_total(),
            a.innovation.pulses,
            a.innovation.cost_q16 as f64 / 65536.0,
            worst,
            v338
        ),
    )
}

fn enumeration() -> Verdict {
    let mut ok = true;
    let mut checked = 0;
    for n in 1..=5 {
        for k in 0..=5 {
            let all = enumerate(n, k as i32);
            ok &= codebook_size(n, k) == Some(all.len() as u128);
            let mut seen = vec![false; all.len()];
            for v in &all {
                let y = PulseVector(v.clone());
                let i = encode_index(&y).unwrap();
                ok &= (i as usize) < all.len() && !seen[i as usize];
                seen[i as usize] = true;
                ok &= decode_index(i, n, k).unwrap() == y;
                checked += 1;
            }
        }
    }
    let v = (codebook_size(3, 38), codebook_size(3, 28));
    let brute = (enumerate(3, 38).len() as u128, enumerate(3, 28).len() as u128);
    ok &= v == (Some(5778), Some(3138)) && brute == (5778, 3138);
    for k in [28usize, 38] {
        for i in 0..codebook_size(3, k).unwrap() {
            ok &= encode_index(&decode_index(i, 3, k).unwrap()).unwrap() == i;
        }
    }
    check(ok, format!("{checked} codewords for N,K <= 5 match enumeration and round-trip; V(3,38)={}, V(3,28)={}", brute.0, brute.1))
}

fn perfect_reconstruction(corpus: &[Clip]) -> Verdict {
    let w = window();
    let pc = (0..FRAME_SIZE).map(|n| (w[n] * w[n] + w[n + FRAME_SIZE] * w[n + FRAME_SIZE] - 1.0).abs()).fold(0.0, f64::max);
    let mut rng = ChaCha8Rng::seed_from_u64(4);
    let noise: Vec<f64> = (0..44_100).map(|_| rng.random_range(-0.5..0.5)).collect();
    let mdct = Mdct::new();
    let mut snrs = Vec::new();
    for (name, x) in [("noise", &noise), ("music", &corpus[3].samples), ("chords", &corpus[5].samples)] {
        let mut buf = AnalysisBuffer::default();
        let mut state = OverlapState::default();
        let mut y = Vec::with_capacity(x.len());
        for f in frames(x) {
            let spec = mdct.forward(buf.push(&f));
            y.extend_from_slice(&inverse_wola(&mdct, &spec, &mut state));
        }
        let n = x.len() - CODEC_DELAY;
        let sig: f64 = x[..n].iter().map(|v| v * v).sum();
        let err: f64 = (0..n).map(|i| (x[i] - y[i + CODEC_DELAY]).powi(2)).sum();
        snrs.push((name, 10.0 * (sig / err.max(1e-300)).log10()));
    }
    let ok = pc <= 1e-12 && snrs.iter().all(|(_, s)| *s >= 100.0);
    check(
        ok,
        format!(
            "window w^2 + w'^2 - 1 max {pc:.1e}; SNR at delay {CODEC_DELAY}: {}",
            snrs.iter().map(|(n, s)| format!("{n} {s:.1} dB")).collect::<Vec<_>>().join(", ")
        ),
    )
}

fn energy_constraint(corpus: &[Clip]) -> Verdict {
    let cfg = CodecConfig::new(47).unwrap();
    let (mut frames_n, mut worst) = (0usize, 0.0f64);
    for clip in corpus {
        let mut enc = Encoder::new(cfg, Tables::shipped());
        let mut dec = Decoder::new(cfg, Tables::shipped());
        for f in frames(&clip.samples) {
            let p = enc.encode_frame(&f).unwrap();
            dec.decode_frame(Some(&p));
            let info = dec.last_frame();
            for b in 0..CODED_BANDS {
                let want = 10f64.powf(info.energies_db[b] / 10.0);
                let got = band_energy(&info.spectrum, &BandLayout, b);
                worst = worst.max((got - want).abs() / want);
            }
            frames_n += 1;
        }
    }
    check(worst <= 1e-6, format!("{frames_n} frames x {CODED_BANDS} bands, max relative error {worst:.2e}"))
}

fn unit_norm_mixing() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(6);
    let mut worst = 0.0f64;
    const DRAWS: usize = 1_000_000;
    for i in 0..DRAWS {
        let n = rng.random_range(1..=24);
        let p = unit(&mut rng, n);
        let k = rng.random_range(1..=20);
        let y = random_pulses(&mut rng, n, k);
        let ga = match i % 4 {
            0 => 0.0,
            1 => 0.9,
            _ => rng.random_range(0.0..0.9),
        };
        let x = mix_excitation(&p, ga, &y);
        worst = worst.max((x.iter().map(|v| v * v).sum::<f64>().sqrt() - 1.0).abs());
    }
    check(worst <= 1e-9, format!("{DRAWS} draws (1/4 at g=0, 1/4 at g=0.9), max | ||x|| - 1 | = {worst:.2e}"))
}

fn prediction_gain(corpus: &[Clip]) -> Verdict {
    let t = Tables::shipped();
    let energies = clip_energies(corpus);
    let shipped = entropy_at(&energies, &t.mean_db, ALPHA, BETA);
    let (best_beta0, intra_only) =
        SWEEP_BETAS.iter().map(|&b| (b, entropy_at(&energies, &t.mean_db, 0.0, b))).fold((0.0, f64::MAX), |a, r| if r.1 < a.1 { r } else { a });
    let q = coarse_residuals(&energies, &t.mean_db, PredictorCoefficients { alpha: ALPHA, beta: BETA });
    let entropy = empirical_entropy(&q);
    let coded = laplace_cost(&q, &t.laplace_model());
    let gain = intra_only - shipped;
    check(
        gain >= 5.0 && coded - entropy <= 4.0,
        format!(
            "alpha=0 (best beta {best_beta0:.1}) {intra_only:.2} bits/frame, alpha=0.8 beta=0.6 {shipped:.2}: gain {gain:.2}; Laplace cost {coded:.2} vs entropy {entropy:.2} (+{:.2})",
            coded - entropy
        ),
    )
}

fn lockstep(corpus: &[Clip]) -> Verdict {
    let pcm: Vec<f64> = corpus.iter().chain(&corpus[..4]).flat_map(|c| c.samples.iter().copied()).collect();
    let cfg = CodecConfig::new(47).unwrap();
    let mut enc = Encoder::new(cfg, Tables::shipped());
    let mut dec = Decoder::new(cfg, Tables::shipped());
    enc.set_trace(true);
    dec.set_trace(true);
    let (mut n, mut symbols, mut ok) = (0usize, 0usize, true);
    for f in frames(&pcm) {
        let p = enc.encode_frame(&f).unwrap();
        dec.decode_frame(Some(&p));
        let (a, b) = (enc.last_frame(), dec.last_frame());
        ok &= a.trace.is_some() && a.trace == b.trace;
        ok &= enc.synth_state() == dec.synth_state();
        symbols += a.trace.as_ref().map_or(0, Vec::len);
        n += 1;
        if !ok {
            break;
        }
    }
    check(ok, format!("{:.1} s, {n} frames, {symbols} symbols: state and tell() identical after every frame and symbol", pcm.len() as f64 / 44_100.0))
}

fn loss_resilience(corpus: &[Clip]) -> Verdict {
    let cfg = CodecConfig::new(47).unwrap();
    let speech: Vec<f64> = corpus[..2].iter().flat_map(|c| c.samples.iter().copied()).collect();
    let mut enc = Encoder::new(cfg, Tables::shipped());
    let packets: Vec<Vec<u8>> = frames(&speech).map(|f| enc.encode_frame(&f).unwrap()).collect();

    let mut rng = ChaCha8Rng::seed_from_u64(9);
    let mut dec = Decoder::new(cfg, Tables::shipped());
    let (mut peak, mut lost, mut finite, mut clipped) = (0.0f64, 0, true, 0);
    for p in &packets {
        let drop = rng.random_bool(0.3);
        lost += drop as usize;
        let out = dec.decode_frame((!drop).then_some(p.as_slice()));
        finite &= out.iter().all(|v| v.is_finite());
        peak = out.iter().fold(peak, |m, v| m.max(v.abs()));
        clipped += dec.last_frame().saturated;
    }
    let bounded = finite && peak <= 2.0;

    // Single losses at several voiced frames; compare with the clean decoder.
    let mut clean = Decoder::new(cfg, Tables::shipped());
    let reference: Vec<_> = packets
        .iter()
        .map(|p| {
            clean.decode_frame(Some(p));
            clean.last_frame().energies_db
        })
        .collect();
    let mut worst_ratio = 0.0f64;
    let mut cases = 0;
    for start in (40..packets.len() - 10).step_by(97) {
        let mut d = Decoder::new(cfg, Tables::shipped());
        for p in &packets[..start] {
            d.decode_frame(Some(p));
        }
        d.decode_frame(None);
        let e0: Vec<f64> = (0..CODED_BANDS).map(|b| (d.last_frame().energies_db[b] - reference[start][b]).abs()).collect();
        for (i, p) in packets[start + 1..=start + 5].iter().enumerate() {
            d.decode_frame(Some(p));
            let bound = ALPHA.powi(i as i32 + 1);
            for b in 0..CODED_BANDS {
                let e = (d.last_frame().energies_db[b] - reference[start + 1 + i][b]).abs();
                if e0[b] > 1e-9 {
                    worst_ratio = worst_ratio.max(e / (bound * e0[b]));
                } else if e > 1e-9 {
                    worst_ratio = f64::INFINITY;
                }
            }
        }
        cases += 1;
    }
    check(
        bounded && worst_ratio <= 1.5,
        format!(
            "30% loss: {lost}/{} frames lost, peak |x| {peak:.3} ({clipped} of {} samples clipped); single loss ({cases} cases): divergence / (0.8^n x initial) max {worst_ratio:.3} over 5 good frames",
            packets.len(),
            packets.len() * FRAME_SIZE
        ),
    )
}

fn secded_shield(corpus: &[Clip]) -> Verdict {
    let t = Tables::shipped();
    let plain = CodecConfig::new(47).unwrap();
    let protected = plain.with_parity(true);
    let mut enc = Encoder::new(plain, t.clone());
    let (mut frames_n, mut corrected, mut detected, mut exact) = (0usize, 0usize, 0usize, true);
    for f in frames(&corpus[0].samples).take(400) {
        let mut other = enc.clone();
        other.set_config(protected);
        let mut packet = other.encode_frame(&f).unwrap();
        enc.encode_frame(&f).unwrap();
        let budget = |cfg: &CodecConfig, e: &Encoder| cfg.budget_q8() as i64 - e.last_frame().marks.coarse as i64 - MARGIN_Q8 as i64;
        exact &= budget(&plain, &enc) - budget(&protected, &other) == 8 * ONE_BIT as i64;
        secded::protect(&mut packet);
        let clean = packet.clone();
        let flip = |p: &mut Vec<u8>, bit: usize| {
            let last = p.len() - 1;
            if bit < 64 {
                p[bit / 8] ^= 1 << (bit % 8)
            } else {
                p[last] ^= 1 << (bit - 64)
            }
        };
        if frames_n % 8 == 0 {
            for i in 0..PROTECTED_BITS {
                let mut p = clean.clone();
                flip(&mut p, i);
                corrected += (secded::check(&mut p) == Outcome::Corrected(i) && p == clean) as usize;
                for j in i + 1..PROTECTED_BITS {
                    let mut p = clean.clone();
                    flip(&mut p, i);
                    flip(&mut p, j);
                    detected += (secded::check(&mut p) == Outcome::Detected) as usize;
                }
            }
        }
        let mut p = clean.clone();
        exact &= secded::check(&mut p) == Outcome::Clean;
        frames_n += 1;
    }
    let tested = frames_n.div_ceil(8);
    let ok = exact && corrected == tested * PROTECTED_BITS && detected == tested * PROTECTED_BITS * (PROTECTED_BITS - 1) / 2;
    check(
        ok,
        format!(
            "{tested} packets: {corrected} single errors corrected, {detected} double errors detected; allocation budget 8 bits lower on all {frames_n} frames"
        ),
    )
}

fn pvq_quality() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(11);
    let (mut full, mut simple) = (0.0, 0.0);
    const BANDS: usize = 1000;
    for _ in 0..BANDS {
        let n = rng.random_range(3..=20);
        let k = rng.random_range(1..=12);
        let x = unit(&mut rng, n);
        let p = unit(&mut rng, n);
        let ga = rng.random_range(0.0..0.9);
        let r: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x - ga * p).collect();
        full += band_error(&x, &p, ga, &search_with(&r, &p, ga, k, SearchCost::Full).unwrap().y.0);
        simple += band_error(&x, &p, ga, &search_with(&r, &p, ga, k, SearchCost::Simplified).unwrap().y.0);
    }
    let mut k1 = true;
    for _ in 0..1000 {
        let n = rng.random_range(1..=16);
        let x = unit(&mut rng, n);
        let p = unit(&mut rng, n);
        let ga = rng.random_range(0.0..0.9);
        let r: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x - ga * p).collect();
        let got = band_error(&x, &p, ga, &search(&r, &p, ga, 1).unwrap().y.0);
        let best = enumerate(n, 1).iter().map(|y| band_error(&x, &p, ga, y)).fold(f64::MAX, f64::min);
        k1 &= got <= best + 1e-12;
    }
    let all = enumerate(4, 3);
    let (mut gap, mut optimal) = (0.0, 0usize);
    const TRIALS: usize = 1000;
    for _ in 0..TRIALS {
        let x = unit(&mut rng, 4);
        let p = unit(&mut rng, 4);
        let ga = rng.random_range(0.0..0.9);
        let r: Vec<f64> = x.iter().zip(&p).map(|(x, p)| x - ga * p).collect();
        let got = band_error(&x, &p, ga, &search(&r, &p, ga, 3).unwrap().y.0);
        let best = all.iter().map(|y| band_error(&x, &p, ga, y)).fold(f64::MAX, f64::min);
        gap += got - best;
        optimal += (got <= best + 1e-12) as usize;
    }
    check(
        full / BANDS as f64 <= simple / BANDS as f64 && k1,
        format!(
            "mean error full {:.4} vs simplified {:.4}; K=1 equals exhaustive: {k1}; N=4 K=3 over {} codewords: optimal in {optimal}/{TRIALS}, mean gap {:.5}",
            full / BANDS as f64,
            simple / BANDS as f64,
            all.len(),
            gap / TRIALS as f64
        ),
    )
}

fn main() {
    let corpus = desk_corpus();
    let criteria: Vec<(&str, Box<dyn Fn() -> Verdict + '_>)> = vec![
        ("frame budget exactness", Box::new(|| frame_budget(&corpus))),
        ("golden allocation", Box::new(golden_allocation)),
        ("enumeration correctness", Box::new(enumeration)),
        ("perfect reconstruction", Box::new(|| perfect_reconstruction(&corpus))),
        ("energy constraint", Box::new(|| energy_constraint(&corpus))),
        ("unit-norm mixing", Box::new(unit_norm_mixing)),
        ("coarse-energy prediction gain", Box::new(|| prediction_gain(&corpus))),
        ("lockstep determinism", Box::new(|| lockstep(&corpus))),
        ("loss resilience", Box::new(|| loss_resilience(&corpus))),
        ("SECDED shield", Box::new(|| secded_shield(&corpus))),
        ("PVQ search quality", Box::new(pvq_quality)),
    ];
    let mut failed = 0;
    for (i, (name, run)) in criteria.iter().enumerate() {
        let result = catch_unwind(AssertUnwindSafe(run)).unwrap_or_else(|e| {
            Err(e.downcast_ref::<String>().cloned().or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string())).unwrap_or_default())
        });
        let (tag, detail) = match result {
            Ok(d) => ("PASS", d),
            Err(d) => {
                failed += 1;
                ("FAIL", d)
            }
        };
        println!("{tag} {:>2} {name}: {detail}", i + 1);
    }
    println!("acceptance: {} passed, {failed} failed", criteria.len() - failed);
    if failed > 0 {
        std::process::exit(1);
    }
}
