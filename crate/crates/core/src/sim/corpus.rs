//! Synthetic labeled corpus with a parallel reverberant, noisy copy.
//!
//! Each class is a harmonic stack with its own fundamental and two
//! formant-like spectral peaks. An utterance concatenates class segments
//! (no class repeats back to back). The noisy member passes the speech and
//! every noise through its own simulated room response before mixing.

use std::f64::consts::PI;
use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use rand::seq::index::sample;
use rand::Rng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, StandardNormal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use super::{convolve::convolve_truncated, mix_at_snr, room, RoomSpec, SimError};
use crate::audio::AudioBuffer;
use crate::seed;

const LABEL_MAGIC: &[u8; 4] = b"LBL1";
const WALL_MARGIN_M: f64 = 0.5;
const MIN_SOURCE_MIC_DIST_M: f64 = 0.5;
const SPEECH_RMS: f64 = 0.08;
const PEAK_LIMIT: f64 = 0.95;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SimConfig {
    pub sample_rate: u32,
    pub snr_range_db: (f64, f64),
    pub t60_range_s: (f64, f64),
    pub noises_per_utt: (usize, usize),
    /// Per-axis (lo, hi) room dimension ranges in meters.
    pub room_dim_ranges: [(f64, f64); 3],
    pub noise_bank_size: usize,
    /// Restrict sampling to the first `n` noises of the bank.
    pub noise_bank_limit: Option<usize>,
    pub noise_duration_s: f64,
    pub segments_per_utt: (usize, usize),
    /// Segment length range in frames.
    pub segment_frames: (usize, usize),
    pub seed: u64,
}

impl Default for SimConfig {
    fn default() -> Self {
        Self {
            sample_rate: 16000,
            snr_range_db: (0.0, 30.0),
            t60_range_s: (0.5, 0.9),
            noises_per_utt: (1, 3),
            room_dim_ranges: [(4.0, 8.0), (3.0, 6.0), (2.5, 3.5)],
            noise_bank_size: 32,
            noise_bank_limit: None,
            noise_duration_s: 2.0,
            segments_per_utt: (3, 6),
            segment_frames: (8, 16),
            seed: 0,
        }
    }
}

impl SimConfig {
    pub fn validate(&self) -> Result<(), SimError> {
        let bad = |m: String| Err(SimError::InvalidConfig(m));
        if self.sample_rate == 0 {
            return bad("sample_rate must be positive".into());
        }
        let ranges = [
            ("snr_range_db", self.snr_range_db),
            ("t60_range_s", self.t60_range_s),
            ("room x", self.room_dim_ranges[0]),
            ("room y", self.room_dim_ranges[1]),
            ("room z", self.room_dim_ranges[2]),
        ];
        for (name, (lo, hi)) in ranges {
            if !(lo <= hi) || !lo.is_finite() || !hi.is_finite() {
                return bad(format!("{name}: lo {lo} must not exceed hi {hi}"));
            }
        }
        if !(self.t60_range_s.0 > 0.0) {
            return bad("t60 must be positive".into());
        }
        for (axis, (lo, _)) in self.room_dim_ranges.iter().enumerate() {
            if *lo <= 2.0 * WALL_MARGIN_M {
                return bad(format!("room axis {axis} must exceed {} m", 2.0 * WALL_MARGIN_M));
            }
        }
        let bank = self.usable_bank_size();
        let (nmin, nmax) = self.noises_per_utt;
        if nmin < 1 || nmin > nmax || nmax > bank {
            return bad(format!(
                "noises_per_utt ({nmin}, {nmax}) must lie within [1, {bank}]"
            ));
        }
        let (smin, smax) = self.segments_per_utt;
        if smin < 1 || smin > smax {
            return bad("segments_per_utt must satisfy 1 <= min <= max".into());
        }
        let (fmin, fmax) = self.segment_frames;
        if fmin < 1 || fmin > fmax {
            return bad("segment_frames must satisfy 1 <= min <= max".into());
        }
        if !(self.noise_duration_s > 0.0) {
            return bad("noise_duration_s must be positive".into());
        }
        Ok(())
    }

    pub fn usable_bank_size(&self) -> usize {
        self.noise_bank_limit
            .map_or(self.noise_bank_size, |l| l.min(self.noise_bank_size))
    }
}

/// Analysis frame grid used to derive frame labels.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct Framing {
    pub win: usize,
    pub hop: usize,
}

impl Framing {
    pub fn from_seconds(win_s: f64, hop_s: f64, sample_rate: u32) -> Self {
        let fs = sample_rate as f64;
        Self {
            win: (win_s * fs).round() as usize,
            hop: (hop_s * fs).round() as usize,
        }
    }
}

/// `1 + floor((len - win) / hop)` when `len >= win`, else 0.
pub fn frame_count(len: usize, framing: Framing) -> usize {
    if len < framing.win || framing.hop == 0 {
        0
    } else {
        1 + (len - framing.win) / framing.hop
    }
}

/// Frame labels from segment boundaries: each frame takes the class of the
/// segment that contains its center sample.
pub fn frame_labels_for(segments: &[(u16, usize)], len: usize, framing: Framing) -> Vec<u16> {
    let mut bounds = Vec::with_capacity(segments.len());
    let mut end = 0;
    for &(class, n) in segments {
        end += n;
        bounds.push((end, class));
    }
    (0..frame_count(len, framing))
        .map(|f| {
            let center = f * framing.hop + framing.win / 2;
            bounds
                .iter()
                .find(|(end, _)| center < *end)
                .or(bounds.last())
                .map(|&(_, c)| c)
                .unwrap_or(0)
        })
        .collect()
}

/// Spectral identity of one synthetic class.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Voice {
    pub f0: f64,
    pub formants: [f64; 2],
    pub bandwidths: [f64; 2],
}

/// Deterministic class prototype; depends only on the class index.
pub fn class_voice(class: usize) -> Voice {
    let golden = 0.618_033_988_749_895;
    let frac = |x: f64| x - x.floor();
    let c = class as f64;
    // Low-discrepancy placement keeps prototypes spread for any class count.
    let f0 = 90.0 * 3f64.powf(frac(0.5 + c * golden));
    let f1 = 250.0 * 3.6f64.powf(frac(0.25 + c * std::f64::consts::SQRT_2));
    let f2 = f1 + 500.0 + 2200.0 * frac(0.1 + c * 0.754_877_666_246_693);
    Voice {
        f0,
        formants: [f1, f2],
        bandwidths: [80.0 + 0.15 * f1, 120.0 + 0.08 * f2],
    }
}

impl Voice {
    fn envelope(&self, f: f64) -> f64 {
        let peak = |centre: f64, bw: f64| (-(f - centre).powi(2) / (2.0 * bw * bw)).exp();
        peak(self.formants[0], self.bandwidths[0])
            + 0.7 * peak(self.formants[1], self.bandwidths[1])
            + 0.03
    }

    /// Renders `len` samples with a small random pitch/level jitter.
    fn render(&self, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
        let f0 = self.f0 * (1.0 + rng.random_range(-0.02..0.02));
        let vibrato_hz = rng.random_range(3.0..6.0);
        let n_harm = ((4000.0 / f0).floor() as usize).max(1);
        let amps: Vec<f64> = (1..=n_harm).map(|h| self.envelope(h as f64 * f0)).collect();
        let phases: Vec<f64> = (0..n_harm).map(|_| rng.random_range(0.0..2.0 * PI)).collect();
        let mut out = vec![0.0; len];
        let mut phase = 0.0;
        for (i, o) in out.iter_mut().enumerate() {
            let t = i as f64 / fs;
            let inst = f0 * (1.0 + 0.01 * (2.0 * PI * vibrato_hz * t).sin());
            phase += 2.0 * PI * inst / fs;
            *o = amps
                .iter()
                .zip(&phases)
                .enumerate()
                .map(|(h, (a, p))| a * ((h + 1) as f64 * phase + p).sin())
                .sum();
        }
        apply_ramps(&mut out, (0.005 * fs) as usize);
        let level = SPEECH_RMS * 10f64.powf(rng.random_range(-3.0..3.0) / 20.0);
        normalize_rms(&mut out, level);
        out
    }
}

fn apply_ramps(x: &mut [f64], ramp: usize) {
    let n = x.len();
    let ramp = ramp.min(n / 2);
    for i in 0..ramp {
        let g = 0.5 - 0.5 * (PI * i as f64 / ramp as f64).cos();
        x[i] *= g;
        x[n - 1 - i] *= g;
    }
}

fn normalize_rms(x: &mut [f64], target: f64) {
    let p = crate::audio::mean_power(x);
    if p > 0.0 {
        let g = target / p.sqrt();
        x.iter_mut().for_each(|v| *v *= g);
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum NoiseKind {
    /// Amplitude-modulated harmonic notes, music-like.
    Music,
    /// Band-limited broadband noise.
    Broadband,
}

#[derive(Debug, Clone, PartialEq)]
pub struct NoiseSource {
    pub id: String,
    pub kind: NoiseKind,
    pub audio: AudioBuffer,
}

pub fn synthesize_noise(kind: NoiseKind, len: usize, fs: f64, rng: &mut ChaCha8Rng) -> Vec<f64> {
    let mut out = vec![0.0; len];
    match kind {
        NoiseKind::Music => {
            let voices = rng.random_range(2..=4);
            for _ in 0..voices {
                let mut start = 0;
                while start < len {
                    let note_len = ((rng.random_range(0.15..0.5)) * fs) as usize;
                    let end = (start + note_len).min(len);
                    let f0 = 70.0 * 2f64.powf(rng.random_range(0.0..3.5));
                    let decay = rng.random_range(2.0..8.0);
                    let am_hz = rng.random_range(1.0..6.0);
                    let harmonics = rng.random_range(3..=7);
                    let tilt = rng.random_range(0.5..1.5);
                    let amp = rng.random_range(0.3..1.0);
                    for (i, o) in out[start..end].iter_mut().enumerate() {
                        let t = i as f64 / fs;
                        let env = (-decay * t).exp() * (0.75 + 0.25 * (2.0 * PI * am_hz * t).sin());
                        let tone: f64 = (1..=harmonics)
                            .map(|h| {
                                (2.0 * PI * f0 * h as f64 * t).sin() / (h as f64).powf(tilt)
                            })
                            .sum();
                        *o += amp * env * tone;
                    }
                    start = end;
                }
            }
        }
        NoiseKind::Broadband => {
            // Two cascaded one-pole sections: a random low-pass and a DC blocker.
            let cutoff = rng.random_range(500.0..6000.0);
            let a = (-2.0 * PI * cutoff / fs).exp();
            let am_hz: f64 = rng.random_range(0.5..4.0);
            let depth: f64 = rng.random_range(0.0..0.8);
            let (mut lp, mut prev_in, mut hp) = (0.0, 0.0, 0.0);
            for (i, o) in out.iter_mut().enumerate() {
                let w: f64 = StandardNormal.sample(rng);
                lp = (1.0 - a) * w + a * lp;
                hp = 0.995 * hp + lp - prev_in;
                prev_in = lp;
                let t = i as f64 / fs;
                *o = hp * (1.0 - depth * 0.5 * (1.0 + (2.0 * PI * am_hz * t).sin()));
            }
        }
    }
    apply_ramps(&mut out, (0.01 * fs) as usize);
    normalize_rms(&mut out, 0.1);
    out
}

pub fn generate_noise_bank(sim: &SimConfig) -> Result<Vec<NoiseSource>, SimError> {
    let fs = sim.sample_rate as f64;
    let len = (sim.noise_duration_s * fs).round() as usize;
    (0..sim.noise_bank_size)
        .into_par_iter()
        .map(|j| {
            let mut rng = seed::stream(sim.seed, "noise-bank", j as u64);
            let kind = if j % 3 == 2 {
                NoiseKind::Broadband
            } else {
                NoiseKind::Music
            };
            let samples = synthesize_noise(kind, len, fs, &mut rng);
            Ok(NoiseSource {
                id: format!("noise-{j:04}"),
                kind,
                audio: AudioBuffer::new(samples, sim.sample_rate)?,
            })
        })
        .collect()
}

/// Per-utterance acoustic conditions, as listed in the corpus manifest.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct UtteranceMeta {
    pub id: String,
    pub snr_db: f64,
    pub t60_s: f64,
    pub noise_ids: Vec<String>,
    pub room_dims: [f64; 3],
}

#[derive(Debug, Clone, PartialEq)]
pub struct UtteranceRecord {
    pub id: String,
    pub clean: AudioBuffer,
    pub noisy: AudioBuffer,
    pub frame_labels: Vec<u16>,
    pub token_refs: Vec<u16>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct Corpus {
    pub records: Vec<UtteranceRecord>,
    pub meta: Vec<UtteranceMeta>,
    pub noise_bank: Vec<NoiseSource>,
}

fn draw_segments(
    sim: &SimConfig,
    n_classes: usize,
    framing: Framing,
    rng: &mut ChaCha8Rng,
) -> Vec<(u16, usize)> {
    let n_seg = rng.random_range(sim.segments_per_utt.0..=sim.segments_per_utt.1);
    let mut segs: Vec<(u16, usize)> = Vec::with_capacity(n_seg);
    for s in 0..n_seg {
        let class = loop {
            let c = rng.random_range(0..n_classes) as u16;
            if segs.last().is_none_or(|&(prev, _)| prev != c) {
                break c;
            }
        };
        let frames = rng.random_range(sim.segment_frames.0..=sim.segment_frames.1);
        let mut samples = frames * framing.hop;
        // Edge padding so the first and last segments yield exactly `frames` frames.
        let pad = framing.win.saturating_sub(framing.hop) / 2;
        if s == 0 {
            samples += pad;
        }
        if s + 1 == n_seg {
            samples += pad;
        }
        segs.push((class, samples));
    }
    segs
}

fn uniform(rng: &mut ChaCha8Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..hi)
    }
}

fn random_position(dims: [f64; 3], rng: &mut ChaCha8Rng) -> [f64; 3] {
    let mut p = [0.0; 3];
    for axis in 0..3 {
        p[axis] = rng.random_range(WALL_MARGIN_M..dims[axis] - WALL_MARGIN_M);
    }
    p
}

fn dist(a: [f64; 3], b: [f64; 3]) -> f64 {
    (0..3).map(|i| (a[i] - b[i]).powi(2)).sum::<f64>().sqrt()
}

fn position_away_from(mic: [f64; 3], dims: [f64; 3], rng: &mut ChaCha8Rng) -> [f64; 3] {
    loop {
        let p = random_position(dims, rng);
        if dist(p, mic) >= MIN_SOURCE_MIC_DIST_M {
            return p;
        }
    }
}

/// Draws a room, reverberates speech and 1..n noises, and mixes them at a
/// random SNR. The mixture is rescaled so the reverberant speech keeps the
/// dry speech power, then peak-limited.
fn render_noisy(
    clean: &AudioBuffer,
    bank: &[NoiseSource],
    sim: &SimConfig,
    id: &str,
    rng: &mut ChaCha8Rng,
) -> Result<(AudioBuffer, UtteranceMeta), SimError> {
    let fs = sim.sample_rate;
    let len = clean.len();
    let mut dims = [0.0; 3];
    for axis in 0..3 {
        dims[axis] = uniform(rng, sim.room_dim_ranges[axis]);
    }
    let t60 = uniform(rng, sim.t60_range_s);
    let mic = random_position(dims, rng);
    let speech_pos = position_away_from(mic, dims, rng);
    let speech_room = RoomSpec::new(dims, speech_pos, mic, t60);
    let beta = room::derive_reflection_coeff(&speech_room)?;

    let n_noises = rng.random_range(sim.noises_per_utt.0..=sim.noises_per_utt.1);
    let picks = sample(rng, sim.usable_bank_size(), n_noises).into_vec();
    let snr_db = uniform(rng, sim.snr_range_db);

    let reverb = |pos: [f64; 3], x: &[f64]| -> Result<Vec<f64>, SimError> {
        let room = RoomSpec::new(dims, pos, mic, t60);
        let ir = room::simulate_rir_limited(&room, beta, fs, Some(len))?;
        Ok(convolve_truncated(x, ir.taps()))
    };

    let wet_speech = AudioBuffer::new(reverb(speech_pos, clean.samples())?, fs)?;
    let mut noises = Vec::with_capacity(n_noises);
    for &j in &picks {
        let src = bank[j].audio.samples();
        let offset = rng.random_range(0..src.len());
        let rotated: Vec<f64> = src[offset..].iter().chain(&src[..offset]).copied().collect();
        let fitted = super::fit_length(&rotated, len);
        let pos = position_away_from(mic, dims, rng);
        noises.push(AudioBuffer::new(reverb(pos, &fitted)?, fs)?);
    }
    let mixed = mix_at_snr(&wet_speech, &noises, snr_db)?;

    let mut samples = mixed.into_samples();
    let wet_power = wet_speech.power();
    if wet_power > 0.0 {
        let g = (clean.power() / wet_power).sqrt();
        samples.iter_mut().for_each(|s| *s *= g);
    }
    let peak = samples.iter().fold(0.0f64, |m, s| m.max(s.abs()));
    if peak > PEAK_LIMIT {
        let g = PEAK_LIMIT / peak;
        samples.iter_mut().for_each(|s| *s *= g);
    }
    let meta = UtteranceMeta {
        id: id.to_string(),
        snr_db,
        t60_s: t60,
        noise_ids: picks.iter().map(|&j| bank[j].id.clone()).collect(),
        room_dims: dims,
    };
    Ok((AudioBuffer::new(samples, fs)?, meta))
}

fn acoustic_tag(copy: usize) -> String {
    if copy == 0 {
        "acoustics".to_string()
    } else {
        format!("acoustics-copy{copy}")
    }
}

/// Generates `n_utts` parallel utterances. The result is a pure function of
/// `(sim, n_utts, n_classes, framing)`; utterances are rendered in parallel
/// from per-utterance random streams.
pub fn generate_corpus(
    sim: &SimConfig,
    n_utts: usize,
    n_classes: usize,
    framing: Framing,
) -> Result<Corpus, SimError> {
    sim.validate()?;
    if n_classes < 2 || n_classes > u16::MAX as usize {
        return Err(SimError::InvalidConfig(format!(
            "n_classes must be in [2, 65535], got {n_classes}"
        )));
    }
    if framing.win == 0 || framing.hop == 0 {
        return Err(SimError::InvalidConfig("framing window and hop must be positive".into()));
    }
    let bank = generate_noise_bank(sim)?;
    let fs = sim.sample_rate;
    let voices: Vec<Voice> = (0..n_classes).map(class_voice).collect();
    let rendered: Vec<(UtteranceRecord, UtteranceMeta)> = (0..n_utts)
        .into_par_iter()
        .map(|i| {
            let id = format!("utt-{i:06}");
            let mut rng = seed::stream(sim.seed, "utterance", i as u64);
            let segs = draw_segments(sim, n_classes, framing, &mut rng);
            let mut clean = Vec::new();
            for &(class, n) in &segs {
                clean.extend(voices[class as usize].render(n, fs as f64, &mut rng));
            }
            let clean = AudioBuffer::new(clean, fs)?;
            let frame_labels = frame_labels_for(&segs, clean.len(), framing);
            let token_refs = segs.iter().map(|&(c, _)| c).collect();
            let mut arng = seed::stream(sim.seed, &acoustic_tag(0), i as u64);
            let (noisy, meta) = render_noisy(&clean, &bank, sim, &id, &mut arng)?;
            Ok((
                UtteranceRecord {
                    id,
                    clean,
                    noisy,
                    frame_labels,
                    token_refs,
                },
                meta,
            ))
        })
        .collect::<Result<_, SimError>>()?;
    let (records, meta) = rendered.into_iter().unzip();
    Ok(Corpus {
        records,
        meta,
        noise_bank: bank,
    })
}

/// Re-renders the noisy side of existing clean audio with fresh room, noise
/// and SNR draws. Copy 0 reproduces the original noisy audio exactly.
pub fn generate_noisy_copy(
    sim: &SimConfig,
    clean: &[(String, AudioBuffer)],
    bank: &[NoiseSource],
    copy: usize,
) -> Result<Vec<(AudioBuffer, UtteranceMeta)>, SimError> {
    sim.validate()?;
    let tag = acoustic_tag(copy);
    clean
        .par_iter()
        .enumerate()
        .map(|(i, (id, audio))| {
            let mut rng = seed::stream(sim.seed, &tag, i as u64);
            let copy_id = if copy == 0 {
                id.clone()
            } else {
                format!("{id}-c{copy}")
            };
            render_noisy(audio, bank, sim, &copy_id, &mut rng)
        })
        .collect()
}

/// Label file: magic "LBL1", u32 frame count, then u16 class indices, little-endian.
pub fn write_labels(path: impl AsRef<Path>, labels: &[u16]) -> Result<(), SimError> {
    let mut w = BufWriter::new(File::create(path)?);
    w.write_all(LABEL_MAGIC)?;
    w.write_all(&(labels.len() as u32).to_le_bytes())?;
    for &l in labels {
        w.write_all(&l.to_le_bytes())?;
    }
    w.flush()?;
    Ok(())
}

pub fn read_labels(path: impl AsRef<Path>) -> Result<Vec<u16>, SimError> {
    let mut bytes = Vec::new();
    BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
    if bytes.len() < 8 || &bytes[..4] != LABEL_MAGIC {
        return Err(SimError::BadLabels("missing LBL1 magic".into()));
    }
    let n = u32::from_le_bytes(bytes[4..8].try_into().unwrap()) as usize;
    if bytes.len() != 8 + 2 * n {
        return Err(SimError::BadLabels(format!(
            "expected {n} labels, file holds {} bytes of payload",
            bytes.len() - 8
        )));
    }
    Ok(bytes[8..]
        .chunks_exact(2)
        .map(|c| u16::from_le_bytes([c[0], c[1]]))
        .collect())
}

#[cfg(test)]
mod tests {
    use super::*;

    fn framing() -> Framing {
        Framing { win: 400, hop: 160 }
    }

    fn small_cfg(seed: u64) -> SimConfig {
        SimConfig {
            noise_bank_size: 6,
            noise_duration_s: 0.5,
            segments_per_utt: (2, 3),
            segment_frames: (4, 6),
            t60_range_s: (0.3, 0.4),
            seed,
            ..SimConfig::default()
        }
    }

    #[test]
    fn frame_count_formula() {
        assert_eq!(frame_count(400, framing()), 1);
        assert_eq!(frame_count(399, framing()), 0);
        assert_eq!(frame_count(400 + 160 * 7 + 5, framing()), 8);
    }

    #[test]
    fn labels_follow_segment_centers() {
        let segs = [(3u16, 400 + 160 * 2 - 160), (7u16, 160 * 3)];
        let len = segs.iter().map(|s| s.1).sum();
        let labels = frame_labels_for(&segs, len, framing());
        assert_eq!(labels.len(), frame_count(len, framing()));
        assert_eq!(labels, vec![3, 3, 3, 7, 7]);
    }

    #[test]
    fn drawn_segments_have_requested_frame_counts() {
        let cfg = small_cfg(2);
        let mut rng = seed::stream(0, "t", 0);
        for _ in 0..20 {
            let segs = draw_segments(&cfg, 5, framing(), &mut rng);
            let len: usize = segs.iter().map(|s| s.1).sum();
            let labels = frame_labels_for(&segs, len, framing());
            let pad = (400 - 160) / 2;
            let expected: usize = segs.iter().map(|s| s.1).sum::<usize>() - 2 * pad;
            assert_eq!(labels.len() * 160, expected);
            let runs = labels.chunk_by(|a, b| a == b).count();
            assert_eq!(runs, segs.len());
        }
    }

    #[test]
    fn same_seed_same_corpus() {
        let a = generate_corpus(&small_cfg(5), 3, 4, framing()).unwrap();
        let b = generate_corpus(&small_cfg(5), 3, 4, framing()).unwrap();
        assert_eq!(a, b);
        let c = generate_corpus(&small_cfg(6), 3, 4, framing()).unwrap();
        assert_ne!(a.records[0].noisy, c.records[0].noisy);
    }

    #[test]
    fn records_hold_invariants() {
        let corpus = generate_corpus(&small_cfg(9), 4, 5, framing()).unwrap();
        assert_eq!(corpus.records.len(), 4);
        for (rec, meta) in corpus.records.iter().zip(&corpus.meta) {
            assert_eq!(rec.clean.len(), rec.noisy.len());
            assert_eq!(rec.clean.sample_rate(), rec.noisy.sample_rate());
            assert_eq!(rec.frame_labels.len(), frame_count(rec.clean.len(), framing()));
            assert!(rec.frame_labels.iter().all(|&l| l < 5));
            assert!(rec.token_refs.windows(2).all(|w| w[0] != w[1]));
            assert!((1..=3).contains(&meta.noise_ids.len()));
            assert!((0.0..=30.0).contains(&meta.snr_db));
            assert!((0.3..0.4).contains(&meta.t60_s));
            assert!(rec.noisy.samples().iter().all(|s| s.abs() <= PEAK_LIMIT + 1e-12));
        }
    }

    #[test]
    fn empty_corpus() {
        let corpus = generate_corpus(&small_cfg(1), 0, 4, framing()).unwrap();
        assert!(corpus.records.is_empty());
        assert!(corpus.meta.is_empty());
        assert_eq!(corpus.noise_bank.len(), 6);
    }

    #[test]
    fn copy_zero_reproduces_noisy_side() {
        let cfg = small_cfg(3);
        let corpus = generate_corpus(&cfg, 2, 4, framing()).unwrap();
        let clean: Vec<_> = corpus
            .records
            .iter()
            .map(|r| (r.id.clone(), r.clean.clone()))
            .collect();
        let copy0 = generate_noisy_copy(&cfg, &clean, &corpus.noise_bank, 0).unwrap();
        let copy1 = generate_noisy_copy(&cfg, &clean, &corpus.noise_bank, 1).unwrap();
        for (i, rec) in corpus.records.iter().enumerate() {
            assert_eq!(copy0[i].0, rec.noisy);
            assert_ne!(copy1[i].0, rec.noisy);
            assert_eq!(copy1[i].1.id, format!("{}-c1", rec.id));
        }
    }

    #[test]
    fn rejects_bad_config() {
        let mut cfg = small_cfg(0);
        cfg.noises_per_utt = (0, 2);
        assert!(generate_corpus(&cfg, 1, 4, framing()).is_err());
        let mut cfg = small_cfg(0);
        cfg.noises_per_utt = (1, 7);
        assert!(generate_corpus(&cfg, 1, 4, framing()).is_err());
        let mut cfg = small_cfg(0);
        cfg.snr_range_db = (10.0, 5.0);
        assert!(generate_corpus(&cfg, 1, 4, framing()).is_err());
        assert!(generate_corpus(&small_cfg(0), 1, 1, framing()).is_err());
    }

    #[test]
    fn label_file_roundtrip_and_layout() {
        let dir = tempfile::tempdir().unwrap();
        let p = dir.path().join("a.lbl");
        write_labels(&p, &[1, 2, 513]).unwrap();
        let bytes = std::fs::read(&p).unwrap();
        assert_eq!(&bytes[..4], b"LBL1");
        assert_eq!(&bytes[4..8], &3u32.to_le_bytes());
        assert_eq!(&bytes[12..14], &[1, 2]);
        assert_eq!(read_labels(&p).unwrap(), vec![1, 2, 513]);
        std::fs::write(&p, b"LBL2\0\0\0\0").unwrap();
        assert!(matches!(read_labels(&p), Err(SimError::BadLabels(_))));
    }

    #[test]
    fn class_voices_are_distinct() {
        let v: Vec<Voice> = (0..40).map(class_voice).collect();
        for i in 0..40 {
            assert!(v[i].f0 >= 90.0 && v[i].f0 < 270.0);
            assert!(v[i].formants[0] < v[i].formants[1]);
            for j in 0..i {
                let close = (v[i].f0 / v[j].f0).ln().abs() < 0.03
                    && (v[i].formants[0] / v[j].formants[0]).ln().abs() < 0.1
                    && (v[i].formants[1] / v[j].formants[1]).ln().abs() < 0.1;
                assert!(!close, "classes {i} and {j} nearly coincide");
            }
        }
    }
}
