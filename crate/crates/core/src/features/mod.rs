//! Log mel-filterbank energy (LFBE) front end and the on-disk feature format.

use std::fs::File;
use std::io::{BufReader, BufWriter, Read, Write};
use std::path::Path;

use ndarray::{Array2, ArrayView1};
use rustfft::{num_complex::Complex, FftPlanner};
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::audio::AudioBuffer;

pub const LOG_FLOOR: f64 = 1e-10;
const FILE_MAGIC: &[u8; 4] = b"LFBE";
const FILE_VERSION: u16 = 1;

#[derive(Error, Debug)]
pub enum FeatureError {
    #[error("invalid analysis parameters: {0}")]
    InvalidParams(String),
    #[error("invalid mel band edges: fmin {fmin} Hz, fmax {fmax} Hz at fs {fs} Hz")]
    InvalidBand { fmin: f64, fmax: f64, fs: u32 },
    #[error("filterbank expects {expected} spectrum bins, got {found}")]
    BinMismatch { expected: usize, found: usize },
    #[error("bad feature file: {0}")]
    BadFile(String),
    #[error("i/o: {0}")]
    Io(#[from] std::io::Error),
}

/// Front-end settings. Defaults: 25 ms Hann window, 10 ms hop, 512-point FFT,
/// 64 mel bands between 20 Hz and 7600 Hz.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct FeatureConfig {
    pub win_s: f64,
    pub hop_s: f64,
    pub n_fft: usize,
    pub n_mels: usize,
    pub fmin: f64,
    pub fmax: f64,
}

impl Default for FeatureConfig {
    fn default() -> Self {
        Self {
            win_s: 0.025,
            hop_s: 0.010,
            n_fft: 512,
            n_mels: 64,
            fmin: 20.0,
            fmax: 7600.0,
        }
    }
}

impl FeatureConfig {
    pub fn framing(&self, sample_rate: u32) -> crate::sim::Framing {
        crate::sim::Framing::from_seconds(self.win_s, self.hop_s, sample_rate)
    }

    pub fn bank(&self, sample_rate: u32) -> Result<MelBank, FeatureError> {
        mel_bank(sample_rate, self.n_fft, self.n_mels, self.fmin, self.fmax)
    }

    pub fn extract(&self, signal: &AudioBuffer, bank: &MelBank) -> Result<FeatureMatrix, FeatureError> {
        lfbe(signal, bank, self.win_s, self.hop_s, self.n_fft)
    }
}

/// `2595 log10(1 + f / 700)`.
pub fn hz_to_mel(f: f64) -> f64 {
    2595.0 * (1.0 + f / 700.0).log10()
}

pub fn mel_to_hz(m: f64) -> f64 {
    700.0 * (10f64.powf(m / 2595.0) - 1.0)
}

/// Periodic Hann window.
pub fn hann(n: usize) -> Vec<f64> {
    (0..n)
        .map(|i| 0.5 - 0.5 * (2.0 * std::f64::consts::PI * i as f64 / n as f64).cos())
        .collect()
}

fn window_params(fs: u32, win_s: f64, hop_s: f64, n_fft: usize) -> Result<(usize, usize), FeatureError> {
    if !(hop_s > 0.0) || !(win_s > 0.0) {
        return Err(FeatureError::InvalidParams(format!(
            "window {win_s} s and hop {hop_s} s must be positive"
        )));
    }
    let win = (win_s * fs as f64).round() as usize;
    let hop = (hop_s * fs as f64).round() as usize;
    if win == 0 || hop == 0 {
        return Err(FeatureError::InvalidParams("window or hop rounds to zero samples".into()));
    }
    if win > n_fft {
        return Err(FeatureError::InvalidParams(format!(
            "window of {win} samples exceeds n_fft {n_fft}"
        )));
    }
    Ok((win, hop))
}

/// Hann-windowed power spectra, `n_fft / 2 + 1` bins per frame.
/// Frame count is `1 + floor((len - win) / hop)`, or 0 for short signals.
pub fn stft_power(
    signal: &AudioBuffer,
    win_s: f64,
    hop_s: f64,
    n_fft: usize,
) -> Result<Array2<f64>, FeatureError> {
    let (win, hop) = window_params(signal.sample_rate(), win_s, hop_s, n_fft)?;
    let x = signal.samples();
    let n_frames = if x.len() < win { 0 } else { 1 + (x.len() - win) / hop };
    let n_bins = n_fft / 2 + 1;
    let mut out = Array2::zeros((n_frames, n_bins));
    if n_frames == 0 {
        return Ok(out);
    }
    let window = hann(win);
    let fft = FftPlanner::<f64>::new().plan_fft_forward(n_fft);
    let mut buf = vec![Complex::new(0.0, 0.0); n_fft];
    let mut scratch = vec![Complex::new(0.0, 0.0); fft.get_inplace_scratch_len()];
    for (f, mut row) in out.rows_mut().into_iter().enumerate() {
        let frame = &x[f * hop..f * hop + win];
        for (b, (s, w)) in buf.iter_mut().zip(frame.iter().zip(&window)) {
            *b = Complex::new(s * w, 0.0);
        }
        buf[win..].iter_mut().for_each(|b| *b = Complex::new(0.0, 0.0));
        fft.process_with_scratch(&mut buf, &mut scratch);
        for (r, c) in row.iter_mut().zip(&buf[..n_bins]) {
            *r = c.norm_sqr();
        }
    }
    Ok(out)
}

/// Triangular filters with centers uniformly spaced on the mel scale.
#[derive(Debug, Clone, PartialEq)]
pub struct MelBank {
    filters: Array2<f64>,
    // Non-zero column span of each row.
    spans: Vec<(usize, usize)>,
    centers_hz: Vec<f64>,
    pub fmin: f64,
    pub fmax: f64,
}

impl MelBank {
    pub fn filters(&self) -> &Array2<f64> {
        &self.filters
    }

    pub fn n_mels(&self) -> usize {
        self.filters.nrows()
    }

    pub fn n_bins(&self) -> usize {
        self.filters.ncols()
    }

    pub fn centers_hz(&self) -> &[f64] {
        &self.centers_hz
    }

    /// Filterbank energies for one power spectrum.
    pub fn apply(&self, power: ArrayView1<'_, f64>) -> Result<Vec<f64>, FeatureError> {
        if power.len() != self.n_bins() {
            return Err(FeatureError::BinMismatch {
                expected: self.n_bins(),
                found: power.len(),
            });
        }
        Ok(self
            .spans
            .iter()
            .enumerate()
            .map(|(m, &(lo, hi))| {
                (lo..hi).map(|b| self.filters[[m, b]] * power[b]).sum()
            })
            .collect())
    }
}

pub fn mel_bank(
    fs: u32,
    n_fft: usize,
    n_mels: usize,
    fmin: f64,
    fmax: f64,
) -> Result<MelBank, FeatureError> {
    if !(fmin >= 0.0 && fmin < fmax && fmax <= fs as f64 / 2.0) {
        return Err(FeatureError::InvalidBand { fmin, fmax, fs });
    }
    if n_mels == 0 || n_fft < 2 {
        return Err(FeatureError::InvalidParams(format!(
            "n_mels {n_mels} and n_fft {n_fft} must be positive"
        )));
    }
    let n_bins = n_fft / 2 + 1;
    let (mlo, mhi) = (hz_to_mel(fmin), hz_to_mel(fmax));
    let edges: Vec<f64> = (0..n_mels + 2)
        .map(|i| mel_to_hz(mlo + (mhi - mlo) * i as f64 / (n_mels + 1) as f64))
        .collect();
    let bin_hz = fs as f64 / n_fft as f64;
    let mut filters = Array2::zeros((n_mels, n_bins));
    let mut spans = Vec::with_capacity(n_mels);
    for m in 0..n_mels {
        let (l, c, r) = (edges[m], edges[m + 1], edges[m + 2]);
        for b in 0..n_bins {
            let f = b as f64 * bin_hz;
            let w = ((f - l) / (c - l)).min((r - f) / (r - c));
            if w > 0.0 {
                filters[[m, b]] = w;
            }
        }
        // Narrow low-frequency triangles can fall between bins.
        if filters.row(m).iter().all(|&w| w == 0.0) {
            let nearest = ((c / bin_hz).round() as usize).min(n_bins - 1);
            filters[[m, nearest]] = 1.0;
        }
        let row = filters.row(m);
        let lo = row.iter().position(|&w| w > 0.0).unwrap_or(0);
        let hi = row.iter().rposition(|&w| w > 0.0).map_or(0, |p| p + 1);
        spans.push((lo, hi));
    }
    Ok(MelBank {
        filters,
        spans,
        centers_hz: edges[1..=n_mels].to_vec(),
        fmin,
        fmax,
    })
}

/// One LFBE vector per analysis frame.
#[derive(Debug, Clone, PartialEq)]
pub struct FeatureMatrix {
    /// frames x dims
    pub frames: Array2<f64>,
    pub frame_shift_s: f64,
    pub frame_length_s: f64,
}

impl FeatureMatrix {
    pub fn n_frames(&self) -> usize {
        self.frames.nrows()
    }

    pub fn dim(&self) -> usize {
        self.frames.ncols()
    }

    /// Feature file: magic "LFBE", u16 version, u16 dims, u32 frames,
    /// row-major f32 little-endian.
    pub fn to_bytes(&self) -> Vec<u8> {
        let mut out = Vec::with_capacity(12 + 4 * self.frames.len());
        out.extend_from_slice(FILE_MAGIC);
        out.extend_from_slice(&FILE_VERSION.to_le_bytes());
        out.extend_from_slice(&(self.dim() as u16).to_le_bytes());
        out.extend_from_slice(&(self.n_frames() as u32).to_le_bytes());
        for v in self.frames.iter() {
            out.extend_from_slice(&(*v as f32).to_le_bytes());
        }
        out
    }

    /// Parses a feature file. Frame timing is not stored and must be supplied.
    pub fn from_bytes(bytes: &[u8], frame_shift_s: f64, frame_length_s: f64) -> Result<Self, FeatureError> {
        if bytes.len() < 12 || &bytes[..4] != FILE_MAGIC {
            return Err(FeatureError::BadFile("missing LFBE magic".into()));
        }
        let version = u16::from_le_bytes([bytes[4], bytes[5]]);
        if version != FILE_VERSION {
            return Err(FeatureError::BadFile(format!("unsupported version {version}")));
        }
        let dims = u16::from_le_bytes([bytes[6], bytes[7]]) as usize;
        let n = u32::from_le_bytes(bytes[8..12].try_into().unwrap()) as usize;
        let payload = &bytes[12..];
        if payload.len() != 4 * dims * n {
            return Err(FeatureError::BadFile(format!(
                "expected {} payload bytes for {n} x {dims}, found {}",
                4 * dims * n,
                payload.len()
            )));
        }
        let data: Vec<f64> = payload
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        let frames = Array2::from_shape_vec((n, dims), data)
            .map_err(|e| FeatureError::BadFile(e.to_string()))?;
        Ok(Self {
            frames,
            frame_shift_s,
            frame_length_s,
        })
    }

    pub fn write(&self, path: impl AsRef<Path>) -> Result<(), FeatureError> {
        let mut w = BufWriter::new(File::create(path)?);
        w.write_all(&self.to_bytes())?;
        w.flush()?;
        Ok(())
    }

    pub fn read(path: impl AsRef<Path>, frame_shift_s: f64, frame_length_s: f64) -> Result<Self, FeatureError> {
        let mut bytes = Vec::new();
        BufReader::new(File::open(path)?).read_to_end(&mut bytes)?;
        Self::from_bytes(&bytes, frame_shift_s, frame_length_s)
    }
}

/// `log(max(filterbank . power, 1e-10))` per frame; no frame stacking.
pub fn lfbe(
    signal: &AudioBuffer,
    bank: &MelBank,
    win_s: f64,
    hop_s: f64,
    n_fft: usize,
) -> Result<FeatureMatrix, FeatureError> {
    if bank.n_bins() != n_fft / 2 + 1 {
        return Err(FeatureError::BinMismatch {
            expected: bank.n_bins(),
            found: n_fft / 2 + 1,
        });
    }
    let power = stft_power(signal, win_s, hop_s, n_fft)?;
    let mut frames = Array2::zeros((power.nrows(), bank.n_mels()));
    for (spec, mut out) in power.rows().into_iter().zip(frames.rows_mut()) {
        for (o, e) in out.iter_mut().zip(bank.apply(spec)?) {
            *o = e.max(LOG_FLOOR).ln();
        }
    }
    Ok(FeatureMatrix {
        frames,
        frame_shift_s: hop_s,
        frame_length_s: win_s,
    })
}

/// Per-utterance mean and variance normalization of each feature dimension.
/// Dimensions with a standard deviation below `1e-8` are only centered.
pub fn cmvn(frames: &Array2<f64>) -> Array2<f64> {
    let n = frames.nrows();
    if n == 0 {
        return frames.clone();
    }
    let mean = frames.mean_axis(ndarray::Axis(0)).expect("non-empty");
    let mut out = frames - &mean;
    let sd = out
        .map_axis(ndarray::Axis(0), |c| (c.iter().map(|v| v * v).sum::<f64>() / n as f64).sqrt());
    for mut row in out.rows_mut() {
        for (v, s) in row.iter_mut().zip(sd.iter()) {
            if *s > 1e-8 {
                *v /= s;
            }
        }
    }
    out
}
