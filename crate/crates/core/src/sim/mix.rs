use super::SimError;
use crate::audio::{mean_power, AudioBuffer};

/// Repeats or truncates `noise` so it spans exactly `len` samples.
pub fn fit_length(noise: &[f64], len: usize) -> Vec<f64> {
    if noise.is_empty() {
        return vec![0.0; len];
    }
    noise.iter().cycle().take(len).copied().collect()
}

/// Gain that brings `noise_power` to `clean_power / 10^(snr_db / 10)`.
pub fn snr_gain(clean_power: f64, noise_power: f64, snr_db: f64) -> f64 {
    (clean_power / (noise_power * 10f64.powf(snr_db / 10.0))).sqrt()
}

/// Sums `noises` (each looped or truncated to the clean length), scales the
/// sum so the mixture has the requested SNR, and adds it to `clean`.
///
/// Power is the mean squared amplitude over the whole utterance.
pub fn mix_at_snr(
    clean: &AudioBuffer,
    noises: &[AudioBuffer],
    snr_db: f64,
) -> Result<AudioBuffer, SimError> {
    if noises.is_empty() {
        return Err(SimError::NoNoise);
    }
    if !snr_db.is_finite() {
        return Err(SimError::InvalidConfig(format!("snr_db must be finite, got {snr_db}")));
    }
    let fs = clean.sample_rate();
    let len = clean.len();
    let clean_power = clean.power();
    if !(clean_power > 0.0) {
        return Err(SimError::ZeroPower("clean".into()));
    }
    let mut sum = vec![0.0; len];
    for (i, noise) in noises.iter().enumerate() {
        if noise.sample_rate() != fs {
            return Err(SimError::SampleRateMismatch {
                expected: fs,
                found: noise.sample_rate(),
            });
        }
        let fitted = fit_length(noise.samples(), len);
        if !(mean_power(&fitted) > 0.0) {
            return Err(SimError::ZeroPower(format!("noise {i}")));
        }
        for (s, n) in sum.iter_mut().zip(&fitted) {
            *s += n;
        }
    }
    let noise_power = mean_power(&sum);
    if !(noise_power > 0.0) {
        return Err(SimError::ZeroPower("noise sum".into()));
    }
    let g = snr_gain(clean_power, noise_power, snr_db);
    let out = clean
        .samples()
        .iter()
        .zip(&sum)
        .map(|(c, n)| c + g * n)
        .collect();
    Ok(AudioBuffer::new(out, fs)?)
}

/// SNR in dB of `mixture` taken as `clean` plus additive noise.
pub fn measured_snr_db(clean: &AudioBuffer, mixture: &AudioBuffer) -> f64 {
    let noise: Vec<f64> = mixture
        .samples()
        .iter()
        .zip(clean.samples())
        .map(|(m, c)| m - c)
        .collect();
    10.0 * (clean.power() / mean_power(&noise)).log10()
}
