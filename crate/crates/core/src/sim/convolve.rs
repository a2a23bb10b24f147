use rustfft::{num_complex::Complex, FftPlanner};

use super::{ImpulseResponse, SimError};
use crate::audio::AudioBuffer;

// Above this many multiply-adds the FFT path is used.
const DIRECT_LIMIT: usize = 1 << 16;

/// Linear convolution of `signal` with `ir`, truncated to the input length.
pub fn convolve(signal: &AudioBuffer, ir: &ImpulseResponse) -> Result<AudioBuffer, SimError> {
    if signal.sample_rate() != ir.sample_rate() {
        return Err(SimError::SampleRateMismatch {
            expected: signal.sample_rate(),
            found: ir.sample_rate(),
        });
    }
    let out = convolve_truncated(signal.samples(), ir.taps());
    Ok(AudioBuffer::new(out, signal.sample_rate())?)
}

pub(crate) fn convolve_truncated(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    // Taps past the input length never reach the truncated output.
    let h = &h[..h.len().min(n)];
    if n == 0 || h.is_empty() {
        return vec![0.0; n];
    }
    if n.saturating_mul(h.len()) <= DIRECT_LIMIT {
        direct(x, h)
    } else {
        via_fft(x, h)
    }
}

fn direct(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let mut y = vec![0.0; n];
    for (j, &hj) in h.iter().enumerate() {
        if hj == 0.0 {
            continue;
        }
        for (yi, &xi) in y[j..].iter_mut().zip(x) {
            *yi += hj * xi;
        }
    }
    y
}

fn via_fft(x: &[f64], h: &[f64]) -> Vec<f64> {
    let n = x.len();
    let size = (n + h.len() - 1).next_power_of_two();
    let mut planner = FftPlanner::<f64>::new();
    let fwd = planner.plan_fft_forward(size);
    let inv = planner.plan_fft_inverse(size);

    let mut a: Vec<Complex<f64>> = x.iter().map(|&v| Complex::new(v, 0.0)).collect();
    a.resize(size, Complex::new(0.0, 0.0));
    let mut b: Vec<Complex<f64>> = h.iter().map(|&v| Complex::new(v, 0.0)).collect();
    b.resize(size, Complex::new(0.0, 0.0));
    fwd.process(&mut a);
    fwd.process(&mut b);
    for (ai, bi) in a.iter_mut().zip(&b) {
        *ai *= bi;
    }
    inv.process(&mut a);
    let scale = 1.0 / size as f64;
    a[..n].iter().map(|c| c.re * scale).collect()
}
