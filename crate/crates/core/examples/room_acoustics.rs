//! Simulates a room response, checks its decay time and mixes noise at a
//! target SNR. Writes `dry.wav`, `wet.wav` and `noisy.wav` to a temp dir.

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use tsda::audio::AudioBuffer;
use tsda::sim::{
    convolve, derive_reflection_coeff, measured_snr_db, mix_at_snr, schroeder_t60, simulate_rir,
    synthesize_noise, NoiseKind, RoomSpec,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let room = RoomSpec::new([6.0, 5.0, 3.0], [1.5, 2.0, 1.6], [4.2, 3.1, 1.4], 0.5);
    let beta = derive_reflection_coeff(&room)?;
    let ir = simulate_rir(&room, beta, fs)?;
    println!(
        "beta {beta:.4}, order {}, {} taps, measured T60 {:.3} s",
        room.max_reflection_order,
        ir.len(),
        schroeder_t60(&ir).unwrap_or(f64::NAN)
    );

    let tone: Vec<f64> = (0..fs as usize)
        .map(|n| 0.1 * (2.0 * std::f64::consts::PI * 220.0 * n as f64 / fs as f64).sin())
        .collect();
    let dry = AudioBuffer::new(tone, fs)?;
    let wet = convolve(&dry, &ir)?;

    let mut rng = ChaCha8Rng::seed_from_u64(1);
    let noise = AudioBuffer::new(synthesize_noise(NoiseKind::Broadband, fs as usize, fs as f64, &mut rng), fs)?;
    let noisy = mix_at_snr(&wet, &[noise], 10.0)?;
    println!("requested 10 dB, measured {:.12} dB", measured_snr_db(&wet, &noisy));

    let dir = std::env::temp_dir().join("tsda-room-acoustics");
    std::fs::create_dir_all(&dir)?;
    dry.write_wav(dir.join("dry.wav"))?;
    wet.write_wav(dir.join("wet.wav"))?;
    noisy.write_wav(dir.join("noisy.wav"))?;
    println!("wrote {}", dir.display());
    Ok(())
}
