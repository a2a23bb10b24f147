//! Log mel filterbank energies of a chirp, written in the LFBE file format.

use tsda::audio::AudioBuffer;
use tsda::features::{FeatureConfig, FeatureMatrix};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let fs = 16_000;
    let n = fs as usize / 2;
    // 200 Hz -> 6 kHz linear chirp
    let samples: Vec<f64> = (0..n)
        .map(|i| {
            let t = i as f64 / fs as f64;
            0.2 * (2.0 * std::f64::consts::PI * (200.0 * t + 5800.0 * t * t)).sin()
        })
        .collect();
    let audio = AudioBuffer::new(samples, fs)?;

    let cfg = FeatureConfig::default();
    let bank = cfg.bank(fs)?;
    let feats = cfg.extract(&audio, &bank)?;
    println!("{} frames x {} bands", feats.n_frames(), feats.dim());
    for t in (0..feats.n_frames()).step_by(10) {
        let row = feats.frames.row(t);
        let peak = (0..row.len()).max_by(|&a, &b| row[a].total_cmp(&row[b])).unwrap();
        println!("frame {t:3}: loudest band {peak:2} ({:.0} Hz)", bank.centers_hz()[peak]);
    }

    let path = std::env::temp_dir().join("tsda-chirp.lfbe");
    feats.write(&path)?;
    let back = FeatureMatrix::read(&path, cfg.hop_s, cfg.win_s)?;
    println!("roundtrip max error {:.2e}", (&back.frames - &feats.frames).fold(0.0f64, |m, v| m.max(v.abs())));
    Ok(())
}
