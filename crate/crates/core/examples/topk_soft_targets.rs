//! Temperature softmax, top-k selection with its emphasis factor, the
//! constant-floor variant, and the STGT stream size against dense storage.

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use tsda::codec::{
    decode_stream, default_floor_constant, softmax_t, suppressed_mass_bound, topk_posterior, topk_posterior_c,
    CodecParams, LogitVector, SoftTargetStream,
};

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let z = LogitVector::new(vec![3.0, 1.0, 2.0, -1.0, 0.5])?;
    for t in [1.0, 2.0, 5.0] {
        let p = softmax_t(&z, t)?;
        let (q, a) = topk_posterior(&z, 2, t)?;
        let c = default_floor_constant(&z, 2, t)?;
        let qc = topk_posterior_c(&z, 2, t, c)?;
        let gap = q.probs().iter().zip(qc.probs()).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max);
        println!(
            "T={t}: p={:.3?} q'={:.3?} A={a:.4} |q'-q~'|={gap:.1e} bound={:.1e}",
            p.probs(),
            q.probs(),
            suppressed_mass_bound(&z, 2, t, c)
        );
    }

    let (n_classes, k) = (3010, 20);
    let mut rng = ChaCha8Rng::seed_from_u64(7);
    let utts: Vec<(String, Array2<f64>)> = (0..4)
        .map(|u| {
            let frames = rng.random_range(50..150);
            (format!("utt{u}"), Array2::from_shape_simple_fn((frames, n_classes), || rng.random_range(-8.0..8.0)))
        })
        .collect();
    let stream = SoftTargetStream::from_logits(n_classes, &CodecParams::new(k, 2.0), &utts)?;
    let bytes = stream.to_bytes()?;
    let dense = stream.n_frames() * n_classes * 4;
    println!(
        "{} frames: {} bytes sparse vs {dense} dense f32 (ratio {:.4}), {} bytes per frame",
        stream.n_frames(),
        bytes.len(),
        bytes.len() as f64 / dense as f64,
        stream.frame_payload_bytes()
    );
    let (params, back) = decode_stream(bytes.as_slice())?;
    assert_eq!(back, stream);
    println!("decoded k={} T={}", params.k, params.temperature);
    Ok(())
}
