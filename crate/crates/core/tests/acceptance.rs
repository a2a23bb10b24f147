//! Acceptance run: one PASS/FAIL line per criterion.
//!
//! `ACCEPTANCE_ONLY=1,3,5` restricts the run; `ACCEPTANCE_STRICT=1` makes any
//! FAIL a non-zero exit.

use std::collections::BTreeMap;
use std::panic::{catch_unwind, AssertUnwindSafe};
use std::path::Path;
use std::time::Instant;

use ndarray::Array2;
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use sha2::{Digest, Sha256};

use tsda::audio::AudioBuffer;
use tsda::codec::{
    decode_stream, default_floor_constant, select_topk, suppressed_mass_bound, topk_posterior,
    topk_posterior_c, CodecError, CodecParams, LogitVector, SoftTargetStream, SparseFrame,
};
use tsda::net::{backward, forward, forward_cached, hard_ce_loss, soft_ce_loss, ArchConfig, NetParams};
use tsda::pipeline::{
    emit_grid, emit_report, emit_size, read_grid_csv, read_size_csv, read_tables_csv, run_experiment,
    sweep_size, sweep_tk, t1_flatness, Cache, ExperimentConfig, RunReport,
};
use tsda::sim::{
    derive_reflection_coeff, image_sources, measured_snr_db, mix_at_snr, schroeder_t60, simulate_rir,
    ImpulseResponse, RoomSpec,
};

struct Verdict {
    pass: bool,
    detail: String,
}

fn verdict(pass: bool, detail: impl Into<String>) -> Verdict {
    Verdict {
        pass,
        detail: detail.into(),
    }
}

fn random_logits(rng: &mut ChaCha8Rng, n: usize) -> Vec<f64> {
    let scale = [0.5, 3.0, 15.0][rng.random_range(0..3)];
    let normal = Normal::new(0.0, scale).unwrap();
    let quantize = rng.random_bool(0.2);
    (0..n)
        .map(|_| {
            let v: f64 = normal.sample(rng);
            if quantize {
                v.round()
            } else {
                v
            }
        })
        .collect()
}

/// 1000 (logits, k, T) cases over the criterion grid; k is clamped to N.
fn codec_cases() -> Vec<(Vec<f64>, usize, f64)> {
    let mut rng = ChaCha8Rng::seed_from_u64(1001);
    (0..1000)
        .map(|_| {
            let n = [8, 300, 3010][rng.random_range(0..3)];
            let t = [0.5, 1.0, 2.0, 5.0][rng.random_range(0..4)];
            let k = [1, 5, 20, n][rng.random_range(0..4)].min(n);
            (random_logits(&mut rng, n), k, t)
        })
        .collect()
}

/// Dense softmax, zero everything outside the top k, renormalize.
fn oracle_topk(z: &[f64], k: usize, t: f64) -> Vec<f64> {
    let m = z.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
    let e: Vec<f64> = z.iter().map(|v| ((v - m) / t).exp()).collect();
    let total: f64 = e.iter().sum();
    let p: Vec<f64> = e.iter().map(|v| v / total).collect();
    let mut order: Vec<usize> = (0..z.len()).collect();
    order.sort_by(|&a, &b| z[b].partial_cmp(&z[a]).unwrap().then(a.cmp(&b)));
    let mut masked = vec![0.0; z.len()];
    for &i in &order[..k] {
        masked[i] = p[i];
    }
    let s: f64 = masked.iter().sum();
    masked.iter().map(|v| v / s).collect()
}

fn max_abs_diff(a: &[f64], b: &[f64]) -> f64 {
    a.iter().zip(b).map(|(x, y)| (x - y).abs()).fold(0.0, f64::max)
}

fn criterion_1() -> Verdict {
    let cases = codec_cases();
    let start = Instant::now();
    let mut worst: f64 = 0.0;
    for (z, k, t) in &cases {
        let (q, _) = topk_posterior(&LogitVector::new(z.clone()).unwrap(), *k, *t).unwrap();
        worst = worst.max(max_abs_diff(q.probs(), &oracle_topk(z, *k, *t)));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst <= 1e-12 && secs < 10.0,
        format!("codec oracle: {} vectors, max abs err {worst:.2e}, {secs:.2}s", cases.len()),
    )
}

fn criterion_2() -> Verdict {
    let mut worst: f64 = 0.0;
    let mut bound_ok = true;
    let mut tight = 0usize;
    for (i, (z, k, t)) in codec_cases().into_iter().enumerate() {
        let lv = LogitVector::new(z.clone()).unwrap();
        let (q, _) = topk_posterior(&lv, k, t).unwrap();
        let c = default_floor_constant(&lv, k, t).unwrap();
        let qc = topk_posterior_c(&lv, k, t, c).unwrap();
        worst = worst.max(max_abs_diff(q.probs(), qc.probs()));

        // a floor close to the selection, where the bound is far from vacuous
        let sel = select_topk(&lv, k).unwrap();
        let near = z[*sel.last().unwrap()] - [0.0, 1.0, 3.0][i % 3] * t;
        for c in [c, near] {
            let qc = topk_posterior_c(&lv, k, t, c).unwrap();
            let suppressed: f64 = (0..z.len())
                .filter(|j| !sel.contains(j))
                .map(|j| qc.probs()[j])
                .sum();
            let bound = suppressed_mass_bound(&lv, k, t, c);
            let diff = max_abs_diff(q.probs(), qc.probs());
            let slack = 1e-15 + 1e-12 * bound;
            bound_ok &= suppressed <= bound + slack && diff <= bound + slack;
            if k < z.len() && suppressed > 1e-6 {
                tight += 1;
            }
        }
    }
    verdict(
        worst < 1e-9 && bound_ok,
        format!(
            "constant floor vs top-k: max abs diff {worst:.2e}, suppressed-mass bound held {} ({tight} non-trivial cases)",
            if bound_ok { "everywhere" } else { "NOT everywhere" }
        ),
    )
}

fn random_stream(rng: &mut ChaCha8Rng) -> SoftTargetStream {
    let n = [3, 40, 3010][rng.random_range(0..3)];
    let k = [1, 2, 20, n][rng.random_range(0..4)].min(n);
    let n_utts = rng.random_range(0..5);
    let utts: Vec<(String, Array2<f64>)> = (0..n_utts)
        .map(|u| {
            let frames = [0, 1, rng.random_range(2..7)][rng.random_range(0..3)];
            let id = if u % 2 == 0 { format!("utt{u:04}") } else { format!("é-{u}") };
            let mut m = Array2::zeros((frames, n));
            for mut row in m.rows_mut() {
                let z = random_logits(rng, n);
                row.iter_mut().zip(z).for_each(|(r, v)| *r = v);
            }
            (id, m)
        })
        .collect();
    SoftTargetStream::from_logits(n, &CodecParams::new(k, [1.0, 2.0, 5.0][rng.random_range(0..3)]), &utts)
        .unwrap()
}

fn corruption_cases() -> Vec<(&'static str, Vec<u8>, fn(&CodecError) -> bool)> {
    // one utterance "u", N = 4, k = 2, one frame: (1, 3.0), (2, 1.0)
    let frame = SparseFrame::from_entries(vec![(1, 3.0), (2, 1.0)]).unwrap();
    let stream = SoftTargetStream {
        n_classes: 4,
        k: 2,
        temperature: 2.0,
        utterances: vec![tsda::codec::SoftTargetUtterance {
            id: "u".into(),
            frames: vec![frame],
        }],
    };
    let good = stream.to_bytes().unwrap();
    let entry0 = 20 + 2 + 1 + 4;
    let entry1 = entry0 + 6;
    let patch = |f: &dyn Fn(&mut Vec<u8>)| {
        let mut b = good.clone();
        f(&mut b);
        b
    };
    vec![
        ("bad magic", patch(&|b| b[0] = b'X'), |e| matches!(e, CodecError::BadMagic(_))),
        ("version", patch(&|b| b[4] = 9), |e| matches!(e, CodecError::UnsupportedVersion(9))),
        ("k = 0", patch(&|b| b[10..12].copy_from_slice(&0u16.to_le_bytes())), |e| {
            matches!(e, CodecError::BadK { k: 0, .. })
        }),
        ("header cut", good[..11].to_vec(), |e| matches!(e, CodecError::Truncated { .. })),
        ("frame cut", good[..good.len() - 1].to_vec(), |e| {
            matches!(e, CodecError::Truncated { frame: Some(0), .. })
        }),
        ("trailing", patch(&|b| b.push(0)), |e| matches!(e, CodecError::TrailingBytes(1))),
        (
            "unsorted",
            patch(&|b| {
                let lo = 1.0f32.to_le_bytes();
                let hi = 3.0f32.to_le_bytes();
                b[entry0 + 2..entry0 + 6].copy_from_slice(&lo);
                b[entry1 + 2..entry1 + 6].copy_from_slice(&hi);
            }),
            |e| matches!(e, CodecError::Unsorted { .. }),
        ),
        ("duplicate", patch(&|b| b[entry1..entry1 + 2].copy_from_slice(&1u16.to_le_bytes())), |e| {
            matches!(e, CodecError::DuplicateIndex { index: 1, .. })
        }),
        ("index range", patch(&|b| b[entry1..entry1 + 2].copy_from_slice(&4u16.to_le_bytes())), |e| {
            matches!(e, CodecError::IndexOutOfRange { index: 4, .. })
        }),
        ("bad id", patch(&|b| b[22] = 0xff), |e| matches!(e, CodecError::BadId(_))),
    ]
}

fn criterion_3() -> Verdict {
    let mut rng = ChaCha8Rng::seed_from_u64(303);
    let mut roundtrips = 0;
    let mut exact = true;
    let mut payload_ok = true;
    for _ in 0..200 {
        let s = random_stream(&mut rng);
        let bytes = s.to_bytes().unwrap();
        let (params, back) = decode_stream(bytes.as_slice()).unwrap();
        exact &= back == s && back.to_bytes().unwrap() == bytes && params.k == s.k as usize;
        let header: usize = 20;
        let expected: usize = header
            + s.utterances
                .iter()
                .map(|u| 2 + u.id.len() + 4 + u.frames.len() * 6 * s.k as usize)
                .sum::<usize>();
        payload_ok &= s.frame_payload_bytes() == 6 * s.k as usize && bytes.len() == expected;
        roundtrips += 1;
    }

    let mut bad = Vec::new();
    let cases = corruption_cases();
    for (name, bytes, want) in &cases {
        match decode_stream(bytes.as_slice()) {
            Err(e) if want(&e) => {}
            other => bad.push(format!("{name}: {:?}", other.err())),
        }
    }

    let big = SoftTargetStream::from_logits(
        3010,
        &CodecParams::new(20, 1.0),
        &[("x".into(), Array2::from_shape_fn((10, 3010), |(f, c)| ((f * 31 + c * 17) % 97) as f64))],
    )
    .unwrap();
    let ratio = big.frame_payload_bytes() as f64 / (3010.0 * 4.0);
    verdict(
        exact && payload_ok && bad.is_empty() && ratio < 0.01,
        format!(
            "STGT: {roundtrips} roundtrips bit-exact={exact}, 6k payload={payload_ok}, {}/{} corruptions typed{}, N=3010 k=20 ratio {ratio:.5}",
            cases.len() - bad.len(),
            cases.len(),
            if bad.is_empty() { String::new() } else { format!(" [{}]", bad.join("; ")) }
        ),
    )
}

fn worst_gradient_error(params: &NetParams, feats: &Array2<f64>, loss: &dyn Fn(&NetParams) -> (f64, Array2<f64>)) -> f64 {
    let (_, g) = loss(params);
    let grads = backward(params, &forward_cached(params, feats).unwrap(), &g).unwrap();
    let eps = 1e-5;
    let mut worst: f64 = 0.0;
    for ti in 0..params.tensors().len() {
        for j in 0..params.tensors()[ti].len() {
            let mut plus = params.clone();
            plus.tensors_mut()[ti][j] += eps;
            let mut minus = params.clone();
            minus.tensors_mut()[ti][j] -= eps;
            let numeric = (loss(&plus).0 - loss(&minus).0) / (2.0 * eps);
            let analytic = grads.tensors()[ti][j];
            let rel = (analytic - numeric).abs() / analytic.abs().max(numeric.abs()).max(1e-6);
            worst = worst.max(rel);
        }
    }
    worst
}

fn criterion_4() -> Verdict {
    let start = Instant::now();
    let mut rng = ChaCha8Rng::seed_from_u64(404);
    let mut worst: f64 = 0.0;
    for _ in 0..20 {
        let recurrent = rng.random_bool(0.5);
        let arch = ArchConfig {
            feature_dim: rng.random_range(1..5),
            context: if recurrent { 0 } else { rng.random_range(0..3) },
            hidden: (0..rng.random_range(1..3)).map(|_| rng.random_range(2..6)).collect(),
            recurrent,
            n_classes: rng.random_range(2..7),
            label_delay: rng.random_range(0..3),
        };
        let mut params = NetParams::init(&arch, &mut rng).unwrap();
        for l in &mut params.layers {
            l.bias.mapv_inplace(|_| rng.random_range(-0.5..0.5));
        }
        let frames = rng.random_range(arch.label_delay + 1..arch.label_delay + 8);
        let feats = Array2::from_shape_simple_fn((frames, arch.feature_dim), || rng.random_range(-1.5..1.5));
        let labels: Vec<u16> = (0..frames).map(|_| rng.random_range(0..arch.n_classes) as u16).collect();
        let k = rng.random_range(1..=arch.n_classes);
        let t = [1.0, 2.0, 5.0][rng.random_range(0..3)];
        let targets: Vec<SparseFrame> = (0..frames)
            .map(|_| {
                let z: Vec<f64> = (0..arch.n_classes).map(|_| rng.random_range(-4.0..4.0)).collect();
                SparseFrame::from_logits(&z, k).unwrap()
            })
            .collect();

        let hard = |q: &NetParams| hard_ce_loss(&forward(q, &feats).unwrap(), &labels, q.label_delay).unwrap();
        let soft = |q: &NetParams| soft_ce_loss(&forward(q, &feats).unwrap(), &targets, t).unwrap();
        worst = worst.max(worst_gradient_error(&params, &feats, &hard));
        worst = worst.max(worst_gradient_error(&params, &feats, &soft));
    }
    let secs = start.elapsed().as_secs_f64();
    verdict(
        worst < 1e-4 && secs < 60.0,
        format!("gradient checks: 20 configs x (hard, soft), max rel err {worst:.2e}, {secs:.2}s"),
    )
}

/// First-order DC blocker, for the diagnostic only.
fn dc_blocked(ir: &ImpulseResponse) -> ImpulseResponse {
    let r = 1.0 - 2.0 * std::f64::consts::PI * 50.0 / ir.sample_rate() as f64;
    let (mut x1, mut y1) = (0.0, 0.0);
    let taps = ir
        .taps()
        .iter()
        .map(|&x| {
            let y = x - x1 + r * y1;
            x1 = x;
            y1 = y;
            y
        })
        .collect();
    ImpulseResponse::new(taps, ir.sample_rate()).unwrap()
}

fn brute_force_images(room: &RoomSpec) -> Vec<([u64; 3], u32)> {
    let r = room.max_reflection_order as i64;
    let mut out = Vec::new();
    let axis = |s: f64, l: f64| -> Vec<(f64, u32)> {
        let mut v = Vec::new();
        for n in -r - 1..=r + 1 {
            for q in 0..=1i64 {
                let order = ((n - q).abs() + n.abs()) as u32;
                let pos = if q == 0 { s + 2.0 * n as f64 * l } else { -s + 2.0 * n as f64 * l };
                v.push((pos, order));
            }
        }
        v
    };
    let xs = axis(room.source_pos[0], room.dims[0]);
    let ys = axis(room.source_pos[1], room.dims[1]);
    let zs = axis(room.source_pos[2], room.dims[2]);
    for &(x, ox) in &xs {
        for &(y, oy) in &ys {
            for &(z, oz) in &zs {
                if (ox + oy + oz) as i64 <= r {
                    out.push(([x.to_bits(), y.to_bits(), z.to_bits()], ox + oy + oz));
                }
            }
        }
    }
    out.sort();
    out
}

fn criterion_5() -> Verdict {
    let dims = [6.0, 5.0, 3.0];
    let (src, mic) = ([1.5, 2.0, 1.6], [4.2, 3.1, 1.4]);
    let mut t60_ok = true;
    let mut t60_report = Vec::new();
    for t60 in [0.3, 0.5, 0.9] {
        let room = RoomSpec::new(dims, src, mic, t60);
        let beta = derive_reflection_coeff(&room).unwrap();
        let ir = simulate_rir(&room, beta, 16000).unwrap();
        let got = schroeder_t60(&ir).unwrap_or(f64::NAN);
        let hp = schroeder_t60(&dc_blocked(&ir)).unwrap_or(f64::NAN);
        let ok = (got / t60 - 1.0).abs() <= 0.2;
        t60_ok &= ok;
        t60_report.push(format!(
            "{t60}->{got:.3} ({:+.0}%{}, dc-blocked {:+.0}%)",
            100.0 * (got / t60 - 1.0),
            if ok { "" } else { " out" },
            100.0 * (hp / t60 - 1.0)
        ));
    }

    let mut rng = ChaCha8Rng::seed_from_u64(505);
    let mut snr_err: f64 = 0.0;
    for snr in [-5.0, 0.0, 3.7, 10.0, 20.0, 35.0] {
        let len = rng.random_range(800..4000);
        let clean: Vec<f64> = (0..len).map(|i| (i as f64 * 0.07).sin() + rng.random_range(-0.1..0.1)).collect();
        let noises: Vec<AudioBuffer> = (0..rng.random_range(1..4))
            .map(|_| {
                let n = rng.random_range(100..5000);
                AudioBuffer::new((0..n).map(|_| rng.random_range(-1.0..1.0)).collect(), 16000).unwrap()
            })
            .collect();
        let clean = AudioBuffer::new(clean, 16000).unwrap();
        let mix = mix_at_snr(&clean, &noises, snr).unwrap();
        snr_err = snr_err.max((measured_snr_db(&clean, &mix) - snr).abs());
    }

    let mut images_ok = true;
    for order in 0..=2 {
        for (d, s) in [(dims, src), ([3.1, 4.7, 2.5], [0.3, 4.1, 1.9])] {
            let mut room = RoomSpec::new(d, s, mic.map(|v: f64| v.min(2.0)), 0.5);
            room.max_reflection_order = order;
            let mut got: Vec<([u64; 3], u32)> = image_sources(&room)
                .iter()
                .map(|im| (im.position.map(f64::to_bits), im.order))
                .collect();
            got.sort();
            images_ok &= got == brute_force_images(&room);
        }
    }

    verdict(
        t60_ok && snr_err <= 1e-9 && images_ok,
        format!(
            "acoustics: T60 {}; SNR max err {snr_err:.1e} dB; image sets order<=2 exact={images_ok}",
            t60_report.join(", ")
        ),
    )
}

fn count(flags: impl Iterator<Item = bool>) -> usize {
    flags.filter(|&b| b).count()
}

fn criterion_6(work: &Path) -> Verdict {
    let start = Instant::now();
    let cfg = ExperimentConfig::default();
    let cache = Cache::new(work.join("table"));
    let mut reports: Vec<RunReport> = Vec::new();
    for seed in 0..5 {
        let cfg = cfg.with_seed(seed);
        let report = run_experiment(&cfg, &cache).unwrap();
        let dir = work.join(format!("table/seed{seed}"));
        emit_report(&report, &dir).unwrap();
        assert_eq!(read_tables_csv(&dir.join("tables.csv")).unwrap(), report.systems);
        reports.push(report);
    }
    let secs = start.elapsed().as_secs_f64();
    let noisy = |r: &RunReport, name: &str| r.system(name).unwrap().noisy_ter;
    let (teacher, mc, s1, s2, s5) = ("baseline", "multi_condition", "student_T1_kmax", "student_T2_k20", "student_T5_k5");
    let a = count(reports.iter().map(|r| noisy(r, s1) < noisy(r, mc)));
    let b = count(reports.iter().map(|r| noisy(r, mc) < noisy(r, teacher)));
    let c = count(reports.iter().map(|r| noisy(r, s2) <= noisy(r, s5)));
    let mean = |name: &str| reports.iter().map(|r| noisy(r, name)).sum::<f64>() / reports.len() as f64;
    verdict(
        a >= 4 && b >= 4 && c >= 4 && secs < 900.0,
        format!(
            "ordering (noisy TER means: teacher {:.3}, multicond {:.3}, T1/max {:.3}, T2/k20 {:.3}, T5/k5 {:.3}): student<multicond {a}/5, multicond<teacher {b}/5, T2k20<=T5k5 {c}/5, {secs:.0}s",
            mean(teacher),
            mean(mc),
            mean(s1),
            mean(s2),
            mean(s5)
        ),
    )
}

fn sweep_config() -> ExperimentConfig {
    ExperimentConfig::from_toml_str(
        r#"
[corpus]
n_utts = 500
n_test_utts = 100
transcribed_fraction = 0.2
[sweep]
temperatures = [1.0, 2.0, 5.0]
ks = [5, 20, 40, "max"]
multipliers = [1, 2, 4, 6]
seeds = [0, 1, 2, 3, 4]
"#,
    )
    .unwrap()
}

fn criterion_7(work: &Path) -> Verdict {
    let cfg = sweep_config();
    let cache = Cache::new(work.join("sweeps"));
    let grid = sweep_tk(&cfg, &cache).unwrap();
    let out = work.join("sweeps/grid");
    emit_grid(&grid, &out).unwrap();
    let rows = read_grid_csv(&out.join("grid.csv")).unwrap();
    let parsed = rows == grid.rows();

    // fresh cache, one seed: every cell must reproduce exactly
    let mut one = cfg.clone();
    one.sweep.seeds = vec![3];
    let again = sweep_tk(&one, &Cache::new(work.join("sweeps-rerun"))).unwrap();
    let deterministic = grid
        .cells
        .iter()
        .zip(&again.cells)
        .all(|(a, b)| a.temperature == b.temperature && a.k == b.k && a.scores[3] == b.scores[0]);

    let flat = match t1_flatness(&grid) {
        Some((k_spread, seed_spread)) => format!(
            "soft check T=1 k-spread {k_spread:.3} vs seed-spread {seed_spread:.3}: {}",
            if k_spread < 2.0 * seed_spread { "flat" } else { "NOT flat (reported only)" }
        ),
        None => "soft check unavailable".into(),
    };
    verdict(
        rows.len() == 12 && parsed && deterministic,
        format!("T x k grid: {} rows, parse-back={parsed}, deterministic={deterministic}; {flat}", rows.len()),
    )
}

fn criterion_8(work: &Path) -> Verdict {
    let cfg = sweep_config();
    let cache = Cache::new(work.join("sweeps"));
    let size = sweep_size(&cfg, &cache).unwrap();
    let out = work.join("sweeps/size");
    emit_size(&size, &out).unwrap();
    let rows = read_size_csv(&out.join("size.csv")).unwrap();
    let parsed = rows == size.rows() && rows.iter().map(|r| r.multiplier).collect::<Vec<_>>() == [1, 2, 4, 6];
    let best = rows
        .iter()
        .enumerate()
        .min_by(|a, b| a.1.noisy_ter.total_cmp(&b.1.noisy_ter))
        .map(|(i, _)| i)
        .unwrap();
    let base = &size.points[0];
    let wins = count(
        size.points[best]
            .scores
            .iter()
            .zip(&base.scores)
            .map(|(b, one)| b.noisy_ter <= one.noisy_ter),
    );
    let means: Vec<String> = rows.iter().map(|r| format!("{}x {:.3}", r.multiplier, r.noisy_ter)).collect();
    verdict(
        wins >= 3 && parsed,
        format!(
            "size sweep (noisy TER {}): best {}x <= 1x in {wins}/5 seeds, parse-back={parsed}",
            means.join(", "),
            rows[best].multiplier
        ),
    )
}

fn tree_digest(root: &Path) -> BTreeMap<String, String> {
    fn walk(root: &Path, dir: &Path, out: &mut BTreeMap<String, String>) {
        for entry in std::fs::read_dir(dir).unwrap() {
            let path = entry.unwrap().path();
            if path.is_dir() {
                walk(root, &path, out);
            } else {
                let rel = path.strip_prefix(root).unwrap().to_string_lossy().into_owned();
                out.insert(rel, hex::encode(Sha256::digest(std::fs::read(&path).unwrap())));
            }
        }
    }
    let mut out = BTreeMap::new();
    walk(root, root, &mut out);
    out
}

fn criterion_9(work: &Path) -> Verdict {
    let cfg = ExperimentConfig::from_toml_str(
        r#"
seed = 7
[corpus]
n_utts = 120
n_test_utts = 30
transcribed_fraction = 0.25
[teacher]
epochs = 3
[multicond]
epochs = 3
[student]
epochs = 2
[sweep]
temperatures = [1.0, 2.0]
ks = [5, "max"]
multipliers = [1, 2]
seeds = [7, 8]
"#,
    )
    .unwrap();
    let run = |dir: &Path| {
        let cache = Cache::new(dir);
        emit_report(&run_experiment(&cfg, &cache).unwrap(), dir).unwrap();
        emit_grid(&sweep_tk(&cfg, &cache).unwrap(), dir).unwrap();
        emit_size(&sweep_size(&cfg, &cache).unwrap(), dir).unwrap();
        tree_digest(dir)
    };
    let a = run(&work.join("det-a"));
    let b = run(&work.join("det-b"));
    let kinds = |ext: &str| a.keys().filter(|k| k.ends_with(ext)).count();
    let differing: Vec<&String> = a.keys().filter(|k| a.get(*k) != b.get(*k)).collect();
    verdict(
        a.len() == b.len() && differing.is_empty() && kinds(".dnet") > 0 && kinds(".stgt") > 0,
        format!(
            "determinism: {} files ({} models, {} STGT, {} WAV) identical across fresh reruns{}",
            a.len(),
            kinds(".dnet"),
            kinds(".stgt"),
            kinds(".wav"),
            if differing.is_empty() { String::new() } else { format!("; differing: {differing:?}") }
        ),
    )
}

fn main() {
    let only: Option<Vec<u32>> = std::env::var("ACCEPTANCE_ONLY")
        .ok()
        .map(|v| v.split(',').filter_map(|s| s.trim().parse().ok()).collect());
    let strict = std::env::var("ACCEPTANCE_STRICT").is_ok_and(|v| v == "1");
    let work = tempfile::tempdir().unwrap();
    let work = work.path();

    type Check<'a> = Box<dyn Fn() -> Verdict + 'a>;
    let checks: Vec<(u32, Check)> = vec![
        (1, Box::new(criterion_1)),
        (2, Box::new(criterion_2)),
        (3, Box::new(criterion_3)),
        (4, Box::new(criterion_4)),
        (5, Box::new(criterion_5)),
        (6, Box::new(|| criterion_6(work))),
        (7, Box::new(|| criterion_7(work))),
        (8, Box::new(|| criterion_8(work))),
        (9, Box::new(|| criterion_9(work))),
    ];

    let total = Instant::now();
    let mut failed = Vec::new();
    for (id, check) in checks {
        if only.as_ref().is_some_and(|o| !o.contains(&id)) {
            continue;
        }
        let start = Instant::now();
        let v = catch_unwind(AssertUnwindSafe(|| check())).unwrap_or_else(|e| {
            let msg = e
                .downcast_ref::<String>()
                .cloned()
                .or_else(|| e.downcast_ref::<&str>().map(|s| s.to_string()))
                .unwrap_or_default();
            verdict(false, format!("panicked: {msg}"))
        });
        if !v.pass {
            failed.push(id);
        }
        println!(
            "criterion {id}: {} {} [{:.1}s]",
            if v.pass { "PASS" } else { "FAIL" },
            v.detail,
            start.elapsed().as_secs_f64()
        );
    }
    println!(
        "acceptance: {} in {:.0}s",
        if failed.is_empty() { "all criteria passed".to_string() } else { format!("failed {failed:?}") },
        total.elapsed().as_secs_f64()
    );
    if strict && !failed.is_empty() {
        std::process::exit(1);
    }
}
