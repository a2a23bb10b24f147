//! Trains a teacher on hard labels, exports its top-k targets and distills a
//! student from them on a corrupted copy of the inputs.

use ndarray::Array2;
use rand::Rng;
use tsda::codec::SparseFrame;
use tsda::net::{
    evaluate, forward, train, ArchConfig, EvalExample, HardExample, NetParams, SoftExample, TargetRule,
    TrainConfig, TrainingSet,
};
use tsda::seed;

fn main() -> Result<(), Box<dyn std::error::Error>> {
    let (dim, classes) = (8, 4);
    let mut rng = seed::stream(0, "toy", 0);
    let mut clean = Vec::new();
    let mut noisy = Vec::new();
    let mut labels = Vec::new();
    let mut tokens = Vec::new();
    for _ in 0..60 {
        let segs: Vec<(u16, usize)> = (0..4).map(|_| (rng.random_range(0..classes) as u16, rng.random_range(4..9))).collect();
        let lab: Vec<u16> = segs.iter().flat_map(|&(c, n)| std::iter::repeat_n(c, n)).collect();
        let x = Array2::from_shape_fn((lab.len(), dim), |(t, d)| {
            if d % classes == lab[t] as usize { 1.0 } else { 0.0 }
        });
        let n = x.mapv(|v| v + rng.random_range(-0.6..0.6));
        let mut tok: Vec<u16> = segs.iter().map(|s| s.0).collect();
        tok.dedup();
        clean.push(x);
        noisy.push(n);
        labels.push(lab);
        tokens.push(tok);
    }
    let arch = ArchConfig { feature_dim: dim, context: 1, hidden: vec![16], recurrent: false, n_classes: classes, label_delay: 0 };
    let cfg = TrainConfig { learning_rate: 0.05, epochs: 20, batch_size: 4, ..TrainConfig::default() };

    let hard = TrainingSet::Hard(clean[..20].iter().zip(&labels).map(|(f, l)| HardExample { feats: f, labels: l }).collect());
    let teacher = train(NetParams::init(&arch, &mut seed::stream(0, "init", 0))?, &hard, &cfg)?.params;

    let targets: Vec<Vec<SparseFrame>> = clean
        .iter()
        .map(|x| {
            let z = forward(&teacher, x).unwrap();
            z.rows().into_iter().map(|r| SparseFrame::from_logits(&r.to_vec(), 2).unwrap()).collect()
        })
        .collect();
    let soft = TrainingSet::Soft {
        examples: noisy.iter().zip(&targets).map(|(f, t)| SoftExample { feats: f, targets: t }).collect(),
        temperature: 2.0,
        rule: TargetRule::TopK,
    };
    let student = train(teacher.clone(), &soft, &cfg)?;
    println!("student loss {:.4} -> {:.4}", student.loss_trace[0], student.loss_trace.last().unwrap());

    let examples: Vec<EvalExample> = (40..60)
        .map(|i| EvalExample { id: "t", feats: &noisy[i], frame_labels: &labels[i], token_refs: &tokens[i] })
        .collect();
    for (name, m) in [("teacher", &teacher), ("student", &student.params)] {
        let r = evaluate(m, &examples, 2)?;
        println!("{name}: noisy frame accuracy {:.3}, TER {:.3}", r.frame_accuracy, r.token_error_rate);
    }
    Ok(())
}
