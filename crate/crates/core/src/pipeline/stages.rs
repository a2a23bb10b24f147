use std::fs::{self, File};
use std::io::{BufRead, BufReader, BufWriter, Write};
use std::path::Path;

use ndarray::Array2;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use serde_json::json;

use super::{Cache, ExperimentConfig, PipelineError, StageCause, StageDir, StudentPoint};
use crate::audio::AudioBuffer;
use crate::codec::{decode_stream, CodecParams, SoftTargetStream};
use crate::features::{cmvn, FeatureMatrix};
use crate::net::{
    evaluate, forward, train, EvalExample, EvalReport, HardExample, NetParams, SoftExample, TrainConfig,
    TrainingSet,
};
use crate::seed;
use crate::sim::{generate_corpus, generate_noise_bank, generate_noisy_copy, read_labels, write_labels, SimConfig};

const MANIFEST: &str = "manifest.jsonl";
const MODEL_FILE: &str = "model.dnet";
const SIDECAR_FILE: &str = "model.json";
const LOGITS_FILE: &str = "teacher_logits.stgt";
const TARGETS_FILE: &str = "targets.stgt";
const EVAL_FILE: &str = "eval.json";

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Split {
    Train,
    Test,
}

impl Split {
    fn tag(self) -> &'static str {
        match self {
            Split::Train => "train-corpus",
            Split::Test => "test-corpus",
        }
    }
}

/// One line of a corpus manifest. Paths are relative to the corpus directory.
/// Untranscribed utterances carry neither `label_path` nor `token_refs`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ManifestEntry {
    pub id: String,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub clean_path: Option<String>,
    pub noisy_path: String,
    pub snr_db: f64,
    pub t60_s: f64,
    pub noise_ids: Vec<String>,
    pub room_dims: [f64; 3],
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub label_path: Option<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub token_refs: Option<Vec<u16>>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub(crate) enum Side {
    Clean,
    Noisy,
}

impl Side {
    fn as_str(self) -> &'static str {
        match self {
            Side::Clean => "clean",
            Side::Noisy => "noisy",
        }
    }
}

pub(crate) struct Ctx<'a> {
    pub cfg: &'a ExperimentConfig,
    pub cache: &'a Cache,
}

pub(crate) fn write_manifest(dir: &Path, entries: &[ManifestEntry]) -> Result<(), StageCause> {
    let mut w = BufWriter::new(File::create(dir.join(MANIFEST))?);
    for e in entries {
        serde_json::to_writer(&mut w, e)?;
        w.write_all(b"\n")?;
    }
    w.flush()?;
    Ok(())
}

pub(crate) fn read_manifest(dir: &Path) -> Result<Vec<ManifestEntry>, StageCause> {
    let r = BufReader::new(File::open(dir.join(MANIFEST))?);
    let mut out = Vec::new();
    for line in r.lines() {
        let line = line?;
        if !line.trim().is_empty() {
            out.push(serde_json::from_str(&line)?);
        }
    }
    Ok(out)
}

fn stage_err(stage: &StageDir) -> impl Fn(StageCause) -> PipelineError + '_ {
    move |source| PipelineError::Stage {
        stage: stage.stage.clone(),
        source,
    }
}

/// Simulation settings of a split; each split draws from its own seed branch.
pub(crate) fn split_sim(cfg: &ExperimentConfig, split: Split) -> SimConfig {
    let mut sim = cfg.corpus.sim.clone();
    sim.seed = seed::derive_seed(cfg.seed, split.tag(), cfg.corpus.sim.seed);
    sim
}

pub(crate) fn corpus_stage(ctx: &Ctx<'_>, split: Split) -> Result<StageDir, PipelineError> {
    let cfg = ctx.cfg;
    let sim = split_sim(cfg, split);
    let (n_utts, n_labeled) = match split {
        Split::Train => (cfg.corpus.n_utts, cfg.corpus.n_transcribed()),
        Split::Test => (cfg.corpus.n_test_utts, cfg.corpus.n_test_utts),
    };
    let n_classes = cfg.corpus.n_classes;
    let framing = cfg.features.framing(sim.sample_rate);
    let params = json!({
        "sim": sim,
        "n_utts": n_utts,
        "n_labeled": n_labeled,
        "n_classes": n_classes,
        "framing": framing,
    });
    ctx.cache.stage(split.tag(), &params, &[], |dir| {
        let corpus = generate_corpus(&sim, n_utts, n_classes, framing)?;
        for sub in ["clean", "noisy", "labels"] {
            fs::create_dir_all(dir.join(sub))?;
        }
        let entries = corpus
            .records
            .par_iter()
            .zip(corpus.meta.par_iter())
            .enumerate()
            .map(|(i, (rec, meta))| -> Result<ManifestEntry, StageCause> {
                let clean_path = format!("clean/{}.wav", rec.id);
                let noisy_path = format!("noisy/{}.wav", rec.id);
                rec.clean.write_wav(dir.join(&clean_path))?;
                rec.noisy.write_wav(dir.join(&noisy_path))?;
                let (label_path, token_refs) = if i < n_labeled {
                    let p = format!("labels/{}.lbl", rec.id);
                    write_labels(dir.join(&p), &rec.frame_labels)?;
                    (Some(p), Some(rec.token_refs.clone()))
                } else {
                    (None, None)
                };
                Ok(ManifestEntry {
                    id: rec.id.clone(),
                    clean_path: Some(clean_path),
                    noisy_path,
                    snr_db: meta.snr_db,
                    t60_s: meta.t60_s,
                    noise_ids: meta.noise_ids.clone(),
                    room_dims: meta.room_dims,
                    label_path,
                    token_refs,
                })
            })
            .collect::<Result<Vec<_>, _>>()?;
        write_manifest(dir, &entries)
    })
}

/// Noisy re-rendering `copy >= 1` of the training corpus. Reads only clean
/// audio; the copy has no labels.
pub(crate) fn copy_stage(ctx: &Ctx<'_>, train: &StageDir, copy: usize) -> Result<StageDir, PipelineError> {
    let sim = split_sim(ctx.cfg, Split::Train);
    ctx.cache
        .stage("noisy-copy", &json!({ "copy": copy }), &[train], |dir| {
            let manifest = read_manifest(&train.path)?;
            let clean = manifest
                .par_iter()
                .map(|e| -> Result<(String, AudioBuffer), StageCause> {
                    let p = e
                        .clean_path
                        .as_ref()
                        .ok_or_else(|| StageCause::Invalid(format!("{} has no clean audio", e.id)))?;
                    Ok((e.id.clone(), AudioBuffer::read_wav(train.join(p))?))
                })
                .collect::<Result<Vec<_>, _>>()?;
            let bank = generate_noise_bank(&sim)?;
            let rendered = generate_noisy_copy(&sim, &clean, &bank, copy)?;
            fs::create_dir_all(dir.join("noisy"))?;
            let entries = rendered
                .par_iter()
                .map(|(audio, meta)| -> Result<ManifestEntry, StageCause> {
                    let noisy_path = format!("noisy/{}.wav", meta.id);
                    audio.write_wav(dir.join(&noisy_path))?;
                    Ok(ManifestEntry {
                        id: meta.id.clone(),
                        clean_path: None,
                        noisy_path,
                        snr_db: meta.snr_db,
                        t60_s: meta.t60_s,
                        noise_ids: meta.noise_ids.clone(),
                        room_dims: meta.room_dims,
                        label_path: None,
                        token_refs: None,
                    })
                })
                .collect::<Result<Vec<_>, _>>()?;
            write_manifest(dir, &entries)
        })
}

/// LFBE features of every audio file in a corpus directory.
pub(crate) fn features_stage(ctx: &Ctx<'_>, corpus: &StageDir) -> Result<StageDir, PipelineError> {
    let fc = &ctx.cfg.features;
    let fs_hz = ctx.cfg.corpus.sim.sample_rate;
    ctx.cache.stage("features", fc, &[corpus], |dir| {
        let manifest = read_manifest(&corpus.path)?;
        let bank = fc.bank(fs_hz)?;
        manifest.par_iter().try_for_each(|e| -> Result<(), StageCause> {
            let sides = [(Side::Clean, e.clean_path.as_ref()), (Side::Noisy, Some(&e.noisy_path))];
            for (side, path) in sides {
                if let Some(p) = path {
                    let audio = AudioBuffer::read_wav(corpus.join(p))?;
                    let m = fc.extract(&audio, &bank)?;
                    m.write(dir.join(feature_file(&e.id, side)))?;
                }
            }
            Ok(())
        })
    })
}

fn feature_file(id: &str, side: Side) -> String {
    format!("{id}.{}.lfbe", side.as_str())
}

/// Normalized features of `entries`, in order.
pub(crate) fn load_features(
    ctx: &Ctx<'_>,
    feats: &StageDir,
    entries: &[ManifestEntry],
    side: Side,
) -> Result<Vec<Array2<f64>>, PipelineError> {
    let fc = &ctx.cfg.features;
    entries
        .par_iter()
        .map(|e| -> Result<Array2<f64>, StageCause> {
            let m = FeatureMatrix::read(feats.join(feature_file(&e.id, side)), fc.hop_s, fc.win_s)?;
            Ok(cmvn(&m.frames))
        })
        .collect::<Result<Vec<_>, _>>()
        .map_err(stage_err(feats))
}

/// Frame labels and token references of the transcribed entries.
pub(crate) fn load_supervision(
    corpus: &StageDir,
    entries: &[ManifestEntry],
) -> Result<(Vec<Vec<u16>>, Vec<Vec<u16>>), PipelineError> {
    let mut labels = Vec::with_capacity(entries.len());
    let mut tokens = Vec::with_capacity(entries.len());
    for e in entries {
        let (Some(lp), Some(tr)) = (&e.label_path, &e.token_refs) else {
            return Err(stage_err(corpus)(StageCause::Invalid(format!(
                "utterance {} is not transcribed",
                e.id
            ))));
        };
        labels.push(read_labels(corpus.join(lp)).map_err(|e| stage_err(corpus)(e.into()))?);
        tokens.push(tr.clone());
    }
    Ok((labels, tokens))
}

#[derive(Debug, Clone)]
pub struct TrainedModel {
    pub dir: StageDir,
    pub params: NetParams,
}

impl TrainedModel {
    pub fn model_path(&self) -> std::path::PathBuf {
        self.dir.join(MODEL_FILE)
    }
}

#[derive(Debug, Serialize)]
struct Sidecar<'a> {
    role: &'a str,
    init: &'a str,
    n_utterances: usize,
    train: &'a TrainConfig,
    loss_trace: &'a [f64],
    #[serde(skip_serializing_if = "Option::is_none")]
    finetune_loss_trace: Option<&'a [f64]>,
}

/// Training stage wrapper: `build` returns the parameters and the sidecar
/// JSON; the stored model is always read back from disk.
pub(crate) fn model_stage<P: Serialize>(
    ctx: &Ctx<'_>,
    stage: &str,
    params: &P,
    upstream: &[&StageDir],
    build: impl FnOnce() -> Result<(NetParams, serde_json::Value), StageCause>,
) -> Result<TrainedModel, PipelineError> {
    let dir = ctx.cache.stage(stage, params, upstream, |d| {
        let (p, side) = build()?;
        p.write(d.join(MODEL_FILE))?;
        fs::write(d.join(SIDECAR_FILE), serde_json::to_vec_pretty(&side)?)?;
        Ok(())
    })?;
    let params = NetParams::read(dir.join(MODEL_FILE)).map_err(|e| stage_err(&dir)(e.into()))?;
    Ok(TrainedModel { dir, params })
}

/// Training config with its seed replaced by one derived from the global seed.
pub(crate) fn seeded(cfg: &ExperimentConfig, t: &TrainConfig, role: &str) -> TrainConfig {
    TrainConfig {
        seed: seed::derive_seed(cfg.seed, &format!("train-{role}"), t.seed),
        ..t.clone()
    }
}

/// Hard-label training from a fresh initialization (`teacher` or `multicond`).
pub(crate) fn hard_model_stage(
    ctx: &Ctx<'_>,
    role: &str,
    train_cfg: &TrainConfig,
    feats_dir: &StageDir,
    feats: &[Array2<f64>],
    labels: &[Vec<u16>],
) -> Result<TrainedModel, PipelineError> {
    let arch = ctx.cfg.arch();
    let tc = seeded(ctx.cfg, train_cfg, role);
    let init_seed = seed::derive_seed(ctx.cfg.seed, &format!("init-{role}"), 0);
    let params = json!({ "arch": arch, "train": tc, "init_seed": init_seed, "n": feats.len() });
    model_stage(ctx, role, &params, &[feats_dir], || {
        let init = NetParams::init(&arch, &mut seed::stream(init_seed, "init", 0))?;
        let set = TrainingSet::Hard(
            feats
                .iter()
                .zip(labels)
                .map(|(f, l)| HardExample { feats: f, labels: l })
                .collect(),
        );
        let out = train(init, &set, &tc)?;
        let side = serde_json::to_value(Sidecar {
            role,
            init: "random",
            n_utterances: feats.len(),
            train: &tc,
            loss_trace: &out.loss_trace,
            finetune_loss_trace: None,
        })?;
        Ok((out.params, side))
    })
}

/// Dense teacher logits on the clean side of the full training corpus,
/// stored as an STGT stream with `k = N`.
pub(crate) fn teacher_logits_stage(
    ctx: &Ctx<'_>,
    teacher: &TrainedModel,
    feats_dir: &StageDir,
    ids: &[String],
    clean: &[Array2<f64>],
) -> Result<StageDir, PipelineError> {
    let n = ctx.cfg.corpus.n_classes;
    ctx.cache
        .stage("teacher-logits", &json!({ "n_classes": n }), &[&teacher.dir, feats_dir], |dir| {
            let logits = ids
                .par_iter()
                .zip(clean.par_iter())
                .map(|(id, x)| Ok((id.clone(), forward(&teacher.params, x)?)))
                .collect::<Result<Vec<_>, StageCause>>()?;
            let stream = SoftTargetStream::from_logits(n, &CodecParams::new(n, 1.0), &logits)?;
            stream.write_to(BufWriter::new(File::create(dir.join(LOGITS_FILE))?))?;
            Ok(())
        })
}

pub(crate) fn read_stream(path: &Path) -> Result<SoftTargetStream, StageCause> {
    let (_, stream) = decode_stream(BufReader::new(File::open(path)?))?;
    Ok(stream)
}

/// Top-k soft targets at one operating point, reselected from dense logits.
pub(crate) fn targets_stage(
    ctx: &Ctx<'_>,
    logits_dir: &StageDir,
    point: StudentPoint,
) -> Result<StageDir, PipelineError> {
    let k = point.k.resolve(ctx.cfg.corpus.n_classes);
    let params = json!({ "k": k, "temperature": point.temperature });
    ctx.cache.stage("soft-targets", &params, &[logits_dir], |dir| {
        let dense = read_stream(&logits_dir.join(LOGITS_FILE))?;
        let sparse = dense.reselect(k, point.temperature)?;
        sparse.write_to(BufWriter::new(File::create(dir.join(TARGETS_FILE))?))?;
        Ok(())
    })
}

/// Student inputs: per copy, noisy features aligned with the target stream.
pub(crate) struct StudentData<'a> {
    pub copies: Vec<(&'a StageDir, &'a [Array2<f64>])>,
    /// Transcribed noisy subset for the optional fine-tuning pass.
    pub finetune: Option<(&'a StageDir, &'a [Array2<f64>], &'a [Vec<u16>])>,
}

pub(crate) fn student_stage(
    ctx: &Ctx<'_>,
    teacher: &TrainedModel,
    targets_dir: &StageDir,
    point: StudentPoint,
    data: &StudentData<'_>,
) -> Result<TrainedModel, PipelineError> {
    let cfg = ctx.cfg;
    let tc = seeded(cfg, &cfg.student, "student");
    let ft = seeded(cfg, &cfg.finetune, "finetune");
    let k = point.k.resolve(cfg.corpus.n_classes);
    let rule = cfg.codec.rule();
    let params = json!({
        "train": tc,
        "finetune": data.finetune.as_ref().map(|_| &ft),
        "temperature": point.temperature,
        "k": k,
        "rule": rule,
        "multiplier": data.copies.len(),
    });
    let mut upstream: Vec<&StageDir> = vec![&teacher.dir, targets_dir];
    upstream.extend(data.copies.iter().map(|(d, _)| *d));
    if let Some((d, _, _)) = &data.finetune {
        upstream.push(d);
    }
    model_stage(ctx, "student", &params, &upstream, || {
        let targets = read_stream(&targets_dir.join(TARGETS_FILE))?;
        let mut examples = Vec::new();
        for (_, feats) in &data.copies {
            if feats.len() != targets.utterances.len() {
                return Err(StageCause::Invalid(format!(
                    "{} feature files for {} target utterances",
                    feats.len(),
                    targets.utterances.len()
                )));
            }
            for (x, u) in feats.iter().zip(&targets.utterances) {
                if x.nrows() != u.frames.len() {
                    return Err(StageCause::Invalid(format!(
                        "utterance {}: {} feature frames, {} target frames",
                        u.id,
                        x.nrows(),
                        u.frames.len()
                    )));
                }
                examples.push(SoftExample {
                    feats: x,
                    targets: &u.frames,
                });
            }
        }
        let set = TrainingSet::Soft {
            examples,
            temperature: point.temperature,
            rule,
        };
        let out = train(teacher.params.clone(), &set, &tc)?;
        let (params, ft_trace) = match &data.finetune {
            Some((_, feats, labels)) => {
                let hard = TrainingSet::Hard(
                    feats
                        .iter()
                        .zip(labels.iter())
                        .map(|(f, l)| HardExample { feats: f, labels: l })
                        .collect(),
                );
                let o = train(out.params, &hard, &ft)?;
                (o.params, Some(o.loss_trace))
            }
            None => (out.params, None),
        };
        let side = serde_json::to_value(Sidecar {
            role: "student",
            init: "teacher",
            n_utterances: set.len(),
            train: &tc,
            loss_trace: &out.loss_trace,
            finetune_loss_trace: ft_trace.as_deref(),
        })?;
        Ok((params, side))
    })
}

/// Held-out test data, both sides labeled.
pub(crate) struct TestData {
    pub ids: Vec<String>,
    pub clean: Vec<Array2<f64>>,
    pub noisy: Vec<Array2<f64>>,
    pub labels: Vec<Vec<u16>>,
    pub tokens: Vec<Vec<u16>>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub(crate) struct EvalPair {
    pub clean: EvalReport,
    pub noisy: EvalReport,
}

pub(crate) fn eval_stage(
    ctx: &Ctx<'_>,
    model: &TrainedModel,
    test_feats: &StageDir,
    test: &TestData,
) -> Result<EvalPair, PipelineError> {
    let min_run = ctx.cfg.model.decode_min_run;
    let dir = ctx.cache.stage("eval", &json!({ "min_run": min_run }), &[&model.dir, test_feats], |dir| {
        let run = |feats: &[Array2<f64>]| {
            let examples: Vec<EvalExample<'_>> = test
                .ids
                .iter()
                .zip(feats)
                .zip(test.labels.iter().zip(&test.tokens))
                .map(|((id, f), (l, t))| EvalExample {
                    id,
                    feats: f,
                    frame_labels: l,
                    token_refs: t,
                })
                .collect();
            evaluate(&model.params, &examples, min_run)
        };
        let pair = EvalPair {
            clean: run(&test.clean)?,
            noisy: run(&test.noisy)?,
        };
        fs::write(dir.join(EVAL_FILE), serde_json::to_vec_pretty(&pair)?)?;
        Ok(())
    })?;
    let bytes = fs::read(dir.join(EVAL_FILE)).map_err(|e| stage_err(&dir)(e.into()))?;
    serde_json::from_slice(&bytes).map_err(|e| stage_err(&dir)(e.into()))
}
