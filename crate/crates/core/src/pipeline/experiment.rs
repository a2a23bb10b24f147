use ndarray::Array2;
use rayon::prelude::*;

use super::report::{GridCell, GridReport, RunReport, SeedScore, SizePoint, SizeReport, SystemRow};
use super::stages::{
    copy_stage, corpus_stage, eval_stage, features_stage, hard_model_stage, load_features, load_supervision,
    read_manifest, student_stage, targets_stage, teacher_logits_stage, Ctx, EvalPair, Side, StudentData,
    TestData,
};
use super::{Cache, ExperimentConfig, PipelineError, Split, StageDir, StudentPoint, TrainedModel};

/// Generates (or reuses) the training and test corpora.
pub fn simulate(cfg: &ExperimentConfig, cache: &Cache) -> Result<(StageDir, StageDir), PipelineError> {
    let ctx = Ctx { cfg, cache };
    Ok((corpus_stage(&ctx, Split::Train)?, corpus_stage(&ctx, Split::Test)?))
}

/// Feature stages of both corpora.
pub fn extract_features(cfg: &ExperimentConfig, cache: &Cache) -> Result<(StageDir, StageDir), PipelineError> {
    let ctx = Ctx { cfg, cache };
    let (train, test) = simulate(cfg, cache)?;
    Ok((features_stage(&ctx, &train)?, features_stage(&ctx, &test)?))
}

/// One seed's corpora, features and teacher, loaded and ready for the
/// downstream systems.
pub struct Experiment<'a> {
    cfg: ExperimentConfig,
    cache: &'a Cache,
    pub train_corpus: StageDir,
    pub test_corpus: StageDir,
    pub train_feats: StageDir,
    pub test_feats: StageDir,
    ids: Vec<String>,
    clean: Vec<Array2<f64>>,
    noisy: Vec<Array2<f64>>,
    labels: Vec<Vec<u16>>,
    test: TestData,
    teacher: TrainedModel,
}

impl<'a> Experiment<'a> {
    pub fn prepare(cfg: &ExperimentConfig, cache: &'a Cache) -> Result<Self, PipelineError> {
        cfg.validate()?;
        let ctx = Ctx { cfg, cache };
        let (train_corpus, test_corpus) = simulate(cfg, cache)?;
        let train_feats = features_stage(&ctx, &train_corpus)?;
        let test_feats = features_stage(&ctx, &test_corpus)?;

        let manifest = read_manifest(&train_corpus.path).map_err(|source| PipelineError::Stage {
            stage: train_corpus.stage.clone(),
            source,
        })?;
        let nt = cfg.corpus.n_transcribed();
        let clean = load_features(&ctx, &train_feats, &manifest, Side::Clean)?;
        let noisy = load_features(&ctx, &train_feats, &manifest, Side::Noisy)?;
        let (labels, _) = load_supervision(&train_corpus, &manifest[..nt])?;

        let test_manifest = read_manifest(&test_corpus.path).map_err(|source| PipelineError::Stage {
            stage: test_corpus.stage.clone(),
            source,
        })?;
        let (test_labels, test_tokens) = load_supervision(&test_corpus, &test_manifest)?;
        let test = TestData {
            ids: test_manifest.iter().map(|e| e.id.clone()).collect(),
            clean: load_features(&ctx, &test_feats, &test_manifest, Side::Clean)?,
            noisy: load_features(&ctx, &test_feats, &test_manifest, Side::Noisy)?,
            labels: test_labels,
            tokens: test_tokens,
        };

        let teacher = hard_model_stage(&ctx, "teacher", &cfg.teacher, &train_feats, &clean[..nt], &labels)?;
        Ok(Self {
            cfg: cfg.clone(),
            cache,
            train_corpus,
            test_corpus,
            train_feats,
            test_feats,
            ids: manifest.into_iter().map(|e| e.id).collect(),
            clean,
            noisy,
            labels,
            test,
            teacher,
        })
    }

    fn ctx(&self) -> Ctx<'_> {
        Ctx {
            cfg: &self.cfg,
            cache: self.cache,
        }
    }

    pub fn config(&self) -> &ExperimentConfig {
        &self.cfg
    }

    /// Clean-trained baseline.
    pub fn teacher(&self) -> &TrainedModel {
        &self.teacher
    }

    /// Hard-label model on the transcribed noisy subset, random init.
    pub fn multicond(&self) -> Result<TrainedModel, PipelineError> {
        let nt = self.labels.len();
        hard_model_stage(
            &self.ctx(),
            "multicond",
            &self.cfg.multicond,
            &self.train_feats,
            &self.noisy[..nt],
            &self.labels,
        )
    }

    pub fn teacher_logits(&self) -> Result<StageDir, PipelineError> {
        teacher_logits_stage(&self.ctx(), &self.teacher, &self.train_feats, &self.ids, &self.clean)
    }

    pub fn soft_targets(&self, point: StudentPoint) -> Result<StageDir, PipelineError> {
        targets_stage(&self.ctx(), &self.teacher_logits()?, point)
    }

    /// Noisy features of re-rendered copies `1..m`.
    fn copies(&self, m: usize) -> Result<Vec<(StageDir, Vec<Array2<f64>>)>, PipelineError> {
        let ctx = self.ctx();
        (1..m)
            .map(|c| {
                let corpus = copy_stage(&ctx, &self.train_corpus, c)?;
                let feats = features_stage(&ctx, &corpus)?;
                let manifest = read_manifest(&corpus.path).map_err(|source| PipelineError::Stage {
                    stage: corpus.stage.clone(),
                    source,
                })?;
                let x = load_features(&ctx, &feats, &manifest, Side::Noisy)?;
                Ok((feats, x))
            })
            .collect()
    }

    /// Student at `point`, trained on `multiplier` noisy renderings of the
    /// corpus against clean-side teacher targets, initialized from the teacher.
    pub fn student(&self, point: StudentPoint, multiplier: usize) -> Result<TrainedModel, PipelineError> {
        let extra = self.copies(multiplier.max(1))?;
        self.student_with(point, &extra)
    }

    fn student_with(
        &self,
        point: StudentPoint,
        extra: &[(StageDir, Vec<Array2<f64>>)],
    ) -> Result<TrainedModel, PipelineError> {
        let targets = self.soft_targets(point)?;
        let mut copies: Vec<(&StageDir, &[Array2<f64>])> = vec![(&self.train_feats, &self.noisy)];
        copies.extend(extra.iter().map(|(d, x)| (d, x.as_slice())));
        let nt = self.labels.len();
        let finetune = (self.cfg.finetune.epochs > 0)
            .then(|| (&self.train_feats, &self.noisy[..nt], self.labels.as_slice()));
        student_stage(
            &self.ctx(),
            &self.teacher,
            &targets,
            point,
            &StudentData { copies, finetune },
        )
    }

    /// `(clean TER, noisy TER)` on the held-out sets.
    pub fn evaluate(&self, model: &TrainedModel) -> Result<(f64, f64), PipelineError> {
        let EvalPair { clean, noisy } = eval_stage(&self.ctx(), model, &self.test_feats, &self.test)?;
        Ok((clean.token_error_rate, noisy.token_error_rate))
    }
}

enum System {
    Multicond,
    Student(StudentPoint),
}

/// Runs the full stage graph for `cfg.seed` and scores baseline,
/// multi-condition and every configured student.
pub fn run_experiment(cfg: &ExperimentConfig, cache: &Cache) -> Result<RunReport, PipelineError> {
    let exp = Experiment::prepare(cfg, cache)?;
    let base = exp.evaluate(exp.teacher())?;
    let mut jobs = vec![("multi_condition".to_string(), System::Multicond)];
    jobs.extend(cfg.codec.students.iter().map(|p| (p.label(), System::Student(*p))));
    let rows = jobs
        .par_iter()
        .map(|(name, sys)| {
            let model = match sys {
                System::Multicond => exp.multicond()?,
                System::Student(p) => exp.student(*p, 1)?,
            };
            let (c, n) = exp.evaluate(&model)?;
            Ok(SystemRow::new(name.clone(), c, n, base))
        })
        .collect::<Result<Vec<_>, PipelineError>>()?;
    let mut systems = vec![SystemRow::new("baseline", base.0, base.1, base)];
    systems.extend(rows);
    Ok(RunReport {
        seed: cfg.seed,
        config_hash: cfg.hash(),
        systems,
    })
}

/// Temperature x k grid: one student per cell and seed, all from the same
/// teacher initialization and training seed.
pub fn sweep_tk(cfg: &ExperimentConfig, cache: &Cache) -> Result<GridReport, PipelineError> {
    let points: Vec<StudentPoint> = cfg
        .sweep
        .temperatures
        .iter()
        .flat_map(|&t| {
            cfg.sweep.ks.iter().map(move |&k| StudentPoint {
                temperature: t,
                k,
            })
        })
        .collect();
    let seeds = cfg.seeds_for_sweep();
    let mut per_seed: Vec<Vec<SeedScore>> = Vec::with_capacity(seeds.len());
    for &seed in &seeds {
        let exp = Experiment::prepare(&cfg.with_seed(seed), cache)?;
        let base = exp.evaluate(exp.teacher())?;
        let scores = points
            .par_iter()
            .map(|&p| {
                let (c, n) = exp.evaluate(&exp.student(p, 1)?)?;
                Ok(SeedScore::new(seed, c, n, base))
            })
            .collect::<Result<Vec<_>, PipelineError>>()?;
        per_seed.push(scores);
    }
    let cells = points
        .iter()
        .enumerate()
        .map(|(i, p)| GridCell {
            temperature: p.temperature,
            k: p.k,
            scores: per_seed.iter().map(|s| s[i].clone()).collect(),
        })
        .collect();
    Ok(GridReport {
        n_classes: cfg.corpus.n_classes,
        seeds,
        cells,
    })
}

/// Data-size sweep at the codec's default operating point. Multiplier `m`
/// trains on the original noisy rendering plus `m - 1` fresh re-renderings.
pub fn sweep_size(cfg: &ExperimentConfig, cache: &Cache) -> Result<SizeReport, PipelineError> {
    let point = cfg.codec.default_point();
    let mut multipliers = cfg.sweep.multipliers.clone();
    multipliers.sort_unstable();
    multipliers.dedup();
    let seeds = cfg.seeds_for_sweep();
    let mut points: Vec<SizePoint> = multipliers
        .iter()
        .map(|&m| SizePoint {
            multiplier: m,
            scores: Vec::with_capacity(seeds.len()),
        })
        .collect();
    for &seed in &seeds {
        let exp = Experiment::prepare(&cfg.with_seed(seed), cache)?;
        let base = exp.evaluate(exp.teacher())?;
        let max_m = multipliers.last().copied().unwrap_or(1);
        let extra = exp.copies(max_m)?;
        for p in points.iter_mut() {
            let model = exp.student_with(point, &extra[..p.multiplier - 1])?;
            let (c, n) = exp.evaluate(&model)?;
            p.scores.push(SeedScore::new(seed, c, n, base));
        }
    }
    Ok(SizeReport {
        temperature: point.temperature,
        k: point.k,
        seeds,
        points,
    })
}
