use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Deserializer, Serialize, Serializer};
use sha2::{Digest, Sha256};

use super::PipelineError;
use crate::features::FeatureConfig;
use crate::net::{ArchConfig, TargetRule, TrainConfig};
use crate::sim::SimConfig;

/// Number of preserved logits per frame; `max` keeps all of them.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum KSpec {
    Count(usize),
    Max,
}

impl KSpec {
    pub fn resolve(self, n_classes: usize) -> usize {
        match self {
            KSpec::Count(k) => k,
            KSpec::Max => n_classes,
        }
    }
}

impl fmt::Display for KSpec {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        match self {
            KSpec::Count(k) => write!(f, "{k}"),
            KSpec::Max => f.write_str("max"),
        }
    }
}

impl std::str::FromStr for KSpec {
    type Err = String;

    fn from_str(s: &str) -> Result<Self, Self::Err> {
        if s.eq_ignore_ascii_case("max") {
            return Ok(KSpec::Max);
        }
        s.parse::<usize>()
            .map(KSpec::Count)
            .map_err(|_| format!("k must be a positive integer or \"max\", got {s:?}"))
    }
}

impl Serialize for KSpec {
    fn serialize<S: Serializer>(&self, s: S) -> Result<S::Ok, S::Error> {
        match self {
            KSpec::Count(k) => s.serialize_u64(*k as u64),
            KSpec::Max => s.serialize_str("max"),
        }
    }
}

impl<'de> Deserialize<'de> for KSpec {
    fn deserialize<D: Deserializer<'de>>(d: D) -> Result<Self, D::Error> {
        #[derive(Deserialize)]
        #[serde(untagged)]
        enum Raw {
            Int(u64),
            Str(String),
        }
        match Raw::deserialize(d)? {
            Raw::Int(k) => Ok(KSpec::Count(k as usize)),
            Raw::Str(s) => s.parse().map_err(serde::de::Error::custom),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CorpusSection {
    #[serde(flatten)]
    pub sim: SimConfig,
    pub n_utts: usize,
    pub n_classes: usize,
    /// Leading share of the training corpus that carries labels.
    pub transcribed_fraction: f64,
    pub n_test_utts: usize,
}

impl Default for CorpusSection {
    fn default() -> Self {
        Self {
            sim: SimConfig::default(),
            n_utts: 2000,
            n_classes: 40,
            transcribed_fraction: 0.1,
            n_test_utts: 200,
        }
    }
}

impl CorpusSection {
    pub fn n_transcribed(&self) -> usize {
        ((self.n_utts as f64 * self.transcribed_fraction).ceil() as usize).clamp(1, self.n_utts)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ModelSection {
    pub context: usize,
    pub hidden: Vec<usize>,
    pub recurrent: bool,
    pub label_delay: usize,
    /// Decoder drops argmax runs shorter than this many frames.
    pub decode_min_run: usize,
}

impl Default for ModelSection {
    fn default() -> Self {
        let a = ArchConfig::default();
        Self {
            context: a.context,
            hidden: a.hidden,
            recurrent: a.recurrent,
            label_delay: a.label_delay,
            decode_min_run: 3,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "snake_case")]
pub enum FloorPolicy {
    #[default]
    Topk,
    Constant,
}

/// One distilled student of the main results table.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct StudentPoint {
    pub temperature: f64,
    pub k: KSpec,
}

impl StudentPoint {
    pub fn label(&self) -> String {
        format!("student_T{}_k{}", self.temperature, self.k)
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct CodecSection {
    pub k: KSpec,
    pub temperature: f64,
    pub floor: FloorPolicy,
    /// Constant floor; unset means `min selected logit - 50 T` per frame.
    pub floor_constant: Option<f64>,
    pub students: Vec<StudentPoint>,
}

impl Default for CodecSection {
    fn default() -> Self {
        Self {
            k: KSpec::Count(20),
            temperature: 2.0,
            floor: FloorPolicy::Topk,
            floor_constant: None,
            students: vec![
                StudentPoint { temperature: 1.0, k: KSpec::Max },
                StudentPoint { temperature: 2.0, k: KSpec::Count(20) },
                StudentPoint { temperature: 5.0, k: KSpec::Count(5) },
            ],
        }
    }
}

impl CodecSection {
    pub fn rule(&self) -> TargetRule {
        match self.floor {
            FloorPolicy::Topk => TargetRule::TopK,
            FloorPolicy::Constant => TargetRule::ConstantFloor {
                c: self.floor_constant,
            },
        }
    }

    pub fn default_point(&self) -> StudentPoint {
        StudentPoint {
            temperature: self.temperature,
            k: self.k,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct SweepSection {
    pub temperatures: Vec<f64>,
    pub ks: Vec<KSpec>,
    pub multipliers: Vec<usize>,
    /// Seeds averaged per sweep cell; empty means the global seed only.
    pub seeds: Vec<u64>,
}

impl Default for SweepSection {
    fn default() -> Self {
        Self {
            temperatures: vec![1.0, 2.0, 5.0],
            ks: vec![KSpec::Count(5), KSpec::Count(20), KSpec::Count(40), KSpec::Max],
            multipliers: vec![1, 2, 4, 6, 8, 10],
            seeds: Vec::new(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct OutputSection {
    pub dir: PathBuf,
    /// Worker threads; 0 picks the number of CPUs.
    pub jobs: usize,
}

impl Default for OutputSection {
    fn default() -> Self {
        Self {
            dir: PathBuf::from("out"),
            jobs: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default)]
pub struct ExperimentConfig {
    pub seed: u64,
    pub corpus: CorpusSection,
    pub features: FeatureConfig,
    pub model: ModelSection,
    pub teacher: TrainConfig,
    pub multicond: TrainConfig,
    pub student: TrainConfig,
    /// Hard-label fine-tuning of students on the transcribed noisy subset;
    /// skipped when `epochs = 0`.
    pub finetune: TrainConfig,
    pub codec: CodecSection,
    pub sweep: SweepSection,
    pub output: OutputSection,
}

impl Default for ExperimentConfig {
    fn default() -> Self {
        let teacher = TrainConfig {
            learning_rate: 0.02,
            epochs: 12,
            batch_size: 4,
            ..TrainConfig::default()
        };
        Self {
            seed: 0,
            corpus: CorpusSection::default(),
            features: FeatureConfig::default(),
            model: ModelSection::default(),
            multicond: teacher.clone(),
            student: TrainConfig {
                learning_rate: 0.02,
                epochs: 4,
                batch_size: 8,
                ..TrainConfig::default()
            },
            finetune: TrainConfig {
                epochs: 0,
                ..teacher.clone()
            },
            teacher,
            codec: CodecSection::default(),
            sweep: SweepSection::default(),
            output: OutputSection::default(),
        }
    }
}

impl ExperimentConfig {
    pub fn from_toml_str(text: &str) -> Result<Self, PipelineError> {
        let raw: toml::Table =
            toml::from_str(text).map_err(|e| PipelineError::Config(e.to_string()))?;
        let cfg: ExperimentConfig = raw
            .clone()
            .try_into()
            .map_err(|e: toml::de::Error| PipelineError::Config(e.to_string()))?;
        let echoed = toml::Table::try_from(&cfg).map_err(|e| PipelineError::Config(e.to_string()))?;
        if let Some(key) = unknown_key(&raw, &echoed, "") {
            return Err(PipelineError::Config(format!("unknown key `{key}`")));
        }
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: impl AsRef<Path>) -> Result<Self, PipelineError> {
        let path = path.as_ref();
        let text = std::fs::read_to_string(path)
            .map_err(|e| PipelineError::Config(format!("cannot read {}: {e}", path.display())))?;
        Self::from_toml_str(&text)
    }

    pub fn validate(&self) -> Result<(), PipelineError> {
        let bad = |m: String| Err(PipelineError::Config(m));
        let c = &self.corpus;
        if !(c.transcribed_fraction > 0.0 && c.transcribed_fraction <= 1.0) {
            return bad(format!("transcribed_fraction {} outside (0, 1]", c.transcribed_fraction));
        }
        if c.n_utts == 0 || c.n_test_utts == 0 {
            return bad("n_utts and n_test_utts must be positive".into());
        }
        if c.n_classes < 2 || c.n_classes > u16::MAX as usize {
            return bad(format!("n_classes {} outside [2, 65535]", c.n_classes));
        }
        c.sim.validate().map_err(|e| PipelineError::Config(e.to_string()))?;
        self.features
            .bank(c.sim.sample_rate)
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        self.arch()
            .validate()
            .map_err(|e| PipelineError::Config(e.to_string()))?;
        for (name, t) in [
            ("teacher", &self.teacher),
            ("multicond", &self.multicond),
            ("student", &self.student),
            ("finetune", &self.finetune),
        ] {
            t.validate()
                .map_err(|e| PipelineError::Config(format!("[{name}] {e}")))?;
        }
        let points = self
            .codec
            .students
            .iter()
            .copied()
            .chain([self.codec.default_point()]);
        for p in points {
            self.check_point(p.temperature, p.k)?;
        }
        for &t in &self.sweep.temperatures {
            for &k in &self.sweep.ks {
                self.check_point(t, k)?;
            }
        }
        if self.sweep.multipliers.contains(&0) {
            return bad("size multipliers must be at least 1".into());
        }
        Ok(())
    }

    fn check_point(&self, t: f64, k: KSpec) -> Result<(), PipelineError> {
        if !(t > 0.0 && t.is_finite()) {
            return Err(PipelineError::Config(format!("temperature {t} must be positive")));
        }
        let n = self.corpus.n_classes;
        let kk = k.resolve(n);
        if kk == 0 || kk > n {
            return Err(PipelineError::Config(format!("k = {k} outside [1, {n}]")));
        }
        Ok(())
    }

    pub fn arch(&self) -> ArchConfig {
        ArchConfig {
            feature_dim: self.features.n_mels,
            context: self.model.context,
            hidden: self.model.hidden.clone(),
            recurrent: self.model.recurrent,
            n_classes: self.corpus.n_classes,
            label_delay: self.model.label_delay,
        }
    }

    /// Hex sha256 of the canonical JSON form.
    pub fn hash(&self) -> String {
        let json = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&json))
    }

    pub fn seeds_for_sweep(&self) -> Vec<u64> {
        if self.sweep.seeds.is_empty() {
            vec![self.seed]
        } else {
            self.sweep.seeds.clone()
        }
    }

    pub fn with_seed(&self, seed: u64) -> Self {
        Self {
            seed,
            ..self.clone()
        }
    }
}

fn unknown_key(raw: &toml::Table, known: &toml::Table, prefix: &str) -> Option<String> {
    for (k, v) in raw {
        let path = if prefix.is_empty() {
            k.clone()
        } else {
            format!("{prefix}.{k}")
        };
        match (v, known.get(k)) {
            (_, None) if !is_optional_key(k) => return Some(path),
            (toml::Value::Table(r), Some(toml::Value::Table(kn))) => {
                if let Some(bad) = unknown_key(r, kn, &path) {
                    return Some(bad);
                }
            }
            _ => {}
        }
    }
    None
}

/// Keys whose unset (`None`) value is omitted from the serialized form.
fn is_optional_key(k: &str) -> bool {
    matches!(k, "noise_bank_limit" | "floor_constant" | "clip_norm")
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn defaults_roundtrip_through_toml() {
        let cfg = ExperimentConfig::default();
        let text = toml::to_string(&cfg).unwrap();
        assert_eq!(ExperimentConfig::from_toml_str(&text).unwrap(), cfg);
        assert_eq!(ExperimentConfig::from_toml_str("").unwrap(), cfg);
    }

    #[test]
    fn partial_sections_fill_defaults() {
        let cfg = ExperimentConfig::from_toml_str(
            "seed = 7\n[corpus]\nn_utts = 50\nsnr_range_db = [5.0, 10.0]\n[codec]\nk = \"max\"\n",
        )
        .unwrap();
        assert_eq!(cfg.seed, 7);
        assert_eq!(cfg.corpus.n_utts, 50);
        assert_eq!(cfg.corpus.sim.snr_range_db, (5.0, 10.0));
        assert_eq!(cfg.corpus.n_classes, 40);
        assert_eq!(cfg.codec.k, KSpec::Max);
    }

    #[test]
    fn rejects_bad_values_and_unknown_keys() {
        for text in [
            "[corpus]\ntranscribed_fraction = 0.0\n",
            "[corpus]\ntranscribed_fraction = 1.5\n",
            "[codec]\nk = 41\n",
            "[codec]\nk = \"most\"\n",
            "[sweep]\ntemperatures = [0.0]\n",
            "[teacher]\nbatch_size = 0\n",
            "[corpus]\nn_uts = 10\n",
            "bogus = 1\n",
            "[corpus\n",
        ] {
            assert!(
                matches!(ExperimentConfig::from_toml_str(text), Err(PipelineError::Config(_))),
                "{text}"
            );
        }
    }

    #[test]
    fn hash_tracks_every_field() {
        let a = ExperimentConfig::default();
        let mut b = a.clone();
        b.corpus.sim.snr_range_db.1 = 29.0;
        assert_ne!(a.hash(), b.hash());
        assert_eq!(a.hash(), ExperimentConfig::default().hash());
    }

    #[test]
    fn kspec_parsing() {
        assert_eq!("max".parse::<KSpec>().unwrap(), KSpec::Max);
        assert_eq!("20".parse::<KSpec>().unwrap(), KSpec::Count(20));
        assert_eq!(KSpec::Max.resolve(40), 40);
        assert_eq!(KSpec::Count(5).to_string(), "5");
    }

    #[test]
    fn transcribed_count_rounds_up() {
        let mut c = CorpusSection::default();
        assert_eq!(c.n_transcribed(), 200);
        c.n_utts = 15;
        assert_eq!(c.n_transcribed(), 2);
        c.transcribed_fraction = 1.0;
        assert_eq!(c.n_transcribed(), 15);
    }
}
