//! Experiment configuration: a TOML file with one table per subcommand.
//!
//! Every key has a default, so an empty file is valid. The effective config
//! (file keys overridden by CLI flags) is re-serialized canonically and hashed;
//! see `docs/config.md` for the key reference.

use std::fmt;
use std::path::{Path, PathBuf};
use std::str::FromStr;

use flowlab_core::gaussian::GaussianSpec;
use flowlab_core::model::Activation;
use flowlab_core::sampler::{EditConfig, SequenceMode, SkipConvention};
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{BenchError, BenchResult};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize, Default)]
#[serde(rename_all = "kebab-case")]
pub enum Experiment {
    Train,
    Generate,
    #[default]
    Edit,
    Avedit,
    Ablation,
    OracleCheck,
}

impl Experiment {
    pub fn name(self) -> &'static str {
        match self {
            Experiment::Train => "train",
            Experiment::Generate => "generate",
            Experiment::Edit => "edit",
            Experiment::Avedit => "avedit",
            Experiment::Ablation => "ablation",
            Experiment::OracleCheck => "oracle-check",
        }
    }
}

impl fmt::Display for Experiment {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunSection {
    pub out: PathBuf,
    /// Number of seeds; the seed list is `seed_offset .. seed_offset + seeds`.
    pub seeds: usize,
    pub seed_offset: u64,
    pub plot: bool,
}

impl Default for RunSection {
    fn default() -> Self {
        Self {
            out: PathBuf::from("flowlab-out"),
            seeds: 100,
            seed_offset: 0,
            plot: false,
        }
    }
}

/// Isotropic Gaussian pair, each written `"mean,variance"`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AnalyticSection {
    pub src: String,
    pub tar: String,
    pub dim: usize,
}

impl Default for AnalyticSection {
    fn default() -> Self {
        Self {
            src: "0,1".into(),
            tar: "2,1".into(),
            dim: 2,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EditSection {
    pub steps: usize,
    pub skip: usize,
    pub skip_convention: String,
    pub mode: String,
    pub noise: String,
    pub cfg_scale: f64,
    pub src_cond: usize,
    pub tar_cond: usize,
    /// Trained model; the analytic pair is used when absent.
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for EditSection {
    fn default() -> Self {
        Self {
            steps: 20,
            skip: 6,
            skip_convention: "from-noise".into(),
            mode: "target".into(),
            noise: "estimated".into(),
            cfg_scale: 1.0,
            src_cond: 0,
            tar_cond: 1,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AblationSection {
    pub steps: usize,
    pub skip: usize,
    pub skip_convention: String,
    pub src_cond: usize,
    pub tar_cond: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for AblationSection {
    fn default() -> Self {
        Self {
            steps: 20,
            skip: 6,
            skip_convention: "from-noise".into(),
            src_cond: 0,
            tar_cond: 1,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct DatasetSection {
    /// `av` (coupled video/audio classes) or `analytic` (the Gaussian pair).
    pub kind: String,
    pub n: usize,
    pub seed: u64,
    pub video_dim: usize,
    pub audio_dim: usize,
    pub separation: f64,
    pub video_std: f64,
    pub noise_scale: f64,
}

impl Default for DatasetSection {
    fn default() -> Self {
        Self {
            kind: "av".into(),
            n: 2000,
            seed: 1,
            video_dim: 2,
            audio_dim: 2,
            separation: 2.0,
            video_std: 0.3,
            noise_scale: 0.1,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainSection {
    pub hidden: Vec<usize>,
    pub activation: String,
    pub epochs: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    /// `adam` or `sgd`.
    pub optimizer: String,
    pub init_seed: u64,
    pub seed: u64,
    /// File name of the saved model inside the output directory.
    pub model_file: String,
}

impl Default for TrainSection {
    fn default() -> Self {
        Self {
            hidden: vec![64, 64],
            activation: "tanh".into(),
            epochs: 100,
            batch_size: 64,
            learning_rate: 1e-3,
            optimizer: "adam".into(),
            init_seed: 3,
            seed: 5,
            model_file: "model.omed".into(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct GenerateSection {
    pub steps: usize,
    pub samples: usize,
    pub cond: usize,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for GenerateSection {
    fn default() -> Self {
        Self {
            steps: 200,
            samples: 10_000,
            cond: 1,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct AvEditSection {
    pub steps: usize,
    pub skip: usize,
    pub skip_convention: String,
    pub noise: String,
    pub cfg_scale: f64,
    pub src_class: usize,
    pub tar_class: usize,
    /// Edit without source audio.
    pub drop_audio: bool,
    /// Seed of the held-out sample set the edits start from.
    pub test_seed: u64,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub model: Option<PathBuf>,
}

impl Default for AvEditSection {
    fn default() -> Self {
        Self {
            steps: 40,
            skip: 12,
            skip_convention: "from-noise".into(),
            noise: "estimated".into(),
            cfg_scale: 1.0,
            src_class: 0,
            tar_class: 1,
            drop_audio: false,
            test_seed: 77,
            model: None,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct OracleSection {
    pub samples: usize,
    pub grid: usize,
    pub points_2d: usize,
    pub seed: u64,
}

impl Default for OracleSection {
    fn default() -> Self {
        Self {
            samples: 1_000_000,
            grid: 5,
            points_2d: 10,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize, Default)]
#[serde(default, deny_unknown_fields)]
pub struct ExperimentConfig {
    pub experiment: Experiment,
    pub run: RunSection,
    pub analytic: AnalyticSection,
    pub edit: EditSection,
    pub ablation: AblationSection,
    pub dataset: DatasetSection,
    pub train: TrainSection,
    pub generate: GenerateSection,
    pub avedit: AvEditSection,
    pub oracle: OracleSection,
}

impl ExperimentConfig {
    pub fn from_toml(text: &str) -> BenchResult<Self> {
        toml::from_str(text).map_err(|e| BenchError::config(format!("config parse: {e}")))
    }

    pub fn load(path: &Path) -> BenchResult<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| BenchError::path(path, e))?;
        Self::from_toml(&text)
    }

    /// Canonical TOML: fixed key order, defaults filled in.
    pub fn canonical_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    /// SHA-256 of [`ExperimentConfig::canonical_toml`], hex encoded. The
    /// output directory is blanked first: where results go is not part of
    /// what was computed.
    pub fn hash(&self) -> String {
        let mut semantic = self.clone();
        semantic.run.out = PathBuf::new();
        hex::encode(Sha256::digest(semantic.canonical_toml().as_bytes()))
    }

    pub fn seed_list(&self) -> BenchResult<Vec<u64>> {
        if self.run.seeds == 0 {
            return Err(BenchError::config("seed list is empty (run.seeds = 0)"));
        }
        Ok((0..self.run.seeds as u64).map(|i| self.run.seed_offset + i).collect())
    }

    pub fn analytic_pair(&self) -> BenchResult<AnalyticPair> {
        AnalyticPair::parse(&self.analytic.src, &self.analytic.tar, self.analytic.dim)
    }

    /// Sampler settings of the `[edit]` table (seed 0).
    pub fn edit_config(&self) -> BenchResult<EditConfig> {
        let e = &self.edit;
        Ok(edit_config(e.steps, e.skip, &e.skip_convention)?
            .with_modes(parse(&e.mode, "edit.mode")?, parse(&e.noise, "edit.noise")?)
            .with_cfg_scale(e.cfg_scale))
    }

    pub fn avedit_config(&self) -> BenchResult<EditConfig> {
        let a = &self.avedit;
        Ok(edit_config(a.steps, a.skip, &a.skip_convention)?
            .with_modes(SequenceMode::Target, parse(&a.noise, "avedit.noise")?)
            .with_cfg_scale(a.cfg_scale))
    }

    pub fn ablation_config(&self) -> BenchResult<EditConfig> {
        let a = &self.ablation;
        edit_config(a.steps, a.skip, &a.skip_convention)
    }

    pub fn activation(&self) -> BenchResult<Activation> {
        match self.train.activation.as_str() {
            "tanh" => Ok(Activation::Tanh),
            "relu" => Ok(Activation::Relu),
            other => Err(BenchError::config(format!(
                "train.activation must be tanh or relu, got {other:?}"
            ))),
        }
    }
}

fn parse<T: FromStr>(value: &str, key: &str) -> BenchResult<T>
where
    T::Err: fmt::Display,
{
    value
        .parse()
        .map_err(|e| BenchError::config(format!("{key}: {e}")))
}

fn edit_config(steps: usize, skip: usize, convention: &str) -> BenchResult<EditConfig> {
    let convention: SkipConvention = parse(convention, "skip_convention")?;
    let cfg = EditConfig::with_skip(steps, skip, convention)?;
    cfg.validate()?;
    Ok(cfg)
}

/// Parses `"mean,variance"`.
pub fn parse_moments(text: &str) -> BenchResult<(f64, f64)> {
    let bad = || BenchError::config(format!("expected \"mean,variance\", got {text:?}"));
    let (m, v) = text.split_once(',').ok_or_else(bad)?;
    let m: f64 = m.trim().parse().map_err(|_| bad())?;
    let v: f64 = v.trim().parse().map_err(|_| bad())?;
    if !m.is_finite() || !(v > 0.0) || !v.is_finite() {
        return Err(BenchError::config(format!(
            "mean must be finite and variance positive in {text:?}"
        )));
    }
    Ok((m, v))
}

/// Source and target specs of the analytic field, bound to classes 0 and 1.
#[derive(Debug, Clone, PartialEq)]
pub struct AnalyticPair {
    pub src: GaussianSpec,
    pub tar: GaussianSpec,
}

impl AnalyticPair {
    pub fn parse(src: &str, tar: &str, dim: usize) -> BenchResult<Self> {
        if dim == 0 {
            return Err(BenchError::config("analytic.dim must be >= 1"));
        }
        let (ms, vs) = parse_moments(src)?;
        let (mt, vt) = parse_moments(tar)?;
        Ok(Self {
            src: GaussianSpec::isotropic(dim, ms, vs)?,
            tar: GaussianSpec::isotropic(dim, mt, vt)?,
        })
    }

    pub fn dim(&self) -> usize {
        self.src.dim()
    }

    pub fn spec(&self, class: usize) -> BenchResult<&GaussianSpec> {
        match class {
            0 => Ok(&self.src),
            1 => Ok(&self.tar),
            c => Err(BenchError::config(format!(
                "analytic field has classes 0 and 1, got {c}"
            ))),
        }
    }
}
