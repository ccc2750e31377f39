//! Experiment configuration: a flat TOML document.
//!
//! `K`, `T` and `method` are required; every other key has a default. Unknown
//! keys are rejected. [`ConfigFile::canonical`] fills in every derived default
//! so that serializing a parsed config gives a stable canonical document.

use std::path::PathBuf;

use serde::{Deserialize, Serialize};

use crate::aggregator::AggregatorMethod;
use crate::error::{Error, Result};
use crate::fedsim::{LocalTraining, ServerOptimizerConfig, ServerOptimizerKind, SimulationSettings};
use crate::modeldata::{ModelKind, ModelSpec, PartitionScheme, DEFAULT_SEPARATION};
use crate::response::{CdfFamily, CdfKind, ResponseBounds};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum MethodName {
    Static,
    #[serde(rename = "AFL")]
    Afl,
    QFedAvg,
    #[serde(rename = "TERM")]
    Term,
    PropFair,
    #[serde(rename = "AAggFFS")]
    AaggffS,
    #[serde(rename = "AAggFFD")]
    AaggffD,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum BoundsMode {
    CrossSilo,
    CrossDevice,
    Explicit,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum PartitionName {
    Dirichlet,
    Pathological,
    #[serde(rename = "IID")]
    Iid,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub enum ModelName {
    LogisticRegression,
    #[serde(rename = "MLP")]
    Mlp,
}

fn d_c() -> f64 {
    1.0
}
fn d_b() -> usize {
    16
}
fn d_e() -> usize {
    1
}
fn d_lr() -> f64 {
    0.1
}
fn d_lr_decay() -> f64 {
    0.99
}
fn d_decay_step() -> usize {
    10
}
fn d_q() -> f64 {
    1.0
}
fn d_lambda() -> f64 {
    1.0
}
fn d_prop_m() -> f64 {
    2.0
}
fn d_bounds() -> BoundsMode {
    BoundsMode::CrossSilo
}
fn d_partition() -> PartitionName {
    PartitionName::Dirichlet
}
fn d_alpha() -> f64 {
    0.1
}
fn d_cpc() -> usize {
    2
}
fn d_model() -> ModelName {
    ModelName::LogisticRegression
}
fn d_hidden() -> usize {
    16
}
fn d_samples() -> usize {
    2000
}
fn d_input_dim() -> usize {
    2
}
fn d_num_classes() -> usize {
    2
}
fn d_separation() -> f64 {
    DEFAULT_SEPARATION
}
fn d_server_opt() -> ServerOptimizerKind {
    ServerOptimizerKind::Sgd
}
fn d_server_lr() -> f64 {
    1.0
}
fn d_beta1() -> f64 {
    0.9
}
fn d_beta2() -> f64 {
    0.99
}
fn d_tau() -> f64 {
    1e-3
}
fn d_seeds() -> Vec<u64> {
    vec![0]
}
fn d_output() -> PathBuf {
    PathBuf::from("results")
}

/// The document as written on disk.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct ConfigFile {
    #[serde(rename = "K")]
    pub k: usize,
    #[serde(rename = "T")]
    pub t: usize,
    #[serde(rename = "C", default = "d_c")]
    pub c: f64,
    #[serde(rename = "B", default = "d_b")]
    pub b: usize,
    #[serde(rename = "E", default = "d_e")]
    pub e: usize,
    #[serde(default = "d_lr")]
    pub lr: f64,
    #[serde(default = "d_lr_decay")]
    pub lr_decay: f64,
    #[serde(default = "d_decay_step")]
    pub decay_step: usize,
    #[serde(default)]
    pub prox_mu: f64,
    #[serde(default)]
    pub weight_decay: f64,

    pub method: MethodName,
    #[serde(default = "d_q")]
    pub q: f64,
    #[serde(default = "d_lambda")]
    pub lambda: f64,
    #[serde(default = "d_prop_m")]
    pub prop_m: f64,

    #[serde(default = "d_bounds")]
    pub bounds_mode: BoundsMode,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c1: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub c2: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf: Option<CdfFamily>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf_scale: Option<f64>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub cdf_shape: Option<f64>,

    #[serde(default = "d_partition")]
    pub partition: PartitionName,
    #[serde(default = "d_alpha")]
    pub dirichlet_alpha: f64,
    #[serde(default = "d_cpc")]
    pub classes_per_client: usize,

    #[serde(default = "d_model")]
    pub model: ModelName,
    #[serde(default = "d_hidden")]
    pub hidden: usize,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub data_csv: Option<PathBuf>,
    #[serde(default = "d_samples")]
    pub samples: usize,
    #[serde(default = "d_input_dim")]
    pub input_dim: usize,
    #[serde(default = "d_num_classes")]
    pub num_classes: usize,
    #[serde(default = "d_separation")]
    pub separation: f64,

    #[serde(default = "d_server_opt")]
    pub server_opt: ServerOptimizerKind,
    #[serde(default = "d_server_lr")]
    pub server_lr: f64,
    #[serde(default = "d_beta1")]
    pub server_beta1: f64,
    #[serde(default = "d_beta2")]
    pub server_beta2: f64,
    #[serde(default = "d_tau")]
    pub server_tau: f64,

    #[serde(default = "d_seeds")]
    pub seeds: Vec<u64>,
    #[serde(default = "d_output")]
    pub output_dir: PathBuf,
}

impl ConfigFile {
    pub fn parse(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn to_toml(&self) -> Result<String> {
        toml::to_string(self).map_err(|e| Error::Config(e.to_string()))
    }

    /// Fills every default that depends on other keys.
    pub fn canonical(mut self) -> Self {
        if self.bounds_mode != BoundsMode::Explicit {
            self.c1 = None;
            self.c2 = None;
        }
        let family = self.cdf.unwrap_or(match self.bounds_mode {
            BoundsMode::CrossDevice => CdfFamily::Weibull,
            _ => CdfFamily::Normal,
        });
        self.cdf = Some(family);
        self.cdf_scale.get_or_insert(1.0);
        self.cdf_shape.get_or_insert(family.default_shape());
        self
    }

    pub fn method(&self) -> AggregatorMethod {
        match self.method {
            MethodName::Static => AggregatorMethod::Static,
            MethodName::Afl => AggregatorMethod::Afl,
            MethodName::QFedAvg => AggregatorMethod::QFedAvg { q: self.q },
            MethodName::Term => AggregatorMethod::Term { lambda: self.lambda },
            MethodName::PropFair => AggregatorMethod::PropFair { m: self.prop_m },
            MethodName::AaggffS => AggregatorMethod::AaggffS,
            MethodName::AaggffD => AggregatorMethod::AaggffD,
        }
    }

    pub fn bounds(&self) -> Result<ResponseBounds> {
        match self.bounds_mode {
            BoundsMode::CrossSilo => ResponseBounds::cross_silo(self.k),
            BoundsMode::CrossDevice => ResponseBounds::cross_device(self.c),
            BoundsMode::Explicit => match (self.c1, self.c2) {
                (Some(c1), Some(c2)) => ResponseBounds::new(c1, c2),
                _ => Err(Error::Config("bounds_mode Explicit needs both c1 and c2".into())),
            },
        }
    }
}

/// Where client data comes from.
#[derive(Debug, Clone, PartialEq)]
pub enum DataSource {
    Synthetic {
        samples: usize,
        separation: f64,
    },
    Csv(PathBuf),
}

/// A validated, fully resolved experiment.
#[derive(Debug, Clone, PartialEq)]
pub struct ExperimentConfig {
    pub file: ConfigFile,
    pub rounds: usize,
    pub settings: SimulationSettings,
    pub partition: PartitionScheme,
    pub data: DataSource,
    pub seeds: Vec<u64>,
    pub output_dir: PathBuf,
}

fn positive(name: &str, v: f64) -> Result<()> {
    if v > 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be positive, got {v}")))
    }
}

fn nonnegative(name: &str, v: f64) -> Result<()> {
    if v >= 0.0 && v.is_finite() {
        Ok(())
    } else {
        Err(Error::Config(format!("{name} must be nonnegative, got {v}")))
    }
}

impl ExperimentConfig {
    pub fn parse(text: &str) -> Result<Self> {
        Self::from_file(ConfigFile::parse(text)?)
    }

    pub fn load(path: &std::path::Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::parse(&text).map_err(|e| match e {
            Error::Config(msg) => Error::Config(format!("{}: {msg}", path.display())),
            other => other,
        })
    }

    pub fn from_file(file: ConfigFile) -> Result<Self> {
        let file = file.canonical();
        if file.k == 0 {
            return Err(Error::Config("K must be >= 1".into()));
        }
        if !(file.c > 0.0 && file.c <= 1.0) {
            return Err(Error::Config(format!("C must be in (0, 1], got {}", file.c)));
        }
        if file.b == 0 {
            return Err(Error::Config("B must be >= 1".into()));
        }
        positive("lr", file.lr)?;
        positive("lr_decay", file.lr_decay)?;
        nonnegative("prox_mu", file.prox_mu)?;
        nonnegative("weight_decay", file.weight_decay)?;
        positive("server_lr", file.server_lr)?;
        positive("server_tau", file.server_tau)?;
        if file.seeds.is_empty() {
            return Err(Error::Config("seeds must list at least one seed".into()));
        }
        let method = file.method();
        match method {
            AggregatorMethod::QFedAvg { q } => nonnegative("q", q)?,
            AggregatorMethod::PropFair { m } => positive("prop_m", m)?,
            AggregatorMethod::AaggffS if file.c < 1.0 => {
                return Err(Error::Config("AAggFFS needs full participation (C = 1)".into()))
            }
            _ => {}
        }
        let bounds = file.bounds().map_err(|e| Error::Config(e.to_string()))?;
        let family = file.cdf.expect("canonical fills cdf");
        let cdf = CdfKind::new(
            family,
            file.cdf_scale.expect("canonical fills cdf_scale"),
            file.cdf_shape.expect("canonical fills cdf_shape"),
        )
        .map_err(|e| Error::Config(e.to_string()))?;
        let partition = match file.partition {
            PartitionName::Dirichlet => {
                positive("dirichlet_alpha", file.dirichlet_alpha)?;
                PartitionScheme::Dirichlet {
                    alpha: file.dirichlet_alpha,
                }
            }
            PartitionName::Pathological => PartitionScheme::Pathological {
                classes_per_client: file.classes_per_client,
            },
            PartitionName::Iid => PartitionScheme::Iid,
        };
        let kind = match file.model {
            ModelName::LogisticRegression => ModelKind::LogisticRegression,
            ModelName::Mlp => ModelKind::Mlp { hidden: file.hidden },
        };
        let data = match &file.data_csv {
            Some(p) => DataSource::Csv(p.clone()),
            None => {
                positive("separation", file.separation)?;
                DataSource::Synthetic {
                    samples: file.samples,
                    separation: file.separation,
                }
            }
        };
        let model = ModelSpec::new(kind, file.input_dim, file.num_classes)
            .map_err(|e| Error::Config(e.to_string()))?;
        let server = ServerOptimizerConfig {
            kind: file.server_opt,
            lr: file.server_lr,
            beta1: file.server_beta1,
            beta2: file.server_beta2,
            tau: file.server_tau,
        };
        let settings = SimulationSettings {
            k: file.k,
            sampling: file.c,
            local: LocalTraining {
                epochs: file.e,
                batch_size: file.b,
                lr: file.lr,
                prox_mu: file.prox_mu,
                weight_decay: file.weight_decay,
            },
            lr_decay: file.lr_decay,
            decay_step: file.decay_step,
            method,
            cdf,
            bounds,
            model,
            server,
        };
        Ok(ExperimentConfig {
            rounds: file.t,
            settings,
            partition,
            data,
            seeds: file.seeds.clone(),
            output_dir: file.output_dir.clone(),
            file,
        })
    }
}
