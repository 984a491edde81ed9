//! Pipeline configuration: one TOML file with a section per module.
//!
//! Every field has a default, so an empty file (or no file) is valid.

use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::annotate::AnnotatorConfig;
use crate::approval::oracle::OracleConfig;
use crate::cluster::RefineConfig;
use crate::collage::CollageConfig;
use crate::error::{Error, Result};
use crate::features::FeatureConfig;
use crate::lsh::HasherConfig;
use crate::segment::SegmenterConfig;
use crate::synth::SyntheticConfig;
use crate::trainset::NegativeConfig;

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct Config {
    /// Seeds corpus generation and k-means initialization.
    pub seed: u64,
    pub synth: SyntheticConfig,
    pub segmenter: SegmenterConfig,
    pub features: FeatureConfig,
    pub lsh: HasherConfig,
    pub cluster: RefineConfig,
    pub collage: CollageConfig,
    pub oracle: OracleConfig,
    pub trainset: NegativeConfig,
    pub annotator: AnnotatorConfig,
}

impl Config {
    pub fn from_toml(text: &str) -> Result<Self> {
        let cfg: Config = toml::from_str(text).map_err(|e| Error::Config(e.message().to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            e => e,
        })
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }

    pub fn validate(&self) -> Result<()> {
        self.synth.validate()?;
        self.cluster.ap.validate()?;
        if self.cluster.k == 0 {
            return Err(Error::Config("cluster.k must be at least 1".into()));
        }
        if self.annotator.k == 0 {
            return Err(Error::Config("annotator.k must be at least 1".into()));
        }
        if self.annotator.seeds.is_empty() {
            return Err(Error::Config("annotator.seeds is empty".into()));
        }
        if self.lsh.w.is_nan() || self.lsh.w <= 0.0 || self.lsh.k_h == 0 {
            return Err(Error::Config("lsh needs w > 0 and k_h >= 1".into()));
        }
        if !(0.0..=1.0).contains(&self.oracle.theta) {
            return Err(Error::Config("oracle.theta outside [0, 1]".into()));
        }
        Ok(())
    }
}
