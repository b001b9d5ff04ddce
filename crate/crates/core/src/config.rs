//! Run-level configuration read from a TOML file.
//!
//! Every table mirrors a library type; omitted keys take the library
//! defaults, unknown keys are rejected.

use std::path::Path;

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dominance::MotionParams;
use crate::error::{Error, Result};
use crate::features::FeatureParams;
use crate::gbdt::GbdtHyperParams;
use crate::geometry::{PitchSpec, WeightParams};
use crate::synth::SynthConfig;

/// Hyperparameter lists; the grid is their cartesian product, with
/// max_depth varying slowest and n_trees fastest among the first three.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct ModelGrid {
    pub max_depth: Vec<usize>,
    pub learning_rate: Vec<f64>,
    pub n_trees: Vec<usize>,
    pub l2_lambda: Vec<f64>,
    pub gamma: Vec<f64>,
    pub subsample: Vec<f64>,
    pub min_child_weight: Vec<f64>,
}

impl Default for ModelGrid {
    fn default() -> Self {
        ModelGrid {
            max_depth: vec![3, 5],
            learning_rate: vec![0.1, 0.3],
            n_trees: vec![50, 100, 200],
            l2_lambda: vec![1.0],
            gamma: vec![0.0],
            subsample: vec![1.0],
            min_child_weight: vec![1.0],
        }
    }
}

impl ModelGrid {
    pub fn expand(&self, seed: u64) -> Result<Vec<GbdtHyperParams>> {
        let mut grid = Vec::new();
        for &max_depth in &self.max_depth {
            for &learning_rate in &self.learning_rate {
                for &n_trees in &self.n_trees {
                    for &l2_lambda in &self.l2_lambda {
                        for &gamma in &self.gamma {
                            for &subsample in &self.subsample {
                                for &min_child_weight in &self.min_child_weight {
                                    let hp = GbdtHyperParams {
                                        n_trees,
                                        max_depth,
                                        learning_rate,
                                        min_child_weight,
                                        l2_lambda,
                                        gamma,
                                        subsample,
                                        seed,
                                    };
                                    hp.validate()?;
                                    grid.push(hp);
                                }
                            }
                        }
                    }
                }
            }
        }
        if grid.is_empty() {
            return Err(Error::Config("model grid is empty".into()));
        }
        Ok(grid)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct CvConfig {
    pub k: usize,
    pub seed: u64,
}

impl Default for CvConfig {
    fn default() -> Self {
        CvConfig { k: 5, seed: 0 }
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RenderConfig {
    pub show_voronoi_boundaries: bool,
    pub show_scores: bool,
    /// Score percentiles mapped to the ends of the colormap.
    pub colormap_percentiles: (f64, f64),
    /// Frames per second of animated renders.
    pub animation_fps: f64,
}

impl Default for RenderConfig {
    fn default() -> Self {
        RenderConfig {
            show_voronoi_boundaries: false,
            show_scores: true,
            colormap_percentiles: (5.0, 95.0),
            animation_fps: 5.0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Default, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct RunConfig {
    /// Default seed when `--seed` is not given.
    pub seed: u64,
    /// Probability at or above which a pass is predicted successful.
    pub threshold: Threshold,
    pub pitch: PitchSpec,
    pub motion: MotionParams,
    pub weight: WeightParams,
    pub features: FeatureParams,
    pub model: ModelGrid,
    pub cv: CvConfig,
    pub synth: SynthConfig,
    pub render: RenderConfig,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct Threshold(pub f64);

impl Default for Threshold {
    fn default() -> Self {
        Threshold(0.5)
    }
}

impl RunConfig {
    pub fn from_toml_str(text: &str) -> Result<Self> {
        let cfg: RunConfig = toml::from_str(text).map_err(|e| Error::Config(e.to_string()))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        Self::from_toml_str(&text).map_err(|e| match e {
            Error::Config(m) => Error::Config(format!("{}: {m}", path.display())),
            other => other,
        })
    }

    pub fn validate(&self) -> Result<()> {
        let wrap = |e: Error| Error::Config(e.to_string());
        self.pitch.validate().map_err(wrap)?;
        MotionParams::new(self.motion.reaction_time, self.motion.max_speed).map_err(wrap)?;
        WeightParams::new(self.weight.beta).map_err(wrap)?;
        if self.features.n < 1 {
            return Err(Error::Config("features.n must be >= 1".into()));
        }
        self.model.expand(self.seed).map_err(wrap)?;
        if self.cv.k < 2 {
            return Err(Error::Config("cv.k must be >= 2".into()));
        }
        self.synth.validate().map_err(wrap)?;
        let t = self.threshold.0;
        if !(t > 0.0 && t < 1.0) {
            return Err(Error::Config(format!("threshold must lie in (0, 1), got {t}")));
        }
        let (lo, hi) = self.render.colormap_percentiles;
        if !(0.0..=100.0).contains(&lo) || !(0.0..=100.0).contains(&hi) || lo >= hi {
            return Err(Error::Config("render.colormap_percentiles must satisfy 0 <= lo < hi <= 100".into()));
        }
        if !(self.render.animation_fps > 0.0) {
            return Err(Error::Config("render.animation_fps must be positive".into()));
        }
        Ok(())
    }

    pub fn grid(&self, seed: u64) -> Result<Vec<GbdtHyperParams>> {
        self.model.expand(seed)
    }

    /// SHA-256 of the resolved configuration (defaults filled in), hex encoded.
    pub fn hash(&self) -> String {
        let canonical = serde_json::to_vec(self).expect("config serializes");
        hex::encode(Sha256::digest(&canonical))
    }

    /// Resolved configuration as TOML, for writing a template.
    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("config serializes")
    }
}

/// Hex SHA-256 of a byte string.
pub fn sha256_hex(bytes: &[u8]) -> String {
    hex::encode(Sha256::digest(bytes))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::features::RankingVariable;

    #[test]
    fn empty_file_gives_defaults() {
        let c = RunConfig::from_toml_str("").unwrap();
        assert_eq!(c, RunConfig::default());
        assert_eq!(c.grid(0).unwrap(), crate::gbdt::default_grid(0));
    }

    #[test]
    fn keys_override_defaults() {
        let c = RunConfig::from_toml_str(
            "# comment\nseed = 9\n[pitch]\ngrid_cell = 0.25\n[features]\nn = 1\nranking = \"time_to_player\"\n",
        )
        .unwrap();
        assert_eq!(c.seed, 9);
        assert_eq!(c.pitch.grid_cell, 0.25);
        assert_eq!(c.features.n, 1);
        assert_eq!(c.features.ranking, RankingVariable::TimeToPlayer);
        assert_eq!(c.pitch.length, 105.0);
    }

    #[test]
    fn unknown_and_invalid_keys_rejected() {
        assert!(RunConfig::from_toml_str("bogus = 1").is_err());
        assert!(RunConfig::from_toml_str("[weight]\nbeta = 1.5").is_err());
        assert!(RunConfig::from_toml_str("[cv]\nk = 1").is_err());
        assert!(RunConfig::from_toml_str("[model]\nn_trees = []").is_err());
    }

    #[test]
    fn template_round_trips_and_hash_is_stable() {
        let c = RunConfig::default();
        let back = RunConfig::from_toml_str(&c.to_toml()).unwrap();
        assert_eq!(back, c);
        assert_eq!(back.hash(), c.hash());
        let other = RunConfig { seed: 1, ..c.clone() };
        assert_ne!(other.hash(), c.hash());
    }
}
