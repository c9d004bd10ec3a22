use std::path::{Path, PathBuf};

use duet_core::format::SplitSpec;
use duet_core::harness::{sample_random_subset, table5_manifest, StageConfigs, SubsetSpec, SuiteManifest};
use duet_core::head::HeadConfig;
use duet_core::stgcn::StgcnConfig;
use duet_core::synth::SynthConfig;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::failure::Failure;

/// One document configuring every stage. Unknown keys are rejected.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct RunConfig {
    /// When set, replaces the seed of every stage.
    pub seed: Option<u64>,
    pub synth: SynthConfig,
    pub split: SplitSpec,
    pub backbone: StgcnConfig,
    pub head: HeadConfig,
    pub suite: SuiteSection,
    pub paths: Paths,
}

impl Default for RunConfig {
    fn default() -> Self {
        RunConfig {
            seed: None,
            synth: SynthConfig::default(),
            split: SplitSpec::kinesics_default(),
            backbone: StgcnConfig::desk(),
            head: HeadConfig::default(),
            suite: SuiteSection::default(),
            paths: Paths::default(),
        }
    }
}

#[derive(Debug, Clone, Default, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct Paths {
    pub root: Option<PathBuf>,
    pub container: Option<PathBuf>,
    pub checkpoint: Option<PathBuf>,
    pub features: Option<PathBuf>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SuiteSection {
    pub manifest: ManifestSource,
    /// Seed of the suite; each experiment uses `seed ^ experiment_id`.
    pub seed: u64,
}

impl Default for SuiteSection {
    fn default() -> Self {
        SuiteSection {
            manifest: ManifestSource::Table5,
            seed: 0,
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum ManifestSource {
    Table5,
    Random {
        count: u32,
        min_size: usize,
        max_size: usize,
    },
    Subsets {
        subsets: Vec<SubsetSpec>,
    },
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<Self, Failure> {
        let text = std::fs::read_to_string(path).map_err(|e| Failure::io(path, e))?;
        serde_json::from_str(&text).map_err(|e| Failure::contract(format!("{}: {e}", path.display())))
    }

    /// Applies a flag seed, then pushes the top-level seed into every stage.
    pub fn resolve(mut self, seed_flag: Option<u64>) -> Result<Self, Failure> {
        if seed_flag.is_some() {
            self.seed = seed_flag;
        }
        if let Some(seed) = self.seed {
            self.synth.seed = seed;
            self.backbone.seed = seed;
            self.head.seed = seed;
            self.suite.seed = seed;
        }
        self.synth.validate()?;
        self.backbone.validate()?;
        self.head.validate()?;
        Ok(self)
    }

    pub fn digest(&self) -> String {
        let canonical = serde_json::to_string(self).expect("config serializes");
        hex::encode(Sha256::digest(canonical.as_bytes()))
    }

    pub fn stages(&self) -> StageConfigs {
        StageConfigs {
            backbone: self.backbone.clone(),
            head: self.head.clone(),
        }
    }

    pub fn manifest(&self) -> Result<SuiteManifest, Failure> {
        let subsets = match &self.suite.manifest {
            ManifestSource::Table5 => table5_manifest().subsets,
            ManifestSource::Random {
                count,
                min_size,
                max_size,
            } => {
                let mut rng = ChaCha8Rng::seed_from_u64(self.suite.seed);
                (0..*count)
                    .map(|id| sample_random_subset(&mut rng, id, *min_size, *max_size))
                    .collect::<Result<_, _>>()?
            }
            ManifestSource::Subsets { subsets } => subsets.clone(),
        };
        let manifest = SuiteManifest {
            subsets,
            split: self.split.clone(),
            seed: self.suite.seed,
        };
        manifest.validate()?;
        Ok(manifest)
    }
}
