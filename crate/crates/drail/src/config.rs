//! Augmentation plan files (TOML).
//!
//! ```toml
//! master_seed = 7
//!
//! [[rel_ops]]
//! kind = "hue_shift"
//! hue_delta_range = [-0.15, 0.15]
//!
//! [[rel_ops]]
//! kind = "sprite_composite"
//! sprites = ["leaf.png"]      # RGBA images, relative to the plan file
//! leaf_sprites = 8            # procedural leaf cutouts, added to `sprites`
//! count_range = [2, 5]
//! scale_range = [0.5, 1.0]
//! rotation_range = [0.0, 360.0]
//! placement = "uniform_in_mask"
//!
//! [pixmix]
//! k_max = 4
//! beta_alpha = 3.0
//! ops = ["additive", "multiplicative"]
//! corpus_seeds = 64           # a count, or an explicit list of seeds
//! corpus_base_seed = 0
//! ```
//!
//! Textures are generated at the observation resolution of the dataset
//! being augmented.

use std::path::{Path, PathBuf};

use drail_core::augment::{leaf_sprite, AugPlan, MixOp, PixMixParams, Placement, RelOp, Sprite};
use drail_core::fractal::{self, Family, FractalSpec};
use drail_core::Image;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const LEAF_SPRITE_SIZE: usize = 12;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PlanFile {
    pub master_seed: u64,
    #[serde(default)]
    pub rel_ops: Vec<RelOpFile>,
    #[serde(default)]
    pub pixmix: PixMixFile,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum RelOpFile {
    HueShift {
        hue_delta_range: (f64, f64),
    },
    SpriteComposite {
        #[serde(default)]
        sprites: Vec<PathBuf>,
        #[serde(default)]
        leaf_sprites: usize,
        count_range: (u32, u32),
        scale_range: (f64, f64),
        rotation_range: (f64, f64),
        #[serde(default = "uniform_in_mask")]
        placement: String,
    },
}

fn uniform_in_mask() -> String {
    "uniform_in_mask".into()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(untagged)]
pub enum CorpusSeeds {
    Count(usize),
    List(Vec<u64>),
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PixMixFile {
    #[serde(default = "default_k_max")]
    pub k_max: u32,
    #[serde(default = "default_beta")]
    pub beta_alpha: f64,
    #[serde(default = "default_ops")]
    pub ops: Vec<String>,
    #[serde(default = "default_corpus")]
    pub corpus_seeds: CorpusSeeds,
    #[serde(default)]
    pub corpus_base_seed: u64,
}

fn default_k_max() -> u32 {
    drail_core::augment::DEFAULT_K_MAX
}

fn default_beta() -> f64 {
    drail_core::augment::DEFAULT_BETA_ALPHA
}

fn default_ops() -> Vec<String> {
    vec!["additive".into(), "multiplicative".into()]
}

fn default_corpus() -> CorpusSeeds {
    CorpusSeeds::Count(fractal::DEFAULT_CORPUS_SIZE)
}

impl Default for PixMixFile {
    fn default() -> Self {
        Self {
            k_max: default_k_max(),
            beta_alpha: default_beta(),
            ops: default_ops(),
            corpus_seeds: default_corpus(),
            corpus_base_seed: 0,
        }
    }
}

impl PixMixFile {
    pub fn disabled() -> Self {
        Self { k_max: 0, corpus_seeds: CorpusSeeds::Count(0), ..Self::default() }
    }

    pub fn corpus_specs(&self, size: usize) -> Vec<FractalSpec> {
        match &self.corpus_seeds {
            CorpusSeeds::Count(n) => (0..*n).map(|i| fractal::corpus_spec(self.corpus_base_seed, i, size)).collect(),
            CorpusSeeds::List(seeds) => seeds
                .iter()
                .enumerate()
                .map(|(i, &seed)| FractalSpec { family: Family::ALL[i % Family::ALL.len()], seed, size })
                .collect(),
        }
    }
}

/// The four methods of the ablation matrix.
pub const PRESETS: [&str; 4] = ["drail", "no-irr", "no-rel", "no-dual"];

fn default_rel_ops() -> Vec<RelOpFile> {
    vec![
        RelOpFile::HueShift { hue_delta_range: (-0.15, 0.15) },
        RelOpFile::SpriteComposite {
            sprites: Vec::new(),
            leaf_sprites: 8,
            count_range: (2, 5),
            scale_range: (0.5, 1.0),
            rotation_range: (0.0, 360.0),
            placement: uniform_in_mask(),
        },
    ]
}

/// Built-in plan for one ablation method: `drail` uses both regions,
/// `no-irr` drops the background randomization, `no-rel` the target
/// transforms, `no-dual` both.
pub fn preset(name: &str, master_seed: u64) -> Result<PlanFile> {
    let (rel, irr) = match name {
        "drail" => (true, true),
        "no-irr" => (true, false),
        "no-rel" => (false, true),
        "no-dual" => (false, false),
        _ => return Err(Error::Config(format!("unknown preset {name:?}; expected one of {PRESETS:?}"))),
    };
    Ok(PlanFile {
        master_seed,
        rel_ops: if rel { default_rel_ops() } else { Vec::new() },
        pixmix: if irr { PixMixFile::default() } else { PixMixFile::disabled() },
    })
}

impl PlanFile {
    pub fn from_toml(text: &str) -> Result<Self> {
        toml::from_str(text).map_err(|e| Error::Config(e.to_string()))
    }

    pub fn load(path: &Path) -> Result<Self> {
        let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        let mut plan = Self::from_toml(&text).map_err(|e| Error::Config(format!("{}: {e}", path.display())))?;
        let base = path.parent().unwrap_or(Path::new("."));
        for op in &mut plan.rel_ops {
            if let RelOpFile::SpriteComposite { sprites, .. } = op {
                for p in sprites.iter_mut() {
                    if p.is_relative() {
                        *p = base.join(&*p);
                    }
                }
            }
        }
        Ok(plan)
    }

    pub fn to_toml(&self) -> String {
        toml::to_string(self).expect("plan serializes")
    }

    /// Resolves sprites and generates the texture corpus at `texture_size`.
    pub fn build(&self, texture_size: usize) -> Result<AugPlan> {
        let rel_ops = self.rel_ops.iter().map(build_rel_op).collect::<Result<Vec<_>>>()?;
        let p = &self.pixmix;
        let mut ops = Vec::new();
        for op in &p.ops {
            match op.as_str() {
                "additive" => ops.push(MixOp::Additive),
                "multiplicative" => ops.push(MixOp::Multiplicative),
                other => return Err(Error::Config(format!("unknown pixmix op {other:?}"))),
            }
        }
        let corpus = if p.k_max == 0 { Vec::new() } else { generate_corpus(&p.corpus_specs(texture_size))? };
        let irr = PixMixParams {
            k_max: p.k_max,
            beta_alpha: p.beta_alpha,
            additive: ops.contains(&MixOp::Additive),
            multiplicative: ops.contains(&MixOp::Multiplicative),
            corpus,
        };
        let plan = AugPlan { rel_ops, irr, master_seed: self.master_seed };
        plan.validate().map_err(|e| Error::Config(e.to_string()))?;
        Ok(plan)
    }
}

pub fn generate_corpus(specs: &[FractalSpec]) -> Result<Vec<Image>> {
    Ok(specs.par_iter().map(fractal::generate).collect::<Result<Vec<_>, _>>()?)
}

fn build_rel_op(op: &RelOpFile) -> Result<RelOp> {
    Ok(match op {
        RelOpFile::HueShift { hue_delta_range } => RelOp::HueShift { delta_range: *hue_delta_range },
        RelOpFile::SpriteComposite { sprites, leaf_sprites, count_range, scale_range, rotation_range, placement } => {
            if placement != "uniform_in_mask" {
                return Err(Error::Config(format!("unknown placement {placement:?}")));
            }
            let mut set = sprites.iter().map(|p| load_sprite(p)).collect::<Result<Vec<_>>>()?;
            set.extend((0..*leaf_sprites as u64).map(|i| leaf_sprite(LEAF_SPRITE_SIZE, i)));
            RelOp::SpriteComposite {
                sprites: set,
                count_range: *count_range,
                scale_range: *scale_range,
                rotation_range: *rotation_range,
                placement: Placement::UniformInMask,
            }
        }
    })
}

pub fn load_sprite(path: &Path) -> Result<Sprite> {
    let img = image::open(path).map_err(|source| Error::Image { path: path.into(), source })?.to_rgba8();
    let rgba: Vec<f32> = img.as_raw().iter().map(|&v| v as f32 / 255.0).collect();
    Ok(Sprite::from_straight_rgba(img.height() as usize, img.width() as usize, &rgba)?)
}
