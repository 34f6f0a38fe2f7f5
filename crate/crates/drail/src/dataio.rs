//! Dataset persistence.
//!
//! Layout under a dataset root:
//!
//! ```text
//! meta.json                 dims, episode order, optional benchmark info
//! <episode>/frames/000000.png
//! <episode>/masks/000000.png  optional; nonzero samples are in-mask
//! <episode>/states.csv        one row per frame, no header
//! <episode>/actions.csv
//! ```
//!
//! Reals are written in shortest round-trip form, so states and actions
//! survive a save/load cycle bit-exactly. Observations are 8-bit.

use std::fs;
use std::path::{Path, PathBuf};

use drail_core::bench::{BenchConfig, BenchScenes, Env};
use drail_core::dataset::{Dataset, DatasetMeta, Episode, Frame};
use drail_core::propagate::propagate_mask;
use drail_core::{Image, Mask};
use image::{ColorType, DynamicImage};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const META_FILE: &str = "meta.json";

/// Benchmark provenance, used to re-render scenes for closed-loop rollouts.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchInfo {
    pub env: String,
    pub seed: u64,
    pub config: BenchConfigFile,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfigFile {
    pub canvas: usize,
    pub world: f64,
    pub fov: f64,
    pub target_radius: f64,
    pub base_hsv: (f64, f64, f64),
    pub test_hue_delta: f64,
    pub steps: usize,
    pub step_length: f64,
    pub clutter: usize,
    pub distractors: (usize, usize),
}

impl From<BenchConfig> for BenchConfigFile {
    fn from(c: BenchConfig) -> Self {
        Self {
            canvas: c.canvas,
            world: c.world,
            fov: c.fov,
            target_radius: c.target_radius,
            base_hsv: c.base_hsv,
            test_hue_delta: c.test_hue_delta,
            steps: c.steps,
            step_length: c.step_length,
            clutter: c.clutter,
            distractors: c.distractors,
        }
    }
}

impl From<BenchConfigFile> for BenchConfig {
    fn from(c: BenchConfigFile) -> Self {
        Self {
            canvas: c.canvas,
            world: c.world,
            fov: c.fov,
            target_radius: c.target_radius,
            base_hsv: c.base_hsv,
            test_hue_delta: c.test_hue_delta,
            steps: c.steps,
            step_length: c.step_length,
            clutter: c.clutter,
            distractors: c.distractors,
        }
    }
}

impl BenchInfo {
    pub fn new(config: BenchConfig, env: Env, seed: u64) -> Self {
        Self { env: env.name().into(), seed, config: config.into() }
    }

    pub fn scenes(&self) -> Result<BenchScenes> {
        let env = Env::parse(&self.env).ok_or_else(|| Error::Config(format!("unknown benchmark env {:?}", self.env)))?;
        Ok(BenchScenes { config: self.config.into(), env, seed: self.seed })
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MetaFile {
    pub height: usize,
    pub width: usize,
    pub channels: usize,
    pub state_dim: usize,
    pub action_dim: usize,
    /// Episode directories in dataset order.
    pub episodes: Vec<String>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub bench: Option<BenchInfo>,
}

impl MetaFile {
    pub fn meta(&self) -> DatasetMeta {
        DatasetMeta {
            height: self.height,
            width: self.width,
            channels: self.channels,
            state_dim: self.state_dim,
            action_dim: self.action_dim,
        }
    }
}

pub fn frame_name(i: usize) -> String {
    format!("{i:06}.png")
}

/// Episode ids become directory names, so they must be a single plain path
/// component.
pub fn check_episode_id(id: &str) -> Result<()> {
    if id.is_empty() || id == "." || id == ".." || id.contains(['/', '\\']) || id == META_FILE {
        return Err(Error::Config(format!("episode id {id:?} is not a valid directory name")));
    }
    Ok(())
}

pub fn read_json<T: serde::de::DeserializeOwned>(path: &Path) -> Result<T> {
    let text = fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    serde_json::from_str(&text).map_err(|source| Error::Json { path: path.into(), source })
}

pub fn write_json<T: Serialize>(path: &Path, value: &T) -> Result<()> {
    let mut text = serde_json::to_string_pretty(value).map_err(|source| Error::Json { path: path.into(), source })?;
    text.push('\n');
    fs::write(path, text).map_err(|e| Error::io(path, e))
}

pub fn read_meta(root: &Path) -> Result<Option<MetaFile>> {
    let path = root.join(META_FILE);
    if !path.exists() {
        return Ok(None);
    }
    read_json(&path).map(Some)
}

fn read_rows(path: &Path) -> Result<Vec<Vec<f64>>> {
    let mut reader = csv::ReaderBuilder::new()
        .has_headers(false)
        .flexible(true)
        .from_path(path)
        .map_err(|source| Error::Csv { path: path.into(), source })?;
    let mut rows = Vec::new();
    for (line, record) in reader.records().enumerate() {
        let record = record.map_err(|source| Error::Csv { path: path.into(), source })?;
        let row = record
            .iter()
            .map(|field| {
                field.trim().parse::<f64>().map_err(|_| {
                    Error::format(path, format!("row {}: {field:?} is not a real number", line + 1))
                })
            })
            .collect::<Result<Vec<_>>>()?;
        rows.push(row);
    }
    Ok(rows)
}

fn write_rows(path: &Path, rows: &[Vec<f64>]) -> Result<()> {
    let mut writer = csv::WriterBuilder::new()
        .has_headers(false)
        .from_path(path)
        .map_err(|source| Error::Csv { path: path.into(), source })?;
    for row in rows {
        writer
            .write_record(row.iter().map(|v| v.to_string()))
            .map_err(|source| Error::Csv { path: path.into(), source })?;
    }
    writer.flush().map_err(|e| Error::io(path, e))
}

fn decode(path: &Path) -> Result<DynamicImage> {
    image::open(path).map_err(|source| Error::Image { path: path.into(), source })
}

/// Reads an observation. `channels` forces 1 or 3 channels; `None` keeps
/// grayscale files grayscale and converts everything else to RGB.
pub fn read_image(path: &Path, channels: Option<usize>) -> Result<Image> {
    let img = decode(path)?;
    let gray = matches!(img.color(), ColorType::L8 | ColorType::L16 | ColorType::La8 | ColorType::La16);
    let (w, h) = (img.width() as usize, img.height() as usize);
    let out = match channels.unwrap_or(if gray { 1 } else { 3 }) {
        1 => Image::from_u8(h, w, 1, img.to_luma8().as_raw()),
        3 => Image::from_u8(h, w, 3, img.to_rgb8().as_raw()),
        c => return Err(Error::format(path, format!("unsupported channel count {c}"))),
    };
    out.map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_image(path: &Path, img: &Image) -> Result<()> {
    let color = match img.channels() {
        1 => image::ExtendedColorType::L8,
        _ => image::ExtendedColorType::Rgb8,
    };
    image::save_buffer(path, &img.to_u8(), img.width() as u32, img.height() as u32, color)
        .map_err(|source| Error::Image { path: path.into(), source })
}

/// Reads a mask; any nonzero colour sample marks the pixel as in-mask.
pub fn read_mask(path: &Path) -> Result<Mask> {
    let img = decode(path)?.to_rgba16();
    let (w, h) = (img.width() as usize, img.height() as usize);
    let raw: Vec<u8> = img.pixels().map(|p| u8::from(p.0[..3].iter().any(|&v| v != 0))).collect();
    Mask::from_nonzero(h, w, &raw).map_err(|e| Error::format(path, e.to_string()))
}

pub fn write_mask(path: &Path, m: &Mask) -> Result<()> {
    let bytes: Vec<u8> = m.data().iter().map(|&v| if v != 0 { 255 } else { 0 }).collect();
    image::save_buffer(path, &bytes, m.width() as u32, m.height() as u32, image::ExtendedColorType::L8)
        .map_err(|source| Error::Image { path: path.into(), source })
}

fn count_frames(dir: &Path) -> Result<usize> {
    let mut n = 0;
    while dir.join(frame_name(n)).is_file() {
        n += 1;
    }
    let entries = fs::read_dir(dir).map_err(|e| Error::io(dir, e))?;
    let pngs = entries
        .filter_map(|e| e.ok())
        .filter(|e| e.path().extension().is_some_and(|x| x == "png"))
        .count();
    if pngs != n {
        return Err(Error::format(dir, format!("frame files are not numbered 000000..{n:06} contiguously")));
    }
    Ok(n)
}

/// Loads one episode directory. Missing masks after an available one are
/// filled by propagating the previous mask.
pub fn load_episode(dir: &Path, id: &str, channels: Option<usize>) -> Result<Episode> {
    let frames_dir = dir.join("frames");
    let n = count_frames(&frames_dir)?;
    let observations = (0..n)
        .map(|i| read_image(&frames_dir.join(frame_name(i)), channels))
        .collect::<Result<Vec<_>>>()?;
    let masks_dir = dir.join("masks");
    let mut masks: Vec<Option<Mask>> = Vec::with_capacity(n);
    for i in 0..n {
        let path = masks_dir.join(frame_name(i));
        let mask = if path.is_file() {
            Some(read_mask(&path)?)
        } else if let (Some(Some(prev)), true) = (masks.last(), i > 0) {
            Some(propagate_mask(prev, &observations[i - 1], &observations[i])?)
        } else {
            None
        };
        masks.push(mask);
    }
    let states = read_rows(&dir.join("states.csv"))?;
    let actions = read_rows(&dir.join("actions.csv"))?;
    if states.len() != n || actions.len() != n {
        return Err(Error::format(
            dir,
            format!("episode {id}: {n} frames but {} state rows and {} action rows", states.len(), actions.len()),
        ));
    }
    let frames = observations.into_iter().zip(masks).map(|(observation, mask)| Frame { observation, mask }).collect();
    let ep = Episode { id: id.into(), frames, states, actions };
    ep.validate().map_err(|e| Error::format(dir, e.to_string()))?;
    Ok(ep)
}

fn episode_dirs(root: &Path) -> Result<Vec<String>> {
    let mut ids = Vec::new();
    for entry in fs::read_dir(root).map_err(|e| Error::io(root, e))? {
        let entry = entry.map_err(|e| Error::io(root, e))?;
        if entry.path().join("frames").is_dir() {
            ids.push(entry.file_name().to_string_lossy().into_owned());
        }
    }
    ids.sort();
    Ok(ids)
}

/// Loads a dataset. Episode order comes from `meta.json` when present and
/// is lexicographic otherwise. A root without episodes gives an empty
/// dataset.
pub fn load_dataset(root: &Path) -> Result<Dataset> {
    let meta = read_meta(root)?;
    let ids = match &meta {
        Some(m) => m.episodes.clone(),
        None => episode_dirs(root)?,
    };
    let channels = meta.as_ref().map(|m| m.channels);
    let episodes = ids
        .par_iter()
        .map(|id| {
            check_episode_id(id)?;
            load_episode(&root.join(id), id, channels)
        })
        .collect::<Result<Vec<_>>>()?;
    let fallback = meta.as_ref().map(MetaFile::meta).unwrap_or_default();
    Dataset::new(episodes, fallback).map_err(|e| Error::format(root, e.to_string()))
}

/// Writes a dataset; `bench` is recorded in `meta.json` when given.
pub fn save_dataset(dataset: &Dataset, root: &Path, bench: Option<BenchInfo>) -> Result<()> {
    for ep in &dataset.episodes {
        check_episode_id(&ep.id)?;
    }
    fs::create_dir_all(root).map_err(|e| Error::io(root, e))?;
    dataset.episodes.par_iter().try_for_each(|ep| save_episode(ep, &root.join(&ep.id)))?;
    let m = dataset.meta;
    let meta = MetaFile {
        height: m.height,
        width: m.width,
        channels: m.channels,
        state_dim: m.state_dim,
        action_dim: m.action_dim,
        episodes: dataset.episodes.iter().map(|e| e.id.clone()).collect(),
        bench,
    };
    write_json(&root.join(META_FILE), &meta)
}

fn save_episode(ep: &Episode, dir: &Path) -> Result<()> {
    let frames = dir.join("frames");
    let masks = dir.join("masks");
    fs::create_dir_all(&frames).map_err(|e| Error::io(&frames, e))?;
    if ep.frames.iter().any(|f| f.mask.is_some()) {
        fs::create_dir_all(&masks).map_err(|e| Error::io(&masks, e))?;
    }
    for (i, f) in ep.frames.iter().enumerate() {
        write_image(&frames.join(frame_name(i)), &f.observation)?;
        if let Some(m) = &f.mask {
            write_mask(&masks.join(frame_name(i)), m)?;
        }
    }
    write_rows(&dir.join("states.csv"), &ep.states)?;
    write_rows(&dir.join("actions.csv"), &ep.actions)
}

/// Every file under `root`, relative and sorted; used to compare runs.
pub fn list_files(root: &Path) -> Result<Vec<PathBuf>> {
    fn walk(base: &Path, dir: &Path, out: &mut Vec<PathBuf>) -> Result<()> {
        for entry in fs::read_dir(dir).map_err(|e| Error::io(dir, e))? {
            let path = entry.map_err(|e| Error::io(dir, e))?.path();
            if path.is_dir() {
                walk(base, &path, out)?;
            } else {
                out.push(path.strip_prefix(base).unwrap_or(&path).to_path_buf());
            }
        }
        Ok(())
    }
    let mut out = Vec::new();
    walk(root, root, &mut out)?;
    out.sort();
    Ok(out)
}
