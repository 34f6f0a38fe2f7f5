//! Dual-region observation augmentation.
//!
//! The augmented observation is
//! `composite(rel(o ⊙ m), irr(o ⊙ (1 - m)), m)`: a task-relevant transform
//! applied inside the mask, a texture-mixing randomization applied outside
//! it, and a hard composite of the two. Both transforms are clipped to
//! their own region so the composite always sees disjoint supports.
//!
//! Randomness: relevant-region draws come from a per-episode stream (the
//! same draws for every frame of an episode), irrelevant-region draws from
//! a per-frame stream. Streams are keyed by `(master_seed, episode, frame)`.

use alloc::format;
use alloc::string::String;
use alloc::vec::Vec;

use rand::Rng as _;
use rand_distr::{Beta, Distribution};

use crate::dataset::{Dataset, Episode, Frame};
use crate::image::{composite, hadamard, hsv_to_rgb_px, rgb_to_hsv_px, Image, Mask};
use crate::math::{abs, clamp01, cos, floor, pow, sin};
use crate::rng::{self, Rng};
use crate::{Error, Result};

pub const DEFAULT_K_MAX: u32 = 4;
pub const DEFAULT_BETA_ALPHA: f64 = 3.0;

/// RGBA sprite stored with premultiplied alpha.
#[derive(Debug, Clone, PartialEq)]
pub struct Sprite {
    height: usize,
    width: usize,
    premultiplied: Vec<f32>,
}

impl Sprite {
    /// Builds a sprite from straight (non-premultiplied) RGBA samples in `[0, 1]`.
    pub fn from_straight_rgba(height: usize, width: usize, rgba: &[f32]) -> Result<Self> {
        if height == 0 || width == 0 || rgba.len() != height * width * 4 {
            return Err(Error::shape(
                format!("{} RGBA samples", height * width * 4),
                format!("{}", rgba.len()),
            ));
        }
        if rgba.iter().any(|v| !(0.0..=1.0).contains(v)) {
            return Err(Error::InvalidArgument("sprite sample outside [0, 1]".into()));
        }
        let mut premultiplied = Vec::with_capacity(rgba.len());
        for px in rgba.chunks_exact(4) {
            let a = px[3];
            premultiplied.extend_from_slice(&[px[0] * a, px[1] * a, px[2] * a, a]);
        }
        Ok(Self { height, width, premultiplied })
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    fn texel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * 4;
        &self.premultiplied[i..i + 4]
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Default)]
pub enum Placement {
    #[default]
    UniformInMask,
}

#[derive(Debug, Clone, PartialEq)]
pub enum RelOp {
    /// Rotate the hue of in-mask pixels by a per-episode draw from
    /// `delta_range`, expressed as a fraction of the hue circle.
    HueShift { delta_range: (f64, f64) },
    /// Paste sprites centred on in-mask pixels at random scale and rotation.
    SpriteComposite {
        sprites: Vec<Sprite>,
        count_range: (u32, u32),
        scale_range: (f64, f64),
        /// Degrees.
        rotation_range: (f64, f64),
        placement: Placement,
    },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum MixOp {
    Additive,
    Multiplicative,
}

#[derive(Debug, Clone, PartialEq)]
pub struct PixMixParams {
    pub k_max: u32,
    pub beta_alpha: f64,
    pub additive: bool,
    pub multiplicative: bool,
    pub corpus: Vec<Image>,
}

impl PixMixParams {
    /// Zero mixing rounds: the irrelevant region passes through unchanged.
    pub fn disabled() -> Self {
        Self {
            k_max: 0,
            beta_alpha: DEFAULT_BETA_ALPHA,
            additive: true,
            multiplicative: true,
            corpus: Vec::new(),
        }
    }

    pub fn with_corpus(corpus: Vec<Image>) -> Self {
        Self { k_max: DEFAULT_K_MAX, corpus, ..Self::disabled() }
    }

    fn ops(&self) -> Vec<MixOp> {
        let mut ops = Vec::with_capacity(2);
        if self.additive {
            ops.push(MixOp::Additive);
        }
        if self.multiplicative {
            ops.push(MixOp::Multiplicative);
        }
        ops
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugPlan {
    pub rel_ops: Vec<RelOp>,
    pub irr: PixMixParams,
    pub master_seed: u64,
}

fn ordered(name: &str, (lo, hi): (f64, f64)) -> Result<()> {
    if !(lo.is_finite() && hi.is_finite() && lo <= hi) {
        return Err(Error::Config(format!("{name}: range [{lo}, {hi}] is not ordered")));
    }
    Ok(())
}

impl AugPlan {
    /// No relevant-region ops and zero mixing rounds.
    pub fn identity(master_seed: u64) -> Self {
        Self { rel_ops: Vec::new(), irr: PixMixParams::disabled(), master_seed }
    }

    pub fn validate(&self) -> Result<()> {
        for op in &self.rel_ops {
            match op {
                RelOp::HueShift { delta_range } => ordered("hue_delta_range", *delta_range)?,
                RelOp::SpriteComposite { sprites, count_range, scale_range, rotation_range, .. } => {
                    if sprites.is_empty() {
                        return Err(Error::Config("sprite_composite requires a non-empty sprite set".into()));
                    }
                    if count_range.0 > count_range.1 {
                        return Err(Error::Config("count_range is not ordered".into()));
                    }
                    ordered("scale_range", *scale_range)?;
                    if scale_range.0 <= 0.0 {
                        return Err(Error::Config("scale_range must be positive".into()));
                    }
                    ordered("rotation_range", *rotation_range)?;
                }
            }
        }
        let irr = &self.irr;
        if !(irr.beta_alpha > 0.0 && irr.beta_alpha.is_finite()) {
            return Err(Error::Config(format!("beta_alpha must be > 0, got {}", irr.beta_alpha)));
        }
        if irr.k_max > 0 {
            if irr.corpus.is_empty() {
                return Err(Error::Config("texture corpus is empty while k_max > 0".into()));
            }
            if !irr.additive && !irr.multiplicative {
                return Err(Error::Config("no mixing operator enabled".into()));
            }
        }
        Ok(())
    }

    /// Per-episode stream for relevant-region draws.
    pub fn rel_stream(&self, episode_key: u64) -> Rng {
        rng::stream(self.master_seed, &[rng::tag::REL, episode_key])
    }

    /// Per-frame stream for irrelevant-region draws.
    pub fn irr_stream(&self, episode_key: u64, frame_id: u64) -> Rng {
        rng::stream(self.master_seed, &[rng::tag::IRR, episode_key, frame_id])
    }
}

fn draw(rng: &mut Rng, (lo, hi): (f64, f64)) -> f64 {
    if lo == hi {
        lo
    } else {
        rng.random_range(lo..=hi)
    }
}

/// Rotate the hue of every in-mask pixel by `delta` (fraction of the circle).
pub fn hue_shift(o: &Image, m: &Mask, delta: f64) -> Result<Image> {
    if o.channels() != 3 {
        return Err(Error::shape("3 channels", format!("{} channels", o.channels())));
    }
    let mut out = o.clone();
    for y in 0..o.height() {
        for x in 0..o.width() {
            if !m.get(y, x) {
                continue;
            }
            let px = out.pixel_mut(y, x);
            let (h, s, v) = rgb_to_hsv_px(px[0] as f64, px[1] as f64, px[2] as f64);
            let h = h + delta;
            let (r, g, b) = hsv_to_rgb_px(h - floor(h), s, v);
            px[0] = clamp01(r) as f32;
            px[1] = clamp01(g) as f32;
            px[2] = clamp01(b) as f32;
        }
    }
    Ok(out)
}

/// Premultiplied-over composite of one sprite centred at `(cy, cx)`.
/// Only pixels with `m = 1` are written.
pub fn paste_sprite(
    o: &mut Image,
    m: &Mask,
    sprite: &Sprite,
    cy: f64,
    cx: f64,
    scale: f64,
    rotation_deg: f64,
) {
    let theta = rotation_deg.to_radians();
    let (st, ct) = (sin(theta), cos(theta));
    let half_h = sprite.height as f64 * scale / 2.0;
    let half_w = sprite.width as f64 * scale / 2.0;
    let reach = libm::sqrt(half_h * half_h + half_w * half_w);
    let y0 = floor(cy - reach).max(0.0) as usize;
    let x0 = floor(cx - reach).max(0.0) as usize;
    let y1 = ((cy + reach) as usize + 1).min(o.height());
    let x1 = ((cx + reach) as usize + 1).min(o.width());
    let channels = o.channels();
    for y in y0..y1 {
        for x in x0..x1 {
            if !m.get(y, x) {
                continue;
            }
            // Inverse rotate-scale into sprite coordinates.
            let dy = y as f64 + 0.5 - cy;
            let dx = x as f64 + 0.5 - cx;
            let u = (ct * dx + st * dy) / scale + sprite.width as f64 / 2.0;
            let v = (-st * dx + ct * dy) / scale + sprite.height as f64 / 2.0;
            if u < 0.0 || v < 0.0 || u >= sprite.width as f64 || v >= sprite.height as f64 {
                continue;
            }
            let t = sprite.texel(v as usize, u as usize);
            let alpha = t[3];
            if alpha <= 0.0 {
                continue;
            }
            let px = o.pixel_mut(y, x);
            for c in 0..channels {
                let src = if channels == 3 { t[c] } else { (t[0] + t[1] + t[2]) / 3.0 };
                px[c] = (src + px[c] * (1.0 - alpha)).clamp(0.0, 1.0);
            }
        }
    }
}

/// Procedural leaf cutout: a pointed green ellipse with a darker midrib and
/// a one-pixel soft edge. Used as a default sprite set.
pub fn leaf_sprite(size: usize, seed: u64) -> Sprite {
    let mut rng = rng::stream(seed, &[rng::tag::SPRITE]);
    let (r, g, b) = hsv_to_rgb_px(rng.random_range(0.3..0.4), rng.random_range(0.5..0.9), rng.random_range(0.35..0.8));
    let aspect = rng.random_range(0.3..0.5);
    let n = size.max(4);
    let half = n as f64 / 2.0;
    let mut rgba = Vec::with_capacity(n * n * 4);
    for y in 0..n {
        for x in 0..n {
            let u = (x as f64 + 0.5 - half) / half;
            let v = (y as f64 + 0.5 - half) / (half * aspect);
            // Narrow the ellipse toward both tips.
            let width = 1.0 - u * u;
            let d = if width > 0.0 { v * v / width + u * u } else { 2.0 };
            let alpha = clamp01((1.0 - d) * half * aspect);
            let shade = if abs(v) < 0.12 { 0.7 } else { 1.0 };
            rgba.extend_from_slice(&[(r * shade) as f32, (g * shade) as f32, (b * shade) as f32, alpha as f32]);
        }
    }
    Sprite::from_straight_rgba(n, n, &rgba).expect("leaf sprite samples are in range")
}

/// Task-relevant augmentation. `rng` must be the episode's relevant-region
/// stream, freshly created for each frame so draws repeat across frames.
/// Output support is clipped to `m`.
pub fn apply_rel(o_masked: &Image, m: &Mask, rel_ops: &[RelOp], rng: &mut Rng) -> Result<Image> {
    let mut out = o_masked.clone();
    for op in rel_ops {
        match op {
            RelOp::HueShift { delta_range } => {
                let delta = draw(rng, *delta_range);
                out = hue_shift(&out, m, delta)?;
            }
            RelOp::SpriteComposite { sprites, count_range, scale_range, rotation_range, placement } => {
                if sprites.is_empty() {
                    return Err(Error::Config("sprite_composite requires a non-empty sprite set".into()));
                }
                let Placement::UniformInMask = placement;
                let count = rng.random_range(count_range.0..=count_range.1);
                let inside: Vec<(usize, usize)> = (0..m.height())
                    .flat_map(|y| (0..m.width()).map(move |x| (y, x)))
                    .filter(|&(y, x)| m.get(y, x))
                    .collect();
                for _ in 0..count {
                    let sprite = &sprites[rng.random_range(0..sprites.len())];
                    let scale = draw(rng, *scale_range);
                    let rotation = draw(rng, *rotation_range);
                    // Quantile into the raster-ordered in-mask pixels, so the
                    // same draw lands on the same part of a moving mask.
                    let q: f64 = rng.random();
                    if inside.is_empty() {
                        continue;
                    }
                    let (cy, cx) = inside[((q * inside.len() as f64) as usize).min(inside.len() - 1)];
                    paste_sprite(&mut out, m, sprite, cy as f64 + 0.5, cx as f64 + 0.5, scale, rotation);
                }
            }
        }
    }
    hadamard(&out, m)
}

/// One mixing round on a single sample.
#[inline]
pub fn mix_sample(x: f64, t: f64, op: MixOp, lambda: f64) -> f64 {
    match op {
        MixOp::Additive => clamp01(lambda * x + (1.0 - lambda) * t),
        MixOp::Multiplicative => clamp01(pow(x, lambda) * pow(t, 1.0 - lambda)),
    }
}

/// Mix `texture` into the samples of `x` selected by `region`.
pub fn mix_round(x: &mut Image, region: &Mask, texture: &Image, op: MixOp, lambda: f64) {
    let tex = if (texture.height(), texture.width()) != (x.height(), x.width()) {
        texture.resize_nearest(x.height(), x.width())
    } else {
        texture.clone()
    };
    let channels = x.channels();
    for y in 0..x.height() {
        for xx in 0..x.width() {
            if !region.get(y, xx) {
                continue;
            }
            let t = tex.pixel(y, xx);
            let px = x.pixel_mut(y, xx);
            for c in 0..channels {
                let tv = if tex.channels() == channels { t[c] } else { t[0] };
                px[c] = mix_sample(px[c] as f64, tv as f64, op, lambda) as f32;
            }
        }
    }
}

/// Task-irrelevant randomization: `k ~ U{0..k_max}` rounds of texture mixing
/// with `λ ~ Beta(α, α)`. Output support is clipped to `m_complement`.
pub fn apply_irr(
    o_masked: &Image,
    m_complement: &Mask,
    params: &PixMixParams,
    rng: &mut Rng,
) -> Result<Image> {
    let mut out = o_masked.clone();
    if params.k_max > 0 {
        if params.corpus.is_empty() {
            return Err(Error::Config("texture corpus is empty while k_max > 0".into()));
        }
        let ops = params.ops();
        if ops.is_empty() {
            return Err(Error::Config("no mixing operator enabled".into()));
        }
        let beta = Beta::new(params.beta_alpha, params.beta_alpha)
            .map_err(|e| Error::Config(format!("beta_alpha: {e}")))?;
        let rounds = rng.random_range(0..=params.k_max);
        for _ in 0..rounds {
            let texture = &params.corpus[rng.random_range(0..params.corpus.len())];
            let op = ops[rng.random_range(0..ops.len())];
            let lambda = beta.sample(rng);
            mix_round(&mut out, m_complement, texture, op, lambda);
        }
    }
    hadamard(&out, m_complement)
}

/// Augment one observation. Deterministic in
/// `(plan.master_seed, episode_key, frame_id)`.
pub fn augment_observation(
    o: &Image,
    m: &Mask,
    plan: &AugPlan,
    episode_key: u64,
    frame_id: u64,
) -> Result<Image> {
    let background = m.complement();
    let rel = apply_rel(&hadamard(o, m)?, m, &plan.rel_ops, &mut plan.rel_stream(episode_key))?;
    let irr = apply_irr(
        &hadamard(o, &background)?,
        &background,
        &plan.irr,
        &mut plan.irr_stream(episode_key, frame_id),
    )?;
    composite(&rel, &irr, m)
}

/// Id of the `copy`-th augmented variant of an episode.
pub fn augmented_id(source: &str, copy: usize) -> String {
    format!("{source}_aug{copy}")
}

/// One augmented copy of an episode; states and actions are copied as-is.
pub fn augment_episode(ep: &Episode, plan: &AugPlan, copy: usize) -> Result<Episode> {
    let id = augmented_id(&ep.id, copy);
    let key = rng::hash_str(&id);
    let frames = ep
        .frames
        .iter()
        .enumerate()
        .map(|(i, f)| {
            let m = f.mask.as_ref().ok_or_else(|| {
                Error::InvalidArgument(format!("episode {}: frame {i} has no mask", ep.id))
            })?;
            Ok(Frame {
                observation: augment_observation(&f.observation, m, plan, key, i as u64)?,
                mask: Some(m.clone()),
            })
        })
        .collect::<Result<Vec<_>>>()?;
    Ok(Episode { id, frames, states: ep.states.clone(), actions: ep.actions.clone() })
}

#[derive(Debug, Clone, PartialEq)]
pub struct SkippedEpisode {
    pub id: String,
    pub reason: String,
}

#[derive(Debug, Clone, PartialEq)]
pub struct AugmentedDataset {
    pub dataset: Dataset,
    pub skipped: Vec<SkippedEpisode>,
}

/// Emit `copies` augmented variants of every episode. `copies = 0` returns
/// the input unchanged. Episodes with a missing mask are skipped and
/// reported.
pub fn augment_dataset(dataset: &Dataset, plan: &AugPlan, copies: usize) -> Result<AugmentedDataset> {
    plan.validate()?;
    if copies == 0 {
        return Ok(AugmentedDataset { dataset: dataset.clone(), skipped: Vec::new() });
    }
    let mut episodes = Vec::with_capacity(dataset.episodes.len() * copies);
    let mut skipped = Vec::new();
    for ep in &dataset.episodes {
        match (0..copies).map(|k| augment_episode(ep, plan, k)).collect::<Result<Vec<_>>>() {
            Ok(eps) => episodes.extend(eps),
            Err(e) => skipped.push(SkippedEpisode { id: ep.id.clone(), reason: format!("{e}") }),
        }
    }
    Ok(AugmentedDataset { dataset: Dataset { episodes, meta: dataset.meta }, skipped })
}
