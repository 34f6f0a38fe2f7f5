//! Synthetic reaching benchmark.
//!
//! A camera mounted on a virtual end-effector looks down on a world with a
//! coloured disc (the target). The world is a square of side `world`; the
//! camera covers `fov` world units around the end-effector position, so the
//! target is always in view. The expert takes unit-direction steps of fixed
//! length toward the disc centre, shortened on the last step so it does not
//! overshoot; the state `s` is the end-effector position. The
//! demonstration environment shows the base target colour on a flat
//! background; the test environment rotates the target hue by a held-out
//! delta and adds clutter and distractors.
//!
//! A tiny policy (MLP encoder on the downsampled image, linear head on
//! features and state) is behavior-cloned by minimizing mean squared
//! action error.

use alloc::format;
use alloc::string::String;
use alloc::vec;
use alloc::vec::Vec;

use rand::Rng as _;

use crate::dataset::{Dataset, DatasetMeta, Episode, Frame};
use crate::image::{hsv_to_rgb_px, Image, Mask};
use crate::math::{pairwise_sum, sqrt};
use crate::nn::{permutation, Adam, Mlp, Trace};
use crate::rng::{self, Rng};
use crate::{Error, Result};

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Env {
    Demo,
    Test,
}

impl Env {
    pub fn name(self) -> &'static str {
        match self {
            Env::Demo => "demo",
            Env::Test => "test",
        }
    }

    pub fn parse(s: &str) -> Option<Env> {
        match s {
            "demo" => Some(Env::Demo),
            "test" => Some(Env::Test),
            _ => None,
        }
    }

    fn tag(self) -> u64 {
        match self {
            Env::Demo => 0xde,
            Env::Test => 0x7e,
        }
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchConfig {
    pub canvas: usize,
    /// Side of the square holding targets and start positions.
    pub world: f64,
    /// World units spanned by the camera image.
    pub fov: f64,
    /// Target radius in pixels.
    pub target_radius: f64,
    /// Target colour in the demonstration environment, HSV in `[0, 1]`.
    pub base_hsv: (f64, f64, f64),
    /// Hue rotation applied to the target in the test environment.
    pub test_hue_delta: f64,
    pub steps: usize,
    /// Expert step length, world units.
    pub step_length: f64,
    /// Clutter shapes in the test environment background.
    pub clutter: usize,
    /// Inclusive range of distractor counts in the test environment.
    pub distractors: (usize, usize),
}

impl Default for BenchConfig {
    fn default() -> Self {
        Self {
            canvas: 64,
            world: 12.0,
            fov: 24.0,
            target_radius: 6.0,
            base_hsv: (0.0, 0.85, 0.9),
            test_hue_delta: 0.25,
            steps: 20,
            step_length: 1.0,
            clutter: 20,
            distractors: (0, 1),
        }
    }
}

impl BenchConfig {
    /// Pixels per world unit.
    pub fn scale(&self) -> f64 {
        self.canvas as f64 / self.fov
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Target {
    /// World coordinates `(y, x)`.
    pub center: (f64, f64),
    /// World units.
    pub radius: f64,
    pub color_hsv: (f64, f64, f64),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum Shape {
    Disc,
    Square,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Distractor {
    pub shape: Shape,
    pub color: [f32; 3],
    pub center: (f64, f64),
    /// Radius or half side, world units.
    pub size: f64,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum BackgroundStyle {
    Flat,
    Clutter,
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct Background {
    pub style: BackgroundStyle,
    /// Number of clutter shapes; unused for flat backgrounds.
    pub clutter: usize,
    pub palette_seed: u64,
    /// Clutter hues are drawn from `[lo, lo + width)` on the hue circle.
    pub hue_band: (f64, f64),
}

#[derive(Debug, Clone, PartialEq)]
pub struct SceneSpec {
    pub canvas: usize,
    pub world: f64,
    pub fov: f64,
    /// Camera (end-effector) position in world coordinates.
    pub camera: (f64, f64),
    pub target: Target,
    pub distractors: Vec<Distractor>,
    pub background: Background,
}

fn hsv_color(h: f64, s: f64, v: f64) -> [f32; 3] {
    let (r, g, b) = hsv_to_rgb_px(h - libm::floor(h), s, v);
    [r as f32, g as f32, b as f32]
}

#[derive(Debug, Clone, Copy)]
struct Blob {
    color: [f32; 3],
    center: (f64, f64),
    half: (f64, f64),
    round: bool,
}

impl Blob {
    fn hit(&self, p: (f64, f64)) -> bool {
        let dy = (p.0 - self.center.0) / self.half.0;
        let dx = (p.1 - self.center.1) / self.half.1;
        if self.round {
            dy * dy + dx * dx <= 1.0
        } else {
            dy.abs() <= 1.0 && dx.abs() <= 1.0
        }
    }
}

/// Clutter covers `[-1, 2]` in units of the world side, which contains
/// every view from inside the world when `fov <= 2 * world`.
const CLUTTER_EXTENT: (f64, f64) = (-1.0, 2.0);

fn background_layers(bg: Background, world: f64) -> ([f32; 3], Vec<Blob>) {
    let mut rng = rng::stream(bg.palette_seed, &[rng::tag::SCENE, 0xb9]);
    let base = hsv_color(rng.random(), rng.random_range(0.05..0.3), rng.random_range(0.3..0.55));
    if bg.style == BackgroundStyle::Flat {
        return (base, Vec::new());
    }
    let (lo, hi) = CLUTTER_EXTENT;
    let blobs = (0..bg.clutter)
        .map(|_| Blob {
            color: hsv_color(
                bg.hue_band.0 + bg.hue_band.1 * rng.random::<f64>(),
                rng.random_range(0.1..0.6),
                rng.random_range(0.25..0.85),
            ),
            center: (world * rng.random_range(lo..hi), world * rng.random_range(lo..hi)),
            half: (world * rng.random_range(0.06..0.3), world * rng.random_range(0.06..0.3)),
            round: rng.random::<bool>(),
        })
        .collect();
    (base, blobs)
}

impl SceneSpec {
    /// World coordinates of the centre of pixel `(y, x)`.
    pub fn pixel_to_world(&self, y: usize, x: usize) -> (f64, f64) {
        let scale = self.canvas as f64 / self.fov;
        let half = self.canvas as f64 / 2.0;
        (
            self.camera.0 + (y as f64 + 0.5 - half) / scale,
            self.camera.1 + (x as f64 + 0.5 - half) / scale,
        )
    }

    /// Same scene seen from another end-effector position.
    pub fn with_camera(&self, camera: (f64, f64)) -> SceneSpec {
        SceneSpec { camera, ..self.clone() }
    }

    fn in_target(&self, p: (f64, f64)) -> bool {
        let t = &self.target;
        let dy = p.0 - t.center.0;
        let dx = p.1 - t.center.1;
        dy * dy + dx * dx <= t.radius * t.radius
    }
}

/// Rasterize a scene. The mask is the target's support, independent of the
/// background and distractors (the target is drawn last).
pub fn render(spec: &SceneSpec) -> (Image, Mask) {
    let n = spec.canvas;
    let (base, blobs) = background_layers(spec.background, spec.world);
    let t = spec.target;
    let target_color = hsv_color(t.color_hsv.0, t.color_hsv.1, t.color_hsv.2);
    let mut img = Image::zeros(n, n, 3);
    let mut mask = Mask::zeros(n, n);
    for y in 0..n {
        for x in 0..n {
            let p = spec.pixel_to_world(y, x);
            let mut color = base;
            for b in &blobs {
                if b.hit(p) {
                    color = b.color;
                }
            }
            for d in &spec.distractors {
                let dy = p.0 - d.center.0;
                let dx = p.1 - d.center.1;
                let hit = match d.shape {
                    Shape::Disc => dy * dy + dx * dx <= d.size * d.size,
                    Shape::Square => dy.abs() <= d.size && dx.abs() <= d.size,
                };
                if hit {
                    color = d.color;
                }
            }
            if spec.in_target(p) {
                color = target_color;
                mask.set(y, x, true);
            }
            img.pixel_mut(y, x).copy_from_slice(&color);
        }
    }
    (img, mask)
}

const HUE_GAP: f64 = 0.2;

/// Scene and start position for episode `index` of an environment.
pub fn scene_for(config: &BenchConfig, env: Env, seed: u64, index: usize) -> SceneSpec {
    let mut rng = rng::stream(seed, &[rng::tag::SCENE, env.tag(), index as u64]);
    let radius = config.target_radius / config.scale();
    let w = config.world;
    let margin = radius + 0.05 * w;
    let center = (rng.random_range(margin..w - margin), rng.random_range(margin..w - margin));
    let camera = (w * rng.random::<f64>(), w * rng.random::<f64>());
    let (h, s, v) = config.base_hsv;
    let hue = match env {
        Env::Demo => h,
        Env::Test => h + config.test_hue_delta,
    };
    let palette_seed = rng.random::<u64>();
    // Clutter and distractors keep their hues at least HUE_GAP away from
    // both the demo and the test target hue.
    let lo = h + config.test_hue_delta.max(0.0) + HUE_GAP;
    let hue_band = (lo, (1.0 - 2.0 * HUE_GAP - config.test_hue_delta.abs()).max(0.0));
    let distractors = match env {
        Env::Demo => Vec::new(),
        Env::Test => (0..rng.random_range(config.distractors.0..=config.distractors.1.max(config.distractors.0)))
            .map(|_| Distractor {
                shape: if rng.random::<bool>() { Shape::Square } else { Shape::Disc },
                color: hsv_color(
                    hue_band.0 + hue_band.1 * rng.random::<f64>(),
                    rng.random_range(0.3..1.0),
                    rng.random_range(0.3..1.0),
                ),
                center: (w * rng.random_range(-0.5..1.5), w * rng.random_range(-0.5..1.5)),
                size: rng.random_range(0.8..1.5) * radius,
            })
            .collect(),
    };
    SceneSpec {
        canvas: config.canvas,
        world: config.world,
        fov: config.fov,
        camera,
        target: Target { center, radius, color_hsv: (hue - libm::floor(hue), s, v) },
        distractors,
        background: Background {
            style: match env {
                Env::Demo => BackgroundStyle::Flat,
                Env::Test => BackgroundStyle::Clutter,
            },
            palette_seed,
            clutter: config.clutter,
            hue_band,
        },
    }
}

/// Expert action: a step of `step_length` along the unit direction to the
/// target, or the remaining offset when closer than that.
pub fn expert_action(step_length: f64, target: (f64, f64), state: &[f64]) -> Vec<f64> {
    let dy = target.0 - state[0];
    let dx = target.1 - state[1];
    let dist = sqrt(dy * dy + dx * dx);
    if dist <= step_length {
        return vec![dy, dx];
    }
    let k = step_length / dist;
    vec![k * dy, k * dx]
}

pub fn episode_id(index: usize) -> String {
    format!("ep{index:06}")
}

/// Inverse of [`episode_id`].
pub fn episode_index(id: &str) -> Option<usize> {
    id.strip_prefix("ep")?.parse().ok()
}

/// One scripted episode. The state is the end-effector position and each
/// frame is rendered from the camera at that position.
pub fn generate_episode(config: &BenchConfig, env: Env, seed: u64, index: usize) -> Episode {
    episode_from_scene(config, &scene_for(config, env, seed, index), episode_id(index))
}

/// Expert rollout in `spec`, starting from its camera position.
pub fn episode_from_scene(config: &BenchConfig, spec: &SceneSpec, id: String) -> Episode {
    let mut pos = vec![spec.camera.0, spec.camera.1];
    let mut frames = Vec::with_capacity(config.steps);
    let mut states = Vec::with_capacity(config.steps);
    let mut actions = Vec::with_capacity(config.steps);
    for _ in 0..config.steps {
        let (observation, mask) = render(&spec.with_camera((pos[0], pos[1])));
        let a = expert_action(config.step_length, spec.target.center, &pos);
        frames.push(Frame { observation, mask: Some(mask) });
        states.push(pos.clone());
        pos = vec![pos[0] + a[0], pos[1] + a[1]];
        actions.push(a);
    }
    Episode { id, frames, states, actions }
}

pub fn bench_meta(config: &BenchConfig) -> DatasetMeta {
    DatasetMeta {
        height: config.canvas,
        width: config.canvas,
        channels: 3,
        state_dim: 2,
        action_dim: 2,
    }
}

/// `n` scripted episodes. The std crate generates episodes in parallel via
/// [`generate_episode`]; the result is identical.
pub fn generate_episodes(n: usize, env: Env, seed: u64, config: &BenchConfig) -> Result<Dataset> {
    if n == 0 {
        return Err(Error::InvalidArgument("episode count must be >= 1".into()));
    }
    let episodes = (0..n).map(|i| generate_episode(config, env, seed, i)).collect();
    Dataset::new(episodes, bench_meta(config))
}

/// Handle for re-rendering the scenes behind a generated dataset, used for
/// closed-loop rollouts.
#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BenchScenes {
    pub config: BenchConfig,
    pub env: Env,
    pub seed: u64,
}

impl BenchScenes {
    pub fn scene(&self, episode: &Episode) -> Result<SceneSpec> {
        let index = episode_index(&episode.id)
            .ok_or_else(|| Error::InvalidArgument(format!("episode id {} is not a benchmark id", episode.id)))?;
        Ok(scene_for(&self.config, self.env, self.seed, index))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct PolicyDims {
    pub obs_height: usize,
    pub obs_width: usize,
    pub obs_channels: usize,
    pub ds_height: usize,
    pub ds_width: usize,
    pub hidden: [usize; 2],
    pub state_dim: usize,
    pub action_dim: usize,
}

impl PolicyDims {
    pub fn for_meta(meta: &DatasetMeta, ds: (usize, usize), hidden: [usize; 2]) -> Self {
        Self {
            obs_height: meta.height,
            obs_width: meta.width,
            obs_channels: meta.channels,
            ds_height: ds.0,
            ds_width: ds.1,
            hidden,
            state_dim: meta.state_dim,
            action_dim: meta.action_dim,
        }
    }

    pub fn input_dim(&self) -> usize {
        self.ds_height * self.ds_width * self.obs_channels
    }

    pub fn feature_dim(&self) -> usize {
        self.hidden[1]
    }

    fn encoder_dims(&self) -> [usize; 3] {
        [self.input_dim(), self.hidden[0], self.hidden[1]]
    }

    fn head_dims(&self) -> [usize; 2] {
        [self.hidden[1] + self.state_dim, self.action_dim]
    }

    pub fn encoder_param_count(&self) -> usize {
        let [i, h0, h1] = self.encoder_dims();
        i * h0 + h0 + h0 * h1 + h1
    }

    pub fn head_param_count(&self) -> usize {
        let [i, o] = self.head_dims();
        i * o + o
    }
}

/// Affine state normalization `(s - mean) * scale` applied before the head.
#[derive(Debug, Clone, PartialEq)]
pub struct StateNorm {
    pub mean: Vec<f64>,
    pub scale: Vec<f64>,
}

impl StateNorm {
    pub fn identity(dim: usize) -> Self {
        Self { mean: vec![0.0; dim], scale: vec![1.0; dim] }
    }

    /// Per-dimension mean and inverse standard deviation over `states`;
    /// constant dimensions keep scale 1.
    pub fn fit<'a>(dim: usize, states: impl Iterator<Item = &'a [f64]>) -> Self {
        let states: Vec<&[f64]> = states.collect();
        if states.is_empty() {
            return Self::identity(dim);
        }
        let n = states.len() as f64;
        let mut norm = Self::identity(dim);
        for d in 0..dim {
            let col: Vec<f64> = states.iter().map(|s| s[d]).collect();
            let mean = pairwise_sum(&col) / n;
            let sq: Vec<f64> = col.iter().map(|v| (v - mean) * (v - mean)).collect();
            let std = sqrt(pairwise_sum(&sq) / n);
            norm.mean[d] = mean;
            norm.scale[d] = if std > 1e-9 { 1.0 / std } else { 1.0 };
        }
        norm
    }
}

/// Encoder: tanh MLP on the downsampled, centred image. Head: linear map
/// from `[features, normalized state]` to the action.
#[derive(Debug, Clone, PartialEq)]
pub struct TinyPolicy {
    dims: PolicyDims,
    encoder: Mlp,
    head: Mlp,
    state_norm: StateNorm,
}

/// Behavior-cloning sample with the image already preprocessed.
#[derive(Debug, Clone)]
pub struct BcSample {
    pub input: Vec<f64>,
    pub state: Vec<f64>,
    pub action: Vec<f64>,
}

impl TinyPolicy {
    pub fn new(dims: PolicyDims, rng: &mut Rng) -> Self {
        Self {
            encoder: Mlp::new(&dims.encoder_dims(), true, rng),
            head: Mlp::new(&dims.head_dims(), false, rng),
            state_norm: StateNorm::identity(dims.state_dim),
            dims,
        }
    }

    pub fn from_params(dims: PolicyDims, encoder: Vec<f64>, head: Vec<f64>) -> Result<Self> {
        let encoder = Mlp::from_params(&dims.encoder_dims(), true, encoder)
            .ok_or_else(|| Error::Checkpoint("encoder parameter count".into()))?;
        let head = Mlp::from_params(&dims.head_dims(), false, head)
            .ok_or_else(|| Error::Checkpoint("head parameter count".into()))?;
        if encoder.params().iter().chain(head.params()).any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite weight".into()));
        }
        Ok(Self { state_norm: StateNorm::identity(dims.state_dim), dims, encoder, head })
    }

    pub fn dims(&self) -> &PolicyDims {
        &self.dims
    }

    pub fn encoder(&self) -> &Mlp {
        &self.encoder
    }

    pub fn head(&self) -> &Mlp {
        &self.head
    }

    pub fn head_mut(&mut self) -> &mut Mlp {
        &mut self.head
    }

    pub fn param_count(&self) -> usize {
        self.encoder.params().len() + self.head.params().len()
    }

    /// Parameters flattened as encoder then head.
    pub fn flat_params(&self) -> Vec<f64> {
        let mut p = self.encoder.params().to_vec();
        p.extend_from_slice(self.head.params());
        p
    }

    pub fn set_flat_params(&mut self, p: &[f64]) {
        let n = self.encoder.params().len();
        self.encoder.params_mut().copy_from_slice(&p[..n]);
        self.head.params_mut().copy_from_slice(&p[n..]);
    }

    /// Round every stored value to the nearest `f32`, matching what a
    /// checkpoint stores.
    pub fn round_to_f32(&mut self) {
        let norm = &mut self.state_norm;
        let all = self.encoder.params_mut().iter_mut().chain(self.head.params_mut());
        for v in all.chain(norm.mean.iter_mut()).chain(norm.scale.iter_mut()) {
            *v = *v as f32 as f64;
        }
    }

    pub fn preprocess(&self, obs: &Image) -> Result<Vec<f64>> {
        let d = &self.dims;
        if obs.dims() != (d.obs_height, d.obs_width, d.obs_channels) {
            return Err(Error::shape(
                format!("{}x{}x{}", d.obs_height, d.obs_width, d.obs_channels),
                format!("{:?}", obs.dims()),
            ));
        }
        let small = obs.downsample(d.ds_height, d.ds_width)?;
        Ok(small.data().iter().map(|&v| v as f64 - 0.5).collect())
    }

    pub fn features(&self, obs: &Image) -> Result<Vec<f64>> {
        Ok(self.encoder.forward(&self.preprocess(obs)?))
    }

    pub fn state_norm(&self) -> &StateNorm {
        &self.state_norm
    }

    pub fn set_state_norm(&mut self, norm: StateNorm) -> Result<()> {
        let dim = self.dims.state_dim;
        if norm.mean.len() != dim || norm.scale.len() != dim {
            return Err(Error::shape(format!("state norm of dim {dim}"), format!("{}/{}", norm.mean.len(), norm.scale.len())));
        }
        if norm.mean.iter().chain(&norm.scale).any(|v| !v.is_finite()) {
            return Err(Error::Checkpoint("non-finite state normalization".into()));
        }
        self.state_norm = norm;
        Ok(())
    }

    fn head_input(&self, features: &[f64], state: &[f64]) -> Vec<f64> {
        let mut v = Vec::with_capacity(features.len() + state.len());
        v.extend_from_slice(features);
        let n = &self.state_norm;
        v.extend(state.iter().zip(&n.mean).zip(&n.scale).map(|((s, m), k)| (s - m) * k));
        v
    }

    pub fn act_preprocessed(&self, input: &[f64], state: &[f64]) -> Vec<f64> {
        let f = self.encoder.forward(input);
        self.head.forward(&self.head_input(&f, state))
    }

    pub fn act(&self, obs: &Image, state: &[f64]) -> Result<Vec<f64>> {
        if state.len() != self.dims.state_dim {
            return Err(Error::shape(format!("state dim {}", self.dims.state_dim), format!("{}", state.len())));
        }
        Ok(self.act_preprocessed(&self.preprocess(obs)?, state))
    }

    fn traces(&self, input: &[f64], state: &[f64]) -> (Trace, Trace) {
        let enc = self.encoder.trace(input);
        let head = self.head.trace(&self.head_input(enc.output(), state));
        (enc, head)
    }

    /// Accumulates the squared-error gradients of `batch` into `grad`
    /// (flat layout, samples added in order) and returns the summed loss
    /// `Σ ‖a - π(o, s)‖²`.
    pub fn accumulate_batch(&self, batch: &[&BcSample], grad: &mut [f64]) -> f64 {
        let inputs: Vec<&[f64]> = batch.iter().map(|s| s.input.as_slice()).collect();
        let enc = self.encoder.trace_batch(&inputs);
        let head_in: Vec<Vec<f64>> = enc.iter().zip(batch).map(|(t, s)| self.head_input(t.output(), &s.state)).collect();
        let head_refs: Vec<&[f64]> = head_in.iter().map(|v| v.as_slice()).collect();
        let head = self.head.trace_batch(&head_refs);
        let mut loss = 0.0;
        let go: Vec<Vec<f64>> = head
            .iter()
            .zip(batch)
            .map(|(t, s)| {
                t.output()
                    .iter()
                    .zip(&s.action)
                    .map(|(p, a)| {
                        loss += (p - a) * (p - a);
                        2.0 * (p - a)
                    })
                    .collect()
            })
            .collect();
        let n_enc = self.encoder.params().len();
        let (g_enc, g_head) = grad.split_at_mut(n_enc);
        let g_in = self.head.backward_batch(&head, &go, g_head, true).expect("input grad requested");
        let g_feat: Vec<Vec<f64>> = g_in.into_iter().map(|mut g| {
            g.truncate(self.dims.feature_dim());
            g
        }).collect();
        self.encoder.backward_batch(&enc, &g_feat, g_enc, false);
        loss
    }

    /// `∂‖π(o, s)‖² / ∂o` at full observation resolution, same layout as
    /// the image data.
    pub fn input_gradient(&self, obs: &Image, state: &[f64]) -> Result<Vec<f64>> {
        let input = self.preprocess(obs)?;
        let (enc, head) = self.traces(&input, state);
        let go: Vec<f64> = head.output().iter().map(|p| 2.0 * p).collect();
        let mut scratch_head = vec![0.0; self.head.params().len()];
        let mut scratch_enc = vec![0.0; self.encoder.params().len()];
        let g_in = self.head.backward(&head, &go, &mut scratch_head, true).unwrap();
        let g_small = self
            .encoder
            .backward(&enc, &g_in[..self.dims.feature_dim()], &mut scratch_enc, true)
            .unwrap();
        let d = &self.dims;
        let fy = d.obs_height / d.ds_height;
        let fx = d.obs_width / d.ds_width;
        let norm = 1.0 / (fy * fx) as f64;
        let c = d.obs_channels;
        let mut out = vec![0.0; d.obs_height * d.obs_width * c];
        for y in 0..d.obs_height {
            for x in 0..d.obs_width {
                for ch in 0..c {
                    let s = ((y / fy) * d.ds_width + x / fx) * c + ch;
                    out[(y * d.obs_width + x) * c + ch] = g_small[s] * norm;
                }
            }
        }
        Ok(out)
    }
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct BcHyper {
    pub lr: f64,
    pub batch_size: usize,
    pub epochs: usize,
    pub seed: u64,
    pub downsample: (usize, usize),
    pub hidden: [usize; 2],
}

impl Default for BcHyper {
    fn default() -> Self {
        Self { lr: 1e-3, batch_size: 64, epochs: 50, seed: 0, downsample: (32, 32), hidden: [64, 64] }
    }
}

/// Samples per gradient chunk. Chunk sums are combined in chunk order,
/// which fixes the floating-point accumulation order for any executor.
pub const GRAD_CHUNK: usize = 8;

/// Executes independent chunk jobs and reduces them. `job(c, buf)` adds
/// chunk `c`'s gradient into a zeroed `buf` and returns its loss.
/// Implementations may run jobs in parallel but must sum chunk gradients
/// into `out` (and losses) in chunk order, starting from zero.
pub trait ChunkMap {
    fn reduce_chunks(&self, n: usize, job: &(dyn Fn(usize, &mut [f64]) -> f64 + Sync), out: &mut [f64]) -> f64;
}

#[derive(Debug, Clone, Copy, Default)]
pub struct Sequential;

impl ChunkMap for Sequential {
    fn reduce_chunks(&self, n: usize, job: &(dyn Fn(usize, &mut [f64]) -> f64 + Sync), out: &mut [f64]) -> f64 {
        out.fill(0.0);
        let mut scratch = vec![0.0; out.len()];
        let mut loss = 0.0;
        for c in 0..n {
            scratch.fill(0.0);
            loss += job(c, &mut scratch);
            out.iter_mut().zip(&scratch).for_each(|(a, b)| *a += b);
        }
        loss
    }
}

/// Mean loss over `idx`; the mean gradient is written to `grad`.
pub fn batch_loss_grad_into(
    policy: &TinyPolicy,
    samples: &[BcSample],
    idx: &[usize],
    exec: &dyn ChunkMap,
    grad: &mut [f64],
) -> f64 {
    let chunks: Vec<&[usize]> = idx.chunks(GRAD_CHUNK).collect();
    let job = |c: usize, g: &mut [f64]| {
        let batch: Vec<&BcSample> = chunks[c].iter().map(|&i| &samples[i]).collect();
        policy.accumulate_batch(&batch, g)
    };
    let loss = exec.reduce_chunks(chunks.len(), &job, grad);
    let scale = 1.0 / idx.len() as f64;
    grad.iter_mut().for_each(|g| *g *= scale);
    loss * scale
}

/// Mean loss and mean gradient over `idx`.
pub fn batch_loss_grad(policy: &TinyPolicy, samples: &[BcSample], idx: &[usize], exec: &dyn ChunkMap) -> (f64, Vec<f64>) {
    let mut grad = vec![0.0; policy.param_count()];
    let loss = batch_loss_grad_into(policy, samples, idx, exec, &mut grad);
    (loss, grad)
}

/// Mean squared action error over every sample.
pub fn dataset_loss(policy: &TinyPolicy, samples: &[BcSample]) -> f64 {
    let mut per = Vec::with_capacity(samples.len());
    for chunk in samples.chunks(GRAD_CHUNK) {
        let inputs: Vec<&[f64]> = chunk.iter().map(|s| s.input.as_slice()).collect();
        let enc = policy.encoder.trace_batch(&inputs);
        for (t, s) in enc.iter().zip(chunk) {
            let p = policy.head.forward(&policy.head_input(t.output(), &s.state));
            per.push(p.iter().zip(&s.action).map(|(p, a)| (p - a) * (p - a)).sum::<f64>());
        }
    }
    pairwise_sum(&per) / samples.len().max(1) as f64
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub policy: TinyPolicy,
    /// Full-dataset loss before training.
    pub initial_loss: f64,
    /// Mean mini-batch loss of each epoch.
    pub epoch_losses: Vec<f64>,
    /// Full-dataset loss of the returned policy.
    pub final_loss: f64,
}

pub fn policy_dims(dataset: &Dataset, hyper: &BcHyper) -> PolicyDims {
    PolicyDims::for_meta(&dataset.meta, hyper.downsample, hyper.hidden)
}

pub fn initial_policy(dataset: &Dataset, hyper: &BcHyper) -> TinyPolicy {
    let dims = policy_dims(dataset, hyper);
    let mut policy = TinyPolicy::new(dims, &mut rng::stream(hyper.seed, &[rng::tag::INIT]));
    let states = dataset.episodes.iter().flat_map(|e| e.states.iter().map(|s| s.as_slice()));
    policy.state_norm = StateNorm::fit(dims.state_dim, states);
    policy
}

pub fn bc_samples(policy: &TinyPolicy, dataset: &Dataset) -> Result<Vec<BcSample>> {
    let mut samples = Vec::with_capacity(dataset.frame_count());
    for ep in &dataset.episodes {
        for ((f, s), a) in ep.frames.iter().zip(&ep.states).zip(&ep.actions) {
            samples.push(BcSample { input: policy.preprocess(&f.observation)?, state: s.clone(), action: a.clone() });
        }
    }
    Ok(samples)
}

pub fn train_bc(dataset: &Dataset, hyper: &BcHyper) -> Result<TrainOutcome> {
    train_bc_with(dataset, hyper, &Sequential)
}

/// Behavior cloning by mini-batch Adam on mean squared action error.
/// Shuffling is seeded per epoch; results do not depend on `exec`.
pub fn train_bc_with(dataset: &Dataset, hyper: &BcHyper, exec: &dyn ChunkMap) -> Result<TrainOutcome> {
    if dataset.frame_count() == 0 {
        return Err(Error::InvalidArgument("training dataset is empty".into()));
    }
    if hyper.batch_size == 0 {
        return Err(Error::Config("batch_size must be >= 1".into()));
    }
    let mut policy = initial_policy(dataset, hyper);
    let samples = bc_samples(&policy, dataset)?;
    let mut params = policy.flat_params();
    let mut opt = Adam::new(params.len(), hyper.lr);
    let initial_loss = dataset_loss(&policy, &samples);
    if !initial_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: 0, step: 0 });
    }
    let mut epoch_losses = Vec::with_capacity(hyper.epochs);
    let mut grad = vec![0.0; params.len()];
    for epoch in 1..=hyper.epochs {
        let order = permutation(samples.len(), &mut rng::stream(hyper.seed, &[rng::tag::SHUFFLE, epoch as u64]));
        let mut batch_losses = Vec::new();
        for (step, idx) in order.chunks(hyper.batch_size).enumerate() {
            let loss = batch_loss_grad_into(&policy, &samples, idx, exec, &mut grad);
            if !loss.is_finite() || grad.iter().any(|g| !g.is_finite()) {
                return Err(Error::NonFiniteLoss { epoch, step });
            }
            batch_losses.push(loss);
            opt.step(&mut params, &grad);
            policy.set_flat_params(&params);
        }
        epoch_losses.push(pairwise_sum(&batch_losses) / batch_losses.len() as f64);
    }
    let final_loss = if hyper.epochs == 0 { initial_loss } else { dataset_loss(&policy, &samples) };
    if !final_loss.is_finite() {
        return Err(Error::NonFiniteLoss { epoch: hyper.epochs, step: usize::MAX });
    }
    Ok(TrainOutcome { policy, initial_loss, epoch_losses, final_loss })
}

/// What a policy sees at one step.
#[derive(Debug, Clone, Copy)]
pub struct Step<'a> {
    pub episode: &'a Episode,
    pub observation: &'a Image,
    pub state: &'a [f64],
}

/// Anything that maps an observation and state to an action.
pub trait ActionPolicy {
    fn act_step(&self, step: &Step<'_>) -> Result<Vec<f64>>;
}

impl ActionPolicy for TinyPolicy {
    fn act_step(&self, step: &Step<'_>) -> Result<Vec<f64>> {
        self.act(step.observation, step.state)
    }
}

/// The scripted expert itself, reading the target from the scene.
#[derive(Debug, Clone, Copy)]
pub struct ScriptedExpert {
    pub scenes: BenchScenes,
}

impl ActionPolicy for ScriptedExpert {
    fn act_step(&self, step: &Step<'_>) -> Result<Vec<f64>> {
        let spec = self.scenes.scene(step.episode)?;
        Ok(expert_action(self.scenes.config.step_length, spec.target.center, step.state))
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct PolicyEval {
    pub mse: f64,
    /// Closed-loop terminal distance to the target centre, in pixels.
    pub endpoint_errors: Vec<f64>,
}

impl PolicyEval {
    pub fn mean_endpoint_error(&self) -> f64 {
        pairwise_sum(&self.endpoint_errors) / self.endpoint_errors.len().max(1) as f64
    }
}

/// Mean over frames of `‖a - π(o, s)‖²`.
pub fn action_mse(policy: &dyn ActionPolicy, dataset: &Dataset) -> Result<f64> {
    let mut errs = Vec::with_capacity(dataset.frame_count());
    for ep in &dataset.episodes {
        for ((f, s), a) in ep.frames.iter().zip(&ep.states).zip(&ep.actions) {
            let p = policy.act_step(&Step { episode: ep, observation: &f.observation, state: s })?;
            if p.len() != a.len() {
                return Err(Error::shape(format!("action dim {}", a.len()), format!("{}", p.len())));
            }
            errs.push(p.iter().zip(a).map(|(p, a)| (p - a) * (p - a)).sum::<f64>());
        }
    }
    Ok(pairwise_sum(&errs) / errs.len().max(1) as f64)
}

/// Closed-loop rollout of one episode's scene from its first state, for as
/// many steps as the episode has frames. Returns the terminal distance to
/// the target centre in pixels.
pub fn rollout_endpoint_error(policy: &dyn ActionPolicy, scenes: &BenchScenes, episode: &Episode) -> Result<f64> {
    let spec = scenes.scene(episode)?;
    let mut pos = episode.states.first().cloned().unwrap_or_else(|| vec![spec.camera.0, spec.camera.1]);
    for _ in 0..episode.len() {
        let (obs, _) = render(&spec.with_camera((pos[0], pos[1])));
        let a = policy.act_step(&Step { episode, observation: &obs, state: &pos })?;
        pos.iter_mut().zip(&a).for_each(|(p, a)| *p += a);
    }
    let dy = pos[0] - spec.target.center.0;
    let dx = pos[1] - spec.target.center.1;
    Ok(sqrt(dy * dy + dx * dx) * scenes.config.scale())
}

/// Action MSE on the dataset's frames and closed-loop endpoint error per
/// episode in the scenes that generated it.
pub fn eval_policy(policy: &dyn ActionPolicy, dataset: &Dataset, scenes: &BenchScenes) -> Result<PolicyEval> {
    let mse = action_mse(policy, dataset)?;
    let endpoint_errors = dataset
        .episodes
        .iter()
        .map(|ep| rollout_endpoint_error(policy, scenes, ep))
        .collect::<Result<Vec<_>>>()?;
    Ok(PolicyEval { mse, endpoint_errors })
}
