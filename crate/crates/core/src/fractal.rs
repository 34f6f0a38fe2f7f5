//! Procedural fractal textures used as the mixing corpus for background
//! randomization.
//!
//! Three families are provided. Palettes and tone curves are fixed
//! constants per family; the seed picks geometry and a palette phase.

use alloc::vec;
use alloc::vec::Vec;
use core::f64::consts::TAU;

use rand::Rng as _;

use crate::image::Image;
use crate::math::{cos, floor, log, sin, sqrt};
use crate::rng::{self, mix64};
use crate::{Error, Result};

pub const MIN_SIZE: usize = 16;
/// Chaos-game iterations accumulated for `IfsFlame`.
pub const IFS_POINTS: usize = 150_000;
pub const JULIA_MAX_ITER: u32 = 96;
pub const FBM_OCTAVES: u32 = 5;
pub const FBM_PERSISTENCE: f64 = 0.5;
/// Default number of textures in a mixing corpus.
pub const DEFAULT_CORPUS_SIZE: usize = 64;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub enum Family {
    IfsFlame,
    Julia,
    FbmNoise,
}

impl Family {
    pub const ALL: [Family; 3] = [Family::IfsFlame, Family::Julia, Family::FbmNoise];

    pub fn name(self) -> &'static str {
        match self {
            Family::IfsFlame => "ifs_flame",
            Family::Julia => "julia",
            Family::FbmNoise => "fbm_noise",
        }
    }

    pub fn parse(s: &str) -> Option<Family> {
        Family::ALL.into_iter().find(|f| f.name() == s)
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash)]
pub struct FractalSpec {
    pub family: Family,
    pub seed: u64,
    pub size: usize,
}

/// Cosine palette `a + b * cos(2π (c t + d))`, constants per family.
struct Palette {
    a: [f64; 3],
    b: [f64; 3],
    c: [f64; 3],
    d: [f64; 3],
}

impl Palette {
    fn eval(&self, t: f64, phase: f64) -> [f64; 3] {
        let mut out = [0.0; 3];
        for i in 0..3 {
            out[i] = self.a[i] + self.b[i] * cos(TAU * (self.c[i] * t + self.d[i] + phase));
        }
        out
    }
}

const IFS_PALETTE: Palette = Palette {
    a: [0.5, 0.5, 0.5],
    b: [0.5, 0.5, 0.5],
    c: [1.0, 1.0, 1.0],
    d: [0.0, 0.33, 0.67],
};

const JULIA_PALETTE: Palette = Palette {
    a: [0.5, 0.5, 0.5],
    b: [0.5, 0.5, 0.5],
    c: [1.0, 0.7, 0.4],
    d: [0.0, 0.15, 0.20],
};

const FBM_PALETTE: Palette = Palette {
    a: [0.5, 0.5, 0.5],
    b: [0.5, 0.5, 0.5],
    c: [2.0, 1.0, 0.0],
    d: [0.5, 0.2, 0.25],
};

pub fn generate(spec: &FractalSpec) -> Result<Image> {
    if spec.size < MIN_SIZE {
        return Err(Error::InvalidArgument(alloc::format!(
            "fractal size {} below minimum {MIN_SIZE}",
            spec.size
        )));
    }
    Ok(match spec.family {
        Family::IfsFlame => ifs_flame(spec.seed, spec.size),
        Family::Julia => julia(spec.seed, spec.size),
        Family::FbmNoise => fbm_noise(spec.seed, spec.size),
    })
}

/// Spec for the `index`-th corpus entry: families cycle, seeds derive from
/// `base_seed` and the index.
pub fn corpus_spec(base_seed: u64, index: usize, size: usize) -> FractalSpec {
    FractalSpec {
        family: Family::ALL[index % Family::ALL.len()],
        seed: rng::derive_seed(base_seed, &[rng::tag::FRACTAL, index as u64]),
        size,
    }
}

/// Sequential corpus generation. The std crate offers a parallel variant
/// built on [`corpus_spec`]; both produce identical images.
pub fn corpus(base_seed: u64, count: usize, size: usize) -> Result<Vec<Image>> {
    (0..count).map(|i| generate(&corpus_spec(base_seed, i, size))).collect()
}

#[derive(Clone, Copy)]
struct AffineMap {
    m: [f64; 6],
    variation: u8,
    color: f64,
}

fn ifs_flame(seed: u64, size: usize) -> Image {
    let mut rng = rng::stream(seed, &[rng::tag::FRACTAL, 1]);
    let n_maps = rng.random_range(3..=5);
    let maps: Vec<AffineMap> = (0..n_maps)
        .map(|i| {
            // Random rotation-scale-shear with spectral radius kept below 1.
            let theta = rng.random::<f64>() * TAU;
            let scale = 0.35 + 0.45 * rng.random::<f64>();
            let shear = rng.random::<f64>() - 0.5;
            let (s, c) = (sin(theta), cos(theta));
            AffineMap {
                m: [
                    scale * c,
                    scale * (-s + shear * c),
                    rng.random::<f64>() * 1.2 - 0.6,
                    scale * s,
                    scale * (c + shear * s),
                    rng.random::<f64>() * 1.2 - 0.6,
                ],
                variation: rng.random_range(0..3),
                color: i as f64 / n_maps as f64,
            }
        })
        .collect();

    let mut pts = Vec::with_capacity(IFS_POINTS);
    let (mut x, mut y, mut col) = (rng.random::<f64>() - 0.5, rng.random::<f64>() - 0.5, 0.5);
    for i in 0..IFS_POINTS + 32 {
        let f = &maps[rng.random_range(0..maps.len())];
        let ax = f.m[0] * x + f.m[1] * y + f.m[2];
        let ay = f.m[3] * x + f.m[4] * y + f.m[5];
        (x, y) = match f.variation {
            0 => (ax, ay),
            1 => (sin(ax), sin(ay)),
            _ => {
                let r2 = ax * ax + ay * ay + 1e-6;
                let k = if r2 < 1.0 { 1.0 } else { 1.0 / r2 };
                (ax * k, ay * k)
            }
        };
        col = 0.5 * (col + f.color);
        if i >= 32 && x.is_finite() && y.is_finite() {
            pts.push((x, y, col));
        }
    }

    let (mut x0, mut x1, mut y0, mut y1) = (f64::MAX, f64::MIN, f64::MAX, f64::MIN);
    for &(px, py, _) in &pts {
        x0 = x0.min(px);
        x1 = x1.max(px);
        y0 = y0.min(py);
        y1 = y1.max(py);
    }
    let sx = (x1 - x0).max(1e-9);
    let sy = (y1 - y0).max(1e-9);

    let mut count = vec![0u32; size * size];
    let mut color = vec![[0.0f64; 3]; size * size];
    let phase = rng.random::<f64>();
    for &(px, py, c) in &pts {
        let ix = (((px - x0) / sx) * (size - 1) as f64) as usize;
        let iy = (((py - y0) / sy) * (size - 1) as f64) as usize;
        let k = iy.min(size - 1) * size + ix.min(size - 1);
        count[k] += 1;
        let rgb = IFS_PALETTE.eval(c, phase);
        for ch in 0..3 {
            color[k][ch] += rgb[ch];
        }
    }

    let max_count = count.iter().copied().max().unwrap_or(1).max(1) as f64;
    let norm = log(1.0 + max_count);
    Image::from_fn(size, size, 3, |y, x, c| {
        let k = y * size + x;
        let n = count[k];
        if n == 0 {
            return 0.0;
        }
        let alpha = log(1.0 + n as f64) / norm;
        // Gamma 1/2.2 on the log density.
        let alpha = libm::pow(alpha, 1.0 / 2.2);
        (color[k][c] / n as f64 * alpha) as f32
    })
}

fn julia(seed: u64, size: usize) -> Image {
    let mut rng = rng::stream(seed, &[rng::tag::FRACTAL, 2]);
    let theta = rng.random::<f64>() * TAU;
    let radius = 0.7885;
    let (cr, ci) = (radius * cos(theta), radius * sin(theta));
    let zoom = 1.4 + 0.4 * rng.random::<f64>();
    let phase = rng.random::<f64>();
    let rot = rng.random::<f64>() * TAU;
    let (rs, rc) = (sin(rot), cos(rot));
    Image::from_fn(size, size, 3, |y, x, c| {
        // Channels share one escape-time evaluation; recomputing per
        // channel is cheap at texture sizes and keeps this closure pure.
        let u = (x as f64 + 0.5) / size as f64 * 2.0 - 1.0;
        let v = (y as f64 + 0.5) / size as f64 * 2.0 - 1.0;
        let mut zr = zoom * (rc * u - rs * v);
        let mut zi = zoom * (rs * u + rc * v);
        let mut n = 0;
        while n < JULIA_MAX_ITER && zr * zr + zi * zi <= 16.0 {
            let t = zr * zr - zi * zi + cr;
            zi = 2.0 * zr * zi + ci;
            zr = t;
            n += 1;
        }
        if n == JULIA_MAX_ITER {
            return 0.05;
        }
        let mag = sqrt(zr * zr + zi * zi).max(1.0 + 1e-12);
        let smooth = n as f64 + 1.0 - log(log(mag)) / core::f64::consts::LN_2;
        let t = smooth / JULIA_MAX_ITER as f64;
        JULIA_PALETTE.eval(sqrt(t.max(0.0)) * 3.0, phase)[c] as f32
    })
}

fn lattice(seed: u64, ix: i64, iy: i64) -> f64 {
    let h = mix64(seed ^ mix64(ix as u64 ^ mix64(iy as u64)));
    (h >> 11) as f64 / (1u64 << 53) as f64
}

fn value_noise(seed: u64, x: f64, y: f64) -> f64 {
    let fx = floor(x);
    let fy = floor(y);
    let (ix, iy) = (fx as i64, fy as i64);
    let (tx, ty) = (x - fx, y - fy);
    let sx = tx * tx * (3.0 - 2.0 * tx);
    let sy = ty * ty * (3.0 - 2.0 * ty);
    let a = lattice(seed, ix, iy);
    let b = lattice(seed, ix + 1, iy);
    let c = lattice(seed, ix, iy + 1);
    let d = lattice(seed, ix + 1, iy + 1);
    let top = a + (b - a) * sx;
    let bottom = c + (d - c) * sx;
    top + (bottom - top) * sy
}

fn fbm(seed: u64, x: f64, y: f64) -> f64 {
    let mut amp = 1.0;
    let mut freq = 1.0;
    let mut total = 0.0;
    let mut norm = 0.0;
    for o in 0..FBM_OCTAVES {
        total += amp * value_noise(mix64(seed ^ o as u64), x * freq, y * freq);
        norm += amp;
        amp *= FBM_PERSISTENCE;
        freq *= 2.0;
    }
    total / norm
}

fn fbm_noise(seed: u64, size: usize) -> Image {
    let mut rng = rng::stream(seed, &[rng::tag::FRACTAL, 3]);
    let base_cells = 3.0 + 3.0 * rng.random::<f64>();
    let phase = rng.random::<f64>();
    let field_seed = rng.random::<u64>();
    let warp_seed = rng.random::<u64>();
    let mut field = vec![0.0f64; size * size];
    for y in 0..size {
        for x in 0..size {
            let u = x as f64 / size as f64 * base_cells;
            let v = y as f64 / size as f64 * base_cells;
            // Light domain warp adds swirl structure on top of plain fBm.
            let w = fbm(warp_seed, u, v) * 2.0;
            field[y * size + x] = fbm(field_seed, u + w, v - w);
        }
    }
    // Stretch to the full palette range.
    let lo = field.iter().copied().fold(f64::MAX, f64::min);
    let hi = field.iter().copied().fold(f64::MIN, f64::max);
    let span = (hi - lo).max(1e-9);
    Image::from_fn(size, size, 3, |y, x, c| {
        let t = (field[y * size + x] - lo) / span;
        FBM_PALETTE.eval(t, phase)[c] as f32
    })
}

/// Mean absolute horizontal difference, averaged over samples.
pub fn horizontal_gradient(img: &Image) -> f64 {
    let (h, w, c) = img.dims();
    if w < 2 {
        return 0.0;
    }
    let mut acc = 0.0;
    for y in 0..h {
        for x in 1..w {
            for ch in 0..c {
                acc += (img.get(y, x, ch) - img.get(y, x - 1, ch)).abs() as f64;
            }
        }
    }
    acc / (h * (w - 1) * c) as f64
}

#[cfg(test)]
mod tests {
    use super::*;

    fn std_dev(img: &Image) -> f64 {
        let n = img.data().len() as f64;
        let mean = img.data().iter().map(|&v| v as f64).sum::<f64>() / n;
        sqrt(img.data().iter().map(|&v| (v as f64 - mean).powi(2)).sum::<f64>() / n)
    }

    #[test]
    fn rejects_small_sizes() {
        for family in Family::ALL {
            assert!(generate(&FractalSpec { family, seed: 0, size: 15 }).is_err());
            assert!(generate(&FractalSpec { family, seed: 0, size: 16 }).is_ok());
        }
    }

    #[test]
    fn deterministic_per_spec() {
        for family in Family::ALL {
            let spec = FractalSpec { family, seed: 99, size: 48 };
            assert_eq!(generate(&spec).unwrap(), generate(&spec).unwrap());
        }
    }

    #[test]
    fn seeds_change_at_least_one_percent_of_pixels() {
        for family in Family::ALL {
            for pair in 0..20u64 {
                let a = generate(&FractalSpec { family, seed: 2 * pair, size: 32 }).unwrap();
                let b = generate(&FractalSpec { family, seed: 2 * pair + 1, size: 32 }).unwrap();
                let differing = (0..32)
                    .flat_map(|y| (0..32).map(move |x| (y, x)))
                    .filter(|&(y, x)| {
                        a.pixel(y, x)
                            .iter()
                            .zip(b.pixel(y, x))
                            .any(|(p, q)| (p - q).abs() > 1.0 / 255.0)
                    })
                    .count();
                assert!(
                    differing * 100 >= 32 * 32,
                    "{} pair {pair}: only {differing} pixels differ",
                    family.name()
                );
            }
        }
    }

    #[test]
    fn fbm_is_not_constant() {
        for seed in 0..20 {
            let img = generate(&FractalSpec { family: Family::FbmNoise, seed, size: 32 }).unwrap();
            assert!(std_dev(&img) > 0.02, "seed {seed}: std {}", std_dev(&img));
        }
    }

    #[test]
    fn range_and_complexity_over_100_seeds() {
        for family in Family::ALL {
            for seed in 0..100 {
                let img = generate(&FractalSpec { family, seed, size: 32 }).unwrap();
                assert!(img.data().iter().all(|v| (0.0..=1.0).contains(v)));
                let g = horizontal_gradient(&img);
                assert!(g > 0.005, "{} seed {seed}: gradient {g}", family.name());
            }
        }
    }

    #[test]
    fn corpus_cycles_families() {
        let c = corpus(5, 6, 16).unwrap();
        assert_eq!(c.len(), 6);
        assert_eq!(corpus_spec(5, 4, 16).family, Family::Julia);
        assert_eq!(c[4], generate(&corpus_spec(5, 4, 16)).unwrap());
    }
}
