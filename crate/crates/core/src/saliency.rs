//! Saliency maps and the attention-in-mask ratio.

use alloc::vec;
use alloc::vec::Vec;

use crate::bench::TinyPolicy;
use crate::image::{Image, Mask};
use crate::math::{abs, pairwise_sum};
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct SaliencyMap {
    pub height: usize,
    pub width: usize,
    /// Row-major, nonnegative.
    pub weights: Vec<f64>,
}

impl SaliencyMap {
    pub fn total(&self) -> f64 {
        pairwise_sum(&self.weights)
    }

    /// Copy scaled to unit total; `None` when the total is zero.
    pub fn normalized(&self) -> Option<SaliencyMap> {
        let total = self.total();
        (total > 0.0).then(|| SaliencyMap {
            height: self.height,
            width: self.width,
            weights: self.weights.iter().map(|w| w / total).collect(),
        })
    }

    pub fn get(&self, y: usize, x: usize) -> f64 {
        self.weights[y * self.width + x]
    }

    pub fn max(&self) -> f64 {
        self.weights.iter().copied().fold(0.0, f64::max)
    }
}

/// Per pixel: max over channels of `|∂‖π(o, s)‖² / ∂o|`.
pub fn gradient_saliency(policy: &TinyPolicy, o: &Image, state: &[f64]) -> Result<SaliencyMap> {
    let g = policy.input_gradient(o, state)?;
    let c = o.channels();
    Ok(SaliencyMap {
        height: o.height(),
        width: o.width(),
        weights: g.chunks_exact(c).map(|px| px.iter().fold(0.0f64, |m, v| m.max(abs(*v)))).collect(),
    })
}

/// Top-left corners of the occlusion grid along one axis.
fn grid_axis(len: usize, stride: usize) -> Vec<usize> {
    (0..len).step_by(stride).collect()
}

/// Top-left corners `(y, x)` of every occlusion patch, row-major.
pub fn occlusion_grid(o: &Image, stride: usize) -> Vec<(usize, usize)> {
    let ys = grid_axis(o.height(), stride);
    let xs = grid_axis(o.width(), stride);
    ys.iter().flat_map(|&y| xs.iter().map(move |&x| (y, x))).collect()
}

/// `o` with the `patch x patch` square at `(y0, x0)` replaced by `fill`.
pub fn occlude(o: &Image, y0: usize, x0: usize, patch: usize, fill: &[f32]) -> Image {
    let mut out = o.clone();
    for y in y0..(y0 + patch).min(o.height()) {
        for x in x0..(x0 + patch).min(o.width()) {
            for (c, v) in fill.iter().enumerate().take(o.channels()) {
                out.set(y, x, c, *v);
            }
        }
    }
    out
}

/// Bilinear upsampling of grid-cell values to full resolution. Cell
/// `(i, j)` sits at the centre of its patch.
pub fn upsample_grid(
    cells: &[f64],
    height: usize,
    width: usize,
    patch: usize,
    stride: usize,
) -> SaliencyMap {
    let ny = grid_axis(height, stride).len();
    let nx = grid_axis(width, stride).len();
    let coord = |p: usize, n: usize| {
        let g = (p as f64 + 0.5 - patch as f64 / 2.0) / stride as f64;
        let g = g.clamp(0.0, (n - 1) as f64);
        let i0 = libm::floor(g) as usize;
        let i1 = (i0 + 1).min(n - 1);
        (i0, i1, g - i0 as f64)
    };
    let mut weights = vec![0.0; height * width];
    for y in 0..height {
        let (y0, y1, ty) = coord(y, ny);
        for x in 0..width {
            let (x0, x1, tx) = coord(x, nx);
            let v00 = cells[y0 * nx + x0];
            let v01 = cells[y0 * nx + x1];
            let v10 = cells[y1 * nx + x0];
            let v11 = cells[y1 * nx + x1];
            let top = v00 + (v01 - v00) * tx;
            let bottom = v10 + (v11 - v10) * tx;
            weights[y * width + x] = (top + (bottom - top) * ty).max(0.0);
        }
    }
    SaliencyMap { height, width, weights }
}

/// Occlusion sensitivity of a black-box scorer: each cell holds
/// `|score(o) - score(o with patch filled)|`, upsampled bilinearly.
pub fn occlusion_saliency(
    scorer: &dyn Fn(&Image) -> f64,
    o: &Image,
    patch: usize,
    stride: usize,
    fill: &[f32],
) -> Result<SaliencyMap> {
    if patch == 0 || stride == 0 {
        return Err(Error::InvalidArgument("patch and stride must be >= 1".into()));
    }
    if fill.len() != o.channels() {
        return Err(Error::shape(alloc::format!("{} fill channels", o.channels()), alloc::format!("{}", fill.len())));
    }
    let base = scorer(o);
    let cells: Vec<f64> = occlusion_grid(o, stride)
        .into_iter()
        .map(|(y, x)| abs(base - scorer(&occlude(o, y, x, patch, fill))))
        .collect();
    Ok(upsample_grid(&cells, o.height(), o.width(), patch, stride))
}

/// Fraction of saliency mass inside the mask; `None` when the map is
/// all zero.
pub fn attention_in_mask(map: &SaliencyMap, m: &Mask) -> Result<Option<f64>> {
    if (map.height, map.width) != (m.height(), m.width()) {
        return Err(Error::shape(
            alloc::format!("{}x{}", map.height, map.width),
            alloc::format!("{}x{}", m.height(), m.width()),
        ));
    }
    let total = map.total();
    if total <= 0.0 {
        return Ok(None);
    }
    let inside: Vec<f64> = map
        .weights
        .iter()
        .zip(m.data())
        .map(|(w, &k)| if k != 0 { *w } else { 0.0 })
        .collect();
    Ok(Some((pairwise_sum(&inside) / total).clamp(0.0, 1.0)))
}

/// Fixed colorbar (dark blue, cyan, yellow, dark red) for `t ∈ [0, 1]`.
pub fn colormap(t: f64) -> [f32; 3] {
    const STOPS: [(f64, [f64; 3]); 5] = [
        (0.0, [0.0, 0.0, 0.5]),
        (0.25, [0.0, 0.4, 1.0]),
        (0.5, [0.0, 1.0, 1.0]),
        (0.75, [1.0, 1.0, 0.0]),
        (1.0, [0.5, 0.0, 0.0]),
    ];
    let t = t.clamp(0.0, 1.0);
    let k = STOPS.iter().position(|s| t <= s.0).unwrap_or(STOPS.len() - 1).max(1);
    let (t0, c0) = STOPS[k - 1];
    let (t1, c1) = STOPS[k];
    let u = (t - t0) / (t1 - t0);
    [
        (c0[0] + (c1[0] - c0[0]) * u) as f32,
        (c0[1] + (c1[1] - c0[1]) * u) as f32,
        (c0[2] + (c1[2] - c0[2]) * u) as f32,
    ]
}

/// Render a map through [`colormap`], scaled by its maximum.
pub fn heatmap(map: &SaliencyMap) -> Image {
    let peak = map.max();
    Image::from_fn(map.height, map.width, 3, |y, x, c| {
        let t = if peak > 0.0 { map.get(y, x) / peak } else { 0.0 };
        colormap(t)[c]
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::bench::{PolicyDims, TinyPolicy};
    use crate::nn::Mlp;
    use crate::rng;
    use rand::Rng as _;

    fn policy(seed: u64) -> TinyPolicy {
        let dims = PolicyDims {
            obs_height: 32,
            obs_width: 32,
            obs_channels: 3,
            ds_height: 16,
            ds_width: 16,
            hidden: [16, 16],
            state_dim: 2,
            action_dim: 2,
        };
        TinyPolicy::new(dims, &mut rng::stream(seed, &[]))
    }

    fn random_image(seed: u64) -> Image {
        let mut r = rng::stream(seed, &[1]);
        Image::from_fn(32, 32, 3, |_, _, _| r.random_range(0.05..0.95))
    }

    #[test]
    fn zero_head_gives_zero_map() {
        let mut p = policy(1);
        let dims = p.head().dims().to_vec();
        *p.head_mut() = Mlp::zeros(&dims, false);
        let map = gradient_saliency(&p, &random_image(2), &[0.3, 0.4]).unwrap();
        assert!(map.weights.iter().all(|&w| w == 0.0));
        assert_eq!((map.height, map.width), (32, 32));
        assert_eq!(attention_in_mask(&map, &Mask::ones(32, 32)).unwrap(), None);
    }

    #[test]
    fn gradient_matches_finite_differences() {
        let p = policy(3);
        let o = random_image(4);
        let s = [0.2, 0.7];
        let g = p.input_gradient(&o, &s).unwrap();
        let norm2 = |img: &Image| p.act(img, &s).unwrap().iter().map(|v| v * v).sum::<f64>();
        let mut r = rng::stream(6, &[]);
        // Perturbation is applied in f64 on the preprocessed path to avoid
        // f32 image quantization.
        let d = p.dims();
        let input = p.preprocess(&o).unwrap();
        let norm2_in = |inp: &[f64]| p.act_preprocessed(inp, &s).iter().map(|v| v * v).sum::<f64>();
        assert!((norm2(&o) - norm2_in(&input)).abs() < 1e-12);
        for _ in 0..5 {
            let (y, x, c) = (r.random_range(0..32), r.random_range(0..32), r.random_range(0..3));
            let k = ((y / 2) * d.ds_width + x / 2) * 3 + c;
            let h = 1e-5;
            // A full-res sample moves its downsampled cell by 1/4 of the step.
            let mut up = input.clone();
            up[k] += h / 4.0;
            let mut down = input.clone();
            down[k] -= h / 4.0;
            let fd = (norm2_in(&up) - norm2_in(&down)) / (2.0 * h);
            let an = g[(y * 32 + x) * 3 + c];
            let rel = (fd - an).abs() / fd.abs().max(an.abs()).max(1e-12);
            assert!(rel <= 1e-3, "({y},{x},{c}): {an} vs {fd}");
        }
    }

    #[test]
    fn constant_scorer_gives_zero_map() {
        let o = random_image(5);
        let map = occlusion_saliency(&|_| 1.5, &o, 8, 4, &o.mean_color()).unwrap();
        assert!(map.weights.iter().all(|&w| w == 0.0));
    }

    #[test]
    fn single_pixel_scorer_concentrates_on_covering_patches() {
        let o = random_image(6);
        let (py, px) = (13usize, 21usize);
        let scorer = |img: &Image| img.pixel(py, px).iter().map(|&v| v as f64).sum::<f64>() / 3.0;
        let (patch, stride) = (8, 4);
        let map = occlusion_saliency(&scorer, &o, patch, stride, &[0.0, 0.0, 0.0]).unwrap();
        assert!(map.weights.iter().all(|&w| w >= 0.0));
        let covering = Mask::from_fn(32, 32, |y, x| {
            occlusion_grid(&o, stride).iter().any(|&(gy, gx)| {
                (gy..gy + patch).contains(&py)
                    && (gx..gx + patch).contains(&px)
                    && (gy..gy + patch).contains(&y)
                    && (gx..gx + patch).contains(&x)
            })
        });
        let share = attention_in_mask(&map, &covering).unwrap().unwrap();
        assert!(share >= 0.99, "share {share}");
    }

    #[test]
    fn attention_ratio_basics() {
        let uniform = SaliencyMap { height: 4, width: 4, weights: vec![1.0; 16] };
        let quarter = Mask::from_fn(4, 4, |y, x| y < 2 && x < 2);
        assert_eq!(attention_in_mask(&uniform, &quarter).unwrap(), Some(0.25));
        let inside = SaliencyMap {
            height: 4,
            width: 4,
            weights: (0..16).map(|i| if i == 0 || i == 5 { 2.0 } else { 0.0 }).collect(),
        };
        assert_eq!(attention_in_mask(&inside, &quarter).unwrap(), Some(1.0));
        assert!(attention_in_mask(&uniform, &Mask::ones(3, 4)).is_err());
    }

    #[test]
    fn attention_ratio_scale_invariant() {
        let mut r = rng::stream(9, &[]);
        for _ in 0..20 {
            let map = SaliencyMap { height: 8, width: 8, weights: (0..64).map(|_| r.random::<f64>()).collect() };
            let m = Mask::from_fn(8, 8, |_, _| r.random::<bool>());
            let k = r.random_range(0.01..100.0);
            let scaled = SaliencyMap { weights: map.weights.iter().map(|w| w * k).collect(), ..map.clone() };
            let a = attention_in_mask(&map, &m).unwrap().unwrap();
            let b = attention_in_mask(&scaled, &m).unwrap().unwrap();
            assert!((a - b).abs() < 1e-12);
            assert!((attention_in_mask(&map, &Mask::ones(8, 8)).unwrap().unwrap() - 1.0).abs() < 1e-12);
        }
    }

    #[test]
    fn colormap_endpoints() {
        assert_eq!(colormap(0.0), [0.0, 0.0, 0.5]);
        assert_eq!(colormap(1.0), [0.5, 0.0, 0.0]);
        assert_eq!(colormap(0.5), [0.0, 1.0, 1.0]);
    }
}
