//! Raster types, masked arithmetic and region compositing.
//!
//! Samples are `f32` in `[0, 1]`, row-major, channel-interleaved
//! (`data[(y * width + x) * channels + c]`). Masks are strictly binary.

use alloc::format;
use alloc::vec;
use alloc::vec::Vec;

use crate::math::clamp01f;
use crate::{Error, Result};

#[derive(Debug, Clone, PartialEq)]
pub struct Image {
    height: usize,
    width: usize,
    channels: usize,
    data: Vec<f32>,
}

impl Image {
    /// Builds an image, rejecting wrong lengths, channel counts other than
    /// 1 or 3, and samples outside `[0, 1]` (including NaN).
    pub fn new(height: usize, width: usize, channels: usize, data: Vec<f32>) -> Result<Self> {
        if channels != 1 && channels != 3 {
            return Err(Error::shape("1 or 3 channels", format!("{channels} channels")));
        }
        if data.len() != height * width * channels {
            return Err(Error::shape(
                format!("{} samples", height * width * channels),
                format!("{} samples", data.len()),
            ));
        }
        if let Some(bad) = data.iter().find(|v| !(0.0..=1.0).contains(*v)) {
            return Err(Error::InvalidArgument(format!("sample {bad} outside [0, 1]")));
        }
        Ok(Self { height, width, channels, data })
    }

    pub fn zeros(height: usize, width: usize, channels: usize) -> Self {
        assert!(channels == 1 || channels == 3, "channels must be 1 or 3");
        Self { height, width, channels, data: vec![0.0; height * width * channels] }
    }

    /// Fills every pixel with `color` (length = channels), clamped to `[0, 1]`.
    pub fn filled(height: usize, width: usize, color: &[f32]) -> Self {
        let mut img = Self::zeros(height, width, color.len());
        for px in img.data.chunks_exact_mut(color.len()) {
            for (d, s) in px.iter_mut().zip(color) {
                *d = clamp01f(*s);
            }
        }
        img
    }

    /// Builds an image from a per-sample function; outputs are clamped.
    pub fn from_fn(
        height: usize,
        width: usize,
        channels: usize,
        mut f: impl FnMut(usize, usize, usize) -> f32,
    ) -> Self {
        let mut img = Self::zeros(height, width, channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..channels {
                    img.data[(y * width + x) * channels + c] = clamp01f(f(y, x, c));
                }
            }
        }
        img
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn channels(&self) -> usize {
        self.channels
    }

    pub fn dims(&self) -> (usize, usize, usize) {
        (self.height, self.width, self.channels)
    }

    pub fn data(&self) -> &[f32] {
        &self.data
    }

    pub fn into_data(self) -> Vec<f32> {
        self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize, c: usize) -> f32 {
        self.data[(y * self.width + x) * self.channels + c]
    }

    /// Writes a sample, clamping to `[0, 1]` so the range invariant holds.
    #[inline]
    pub fn set(&mut self, y: usize, x: usize, c: usize, v: f32) {
        self.data[(y * self.width + x) * self.channels + c] = clamp01f(v);
    }

    #[inline]
    pub fn pixel(&self, y: usize, x: usize) -> &[f32] {
        let i = (y * self.width + x) * self.channels;
        &self.data[i..i + self.channels]
    }

    /// Mutable pixel access. Callers must keep samples in `[0, 1]`.
    #[inline]
    pub(crate) fn pixel_mut(&mut self, y: usize, x: usize) -> &mut [f32] {
        let i = (y * self.width + x) * self.channels;
        &mut self.data[i..i + self.channels]
    }

    pub fn to_u8(&self) -> Vec<u8> {
        self.data.iter().map(|&v| to_u8(v)).collect()
    }

    pub fn from_u8(height: usize, width: usize, channels: usize, bytes: &[u8]) -> Result<Self> {
        Self::new(height, width, channels, bytes.iter().map(|&b| b as f32 / 255.0).collect())
    }

    /// Nearest-neighbour resize.
    pub fn resize_nearest(&self, height: usize, width: usize) -> Image {
        let mut out = Image::zeros(height, width, self.channels);
        for y in 0..height {
            let sy = (y * self.height) / height;
            for x in 0..width {
                let sx = (x * self.width) / width;
                out.pixel_mut(y, x).copy_from_slice(self.pixel(sy, sx));
            }
        }
        out
    }

    /// Box-filter downsample by an integer factor in each axis.
    pub fn downsample(&self, height: usize, width: usize) -> Result<Image> {
        if height == 0
            || width == 0
            || self.height % height != 0
            || self.width % width != 0
        {
            return Err(Error::shape(
                format!("a divisor of {}x{}", self.height, self.width),
                format!("{height}x{width}"),
            ));
        }
        let fy = self.height / height;
        let fx = self.width / width;
        let norm = 1.0 / (fy * fx) as f32;
        let mut out = Image::zeros(height, width, self.channels);
        for y in 0..height {
            for x in 0..width {
                for c in 0..self.channels {
                    let mut acc = 0.0f32;
                    for dy in 0..fy {
                        for dx in 0..fx {
                            acc += self.get(y * fy + dy, x * fx + dx, c);
                        }
                    }
                    out.set(y, x, c, acc * norm);
                }
            }
        }
        Ok(out)
    }

    pub fn mean_color(&self) -> Vec<f32> {
        let n = (self.height * self.width).max(1) as f64;
        let mut acc = vec![0.0f64; self.channels];
        for px in self.data.chunks_exact(self.channels) {
            for (a, v) in acc.iter_mut().zip(px) {
                *a += *v as f64;
            }
        }
        acc.into_iter().map(|a| (a / n) as f32).collect()
    }
}

#[inline]
pub fn to_u8(v: f32) -> u8 {
    libm::roundf(clamp01f(v) * 255.0) as u8
}

#[derive(Debug, Clone, PartialEq, Eq, Hash)]
pub struct Mask {
    height: usize,
    width: usize,
    data: Vec<u8>,
}

impl Mask {
    /// Builds a mask from values that must be exactly 0 or 1.
    pub fn new(height: usize, width: usize, data: Vec<u8>) -> Result<Self> {
        if data.len() != height * width {
            return Err(Error::shape(
                format!("{} mask values", height * width),
                format!("{}", data.len()),
            ));
        }
        if data.iter().any(|&v| v > 1) {
            return Err(Error::InvalidArgument("mask values must be 0 or 1".into()));
        }
        Ok(Self { height, width, data })
    }

    /// Binarizes raw samples: any nonzero value becomes 1.
    pub fn from_nonzero(height: usize, width: usize, raw: &[u8]) -> Result<Self> {
        Self::new(height, width, raw.iter().map(|&v| (v != 0) as u8).collect())
    }

    pub fn from_fn(height: usize, width: usize, mut f: impl FnMut(usize, usize) -> bool) -> Self {
        let mut data = Vec::with_capacity(height * width);
        for y in 0..height {
            for x in 0..width {
                data.push(f(y, x) as u8);
            }
        }
        Self { height, width, data }
    }

    pub fn ones(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![1; height * width] }
    }

    pub fn zeros(height: usize, width: usize) -> Self {
        Self { height, width, data: vec![0; height * width] }
    }

    pub fn height(&self) -> usize {
        self.height
    }

    pub fn width(&self) -> usize {
        self.width
    }

    pub fn data(&self) -> &[u8] {
        &self.data
    }

    #[inline]
    pub fn get(&self, y: usize, x: usize) -> bool {
        self.data[y * self.width + x] != 0
    }

    #[inline]
    pub fn set(&mut self, y: usize, x: usize, on: bool) {
        self.data[y * self.width + x] = on as u8;
    }

    /// `1 - m`.
    pub fn complement(&self) -> Mask {
        Mask {
            height: self.height,
            width: self.width,
            data: self.data.iter().map(|&v| 1 - v).collect(),
        }
    }

    pub fn count(&self) -> usize {
        self.data.iter().map(|&v| v as usize).sum()
    }

    /// Shift by `(dy, dx)`; pixels shifted in from outside are 0.
    pub fn shifted(&self, dy: isize, dx: isize) -> Mask {
        let (h, w) = (self.height as isize, self.width as isize);
        Mask::from_fn(self.height, self.width, |y, x| {
            let sy = y as isize - dy;
            let sx = x as isize - dx;
            sy >= 0 && sy < h && sx >= 0 && sx < w && self.get(sy as usize, sx as usize)
        })
    }

    /// One 3x3 binary dilation.
    pub fn dilate3(&self) -> Mask {
        let (h, w) = (self.height, self.width);
        Mask::from_fn(h, w, |y, x| {
            let y0 = y.saturating_sub(1);
            let x0 = x.saturating_sub(1);
            (y0..=(y + 1).min(h - 1)).any(|yy| (x0..=(x + 1).min(w - 1)).any(|xx| self.get(yy, xx)))
        })
    }

    fn check_pair(&self, img: &Image) -> Result<()> {
        if self.height != img.height || self.width != img.width {
            return Err(Error::shape(
                format!("{}x{}", self.height, self.width),
                format!("{}x{}", img.height, img.width),
            ));
        }
        Ok(())
    }
}

/// `o ⊙ m`: zero every sample outside the mask.
pub fn hadamard(o: &Image, m: &Mask) -> Result<Image> {
    m.check_pair(o)?;
    let c = o.channels;
    let mut out = o.clone();
    for (px, &keep) in out.data.chunks_exact_mut(c).zip(&m.data) {
        if keep == 0 {
            px.fill(0.0);
        }
    }
    Ok(out)
}

/// Hard switch: `m ? a : b` per pixel. No blending.
pub fn composite(a: &Image, b: &Image, m: &Mask) -> Result<Image> {
    m.check_pair(a)?;
    m.check_pair(b)?;
    if a.channels != b.channels {
        return Err(Error::shape(
            format!("{} channels", a.channels),
            format!("{} channels", b.channels),
        ));
    }
    let c = a.channels;
    let mut out = b.clone();
    for ((dst, src), &sel) in out
        .data
        .chunks_exact_mut(c)
        .zip(a.data.chunks_exact(c))
        .zip(&m.data)
    {
        if sel != 0 {
            dst.copy_from_slice(src);
        }
    }
    Ok(out)
}

/// Hexcone RGB to HSV, all components in `[0, 1]`.
pub fn rgb_to_hsv_px(r: f64, g: f64, b: f64) -> (f64, f64, f64) {
    let max = r.max(g).max(b);
    let min = r.min(g).min(b);
    let delta = max - min;
    let v = max;
    let s = if max > 0.0 { delta / max } else { 0.0 };
    if delta <= 0.0 {
        return (0.0, s, v);
    }
    let h6 = if max == r {
        let h = (g - b) / delta;
        if h < 0.0 {
            h + 6.0
        } else {
            h
        }
    } else if max == g {
        (b - r) / delta + 2.0
    } else {
        (r - g) / delta + 4.0
    };
    let mut h = h6 / 6.0;
    if h >= 1.0 {
        h -= 1.0;
    }
    (h, s, v)
}

pub fn hsv_to_rgb_px(h: f64, s: f64, v: f64) -> (f64, f64, f64) {
    let h = h - libm::floor(h);
    let h6 = h * 6.0;
    let sector = libm::floor(h6);
    let f = h6 - sector;
    let p = v * (1.0 - s);
    let q = v * (1.0 - s * f);
    let t = v * (1.0 - s * (1.0 - f));
    match sector as u32 % 6 {
        0 => (v, t, p),
        1 => (q, v, p),
        2 => (p, v, t),
        3 => (p, q, v),
        4 => (t, p, v),
        _ => (v, p, q),
    }
}

fn map_rgb(o: &Image, f: impl Fn(f64, f64, f64) -> (f64, f64, f64)) -> Result<Image> {
    if o.channels != 3 {
        return Err(Error::shape("3 channels", format!("{} channels", o.channels)));
    }
    let mut out = o.clone();
    for px in out.data.chunks_exact_mut(3) {
        let (a, b, c) = f(px[0] as f64, px[1] as f64, px[2] as f64);
        px[0] = clamp01f(a as f32);
        px[1] = clamp01f(b as f32);
        px[2] = clamp01f(c as f32);
    }
    Ok(out)
}

pub fn rgb_to_hsv(o: &Image) -> Result<Image> {
    map_rgb(o, rgb_to_hsv_px)
}

pub fn hsv_to_rgb(o: &Image) -> Result<Image> {
    map_rgb(o, hsv_to_rgb_px)
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn random_image(rng: &mut ChaCha8Rng, h: usize, w: usize, c: usize) -> Image {
        Image::from_fn(h, w, c, |_, _, _| rng.random::<f32>())
    }

    fn random_mask(rng: &mut ChaCha8Rng, h: usize, w: usize) -> Mask {
        Mask::from_fn(h, w, |_, _| rng.random::<bool>())
    }

    #[test]
    fn rejects_out_of_range_and_bad_length() {
        assert!(Image::new(1, 1, 3, vec![0.0, 1.0, 1.5]).is_err());
        assert!(Image::new(1, 1, 3, vec![0.0, f32::NAN, 0.5]).is_err());
        assert!(Image::new(2, 1, 3, vec![0.0; 3]).is_err());
        assert!(Image::new(1, 1, 2, vec![0.0; 2]).is_err());
        assert!(Mask::new(1, 2, vec![0, 2]).is_err());
    }

    #[test]
    fn hadamard_identity_and_annihilator() {
        let mut rng = ChaCha8Rng::seed_from_u64(1);
        let o = random_image(&mut rng, 5, 7, 3);
        assert_eq!(hadamard(&o, &Mask::ones(5, 7)).unwrap(), o);
        assert_eq!(hadamard(&o, &Mask::zeros(5, 7)).unwrap(), Image::zeros(5, 7, 3));
    }

    #[test]
    fn hadamard_single_pixel_support() {
        let o = Image::filled(3, 3, &[0.5, 0.5, 0.5]);
        let m = Mask::from_fn(3, 3, |y, x| y == 0 && x == 0);
        let out = hadamard(&o, &m).unwrap();
        for y in 0..3 {
            for x in 0..3 {
                let want = if y == 0 && x == 0 { 0.5 } else { 0.0 };
                assert_eq!(out.pixel(y, x), &[want; 3]);
            }
        }
    }

    #[test]
    fn dimension_mismatch_is_shape_error() {
        let o = Image::zeros(4, 4, 3);
        let m = Mask::ones(4, 5);
        assert!(matches!(hadamard(&o, &m), Err(Error::Shape { .. })));
        assert!(matches!(composite(&o, &o, &m), Err(Error::Shape { .. })));
        let g = Image::zeros(4, 4, 1);
        assert!(matches!(composite(&o, &g, &Mask::ones(4, 4)), Err(Error::Shape { .. })));
    }

    #[test]
    fn composite_selects_by_mask() {
        let a = Image::filled(2, 2, &[1.0, 0.0, 0.0]);
        let b = Image::filled(2, 2, &[0.0, 0.0, 1.0]);
        assert_eq!(composite(&a, &b, &Mask::ones(2, 2)).unwrap(), a);
        assert_eq!(composite(&a, &b, &Mask::zeros(2, 2)).unwrap(), b);
    }

    #[test]
    fn hsv_known_values() {
        assert_eq!(rgb_to_hsv_px(1.0, 0.0, 0.0), (0.0, 1.0, 1.0));
        assert_eq!(rgb_to_hsv_px(0.5, 0.5, 0.5), (0.0, 0.0, 0.5));
        let (h, s, v) = rgb_to_hsv_px(0.0, 1.0, 0.0);
        assert!((h - 1.0 / 3.0).abs() < 1e-12 && s == 1.0 && v == 1.0);
        let grey = Image::filled(1, 1, &[0.5, 0.5, 0.5]);
        assert_eq!(rgb_to_hsv(&grey).unwrap().pixel(0, 0), &[0.0, 0.0, 0.5]);
        assert!(rgb_to_hsv(&Image::zeros(1, 1, 1)).is_err());
        assert!(hsv_to_rgb(&Image::zeros(1, 1, 1)).is_err());
    }

    #[test]
    fn hsv_roundtrip_1000_random_pixels() {
        let mut rng = ChaCha8Rng::seed_from_u64(42);
        let o = random_image(&mut rng, 10, 100, 3);
        let back = hsv_to_rgb(&rgb_to_hsv(&o).unwrap()).unwrap();
        let worst = o
            .data()
            .iter()
            .zip(back.data())
            .map(|(a, b)| (a - b).abs())
            .fold(0.0f32, f32::max);
        assert!(worst <= 1e-4, "roundtrip error {worst}");
    }

    #[test]
    fn downsample_averages_blocks() {
        let o = Image::from_fn(4, 4, 1, |y, x, _| ((y / 2) * 2 + x / 2) as f32 / 4.0);
        let d = o.downsample(2, 2).unwrap();
        assert_eq!(d.data(), &[0.0, 0.25, 0.5, 0.75]);
        assert!(o.downsample(3, 3).is_err());
    }

    #[test]
    fn dilate_and_shift() {
        let m = Mask::from_fn(5, 5, |y, x| y == 2 && x == 2);
        assert_eq!(m.dilate3().count(), 9);
        let s = m.shifted(1, -2);
        assert!(s.get(3, 0));
        assert_eq!(s.count(), 1);
        assert_eq!(m.shifted(0, 5).count(), 0);
    }

    #[test]
    fn u8_conversion_bounds() {
        let o = Image::from_fn(3, 3, 3, |y, x, c| (y * 9 + x * 3 + c) as f32 / 26.0);
        let back = Image::from_u8(3, 3, 3, &o.to_u8()).unwrap();
        for (a, b) in o.data().iter().zip(back.data()) {
            assert!((a - b).abs() <= 1.0 / 255.0);
        }
    }

    mod props {
        use super::*;
        use proptest::prelude::*;

        proptest! {
            #[test]
            fn partition_and_idempotence(seed in any::<u64>(), h in 1usize..12, w in 1usize..12) {
                let mut rng = ChaCha8Rng::seed_from_u64(seed);
                let o = random_image(&mut rng, h, w, 3);
                let m = random_mask(&mut rng, h, w);
                let inside = hadamard(&o, &m).unwrap();
                let outside = hadamard(&o, &m.complement()).unwrap();
                prop_assert_eq!(&composite(&inside, &outside, &m).unwrap(), &o);
                prop_assert_eq!(&hadamard(&inside, &m).unwrap(), &inside);
                let c = m.complement();
                prop_assert!(c.data().iter().zip(m.data()).all(|(a, b)| a + b == 1));
                prop_assert!(inside.data().iter().all(|v| (0.0..=1.0).contains(v)));
            }
        }
    }
}
