//! Naive mask propagation: a fallback for datasets that only carry a mask
//! on the first frame of each episode.
//!
//! The translation between frames is the shift maximizing normalized
//! cross-correlation over a template made of the mask plus a two-pixel
//! ring of context. The shifted mask is then dilated once (3x3).

use alloc::vec::Vec;

use crate::image::{Image, Mask};
use crate::math::sqrt;
use crate::{Error, Result};

pub const SEARCH_RADIUS: isize = 8;

/// Shift `(dy, dx)` of `next` relative to `prev` over the template.
pub fn estimate_shift(template: &Mask, prev: &Image, next: &Image) -> (isize, isize) {
    let (h, w) = (prev.height() as isize, prev.width() as isize);
    let pts: Vec<(isize, isize)> = (0..prev.height())
        .flat_map(|y| (0..prev.width()).map(move |x| (y, x)))
        .filter(|&(y, x)| template.get(y, x))
        .map(|(y, x)| (y as isize, x as isize))
        .collect();

    let mut shifts: Vec<(isize, isize)> = (-SEARCH_RADIUS..=SEARCH_RADIUS)
        .flat_map(|dy| (-SEARCH_RADIUS..=SEARCH_RADIUS).map(move |dx| (dy, dx)))
        .collect();
    // Ties resolve toward the smallest displacement.
    shifts.sort_by_key(|&(dy, dx)| (dy.abs() + dx.abs(), dy, dx));

    let mut best = (0, 0);
    let mut best_score = f64::NEG_INFINITY;
    let channels = prev.channels();
    let mut a = Vec::with_capacity(pts.len() * channels);
    let mut b = Vec::with_capacity(pts.len() * channels);
    for (dy, dx) in shifts {
        a.clear();
        b.clear();
        for &(y, x) in &pts {
            let (ny, nx) = (y + dy, x + dx);
            if ny < 0 || ny >= h || nx < 0 || nx >= w {
                continue;
            }
            a.extend(prev.pixel(y as usize, x as usize).iter().map(|&v| v as f64));
            b.extend(next.pixel(ny as usize, nx as usize).iter().map(|&v| v as f64));
        }
        if a.len() * 2 < pts.len() * channels {
            continue;
        }
        let score = ncc(&a, &b);
        if score > best_score {
            best_score = score;
            best = (dy, dx);
        }
    }
    best
}

/// Normalized cross-correlation; 0 when either side has no variance.
fn ncc(a: &[f64], b: &[f64]) -> f64 {
    let n = a.len() as f64;
    if a.is_empty() {
        return 0.0;
    }
    let ma = a.iter().sum::<f64>() / n;
    let mb = b.iter().sum::<f64>() / n;
    let (mut sab, mut saa, mut sbb) = (0.0, 0.0, 0.0);
    for (x, y) in a.iter().zip(b) {
        let (da, db) = (x - ma, y - mb);
        sab += da * db;
        saa += da * da;
        sbb += db * db;
    }
    if saa <= 1e-12 || sbb <= 1e-12 {
        return 0.0;
    }
    sab / sqrt(saa * sbb)
}

pub fn propagate_mask(prev_mask: &Mask, prev_frame: &Image, next_frame: &Image) -> Result<Mask> {
    let dims = (prev_frame.height(), prev_frame.width());
    if (prev_mask.height(), prev_mask.width()) != dims
        || next_frame.dims() != prev_frame.dims()
    {
        return Err(Error::shape(
            alloc::format!("{:?}", prev_frame.dims()),
            alloc::format!("{:?}", next_frame.dims()),
        ));
    }
    if prev_mask.count() == 0 {
        return Ok(prev_mask.clone());
    }
    let template = prev_mask.dilate3().dilate3();
    let (dy, dx) = estimate_shift(&template, prev_frame, next_frame);
    Ok(prev_mask.shifted(dy, dx).dilate3())
}
