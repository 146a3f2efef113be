//! Non-local means with either the Euclidean patch distance or the
//! Pearson-type distance `(u_p - u_q)^2 / u_q` suited to multiplicative
//! speckle.
//!
//! The fast path walks the search window one offset at a time: it forms the
//! per-pixel squared-difference image for that offset and box-filters it
//! with running sums, which yields every patch distance for the offset in
//! O(1) per pixel. The pixelwise `*_reference` functions evaluate the same
//! definition directly and serve as the ground truth for the fast path.

use rayon::prelude::*;

use super::{ensure_finite, FilterParams, Padded};
use crate::error::{Error, Result};
use crate::grid::ImageGrid;

/// Offset added before the Pearson distance so denominators are positive.
pub const OBNLM_EPSILON: f64 = 1e-6;

const BAND_ROWS: usize = 32;

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Distance {
    Euclidean,
    Pearson,
}

impl Distance {
    #[inline(always)]
    fn term(self, p: f64, q: f64) -> f64 {
        let d = p - q;
        match self {
            Distance::Euclidean => d * d,
            Distance::Pearson => d * d / q,
        }
    }

    fn shift(self) -> f64 {
        match self {
            Distance::Euclidean => 0.0,
            Distance::Pearson => OBNLM_EPSILON,
        }
    }
}

/// Non-local means: weights `exp(-d^2 / h^2)` with `d^2` the mean squared
/// difference of `patch x patch` neighbourhoods, over a `search x search`
/// window.
pub fn nlm(img: &ImageGrid, h: f64, search: u32, patch: u32) -> Result<ImageGrid> {
    FilterParams::Nlm { h, search, patch }.validate()?;
    ensure_finite(img)?;
    Ok(fast(img, h, search, patch, Distance::Euclidean))
}

/// Non-local means with the Pearson distance
/// `d^2 = mean_k (u_p(k) - u_q(k))^2 / u_q(k)` on the image shifted by
/// [`OBNLM_EPSILON`].
pub fn obnlm(img: &ImageGrid, search: u32, patch: u32, h: f64) -> Result<ImageGrid> {
    FilterParams::Obnlm { search, patch, h }.validate()?;
    check_positive(img)?;
    Ok(fast(img, h, search, patch, Distance::Pearson))
}

pub fn nlm_reference(img: &ImageGrid, h: f64, search: u32, patch: u32) -> Result<ImageGrid> {
    FilterParams::Nlm { h, search, patch }.validate()?;
    ensure_finite(img)?;
    Ok(pixelwise(img, h, search, patch, Distance::Euclidean))
}

pub fn obnlm_reference(img: &ImageGrid, search: u32, patch: u32, h: f64) -> Result<ImageGrid> {
    FilterParams::Obnlm { search, patch, h }.validate()?;
    check_positive(img)?;
    Ok(pixelwise(img, h, search, patch, Distance::Pearson))
}

fn check_positive(img: &ImageGrid) -> Result<()> {
    ensure_finite(img)?;
    match img.values.iter().find(|&&v| v + OBNLM_EPSILON <= 0.0) {
        Some(v) => Err(Error::Numeric(format!(
            "Pearson distance needs positive pixels, found {v}"
        ))),
        None => Ok(()),
    }
}

fn pixelwise(img: &ImageGrid, h: f64, search: u32, patch: u32, dist: Distance) -> ImageGrid {
    let rs = (search / 2) as isize;
    let rp = (patch / 2) as isize;
    let shift = dist.shift();
    let u = Padded::new(img, (rs + rp) as usize, shift);
    let inv = 1.0 / ((patch * patch) as f64 * h * h);
    let w = img.width;

    let mut out = vec![0.0; img.values.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let r = r as isize;
        for (c, o) in row.iter_mut().enumerate() {
            let c = c as isize;
            let (mut num, mut den) = (0.0, 0.0);
            for oi in -rs..=rs {
                for oj in -rs..=rs {
                    let mut d2 = 0.0;
                    for ki in -rp..=rp {
                        for kj in -rp..=rp {
                            d2 += dist.term(u.at(r + ki, c + kj), u.at(r + oi + ki, c + oj + kj));
                        }
                    }
                    let wgt = (-d2 * inv).exp();
                    num += wgt * u.at(r + oi, c + oj);
                    den += wgt;
                }
            }
            *o = num / den - shift;
        }
    });
    ImageGrid {
        values: out,
        ..img.clone()
    }
}

fn fast(img: &ImageGrid, h: f64, search: u32, patch: u32, dist: Distance) -> ImageGrid {
    let rs = (search / 2) as isize;
    let rp = (patch / 2) as isize;
    let p = patch as usize;
    let shift = dist.shift();
    let u = Padded::new(img, (rs + rp) as usize, shift);
    let inv = 1.0 / ((patch * patch) as f64 * h * h);
    let w = img.width;
    let ecols = w + 2 * rp as usize;

    let mut out = vec![0.0; img.values.len()];
    out.par_chunks_mut(BAND_ROWS * w)
        .enumerate()
        .for_each(|(band, out)| {
            let r0 = (band * BAND_ROWS) as isize;
            let bh = out.len() / w;
            let erows = bh + 2 * rp as usize;
            let mut e = vec![0.0; erows * ecols];
            let mut v = vec![0.0; ecols];
            // accumulated relative to the centre pixel for exact constants
            let mut num = vec![0.0; bh * w];
            let mut den = vec![0.0; bh * w];

            for oi in -rs..=rs {
                for oj in -rs..=rs {
                    for ei in 0..erows {
                        let i = r0 - rp + ei as isize;
                        let bp = u.index(i, -rp);
                        let bq = u.index(i + oi, -rp + oj);
                        let ps = &u.values[bp..bp + ecols];
                        let qs = &u.values[bq..bq + ecols];
                        for ((dst, &a), &b) in
                            e[ei * ecols..(ei + 1) * ecols].iter_mut().zip(ps).zip(qs)
                        {
                            *dst = dist.term(a, b);
                        }
                    }
                    for bi in 0..bh {
                        if bi == 0 {
                            v.iter_mut().for_each(|x| *x = 0.0);
                            for k in 0..p {
                                for (acc, &x) in v.iter_mut().zip(&e[k * ecols..(k + 1) * ecols]) {
                                    *acc += x;
                                }
                            }
                        } else {
                            let add = &e[(bi + p - 1) * ecols..(bi + p) * ecols];
                            let sub = &e[(bi - 1) * ecols..bi * ecols];
                            for ((acc, &a), &s) in v.iter_mut().zip(add).zip(sub) {
                                *acc += a - s;
                            }
                        }
                        let r = r0 + bi as isize;
                        let centre = u.index(r, 0);
                        let cand = u.index(r + oi, oj);
                        let mut s: f64 = v[..p].iter().sum();
                        for j in 0..w {
                            if j > 0 {
                                s += v[j + p - 1] - v[j - 1];
                            }
                            let wgt = (-s * inv).exp();
                            let k = bi * w + j;
                            num[k] += wgt * (u.values[cand + j] - u.values[centre + j]);
                            den[k] += wgt;
                        }
                    }
                }
            }
            for (bi, row) in out.chunks_mut(w).enumerate() {
                let centre = u.index(r0 + bi as isize, 0);
                for (j, o) in row.iter_mut().enumerate() {
                    let k = bi * w + j;
                    *o = u.values[centre + j] + num[k] / den[k] - shift;
                }
            }
        });
    ImageGrid {
        values: out,
        ..img.clone()
    }
}
