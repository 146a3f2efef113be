use rayon::prelude::*;

use super::{ensure_finite, FilterParams, PixelRect};
use crate::error::{Error, Result};
use crate::grid::{mirror_index, ImageGrid};

/// Offset added before processing so that no pixel is zero.
pub const SRAD_EPSILON: f64 = 1e-6;

/// Speckle-reducing anisotropic diffusion.
///
/// Per iteration the speckle scale `q0^2 = var / mean^2` is re-estimated on
/// `homogeneous_window`, the instantaneous coefficient of variation `q` is
/// computed from one-sided differences and the normalized Laplacian, and the
/// image takes an explicit step `I += lambda / 4 * div(c(q) grad I)`.
pub fn srad(
    img: &ImageGrid,
    iterations: u32,
    lambda: f64,
    homogeneous_window: PixelRect,
) -> Result<ImageGrid> {
    FilterParams::Srad {
        iterations,
        lambda,
        homogeneous_window,
    }
    .validate()?;
    ensure_finite(img)?;
    let roi = homogeneous_window.clipped(img.width, img.height);
    if roi.is_empty() {
        return Err(Error::Config(
            "SRAD homogeneous window does not overlap the image".into(),
        ));
    }

    let (w, h) = (img.width, img.height);
    let mut cur: Vec<f64> = img.values.iter().map(|v| v + SRAD_EPSILON).collect();
    let mut coeff = vec![0.0; w * h];
    let mut next = vec![0.0; w * h];
    let north: Vec<usize> = (0..h).map(|r| mirror_index(r as isize - 1, h)).collect();
    let south: Vec<usize> = (0..h).map(|r| mirror_index(r as isize + 1, h)).collect();
    let west: Vec<usize> = (0..w).map(|c| mirror_index(c as isize - 1, w)).collect();
    let east: Vec<usize> = (0..w).map(|c| mirror_index(c as isize + 1, w)).collect();

    for _ in 0..iterations {
        let q0sq = speckle_scale(&cur, w, roi).max(1e-12);

        coeff.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let j = cur[r * w + c];
                let dn = cur[north[r] * w + c] - j;
                let ds = cur[south[r] * w + c] - j;
                let dw = cur[r * w + west[c]] - j;
                let de = cur[r * w + east[c]] - j;
                let g2 = (dn * dn + ds * ds + dw * dw + de * de) / (j * j);
                let l = (dn + ds + dw + de) / j;
                let num = 0.5 * g2 - l * l / 16.0;
                let den = (1.0 + 0.25 * l) * (1.0 + 0.25 * l);
                let qsq = num / den;
                let d = (qsq - q0sq) / (q0sq * (1.0 + q0sq));
                *out = (1.0 / (1.0 + d)).clamp(0.0, 1.0);
            }
        });

        next.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
            for (c, out) in row.iter_mut().enumerate() {
                let i = r * w + c;
                let j = cur[i];
                let dn = cur[north[r] * w + c] - j;
                let ds = cur[south[r] * w + c] - j;
                let dw = cur[r * w + west[c]] - j;
                let de = cur[r * w + east[c]] - j;
                let c_here = coeff[i];
                let c_south = coeff[south[r] * w + c];
                let c_east = coeff[r * w + east[c]];
                let div = c_here * dn + c_south * ds + c_here * dw + c_east * de;
                *out = j + 0.25 * lambda * div;
            }
        });
        std::mem::swap(&mut cur, &mut next);
    }

    Ok(ImageGrid {
        values: cur.into_iter().map(|v| v - SRAD_EPSILON).collect(),
        ..img.clone()
    })
}

/// `var / mean^2` over the window (population variance).
fn speckle_scale(values: &[f64], width: usize, roi: PixelRect) -> f64 {
    let n = roi.area() as f64;
    let (mut sum, mut sum2) = (0.0, 0.0);
    for r in roi.z0..roi.z1 {
        for &v in &values[r * width + roi.x0..r * width + roi.x1] {
            sum += v;
            sum2 += v * v;
        }
    }
    let mean = sum / n;
    let var = (sum2 / n - mean * mean).max(0.0);
    var / (mean * mean)
}
