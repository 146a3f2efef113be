use rayon::prelude::*;

use super::{ensure_finite, FilterParams, Padded};
use crate::error::Result;
use crate::grid::ImageGrid;

/// Bilateral filter with Gaussian spatial (`sigma_spatial`, pixels) and
/// range (`sigma_range`, intensity units) kernels over a radius
/// `ceil(3 sigma_spatial)` window.
pub fn bilateral_filter(
    img: &ImageGrid,
    sigma_range: f64,
    sigma_spatial: f64,
) -> Result<ImageGrid> {
    FilterParams::Bilateral {
        sigma_range,
        sigma_spatial,
    }
    .validate()?;
    ensure_finite(img)?;
    let radius = (3.0 * sigma_spatial).ceil() as isize;
    let side = (2 * radius + 1) as usize;
    let padded = Padded::new(img, radius as usize, 0.0);

    let mut spatial = Vec::with_capacity(side * side);
    for dr in -radius..=radius {
        for dc in -radius..=radius {
            let d2 = (dr * dr + dc * dc) as f64;
            spatial.push((-d2 / (2.0 * sigma_spatial * sigma_spatial)).exp());
        }
    }
    let inv_range = 1.0 / (2.0 * sigma_range * sigma_range);
    let w = img.width;

    let mut out = vec![0.0; img.values.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        for (c, o) in row.iter_mut().enumerate() {
            let center = img.get(r, c);
            let (mut num, mut den) = (0.0, 0.0);
            for (k, dr) in (-radius..=radius).enumerate() {
                let start = padded.index(r as isize + dr, c as isize - radius);
                let line = &padded.values[start..start + side];
                let ws = &spatial[k * side..(k + 1) * side];
                for (&v, &s) in line.iter().zip(ws) {
                    let d = v - center;
                    let wgt = s * (-d * d * inv_range).exp();
                    num += wgt * d;
                    den += wgt;
                }
            }
            *o = center + num / den;
        }
    });
    Ok(ImageGrid {
        values: out,
        ..img.clone()
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use rand::Rng;

    #[test]
    fn huge_range_sigma_is_a_gaussian_blur() {
        let mut rng = crate::seed::rng_from(&[8]);
        let img = ImageGrid::from_fn(16, 16, |_, _| rng.gen::<f64>());
        let got = bilateral_filter(&img, 1e6, 1.5).unwrap();
        let radius = 5isize;
        for r in 0..16 {
            for c in 0..16 {
                let (mut num, mut den) = (0.0, 0.0);
                for dr in -radius..=radius {
                    for dc in -radius..=radius {
                        let wgt = (-((dr * dr + dc * dc) as f64) / (2.0 * 1.5 * 1.5)).exp();
                        num += wgt * img.get_mirrored(r as isize + dr, c as isize + dc);
                        den += wgt;
                    }
                }
                assert!((got.get(r, c) - num / den).abs() < 1e-6);
            }
        }
    }

    #[test]
    fn matches_double_loop_oracle() {
        let mut rng = crate::seed::rng_from(&[9]);
        for (sr, ss) in [(0.05, 5.0), (0.2, 1.0), (0.1, 0.4)] {
            let img = ImageGrid::from_fn(16, 16, |_, _| rng.gen::<f64>());
            let got = bilateral_filter(&img, sr, ss).unwrap();
            let want = oracle::bilateral(16, 16, &img.values, sr, ss);
            for (a, b) in got.values.iter().zip(&want) {
                assert!((a - b).abs() <= 1e-10);
            }
        }
    }
}
