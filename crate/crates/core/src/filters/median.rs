use rayon::prelude::*;

use super::{ensure_finite, FilterParams, Padded};
use crate::error::Result;
use crate::grid::ImageGrid;

/// Median over an odd `window x window` neighbourhood.
pub fn median_filter(img: &ImageGrid, window: u32) -> Result<ImageGrid> {
    FilterParams::Median { window }.validate()?;
    ensure_finite(img)?;
    let radius = (window / 2) as isize;
    let padded = Padded::new(img, radius as usize, 0.0);
    let w = img.width;
    let mid = (window * window / 2) as usize;

    let mut out = vec![0.0; img.values.len()];
    out.par_chunks_mut(w).enumerate().for_each(|(r, row)| {
        let mut buf = Vec::with_capacity((window * window) as usize);
        for (c, o) in row.iter_mut().enumerate() {
            buf.clear();
            for dr in -radius..=radius {
                let start = padded.index(r as isize + dr, c as isize - radius);
                buf.extend_from_slice(&padded.values[start..start + window as usize]);
            }
            let (_, m, _) = buf.select_nth_unstable_by(mid, f64::total_cmp);
            *o = *m;
        }
    });
    Ok(ImageGrid {
        values: out,
        ..img.clone()
    })
}
