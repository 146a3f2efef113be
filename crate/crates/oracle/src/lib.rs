//! Straight-loop reference implementations, written for clarity rather than
//! speed and sharing no code with `despeckle-core`. Images are row-major
//! `f64` slices of `width * height` values.

mod filters;
mod loss;
mod net;

pub use filters::{bilateral, median, nlm, obnlm, srad};
pub use loss::{compensated_sum, interface_weight, psf_blur, s2s_loss};
pub use net::conv2d;

/// Symmetric reflection, `-1 -> 0`, `n -> n - 1`, applied until in range.
pub fn mirror(mut i: isize, n: usize) -> usize {
    let n = n as isize;
    loop {
        if i < 0 {
            i = -1 - i;
        } else if i >= n {
            i = 2 * n - 1 - i;
        } else {
            return i as usize;
        }
    }
}

/// Pixel lookup with mirrored boundaries.
pub fn at(img: &[f64], width: usize, height: usize, r: isize, c: isize) -> f64 {
    img[mirror(r, height) * width + mirror(c, width)]
}

/// Central finite-difference derivative of `f` at `x` along coordinate `i`.
pub fn central_difference(f: &mut dyn FnMut(&[f64]) -> f64, x: &[f64], i: usize, eps: f64) -> f64 {
    let mut xp = x.to_vec();
    xp[i] += eps;
    let fp = f(&xp);
    xp[i] = x[i] - eps;
    let fm = f(&xp);
    (fp - fm) / (2.0 * eps)
}

/// `|a - b| / max(|a|, |b|, floor)`.
pub fn relative_error(a: f64, b: f64, floor: f64) -> f64 {
    (a - b).abs() / a.abs().max(b.abs()).max(floor)
}
