use crate::mirror;

/// Binary map convolved (zero padding) with a unit-peak 2-D Gaussian of
/// radius `ceil(4 sigma)`, clamped to [0, 1].
pub fn interface_weight(width: usize, height: usize, mask: &[f64], sigma: f64) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let mut out = vec![0.0; width * height];
    for i in 0..height as isize {
        for j in 0..width as isize {
            let mut acc = 0.0;
            for di in -r..=r {
                for dj in -r..=r {
                    let (y, x) = (i + di, j + dj);
                    if y < 0 || x < 0 || y >= height as isize || x >= width as isize {
                        continue;
                    }
                    let g = (-((di * di + dj * dj) as f64) / (2.0 * sigma * sigma)).exp();
                    acc += g * mask[y as usize * width + x as usize];
                }
            }
            out[i as usize * width + j as usize] = acc.clamp(0.0, 1.0);
        }
    }
    out
}

/// Mirror-padded convolution with the sum-normalized 2-D Gaussian, built
/// as a full (non-separable) kernel.
pub fn psf_blur(
    width: usize,
    height: usize,
    img: &[f64],
    sigma_ax: f64,
    sigma_lat: f64,
) -> Vec<f64> {
    let ra = (4.0 * sigma_ax).ceil() as isize;
    let rl = (4.0 * sigma_lat).ceil() as isize;
    let mut kernel = Vec::new();
    let mut total = 0.0;
    for di in -ra..=ra {
        for dj in -rl..=rl {
            let g = (-((di * di) as f64) / (2.0 * sigma_ax * sigma_ax)
                - ((dj * dj) as f64) / (2.0 * sigma_lat * sigma_lat))
                .exp();
            kernel.push((di, dj, g));
            total += g;
        }
    }
    let mut out = vec![0.0; width * height];
    for i in 0..height as isize {
        for j in 0..width as isize {
            let terms: Vec<f64> = kernel
                .iter()
                .map(|&(di, dj, g)| {
                    g / total * img[mirror(i + di, height) * width + mirror(j + dj, width)]
                })
                .collect();
            out[i as usize * width + j as usize] = compensated_sum(&terms);
        }
    }
    out
}

/// Masked mean-squared data term plus `lambda` times the mean squared
/// blurred-residual on the interface weight.
#[allow(clippy::too_many_arguments)]
pub fn s2s_loss(
    width: usize,
    height: usize,
    output: &[f64],
    target: &[f64],
    mask: &[f64],
    lambda: f64,
    sigma_i: f64,
    sigma_ax: f64,
    sigma_lat: f64,
) -> f64 {
    let wi = interface_weight(width, height, mask, sigma_i);
    let blurred = psf_blur(width, height, output, sigma_ax, sigma_lat);
    let n = (width * height) as f64;
    let mut data = Vec::new();
    let mut sharp = Vec::new();
    for k in 0..width * height {
        let inv = 1.0 - wi[k];
        let d = output[k] * inv - target[k] * inv;
        data.push(d * d);
        let s = (blurred[k] - target[k]) * wi[k];
        sharp.push(s * s);
    }
    compensated_sum(&data) / n + lambda * compensated_sum(&sharp) / n
}

/// Neumaier summation, so finite differences of the loss are limited by
/// the final rounding rather than by accumulated error.
pub fn compensated_sum(values: &[f64]) -> f64 {
    let (mut sum, mut comp) = (0.0f64, 0.0f64);
    for &v in values {
        let t = sum + v;
        if sum.abs() >= v.abs() {
            comp += (sum - t) + v;
        } else {
            comp += (v - t) + sum;
        }
        sum = t;
    }
    sum + comp
}
