//! Interface-aware training loss.
//!
//! With `w = g_i * I_i` the smoothed interface map and `w~ = 1 - w`:
//!
//! ```text
//! L = mean(((I_o - I_t) w~)^2) + lambda * mean(((I_o * g_psf - I_t) w)^2)
//! ```
//!
//! Away from interfaces this is plain L2. On interfaces the output is
//! compared with the target only after blurring by the PSF, so the network
//! is free to produce an interface sharper than the (PSF-smoothed) target.

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{mirror_index, ImageGrid};
use crate::phantom::InterfaceMap;

/// How a Gaussian kernel is scaled.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum KernelNorm {
    /// Centre tap equal to one.
    UnitPeak,
    /// Taps summing to one.
    UnitSum,
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct LossConfig {
    pub lambda: f64,
    pub sigma_i_px: f64,
    pub sigma_psf_ax_px: f64,
    pub sigma_psf_lat_px: f64,
    pub interface_kernel: KernelNorm,
    pub psf_kernel: KernelNorm,
}

impl Default for LossConfig {
    fn default() -> Self {
        Self {
            lambda: 500.0,
            sigma_i_px: 5.0,
            sigma_psf_ax_px: 1.0,
            sigma_psf_lat_px: 7.0,
            interface_kernel: KernelNorm::UnitPeak,
            psf_kernel: KernelNorm::UnitSum,
        }
    }
}

impl LossConfig {
    pub fn validate(&self) -> Result<()> {
        if !(self.lambda >= 0.0 && self.lambda.is_finite()) {
            return Err(Error::Config(format!(
                "loss lambda must be >= 0, got {}",
                self.lambda
            )));
        }
        for (name, v) in [
            ("sigma_i_px", self.sigma_i_px),
            ("sigma_psf_ax_px", self.sigma_psf_ax_px),
            ("sigma_psf_lat_px", self.sigma_psf_lat_px),
        ] {
            if !(v > 0.0 && v.is_finite() && v <= 1000.0) {
                return Err(Error::Config(format!(
                    "{name} must be in (0, 1000], got {v}"
                )));
            }
        }
        Ok(())
    }
}

/// 1-D Gaussian taps over `[-ceil(4 sigma), ceil(4 sigma)]`.
pub fn gaussian_taps(sigma: f64, norm: KernelNorm) -> Vec<f64> {
    let r = (4.0 * sigma).ceil() as isize;
    let mut taps: Vec<f64> = (-r..=r)
        .map(|t| (-((t * t) as f64) / (2.0 * sigma * sigma)).exp())
        .collect();
    if norm == KernelNorm::UnitSum {
        let s: f64 = taps.iter().sum();
        taps.iter_mut().for_each(|t| *t /= s);
    }
    taps
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
enum Border {
    Zero,
    Mirror,
}

/// `out[i] = sum_t taps[t] * x[i + t - r]` along one axis (`stride` apart,
/// `n` samples per line, `lines` lines starting `line_step` apart).
fn correlate_1d(
    x: &[f64],
    n: usize,
    stride: usize,
    lines: usize,
    line_step: usize,
    taps: &[f64],
    border: Border,
) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; x.len()];
    for l in 0..lines {
        let base = l * line_step;
        for i in 0..n {
            let mut acc = 0.0;
            for (t, &g) in taps.iter().enumerate() {
                let s = i as isize + t as isize - r;
                let idx = match border {
                    Border::Mirror => mirror_index(s, n),
                    Border::Zero if s < 0 || s >= n as isize => continue,
                    Border::Zero => s as usize,
                };
                acc += g * x[base + idx * stride];
            }
            out[base + i * stride] = acc;
        }
    }
    out
}

/// Exact adjoint of [`correlate_1d`] with mirrored borders.
fn correlate_1d_mirror_adjoint(
    y: &[f64],
    n: usize,
    stride: usize,
    lines: usize,
    line_step: usize,
    taps: &[f64],
) -> Vec<f64> {
    let r = (taps.len() / 2) as isize;
    let mut out = vec![0.0; y.len()];
    for l in 0..lines {
        let base = l * line_step;
        for i in 0..n {
            let v = y[base + i * stride];
            for (t, &g) in taps.iter().enumerate() {
                let s = mirror_index(i as isize + t as isize - r, n);
                out[base + s * stride] += g * v;
            }
        }
    }
    out
}

fn separable(img: &ImageGrid, lat: &[f64], ax: &[f64], border: Border) -> Vec<f64> {
    let (w, h) = (img.width, img.height);
    let horiz = correlate_1d(&img.values, w, 1, h, w, lat, border);
    correlate_1d(&horiz, h, w, w, 1, ax, border)
}

fn separable_mirror_adjoint(
    values: &[f64],
    w: usize,
    h: usize,
    lat: &[f64],
    ax: &[f64],
) -> Vec<f64> {
    let vert = correlate_1d_mirror_adjoint(values, h, w, w, 1, ax);
    correlate_1d_mirror_adjoint(&vert, w, 1, h, w, lat)
}

/// Spatial weights for the interface term and its complement.
#[derive(Debug, Clone, PartialEq)]
pub struct WeightMaps {
    pub interface_weight: ImageGrid,
    pub inverse_weight: ImageGrid,
}

impl WeightMaps {
    /// Weights for an image without interfaces.
    pub fn uniform(like: &ImageGrid) -> Self {
        Self {
            interface_weight: ImageGrid {
                values: vec![0.0; like.values.len()],
                ..like.clone()
            },
            inverse_weight: ImageGrid {
                values: vec![1.0; like.values.len()],
                ..like.clone()
            },
        }
    }

    pub fn crop(&self, row: usize, col: usize, w: usize, h: usize) -> Result<Self> {
        Ok(Self {
            interface_weight: self.interface_weight.crop(row, col, w, h)?,
            inverse_weight: self.inverse_weight.crop(row, col, w, h)?,
        })
    }

    pub fn flip_horizontal(&self) -> Self {
        Self {
            interface_weight: self.interface_weight.flip_horizontal(),
            inverse_weight: self.inverse_weight.flip_horizontal(),
        }
    }
}

/// Smooths the binary interface map with a Gaussian of std `sigma_px`
/// (zero padding) and clamps to [0, 1].
pub fn interface_weight(map: &InterfaceMap, sigma_px: f64, norm: KernelNorm) -> Result<WeightMaps> {
    if !(sigma_px > 0.0 && sigma_px.is_finite()) {
        return Err(Error::Config(format!(
            "interface sigma must be positive, got {sigma_px}"
        )));
    }
    let taps = gaussian_taps(sigma_px, norm);
    let smooth = separable(&map.grid, &taps, &taps, Border::Zero);
    let w: Vec<f64> = smooth.into_iter().map(|v| v.clamp(0.0, 1.0)).collect();
    let inv: Vec<f64> = w.iter().map(|v| 1.0 - v).collect();
    Ok(WeightMaps {
        interface_weight: ImageGrid {
            values: w,
            ..map.grid.clone()
        },
        inverse_weight: ImageGrid {
            values: inv,
            ..map.grid.clone()
        },
    })
}

/// Convolution with the anisotropic PSF Gaussian, mirrored borders.
pub fn psf_blur(img: &ImageGrid, cfg: &LossConfig) -> ImageGrid {
    let lat = gaussian_taps(cfg.sigma_psf_lat_px, cfg.psf_kernel);
    let ax = gaussian_taps(cfg.sigma_psf_ax_px, cfg.psf_kernel);
    ImageGrid {
        values: separable(img, &lat, &ax, Border::Mirror),
        ..img.clone()
    }
}

fn check(
    output: &ImageGrid,
    target: &ImageGrid,
    maps: &WeightMaps,
    cfg: &LossConfig,
) -> Result<()> {
    cfg.validate()?;
    output.ensure_same_shape(target)?;
    output.ensure_same_shape(&maps.interface_weight)?;
    output.ensure_same_shape(&maps.inverse_weight)
}

pub fn loss_forward(
    output: &ImageGrid,
    target: &ImageGrid,
    maps: &WeightMaps,
    cfg: &LossConfig,
) -> Result<f64> {
    Ok(loss_and_gradient_impl(output, target, maps, cfg, false)?.0)
}

/// `dL / dI_o`.
pub fn loss_backward(
    output: &ImageGrid,
    target: &ImageGrid,
    maps: &WeightMaps,
    cfg: &LossConfig,
) -> Result<ImageGrid> {
    Ok(loss_and_gradient_impl(output, target, maps, cfg, true)?
        .1
        .expect("requested"))
}

/// Loss value and gradient sharing one PSF blur.
pub fn loss_and_gradient(
    output: &ImageGrid,
    target: &ImageGrid,
    maps: &WeightMaps,
    cfg: &LossConfig,
) -> Result<(f64, ImageGrid)> {
    let (l, g) = loss_and_gradient_impl(output, target, maps, cfg, true)?;
    Ok((l, g.expect("requested")))
}

fn loss_and_gradient_impl(
    output: &ImageGrid,
    target: &ImageGrid,
    maps: &WeightMaps,
    cfg: &LossConfig,
    want_grad: bool,
) -> Result<(f64, Option<ImageGrid>)> {
    check(output, target, maps, cfg)?;
    let n = output.values.len() as f64;
    let (wi, inv) = (&maps.interface_weight.values, &maps.inverse_weight.values);

    let mut data = 0.0;
    for ((o, t), m) in output.values.iter().zip(&target.values).zip(inv) {
        let d = o * m - t * m;
        data += d * d;
    }

    // The interface term only matters where w > 0; skip the blur otherwise.
    let any_interface = cfg.lambda > 0.0 && wi.iter().any(|&v| v != 0.0);
    let mut sharp = 0.0;
    let mut resid_w2 = Vec::new();
    if any_interface {
        let blurred = psf_blur(output, cfg);
        resid_w2.reserve(wi.len());
        for ((b, t), w) in blurred.values.iter().zip(&target.values).zip(wi) {
            let s = (b - t) * w;
            sharp += s * s;
            resid_w2.push((b - t) * w * w);
        }
    }
    let loss = data / n + cfg.lambda * sharp / n;

    if !want_grad {
        return Ok((loss, None));
    }
    let mut grad: Vec<f64> = output
        .values
        .iter()
        .zip(&target.values)
        .zip(inv)
        .map(|((o, t), m)| 2.0 / n * (o - t) * m * m)
        .collect();
    if any_interface {
        let lat = gaussian_taps(cfg.sigma_psf_lat_px, cfg.psf_kernel);
        let ax = gaussian_taps(cfg.sigma_psf_ax_px, cfg.psf_kernel);
        let back = separable_mirror_adjoint(&resid_w2, output.width, output.height, &lat, &ax);
        let k = 2.0 * cfg.lambda / n;
        for (g, b) in grad.iter_mut().zip(back) {
            *g += k * b;
        }
    }
    Ok((
        loss,
        Some(ImageGrid {
            values: grad,
            ..output.clone()
        }),
    ))
}
