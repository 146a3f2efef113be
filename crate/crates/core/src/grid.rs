//! Two-dimensional scalar images with physical pixel spacing, plus the raw
//! float (`.s2sf`) and 8-bit PGM exchange formats.
//!
//! Axis convention: `x` is lateral and indexes columns, `z` is axial (depth)
//! and indexes rows. Pixel `(row, col)` has its center at
//! `((col + 0.5) * dx_mm, (row + 0.5) * dz_mm)`.

use std::fs;
use std::io::Write;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

pub const S2SF_MAGIC: &[u8; 4] = b"S2SF";

/// Dimensions and spacing of a pixel grid.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct GridSpec {
    pub width_px: usize,
    pub height_px: usize,
    pub dx_mm: f64,
    pub dz_mm: f64,
}

impl GridSpec {
    pub fn new(width_px: usize, height_px: usize, dx_mm: f64, dz_mm: f64) -> Self {
        Self {
            width_px,
            height_px,
            dx_mm,
            dz_mm,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.width_px == 0 || self.height_px == 0 {
            return Err(Error::Config(format!(
                "grid must be nonempty, got {}x{}",
                self.width_px, self.height_px
            )));
        }
        if !(self.dx_mm > 0.0 && self.dz_mm > 0.0)
            || !self.dx_mm.is_finite()
            || !self.dz_mm.is_finite()
        {
            return Err(Error::Config(format!(
                "pixel spacing must be positive, got ({}, {})",
                self.dx_mm, self.dz_mm
            )));
        }
        Ok(())
    }

    pub fn width_mm(&self) -> f64 {
        self.width_px as f64 * self.dx_mm
    }

    pub fn height_mm(&self) -> f64 {
        self.height_px as f64 * self.dz_mm
    }

    /// Physical position `(x, z)` of the center of pixel `(row, col)`.
    pub fn center_mm(&self, row: usize, col: usize) -> (f64, f64) {
        (
            (col as f64 + 0.5) * self.dx_mm,
            (row as f64 + 0.5) * self.dz_mm,
        )
    }

    pub fn len(&self) -> usize {
        self.width_px * self.height_px
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }
}

/// Row-major scalar image.
#[derive(Debug, Clone, PartialEq)]
pub struct ImageGrid {
    pub width: usize,
    pub height: usize,
    pub dx_mm: f64,
    pub dz_mm: f64,
    pub values: Vec<f64>,
}

impl ImageGrid {
    pub fn zeros(spec: GridSpec) -> Self {
        Self::filled(spec, 0.0)
    }

    pub fn filled(spec: GridSpec, value: f64) -> Self {
        Self {
            width: spec.width_px,
            height: spec.height_px,
            dx_mm: spec.dx_mm,
            dz_mm: spec.dz_mm,
            values: vec![value; spec.len()],
        }
    }

    pub fn from_values(spec: GridSpec, values: Vec<f64>) -> Result<Self> {
        if values.len() != spec.len() {
            return Err(Error::Shape(format!(
                "{} values for a {}x{} grid",
                values.len(),
                spec.width_px,
                spec.height_px
            )));
        }
        Ok(Self {
            width: spec.width_px,
            height: spec.height_px,
            dx_mm: spec.dx_mm,
            dz_mm: spec.dz_mm,
            values,
        })
    }

    /// Unit-spaced image, convenient for filters and tests.
    pub fn from_fn(width: usize, height: usize, mut f: impl FnMut(usize, usize) -> f64) -> Self {
        let mut values = Vec::with_capacity(width * height);
        for r in 0..height {
            for c in 0..width {
                values.push(f(r, c));
            }
        }
        Self {
            width,
            height,
            dx_mm: 1.0,
            dz_mm: 1.0,
            values,
        }
    }

    pub fn spec(&self) -> GridSpec {
        GridSpec::new(self.width, self.height, self.dx_mm, self.dz_mm)
    }

    #[inline]
    pub fn get(&self, row: usize, col: usize) -> f64 {
        self.values[row * self.width + col]
    }

    #[inline]
    pub fn set(&mut self, row: usize, col: usize, v: f64) {
        self.values[row * self.width + col] = v;
    }

    /// Value at a possibly out-of-range position, using symmetric mirroring.
    #[inline]
    pub fn get_mirrored(&self, row: isize, col: isize) -> f64 {
        self.get(
            mirror_index(row, self.height),
            mirror_index(col, self.width),
        )
    }

    pub fn same_shape(&self, other: &ImageGrid) -> bool {
        self.width == other.width && self.height == other.height
    }

    pub fn ensure_same_shape(&self, other: &ImageGrid) -> Result<()> {
        if self.same_shape(other) {
            Ok(())
        } else {
            Err(Error::Shape(format!(
                "{}x{} vs {}x{}",
                self.width, self.height, other.width, other.height
            )))
        }
    }

    pub fn map(&self, f: impl Fn(f64) -> f64) -> ImageGrid {
        ImageGrid {
            values: self.values.iter().map(|&v| f(v)).collect(),
            ..self.clone()
        }
    }

    pub fn min_max(&self) -> (f64, f64) {
        self.values
            .iter()
            .fold((f64::INFINITY, f64::NEG_INFINITY), |(lo, hi), &v| {
                (lo.min(v), hi.max(v))
            })
    }

    pub fn mean(&self) -> f64 {
        self.values.iter().sum::<f64>() / self.values.len() as f64
    }

    /// Copy of the `w`x`h` window whose top-left pixel is `(row, col)`.
    pub fn crop(&self, row: usize, col: usize, w: usize, h: usize) -> Result<ImageGrid> {
        if row + h > self.height || col + w > self.width {
            return Err(Error::Shape(format!(
                "crop {w}x{h} at ({row},{col}) exceeds {}x{}",
                self.width, self.height
            )));
        }
        let mut values = Vec::with_capacity(w * h);
        for r in row..row + h {
            let start = r * self.width + col;
            values.extend_from_slice(&self.values[start..start + w]);
        }
        Ok(ImageGrid {
            width: w,
            height: h,
            dx_mm: self.dx_mm,
            dz_mm: self.dz_mm,
            values,
        })
    }

    /// Left-right mirror image.
    pub fn flip_horizontal(&self) -> ImageGrid {
        let mut out = self.clone();
        for r in 0..self.height {
            out.values[r * self.width..(r + 1) * self.width].reverse();
        }
        out
    }

    /// Values rounded through `f32`, i.e. exactly what a `.s2sf` file stores.
    pub fn quantized_f32(&self) -> ImageGrid {
        self.map(|v| v as f32 as f64)
    }

    pub fn to_s2sf_bytes(&self) -> Vec<u8> {
        let mut buf = Vec::with_capacity(20 + 4 * self.values.len());
        buf.extend_from_slice(S2SF_MAGIC);
        buf.extend_from_slice(&(self.width as u32).to_le_bytes());
        buf.extend_from_slice(&(self.height as u32).to_le_bytes());
        buf.extend_from_slice(&(self.dx_mm as f32).to_le_bytes());
        buf.extend_from_slice(&(self.dz_mm as f32).to_le_bytes());
        for &v in &self.values {
            buf.extend_from_slice(&(v as f32).to_le_bytes());
        }
        buf
    }

    pub fn from_s2sf_bytes(bytes: &[u8], path: &Path) -> Result<ImageGrid> {
        if bytes.len() < 20 || &bytes[..4] != S2SF_MAGIC {
            return Err(Error::format(path, "missing S2SF header"));
        }
        let u32_at = |o: usize| u32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let f32_at = |o: usize| f32::from_le_bytes(bytes[o..o + 4].try_into().unwrap());
        let width = u32_at(4) as usize;
        let height = u32_at(8) as usize;
        let dx = f32_at(12) as f64;
        let dz = f32_at(16) as f64;
        let n = width
            .checked_mul(height)
            .ok_or_else(|| Error::format(path, "dimension overflow"))?;
        if bytes.len() != 20 + 4 * n {
            return Err(Error::format(
                path,
                format!(
                    "expected {} payload bytes, found {}",
                    4 * n,
                    bytes.len() - 20
                ),
            ));
        }
        let values = bytes[20..]
            .chunks_exact(4)
            .map(|c| f32::from_le_bytes(c.try_into().unwrap()) as f64)
            .collect();
        Ok(ImageGrid {
            width,
            height,
            dx_mm: dx,
            dz_mm: dz,
            values,
        })
    }

    pub fn write_s2sf(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_s2sf_bytes())
    }

    pub fn read_s2sf(path: &Path) -> Result<ImageGrid> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_s2sf_bytes(&bytes, path)
    }

    /// Binary P5 PGM, `round(255 * v)` clamped to `0..=255`.
    pub fn to_pgm_bytes(&self) -> Vec<u8> {
        let mut buf = format!("P5\n{} {}\n255\n", self.width, self.height).into_bytes();
        buf.extend(
            self.values
                .iter()
                .map(|&v| (255.0 * v).round().clamp(0.0, 255.0) as u8),
        );
        buf
    }

    /// Reads a P5 PGM with maxval 255; pixel spacing is set to 1 mm.
    pub fn from_pgm_bytes(bytes: &[u8], path: &Path) -> Result<ImageGrid> {
        let mut pos = 0;
        let mut fields = Vec::with_capacity(4);
        while fields.len() < 4 {
            while pos < bytes.len() && bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if pos < bytes.len() && bytes[pos] == b'#' {
                while pos < bytes.len() && bytes[pos] != b'\n' {
                    pos += 1;
                }
                continue;
            }
            let start = pos;
            while pos < bytes.len() && !bytes[pos].is_ascii_whitespace() {
                pos += 1;
            }
            if start == pos {
                return Err(Error::format(path, "truncated PGM header"));
            }
            fields.push(String::from_utf8_lossy(&bytes[start..pos]).into_owned());
        }
        // exactly one whitespace byte separates the header from the raster
        pos += 1;
        if fields[0] != "P5" {
            return Err(Error::format(path, "not a binary (P5) PGM"));
        }
        let parse = |s: &str| {
            s.parse::<usize>()
                .map_err(|_| Error::format(path, format!("bad PGM header field {s:?}")))
        };
        let (width, height, maxval) = (parse(&fields[1])?, parse(&fields[2])?, parse(&fields[3])?);
        if maxval != 255 {
            return Err(Error::format(path, "only maxval 255 is supported"));
        }
        let n = width * height;
        if bytes.len() < pos + n {
            return Err(Error::format(path, "truncated PGM raster"));
        }
        let values = bytes[pos..pos + n]
            .iter()
            .map(|&b| b as f64 / 255.0)
            .collect();
        Ok(ImageGrid {
            width,
            height,
            dx_mm: 1.0,
            dz_mm: 1.0,
            values,
        })
    }

    pub fn write_pgm(&self, path: &Path) -> Result<()> {
        write_file(path, &self.to_pgm_bytes())
    }

    pub fn read_pgm(path: &Path) -> Result<ImageGrid> {
        let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
        Self::from_pgm_bytes(&bytes, path)
    }
}

/// On-disk image encodings.
#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub enum ImageFormat {
    S2sf,
    Pgm,
}

impl ImageFormat {
    /// Sniffs the format from the leading bytes.
    pub fn detect(bytes: &[u8]) -> Option<ImageFormat> {
        if bytes.starts_with(S2SF_MAGIC) {
            Some(ImageFormat::S2sf)
        } else if bytes.starts_with(b"P5") {
            Some(ImageFormat::Pgm)
        } else {
            None
        }
    }
}

/// Reads an image of either format, returning it together with its format.
pub fn read_image(path: &Path) -> Result<(ImageGrid, ImageFormat)> {
    let bytes = fs::read(path).map_err(|e| Error::io(path, e))?;
    match ImageFormat::detect(&bytes) {
        Some(ImageFormat::S2sf) => {
            Ok((ImageGrid::from_s2sf_bytes(&bytes, path)?, ImageFormat::S2sf))
        }
        Some(ImageFormat::Pgm) => Ok((ImageGrid::from_pgm_bytes(&bytes, path)?, ImageFormat::Pgm)),
        None => Err(Error::format(path, "unrecognized image format")),
    }
}

pub fn write_image(img: &ImageGrid, format: ImageFormat, path: &Path) -> Result<()> {
    match format {
        ImageFormat::S2sf => img.write_s2sf(path),
        ImageFormat::Pgm => img.write_pgm(path),
    }
}

pub(crate) fn write_file(path: &Path, bytes: &[u8]) -> Result<()> {
    let mut f = fs::File::create(path).map_err(|e| Error::io(path, e))?;
    f.write_all(bytes).map_err(|e| Error::io(path, e))
}

/// Symmetric (edge-repeating) reflection of `i` into `0..n`:
/// `-1 -> 0`, `-2 -> 1`, `n -> n - 1`. Works for arbitrarily distant `i`.
#[inline]
pub fn mirror_index(i: isize, n: usize) -> usize {
    let n = n as isize;
    if i >= 0 && i < n {
        return i as usize;
    }
    let period = 2 * n;
    let m = i.rem_euclid(period);
    (if m < n { m } else { period - 1 - m }) as usize
}
