//! Randomized geometric phantoms: an echogenic (or anechoic) background with
//! elliptical and rectangular inclusions, some of which carry a bright
//! interface along their boundary.
//!
//! The geometry is the macro-scale truth shared by every speckle instance;
//! scatterer fields are drawn from it in [`crate::imaging`].

use std::path::Path;

use rand::Rng as _;
use rand_distr::{Distribution, Normal};
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::grid::{GridSpec, ImageGrid};
use crate::seed::{self, tag};

/// Distribution parameters of phantom generation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct PhantomConfig {
    pub width_mm: f64,
    pub height_mm: f64,
    pub num_inclusions: usize,
    pub background_p_anechoic: f64,
    pub background_sigma_mean: f64,
    pub background_sigma_std: f64,
    pub extent_min_mm: f64,
    pub extent_max_mm: f64,
    pub inclusion_p_anechoic: f64,
    pub inclusion_sigma_mean: f64,
    pub inclusion_sigma_std: f64,
    pub p_interface: f64,
    pub interface_amplitude_mean: f64,
    pub interface_amplitude_std: f64,
}

impl Default for PhantomConfig {
    fn default() -> Self {
        Self {
            width_mm: 37.6,
            height_mm: 60.0,
            num_inclusions: 100,
            background_p_anechoic: 0.4,
            background_sigma_mean: 1.0,
            background_sigma_std: 0.5,
            extent_min_mm: 1.0,
            extent_max_mm: 5.0,
            inclusion_p_anechoic: 0.4,
            inclusion_sigma_mean: 4.0,
            inclusion_sigma_std: 2.0,
            p_interface: 0.5,
            interface_amplitude_mean: 14.0,
            interface_amplitude_std: 2.0,
        }
    }
}

impl PhantomConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("width_mm", self.width_mm),
            ("height_mm", self.height_mm),
            ("extent_min_mm", self.extent_min_mm),
            ("extent_max_mm", self.extent_max_mm),
        ];
        for (name, v) in positive {
            if !(v > 0.0 && v.is_finite()) {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.extent_min_mm > self.extent_max_mm {
            return Err(Error::Config("extent_min_mm exceeds extent_max_mm".into()));
        }
        for (name, p) in [
            ("background_p_anechoic", self.background_p_anechoic),
            ("inclusion_p_anechoic", self.inclusion_p_anechoic),
            ("p_interface", self.p_interface),
        ] {
            if !(0.0..=1.0).contains(&p) {
                return Err(Error::Config(format!("{name} must lie in [0, 1], got {p}")));
            }
        }
        for (name, s) in [
            ("background_sigma_std", self.background_sigma_std),
            ("inclusion_sigma_std", self.inclusion_sigma_std),
            ("interface_amplitude_std", self.interface_amplitude_std),
        ] {
            if !(s >= 0.0 && s.is_finite()) {
                return Err(Error::Config(format!(
                    "{name} must be nonnegative, got {s}"
                )));
            }
        }
        Ok(())
    }
}

/// Scattering statistics of one region.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RegionSpec {
    pub anechoic: bool,
    /// Standard deviation of the zero-mean normal scatterer amplitudes.
    pub amplitude_sigma: f64,
}

impl RegionSpec {
    pub fn is_echoic(&self) -> bool {
        !self.anechoic && self.amplitude_sigma > 0.0
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Shape {
    /// Elliptical cross-section.
    Spheroid,
    /// Rectangular cross-section.
    Cuboid,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct InclusionSpec {
    pub shape: Shape,
    /// `(x, z)` center in mm.
    pub center_mm: (f64, f64),
    /// Full `(x, z)` extent in mm (diameters for ellipses).
    pub extent_mm: (f64, f64),
    pub region: RegionSpec,
    pub has_interface: bool,
    pub interface_amplitude: f64,
}

impl InclusionSpec {
    fn semi_axes(&self) -> (f64, f64) {
        (0.5 * self.extent_mm.0, 0.5 * self.extent_mm.1)
    }

    pub fn contains(&self, x: f64, z: f64) -> bool {
        let (a, b) = self.semi_axes();
        let u = x - self.center_mm.0;
        let v = z - self.center_mm.1;
        match self.shape {
            Shape::Spheroid => (u / a).powi(2) + (v / b).powi(2) <= 1.0,
            Shape::Cuboid => u.abs() <= a && v.abs() <= b,
        }
    }

    /// Euclidean distance from `(x, z)` to the boundary curve.
    pub fn boundary_distance(&self, x: f64, z: f64) -> f64 {
        let (a, b) = self.semi_axes();
        let u = (x - self.center_mm.0).abs();
        let v = (z - self.center_mm.1).abs();
        match self.shape {
            Shape::Cuboid => {
                if u <= a && v <= b {
                    (a - u).min(b - v)
                } else {
                    (u - a).max(0.0).hypot((v - b).max(0.0))
                }
            }
            Shape::Spheroid => {
                if a >= b {
                    ellipse_distance(a, b, u, v)
                } else {
                    ellipse_distance(b, a, v, u)
                }
            }
        }
    }

    pub fn perimeter_mm(&self) -> f64 {
        let (a, b) = self.semi_axes();
        match self.shape {
            Shape::Cuboid => 4.0 * (a + b),
            // Ramanujan's second approximation; exact for circles.
            Shape::Spheroid => {
                let h = ((a - b) / (a + b)).powi(2);
                std::f64::consts::PI * (a + b) * (1.0 + 3.0 * h / (10.0 + (4.0 - 3.0 * h).sqrt()))
            }
        }
    }

    /// A point drawn uniformly by arc length on the boundary curve.
    pub fn sample_boundary<R: rand::Rng + ?Sized>(&self, rng: &mut R) -> (f64, f64) {
        let (a, b) = self.semi_axes();
        let (cx, cz) = self.center_mm;
        match self.shape {
            Shape::Cuboid => {
                let t = rng.gen::<f64>() * 4.0 * (a + b);
                let (u, v) = if t < 2.0 * a {
                    (t - a, -b)
                } else if t < 2.0 * a + 2.0 * b {
                    (a, t - 2.0 * a - b)
                } else if t < 4.0 * a + 2.0 * b {
                    (a - (t - 2.0 * a - 2.0 * b), b)
                } else {
                    (-a, b - (t - 4.0 * a - 2.0 * b))
                };
                (cx + u, cz + v)
            }
            Shape::Spheroid => {
                // rejection on the parametric speed |d/dθ (a cos θ, b sin θ)|
                let vmax = a.max(b);
                loop {
                    let theta = rng.gen::<f64>() * std::f64::consts::TAU;
                    let (s, c) = theta.sin_cos();
                    let speed = (a * s).hypot(b * c);
                    if rng.gen::<f64>() * vmax <= speed {
                        return (cx + a * c, cz + b * s);
                    }
                }
            }
        }
    }
}

/// Distance from `(y0, y1)` (first quadrant) to the ellipse with semi-axes
/// `e0 >= e1`, by bisection on the Lagrange parameter.
fn ellipse_distance(e0: f64, e1: f64, y0: f64, y1: f64) -> f64 {
    if y1 > 0.0 {
        if y0 > 0.0 {
            let z0 = y0 / e0;
            let z1 = y1 / e1;
            let g = z0 * z0 + z1 * z1 - 1.0;
            if g == 0.0 {
                return 0.0;
            }
            let r0 = (e0 / e1).powi(2);
            let sbar = ellipse_root(r0, z0, z1, g);
            let x0 = r0 * y0 / (sbar + r0);
            let x1 = y1 / (sbar + 1.0);
            (x0 - y0).hypot(x1 - y1)
        } else {
            (y1 - e1).abs()
        }
    } else {
        let numer0 = e0 * y0;
        let denom0 = e0 * e0 - e1 * e1;
        if numer0 < denom0 {
            let xde0 = numer0 / denom0;
            let x0 = e0 * xde0;
            let x1 = e1 * (1.0 - xde0 * xde0).max(0.0).sqrt();
            (x0 - y0).hypot(x1)
        } else {
            (y0 - e0).abs()
        }
    }
}

fn ellipse_root(r0: f64, z0: f64, z1: f64, g: f64) -> f64 {
    let n0 = r0 * z0;
    let mut s0 = z1 - 1.0;
    let mut s1 = if g < 0.0 { 0.0 } else { n0.hypot(z1) - 1.0 };
    let mut s = 0.0;
    for _ in 0..200 {
        s = 0.5 * (s0 + s1);
        if s == s0 || s == s1 {
            break;
        }
        let ratio0 = n0 / (s + r0);
        let ratio1 = z1 / (s + 1.0);
        let g = ratio0 * ratio0 + ratio1 * ratio1 - 1.0;
        if g > 0.0 {
            s0 = s;
        } else if g < 0.0 {
            s1 = s;
        } else {
            break;
        }
    }
    s
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct PhantomGeometry {
    pub width_mm: f64,
    pub height_mm: f64,
    pub background: RegionSpec,
    pub inclusions: Vec<InclusionSpec>,
    pub seed: u64,
}

fn clamped_normal<R: rand::Rng + ?Sized>(rng: &mut R, mean: f64, std: f64) -> f64 {
    // std was validated nonnegative, so construction cannot fail
    Normal::new(mean, std).unwrap().sample(rng).max(0.0)
}

/// Draws a phantom. Deterministic in `(cfg, seed)`.
pub fn generate_phantom(cfg: &PhantomConfig, seed: u64) -> Result<PhantomGeometry> {
    cfg.validate()?;
    let mut rng = seed::rng_from(&[tag::PHANTOM, seed]);

    let bg_anechoic = rng.gen_bool(cfg.background_p_anechoic);
    let bg_sigma = clamped_normal(
        &mut rng,
        cfg.background_sigma_mean,
        cfg.background_sigma_std,
    );
    let background = RegionSpec {
        anechoic: bg_anechoic,
        amplitude_sigma: bg_sigma,
    };

    let mut inclusions = Vec::with_capacity(cfg.num_inclusions);
    for _ in 0..cfg.num_inclusions {
        let shape = if rng.gen_bool(0.5) {
            Shape::Spheroid
        } else {
            Shape::Cuboid
        };
        let center_mm = (
            rng.gen::<f64>() * cfg.width_mm,
            rng.gen::<f64>() * cfg.height_mm,
        );
        let mut extent = || {
            if cfg.extent_min_mm == cfg.extent_max_mm {
                cfg.extent_min_mm
            } else {
                rng.gen_range(cfg.extent_min_mm..=cfg.extent_max_mm)
            }
        };
        let extent_mm = (extent(), extent());
        let anechoic = rng.gen_bool(cfg.inclusion_p_anechoic);
        let amplitude_sigma =
            clamped_normal(&mut rng, cfg.inclusion_sigma_mean, cfg.inclusion_sigma_std);
        let has_interface = rng.gen_bool(cfg.p_interface);
        let interface_amplitude = clamped_normal(
            &mut rng,
            cfg.interface_amplitude_mean,
            cfg.interface_amplitude_std,
        );
        inclusions.push(InclusionSpec {
            shape,
            center_mm,
            extent_mm,
            region: RegionSpec {
                anechoic,
                amplitude_sigma,
            },
            has_interface,
            interface_amplitude,
        });
    }

    Ok(PhantomGeometry {
        width_mm: cfg.width_mm,
        height_mm: cfg.height_mm,
        background,
        inclusions,
        seed,
    })
}

impl PhantomGeometry {
    pub fn contains_point(&self, x: f64, z: f64) -> bool {
        (0.0..=self.width_mm).contains(&x) && (0.0..=self.height_mm).contains(&z)
    }

    /// Index of the last-listed inclusion containing the point, if any.
    pub fn inclusion_at(&self, x: f64, z: f64) -> Option<usize> {
        self.inclusions.iter().rposition(|inc| inc.contains(x, z))
    }

    pub fn to_json(&self) -> String {
        serde_json::to_string_pretty(self).expect("geometry serializes")
    }

    pub fn from_json(s: &str) -> Result<Self> {
        serde_json::from_str(s).map_err(|e| Error::Config(format!("geometry JSON: {e}")))
    }

    pub fn write_json(&self, path: &Path) -> Result<()> {
        crate::grid::write_file(path, self.to_json().as_bytes())
    }

    pub fn read_json(path: &Path) -> Result<Self> {
        let s = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
        serde_json::from_str(&s).map_err(|e| Error::format(path, e.to_string()))
    }
}

/// Region governing the scatterers at `point_mm = (x, z)`: the topmost
/// (last-listed) inclusion containing it, else the background.
pub fn region_at(geom: &PhantomGeometry, point_mm: (f64, f64)) -> Result<RegionSpec> {
    let (x, z) = point_mm;
    if !geom.contains_point(x, z) {
        return Err(Error::Domain(format!(
            "point ({x}, {z}) mm outside the {}x{} mm phantom",
            geom.width_mm, geom.height_mm
        )));
    }
    Ok(match geom.inclusion_at(x, z) {
        Some(i) => geom.inclusions[i].region,
        None => geom.background,
    })
}

/// Binary map of inclusion interfaces (1 on the boundary, 0 elsewhere).
#[derive(Debug, Clone, PartialEq)]
pub struct InterfaceMap {
    pub grid: ImageGrid,
}

impl InterfaceMap {
    pub fn count(&self) -> usize {
        self.grid.values.iter().filter(|&&v| v != 0.0).count()
    }
}

/// Marks every pixel whose center lies within half a pixel diagonal of the
/// boundary of an inclusion that has an interface.
pub fn rasterize_interfaces(geom: &PhantomGeometry, grid_spec: &GridSpec) -> Result<InterfaceMap> {
    grid_spec.validate()?;
    let mut grid = ImageGrid::zeros(*grid_spec);
    let (dx, dz) = (grid_spec.dx_mm, grid_spec.dz_mm);
    let threshold = 0.5 * dx.hypot(dz);

    for inc in geom.inclusions.iter().filter(|i| i.has_interface) {
        let (a, b) = inc.semi_axes();
        let (cx, cz) = inc.center_mm;
        let col_range = pixel_span(cx - a - threshold, cx + a + threshold, dx, grid.width);
        let row_range = pixel_span(cz - b - threshold, cz + b + threshold, dz, grid.height);
        for row in row_range {
            for col in col_range.clone() {
                let (x, z) = grid_spec.center_mm(row, col);
                if inc.boundary_distance(x, z) <= threshold {
                    grid.set(row, col, 1.0);
                }
            }
        }
    }
    Ok(InterfaceMap { grid })
}

/// Indices of pixels whose centers may fall in `[lo, hi]` mm.
pub(crate) fn pixel_span(lo: f64, hi: f64, spacing: f64, n: usize) -> std::ops::Range<usize> {
    let start = ((lo / spacing - 0.5).floor().max(0.0)) as usize;
    let end = ((hi / spacing - 0.5).ceil() + 1.0).clamp(0.0, n as f64) as usize;
    start.min(n)..end
}

/// Per-pixel region label: 0 for background, `k + 1` for inclusion `k`
/// (last-listed wins).
pub fn region_labels(geom: &PhantomGeometry, grid_spec: &GridSpec) -> Vec<usize> {
    let mut labels = Vec::with_capacity(grid_spec.len());
    for row in 0..grid_spec.height_px {
        for col in 0..grid_spec.width_px {
            let (x, z) = grid_spec.center_mm(row, col);
            labels.push(geom.inclusion_at(x, z).map_or(0, |i| i + 1));
        }
    }
    labels
}
