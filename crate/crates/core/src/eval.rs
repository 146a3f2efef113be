//! Error metrics, homogeneous-region statistics, corpus evaluation and
//! runtime benchmarks.

use std::collections::BTreeMap;
use std::fmt::Write as _;
use std::path::{Path, PathBuf};
use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::filters::{FilterParams, PixelRect};
use crate::grid::{GridSpec, ImageGrid};
use crate::net::{Checkpoint, NetworkParams};
use crate::phantom::{region_labels, PhantomGeometry};

pub const HISTOGRAM_BINS: usize = 64;

pub fn mse(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y) * (x - y))
        .sum();
    Ok(s / a.values.len() as f64)
}

pub fn mad(a: &ImageGrid, b: &ImageGrid) -> Result<f64> {
    a.ensure_same_shape(b)?;
    let s: f64 = a
        .values
        .iter()
        .zip(&b.values)
        .map(|(x, y)| (x - y).abs())
        .sum();
    Ok(s / a.values.len() as f64)
}

/// `(mean, population std)`; `(0, 0)` for an empty slice.
pub fn mean_std(values: &[f64]) -> (f64, f64) {
    if values.is_empty() {
        return (0.0, 0.0);
    }
    let n = values.len() as f64;
    let mean = values.iter().sum::<f64>() / n;
    let var = values.iter().map(|v| (v - mean) * (v - mean)).sum::<f64>() / n;
    (mean, var.sqrt())
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionStats {
    pub mean: f64,
    /// Population standard deviation.
    pub std: f64,
    /// `HISTOGRAM_BINS` equal bins over [0, 1]; values outside fall into
    /// the end bins.
    pub histogram: Vec<u64>,
}

pub fn histogram_bin(v: f64) -> usize {
    ((v * HISTOGRAM_BINS as f64).floor().max(0.0) as usize).min(HISTOGRAM_BINS - 1)
}

pub fn region_stats(img: &ImageGrid, r: &PixelRect) -> Result<RegionStats> {
    if r.is_empty() {
        return Err(Error::Domain(format!("empty region {r:?}")));
    }
    if r.x1 > img.width || r.z1 > img.height {
        return Err(Error::Domain(format!(
            "region {r:?} exceeds the {}x{} image",
            img.width, img.height
        )));
    }
    let mut vals = Vec::with_capacity(r.area());
    let mut histogram = vec![0u64; HISTOGRAM_BINS];
    for row in r.z0..r.z1 {
        for &v in &img.values[row * img.width + r.x0..row * img.width + r.x1] {
            vals.push(v);
            histogram[histogram_bin(v)] += 1;
        }
    }
    let (mean, std) = mean_std(&vals);
    Ok(RegionStats {
        mean,
        std,
        histogram,
    })
}

/// Parameters of automatic homogeneous-region detection.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct HomogeneousSearch {
    /// Square window side in pixels.
    pub size: usize,
    /// Clearance from any other region, laterally and axially, in pixels.
    pub margin_x: usize,
    pub margin_z: usize,
}

impl Default for HomogeneousSearch {
    /// Clearance of about two PSF widths at the default resolution.
    fn default() -> Self {
        Self {
            size: 16,
            margin_x: 8,
            margin_z: 4,
        }
    }
}

/// Non-overlapping square windows lying, with their margins, inside a
/// single echoic region of the phantom (and inside the image).
pub fn homogeneous_regions(
    geom: &PhantomGeometry,
    grid: &GridSpec,
    search: &HomogeneousSearch,
) -> Vec<PixelRect> {
    let labels = region_labels(geom, grid);
    let (w, h) = (grid.width_px, grid.height_px);
    let (s, mx, mz) = (search.size, search.margin_x, search.margin_z);
    if s == 0 || s + 2 * mx > w || s + 2 * mz > h {
        return Vec::new();
    }
    let echoic = |label: usize| {
        let region = if label == 0 {
            geom.background
        } else {
            geom.inclusions[label - 1].region
        };
        !region.anechoic && region.amplitude_sigma > 0.1
    };
    let mut taken: Vec<PixelRect> = Vec::new();
    let step = (s / 2).max(1);
    let mut z = mz;
    while z + s + mz <= h {
        let mut x = mx;
        while x + s + mx <= w {
            let cand = PixelRect::new(x, z, x + s, z + s);
            let overlaps = taken
                .iter()
                .any(|t| cand.x0 < t.x1 && t.x0 < cand.x1 && cand.z0 < t.z1 && t.z0 < cand.z1);
            if !overlaps {
                let label = labels[z * w + x];
                let uniform = (z - mz..z + s + mz).all(|r| {
                    labels[r * w + x - mx..r * w + x + s + mx]
                        .iter()
                        .all(|&l| l == label)
                });
                if uniform && echoic(label) {
                    taken.push(cand);
                }
            }
            x += step;
        }
        z += step;
    }
    taken
}

/// Anything that maps an image to a despeckled image.
pub trait Despeckler: Send + Sync {
    fn apply(&self, img: &ImageGrid) -> Result<ImageGrid>;
}

/// How a method is specified in configs: `{"type":"identity"}`,
/// `{"type":"network","checkpoint":"path"}` or any filter object
/// (`{"type":"nlm","h":0.075,"search":101,"patch":21}`, ...).
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(try_from = "serde_json::Value", into = "serde_json::Value")]
pub enum MethodSpec {
    Identity,
    Network { checkpoint: PathBuf },
    Filter(FilterParams),
}

impl TryFrom<serde_json::Value> for MethodSpec {
    type Error = String;

    fn try_from(v: serde_json::Value) -> std::result::Result<Self, String> {
        let kind = v
            .get("type")
            .and_then(|t| t.as_str())
            .ok_or("method needs a string \"type\"")?
            .to_owned();
        let obj = v.as_object().ok_or("method must be a JSON object")?;
        match kind.as_str() {
            "identity" => {
                if obj.len() != 1 {
                    return Err("identity method takes no parameters".into());
                }
                Ok(MethodSpec::Identity)
            }
            "network" => {
                if let Some(k) = obj.keys().find(|k| *k != "type" && *k != "checkpoint") {
                    return Err(format!("unknown field {k:?} in network method"));
                }
                let ck = obj
                    .get("checkpoint")
                    .and_then(|c| c.as_str())
                    .ok_or("network method needs a \"checkpoint\" path")?;
                Ok(MethodSpec::Network {
                    checkpoint: PathBuf::from(ck),
                })
            }
            _ => serde_json::from_value(v)
                .map(MethodSpec::Filter)
                .map_err(|e| e.to_string()),
        }
    }
}

impl From<MethodSpec> for serde_json::Value {
    fn from(m: MethodSpec) -> Self {
        match m {
            MethodSpec::Identity => serde_json::json!({"type": "identity"}),
            MethodSpec::Network { checkpoint } => {
                serde_json::json!({"type": "network", "checkpoint": checkpoint.to_string_lossy()})
            }
            MethodSpec::Filter(f) => serde_json::to_value(f).expect("filter params serialize"),
        }
    }
}

impl MethodSpec {
    /// Validates parameters and loads checkpoints. Relative checkpoint paths
    /// resolve against `base`.
    pub fn resolve(&self, base: &Path) -> Result<Method> {
        Ok(match self {
            MethodSpec::Identity => Method::Identity,
            MethodSpec::Filter(f) => {
                f.validate()?;
                Method::Filter(f.clone())
            }
            MethodSpec::Network { checkpoint } => {
                let path = base.join(checkpoint);
                Method::Network(Box::new(Checkpoint::load(&path)?.params))
            }
        })
    }

    pub fn default_name(&self) -> String {
        match self {
            MethodSpec::Identity => "input".into(),
            MethodSpec::Network { .. } => "network".into(),
            MethodSpec::Filter(f) => f.name().into(),
        }
    }
}

/// A ready-to-run method.
#[derive(Debug, Clone)]
pub enum Method {
    Identity,
    Filter(FilterParams),
    Network(Box<NetworkParams>),
}

impl Despeckler for Method {
    fn apply(&self, img: &ImageGrid) -> Result<ImageGrid> {
        match self {
            Method::Identity => Ok(img.clone()),
            Method::Filter(f) => f.apply(img),
            Method::Network(p) => p.infer(img),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct NamedMethod {
    pub name: String,
    pub method: MethodSpec,
}

/// Where region statistics are taken.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(tag = "mode", rename_all = "lowercase", deny_unknown_fields)]
pub enum RegionSelection {
    /// Homogeneous windows found from each phantom's geometry.
    Auto {
        #[serde(default)]
        search: HomogeneousSearch,
    },
    /// The same rectangles in every image.
    Fixed { regions: Vec<PixelRect> },
}

impl Default for RegionSelection {
    fn default() -> Self {
        RegionSelection::Auto {
            search: HomogeneousSearch::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Timing {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub n: usize,
}

/// Statistics pooled over every region of one kind.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct RegionSummary {
    pub regions: usize,
    /// Mean of the per-region means.
    pub mean: f64,
    /// Mean of the per-region standard deviations.
    pub std: f64,
    pub histogram: Vec<u64>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodReport {
    pub name: String,
    pub mse_mean: f64,
    pub mse_std: f64,
    pub mad_mean: f64,
    pub mad_std: f64,
    pub region_stats: BTreeMap<String, RegionSummary>,
    pub runtime_ms: Timing,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRow {
    pub phantom_id: u64,
    pub method: String,
    pub mse: f64,
    pub mad: f64,
    pub runtime_ms: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct EvalReport {
    pub splits: Vec<Split>,
    pub images: usize,
    pub region_selection: RegionSelection,
    pub methods: Vec<MethodReport>,
    pub rows: Vec<ImageRow>,
}

impl EvalReport {
    /// `phantom_id,method,mse,mad,runtime_ms` with round-trip precision.
    pub fn rows_csv(&self) -> String {
        let mut s = String::from("phantom_id,method,mse,mad,runtime_ms\n");
        for r in &self.rows {
            writeln!(
                s,
                "{},{},{:?},{:?},{:?}",
                r.phantom_id, r.method, r.mse, r.mad, r.runtime_ms
            )
            .unwrap();
        }
        s
    }

    pub fn method(&self, name: &str) -> Option<&MethodReport> {
        self.methods.iter().find(|m| m.name == name)
    }
}

/// Applies every method to the held-out input of each evaluation entry and
/// scores it against the entry's average image. Images are processed one
/// at a time so per-image timings are not distorted by contention; the
/// methods themselves may run in parallel internally.
pub fn evaluate_corpus(
    manifest: &DatasetManifest,
    splits: &[Split],
    methods: &[(String, &dyn Despeckler)],
    regions: &RegionSelection,
) -> Result<EvalReport> {
    if methods.is_empty() {
        return Err(Error::Config("no methods to evaluate".into()));
    }
    let grid = manifest.generator_config.grid;
    struct Acc {
        mse: Vec<f64>,
        mad: Vec<f64>,
        ms: Vec<f64>,
        regions: BTreeMap<String, (Vec<f64>, Vec<f64>, Vec<u64>)>,
    }
    let mut accs: Vec<Acc> = methods
        .iter()
        .map(|_| Acc {
            mse: vec![],
            mad: vec![],
            ms: vec![],
            regions: BTreeMap::new(),
        })
        .collect();
    let mut rows = Vec::new();
    let mut images = 0;

    for &split in splits {
        for entry in manifest.entries(split) {
            let (input, average) = manifest.load_eval(entry)?;
            let rects: Vec<(String, PixelRect)> = match regions {
                RegionSelection::Auto { search } => {
                    let geom = manifest.load_geometry(entry)?;
                    homogeneous_regions(&geom, &grid, search)
                        .into_iter()
                        .map(|r| ("homogeneous".to_string(), r))
                        .collect()
                }
                RegionSelection::Fixed { regions } => regions
                    .iter()
                    .map(|r| (format!("{},{},{},{}", r.x0, r.z0, r.x1, r.z1), *r))
                    .collect(),
            };
            images += 1;
            for ((name, method), acc) in methods.iter().zip(&mut accs) {
                let t = Instant::now();
                let out = method.apply(&input)?;
                let ms = t.elapsed().as_secs_f64() * 1e3;
                let (e2, e1) = (mse(&out, &average)?, mad(&out, &average)?);
                acc.mse.push(e2);
                acc.mad.push(e1);
                acc.ms.push(ms);
                for (key, r) in &rects {
                    let st = region_stats(&out, r)?;
                    let slot = acc
                        .regions
                        .entry(key.clone())
                        .or_insert_with(|| (vec![], vec![], vec![0; HISTOGRAM_BINS]));
                    slot.0.push(st.mean);
                    slot.1.push(st.std);
                    for (a, b) in slot.2.iter_mut().zip(&st.histogram) {
                        *a += b;
                    }
                }
                rows.push(ImageRow {
                    phantom_id: entry.phantom_id,
                    method: name.clone(),
                    mse: e2,
                    mad: e1,
                    runtime_ms: ms,
                });
            }
        }
    }
    if images == 0 {
        return Err(Error::Dataset(
            "no evaluation entries in the selected splits".into(),
        ));
    }

    let reports = methods
        .iter()
        .zip(accs)
        .map(|((name, _), acc)| {
            let (mse_mean, mse_std) = mean_std(&acc.mse);
            let (mad_mean, mad_std) = mean_std(&acc.mad);
            let (mean_ms, std_ms) = mean_std(&acc.ms);
            let region_stats = acc
                .regions
                .into_iter()
                .map(|(k, (means, stds, hist))| {
                    let summary = RegionSummary {
                        regions: means.len(),
                        mean: mean_std(&means).0,
                        std: mean_std(&stds).0,
                        histogram: hist,
                    };
                    (k, summary)
                })
                .collect();
            MethodReport {
                name: name.clone(),
                mse_mean,
                mse_std,
                mad_mean,
                mad_std,
                region_stats,
                runtime_ms: Timing {
                    mean_ms,
                    std_ms,
                    n: acc.ms.len(),
                },
            }
        })
        .collect();
    Ok(EvalReport {
        splits: splits.to_vec(),
        images,
        region_selection: regions.clone(),
        methods: reports,
        rows,
    })
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct BenchResult {
    pub mean_ms: f64,
    pub std_ms: f64,
    pub min_ms: f64,
    pub max_ms: f64,
    pub samples_ms: Vec<f64>,
    pub warmups: u32,
    /// Worker threads the method was allowed to use.
    pub threads: usize,
}

/// Wall-clock time per application after `warmups` untimed runs, inside a
/// dedicated pool of `threads` workers.
pub fn bench_runtime(
    method: &dyn Despeckler,
    img: &ImageGrid,
    warmups: u32,
    reps: u32,
    threads: usize,
) -> Result<BenchResult> {
    if reps < 3 {
        return Err(Error::Config(format!(
            "benchmark needs at least 3 repetitions, got {reps}"
        )));
    }
    if threads == 0 {
        return Err(Error::Config(
            "benchmark thread count must be positive".into(),
        ));
    }
    let pool = rayon::ThreadPoolBuilder::new()
        .num_threads(threads)
        .build()
        .map_err(|e| Error::Config(format!("cannot build thread pool: {e}")))?;
    pool.install(|| {
        for _ in 0..warmups {
            method.apply(img)?;
        }
        let mut samples = Vec::with_capacity(reps as usize);
        for _ in 0..reps {
            let t = Instant::now();
            let out = method.apply(img)?;
            samples.push(t.elapsed().as_secs_f64() * 1e3);
            drop(out);
        }
        let (mean_ms, std_ms) = mean_std(&samples);
        Ok(BenchResult {
            mean_ms,
            std_ms,
            min_ms: samples.iter().cloned().fold(f64::INFINITY, f64::min),
            max_ms: samples.iter().cloned().fold(f64::NEG_INFINITY, f64::max),
            samples_ms: samples,
            warmups,
            threads,
        })
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetConfig};
    use crate::phantom::{InclusionSpec, RegionSpec, Shape};
    use proptest::prelude::*;
    use std::collections::HashMap;

    #[test]
    fn metric_reference_values() {
        let a = ImageGrid::from_fn(4, 3, |_, _| 0.0);
        let b = ImageGrid::from_fn(4, 3, |_, _| 0.1);
        assert_eq!(mse(&a, &a).unwrap(), 0.0);
        assert_eq!(mad(&a, &a).unwrap(), 0.0);
        assert!((mse(&a, &b).unwrap() - 0.01).abs() < 1e-15);
        assert!((mad(&a, &b).unwrap() - 0.1).abs() < 1e-15);
        assert!(mse(&a, &ImageGrid::from_fn(3, 4, |_, _| 0.0)).is_err());
    }

    proptest! {
        #[test]
        fn metric_laws(a in prop::collection::vec(-1.0f64..2.0, 12), b in prop::collection::vec(-1.0f64..2.0, 12)) {
            let ga = ImageGrid::from_fn(4, 3, |r, c| a[r * 4 + c]);
            let gb = ImageGrid::from_fn(4, 3, |r, c| b[r * 4 + c]);
            let (m, d) = (mse(&ga, &gb).unwrap(), mad(&ga, &gb).unwrap());
            prop_assert_eq!(m, mse(&gb, &ga).unwrap());
            prop_assert_eq!(d, mad(&gb, &ga).unwrap());
            prop_assert!(m >= d * d - 1e-15);
            prop_assert_eq!(m == 0.0, a == b);
        }

        #[test]
        fn histogram_counts_every_pixel(v in prop::collection::vec(-0.5f64..1.5, 1..60), w in 1usize..6) {
            let h = v.len().div_ceil(w);
            let img = ImageGrid::from_fn(w, h, |r, c| *v.get(r * w + c).unwrap_or(&0.3));
            let st = region_stats(&img, &PixelRect::new(0, 0, w, h)).unwrap();
            prop_assert_eq!(st.histogram.iter().sum::<u64>(), (w * h) as u64);
        }
    }

    #[test]
    fn region_stats_reference_values() {
        let img = ImageGrid::from_fn(4, 4, |_, _| 0.3);
        let st = region_stats(&img, &PixelRect::new(1, 1, 3, 4)).unwrap();
        assert!((st.mean - 0.3).abs() < 1e-15);
        assert_eq!(st.std, 0.0);
        assert_eq!(st.histogram.iter().filter(|&&c| c > 0).count(), 1);

        let two = ImageGrid::from_fn(2, 1, |_, c| c as f64);
        let st = region_stats(&two, &PixelRect::new(0, 0, 2, 1)).unwrap();
        assert_eq!((st.mean, st.std), (0.5, 0.5));
        assert_eq!((st.histogram[0], st.histogram[63]), (1, 1));

        assert!(matches!(
            region_stats(&img, &PixelRect::new(2, 2, 2, 3)),
            Err(Error::Domain(_))
        ));
        assert!(matches!(
            region_stats(&img, &PixelRect::new(0, 0, 5, 1)),
            Err(Error::Domain(_))
        ));
    }

    #[test]
    fn homogeneous_windows_avoid_inclusions_and_anechoic_regions() {
        let grid = GridSpec::new(64, 48, 1.0, 1.0);
        let mut geom = PhantomGeometry {
            width_mm: 64.0,
            height_mm: 48.0,
            background: RegionSpec {
                anechoic: false,
                amplitude_sigma: 1.0,
            },
            inclusions: vec![InclusionSpec {
                shape: Shape::Cuboid,
                center_mm: (32.0, 24.0),
                extent_mm: (20.0, 10.0),
                region: RegionSpec {
                    anechoic: true,
                    amplitude_sigma: 0.0,
                },
                has_interface: false,
                interface_amplitude: 0.0,
            }],
            seed: 0,
        };
        let search = HomogeneousSearch {
            size: 8,
            margin_x: 4,
            margin_z: 2,
        };
        let rects = homogeneous_regions(&geom, &grid, &search);
        assert!(!rects.is_empty());
        let labels = region_labels(&geom, &grid);
        for r in &rects {
            for z in r.z0.saturating_sub(2)..(r.z1 + 2).min(48) {
                for x in r.x0.saturating_sub(4)..(r.x1 + 4).min(64) {
                    assert_eq!(labels[z * 64 + x], 0);
                }
            }
        }
        geom.background.anechoic = true;
        assert!(homogeneous_regions(&geom, &grid, &search).is_empty());
    }

    #[test]
    fn method_spec_json() {
        let m: MethodSpec = serde_json::from_str(r#"{"type":"identity"}"#).unwrap();
        assert_eq!(m, MethodSpec::Identity);
        let m: MethodSpec =
            serde_json::from_str(r#"{"type":"network","checkpoint":"a/b.s2sn"}"#).unwrap();
        assert_eq!(
            m,
            MethodSpec::Network {
                checkpoint: "a/b.s2sn".into()
            }
        );
        let m: MethodSpec = serde_json::from_str(r#"{"type":"median","window":5}"#).unwrap();
        assert_eq!(m, MethodSpec::Filter(FilterParams::Median { window: 5 }));
        for bad in [
            r#"{"type":"blur"}"#,
            r#"{"type":"identity","x":1}"#,
            r#"{"type":"network"}"#,
            r#"{"type":"median","window":5,"extra":1}"#,
            r#"{"window":5}"#,
        ] {
            assert!(serde_json::from_str::<MethodSpec>(bad).is_err(), "{bad}");
        }
        let back =
            serde_json::to_string(&MethodSpec::Filter(FilterParams::median_default())).unwrap();
        assert_eq!(
            serde_json::from_str::<MethodSpec>(&back).unwrap(),
            MethodSpec::Filter(FilterParams::median_default())
        );
    }

    struct Lookup(HashMap<Vec<u64>, ImageGrid>);
    impl Despeckler for Lookup {
        fn apply(&self, img: &ImageGrid) -> Result<ImageGrid> {
            let key: Vec<u64> = img.values.iter().map(|v| v.to_bits()).collect();
            Ok(self.0[&key].clone())
        }
    }

    fn corpus(dir: &Path) -> DatasetManifest {
        let mut cfg = DatasetConfig::with_grid(GridSpec::new(48, 40, 0.15, 0.15), 0, 3, 2);
        cfg.eval_instances = 4;
        generate_dataset(&cfg, 21, dir).unwrap()
    }

    #[test]
    fn identity_and_average_probes() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let mut table = HashMap::new();
        let mut want = Vec::new();
        for s in [Split::Val, Split::Test] {
            for e in m.entries(s) {
                let (input, avg) = m.load_eval(e).unwrap();
                want.push(mse(&input, &avg).unwrap());
                table.insert(input.values.iter().map(|v| v.to_bits()).collect(), avg);
            }
        }
        let probe = Lookup(table);
        let methods: Vec<(String, &dyn Despeckler)> = vec![
            ("input".into(), &Method::Identity),
            ("oracle".into(), &probe),
        ];
        let report = evaluate_corpus(
            &m,
            &[Split::Val, Split::Test],
            &methods,
            &RegionSelection::default(),
        )
        .unwrap();
        assert_eq!(report.images, 5);
        let input = report.method("input").unwrap();
        let rows: Vec<f64> = report
            .rows
            .iter()
            .filter(|r| r.method == "input")
            .map(|r| r.mse)
            .collect();
        assert_eq!(rows, want);
        assert!((input.mse_mean - want.iter().sum::<f64>() / 5.0).abs() < 1e-15);
        let oracle = report.method("oracle").unwrap();
        assert_eq!((oracle.mse_mean, oracle.mad_mean), (0.0, 0.0));
        assert!(report.rows.iter().all(|r| r.runtime_ms >= 0.0));
    }

    #[test]
    fn report_means_recompute_from_csv() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let median = Method::Filter(FilterParams::Median { window: 3 });
        let methods: Vec<(String, &dyn Despeckler)> = vec![
            ("input".into(), &Method::Identity),
            ("median".into(), &median),
        ];
        let report =
            evaluate_corpus(&m, &[Split::Val], &methods, &RegionSelection::default()).unwrap();
        let csv = report.rows_csv();
        for mr in &report.methods {
            let (mut mses, mut mads) = (vec![], vec![]);
            for line in csv.lines().skip(1) {
                let f: Vec<&str> = line.split(',').collect();
                if f[1] == mr.name {
                    mses.push(f[2].parse::<f64>().unwrap());
                    mads.push(f[3].parse::<f64>().unwrap());
                }
            }
            let n = mses.len() as f64;
            let mean = mses.iter().sum::<f64>() / n;
            let std = (mses.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / n).sqrt();
            assert!((mean - mr.mse_mean).abs() <= 1e-9);
            assert!((std - mr.mse_std).abs() <= 1e-9);
            assert!((mads.iter().sum::<f64>() / n - mr.mad_mean).abs() <= 1e-9);
        }
        // deterministic apart from timings
        let again =
            evaluate_corpus(&m, &[Split::Val], &methods, &RegionSelection::default()).unwrap();
        for (a, b) in report.rows.iter().zip(&again.rows) {
            assert_eq!((a.mse, a.mad), (b.mse, b.mad));
        }
    }

    #[test]
    fn fixed_regions_are_keyed_by_rectangle() {
        let dir = tempfile::tempdir().unwrap();
        let m = corpus(dir.path());
        let sel = RegionSelection::Fixed {
            regions: vec![PixelRect::new(0, 0, 8, 8)],
        };
        let methods: Vec<(String, &dyn Despeckler)> = vec![("input".into(), &Method::Identity)];
        let report = evaluate_corpus(&m, &[Split::Test], &methods, &sel).unwrap();
        let s = &report.method("input").unwrap().region_stats["0,0,8,8"];
        assert_eq!(s.regions, 2);
        assert_eq!(s.histogram.iter().sum::<u64>(), 128);
    }

    #[test]
    fn bench_identity() {
        let img = ImageGrid::from_fn(128, 128, |r, c| ((r + c) % 5) as f64 / 5.0);
        let r = bench_runtime(&Method::Identity, &img, 1, 5, 1).unwrap();
        assert_eq!(r.samples_ms.len(), 5);
        assert!(r.mean_ms < 1.0);
        assert!(r.std_ms >= 0.0 && r.min_ms <= r.mean_ms && r.mean_ms <= r.max_ms);
        assert!(matches!(
            bench_runtime(&Method::Identity, &img, 0, 2, 1),
            Err(Error::Config(_))
        ));
    }
}
