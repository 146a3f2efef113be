use std::path::{Path, PathBuf};
use std::time::Instant;

use despeckle_core::dataset::{generate_dataset, DatasetManifest, MANIFEST_FILE};
use despeckle_core::eval::{
    bench_runtime, evaluate_corpus, BenchResult, Despeckler, Method, MethodSpec, NamedMethod,
};
use despeckle_core::grid::{read_image, write_image};
use despeckle_core::net::Checkpoint;
use despeckle_core::train::{train as run_training, TrainConfig};
use despeckle_core::{Error, Result};
use serde::Serialize;
use serde_json::json;

use crate::config::{self, BenchConfig, EvaluateConfig, SimulateConfig};

pub const RESOLVED_CONFIG: &str = "resolved_config.json";

fn create_dir(dir: &Path) -> Result<()> {
    std::fs::create_dir_all(dir).map_err(|e| Error::Io {
        path: dir.to_path_buf(),
        source: e,
    })
}

fn write_text(path: &Path, text: &str) -> Result<()> {
    std::fs::write(path, text).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

fn write_json(path: &Path, value: &impl Serialize) -> Result<()> {
    let mut s = serde_json::to_string_pretty(value).expect("reports serialize");
    s.push('\n');
    write_text(path, &s)
}

/// `<file>.resolved.json` beside a single-file output.
fn sidecar(output: &Path) -> PathBuf {
    let mut name = output.file_name().unwrap_or_default().to_os_string();
    name.push(".resolved.json");
    output.with_file_name(name)
}

pub fn simulate(config: Option<&Path>, out: &Path, threads: usize) -> Result<()> {
    let cfg = match config {
        Some(p) => SimulateConfig::from_json(&config::read_text(p)?, &p.display().to_string())?,
        None => SimulateConfig::default(),
    };
    cfg.dataset.validate()?;
    let n = cfg.dataset.image_count();
    let px = cfg.dataset.grid.len();
    if n * px > 50_000_000 {
        eprintln!(
            "warning: {n} images of {}x{} px; this corpus takes hours to days to generate",
            cfg.dataset.grid.width_px, cfg.dataset.grid.height_px
        );
    }
    create_dir(out)?;
    write_json(
        &out.join(RESOLVED_CONFIG),
        &json!({"command": "simulate", "threads": threads, "config": cfg}),
    )?;
    let t = Instant::now();
    let manifest = generate_dataset(&cfg.dataset, cfg.seed, out)?;
    eprintln!("generated {n} images in {:.1} s", t.elapsed().as_secs_f64());
    println!("{}", out.join(MANIFEST_FILE).display());
    drop(manifest);
    Ok(())
}

pub fn train(
    config: Option<&Path>,
    manifest: &Path,
    out: &Path,
    resume: Option<&Path>,
    threads: usize,
) -> Result<()> {
    let cfg: TrainConfig = config::load_or_default(config)?;
    cfg.validate()?;
    let m = DatasetManifest::load(manifest)?;
    let ck = resume.map(Checkpoint::load).transpose()?;
    create_dir(out)?;
    write_json(
        &out.join(RESOLVED_CONFIG),
        &json!({
            "command": "train",
            "threads": threads,
            "manifest": manifest,
            "resume": resume,
            "config": cfg,
        }),
    )?;
    let t = Instant::now();
    let outcome = run_training(&m, &cfg, out, ck, &mut |row| match row.val_mse {
        Some(v) => eprintln!(
            "epoch {:>5}  loss {:.6}  val mse {:.6e}  ({:.0} s)",
            row.epoch,
            row.train_loss,
            v,
            t.elapsed().as_secs_f64()
        ),
        None => eprintln!(
            "epoch {:>5}  loss {:.6}  ({:.0} s)",
            row.epoch,
            row.train_loss,
            t.elapsed().as_secs_f64()
        ),
    })?;
    println!("{}", outcome.final_checkpoint.display());
    Ok(())
}

fn parse_method(arg: &str) -> Result<(MethodSpec, PathBuf)> {
    if arg.trim_start().starts_with('{') {
        Ok((config::parse(arg, "--method")?, PathBuf::new()))
    } else {
        let p = Path::new(arg);
        Ok((config::load(p)?, config::base_dir(Some(p))))
    }
}

pub fn apply(input: &Path, method: &str, output: &Path, alpha: f64) -> Result<()> {
    if !(0.0..=1.0).contains(&alpha) {
        return Err(Error::Config(format!(
            "alpha must lie in [0, 1], got {alpha}"
        )));
    }
    let (spec, base) = parse_method(method)?;
    let resolved = spec.resolve(&base)?;
    let (img, format) = read_image(input)?;
    write_json(
        &sidecar(output),
        &json!({"command": "apply", "input": input, "method": spec, "alpha": alpha}),
    )?;
    let filtered = resolved.apply(&img)?;
    let blended = filtered
        .values
        .iter()
        .zip(&img.values)
        .map(|(f, x)| (1.0 - alpha) * f + alpha * x)
        .collect();
    let out = despeckle_core::ImageGrid {
        values: blended,
        ..img
    };
    write_image(&out, format, output)
}

fn resolve_all(methods: &[NamedMethod], base: &Path) -> Result<Vec<(String, Method)>> {
    let mut seen = std::collections::HashSet::new();
    methods
        .iter()
        .map(|m| {
            if !seen.insert(m.name.as_str()) {
                return Err(Error::Config(format!("duplicate method name {:?}", m.name)));
            }
            Ok((m.name.clone(), m.method.resolve(base)?))
        })
        .collect()
}

pub fn evaluate(
    manifest: &Path,
    config: Option<&Path>,
    checkpoint: Option<&Path>,
    out: &Path,
    threads: usize,
) -> Result<()> {
    let mut cfg: EvaluateConfig = config::load_or_default(config)?;
    if cfg.methods.is_empty() {
        cfg.methods = config::default_methods(None);
    }
    let base = config::base_dir(config);
    let mut resolved = resolve_all(&cfg.methods, &base)?;
    if let Some(ck) = checkpoint {
        if cfg.methods.iter().any(|m| m.name == "network") {
            return Err(Error::Config(
                "--checkpoint given but a method is already named \"network\"".into(),
            ));
        }
        let spec = MethodSpec::Network {
            checkpoint: ck.to_path_buf(),
        };
        resolved.push(("network".into(), spec.resolve(Path::new(""))?));
        cfg.methods.push(NamedMethod {
            name: "network".into(),
            method: spec,
        });
    }
    let m = DatasetManifest::load(manifest)?;
    create_dir(out)?;
    write_json(
        &out.join(RESOLVED_CONFIG),
        &json!({"command": "evaluate", "threads": threads, "manifest": manifest, "config": cfg}),
    )?;
    let methods: Vec<(String, &dyn Despeckler)> = resolved
        .iter()
        .map(|(n, m)| (n.clone(), m as &dyn Despeckler))
        .collect();
    let report = evaluate_corpus(&m, &cfg.splits, &methods, &cfg.regions)?;
    write_json(&out.join("report.json"), &report)?;
    write_text(&out.join("per_image.csv"), &report.rows_csv())?;
    println!(
        "{:<12} {:>12} {:>12} {:>12} {:>12}",
        "method", "mse", "mad", "region std", "ms/image"
    );
    for r in &report.methods {
        let std = r.region_stats.values().map(|s| s.std).sum::<f64>()
            / r.region_stats.len().max(1) as f64;
        println!(
            "{:<12} {:>12.4e} {:>12.4e} {:>12.4e} {:>12.1}",
            r.name, r.mse_mean, r.mad_mean, std, r.runtime_ms.mean_ms
        );
    }
    Ok(())
}

#[derive(Serialize)]
struct BenchEntry {
    name: String,
    method: MethodSpec,
    #[serde(flatten)]
    result: BenchResult,
}

pub fn bench(image: &Path, config_path: &Path, out: &Path, threads: usize) -> Result<()> {
    let cfg: BenchConfig = config::load(config_path)?;
    if cfg.methods.is_empty() {
        return Err(Error::Config("bench config lists no methods".into()));
    }
    if cfg.reps < 3 {
        return Err(Error::Config(format!(
            "bench needs at least 3 repetitions, got {}",
            cfg.reps
        )));
    }
    let resolved = resolve_all(&cfg.methods, &config::base_dir(Some(config_path)))?;
    let (img, _) = read_image(image)?;
    write_json(
        &sidecar(out),
        &json!({"command": "bench", "threads": threads, "image": image, "config": cfg}),
    )?;
    let mut entries = Vec::new();
    for ((name, method), named) in resolved.iter().zip(&cfg.methods) {
        let result = bench_runtime(method, &img, cfg.warmups, cfg.reps, threads)?;
        eprintln!(
            "{name:<12} {:>10.2} ms ± {:.2}",
            result.mean_ms, result.std_ms
        );
        entries.push(BenchEntry {
            name: name.clone(),
            method: named.method.clone(),
            result,
        });
    }
    write_json(
        out,
        &json!({
            "image": image,
            "width": img.width,
            "height": img.height,
            "threads": threads,
            "methods": entries,
        }),
    )
}
