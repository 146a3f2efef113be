use std::path::{Path, PathBuf};

use despeckle_core::dataset::{DatasetConfig, Split};
use despeckle_core::eval::{MethodSpec, NamedMethod, RegionSelection};
use despeckle_core::filters::FilterParams;
use despeckle_core::{Error, Result};
use serde::de::DeserializeOwned;
use serde::{Deserialize, Serialize};
use serde_json::Value;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct SimulateConfig {
    pub seed: u64,
    pub dataset: DatasetConfig,
}

impl Default for SimulateConfig {
    fn default() -> Self {
        Self {
            seed: 1,
            dataset: DatasetConfig::default(),
        }
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct EvaluateConfig {
    /// Defaults to the unfiltered input, every filter with its default
    /// parameters and, when a checkpoint is given, the network.
    pub methods: Vec<NamedMethod>,
    pub splits: Vec<Split>,
    pub regions: RegionSelection,
}

impl Default for EvaluateConfig {
    fn default() -> Self {
        Self {
            methods: Vec::new(),
            splits: vec![Split::Test],
            regions: RegionSelection::default(),
        }
    }
}

impl SimulateConfig {
    /// Missing dataset keys default relative to the given grid: the phantom
    /// extent, inclusion count and imaging PSF follow its size and spacing.
    pub fn from_json(text: &str, origin: &str) -> Result<Self> {
        let user: Value = parse(text, origin)?;
        let grid = match user.pointer("/dataset/grid") {
            Some(g) => serde_json::from_value(g.clone())
                .map_err(|e| Error::Config(format!("{origin}: grid: {e}")))?,
            None => DatasetConfig::default().grid,
        };
        let mut base = serde_json::to_value(SimulateConfig {
            dataset: DatasetConfig::with_grid(grid, 200, 20, 20),
            ..SimulateConfig::default()
        })
        .expect("config serializes");
        merge(&mut base, user);
        serde_json::from_value(base).map_err(|e| Error::Config(format!("{origin}: {e}")))
    }
}

/// Recursively overlays `patch` onto `base`; non-object values replace.
fn merge(base: &mut Value, patch: Value) {
    match (base, patch) {
        (Value::Object(b), Value::Object(p)) => {
            for (k, v) in p {
                match b.get_mut(&k) {
                    Some(slot) => merge(slot, v),
                    None => {
                        b.insert(k, v);
                    }
                }
            }
        }
        (slot, v) => *slot = v,
    }
}

pub fn default_methods(checkpoint: Option<&Path>) -> Vec<NamedMethod> {
    let mut m = vec![NamedMethod {
        name: "input".into(),
        method: MethodSpec::Identity,
    }];
    m.extend(FilterParams::defaults().into_iter().map(|f| NamedMethod {
        name: f.name().into(),
        method: MethodSpec::Filter(f),
    }));
    if let Some(ck) = checkpoint {
        m.push(NamedMethod {
            name: "network".into(),
            method: MethodSpec::Network {
                checkpoint: ck.to_path_buf(),
            },
        });
    }
    m
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct BenchConfig {
    pub methods: Vec<NamedMethod>,
    #[serde(default = "default_warmups")]
    pub warmups: u32,
    #[serde(default = "default_reps")]
    pub reps: u32,
}

fn default_warmups() -> u32 {
    1
}

fn default_reps() -> u32 {
    5
}

/// Parses a JSON config file, or returns the default when no path is given.
pub fn load_or_default<T: DeserializeOwned + Default>(path: Option<&Path>) -> Result<T> {
    match path {
        Some(p) => load(p),
        None => Ok(T::default()),
    }
}

pub fn load<T: DeserializeOwned>(path: &Path) -> Result<T> {
    parse(&read_text(path)?, &path.display().to_string())
}

pub fn read_text(path: &Path) -> Result<String> {
    std::fs::read_to_string(path).map_err(|e| Error::Io {
        path: path.to_path_buf(),
        source: e,
    })
}

pub fn parse<T: DeserializeOwned>(text: &str, origin: &str) -> Result<T> {
    serde_json::from_str(text).map_err(|e| Error::Config(format!("{origin}: {e}")))
}

/// Directory that relative paths inside a config file are resolved against.
pub fn base_dir(config: Option<&Path>) -> PathBuf {
    config
        .and_then(|p| p.parent())
        .map(Path::to_path_buf)
        .unwrap_or_default()
}

#[cfg(test)]
mod tests {
    use super::*;

    #[test]
    fn dataset_defaults_follow_the_grid() {
        let c = SimulateConfig::from_json(
            r#"{"dataset":{"grid":{"width_px":32,"height_px":24,"dx_mm":0.15,"dz_mm":0.15},"train_phantoms":1}}"#,
            "t",
        )
        .unwrap();
        c.dataset.validate().unwrap();
        assert_eq!(c.dataset.phantom.width_mm, 32.0 * 0.15);
        assert_eq!((c.dataset.train_phantoms, c.dataset.val_phantoms), (1, 20));
        assert_eq!(
            SimulateConfig::from_json("{}", "t").unwrap(),
            SimulateConfig::default()
        );
        assert!(SimulateConfig::from_json(r#"{"dataset":{"bogus":1}}"#, "t").is_err());
        assert!(SimulateConfig::from_json(r#"{"seed":1,"#, "t").is_err());
    }

    #[test]
    fn default_method_set() {
        let names: Vec<String> = default_methods(Some(Path::new("n.s2sn")))
            .into_iter()
            .map(|m| m.name)
            .collect();
        assert_eq!(
            names,
            [
                "input",
                "srad",
                "median",
                "bilateral",
                "nlm",
                "obnlm",
                "network"
            ]
        );
    }
}
