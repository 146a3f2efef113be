//! Paired-instance training: every step feeds one speckle realization to
//! the network and scores it against another realization of the same
//! phantom under the interface-weighted loss.

use std::fmt::Write as _;
use std::path::{Path, PathBuf};

use rand::seq::SliceRandom;
use rand::Rng;
use serde::{Deserialize, Serialize};

use crate::dataset::{pick_pair, random_crop_origin, DatasetManifest, Split};
use crate::error::{Error, Result};
use crate::eval::mse;
use crate::grid::{write_file, ImageGrid};
use crate::loss::{interface_weight, loss_and_gradient, LossConfig, WeightMaps};
use crate::net::{
    add_gradients, scale_gradients, AdamConfig, Checkpoint, NetworkParams, NetworkSpec, Tensor,
};
use crate::seed::{rng_from, tag};

pub const LOSS_LOG: &str = "loss.csv";
pub const FINAL_CHECKPOINT: &str = "final.s2sn";
pub const LAST_GOOD_CHECKPOINT: &str = "last_good.s2sn";
pub const CHECKPOINT_DIR: &str = "checkpoints";

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
#[serde(default, deny_unknown_fields)]
pub struct TrainConfig {
    pub network: NetworkSpec,
    pub loss: LossConfig,
    pub adam: AdamConfig,
    pub epochs: u32,
    pub lr: f64,
    /// Samples averaged per optimizer step.
    pub batch: usize,
    /// Side of the square training crops; 0 trains on full images.
    pub crop: usize,
    pub seed: u64,
    /// Random horizontal flips.
    pub flip: bool,
    /// Epoch interval of intermediate checkpoints; 0 disables them.
    pub checkpoint_every: u32,
    /// Epoch interval of validation MSE logging; 0 disables it.
    pub val_every: u32,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            network: NetworkSpec::default(),
            loss: LossConfig::default(),
            adam: AdamConfig::default(),
            epochs: 1000,
            lr: 3e-5,
            batch: 1,
            crop: 64,
            seed: 0,
            flip: true,
            checkpoint_every: 50,
            val_every: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        self.network.validate()?;
        self.loss.validate()?;
        if !(self.lr >= 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!(
                "learning rate must be finite and non-negative, got {}",
                self.lr
            )));
        }
        let a = &self.adam;
        if !(0.0..1.0).contains(&a.beta1) || !(0.0..1.0).contains(&a.beta2) || !(a.eps > 0.0) {
            return Err(Error::Config(format!("invalid Adam settings {a:?}")));
        }
        if self.batch == 0 {
            return Err(Error::Config("batch must be at least 1".into()));
        }
        if self.crop != 0 && self.crop % self.network.multiple() != 0 {
            return Err(Error::Config(format!(
                "crop {} must be a multiple of {} for depth {}",
                self.crop,
                self.network.multiple(),
                self.network.depth
            )));
        }
        Ok(())
    }
}

/// One row of the loss log.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: u32,
    /// Mean training loss over the epoch's samples.
    pub train_loss: f64,
    /// Mean validation MSE of the network output against the averages.
    pub val_mse: Option<f64>,
}

impl EpochLog {
    fn csv_row(&self) -> String {
        match self.val_mse {
            Some(v) => format!("{},{:?},{:?}\n", self.epoch, self.train_loss, v),
            None => format!("{},{:?},\n", self.epoch, self.train_loss),
        }
    }
}

const CSV_HEADER: &str = "epoch,train_loss,val_mse\n";

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    pub final_checkpoint: PathBuf,
    pub epochs_completed: u32,
    pub log: Vec<EpochLog>,
}

struct Sample {
    instances: Vec<ImageGrid>,
    maps: WeightMaps,
}

/// All training phantoms in memory, weight maps computed on the full
/// images so crops see the same weights as uncropped training would.
fn load_training_set(manifest: &DatasetManifest, loss: &LossConfig) -> Result<Vec<Sample>> {
    let entries = manifest.entries(Split::Train);
    if entries.is_empty() {
        return Err(Error::Dataset("manifest has no training entries".into()));
    }
    entries
        .iter()
        .map(|e| {
            if e.instance_paths.len() < 2 {
                return Err(Error::Dataset(format!(
                    "phantom {} has fewer than 2 instances",
                    e.phantom_id
                )));
            }
            let instances = (0..e.instance_paths.len())
                .map(|k| manifest.load_instance(e, k))
                .collect::<Result<Vec<_>>>()?;
            let maps = interface_weight(
                &manifest.load_interface(e)?,
                loss.sigma_i_px,
                loss.interface_kernel,
            )?;
            Ok(Sample { instances, maps })
        })
        .collect()
}

/// Mean MSE between the network output on each held-out input and the
/// corresponding average image.
pub fn validation_mse(
    params: &NetworkParams,
    manifest: &DatasetManifest,
    split: Split,
) -> Result<f64> {
    let entries = manifest.entries(split);
    if entries.is_empty() {
        return Err(Error::Dataset(format!(
            "manifest has no {} entries",
            split.name()
        )));
    }
    let mut total = 0.0;
    for e in entries {
        let (input, avg) = manifest.load_eval(e)?;
        total += mse(&params.infer(&input)?, &avg)?;
    }
    Ok(total / entries.len() as f64)
}

fn epoch_checkpoint_path(out_dir: &Path, epoch: u32) -> PathBuf {
    out_dir
        .join(CHECKPOINT_DIR)
        .join(format!("epoch_{epoch:05}.s2sn"))
}

/// Runs the remaining epochs of `cfg`. Starting from `resume` continues
/// exactly as an uninterrupted run would: every epoch's sampling stream
/// depends only on the seed and the epoch number, and the checkpoint carries
/// the optimizer state.
///
/// Writes `loss.csv`, periodic checkpoints and `final.s2sn` into `out_dir`.
/// A non-finite loss or gradient stops training with
/// [`Error::Divergence`] after saving the parameters from before the
/// offending step as `last_good.s2sn`.
pub fn train(
    manifest: &DatasetManifest,
    cfg: &TrainConfig,
    out_dir: &Path,
    resume: Option<Checkpoint>,
    progress: &mut dyn FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    std::fs::create_dir_all(out_dir).map_err(|e| Error::io(out_dir, e))?;

    let (mut params, start) = match resume {
        Some(ck) => {
            if ck.params.spec != cfg.network {
                return Err(Error::Config(format!(
                    "checkpoint network {:?} differs from the configured {:?}",
                    ck.params.spec, cfg.network
                )));
            }
            (ck.params, ck.epoch)
        }
        None => (NetworkParams::init(cfg.network, cfg.seed)?, 0),
    };

    // keep the rows of epochs that are already done
    let log_path = out_dir.join(LOSS_LOG);
    let mut csv = String::from(CSV_HEADER);
    if start > 0 {
        if let Ok(old) = std::fs::read_to_string(&log_path) {
            for line in old.lines().skip(1) {
                match line.split(',').next().and_then(|e| e.parse::<u32>().ok()) {
                    Some(e) if e <= start => {
                        csv.push_str(line);
                        csv.push('\n');
                    }
                    _ => {}
                }
            }
        }
    }
    write_file(&log_path, csv.as_bytes())?;

    if cfg.checkpoint_every > 0 {
        let dir = out_dir.join(CHECKPOINT_DIR);
        std::fs::create_dir_all(&dir).map_err(|e| Error::io(&dir, e))?;
    }
    let final_path = out_dir.join(FINAL_CHECKPOINT);
    let mut log = Vec::new();
    if start >= cfg.epochs {
        Checkpoint {
            params,
            epoch: start,
        }
        .save(&final_path)?;
        return Ok(TrainOutcome {
            final_checkpoint: final_path,
            epochs_completed: start,
            log,
        });
    }

    let data = load_training_set(manifest, &cfg.loss)?;
    let (w, h) = (data[0].instances[0].width, data[0].instances[0].height);
    let crop = if cfg.crop == 0 { None } else { Some(cfg.crop) };
    match crop {
        Some(c) if c > w || c > h => {
            return Err(Error::Config(format!(
                "crop {c} exceeds the {w}x{h} training images"
            )));
        }
        None if w % cfg.network.multiple() != 0 || h % cfg.network.multiple() != 0 => {
            return Err(Error::Config(format!(
                "full-image training needs dimensions divisible by {}, got {w}x{h}",
                cfg.network.multiple()
            )));
        }
        _ => {}
    }

    for epoch in start + 1..=cfg.epochs {
        let mut rng = rng_from(&[tag::EPOCH, cfg.seed, epoch as u64]);
        let mut order: Vec<usize> = (0..data.len()).collect();
        order.shuffle(&mut rng);

        let mut loss_sum = 0.0;
        for chunk in order.chunks(cfg.batch) {
            let mut acc = params.zero_gradients();
            for &i in chunk {
                let s = &data[i];
                let (a, b) = pick_pair(s.instances.len(), &mut rng);
                let (mut x, mut t, mut m) = match crop {
                    Some(c) => {
                        let (r, col) = random_crop_origin(w, h, c, &mut rng)?;
                        (
                            s.instances[a].crop(r, col, c, c)?,
                            s.instances[b].crop(r, col, c, c)?,
                            s.maps.crop(r, col, c, c)?,
                        )
                    }
                    None => (
                        s.instances[a].clone(),
                        s.instances[b].clone(),
                        s.maps.clone(),
                    ),
                };
                if cfg.flip && rng.gen_bool(0.5) {
                    x = x.flip_horizontal();
                    t = t.flip_horizontal();
                    m = m.flip_horizontal();
                }
                let (y, cache) = params.forward_train(Tensor::from_image(&x))?;
                let out = ImageGrid::from_values(x.spec(), y.data)?;
                let (l, g) = loss_and_gradient(&out, &t, &m, &cfg.loss)?;
                if !l.is_finite() {
                    return diverged(
                        &params,
                        epoch - 1,
                        out_dir,
                        format!("non-finite loss in epoch {epoch}"),
                    );
                }
                loss_sum += l;
                let (grads, _) = params.backward(&cache, &Tensor::from_image(&g), false)?;
                add_gradients(&mut acc, &grads);
            }
            scale_gradients(&mut acc, 1.0 / chunk.len() as f64);
            let before = params.clone();
            if let Err(e) = params.adam_step(&acc, cfg.lr, cfg.adam) {
                return match e {
                    Error::Divergence(msg) => {
                        diverged(&before, epoch - 1, out_dir, format!("epoch {epoch}: {msg}"))
                    }
                    e => Err(e),
                };
            }
        }

        let val_mse = if cfg.val_every > 0 && epoch % cfg.val_every == 0 {
            Some(validation_mse(&params, manifest, Split::Val)?)
        } else {
            None
        };
        let row = EpochLog {
            epoch,
            train_loss: loss_sum / data.len() as f64,
            val_mse,
        };
        csv.push_str(&row.csv_row());
        write_file(&log_path, csv.as_bytes())?;
        progress(&row);
        log.push(row);

        if cfg.checkpoint_every > 0 && epoch % cfg.checkpoint_every == 0 {
            Checkpoint {
                params: params.clone(),
                epoch,
            }
            .save(&epoch_checkpoint_path(out_dir, epoch))?;
        }
    }

    Checkpoint {
        params,
        epoch: cfg.epochs,
    }
    .save(&final_path)?;
    Ok(TrainOutcome {
        final_checkpoint: final_path,
        epochs_completed: cfg.epochs,
        log,
    })
}

fn diverged<T>(params: &NetworkParams, epoch: u32, out_dir: &Path, msg: String) -> Result<T> {
    let path = out_dir.join(LAST_GOOD_CHECKPOINT);
    Checkpoint {
        params: params.clone(),
        epoch,
    }
    .save(&path)?;
    let mut m = msg;
    let _ = write!(m, "; last good parameters saved to {}", path.display());
    Err(Error::Divergence(m))
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::dataset::{generate_dataset, DatasetConfig};
    use crate::grid::GridSpec;

    fn toy(dir: &Path, train: usize) -> DatasetManifest {
        let mut cfg = DatasetConfig::with_grid(GridSpec::new(32, 32, 0.15, 0.15), train, 2, 0);
        cfg.eval_instances = 3;
        cfg.phantom.num_inclusions = 2;
        generate_dataset(&cfg, 5, dir).unwrap()
    }

    fn quick() -> TrainConfig {
        TrainConfig {
            network: NetworkSpec {
                depth: 2,
                base_channels: 4,
                kernel_size: 3,
            },
            epochs: 2,
            lr: 1e-3,
            batch: 2,
            crop: 16,
            seed: 3,
            checkpoint_every: 1,
            val_every: 1,
            ..TrainConfig::default()
        }
    }

    #[test]
    fn defaults_and_validation() {
        let d = TrainConfig::default();
        assert_eq!((d.epochs, d.lr, d.loss.lambda), (1000, 3e-5, 500.0));
        d.validate().unwrap();
        assert!(TrainConfig {
            batch: 0,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            crop: 20,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(TrainConfig {
            lr: f64::NAN,
            ..d.clone()
        }
        .validate()
        .is_err());
        assert!(serde_json::from_str::<TrainConfig>(r#"{"epoch": 3}"#).is_err());
        let c: TrainConfig =
            serde_json::from_str(r#"{"epochs": 3, "loss": {"lambda": 0}}"#).unwrap();
        assert_eq!((c.epochs, c.loss.lambda, c.crop), (3, 0.0, 64));
    }

    #[test]
    fn zero_epochs_writes_the_initial_network() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(&dir.path().join("data"), 2);
        let cfg = TrainConfig {
            epochs: 0,
            ..quick()
        };
        let out = dir.path().join("run");
        let res = train(&m, &cfg, &out, None, &mut |_| {}).unwrap();
        let ck = Checkpoint::load(&res.final_checkpoint).unwrap();
        assert_eq!(ck.epoch, 0);
        assert_eq!(
            ck.params,
            NetworkParams::init(cfg.network, cfg.seed).unwrap()
        );
        assert_eq!(
            std::fs::read_to_string(out.join(LOSS_LOG)).unwrap(),
            CSV_HEADER
        );
    }

    #[test]
    fn short_run_logs_every_epoch_and_checkpoints() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(&dir.path().join("data"), 4);
        let out = dir.path().join("run");
        let mut seen = vec![];
        let res = train(&m, &quick(), &out, None, &mut |r| seen.push(r.epoch)).unwrap();
        assert_eq!(seen, vec![1, 2]);
        let csv = std::fs::read_to_string(out.join(LOSS_LOG)).unwrap();
        let rows: Vec<&str> = csv.lines().skip(1).collect();
        assert_eq!(rows.len(), 2);
        for r in rows {
            let f: Vec<f64> = r.split(',').map(|v| v.parse().unwrap()).collect();
            assert!(f[1].is_finite() && f[1] > 0.0 && f[2].is_finite());
        }
        assert!(epoch_checkpoint_path(&out, 1).exists() && epoch_checkpoint_path(&out, 2).exists());
        let ck = Checkpoint::load(&res.final_checkpoint).unwrap();
        assert_eq!((ck.epoch, ck.params.step_count), (2, 4));
        assert_eq!(
            std::fs::read(epoch_checkpoint_path(&out, 2)).unwrap(),
            std::fs::read(&res.final_checkpoint).unwrap()
        );
    }

    #[test]
    fn resuming_matches_an_uninterrupted_run() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(&dir.path().join("data"), 3);
        let cfg = TrainConfig {
            epochs: 3,
            batch: 1,
            ..quick()
        };
        let full = dir.path().join("full");
        train(&m, &cfg, &full, None, &mut |_| {}).unwrap();

        let part = dir.path().join("part");
        train(
            &m,
            &TrainConfig {
                epochs: 1,
                ..cfg.clone()
            },
            &part,
            None,
            &mut |_| {},
        )
        .unwrap();
        let ck = Checkpoint::load(&part.join(FINAL_CHECKPOINT)).unwrap();
        train(&m, &cfg, &part, Some(ck), &mut |_| {}).unwrap();

        let read = |d: &Path, f: &str| std::fs::read(d.join(f)).unwrap();
        assert_eq!(read(&full, FINAL_CHECKPOINT), read(&part, FINAL_CHECKPOINT));
        assert_eq!(read(&full, LOSS_LOG), read(&part, LOSS_LOG));
    }

    #[test]
    fn divergence_keeps_the_last_good_parameters() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(&dir.path().join("data"), 2);
        let out = dir.path().join("run");
        // an absurd rate blows the leaky network up within a few steps
        let cfg = TrainConfig {
            epochs: 50,
            lr: 1e30,
            checkpoint_every: 0,
            val_every: 0,
            ..quick()
        };
        let err = train(&m, &cfg, &out, None, &mut |_| {}).unwrap_err();
        assert!(matches!(err, Error::Divergence(_)), "{err}");
        let ck = Checkpoint::load(&out.join(LAST_GOOD_CHECKPOINT)).unwrap();
        assert!(ck
            .params
            .layers
            .iter()
            .flat_map(|l| l.values())
            .all(|v| v.is_finite()));
        assert!(!out.join(FINAL_CHECKPOINT).exists());
    }

    #[test]
    fn mismatched_resume_is_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let m = toy(&dir.path().join("data"), 2);
        let other = NetworkParams::init(
            NetworkSpec {
                depth: 1,
                base_channels: 2,
                kernel_size: 3,
            },
            0,
        )
        .unwrap();
        let r = train(
            &m,
            &quick(),
            &dir.path().join("run"),
            Some(Checkpoint {
                params: other,
                epoch: 0,
            }),
            &mut |_| {},
        );
        assert!(matches!(r, Err(Error::Config(_))));
    }
}
