//! Mini-batch training for every objective: plain cross entropy, the
//! moving-average target scheme with confidence weights, its symmetric
//! cross-entropy variant, abstention training and TRADES.

use std::fmt;
use std::str::FromStr;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::adversarial::{robust_accuracy, trades_adversarial, AttackSpec, TradesConfig, TradesObjective};
use crate::data::LabeledDataset;
use crate::error::{Error, Result};
use crate::grad::Objective;
use crate::loss::{sat_loss_grad, sce_sat_loss_grad, selective_loss_grad, SceWeights};
use crate::metrics::EpochRecord;
use crate::mlp::{Gradients, Mlp};
use crate::ops::{argmax, softmax};
use crate::optim::{cosine_lr, Sgd, SgdConfig};
use crate::sat::{SatConfig, TargetStore};
use crate::tensor::Tensor;

/// Slack on the simplex check run after every target update.
pub const SIMPLEX_TOL: f64 = 1e-9;
/// Slack on the `[1/c, 1]` weight bounds.
pub const WEIGHT_TOL: f64 = 1e-12;

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, serde::Serialize, serde::Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrainMode {
    Erm,
    Sat,
    SatSce,
    Selective,
    /// TRADES with a plain cross-entropy natural term.
    Trades,
    TradesSat,
}

impl TrainMode {
    pub const ALL: [TrainMode; 6] = [
        TrainMode::Erm,
        TrainMode::Sat,
        TrainMode::SatSce,
        TrainMode::Selective,
        TrainMode::Trades,
        TrainMode::TradesSat,
    ];

    pub fn name(self) -> &'static str {
        match self {
            TrainMode::Erm => "erm",
            TrainMode::Sat => "sat",
            TrainMode::SatSce => "sat_sce",
            TrainMode::Selective => "selective",
            TrainMode::Trades => "trades",
            TrainMode::TradesSat => "trades_sat",
        }
    }

    /// Whether the mode ever moves its targets.
    pub fn adapts_targets(self) -> bool {
        matches!(
            self,
            TrainMode::Sat | TrainMode::SatSce | TrainMode::Selective | TrainMode::TradesSat
        )
    }

    pub fn is_adversarial(self) -> bool {
        matches!(self, TrainMode::Trades | TrainMode::TradesSat)
    }

    /// Warm-up and momentum a mode uses when none are configured.
    pub fn default_sat(self) -> SatConfig {
        match self {
            TrainMode::Selective => SatConfig::selective_default(),
            TrainMode::TradesSat | TrainMode::Trades => SatConfig::adversarial_default(),
            _ => SatConfig::default(),
        }
    }
}

impl fmt::Display for TrainMode {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for TrainMode {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        TrainMode::ALL
            .into_iter()
            .find(|m| m.name() == s)
            .ok_or_else(|| Error::invalid(format!("unknown training mode `{s}`")))
    }
}

/// Periodic robust-accuracy evaluation on the validation set.
#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct RobustEval {
    pub attack: AttackSpec,
    /// Evaluate every `every` epochs and at the final epoch.
    pub every: usize,
}

#[derive(Debug, Clone, Copy, PartialEq, serde::Serialize, serde::Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub optim: SgdConfig,
    pub sat: SatConfig,
    pub sce: SceWeights,
    pub trades: TradesConfig,
    pub robust_eval: Option<RobustEval>,
    pub seed: u64,
    /// Assert the simplex and weight bounds after every target update.
    pub check_invariants: bool,
}

impl TrainConfig {
    /// Defaults for a mode, including its target schedule.
    pub fn for_mode(mode: TrainMode) -> Self {
        TrainConfig {
            epochs: 200,
            batch_size: 256,
            optim: SgdConfig::default(),
            sat: mode.default_sat(),
            sce: SceWeights::default(),
            trades: TradesConfig::default(),
            robust_eval: None,
            seed: 0,
            check_invariants: false,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 {
            return Err(Error::config("train.epochs", "must be at least 1"));
        }
        if self.batch_size == 0 {
            return Err(Error::config("train.batch_size", "must be at least 1"));
        }
        self.optim.validate()?;
        self.sat.validate()?;
        self.trades.validate()?;
        if let Some(r) = &self.robust_eval {
            r.attack.validate()?;
            if r.every == 0 {
                return Err(Error::config("adversarial.eval_every", "must be at least 1"));
            }
        }
        Ok(())
    }
}

pub struct TrainOutcome {
    pub model: Mlp,
    pub targets: TargetStore,
    pub log: Vec<EpochRecord>,
}

/// State visible to an observer at the end of each epoch.
pub struct EpochView<'a> {
    pub epoch: usize,
    pub model: &'a Mlp,
    pub targets: &'a TargetStore,
    pub record: &'a EpochRecord,
}

pub fn train(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    model: Mlp,
    cfg: &TrainConfig,
    mode: TrainMode,
) -> Result<TrainOutcome> {
    train_with_observer(train_ds, val_ds, model, cfg, mode, &mut |_| Ok(()))
}

/// Accuracy against `labels` using the first `classes` outputs.
pub fn head_accuracy(model: &Mlp, x: &Tensor, labels: &[usize], classes: usize) -> Result<f64> {
    if labels.is_empty() {
        return Err(Error::invalid("accuracy of an empty set"));
    }
    let logits = model.forward(x)?;
    let hits = labels
        .iter()
        .enumerate()
        .filter(|&(i, &y)| argmax(&logits.row(i)[..classes]) == y)
        .count();
    Ok(hits as f64 / labels.len() as f64)
}

fn attack_key(seed: u64, epoch: usize) -> u64 {
    seed.wrapping_mul(0x9E37_79B9_7F4A_7C15) ^ epoch as u64
}

fn check_rows(store: &TargetStore, rows: &[usize]) -> Result<()> {
    let floor = 1.0 / store.class_count() as f64;
    for &i in rows {
        let t = store.row(i);
        let sum: f64 = t.iter().sum();
        if (sum - 1.0).abs() > SIMPLEX_TOL || t.iter().any(|&v| v < 0.0) {
            return Err(Error::Invariant(format!("target {i} left the simplex (sum {sum})")));
        }
        let w = store.weight(i);
        if w < floor - WEIGHT_TOL || w > 1.0 + WEIGHT_TOL {
            return Err(Error::Invariant(format!("weight {w} of sample {i} outside [1/c, 1]")));
        }
    }
    Ok(())
}

pub fn train_with_observer(
    train_ds: &LabeledDataset,
    val_ds: &LabeledDataset,
    mut model: Mlp,
    cfg: &TrainConfig,
    mode: TrainMode,
    observer: &mut dyn FnMut(&EpochView<'_>) -> Result<()>,
) -> Result<TrainOutcome> {
    cfg.validate()?;
    let classes = train_ds.class_count();
    let spec = model.spec().clone();
    if spec.input_dim != train_ds.dim() || spec.input_dim != val_ds.dim() {
        return Err(Error::invalid("model input width does not match the data"));
    }
    if spec.num_classes != classes || val_ds.class_count() != classes {
        return Err(Error::invalid("model class count does not match the data"));
    }
    if spec.abstain != (mode == TrainMode::Selective) {
        return Err(Error::invalid("abstention head is required by, and only by, selective mode"));
    }
    if train_ds.is_empty() || val_ds.is_empty() {
        return Err(Error::invalid("training and validation sets must be nonempty"));
    }

    let mut store = TargetStore::init(train_ds);
    let mut sgd = Sgd::new(cfg.optim, &model)?;
    let mut shuffle_rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    shuffle_rng.set_stream(2);
    let mut order: Vec<usize> = (0..train_ds.len()).collect();
    let mut log = Vec::with_capacity(cfg.epochs);

    for epoch in 1..=cfg.epochs {
        let lr = cosine_lr(epoch - 1, cfg.epochs, cfg.optim.lr0)?;
        order.shuffle(&mut shuffle_rng);
        let update = mode.adapts_targets() && cfg.sat.updates_at(epoch);
        let key = attack_key(cfg.seed, epoch);
        let mut loss_sum = 0.0;

        for (batch, chunk) in order.chunks(cfg.batch_size).enumerate() {
            let diverged = |e: Error| match e {
                Error::NonFinite { message, .. } => Error::Diverged { epoch, batch, message },
                other => other,
            };
            let x = train_ds.inputs().select_rows(chunk);
            let cache = model.forward_cached(&x).map_err(diverged)?;
            if !cache.logits().is_finite() {
                return Err(Error::Diverged { epoch, batch, message: "logits are not finite".into() });
            }
            let probs = softmax(cache.logits()).map_err(diverged)?;

            if update {
                for (r, &i) in chunk.iter().enumerate() {
                    let row = probs.row(r);
                    if mode == TrainMode::Selective {
                        let mut p = row[..classes].to_vec();
                        let s: f64 = p.iter().sum();
                        p.iter_mut().for_each(|v| *v /= s);
                        store.update(i, &p, cfg.sat.momentum, epoch);
                    } else {
                        store.update(i, row, cfg.sat.momentum, epoch);
                    }
                }
                if cfg.check_invariants {
                    check_rows(&store, chunk)?;
                }
            }

            let targets = store.targets().select_rows(chunk);
            let weights: Vec<f64> = chunk.iter().map(|&i| store.weight(i)).collect();
            let (value, grads): (f64, Gradients) = match mode {
                TrainMode::Erm | TrainMode::Sat | TrainMode::SatSce | TrainMode::Selective => {
                    let lg = match mode {
                        TrainMode::SatSce => sce_sat_loss_grad(&probs, &targets, &weights, cfg.sce),
                        TrainMode::Selective => {
                            let labels: Vec<usize> =
                                chunk.iter().map(|&i| train_ds.noisy_indices()[i]).collect();
                            let mass: Vec<f64> =
                                labels.iter().enumerate().map(|(r, &y)| targets.row(r)[y]).collect();
                            selective_loss_grad(&probs, &mass, &labels)
                        }
                        _ => sat_loss_grad(&probs, &targets, &weights),
                    }
                    .map_err(diverged)?;
                    let (g, _) = model.backward(&cache, &lg.grad, false)?;
                    (lg.value, g)
                }
                TrainMode::Trades | TrainMode::TradesSat => {
                    let adversarial = trades_adversarial(&model, &x, &cfg.trades.attack, key, chunk)
                        .map_err(diverged)?;
                    TradesObjective {
                        inputs: &x,
                        adversarial: &adversarial,
                        targets: &targets,
                        weights: &weights,
                        inv_lambda: cfg.trades.inv_lambda,
                    }
                    .value_and_grad(&model)
                    .map_err(diverged)?
                }
            };
            if !value.is_finite() || !grads.is_finite() {
                return Err(Error::Diverged {
                    epoch,
                    batch,
                    message: format!("loss {value} or its gradient is not finite"),
                });
            }
            sgd.step(&mut model, &grads, lr)?;
            loss_sum += value * chunk.len() as f64;
        }

        let robust_acc = match &cfg.robust_eval {
            Some(r) if epoch % r.every == 0 || epoch == cfg.epochs => {
                Some(robust_accuracy(&model, val_ds, &r.attack, attack_key(cfg.seed ^ 1, epoch))?.robust_accuracy)
            }
            _ => None,
        };
        let record = EpochRecord {
            epoch,
            lr,
            loss: loss_sum / train_ds.len() as f64,
            acc_noisy_train: head_accuracy(&model, train_ds.inputs(), train_ds.noisy_indices(), classes)?,
            acc_clean_train: head_accuracy(&model, train_ds.clean_inputs(), train_ds.clean_labels(), classes)?,
            acc_noisy_val: head_accuracy(&model, val_ds.inputs(), val_ds.noisy_indices(), classes)?,
            acc_clean_val: head_accuracy(&model, val_ds.clean_inputs(), val_ds.clean_labels(), classes)?,
            robust_acc,
        };
        observer(&EpochView {
            epoch,
            model: &model,
            targets: &store,
            record: &record,
        })?;
        log.push(record);
    }

    Ok(TrainOutcome {
        model,
        targets: store,
        log,
    })
}
