//! Mini-batch training with validation-AUROC early stopping.

use std::time::Instant;

use serde::{Deserialize, Serialize};

use crate::data::{Batch, Dataset, FeatureSchema, FoldSplit};
use crate::error::{Error, Result};
use crate::layers::Ctx;
use crate::metrics::auroc;
use crate::models::{ModelConfig, TabularModel};
use crate::optim::{Adam, LrSchedule};
use crate::rng::{derive_seed, SeededRng};
use crate::tensor::{zero_grads, Graph, Module};

pub const PATIENCE: usize = 15;
pub const MAX_EPOCHS: usize = 200;

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainSettings {
    pub batch_size: usize,
    pub ghost_size: usize,
    pub lr: f64,
    pub lr_step: usize,
    pub patience: usize,
    pub max_epochs: usize,
    pub seed: u64,
    /// Rows per forward pass during evaluation.
    pub eval_chunk: usize,
}

impl TrainSettings {
    pub fn new(batch_size: usize, ghost_size: usize, lr: f64, lr_step: usize, seed: u64) -> Self {
        TrainSettings {
            batch_size,
            ghost_size,
            lr,
            lr_step,
            patience: PATIENCE,
            max_epochs: MAX_EPOCHS,
            seed,
            eval_chunk: 4096,
        }
    }

    pub fn validate(&self) -> Result<()> {
        if self.ghost_size < 2 || self.ghost_size > self.batch_size {
            return Err(Error::Config(format!(
                "ghost size {} must be in [2, batch size {}]",
                self.ghost_size, self.batch_size
            )));
        }
        if self.patience == 0 || self.max_epochs == 0 || self.lr_step == 0 {
            return Err(Error::Config("patience, max_epochs and lr_step must be positive".into()));
        }
        if !(self.lr > 0.0 && self.lr.is_finite()) {
            return Err(Error::Config(format!("learning rate {} is not positive", self.lr)));
        }
        Ok(())
    }
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_auroc: f64,
    pub lr: f64,
    pub wall_ms: u64,
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
#[serde(tag = "status", rename_all = "lowercase")]
pub enum RunStatus {
    Ok,
    Failed { epoch: usize, reason: String },
}

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct TrainOutcome {
    pub logs: Vec<EpochLog>,
    pub best_epoch: Option<usize>,
    pub best_val_auroc: Option<f64>,
    pub holdout_auroc: Option<f64>,
    pub status: RunStatus,
}

/// One fold's rows encoded with a schema fitted on its train rows.
#[derive(Clone, Debug)]
pub struct PreparedFold {
    pub schema: FeatureSchema,
    pub train: Batch,
    pub validation: Batch,
    pub holdout: Batch,
}

pub fn prepare_fold(data: &Dataset, fold: &FoldSplit) -> Result<PreparedFold> {
    let schema = FeatureSchema::fit(data, &fold.train)?;
    let all = schema.encode(data)?;
    Ok(PreparedFold {
        train: all.gather(&fold.train),
        validation: all.gather(&fold.validation),
        holdout: all.gather(&fold.holdout),
        schema,
    })
}

/// Splits shuffled rows into batches; a trailing batch of one row joins the
/// previous batch so every training batch has a defined variance.
pub fn batch_ranges(n: usize, batch_size: usize) -> Vec<(usize, usize)> {
    let mut out: Vec<(usize, usize)> = (0..n).step_by(batch_size).map(|s| (s, (s + batch_size).min(n))).collect();
    if out.len() > 1 && out.last().map_or(false, |&(s, e)| e - s == 1) {
        let (_, e) = out.pop().unwrap();
        out.last_mut().unwrap().1 = e;
    }
    out
}

fn evaluate(model: &mut TabularModel, data: &Batch, chunk: usize) -> Result<f64> {
    let scores = model.predict_proba(data, chunk)?;
    if scores.iter().any(|s| !s.is_finite()) {
        return Err(Error::Metric("non-finite scores".into()));
    }
    auroc(&scores, &data.labels)
}

fn snapshot(model: &TabularModel) -> Vec<Vec<f64>> {
    model.params().iter().map(|p| p.value.clone()).collect()
}

fn restore(model: &mut TabularModel, values: &[Vec<f64>]) {
    for (p, v) in model.params_mut().into_iter().zip(values) {
        p.value.clone_from(v);
    }
}

/// Trains until validation AUROC has not improved for `patience` epochs or
/// `max_epochs` is reached, restores the best epoch's parameters and scores
/// the holdout rows once. Divergence ends the run with a failed status.
pub fn train_model(model: &mut TabularModel, fold: &PreparedFold, settings: &TrainSettings) -> Result<TrainOutcome> {
    settings.validate()?;
    if fold.train.rows < 2 {
        return Err(Error::Data("need at least 2 training rows".into()));
    }
    model.set_ghost_size(settings.ghost_size);
    let adam = Adam::default();
    let schedule = LrSchedule::new(settings.lr, settings.lr_step);
    let mut shuffler = SeededRng::new(derive_seed(settings.seed, 1));
    let mut ctx = Ctx::train(derive_seed(settings.seed, 2));
    let mut order: Vec<usize> = (0..fold.train.rows).collect();
    let mut logs = Vec::new();
    let mut best: Option<(usize, f64, Vec<Vec<f64>>)> = None;
    let mut status = RunStatus::Ok;

    for epoch in 0..settings.max_epochs {
        let start = Instant::now();
        let lr = schedule.lr_at(epoch);
        shuffler.shuffle(&mut order);
        let mut loss_sum = 0.0;
        let mut diverged = false;
        for (s, e) in batch_ranges(order.len(), settings.batch_size) {
            let batch = fold.train.gather(&order[s..e]);
            let g = Graph::new();
            let logits = model.forward(&g, &batch, &mut ctx)?;
            let loss = logits.cross_entropy(&batch.labels)?;
            let value = loss.item();
            if !value.is_finite() {
                diverged = true;
                break;
            }
            loss_sum += value * batch.rows as f64;
            g.backward(loss)?;
            zero_grads(model.params_mut());
            g.collect_grads(model.params_mut());
            adam.step(model.params_mut(), lr)?;
        }
        if diverged {
            status = RunStatus::Failed {
                epoch,
                reason: "non-finite training loss".into(),
            };
            break;
        }
        let val = match evaluate(model, &fold.validation, settings.eval_chunk) {
            Ok(v) => v,
            Err(Error::Metric(reason)) => {
                status = RunStatus::Failed { epoch, reason };
                break;
            }
            Err(e) => return Err(e),
        };
        logs.push(EpochLog {
            epoch,
            train_loss: loss_sum / fold.train.rows as f64,
            val_auroc: val,
            lr,
            wall_ms: start.elapsed().as_millis() as u64,
        });
        log::debug!("epoch {epoch}: loss {:.5} val auroc {val:.5}", loss_sum / fold.train.rows as f64);
        if best.as_ref().map_or(true, |b| val > b.1) {
            best = Some((epoch, val, snapshot(model)));
        }
        if epoch - best.as_ref().unwrap().0 >= settings.patience {
            break;
        }
    }

    if status != RunStatus::Ok {
        return Ok(TrainOutcome {
            logs,
            best_epoch: best.as_ref().map(|b| b.0),
            best_val_auroc: best.as_ref().map(|b| b.1),
            holdout_auroc: None,
            status,
        });
    }
    let (best_epoch, best_val, values) = best.expect("at least one epoch ran");
    restore(model, &values);
    let holdout = evaluate(model, &fold.holdout, settings.eval_chunk)?;
    Ok(TrainOutcome {
        logs,
        best_epoch: Some(best_epoch),
        best_val_auroc: Some(best_val),
        holdout_auroc: Some(holdout),
        status,
    })
}

/// Builds a model for `config` seeded from `settings.seed` and trains it.
pub fn fit(config: &ModelConfig, fold: &PreparedFold, settings: &TrainSettings) -> Result<(TabularModel, TrainOutcome)> {
    let mut model = TabularModel::new(config, &fold.schema.layout(), derive_seed(settings.seed, 0))?;
    let outcome = train_model(&mut model, fold, settings)?;
    Ok((model, outcome))
}

/// Validation AUROC of the model as it stands.
pub fn validation_auroc(model: &mut TabularModel, fold: &PreparedFold, chunk: usize) -> Result<f64> {
    evaluate(model, &fold.validation, chunk)
}

/// Epoch log as CSV text: `epoch,loss,val_auroc,lr`.
pub fn epoch_log_csv(logs: &[EpochLog]) -> String {
    let mut out = String::from("epoch,loss,val_auroc,lr\n");
    for l in logs {
        out.push_str(&format!("{},{},{},{}\n", l.epoch, l.train_loss, l.val_auroc, l.lr));
    }
    out
}
