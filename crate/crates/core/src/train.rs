//! Minibatch Adam training with bit-deterministic gradient reduction.
//!
//! Each batch is cut into fixed chunks of [`CHUNK`] samples. Chunks may run
//! on different workers, but their gradients are summed in chunk order, so
//! the result does not depend on the number of workers.

use rand::seq::SliceRandom;
use serde::{Deserialize, Serialize};

use crate::dataset::Record;
use crate::error::{Error, Result};
use crate::losses::{mse_sample, total_sample, LossConfig};
use crate::model::{Model, ModelKind, TrainingMeta};
use crate::nn::{adam_step, AdamConfig, AdamState, Mixing};
use crate::parallel::Exec;
use crate::seed;
use crate::servo_space::SERVO_DIM;

pub const CHUNK: usize = 16;

/// Inputs and targets laid out flat.
#[derive(Debug, Clone, PartialEq)]
pub struct Samples {
    input_dim: usize,
    inputs: Vec<f64>,
    targets: Vec<f64>,
}

impl Samples {
    pub fn new(input_dim: usize, inputs: Vec<f64>, targets: Vec<f64>) -> Result<Self> {
        if input_dim == 0 || inputs.len() % input_dim != 0 || targets.len() % SERVO_DIM != 0 {
            return Err(Error::Dimension("sample buffers are not whole rows".into()));
        }
        if inputs.len() / input_dim != targets.len() / SERVO_DIM {
            return Err(Error::Dimension("input and target counts differ".into()));
        }
        Ok(Samples {
            input_dim,
            inputs,
            targets,
        })
    }

    /// Model inputs for `kind` (features, or landmarks for the landmark
    /// baseline) paired with the recorded servo frames.
    pub fn from_records(records: &[Record], kind: ModelKind) -> Result<Self> {
        let mut inputs = Vec::with_capacity(records.len() * kind.input_dim());
        let mut targets = Vec::with_capacity(records.len() * SERVO_DIM);
        for r in records {
            if kind.uses_landmarks() {
                let lm = r.landmarks.as_ref().ok_or_else(|| {
                    Error::Format(format!("record {} has no landmarks, required by {kind}", r.index))
                })?;
                inputs.extend_from_slice(lm);
            } else {
                inputs.extend_from_slice(r.features.as_slice());
            }
            targets.extend_from_slice(r.servo.as_slice());
        }
        Samples::new(kind.input_dim(), inputs, targets)
    }

    pub fn len(&self) -> usize {
        self.targets.len() / SERVO_DIM
    }

    pub fn is_empty(&self) -> bool {
        self.targets.is_empty()
    }

    pub fn input_dim(&self) -> usize {
        self.input_dim
    }

    pub fn input(&self, i: usize) -> &[f64] {
        &self.inputs[i * self.input_dim..(i + 1) * self.input_dim]
    }

    pub fn target(&self, i: usize) -> &[f64] {
        &self.targets[i * SERVO_DIM..(i + 1) * SERVO_DIM]
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub epochs: usize,
    pub batch_size: usize,
    pub adam: AdamConfig,
    pub lambda: f64,
    /// Stop after this many epochs without a better test loss.
    pub patience: usize,
    pub shuffle_seed: u64,
    pub attention: bool,
    /// Final learning rate as a fraction of the initial one, reached by
    /// cosine decay over `epochs`. 1 keeps the rate constant.
    pub lr_final_fraction: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            epochs: 300,
            batch_size: 256,
            adam: AdamConfig::default(),
            lambda: crate::losses::DEFAULT_LAMBDA,
            patience: 30,
            shuffle_seed: 0,
            attention: true,
            lr_final_fraction: 1.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        if self.epochs == 0 || self.batch_size == 0 {
            return Err(Error::Argument("epochs and batch size must be positive".into()));
        }
        self.adam.validate()?;
        if !(self.lr_final_fraction > 0.0 && self.lr_final_fraction <= 1.0) {
            return Err(Error::Argument(format!(
                "lr_final_fraction must be in (0, 1], got {}",
                self.lr_final_fraction
            )));
        }
        LossConfig::with_lambda(self.lambda)?;
        Ok(())
    }

    /// Learning rate used during `epoch` (1-based).
    pub fn lr_at(&self, epoch: usize) -> f64 {
        if self.epochs <= 1 {
            return self.adam.lr;
        }
        let progress = (epoch - 1) as f64 / (self.epochs - 1) as f64;
        let f = self.lr_final_fraction;
        self.adam.lr * (f + (1.0 - f) * 0.5 * (1.0 + (std::f64::consts::PI * progress).cos()))
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochLog {
    pub epoch: usize,
    pub train_loss: f64,
    pub test_loss: f64,
    pub test_mae: f64,
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Parameters from the epoch with the lowest test loss.
    pub model: Model,
    pub metadata: TrainingMeta,
    pub history: Vec<EpochLog>,
}

#[derive(Debug, Clone, PartialEq)]
pub struct EvalResult {
    pub loss: f64,
    pub mse: f64,
    /// Mean over samples and servos of |prediction − target|.
    pub mae: f64,
    pub per_sample_mae: Vec<f64>,
    pub per_sample_rmse: Vec<f64>,
    pub predictions: Vec<f64>,
}

/// Loss, MSE and absolute errors of `model` on `samples`.
pub fn evaluate(model: &Model, samples: &Samples, loss: &LossConfig, exec: Exec) -> Result<EvalResult> {
    if samples.is_empty() {
        return Err(Error::Argument("cannot evaluate on zero samples".into()));
    }
    if samples.input_dim() != model.input_dim() {
        return Err(Error::Format(format!(
            "model expects {} inputs, data has {}",
            model.input_dim(),
            samples.input_dim()
        )));
    }
    let n = samples.len();
    let chunks = n.div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| -> Result<Vec<(f64, f64, f64, f64, [f64; SERVO_DIM])>> {
        let mut ws = model.workspace();
        let mut scratch = [0.0; SERVO_DIM];
        (c * CHUNK..((c + 1) * CHUNK).min(n))
            .map(|i| {
                let out = model.forward_ws(samples.input(i), &mut ws)?;
                let t = samples.target(i);
                let l = total_sample(out, t, loss, 0.0, &mut scratch);
                let m = mse_sample(out, t, 0.0, &mut scratch);
                let mae = out.iter().zip(t).map(|(a, b)| (a - b).abs()).sum::<f64>() / SERVO_DIM as f64;
                let mut pred = [0.0; SERVO_DIM];
                pred.copy_from_slice(out);
                Ok((l, m, mae, m.sqrt(), pred))
            })
            .collect()
    });
    let mut r = EvalResult {
        loss: 0.0,
        mse: 0.0,
        mae: 0.0,
        per_sample_mae: Vec::with_capacity(n),
        per_sample_rmse: Vec::with_capacity(n),
        predictions: Vec::with_capacity(n * SERVO_DIM),
    };
    for part in parts {
        for (l, m, mae, rmse, pred) in part? {
            r.loss += l;
            r.mse += m;
            r.mae += mae;
            r.per_sample_mae.push(mae);
            r.per_sample_rmse.push(rmse);
            r.predictions.extend_from_slice(&pred);
        }
    }
    r.loss /= n as f64;
    r.mse /= n as f64;
    r.mae /= n as f64;
    Ok(r)
}

/// Mean total loss over `idx` and its parameter gradient.
fn batch_gradient(
    model: &Model,
    samples: &Samples,
    idx: &[usize],
    loss: &LossConfig,
    exec: Exec,
) -> Result<(f64, Vec<f64>)> {
    let scale = 1.0 / idx.len() as f64;
    let chunks = idx.len().div_ceil(CHUNK);
    let parts = exec.map(chunks, |c| -> Result<(f64, Vec<f64>)> {
        let mut ws = model.workspace();
        let mut grad = vec![0.0; model.param_count()];
        let mut gout = [0.0; SERVO_DIM];
        let mut sum = 0.0;
        for &i in &idx[c * CHUNK..((c + 1) * CHUNK).min(idx.len())] {
            let out = model.forward_ws(samples.input(i), &mut ws)?;
            gout.fill(0.0);
            sum += total_sample(out, samples.target(i), loss, scale, &mut gout);
            model.backward(&mut ws, &gout, &mut grad)?;
        }
        Ok((sum, grad))
    });
    let mut total = 0.0;
    let mut grad = vec![0.0; model.param_count()];
    for part in parts {
        let (s, g) = part?;
        total += s;
        for (a, b) in grad.iter_mut().zip(&g) {
            *a += b;
        }
    }
    Ok((total * scale, grad))
}

/// Trains `model` in place of a copy and returns the best-test-loss
/// parameters. `on_epoch` sees every epoch's log line as it is produced.
pub fn train(
    model: Model,
    train_set: &Samples,
    test_set: &Samples,
    cfg: &TrainConfig,
    exec: Exec,
    mut on_epoch: impl FnMut(&EpochLog),
) -> Result<TrainOutcome> {
    cfg.validate()?;
    if train_set.is_empty() || test_set.is_empty() {
        return Err(Error::Argument("training and test sets must be non-empty".into()));
    }
    if train_set.input_dim() != model.input_dim() || test_set.input_dim() != model.input_dim() {
        return Err(Error::Format(format!("data does not match {} inputs", model.input_dim())));
    }
    let loss = LossConfig::with_lambda(cfg.lambda)?;
    let mut model = model;
    model.set_mixing(if cfg.attention { Mixing::Attention } else { Mixing::Identity });
    let mut adam = AdamState::new(model.param_count(), cfg.adam);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut history = Vec::new();
    let mut best: Option<(Model, EpochLog)> = None;
    let mut stale = 0;

    for epoch in 1..=cfg.epochs {
        let mut rng = seed::item_rng(cfg.shuffle_seed, seed::stream::SHUFFLE, epoch as u64);
        order.shuffle(&mut rng);
        adam.config.lr = cfg.lr_at(epoch);
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            let (l, g) = batch_gradient(&model, train_set, batch, &loss, exec)?;
            train_loss += l * batch.len() as f64;
            model.update_params(|p| adam_step(p, &g, &mut adam))?;
        }
        let eval = evaluate(&model, test_set, &loss, exec)?;
        let log = EpochLog {
            epoch,
            train_loss: train_loss / train_set.len() as f64,
            test_loss: eval.loss,
            test_mae: eval.mae,
        };
        on_epoch(&log);
        history.push(log);
        if best.as_ref().is_none_or(|(_, b)| log.test_loss < b.test_loss) {
            best = Some((model.clone(), log));
            stale = 0;
        } else {
            stale += 1;
            if stale >= cfg.patience {
                break;
            }
        }
    }
    let (model, log) = best.expect("at least one epoch");
    let metadata = TrainingMeta {
        epochs: history.len(),
        best_epoch: log.epoch,
        train_loss: log.train_loss,
        test_loss: log.test_loss,
        test_mae: log.test_mae,
        base_seed: model.config().seed,
        lr: cfg.adam.lr,
        lambda: cfg.lambda,
        batch_size: cfg.batch_size,
        attention: cfg.attention,
    };
    Ok(TrainOutcome {
        model,
        metadata,
        history,
    })
}

/// Loss history as CSV: `epoch,train_loss,test_loss,test_mae`.
pub fn history_csv(history: &[EpochLog]) -> String {
    let mut s = String::from("epoch,train_loss,test_loss,test_mae\n");
    for h in history {
        s.push_str(&format!("{},{:?},{:?},{:?}\n", h.epoch, h.train_loss, h.test_loss, h.test_mae));
    }
    s
}
