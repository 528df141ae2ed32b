use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::ExperimentError;
use crate::nn::{adam_step, evaluate, forward, init_network, loss_and_grad, AdamState, Hyperparams, Mode, NetworkParams, NUM_CLASSES};
use crate::pipeline::WindowSet;

/// Patience-based stopping on validation loss.
///
/// An epoch counts as an improvement only if it beats the last improving
/// loss by at least `min_delta`; the best loss itself is tracked separately
/// so the returned snapshot is always the true minimum.
#[derive(Debug, Clone)]
pub struct EarlyStopping {
    patience: usize,
    min_delta: f64,
    reference: f64,
    wait: usize,
    best_loss: f64,
    best_epoch: Option<usize>,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq)]
pub struct StopDecision {
    /// This epoch has the lowest validation loss so far.
    pub new_best: bool,
    pub stop: bool,
}

impl EarlyStopping {
    pub fn new(patience: usize, min_delta: f64) -> Self {
        EarlyStopping {
            patience,
            min_delta,
            reference: f64::INFINITY,
            wait: 0,
            best_loss: f64::INFINITY,
            best_epoch: None,
        }
    }

    pub fn observe(&mut self, epoch: usize, val_loss: f64) -> StopDecision {
        let new_best = val_loss < self.best_loss;
        if new_best {
            self.best_loss = val_loss;
            self.best_epoch = Some(epoch);
        }
        if val_loss < self.reference - self.min_delta {
            self.reference = val_loss;
            self.wait = 0;
        } else {
            self.wait += 1;
        }
        StopDecision { new_best, stop: self.wait >= self.patience }
    }

    pub fn best_epoch(&self) -> Option<usize> {
        self.best_epoch
    }
}

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub val_acc: f64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FoldResult {
    pub fold_index: usize,
    pub val_subject: u32,
    pub seed: u64,
    /// 1-based epoch with the lowest validation loss.
    pub best_epoch: usize,
    pub best_val_accuracy: f64,
    pub best_val_loss: f64,
    pub epochs_trained: usize,
    pub train_windows: usize,
    pub val_windows: usize,
    pub loss_curve: Vec<EpochStats>,
}

impl FoldResult {
    /// `epoch,train_loss,val_loss,val_acc` lines with a header.
    pub fn training_log(&self) -> String {
        let mut out = String::from("epoch,train_loss,val_loss,val_acc\n");
        for e in &self.loss_curve {
            out.push_str(&format!("{},{},{},{}\n", e.epoch, e.train_loss, e.val_loss, e.val_acc));
        }
        out
    }
}

#[derive(Debug, Clone)]
pub struct TrainedFold {
    pub result: FoldResult,
    /// Parameters from the best validation-loss epoch.
    pub params: NetworkParams,
}

/// Trains one network with mini-batch Adam and early stopping.
///
/// The network is initialised from `hyper.seed`; a second stream of the same
/// seed drives shuffling and dropout.
pub fn train_fold(
    train: &WindowSet,
    val: &WindowSet,
    hyper: &Hyperparams,
    modality: usize,
) -> Result<TrainedFold, ExperimentError> {
    hyper.validate()?;
    if train.is_empty() {
        return Err(ExperimentError::EmptyTraining);
    }
    let mut params = init_network(modality, NUM_CLASSES, hyper.seed)?;
    let mut adam = AdamState::new(&params);
    let mut rng = ChaCha8Rng::seed_from_u64(hyper.seed);
    rng.set_stream(1);

    let mut stopper = EarlyStopping::new(hyper.patience, hyper.min_delta);
    let mut best_params = params.clone();
    let mut curve = Vec::new();
    let mut order: Vec<usize> = (0..train.len()).collect();
    let width = train.window_size();
    let mut batch = Vec::with_capacity(hyper.batch_size * width);
    let mut labels = Vec::with_capacity(hyper.batch_size);

    for epoch in 1..=hyper.max_epochs {
        order.shuffle(&mut rng);
        let mut loss_sum = 0.0;
        for chunk in order.chunks(hyper.batch_size) {
            batch.clear();
            labels.clear();
            for &i in chunk {
                batch.extend_from_slice(train.window(i));
                labels.push(train.labels[i]);
            }
            let (_, cache) = forward(&params, &batch, Mode::Train, hyper.dropout_rate, &mut rng)?;
            let (loss, grads) = loss_and_grad(&params, &cache, &labels)?;
            adam_step(&mut params, &grads, &mut adam, hyper)?;
            loss_sum += loss * chunk.len() as f64;
        }
        let train_loss = loss_sum / train.len() as f64;
        let (val_loss, val_acc) = evaluate(&params, val)?;
        if !val_loss.is_finite() {
            return Err(ExperimentError::DivergedLoss { epoch });
        }
        curve.push(EpochStats { epoch, train_loss, val_loss, val_acc });
        let decision = stopper.observe(epoch, val_loss);
        if decision.new_best {
            best_params.clone_from(&params);
        }
        if decision.stop {
            break;
        }
    }

    let best_epoch = stopper.best_epoch().expect("at least one epoch ran");
    let best = curve[best_epoch - 1];
    Ok(TrainedFold {
        result: FoldResult {
            fold_index: 0,
            val_subject: val.provenance.first().map_or(0, |p| p.subject_id),
            seed: hyper.seed,
            best_epoch,
            best_val_accuracy: best.val_acc,
            best_val_loss: best.val_loss,
            epochs_trained: curve.len(),
            train_windows: train.len(),
            val_windows: val.len(),
            loss_curve: curve,
        },
        params: best_params,
    })
}
