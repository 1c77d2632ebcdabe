use std::io::Write;
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use serde::{Deserialize, Serialize};

use super::adam::Adam;
use super::bptt::{effective_gradients, latent_gradients};
use super::loss::{loss_and_logit_grad, LabeledSequence, LossKind};
use super::{TrainConfig, TrainError};
use crate::models::{Matrix, ModelParams, Network, QuantMeta};

#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct EpochRecord {
    pub epoch: usize,
    pub train_loss: f64,
    pub val_loss: f64,
    pub learning_rate: f64,
}

#[derive(Clone, Debug, Default, PartialEq, Serialize, Deserialize)]
pub struct History {
    pub epochs: Vec<EpochRecord>,
    /// Epoch whose parameters were returned (0 = initial parameters).
    pub best_epoch: usize,
    pub best_val_loss: f64,
    pub stopped_early: bool,
}

impl History {
    /// Per-epoch log as CSV: `epoch,train_loss,val_loss,lr`.
    pub fn write_csv(&self, path: &Path) -> Result<(), TrainError> {
        let mut out = std::io::BufWriter::new(std::fs::File::create(path)?);
        writeln!(out, "epoch,train_loss,val_loss,lr")?;
        for r in &self.epochs {
            writeln!(out, "{},{:.9},{:.9},{}", r.epoch, r.train_loss, r.val_loss, r.learning_rate)?;
        }
        out.flush()?;
        Ok(())
    }
}

/// Mean per-example loss of a dataset under the parameters' forward pass.
/// Examples without any scored labelled frame are skipped.
pub fn dataset_loss(params: &ModelParams, set: &[LabeledSequence], loss: LossKind) -> Result<f64, TrainError> {
    let net = Network::new(params)?;
    let mut total = 0.0;
    let mut count = 0usize;
    for ex in set {
        let track = net.run_sequence(&ex.frames)?;
        let (noise, speech) = ex.scored_sets(track.first_frame);
        if noise.is_empty() && speech.is_empty() {
            continue;
        }
        total += loss_and_logit_grad(loss, &track.logits, &noise, &speech)?.0;
        count += 1;
    }
    if count == 0 {
        return Err(TrainError::EmptyFrameSets);
    }
    Ok(total / count as f64)
}

fn zero_grads(params: &ModelParams) -> Vec<Matrix> {
    params.matrices.iter().map(|m| Matrix::zeros(m.latent.rows, m.latent.cols)).collect()
}

/// Trains `params0` with Adam and early stopping on the validation
/// max-pooling loss. The returned parameters are those of the best
/// validation epoch.
pub fn train(
    params0: &ModelParams,
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<(ModelParams, History), TrainError> {
    cfg.validate()?;
    if train_set.is_empty() {
        return Err(TrainError::EmptyDataset("training"));
    }
    if val_set.is_empty() {
        return Err(TrainError::EmptyDataset("validation"));
    }
    for ex in train_set.iter().chain(val_set) {
        ex.validate()?;
    }
    let mut params = params0.clone();
    params.quant.level = cfg.quant_level;
    if cfg.quant_level == 1 {
        params.quant.bits = cfg.quant_bits;
    }
    params.validate()?;

    let mut rng = ChaCha8Rng::seed_from_u64(cfg.seed);
    let mut adam = Adam::new(&params, cfg);
    let mut order: Vec<usize> = (0..train_set.len()).collect();
    let mut best = params.clone();
    let mut history =
        History { best_val_loss: dataset_loss(&params, val_set, LossKind::MaxPool)?, ..History::default() };
    let mut since_best = 0usize;

    for epoch in 1..=cfg.max_epochs {
        order.shuffle(&mut rng);
        let mut train_loss = 0.0;
        for batch in order.chunks(cfg.batch_size) {
            // θ and the quantized weights follow the current parameters.
            let net = Network::new(&params)?;
            let mut acc = zero_grads(&params);
            for &i in batch {
                let (l, g) = effective_gradients(&net, &train_set[i], cfg.loss)?;
                train_loss += l;
                for (a, gm) in acc.iter_mut().zip(&g) {
                    a.data.iter_mut().zip(&gm.data).for_each(|(x, y)| *x += y);
                }
            }
            let scale = 1.0 / batch.len() as f64;
            for a in &mut acc {
                a.data.iter_mut().for_each(|x| *x *= scale);
            }
            let latent = latent_gradients(&params, &net.weights, &acc)?;
            adam.step(&mut params, &latent);
        }
        train_loss /= train_set.len() as f64;
        let val_loss = dataset_loss(&params, val_set, LossKind::MaxPool)?;
        if !val_loss.is_finite() {
            return Err(TrainError::Diverged { epoch, loss: val_loss });
        }
        history.epochs.push(EpochRecord { epoch, train_loss, val_loss, learning_rate: cfg.learning_rate });
        log::debug!("epoch {epoch}: train {train_loss:.5} val {val_loss:.5}");
        if val_loss < history.best_val_loss {
            history.best_val_loss = val_loss;
            history.best_epoch = epoch;
            best = params.clone();
            since_best = 0;
        } else {
            since_best += 1;
            if since_best >= cfg.patience {
                history.stopped_early = true;
                break;
            }
        }
    }
    Ok((best, history))
}

/// Moves level-1 parameters to level 2: the weights are kept bit-identical
/// and only the activations switch to their quantized forms.
pub fn freeze_level2(params: &ModelParams) -> Result<ModelParams, TrainError> {
    if params.quant.level != 1 {
        return Err(TrainError::SkippedLevel { from: params.quant.level, to: 2 });
    }
    if !params.kind.is_recurrent() {
        log::warn!("level 2 of a dense {} model has no integer engine", params.kind);
    }
    let mut out = params.clone();
    out.quant = QuantMeta { level: 2, ..params.quant };
    Ok(out)
}

/// Runs one step of the incremental quantization schedule.
///
/// Level 0 trains from `pretrained` (a level-0 initialisation), level 1
/// fine-tunes a level-0 model with quantized weights and level 2 freezes a
/// level-1 model. No history is produced for level 2.
pub fn quantization_schedule(
    level: u8,
    pretrained: &ModelParams,
    train_set: &[LabeledSequence],
    val_set: &[LabeledSequence],
    cfg: &TrainConfig,
) -> Result<(ModelParams, Option<History>), TrainError> {
    let from = pretrained.quant.level;
    match level {
        0 | 1 => {
            if from != level.saturating_sub(1) {
                return Err(TrainError::SkippedLevel { from, to: level });
            }
            let cfg = TrainConfig { quant_level: level, ..cfg.clone() };
            let (p, h) = train(pretrained, train_set, val_set, &cfg)?;
            Ok((p, Some(h)))
        }
        2 => Ok((freeze_level2(pretrained)?, None)),
        _ => Err(TrainError::Config(format!("quantization level {level} does not exist"))),
    }
}
