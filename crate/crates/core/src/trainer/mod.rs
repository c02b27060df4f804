//! Multi-task training: BPR on the composed score plus the two weighted
//! contrastive auxiliaries, optimized with sparse Adam.

mod adam;
mod batch;

pub use adam::{adam_step, AdamState, ADAM_BETA1, ADAM_BETA2, ADAM_EPS};
pub use batch::{
    sample_batch, sample_bpr_negative, BatchOptions, TrainIndex, TrainingBatch,
    MAX_NEGATIVE_ATTEMPTS,
};

use std::time::Instant;

use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;

use crate::dataio::{split, InteractionDataset, PopularityStats};
use crate::error::{Error, Result};
use crate::eval::evaluate;
use crate::losses::{
    bpr_batch_loss, conformity_contrastive_loss, interest_contrastive_loss, total_loss, LossMode,
    LossOutput, SparseGrad,
};
use crate::model::{
    init_embeddings, lightgcn_propagate, propagate_pair, Backbone, Checkpoint,
    DisentangledEmbeddings, NormAdjacency, TableId, DEFAULT_INIT_SCALE,
};

const BATCH_STREAM: u64 = 0x5DEE_CE66_D1CE_B00C;
const VALIDATION_STREAM: u64 = 0x00DD_BA11_u64;

#[derive(Debug, Clone, PartialEq)]
pub struct TrainConfig {
    pub dim: usize,
    pub batch_size: usize,
    pub learning_rate: f64,
    pub alpha: f64,
    pub beta: f64,
    pub epochs: usize,
    pub seed: u64,
    pub backbone: Backbone,
    pub layers: usize,
    pub loss_mode: LossMode,
    pub false_negative_filter: bool,
    pub init_scale: f64,
    /// Epochs without validation improvement before stopping; 0 disables
    /// early stopping (and validation).
    pub patience: usize,
    /// Share of each user's training pairs held out for validation.
    pub val_fraction: f64,
    /// Cutoff for the validation HR.
    pub val_k: usize,
    /// L2 penalty on every row that receives a gradient in a step.
    pub l2: f64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            dim: 64,
            batch_size: 512,
            learning_rate: 0.001,
            alpha: 0.1,
            beta: 0.1,
            epochs: 100,
            seed: 0,
            backbone: Backbone::Mf,
            layers: 2,
            loss_mode: LossMode::Weighted,
            false_negative_filter: true,
            init_scale: DEFAULT_INIT_SCALE,
            patience: 10,
            val_fraction: 0.1,
            val_k: 20,
            l2: 0.0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: String| Err(Error::InvalidArgument(m));
        if self.dim == 0 {
            return bad("dim must be >= 1".into());
        }
        if self.batch_size < 2 {
            return bad(format!("batch_size must be >= 2, got {}", self.batch_size));
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad(format!(
                "learning_rate must be positive, got {}",
                self.learning_rate
            ));
        }
        if !(self.alpha >= 0.0 && self.beta >= 0.0) {
            return bad(format!(
                "alpha and beta must be >= 0, got {} / {}",
                self.alpha, self.beta
            ));
        }
        if !(self.l2 >= 0.0 && self.l2.is_finite()) {
            return bad(format!("l2 must be >= 0, got {}", self.l2));
        }
        if self.init_scale.is_nan() || self.init_scale <= 0.0 {
            return bad(format!(
                "init_scale must be positive, got {}",
                self.init_scale
            ));
        }
        if self.patience > 0 && !(self.val_fraction > 0.0 && self.val_fraction < 1.0) {
            return bad(format!(
                "val_fraction must lie in (0, 1), got {}",
                self.val_fraction
            ));
        }
        Ok(())
    }

    fn layers_for_backbone(&self) -> usize {
        match self.backbone {
            Backbone::Mf => 0,
            Backbone::LightGcn => self.layers,
        }
    }
}

/// One training-log line.
#[derive(Debug, Clone, PartialEq)]
pub struct EpochLog {
    pub epoch: usize,
    pub main_loss: f64,
    pub int_loss: f64,
    pub conf_loss: f64,
    pub total: f64,
    /// NaN when validation is disabled.
    pub val_hr: f64,
    pub wall_seconds: f64,
}

impl EpochLog {
    pub const HEADER: &'static str =
        "epoch\tmain_loss\tint_loss\tconf_loss\ttotal\tval_HR@20\twall_seconds";

    pub fn to_line(&self) -> String {
        format!(
            "{}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.6}\t{:.3}",
            self.epoch,
            self.main_loss,
            self.int_loss,
            self.conf_loss,
            self.total,
            self.val_hr,
            self.wall_seconds
        )
    }
}

#[derive(Debug, Clone)]
pub struct TrainOutcome {
    /// Base (pre-propagation) tables of the selected epoch.
    pub checkpoint: Checkpoint,
    pub log: Vec<EpochLog>,
    /// 1-based epoch the checkpoint comes from.
    pub best_epoch: usize,
    pub steps: usize,
}

/// Embeddings used for scoring: propagated for LightGCN, as-is for MF.
pub fn scoring_embeddings(
    ckpt: &Checkpoint,
    train: &InteractionDataset,
) -> Result<DisentangledEmbeddings> {
    match ckpt.backbone {
        Backbone::Mf => Ok(ckpt.embeddings.clone()),
        Backbone::LightGcn => {
            let adj = NormAdjacency::from_dataset(train, true)?;
            lightgcn_propagate(&ckpt.embeddings, &adj, ckpt.layers)
        }
    }
}

/// Per-step loss parts, kept for logging.
#[derive(Debug, Clone, Default)]
pub struct StepLosses {
    pub main: f64,
    pub int: f64,
    pub conf: f64,
    pub total: f64,
}

/// Forward + backward for one batch. Returns the merged gradient with
/// respect to the base tables.
pub fn batch_gradient(
    emb: &DisentangledEmbeddings,
    adj: Option<(&NormAdjacency, usize)>,
    batch: &TrainingBatch,
    alpha: f64,
    beta: f64,
    mode: LossMode,
) -> Result<(SparseGrad, StepLosses)> {
    let propagated;
    let fwd = match adj {
        Some((a, layers)) => {
            propagated = lightgcn_propagate(emb, a, layers)?;
            &propagated
        }
        None => emb,
    };
    let main = bpr_batch_loss(fwd, &batch.bpr_rows());
    let int = if alpha != 0.0 {
        interest_contrastive_loss(&fwd.user_int, &fwd.item_int, &batch.interest_rows(), mode)?
    } else {
        LossOutput::default()
    };
    let conf = if beta != 0.0 {
        conformity_contrastive_loss(
            &fwd.user_conf,
            &fwd.item_conf,
            &batch.conformity_rows(),
            mode,
        )?
    } else {
        LossOutput::default()
    };
    let total = total_loss(&main, &int, &conf, alpha, beta);
    let losses = StepLosses {
        main: main.value,
        int: int.value,
        conf: conf.value,
        total: total.value,
    };
    let grads = match adj {
        None => total.grads,
        Some((a, layers)) => {
            let mut base = SparseGrad::new();
            let (nu, ni, d) = (emb.num_users(), emb.num_items(), emb.dim());
            for (ut, it) in [
                (TableId::UserInt, TableId::ItemInt),
                (TableId::UserConf, TableId::ItemConf),
            ] {
                let gu = total.grads.to_dense(ut, nu, d);
                let gi = total.grads.to_dense(it, ni, d);
                let (bu, bi) = propagate_pair(a, &gu, &gi, layers);
                base.merge_scaled(&SparseGrad::from_dense(ut, &bu), 1.0);
                base.merge_scaled(&SparseGrad::from_dense(it, &bi), 1.0);
            }
            base
        }
    };
    Ok((grads, losses))
}

/// `grad += l2 * param` for every row already present in `grads`.
fn add_l2(grads: &mut SparseGrad, emb: &DisentangledEmbeddings, l2: f64) {
    let rows: Vec<(TableId, usize)> = grads.iter().map(|(t, r, _)| (t, r)).collect();
    for (t, r) in rows {
        grads.add(t, r, l2, emb.table(t).row(r));
    }
}

/// Trains with no per-epoch hook.
pub fn train(
    config: &TrainConfig,
    train_set: &InteractionDataset,
    stats: &PopularityStats,
) -> Result<TrainOutcome> {
    train_with_hook(config, train_set, stats, |_, _| Ok(()))
}

/// Full training loop. `on_epoch` sees every epoch's log line and the current
/// base tables (used for per-epoch checkpoints).
///
/// With validation enabled, `val_fraction` of each user's training pairs is
/// held out, training stops after `patience` epochs without a validation
/// HR improvement, and the best epoch's tables are returned.
pub fn train_with_hook(
    config: &TrainConfig,
    train_set: &InteractionDataset,
    stats: &PopularityStats,
    mut on_epoch: impl FnMut(&EpochLog, &Checkpoint) -> Result<()>,
) -> Result<TrainOutcome> {
    config.validate()?;
    if train_set.is_empty() {
        return Err(Error::EmptyDataset("training set is empty".into()));
    }
    if stats.num_items() != train_set.num_items() {
        return Err(Error::DimensionMismatch {
            expected: train_set.num_items(),
            got: stats.num_items(),
        });
    }
    let validating = config.patience > 0;
    let (fit, val) = if validating {
        let s = split(
            train_set,
            config.val_fraction,
            config.seed ^ VALIDATION_STREAM,
        )?;
        (s.train, Some(s.test).filter(|t| !t.is_empty()))
    } else {
        (train_set.clone(), None)
    };
    let index = TrainIndex::new(&fit);
    let layers = config.layers_for_backbone();
    let adj = match config.backbone {
        Backbone::Mf => None,
        Backbone::LightGcn => Some(NormAdjacency::from_dataset(&fit, true)?),
    };
    let adj_ref = adj.as_ref().map(|a| (a, layers));

    let mut emb = init_embeddings(
        train_set.num_users(),
        train_set.num_items(),
        config.dim,
        config.seed,
        config.init_scale,
    )?;
    let mut adam = AdamState::new(&emb);
    let mut rng = ChaCha8Rng::seed_from_u64(config.seed ^ BATCH_STREAM);
    let opts = BatchOptions {
        interest: config.alpha != 0.0,
        conformity: config.beta != 0.0,
        false_negative_filter: config.false_negative_filter,
    };
    let steps_per_epoch = fit.len().div_ceil(config.batch_size);

    let snapshot = |emb: &DisentangledEmbeddings| Checkpoint {
        backbone: config.backbone,
        layers,
        embeddings: emb.clone(),
    };
    let mut best: Option<(f64, usize, DisentangledEmbeddings)> = None;
    let mut log = Vec::new();
    let mut steps = 0;
    let started = Instant::now();
    for epoch in 1..=config.epochs {
        let mut sums = StepLosses::default();
        for _ in 0..steps_per_epoch {
            let batch = sample_batch(&index, stats, config.batch_size, &mut rng, opts)?;
            let (mut grads, losses) = batch_gradient(
                &emb,
                adj_ref,
                &batch,
                config.alpha,
                config.beta,
                config.loss_mode,
            )?;
            if config.l2 > 0.0 {
                add_l2(&mut grads, &emb, config.l2);
            }
            adam_step(&mut emb, &grads, &mut adam, config.learning_rate)?;
            sums.main += losses.main;
            sums.int += losses.int;
            sums.conf += losses.conf;
            sums.total += losses.total;
            steps += 1;
        }
        let n = steps_per_epoch as f64;
        let val_hr = match &val {
            Some(v) => {
                let scoring = match &adj {
                    Some(a) => lightgcn_propagate(&emb, a, layers)?,
                    None => emb.clone(),
                };
                evaluate(&scoring, &fit, v, stats, config.val_k)?.hr
            }
            None => f64::NAN,
        };
        let entry = EpochLog {
            epoch,
            main_loss: sums.main / n,
            int_loss: sums.int / n,
            conf_loss: sums.conf / n,
            total: sums.total / n,
            val_hr,
            wall_seconds: started.elapsed().as_secs_f64(),
        };
        log::info!("{}", entry.to_line());
        on_epoch(&entry, &snapshot(&emb))?;
        log.push(entry);

        if val.is_some() {
            let improved = best.as_ref().is_none_or(|(b, _, _)| val_hr > *b);
            if improved {
                best = Some((val_hr, epoch, emb.clone()));
            } else if epoch - best.as_ref().map_or(0, |b| b.1) >= config.patience {
                log::info!("early stop at epoch {epoch}");
                break;
            }
        }
    }
    let (best_epoch, final_emb) = match best {
        Some((_, e, tables)) => (e, tables),
        None => (log.len(), emb),
    };
    Ok(TrainOutcome {
        checkpoint: snapshot(&final_emb),
        log,
        best_epoch,
        steps,
    })
}
