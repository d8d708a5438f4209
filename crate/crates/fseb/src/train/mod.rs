//! The training objective and loop.
//!
//! Each optimizer step minimizes
//!
//!   (1/S) sum_s [ (N/B) * sum_batch ce_i(theta_s) - prior(f(x_c; theta_s)) ]
//!     + lambda * |theta|^2
//!
//! where theta_s is one dropout realization. The data batch and the context
//! batch are concatenated into a single stochastic forward pass per s, so
//! both terms see the same realization; the prior term is the summed
//! per-class Gaussian log-density of the context outputs under the kernel
//! built from the sampled context embeddings, rebuilt every step.

mod adam;
mod search;

pub use adam::{adam_update, AdamState};
pub use search::{random_search, write_trials_csv, SearchSpace, TrialRow, TrialStatus};

use serde::{Deserialize, Serialize};

use crate::context::{sample_context_batch, ContextBundle};
use crate::data::{split, Dataset};
use crate::error::{Error, Result};
use crate::eval::{nll, predictive, DEFAULT_S_EVAL};
use crate::nn::Network;
use crate::prior::{build_kernel, prior_term, KernelConfig};
use crate::rng::RngStream;
use crate::tensor::{Graph, NodeId, RunMode, Tensor};

/// What the prior consumes as the network output f(x_c).
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorInput {
    Logits,
    Probs,
}

/// Whether the prior term enters at full weight or averaged over the
/// context batch.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum PriorScale {
    Sum,
    Mean,
}

/// Context batch refresh policy.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ContextResample {
    PerStep,
    Fixed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct TrainConfig {
    pub batch_size: usize,
    pub lr: f64,
    pub beta1: f64,
    pub beta2: f64,
    pub eps: f64,
    /// lambda, the parameter-space regularization strength.
    pub weight_decay: f64,
    /// S, dropout realizations per optimizer step.
    pub mc_train_samples: usize,
    /// m, context points per step.
    pub context_batch: usize,
    pub max_epochs: usize,
    pub patience: usize,
    pub val_fraction: f64,
    pub seed: u64,
    pub prior_input: PriorInput,
    pub prior_scale: PriorScale,
    pub context_resample: ContextResample,
    /// Stochastic passes for the per-epoch validation NLL.
    pub val_mc_samples: usize,
}

impl Default for TrainConfig {
    fn default() -> Self {
        TrainConfig {
            batch_size: 128,
            lr: 5e-4,
            beta1: 0.9,
            beta2: 0.999,
            eps: 1e-8,
            weight_decay: 1e-4,
            mc_train_samples: 1,
            context_batch: 32,
            max_epochs: 100,
            patience: 10,
            val_fraction: 0.1,
            seed: 0,
            prior_input: PriorInput::Logits,
            prior_scale: PriorScale::Sum,
            context_resample: ContextResample::PerStep,
            val_mc_samples: DEFAULT_S_EVAL,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let positive = [
            ("batch_size", self.batch_size as f64),
            ("lr", self.lr),
            ("eps", self.eps),
            ("mc_train_samples", self.mc_train_samples as f64),
            ("context_batch", self.context_batch as f64),
            ("max_epochs", self.max_epochs as f64),
            ("val_mc_samples", self.val_mc_samples as f64),
        ];
        for (name, v) in positive {
            if v <= 0.0 || v.is_nan() {
                return Err(Error::Config(format!("{name} must be positive, got {v}")));
            }
        }
        if self.weight_decay < 0.0 || !self.weight_decay.is_finite() {
            return Err(Error::Config(format!(
                "weight_decay must be nonnegative, got {}",
                self.weight_decay
            )));
        }
        for (name, v) in [("beta1", self.beta1), ("beta2", self.beta2)] {
            if !(0.0 < v && v < 1.0) {
                return Err(Error::Config(format!("{name} must lie in (0,1), got {v}")));
            }
        }
        if self.patience < 1 {
            return Err(Error::Config("patience must be at least 1".into()));
        }
        if !(0.0 < self.val_fraction && self.val_fraction < 1.0) {
            return Err(Error::Config(format!(
                "val_fraction {} not in (0,1)",
                self.val_fraction
            )));
        }
        Ok(())
    }
}

/// Loss value, its additive pieces, and the parameter gradients of one step.
#[derive(Clone, Debug)]
pub struct StepOutcome {
    pub loss: f64,
    /// (N/B)-scaled cross-entropy piece, averaged over the S realizations.
    pub data_term: f64,
    /// Prior log-density piece (entering the loss negated), averaged over S.
    pub prior_term: f64,
    /// lambda * |theta|^2.
    pub l2_term: f64,
    pub grads: Vec<Tensor>,
}

/// One stochastic objective evaluation with gradients.
///
/// `n_total` is the full training-set size behind the (N/B) scaling;
/// passing the batch itself as the full data makes the factor exactly 1.
#[allow(clippy::too_many_arguments)]
pub fn objective_step(
    net: &Network,
    batch_images: &Tensor,
    batch_labels: &[usize],
    n_total: usize,
    context_images: &Tensor,
    context_embeddings: &Tensor,
    km_cfg: &KernelConfig,
    cfg: &TrainConfig,
    rng: &mut RngStream,
) -> Result<StepOutcome> {
    let b = batch_images.shape()[0];
    let m = context_images.shape()[0];
    if b == 0 || b != batch_labels.len() {
        return Err(Error::Dim(format!(
            "batch of {b} images with {} labels",
            batch_labels.len()
        )));
    }
    if m != context_embeddings.shape()[0] {
        return Err(Error::Dim(format!(
            "{m} context images vs {} embedding rows",
            context_embeddings.shape()[0]
        )));
    }
    let km = build_kernel(context_embeddings, km_cfg)?;
    let prior_factor = match cfg.prior_scale {
        PriorScale::Sum => 1.0,
        PriorScale::Mean => 1.0 / m as f64,
    };

    let mut g = Graph::new();
    let params = net.register_params(&mut g)?;
    let data_leaf = g.leaf(batch_images)?;
    let ctx_leaf = g.leaf(context_images)?;
    let joint = g.concat_rows(data_leaf, ctx_leaf)?;

    let s_count = cfg.mc_train_samples;
    let mut per_sample_terms = Vec::with_capacity(s_count);
    let mut data_acc = 0.0;
    let mut prior_acc = 0.0;
    let run = |g: &mut Graph, rng: &mut RngStream| -> Result<(NodeId, f64, f64)> {
        let logits = net.forward_with_params(g, &params, joint, RunMode::Train, rng)?;
        let data_logits = g.slice_rows(logits, 0, b)?;
        let ctx_logits = g.slice_rows(logits, b, m)?;
        let ce = g.softmax_cross_entropy(data_logits, batch_labels)?;
        let data_term = g.scale(ce, n_total as f64)?;
        let prior_in = match cfg.prior_input {
            PriorInput::Logits => ctx_logits,
            PriorInput::Probs => g.softmax(ctx_logits)?,
        };
        let prior = prior_term(g, &km, prior_in)?;
        let neg_prior = g.scale(prior, -prior_factor)?;
        let combined = g.add(data_term, neg_prior)?;
        Ok((combined, g.value(data_term)[0], g.value(prior)[0] * prior_factor))
    };
    for _ in 0..s_count {
        let (node, data_v, prior_v) = run(&mut g, rng).map_err(|e| match e {
            Error::Numeric(msg) => Error::Numeric(format!(
                "{msg} (partial components: data={data_acc:.6e} prior={prior_acc:.6e})"
            )),
            other => other,
        })?;
        per_sample_terms.push(node);
        data_acc += data_v;
        prior_acc += prior_v;
    }
    let stacked = g.add_n(&per_sample_terms)?;
    let averaged = g.scale(stacked, 1.0 / s_count as f64)?;

    let sq_nodes: Vec<NodeId> = params
        .iter()
        .map(|id| g.sum_sq(*id))
        .collect::<Result<_>>()?;
    let l2_total = g.add_n(&sq_nodes)?;
    let l2_scaled = g.scale(l2_total, cfg.weight_decay)?;
    let loss = g.add(averaged, l2_scaled)?;

    let loss_value = g.value(loss)[0];
    if !loss_value.is_finite() {
        return Err(Error::Numeric(format!(
            "non-finite loss (data={:.6e} prior={:.6e} l2={:.6e})",
            data_acc / s_count as f64,
            prior_acc / s_count as f64,
            g.value(l2_scaled)[0]
        )));
    }
    g.backward(loss)?;
    let grads = params
        .iter()
        .zip(net.params())
        .map(|(id, p)| {
            g.grad(*id)
                .map(|buf| Tensor::new(p.shape().to_vec(), buf.to_vec()))
                .unwrap_or_else(|| Ok(Tensor::zeros(p.shape().to_vec())))
        })
        .collect::<Result<Vec<_>>>()?;

    Ok(StepOutcome {
        loss: loss_value,
        data_term: data_acc / s_count as f64,
        prior_term: prior_acc / s_count as f64,
        l2_term: g.value(l2_scaled)[0],
        grads,
    })
}

/// Loss components of one epoch plus its validation NLL.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct EpochStats {
    pub epoch: usize,
    pub train_loss: f64,
    pub data_term: f64,
    pub prior_term: f64,
    pub l2_term: f64,
    pub val_nll: f64,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrainReport {
    pub epochs: Vec<EpochStats>,
    pub stopped_epoch: usize,
    pub best_epoch: usize,
    pub best_val_nll: f64,
    pub n_train: usize,
    pub n_val: usize,
    pub seed: u64,
    /// Filled by callers that persist the best parameters.
    pub checkpoint: Option<String>,
    /// Excluded from serialized reports so identical runs match bytewise.
    #[serde(skip)]
    pub wall_time_s: f64,
}

/// Full training loop: split, minibatch epochs, per-epoch validation NLL
/// under MC dropout, early stopping with best-checkpoint restore.
pub fn train(
    net: &mut Network,
    dataset: &Dataset,
    bundle: &ContextBundle,
    km_cfg: &KernelConfig,
    cfg: &TrainConfig,
) -> Result<TrainReport> {
    cfg.validate()?;
    km_cfg.validate()?;
    if dataset.is_empty() {
        return Err(Error::Config("training dataset is empty".into()));
    }
    if !bundle.has_embeddings() {
        return Err(Error::Config("context bundle has no embeddings; run an embed pass".into()));
    }
    if bundle.images.is_none() {
        return Err(Error::Config("context bundle must retain images for training".into()));
    }
    if cfg.context_batch > bundle.m_total {
        return Err(Error::Config(format!(
            "context_batch {} exceeds bundle size {}",
            cfg.context_batch, bundle.m_total
        )));
    }
    let start = std::time::Instant::now();
    let (train_ds, val_ds) = split(dataset, cfg.val_fraction, cfg.seed)?;
    let n_total = train_ds.len();

    let mut shuffle_rng = RngStream::named(cfg.seed, "shuffle");
    let mut dropout_rng = RngStream::named(cfg.seed, "dropout");
    let mut sampling_rng = RngStream::named(cfg.seed, "sampling");
    let mut val_rng = RngStream::named(cfg.seed, "val-eval");

    let fixed_context = match cfg.context_resample {
        ContextResample::Fixed => {
            let (idx, emb) = sample_context_batch(bundle, cfg.context_batch, &mut sampling_rng)?;
            Some((bundle.images_for(&idx)?, emb))
        }
        ContextResample::PerStep => None,
    };

    let mut adam = AdamState::new(net.params());
    let mut epochs: Vec<EpochStats> = Vec::new();
    let mut best_val = f64::INFINITY;
    let mut best_epoch = 0usize;
    let mut best_params: Vec<Tensor> = net.params().to_vec();
    let mut epochs_since_best = 0usize;
    let mut order: Vec<usize> = (0..n_total).collect();

    let mut stopped = cfg.max_epochs;
    for epoch in 1..=cfg.max_epochs {
        shuffle_rng.shuffle(&mut order);
        let mut sums = (0.0, 0.0, 0.0, 0.0);
        let mut steps = 0usize;
        for chunk in order.chunks(cfg.batch_size) {
            let (bx, by) = train_ds.batch(chunk);
            let (ctx_images, ctx_emb) = match &fixed_context {
                Some((imgs, emb)) => (imgs.clone(), emb.clone()),
                None => {
                    let (idx, emb) =
                        sample_context_batch(bundle, cfg.context_batch, &mut sampling_rng)?;
                    (bundle.images_for(&idx)?, emb)
                }
            };
            let outcome = objective_step(
                net,
                &bx,
                &by,
                n_total,
                &ctx_images,
                &ctx_emb,
                km_cfg,
                cfg,
                &mut dropout_rng,
            )
            .map_err(|e| match e {
                Error::Numeric(msg) => {
                    Error::Numeric(format!("epoch {epoch} step {steps}: {msg}"))
                }
                other => other,
            })?;
            adam_update(&mut adam, net.params_mut(), &outcome.grads, cfg)?;
            sums.0 += outcome.loss;
            sums.1 += outcome.data_term;
            sums.2 += outcome.prior_term;
            sums.3 += outcome.l2_term;
            steps += 1;
        }
        let pb = predictive(net, &val_ds.images, cfg.val_mc_samples, &mut val_rng, false)?;
        let val_nll = nll(&pb, &val_ds.labels)?;
        if std::env::var_os("FSEB_VERBOSE").is_some() {
            eprintln!(
                "epoch {epoch}: loss {:.2} val_nll {val_nll:.4} ({:.0}s)",
                sums.0 / steps as f64,
                start.elapsed().as_secs_f64()
            );
        }
        epochs.push(EpochStats {
            epoch,
            train_loss: sums.0 / steps as f64,
            data_term: sums.1 / steps as f64,
            prior_term: sums.2 / steps as f64,
            l2_term: sums.3 / steps as f64,
            val_nll,
        });
        if val_nll < best_val {
            best_val = val_nll;
            best_epoch = epoch;
            best_params = net.params().to_vec();
            epochs_since_best = 0;
        } else {
            epochs_since_best += 1;
            if epochs_since_best >= cfg.patience {
                stopped = epoch;
                break;
            }
        }
    }
    if stopped == cfg.max_epochs && !epochs.is_empty() {
        stopped = epochs.last().expect("nonempty").epoch;
    }
    // restore the best validation checkpoint
    for (p, best) in net.params_mut().iter_mut().zip(best_params) {
        *p = best;
    }
    Ok(TrainReport {
        epochs,
        stopped_epoch: stopped,
        best_epoch,
        best_val_nll: best_val,
        n_train: n_total,
        n_val: val_ds.len(),
        seed: cfg.seed,
        checkpoint: None,
        wall_time_s: start.elapsed().as_secs_f64(),
    })
}
