//! Randomized grid search over (lambda, tau1, tau2): distinct triples drawn
//! uniformly without replacement, one full training run per trial, selection
//! by minimum validation NLL.

use serde::{Deserialize, Serialize};

use super::{train, TrainConfig};
use crate::context::ContextBundle;
use crate::data::Dataset;
use crate::error::{Error, Result};
use crate::nn::{build_network, ArchPreset};
use crate::prior::KernelConfig;
use crate::rng::RngStream;

fn log_grid(lo: i32, hi: i32) -> Vec<f64> {
    (lo..=hi).map(|k| 10f64.powi(k)).collect()
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields, default)]
pub struct SearchSpace {
    pub lambda_grid: Vec<f64>,
    pub tau1_grid: Vec<f64>,
    pub tau2_grid: Vec<f64>,
    pub trials: usize,
}

impl Default for SearchSpace {
    fn default() -> Self {
        SearchSpace {
            lambda_grid: log_grid(-6, 0),
            tau1_grid: log_grid(-6, 2),
            tau2_grid: log_grid(-6, 2),
            trials: 60,
        }
    }
}

impl SearchSpace {
    pub fn grid_len(&self) -> usize {
        self.lambda_grid.len() * self.tau1_grid.len() * self.tau2_grid.len()
    }

    pub fn validate(&self) -> Result<()> {
        if self.lambda_grid.is_empty() || self.tau1_grid.is_empty() || self.tau2_grid.is_empty() {
            return Err(Error::Config("search grids must be nonempty".into()));
        }
        if self.trials == 0 || self.trials > self.grid_len() {
            return Err(Error::Config(format!(
                "trials {} outside [1, {}]",
                self.trials,
                self.grid_len()
            )));
        }
        Ok(())
    }

    fn decode(&self, idx: usize) -> (f64, f64, f64) {
        let inner = self.tau1_grid.len() * self.tau2_grid.len();
        let l = idx / inner;
        let rest = idx % inner;
        (
            self.lambda_grid[l],
            self.tau1_grid[rest / self.tau2_grid.len()],
            self.tau2_grid[rest % self.tau2_grid.len()],
        )
    }
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum TrialStatus {
    Ok,
    Failed,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct TrialRow {
    pub trial: usize,
    pub lambda: f64,
    pub tau1: f64,
    pub tau2: f64,
    pub val_nll: Option<f64>,
    pub status: TrialStatus,
    pub stopped_epoch: Option<usize>,
}

/// Outcome of a search: the winning configuration plus the full trial table.
#[derive(Clone, Debug)]
pub struct SearchOutcome {
    pub best_train: TrainConfig,
    pub best_kernel: KernelConfig,
    pub best_trial: usize,
    pub trials: Vec<TrialRow>,
}

/// Sample `space.trials` distinct (lambda, tau1, tau2) triples, train each,
/// and pick the minimum validation NLL. Numeric failures mark their trial
/// failed and the search continues; an all-failed search errors.
#[allow(clippy::too_many_arguments)]
pub fn random_search(
    space: &SearchSpace,
    base_cfg: &TrainConfig,
    base_kernel: &KernelConfig,
    preset: &ArchPreset,
    k: usize,
    dataset: &Dataset,
    bundle: &ContextBundle,
    seed: u64,
) -> Result<SearchOutcome> {
    space.validate()?;
    base_cfg.validate()?;
    let mut rng = RngStream::named(seed, "hpo");
    let picks = rng.sample_without_replacement(space.grid_len(), space.trials);

    let mut rows = Vec::with_capacity(space.trials);
    for (trial, grid_idx) in picks.iter().enumerate() {
        let (lambda, tau1, tau2) = space.decode(*grid_idx);
        let cfg = TrainConfig {
            weight_decay: lambda,
            ..base_cfg.clone()
        };
        let km_cfg = KernelConfig {
            tau1,
            tau2,
            normalize_embeddings: base_kernel.normalize_embeddings,
        };
        let mut net = build_network(preset, k, cfg.seed)?;
        match train(&mut net, dataset, bundle, &km_cfg, &cfg) {
            Ok(report) => rows.push(TrialRow {
                trial,
                lambda,
                tau1,
                tau2,
                val_nll: Some(report.best_val_nll),
                status: TrialStatus::Ok,
                stopped_epoch: Some(report.stopped_epoch),
            }),
            Err(Error::Numeric(msg)) => {
                eprintln!("trial {trial} (lambda={lambda:e}, tau1={tau1:e}, tau2={tau2:e}) failed: {msg}");
                rows.push(TrialRow {
                    trial,
                    lambda,
                    tau1,
                    tau2,
                    val_nll: None,
                    status: TrialStatus::Failed,
                    stopped_epoch: None,
                });
            }
            Err(other) => return Err(other),
        }
    }

    let best = rows
        .iter()
        .filter_map(|r| r.val_nll.map(|v| (r.trial, v)))
        .min_by(|a, b| a.1.partial_cmp(&b.1).expect("finite NLL"))
        .ok_or_else(|| Error::Search("every trial failed".into()))?;
    let best_row = &rows[best.0];
    Ok(SearchOutcome {
        best_train: TrainConfig {
            weight_decay: best_row.lambda,
            ..base_cfg.clone()
        },
        best_kernel: KernelConfig {
            tau1: best_row.tau1,
            tau2: best_row.tau2,
            normalize_embeddings: base_kernel.normalize_embeddings,
        },
        best_trial: best.0,
        trials: rows,
    })
}

/// Trial table as CSV, ordered by trial index.
pub fn write_trials_csv(rows: &[TrialRow], path: &std::path::Path) -> Result<()> {
    let mut out = String::from("trial,lambda,tau1,tau2,val_nll,status,stopped_epoch\n");
    for r in rows {
        let val = r.val_nll.map_or(String::new(), |v| format!("{v}"));
        let stopped = r.stopped_epoch.map_or(String::new(), |v| format!("{v}"));
        let status = match r.status {
            TrialStatus::Ok => "ok",
            TrialStatus::Failed => "failed",
        };
        out.push_str(&format!(
            "{},{:e},{:e},{:e},{},{},{}\n",
            r.trial, r.lambda, r.tau1, r.tau2, val, status, stopped
        ));
    }
    std::fs::write(path, out)?;
    Ok(())
}
