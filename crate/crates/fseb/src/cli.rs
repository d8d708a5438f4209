//! Command-line surface.
//!
//! Subcommands: `gen-context` (four-step generation against a provider or
//! the offline stub), `embed` (bundle embedding fill), `train`, `hpo`,
//! `eval`, `ood`, and `ablate` (the three context/embedding source
//! variants). Exit codes: 0 success, 1 runtime failure, 2 usage or config
//! error.
//!
//! Run directory layout: `config.json`, `checkpoints/`, `reports/`,
//! `trials.csv`, `run_meta.json` (wall-clock metadata; the one file that is
//! not byte-reproducible across runs).

use std::collections::BTreeMap;
use std::path::{Path, PathBuf};

use clap::{Args, Parser, Subcommand, ValueEnum};
use serde::{Deserialize, Serialize};

use crate::context::{
    embed_bundle, generate_context, load_context_bundle, write_context_bundle, ContextBundle,
    ContextImage, ContextServices, GenerationPlan, HttpProvider, OfflineStub, ServiceEndpoint,
    StubEmbedding,
};
use crate::data::{load_idx, subsample, synth_dataset, Dataset, SynthSpec};
use crate::error::{Error, Result};
use crate::eval::{
    accuracy, auroc, ece, nll, ood_scores, predictive, MetricsReport, OodScore, DEFAULT_S_EVAL,
};
use crate::nn::{build_network, load_checkpoint, save_checkpoint, ArchPreset, Network};
use crate::prior::KernelConfig;
use crate::rng::RngStream;
use crate::tensor::Tensor;
use crate::train::{random_search, train, write_trials_csv, SearchSpace, TrainConfig};

// ---------------------------------------------------------------------------
// Run configuration file
// ---------------------------------------------------------------------------

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(tag = "kind", rename_all = "snake_case", deny_unknown_fields)]
pub enum DatasetConfig {
    /// IDX image/label files (gzip transparent).
    Idx {
        train_images: PathBuf,
        train_labels: PathBuf,
        #[serde(default)]
        test_images: Option<PathBuf>,
        #[serde(default)]
        test_labels: Option<PathBuf>,
    },
    /// Procedural dataset; a held-out test set uses a shifted seed.
    Synth { spec: SynthSpec },
}

fn default_seeds() -> Vec<u64> {
    vec![0]
}

fn default_s_eval() -> usize {
    DEFAULT_S_EVAL
}

/// Complete serialized run configuration. Unknown keys are rejected.
#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct RunConfig {
    /// Architecture preset name: mnist_cnn, cifar_cnn, or desk_mlp.
    pub arch: String,
    #[serde(default)]
    pub arch_dropout: Option<f64>,
    /// desk_mlp hidden width override; 0 gives the linear model.
    #[serde(default)]
    pub arch_hidden: Option<usize>,
    /// Input shape override (channels, height, width).
    #[serde(default)]
    pub arch_input: Option<[usize; 3]>,
    pub dataset: DatasetConfig,
    /// Fraction of the training set kept (stratified), if any.
    #[serde(default)]
    pub subsample_fraction: Option<f64>,
    /// Fraction of the test set kept (stratified), if any.
    #[serde(default)]
    pub test_subsample_fraction: Option<f64>,
    pub bundle_dir: PathBuf,
    #[serde(default)]
    pub train: TrainConfig,
    #[serde(default)]
    pub kernel: KernelConfig,
    #[serde(default = "default_s_eval")]
    pub s_eval: usize,
    #[serde(default = "default_seeds")]
    pub seeds: Vec<u64>,
    pub out_dir: PathBuf,
}

impl RunConfig {
    pub fn load(path: &Path) -> Result<RunConfig> {
        let text = std::fs::read_to_string(path).map_err(|e| {
            Error::Config(format!("cannot read config {}: {e}", path.display()))
        })?;
        let cfg: RunConfig =
            serde_json::from_str(&text).map_err(|e| Error::Config(format!("config: {e}")))?;
        cfg.validate()?;
        Ok(cfg)
    }

    pub fn validate(&self) -> Result<()> {
        ArchPreset::parse(&self.arch)?;
        self.train.validate()?;
        self.kernel.validate()?;
        if self.s_eval == 0 {
            return Err(Error::Config("s_eval must be >= 1".into()));
        }
        if self.seeds.is_empty() {
            return Err(Error::Config("seeds list is empty".into()));
        }
        if let Some(f) = self.subsample_fraction {
            if !(0.0 < f && f <= 1.0) {
                return Err(Error::Config(format!("subsample_fraction {f} not in (0,1]")));
            }
        }
        if let Some(f) = self.test_subsample_fraction {
            if !(0.0 < f && f <= 1.0) {
                return Err(Error::Config(format!(
                    "test_subsample_fraction {f} not in (0,1]"
                )));
            }
        }
        Ok(())
    }

    pub fn preset(&self) -> Result<ArchPreset> {
        let mut preset = ArchPreset::parse(&self.arch)?;
        if let Some(rate) = self.arch_dropout {
            if !(0.0..1.0).contains(&rate) {
                return Err(Error::Config(format!("arch_dropout {rate} not in [0,1)")));
            }
            preset.dropout_rate = rate;
        }
        if let Some(hidden) = self.arch_hidden {
            preset.hidden = hidden;
        }
        if let Some(input) = self.arch_input {
            preset.input_shape = input;
        }
        Ok(preset)
    }

    /// Training dataset after optional stratified subsampling.
    pub fn load_train_dataset(&self) -> Result<Dataset> {
        let ds = match &self.dataset {
            DatasetConfig::Idx {
                train_images,
                train_labels,
                ..
            } => load_idx(train_images, train_labels)?,
            DatasetConfig::Synth { spec } => synth_dataset(spec)?.0,
        };
        match self.subsample_fraction {
            Some(f) if f < 1.0 => subsample(&ds, f, self.train.seed),
            _ => Ok(ds),
        }
    }

    /// Held-out test dataset.
    pub fn load_test_dataset(&self) -> Result<Dataset> {
        let ds = match &self.dataset {
            DatasetConfig::Idx {
                test_images,
                test_labels,
                ..
            } => {
                let (ti, tl) = match (test_images, test_labels) {
                    (Some(ti), Some(tl)) => (ti, tl),
                    _ => {
                        return Err(Error::Config(
                            "dataset lacks test_images/test_labels".into(),
                        ))
                    }
                };
                load_idx(ti, tl)?
            }
            DatasetConfig::Synth { spec } => {
                let held_out = SynthSpec {
                    seed: spec.seed.wrapping_add(0x7e57),
                    ..spec.clone()
                };
                synth_dataset(&held_out)?.0
            }
        };
        match self.test_subsample_fraction {
            Some(f) if f < 1.0 => subsample(&ds, f, self.train.seed ^ 0x7e57),
            _ => Ok(ds),
        }
    }
}

// ---------------------------------------------------------------------------
// Command-line grammar
// ---------------------------------------------------------------------------

#[derive(Parser, Debug)]
#[command(
    name = "fseb",
    about = "Function-space empirical Bayes regularisation of dropout networks",
    version
)]
struct Cli {
    #[command(subcommand)]
    command: Command,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
enum ProviderChoice {
    /// Offline deterministic stub (hash embeddings).
    Stub,
    /// Offline stub with class-aware embeddings for the stripes family.
    SemanticStub,
    /// Offline stub embedding by a seeded random projection of pixels.
    RandomProj,
    /// HTTP provider endpoint.
    Http,
}

#[derive(Args, Clone, Debug)]
struct EndpointArgs {
    /// Provider base URL (http provider only).
    #[arg(long)]
    endpoint: Option<String>,
    /// Provider model name.
    #[arg(long, default_value = "default-model")]
    model: String,
    /// Request timeout in seconds.
    #[arg(long, default_value_t = 30.0)]
    timeout: f64,
    /// Retries after the first attempt for transport/5xx failures.
    #[arg(long, default_value_t = 2)]
    retries: u32,
    /// Environment variable holding the bearer token.
    #[arg(long)]
    auth_env: Option<String>,
}

impl EndpointArgs {
    fn endpoint(&self) -> Result<ServiceEndpoint> {
        let base_url = self
            .endpoint
            .clone()
            .ok_or_else(|| Error::Config("--endpoint is required with --provider http".into()))?;
        Ok(ServiceEndpoint {
            base_url,
            model: self.model.clone(),
            timeout_s: self.timeout,
            retry_budget: self.retries,
            auth_env: self.auth_env.clone(),
        })
    }
}

#[derive(Subcommand, Debug)]
enum Command {
    /// Generate context images: summarize references, build per-class
    /// prompts, synthesize images, write an image-only bundle.
    GenContext {
        /// Bundle output directory.
        #[arg(long)]
        out: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderChoice::Stub)]
        provider: ProviderChoice,
        /// Comma-separated class descriptors to iterate.
        #[arg(long, value_delimiter = ',')]
        classes: Vec<String>,
        #[arg(long, default_value_t = 8)]
        per_class: usize,
        /// Square image side length.
        #[arg(long, default_value_t = 28)]
        size: usize,
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[arg(long, default_value = "maintain the same visual style")]
        requirements: String,
        /// IDX file providing reference images (labels not needed).
        #[arg(long)]
        reference_images: Option<PathBuf>,
        /// IDX labels matching --reference-images.
        #[arg(long)]
        reference_labels: Option<PathBuf>,
        /// How many reference images to pass to the summarizer.
        #[arg(long, default_value_t = 8)]
        reference_count: usize,
        #[command(flatten)]
        http: EndpointArgs,
    },
    /// Fill a bundle's embeddings from its stored images.
    Embed {
        #[arg(long)]
        bundle: PathBuf,
        #[arg(long, value_enum, default_value_t = ProviderChoice::Stub)]
        provider: ProviderChoice,
        /// Embedding dimension produced by the offline stubs.
        #[arg(long, default_value_t = 64)]
        embed_dim: usize,
        #[arg(long, default_value_t = 16)]
        batch_size: usize,
        /// Class count for the semantic stub's orientation detector.
        #[arg(long)]
        semantic_classes: Option<usize>,
        /// Seed for the random projection embedder.
        #[arg(long, default_value_t = 0)]
        seed: u64,
        #[command(flatten)]
        http: EndpointArgs,
    },
    /// Train one model under the configuration file.
    Train {
        #[arg(long)]
        config: PathBuf,
        /// Seed override (defaults to the first entry of the config's list).
        #[arg(long)]
        seed: Option<u64>,
        /// Output directory override.
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Randomized grid search over (lambda, tau1, tau2).
    Hpo {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        trials: Option<usize>,
        #[arg(long)]
        seed: Option<u64>,
        #[arg(long)]
        out: Option<PathBuf>,
    },
    /// Evaluate a trained run on the held-out test set.
    Eval {
        /// Run directory produced by `train` (holds config.json and the
        /// best checkpoint).
        #[arg(long)]
        run: PathBuf,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// OOD detection metrics (msp, entropy, expected entropy AUROC).
    Ood {
        #[arg(long)]
        run: PathBuf,
        /// OOD source: "noise", "disjoint" (synth datasets), or an IDX
        /// images file path.
        #[arg(long, default_value = "noise")]
        ood: String,
        #[arg(long)]
        seed: Option<u64>,
    },
    /// Context/embedding source ablation over the config's seed list.
    Ablate {
        #[arg(long)]
        config: PathBuf,
        #[arg(long)]
        out: Option<PathBuf>,
        /// Override the config's seed list.
        #[arg(long, value_delimiter = ',')]
        seeds: Vec<u64>,
    },
}

// ---------------------------------------------------------------------------
// Report aggregation
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, ValueEnum)]
pub enum ReportFormat {
    Json,
    Csv,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct AggregatedRow {
    pub metric: String,
    pub dataset: String,
    pub method: String,
    pub mean: f64,
    pub std: f64,
}

/// Aggregate per-seed reports into mean and sample standard deviation per
/// (metric, dataset, method) row and write them out.
pub fn emit_report(
    reports: &[MetricsReport],
    format: ReportFormat,
    out: &Path,
) -> Result<PathBuf> {
    if reports.is_empty() {
        return Err(Error::Usage("emit_report needs at least one report".into()));
    }
    let k0 = reports[0].k;
    if reports.iter().any(|r| r.k != k0) {
        return Err(Error::Usage("cannot aggregate reports with mixed class counts".into()));
    }
    let mut groups: BTreeMap<(String, String, String), Vec<f64>> = BTreeMap::new();
    for report in reports {
        for (metric, dataset, method, value) in report.rows() {
            groups.entry((metric, dataset, method)).or_default().push(value);
        }
    }
    let rows: Vec<AggregatedRow> = groups
        .into_iter()
        .map(|((metric, dataset, method), values)| {
            let n = values.len() as f64;
            let mean = values.iter().sum::<f64>() / n;
            let std = if values.len() < 2 {
                0.0
            } else {
                (values.iter().map(|v| (v - mean).powi(2)).sum::<f64>() / (n - 1.0)).sqrt()
            };
            AggregatedRow {
                metric,
                dataset,
                method,
                mean,
                std,
            }
        })
        .collect();
    if let Some(parent) = out.parent() {
        std::fs::create_dir_all(parent)?;
    }
    match format {
        ReportFormat::Json => {
            std::fs::write(out, serde_json::to_string_pretty(&rows)?)?;
        }
        ReportFormat::Csv => {
            let mut text = String::from("metric,dataset,method,mean,std\n");
            for r in rows {
                text.push_str(&format!(
                    "{},{},{},{},{}\n",
                    r.metric, r.dataset, r.method, r.mean, r.std
                ));
            }
            std::fs::write(out, text)?;
        }
    }
    Ok(out.to_path_buf())
}

// ---------------------------------------------------------------------------
// Command implementations
// ---------------------------------------------------------------------------

fn stub_for(
    provider: ProviderChoice,
    embed_dim: usize,
    size: usize,
    classes: Vec<String>,
    semantic_classes: Option<usize>,
    seed: u64,
) -> Result<OfflineStub> {
    let stub = OfflineStub::new(embed_dim, size).with_classes(classes);
    Ok(match provider {
        ProviderChoice::Stub => stub,
        ProviderChoice::SemanticStub => {
            let k = semantic_classes
                .ok_or_else(|| Error::Config("--semantic-classes required for semantic-stub".into()))?;
            stub.with_embedding(StubEmbedding::Semantic { classes: k })
        }
        ProviderChoice::RandomProj => stub.with_embedding(StubEmbedding::RandomProjection { seed }),
        ProviderChoice::Http => {
            return Err(Error::Usage("http provider is constructed separately".into()))
        }
    })
}

fn load_reference_images(
    images: &Option<PathBuf>,
    labels: &Option<PathBuf>,
    count: usize,
    size: usize,
) -> Result<Vec<ContextImage>> {
    match images {
        Some(path) => {
            let labels_path = labels.clone().ok_or_else(|| {
                Error::Config("--reference-labels must accompany --reference-images".into())
            })?;
            let ds = load_idx(path, &labels_path)?;
            let take = count.min(ds.len());
            let [c, h, w] = ds.image_shape();
            let stride = c * h * w;
            Ok((0..take)
                .map(|i| {
                    ContextImage::from_unit_floats(
                        h,
                        w,
                        &ds.images.data()[i * stride..(i + 1) * stride],
                    )
                })
                .collect())
        }
        None => {
            // synthetic neutral references keyed by the size
            Ok((0..count.max(1))
                .map(|i| {
                    let mut rng = RngStream::named(i as u64, "reference");
                    let vals: Vec<f64> = (0..size * size).map(|_| rng.uniform()).collect();
                    ContextImage::from_unit_floats(size, size, &vals)
                })
                .collect())
        }
    }
}

#[allow(clippy::too_many_arguments)]
fn cmd_gen_context(
    out: &Path,
    provider: ProviderChoice,
    classes: Vec<String>,
    per_class: usize,
    size: usize,
    seed: u64,
    requirements: &str,
    reference_images: &Option<PathBuf>,
    reference_labels: &Option<PathBuf>,
    reference_count: usize,
    http: &EndpointArgs,
) -> Result<()> {
    let references = load_reference_images(reference_images, reference_labels, reference_count, size)?;
    let plan = GenerationPlan {
        requirements: requirements.to_string(),
        reference_images: references,
        classes: classes.clone(),
        per_class,
        image_size: size,
    };
    let mut rng = RngStream::named(seed, "gen-context");
    let bundle = match provider {
        ProviderChoice::Http => {
            let services = HttpProvider::new(http.endpoint()?)?;
            generate_context(&services, &plan, &mut rng)?
        }
        _ => {
            let services = stub_for(ProviderChoice::Stub, 0, size, classes, None, seed)?;
            generate_context(&services, &plan, &mut rng)?
        }
    };
    write_context_bundle(&bundle, out)?;
    println!(
        "wrote bundle: {} images at {}, embeddings pending",
        bundle.m_total,
        out.display()
    );
    Ok(())
}

#[allow(clippy::too_many_arguments)]
fn cmd_embed(
    bundle_dir: &Path,
    provider: ProviderChoice,
    embed_dim: usize,
    batch_size: usize,
    semantic_classes: Option<usize>,
    seed: u64,
    http: &EndpointArgs,
) -> Result<()> {
    let bundle = load_context_bundle(bundle_dir)?;
    let filled = match provider {
        ProviderChoice::Http => {
            let services = HttpProvider::new(http.endpoint()?)?;
            embed_bundle(&services, &bundle, batch_size)?
        }
        choice => {
            let classes = bundle.manifest.classes.clone();
            let size = bundle.images.as_ref().map_or(28, |s| s.h);
            let stub = stub_for(choice, embed_dim, size, classes, semantic_classes, seed)?;
            embed_bundle(&stub, &bundle, batch_size)?
        }
    };
    write_context_bundle(&filled, bundle_dir)?;
    println!(
        "embedded {} images into d={} at {}",
        filled.m_total,
        filled.d,
        bundle_dir.display()
    );
    Ok(())
}

struct PreparedRun {
    cfg: RunConfig,
    preset: ArchPreset,
    dataset: Dataset,
    bundle: ContextBundle,
    out_dir: PathBuf,
}

fn prepare_run(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<PreparedRun> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(s) = seed {
        cfg.train.seed = s;
        cfg.seeds = vec![s];
    } else {
        cfg.train.seed = cfg.seeds[0];
    }
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    let preset = cfg.preset()?;
    let dataset = cfg.load_train_dataset()?;
    let bundle = load_context_bundle(&cfg.bundle_dir)?;
    let out_dir = cfg.out_dir.clone();
    std::fs::create_dir_all(out_dir.join("checkpoints"))?;
    std::fs::create_dir_all(out_dir.join("reports"))?;
    std::fs::write(
        out_dir.join("config.json"),
        serde_json::to_string_pretty(&cfg)?,
    )?;
    Ok(PreparedRun {
        cfg,
        preset,
        dataset,
        bundle,
        out_dir,
    })
}

fn cmd_train(config_path: &Path, seed: Option<u64>, out: Option<PathBuf>) -> Result<()> {
    let run = prepare_run(config_path, seed, out)?;
    let start = std::time::Instant::now();
    let mut net = build_network(&run.preset, run.dataset.k, run.cfg.train.seed)?;
    let mut report = train(
        &mut net,
        &run.dataset,
        &run.bundle,
        &run.cfg.kernel,
        &run.cfg.train,
    )?;
    let ckpt_rel = "checkpoints/best.ckpt";
    save_checkpoint(&net, &run.out_dir.join(ckpt_rel))?;
    report.checkpoint = Some(ckpt_rel.to_string());
    std::fs::write(
        run.out_dir.join("reports/train_report.json"),
        serde_json::to_string_pretty(&report)?,
    )?;
    std::fs::write(
        run.out_dir.join("run_meta.json"),
        serde_json::to_string_pretty(&serde_json::json!({
            "command": "train",
            "wall_time_s": start.elapsed().as_secs_f64(),
        }))?,
    )?;
    println!(
        "trained {} epochs (best epoch {}, val NLL {:.6}); report at {}",
        report.stopped_epoch,
        report.best_epoch,
        report.best_val_nll,
        run.out_dir.join("reports/train_report.json").display()
    );
    Ok(())
}

fn cmd_hpo(
    config_path: &Path,
    trials: Option<usize>,
    seed: Option<u64>,
    out: Option<PathBuf>,
) -> Result<()> {
    let run = prepare_run(config_path, seed, out)?;
    let mut space = SearchSpace::default();
    if let Some(t) = trials {
        space.trials = t;
    }
    let outcome = random_search(
        &space,
        &run.cfg.train,
        &run.cfg.kernel,
        &run.preset,
        run.dataset.k,
        &run.dataset,
        &run.bundle,
        run.cfg.train.seed,
    )?;
    write_trials_csv(&outcome.trials, &run.out_dir.join("trials.csv"))?;
    let best = serde_json::json!({
        "best_trial": outcome.best_trial,
        "weight_decay": outcome.best_train.weight_decay,
        "tau1": outcome.best_kernel.tau1,
        "tau2": outcome.best_kernel.tau2,
    });
    std::fs::write(
        run.out_dir.join("reports/hpo_best.json"),
        serde_json::to_string_pretty(&best)?,
    )?;
    println!(
        "searched {} trials; best trial {} (lambda={:e}, tau1={:e}, tau2={:e})",
        outcome.trials.len(),
        outcome.best_trial,
        outcome.best_train.weight_decay,
        outcome.best_kernel.tau1,
        outcome.best_kernel.tau2
    );
    Ok(())
}

fn load_run_dir(run_dir: &Path) -> Result<(RunConfig, Network)> {
    let cfg = RunConfig::load(&run_dir.join("config.json"))?;
    let net = load_checkpoint(&run_dir.join("checkpoints/best.ckpt"))?;
    Ok((cfg, net))
}

fn eval_report(
    cfg: &RunConfig,
    net: &Network,
    test: &Dataset,
    seed: u64,
    ood_sets: &[(String, Tensor)],
) -> Result<MetricsReport> {
    let mut rng = RngStream::named(seed, "eval");
    let pb = predictive(net, &test.images, cfg.s_eval, &mut rng, true)?;
    let mut auroc_map = BTreeMap::new();
    for (name, ood_inputs) in ood_sets {
        let mut ood_rng = RngStream::named(seed ^ 0xacc0, "eval-ood");
        let pb_ood = predictive(net, ood_inputs, cfg.s_eval, &mut ood_rng, true)?;
        let mut scores = BTreeMap::new();
        for method in OodScore::ALL {
            let s_in = ood_scores(&pb, method)?;
            let s_ood = ood_scores(&pb_ood, method)?;
            scores.insert(method.name().to_string(), auroc(&s_in, &s_ood)?);
        }
        auroc_map.insert(name.clone(), scores);
    }
    let report = MetricsReport {
        dataset: test.name.clone(),
        method: "vlm_fs_eb".into(),
        acc: accuracy(&pb, &test.labels)?,
        nll: nll(&pb, &test.labels)?,
        ece: ece(&pb, &test.labels, 15)?,
        auroc: auroc_map,
        n: test.len(),
        k: test.k,
        s_eval: cfg.s_eval,
        seed,
    };
    report.validate()?;
    Ok(report)
}

fn cmd_eval(run_dir: &Path, seed: Option<u64>) -> Result<()> {
    let (cfg, net) = load_run_dir(run_dir)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let test = cfg.load_test_dataset()?;
    let report = eval_report(&cfg, &net, &test, seed, &[])?;
    let json_path = run_dir.join("reports/eval_report.json");
    std::fs::create_dir_all(run_dir.join("reports"))?;
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    emit_report(
        std::slice::from_ref(&report),
        ReportFormat::Csv,
        &run_dir.join("reports/eval_report.csv"),
    )?;
    println!(
        "acc {:.4}  nll {:.4}  ece {:.4}  (n={}, S={}); report at {}",
        report.acc,
        report.nll,
        report.ece,
        report.n,
        report.s_eval,
        json_path.display()
    );
    Ok(())
}

fn uniform_noise_like(test: &Dataset, seed: u64, count: usize) -> Tensor {
    let [c, h, w] = test.image_shape();
    let mut rng = RngStream::named(seed, "ood-noise");
    let n = count.min(test.len()).max(1);
    Tensor::new(
        vec![n, c, h, w],
        (0..n * c * h * w).map(|_| rng.uniform()).collect(),
    )
    .expect("shape consistent")
}

fn cmd_ood(run_dir: &Path, ood: &str, seed: Option<u64>) -> Result<()> {
    let (cfg, net) = load_run_dir(run_dir)?;
    let seed = seed.unwrap_or(cfg.seeds[0]);
    let test = cfg.load_test_dataset()?;
    let (name, ood_inputs) = match ood {
        "noise" => (
            "noise".to_string(),
            uniform_noise_like(&test, seed, 1000),
        ),
        "disjoint" => match &cfg.dataset {
            DatasetConfig::Synth { spec } => {
                let shifted = SynthSpec {
                    ood: crate::data::OodKind::DisjointFamily,
                    seed: spec.seed.wrapping_add(0x00d),
                    ..spec.clone()
                };
                let (_, ood_ds) = synth_dataset(&shifted)?;
                ("disjoint".to_string(), ood_ds.images)
            }
            _ => {
                return Err(Error::Config(
                    "--ood disjoint requires a synth dataset".into(),
                ))
            }
        },
        path => {
            let images = PathBuf::from(path);
            if !images.exists() {
                return Err(Error::Config(format!(
                    "--ood must be 'noise', 'disjoint', or an IDX images path; {path} not found"
                )));
            }
            // header-only load: reuse load_idx against a labels file if the
            // sibling naming convention holds, else synthesize labels
            let labels = images.with_extension("labels.idx");
            let ds = if labels.exists() {
                load_idx(&images, &labels)?
            } else {
                return Err(Error::Config(format!(
                    "expected labels file {} next to OOD images",
                    labels.display()
                )));
            };
            (
                images
                    .file_stem()
                    .map(|s| s.to_string_lossy().into_owned())
                    .unwrap_or_else(|| "idx".into()),
                ds.images,
            )
        }
    };
    let report = eval_report(&cfg, &net, &test, seed, &[(name, ood_inputs)])?;
    std::fs::create_dir_all(run_dir.join("reports"))?;
    let json_path = run_dir.join("reports/ood_report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&report)?)?;
    emit_report(
        std::slice::from_ref(&report),
        ReportFormat::Csv,
        &run_dir.join("reports/ood_report.csv"),
    )?;
    for (set, scores) in &report.auroc {
        for (score, v) in scores {
            println!("auroc[{set}][{score}] = {v:.4}");
        }
    }
    println!("report at {}", json_path.display());
    Ok(())
}

/// The three ablation arms: context source x embedding source.
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum AblationVariant {
    /// Generated context points with semantic embeddings.
    VlmVlm,
    /// Context drawn from the training set with semantic embeddings.
    VlmRand,
    /// Generated context points with random-projection embeddings.
    RandVlm,
}

impl AblationVariant {
    pub const ALL: [AblationVariant; 3] = [
        AblationVariant::VlmVlm,
        AblationVariant::VlmRand,
        AblationVariant::RandVlm,
    ];

    pub fn name(&self) -> &'static str {
        match self {
            AblationVariant::VlmVlm => "vlm_vlm",
            AblationVariant::VlmRand => "vlm_rand",
            AblationVariant::RandVlm => "rand_vlm",
        }
    }
}

/// Build the context bundle for one ablation arm of a synth experiment.
pub fn ablation_bundle(
    variant: AblationVariant,
    spec: &SynthSpec,
    train_ds: &Dataset,
    m_total: usize,
    embed_dim: usize,
    seed: u64,
) -> Result<ContextBundle> {
    let classes: Vec<String> = (0..spec.classes).map(|c| format!("class-{c}")).collect();
    let size = spec.size;
    let embedding = match variant {
        AblationVariant::VlmVlm | AblationVariant::VlmRand => StubEmbedding::Semantic {
            classes: spec.classes,
        },
        AblationVariant::RandVlm => StubEmbedding::RandomProjection { seed },
    };
    let stub = OfflineStub::new(embed_dim, size)
        .with_classes(classes.clone())
        .with_embedding(embedding);

    let image_bundle = match variant {
        AblationVariant::VlmVlm | AblationVariant::RandVlm => {
            // generated context points
            let per_class = m_total.div_ceil(spec.classes);
            let references = vec![ContextImage::from_unit_floats(
                size,
                size,
                &train_ds.images.data()[..size * size],
            )];
            let plan = GenerationPlan {
                requirements: "match the training distribution".into(),
                reference_images: references,
                classes,
                per_class,
                image_size: size,
            };
            let mut rng = RngStream::named(seed, "ablate-gen");
            generate_context(&stub, &plan, &mut rng)?
        }
        AblationVariant::VlmRand => {
            // context sampled from the training set itself
            let mut rng = RngStream::named(seed, "ablate-sample");
            let idx = rng.sample_without_replacement(train_ds.len(), m_total.min(train_ds.len()));
            let [c, h, w] = train_ds.image_shape();
            let stride = c * h * w;
            let imgs: Vec<ContextImage> = idx
                .iter()
                .map(|i| {
                    ContextImage::from_unit_floats(
                        h,
                        w,
                        &train_ds.images.data()[i * stride..(i + 1) * stride],
                    )
                })
                .collect();
            let set = crate::context::ImageSet::from_images(&imgs)?;
            let m = set.len();
            ContextBundle::new(
                Some(set),
                crate::context::Embeddings {
                    n: m,
                    d: 0,
                    data: Vec::new(),
                },
                stub.provider_info(),
                vec![],
            )?
        }
    };
    embed_bundle(&stub, &image_bundle, 64)
}

/// One ablation arm: build its bundle, train, evaluate OOD AUROC.
pub fn run_ablation_variant(
    variant: AblationVariant,
    cfg: &RunConfig,
    seed: u64,
) -> Result<MetricsReport> {
    let spec = match &cfg.dataset {
        DatasetConfig::Synth { spec } => spec.clone(),
        _ => return Err(Error::Config("ablate requires a synth dataset".into())),
    };
    let preset = cfg.preset()?;
    let mut train_cfg = cfg.train.clone();
    train_cfg.seed = seed;
    let run_cfg = RunConfig {
        seeds: vec![seed],
        train: train_cfg,
        ..cfg.clone()
    };
    let dataset = run_cfg.load_train_dataset()?;
    let bundle = ablation_bundle(
        variant,
        &spec,
        &dataset,
        (run_cfg.train.context_batch * 4).max(64),
        64,
        seed,
    )?;
    let mut net = build_network(&preset, dataset.k, seed)?;
    train(&mut net, &dataset, &bundle, &run_cfg.kernel, &run_cfg.train)?;

    let test = run_cfg.load_test_dataset()?;
    let ood_spec = SynthSpec {
        seed: spec.seed.wrapping_add(0x00d),
        ..spec.clone()
    };
    let (_, ood_ds) = synth_dataset(&ood_spec)?;
    let mut report = eval_report(
        &run_cfg,
        &net,
        &test,
        seed,
        &[("shifted".to_string(), ood_ds.images)],
    )?;
    report.method = variant.name().to_string();
    Ok(report)
}

fn cmd_ablate(config_path: &Path, out: Option<PathBuf>, seeds: Vec<u64>) -> Result<()> {
    let mut cfg = RunConfig::load(config_path)?;
    if let Some(dir) = out {
        cfg.out_dir = dir;
    }
    if !seeds.is_empty() {
        cfg.seeds = seeds;
    }
    std::fs::create_dir_all(cfg.out_dir.join("reports"))?;
    let mut all_reports = Vec::new();
    for variant in AblationVariant::ALL {
        for &seed in &cfg.seeds {
            let report = run_ablation_variant(variant, &cfg, seed)?;
            println!(
                "{} seed {}: acc {:.4}, auroc[msp] {:.4}",
                variant.name(),
                seed,
                report.acc,
                report.auroc["shifted"]["msp"]
            );
            all_reports.push(report);
        }
    }
    let json_path = cfg.out_dir.join("reports/ablate_report.json");
    std::fs::write(&json_path, serde_json::to_string_pretty(&all_reports)?)?;
    emit_report(
        &all_reports,
        ReportFormat::Csv,
        &cfg.out_dir.join("reports/ablate_report.csv"),
    )?;
    println!("ablation table at {}", json_path.display());
    Ok(())
}

// ---------------------------------------------------------------------------
// Entry point
// ---------------------------------------------------------------------------

/// Parse and run; returns the process exit code.
pub fn run_cli(argv: &[String]) -> i32 {
    let cli = match Cli::try_parse_from(argv) {
        Ok(cli) => cli,
        Err(e) => {
            // clap reports both parse failures and --help through errors
            let _ = e.print();
            return if e.use_stderr() { 2 } else { 0 };
        }
    };
    let result = match &cli.command {
        Command::GenContext {
            out,
            provider,
            classes,
            per_class,
            size,
            seed,
            requirements,
            reference_images,
            reference_labels,
            reference_count,
            http,
        } => cmd_gen_context(
            out,
            *provider,
            classes.clone(),
            *per_class,
            *size,
            *seed,
            requirements,
            reference_images,
            reference_labels,
            *reference_count,
            http,
        ),
        Command::Embed {
            bundle,
            provider,
            embed_dim,
            batch_size,
            semantic_classes,
            seed,
            http,
        } => cmd_embed(
            bundle,
            *provider,
            *embed_dim,
            *batch_size,
            *semantic_classes,
            *seed,
            http,
        ),
        Command::Train { config, seed, out } => cmd_train(config, *seed, out.clone()),
        Command::Hpo {
            config,
            trials,
            seed,
            out,
        } => cmd_hpo(config, *trials, *seed, out.clone()),
        Command::Eval { run, seed } => cmd_eval(run, *seed),
        Command::Ood { run, ood, seed } => cmd_ood(run, ood, *seed),
        Command::Ablate { config, out, seeds } => cmd_ablate(config, out.clone(), seeds.clone()),
    };
    match result {
        Ok(()) => 0,
        Err(e) => {
            eprintln!("error: {e}");
            e.exit_code()
        }
    }
}
