//! Randomized grid search over (lambda, tau1, tau2) on a desk-scale
//! synthetic task, selecting the configuration with minimum validation NLL.

use fseb::context::{
    embed_bundle, generate_context, ContextImage, GenerationPlan, OfflineStub, StubEmbedding,
};
use fseb::data::{synth_dataset, GeneratorKind, OodKind, SynthSpec};
use fseb::nn::ArchPreset;
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::train::{random_search, SearchSpace, TrainConfig, TrialStatus};

fn main() {
    let (dataset, _) = synth_dataset(&SynthSpec {
        generator: GeneratorKind::Stripes,
        size: 10,
        classes: 3,
        per_class: 30,
        noise_level: 0.05,
        ood: OodKind::Noise,
        ood_count: 10,
        seed: 31,
    })
    .unwrap();

    let classes: Vec<String> = (0..3).map(|c| format!("class-{c}")).collect();
    let stub = OfflineStub::new(16, 10)
        .with_classes(classes.clone())
        .with_embedding(StubEmbedding::Semantic { classes: 3 });
    let plan = GenerationPlan {
        requirements: String::new(),
        reference_images: vec![ContextImage::from_unit_floats(
            10,
            10,
            &dataset.images.data()[..100],
        )],
        classes,
        per_class: 16,
        image_size: 10,
    };
    let mut rng = RngStream::from_seed(1);
    let bundle = embed_bundle(&stub, &generate_context(&stub, &plan, &mut rng).unwrap(), 16).unwrap();

    // a reduced grid keeps the example fast; the full Table-style grids are
    // the SearchSpace default
    let space = SearchSpace {
        lambda_grid: vec![1e-5, 1e-4, 1e-3],
        tau1_grid: vec![1e-2, 1e-1, 1.0, 10.0],
        tau2_grid: vec![1e-2, 1e-1, 1.0],
        trials: 12,
    };
    let base = TrainConfig {
        batch_size: 32,
        lr: 3e-3,
        context_batch: 12,
        max_epochs: 8,
        patience: 4,
        val_fraction: 0.2,
        seed: 13,
        val_mc_samples: 4,
        ..TrainConfig::default()
    };
    let preset = ArchPreset::desk_mlp_custom([1, 10, 10], 24, 0.2);
    let outcome = random_search(
        &space,
        &base,
        &KernelConfig::default(),
        &preset,
        3,
        &dataset,
        &bundle,
        17,
    )
    .unwrap();

    println!("trial  lambda    tau1     tau2     val_nll");
    for row in &outcome.trials {
        let nll = row
            .val_nll
            .map_or("failed".to_string(), |v| format!("{v:.4}"));
        let mark = if row.status == TrialStatus::Ok { " " } else { "!" };
        println!(
            "{mark}{:4}   {:<8.0e} {:<8.0e} {:<8.0e} {nll}",
            row.trial, row.lambda, row.tau1, row.tau2
        );
    }
    println!(
        "\nbest trial {}: lambda={:e}, tau1={:e}, tau2={:e}",
        outcome.best_trial,
        outcome.best_train.weight_decay,
        outcome.best_kernel.tau1,
        outcome.best_kernel.tau2
    );
}
