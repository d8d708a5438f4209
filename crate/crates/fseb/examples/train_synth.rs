//! Train a small dropout network on synthetic striped images with the
//! function-space prior built from semantic stub embeddings, then report
//! in-distribution metrics.

use fseb::context::{
    embed_bundle, generate_context, ContextImage, GenerationPlan, OfflineStub, StubEmbedding,
};
use fseb::data::{synth_dataset, GeneratorKind, OodKind, SynthSpec};
use fseb::eval::{accuracy, ece, nll, predictive};
use fseb::nn::{build_network, ArchPreset};
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::train::{train, TrainConfig};

fn main() {
    let spec = SynthSpec {
        generator: GeneratorKind::Stripes,
        size: 12,
        classes: 3,
        per_class: 60,
        noise_level: 0.05,
        ood: OodKind::Noise,
        ood_count: 50,
        seed: 9,
    };
    let (dataset, _) = synth_dataset(&spec).unwrap();
    println!("dataset: {} samples, K = {}", dataset.len(), dataset.k);

    // context bundle from the generation stub, embedded semantically
    let classes: Vec<String> = (0..3).map(|c| format!("class-{c}")).collect();
    let stub = OfflineStub::new(24, 12)
        .with_classes(classes.clone())
        .with_embedding(StubEmbedding::Semantic { classes: 3 });
    let reference = ContextImage::from_unit_floats(12, 12, &dataset.images.data()[..144]);
    let plan = GenerationPlan {
        requirements: "match the training distribution".into(),
        reference_images: vec![reference],
        classes,
        per_class: 24,
        image_size: 12,
    };
    let mut rng = RngStream::from_seed(4);
    let bundle = embed_bundle(&stub, &generate_context(&stub, &plan, &mut rng).unwrap(), 16).unwrap();
    println!("context bundle: {} points, d = {}", bundle.m_total, bundle.d);

    let preset = ArchPreset::desk_mlp_custom([1, 12, 12], 32, 0.2);
    let mut net = build_network(&preset, 3, 11).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        lr: 3e-3,
        weight_decay: 1e-4,
        context_batch: 16,
        max_epochs: 30,
        patience: 8,
        val_fraction: 0.15,
        seed: 11,
        val_mc_samples: 8,
        ..TrainConfig::default()
    };
    let km = KernelConfig {
        tau1: 1.0,
        tau2: 0.1,
        normalize_embeddings: false,
    };
    let report = train(&mut net, &dataset, &bundle, &km, &cfg).unwrap();
    println!(
        "stopped at epoch {} (best epoch {}, val NLL {:.4})",
        report.stopped_epoch, report.best_epoch, report.best_val_nll
    );
    for e in report.epochs.iter().take(3) {
        println!(
            "  epoch {}: loss {:.2} = data {:.2} - prior {:.2} + l2 {:.4}; val NLL {:.4}",
            e.epoch, e.train_loss, e.data_term, e.prior_term, e.l2_term, e.val_nll
        );
    }

    // held-out evaluation
    let (test, _) = synth_dataset(&SynthSpec { seed: 1009, ..spec }).unwrap();
    let pb = predictive(&net, &test.images, 16, &mut RngStream::named(11, "eval"), false).unwrap();
    println!(
        "test: acc {:.4}  nll {:.4}  ece {:.4}",
        accuracy(&pb, &test.labels).unwrap(),
        nll(&pb, &test.labels).unwrap(),
        ece(&pb, &test.labels, 15).unwrap()
    );
}
