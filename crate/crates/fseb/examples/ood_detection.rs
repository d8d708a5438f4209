//! OOD detection with MC-dropout uncertainty: train on stripes, score
//! noise and disjoint-family images with MSP, predictive entropy, and
//! expected entropy, and report AUROC for each.

use fseb::context::{
    embed_bundle, generate_context, ContextImage, GenerationPlan, OfflineStub, StubEmbedding,
};
use fseb::data::{synth_dataset, GeneratorKind, OodKind, SynthSpec};
use fseb::eval::{auroc, ood_scores, predictive, OodScore};
use fseb::nn::{build_network, ArchPreset};
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::train::{train, TrainConfig};

fn main() {
    let spec = SynthSpec {
        generator: GeneratorKind::Stripes,
        size: 12,
        classes: 3,
        per_class: 50,
        noise_level: 0.05,
        ood: OodKind::DisjointFamily,
        ood_count: 80,
        seed: 21,
    };
    let (dataset, ood_blobs) = synth_dataset(&spec).unwrap();
    let noise_spec = SynthSpec {
        ood: OodKind::Noise,
        seed: 22,
        ..spec.clone()
    };
    let (_, ood_noise) = synth_dataset(&noise_spec).unwrap();

    let classes: Vec<String> = (0..3).map(|c| format!("class-{c}")).collect();
    let stub = OfflineStub::new(24, 12)
        .with_classes(classes.clone())
        .with_embedding(StubEmbedding::Semantic { classes: 3 });
    let plan = GenerationPlan {
        requirements: "match the training distribution".into(),
        reference_images: vec![ContextImage::from_unit_floats(
            12,
            12,
            &dataset.images.data()[..144],
        )],
        classes,
        per_class: 24,
        image_size: 12,
    };
    let mut rng = RngStream::from_seed(2);
    let bundle = embed_bundle(&stub, &generate_context(&stub, &plan, &mut rng).unwrap(), 16).unwrap();

    let mut net = build_network(&ArchPreset::desk_mlp_custom([1, 12, 12], 32, 0.2), 3, 5).unwrap();
    let cfg = TrainConfig {
        batch_size: 32,
        lr: 3e-3,
        weight_decay: 1e-4,
        context_batch: 16,
        max_epochs: 25,
        patience: 8,
        val_fraction: 0.15,
        seed: 5,
        val_mc_samples: 8,
        ..TrainConfig::default()
    };
    let km = KernelConfig {
        tau1: 1.0,
        tau2: 0.1,
        normalize_embeddings: false,
    };
    train(&mut net, &dataset, &bundle, &km, &cfg).unwrap();

    // in-distribution scores come from a held-out set
    let (test, _) = synth_dataset(&SynthSpec { seed: 2021, ..spec }).unwrap();
    let mut eval_rng = RngStream::named(5, "eval");
    let pb_in = predictive(&net, &test.images, 32, &mut eval_rng, true).unwrap();
    for (name, images) in [("noise", &ood_noise.images), ("blobs", &ood_blobs.images)] {
        let pb_out = predictive(&net, images, 32, &mut eval_rng, true).unwrap();
        for method in OodScore::ALL {
            let auc = auroc(
                &ood_scores(&pb_in, method).unwrap(),
                &ood_scores(&pb_out, method).unwrap(),
            )
            .unwrap();
            println!("auroc[{name}][{}] = {auc:.4}", method.name());
        }
    }
}
