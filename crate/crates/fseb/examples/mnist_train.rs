//! Full pipeline on MNIST-format IDX data: generate and embed a context
//! bundle with the offline stub, train the two-conv-block network, then
//! report test accuracy and OOD AUROC against uniform noise.
//!
//! Usage: cargo run --release --example mnist_train [DATA_DIR] [TRAIN_COUNT]
//! DATA_DIR defaults to data/mnist and must hold the four standard IDX
//! files (train/t10k images and labels, gzipped or raw).

use std::path::PathBuf;

use fseb::context::{
    embed_bundle, generate_context, ContextImage, GenerationPlan, OfflineStub,
};
use fseb::data::{load_idx, subsample};
use fseb::eval::{accuracy, auroc, ece, nll, ood_scores, predictive, OodScore};
use fseb::nn::{build_network, ArchPreset};
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::tensor::Tensor;
use fseb::train::{train, TrainConfig};

fn main() {
    let args: Vec<String> = std::env::args().collect();
    let dir = PathBuf::from(args.get(1).map_or("data/mnist", String::as_str));
    let train_count: usize = args.get(2).map_or(5000, |s| s.parse().expect("count"));

    let t0 = std::time::Instant::now();
    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
    )
    .expect("MNIST train files (see README for the fetch script)");
    let fraction = train_count as f64 / full.len() as f64;
    let dataset = subsample(&full, fraction, 0).unwrap();
    drop(full);
    println!("training on {} examples", dataset.len());

    let classes: Vec<String> = (0..10).map(|i| format!("digit {i}")).collect();
    let stub = OfflineStub::new(64, 28).with_classes(classes.clone());
    let plan = GenerationPlan {
        requirements: "maintain the same visual style".into(),
        reference_images: vec![ContextImage::from_unit_floats(
            28,
            28,
            &dataset.images.data()[..784],
        )],
        classes,
        per_class: 50,
        image_size: 28,
    };
    let mut rng = RngStream::from_seed(1);
    let bundle = embed_bundle(&stub, &generate_context(&stub, &plan, &mut rng).unwrap(), 64).unwrap();
    println!("context bundle: {} points, d = {}", bundle.m_total, bundle.d);

    let mut net = build_network(&ArchPreset::mnist_cnn(), 10, 0).unwrap();
    let cfg = TrainConfig {
        val_mc_samples: 6,
        ..TrainConfig::default()
    };
    let km = KernelConfig {
        tau1: 1e-2,
        tau2: 1.0,
        normalize_embeddings: false,
    };
    let report = train(&mut net, &dataset, &bundle, &km, &cfg).unwrap();
    println!(
        "stopped at epoch {} (best epoch {}, val NLL {:.4}) in {:.0}s",
        report.stopped_epoch,
        report.best_epoch,
        report.best_val_nll,
        t0.elapsed().as_secs_f64()
    );

    let test_full = load_idx(
        &dir.join("t10k-images-idx3-ubyte.gz"),
        &dir.join("t10k-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    let test = subsample(&test_full, 0.25, 1).unwrap();
    drop(test_full);
    let mut eval_rng = RngStream::named(0, "eval");
    let pb = predictive(&net, &test.images, 8, &mut eval_rng, true).unwrap();
    println!(
        "test ({} samples): acc {:.4}  nll {:.4}  ece {:.4}",
        test.len(),
        accuracy(&pb, &test.labels).unwrap(),
        nll(&pb, &test.labels).unwrap(),
        ece(&pb, &test.labels, 15).unwrap()
    );

    let noise = Tensor::new(
        vec![1000, 1, 28, 28],
        (0..1000 * 784).map(|_| eval_rng.uniform()).collect(),
    )
    .unwrap();
    let pb_noise = predictive(&net, &noise, 8, &mut eval_rng, true).unwrap();
    for method in OodScore::ALL {
        let auc = auroc(
            &ood_scores(&pb, method).unwrap(),
            &ood_scores(&pb_noise, method).unwrap(),
        )
        .unwrap();
        println!("auroc[noise][{}] = {auc:.4}", method.name());
    }
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
