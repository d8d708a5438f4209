// full dry run of the scaled MNIST experiment
use fseb::context::*;
use fseb::data::*;
use fseb::eval::*;
use fseb::nn::*;
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::tensor::Tensor;
use fseb::train::*;

fn main() {
    let t0 = std::time::Instant::now();
    let dir = std::path::Path::new("data/mnist");
    let full = load_idx(
        &dir.join("train-images-idx3-ubyte.gz"),
        &dir.join("train-labels-idx1-ubyte.gz"),
    )
    .unwrap();
    let ds = subsample(&full, 5000.0 / full.len() as f64, 0).unwrap();
    drop(full);
    let classes: Vec<String> = (0..10).map(|i| format!("digit {i}")).collect();
    let stub = OfflineStub::new(64, 28).with_classes(classes.clone());
    let refs = vec![ContextImage::from_unit_floats(28, 28, &ds.images.data()[..784])];
    let plan = GenerationPlan {
        requirements: "same visual style".into(),
        reference_images: refs,
        classes,
        per_class: 50,
        image_size: 28,
    };
    let mut rng = RngStream::from_seed(1);
    let bundle = embed_bundle(&stub, &generate_context(&stub, &plan, &mut rng).unwrap(), 64).unwrap();
    println!("setup {:.0}s", t0.elapsed().as_secs_f64());

    let mut net = build_network(&ArchPreset::mnist_cnn(), 10, 0).unwrap();
    let cfg = TrainConfig {
        weight_decay: 1.0,
        val_mc_samples: 4,
        ..TrainConfig::default()
    };
    let km = KernelConfig { tau1: 1e-2, tau2: 0.1, normalize_embeddings: false };
    let report = train(&mut net, &ds, &bundle, &km, &cfg).unwrap();
    for e in &report.epochs {
        println!(
            "epoch {} loss {:.1} val_nll {:.4}",
            e.epoch, e.train_loss, e.val_nll
        );
    }
    println!(
        "stopped {} best {} ({:.4}) after {:.0}s",
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
    let test = subsample(&test_full, 0.2, 1).unwrap();
    drop(test_full);
    let mut eval_rng = RngStream::named(0, "eval");
    let pb = predictive(&net, &test.images, 8, &mut eval_rng, false).unwrap();
    let acc = accuracy(&pb, &test.labels).unwrap();
    println!("test acc ({} samples): {:.4}", test.len(), acc);

    let noise = Tensor::new(
        vec![800, 1, 28, 28],
        (0..800 * 784).map(|_| eval_rng.uniform()).collect(),
    )
    .unwrap();
    let pb_noise = predictive(&net, &noise, 8, &mut eval_rng, false).unwrap();
    let auc = auroc(
        &ood_scores(&pb, OodScore::Msp).unwrap(),
        &ood_scores(&pb_noise, OodScore::Msp).unwrap(),
    )
    .unwrap();
    println!("msp auroc vs noise: {:.4}", auc);
    println!("total {:.0}s", t0.elapsed().as_secs_f64());
}
