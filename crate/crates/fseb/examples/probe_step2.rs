use fseb::nn::*;
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::tensor::Tensor;
use fseb::train::*;

fn main() {
    let mut rng = RngStream::from_seed(0);
    let net = build_network(&ArchPreset::mnist_cnn(), 10, 0).unwrap();
    let batch = Tensor::new(vec![128, 1, 28, 28], (0..128*784).map(|i| (i % 251) as f64 / 251.0).collect()).unwrap();
    let labels: Vec<usize> = (0..128).map(|i| i % 10).collect();
    let ctx = Tensor::new(vec![32, 1, 28, 28], (0..32*784).map(|i| (i % 255) as f64 / 255.0).collect()).unwrap();
    let ctx_emb = Tensor::randn(vec![32, 64], 1.0, &mut rng);
    let km = KernelConfig { tau1: 1e-2, tau2: 0.1, normalize_embeddings: false };
    let cfg = TrainConfig::default();
    objective_step(&net, &batch, &labels, 4500, &ctx, &ctx_emb, &km, &cfg, &mut rng).unwrap();
    let t = std::time::Instant::now();
    for _ in 0..10 {
        objective_step(&net, &batch, &labels, 4500, &ctx, &ctx_emb, &km, &cfg, &mut rng).unwrap();
    }
    println!("objective_step mean: {:.0} ms", t.elapsed().as_secs_f64() * 100.0);
}
