use fseb::nn::*;
use fseb::prior::KernelConfig;
use fseb::rng::RngStream;
use fseb::tensor::{Graph, RunMode, Tensor};

fn main() {
    let mut rng = RngStream::from_seed(0);
    let net = build_network(&ArchPreset::mnist_cnn(), 10, 0).unwrap();
    let batch = Tensor::new(vec![160, 1, 28, 28], (0..160*784).map(|i| (i % 251) as f64 / 251.0).collect()).unwrap();
    let labels: Vec<usize> = (0..160).map(|i| i % 10).collect();
    let _km = KernelConfig { tau1: 1e-2, tau2: 10.0, normalize_embeddings: false };

    // manual forward with per-stage timing (mirrors the layer stack)
    for round in 0..3 {
        let mut g = Graph::new();
        let params = net.register_params(&mut g).unwrap();
        let x0 = g.leaf(&batch).unwrap();
        let t = std::time::Instant::now();
        let c1 = g.conv2d(x0, params[0]).unwrap();
        let t_conv1 = t.elapsed(); let t = std::time::Instant::now();
        let b1 = g.add_bias(c1, params[1]).unwrap();
        let r1 = g.relu(b1).unwrap();
        let p1 = g.maxpool2(r1).unwrap();
        let d1 = g.dropout(p1, 0.5, RunMode::Train, &mut rng).unwrap();
        let t_block1 = t.elapsed(); let t = std::time::Instant::now();
        let c2 = g.conv2d(d1, params[2]).unwrap();
        let t_conv2 = t.elapsed(); let t = std::time::Instant::now();
        let b2 = g.add_bias(c2, params[3]).unwrap();
        let r2 = g.relu(b2).unwrap();
        let p2 = g.maxpool2(r2).unwrap();
        let d2 = g.dropout(p2, 0.5, RunMode::Train, &mut rng).unwrap();
        let fl = g.flatten(d2).unwrap();
        let t_block2 = t.elapsed(); let t = std::time::Instant::now();
        let m1 = g.matmul(fl, params[4]).unwrap();
        let b3 = g.add_bias(m1, params[5]).unwrap();
        let r3 = g.relu(b3).unwrap();
        let d3 = g.dropout(r3, 0.5, RunMode::Train, &mut rng).unwrap();
        let m2 = g.matmul(d3, params[6]).unwrap();
        let logits = g.add_bias(m2, params[7]).unwrap();
        let t_dense = t.elapsed(); let t = std::time::Instant::now();
        let loss = g.softmax_cross_entropy(logits, &labels).unwrap();
        let t_xent = t.elapsed(); let t = std::time::Instant::now();
        g.backward(loss).unwrap();
        let t_bwd = t.elapsed();
        if round == 2 {
            println!("conv1 {:>5.1}ms | block1 {:>5.1}ms | conv2 {:>5.1}ms | block2 {:>5.1}ms | dense {:>5.1}ms | xent {:>5.1}ms | backward {:>6.1}ms",
                t_conv1.as_secs_f64()*1e3, t_block1.as_secs_f64()*1e3, t_conv2.as_secs_f64()*1e3,
                t_block2.as_secs_f64()*1e3, t_dense.as_secs_f64()*1e3, t_xent.as_secs_f64()*1e3, t_bwd.as_secs_f64()*1e3);
        }
    }
}
