//! Reverse-mode gradients checked against central finite differences on a
//! small conv/dense stack.

use fseb::nn::{build_network, ArchPreset};
use fseb::rng::RngStream;
use fseb::tensor::{rel_err, Graph, RunMode, Tensor};

fn loss_of(net: &fseb::nn::Network, batch: &Tensor, labels: &[usize]) -> f64 {
    let mut g = Graph::new();
    let params = net.register_params(&mut g).unwrap();
    let x = g.leaf(batch).unwrap();
    let logits = net
        .forward_with_params(&mut g, &params, x, RunMode::Off, &mut RngStream::from_seed(0))
        .unwrap();
    let loss = g.softmax_cross_entropy(logits, labels).unwrap();
    g.value(loss)[0]
}

fn main() {
    let preset = ArchPreset::desk_mlp_custom([1, 6, 6], 10, 0.0);
    let mut net = build_network(&preset, 3, 7).unwrap();
    let mut rng = RngStream::from_seed(1);
    let batch = Tensor::randn(vec![5, 1, 6, 6], 0.8, &mut rng);
    let labels = vec![0usize, 1, 2, 0, 1];

    // backward pass
    let mut g = Graph::new();
    let params = net.register_params(&mut g).unwrap();
    let x = g.leaf(&batch).unwrap();
    let logits = net
        .forward_with_params(&mut g, &params, x, RunMode::Off, &mut RngStream::from_seed(0))
        .unwrap();
    let loss = g.softmax_cross_entropy(logits, &labels).unwrap();
    g.backward(loss).unwrap();
    let grads: Vec<Vec<f64>> = params.iter().map(|id| g.grad(*id).unwrap().to_vec()).collect();

    // finite differences over every parameter
    let h = 1e-5;
    let mut worst = 0.0f64;
    for (pi, grad) in grads.iter().enumerate() {
        for (j, g) in grad.iter().enumerate() {
            let orig = net.params()[pi].data()[j];
            net.params_mut()[pi].data_mut()[j] = orig + h;
            let fp = loss_of(&net, &batch, &labels);
            net.params_mut()[pi].data_mut()[j] = orig - h;
            let fm = loss_of(&net, &batch, &labels);
            net.params_mut()[pi].data_mut()[j] = orig;
            let fd = (fp - fm) / (2.0 * h);
            worst = worst.max(rel_err(*g, fd));
        }
    }
    println!(
        "checked {} parameters; max relative error backward vs finite differences: {worst:.3e}",
        net.param_count()
    );
    assert!(worst <= 1e-4);
    println!("gradcheck passed");
}
