//! Network definitions and forward evaluation under the dropout
//! variational family.
//!
//! Three presets are provided: `mnist_cnn` (two conv blocks of 32 and 64
//! filters, dense 128 head, dropout 0.5), `cifar_cnn` (six conv layers of
//! 32,32,64,64,128,128 filters with pooling after the second, fourth and
//! sixth, dense 128 head, configurable dropout), and `desk_mlp`, a small
//! flatten-dense net for fast property tests on synthetic images.

use std::io::{Read, Write};
use std::path::Path;

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::{Graph, NodeId, RunMode, Tensor};

#[derive(Clone, Debug, PartialEq)]
pub enum LayerSpec {
    Conv3x3 { filters: usize },
    Dense { units: usize },
    Relu,
    MaxPool2,
    Dropout { rate: f64 },
    Flatten,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub enum ArchKind {
    MnistCnn,
    CifarCnn,
    DeskMlp,
}

/// A named architecture together with the knobs the presets expose.
#[derive(Clone, Debug)]
pub struct ArchPreset {
    pub kind: ArchKind,
    /// (channels, height, width)
    pub input_shape: [usize; 3],
    pub dropout_rate: f64,
    /// Hidden width of the desk_mlp dense layer; unused by the CNNs.
    pub hidden: usize,
}

impl ArchPreset {
    pub fn mnist_cnn() -> Self {
        ArchPreset {
            kind: ArchKind::MnistCnn,
            input_shape: [1, 28, 28],
            dropout_rate: 0.5,
            hidden: 128,
        }
    }

    pub fn cifar_cnn(input_shape: [usize; 3], dropout_rate: f64) -> Self {
        ArchPreset {
            kind: ArchKind::CifarCnn,
            input_shape,
            dropout_rate,
            hidden: 128,
        }
    }

    /// Desk-scale MLP: flatten -> dense(hidden) -> relu -> dropout -> dense K.
    /// Not a benchmark architecture; intended for fast tests on small
    /// synthetic images.
    pub fn desk_mlp() -> Self {
        ArchPreset {
            kind: ArchKind::DeskMlp,
            input_shape: [1, 8, 8],
            dropout_rate: 0.2,
            hidden: 64,
        }
    }

    pub fn desk_mlp_custom(input_shape: [usize; 3], hidden: usize, dropout_rate: f64) -> Self {
        ArchPreset {
            kind: ArchKind::DeskMlp,
            input_shape,
            dropout_rate,
            hidden,
        }
    }

    /// Resolve a preset by name with its default shape and rate.
    pub fn parse(name: &str) -> Result<Self> {
        match name {
            "mnist_cnn" => Ok(ArchPreset::mnist_cnn()),
            "cifar_cnn" => Ok(ArchPreset::cifar_cnn([3, 32, 32], 0.4)),
            "desk_mlp" => Ok(ArchPreset::desk_mlp()),
            other => Err(Error::Config(format!("unknown preset '{other}'"))),
        }
    }

    pub fn name(&self) -> &'static str {
        match self.kind {
            ArchKind::MnistCnn => "mnist_cnn",
            ArchKind::CifarCnn => "cifar_cnn",
            ArchKind::DeskMlp => "desk_mlp",
        }
    }

    /// The resolved layer stack for `k` output classes.
    pub fn layer_specs(&self, k: usize) -> Vec<LayerSpec> {
        use LayerSpec::*;
        let r = self.dropout_rate;
        match self.kind {
            ArchKind::MnistCnn => vec![
                Conv3x3 { filters: 32 },
                Relu,
                MaxPool2,
                Dropout { rate: r },
                Conv3x3 { filters: 64 },
                Relu,
                MaxPool2,
                Dropout { rate: r },
                Flatten,
                Dense { units: 128 },
                Relu,
                Dropout { rate: r },
                Dense { units: k },
            ],
            ArchKind::CifarCnn => {
                let mut v = Vec::new();
                for (block, f) in [(0, 32), (1, 64), (2, 128)] {
                    let _ = block;
                    v.push(Conv3x3 { filters: f });
                    v.push(Relu);
                    v.push(Conv3x3 { filters: f });
                    v.push(Relu);
                    v.push(MaxPool2);
                    v.push(Dropout { rate: r });
                }
                v.push(Flatten);
                v.push(Dense { units: 128 });
                v.push(Relu);
                v.push(Dropout { rate: r });
                v.push(Dense { units: k });
                v
            }
            ArchKind::DeskMlp => {
                // hidden = 0 degenerates to the linear softmax model
                let mut v = vec![Flatten];
                if self.hidden > 0 {
                    v.push(Dense { units: self.hidden });
                    v.push(Relu);
                    v.push(Dropout { rate: r });
                }
                v.push(Dense { units: k });
                v
            }
        }
    }
}

/// Parameterized layer stack; holds the tensors theta that the dropout
/// variational family perturbs.
#[derive(Clone, Debug)]
pub struct Network {
    name: String,
    layers: Vec<LayerSpec>,
    input_shape: [usize; 3],
    k: usize,
    params: Vec<Tensor>,
}

enum ShapeState {
    Spatial(usize, usize, usize),
    Flat(usize),
}

impl Network {
    pub fn layers(&self) -> &[LayerSpec] {
        &self.layers
    }

    pub fn input_shape(&self) -> [usize; 3] {
        self.input_shape
    }

    pub fn class_count(&self) -> usize {
        self.k
    }

    pub fn name(&self) -> &str {
        &self.name
    }

    pub fn params(&self) -> &[Tensor] {
        &self.params
    }

    pub fn params_mut(&mut self) -> &mut [Tensor] {
        &mut self.params
    }

    pub fn param_count(&self) -> usize {
        self.params.iter().map(Tensor::numel).sum()
    }

    /// Sum of squares over all weights and biases.
    pub fn l2_norm_sq(&self) -> f64 {
        self.params
            .iter()
            .flat_map(|p| p.data().iter())
            .map(|v| v * v)
            .sum()
    }

    /// Register all parameters as graph leaves, in declaration order.
    pub fn register_params(&self, g: &mut Graph) -> Result<Vec<NodeId>> {
        self.params.iter().map(|p| g.leaf(p)).collect()
    }

    /// Forward pass over an already-registered input, wiring the supplied
    /// parameter leaves. Each call in `Train` or `EvalMc` mode realizes one
    /// dropout mask draw from `rng`.
    pub fn forward_with_params(
        &self,
        g: &mut Graph,
        params: &[NodeId],
        input: NodeId,
        mode: RunMode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        let shape = g.shape(input).to_vec();
        if shape.len() != 4
            || shape[1] != self.input_shape[0]
            || shape[2] != self.input_shape[1]
            || shape[3] != self.input_shape[2]
        {
            return Err(Error::Dim(format!(
                "forward: batch shape {:?} does not match input shape {:?}",
                shape, self.input_shape
            )));
        }
        let mut x = input;
        let mut pi = 0;
        for layer in &self.layers {
            match layer {
                LayerSpec::Conv3x3 { .. } => {
                    let w = params[pi];
                    let b = params[pi + 1];
                    pi += 2;
                    let y = g.conv2d(x, w)?;
                    x = g.add_bias(y, b)?;
                }
                LayerSpec::Dense { .. } => {
                    let w = params[pi];
                    let b = params[pi + 1];
                    pi += 2;
                    let y = g.matmul(x, w)?;
                    x = g.add_bias(y, b)?;
                }
                LayerSpec::Relu => x = g.relu(x)?,
                LayerSpec::MaxPool2 => x = g.maxpool2(x)?,
                LayerSpec::Dropout { rate } => x = g.dropout(x, *rate, mode, rng)?,
                LayerSpec::Flatten => x = g.flatten(x)?,
            }
        }
        Ok(x)
    }

    /// Convenience forward on a detached batch; builds a scratch graph.
    pub fn forward(&self, batch: &Tensor, mode: RunMode, rng: &mut RngStream) -> Result<Tensor> {
        let mut g = Graph::new();
        let input = g.leaf(batch)?;
        let params = self.register_params(&mut g)?;
        let out = self.forward_with_params(&mut g, &params, input, mode, rng)?;
        Ok(g.tensor(out))
    }
}

/// Build a network from a preset: He-normal weights, zero biases,
/// deterministic given `seed`.
pub fn build_network(preset: &ArchPreset, k: usize, seed: u64) -> Result<Network> {
    if k < 2 {
        return Err(Error::Config(format!("class count {k} < 2")));
    }
    let layers = preset.layer_specs(k);
    for l in &layers {
        if let LayerSpec::Dropout { rate } = l {
            if !(0.0..1.0).contains(rate) {
                return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
            }
        }
    }
    let mut rng = RngStream::named(seed, "init");
    let [c0, h0, w0] = preset.input_shape;
    let mut state = ShapeState::Spatial(c0, h0, w0);
    let mut params = Vec::new();
    for layer in &layers {
        match (layer, &state) {
            (LayerSpec::Conv3x3 { filters }, ShapeState::Spatial(c, h, w)) => {
                let fan_in = c * 9;
                let std = (2.0 / fan_in as f64).sqrt();
                params.push(Tensor::randn(vec![*filters, *c, 3, 3], std, &mut rng));
                params.push(Tensor::zeros(vec![*filters]));
                state = ShapeState::Spatial(*filters, *h, *w);
            }
            (LayerSpec::MaxPool2, ShapeState::Spatial(c, h, w)) => {
                if h % 2 != 0 || w % 2 != 0 {
                    return Err(Error::Config(format!(
                        "maxpool2 on odd extent {h}x{w}"
                    )));
                }
                state = ShapeState::Spatial(*c, h / 2, w / 2);
            }
            (LayerSpec::Flatten, ShapeState::Spatial(c, h, w)) => {
                state = ShapeState::Flat(c * h * w);
            }
            (LayerSpec::Dense { units }, ShapeState::Flat(n)) => {
                let std = (2.0 / *n as f64).sqrt();
                params.push(Tensor::randn(vec![*n, *units], std, &mut rng));
                params.push(Tensor::zeros(vec![*units]));
                state = ShapeState::Flat(*units);
            }
            (LayerSpec::Relu | LayerSpec::Dropout { .. }, _) => {}
            (l, _) => {
                return Err(Error::Config(format!(
                    "layer {:?} incompatible with current shape",
                    l
                )));
            }
        }
    }
    match state {
        ShapeState::Flat(n) if n == k => {}
        _ => {
            return Err(Error::Config(format!(
                "{}: final layer does not produce {k} logits",
                preset.name()
            )));
        }
    }
    Ok(Network {
        name: preset.name().to_string(),
        layers,
        input_shape: preset.input_shape,
        k,
        params,
    })
}

// ---------------------------------------------------------------------------
// Checkpoint format: little-endian binary.
//   magic "FSEB" | version u32 | C,H,W u32 x3 | K u32 | layer count u32
//   per layer: kind u8 | size u32 | rate f64
//   param count u32; per param: ndim u32 | dims u32... | data f64...
// ---------------------------------------------------------------------------

const CKPT_MAGIC: &[u8; 4] = b"FSEB";
const CKPT_VERSION: u32 = 1;

fn layer_code(l: &LayerSpec) -> (u8, u32, f64) {
    match l {
        LayerSpec::Conv3x3 { filters } => (0, *filters as u32, 0.0),
        LayerSpec::Dense { units } => (1, *units as u32, 0.0),
        LayerSpec::Relu => (2, 0, 0.0),
        LayerSpec::MaxPool2 => (3, 0, 0.0),
        LayerSpec::Dropout { rate } => (4, 0, *rate),
        LayerSpec::Flatten => (5, 0, 0.0),
    }
}

fn layer_from_code(code: u8, size: u32, rate: f64) -> Result<LayerSpec> {
    Ok(match code {
        0 => LayerSpec::Conv3x3 {
            filters: size as usize,
        },
        1 => LayerSpec::Dense {
            units: size as usize,
        },
        2 => LayerSpec::Relu,
        3 => LayerSpec::MaxPool2,
        4 => LayerSpec::Dropout { rate },
        5 => LayerSpec::Flatten,
        other => return Err(Error::Format(format!("unknown layer code {other}"))),
    })
}

pub fn save_checkpoint(net: &Network, path: &Path) -> Result<()> {
    let mut w = std::io::BufWriter::new(std::fs::File::create(path)?);
    w.write_all(CKPT_MAGIC)?;
    w.write_all(&CKPT_VERSION.to_le_bytes())?;
    for d in net.input_shape {
        w.write_all(&(d as u32).to_le_bytes())?;
    }
    w.write_all(&(net.k as u32).to_le_bytes())?;
    w.write_all(&(net.layers.len() as u32).to_le_bytes())?;
    for l in &net.layers {
        let (code, size, rate) = layer_code(l);
        w.write_all(&[code])?;
        w.write_all(&size.to_le_bytes())?;
        w.write_all(&rate.to_le_bytes())?;
    }
    w.write_all(&(net.params.len() as u32).to_le_bytes())?;
    for p in &net.params {
        w.write_all(&(p.shape().len() as u32).to_le_bytes())?;
        for d in p.shape() {
            w.write_all(&(*d as u32).to_le_bytes())?;
        }
        for v in p.data() {
            w.write_all(&v.to_le_bytes())?;
        }
    }
    Ok(())
}

fn read_exact_or_corrupt(r: &mut impl Read, buf: &mut [u8]) -> Result<()> {
    r.read_exact(buf)
        .map_err(|_| Error::Corruption("checkpoint truncated".into()))
}

fn read_u32(r: &mut impl Read) -> Result<u32> {
    let mut b = [0u8; 4];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(u32::from_le_bytes(b))
}

fn read_f64(r: &mut impl Read) -> Result<f64> {
    let mut b = [0u8; 8];
    read_exact_or_corrupt(r, &mut b)?;
    Ok(f64::from_le_bytes(b))
}

pub fn load_checkpoint(path: &Path) -> Result<Network> {
    let mut r = std::io::BufReader::new(std::fs::File::open(path)?);
    let mut magic = [0u8; 4];
    read_exact_or_corrupt(&mut r, &mut magic)?;
    if &magic != CKPT_MAGIC {
        return Err(Error::Format("bad checkpoint magic".into()));
    }
    let version = read_u32(&mut r)?;
    if version != CKPT_VERSION {
        return Err(Error::Format(format!("unsupported checkpoint version {version}")));
    }
    let input_shape = [
        read_u32(&mut r)? as usize,
        read_u32(&mut r)? as usize,
        read_u32(&mut r)? as usize,
    ];
    let k = read_u32(&mut r)? as usize;
    let n_layers = read_u32(&mut r)? as usize;
    let mut layers = Vec::with_capacity(n_layers);
    for _ in 0..n_layers {
        let mut code = [0u8; 1];
        read_exact_or_corrupt(&mut r, &mut code)?;
        let size = read_u32(&mut r)?;
        let rate = read_f64(&mut r)?;
        layers.push(layer_from_code(code[0], size, rate)?);
    }
    let n_params = read_u32(&mut r)? as usize;
    let mut params = Vec::with_capacity(n_params);
    for _ in 0..n_params {
        let ndim = read_u32(&mut r)? as usize;
        let mut shape = Vec::with_capacity(ndim);
        for _ in 0..ndim {
            shape.push(read_u32(&mut r)? as usize);
        }
        let numel: usize = shape.iter().product();
        let mut data = Vec::with_capacity(numel);
        for _ in 0..numel {
            data.push(read_f64(&mut r)?);
        }
        params.push(Tensor::new(shape, data)?);
    }
    Ok(Network {
        name: "checkpoint".into(),
        layers,
        input_shape,
        k,
        params,
    })
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::tensor::rel_err;

    #[test]
    fn mnist_cnn_head_shape_and_param_count() {
        let net = build_network(&ArchPreset::mnist_cnn(), 10, 0).unwrap();
        // final dense head: 128 x 10
        let head = &net.params()[net.params().len() - 2];
        assert_eq!(head.shape(), &[128, 10]);
        // conv1 32*1*9+32 = 320; conv2 64*32*9+64 = 18496;
        // dense 3136*128+128 = 401536; head 128*10+10 = 1290 -> 421642
        assert_eq!(net.param_count(), 421_642);
    }

    #[test]
    fn same_seed_identical_parameters() {
        let a = build_network(&ArchPreset::desk_mlp(), 3, 7).unwrap();
        let b = build_network(&ArchPreset::desk_mlp(), 3, 7).unwrap();
        for (x, y) in a.params().iter().zip(b.params()) {
            assert_eq!(x.data(), y.data());
        }
        let c = build_network(&ArchPreset::desk_mlp(), 3, 8).unwrap();
        assert_ne!(a.params()[0].data(), c.params()[0].data());
    }

    #[test]
    fn desk_mlp_param_count_hand_sum() {
        // 8x8 input: 64*64+64 dense, 64*3+3 head
        let net = build_network(&ArchPreset::desk_mlp(), 3, 1).unwrap();
        assert_eq!(net.param_count(), 64 * 64 + 64 + 64 * 3 + 3);
    }

    #[test]
    fn unknown_preset_rejected() {
        assert!(matches!(ArchPreset::parse("resnet"), Err(Error::Config(_))));
    }

    #[test]
    fn class_count_below_two_rejected() {
        assert!(matches!(
            build_network(&ArchPreset::desk_mlp(), 1, 0),
            Err(Error::Config(_))
        ));
    }

    #[test]
    fn forward_off_is_deterministic() {
        let net = build_network(&ArchPreset::desk_mlp(), 3, 5).unwrap();
        let mut rng = RngStream::from_seed(1);
        let batch = Tensor::randn(vec![4, 1, 8, 8], 1.0, &mut rng);
        let a = net
            .forward(&batch, RunMode::Off, &mut RngStream::from_seed(10))
            .unwrap();
        let b = net
            .forward(&batch, RunMode::Off, &mut RngStream::from_seed(999))
            .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn forward_eval_mc_is_stochastic() {
        let net = build_network(&ArchPreset::desk_mlp(), 3, 5).unwrap();
        let mut rng = RngStream::from_seed(1);
        let batch = Tensor::randn(vec![4, 1, 8, 8], 1.0, &mut rng);
        let mut stream = RngStream::named(2, "dropout");
        let a = net.forward(&batch, RunMode::EvalMc, &mut stream).unwrap();
        let b = net.forward(&batch, RunMode::EvalMc, &mut stream).unwrap();
        assert_ne!(a.data(), b.data());
    }

    #[test]
    fn rate_zero_train_equals_off() {
        let preset = ArchPreset::desk_mlp_custom([1, 8, 8], 64, 0.0);
        let net = build_network(&preset, 3, 5).unwrap();
        let mut rng = RngStream::from_seed(1);
        let batch = Tensor::randn(vec![4, 1, 8, 8], 1.0, &mut rng);
        let a = net
            .forward(&batch, RunMode::Train, &mut RngStream::from_seed(3))
            .unwrap();
        let b = net
            .forward(&batch, RunMode::Off, &mut RngStream::from_seed(4))
            .unwrap();
        assert_eq!(a.data(), b.data());
    }

    #[test]
    fn forward_shape_mismatch_rejected() {
        let net = build_network(&ArchPreset::desk_mlp(), 3, 5).unwrap();
        let batch = Tensor::zeros(vec![4, 1, 6, 6]);
        assert!(matches!(
            net.forward(&batch, RunMode::Off, &mut RngStream::from_seed(0)),
            Err(Error::Dim(_))
        ));
    }

    #[test]
    fn softmax_of_forward_rows_sum_to_one() {
        let net = build_network(&ArchPreset::desk_mlp(), 5, 5).unwrap();
        let mut rng = RngStream::from_seed(1);
        let batch = Tensor::randn(vec![6, 1, 8, 8], 1.0, &mut rng);
        let logits = net
            .forward(&batch, RunMode::EvalMc, &mut RngStream::named(1, "dropout"))
            .unwrap();
        let mut g = Graph::new();
        let l = g.leaf(&logits).unwrap();
        let p = g.softmax(l).unwrap();
        for row in g.value(p).chunks(5) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn l2_norm_sq_zero_and_single_weight() {
        let mut net = build_network(&ArchPreset::desk_mlp(), 3, 5).unwrap();
        for p in net.params_mut() {
            p.data_mut().fill(0.0);
        }
        assert_eq!(net.l2_norm_sq(), 0.0);
        net.params_mut()[0].data_mut()[0] = 3.0;
        assert_eq!(net.l2_norm_sq(), 9.0);
    }

    #[test]
    fn l2_gradient_is_2x() {
        let net = build_network(&ArchPreset::desk_mlp_custom([1, 2, 2], 3, 0.0), 2, 5).unwrap();
        let mut g = Graph::new();
        let ids = net.register_params(&mut g).unwrap();
        let sqs: Vec<NodeId> = ids.iter().map(|id| g.sum_sq(*id).unwrap()).collect();
        let total = g.add_n(&sqs).unwrap();
        let lam = 0.37;
        let loss = g.scale(total, lam).unwrap();
        g.backward(loss).unwrap();
        for (id, p) in ids.iter().zip(net.params()) {
            let grad = g.grad(*id).unwrap();
            for (gv, pv) in grad.iter().zip(p.data()) {
                assert!(rel_err(*gv, 2.0 * lam * pv) < 1e-12 || (gv - 2.0 * lam * pv).abs() < 1e-12);
            }
        }
    }

    #[test]
    fn frozen_network_is_share_safe() {
        fn assert_send_sync<T: Send + Sync>() {}
        assert_send_sync::<Network>();
        // concurrent read-only evaluation on a shared snapshot
        let net = std::sync::Arc::new(build_network(&ArchPreset::desk_mlp(), 3, 5).unwrap());
        let mut rng = RngStream::from_seed(1);
        let batch = std::sync::Arc::new(Tensor::randn(vec![4, 1, 8, 8], 1.0, &mut rng));
        let handles: Vec<_> = (0..4)
            .map(|i| {
                let net = net.clone();
                let batch = batch.clone();
                std::thread::spawn(move || {
                    let mut stream = RngStream::named(i, "dropout");
                    net.forward(&batch, RunMode::EvalMc, &mut stream).unwrap()
                })
            })
            .collect();
        for h in handles {
            h.join().unwrap();
        }
    }

    #[test]
    fn checkpoint_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = build_network(&ArchPreset::desk_mlp(), 3, 11).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let loaded = load_checkpoint(&path).unwrap();
        assert_eq!(loaded.class_count(), 3);
        assert_eq!(loaded.input_shape(), [1, 8, 8]);
        assert_eq!(loaded.layers(), net.layers());
        for (a, b) in net.params().iter().zip(loaded.params()) {
            assert_eq!(a.data(), b.data());
            assert_eq!(a.shape(), b.shape());
        }
    }

    #[test]
    fn checkpoint_bad_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("bad.ckpt");
        std::fs::write(&path, b"NOPE").unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Format(_))));
    }

    #[test]
    fn checkpoint_truncation_detected() {
        let dir = tempfile::tempdir().unwrap();
        let path = dir.path().join("net.ckpt");
        let net = build_network(&ArchPreset::desk_mlp(), 3, 11).unwrap();
        save_checkpoint(&net, &path).unwrap();
        let bytes = std::fs::read(&path).unwrap();
        std::fs::write(&path, &bytes[..bytes.len() / 2]).unwrap();
        assert!(matches!(load_checkpoint(&path), Err(Error::Corruption(_))));
    }

    #[test]
    fn cifar_preset_pools_after_2nd_4th_6th_conv() {
        let preset = ArchPreset::cifar_cnn([3, 32, 32], 0.4);
        let specs = preset.layer_specs(10);
        let conv_positions: Vec<usize> = specs
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::Conv3x3 { .. }))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(conv_positions.len(), 6);
        let pool_positions: Vec<usize> = specs
            .iter()
            .enumerate()
            .filter(|(_, l)| matches!(l, LayerSpec::MaxPool2))
            .map(|(i, _)| i)
            .collect();
        assert_eq!(pool_positions.len(), 3);
        // each pool directly follows the relu of conv 2, 4, 6
        for (pool, conv) in pool_positions.iter().zip([1usize, 3, 5]) {
            assert_eq!(*pool, conv_positions[conv] + 2);
        }
        // builds and evaluates
        let net = build_network(&preset, 10, 0).unwrap();
        assert_eq!(net.input_shape(), [3, 32, 32]);
    }
}
