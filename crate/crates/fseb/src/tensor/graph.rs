use super::{RunMode, Tensor};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// Handle to a node on a [`Graph`].
#[derive(Clone, Copy, Debug, PartialEq, Eq)]
pub struct NodeId(usize);

enum Op {
    Leaf,
    /// C[m,n] = A[m,k] B[k,n]
    Matmul { a: NodeId, b: NodeId },
    /// Same-padded stride-1 3x3 cross-correlation; `cols` caches the
    /// batch-wide im2col matrix [(B*H*W), C*9] for the backward pass.
    Conv2d {
        input: NodeId,
        kernel: NodeId,
        cols: Vec<f64>,
    },
    /// 2x2 non-overlapping max; `argmax` holds the winning input flat index
    /// per output element (first in row-major scan on ties).
    MaxPool2 { input: NodeId, argmax: Vec<usize> },
    Relu { input: NodeId },
    /// Inverted dropout; `mask` carries 0.0 or 1/(1-rate) per element.
    /// An empty mask means identity (mode off or rate 0).
    Dropout { input: NodeId, mask: Vec<f64> },
    /// Row-wise softmax of a [n,K] matrix; output saved as node value.
    Softmax { input: NodeId },
    /// Mean over the batch of -log softmax(logits)[label].
    SoftmaxXent {
        logits: NodeId,
        labels: Vec<usize>,
        probs: Vec<f64>,
    },
    /// x[B,N] + bias[N], or x[B,C,H,W] + bias[C].
    AddBias { input: NodeId, bias: NodeId },
    Flatten { input: NodeId },
    ConcatRows { a: NodeId, b: NodeId },
    SliceRows { input: NodeId, start: usize },
    Sum { input: NodeId },
    SumSq { input: NodeId },
    Add { a: NodeId, b: NodeId },
    AddN { inputs: Vec<NodeId> },
    Scale { input: NodeId, c: f64 },
    Mul { a: NodeId, b: NodeId },
    /// Scalar with an externally supplied gradient w.r.t. its input,
    /// evaluated at the input's forward value.
    ScalarWithGrad { input: NodeId, grad: Vec<f64> },
}

struct Node {
    shape: Vec<usize>,
    value: Vec<f64>,
    grad: Option<Vec<f64>>,
    op: Op,
}

// Recycled float buffers. Training allocates hundreds of megabytes of
// short-lived activation and gradient buffers per optimizer step; reusing
// them avoids the mmap and page-fault churn of fresh allocations.
thread_local! {
    static BUF_POOL: std::cell::RefCell<Vec<Vec<f64>>> =
        const { std::cell::RefCell::new(Vec::new()) };
}

fn take_zeroed(len: usize) -> Vec<f64> {
    BUF_POOL.with(|p| {
        let mut pool = p.borrow_mut();
        if let Some(pos) = pool.iter().position(|b| b.capacity() >= len) {
            let mut b = pool.swap_remove(pos);
            b.clear();
            b.resize(len, 0.0);
            b
        } else {
            vec![0.0; len]
        }
    })
}

/// Cleared buffer with at least `cap` capacity; callers fill it by
/// extending, avoiding the zero-fill pass entirely.
fn take_empty(cap: usize) -> Vec<f64> {
    BUF_POOL.with(|p| {
        let mut pool = p.borrow_mut();
        if let Some(pos) = pool.iter().position(|b| b.capacity() >= cap) {
            let mut b = pool.swap_remove(pos);
            b.clear();
            b
        } else {
            Vec::with_capacity(cap)
        }
    })
}

fn recycle(b: Vec<f64>) {
    if b.capacity() >= 4096 {
        BUF_POOL.with(|p| {
            let mut pool = p.borrow_mut();
            if pool.len() < 64 {
                pool.push(b);
            }
        });
    }
}

impl Drop for Graph {
    fn drop(&mut self) {
        for node in self.nodes.drain(..) {
            recycle(node.value);
            if let Some(g) = node.grad {
                recycle(g);
            }
            match node.op {
                Op::Conv2d { cols, .. } => recycle(cols),
                Op::Dropout { mask, .. } => recycle(mask),
                Op::SoftmaxXent { probs, .. } => recycle(probs),
                Op::ScalarWithGrad { grad, .. } => recycle(grad),
                _ => {}
            }
        }
    }
}

/// Reverse-mode tape. Nodes are appended in topological order during the
/// forward pass; `backward` walks the tape once in reverse.
#[derive(Default)]
pub struct Graph {
    nodes: Vec<Node>,
}

#[allow(clippy::too_many_arguments)]
fn gemm(
    m: usize,
    k: usize,
    n: usize,
    alpha: f64,
    a: &[f64],
    rsa: isize,
    csa: isize,
    b: &[f64],
    rsb: isize,
    csb: isize,
    beta: f64,
    c: &mut [f64],
    rsc: isize,
    csc: isize,
) {
    unsafe {
        matrixmultiply::dgemm(
            m,
            k,
            n,
            alpha,
            a.as_ptr(),
            rsa,
            csa,
            b.as_ptr(),
            rsb,
            csb,
            beta,
            c.as_mut_ptr(),
            rsc,
            csc,
        );
    }
}

/// Fill `col` ([H*W, C*9] row-major) with the 3x3 zero-padded patches of one
/// sample `input` ([C, H, W]). Iteration runs positions-outer so that the
/// writes stream sequentially through `col`.
fn im2col(input: &[f64], c: usize, h: usize, w: usize, col: &mut [f64]) {
    let c9 = c * 9;
    let hw = h * w;
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c9;
            let interior = y > 0 && y + 1 < h && x > 0 && x + 1 < w;
            if interior {
                // all nine taps in bounds: write every slot directly
                for ch in 0..c {
                    let plane = &input[ch * hw..(ch + 1) * hw];
                    let slot = base + ch * 9;
                    let p0 = (y - 1) * w + x - 1;
                    col[slot..slot + 3].copy_from_slice(&plane[p0..p0 + 3]);
                    col[slot + 3..slot + 6].copy_from_slice(&plane[p0 + w..p0 + w + 3]);
                    col[slot + 6..slot + 9]
                        .copy_from_slice(&plane[p0 + 2 * w..p0 + 2 * w + 3]);
                }
            } else {
                col[base..base + c9].fill(0.0);
                for ch in 0..c {
                    let plane = &input[ch * hw..(ch + 1) * hw];
                    let slot = base + ch * 9;
                    for ky in 0..3 {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        let row = iy as usize * w;
                        for kx in 0..3 {
                            let ix = x as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            col[slot + ky * 3 + kx] = plane[row + ix as usize];
                        }
                    }
                }
            }
        }
    }
}

/// Direct 3x3 same-padded cross-correlation for single-channel inputs; the
/// im2col route would hand the GEMM an inner dimension of 9, which runs far
/// below peak.
fn conv1ch_forward(input: &[f64], h: usize, w: usize, kernel: &[f64], f: usize, out: &mut [f64]) {
    let hw = h * w;
    for (fi, k) in kernel.chunks(9).enumerate().take(f) {
        let plane = &mut out[fi * hw..(fi + 1) * hw];
        for y in 0..h {
            let interior_y = y > 0 && y + 1 < h;
            for x in 0..w {
                let mut acc = 0.0;
                if interior_y && x > 0 && x + 1 < w {
                    let p0 = (y - 1) * w + x - 1;
                    acc = input[p0] * k[0]
                        + input[p0 + 1] * k[1]
                        + input[p0 + 2] * k[2]
                        + input[p0 + w] * k[3]
                        + input[p0 + w + 1] * k[4]
                        + input[p0 + w + 2] * k[5]
                        + input[p0 + 2 * w] * k[6]
                        + input[p0 + 2 * w + 1] * k[7]
                        + input[p0 + 2 * w + 2] * k[8];
                } else {
                    for ky in 0..3usize {
                        let iy = y as isize + ky as isize - 1;
                        if iy < 0 || iy >= h as isize {
                            continue;
                        }
                        for kx in 0..3usize {
                            let ix = x as isize + kx as isize - 1;
                            if ix < 0 || ix >= w as isize {
                                continue;
                            }
                            acc += input[iy as usize * w + ix as usize] * k[ky * 3 + kx];
                        }
                    }
                }
                plane[y * w + x] = acc;
            }
        }
    }
}

/// Gradients of the single-channel direct convolution: accumulates the
/// kernel gradient and writes the input gradient for one sample.
#[allow(clippy::too_many_arguments)]
fn conv1ch_backward(
    input: &[f64],
    h: usize,
    w: usize,
    kernel: &[f64],
    f: usize,
    dout: &[f64],
    dkernel: &mut [f64],
    dinput: &mut [f64],
) {
    let hw = h * w;
    for fi in 0..f {
        let dplane = &dout[fi * hw..(fi + 1) * hw];
        let k = &kernel[fi * 9..(fi + 1) * 9];
        let dk = &mut dkernel[fi * 9..(fi + 1) * 9];
        for y in 0..h {
            for x in 0..w {
                let g = dplane[y * w + x];
                if g == 0.0 {
                    continue;
                }
                for ky in 0..3usize {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    for kx in 0..3usize {
                        let ix = x as isize + kx as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        let pos = iy as usize * w + ix as usize;
                        dk[ky * 3 + kx] += input[pos] * g;
                        dinput[pos] += k[ky * 3 + kx] * g;
                    }
                }
            }
        }
    }
}

/// Scatter-add the columns gradient back into one sample's input gradient;
/// reads stream sequentially through `dcol`.
fn col2im_add(dcol: &[f64], c: usize, h: usize, w: usize, dinput: &mut [f64]) {
    let c9 = c * 9;
    let hw = h * w;
    for y in 0..h {
        for x in 0..w {
            let base = (y * w + x) * c9;
            for ch in 0..c {
                let plane_off = ch * hw;
                let slot = base + ch * 9;
                for ky in 0..3 {
                    let iy = y as isize + ky as isize - 1;
                    if iy < 0 || iy >= h as isize {
                        continue;
                    }
                    let row = plane_off + iy as usize * w;
                    for kx in 0..3 {
                        let ix = x as isize + kx as isize - 1;
                        if ix < 0 || ix >= w as isize {
                            continue;
                        }
                        dinput[row + ix as usize] += dcol[slot + ky * 3 + kx];
                    }
                }
            }
        }
    }
}

impl Graph {
    pub fn new() -> Self {
        Graph::default()
    }

    pub fn len(&self) -> usize {
        self.nodes.len()
    }

    pub fn is_empty(&self) -> bool {
        self.nodes.is_empty()
    }

    fn push(&mut self, shape: Vec<usize>, value: Vec<f64>, op: Op, name: &str) -> Result<NodeId> {
        // ops that only rearrange or bound already-checked values skip the
        // finiteness scan
        let preserves_values = matches!(
            op,
            Op::Flatten { .. }
                | Op::ConcatRows { .. }
                | Op::SliceRows { .. }
                | Op::MaxPool2 { .. }
                | Op::Relu { .. }
                | Op::Dropout { .. }
        );
        if !preserves_values && !value.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric(format!("non-finite output of {name}")));
        }
        self.nodes.push(Node {
            shape,
            value,
            grad: None,
            op,
        });
        Ok(NodeId(self.nodes.len() - 1))
    }

    fn node(&self, id: NodeId) -> &Node {
        &self.nodes[id.0]
    }

    pub fn shape(&self, id: NodeId) -> &[usize] {
        &self.node(id).shape
    }

    pub fn value(&self, id: NodeId) -> &[f64] {
        &self.node(id).value
    }

    /// Accumulated gradient of `id`, if any backward pass has reached it.
    pub fn grad(&self, id: NodeId) -> Option<&[f64]> {
        self.node(id).grad.as_deref()
    }

    /// Node value as a detached tensor.
    pub fn tensor(&self, id: NodeId) -> Tensor {
        Tensor::new(self.node(id).shape.clone(), self.node(id).value.clone())
            .expect("node shape consistent")
    }

    pub fn zero_grads(&mut self) {
        for n in &mut self.nodes {
            n.grad = None;
        }
    }

    /// Insert a detached tensor as a leaf.
    pub fn leaf(&mut self, t: &Tensor) -> Result<NodeId> {
        let mut buf = take_empty(t.numel());
        buf.extend_from_slice(t.data());
        self.push(t.shape().to_vec(), buf, Op::Leaf, "leaf")
    }

    pub fn matmul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.len() != 2 || sb.len() != 2 || sa[1] != sb[0] {
            return Err(Error::Dim(format!(
                "matmul: {:?} x {:?} mismatched",
                sa, sb
            )));
        }
        let (m, k, n) = (sa[0], sa[1], sb[1]);
        let mut out = take_zeroed(m * n);
        gemm(
            m,
            k,
            n,
            1.0,
            self.value(a),
            k as isize,
            1,
            self.value(b),
            n as isize,
            1,
            0.0,
            &mut out,
            n as isize,
            1,
        );
        self.push(vec![m, n], out, Op::Matmul { a, b }, "matmul")
    }

    pub fn conv2d(&mut self, input: NodeId, kernel: NodeId) -> Result<NodeId> {
        let (si, sk) = (self.shape(input).to_vec(), self.shape(kernel).to_vec());
        if si.len() != 4 || sk.len() != 4 {
            return Err(Error::Dim(format!(
                "conv2d: expected 4-d input and kernel, got {:?} and {:?}",
                si, sk
            )));
        }
        if sk[2] != 3 || sk[3] != 3 {
            return Err(Error::Dim(format!("conv2d: kernel must be 3x3, got {:?}", sk)));
        }
        if si[1] != sk[1] {
            return Err(Error::Dim(format!(
                "conv2d: input channels {} != kernel channels {}",
                si[1], sk[1]
            )));
        }
        let (bsz, c, h, w) = (si[0], si[1], si[2], si[3]);
        let f = sk[0];
        let c9 = c * 9;
        let hw = h * w;
        if c == 1 {
            // single-channel: direct taps beat a k=9 GEMM
            let iv = self.value(input);
            let kv = self.value(kernel);
            let mut out = take_zeroed(bsz * f * hw);
            let run = |out_part: &mut [f64], b_start: usize| {
                let n = out_part.len() / (f * hw);
                for bi in 0..n {
                    conv1ch_forward(
                        &iv[(b_start + bi) * hw..(b_start + bi + 1) * hw],
                        h,
                        w,
                        kv,
                        f,
                        &mut out_part[bi * f * hw..(bi + 1) * f * hw],
                    );
                }
            };
            if bsz * hw * f >= 1 << 20 && bsz >= 2 {
                let b_half = bsz / 2;
                let (lo, hi) = out.split_at_mut(b_half * f * hw);
                std::thread::scope(|scope| {
                    scope.spawn(|| run(lo, 0));
                    run(hi, b_half);
                });
            } else {
                run(&mut out, 0);
            }
            return self.push(
                vec![bsz, f, h, w],
                out,
                Op::Conv2d {
                    input,
                    kernel,
                    cols: Vec::new(),
                },
                "conv2d",
            );
        }
        // batch-wide columns keep the GEMM large enough to run at full rate;
        // the batch and filter dimensions split across two threads with
        // disjoint contiguous outputs, so results stay bit-deterministic
        let threaded = bsz * hw * c9 * f >= 1 << 27;
        let mut cols = take_empty(bsz * hw * c9);
        #[allow(clippy::uninit_vec)]
        {
            cols.resize(bsz * hw * c9, 0.0);
        }
        let iv = self.value(input);
        let fill_cols = |cols_part: &mut [f64], b_start: usize| {
            let n = cols_part.len() / (hw * c9);
            for bi in 0..n {
                im2col(
                    &iv[(b_start + bi) * c * hw..(b_start + bi + 1) * c * hw],
                    c,
                    h,
                    w,
                    &mut cols_part[bi * hw * c9..(bi + 1) * hw * c9],
                );
            }
        };
        if threaded {
            let b_half = bsz / 2;
            let (lo, hi) = cols.split_at_mut(b_half * hw * c9);
            std::thread::scope(|scope| {
                scope.spawn(|| fill_cols(lo, 0));
                fill_cols(hi, b_half);
            });
        } else {
            fill_cols(&mut cols, 0);
        }
        // out_fb[F, (B*HW)] = kernel[F, C9] * cols^T[C9, (B*HW)]
        let mut out_fb = take_zeroed(f * bsz * hw);
        let kv = self.value(kernel);
        let run_gemm = |kernel_rows: &[f64], out_rows: &mut [f64]| {
            gemm(
                kernel_rows.len() / c9,
                c9,
                bsz * hw,
                1.0,
                kernel_rows,
                c9 as isize,
                1,
                &cols,
                1,
                c9 as isize,
                0.0,
                out_rows,
                (bsz * hw) as isize,
                1,
            );
        };
        if threaded && f >= 2 {
            let f_half = f / 2;
            let (k_lo, k_hi) = kv.split_at(f_half * c9);
            let (o_lo, o_hi) = out_fb.split_at_mut(f_half * bsz * hw);
            std::thread::scope(|scope| {
                scope.spawn(|| run_gemm(k_lo, o_lo));
                run_gemm(k_hi, o_hi);
            });
        } else {
            run_gemm(kv, &mut out_fb);
        }
        // [f][b][hw] -> [b][f][hw]: contiguous hw-runs move per (f, b)
        let mut out = take_zeroed(bsz * f * hw);
        let transpose_out = |out_part: &mut [f64], b_start: usize| {
            let n = out_part.len() / (f * hw);
            for fi in 0..f {
                for bi in 0..n {
                    let src = &out_fb
                        [fi * bsz * hw + (b_start + bi) * hw..fi * bsz * hw + (b_start + bi + 1) * hw];
                    out_part[bi * f * hw + fi * hw..bi * f * hw + (fi + 1) * hw]
                        .copy_from_slice(src);
                }
            }
        };
        if threaded {
            let b_half = bsz / 2;
            let (lo, hi) = out.split_at_mut(b_half * f * hw);
            std::thread::scope(|scope| {
                scope.spawn(|| transpose_out(lo, 0));
                transpose_out(hi, b_half);
            });
        } else {
            transpose_out(&mut out, 0);
        }
        recycle(out_fb);
        self.push(
            vec![bsz, f, h, w],
            out,
            Op::Conv2d { input, kernel, cols },
            "conv2d",
        )
    }

    pub fn maxpool2(&mut self, input: NodeId) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        if si.len() != 4 {
            return Err(Error::Dim(format!("maxpool2: expected 4-d input, got {:?}", si)));
        }
        let (bsz, c, h, w) = (si[0], si[1], si[2], si[3]);
        if h % 2 != 0 || w % 2 != 0 {
            return Err(Error::Dim(format!("maxpool2: odd extent in {:?}", si)));
        }
        let (oh, ow) = (h / 2, w / 2);
        let mut out = take_zeroed(bsz * c * oh * ow);
        let mut argmax = vec![0usize; out.len()];
        let v = self.value(input);
        for bc in 0..bsz * c {
            let plane = bc * h * w;
            let oplane = bc * oh * ow;
            for oy in 0..oh {
                for ox in 0..ow {
                    let mut best_idx = plane + (2 * oy) * w + 2 * ox;
                    let mut best = v[best_idx];
                    // row-major scan keeps the first element on ties
                    for (dy, dx) in [(0usize, 1usize), (1, 0), (1, 1)] {
                        let idx = plane + (2 * oy + dy) * w + 2 * ox + dx;
                        if v[idx] > best {
                            best = v[idx];
                            best_idx = idx;
                        }
                    }
                    out[oplane + oy * ow + ox] = best;
                    argmax[oplane + oy * ow + ox] = best_idx;
                }
            }
        }
        self.push(
            vec![bsz, c, oh, ow],
            out,
            Op::MaxPool2 { input, argmax },
            "maxpool2",
        )
    }

    pub fn relu(&mut self, input: NodeId) -> Result<NodeId> {
        let iv = self.value(input);
        let mut out = take_empty(iv.len());
        out.extend(iv.iter().map(|v| v.max(0.0)));
        self.push(self.shape(input).to_vec(), out, Op::Relu { input }, "relu")
    }

    pub fn dropout(
        &mut self,
        input: NodeId,
        rate: f64,
        mode: RunMode,
        rng: &mut RngStream,
    ) -> Result<NodeId> {
        if !(0.0..1.0).contains(&rate) {
            return Err(Error::Config(format!("dropout rate {rate} not in [0, 1)")));
        }
        let shape = self.shape(input).to_vec();
        let len = self.value(input).len();
        let mask: Vec<f64> = if mode == RunMode::Off || rate == 0.0 {
            Vec::new()
        } else {
            let scale = 1.0 / (1.0 - rate);
            let mut m = take_empty(len);
            m.extend((0..len).map(|_| if rng.uniform() < rate { 0.0 } else { scale }));
            m
        };
        let iv = self.value(input);
        let mut out = take_empty(len);
        if mask.is_empty() {
            out.extend_from_slice(iv);
        } else {
            out.extend(iv.iter().zip(&mask).map(|(v, m)| v * m));
        }
        self.push(shape, out, Op::Dropout { input, mask }, "dropout")
    }

    pub fn softmax(&mut self, input: NodeId) -> Result<NodeId> {
        let shape = self.shape(input).to_vec();
        if shape.len() != 2 {
            return Err(Error::Dim(format!("softmax: expected [n,K], got {:?}", shape)));
        }
        let k = shape[1];
        let mut out = self.value(input).to_vec();
        for row in out.chunks_mut(k) {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        self.push(shape, out, Op::Softmax { input }, "softmax")
    }

    pub fn softmax_cross_entropy(&mut self, logits: NodeId, labels: &[usize]) -> Result<NodeId> {
        let shape = self.shape(logits).to_vec();
        if shape.len() != 2 || shape[0] != labels.len() {
            return Err(Error::Dim(format!(
                "softmax_cross_entropy: logits {:?} vs {} labels",
                shape,
                labels.len()
            )));
        }
        let (bsz, k) = (shape[0], shape[1]);
        if let Some(bad) = labels.iter().find(|&&l| l >= k) {
            return Err(Error::Data(format!("label {bad} out of range for K={k}")));
        }
        let mut probs = self.value(logits).to_vec();
        let mut total = 0.0;
        for (i, row) in probs.chunks_mut(k).enumerate() {
            let m = row.iter().cloned().fold(f64::NEG_INFINITY, f64::max);
            let mut z = 0.0;
            for v in row.iter_mut() {
                *v = (*v - m).exp();
                z += *v;
            }
            total += z.ln() - (row[labels[i]].ln());
            for v in row.iter_mut() {
                *v /= z;
            }
        }
        let value = total / bsz as f64;
        self.push(
            vec![],
            vec![value],
            Op::SoftmaxXent {
                logits,
                labels: labels.to_vec(),
                probs,
            },
            "softmax_cross_entropy",
        )
    }

    pub fn add_bias(&mut self, input: NodeId, bias: NodeId) -> Result<NodeId> {
        let (si, sb) = (self.shape(input).to_vec(), self.shape(bias).to_vec());
        let ok = sb.len() == 1
            && ((si.len() == 2 && si[1] == sb[0]) || (si.len() == 4 && si[1] == sb[0]));
        if !ok {
            return Err(Error::Dim(format!(
                "add_bias: input {:?} incompatible with bias {:?}",
                si, sb
            )));
        }
        let iv = self.value(input);
        let mut out = take_empty(iv.len());
        out.extend_from_slice(iv);
        let b = self.value(bias);
        if si.len() == 2 {
            for row in out.chunks_mut(si[1]) {
                for (v, bv) in row.iter_mut().zip(b) {
                    *v += bv;
                }
            }
        } else {
            let plane = si[2] * si[3];
            for (ci, chunk) in out.chunks_mut(plane).enumerate() {
                let bv = b[ci % si[1]];
                for v in chunk {
                    *v += bv;
                }
            }
        }
        self.push(si, out, Op::AddBias { input, bias }, "add_bias")
    }

    pub fn flatten(&mut self, input: NodeId) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        if si.is_empty() {
            return Err(Error::Dim("flatten: scalar input".into()));
        }
        let rest: usize = si[1..].iter().product();
        let iv = self.value(input);
        let mut out = take_empty(iv.len());
        out.extend_from_slice(iv);
        self.push(vec![si[0], rest], out, Op::Flatten { input }, "flatten")
    }

    pub fn concat_rows(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        let (sa, sb) = (self.shape(a).to_vec(), self.shape(b).to_vec());
        if sa.is_empty() || sb.is_empty() || sa[1..] != sb[1..] {
            return Err(Error::Dim(format!(
                "concat_rows: incompatible {:?} and {:?}",
                sa, sb
            )));
        }
        let mut shape = sa.clone();
        shape[0] += sb[0];
        let mut out = take_empty(self.value(a).len() + self.value(b).len());
        out.extend_from_slice(self.value(a));
        out.extend_from_slice(self.value(b));
        self.push(shape, out, Op::ConcatRows { a, b }, "concat_rows")
    }

    pub fn slice_rows(&mut self, input: NodeId, start: usize, rows: usize) -> Result<NodeId> {
        let si = self.shape(input).to_vec();
        if si.is_empty() || start + rows > si[0] {
            return Err(Error::Dim(format!(
                "slice_rows: rows {start}..{} of {:?}",
                start + rows,
                si
            )));
        }
        let stride: usize = si[1..].iter().product();
        let mut shape = si.clone();
        shape[0] = rows;
        let src = &self.value(input)[start * stride..(start + rows) * stride];
        let mut out = take_empty(src.len());
        out.extend_from_slice(src);
        self.push(shape, out, Op::SliceRows { input, start }, "slice_rows")
    }

    pub fn sum(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input).iter().sum();
        self.push(vec![], vec![v], Op::Sum { input }, "sum")
    }

    pub fn sum_sq(&mut self, input: NodeId) -> Result<NodeId> {
        let v = self.value(input).iter().map(|x| x * x).sum();
        self.push(vec![], vec![v], Op::SumSq { input }, "sum_sq")
    }

    pub fn add(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dim(format!(
                "add: shapes {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x + y)
            .collect();
        self.push(self.shape(a).to_vec(), out, Op::Add { a, b }, "add")
    }

    pub fn add_n(&mut self, inputs: &[NodeId]) -> Result<NodeId> {
        if inputs.is_empty() {
            return Err(Error::Usage("add_n: empty input list".into()));
        }
        let shape = self.shape(inputs[0]).to_vec();
        for id in inputs {
            if self.shape(*id) != shape.as_slice() {
                return Err(Error::Dim("add_n: mismatched shapes".into()));
            }
        }
        let mut out = self.value(inputs[0]).to_vec();
        for id in &inputs[1..] {
            for (o, v) in out.iter_mut().zip(self.value(*id)) {
                *o += v;
            }
        }
        self.push(
            shape,
            out,
            Op::AddN {
                inputs: inputs.to_vec(),
            },
            "add_n",
        )
    }

    pub fn scale(&mut self, input: NodeId, c: f64) -> Result<NodeId> {
        let out: Vec<f64> = self.value(input).iter().map(|v| v * c).collect();
        self.push(self.shape(input).to_vec(), out, Op::Scale { input, c }, "scale")
    }

    pub fn mul(&mut self, a: NodeId, b: NodeId) -> Result<NodeId> {
        if self.shape(a) != self.shape(b) {
            return Err(Error::Dim(format!(
                "mul: shapes {:?} vs {:?}",
                self.shape(a),
                self.shape(b)
            )));
        }
        let out: Vec<f64> = self
            .value(a)
            .iter()
            .zip(self.value(b))
            .map(|(x, y)| x * y)
            .collect();
        self.push(self.shape(a).to_vec(), out, Op::Mul { a, b }, "mul")
    }

    /// Register a scalar node whose gradient with respect to `input` was
    /// computed externally at the input's current value. This is how the
    /// functional prior joins the tape.
    pub fn scalar_with_grad(&mut self, input: NodeId, value: f64, grad: Vec<f64>) -> Result<NodeId> {
        if grad.len() != self.value(input).len() {
            return Err(Error::Dim(format!(
                "scalar_with_grad: grad length {} vs input numel {}",
                grad.len(),
                self.value(input).len()
            )));
        }
        if !grad.iter().all(|v| v.is_finite()) {
            return Err(Error::Numeric("non-finite gradient in scalar_with_grad".into()));
        }
        self.push(
            vec![],
            vec![value],
            Op::ScalarWithGrad { input, grad },
            "scalar_with_grad",
        )
    }

    /// Reverse pass from a scalar loss. Gradients accumulate additively into
    /// the per-node buffers across repeated calls; `zero_grads` resets them.
    pub fn backward(&mut self, loss: NodeId) -> Result<()> {
        if self.node(loss).value.len() != 1 {
            return Err(Error::Usage(format!(
                "backward: loss must be scalar, got shape {:?}",
                self.node(loss).shape
            )));
        }
        // Fresh scratch buffers per call so that repeated backward calls
        // accumulate exactly additively.
        let mut scratch: Vec<Option<Vec<f64>>> = (0..self.nodes.len()).map(|_| None).collect();
        scratch[loss.0] = Some(vec![1.0]);

        for i in (0..=loss.0).rev() {
            let Some(out_grad) = scratch[i].take() else {
                continue;
            };
            self.backprop_node(i, &out_grad, &mut scratch);
            // Accumulate into the persistent buffer.
            let node = &mut self.nodes[i];
            match &mut node.grad {
                Some(g) => {
                    for (gi, oi) in g.iter_mut().zip(&out_grad) {
                        *gi += oi;
                    }
                    recycle(out_grad);
                }
                None => node.grad = Some(out_grad),
            }
        }
        Ok(())
    }

    fn backprop_node(&self, idx: usize, out_grad: &[f64], scratch: &mut [Option<Vec<f64>>]) {
        fn add_into(
            scratch: &mut [Option<Vec<f64>>],
            id: NodeId,
            len: usize,
        ) -> &mut Vec<f64> {
            scratch[id.0].get_or_insert_with(|| take_zeroed(len))
        }
        /// Accumulate a full-buffer contribution, avoiding the zero-fill
        /// pass when this is the first contribution.
        fn add_or_set(scratch: &mut [Option<Vec<f64>>], id: NodeId, src: Vec<f64>) {
            match &mut scratch[id.0] {
                Some(g) => {
                    for (gi, s) in g.iter_mut().zip(&src) {
                        *gi += s;
                    }
                }
                slot @ None => *slot = Some(src),
            }
        }
        match &self.nodes[idx].op {
            Op::Leaf => {}
            Op::Matmul { a, b } => {
                let (m, k) = (self.shape(*a)[0], self.shape(*a)[1]);
                let n = self.shape(*b)[1];
                {
                    let bv = self.value(*b);
                    let ga = add_into(scratch, *a, m * k);
                    // dA += dC[m,n] * B^T[n,k]
                    gemm(
                        m,
                        n,
                        k,
                        1.0,
                        out_grad,
                        n as isize,
                        1,
                        bv,
                        1,
                        n as isize,
                        1.0,
                        ga,
                        k as isize,
                        1,
                    );
                }
                {
                    let av = self.value(*a);
                    let gb = add_into(scratch, *b, k * n);
                    // dB += A^T[k,m] * dC[m,n]
                    gemm(
                        k,
                        m,
                        n,
                        1.0,
                        av,
                        1,
                        k as isize,
                        out_grad,
                        n as isize,
                        1,
                        1.0,
                        gb,
                        n as isize,
                        1,
                    );
                }
            }
            Op::Conv2d {
                input,
                kernel,
                cols,
            } => {
                let si = self.shape(*input).to_vec();
                let (bsz, c, h, w) = (si[0], si[1], si[2], si[3]);
                let f = self.shape(*kernel)[0];
                let (c9, hw) = (c * 9, h * w);
                let kv = self.value(*kernel);
                if c == 1 {
                    let iv = self.value(*input);
                    let mut dkernel = take_zeroed(f * 9);
                    let mut dinput = take_zeroed(bsz * hw);
                    let run = |dinput_part: &mut [f64],
                               dkernel_part: &mut [f64],
                               b_start: usize| {
                        let n = dinput_part.len() / hw;
                        for bi in 0..n {
                            conv1ch_backward(
                                &iv[(b_start + bi) * hw..(b_start + bi + 1) * hw],
                                h,
                                w,
                                kv,
                                f,
                                &out_grad[(b_start + bi) * f * hw..(b_start + bi + 1) * f * hw],
                                dkernel_part,
                                &mut dinput_part[bi * hw..(bi + 1) * hw],
                            );
                        }
                    };
                    if bsz * hw * f >= 1 << 20 && bsz >= 2 {
                        // per-thread kernel gradients merge in fixed order
                        let b_half = bsz / 2;
                        let mut dk_lo = take_zeroed(f * 9);
                        let (di_lo, di_hi) = dinput.split_at_mut(b_half * hw);
                        std::thread::scope(|scope| {
                            let dk_lo_ref = &mut dk_lo;
                            scope.spawn(move || run(di_lo, dk_lo_ref, 0));
                            run(di_hi, &mut dkernel, b_half);
                        });
                        for (a, b) in dkernel.iter_mut().zip(&dk_lo) {
                            *a += b;
                        }
                        recycle(dk_lo);
                    } else {
                        run(&mut dinput, &mut dkernel, 0);
                    }
                    add_or_set(scratch, *kernel, dkernel);
                    add_or_set(scratch, *input, dinput);
                    return;
                }
                let threaded = bsz * hw * c9 * f >= 1 << 27;
                // [b][f][hw] -> [f][(b*hw)]: contiguous hw-runs per (b, f)
                let mut dout_fb = take_zeroed(f * bsz * hw);
                let fill_fb = |part: &mut [f64], f_start: usize| {
                    let rows = part.len() / (bsz * hw);
                    for fi in 0..rows {
                        for bi in 0..bsz {
                            let src = &out_grad[bi * f * hw + (f_start + fi) * hw
                                ..bi * f * hw + (f_start + fi + 1) * hw];
                            part[fi * bsz * hw + bi * hw..fi * bsz * hw + (bi + 1) * hw]
                                .copy_from_slice(src);
                        }
                    }
                };
                if threaded && f >= 2 {
                    let f_half = f / 2;
                    let (lo, hi) = dout_fb.split_at_mut(f_half * bsz * hw);
                    std::thread::scope(|scope| {
                        scope.spawn(|| fill_fb(lo, 0));
                        fill_fb(hi, f_half);
                    });
                } else {
                    fill_fb(&mut dout_fb, 0);
                }
                // dK[F,C9] = dout_fb[F,(B*HW)] * cols[(B*HW),C9]
                let mut dkernel = take_zeroed(f * c9);
                let dk_gemm = |a_rows: &[f64], dk_rows: &mut [f64]| {
                    gemm(
                        dk_rows.len() / c9,
                        bsz * hw,
                        c9,
                        1.0,
                        a_rows,
                        (bsz * hw) as isize,
                        1,
                        cols,
                        c9 as isize,
                        1,
                        0.0,
                        dk_rows,
                        c9 as isize,
                        1,
                    );
                };
                // dCols[(B*HW),C9] = dout_fb^T[(B*HW),F] * K[F,C9]
                let mut dcols = take_zeroed(bsz * hw * c9);
                let dcols_gemm = |rows: &mut [f64], row_start: usize| {
                    gemm(
                        rows.len() / c9,
                        f,
                        c9,
                        1.0,
                        &dout_fb[row_start..],
                        1,
                        (bsz * hw) as isize,
                        kv,
                        c9 as isize,
                        1,
                        0.0,
                        rows,
                        c9 as isize,
                        1,
                    );
                };
                if threaded && f >= 2 {
                    // run the two independent products on separate threads
                    let f_half = f / 2;
                    let (dk_lo, dk_hi) = dkernel.split_at_mut(f_half * c9);
                    std::thread::scope(|scope| {
                        scope.spawn(|| dk_gemm(&dout_fb[..f_half * bsz * hw], dk_lo));
                        dk_gemm(&dout_fb[f_half * bsz * hw..], dk_hi);
                    });
                    let m_half = (bsz * hw) / 2;
                    let (dc_lo, dc_hi) = dcols.split_at_mut(m_half * c9);
                    std::thread::scope(|scope| {
                        scope.spawn(|| dcols_gemm(dc_lo, 0));
                        dcols_gemm(dc_hi, m_half);
                    });
                } else {
                    dk_gemm(&dout_fb, &mut dkernel);
                    dcols_gemm(&mut dcols, 0);
                }
                let mut dinput = take_zeroed(bsz * c * hw);
                let scatter = |part: &mut [f64], b_start: usize| {
                    let n = part.len() / (c * hw);
                    for bi in 0..n {
                        col2im_add(
                            &dcols[(b_start + bi) * hw * c9..(b_start + bi + 1) * hw * c9],
                            c,
                            h,
                            w,
                            &mut part[bi * c * hw..(bi + 1) * c * hw],
                        );
                    }
                };
                if threaded {
                    let b_half = bsz / 2;
                    let (lo, hi) = dinput.split_at_mut(b_half * c * hw);
                    std::thread::scope(|scope| {
                        scope.spawn(|| scatter(lo, 0));
                        scatter(hi, b_half);
                    });
                } else {
                    scatter(&mut dinput, 0);
                }
                add_or_set(scratch, *kernel, dkernel);
                add_or_set(scratch, *input, dinput);
                recycle(dout_fb);
                recycle(dcols);
            }
            Op::MaxPool2 { input, argmax } => {
                let len = self.value(*input).len();
                let gi = add_into(scratch, *input, len);
                for (o, &src) in out_grad.iter().zip(argmax) {
                    gi[src] += o;
                }
            }
            Op::Relu { input } => {
                let iv = self.value(*input);
                let mut masked = take_empty(iv.len());
                masked.extend(
                    iv.iter()
                        .zip(out_grad)
                        .map(|(v, o)| if *v > 0.0 { *o } else { 0.0 }),
                );
                add_or_set(scratch, *input, masked);
            }
            Op::Dropout { input, mask } => {
                let mut contribution = take_empty(out_grad.len());
                if mask.is_empty() {
                    contribution.extend_from_slice(out_grad);
                } else {
                    contribution.extend(out_grad.iter().zip(mask).map(|(o, m)| o * m));
                }
                add_or_set(scratch, *input, contribution);
            }
            Op::Softmax { input } => {
                let k = self.shape(*input)[1];
                let y = &self.nodes[idx].value;
                let gi = add_into(scratch, *input, y.len());
                for r in 0..y.len() / k {
                    let row = &y[r * k..(r + 1) * k];
                    let og = &out_grad[r * k..(r + 1) * k];
                    let dot: f64 = row.iter().zip(og).map(|(yi, oi)| yi * oi).sum();
                    for j in 0..k {
                        gi[r * k + j] += row[j] * (og[j] - dot);
                    }
                }
            }
            Op::SoftmaxXent {
                logits,
                labels,
                probs,
            } => {
                let bsz = labels.len();
                let k = probs.len() / bsz;
                let up = out_grad[0] / bsz as f64;
                let gi = add_into(scratch, *logits, probs.len());
                for i in 0..bsz {
                    for j in 0..k {
                        let onehot = if labels[i] == j { 1.0 } else { 0.0 };
                        gi[i * k + j] += (probs[i * k + j] - onehot) * up;
                    }
                }
            }
            Op::AddBias { input, bias } => {
                let si = self.shape(*input).to_vec();
                let mut buf = take_empty(out_grad.len());
                buf.extend_from_slice(out_grad);
                add_or_set(scratch, *input, buf);
                let blen = self.value(*bias).len();
                let gb = add_into(scratch, *bias, blen);
                if si.len() == 2 {
                    for row in out_grad.chunks(si[1]) {
                        for (g, o) in gb.iter_mut().zip(row) {
                            *g += o;
                        }
                    }
                } else {
                    let plane = si[2] * si[3];
                    for (ci, chunk) in out_grad.chunks(plane).enumerate() {
                        gb[ci % si[1]] += chunk.iter().sum::<f64>();
                    }
                }
            }
            Op::Flatten { input } => {
                let mut buf = take_empty(out_grad.len());
                buf.extend_from_slice(out_grad);
                add_or_set(scratch, *input, buf);
            }
            Op::ConcatRows { a, b } => {
                let alen = self.value(*a).len();
                let mut ga = take_empty(alen);
                ga.extend_from_slice(&out_grad[..alen]);
                add_or_set(scratch, *a, ga);
                let mut gb = take_empty(out_grad.len() - alen);
                gb.extend_from_slice(&out_grad[alen..]);
                add_or_set(scratch, *b, gb);
            }
            Op::SliceRows { input, start } => {
                let si = self.shape(*input).to_vec();
                let stride: usize = si[1..].iter().product();
                let gi = add_into(scratch, *input, self.value(*input).len());
                for (g, o) in gi[start * stride..start * stride + out_grad.len()]
                    .iter_mut()
                    .zip(out_grad)
                {
                    *g += o;
                }
            }
            Op::Sum { input } => {
                let gi = add_into(scratch, *input, self.value(*input).len());
                for g in gi.iter_mut() {
                    *g += out_grad[0];
                }
            }
            Op::SumSq { input } => {
                let iv = self.value(*input);
                let gi = add_into(scratch, *input, iv.len());
                for (g, v) in gi.iter_mut().zip(iv) {
                    *g += 2.0 * v * out_grad[0];
                }
            }
            Op::Add { a, b } => {
                for id in [*a, *b] {
                    let g = add_into(scratch, id, out_grad.len());
                    for (gi, o) in g.iter_mut().zip(out_grad) {
                        *gi += o;
                    }
                }
            }
            Op::AddN { inputs } => {
                for &id in inputs {
                    let g = add_into(scratch, id, out_grad.len());
                    for (gi, o) in g.iter_mut().zip(out_grad) {
                        *gi += o;
                    }
                }
            }
            Op::Scale { input, c } => {
                let g = add_into(scratch, *input, out_grad.len());
                for (gi, o) in g.iter_mut().zip(out_grad) {
                    *gi += o * c;
                }
            }
            Op::Mul { a, b } => {
                {
                    let bv = self.value(*b);
                    let ga = add_into(scratch, *a, bv.len());
                    for ((g, o), v) in ga.iter_mut().zip(out_grad).zip(bv) {
                        *g += o * v;
                    }
                }
                let av = self.value(*a);
                let gb = add_into(scratch, *b, av.len());
                for ((g, o), v) in gb.iter_mut().zip(out_grad).zip(av) {
                    *g += o * v;
                }
            }
            Op::ScalarWithGrad { input, grad } => {
                let gi = add_into(scratch, *input, grad.len());
                for (g, d) in gi.iter_mut().zip(grad) {
                    *g += out_grad[0] * d;
                }
            }
        }
    }
}
