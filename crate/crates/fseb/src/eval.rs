//! Predictive distributions under MC dropout and the evaluation metrics:
//! accuracy, negative log-likelihood, expected calibration error, and
//! AUROC over the uncertainty scores (max softmax probability, predictive
//! entropy, expected entropy). All logs are natural; scores are oriented so
//! that higher means more out-of-distribution.

use std::collections::BTreeMap;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::nn::Network;
use crate::rng::RngStream;
use crate::tensor::{RunMode, Tensor};

/// Probability floor for NLL; prevents infinities when an MC average hits 0.
pub const PROB_CLAMP: f64 = 1e-12;

/// Default number of stochastic forward passes at evaluation time.
pub const DEFAULT_S_EVAL: usize = 32;

/// Averaged predictive distribution over a batch of inputs.
#[derive(Clone, Debug)]
pub struct PredictiveBatch {
    /// [n, K] mean of per-pass softmax outputs.
    pub mean_probs: Tensor,
    /// [S, n, K] per-pass softmax outputs, retained for expected entropy.
    pub sample_probs: Option<Vec<f64>>,
    pub s_eval: usize,
}

impl PredictiveBatch {
    pub fn n(&self) -> usize {
        self.mean_probs.shape()[0]
    }

    pub fn k(&self) -> usize {
        self.mean_probs.shape()[1]
    }
}

fn softmax_rows(logits: &mut [f64], k: usize) {
    for row in logits.chunks_mut(k) {
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
}

/// Run `s_eval` stochastic forward passes and average the softmax outputs.
/// Deterministic given the stream state; inputs are processed in chunks so
/// arbitrarily large evaluation sets stay within memory.
pub fn predictive(
    net: &Network,
    inputs: &Tensor,
    s_eval: usize,
    rng: &mut RngStream,
    retain_samples: bool,
) -> Result<PredictiveBatch> {
    if s_eval == 0 {
        return Err(Error::Config("s_eval must be >= 1".into()));
    }
    let n = inputs.shape()[0];
    let k = net.class_count();
    let [c, h, w] = net.input_shape();
    let stride = c * h * w;
    let mut mean = vec![0.0; n * k];
    let mut samples = if retain_samples {
        Some(vec![0.0; s_eval * n * k])
    } else {
        None
    };
    let chunk = 256usize;
    let mut start = 0;
    while start < n {
        let len = chunk.min(n - start);
        let batch = Tensor::new(
            vec![len, c, h, w],
            inputs.data()[start * stride..(start + len) * stride].to_vec(),
        )?;
        for s in 0..s_eval {
            let logits = net.forward(&batch, RunMode::EvalMc, rng)?;
            let mut probs = logits.data().to_vec();
            softmax_rows(&mut probs, k);
            for i in 0..len {
                for j in 0..k {
                    mean[(start + i) * k + j] += probs[i * k + j];
                }
            }
            if let Some(buf) = samples.as_mut() {
                let off = s * n * k + start * k;
                buf[off..off + len * k].copy_from_slice(&probs);
            }
        }
        start += len;
    }
    for v in mean.iter_mut() {
        *v /= s_eval as f64;
    }
    Ok(PredictiveBatch {
        mean_probs: Tensor::new(vec![n, k], mean)?,
        sample_probs: samples,
        s_eval,
    })
}

fn check_labels(pb: &PredictiveBatch, labels: &[usize]) -> Result<()> {
    if labels.len() != pb.n() {
        return Err(Error::Dim(format!(
            "{} labels for {} predictions",
            labels.len(),
            pb.n()
        )));
    }
    if let Some(l) = labels.iter().find(|l| **l >= pb.k()) {
        return Err(Error::Data(format!("label {l} >= K={}", pb.k())));
    }
    Ok(())
}

/// Argmax with ties resolved toward the lowest class index.
fn argmax(row: &[f64]) -> usize {
    let mut best = 0;
    for (j, v) in row.iter().enumerate().skip(1) {
        if *v > row[best] {
            best = j;
        }
    }
    best
}

pub fn accuracy(pb: &PredictiveBatch, labels: &[usize]) -> Result<f64> {
    check_labels(pb, labels)?;
    let k = pb.k();
    let correct = pb
        .mean_probs
        .data()
        .chunks(k)
        .zip(labels)
        .filter(|(row, l)| argmax(row) == **l)
        .count();
    Ok(correct as f64 / labels.len() as f64)
}

pub fn nll(pb: &PredictiveBatch, labels: &[usize]) -> Result<f64> {
    check_labels(pb, labels)?;
    let k = pb.k();
    let total: f64 = pb
        .mean_probs
        .data()
        .chunks(k)
        .zip(labels)
        .map(|(row, l)| -row[*l].max(PROB_CLAMP).ln())
        .sum();
    Ok(total / labels.len() as f64)
}

/// Expected calibration error over equal-width confidence bins on (0, 1];
/// boundary values go to the higher bin, confidence 1.0 to the last bin.
pub fn ece(pb: &PredictiveBatch, labels: &[usize], bins: usize) -> Result<f64> {
    if bins == 0 {
        return Err(Error::Config("ece: bins must be >= 1".into()));
    }
    if labels.is_empty() && pb.n() == 0 {
        eprintln!("warning: ece over an empty batch defined as 0");
        return Ok(0.0);
    }
    check_labels(pb, labels)?;
    let k = pb.k();
    let n = labels.len();
    let mut count = vec![0usize; bins];
    let mut conf_sum = vec![0.0; bins];
    let mut acc_sum = vec![0usize; bins];
    for (row, l) in pb.mean_probs.data().chunks(k).zip(labels) {
        let pred = argmax(row);
        let conf = row[pred];
        let b = ((conf * bins as f64).floor() as usize).min(bins - 1);
        count[b] += 1;
        conf_sum[b] += conf;
        if pred == *l {
            acc_sum[b] += 1;
        }
    }
    let mut total = 0.0;
    for b in 0..bins {
        if count[b] == 0 {
            continue;
        }
        let conf_b = conf_sum[b] / count[b] as f64;
        let acc_b = acc_sum[b] as f64 / count[b] as f64;
        total += count[b] as f64 / n as f64 * (acc_b - conf_b).abs();
    }
    Ok(total)
}

/// Uncertainty scoring functions for OOD detection.
#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodScore {
    /// 1 - max softmax probability of the averaged prediction.
    Msp,
    /// Entropy of the averaged prediction, in nats.
    Entropy,
    /// Average over passes of each pass's predictive entropy.
    ExpectedEntropy,
}

impl OodScore {
    pub const ALL: [OodScore; 3] = [OodScore::Msp, OodScore::Entropy, OodScore::ExpectedEntropy];

    pub fn name(&self) -> &'static str {
        match self {
            OodScore::Msp => "msp",
            OodScore::Entropy => "entropy",
            OodScore::ExpectedEntropy => "expected_entropy",
        }
    }
}

fn entropy_nats(row: &[f64]) -> f64 {
    row.iter()
        .map(|p| if *p > 0.0 { -p * p.ln() } else { 0.0 })
        .sum()
}

/// Per-input uncertainty scores, oriented so higher means more OOD.
pub fn ood_scores(pb: &PredictiveBatch, method: OodScore) -> Result<Vec<f64>> {
    let k = pb.k();
    match method {
        OodScore::Msp => Ok(pb
            .mean_probs
            .data()
            .chunks(k)
            .map(|row| 1.0 - row[argmax(row)])
            .collect()),
        OodScore::Entropy => Ok(pb.mean_probs.data().chunks(k).map(entropy_nats).collect()),
        OodScore::ExpectedEntropy => {
            let samples = pb.sample_probs.as_ref().ok_or_else(|| {
                Error::Usage("expected_entropy requires retained sample probabilities".into())
            })?;
            let n = pb.n();
            let mut acc = vec![0.0; n];
            for s in 0..pb.s_eval {
                for i in 0..n {
                    acc[i] += entropy_nats(&samples[s * n * k + i * k..s * n * k + (i + 1) * k]);
                }
            }
            Ok(acc.into_iter().map(|v| v / pb.s_eval as f64).collect())
        }
    }
}

/// AUROC with OOD as the positive class: the Mann-Whitney statistic computed
/// from average ranks, which counts ties at half credit.
pub fn auroc(in_scores: &[f64], ood_scores: &[f64]) -> Result<f64> {
    if in_scores.is_empty() || ood_scores.is_empty() {
        return Err(Error::Usage("auroc: empty score set".into()));
    }
    if in_scores.iter().chain(ood_scores).any(|v| !v.is_finite()) {
        return Err(Error::Numeric("auroc: non-finite score".into()));
    }
    let n_in = in_scores.len();
    let n_ood = ood_scores.len();
    let mut all: Vec<(f64, bool)> = in_scores
        .iter()
        .map(|s| (*s, false))
        .chain(ood_scores.iter().map(|s| (*s, true)))
        .collect();
    all.sort_by(|a, b| a.0.partial_cmp(&b.0).expect("finite scores"));
    let mut rank_sum_ood = 0.0;
    let mut i = 0;
    while i < all.len() {
        let mut j = i;
        while j + 1 < all.len() && all[j + 1].0 == all[i].0 {
            j += 1;
        }
        // ranks are 1-based; tied entries share the average rank
        let avg_rank = (i + 1 + j + 1) as f64 / 2.0;
        for item in &all[i..=j] {
            if item.1 {
                rank_sum_ood += avg_rank;
            }
        }
        i = j + 1;
    }
    let u = rank_sum_ood - (n_ood * (n_ood + 1)) as f64 / 2.0;
    Ok(u / (n_ood as f64 * n_in as f64))
}

/// Evaluation summary for one trained model and seed.
#[derive(Clone, Debug, Serialize, Deserialize)]
pub struct MetricsReport {
    pub dataset: String,
    pub method: String,
    pub acc: f64,
    pub nll: f64,
    pub ece: f64,
    /// OOD set name -> score name -> AUROC.
    pub auroc: BTreeMap<String, BTreeMap<String, f64>>,
    pub n: usize,
    pub k: usize,
    pub s_eval: usize,
    pub seed: u64,
}

impl MetricsReport {
    pub fn validate(&self) -> Result<()> {
        let in_unit = |v: f64| (0.0..=1.0).contains(&v);
        if !in_unit(self.acc) || !in_unit(self.ece) || self.nll < 0.0 {
            return Err(Error::Data(format!(
                "metrics out of range: acc={} ece={} nll={}",
                self.acc, self.ece, self.nll
            )));
        }
        for scores in self.auroc.values() {
            for (name, v) in scores {
                if !in_unit(*v) {
                    return Err(Error::Data(format!("auroc[{name}]={v} out of range")));
                }
            }
        }
        Ok(())
    }

    /// Flat (metric, dataset, method, value) rows mirroring the tabular
    /// report layout.
    pub fn rows(&self) -> Vec<(String, String, String, f64)> {
        let mut rows = vec![
            ("acc".to_string(), self.dataset.clone(), self.method.clone(), self.acc),
            ("nll".to_string(), self.dataset.clone(), self.method.clone(), self.nll),
            ("ece".to_string(), self.dataset.clone(), self.method.clone(), self.ece),
        ];
        for (ood_set, scores) in &self.auroc {
            for (score, v) in scores {
                rows.push((
                    format!("auroc_{score}"),
                    format!("{}->{ood_set}", self.dataset),
                    self.method.clone(),
                    *v,
                ));
            }
        }
        rows
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::nn::{build_network, ArchPreset};

    fn pb_from_probs(probs: Vec<f64>, n: usize, k: usize) -> PredictiveBatch {
        PredictiveBatch {
            mean_probs: Tensor::new(vec![n, k], probs).unwrap(),
            sample_probs: None,
            s_eval: 1,
        }
    }

    /// Brute-force pairwise AUROC used as the oracle.
    fn pairwise_oracle(in_scores: &[f64], ood_scores: &[f64]) -> f64 {
        let mut total = 0.0;
        for o in ood_scores {
            for i in in_scores {
                total += if o > i {
                    1.0
                } else if o == i {
                    0.5
                } else {
                    0.0
                };
            }
        }
        total / (in_scores.len() * ood_scores.len()) as f64
    }

    #[test]
    fn predictive_rate_zero_equals_deterministic_softmax() {
        let preset = ArchPreset::desk_mlp_custom([1, 8, 8], 16, 0.0);
        let net = build_network(&preset, 3, 1).unwrap();
        let mut rng = RngStream::from_seed(5);
        let inputs = Tensor::randn(vec![4, 1, 8, 8], 1.0, &mut rng);
        let pb = predictive(&net, &inputs, 8, &mut RngStream::from_seed(9), true).unwrap();
        let logits = net
            .forward(&inputs, RunMode::Off, &mut RngStream::from_seed(0))
            .unwrap();
        let mut probs = logits.data().to_vec();
        softmax_rows(&mut probs, 3);
        for (a, b) in pb.mean_probs.data().iter().zip(&probs) {
            assert!((a - b).abs() < 1e-12);
        }
        // all retained samples identical
        let samples = pb.sample_probs.as_ref().unwrap();
        for s in 1..8 {
            assert_eq!(&samples[s * 12..(s + 1) * 12], &samples[..12]);
        }
    }

    #[test]
    fn predictive_rows_sum_to_one() {
        let net = build_network(&ArchPreset::desk_mlp(), 4, 2).unwrap();
        let mut rng = RngStream::from_seed(6);
        let inputs = Tensor::randn(vec![10, 1, 8, 8], 1.0, &mut rng);
        let pb = predictive(&net, &inputs, 5, &mut rng, false).unwrap();
        for row in pb.mean_probs.data().chunks(4) {
            assert!((row.iter().sum::<f64>() - 1.0).abs() <= 1e-9);
        }
    }

    #[test]
    fn predictive_s_eval_one_single_pass() {
        let net = build_network(&ArchPreset::desk_mlp(), 3, 2).unwrap();
        let mut rng = RngStream::from_seed(7);
        let inputs = Tensor::randn(vec![3, 1, 8, 8], 1.0, &mut rng);
        let mut s1 = RngStream::named(11, "dropout");
        let pb = predictive(&net, &inputs, 1, &mut s1, false).unwrap();
        let mut s2 = RngStream::named(11, "dropout");
        let logits = net.forward(&inputs, RunMode::EvalMc, &mut s2).unwrap();
        let mut probs = logits.data().to_vec();
        softmax_rows(&mut probs, 3);
        assert_eq!(pb.mean_probs.data(), probs.as_slice());
    }

    #[test]
    fn accuracy_cases() {
        // all correct
        let pb = pb_from_probs(vec![0.9, 0.1, 0.2, 0.8], 2, 2);
        assert_eq!(accuracy(&pb, &[0, 1]).unwrap(), 1.0);
        // uniform rows tie-break to class 0
        let pb = pb_from_probs(vec![0.25; 8], 2, 4);
        assert_eq!(accuracy(&pb, &[0, 0]).unwrap(), 1.0);
        assert_eq!(accuracy(&pb, &[1, 2]).unwrap(), 0.0);
        // 3 of 4
        let pb = pb_from_probs(
            vec![0.9, 0.1, 0.8, 0.2, 0.3, 0.7, 0.6, 0.4],
            4,
            2,
        );
        assert_eq!(accuracy(&pb, &[0, 0, 1, 1]).unwrap(), 0.75);
    }

    #[test]
    fn nll_cases() {
        let pb = pb_from_probs(vec![1.0, 0.0, 0.0, 1.0], 2, 2);
        assert!(nll(&pb, &[0, 1]).unwrap().abs() < 1e-12);
        let pb = pb_from_probs(vec![0.1; 10], 1, 10);
        assert!((nll(&pb, &[3]).unwrap() - 10f64.ln()).abs() < 1e-12);
        // clamped zero probability
        let pb = pb_from_probs(vec![1.0, 0.0], 1, 2);
        let v = nll(&pb, &[1]).unwrap();
        assert!((v - (-PROB_CLAMP.ln())).abs() < 1e-9, "{v}");
        assert!((v - 27.631).abs() < 0.01);
    }

    #[test]
    fn ece_cases() {
        // confident and correct
        let pb = pb_from_probs(vec![1.0, 0.0, 1.0, 0.0], 2, 2);
        assert_eq!(ece(&pb, &[0, 0], 15).unwrap(), 0.0);
        // two samples at confidence 0.8, one correct: |0.5 - 0.8| = 0.3
        let pb = pb_from_probs(vec![0.8, 0.2, 0.8, 0.2], 2, 2);
        let v = ece(&pb, &[0, 1], 15).unwrap();
        assert!((v - 0.3).abs() < 1e-12, "{v}");
        // empty batch
        let pb = pb_from_probs(vec![], 0, 2);
        assert_eq!(ece(&pb, &[], 15).unwrap(), 0.0);
    }

    #[test]
    fn ece_boundary_goes_to_higher_bin() {
        // confidence exactly 12/15 = 0.8 lands in bin 12 spanning [0.8, 0.8667)
        let pb = pb_from_probs(vec![0.8, 0.2], 1, 2);
        // one sample, correct: bin acc 1, conf 0.8 -> ece 0.2
        let v = ece(&pb, &[0], 15).unwrap();
        assert!((v - 0.2).abs() < 1e-12);
    }

    #[test]
    fn ood_score_cases() {
        let one_hot = pb_from_probs(vec![1.0, 0.0], 1, 2);
        assert_eq!(ood_scores(&one_hot, OodScore::Msp).unwrap()[0], 0.0);
        assert_eq!(ood_scores(&one_hot, OodScore::Entropy).unwrap()[0], 0.0);
        let uniform = pb_from_probs(vec![0.1; 10], 1, 10);
        let h = ood_scores(&uniform, OodScore::Entropy).unwrap()[0];
        assert!((h - 10f64.ln()).abs() < 1e-12);
        assert!(matches!(
            ood_scores(&uniform, OodScore::ExpectedEntropy),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn expected_entropy_equals_entropy_without_dropout() {
        let preset = ArchPreset::desk_mlp_custom([1, 8, 8], 16, 0.0);
        let net = build_network(&preset, 3, 3).unwrap();
        let mut rng = RngStream::from_seed(8);
        let inputs = Tensor::randn(vec![5, 1, 8, 8], 1.0, &mut rng);
        let pb = predictive(&net, &inputs, 4, &mut rng, true).unwrap();
        let e = ood_scores(&pb, OodScore::Entropy).unwrap();
        let ee = ood_scores(&pb, OodScore::ExpectedEntropy).unwrap();
        assert_eq!(e, ee);
    }

    #[test]
    fn jensen_gap_nonnegative() {
        let net = build_network(&ArchPreset::desk_mlp(), 4, 5).unwrap();
        let mut rng = RngStream::from_seed(9);
        let inputs = Tensor::randn(vec![16, 1, 8, 8], 1.0, &mut rng);
        let pb = predictive(&net, &inputs, 16, &mut rng, true).unwrap();
        let e = ood_scores(&pb, OodScore::Entropy).unwrap();
        let ee = ood_scores(&pb, OodScore::ExpectedEntropy).unwrap();
        for (h_mean, h_exp) in e.iter().zip(&ee) {
            assert!(*h_mean >= h_exp - 1e-9, "{h_mean} < {h_exp}");
        }
    }

    #[test]
    fn auroc_hand_cases() {
        assert_eq!(auroc(&[0.1, 0.2], &[0.8, 0.9]).unwrap(), 1.0);
        assert_eq!(auroc(&[0.5, 0.5], &[0.5, 0.5]).unwrap(), 0.5);
        // pairs: (0.4>0.1), (0.4<0.6), (0.7>0.1), (0.7>0.6) -> 3/4
        assert_eq!(auroc(&[0.1, 0.6], &[0.4, 0.7]).unwrap(), 0.75);
        assert!(matches!(auroc(&[], &[0.5]), Err(Error::Usage(_))));
    }

    #[test]
    fn auroc_matches_pairwise_oracle_with_ties() {
        let mut rng = RngStream::from_seed(10);
        for _ in 0..50 {
            let n_in = 1 + rng.below(200);
            let n_ood = 1 + rng.below(200);
            // quantized scores force plenty of ties
            let gen = |rng: &mut RngStream, n: usize| -> Vec<f64> {
                (0..n).map(|_| (rng.uniform() * 8.0).floor() / 8.0).collect()
            };
            let a = gen(&mut rng, n_in);
            let b = gen(&mut rng, n_ood);
            let fast = auroc(&a, &b).unwrap();
            let slow = pairwise_oracle(&a, &b);
            assert_eq!(fast, slow, "rank-sum {fast} vs pairwise {slow}");
        }
    }

    #[test]
    fn binary_msp_and_entropy_rank_identically() {
        let mut rng = RngStream::from_seed(11);
        for _ in 0..20 {
            let n_in = 2 + rng.below(60);
            let n_ood = 2 + rng.below(60);
            let make = |rng: &mut RngStream, n: usize| -> PredictiveBatch {
                let mut probs = Vec::with_capacity(n * 2);
                for _ in 0..n {
                    let p = rng.uniform();
                    probs.push(p);
                    probs.push(1.0 - p);
                }
                pb_from_probs(probs, n, 2)
            };
            let pin = make(&mut rng, n_in);
            let pood = make(&mut rng, n_ood);
            let msp_auc = auroc(
                &ood_scores(&pin, OodScore::Msp).unwrap(),
                &ood_scores(&pood, OodScore::Msp).unwrap(),
            )
            .unwrap();
            let ent_auc = auroc(
                &ood_scores(&pin, OodScore::Entropy).unwrap(),
                &ood_scores(&pood, OodScore::Entropy).unwrap(),
            )
            .unwrap();
            assert_eq!(msp_auc, ent_auc);
        }
    }

    #[test]
    fn metrics_permutation_invariant() {
        let mut rng = RngStream::from_seed(12);
        let n = 40;
        let k = 3;
        let mut probs = Vec::with_capacity(n * k);
        for _ in 0..n {
            let mut row: Vec<f64> = (0..k).map(|_| rng.uniform() + 0.01).collect();
            let z: f64 = row.iter().sum();
            row.iter_mut().for_each(|v| *v /= z);
            probs.extend(row);
        }
        let labels: Vec<usize> = (0..n).map(|_| rng.below(k)).collect();
        let pb = pb_from_probs(probs.clone(), n, k);

        let mut perm: Vec<usize> = (0..n).collect();
        rng.shuffle(&mut perm);
        let mut probs_p = vec![0.0; n * k];
        let mut labels_p = vec![0usize; n];
        for (new_i, &old_i) in perm.iter().enumerate() {
            probs_p[new_i * k..(new_i + 1) * k]
                .copy_from_slice(&probs[old_i * k..(old_i + 1) * k]);
            labels_p[new_i] = labels[old_i];
        }
        let pbp = pb_from_probs(probs_p, n, k);
        assert_eq!(
            accuracy(&pb, &labels).unwrap(),
            accuracy(&pbp, &labels_p).unwrap()
        );
        assert!((nll(&pb, &labels).unwrap() - nll(&pbp, &labels_p).unwrap()).abs() < 1e-12);
        assert!((ece(&pb, &labels, 15).unwrap() - ece(&pbp, &labels_p, 15).unwrap()).abs() < 1e-12);
    }

    #[test]
    fn ece_perfectly_calibrated_batch_is_zero() {
        // build bins where accuracy equals mean confidence exactly:
        // confidence c with round(n*c) of n correct, for c on bin centers
        let mut probs = Vec::new();
        let mut labels = Vec::new();
        for (conf, n, correct) in [(0.8, 5usize, 4usize), (0.6, 5, 3), (0.9, 10, 9)] {
            for i in 0..n {
                probs.push(conf);
                probs.push(1.0 - conf);
                labels.push(if i < correct { 0 } else { 1 });
            }
        }
        let n = labels.len();
        let pb = pb_from_probs(probs, n, 2);
        let v = ece(&pb, &labels, 15).unwrap();
        assert!(v <= 1e-9, "calibrated ECE {v}");
    }

    #[test]
    fn report_validation_and_rows() {
        let mut auroc_map = BTreeMap::new();
        auroc_map.insert(
            "noise".to_string(),
            BTreeMap::from([("msp".to_string(), 0.93)]),
        );
        let rep = MetricsReport {
            dataset: "synth".into(),
            method: "fseb".into(),
            acc: 0.9,
            nll: 0.3,
            ece: 0.05,
            auroc: auroc_map,
            n: 100,
            k: 3,
            s_eval: 32,
            seed: 0,
        };
        rep.validate().unwrap();
        let rows = rep.rows();
        assert_eq!(rows.len(), 4);
        assert_eq!(rows[3].0, "auroc_msp");
        assert_eq!(rows[3].1, "synth->noise");
    }
}
