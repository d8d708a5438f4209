// ablation trend dry run: semantic embeddings vs random projection
use fseb::cli::{run_ablation_variant, AblationVariant, DatasetConfig, RunConfig};
use fseb::prior::KernelConfig;
use fseb::train::TrainConfig;

fn main() {
    let cfg = RunConfig {
        arch: "desk_mlp".into(),
        arch_dropout: Some(0.2),
        arch_hidden: Some(32),
        arch_input: Some([1, 12, 12]),
        dataset: DatasetConfig::Synth {
            spec: fseb::data::SynthSpec {
                generator: fseb::data::GeneratorKind::Stripes,
                size: 12,
                classes: 3,
                per_class: 40,
                noise_level: 0.05,
                ood: fseb::data::OodKind::DisjointFamily,
                ood_count: 90,
                seed: 100,
            },
        },
        subsample_fraction: None,
        test_subsample_fraction: None,
        bundle_dir: "/tmp/unused".into(),
        train: TrainConfig {
            batch_size: 32,
            lr: 3e-3,
            weight_decay: 1e-4,
            context_batch: 16,
            max_epochs: 25,
            patience: 8,
            val_fraction: 0.15,
            val_mc_samples: 8,
            ..TrainConfig::default()
        },
        kernel: KernelConfig {
            tau1: 1.0,
            tau2: 0.1,
            normalize_embeddings: false,
        },
        s_eval: 16,
        seeds: vec![1, 2, 3, 4, 5],
        out_dir: "/tmp/unused_out".into(),
    };
    let t0 = std::time::Instant::now();
    let mut wins_msp = 0;
    let mut wins_ent = 0;
    for seed in [1u64, 2, 3, 4, 5] {
        let a = run_ablation_variant(AblationVariant::VlmVlm, &cfg, seed).unwrap();
        let b = run_ablation_variant(AblationVariant::RandVlm, &cfg, seed).unwrap();
        let (am, ae) = (a.auroc["shifted"]["msp"], a.auroc["shifted"]["entropy"]);
        let (bm, be) = (b.auroc["shifted"]["msp"], b.auroc["shifted"]["entropy"]);
        if am >= bm { wins_msp += 1; }
        if ae >= be { wins_ent += 1; }
        println!(
            "seed {seed}: vlm_vlm acc {:.3} msp {:.3} ent {:.3} | rand_vlm acc {:.3} msp {:.3} ent {:.3}",
            a.acc, am, ae, b.acc, bm, be
        );
    }
    println!("msp wins {wins_msp}/5, entropy wins {wins_ent}/5, elapsed {:.0}s", t0.elapsed().as_secs_f64());
}
