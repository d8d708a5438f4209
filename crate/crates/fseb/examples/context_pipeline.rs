//! The four-step context generation pipeline against the offline stub:
//! reference summarization, per-class prompt construction, image synthesis,
//! then the embedding fill and a bundle round-trip through disk.

use fseb::context::{
    embed_bundle, generate_context, load_context_bundle, sample_context_batch,
    write_context_bundle, ContextImage, GenerationPlan, OfflineStub, StubEmbedding,
};
use fseb::rng::RngStream;

fn main() {
    let classes: Vec<String> = (0..4).map(|c| format!("class-{c}")).collect();
    let stub = OfflineStub::new(32, 16)
        .with_classes(classes.clone())
        .with_embedding(StubEmbedding::Semantic { classes: 4 });

    // step 1: requirements and reference images
    let mut rng = RngStream::from_seed(3);
    let references: Vec<ContextImage> = (0..4)
        .map(|_| {
            let vals: Vec<f64> = (0..256).map(|_| rng.uniform()).collect();
            ContextImage::from_unit_floats(16, 16, &vals)
        })
        .collect();
    let plan = GenerationPlan {
        requirements: "maintain the same visual style".into(),
        reference_images: references,
        classes,
        per_class: 8,
        image_size: 16,
    };

    // steps 2-4
    let bundle = generate_context(&stub, &plan, &mut rng).unwrap();
    println!(
        "generated {} context images ({}x{})",
        bundle.m_total,
        bundle.images.as_ref().unwrap().w,
        bundle.images.as_ref().unwrap().h,
    );

    // embedding fill
    let bundle = embed_bundle(&stub, &bundle, 8).unwrap();
    println!("embedded into d = {}", bundle.d);

    // disk round-trip with checksum verification
    let dir = std::env::temp_dir().join("fseb_context_example");
    let _ = std::fs::remove_dir_all(&dir);
    write_context_bundle(&bundle, &dir).unwrap();
    let loaded = load_context_bundle(&dir).unwrap();
    assert_eq!(loaded.embeddings, bundle.embeddings);
    println!("bundle round-tripped through {}", dir.display());

    // per-step sampling
    let (indices, rows) = sample_context_batch(&loaded, 8, &mut rng).unwrap();
    println!("sampled context batch: indices {indices:?}, embeddings {:?}", rows.shape());
}
