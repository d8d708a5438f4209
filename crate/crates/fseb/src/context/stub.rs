//! Offline stand-ins for the generation/embedding providers. Everything is
//! a deterministic function of content hashes and the supplied rng stream,
//! so the whole pipeline runs and tests without network access.

use sha2::{Digest, Sha256};

use super::{ContextImage, ContextServices, Embeddings, PromptSpec, ProviderInfo};
use crate::data::{render_class_image, stripe_orientation, GeneratorKind, STRIPE_CYCLES};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// How the stub maps an image to an embedding row.
#[derive(Clone, Debug, PartialEq)]
pub enum StubEmbedding {
    /// Pseudo-embedding seeded by the image content hash; no semantics.
    Hash,
    /// Class-aware: a matched filter recovers the stripe orientation the
    /// synthetic generator used and maps it to a class-specific mean
    /// direction plus content noise. Falls back to hash noise when no
    /// orientation stands out.
    Semantic { classes: usize },
    /// Seeded random projection of the raw pixels; the
    /// randomly-initialized-encoder ablation arm.
    RandomProjection { seed: u64 },
}

/// Offline provider: procedural textures for synthesis and deterministic
/// pseudo-embeddings.
#[derive(Clone, Debug)]
pub struct OfflineStub {
    pub embed_dim: usize,
    pub image_size: usize,
    pub embedding: StubEmbedding,
    /// Class descriptors the generator recognizes; a prompt whose
    /// descriptor matches synthesizes that class's stripe family.
    pub classes: Vec<String>,
    /// Pattern family used for synthesized context images.
    pub family: GeneratorKind,
}

impl OfflineStub {
    pub fn new(embed_dim: usize, image_size: usize) -> Self {
        OfflineStub {
            embed_dim,
            image_size,
            embedding: StubEmbedding::Hash,
            classes: Vec::new(),
            family: GeneratorKind::Stripes,
        }
    }

    pub fn with_classes(mut self, classes: Vec<String>) -> Self {
        self.classes = classes;
        self
    }

    pub fn with_embedding(mut self, embedding: StubEmbedding) -> Self {
        self.embedding = embedding;
        self
    }

    fn seed_from(bytes: &[u8]) -> u64 {
        let digest = Sha256::digest(bytes);
        u64::from_le_bytes(digest[..8].try_into().expect("8 bytes"))
    }

    fn hash_embedding(&self, img: &ContextImage) -> Vec<f32> {
        let mut rng = RngStream::from_seed(Self::seed_from(&img.content_hash()));
        (0..self.embed_dim).map(|_| rng.normal() as f32).collect()
    }

    fn semantic_embedding(&self, img: &ContextImage, classes: usize) -> Vec<f32> {
        let pixels = img.to_unit_floats();
        let class = detect_stripe_class(&pixels, img.h, img.w, classes);
        let mut rng = RngStream::from_seed(Self::seed_from(&img.content_hash()));
        let noise_scale = 0.3 / (self.embed_dim as f64).sqrt();
        let mut row: Vec<f64> = (0..self.embed_dim)
            .map(|_| rng.normal() * noise_scale)
            .collect();
        if let Some(c) = class {
            row[c % self.embed_dim] += 1.0;
        }
        let norm = row.iter().map(|v| v * v).sum::<f64>().sqrt().max(1e-12);
        row.into_iter().map(|v| (v / norm) as f32).collect()
    }

    fn projection_embedding(&self, img: &ContextImage, seed: u64) -> Vec<f32> {
        // seeded dense projection of the raw pixels; rows of the projection
        // matrix are derived per output dimension so the map is fixed
        let pixels = img.to_unit_floats();
        (0..self.embed_dim)
            .map(|j| {
                let mut rng = RngStream::named(seed ^ j as u64, "rand-proj");
                let mut acc = 0.0;
                for p in &pixels {
                    acc += p * rng.normal();
                }
                (acc / (pixels.len() as f64).sqrt()) as f32
            })
            .collect()
    }
}

/// Matched-filter orientation detector for the stripes family: quadrature
/// energy at each class orientation, None when no orientation dominates.
pub fn detect_stripe_class(pixels: &[f64], h: usize, w: usize, classes: usize) -> Option<usize> {
    let mut energies = Vec::with_capacity(classes);
    for k in 0..classes {
        let theta = stripe_orientation(k, classes);
        let (cos_t, sin_t) = (theta.cos(), theta.sin());
        let (mut re, mut im) = (0.0, 0.0);
        for y in 0..h {
            for x in 0..w {
                let u = (x as f64 + 0.5) / w as f64 - 0.5;
                let v = (y as f64 + 0.5) / h as f64 - 0.5;
                let s = u * cos_t + v * sin_t;
                let arg = std::f64::consts::TAU * STRIPE_CYCLES * s;
                let p = pixels[y * w + x] - 0.5;
                re += p * arg.cos();
                im += p * arg.sin();
            }
        }
        energies.push(re * re + im * im);
    }
    let mut best = 0;
    for (k, e) in energies.iter().enumerate() {
        if *e > energies[best] {
            best = k;
        }
    }
    let second = energies
        .iter()
        .enumerate()
        .filter(|(k, _)| *k != best)
        .map(|(_, e)| *e)
        .fold(f64::NEG_INFINITY, f64::max);
    // A grating of amplitude a concentrates (a/2 * n_px)^2 of quadrature
    // energy at its orientation, while iid noise stays near n_px / 12 per
    // orientation; the absolute floor rejects noise decisively.
    let n_px = (h * w) as f64;
    let floor = (0.08 * n_px).powi(2);
    if energies[best] > 2.0 * second.max(0.0) && energies[best] > floor {
        Some(best)
    } else {
        None
    }
}

impl ContextServices for OfflineStub {
    fn provider_info(&self) -> ProviderInfo {
        let embedder = match self.embedding {
            StubEmbedding::Hash => "stub-hash",
            StubEmbedding::Semantic { .. } => "stub-semantic",
            StubEmbedding::RandomProjection { .. } => "stub-rand-proj",
        };
        ProviderInfo {
            summarizer: "stub-summarizer".into(),
            generator: "stub-generator".into(),
            embedder: embedder.into(),
        }
    }

    fn summarize(&self, reference_images: &[ContextImage], requirements: &str) -> Result<String> {
        if reference_images.is_empty() {
            return Err(Error::Usage("summarize requires at least one reference image".into()));
        }
        let mut hasher = Sha256::new();
        for img in reference_images {
            hasher.update(img.content_hash());
        }
        let digest = hasher.finalize();
        let mean: f64 = reference_images
            .iter()
            .flat_map(|i| i.data.iter())
            .map(|p| f64::from(*p))
            .sum::<f64>()
            / reference_images
                .iter()
                .map(|i| i.data.len())
                .sum::<usize>() as f64
            / 255.0;
        Ok(format!(
            "Reference set of {} images at {}x{}; mean intensity {:.3}; signature {:02x}{:02x}{:02x}{:02x}. Requirements: {}",
            reference_images.len(),
            reference_images[0].w,
            reference_images[0].h,
            mean,
            digest[0],
            digest[1],
            digest[2],
            digest[3],
            if requirements.is_empty() { "none" } else { requirements },
        ))
    }

    fn synthesize(
        &self,
        prompt: &PromptSpec,
        n: usize,
        rng: &mut RngStream,
    ) -> Result<Vec<ContextImage>> {
        if n == 0 {
            return Err(Error::Usage("synthesize requires n >= 1".into()));
        }
        let size = if prompt.width > 0 { prompt.width } else { self.image_size };
        let class = self
            .classes
            .iter()
            .position(|c| *c == prompt.class_descriptor);
        let salt = rng.next_u64();
        let prompt_seed = Self::seed_from(prompt.rendered.as_bytes()) ^ salt;
        let mut images = Vec::with_capacity(n);
        for i in 0..n {
            let mut draw_rng = RngStream::from_seed(prompt_seed.wrapping_add(i as u64));
            let pixels = match class {
                Some(c) => render_class_image(
                    self.family,
                    size,
                    c,
                    self.classes.len().max(1),
                    0.05,
                    &mut draw_rng,
                ),
                None => {
                    // unknown descriptor: procedural texture keyed by prompt
                    (0..size * size)
                        .map(|_| 0.5 + 0.5 * (draw_rng.uniform() - 0.5))
                        .collect()
                }
            };
            images.push(ContextImage::from_unit_floats(size, size, &pixels));
        }
        Ok(images)
    }

    fn embed(&self, images: &[ContextImage], batch_size: usize) -> Result<Embeddings> {
        if images.is_empty() {
            return Err(Error::Usage("embed requires at least one image".into()));
        }
        if batch_size == 0 {
            return Err(Error::Config("batch_size must be >= 1".into()));
        }
        let mut data = Vec::with_capacity(images.len() * self.embed_dim);
        for chunk in images.chunks(batch_size) {
            for img in chunk {
                let row = match &self.embedding {
                    StubEmbedding::Hash => self.hash_embedding(img),
                    StubEmbedding::Semantic { classes } => self.semantic_embedding(img, *classes),
                    StubEmbedding::RandomProjection { seed } => {
                        self.projection_embedding(img, *seed)
                    }
                };
                data.extend(row);
            }
        }
        Ok(Embeddings {
            n: images.len(),
            d: self.embed_dim,
            data,
        })
    }
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::build_prompt;

    fn stub() -> OfflineStub {
        OfflineStub::new(16, 8).with_classes(vec!["alpha".into(), "beta".into(), "gamma".into()])
    }

    fn demo_image(seed: u64) -> ContextImage {
        let mut rng = RngStream::from_seed(seed);
        let vals: Vec<f64> = (0..64).map(|_| rng.uniform()).collect();
        ContextImage::from_unit_floats(8, 8, &vals)
    }

    #[test]
    fn summarize_is_deterministic() {
        let s = stub();
        let img = demo_image(1);
        let a = s.summarize(std::slice::from_ref(&img), "keep the style").unwrap();
        let b = s.summarize(&[img], "keep the style").unwrap();
        assert_eq!(a, b);
        assert!(a.contains("Reference set of 1 images"));
    }

    #[test]
    fn summarize_requires_references() {
        assert!(matches!(
            stub().summarize(&[], "x"),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn synthesize_deterministic_and_distinct() {
        let s = stub();
        let prompt = build_prompt("req", "summary", "alpha", 3, 8);
        let a = s.synthesize(&prompt, 3, &mut RngStream::from_seed(5)).unwrap();
        let b = s.synthesize(&prompt, 3, &mut RngStream::from_seed(5)).unwrap();
        assert_eq!(a, b);
        assert_ne!(a[0], a[1]);
        assert_ne!(a[1], a[2]);
    }

    #[test]
    fn synthesize_zero_rejected() {
        let s = stub();
        let prompt = build_prompt("", "", "alpha", 1, 8);
        assert!(matches!(
            s.synthesize(&prompt, 0, &mut RngStream::from_seed(0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn embed_same_image_same_row() {
        let s = stub();
        let img = demo_image(7);
        let e = s.embed(&[img.clone(), img], 1).unwrap();
        assert_eq!(&e.data[..16], &e.data[16..]);
    }

    #[test]
    fn embed_batching_matches_single_shot() {
        let s = stub();
        let imgs: Vec<ContextImage> = (0..5).map(demo_image).collect();
        let a = s.embed(&imgs, 2).unwrap();
        let b = s.embed(&imgs, 5).unwrap();
        assert_eq!(a, b);
    }

    #[test]
    fn semantic_stub_separates_classes() {
        let s = OfflineStub::new(16, 12)
            .with_classes(vec!["c0".into(), "c1".into(), "c2".into()])
            .with_embedding(StubEmbedding::Semantic { classes: 3 });
        // generate 100 stripe images across 3 classes through the stub itself
        let mut all = Vec::new();
        let mut labels = Vec::new();
        let mut rng = RngStream::from_seed(11);
        for c in 0..3 {
            let prompt = build_prompt("req", "sum", &format!("c{c}"), 1, 12);
            let imgs = s
                .synthesize(&prompt, if c == 0 { 34 } else { 33 }, &mut rng)
                .unwrap();
            labels.extend(std::iter::repeat_n(c, imgs.len()));
            all.extend(imgs);
        }
        let emb = s.embed(&all, 16).unwrap();
        let cos = |a: &[f32], b: &[f32]| -> f64 {
            let dot: f64 = a.iter().zip(b).map(|(x, y)| f64::from(*x) * f64::from(*y)).sum();
            let na: f64 = a.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            let nb: f64 = b.iter().map(|x| f64::from(*x).powi(2)).sum::<f64>().sqrt();
            dot / (na * nb)
        };
        let row = |i: usize| &emb.data[i * 16..(i + 1) * 16];
        let (mut within, mut within_n) = (0.0, 0);
        let (mut cross, mut cross_n) = (0.0, 0);
        for i in 0..all.len() {
            for j in (i + 1)..all.len() {
                let c = cos(row(i), row(j));
                if labels[i] == labels[j] {
                    within += c;
                    within_n += 1;
                } else {
                    cross += c;
                    cross_n += 1;
                }
            }
        }
        let within_mean = within / within_n as f64;
        let cross_mean = cross / cross_n as f64;
        assert!(
            within_mean > cross_mean + 0.2,
            "within {within_mean} vs cross {cross_mean}"
        );
    }

    #[test]
    fn orientation_detector_recovers_generator_class() {
        let mut rng = RngStream::from_seed(3);
        for k in 0..4 {
            for _ in 0..5 {
                let img = render_class_image(GeneratorKind::Stripes, 12, k, 4, 0.05, &mut rng);
                assert_eq!(detect_stripe_class(&img, 12, 12, 4), Some(k));
            }
        }
        // pure noise must not pick a confident class
        for _ in 0..20 {
            let noise = render_class_image(GeneratorKind::Noise, 12, 0, 4, 0.0, &mut rng);
            assert_eq!(detect_stripe_class(&noise, 12, 12, 4), None);
        }
    }
}
