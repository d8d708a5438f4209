//! The four-step context generation pipeline: input specification,
//! multi-modal summarization of reference images, systematic prompt
//! construction over class descriptors, and image synthesis, followed by
//! the separate embedding fill.

use serde::{Deserialize, Serialize};

use super::{
    ContextBundle, ContextImage, ContextServices, Embeddings, ImageSet,
};
use crate::error::{Error, Result};
use crate::rng::RngStream;

/// A constructed generation prompt; every field is a deterministic function
/// of the inputs.
#[derive(Clone, Debug, PartialEq, Serialize, Deserialize)]
pub struct PromptSpec {
    pub requirements: String,
    pub summary: String,
    pub class_descriptor: String,
    pub rendered: String,
    pub count: usize,
    pub width: usize,
    pub height: usize,
}

/// Deterministic template join; systematic variation comes from iterating
/// the class descriptor. Empty sections are skipped.
pub fn build_prompt(
    requirements: &str,
    summary: &str,
    class_descriptor: &str,
    count: usize,
    size: usize,
) -> PromptSpec {
    let mut parts = Vec::new();
    if !summary.is_empty() {
        parts.push(format!("Style reference: {summary}"));
    }
    if !requirements.is_empty() {
        parts.push(format!("Constraints: {requirements}"));
    }
    if !class_descriptor.is_empty() {
        parts.push(format!("Subject: {class_descriptor}"));
    }
    parts.push(format!("Produce {count} images at {size}x{size} pixels."));
    PromptSpec {
        requirements: requirements.to_string(),
        summary: summary.to_string(),
        class_descriptor: class_descriptor.to_string(),
        rendered: parts.join("\n"),
        count,
        width: size,
        height: size,
    }
}

/// Inputs to a generation run (pipeline step 1).
#[derive(Clone, Debug)]
pub struct GenerationPlan {
    pub requirements: String,
    pub reference_images: Vec<ContextImage>,
    /// One descriptor per class; prompts iterate over these.
    pub classes: Vec<String>,
    pub per_class: usize,
    pub image_size: usize,
}

impl GenerationPlan {
    pub fn validate(&self) -> Result<()> {
        if self.reference_images.is_empty() {
            return Err(Error::Usage("generation needs at least one reference image".into()));
        }
        if self.classes.is_empty() {
            return Err(Error::Config("generation needs at least one class descriptor".into()));
        }
        if self.per_class == 0 {
            return Err(Error::Config("per_class must be >= 1".into()));
        }
        if self.image_size < 4 {
            return Err(Error::Config(format!("image size {} < 4", self.image_size)));
        }
        Ok(())
    }
}

/// Steps 2-4 against the given services: summarize the references, build a
/// prompt per class, synthesize images, and assemble an image-only bundle
/// (embeddings arrive later through [`embed_bundle`]).
pub fn generate_context(
    services: &dyn ContextServices,
    plan: &GenerationPlan,
    rng: &mut RngStream,
) -> Result<ContextBundle> {
    plan.validate()?;
    let summary = services.summarize(&plan.reference_images, &plan.requirements)?;
    let mut images: Vec<ContextImage> = Vec::with_capacity(plan.classes.len() * plan.per_class);
    for descriptor in &plan.classes {
        let prompt = build_prompt(
            &plan.requirements,
            &summary,
            descriptor,
            plan.per_class,
            plan.image_size,
        );
        images.extend(services.synthesize(&prompt, plan.per_class, rng)?);
    }
    let set = ImageSet::from_images(&images)?;
    let m_total = set.len();
    ContextBundle::new(
        Some(set),
        Embeddings {
            n: m_total,
            d: 0,
            data: Vec::new(),
        },
        services.provider_info(),
        plan.classes.clone(),
    )
}

/// Fill (or refresh) a bundle's embeddings from its stored images.
pub fn embed_bundle(
    services: &dyn ContextServices,
    bundle: &ContextBundle,
    batch_size: usize,
) -> Result<ContextBundle> {
    let set = bundle
        .images
        .as_ref()
        .ok_or_else(|| Error::Usage("bundle holds no images to embed".into()))?;
    let embeddings = services.embed(&set.images(), batch_size)?;
    if embeddings.d == 0 {
        return Err(Error::Protocol("embedder returned zero-dimensional rows".into()));
    }
    let mut providers = bundle.manifest.providers.clone();
    providers.embedder = services.provider_info().embedder;
    ContextBundle::new(
        Some(set.clone()),
        embeddings,
        providers,
        bundle.manifest.classes.clone(),
    )
}

#[cfg(test)]
mod tests {
    use super::*;
    use crate::context::{OfflineStub, StubEmbedding};

    #[test]
    fn prompt_skips_empty_sections() {
        let p = build_prompt("", "vivid watercolor", "a striped pattern", 4, 16);
        assert!(!p.rendered.contains("Constraints"));
        assert!(p.rendered.contains("Style reference: vivid watercolor"));
        assert!(p.rendered.contains("Subject: a striped pattern"));
        assert!(!p.rendered.is_empty());
    }

    #[test]
    fn prompt_is_deterministic() {
        let a = build_prompt("r", "s", "c", 2, 8);
        let b = build_prompt("r", "s", "c", 2, 8);
        assert_eq!(a, b);
    }

    #[test]
    fn prompts_vary_only_in_descriptor_slot() {
        let descriptors: Vec<String> = (0..10).map(|i| format!("class-{i}")).collect();
        let prompts: Vec<PromptSpec> = descriptors
            .iter()
            .map(|d| build_prompt("req", "sum", d, 3, 8))
            .collect();
        for (i, p) in prompts.iter().enumerate() {
            assert_eq!(p.class_descriptor, descriptors[i]);
            for q in &prompts[i + 1..] {
                assert_ne!(p.rendered, q.rendered);
            }
            let stripped = p.rendered.replace(&descriptors[i], "{D}");
            let other = prompts[(i + 1) % 10]
                .rendered
                .replace(&descriptors[(i + 1) % 10], "{D}");
            assert_eq!(stripped, other);
        }
    }

    #[test]
    fn stub_pipeline_end_to_end_deterministic() {
        let stub = OfflineStub::new(8, 8)
            .with_classes(vec!["a".into(), "b".into()])
            .with_embedding(StubEmbedding::Hash);
        let reference = ContextImage::from_unit_floats(8, 8, &[0.5; 64]);
        let plan = GenerationPlan {
            requirements: "same visual style".into(),
            reference_images: vec![reference],
            classes: vec!["a".into(), "b".into()],
            per_class: 3,
            image_size: 8,
        };
        let run = |seed: u64| {
            let mut rng = RngStream::from_seed(seed);
            let bundle = generate_context(&stub, &plan, &mut rng).unwrap();
            embed_bundle(&stub, &bundle, 4).unwrap()
        };
        let a = run(5);
        let b = run(5);
        assert_eq!(a.embeddings, b.embeddings);
        assert_eq!(a.images, b.images);
        assert_eq!(a.m_total, 6);
        assert_eq!(a.d, 8);
        a.validate().unwrap();
        assert!(!a.has_embeddings() || a.d > 0);
        // different seed changes the synthesized images
        let c = run(6);
        assert_ne!(a.images, c.images);
    }

    #[test]
    fn generation_without_references_rejected() {
        let stub = OfflineStub::new(4, 8);
        let plan = GenerationPlan {
            requirements: String::new(),
            reference_images: vec![],
            classes: vec!["a".into()],
            per_class: 1,
            image_size: 8,
        };
        assert!(matches!(
            generate_context(&stub, &plan, &mut RngStream::from_seed(0)),
            Err(Error::Usage(_))
        ));
    }

    #[test]
    fn embed_fills_dimension() {
        let stub = OfflineStub::new(12, 8).with_classes(vec!["a".into()]);
        let reference = ContextImage::from_unit_floats(8, 8, &[0.3; 64]);
        let plan = GenerationPlan {
            requirements: "r".into(),
            reference_images: vec![reference],
            classes: vec!["a".into()],
            per_class: 4,
            image_size: 8,
        };
        let mut rng = RngStream::from_seed(1);
        let bundle = generate_context(&stub, &plan, &mut rng).unwrap();
        assert_eq!(bundle.d, 0);
        assert!(!bundle.has_embeddings());
        let filled = embed_bundle(&stub, &bundle, 2).unwrap();
        assert_eq!(filled.d, 12);
        assert!(filled.has_embeddings());
        assert_eq!(filled.manifest.embeddings_sha256.len(), 64);
    }
}
