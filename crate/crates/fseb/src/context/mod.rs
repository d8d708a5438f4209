//! Context-point lifecycle: generation against external services (or the
//! offline stubs), the on-disk context bundle, and per-step context batch
//! sampling.
//!
//! A bundle lives in a directory: `manifest.json` describing dims, provider
//! names and SHA-256 checksums; `embeddings.f32` (little-endian row-major
//! float32, M x d); and optionally `images.u8` (raw M x H x W x C bytes).
//! A freshly generated bundle has `d == 0` until an embed pass fills it.

mod pipeline;
mod provider;
mod stub;

pub use pipeline::{build_prompt, embed_bundle, generate_context, GenerationPlan, PromptSpec};
pub use provider::{decode_png, encode_png, HttpProvider, ServiceEndpoint};
pub use stub::{OfflineStub, StubEmbedding};

use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// A single uint8 image, height x width x channels.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ContextImage {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    pub data: Vec<u8>,
}

impl ContextImage {
    pub fn from_unit_floats(h: usize, w: usize, values: &[f64]) -> Self {
        ContextImage {
            h,
            w,
            c: 1,
            data: values
                .iter()
                .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8)
                .collect(),
        }
    }

    /// Grayscale f64 pixels in [0,1] (channels averaged).
    pub fn to_unit_floats(&self) -> Vec<f64> {
        if self.c == 1 {
            self.data.iter().map(|p| f64::from(*p) / 255.0).collect()
        } else {
            self.data
                .chunks(self.c)
                .map(|px| {
                    px.iter().map(|p| f64::from(*p)).sum::<f64>() / (self.c as f64 * 255.0)
                })
                .collect()
        }
    }

    pub fn content_hash(&self) -> [u8; 32] {
        let mut hasher = Sha256::new();
        hasher.update((self.h as u64).to_le_bytes());
        hasher.update((self.w as u64).to_le_bytes());
        hasher.update((self.c as u64).to_le_bytes());
        hasher.update(&self.data);
        hasher.finalize().into()
    }
}

/// Dense row-major float32 embedding rows.
#[derive(Clone, Debug, PartialEq)]
pub struct Embeddings {
    pub n: usize,
    pub d: usize,
    pub data: Vec<f32>,
}

/// Stacked context images with shared dimensions.
#[derive(Clone, Debug, PartialEq, Eq)]
pub struct ImageSet {
    pub h: usize,
    pub w: usize,
    pub c: usize,
    /// m_total x h x w x c bytes.
    pub data: Vec<u8>,
}

impl ImageSet {
    pub fn from_images(images: &[ContextImage]) -> Result<ImageSet> {
        let first = images
            .first()
            .ok_or_else(|| Error::Usage("image set cannot be empty".into()))?;
        let (h, w, c) = (first.h, first.w, first.c);
        let mut data = Vec::with_capacity(images.len() * h * w * c);
        for img in images {
            if img.h != h || img.w != w || img.c != c {
                return Err(Error::Dim(format!(
                    "inconsistent image dims {}x{}x{} vs {}x{}x{}",
                    img.h, img.w, img.c, h, w, c
                )));
            }
            data.extend_from_slice(&img.data);
        }
        Ok(ImageSet { h, w, c, data })
    }

    pub fn len(&self) -> usize {
        self.data.len().checked_div(self.h * self.w * self.c).unwrap_or(0)
    }

    pub fn is_empty(&self) -> bool {
        self.len() == 0
    }

    pub fn image(&self, i: usize) -> ContextImage {
        let stride = self.h * self.w * self.c;
        ContextImage {
            h: self.h,
            w: self.w,
            c: self.c,
            data: self.data[i * stride..(i + 1) * stride].to_vec(),
        }
    }

    pub fn images(&self) -> Vec<ContextImage> {
        (0..self.len()).map(|i| self.image(i)).collect()
    }
}

/// Provider names recorded for provenance.
#[derive(Clone, Debug, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct ProviderInfo {
    pub summarizer: String,
    pub generator: String,
    pub embedder: String,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct Manifest {
    pub m_total: usize,
    pub d: usize,
    /// (h, w, c) when images are stored.
    pub image_dims: Option<[usize; 3]>,
    pub providers: ProviderInfo,
    /// Class descriptors the generation iterated over, for provenance.
    #[serde(default)]
    pub classes: Vec<String>,
    /// SHA-256 hex of embeddings.f32.
    pub embeddings_sha256: String,
    /// SHA-256 hex of images.u8, when present.
    pub images_sha256: Option<String>,
}

#[derive(Clone, Debug)]
pub struct ContextBundle {
    pub m_total: usize,
    pub d: usize,
    pub images: Option<ImageSet>,
    /// m_total x d row-major.
    pub embeddings: Vec<f32>,
    pub manifest: Manifest,
}

fn sha256_hex(bytes: &[u8]) -> String {
    let digest = Sha256::digest(bytes);
    let mut out = String::with_capacity(64);
    for b in digest {
        out.push_str(&format!("{b:02x}"));
    }
    out
}

fn embeddings_bytes(embeddings: &[f32]) -> Vec<u8> {
    let mut out = Vec::with_capacity(embeddings.len() * 4);
    for v in embeddings {
        out.extend_from_slice(&v.to_le_bytes());
    }
    out
}

impl ContextBundle {
    /// Assemble a bundle and compute its manifest checksums.
    pub fn new(
        images: Option<ImageSet>,
        embeddings: Embeddings,
        providers: ProviderInfo,
        classes: Vec<String>,
    ) -> Result<ContextBundle> {
        let m_total = match &images {
            Some(set) => set.len(),
            None => embeddings.n,
        };
        if embeddings.n != m_total {
            return Err(Error::Dim(format!(
                "{} embedding rows for {} images",
                embeddings.n, m_total
            )));
        }
        if m_total == 0 {
            return Err(Error::Usage("bundle cannot be empty".into()));
        }
        let manifest = Manifest {
            m_total,
            d: embeddings.d,
            image_dims: images.as_ref().map(|s| [s.h, s.w, s.c]),
            providers,
            classes,
            embeddings_sha256: sha256_hex(&embeddings_bytes(&embeddings.data)),
            images_sha256: images.as_ref().map(|s| sha256_hex(&s.data)),
        };
        let bundle = ContextBundle {
            m_total,
            d: embeddings.d,
            images,
            embeddings: embeddings.data,
            manifest,
        };
        bundle.validate()?;
        Ok(bundle)
    }

    pub fn validate(&self) -> Result<()> {
        if self.manifest.m_total != self.m_total || self.manifest.d != self.d {
            return Err(Error::Format("manifest dims disagree with bundle".into()));
        }
        if self.embeddings.len() != self.m_total * self.d {
            return Err(Error::Format(format!(
                "embeddings length {} != {} x {}",
                self.embeddings.len(),
                self.m_total,
                self.d
            )));
        }
        if let Some(set) = &self.images {
            if set.len() != self.m_total {
                return Err(Error::Format(format!(
                    "image count {} != m_total {}",
                    set.len(),
                    self.m_total
                )));
            }
            if self.manifest.image_dims != Some([set.h, set.w, set.c]) {
                return Err(Error::Format("manifest image dims disagree".into()));
            }
        } else if self.manifest.image_dims.is_some() {
            return Err(Error::Format("manifest promises images that are absent".into()));
        }
        if self.embeddings.iter().any(|v| !v.is_finite()) {
            return Err(Error::Data("non-finite embedding in bundle".into()));
        }
        Ok(())
    }

    /// True once an embed pass has filled the bundle.
    pub fn has_embeddings(&self) -> bool {
        self.d > 0
    }

    /// Context images for `indices` as a [m, C, H, W] float tensor in [0,1].
    pub fn images_for(&self, indices: &[usize]) -> Result<Tensor> {
        let set = self
            .images
            .as_ref()
            .ok_or_else(|| Error::Usage("bundle holds no images".into()))?;
        let (h, w, c) = (set.h, set.w, set.c);
        let stride = h * w * c;
        let mut out = Vec::with_capacity(indices.len() * stride);
        for &i in indices {
            if i >= set.len() {
                return Err(Error::Dim(format!("image index {i} out of range")));
            }
            let img = &set.data[i * stride..(i + 1) * stride];
            // HWC -> CHW
            for ch in 0..c {
                for y in 0..h {
                    for x in 0..w {
                        out.push(f64::from(img[(y * w + x) * c + ch]) / 255.0);
                    }
                }
            }
        }
        Tensor::new(vec![indices.len(), c, h, w], out)
    }

    /// Embedding rows for `indices` as a [m, d] float64 tensor.
    pub fn embeddings_for(&self, indices: &[usize]) -> Result<Tensor> {
        if !self.has_embeddings() {
            return Err(Error::Usage("bundle has no embeddings yet".into()));
        }
        let mut out = Vec::with_capacity(indices.len() * self.d);
        for &i in indices {
            if i >= self.m_total {
                return Err(Error::Dim(format!("embedding index {i} out of range")));
            }
            out.extend(
                self.embeddings[i * self.d..(i + 1) * self.d]
                    .iter()
                    .map(|v| f64::from(*v)),
            );
        }
        Tensor::new(vec![indices.len(), self.d], out)
    }
}

/// Uniform without-replacement draw of a context batch; returns the indices
/// and the corresponding embedding rows.
pub fn sample_context_batch(
    bundle: &ContextBundle,
    m: usize,
    rng: &mut RngStream,
) -> Result<(Vec<usize>, Tensor)> {
    if m == 0 || m > bundle.m_total {
        return Err(Error::Config(format!(
            "context batch {m} outside [1, {}]",
            bundle.m_total
        )));
    }
    let indices = rng.sample_without_replacement(bundle.m_total, m);
    let embeddings = bundle.embeddings_for(&indices)?;
    Ok((indices, embeddings))
}

// ---------------------------------------------------------------------------
// Bundle directory IO
// ---------------------------------------------------------------------------

const MANIFEST_FILE: &str = "manifest.json";
const EMBEDDINGS_FILE: &str = "embeddings.f32";
const IMAGES_FILE: &str = "images.u8";
const LOCK_FILE: &str = ".lock";

/// Write a bundle to a directory. Writes are exclusive: a concurrent writer
/// holding the lock file makes this fail.
pub fn write_context_bundle(bundle: &ContextBundle, dir: &std::path::Path) -> Result<()> {
    bundle.validate()?;
    std::fs::create_dir_all(dir)?;
    let lock = dir.join(LOCK_FILE);
    let lock_file = std::fs::OpenOptions::new()
        .write(true)
        .create_new(true)
        .open(&lock)
        .map_err(|e| {
            Error::Usage(format!(
                "bundle directory {} is locked by another writer: {e}",
                dir.display()
            ))
        })?;
    drop(lock_file);
    let result = (|| -> Result<()> {
        std::fs::write(dir.join(EMBEDDINGS_FILE), embeddings_bytes(&bundle.embeddings))?;
        match &bundle.images {
            Some(set) => std::fs::write(dir.join(IMAGES_FILE), &set.data)?,
            None => {
                let _ = std::fs::remove_file(dir.join(IMAGES_FILE));
            }
        }
        let manifest = serde_json::to_string_pretty(&bundle.manifest)?;
        std::fs::write(dir.join(MANIFEST_FILE), manifest)?;
        Ok(())
    })();
    let _ = std::fs::remove_file(&lock);
    result
}

/// Load and verify a bundle from a directory.
pub fn load_context_bundle(dir: &std::path::Path) -> Result<ContextBundle> {
    let manifest_raw = std::fs::read_to_string(dir.join(MANIFEST_FILE)).map_err(|e| {
        Error::Io(std::io::Error::new(
            e.kind(),
            format!("{}: {e}", dir.join(MANIFEST_FILE).display()),
        ))
    })?;
    let manifest: Manifest =
        serde_json::from_str(&manifest_raw).map_err(|e| Error::Format(format!("manifest: {e}")))?;

    let emb_bytes = std::fs::read(dir.join(EMBEDDINGS_FILE))?;
    if emb_bytes.len() != manifest.m_total * manifest.d * 4 {
        return Err(Error::Corruption(format!(
            "embeddings.f32 holds {} bytes, manifest expects {}",
            emb_bytes.len(),
            manifest.m_total * manifest.d * 4
        )));
    }
    if sha256_hex(&emb_bytes) != manifest.embeddings_sha256 {
        return Err(Error::Corruption("embeddings checksum mismatch".into()));
    }
    let embeddings: Vec<f32> = emb_bytes
        .chunks_exact(4)
        .map(|b| f32::from_le_bytes([b[0], b[1], b[2], b[3]]))
        .collect();

    let images = match manifest.image_dims {
        Some([h, w, c]) => {
            let img_bytes = std::fs::read(dir.join(IMAGES_FILE))?;
            if img_bytes.len() != manifest.m_total * h * w * c {
                return Err(Error::Corruption(format!(
                    "images.u8 holds {} bytes, manifest expects {}",
                    img_bytes.len(),
                    manifest.m_total * h * w * c
                )));
            }
            match &manifest.images_sha256 {
                Some(sum) if *sum == sha256_hex(&img_bytes) => {}
                Some(_) => return Err(Error::Corruption("images checksum mismatch".into())),
                None => return Err(Error::Format("manifest lacks images checksum".into())),
            }
            Some(ImageSet {
                h,
                w,
                c,
                data: img_bytes,
            })
        }
        None => None,
    };

    let bundle = ContextBundle {
        m_total: manifest.m_total,
        d: manifest.d,
        images,
        embeddings,
        manifest,
    };
    bundle.validate()?;
    Ok(bundle)
}

/// Service interface the pipeline orchestrates: multi-modal summarization,
/// prompted image synthesis, and image embedding.
pub trait ContextServices {
    fn provider_info(&self) -> ProviderInfo;

    /// Step 2: summarize reference images under the textual requirements.
    fn summarize(&self, reference_images: &[ContextImage], requirements: &str) -> Result<String>;

    /// Step 4: synthesize `n` images for a constructed prompt.
    fn synthesize(&self, prompt: &PromptSpec, n: usize, rng: &mut RngStream)
        -> Result<Vec<ContextImage>>;

    /// Embed images, chunking requests by `batch_size`.
    fn embed(&self, images: &[ContextImage], batch_size: usize) -> Result<Embeddings>;
}
