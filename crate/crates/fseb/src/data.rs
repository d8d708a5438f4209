//! Dataset ingestion and synthesis.
//!
//! Real datasets come in as IDX files (the MNIST family layout: big-endian
//! magics 2051/2049, uint8 pixels scaled to [0,1]); gzip-compressed files
//! are decompressed transparently based on the `.gz` extension. Desk-scale
//! experiments use procedural datasets with controllable OOD shifts.

use std::io::Read;
use std::path::Path;

use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};
use crate::rng::RngStream;
use crate::tensor::Tensor;

/// Labeled image set; values live in [0,1], labels in [0,K).
#[derive(Clone, Debug)]
pub struct Dataset {
    pub images: Tensor,
    pub labels: Vec<usize>,
    pub k: usize,
    pub name: String,
}

impl Dataset {
    pub fn len(&self) -> usize {
        self.labels.len()
    }

    pub fn is_empty(&self) -> bool {
        self.labels.is_empty()
    }

    pub fn image_shape(&self) -> [usize; 3] {
        let s = self.images.shape();
        [s[1], s[2], s[3]]
    }

    pub fn validate(&self) -> Result<()> {
        let s = self.images.shape();
        if s.len() != 4 || s[0] != self.labels.len() {
            return Err(Error::Format(format!(
                "dataset images {:?} vs {} labels",
                s,
                self.labels.len()
            )));
        }
        if let Some(v) = self
            .images
            .data()
            .iter()
            .find(|v| !(0.0..=1.0).contains(*v))
        {
            return Err(Error::Data(format!("pixel value {v} outside [0,1]")));
        }
        if let Some(l) = self.labels.iter().find(|l| **l >= self.k) {
            return Err(Error::Data(format!("label {l} >= K={}", self.k)));
        }
        Ok(())
    }

    /// New dataset holding `indices` in order.
    pub fn select(&self, indices: &[usize]) -> Dataset {
        let [c, h, w] = self.image_shape();
        let stride = c * h * w;
        let mut data = Vec::with_capacity(indices.len() * stride);
        let mut labels = Vec::with_capacity(indices.len());
        for &i in indices {
            data.extend_from_slice(&self.images.data()[i * stride..(i + 1) * stride]);
            labels.push(self.labels[i]);
        }
        Dataset {
            images: Tensor::new(vec![indices.len(), c, h, w], data).expect("shape consistent"),
            labels,
            k: self.k,
            name: self.name.clone(),
        }
    }

    /// Gather a minibatch as (images, labels).
    pub fn batch(&self, indices: &[usize]) -> (Tensor, Vec<usize>) {
        let ds = self.select(indices);
        (ds.images, ds.labels)
    }
}

fn open_maybe_gz(path: &Path) -> Result<Vec<u8>> {
    let file = std::fs::File::open(path)
        .map_err(|e| Error::Io(std::io::Error::new(e.kind(), format!("{}: {e}", path.display()))))?;
    let mut bytes = Vec::new();
    if path.extension().is_some_and(|e| e == "gz") {
        flate2::read::GzDecoder::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))?;
    } else {
        std::io::BufReader::new(file)
            .read_to_end(&mut bytes)
            .map_err(|e| Error::Corruption(format!("{}: {e}", path.display())))?;
    }
    Ok(bytes)
}

fn be_u32(bytes: &[u8], off: usize) -> Result<u32> {
    bytes
        .get(off..off + 4)
        .map(|b| u32::from_be_bytes([b[0], b[1], b[2], b[3]]))
        .ok_or_else(|| Error::Corruption("IDX header truncated".into()))
}

const IDX_IMAGES_MAGIC: u32 = 2051;
const IDX_LABELS_MAGIC: u32 = 2049;

/// Parse an IDX image/label file pair into a dataset.
pub fn load_idx(images_path: &Path, labels_path: &Path) -> Result<Dataset> {
    let img_bytes = open_maybe_gz(images_path)?;
    let lbl_bytes = open_maybe_gz(labels_path)?;

    if be_u32(&img_bytes, 0)? != IDX_IMAGES_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected image magic {IDX_IMAGES_MAGIC}, got {}",
            images_path.display(),
            be_u32(&img_bytes, 0)?
        )));
    }
    if be_u32(&lbl_bytes, 0)? != IDX_LABELS_MAGIC {
        return Err(Error::Format(format!(
            "{}: expected label magic {IDX_LABELS_MAGIC}, got {}",
            labels_path.display(),
            be_u32(&lbl_bytes, 0)?
        )));
    }
    let n = be_u32(&img_bytes, 4)? as usize;
    let rows = be_u32(&img_bytes, 8)? as usize;
    let cols = be_u32(&img_bytes, 12)? as usize;
    let n_labels = be_u32(&lbl_bytes, 4)? as usize;
    if n != n_labels {
        return Err(Error::Format(format!(
            "count mismatch: {n} images vs {n_labels} labels"
        )));
    }
    let pixels = img_bytes
        .get(16..16 + n * rows * cols)
        .ok_or_else(|| Error::Corruption("IDX image data truncated".into()))?;
    let raw_labels = lbl_bytes
        .get(8..8 + n)
        .ok_or_else(|| Error::Corruption("IDX label data truncated".into()))?;

    let data: Vec<f64> = pixels.iter().map(|p| f64::from(*p) / 255.0).collect();
    let labels: Vec<usize> = raw_labels.iter().map(|l| *l as usize).collect();
    let k = labels.iter().max().map_or(0, |m| m + 1).max(2);
    let ds = Dataset {
        images: Tensor::new(vec![n, 1, rows, cols], data)?,
        labels,
        k,
        name: images_path
            .file_stem()
            .map(|s| s.to_string_lossy().into_owned())
            .unwrap_or_else(|| "idx".into()),
    };
    ds.validate()?;
    Ok(ds)
}

/// IDX writer counterpart of [`load_idx`]; exists for round-trip tests and
/// small on-disk fixtures.
pub fn write_idx(ds: &Dataset, images_path: &Path, labels_path: &Path) -> Result<()> {
    let [c, h, w] = ds.image_shape();
    if c != 1 {
        return Err(Error::Usage("write_idx supports single-channel images".into()));
    }
    let mut img = Vec::with_capacity(16 + ds.len() * h * w);
    img.extend_from_slice(&IDX_IMAGES_MAGIC.to_be_bytes());
    img.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    img.extend_from_slice(&(h as u32).to_be_bytes());
    img.extend_from_slice(&(w as u32).to_be_bytes());
    img.extend(
        ds.images
            .data()
            .iter()
            .map(|v| (v * 255.0).round().clamp(0.0, 255.0) as u8),
    );
    std::fs::write(images_path, img)?;

    let mut lbl = Vec::with_capacity(8 + ds.len());
    lbl.extend_from_slice(&IDX_LABELS_MAGIC.to_be_bytes());
    lbl.extend_from_slice(&(ds.len() as u32).to_be_bytes());
    lbl.extend(ds.labels.iter().map(|l| *l as u8));
    std::fs::write(labels_path, lbl)?;
    Ok(())
}

/// Seeded shuffle-then-partition split into (train, val).
pub fn split(ds: &Dataset, val_fraction: f64, seed: u64) -> Result<(Dataset, Dataset)> {
    if !(0.0 < val_fraction && val_fraction < 1.0) {
        return Err(Error::Config(format!(
            "val_fraction {val_fraction} not in (0,1)"
        )));
    }
    let n = ds.len();
    let n_val = (n as f64 * val_fraction).round() as usize;
    if n_val == 0 || n_val == n {
        return Err(Error::Config(format!(
            "val_fraction {val_fraction} yields an empty split for n={n}"
        )));
    }
    let mut idx: Vec<usize> = (0..n).collect();
    let mut rng = RngStream::named(seed, "split");
    rng.shuffle(&mut idx);
    let val = ds.select(&idx[..n_val]);
    let train = ds.select(&idx[n_val..]);
    Ok((train, val))
}

/// Class-stratified subsampling: per-class proportional counts, remainder
/// assigned by seeded draw.
pub fn subsample(ds: &Dataset, fraction: f64, seed: u64) -> Result<Dataset> {
    if !(0.0 < fraction && fraction <= 1.0) {
        return Err(Error::Config(format!("fraction {fraction} not in (0,1]")));
    }
    let n = ds.len();
    let target = (n as f64 * fraction).round() as usize;
    let mut per_class: Vec<Vec<usize>> = vec![Vec::new(); ds.k];
    for (i, l) in ds.labels.iter().enumerate() {
        per_class[*l].push(i);
    }
    let mut rng = RngStream::named(seed, "subsample");
    let mut counts: Vec<usize> = Vec::with_capacity(ds.k);
    let mut remainders: Vec<(usize, f64)> = Vec::new();
    for (c, members) in per_class.iter().enumerate() {
        let exact = members.len() as f64 * fraction;
        let base = exact.floor() as usize;
        counts.push(base);
        if members.len() > base {
            remainders.push((c, exact - base as f64));
        }
    }
    let assigned: usize = counts.iter().sum();
    let mut leftover = target.saturating_sub(assigned);
    // seeded shuffle randomizes ties before the stable sort by remainder
    rng.shuffle(&mut remainders);
    remainders.sort_by(|a, b| b.1.partial_cmp(&a.1).expect("finite remainders"));
    for (c, _) in remainders {
        if leftover == 0 {
            break;
        }
        counts[c] += 1;
        leftover -= 1;
    }
    let mut picked = Vec::with_capacity(target);
    for (c, members) in per_class.iter().enumerate() {
        if members.is_empty() {
            continue;
        }
        if counts[c] == 0 {
            return Err(Error::Config(format!(
                "fraction {fraction} empties class {c} ({} members)",
                members.len()
            )));
        }
        let chosen = rng.sample_without_replacement(members.len(), counts[c]);
        picked.extend(chosen.into_iter().map(|j| members[j]));
    }
    picked.sort_unstable();
    Ok(ds.select(&picked))
}

// ---------------------------------------------------------------------------
// Procedural datasets
// ---------------------------------------------------------------------------

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum GeneratorKind {
    /// Oriented sinusoidal gratings; class k has orientation k*pi/K.
    Stripes,
    /// Gaussian bumps; class k is centered at angle 2*pi*k/K on a circle.
    Blobs,
    /// Uniform pixel noise.
    Noise,
}

#[derive(Clone, Copy, Debug, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum OodKind {
    /// Uniform noise images.
    Noise,
    /// The pattern family the in-distribution generator does not use.
    DisjointFamily,
}

#[derive(Clone, Debug, Serialize, Deserialize)]
#[serde(deny_unknown_fields)]
pub struct SynthSpec {
    pub generator: GeneratorKind,
    /// Image side length (square, single channel).
    pub size: usize,
    pub classes: usize,
    pub per_class: usize,
    /// Additive uniform pixel noise amplitude.
    #[serde(default = "default_noise")]
    pub noise_level: f64,
    pub ood: OodKind,
    pub ood_count: usize,
    pub seed: u64,
}

fn default_noise() -> f64 {
    0.05
}

/// Spatial frequency of the stripe gratings, in cycles across the image.
pub const STRIPE_CYCLES: f64 = 3.0;

/// Class orientation of the stripes generator, in radians.
pub fn stripe_orientation(class: usize, k: usize) -> f64 {
    std::f64::consts::PI * class as f64 / k as f64
}

fn stripe_image(size: usize, theta: f64, phase: f64, noise: f64, rng: &mut RngStream) -> Vec<f64> {
    let mut img = Vec::with_capacity(size * size);
    let (cos_t, sin_t) = (theta.cos(), theta.sin());
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64 - 0.5;
            let v = (y as f64 + 0.5) / size as f64 - 0.5;
            let s = u * cos_t + v * sin_t;
            let val = 0.5
                + 0.4 * (std::f64::consts::TAU * STRIPE_CYCLES * s + phase).sin()
                + noise * (rng.uniform() - 0.5);
            img.push(val.clamp(0.0, 1.0));
        }
    }
    img
}

fn blob_image(size: usize, class: usize, k: usize, noise: f64, rng: &mut RngStream) -> Vec<f64> {
    let angle = std::f64::consts::TAU * class as f64 / k as f64;
    let jx = 0.05 * (rng.uniform() - 0.5);
    let jy = 0.05 * (rng.uniform() - 0.5);
    let cx = 0.5 + 0.3 * angle.cos() + jx;
    let cy = 0.5 + 0.3 * angle.sin() + jy;
    let sigma2 = 2.0 * 0.12f64.powi(2);
    let mut img = Vec::with_capacity(size * size);
    for y in 0..size {
        for x in 0..size {
            let u = (x as f64 + 0.5) / size as f64;
            let v = (y as f64 + 0.5) / size as f64;
            let d2 = (u - cx).powi(2) + (v - cy).powi(2);
            let val = 0.9 * (-d2 / sigma2).exp() + noise * (rng.uniform() - 0.5);
            img.push(val.clamp(0.0, 1.0));
        }
    }
    img
}

fn noise_image(size: usize, rng: &mut RngStream) -> Vec<f64> {
    (0..size * size).map(|_| rng.uniform()).collect()
}

/// One image of the requested family. Exposed so the offline generation
/// stub can synthesize images from the same families.
pub fn render_class_image(
    generator: GeneratorKind,
    size: usize,
    class: usize,
    k: usize,
    noise_level: f64,
    rng: &mut RngStream,
) -> Vec<f64> {
    match generator {
        GeneratorKind::Stripes => {
            let phase = std::f64::consts::TAU * rng.uniform();
            stripe_image(size, stripe_orientation(class, k), phase, noise_level, rng)
        }
        GeneratorKind::Blobs => blob_image(size, class, k, noise_level, rng),
        GeneratorKind::Noise => noise_image(size, rng),
    }
}

/// Generate (in-distribution, OOD) datasets from a spec.
pub fn synth_dataset(spec: &SynthSpec) -> Result<(Dataset, Dataset)> {
    if spec.size < 4 {
        return Err(Error::Config(format!("size {} < 4", spec.size)));
    }
    if spec.classes < 2 {
        return Err(Error::Config(format!("classes {} < 2", spec.classes)));
    }
    if spec.per_class == 0 {
        return Err(Error::Config("per_class must be positive".into()));
    }
    let mut rng = RngStream::named(spec.seed, "synth");
    let n = spec.classes * spec.per_class;
    let mut data = Vec::with_capacity(n * spec.size * spec.size);
    let mut labels = Vec::with_capacity(n);
    for c in 0..spec.classes {
        for _ in 0..spec.per_class {
            data.extend(render_class_image(
                spec.generator,
                spec.size,
                c,
                spec.classes,
                spec.noise_level,
                &mut rng,
            ));
            labels.push(c);
        }
    }
    let in_dist = Dataset {
        images: Tensor::new(vec![n, 1, spec.size, spec.size], data)?,
        labels,
        k: spec.classes,
        name: format!("synth_{:?}", spec.generator).to_lowercase(),
    };

    let ood_generator = match spec.ood {
        OodKind::Noise => GeneratorKind::Noise,
        OodKind::DisjointFamily => match spec.generator {
            GeneratorKind::Stripes => GeneratorKind::Blobs,
            GeneratorKind::Blobs | GeneratorKind::Noise => GeneratorKind::Stripes,
        },
    };
    let mut ood_data = Vec::with_capacity(spec.ood_count * spec.size * spec.size);
    for i in 0..spec.ood_count {
        ood_data.extend(render_class_image(
            ood_generator,
            spec.size,
            i % spec.classes,
            spec.classes,
            spec.noise_level,
            &mut rng,
        ));
    }
    let ood = Dataset {
        images: Tensor::new(vec![spec.ood_count, 1, spec.size, spec.size], ood_data)?,
        labels: vec![0; spec.ood_count],
        k: spec.classes,
        name: format!("synth_ood_{:?}", ood_generator).to_lowercase(),
    };
    in_dist.validate()?;
    ood.validate()?;
    Ok((in_dist, ood))
}

#[cfg(test)]
mod tests {
    use super::*;

    fn tiny_dataset(n: usize, k: usize, seed: u64) -> Dataset {
        let mut rng = RngStream::from_seed(seed);
        let data: Vec<f64> = (0..n * 16).map(|_| rng.uniform()).collect();
        let labels: Vec<usize> = (0..n).map(|i| i % k).collect();
        Dataset {
            images: Tensor::new(vec![n, 1, 4, 4], data).unwrap(),
            labels,
            k,
            name: "tiny".into(),
        }
    }

    #[test]
    fn idx_roundtrip() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(12, 3, 0);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_idx(&ds, &ip, &lp).unwrap();
        let loaded = load_idx(&ip, &lp).unwrap();
        assert_eq!(loaded.len(), 12);
        assert_eq!(loaded.labels, ds.labels);
        // u8 quantization keeps pixels within half a step
        for (a, b) in loaded.images.data().iter().zip(ds.images.data()) {
            assert!((a - b).abs() <= 0.5 / 255.0 + 1e-12);
        }
    }

    #[test]
    fn idx_gz_transparent() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(5, 2, 1);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_idx(&ds, &ip, &lp).unwrap();
        for (src, dst) in [(&ip, "imgs.idx.gz"), (&lp, "lbls.idx.gz")] {
            let raw = std::fs::read(src).unwrap();
            let f = std::fs::File::create(dir.path().join(dst)).unwrap();
            let mut enc = flate2::write::GzEncoder::new(f, flate2::Compression::fast());
            std::io::Write::write_all(&mut enc, &raw).unwrap();
            enc.finish().unwrap();
        }
        let loaded = load_idx(
            &dir.path().join("imgs.idx.gz"),
            &dir.path().join("lbls.idx.gz"),
        )
        .unwrap();
        assert_eq!(loaded.len(), 5);
    }

    #[test]
    fn idx_wrong_magic_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(4, 2, 2);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_idx(&ds, &ip, &lp).unwrap();
        // labels file offered as images: magic 2049 where 2051 expected
        assert!(matches!(load_idx(&lp, &ip), Err(Error::Format(_))));
    }

    #[test]
    fn idx_count_mismatch_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let a = tiny_dataset(4, 2, 3);
        let b = tiny_dataset(6, 2, 3);
        let ip = dir.path().join("imgs.idx");
        let lp4 = dir.path().join("l4.idx");
        let lp6 = dir.path().join("l6.idx");
        write_idx(&a, &ip, &lp4).unwrap();
        write_idx(&b, &dir.path().join("i6.idx"), &lp6).unwrap();
        assert!(matches!(load_idx(&ip, &lp6), Err(Error::Format(_))));
    }

    #[test]
    fn idx_truncation_rejected() {
        let dir = tempfile::tempdir().unwrap();
        let ds = tiny_dataset(4, 2, 4);
        let ip = dir.path().join("imgs.idx");
        let lp = dir.path().join("lbls.idx");
        write_idx(&ds, &ip, &lp).unwrap();
        let bytes = std::fs::read(&ip).unwrap();
        std::fs::write(&ip, &bytes[..bytes.len() - 10]).unwrap();
        assert!(matches!(load_idx(&ip, &lp), Err(Error::Corruption(_))));
    }

    #[test]
    fn idx_pixel_scaling() {
        let dir = tempfile::tempdir().unwrap();
        let ds = Dataset {
            images: Tensor::new(vec![1, 1, 2, 2], vec![1.0, 0.0, 0.5019607843137255, 1.0])
                .unwrap(),
            labels: vec![1],
            k: 2,
            name: "px".into(),
        };
        let ip = dir.path().join("i.idx");
        let lp = dir.path().join("l.idx");
        write_idx(&ds, &ip, &lp).unwrap();
        let loaded = load_idx(&ip, &lp).unwrap();
        assert_eq!(loaded.images.data()[0], 1.0);
        assert_eq!(loaded.images.data()[1], 0.0);
        assert_eq!(loaded.images.data()[2], 128.0 / 255.0);
    }

    #[test]
    fn split_arithmetic_and_union() {
        let ds = tiny_dataset(100, 4, 5);
        let (train, val) = split(&ds, 0.1, 7).unwrap();
        assert_eq!(train.len(), 90);
        assert_eq!(val.len(), 10);
        // union of pixel sums matches (order-insensitive check)
        let total: f64 = ds.images.data().iter().sum();
        let sum: f64 =
            train.images.data().iter().sum::<f64>() + val.images.data().iter().sum::<f64>();
        assert!((total - sum).abs() < 1e-9);
    }

    #[test]
    fn split_deterministic() {
        let ds = tiny_dataset(50, 2, 6);
        let (t1, v1) = split(&ds, 0.2, 3).unwrap();
        let (t2, v2) = split(&ds, 0.2, 3).unwrap();
        assert_eq!(t1.labels, t2.labels);
        assert_eq!(v1.labels, v2.labels);
        assert_eq!(t1.images.data(), t2.images.data());
    }

    #[test]
    fn split_bad_fraction_rejected() {
        let ds = tiny_dataset(10, 2, 6);
        assert!(matches!(split(&ds, 0.0, 0), Err(Error::Config(_))));
        assert!(matches!(split(&ds, 1.0, 0), Err(Error::Config(_))));
        assert!(matches!(split(&ds, 0.01, 0), Err(Error::Config(_))));
    }

    #[test]
    fn subsample_balanced_quarter() {
        let ds = tiny_dataset(1000, 10, 8);
        let sub = subsample(&ds, 0.25, 9).unwrap();
        assert_eq!(sub.len(), 250);
        for c in 0..10 {
            assert_eq!(sub.labels.iter().filter(|l| **l == c).count(), 25);
        }
    }

    #[test]
    fn subsample_identity_and_determinism() {
        let ds = tiny_dataset(60, 3, 10);
        let all = subsample(&ds, 1.0, 0).unwrap();
        assert_eq!(all.len(), 60);
        let mut sorted = all.labels.clone();
        sorted.sort_unstable();
        let mut orig = ds.labels.clone();
        orig.sort_unstable();
        assert_eq!(sorted, orig);

        let a = subsample(&ds, 0.5, 4).unwrap();
        let b = subsample(&ds, 0.5, 4).unwrap();
        assert_eq!(a.labels, b.labels);
        assert_eq!(a.images.data(), b.images.data());
    }

    #[test]
    fn subsample_emptied_class_rejected() {
        let ds = tiny_dataset(30, 3, 11);
        assert!(matches!(subsample(&ds, 0.01, 0), Err(Error::Config(_))));
    }

    #[test]
    fn synth_balanced_and_deterministic() {
        let spec = SynthSpec {
            generator: GeneratorKind::Stripes,
            size: 8,
            classes: 3,
            per_class: 20,
            noise_level: 0.05,
            ood: OodKind::Noise,
            ood_count: 10,
            seed: 42,
        };
        let (a, ood_a) = synth_dataset(&spec).unwrap();
        let (b, _) = synth_dataset(&spec).unwrap();
        assert_eq!(a.len(), 60);
        for c in 0..3 {
            assert_eq!(a.labels.iter().filter(|l| **l == c).count(), 20);
        }
        assert_eq!(a.images.data(), b.images.data());
        assert_eq!(ood_a.len(), 10);
    }

    #[test]
    fn noise_ood_pixel_mean_near_half() {
        let spec = SynthSpec {
            generator: GeneratorKind::Stripes,
            size: 8,
            classes: 2,
            per_class: 2,
            noise_level: 0.0,
            ood: OodKind::Noise,
            ood_count: 1000,
            seed: 1,
        };
        let (_, ood) = synth_dataset(&spec).unwrap();
        let mean: f64 =
            ood.images.data().iter().sum::<f64>() / ood.images.data().len() as f64;
        assert!((mean - 0.5).abs() < 0.02, "mean {mean}");
    }

    #[test]
    fn disjoint_family_ood_uses_other_generator() {
        let spec = SynthSpec {
            generator: GeneratorKind::Stripes,
            size: 8,
            classes: 2,
            per_class: 2,
            noise_level: 0.0,
            ood: OodKind::DisjointFamily,
            ood_count: 4,
            seed: 1,
        };
        let (_, ood) = synth_dataset(&spec).unwrap();
        assert!(ood.name.contains("blobs"));
    }

    #[test]
    fn loaders_satisfy_invariants() {
        let spec = SynthSpec {
            generator: GeneratorKind::Blobs,
            size: 8,
            classes: 4,
            per_class: 5,
            noise_level: 0.1,
            ood: OodKind::Noise,
            ood_count: 5,
            seed: 3,
        };
        let (ds, ood) = synth_dataset(&spec).unwrap();
        ds.validate().unwrap();
        ood.validate().unwrap();
    }
}
