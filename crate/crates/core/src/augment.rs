//! Class balancing: oversample minority classes with simple image transforms
//! and undersample majority classes, both driven by an explicit seed.

use std::collections::{BTreeMap, BTreeSet, HashMap, HashSet};
use std::path::Path;

use rand::seq::SliceRandom;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rand_distr::{Distribution, Normal};
use rayon::prelude::*;
use serde::{Deserialize, Serialize};
use sha2::{Digest, Sha256};

use crate::dataset::{class_counts, ClassCounts, DatasetManifest, ImageRecord, LabelId, PixelBlock};
use crate::error::{Error, Result};
use crate::signature::mix_seed;

/// `meta` keys that mark an image as carrying annotation geometry.
pub const GEOMETRY_KEYS: &[&str] = &["boxes", "bboxes", "bbox", "polygons", "segmentation", "keypoints"];

const CONTRAST_FACTORS: [f64; 2] = [0.8, 1.25];
const NOISE_SIGMA: f64 = 8.0;

#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
#[serde(tag = "op")]
pub enum TransformOp {
    #[serde(rename = "horizontal-flip")]
    HorizontalFlip,
    #[serde(rename = "vertical-flip")]
    VerticalFlip,
    #[serde(rename = "rotate-90")]
    Rotate90,
    #[serde(rename = "rotate-180")]
    Rotate180,
    #[serde(rename = "rotate-270")]
    Rotate270,
    #[serde(rename = "contrast-scale")]
    ContrastScale { factor: f64 },
    #[serde(rename = "gaussian-noise")]
    GaussianNoise { sigma: f64, seed: u64 },
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(rename_all = "kebab-case")]
pub enum OpKind {
    HorizontalFlip,
    VerticalFlip,
    #[serde(rename = "rotate-90")]
    Rotate90,
    #[serde(rename = "rotate-180")]
    Rotate180,
    #[serde(rename = "rotate-270")]
    Rotate270,
    ContrastScale,
    GaussianNoise,
}

impl OpKind {
    pub const ALL: [OpKind; 7] = [
        OpKind::HorizontalFlip,
        OpKind::VerticalFlip,
        OpKind::Rotate90,
        OpKind::Rotate180,
        OpKind::Rotate270,
        OpKind::ContrastScale,
        OpKind::GaussianNoise,
    ];

    pub fn is_geometric(self) -> bool {
        !matches!(self, OpKind::ContrastScale | OpKind::GaussianNoise)
    }
}

impl TransformOp {
    pub fn kind(&self) -> OpKind {
        match self {
            TransformOp::HorizontalFlip => OpKind::HorizontalFlip,
            TransformOp::VerticalFlip => OpKind::VerticalFlip,
            TransformOp::Rotate90 => OpKind::Rotate90,
            TransformOp::Rotate180 => OpKind::Rotate180,
            TransformOp::Rotate270 => OpKind::Rotate270,
            TransformOp::ContrastScale { .. } => OpKind::ContrastScale,
            TransformOp::GaussianNoise { .. } => OpKind::GaussianNoise,
        }
    }

    pub fn validate(&self) -> Result<()> {
        match *self {
            TransformOp::ContrastScale { factor } if !(factor > 0.0 && factor.is_finite()) => {
                Err(Error::InvalidArgument(format!("contrast factor must be > 0, got {factor}")))
            }
            TransformOp::GaussianNoise { sigma, .. } if !(sigma >= 0.0 && sigma.is_finite()) => {
                Err(Error::InvalidArgument(format!("noise sigma must be >= 0, got {sigma}")))
            }
            _ => Ok(()),
        }
    }

    /// Output (width, height) for an input of the given size.
    pub fn output_size(&self, width: u32, height: u32) -> (u32, u32) {
        match self {
            TransformOp::Rotate90 | TransformOp::Rotate270 => (height, width),
            _ => (width, height),
        }
    }
}

fn clamp_u8(v: f64) -> u8 {
    v.round().clamp(0.0, 255.0) as u8
}

pub fn apply_transform(pixels: &PixelBlock, op: &TransformOp) -> PixelBlock {
    let (w, h) = (pixels.width(), pixels.height());
    match *op {
        TransformOp::HorizontalFlip => PixelBlock::from_fn(w, h, |x, y| pixels.get(w - 1 - x, y)),
        TransformOp::VerticalFlip => PixelBlock::from_fn(w, h, |x, y| pixels.get(x, h - 1 - y)),
        TransformOp::Rotate180 => PixelBlock::from_fn(w, h, |x, y| pixels.get(w - 1 - x, h - 1 - y)),
        // clockwise
        TransformOp::Rotate90 => PixelBlock::from_fn(h, w, |x, y| pixels.get(y, h - 1 - x)),
        TransformOp::Rotate270 => PixelBlock::from_fn(h, w, |x, y| pixels.get(w - 1 - y, x)),
        TransformOp::ContrastScale { factor } => map_channels(pixels, |v| clamp_u8(128.0 + factor * (v as f64 - 128.0))),
        TransformOp::GaussianNoise { sigma, seed } => {
            if sigma == 0.0 {
                return pixels.clone();
            }
            let normal = Normal::new(0.0, sigma).expect("sigma validated");
            let mut rng = ChaCha8Rng::seed_from_u64(seed);
            map_channels(pixels, |v| clamp_u8(v as f64 + normal.sample(&mut rng)))
        }
    }
}

fn map_channels(pixels: &PixelBlock, mut f: impl FnMut(u8) -> u8) -> PixelBlock {
    let data = pixels.as_bytes().iter().map(|&v| f(v)).collect();
    PixelBlock::new(pixels.width(), pixels.height(), data).expect("same shape")
}

pub fn apply_chain(pixels: &PixelBlock, chain: &[TransformOp]) -> PixelBlock {
    chain.iter().fold(pixels.clone(), |px, op| apply_transform(&px, op))
}

/// Augmentation settings as read from a JSON config file.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentConfig {
    #[serde(default)]
    pub min_count: Option<u64>,
    #[serde(default)]
    pub max_count: Option<u64>,
    #[serde(default)]
    pub seed: u64,
    #[serde(default = "all_ops")]
    pub allowed_ops: Vec<OpKind>,
}

fn all_ops() -> Vec<OpKind> {
    OpKind::ALL.to_vec()
}

impl Default for AugmentConfig {
    fn default() -> Self {
        AugmentConfig {
            min_count: None,
            max_count: None,
            seed: 0,
            allowed_ops: all_ops(),
        }
    }
}

impl AugmentConfig {
    /// Resolves the band, defaulting to (median, 3 x median) of `counts`.
    pub fn band(&self, counts: &ClassCounts) -> (u64, u64) {
        let median = median(&counts.values()).max(1);
        let min = self.min_count.unwrap_or(median);
        let max = self.max_count.unwrap_or_else(|| (3 * median).max(min));
        (min, max)
    }
}

fn median(values: &[u64]) -> u64 {
    if values.is_empty() {
        return 0;
    }
    let mut v = values.to_vec();
    v.sort_unstable();
    let n = v.len();
    if n % 2 == 1 {
        v[n / 2]
    } else {
        (v[n / 2 - 1] + v[n / 2]) / 2
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct OversampleDirective {
    pub image_id: String,
    pub chain: Vec<TransformOp>,
    pub new_id: String,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct AugmentPlan {
    pub min_count: u64,
    pub max_count: u64,
    pub seed: u64,
    /// Class counts expected after the plan is applied.
    pub targets: BTreeMap<LabelId, u64>,
    pub oversample: Vec<OversampleDirective>,
    pub undersample: Vec<String>,
    /// Classes the band could not be met for, with the reason.
    pub infeasible: Vec<String>,
}

impl AugmentPlan {
    pub fn is_empty(&self) -> bool {
        self.oversample.is_empty() && self.undersample.is_empty()
    }
}

/// Fixed catalog of transform chains of length one and two. Pairs combine a
/// geometric op with a photometric one, or contrast with noise; composing two
/// right-angle ops only yields another single op.
pub fn chain_catalog(allowed: &[OpKind]) -> Vec<Vec<TransformOp>> {
    let allowed: BTreeSet<OpKind> = allowed.iter().copied().collect();
    let mut geometric = Vec::new();
    for (kind, op) in [
        (OpKind::HorizontalFlip, TransformOp::HorizontalFlip),
        (OpKind::VerticalFlip, TransformOp::VerticalFlip),
        (OpKind::Rotate90, TransformOp::Rotate90),
        (OpKind::Rotate180, TransformOp::Rotate180),
        (OpKind::Rotate270, TransformOp::Rotate270),
    ] {
        if allowed.contains(&kind) {
            geometric.push(op);
        }
    }
    let contrast: Vec<TransformOp> = if allowed.contains(&OpKind::ContrastScale) {
        CONTRAST_FACTORS.iter().map(|&factor| TransformOp::ContrastScale { factor }).collect()
    } else {
        Vec::new()
    };
    let noise: Vec<TransformOp> = if allowed.contains(&OpKind::GaussianNoise) {
        vec![TransformOp::GaussianNoise {
            sigma: NOISE_SIGMA,
            seed: 0,
        }]
    } else {
        Vec::new()
    };
    let photometric: Vec<TransformOp> = contrast.iter().chain(&noise).copied().collect();

    let mut chains: Vec<Vec<TransformOp>> = geometric.iter().chain(&photometric).map(|&op| vec![op]).collect();
    for &g in &geometric {
        for &p in &photometric {
            chains.push(vec![g, p]);
        }
    }
    for &c in &contrast {
        for &n in &noise {
            chains.push(vec![c, n]);
        }
    }
    chains
}

pub fn has_geometry(record: &ImageRecord) -> bool {
    record
        .meta
        .as_ref()
        .is_some_and(|m| GEOMETRY_KEYS.iter().any(|k| m.contains_key(*k)))
}

fn fnv1a(s: &str) -> u64 {
    s.bytes()
        .fold(0xcbf2_9ce4_8422_2325, |h, b| (h ^ b as u64).wrapping_mul(0x0100_0000_01b3))
}

fn label_counts(record: &ImageRecord) -> BTreeMap<&LabelId, u64> {
    let mut m = BTreeMap::new();
    for l in &record.labels {
        *m.entry(l).or_insert(0) += 1;
    }
    m
}

fn chain_id(image_id: &str, chain: &[TransformOp]) -> String {
    let encoded = serde_json::to_vec(chain).expect("transform ops serialize");
    let digest = Sha256::new().chain_update(image_id.as_bytes()).chain_update(&encoded).finalize();
    format!("{image_id}__aug_{}", &hex::encode(digest)[..12])
}

/// Chain and new record id for the `used`-th augmentation of `record`.
/// Every `used` value maps to a distinct id.
fn directive_chain(
    record: &ImageRecord,
    catalog: &[Vec<TransformOp>],
    used: usize,
    seed: u64,
    allowed_ops: &[OpKind],
) -> (Vec<TransformOp>, String) {
    let round = used / catalog.len();
    let mut chain = catalog[used % catalog.len()].clone();
    let noise_seed = mix_seed(seed, fnv1a(&record.id) ^ ((round as u64) << 32) ^ used as u64);
    for op in chain.iter_mut() {
        if let TransformOp::GaussianNoise { seed, .. } = op {
            *seed = noise_seed;
        }
    }
    let noisy = allowed_ops.contains(&OpKind::GaussianNoise);
    if round > 0 && noisy {
        chain.push(TransformOp::GaussianNoise {
            sigma: NOISE_SIGMA / 2.0,
            seed: mix_seed(noise_seed, round as u64),
        });
    }
    let mut new_id = chain_id(&record.id, &chain);
    if round > 0 && !noisy {
        new_id = format!("{new_id}_r{round}");
    }
    (chain, new_id)
}

/// Plans undersampling of classes above `max_count`, then oversampling of
/// classes below `min_count`.
pub fn plan_augmentation(manifest: &DatasetManifest, min_count: u64, max_count: u64, seed: u64) -> Result<AugmentPlan> {
    plan_with_ops(manifest, min_count, max_count, seed, &OpKind::ALL)
}

pub fn plan_with_ops(
    manifest: &DatasetManifest,
    min_count: u64,
    max_count: u64,
    seed: u64,
    allowed_ops: &[OpKind],
) -> Result<AugmentPlan> {
    if min_count < 1 || min_count > max_count {
        return Err(Error::InvalidArgument(format!(
            "invalid band: need 1 <= min_count ({min_count}) <= max_count ({max_count})"
        )));
    }
    let mut counts: BTreeMap<LabelId, u64> = class_counts(manifest).entries;
    let mut infeasible = Vec::new();
    let mut dropped: HashSet<&str> = HashSet::new();
    let mut undersample = Vec::new();

    let mut over: Vec<(LabelId, u64)> = counts
        .iter()
        .filter(|(_, &c)| c > max_count)
        .map(|(l, &c)| (l.clone(), c))
        .collect();
    over.sort_by(|a, b| b.1.cmp(&a.1).then(a.0.cmp(&b.0)));
    for (label, _) in over {
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, fnv1a(label.as_str()) ^ 0x0d));
        let mut pool: Vec<&ImageRecord> = manifest
            .records
            .iter()
            .filter(|r| !dropped.contains(r.id.as_str()) && r.labels.contains(&label))
            .collect();
        pool.shuffle(&mut rng);
        for r in pool {
            if counts[&label] <= max_count {
                break;
            }
            let per = label_counts(r);
            if per.iter().all(|(l, &k)| counts[*l] - k >= min_count) {
                for (l, k) in per {
                    *counts.get_mut(l).unwrap() -= k;
                }
                dropped.insert(&r.id);
                undersample.push(r.id.clone());
            }
        }
        if counts[&label] > max_count {
            infeasible.push(format!(
                "{label}: {} above max_count {max_count}; remaining images carry classes at min_count",
                counts[&label]
            ));
        }
    }

    let full = chain_catalog(allowed_ops);
    let mut used_ids: HashSet<String> = manifest.records.iter().map(|r| r.id.clone()).collect();
    let mut oversample = Vec::new();
    let mut cursor: HashMap<&str, usize> = HashMap::new();

    let mut under: Vec<(LabelId, u64)> = counts
        .iter()
        .filter(|(_, &c)| c < min_count)
        .map(|(l, &c)| (l.clone(), c))
        .collect();
    under.sort_by(|a, b| a.1.cmp(&b.1).then(a.0.cmp(&b.0)));
    for (label, _) in under {
        if counts[&label] >= min_count {
            continue;
        }
        let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, fnv1a(label.as_str()) ^ 0x0a));
        let mut chains = full.clone();
        chains.shuffle(&mut rng);
        let photometric: Vec<Vec<TransformOp>> = chains
            .iter()
            .filter(|c| c.iter().all(|op| !op.kind().is_geometric()))
            .cloned()
            .collect();

        let mut pool: Vec<(&ImageRecord, &Vec<Vec<TransformOp>>)> = manifest
            .records
            .iter()
            .filter(|r| !dropped.contains(r.id.as_str()) && r.labels.contains(&label))
            .map(|r| (r, if has_geometry(r) { &photometric } else { &chains }))
            .filter(|(_, cs)| !cs.is_empty())
            .collect();
        pool.shuffle(&mut rng);

        let mut t = 0;
        while counts[&label] < min_count && !pool.is_empty() {
            let i = t % pool.len();
            let (record, catalog) = pool[i];
            let per = label_counts(record);
            if per.iter().any(|(l, &k)| counts[*l] + k > max_count) {
                pool.remove(i);
                continue;
            }
            // advance past chains this image already received for another class
            let (chain, new_id) = loop {
                let used = cursor.entry(record.id.as_str()).or_insert(0);
                let (chain, new_id) = directive_chain(record, catalog, *used, seed, allowed_ops);
                *used += 1;
                if used_ids.insert(new_id.clone()) {
                    break (chain, new_id);
                }
            };
            for (l, k) in per {
                *counts.get_mut(l).unwrap() += k;
            }
            oversample.push(OversampleDirective {
                image_id: record.id.clone(),
                chain,
                new_id,
            });
            t += 1;
        }
        if counts[&label] < min_count {
            infeasible.push(format!(
                "{label}: {} below min_count {min_count}; no image can be augmented without exceeding max_count",
                counts[&label]
            ));
        }
    }

    Ok(AugmentPlan {
        min_count,
        max_count,
        seed,
        targets: counts,
        oversample,
        undersample,
        infeasible,
    })
}

/// Writes the augmented images under `output_dir/images/` and returns the
/// resulting manifest, whose base directory is `output_dir`. Original records
/// keep their metadata; relative paths are rewritten to absolute ones so the
/// new manifest can live anywhere.
pub fn materialize(plan: &AugmentPlan, manifest: &DatasetManifest, output_dir: &Path) -> Result<DatasetManifest> {
    let by_id: HashMap<&str, &ImageRecord> = manifest.records.iter().map(|r| (r.id.as_str(), r)).collect();
    let image_dir = output_dir.join("images");
    if !plan.oversample.is_empty() {
        std::fs::create_dir_all(&image_dir).map_err(|e| Error::io(&image_dir, e))?;
    }

    let augmented: Vec<ImageRecord> = plan
        .oversample
        .par_iter()
        .map(|d| {
            let fail = |message: String| Error::Directive {
                image_id: d.image_id.clone(),
                new_id: d.new_id.clone(),
                message,
            };
            let src = by_id
                .get(d.image_id.as_str())
                .ok_or_else(|| fail("source image not in manifest".into()))?;
            for op in &d.chain {
                op.validate().map_err(|e| fail(e.to_string()))?;
            }
            let px = manifest.load_pixels(src).map_err(|e| fail(e.to_string()))?;
            let out = apply_chain(&px, &d.chain);
            let file = format!("{}.png", d.new_id);
            let path = image_dir.join(&file);
            out.to_image().save(&path).map_err(|e| fail(e.to_string()))?;

            let mut rec = (*src).clone();
            rec.id = d.new_id.clone();
            rec.path = format!("images/{file}");
            rec.width = out.width();
            rec.height = out.height();
            rec.extra.insert("source_image".into(), d.image_id.clone().into());
            rec.extra.insert("transforms".into(), serde_json::to_value(&d.chain)?);
            Ok(rec)
        })
        .collect::<Result<_>>()?;

    let drop: HashSet<&str> = plan.undersample.iter().map(String::as_str).collect();
    let mut kept = DatasetManifest {
        dataset_id: manifest.dataset_id.clone(),
        records: manifest.records.iter().filter(|r| !drop.contains(r.id.as_str())).cloned().collect(),
        extra: manifest.extra.clone(),
        base_dir: manifest.base_dir.clone(),
    };
    kept.absolutize_paths()?;
    kept.records.extend(augmented);
    kept.base_dir = Some(output_dir.to_path_buf());
    Ok(kept)
}
