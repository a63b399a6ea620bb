//! Color signatures: per-image k-means clusters and their aggregation into
//! one K-cluster signature per dataset.

use rand::seq::index;
use rand::SeedableRng;
use rand_chacha::ChaCha8Rng;
use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, PixelBlock};
use crate::error::{Error, Result};
use crate::kmeans::{self, Point, MAX_ITERATIONS};

/// Images with more pixels than this are subsampled before clustering.
pub const DEFAULT_MAX_PIXELS: usize = 1 << 18;

/// Centroids in RGB space with weights summing to one.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Signature {
    pub centroids: Vec<Point>,
    pub weights: Vec<f64>,
}

pub type ImageSignature = Signature;

impl Signature {
    /// Builds a signature from raw (centroid, mass) pairs: drops massless
    /// entries, merges identical centroids and normalizes the weights.
    pub fn from_masses(centroids: Vec<Point>, masses: Vec<f64>) -> Result<Self> {
        let mut merged: Vec<(Point, f64)> = Vec::with_capacity(centroids.len());
        for (c, m) in centroids.into_iter().zip(masses) {
            if !(m > 0.0) {
                continue;
            }
            match merged.iter_mut().find(|(p, _)| *p == c) {
                Some((_, acc)) => *acc += m,
                None => merged.push((c, m)),
            }
        }
        let total: f64 = merged.iter().map(|(_, m)| m).sum();
        if merged.is_empty() || !(total > 0.0) {
            return Err(Error::Empty("signature with no positive mass"));
        }
        let (centroids, weights) = merged.into_iter().map(|(c, m)| (c, m / total)).unzip();
        Ok(Signature { centroids, weights })
    }

    pub fn len(&self) -> usize {
        self.centroids.len()
    }

    pub fn is_empty(&self) -> bool {
        self.centroids.is_empty()
    }
}

#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
pub struct Provenance {
    pub dataset_id: String,
    pub content_hash: String,
    pub k: usize,
    pub seed: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DatasetSignature {
    pub signature: Signature,
    pub provenance: Provenance,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct KSelectionReport {
    pub candidates: Vec<usize>,
    /// Mean RSS over the sample, one entry per candidate.
    pub rss: Vec<f64>,
    pub chosen: usize,
    pub sample_ids: Vec<String>,
}

/// splitmix64 finalizer, used to derive independent per-item seeds.
pub fn mix_seed(seed: u64, salt: u64) -> u64 {
    let mut z = seed ^ salt.wrapping_mul(0x9E37_79B9_7F4A_7C15);
    z = z.wrapping_add(0x9E37_79B9_7F4A_7C15);
    z = (z ^ (z >> 30)).wrapping_mul(0xBF58_476D_1CE4_E5B9);
    z = (z ^ (z >> 27)).wrapping_mul(0x94D0_49BB_1331_11EB);
    z ^ (z >> 31)
}

/// Distinct colors in ascending packed order with their pixel counts.
fn color_histogram(pixels: impl Iterator<Item = [u8; 3]>) -> (Vec<Point>, Vec<f64>) {
    let mut packed: Vec<u32> = pixels
        .map(|[r, g, b]| (r as u32) << 16 | (g as u32) << 8 | b as u32)
        .collect();
    packed.sort_unstable();
    let mut points = Vec::new();
    let mut counts: Vec<f64> = Vec::new();
    let mut prev = None;
    for v in packed {
        if prev == Some(v) {
            *counts.last_mut().unwrap() += 1.0;
        } else {
            points.push([(v >> 16) as f64, ((v >> 8) & 0xff) as f64, (v & 0xff) as f64]);
            counts.push(1.0);
            prev = Some(v);
        }
    }
    (points, counts)
}

fn subsampled_histogram(pixels: &PixelBlock, max_pixels: Option<usize>, seed: u64) -> (Vec<Point>, Vec<f64>) {
    match max_pixels {
        Some(max) if pixels.len() > max => {
            let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x5ab5));
            let mut idx = index::sample(&mut rng, pixels.len(), max).into_vec();
            idx.sort_unstable();
            let bytes = pixels.as_bytes();
            color_histogram(idx.into_iter().map(|i| [bytes[3 * i], bytes[3 * i + 1], bytes[3 * i + 2]]))
        }
        _ => color_histogram(pixels.pixels()),
    }
}

fn cluster(points: &[Point], masses: &[f64], k: usize, seed: u64) -> Result<Signature> {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let init = kmeans::kmeans_plus_plus(points, masses, k, &mut rng);
    let fit = kmeans::lloyd_elkan(points, masses, init, MAX_ITERATIONS);
    let cluster_mass = fit.cluster_masses(masses);
    Signature::from_masses(fit.centroids, cluster_mass)
}

/// k-means signature of one image. Empty clusters are dropped, so the result
/// may hold fewer than `k` centroids.
pub fn image_kmeans(pixels: &PixelBlock, k: usize, seed: u64) -> Result<ImageSignature> {
    image_signature(pixels, k, seed, None)
}

/// [`image_kmeans`] with optional uniform pixel subsampling.
pub fn image_signature(pixels: &PixelBlock, k: usize, seed: u64, max_pixels: Option<usize>) -> Result<ImageSignature> {
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    if pixels.is_empty() {
        return Err(Error::Empty("pixel block"));
    }
    let (points, counts) = subsampled_histogram(pixels, max_pixels, seed);
    cluster(&points, &counts, k, seed)
}

/// Sum over pixels of the squared distance to the nearest centroid.
pub fn rss(pixels: &PixelBlock, signature: &Signature) -> f64 {
    let (points, counts) = color_histogram(pixels.pixels());
    kmeans::weighted_rss(&points, &counts, &signature.centroids)
}

/// Picks K by the elbow rule on mean RSS over `sample`.
///
/// RSS is evaluated for every K in `k_min..=k_max`, each K warm-started from
/// the previous solution plus one k-means++ center, which keeps the curve
/// non-increasing. The chosen K is the smallest one whose next step improves
/// RSS by a relative amount below `drop_threshold`, or whose RSS is already
/// zero; `k_max` if no such K exists.
pub fn select_k(
    sample: &[(String, PixelBlock)],
    k_min: usize,
    k_max: usize,
    drop_threshold: f64,
    seed: u64,
) -> Result<KSelectionReport> {
    if sample.is_empty() {
        return Err(Error::Empty("k-selection sample"));
    }
    if k_min < 1 || k_min > k_max {
        return Err(Error::InvalidArgument(format!("invalid k range {k_min}..={k_max}")));
    }
    if !(drop_threshold >= 0.0) {
        return Err(Error::InvalidArgument("drop threshold must be >= 0".into()));
    }
    let candidates: Vec<usize> = (k_min..=k_max).collect();
    let per_image: Vec<Vec<f64>> = sample
        .par_iter()
        .enumerate()
        .map(|(i, (_, pixels))| rss_curve(pixels, &candidates, mix_seed(seed, i as u64)))
        .collect::<Result<_>>()?;

    let rss: Vec<f64> = (0..candidates.len())
        .map(|j| per_image.iter().map(|c| c[j]).sum::<f64>() / per_image.len() as f64)
        .collect();

    let mut chosen = k_max;
    for j in 0..candidates.len() {
        if rss[j] <= 0.0 {
            chosen = candidates[j];
            break;
        }
        if j + 1 < candidates.len() {
            let improvement = ((rss[j] - rss[j + 1]) / rss[j]).max(0.0);
            if improvement < drop_threshold {
                chosen = candidates[j];
                break;
            }
        }
    }
    Ok(KSelectionReport {
        candidates,
        rss,
        chosen,
        sample_ids: sample.iter().map(|(id, _)| id.clone()).collect(),
    })
}

fn rss_curve(pixels: &PixelBlock, ks: &[usize], seed: u64) -> Result<Vec<f64>> {
    if pixels.is_empty() {
        return Err(Error::Empty("pixel block"));
    }
    let (points, counts) = color_histogram(pixels.pixels());
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let mut centroids: Vec<Point> = Vec::new();
    let mut out = Vec::with_capacity(ks.len());
    for &k in ks {
        if centroids.is_empty() {
            centroids = kmeans::kmeans_plus_plus(&points, &counts, k, &mut rng);
        } else {
            grow_centers(&points, &counts, &mut centroids, k, &mut rng);
        }
        let fit = kmeans::lloyd_elkan(&points, &counts, centroids, MAX_ITERATIONS);
        let masses = fit.cluster_masses(&counts);
        centroids = fit
            .centroids
            .into_iter()
            .zip(masses)
            .filter(|(_, m)| *m > 0.0)
            .map(|(c, _)| c)
            .collect();
        out.push(kmeans::weighted_rss(&points, &counts, &centroids));
    }
    Ok(out)
}

/// Adds k-means++ centers to an existing set until it holds `k` of them or
/// every point already sits on a center.
fn grow_centers(points: &[Point], masses: &[f64], centers: &mut Vec<Point>, k: usize, rng: &mut ChaCha8Rng) {
    use rand::Rng;
    while centers.len() < k {
        let d2: Vec<f64> = points
            .iter()
            .zip(masses)
            .map(|(p, m)| m * kmeans::nearest(p, centers).1)
            .collect();
        let total: f64 = d2.iter().sum();
        if !(total > 0.0) {
            return;
        }
        let target = rng.random::<f64>() * total;
        let mut acc = 0.0;
        let mut pick = 0;
        for (i, &w) in d2.iter().enumerate() {
            if w > 0.0 {
                pick = i;
                acc += w;
                if acc > target {
                    break;
                }
            }
        }
        centers.push(points[pick]);
    }
}

/// Weighted re-clustering of all per-image centroids into `k` dataset
/// clusters. Each centroid carries its per-image weight as point mass; the
/// resulting cluster masses are normalized to sum to one.
pub fn dataset_signature(signatures: &[ImageSignature], k: usize, seed: u64) -> Result<Signature> {
    if signatures.is_empty() {
        return Err(Error::Empty("image signature list"));
    }
    if k < 1 {
        return Err(Error::InvalidArgument("k must be >= 1".into()));
    }
    let points: Vec<Point> = signatures.iter().flat_map(|s| s.centroids.iter().copied()).collect();
    let masses: Vec<f64> = signatures.iter().flat_map(|s| s.weights.iter().copied()).collect();
    cluster(&points, &masses, k, seed)
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct SignatureOptions {
    pub k: usize,
    pub seed: u64,
    pub max_pixels: Option<usize>,
}

impl SignatureOptions {
    pub fn new(k: usize, seed: u64) -> Self {
        SignatureOptions {
            k,
            seed,
            max_pixels: Some(DEFAULT_MAX_PIXELS),
        }
    }
}

/// Signature of an in-memory image collection. Per-image seeds derive from
/// the run seed and the image position, so results do not depend on thread
/// scheduling.
pub fn signature_from_images(images: &[PixelBlock], opts: &SignatureOptions) -> Result<Signature> {
    let per_image: Vec<ImageSignature> = images
        .par_iter()
        .enumerate()
        .map(|(i, px)| image_signature(px, opts.k, mix_seed(opts.seed, i as u64), opts.max_pixels))
        .collect::<Result<_>>()?;
    dataset_signature(&per_image, opts.k, mix_seed(opts.seed, u64::MAX))
}

/// Loads every image of `manifest` and computes its dataset signature.
pub fn compute_dataset_signature(
    manifest: &DatasetManifest,
    content_hash: &str,
    opts: &SignatureOptions,
) -> Result<DatasetSignature> {
    if manifest.records.is_empty() {
        return Err(Error::Empty("manifest has no images"));
    }
    let per_image: Vec<ImageSignature> = manifest
        .records
        .par_iter()
        .enumerate()
        .map(|(i, r)| {
            let px = manifest.load_pixels(r)?;
            image_signature(&px, opts.k, mix_seed(opts.seed, i as u64), opts.max_pixels)
        })
        .collect::<Result<_>>()?;
    let signature = dataset_signature(&per_image, opts.k, mix_seed(opts.seed, u64::MAX))?;
    Ok(DatasetSignature {
        signature,
        provenance: Provenance {
            dataset_id: manifest.dataset_id.clone(),
            content_hash: content_hash.to_owned(),
            k: opts.k,
            seed: opts.seed,
        },
    })
}

/// Seeded uniform choice of `min(size, n)` record indices, ascending.
pub fn sample_indices(n: usize, size: usize, seed: u64) -> Vec<usize> {
    let mut rng = ChaCha8Rng::seed_from_u64(mix_seed(seed, 0x6b5e1));
    let mut idx = index::sample(&mut rng, n, size.min(n)).into_vec();
    idx.sort_unstable();
    idx
}

/// Runs [`select_k`] on a seeded sample of `manifest`'s images.
pub fn select_k_for_manifest(
    manifest: &DatasetManifest,
    sample_size: usize,
    k_min: usize,
    k_max: usize,
    drop_threshold: f64,
    seed: u64,
) -> Result<KSelectionReport> {
    let picks = sample_indices(manifest.records.len(), sample_size, seed);
    let sample = picks
        .into_par_iter()
        .map(|i| {
            let r = &manifest.records[i];
            Ok((r.id.clone(), manifest.load_pixels(r)?))
        })
        .collect::<Result<Vec<_>>>()?;
    select_k(&sample, k_min, k_max, drop_threshold, seed)
}
