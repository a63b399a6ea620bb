//! Test-only oracles and fixtures. Nothing here calls into the solver paths
//! it is used to check.
#![allow(dead_code)]

use std::path::Path;

use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;
use srcsel::dataset::{save_manifest, DatasetManifest, ImageRecord, LabelId};

/// Minimum cost of the partial-matching transport LP, found by enumerating
/// every spanning tree of the balanced problem's bipartite graph and keeping
/// the feasible (nonnegative) ones.
pub fn brute_force_transport(cost: &[Vec<f64>], supplies: &[f64], demands: &[f64]) -> f64 {
    let mut s = supplies.to_vec();
    let mut d = demands.to_vec();
    let mut c: Vec<Vec<f64>> = cost.to_vec();
    let (ts, td): (f64, f64) = (s.iter().sum(), d.iter().sum());
    if ts > td + 1e-12 {
        d.push(ts - td);
        for row in &mut c {
            row.push(0.0);
        }
    } else if td > ts + 1e-12 {
        s.push(td - ts);
        c.push(vec![0.0; d.len()]);
    }
    let (m, n) = (s.len(), d.len());
    let cells: Vec<(usize, usize)> = (0..m).flat_map(|r| (0..n).map(move |k| (r, k))).collect();
    let mut best = f64::INFINITY;
    let mut chosen = Vec::new();
    let mut parent: Vec<usize> = (0..m + n).collect();
    enumerate_trees(&cells, 0, m + n - 1, &mut chosen, &mut parent, &mut |tree| {
        if let Some(flow) = tree_flow(tree, &s, &d) {
            let cost: f64 = tree.iter().zip(&flow).map(|(&(r, k), f)| c[r][k] * f).sum();
            if cost < best {
                best = cost;
            }
        }
    });
    best
}

fn find(parent: &mut [usize], x: usize) -> usize {
    let mut r = x;
    while parent[r] != r {
        r = parent[r];
    }
    r
}

type Visit<'a> = &'a mut dyn FnMut(&[(usize, usize)]);

fn enumerate_trees(
    cells: &[(usize, usize)],
    start: usize,
    need: usize,
    chosen: &mut Vec<(usize, usize)>,
    parent: &mut Vec<usize>,
    visit: Visit<'_>,
) {
    if chosen.len() == need {
        visit(chosen);
        return;
    }
    if cells.len() - start < need - chosen.len() {
        return;
    }
    let m_offset = cells.iter().map(|c| c.0).max().unwrap() + 1;
    for i in start..cells.len() {
        let (r, k) = cells[i];
        let (a, b) = (find(parent, r), find(parent, m_offset + k));
        if a == b {
            continue;
        }
        let saved = parent.clone();
        parent[a] = b;
        chosen.push((r, k));
        enumerate_trees(cells, i + 1, need, chosen, parent, visit);
        chosen.pop();
        *parent = saved;
    }
}

/// Flows on a spanning tree fixed by the marginals, via leaf elimination.
/// `None` if any flow is negative.
fn tree_flow(tree: &[(usize, usize)], s: &[f64], d: &[f64]) -> Option<Vec<f64>> {
    let m = s.len();
    let mut rem: Vec<f64> = s.iter().chain(d).copied().collect();
    let mut alive = vec![true; tree.len()];
    let mut flow = vec![0.0; tree.len()];
    for _ in 0..tree.len() {
        let mut degree = vec![0usize; rem.len()];
        for (e, &(r, k)) in tree.iter().enumerate() {
            if alive[e] {
                degree[r] += 1;
                degree[m + k] += 1;
            }
        }
        let (e, leaf, other) = tree
            .iter()
            .enumerate()
            .filter(|(e, _)| alive[*e])
            .find_map(|(e, &(r, k))| {
                if degree[r] == 1 {
                    Some((e, r, m + k))
                } else if degree[m + k] == 1 {
                    Some((e, m + k, r))
                } else {
                    None
                }
            })?;
        flow[e] = rem[leaf];
        rem[other] -= rem[leaf];
        rem[leaf] = 0.0;
        alive[e] = false;
    }
    if flow.iter().any(|&f| f < -1e-12) {
        None
    } else {
        Some(flow)
    }
}

/// Gini coefficient as mean absolute difference over twice the mean.
pub fn pairwise_gini(x: &[u64]) -> f64 {
    let n = x.len() as f64;
    let mean = x.iter().sum::<u64>() as f64 / n;
    let mut acc = 0.0;
    for &a in x {
        for &b in x {
            acc += (a as f64 - b as f64).abs();
        }
    }
    acc / (2.0 * n * n * mean)
}

/// Random point in the RGB cube.
pub fn random_color(rng: &mut ChaCha8Rng) -> [f64; 3] {
    [
        rng.random_range(0.0..=255.0),
        rng.random_range(0.0..=255.0),
        rng.random_range(0.0..=255.0),
    ]
}

/// Weight from {0.1, 0.2, ..., 1.0}.
pub fn tenth_weight(rng: &mut ChaCha8Rng) -> f64 {
    rng.random_range(1..=10) as f64 / 10.0
}

pub fn rng(seed: u64) -> ChaCha8Rng {
    ChaCha8Rng::seed_from_u64(seed)
}

pub fn euclid(a: &[f64; 3], b: &[f64; 3]) -> f64 {
    ((a[0] - b[0]).powi(2) + (a[1] - b[1]).powi(2) + (a[2] - b[2]).powi(2)).sqrt()
}

pub const TILE_DATASETS: [&str; 11] = [
    "dc-1", "jy-381-2", "jy-381-4", "lc-101", "lc-201", "nj-101", "nj-201", "xh-1", "xh-2", "xh-3", "xh-4",
];

/// Per-category instance counts of the eleven magnetic tile datasets,
/// rows y_0..y_19, columns in `TILE_DATASETS` order.
pub const TILE_COUNTS: [[u64; 11]; 20] = [
    [0, 0, 0, 0, 0, 0, 0, 0, 267, 0, 0],
    [0, 3041, 1676, 3875, 4070, 1021, 1944, 3102, 1515, 1209, 1613],
    [349, 62, 250, 2178, 631, 3058, 2787, 1403, 1002, 341, 54],
    [0, 1, 212, 84, 393, 1, 2, 40, 0, 0, 0],
    [2, 3, 0, 2778, 294, 705, 762, 373, 138, 272, 0],
    [0, 0, 0, 0, 0, 0, 0, 14, 4, 234, 0],
    [0, 10, 325, 183, 744, 27, 561, 5, 94, 79, 7],
    [0, 6, 1, 3, 20, 7, 43, 263, 2, 3, 0],
    [2, 0, 0, 2, 0, 1, 0, 14, 0, 3, 5],
    [4, 0, 0, 2, 1, 7, 2, 6, 0, 0, 0],
    [0, 0, 0, 0, 8, 0, 26, 1, 0, 338, 2],
    [0, 0, 0, 0, 0, 0, 0, 4, 0, 0, 0],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 26, 342],
    [18, 0, 0, 315, 2, 119, 101, 146, 3, 2, 3],
    [10, 0, 0, 64, 8, 850, 645, 73, 15, 328, 141],
    [0, 34, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 6, 0, 0, 0, 0, 0, 0, 0, 0, 0],
    [0, 2, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    [0, 0, 0, 0, 0, 0, 0, 0, 0, 0, 1],
    [0, 0, 0, 2, 0, 0, 0, 0, 0, 0, 0],
];

pub const TILE_SAMPLES: [u64; 11] = [385, 3165, 2464, 9486, 6171, 5796, 6873, 5444, 3040, 2835, 2169];
pub const TILE_IMAGES: [usize; 11] = [252, 3154, 2443, 7008, 5294, 5134, 6293, 4946, 2792, 2542, 2050];

pub fn tile_column(dataset: &str) -> Vec<(String, u64)> {
    let j = TILE_DATASETS.iter().position(|&d| d == dataset).expect("known dataset");
    (0..20)
        .filter(|&i| TILE_COUNTS[i][j] > 0)
        .map(|i| (format!("y_{i}"), TILE_COUNTS[i][j]))
        .collect()
}

/// Manifest with the dataset's image count whose label instances
/// reproduce its `TILE_COUNTS` column. Instances are dealt round-robin over images.
pub fn tile_manifest(dataset: &str) -> DatasetManifest {
    let j = TILE_DATASETS.iter().position(|&d| d == dataset).unwrap();
    let n_images = TILE_IMAGES[j];
    let mut labels: Vec<Vec<LabelId>> = vec![Vec::new(); n_images];
    let mut slot = 0;
    for (name, count) in tile_column(dataset) {
        for _ in 0..count {
            labels[slot % n_images].push(LabelId::from(name.as_str()));
            slot += 1;
        }
    }
    let records = labels
        .into_iter()
        .enumerate()
        .map(|(i, ls)| ImageRecord::new(format!("{dataset}-{i:05}"), format!("{i:05}.png"), 8, 8, ls))
        .collect();
    DatasetManifest::new(dataset, records).unwrap()
}

/// Writes a synthetic dataset of `n` square images to `dir` and saves its
/// manifest as `dir/manifest.json`. Each pixel takes `colors[0]` with
/// probability `mix` (drawn per image around `mix_center`), else `colors[1]`,
/// plus uniform noise of +-`noise` per channel. Image `i` carries the labels
/// returned by `labels(i)`.
#[allow(clippy::too_many_arguments)]
pub fn write_mixture_dataset(
    dir: &Path,
    dataset_id: &str,
    n: usize,
    side: u32,
    colors: [[u8; 3]; 2],
    mix_center: f64,
    noise: i32,
    seed: u64,
    labels: impl Fn(usize) -> Vec<&'static str>,
) -> DatasetManifest {
    std::fs::create_dir_all(dir).unwrap();
    let mut r = rng(seed);
    let mut records = Vec::with_capacity(n);
    for i in 0..n {
        let mix = (mix_center + r.random_range(-0.05..0.05)).clamp(0.0, 1.0);
        let img = image::RgbImage::from_fn(side, side, |_, _| {
            let base = if r.random::<f64>() < mix { colors[0] } else { colors[1] };
            let mut px = [0u8; 3];
            for c in 0..3 {
                px[c] = (base[c] as i32 + r.random_range(-noise..=noise)).clamp(0, 255) as u8;
            }
            image::Rgb(px)
        });
        let file = format!("img_{i:03}.png");
        img.save(dir.join(&file)).unwrap();
        records.push(ImageRecord::new(
            format!("{dataset_id}-{i:03}"),
            file,
            side,
            side,
            labels(i).into_iter().map(LabelId::from).collect(),
        ));
    }
    let mut m = DatasetManifest::new(dataset_id, records).unwrap();
    save_manifest(&m, dir.join("manifest.json")).unwrap();
    m.base_dir = Some(dir.to_path_buf());
    m
}
