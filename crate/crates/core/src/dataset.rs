//! Dataset manifests: image records with per-image label lists.
//!
//! A manifest is a UTF-8 JSON file of the form
//!
//! ```json
//! {"dataset_id": "dc-1",
//!  "images": [{"id": "a", "path": "a.png", "width": 64, "height": 64,
//!              "labels": ["y_2", "y_2"], "meta": {"boxes": []}}]}
//! ```
//!
//! Image paths resolve relative to the directory holding the manifest file.
//! Fields the schema does not name are kept verbatim and written back out.

use std::collections::{BTreeMap, BTreeSet, HashSet};
use std::fmt;
use std::path::{Path, PathBuf};

use serde::{Deserialize, Serialize};
use serde_json::{Map, Value};

use crate::error::{Error, Result};

/// Symbolic category identifier such as `y_2`.
#[derive(Debug, Clone, PartialEq, Eq, PartialOrd, Ord, Hash, Serialize, Deserialize)]
#[serde(transparent)]
pub struct LabelId(String);

impl LabelId {
    pub fn new(name: impl Into<String>) -> Result<Self> {
        let name = name.into();
        if name.is_empty() {
            return Err(Error::InvalidArgument("label id must be non-empty".into()));
        }
        Ok(LabelId(name))
    }

    pub fn as_str(&self) -> &str {
        &self.0
    }
}

impl fmt::Display for LabelId {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(&self.0)
    }
}

impl From<&str> for LabelId {
    /// Panics on an empty string; use [`LabelId::new`] for untrusted input.
    fn from(s: &str) -> Self {
        LabelId::new(s).expect("empty label id")
    }
}

pub type LabelSet = BTreeSet<LabelId>;

/// One image of a dataset. `labels` has one entry per annotated instance.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ImageRecord {
    pub id: String,
    pub path: String,
    pub width: u32,
    pub height: u32,
    pub labels: Vec<LabelId>,
    #[serde(default, skip_serializing_if = "Option::is_none")]
    pub meta: Option<Map<String, Value>>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
}

impl ImageRecord {
    pub fn new(id: impl Into<String>, path: impl Into<String>, width: u32, height: u32, labels: Vec<LabelId>) -> Self {
        ImageRecord {
            id: id.into(),
            path: path.into(),
            width,
            height,
            labels,
            meta: None,
            extra: Map::new(),
        }
    }
}

#[derive(Debug, Clone, Serialize, Deserialize)]
pub struct DatasetManifest {
    pub dataset_id: String,
    #[serde(rename = "images")]
    pub records: Vec<ImageRecord>,
    #[serde(flatten)]
    pub extra: Map<String, Value>,
    /// Directory that relative image paths resolve against.
    #[serde(skip)]
    pub base_dir: Option<PathBuf>,
}

// `base_dir` says where the manifest was read from, not what it contains.
impl PartialEq for DatasetManifest {
    fn eq(&self, other: &Self) -> bool {
        self.dataset_id == other.dataset_id && self.records == other.records && self.extra == other.extra
    }
}

impl DatasetManifest {
    pub fn new(dataset_id: impl Into<String>, records: Vec<ImageRecord>) -> Result<Self> {
        let manifest = DatasetManifest {
            dataset_id: dataset_id.into(),
            records,
            extra: Map::new(),
            base_dir: None,
        };
        manifest.validate()?;
        Ok(manifest)
    }

    pub fn validate(&self) -> Result<()> {
        if self.dataset_id.is_empty() {
            return Err(Error::schema("dataset_id", "must be a non-empty string"));
        }
        let mut seen = HashSet::with_capacity(self.records.len());
        for (i, r) in self.records.iter().enumerate() {
            if r.id.is_empty() {
                return Err(Error::schema(format!("images[{i}].id"), "must be non-empty"));
            }
            if r.width == 0 || r.height == 0 {
                return Err(Error::schema(
                    format!("images[{i}].{}", if r.width == 0 { "width" } else { "height" }),
                    "must be >= 1",
                ));
            }
            if !seen.insert(r.id.as_str()) {
                return Err(Error::DuplicateImageId(r.id.clone()));
            }
        }
        Ok(())
    }

    pub fn resolve_path(&self, record: &ImageRecord) -> PathBuf {
        let p = Path::new(&record.path);
        match &self.base_dir {
            Some(base) if p.is_relative() => base.join(p),
            _ => p.to_path_buf(),
        }
    }

    pub fn load_pixels(&self, record: &ImageRecord) -> Result<PixelBlock> {
        load_pixels(record, self.base_dir.as_deref())
    }

    /// Rewrites every image path to an absolute one so the manifest can be
    /// saved outside its original directory.
    pub fn absolutize_paths(&mut self) -> Result<()> {
        for i in 0..self.records.len() {
            let resolved = self.resolve_path(&self.records[i]);
            let abs = std::path::absolute(&resolved).map_err(|e| Error::io(&resolved, e))?;
            self.records[i].path = abs.to_string_lossy().into_owned();
        }
        Ok(())
    }

    /// Total number of annotation instances.
    pub fn instance_count(&self) -> u64 {
        self.records.iter().map(|r| r.labels.len() as u64).sum()
    }
}

/// Per-label instance counts. Labels with zero instances are absent.
#[derive(Debug, Clone, Default, PartialEq, Eq, Serialize, Deserialize)]
#[serde(transparent)]
pub struct ClassCounts {
    pub entries: BTreeMap<LabelId, u64>,
}

impl ClassCounts {
    pub fn total(&self) -> u64 {
        self.entries.values().sum()
    }

    pub fn get(&self, label: &LabelId) -> u64 {
        self.entries.get(label).copied().unwrap_or(0)
    }

    pub fn labels(&self) -> LabelSet {
        self.entries.keys().cloned().collect()
    }

    pub fn is_empty(&self) -> bool {
        self.entries.is_empty()
    }

    pub fn len(&self) -> usize {
        self.entries.len()
    }

    /// Keeps only the labels in `labels`.
    pub fn restricted_to(&self, labels: &LabelSet) -> ClassCounts {
        ClassCounts {
            entries: self
                .entries
                .iter()
                .filter(|(l, _)| labels.contains(*l))
                .map(|(l, c)| (l.clone(), *c))
                .collect(),
        }
    }

    pub fn values(&self) -> Vec<u64> {
        self.entries.values().copied().collect()
    }
}

impl FromIterator<(LabelId, u64)> for ClassCounts {
    fn from_iter<I: IntoIterator<Item = (LabelId, u64)>>(iter: I) -> Self {
        let mut entries = BTreeMap::new();
        for (l, c) in iter {
            if c > 0 {
                *entries.entry(l).or_insert(0) += c;
            }
        }
        ClassCounts { entries }
    }
}

/// Height x width x 3 RGB block, row-major.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct PixelBlock {
    width: u32,
    height: u32,
    data: Vec<u8>,
}

impl PixelBlock {
    pub fn new(width: u32, height: u32, data: Vec<u8>) -> Result<Self> {
        if data.len() != width as usize * height as usize * 3 {
            return Err(Error::InvalidArgument(format!(
                "pixel buffer of {} bytes does not match {width}x{height}x3",
                data.len()
            )));
        }
        Ok(PixelBlock { width, height, data })
    }

    pub fn from_fn(width: u32, height: u32, mut f: impl FnMut(u32, u32) -> [u8; 3]) -> Self {
        let mut data = Vec::with_capacity(width as usize * height as usize * 3);
        for y in 0..height {
            for x in 0..width {
                data.extend_from_slice(&f(x, y));
            }
        }
        PixelBlock { width, height, data }
    }

    pub fn width(&self) -> u32 {
        self.width
    }

    pub fn height(&self) -> u32 {
        self.height
    }

    pub fn len(&self) -> usize {
        self.data.len() / 3
    }

    pub fn is_empty(&self) -> bool {
        self.data.is_empty()
    }

    pub fn as_bytes(&self) -> &[u8] {
        &self.data
    }

    pub fn get(&self, x: u32, y: u32) -> [u8; 3] {
        let i = (y as usize * self.width as usize + x as usize) * 3;
        [self.data[i], self.data[i + 1], self.data[i + 2]]
    }

    pub fn pixels(&self) -> impl Iterator<Item = [u8; 3]> + '_ {
        self.data.chunks_exact(3).map(|c| [c[0], c[1], c[2]])
    }

    pub fn to_image(&self) -> image::RgbImage {
        image::RgbImage::from_raw(self.width, self.height, self.data.clone())
            .expect("buffer size checked at construction")
    }
}

fn field<'a>(obj: &'a Map<String, Value>, key: &str, path: &str) -> Result<&'a Value> {
    obj.get(key)
        .ok_or_else(|| Error::schema(format!("{path}{key}"), "missing required field"))
}

fn dimension(v: &Value, path: String) -> Result<u32> {
    v.as_u64()
        .filter(|&d| d >= 1 && d <= u32::MAX as u64)
        .map(|d| d as u32)
        .ok_or_else(|| Error::schema(path, "must be an integer >= 1"))
}

/// Parses and validates a manifest document. `base_dir` is left unset.
pub fn parse_manifest(text: &str) -> Result<DatasetManifest> {
    let root: Value = serde_json::from_str(text).map_err(|e| Error::schema("$", e.to_string()))?;
    let obj = root
        .as_object()
        .ok_or_else(|| Error::schema("$", "top level must be an object"))?;

    let dataset_id = field(obj, "dataset_id", "")?
        .as_str()
        .filter(|s| !s.is_empty())
        .ok_or_else(|| Error::schema("dataset_id", "must be a non-empty string"))?;
    let images = field(obj, "images", "")?
        .as_array()
        .ok_or_else(|| Error::schema("images", "must be an array"))?;

    let mut records = Vec::with_capacity(images.len());
    for (i, img) in images.iter().enumerate() {
        let p = format!("images[{i}].");
        let o = img
            .as_object()
            .ok_or_else(|| Error::schema(format!("images[{i}]"), "must be an object"))?;
        let id = field(o, "id", &p)?
            .as_str()
            .filter(|s| !s.is_empty())
            .ok_or_else(|| Error::schema(format!("{p}id"), "must be a non-empty string"))?;
        let path = field(o, "path", &p)?
            .as_str()
            .ok_or_else(|| Error::schema(format!("{p}path"), "must be a string"))?;
        let width = dimension(field(o, "width", &p)?, format!("{p}width"))?;
        let height = dimension(field(o, "height", &p)?, format!("{p}height"))?;
        let labels = field(o, "labels", &p)?
            .as_array()
            .ok_or_else(|| Error::schema(format!("{p}labels"), "must be an array"))?
            .iter()
            .enumerate()
            .map(|(j, l)| {
                l.as_str()
                    .filter(|s| !s.is_empty())
                    .map(LabelId::from)
                    .ok_or_else(|| Error::schema(format!("{p}labels[{j}]"), "must be a non-empty string"))
            })
            .collect::<Result<Vec<_>>>()?;
        let meta = match o.get("meta") {
            None | Some(Value::Null) => None,
            Some(Value::Object(m)) => Some(m.clone()),
            Some(_) => return Err(Error::schema(format!("{p}meta"), "must be an object")),
        };
        let extra = o
            .iter()
            .filter(|(k, _)| !matches!(k.as_str(), "id" | "path" | "width" | "height" | "labels" | "meta"))
            .map(|(k, v)| (k.clone(), v.clone()))
            .collect();
        records.push(ImageRecord {
            id: id.to_owned(),
            path: path.to_owned(),
            width,
            height,
            labels,
            meta,
            extra,
        });
    }

    let extra = obj
        .iter()
        .filter(|(k, _)| !matches!(k.as_str(), "dataset_id" | "images"))
        .map(|(k, v)| (k.clone(), v.clone()))
        .collect();
    let manifest = DatasetManifest {
        dataset_id: dataset_id.to_owned(),
        records,
        extra,
        base_dir: None,
    };
    manifest.validate()?;
    Ok(manifest)
}

pub fn load_manifest(path: impl AsRef<Path>) -> Result<DatasetManifest> {
    let path = path.as_ref();
    let text = std::fs::read_to_string(path).map_err(|e| Error::io(path, e))?;
    let mut manifest = parse_manifest(&text)?;
    manifest.base_dir = Some(path.parent().map(Path::to_path_buf).unwrap_or_default());
    Ok(manifest)
}

pub fn manifest_to_string(manifest: &DatasetManifest) -> Result<String> {
    let mut s = serde_json::to_string_pretty(manifest)?;
    s.push('\n');
    Ok(s)
}

pub fn save_manifest(manifest: &DatasetManifest, path: impl AsRef<Path>) -> Result<()> {
    let path = path.as_ref();
    if let Some(dir) = path.parent().filter(|d| !d.as_os_str().is_empty()) {
        std::fs::create_dir_all(dir).map_err(|e| Error::io(dir, e))?;
    }
    std::fs::write(path, manifest_to_string(manifest)?).map_err(|e| Error::io(path, e))
}

pub fn class_counts(manifest: &DatasetManifest) -> ClassCounts {
    manifest
        .records
        .iter()
        .flat_map(|r| r.labels.iter().map(|l| (l.clone(), 1)))
        .collect()
}

pub fn label_set(manifest: &DatasetManifest) -> LabelSet {
    manifest
        .records
        .iter()
        .flat_map(|r| r.labels.iter().cloned())
        .collect()
}

/// Decodes the image behind `record`. Grayscale is replicated to three
/// channels, alpha is discarded.
pub fn load_pixels(record: &ImageRecord, base_dir: Option<&Path>) -> Result<PixelBlock> {
    let p = Path::new(&record.path);
    let path = match base_dir {
        Some(base) if p.is_relative() => base.join(p),
        _ => p.to_path_buf(),
    };
    let img = image::ImageReader::open(&path)
        .map_err(|e| Error::io(&path, e))?
        .with_guessed_format()
        .map_err(|e| Error::io(&path, e))?
        .decode()
        .map_err(|e| Error::Decode {
            path: path.clone(),
            message: e.to_string(),
        })?;
    let rgb = img.to_rgb8();
    if rgb.width() != record.width || rgb.height() != record.height {
        return Err(Error::DimensionMismatch {
            id: record.id.clone(),
            declared_w: record.width,
            declared_h: record.height,
            actual_w: rgb.width(),
            actual_h: rgb.height(),
        });
    }
    let (w, h) = rgb.dimensions();
    PixelBlock::new(w, h, rgb.into_raw())
}
