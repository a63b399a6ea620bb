//! Label-space-conditioned subsets of a source manifest.

use std::fmt;
use std::str::FromStr;

use serde::{Deserialize, Serialize};

use crate::dataset::{DatasetManifest, LabelSet};
use crate::error::{Error, Result};

#[derive(Debug, Clone, Copy, Default, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum SubsetPolicy {
    /// Keep an image only if every label is in the target set.
    #[default]
    Strict,
    /// Keep an image if any label is in the target set; prune the rest.
    Relaxed,
}

impl fmt::Display for SubsetPolicy {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(match self {
            SubsetPolicy::Strict => "strict",
            SubsetPolicy::Relaxed => "relaxed",
        })
    }
}

impl FromStr for SubsetPolicy {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        match s {
            "strict" => Ok(SubsetPolicy::Strict),
            "relaxed" => Ok(SubsetPolicy::Relaxed),
            other => Err(Error::InvalidArgument(format!("unknown subset policy `{other}`"))),
        }
    }
}

/// Counts written next to a filtered manifest.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct RemovalReport {
    pub removed_images: usize,
    pub pruned_annotations: usize,
    pub policy: SubsetPolicy,
}

#[derive(Debug, Clone, PartialEq)]
pub struct FilteredManifest {
    pub manifest: DatasetManifest,
    pub removed_images: usize,
    pub pruned_annotations: usize,
    pub policy: SubsetPolicy,
}

impl FilteredManifest {
    pub fn report(&self) -> RemovalReport {
        RemovalReport {
            removed_images: self.removed_images,
            pruned_annotations: self.pruned_annotations,
            policy: self.policy,
        }
    }
}

/// Drops (or prunes) annotations outside `target_labels`. Unlabeled images
/// are always kept.
pub fn filter_subset(source: &DatasetManifest, target_labels: &LabelSet, policy: SubsetPolicy) -> Result<FilteredManifest> {
    if target_labels.is_empty() {
        return Err(Error::InvalidArgument("target label set is empty".into()));
    }
    let mut records = Vec::with_capacity(source.records.len());
    let mut removed_images = 0;
    let mut pruned_annotations = 0;
    for r in &source.records {
        if r.labels.is_empty() {
            records.push(r.clone());
            continue;
        }
        let inside = r.labels.iter().filter(|l| target_labels.contains(*l)).count();
        match policy {
            SubsetPolicy::Strict if inside == r.labels.len() => records.push(r.clone()),
            SubsetPolicy::Relaxed if inside > 0 => {
                let mut kept = r.clone();
                kept.labels.retain(|l| target_labels.contains(l));
                pruned_annotations += r.labels.len() - inside;
                records.push(kept);
            }
            _ => removed_images += 1,
        }
    }
    Ok(FilteredManifest {
        manifest: DatasetManifest {
            dataset_id: source.dataset_id.clone(),
            records,
            extra: source.extra.clone(),
            base_dir: source.base_dir.clone(),
        },
        removed_images,
        pruned_annotations,
        policy,
    })
}
