//! Domain discrepancy scores and source selection.
//!
//! A score is `emd * delta / (overlap + epsilon)` where `emd` compares the
//! dataset color signatures, `overlap` is the number of shared labels and
//! `delta` is the Gini coefficient of the source's class counts restricted
//! to those shared labels. Lower is more similar.

use std::collections::{HashMap, HashSet};

use rayon::prelude::*;
use serde::{Deserialize, Serialize};

use crate::dataset::{class_counts, ClassCounts, DatasetManifest, LabelSet};
use crate::emd::emd;
use crate::error::{Error, Result};
use crate::longtail::gini;
use crate::signature::Signature;

pub const DEFAULT_EPSILON: f64 = 1.0;

/// Number of candidates kept before the sample-count tie-break.
pub const SHORTLIST: usize = 3;

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DiscrepancyScore {
    pub target_id: String,
    pub source_id: String,
    pub emd: f64,
    pub delta: f64,
    pub overlap: usize,
    pub epsilon: f64,
    pub score: f64,
    pub degenerate: bool,
}

impl DiscrepancyScore {
    pub fn new(
        target_id: impl Into<String>,
        source_id: impl Into<String>,
        emd: f64,
        delta: f64,
        overlap: usize,
        epsilon: f64,
    ) -> Result<Self> {
        if !(epsilon >= 0.0) {
            return Err(Error::InvalidArgument(format!("epsilon must be >= 0, got {epsilon}")));
        }
        let denom = overlap as f64 + epsilon;
        if denom == 0.0 {
            return Err(Error::DivisionGuard);
        }
        Ok(DiscrepancyScore {
            target_id: target_id.into(),
            source_id: source_id.into(),
            emd,
            delta,
            overlap,
            epsilon,
            score: emd * delta / denom,
            degenerate: emd == 0.0 || delta == 0.0 || overlap == 0,
        })
    }
}

/// What scoring needs from one dataset.
#[derive(Debug, Clone, PartialEq)]
pub struct ScoredDataset {
    pub id: String,
    pub counts: ClassCounts,
    pub signature: Signature,
}

impl ScoredDataset {
    pub fn new(manifest: &DatasetManifest, signature: Signature) -> Self {
        ScoredDataset {
            id: manifest.dataset_id.clone(),
            counts: class_counts(manifest),
            signature,
        }
    }

    pub fn labels(&self) -> LabelSet {
        self.counts.labels()
    }

    /// Annotation instances, used as the sample count in selection.
    pub fn sample_count(&self) -> u64 {
        self.counts.total()
    }
}

pub fn overlap(target_labels: &LabelSet, source_labels: &LabelSet) -> usize {
    target_labels.intersection(source_labels).count()
}

pub fn disc(target: &ScoredDataset, source: &ScoredDataset, epsilon: f64) -> Result<DiscrepancyScore> {
    let shared: LabelSet = target.labels().intersection(&source.labels()).cloned().collect();
    let restricted = source.counts.restricted_to(&shared);
    let delta = if restricted.is_empty() {
        0.0
    } else {
        gini(&restricted)?.delta
    };
    let distance = emd(&target.signature, &source.signature)?.distance;
    DiscrepancyScore::new(&target.id, &source.id, distance, delta, shared.len(), epsilon)
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreMatrix {
    pub ids: Vec<String>,
    /// `scores[t][s]` rates dataset `s` as a source for target `t`.
    pub scores: Vec<Vec<DiscrepancyScore>>,
}

impl ScoreMatrix {
    pub fn row(&self, target_id: &str) -> Option<&[DiscrepancyScore]> {
        self.ids
            .iter()
            .position(|id| id == target_id)
            .map(|i| self.scores[i].as_slice())
    }
}

pub fn score_matrix(datasets: &[ScoredDataset], epsilon: f64) -> Result<ScoreMatrix> {
    let mut seen = HashSet::new();
    for d in datasets {
        if !seen.insert(d.id.as_str()) {
            return Err(Error::DuplicateDatasetId(d.id.clone()));
        }
    }
    if datasets.len() < 2 {
        return Err(Error::InvalidArgument("score matrix needs at least two datasets".into()));
    }
    let n = datasets.len();
    let flat: Vec<DiscrepancyScore> = (0..n * n)
        .into_par_iter()
        .map(|i| disc(&datasets[i / n], &datasets[i % n], epsilon))
        .collect::<Result<_>>()?;
    Ok(ScoreMatrix {
        ids: datasets.iter().map(|d| d.id.clone()).collect(),
        scores: flat.chunks(n).map(<[_]>::to_vec).collect(),
    })
}

/// Scores every source against one target, in input order.
pub fn score_row(target: &ScoredDataset, sources: &[ScoredDataset], epsilon: f64) -> Result<Vec<DiscrepancyScore>> {
    let mut seen = HashSet::from([target.id.as_str()]);
    for s in sources {
        if !seen.insert(s.id.as_str()) {
            return Err(Error::DuplicateDatasetId(s.id.clone()));
        }
    }
    sources.par_iter().map(|s| disc(target, s, epsilon)).collect()
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct Candidate {
    pub source_id: String,
    pub score: f64,
    pub sample_count: u64,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionResult {
    pub target_id: String,
    /// Up to three lowest non-degenerate scores, ascending.
    pub candidates: Vec<Candidate>,
    pub chosen: String,
}

/// Keeps the three lowest non-degenerate scores and picks the one backed by
/// the most samples.
pub fn select_source(
    target_id: &str,
    row: &[DiscrepancyScore],
    sample_counts: &HashMap<String, u64>,
) -> Result<SelectionResult> {
    let mut pool = Vec::new();
    for s in row.iter().filter(|s| !s.degenerate && s.source_id != target_id) {
        let sample_count = *sample_counts
            .get(&s.source_id)
            .ok_or_else(|| Error::InvalidArgument(format!("no sample count for `{}`", s.source_id)))?;
        pool.push(Candidate {
            source_id: s.source_id.clone(),
            score: s.score,
            sample_count,
        });
    }
    if pool.is_empty() {
        return Err(Error::NoValidSource(target_id.to_owned()));
    }
    pool.sort_by(|a, b| {
        a.score
            .total_cmp(&b.score)
            .then(b.sample_count.cmp(&a.sample_count))
            .then(a.source_id.cmp(&b.source_id))
    });
    pool.truncate(SHORTLIST);
    // first maximum in rank order
    let chosen = pool
        .iter()
        .fold(&pool[0], |best, c| if c.sample_count > best.sample_count { c } else { best })
        .source_id
        .clone();
    Ok(SelectionResult {
        target_id: target_id.to_owned(),
        candidates: pool,
        chosen,
    })
}
