//! Score reports: a CSV table (rows are targets, columns are sources, four
//! decimals) and a JSON document with every score component.

use serde::{Deserialize, Serialize};

use crate::error::Result;
use crate::scoring::{DiscrepancyScore, ScoreMatrix, SelectionResult};

/// Selection outcome for one target; `error` is set when no source qualifies.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct SelectionEntry {
    pub target_id: String,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub selection: Option<SelectionResult>,
    #[serde(skip_serializing_if = "Option::is_none")]
    pub error: Option<String>,
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct ScoreReport {
    pub k: usize,
    pub seed: u64,
    pub epsilon: f64,
    pub source_ids: Vec<String>,
    /// One row per target.
    pub rows: Vec<Vec<DiscrepancyScore>>,
    pub selections: Vec<SelectionEntry>,
}

impl ScoreReport {
    pub fn from_matrix(m: &ScoreMatrix, k: usize, seed: u64, epsilon: f64, selections: Vec<SelectionEntry>) -> Self {
        ScoreReport {
            k,
            seed,
            epsilon,
            source_ids: m.ids.clone(),
            rows: m.scores.clone(),
            selections,
        }
    }

    pub fn to_json(&self) -> Result<String> {
        let mut s = serde_json::to_string_pretty(self)?;
        s.push('\n');
        Ok(s)
    }

    pub fn to_csv(&self) -> Result<String> {
        score_csv(&self.source_ids, &self.rows)
    }
}

/// Table layout: header `target,<source ids...>`, then one line per target
/// row with scores at four decimals.
pub fn score_csv(source_ids: &[String], rows: &[Vec<DiscrepancyScore>]) -> Result<String> {
    let mut w = csv::Writer::from_writer(Vec::new());
    let mut header = vec!["target".to_string()];
    header.extend(source_ids.iter().cloned());
    w.write_record(&header)?;
    for row in rows {
        let Some(first) = row.first() else { continue };
        let mut line = vec![first.target_id.clone()];
        for id in source_ids {
            let cell = row
                .iter()
                .find(|s| &s.source_id == id)
                .map(|s| format!("{:.4}", s.score))
                .unwrap_or_default();
            line.push(cell);
        }
        w.write_record(&line)?;
    }
    let bytes = w.into_inner().map_err(|e| csv::Error::from(e.into_error()))?;
    Ok(String::from_utf8(bytes).expect("csv of utf-8 fields"))
}
