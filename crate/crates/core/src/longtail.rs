//! Gini coefficient of a class-count distribution via the Lorenz curve.

use serde::{Deserialize, Serialize};

use crate::dataset::ClassCounts;
use crate::error::{Error, Result};

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct GiniResult {
    pub sorted_counts: Vec<u64>,
    /// Cumulative share of instances after each category.
    pub cumulative: Vec<f64>,
    /// Area under the Lorenz curve.
    pub area_b: f64,
    /// Area between the diagonal and the Lorenz curve.
    pub area_a: f64,
    pub delta: f64,
}

pub fn gini(counts: &ClassCounts) -> Result<GiniResult> {
    gini_of(&counts.values())
}

/// Gini coefficient of raw category sizes. Zero entries carry no mass and
/// are ignored.
pub fn gini_of(counts: &[u64]) -> Result<GiniResult> {
    let mut sorted: Vec<u64> = counts.iter().copied().filter(|&c| c > 0).collect();
    if sorted.is_empty() {
        return Err(Error::Empty("class counts"));
    }
    sorted.sort_unstable();

    let total: u64 = sorted.iter().sum();
    let k = sorted.len() as f64;
    let mut running = 0u64;
    let cumulative: Vec<f64> = sorted
        .iter()
        .map(|&c| {
            running += c;
            running as f64 / total as f64
        })
        .collect();

    // trapezoids of width 1/k under the piecewise-linear Lorenz curve
    let mut prev = 0.0;
    let mut area_b = 0.0;
    for &c in &cumulative {
        area_b += (c + prev) / 2.0 / k;
        prev = c;
    }
    // equal counts lie on the diagonal; pin it so rounding cannot leak in
    if sorted.first() == sorted.last() {
        area_b = 0.5;
    }
    let area_a = (0.5 - area_b).max(0.0);
    let delta = area_a / (area_a + area_b);

    Ok(GiniResult {
        sorted_counts: sorted,
        cumulative,
        area_b,
        area_a,
        delta,
    })
}
