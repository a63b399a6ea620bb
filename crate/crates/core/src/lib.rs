//! Source dataset selection for transfer learning.
//!
//! Datasets are compared through k-means color signatures and the Earth
//! Mover's Distance between them, weighted by the long-tailedness (Gini
//! coefficient) of the shared classes and divided by the number of shared
//! labels. The lowest-scoring sources form a shortlist from which the one
//! with the most samples is recommended. Helpers cut a source down to the
//! target's label space and rebalance class counts by augmentation.

// `!(x > 0.0)` is used on purpose so NaN fails validation too
#![allow(clippy::neg_cmp_op_on_partial_ord)]

pub mod augment;
pub mod cache;
pub mod dataset;
pub mod emd;
pub mod error;
pub mod kmeans;
pub mod longtail;
pub mod report;
pub mod scoring;
pub mod signature;
pub mod subset;

pub use dataset::{
    class_counts, label_set, load_manifest, load_pixels, save_manifest, ClassCounts, DatasetManifest, ImageRecord,
    LabelId, LabelSet, PixelBlock,
};
pub use emd::{emd, ground_distance, russell_initial_flow, solve_transport, EmdResult, FlowMatrix, GroundMatrix};
pub use error::{Error, Result};
pub use longtail::{gini, GiniResult};
pub use scoring::{disc, overlap, score_matrix, select_source, DiscrepancyScore, ScoreMatrix, SelectionResult};
pub use signature::{dataset_signature, image_kmeans, rss, select_k, DatasetSignature, ImageSignature, Signature};
pub use subset::{filter_subset, FilteredManifest, SubsetPolicy};
