//! k-means++, the adjusted Rand index and the clustering stability test.

mod ari;
mod kmeans;
mod methods;
mod stability;

pub use ari::{adjusted_rand_index, adjusted_rand_index_raw};
pub use kmeans::{kmeans_best_of, kmeans_pp, KMeansConfig, KMeansResult};
pub use methods::{run_method, Method, MethodContext, MethodParams, MethodRunner};
pub use stability::{
    partition_for_stability, stability_test, summarize_stability, Labeler, MedMad, MethodStability, MixedSet,
    PairwiseAri, Partition, StabilityConfig, StabilityReport, StabilitySummary,
};

use crate::error::{Error, Result};

/// Cluster assignment of a set of items.
#[derive(Debug, Clone, PartialEq, Eq)]
pub struct ClusterLabels {
    pub items: Vec<String>,
    pub labels: Vec<usize>,
    pub clusters: usize,
}

impl ClusterLabels {
    pub fn new(items: Vec<String>, labels: Vec<usize>, clusters: usize) -> Result<Self> {
        if items.len() != labels.len() {
            return Err(Error::Shape(format!("{} items, {} labels", items.len(), labels.len())));
        }
        if let Some(&bad) = labels.iter().find(|&&l| l >= clusters) {
            return Err(Error::Config(format!("label {bad} not below cluster count {clusters}")));
        }
        Ok(Self {
            items,
            labels,
            clusters,
        })
    }

    pub fn len(&self) -> usize {
        self.items.len()
    }

    pub fn is_empty(&self) -> bool {
        self.items.is_empty()
    }
}
