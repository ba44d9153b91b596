//! The four user-clustering methods compared by the stability test.

use std::fmt;
use std::str::FromStr;

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use super::kmeans::{kmeans_best_of, KMeansConfig};
use super::stability::{Labeler, MixedSet};
use super::ClusterLabels;
use crate::data::{build_user_flow_matrix, FlowMatrix, ODPairIndex, TripDatabase};
use crate::error::{Error, Result};
use crate::exec::Execution;
use crate::factorization::{fit_generic, train, FactorModel, TrainConfig};
use crate::seed;
use crate::transfer::{project_users_traced, ProjectionConfig};

#[derive(Debug, Clone, Copy, PartialEq, Eq, Hash, Serialize, Deserialize)]
#[serde(rename_all = "lowercase")]
pub enum Method {
    /// k-means on raw user flow rows.
    Naive,
    /// k-means on the weights of a plain NMF of the user flow matrix.
    Nmf,
    /// k-means on user projections onto station-learned signatures.
    S2u,
    /// S2U on one replicated training set; only clustering seeds vary.
    Control,
}

impl Method {
    pub const ALL: [Method; 4] = [Method::Naive, Method::Nmf, Method::S2u, Method::Control];

    pub fn name(self) -> &'static str {
        match self {
            Method::Naive => "naive",
            Method::Nmf => "nmf",
            Method::S2u => "s2u",
            Method::Control => "control",
        }
    }

    fn uses_station_model(self) -> bool {
        matches!(self, Method::S2u | Method::Control)
    }
}

impl fmt::Display for Method {
    fn fmt(&self, f: &mut fmt::Formatter<'_>) -> fmt::Result {
        f.write_str(self.name())
    }
}

impl FromStr for Method {
    type Err = Error;

    fn from_str(s: &str) -> Result<Self> {
        Method::ALL
            .into_iter()
            .find(|m| m.name() == s.trim().to_ascii_lowercase())
            .ok_or_else(|| Error::UnknownMethod(s.to_string()))
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct MethodParams {
    /// Station model for S2U and Control.
    pub tidal: TrainConfig,
    /// Baseline NMF on user flows.
    pub nmf: TrainConfig,
    pub projection: ProjectionConfig,
    pub kmeans: KMeansConfig,
}

impl Default for MethodParams {
    fn default() -> Self {
        Self {
            tidal: TrainConfig::default(),
            nmf: TrainConfig {
                max_iters: 500,
                ..TrainConfig::default()
            },
            projection: ProjectionConfig::default(),
            kmeans: KMeansConfig::default(),
        }
    }
}

/// Inputs shared by every method run.
#[derive(Debug, Clone, Copy)]
pub struct MethodContext<'a> {
    pub db: &'a TripDatabase,
    /// OD flow matrix of the full database.
    pub v: &'a FlowMatrix,
    pub index: &'a ODPairIndex,
    pub params: &'a MethodParams,
    pub seed: u64,
}

impl MethodContext<'_> {
    /// Station model for `repetition`.
    pub fn station_model(&self, repetition: usize) -> Result<FactorModel> {
        let config = TrainConfig {
            seed: seed::derive_indexed(self.seed, "tidal-nmf", repetition as u64),
            ..self.params.tidal.clone()
        };
        Ok(train(self.v.values.view(), self.index, &config)?.model)
    }
}

fn features(
    method: Method,
    ctx: &MethodContext,
    model: Option<&FactorModel>,
    u: &FlowMatrix,
    run_seed: u64,
    exec: Execution,
) -> Result<Array2<f64>> {
    match method {
        Method::Naive => Ok(u.values.clone()),
        Method::Nmf => {
            let config = TrainConfig {
                seed: seed::derive(run_seed, "nmf"),
                ..ctx.params.nmf.clone()
            };
            Ok(fit_generic(u.values.view(), &config)?.0)
        }
        Method::S2u | Method::Control => {
            let model = model.ok_or_else(|| Error::Config(format!("{method} needs a station model")))?;
            let config = ProjectionConfig {
                seed: seed::derive(ctx.seed, "projection"),
                ..ctx.params.projection
            };
            Ok(project_users_traced(u, model.h.view(), &config, exec)?.0.values)
        }
    }
}

/// Clusters `training ∪ test` with `method` and returns the labels of the
/// test users. `model` is required for S2U and Control.
pub fn run_method(
    method: Method,
    ctx: &MethodContext,
    model: Option<&FactorModel>,
    training: &[String],
    test: &[String],
    run_seed: u64,
) -> Result<ClusterLabels> {
    run_method_with(method, ctx, model, training, test, run_seed, Execution::default())
}

fn run_method_with(
    method: Method,
    ctx: &MethodContext,
    model: Option<&FactorModel>,
    training: &[String],
    test: &[String],
    run_seed: u64,
    exec: Execution,
) -> Result<ClusterLabels> {
    let mixed: Vec<String> = training.iter().chain(test).cloned().collect();
    let u = build_user_flow_matrix(ctx.db, &mixed);
    let x = features(method, ctx, model, &u, run_seed, exec)?;
    let km = kmeans_best_of(x.view(), &ctx.params.kmeans, seed::derive(run_seed, "kmeans"), exec)?;
    let offset = training.len();
    ClusterLabels::new(test.to_vec(), km.labels[offset..].to_vec(), ctx.params.kmeans.clusters)
}

/// Adapts a [`Method`] to the stability harness.
#[derive(Debug, Clone, Copy)]
pub struct MethodRunner<'a> {
    pub method: Method,
    pub ctx: MethodContext<'a>,
}

impl MethodRunner<'_> {
    /// Seed of mixed set `index` in `repetition`.
    pub fn run_seed(&self, repetition: usize, index: usize) -> u64 {
        seed::derive_indexed(
            seed::derive_indexed(self.ctx.seed, "run", repetition as u64),
            "set",
            index as u64,
        )
    }
}

impl Labeler for MethodRunner<'_> {
    type Shared = Option<FactorModel>;

    fn name(&self) -> String {
        self.method.name().to_string()
    }

    fn replicates_training_set(&self) -> bool {
        self.method == Method::Control
    }

    fn prepare(&self, repetition: usize) -> Result<Option<FactorModel>> {
        if self.method.uses_station_model() {
            self.ctx.station_model(repetition).map(Some)
        } else {
            Ok(None)
        }
    }

    fn label(&self, model: &Option<FactorModel>, set: &MixedSet) -> Result<Vec<usize>> {
        let seed = self.run_seed(set.repetition, set.index);
        // the harness already parallelizes across mixed sets
        let labels = run_method_with(
            self.method,
            &self.ctx,
            model.as_ref(),
            set.training,
            set.test,
            seed,
            Execution::Sequential,
        )?;
        Ok(labels.labels)
    }
}
