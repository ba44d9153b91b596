//! Tidal-regularized non-negative matrix factorization of `V ≈ W·H`.
//!
//! `W` holds one row per OD pair (block layout of [`ODPairIndex`]) and one
//! column per latent component; `H` holds one temporal signature per
//! component. Training minimizes the elastic-net reconstruction loss, then
//! adds a tidal term that ties the morning flow of every OD pair to the
//! afternoon flow of its reverse pair and suppresses cross-band signature mass.
//!
//! [`ODPairIndex`]: crate::data::ODPairIndex

mod loss;
mod semantics;
mod train;

pub use loss::{
    generic_loss, loss_gradients, tidal_loss, tidal_symmetry_residual, total_loss, LossBreakdown, TidalContext,
};
pub use semantics::{classify_components, cross_band_mass, normalize_factors, reorder_factors, Normalized, Reordered};
pub use train::{fit_generic, init_factors, positive_uniform_row, train, TraceEntry, TrainOutput};

use ndarray::Array2;
use serde::{Deserialize, Serialize};

use crate::error::{Error, Result};

/// Epoch boundaries of the morning and afternoon commute bands.
///
/// Morning is `[0, morning_end)`, afternoon is `[afternoon_start, T)`; epochs
/// in between belong to neither.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
pub struct EpochSplits {
    pub morning_end: usize,
    pub afternoon_start: usize,
}

impl Default for EpochSplits {
    fn default() -> Self {
        Self {
            morning_end: 11,
            afternoon_start: 14,
        }
    }
}

impl EpochSplits {
    pub fn new(morning_end: usize, afternoon_start: usize, epochs: usize) -> Result<Self> {
        let s = Self {
            morning_end,
            afternoon_start,
        };
        s.validate(epochs)?;
        Ok(s)
    }

    pub fn validate(&self, epochs: usize) -> Result<()> {
        if 0 < self.morning_end && self.morning_end <= self.afternoon_start && self.afternoon_start < epochs {
            Ok(())
        } else {
            Err(Error::Config(format!(
                "epoch splits need 0 < morning_end ({}) <= afternoon_start ({}) < T ({epochs})",
                self.morning_end, self.afternoon_start
            )))
        }
    }

    pub fn morning(&self) -> std::ops::Range<usize> {
        0..self.morning_end
    }

    pub fn afternoon(&self, epochs: usize) -> std::ops::Range<usize> {
        self.afternoon_start..epochs
    }
}

/// Assignment of latent components to commute semantics.
#[derive(Debug, Clone, PartialEq, Eq, Default, Serialize, Deserialize)]
pub struct SemanticGroups {
    pub morning: Vec<usize>,
    pub evening: Vec<usize>,
    pub other: Vec<usize>,
}

impl SemanticGroups {
    /// Checks that the three sets partition `0..components`.
    pub fn validate(&self, components: usize) -> Result<()> {
        let mut seen = vec![false; components];
        for &j in self.morning.iter().chain(&self.evening).chain(&self.other) {
            if j >= components || std::mem::replace(&mut seen[j], true) {
                return Err(Error::Config(format!(
                    "component {j} is out of range or assigned twice"
                )));
            }
        }
        if seen.iter().all(|&s| s) {
            Ok(())
        } else {
            Err(Error::Config("semantic groups do not cover every component".into()))
        }
    }

    pub fn has_tidal_pair(&self) -> bool {
        !self.morning.is_empty() && !self.evening.is_empty()
    }
}

#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct TrainConfig {
    pub components: usize,
    pub alpha: f64,
    pub eta: f64,
    pub gamma: f64,
    pub rho: f64,
    /// Initial step size; adapted by backtracking during training.
    pub learning_rate: f64,
    pub max_iters: usize,
    pub warmup_iters: usize,
    pub mse_tolerance: f64,
    /// Components whose total mass falls below this fraction of the mean
    /// component mass are never classified as commute components.
    pub min_mass_ratio: f64,
    pub splits: EpochSplits,
    pub seed: u64,
}

impl Default for TrainConfig {
    fn default() -> Self {
        Self {
            components: 6,
            alpha: 0.1,
            eta: 0.5,
            gamma: 1.0,
            rho: 1.0,
            learning_rate: 1e-3,
            max_iters: 2000,
            warmup_iters: 200,
            mse_tolerance: 1e-6,
            min_mass_ratio: 0.05,
            splits: EpochSplits::default(),
            seed: 0,
        }
    }
}

impl TrainConfig {
    pub fn validate(&self) -> Result<()> {
        let bad = |m: &str| Err(Error::Config(m.into()));
        if self.components == 0 {
            return bad("component count must be at least 1");
        }
        if !(0.0..=1.0).contains(&self.eta) {
            return bad("eta must lie in [0, 1]");
        }
        if !(self.alpha >= 0.0 && self.gamma >= 0.0 && self.rho >= 0.0) {
            return bad("alpha, gamma and rho must be non-negative");
        }
        if !(self.learning_rate > 0.0 && self.learning_rate.is_finite()) {
            return bad("learning rate must be positive");
        }
        if self.mse_tolerance.is_nan() || self.mse_tolerance < 0.0 {
            return bad("mse tolerance must be non-negative");
        }
        if self.warmup_iters > self.max_iters {
            return bad("warmup_iters exceeds max_iters");
        }
        Ok(())
    }
}

/// A trained, finalized factorization.
#[derive(Debug, Clone, PartialEq)]
pub struct FactorModel {
    pub w: Array2<f64>,
    pub h: Array2<f64>,
    pub groups: SemanticGroups,
    pub splits: EpochSplits,
    /// Components whose signature was numerically zero at normalization.
    pub degenerate: Vec<usize>,
    /// Whether the tidal term was part of the second training phase.
    pub tidal_active: bool,
}

impl FactorModel {
    pub fn components(&self) -> usize {
        self.h.nrows()
    }

    pub fn epochs(&self) -> usize {
        self.h.ncols()
    }

    /// Components whose signature peaks at `epoch` (ties to the earliest epoch).
    pub fn components_peaking_at(&self, epoch: usize) -> Vec<usize> {
        (0..self.components())
            .filter(|&j| semantics::peak_epoch(self.h.row(j)) == Some(epoch))
            .collect()
    }
}
