use log::{debug, warn};
use ndarray::{Array1, Array2, ArrayView2};
use rand::{Rng, SeedableRng};
use rand_chacha::ChaCha8Rng;

use super::loss::{breakdown, grad_h, grad_w, LossBreakdown, TidalContext};
use super::semantics::{classify_components, normalize_factors, reorder_factors};
use super::{FactorModel, TrainConfig};
use crate::data::ODPairIndex;
use crate::error::{Error, Result};

const INIT_FLOOR: f64 = 1e-6;
const MAX_HALVINGS: usize = 60;
const STEP_GROWTH: f64 = 1.2;

/// Strictly positive random factors with entries in `(1e-6, c]`,
/// `c = sqrt(mean_value / k)`.
pub fn init_factors(rows: usize, k: usize, epochs: usize, mean_value: f64, seed: u64) -> (Array2<f64>, Array2<f64>) {
    let mut rng = ChaCha8Rng::seed_from_u64(seed);
    let w = positive_uniform(&mut rng, (rows, k), mean_value, k);
    let h = positive_uniform(&mut rng, (k, epochs), mean_value, k);
    (w, h)
}

fn init_bound(mean_value: f64, k: usize) -> f64 {
    (mean_value.max(0.0) / k.max(1) as f64).sqrt().max(2.0 * INIT_FLOOR)
}

// u ∈ [0, 1) maps to (ε, c]
fn positive_uniform<R: Rng>(rng: &mut R, shape: (usize, usize), mean_value: f64, k: usize) -> Array2<f64> {
    let c = init_bound(mean_value, k);
    Array2::from_shape_simple_fn(shape, || c - rng.random::<f64>() * (c - INIT_FLOOR))
}

/// One strictly positive random row of length `k`, drawn like [`init_factors`].
pub fn positive_uniform_row<R: Rng>(rng: &mut R, k: usize, mean_value: f64) -> Array1<f64> {
    let c = init_bound(mean_value, k);
    Array1::from_shape_simple_fn(k, || c - rng.random::<f64>() * (c - INIT_FLOOR))
}

#[derive(Debug, Clone, Copy, PartialEq)]
pub struct TraceEntry {
    pub iteration: usize,
    /// 1 for the warm-up on the reconstruction loss, 2 once the tidal term is on.
    pub phase: u8,
    pub loss: LossBreakdown,
}

#[derive(Debug, Clone)]
pub struct TrainOutput {
    pub model: FactorModel,
    pub trace: Vec<TraceEntry>,
    /// `permutation[new] = old` applied between the phases.
    pub permutation: Vec<usize>,
}

struct Descent<'a> {
    v: ArrayView2<'a, f64>,
    config: &'a TrainConfig,
    tidal: Option<TidalContext<'a>>,
    w: Array2<f64>,
    h: Array2<f64>,
    step_w: f64,
    step_h: f64,
    current: LossBreakdown,
}

impl<'a> Descent<'a> {
    fn new(v: ArrayView2<'a, f64>, config: &'a TrainConfig, w: Array2<f64>, h: Array2<f64>) -> Self {
        let current = breakdown(v, w.view(), h.view(), config, None);
        Self {
            v,
            config,
            tidal: None,
            w,
            h,
            step_w: config.learning_rate,
            step_h: config.learning_rate,
            current,
        }
    }

    fn set_tidal(&mut self, tidal: Option<TidalContext<'a>>) {
        self.tidal = tidal;
        self.current = self.evaluate(self.w.view(), self.h.view());
    }

    fn evaluate(&self, w: ArrayView2<f64>, h: ArrayView2<f64>) -> LossBreakdown {
        breakdown(self.v, w, h, self.config, self.tidal.as_ref())
    }

    /// One projected-gradient step on `W` then on `H`. Returns whether
    /// either block moved.
    fn iterate(&mut self) -> bool {
        let g = grad_w(self.v, self.w.view(), self.h.view(), self.config, self.tidal.as_ref());
        let moved_w = self.backtrack(Block::W, &g);
        let g = grad_h(self.v, self.w.view(), self.h.view(), self.config, self.tidal.as_ref());
        let moved_h = self.backtrack(Block::H, &g);
        moved_w || moved_h
    }

    fn backtrack(&mut self, block: Block, grad: &Array2<f64>) -> bool {
        let mut step = match block {
            Block::W => self.step_w,
            Block::H => self.step_h,
        };
        let base = match block {
            Block::W => &self.w,
            Block::H => &self.h,
        };
        let mut accepted = None;
        for _ in 0..MAX_HALVINGS {
            let mut cand = base.clone();
            cand.zip_mut_with(grad, |x, &g| *x = (*x - step * g).max(0.0));
            let loss = match block {
                Block::W => self.evaluate(cand.view(), self.h.view()),
                Block::H => self.evaluate(self.w.view(), cand.view()),
            };
            if loss.total() <= self.current.total() {
                accepted = Some((cand, loss));
                break;
            }
            step *= 0.5;
        }
        let moved = accepted.is_some();
        if let Some((cand, loss)) = accepted {
            match block {
                Block::W => self.w = cand,
                Block::H => self.h = cand,
            }
            self.current = loss;
            step *= STEP_GROWTH;
        }
        match block {
            Block::W => self.step_w = step,
            Block::H => self.step_h = step,
        }
        moved
    }
}

#[derive(Clone, Copy)]
enum Block {
    W,
    H,
}

fn check_input(v: ArrayView2<f64>) -> Result<()> {
    if v.nrows() == 0 || v.ncols() == 0 {
        return Err(Error::Shape(format!("flow matrix is empty ({:?})", v.dim())));
    }
    if v.iter().any(|&x| !x.is_finite() || x < 0.0) {
        return Err(Error::Config("flow matrix must be finite and non-negative".into()));
    }
    Ok(())
}

fn push_trace(trace: &mut Vec<TraceEntry>, iteration: usize, phase: u8, loss: LossBreakdown) -> Result<()> {
    if !loss.total().is_finite() {
        return Err(Error::NonFiniteLoss {
            iteration,
            phase: if phase == 1 { "warm-up" } else { "tidal" },
        });
    }
    trace.push(TraceEntry { iteration, phase, loss });
    Ok(())
}

/// Trains the tidal-regularized factorization of `v`.
///
/// Phase 1 runs `warmup_iters` steps on the reconstruction loss alone. The
/// learned signatures are then classified and reordered so morning
/// components come first and evening ones last, and phase 2 adds the tidal
/// term until `max_iters` or until the MSE changes by less than
/// `mse_tolerance`. If phase 1 produces no morning or no evening component
/// the tidal term is left out. Factors are unit-normalized at the end.
pub fn train(v: ArrayView2<f64>, index: &ODPairIndex, config: &TrainConfig) -> Result<TrainOutput> {
    config.validate()?;
    config.splits.validate(v.ncols())?;
    check_input(v)?;
    if v.nrows() != index.total_rows() {
        return Err(Error::Shape(format!(
            "V has {} rows, OD index has {}",
            v.nrows(),
            index.total_rows()
        )));
    }

    let (w, h) = init_factors(
        v.nrows(),
        config.components,
        v.ncols(),
        v.mean().unwrap_or(0.0),
        config.seed,
    );
    let mut descent = Descent::new(v, config, w, h);
    let mut trace = Vec::with_capacity(config.max_iters + 1);
    push_trace(&mut trace, 0, 1, descent.current)?;

    let mut iteration = 0;
    while iteration < config.warmup_iters {
        iteration += 1;
        let moved = descent.iterate();
        push_trace(&mut trace, iteration, 1, descent.current)?;
        if !moved {
            break;
        }
    }

    let groups = classify_components(descent.h.view(), &config.splits, config.min_mass_ratio);
    let reordered = reorder_factors(descent.w.view(), descent.h.view(), &groups);
    descent.w = reordered.w;
    descent.h = reordered.h;
    let groups = reordered.groups;
    debug!(
        "phase 1 done after {iteration} iterations: {} morning, {} evening, {} other components",
        groups.morning.len(),
        groups.evening.len(),
        groups.other.len()
    );

    let tidal_active = groups.has_tidal_pair() && (config.gamma > 0.0 || config.rho > 0.0);
    if !groups.has_tidal_pair() {
        warn!("no morning/evening component pair after warm-up; training without the tidal term");
    }
    descent.set_tidal(tidal_active.then_some(TidalContext {
        index,
        groups: &groups,
        splits: config.splits,
    }));

    iteration = iteration.max(config.warmup_iters);
    let mut last_mse = descent.current.mse;
    while iteration < config.max_iters {
        iteration += 1;
        let moved = descent.iterate();
        push_trace(&mut trace, iteration, 2, descent.current)?;
        let mse = descent.current.mse;
        if !moved || (mse - last_mse).abs() < config.mse_tolerance {
            break;
        }
        last_mse = mse;
    }

    let normalized = normalize_factors(descent.w.view(), descent.h.view());
    Ok(TrainOutput {
        model: FactorModel {
            w: normalized.w,
            h: normalized.h,
            groups,
            splits: config.splits,
            degenerate: normalized.degenerate,
            tidal_active,
        },
        trace,
        permutation: reordered.permutation,
    })
}

/// Plain elastic-net NMF of any non-negative matrix, unit-normalized.
/// Runs until `max_iters` or until the MSE changes by less than
/// `mse_tolerance`; the warm-up and tidal settings are ignored.
pub fn fit_generic(v: ArrayView2<f64>, config: &TrainConfig) -> Result<(Array2<f64>, Array2<f64>, Vec<TraceEntry>)> {
    config.validate()?;
    check_input(v)?;
    let (w, h) = init_factors(
        v.nrows(),
        config.components,
        v.ncols(),
        v.mean().unwrap_or(0.0),
        config.seed,
    );
    let mut descent = Descent::new(v, config, w, h);
    let mut trace = Vec::with_capacity(config.max_iters + 1);
    push_trace(&mut trace, 0, 1, descent.current)?;
    let mut last_mse = descent.current.mse;
    for iteration in 1..=config.max_iters {
        let moved = descent.iterate();
        push_trace(&mut trace, iteration, 1, descent.current)?;
        let mse = descent.current.mse;
        if !moved || (mse - last_mse).abs() < config.mse_tolerance {
            break;
        }
        last_mse = mse;
    }
    let n = normalize_factors(descent.w.view(), descent.h.view());
    Ok((n.w, n.h, trace))
}
