use ndarray::{Array1, Array2, ArrayView2};

use super::{EpochSplits, SemanticGroups, TrainConfig};
use crate::data::ODPairIndex;
use crate::error::{Error, Result};
use crate::linalg::{frobenius_sq, l1, matmul, matmul_nt, matmul_tn};

/// Everything the tidal term needs besides the factors.
#[derive(Debug, Clone, Copy)]
pub struct TidalContext<'a> {
    pub index: &'a ODPairIndex,
    pub groups: &'a SemanticGroups,
    pub splits: EpochSplits,
}

/// Individual loss terms at one point.
#[derive(Debug, Clone, Copy, PartialEq, Default)]
pub struct LossBreakdown {
    /// Σ (V − WH)².
    pub residual: f64,
    /// Residual divided by the number of entries of `V`.
    pub mse: f64,
    /// Elastic-net penalty α·η·(‖W‖₁+‖H‖₁) + α·(1−η)·(‖W‖²+‖H‖²).
    pub l1l2: f64,
    /// γ-weighted reverse-pair asymmetry.
    pub tidal: f64,
    /// ρ-weighted cross-band signature mass.
    pub rho_term: f64,
}

impl LossBreakdown {
    pub fn generic(&self) -> f64 {
        self.residual + self.l1l2
    }

    pub fn total(&self) -> f64 {
        self.residual + self.l1l2 + self.tidal + self.rho_term
    }
}

fn check_shapes(v: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>) -> Result<()> {
    if w.nrows() != v.nrows() || h.ncols() != v.ncols() || w.ncols() != h.nrows() {
        return Err(Error::Shape(format!(
            "V {:?}, W {:?}, H {:?}",
            v.dim(),
            w.dim(),
            h.dim()
        )));
    }
    Ok(())
}

fn elastic_net(w: ArrayView2<f64>, h: ArrayView2<f64>, alpha: f64, eta: f64) -> f64 {
    if alpha == 0.0 {
        return 0.0;
    }
    alpha * eta * (l1(w) + l1(h)) + alpha * (1.0 - eta) * (frobenius_sq(w) + frobenius_sq(h))
}

fn residual_sq(v: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>) -> f64 {
    let wh = matmul(w, h);
    v.iter().zip(wh.iter()).map(|(a, b)| (a - b) * (a - b)).sum()
}

/// Elastic-net NMF loss `L'`.
pub fn generic_loss(v: ArrayView2<f64>, w: ArrayView2<f64>, h: ArrayView2<f64>, alpha: f64, eta: f64) -> Result<f64> {
    check_shapes(v, w, h)?;
    Ok(residual_sq(v, w, h) + elastic_net(w, h, alpha, eta))
}

/// Accumulated band flows for every forward pair.
struct BandFlows {
    /// `r_morning(u,v) − r_afternoon(v,u)` per forward pair.
    d_forward: Array1<f64>,
    /// `r_morning(v,u) − r_afternoon(u,v)` per forward pair.
    d_reverse: Array1<f64>,
    /// Σ over morning epochs of each morning signature, indexed by component.
    morning_mass: Array1<f64>,
    /// Σ over afternoon epochs of each evening signature, indexed by component.
    afternoon_mass: Array1<f64>,
}

fn band_flows(w: ArrayView2<f64>, h: ArrayView2<f64>, ctx: &TidalContext) -> BandFlows {
    let k = h.nrows();
    let epochs = h.ncols();
    let mut morning_mass = Array1::zeros(k);
    let mut afternoon_mass = Array1::zeros(k);
    for &j in &ctx.groups.morning {
        morning_mass[j] = ctx.splits.morning().map(|t| h[[j, t]]).sum();
    }
    for &j in &ctx.groups.evening {
        afternoon_mass[j] = ctx.splits.afternoon(epochs).map(|t| h[[j, t]]).sum();
    }

    let p = ctx.index.forward_len();
    let morning = |row: usize| -> f64 { ctx.groups.morning.iter().map(|&j| w[[row, j]] * morning_mass[j]).sum() };
    let afternoon = |row: usize| -> f64 {
        ctx.groups
            .evening
            .iter()
            .map(|&j| w[[row, j]] * afternoon_mass[j])
            .sum()
    };
    let mut d_forward = Array1::zeros(p);
    let mut d_reverse = Array1::zeros(p);
    for f in 0..p {
        d_forward[f] = morning(f) - afternoon(f + p);
        d_reverse[f] = morning(f + p) - afternoon(f);
    }
    BandFlows {
        d_forward,
        d_reverse,
        morning_mass,
        afternoon_mass,
    }
}

/// Σ over forward pairs of both squared morning/afternoon asymmetries.
pub fn tidal_symmetry_residual(w: ArrayView2<f64>, h: ArrayView2<f64>, ctx: &TidalContext) -> Result<f64> {
    check_tidal(w, h, ctx)?;
    let b = band_flows(w, h, ctx);
    Ok(b.d_forward.iter().chain(b.d_reverse.iter()).map(|d| d * d).sum())
}

fn cross_band_sq(h: ArrayView2<f64>, ctx: &TidalContext) -> f64 {
    let epochs = h.ncols();
    let mut acc = 0.0;
    for &j in &ctx.groups.morning {
        acc += ctx.splits.afternoon(epochs).map(|t| h[[j, t]] * h[[j, t]]).sum::<f64>();
    }
    for &j in &ctx.groups.evening {
        acc += ctx.splits.morning().map(|t| h[[j, t]] * h[[j, t]]).sum::<f64>();
    }
    acc
}

fn check_tidal(w: ArrayView2<f64>, h: ArrayView2<f64>, ctx: &TidalContext) -> Result<()> {
    if !ctx.groups.has_tidal_pair() {
        return Err(Error::MissingTidalGroups {
            morning: ctx.groups.morning.len(),
            evening: ctx.groups.evening.len(),
        });
    }
    if w.nrows() != ctx.index.total_rows() || w.ncols() != h.nrows() {
        return Err(Error::Shape(format!(
            "W {:?} does not match {} OD rows and H {:?}",
            w.dim(),
            ctx.index.total_rows(),
            h.dim()
        )));
    }
    ctx.groups.validate(h.nrows())?;
    ctx.splits.validate(h.ncols())
}

/// Tidal loss `L''` as `(γ-term, ρ-term)`.
fn tidal_terms(w: ArrayView2<f64>, h: ArrayView2<f64>, ctx: &TidalContext, gamma: f64, rho: f64) -> (f64, f64) {
    let b = band_flows(w, h, ctx);
    let sym: f64 = b.d_forward.iter().chain(b.d_reverse.iter()).map(|d| d * d).sum();
    (gamma * sym, rho * cross_band_sq(h, ctx))
}

/// Tidal loss `L''`.
pub fn tidal_loss(w: ArrayView2<f64>, h: ArrayView2<f64>, ctx: &TidalContext, gamma: f64, rho: f64) -> Result<f64> {
    check_tidal(w, h, ctx)?;
    let (g, r) = tidal_terms(w, h, ctx, gamma, rho);
    Ok(g + r)
}

/// All loss terms. With `tidal = None` the tidal terms are zero.
pub(crate) fn breakdown(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    config: &TrainConfig,
    tidal: Option<&TidalContext>,
) -> LossBreakdown {
    let residual = residual_sq(v, w, h);
    let (tidal, rho_term) = match tidal {
        Some(ctx) => tidal_terms(w, h, ctx, config.gamma, config.rho),
        None => (0.0, 0.0),
    };
    LossBreakdown {
        residual,
        mse: residual / (v.len().max(1) as f64),
        l1l2: elastic_net(w, h, config.alpha, config.eta),
        tidal,
        rho_term,
    }
}

/// Total loss `L = L' + L''`.
pub fn total_loss(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    config: &TrainConfig,
    ctx: &TidalContext,
) -> Result<f64> {
    check_shapes(v, w, h)?;
    let generic = generic_loss(v, w, h, config.alpha, config.eta)?;
    if config.gamma == 0.0 && config.rho == 0.0 {
        return Ok(generic);
    }
    Ok(generic + tidal_loss(w, h, ctx, config.gamma, config.rho)?)
}

pub(crate) fn grad_w(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    config: &TrainConfig,
    tidal: Option<&TidalContext>,
) -> Array2<f64> {
    let mut r = matmul(w, h);
    r -= &v;
    let mut g = matmul_nt(r.view(), h);
    g *= 2.0;
    add_penalty_grad(&mut g, w, config);
    if let Some(ctx) = tidal {
        if config.gamma != 0.0 {
            let b = band_flows(w, h, ctx);
            let p = ctx.index.forward_len();
            let two_g = 2.0 * config.gamma;
            for f in 0..p {
                let (d1, d2) = (b.d_forward[f], b.d_reverse[f]);
                for &j in &ctx.groups.morning {
                    g[[f, j]] += two_g * d1 * b.morning_mass[j];
                    g[[f + p, j]] += two_g * d2 * b.morning_mass[j];
                }
                for &j in &ctx.groups.evening {
                    g[[f, j]] -= two_g * d2 * b.afternoon_mass[j];
                    g[[f + p, j]] -= two_g * d1 * b.afternoon_mass[j];
                }
            }
        }
    }
    g
}

pub(crate) fn grad_h(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    config: &TrainConfig,
    tidal: Option<&TidalContext>,
) -> Array2<f64> {
    let mut r = matmul(w, h);
    r -= &v;
    let mut g = matmul_tn(w, r.view());
    g *= 2.0;
    add_penalty_grad(&mut g, h, config);
    if let Some(ctx) = tidal {
        let epochs = h.ncols();
        if config.gamma != 0.0 {
            let b = band_flows(w, h, ctx);
            let p = ctx.index.forward_len();
            let two_g = 2.0 * config.gamma;
            for &j in &ctx.groups.morning {
                let s: f64 = (0..p)
                    .map(|f| b.d_forward[f] * w[[f, j]] + b.d_reverse[f] * w[[f + p, j]])
                    .sum();
                for t in ctx.splits.morning() {
                    g[[j, t]] += two_g * s;
                }
            }
            for &j in &ctx.groups.evening {
                let s: f64 = (0..p)
                    .map(|f| b.d_forward[f] * w[[f + p, j]] + b.d_reverse[f] * w[[f, j]])
                    .sum();
                for t in ctx.splits.afternoon(epochs) {
                    g[[j, t]] -= two_g * s;
                }
            }
        }
        if config.rho != 0.0 {
            let two_r = 2.0 * config.rho;
            for &j in &ctx.groups.morning {
                for t in ctx.splits.afternoon(epochs) {
                    g[[j, t]] += two_r * h[[j, t]];
                }
            }
            for &j in &ctx.groups.evening {
                for t in ctx.splits.morning() {
                    g[[j, t]] += two_r * h[[j, t]];
                }
            }
        }
    }
    g
}

// L1 subgradient is taken as 1 on the whole non-negative orthant.
fn add_penalty_grad(g: &mut Array2<f64>, x: ArrayView2<f64>, config: &TrainConfig) {
    if config.alpha == 0.0 {
        return;
    }
    let l1 = config.alpha * config.eta;
    let l2 = 2.0 * config.alpha * (1.0 - config.eta);
    g.zip_mut_with(&x, |gi, &xi| *gi += l1 + l2 * xi);
}

/// Analytical `(∂L/∂W, ∂L/∂H)` of the total loss.
pub fn loss_gradients(
    v: ArrayView2<f64>,
    w: ArrayView2<f64>,
    h: ArrayView2<f64>,
    config: &TrainConfig,
    ctx: &TidalContext,
) -> Result<(Array2<f64>, Array2<f64>)> {
    check_shapes(v, w, h)?;
    let tidal = if config.gamma == 0.0 && config.rho == 0.0 {
        None
    } else {
        check_tidal(w, h, ctx)?;
        Some(ctx)
    };
    Ok((grad_w(v, w, h, config, tidal), grad_h(v, w, h, config, tidal)))
}
