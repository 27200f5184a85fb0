//! Laplace-uncertainty depth fusion and aggregation.
//!
//! Per-cell visual and attribute depths are modeled as Laplace distributions;
//! the derived instance belief has `d = d_vis + d_att` and
//! `u = sqrt(u_vis^2 + u_att^2)`. Uncertainties convert to confidences via
//! `P = exp(-u)`, and the patch aggregates by probability weighting. The
//! Laplace negative log-likelihood and smooth-L1 losses come with analytic
//! gradients.

use serde::{Deserialize, Serialize};
use thiserror::Error;

/// Uncertainties are clamped to this floor; the loss has 1/u and ln u
/// singularities at zero.
pub const U_MIN: f64 = 1e-6;

#[derive(Debug, Error, PartialEq)]
pub enum FusionError {
    #[error("uncertainty must be positive, got {0}")]
    InvalidUncertainty(f64),
    #[error("uncertainty must be non-negative, got {0}")]
    NegativeUncertainty(f64),
    #[error("patch has no valid cells")]
    NoValidCells,
    #[error("value {got} outside [{lo}, {hi}]")]
    OutOfRange { got: f64, lo: f64, hi: f64 },
}

/// A depth estimate with its Laplace scale.
#[derive(Debug, Clone, Copy, PartialEq, Serialize, Deserialize)]
pub struct DepthBelief {
    pub d: f64,
    pub u: f64,
}

impl DepthBelief {
    /// Clamps `u` up to [`U_MIN`]; rejects non-positive input.
    pub fn new(d: f64, u: f64) -> Result<Self, FusionError> {
        if u <= 0.0 {
            return Err(FusionError::InvalidUncertainty(u));
        }
        Ok(Self { d, u: u.max(U_MIN) })
    }
}

/// d = d_vis + d_att, u = sqrt(u_vis^2 + u_att^2).
pub fn fuse_cell(vis: DepthBelief, att: DepthBelief) -> Result<DepthBelief, FusionError> {
    for b in [vis, att] {
        if b.u <= 0.0 {
            return Err(FusionError::InvalidUncertainty(b.u));
        }
    }
    Ok(DepthBelief {
        d: vis.d + att.d,
        u: (vis.u * vis.u + att.u * att.u).sqrt(),
    })
}

/// P = exp(-u).
pub fn uncertainty_to_prob(u: f64) -> Result<f64, FusionError> {
    if u < 0.0 {
        return Err(FusionError::NegativeUncertainty(u));
    }
    Ok((-u).exp())
}

/// Per-object m x n patch of visual and attribute beliefs, row-major.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct InstancePatch {
    pub m: usize,
    pub n: usize,
    pub vis: Vec<DepthBelief>,
    pub att: Vec<DepthBelief>,
    pub valid: Vec<bool>,
}

impl InstancePatch {
    /// Fused instance belief per cell.
    pub fn instance_beliefs(&self) -> Result<Vec<DepthBelief>, FusionError> {
        self.vis
            .iter()
            .zip(&self.att)
            .map(|(&v, &a)| fuse_cell(v, a))
            .collect()
    }

    /// P = exp(-u_ins) per cell.
    pub fn probabilities(&self) -> Result<Vec<f64>, FusionError> {
        self.instance_beliefs()?
            .iter()
            .map(|b| uncertainty_to_prob(b.u))
            .collect()
    }
}

/// Probability-weighted mean of fused instance depths over valid cells.
pub fn aggregate_depth(patch: &InstancePatch) -> Result<f64, FusionError> {
    let beliefs = patch.instance_beliefs()?;
    let probs = patch.probabilities()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for ((b, p), &ok) in beliefs.iter().zip(&probs).zip(&patch.valid) {
        if ok {
            num += b.d * p;
            den += p;
        }
    }
    if den == 0.0 {
        return Err(FusionError::NoValidCells);
    }
    Ok(num / den)
}

/// p_ins = sum(P^2) / sum(P) over valid cells.
pub fn instance_confidence(patch: &InstancePatch) -> Result<f64, FusionError> {
    let probs = patch.probabilities()?;
    let mut num = 0.0;
    let mut den = 0.0;
    for (&p, &ok) in probs.iter().zip(&patch.valid) {
        if ok {
            num += p * p;
            den += p;
        }
    }
    if den == 0.0 {
        return Err(FusionError::NoValidCells);
    }
    Ok(num / den)
}

/// p = p_2d * p_ins.
pub fn final_score(p_2d: f64, p_ins: f64) -> Result<f64, FusionError> {
    if !(0.0..=1.0).contains(&p_2d) {
        return Err(FusionError::OutOfRange {
            got: p_2d,
            lo: 0.0,
            hi: 1.0,
        });
    }
    if !(0.0..=1.0).contains(&p_ins) {
        return Err(FusionError::OutOfRange {
            got: p_ins,
            lo: 0.0,
            hi: 1.0,
        });
    }
    Ok(p_2d * p_ins)
}

/// Laplace NLL: (sqrt(2)/u) |d - d*| + ln u.
pub fn laplace_nll(d: f64, u: f64, d_star: f64) -> Result<f64, FusionError> {
    if u < U_MIN {
        return Err(FusionError::InvalidUncertainty(u));
    }
    Ok(std::f64::consts::SQRT_2 / u * (d - d_star).abs() + u.ln())
}

/// Analytic gradients (dL/dd, dL/du); the sign subgradient at d == d* is 0.
pub fn laplace_nll_grad(d: f64, u: f64, d_star: f64) -> Result<(f64, f64), FusionError> {
    if u < U_MIN {
        return Err(FusionError::InvalidUncertainty(u));
    }
    let r = d - d_star;
    let sign = if r > 0.0 {
        1.0
    } else if r < 0.0 {
        -1.0
    } else {
        0.0
    };
    let dd = std::f64::consts::SQRT_2 / u * sign;
    let du = -std::f64::consts::SQRT_2 / (u * u) * r.abs() + 1.0 / u;
    Ok((dd, du))
}

/// 0.5 x^2 / beta for |x| < beta, else |x| - 0.5 beta.
pub fn smooth_l1(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        0.5 * x * x / beta
    } else {
        x.abs() - 0.5 * beta
    }
}

pub fn smooth_l1_grad(x: f64, beta: f64) -> f64 {
    if x.abs() < beta {
        x / beta
    } else {
        x.signum()
    }
}

/// JSON record emitted by the `fuse` subcommand.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct FusionRecord {
    pub frame_id: String,
    pub object_index: usize,
    pub d_ins: f64,
    /// Mean fused uncertainty over valid cells.
    pub u_summary: f64,
    pub p_ins: f64,
    pub score: f64,
}
