//! SCAD penalty and its derivatives.

use crate::error::{CsbnError, Result};
use crate::model::PenaltyParams;

/// SCAD penalty P_λ(t) for t ≥ 0.
pub fn scad(t: f64, pp: PenaltyParams) -> Result<f64> {
    if !(t >= 0.0) {
        return Err(CsbnError::invalid(format!("SCAD argument must be >= 0, got {t}")));
    }
    Ok(scad_abs(t, pp))
}

/// SCAD evaluated at |t|; never fails.
pub fn scad_abs(t: f64, pp: PenaltyParams) -> f64 {
    let t = t.abs();
    let PenaltyParams { lambda, a } = pp;
    if t < lambda {
        lambda * t
    } else if t < a * lambda {
        ((a * a - 1.0) * lambda * lambda - (t - a * lambda).powi(2)) / (2.0 * (a - 1.0))
    } else {
        (a + 1.0) * lambda * lambda / 2.0
    }
}

/// Derivative of P_λ(|t|) with respect to t, with sign(0) = 0.
pub fn scad_d1(t: f64, pp: PenaltyParams) -> f64 {
    if t == 0.0 {
        return 0.0;
    }
    scad_d1_abs(t.abs(), pp) * t.signum()
}

/// P'_λ(|t|) without the sign factor.
pub(crate) fn scad_d1_abs(t: f64, pp: PenaltyParams) -> f64 {
    let t = t.abs();
    let PenaltyParams { lambda, a } = pp;
    if t <= lambda {
        lambda
    } else if t <= a * lambda {
        (a * lambda - t) / (a - 1.0)
    } else {
        0.0
    }
}

/// Second derivative: −1/(a−1) on λ < |t| ≤ aλ, zero elsewhere.
pub fn scad_d2(t: f64, pp: PenaltyParams) -> f64 {
    let t = t.abs();
    if t > pp.lambda && t <= pp.a * pp.lambda {
        -1.0 / (pp.a - 1.0)
    } else {
        0.0
    }
}
