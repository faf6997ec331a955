//! Center drift of the foliation and recovery of the ADM momentum.
//!
//! Under York-type data the leaves drift so that `a/R_e → ±τ(v) p̄` with
//! `v = |p|/m`. Fitting the limit and inverting `τ` recovers `p`.

use nalgebra::Vector3;
use serde::{Deserialize, Serialize};
use thiserror::Error;

use crate::ambient::SignBranch;
use crate::solver::FoliationResult;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum MomentumError {
    #[error("v = {v} is outside the admissible range [0, {limit}) for the {form} law")]
    OutOfRange { v: f64, limit: f64, form: &'static str },
    #[error("need at least {needed} members, got {got}")]
    InsufficientMembers { needed: usize, got: usize },
    #[error("R_e is not increasing along the series (row {0})")]
    NonMonotone(usize),
}

/// Which extrinsic-curvature family the drift law belongs to.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum DriftForm {
    York,
    CorvinoSchoen,
}

impl DriftForm {
    pub fn as_str(&self) -> &'static str {
        match self {
            DriftForm::York => "york",
            DriftForm::CorvinoSchoen => "corvino_schoen",
        }
    }

    /// Supremum of admissible `v`; York admits `v = 1` itself.
    pub fn v_limit(&self) -> f64 {
        match self {
            DriftForm::York => 1.0,
            DriftForm::CorvinoSchoen => 15f64.sqrt() / 4.0,
        }
    }
}

/// Asymptotic drift magnitude `τ(v)` for `v = |p|/m`.
pub fn tau_of_v(v: f64, form: DriftForm) -> Result<f64, MomentumError> {
    let limit = form.v_limit();
    let ok = match form {
        DriftForm::York => (0.0..=limit).contains(&v),
        DriftForm::CorvinoSchoen => v >= 0.0 && v < limit,
    };
    if !ok {
        return Err(MomentumError::OutOfRange {
            v,
            limit,
            form: form.as_str(),
        });
    }
    if v == 0.0 {
        return Ok(0.0);
    }
    // rationalized forms avoid cancellation at small v
    Ok(match form {
        DriftForm::York => v / (1.0 + (1.0 - v * v).sqrt()),
        DriftForm::CorvinoSchoen => {
            let a = 16.0 / 15.0;
            a * v / (1.6 * (1.0 + (1.0 - a * v * v).sqrt()))
        }
    })
}

/// Inverse of [`tau_of_v`].
pub fn v_of_tau(tau: f64, form: DriftForm) -> f64 {
    match form {
        DriftForm::York => 2.0 * tau / (1.0 + tau * tau),
        DriftForm::CorvinoSchoen => 3.0 * tau / (1.0 + 2.4 * tau * tau),
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftRow {
    pub h: f64,
    pub radius_e: f64,
    pub center_e: Vector3<f64>,
    pub center_g: Vector3<f64>,
}

impl DriftRow {
    pub fn drift(&self) -> Vector3<f64> {
        self.center_e / self.radius_e
    }

    pub fn center_difference(&self) -> Vector3<f64> {
        self.center_e - self.center_g
    }
}

#[derive(Debug, Clone, PartialEq)]
pub struct DriftSeries {
    pub rows: Vec<DriftRow>,
    /// Decay rate used for the extrapolation variable.
    pub decay: f64,
    pub branch: SignBranch,
}

impl DriftSeries {
    pub fn validate(&self) -> Result<(), MomentumError> {
        if self.rows.len() < 3 {
            return Err(MomentumError::InsufficientMembers {
                needed: 3,
                got: self.rows.len(),
            });
        }
        for (i, w) in self.rows.windows(2).enumerate() {
            if w[1].radius_e <= w[0].radius_e {
                return Err(MomentumError::NonMonotone(i + 1));
            }
        }
        Ok(())
    }
}

/// Tabulate centers of every leaf, ordered by increasing `R_e`.
pub fn center_drift_series(fol: &FoliationResult) -> Result<DriftSeries, MomentumError> {
    let mut rows: Vec<DriftRow> = fol
        .members
        .iter()
        .map(|m| DriftRow {
            h: m.h,
            radius_e: m.summary.radius_e,
            center_e: m.summary.center_e,
            center_g: m.summary.center_g,
        })
        .collect();
    rows.sort_by(|a, b| b.h.total_cmp(&a.h));
    let series = DriftSeries {
        rows,
        decay: fol.family.decay,
        branch: fol.family.sign_branch,
    };
    series.validate()?;
    Ok(series)
}

#[derive(Debug, Clone, PartialEq)]
pub struct MomentumEstimate {
    pub tau: f64,
    pub direction: Vector3<f64>,
    pub momentum: Vector3<f64>,
    pub form: DriftForm,
    pub fit_residual: f64,
    pub branch: SignBranch,
    /// Extrapolated `a_e − a_g`.
    pub center_difference: Vector3<f64>,
}

impl MomentumEstimate {
    pub fn magnitude(&self) -> f64 {
        self.momentum.norm()
    }
}

/// Least-squares line `y ≈ c0 + c1 x`; returns the intercept and the RMS
/// residual.
fn fit_intercept(x: &[f64], y: &[f64]) -> (f64, f64) {
    let n = x.len() as f64;
    let mx = x.iter().sum::<f64>() / n;
    let my = y.iter().sum::<f64>() / n;
    let sxx: f64 = x.iter().map(|v| (v - mx).powi(2)).sum();
    let sxy: f64 = x.iter().zip(y).map(|(a, b)| (a - mx) * (b - my)).sum();
    let slope = if sxx > 0.0 { sxy / sxx } else { 0.0 };
    let c0 = my - slope * mx;
    let rss: f64 = x.iter().zip(y).map(|(a, b)| (b - c0 - slope * a).powi(2)).sum();
    (c0, (rss / n).sqrt())
}

/// Sign relating the drift direction to the momentum on each branch. The
/// outward-normal convention makes `H + P` leaves drift along `+p̄`.
pub fn branch_drift_sign(branch: SignBranch) -> f64 {
    branch.sign()
}

/// Extrapolate `a_e/R_e` over the outer third of the rows and invert `τ`.
pub fn recover_momentum(series: &DriftSeries, m: f64, form: DriftForm) -> Result<MomentumEstimate, MomentumError> {
    series.validate()?;
    let n = series.rows.len();
    let take = n.div_ceil(3).max(2);
    let window = &series.rows[n - take..];
    let x: Vec<f64> = window
        .iter()
        .map(|r| {
            if series.decay > 0.0 {
                r.radius_e.powf(-series.decay)
            } else {
                1.0 / r.radius_e
            }
        })
        .collect();
    let mut limit = Vector3::zeros();
    let mut diff = Vector3::zeros();
    let mut resid_sq = 0.0;
    for k in 0..3 {
        let y: Vec<f64> = window.iter().map(|r| r.drift()[k]).collect();
        let (c, r) = fit_intercept(&x, &y);
        limit[k] = c;
        resid_sq += r * r;
        let yd: Vec<f64> = window.iter().map(|r| r.center_difference()[k]).collect();
        diff[k] = fit_intercept(&x, &yd).0;
    }
    let fit_residual = resid_sq.sqrt();
    let tau = limit.norm();
    let floor = (10.0 * fit_residual).max(1e-12);
    let (tau, direction, momentum) = if tau <= floor || tau >= 1.0 {
        (tau.min(1.0 - f64::EPSILON), Vector3::new(0.0, 0.0, 1.0), Vector3::zeros())
    } else {
        let dir = limit / tau;
        let v = v_of_tau(tau, form);
        (tau, dir, dir * (branch_drift_sign(series.branch) * m * v))
    };
    Ok(MomentumEstimate {
        tau,
        direction,
        momentum,
        form,
        fit_residual,
        branch: series.branch,
        center_difference: diff,
    })
}
