//! Ambient initial data `(g_τ, K_τ)` on ℝ³ minus a ball.
//!
//! The metric is the conformally flat Schwarzschild metric `φ⁴ δ` with
//! `φ = 1 + m/2r`, optionally plus a decaying perturbation, linearly
//! interpolated in `τ`: `g_τ = g^S + τ (g − g^S)`. The extrinsic curvature
//! is `K_τ = τ K` for a York or Corvino–Schoen leading term.
//!
//! Index conventions: `christoffel[k][(i, j)] = Γ^k_ij` and
//! `grad_k[k][(i, j)] = ∇_k K_ij`.

use nalgebra::{Matrix3, Vector3};
use serde::{Deserialize, Serialize};
use thiserror::Error;

#[derive(Debug, Error, Clone, PartialEq)]
pub enum AmbientError {
    #[error("point at radius {radius} lies inside the inner boundary σ = {sigma}")]
    InsideInnerBoundary { radius: f64, sigma: f64 },
    #[error("metric is not positive definite at radius {radius}")]
    NotPositiveDefinite { radius: f64 },
    #[error("tau = {0} outside [0, 1]")]
    TauOutOfRange(f64),
    #[error("invalid data family: {0}")]
    Invalid(String),
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum MetricKind {
    Euclidean,
    Schwarzschild,
    SchwarzschildPlusPerturbation,
}

#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum ExtrinsicKind {
    Zero,
    York,
    CorvinoSchoen,
}

/// Which of the two equations `H + P = h` or `H − P = h` is solved.
#[derive(Debug, Clone, Copy, PartialEq, Eq, Serialize, Deserialize)]
#[serde(rename_all = "snake_case")]
pub enum SignBranch {
    Plus,
    Minus,
}

impl SignBranch {
    pub fn sign(self) -> f64 {
        match self {
            SignBranch::Plus => 1.0,
            SignBranch::Minus => -1.0,
        }
    }

    pub fn as_str(self) -> &'static str {
        match self {
            SignBranch::Plus => "plus",
            SignBranch::Minus => "minus",
        }
    }
}

/// One summand `w (a·x/r)^k r^{-1-δ} S` of the metric perturbation.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationTerm {
    pub weight: f64,
    pub power: u32,
    pub axis: [f64; 3],
    pub matrix: [[f64; 3]; 3],
}

impl PerturbationTerm {
    fn frobenius(&self) -> f64 {
        self.matrix.iter().flatten().map(|v| v * v).sum::<f64>().sqrt()
    }
}

/// Perturbation `η Σ_t w_t (a_t·x/r)^{k_t} r^{-1-δ} S_t`.
///
/// With unit axes and `Σ |w_t| |S_t|_F ≤ 1` the perturbation is bounded by
/// `η r^{-1-δ}` in Frobenius norm.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct PerturbationSpec {
    pub amplitude: f64,
    pub terms: Vec<PerturbationTerm>,
}

impl PerturbationSpec {
    pub fn none() -> Self {
        Self {
            amplitude: 0.0,
            terms: Vec::new(),
        }
    }

    /// Two-term recipe mixing a radial dipole with a quadrupolar shear.
    pub fn standard(amplitude: f64) -> Self {
        let s3 = 1.0 / 3f64.sqrt();
        let s2 = 1.0 / 2f64.sqrt();
        Self {
            amplitude,
            terms: vec![
                PerturbationTerm {
                    weight: 0.5,
                    power: 1,
                    axis: [1.0, 0.0, 0.0],
                    matrix: [[s3, 0.0, 0.0], [0.0, s3, 0.0], [0.0, 0.0, s3]],
                },
                PerturbationTerm {
                    weight: 0.5,
                    power: 2,
                    axis: [0.0, 0.0, 1.0],
                    matrix: [[0.0, s2, 0.0], [s2, 0.0, 0.0], [0.0, 0.0, 0.0]],
                },
            ],
        }
    }

    pub fn validate(&self) -> Result<(), AmbientError> {
        if !(self.amplitude >= 0.0 && self.amplitude.is_finite()) {
            return Err(AmbientError::Invalid("perturbation amplitude must be a nonnegative number".into()));
        }
        let mut budget = 0.0;
        for (n, t) in self.terms.iter().enumerate() {
            let a = Vector3::from(t.axis);
            if (a.norm() - 1.0).abs() > 1e-12 {
                return Err(AmbientError::Invalid(format!("perturbation term {n}: axis must be a unit vector")));
            }
            for i in 0..3 {
                for j in 0..3 {
                    if t.matrix[i][j] != t.matrix[j][i] {
                        return Err(AmbientError::Invalid(format!("perturbation term {n}: matrix must be symmetric")));
                    }
                }
            }
            budget += t.weight.abs() * t.frobenius();
        }
        if budget > 1.0 + 1e-12 {
            return Err(AmbientError::Invalid(format!(
                "perturbation terms have Σ|w||S| = {budget} > 1"
            )));
        }
        Ok(())
    }
}

/// The ambient data family selecting `(g_τ, K_τ)`.
#[derive(Debug, Clone, PartialEq, Serialize, Deserialize)]
pub struct DataFamily {
    pub mass: f64,
    pub decay: f64,
    pub inner_radius: f64,
    pub metric_kind: MetricKind,
    pub perturbation: PerturbationSpec,
    pub tau: f64,
    pub k_kind: ExtrinsicKind,
    pub momentum: [f64; 3],
    /// Coefficient of the transverse York term: 1 is trace free, 2 is the
    /// variant with a doubled `(δ − ρ⊗ρ)` term.
    pub york_coefficient: u8,
    pub sign_branch: SignBranch,
}

impl DataFamily {
    pub fn euclidean() -> Self {
        Self {
            mass: 0.0,
            decay: 0.0,
            inner_radius: 0.1,
            metric_kind: MetricKind::Euclidean,
            perturbation: PerturbationSpec::none(),
            tau: 1.0,
            k_kind: ExtrinsicKind::Zero,
            momentum: [0.0; 3],
            york_coefficient: 1,
            sign_branch: SignBranch::Plus,
        }
    }

    pub fn schwarzschild(mass: f64) -> Self {
        Self {
            mass,
            inner_radius: mass / 2.0,
            metric_kind: MetricKind::Schwarzschild,
            ..Self::euclidean()
        }
    }

    pub fn perturbed(mass: f64, decay: f64, amplitude: f64) -> Self {
        Self {
            decay,
            metric_kind: MetricKind::SchwarzschildPlusPerturbation,
            perturbation: PerturbationSpec::standard(amplitude),
            ..Self::schwarzschild(mass)
        }
    }

    pub fn with_york(mut self, momentum: [f64; 3]) -> Self {
        self.k_kind = ExtrinsicKind::York;
        self.momentum = momentum;
        self
    }

    pub fn with_branch(mut self, branch: SignBranch) -> Self {
        self.sign_branch = branch;
        self
    }

    /// Mass entering the conformal factor (zero for flat space).
    pub fn effective_mass(&self) -> f64 {
        match self.metric_kind {
            MetricKind::Euclidean => 0.0,
            _ => self.mass,
        }
    }

    pub fn validate(&self) -> Result<(), AmbientError> {
        if self.metric_kind != MetricKind::Euclidean && !(self.mass > 0.0) {
            return Err(AmbientError::Invalid("mass must be positive for Schwarzschild data".into()));
        }
        if !(self.decay >= 0.0 && self.decay.is_finite()) {
            return Err(AmbientError::Invalid("decay must be nonnegative".into()));
        }
        if !(self.inner_radius > 0.0 && self.inner_radius.is_finite()) {
            return Err(AmbientError::Invalid("inner_radius must be positive".into()));
        }
        if !(0.0..=1.0).contains(&self.tau) {
            return Err(AmbientError::TauOutOfRange(self.tau));
        }
        if !matches!(self.york_coefficient, 1 | 2) {
            return Err(AmbientError::Invalid("york_coefficient must be 1 or 2".into()));
        }
        if self.momentum.iter().any(|v| !v.is_finite()) {
            return Err(AmbientError::Invalid("momentum must be finite".into()));
        }
        self.perturbation.validate()
    }

    fn perturbation_active(&self) -> bool {
        self.metric_kind == MetricKind::SchwarzschildPlusPerturbation
            && self.perturbation.amplitude > 0.0
            && !self.perturbation.terms.is_empty()
    }

    /// Stable textual identity of the family, hashed into surface files.
    pub fn fingerprint_text(&self) -> String {
        serde_json::to_string(self).expect("family serializes")
    }
}

/// Replace `τ` in a family.
pub fn interpolate_data(family: &DataFamily, tau: f64) -> Result<DataFamily, AmbientError> {
    if !(0.0..=1.0).contains(&tau) {
        return Err(AmbientError::TauOutOfRange(tau));
    }
    Ok(DataFamily {
        tau,
        ..family.clone()
    })
}

#[derive(Debug, Clone)]
pub struct MetricEval {
    pub x: Vector3<f64>,
    pub g: Matrix3<f64>,
    pub g_inv: Matrix3<f64>,
    pub christoffel: [Matrix3<f64>; 3],
    pub ricci: Matrix3<f64>,
    pub scal: f64,
    pub phi: f64,
}

impl MetricEval {
    /// `Γ(X, Y)^k = Γ^k_ij X^i Y^j`.
    pub fn gamma_contract(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> Vector3<f64> {
        Vector3::new(
            a.dot(&(self.christoffel[0] * b)),
            a.dot(&(self.christoffel[1] * b)),
            a.dot(&(self.christoffel[2] * b)),
        )
    }

    pub fn inner(&self, a: &Vector3<f64>, b: &Vector3<f64>) -> f64 {
        a.dot(&(self.g * b))
    }
}

#[derive(Debug, Clone)]
pub struct ExtrinsicEval {
    pub k: Matrix3<f64>,
    pub grad_k: [Matrix3<f64>; 3],
    pub tr_k: f64,
}

impl ExtrinsicEval {
    fn zero() -> Self {
        Self {
            k: Matrix3::zeros(),
            grad_k: [Matrix3::zeros(); 3],
            tr_k: 0.0,
        }
    }

    /// `∇_v K` as a matrix.
    pub fn grad_along(&self, v: &Vector3<f64>) -> Matrix3<f64> {
        self.grad_k[0] * v[0] + self.grad_k[1] * v[1] + self.grad_k[2] * v[2]
    }

    /// `∇_k tr K = g^{ij} ∇_k K_ij`.
    pub fn grad_trace(&self, metric: &MetricEval) -> Vector3<f64> {
        Vector3::from_fn(|k, _| metric.g_inv.component_mul(&self.grad_k[k]).sum())
    }

    /// `(div K)_j = g^{ik} ∇_k K_ij`.
    pub fn divergence(&self, metric: &MetricEval) -> Vector3<f64> {
        Vector3::from_fn(|j, _| {
            let mut acc = 0.0;
            for i in 0..3 {
                for k in 0..3 {
                    acc += metric.g_inv[(i, k)] * self.grad_k[k][(i, j)];
                }
            }
            acc
        })
    }
}

/// Metric and extrinsic curvature at one point.
#[derive(Debug, Clone)]
pub struct AmbientEval {
    pub metric: MetricEval,
    pub extrinsic: ExtrinsicEval,
}

/// Metric, first and second partial derivatives: `dg[m] = ∂_m g`,
/// `ddg[m][n] = ∂_m ∂_n g`.
struct MetricJet {
    g: Matrix3<f64>,
    dg: [Matrix3<f64>; 3],
    ddg: [[Matrix3<f64>; 3]; 3],
    phi: f64,
}

fn check_radius(family: &DataFamily, x: &Vector3<f64>) -> Result<f64, AmbientError> {
    let r = x.norm();
    if !(r > family.inner_radius) {
        return Err(AmbientError::InsideInnerBoundary {
            radius: r,
            sigma: family.inner_radius,
        });
    }
    Ok(r)
}

fn metric_jet(family: &DataFamily, x: &Vector3<f64>, r: f64) -> MetricJet {
    let m = family.effective_mass();
    let id = Matrix3::identity();
    let phi = 1.0 + m / (2.0 * r);
    let r3 = r * r * r;
    let r5 = r3 * r * r;
    // ∂φ and ∂∂φ
    let dphi = x * (-m / (2.0 * r3));
    let ddphi = |a: usize, b: usize| -> f64 {
        let d = if a == b { 1.0 } else { 0.0 };
        -m / 2.0 * (d / r3 - 3.0 * x[a] * x[b] / r5)
    };
    let phi2 = phi * phi;
    let phi3 = phi2 * phi;
    let g = id * (phi2 * phi2);
    let dg: [Matrix3<f64>; 3] = std::array::from_fn(|a| id * (4.0 * phi3 * dphi[a]));
    let ddg: [[Matrix3<f64>; 3]; 3] = std::array::from_fn(|a| {
        std::array::from_fn(|b| id * (12.0 * phi2 * dphi[a] * dphi[b] + 4.0 * phi3 * ddphi(a, b)))
    });
    let mut jet = MetricJet { g, dg, ddg, phi };
    if family.perturbation_active() && family.tau != 0.0 {
        add_perturbation(&mut jet, family, x, r);
    }
    jet
}

fn add_perturbation(jet: &mut MetricJet, family: &DataFamily, x: &Vector3<f64>, r: f64) {
    let scale = family.tau * family.perturbation.amplitude;
    for t in &family.perturbation.terms {
        let a = Vector3::from(t.axis);
        let s_mat = Matrix3::from_fn(|i, j| t.matrix[i][j]);
        let k = t.power as i32;
        let kf = t.power as f64;
        let s = 1.0 + family.decay + kf;
        let q = a.dot(x);
        let qk = q.powi(k);
        let qk1 = if k >= 1 { q.powi(k - 1) } else { 0.0 };
        let qk2 = if k >= 2 { q.powi(k - 2) } else { 0.0 };
        let rs = r.powf(-s);
        let rs2 = rs / (r * r);
        let rs4 = rs2 / (r * r);
        let w = scale * t.weight;
        let f = qk * rs;
        let df = Vector3::from_fn(|m, _| kf * qk1 * a[m] * rs - s * qk * rs2 * x[m]);
        let ddf = |m: usize, n: usize| -> f64 {
            let d = if m == n { 1.0 } else { 0.0 };
            kf * (kf - 1.0) * qk2 * a[m] * a[n] * rs
                - s * kf * qk1 * rs2 * (a[m] * x[n] + a[n] * x[m])
                - s * qk * rs2 * d
                + s * (s + 2.0) * qk * rs4 * x[m] * x[n]
        };
        jet.g += s_mat * (w * f);
        for m in 0..3 {
            jet.dg[m] += s_mat * (w * df[m]);
            for n in 0..3 {
                jet.ddg[m][n] += s_mat * (w * ddf(m, n));
            }
        }
    }
}

/// Metric perturbation `g_τ − g^S` at a point (zero unless a perturbation is active).
pub fn metric_perturbation(family: &DataFamily, x: &Vector3<f64>) -> Result<Matrix3<f64>, AmbientError> {
    let r = check_radius(family, x)?;
    let m = family.effective_mass();
    let phi = 1.0 + m / (2.0 * r);
    let jet = metric_jet(family, x, r);
    Ok(jet.g - Matrix3::identity() * phi.powi(4))
}

fn metric_from_jet(jet: &MetricJet, x: &Vector3<f64>, r: f64) -> Result<MetricEval, AmbientError> {
    let g = jet.g;
    let chol = g.cholesky().ok_or(AmbientError::NotPositiveDefinite { radius: r })?;
    let g_inv = chol.inverse();
    // first-kind symbols Γ_{l,ij} = ½(∂_i g_jl + ∂_j g_il − ∂_l g_ij)
    let first = |l: usize, i: usize, j: usize| 0.5 * (jet.dg[i][(j, l)] + jet.dg[j][(i, l)] - jet.dg[l][(i, j)]);
    let mut christoffel = [Matrix3::zeros(); 3];
    for k in 0..3 {
        for i in 0..3 {
            for j in i..3 {
                let mut acc = 0.0;
                for l in 0..3 {
                    acc += g_inv[(k, l)] * first(l, i, j);
                }
                christoffel[k][(i, j)] = acc;
                christoffel[k][(j, i)] = acc;
            }
        }
    }
    // dgamma[m][k][(i,j)] = ∂_m Γ^k_ij
    let mut dgamma = [[Matrix3::<f64>::zeros(); 3]; 3];
    for m in 0..3 {
        for k in 0..3 {
            for i in 0..3 {
                for j in i..3 {
                    let mut acc = 0.0;
                    for a in 0..3 {
                        let mut dg_gamma = 0.0;
                        for b in 0..3 {
                            dg_gamma += jet.dg[m][(a, b)] * christoffel[b][(i, j)];
                        }
                        let second = 0.5
                            * (jet.ddg[m][i][(j, a)] + jet.ddg[m][j][(i, a)] - jet.ddg[m][a][(i, j)]);
                        acc += g_inv[(k, a)] * (second - dg_gamma);
                    }
                    dgamma[m][k][(i, j)] = acc;
                    dgamma[m][k][(j, i)] = acc;
                }
            }
        }
    }
    // R_ij = ∂_k Γ^k_ij − ∂_j Γ^k_ik + Γ^k_kl Γ^l_ij − Γ^k_jl Γ^l_ik
    let mut ricci = Matrix3::zeros();
    for i in 0..3 {
        for j in i..3 {
            let mut acc = 0.0;
            for k in 0..3 {
                acc += dgamma[k][k][(i, j)] - dgamma[j][k][(i, k)];
                for l in 0..3 {
                    acc += christoffel[k][(k, l)] * christoffel[l][(i, j)]
                        - christoffel[k][(j, l)] * christoffel[l][(i, k)];
                }
            }
            ricci[(i, j)] = acc;
            ricci[(j, i)] = acc;
        }
    }
    let scal = g_inv.component_mul(&ricci).sum();
    Ok(MetricEval {
        x: *x,
        g,
        g_inv,
        christoffel,
        ricci,
        scal,
        phi: jet.phi,
    })
}

/// Pointwise metric tensors of `g_τ`.
pub fn eval_metric(family: &DataFamily, x: &Vector3<f64>) -> Result<MetricEval, AmbientError> {
    let r = check_radius(family, x)?;
    let jet = metric_jet(family, x, r);
    metric_from_jet(&jet, x, r)
}

/// Coefficients `(α, β, γ)` of `K = r^{-2}(α(ρ⊗p + p⊗ρ) + β⟨p,ρ⟩δ + γ⟨p,ρ⟩ρ⊗ρ)`.
fn extrinsic_coefficients(family: &DataFamily) -> Option<(f64, f64, f64)> {
    match family.k_kind {
        ExtrinsicKind::Zero => None,
        ExtrinsicKind::York => {
            let c = family.york_coefficient as f64;
            Some((1.5, -1.5 * c, 1.5 * c))
        }
        ExtrinsicKind::CorvinoSchoen => Some((2.0, -2.0, 0.0)),
    }
}

/// `τK` and its coordinate derivatives `∂_k K_ij`.
fn extrinsic_jet(family: &DataFamily, x: &Vector3<f64>, r: f64) -> Option<(Matrix3<f64>, [Matrix3<f64>; 3])> {
    let (alpha, beta, gamma) = extrinsic_coefficients(family)?;
    if family.tau == 0.0 {
        return None;
    }
    let p = Vector3::from(family.momentum);
    let rho = x / r;
    let pr = p.dot(&rho);
    let r2 = r * r;
    let r3 = r2 * r;
    let id = Matrix3::<f64>::identity();
    let sym = rho * p.transpose() + p * rho.transpose();
    let rr = rho * rho.transpose();
    let k = (sym * alpha + id * (beta * pr) + rr * (gamma * pr)) / r2 * family.tau;
    let dk: [Matrix3<f64>; 3] = std::array::from_fn(|kk| {
        Matrix3::from_fn(|i, j| {
            let d = |a: usize, b: usize| if a == b { 1.0 } else { 0.0 };
            // ∂_k(ρ_i/r²) = (δ_ik − 3ρ_iρ_k)/r³
            let drho_i = (d(i, kk) - 3.0 * rho[i] * rho[kk]) / r3;
            let drho_j = (d(j, kk) - 3.0 * rho[j] * rho[kk]) / r3;
            // ∂_k(⟨p,ρ⟩/r²) = (p_k − 3⟨p,ρ⟩ρ_k)/r³
            let dpr = (p[kk] - 3.0 * pr * rho[kk]) / r3;
            // ∂_k(⟨p,ρ⟩ρ_iρ_j/r²)
            let dprr = (p[kk] * rho[i] * rho[j] + pr * (d(i, kk) * rho[j] + rho[i] * d(j, kk))
                - 5.0 * pr * rho[i] * rho[j] * rho[kk])
                / r3;
            family.tau * (alpha * (drho_i * p[j] + p[i] * drho_j) + beta * dpr * d(i, j) + gamma * dprr)
        })
    });
    Some((k, dk))
}

fn extrinsic_from_jet(metric: &MetricEval, k: Matrix3<f64>, dk: [Matrix3<f64>; 3]) -> ExtrinsicEval {
    let gam = &metric.christoffel;
    let grad_k: [Matrix3<f64>; 3] = std::array::from_fn(|kk| {
        Matrix3::from_fn(|i, j| {
            let mut acc = dk[kk][(i, j)];
            for l in 0..3 {
                acc -= gam[l][(kk, i)] * k[(l, j)] + gam[l][(kk, j)] * k[(i, l)];
            }
            acc
        })
    });
    let tr_k = metric.g_inv.component_mul(&k).sum();
    ExtrinsicEval { k, grad_k, tr_k }
}

/// `K_τ`, its covariant gradient and `g_τ`-trace.
pub fn eval_extrinsic(family: &DataFamily, x: &Vector3<f64>) -> Result<ExtrinsicEval, AmbientError> {
    Ok(eval_ambient(family, x)?.extrinsic)
}

/// Metric and extrinsic data in one pass.
pub fn eval_ambient(family: &DataFamily, x: &Vector3<f64>) -> Result<AmbientEval, AmbientError> {
    let r = check_radius(family, x)?;
    let jet = metric_jet(family, x, r);
    let metric = metric_from_jet(&jet, x, r)?;
    let extrinsic = match extrinsic_jet(family, x, r) {
        Some((k, dk)) => extrinsic_from_jet(&metric, k, dk),
        None => ExtrinsicEval::zero(),
    };
    Ok(AmbientEval { metric, extrinsic })
}

/// Mean curvature of the centered coordinate sphere of radius `r` in Schwarzschild.
pub fn schwarzschild_sphere_mean_curvature(m: f64, r: f64) -> f64 {
    let phi = 1.0 + m / (2.0 * r);
    (2.0 / r - m / (r * r)) / phi.powi(3)
}

/// Energy and momentum constraint densities `(16πμ, 8πJ)`.
pub fn constraint_densities(eval: &AmbientEval) -> (f64, Vector3<f64>) {
    let m = &eval.metric;
    let e = &eval.extrinsic;
    let k_up = m.g_inv * e.k * m.g_inv;
    let k_sq = k_up.component_mul(&e.k).sum();
    let energy = m.scal - k_sq + e.tr_k * e.tr_k;
    let momentum = e.grad_trace(m) - e.divergence(m);
    (energy, momentum)
}

#[cfg(test)]
mod tests {
    use super::*;
    use approx::assert_relative_eq;
    use rand::{Rng, SeedableRng};
    use rand_chacha::ChaCha8Rng;

    fn schwarzschild_ricci(m: f64, x: &Vector3<f64>) -> Matrix3<f64> {
        let r = x.norm();
        let rho = x / r;
        let phi = 1.0 + m / (2.0 * r);
        (Matrix3::identity() - rho * rho.transpose() * 3.0) * (m / (r * r * r) / (phi * phi))
    }

    fn random_point(rng: &mut ChaCha8Rng, rmin: f64, rmax: f64) -> Vector3<f64> {
        loop {
            let v = Vector3::new(rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0), rng.gen_range(-1.0..1.0));
            let n = v.norm();
            if n > 0.1 && n <= 1.0 {
                return v / n * rng.gen_range(rmin..rmax);
            }
        }
    }

    /// Central-difference Christoffel symbols from the metric alone.
    fn fd_christoffel(family: &DataFamily, x: &Vector3<f64>) -> [Matrix3<f64>; 3] {
        let h = 1e-4 * x.norm();
        let dg: [Matrix3<f64>; 3] = std::array::from_fn(|a| {
            let mut e = Vector3::zeros();
            e[a] = h;
            (eval_metric(family, &(x + e)).unwrap().g - eval_metric(family, &(x - e)).unwrap().g) / (2.0 * h)
        });
        let gi = eval_metric(family, x).unwrap().g_inv;
        std::array::from_fn(|k| {
            Matrix3::from_fn(|i, j| {
                (0..3)
                    .map(|l| gi[(k, l)] * 0.5 * (dg[i][(j, l)] + dg[j][(i, l)] - dg[l][(i, j)]))
                    .sum()
            })
        })
    }

    #[test]
    fn flat_space_is_trivial() {
        let f = DataFamily::euclidean();
        let e = eval_metric(&f, &Vector3::new(3.0, 0.0, 0.0)).unwrap();
        assert_eq!(e.g, Matrix3::identity());
        assert!(e.christoffel.iter().all(|c| c.norm() == 0.0));
        assert_eq!(e.ricci.norm(), 0.0);
        assert_eq!(e.scal, 0.0);
    }

    #[test]
    fn schwarzschild_point_values() {
        let f = DataFamily::schwarzschild(2.0);
        let e = eval_metric(&f, &Vector3::new(10.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(e.phi, 1.1, epsilon = 1e-15);
        assert_relative_eq!(e.g[(0, 0)], 1.4641, epsilon = 1e-14);
        assert_relative_eq!(e.ricci[(0, 0)], -2.0 * 2.0 / (1000.0 * 1.21), epsilon = 1e-15);
        assert_relative_eq!(e.ricci[(0, 0)], -0.0033057851239669, epsilon = 1e-15);
        assert!(e.scal.abs() < 1e-10);
        assert!((e.g * e.g_inv - Matrix3::identity()).norm() < 1e-12);
    }

    #[test]
    fn schwarzschild_ricci_matches_closed_form() {
        let f = DataFamily::schwarzschild(1.0);
        let mut rng = ChaCha8Rng::seed_from_u64(11);
        let mut worst: f64 = 0.0;
        for _ in 0..100 {
            let x = random_point(&mut rng, 1.0, 200.0);
            let e = eval_metric(&f, &x).unwrap();
            worst = worst.max((e.ricci - schwarzschild_ricci(1.0, &x)).amax());
            assert!(e.scal.abs() < 1e-10);
        }
        assert!(worst < 1e-10, "{worst}");
    }

    #[test]
    fn christoffels_match_finite_differences() {
        for f in [DataFamily::schwarzschild(1.0), DataFamily::perturbed(1.0, 0.5, 0.05)] {
            let mut rng = ChaCha8Rng::seed_from_u64(5);
            for _ in 0..20 {
                let x = random_point(&mut rng, 2.0, 60.0);
                let e = eval_metric(&f, &x).unwrap();
                let fd = fd_christoffel(&f, &x);
                for k in 0..3 {
                    assert!((e.christoffel[k] - fd[k]).amax() < 1e-8);
                }
            }
        }
    }

    #[test]
    fn perturbed_ricci_matches_finite_differences() {
        // Ric from central differences of analytic Christoffels
        let f = DataFamily::perturbed(1.0, 0.3, 0.2);
        let mut rng = ChaCha8Rng::seed_from_u64(9);
        for _ in 0..10 {
            let x = random_point(&mut rng, 2.0, 20.0);
            let h = 1e-4 * x.norm();
            let e = eval_metric(&f, &x).unwrap();
            let dgam: [[Matrix3<f64>; 3]; 3] = std::array::from_fn(|m| {
                let mut d = Vector3::zeros();
                d[m] = h;
                let p = eval_metric(&f, &(x + d)).unwrap().christoffel;
                let q = eval_metric(&f, &(x - d)).unwrap().christoffel;
                std::array::from_fn(|k| (p[k] - q[k]) / (2.0 * h))
            });
            let gam = &e.christoffel;
            let ric = Matrix3::from_fn(|i, j| {
                let mut acc = 0.0;
                for k in 0..3 {
                    acc += dgam[k][k][(i, j)] - dgam[j][k][(i, k)];
                    for l in 0..3 {
                        acc += gam[k][(k, l)] * gam[l][(i, j)] - gam[k][(j, l)] * gam[l][(i, k)];
                    }
                }
                acc
            });
            assert!((ric - e.ricci).amax() < 1e-8, "{}", (ric - e.ricci).amax());
        }
    }

    #[test]
    fn perturbation_respects_decay_bound() {
        let f = DataFamily::perturbed(1.0, 0.5, 1e-3);
        for i in 0..40 {
            let r = 2.0 * 1.25f64.powi(i);
            for dir in [
                Vector3::new(1.0, 0.0, 0.0),
                Vector3::new(0.0, 0.6, 0.8),
                Vector3::new(0.48, 0.6, 0.64),
                Vector3::new(0.0, 0.0, 1.0),
            ] {
                let dir = dir.normalize();
                let d = metric_perturbation(&f, &(dir * r)).unwrap();
                assert!(d.norm() <= 1e-3 * r.powf(-1.5) * (1.0 + 1e-12));
            }
        }
        let x: Vector3<f64> = Vector3::new(30.0, 20.0, 34.64101615137754);
        assert!((x.norm() - 50.0).abs() < 1e-12);
        let d = metric_perturbation(&f, &x).unwrap();
        assert!(d.norm() > 0.0 && d.norm() <= 1e-3 * 50f64.powf(-1.5));
    }

    #[test]
    fn interpolation_is_linear_in_tau() {
        let f = DataFamily::perturbed(1.0, 0.5, 1e-2);
        let half = interpolate_data(&f, 0.5).unwrap();
        let zero = interpolate_data(&f, 0.0).unwrap();
        let mut rng = ChaCha8Rng::seed_from_u64(3);
        for _ in 0..10 {
            let x = random_point(&mut rng, 2.0, 50.0);
            let full = metric_perturbation(&f, &x).unwrap();
            let h = metric_perturbation(&half, &x).unwrap();
            assert!((h - full * 0.5).amax() < 1e-12);
            let z = eval_metric(&zero, &x).unwrap();
            let phi = 1.0 + 1.0 / (2.0 * x.norm());
            assert_eq!(z.g, Matrix3::identity() * phi.powi(4));
        }
        assert!(interpolate_data(&f, 1.5).is_err());
        assert_eq!(interpolate_data(&f, 1.0).unwrap(), f);
    }

    #[test]
    fn zero_extrinsic_and_tau_zero() {
        let f = DataFamily::schwarzschild(1.0);
        let e = eval_extrinsic(&f, &Vector3::new(4.0, 1.0, 2.0)).unwrap();
        assert_eq!(e.k.norm(), 0.0);
        assert_eq!(e.tr_k, 0.0);
        let y = interpolate_data(&DataFamily::schwarzschild(1.0).with_york([0.0, 0.0, 0.1]), 0.0).unwrap();
        let e = eval_extrinsic(&y, &Vector3::new(4.0, 1.0, 2.0)).unwrap();
        assert_eq!(e.k.norm(), 0.0);
    }

    #[test]
    fn york_point_values() {
        let f = DataFamily::schwarzschild(1.0).with_york([0.0, 0.0, 0.1]);
        let e = eval_extrinsic(&f, &Vector3::new(10.0, 0.0, 0.0)).unwrap();
        assert_relative_eq!(e.k[(0, 2)], 0.0015, epsilon = 1e-16);
        assert_eq!(e.k[(0, 2)], e.k[(2, 0)]);
        for (i, j) in [(0, 0), (1, 1), (2, 2), (0, 1), (1, 2)] {
            assert!(e.k[(i, j)].abs() < 1e-18);
        }
        let e = eval_extrinsic(&f, &Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert!(e.k.trace().abs() < 1e-12);
        assert!(e.tr_k.abs() < 1e-12);
    }

    #[test]
    fn doubled_york_variant_is_not_trace_free() {
        let mut f = DataFamily::schwarzschild(1.0).with_york([0.0, 0.0, 0.1]);
        f.york_coefficient = 2;
        let e = eval_extrinsic(&f, &Vector3::new(0.0, 0.0, 10.0)).unwrap();
        assert!(e.k.trace().abs() > 1e-4);
    }

    #[test]
    fn extrinsic_gradient_matches_finite_differences() {
        for kind in [ExtrinsicKind::York, ExtrinsicKind::CorvinoSchoen] {
            let mut f = DataFamily::perturbed(1.0, 0.5, 0.05).with_york([0.03, -0.05, 0.1]);
            f.k_kind = kind;
            f.tau = 0.7;
            let mut rng = ChaCha8Rng::seed_from_u64(21);
            for _ in 0..10 {
                let x = random_point(&mut rng, 2.0, 30.0);
                let e = eval_ambient(&f, &x).unwrap();
                let h = 1e-4 * x.norm();
                for kk in 0..3 {
                    let mut d = Vector3::zeros();
                    d[kk] = h;
                    let dk = (eval_extrinsic(&f, &(x + d)).unwrap().k - eval_extrinsic(&f, &(x - d)).unwrap().k)
                        / (2.0 * h);
                    let fd = Matrix3::from_fn(|i, j| {
                        let mut acc = dk[(i, j)];
                        for l in 0..3 {
                            acc -= e.metric.christoffel[l][(kk, i)] * e.extrinsic.k[(l, j)]
                                + e.metric.christoffel[l][(kk, j)] * e.extrinsic.k[(i, l)];
                        }
                        acc
                    });
                    assert!((fd - e.extrinsic.grad_k[kk]).amax() < 1e-10);
                }
            }
        }
    }

    #[test]
    fn inner_boundary_and_definiteness_errors() {
        let f = DataFamily::schwarzschild(1.0);
        assert!(matches!(
            eval_metric(&f, &Vector3::new(0.2, 0.0, 0.0)),
            Err(AmbientError::InsideInnerBoundary { .. })
        ));
        let mut bad = DataFamily::perturbed(1.0, 0.0, 0.0);
        bad.perturbation.amplitude = 1e3;
        bad.perturbation.terms[0].matrix = [[-1.0, 0.0, 0.0], [0.0, 0.0, 0.0], [0.0, 0.0, 0.0]];
        bad.perturbation.terms[0].weight = 1.0;
        bad.perturbation.terms.truncate(1);
        assert!(matches!(
            eval_metric(&bad, &Vector3::new(2.0, 0.0, 0.0)),
            Err(AmbientError::NotPositiveDefinite { .. })
        ));
    }

    #[test]
    fn validation_rejects_bad_families() {
        let mut f = DataFamily::schwarzschild(1.0);
        f.mass = 0.0;
        assert!(f.validate().is_err());
        let mut f = DataFamily::perturbed(1.0, 0.5, 1e-3);
        f.perturbation.terms[0].weight = 3.0;
        assert!(f.validate().is_err());
        assert!(DataFamily::perturbed(1.0, 0.5, 1e-3).validate().is_ok());
    }

    #[test]
    fn decay_rates_of_york_data() {
        let f = DataFamily::schwarzschild(1.0).with_york([0.0, 0.0, 0.1]);
        let mut prev = None;
        for i in 0..12 {
            let r = 5.0 * 2f64.powi(i);
            let x = Vector3::new(0.6, 0.0, 0.8) * r;
            let e = eval_extrinsic(&f, &x).unwrap();
            let scaled = (e.k.norm() * r * r, e.grad_k.iter().map(|m| m.norm()).sum::<f64>() * r * r * r);
            if let Some((a, b)) = prev {
                let (a, b): (f64, f64) = (a, b);
                assert!((scaled.0 - a).abs() < 1e-2 * a);
                assert!((scaled.1 - b).abs() < 0.3 * b);
            }
            prev = Some(scaled);
        }
    }

    proptest::proptest! {
        #[test]
        fn metric_inverse_and_symmetry(x in -80.0f64..80.0, y in -80.0f64..80.0, z in -80.0f64..80.0, tau in 0.0f64..=1.0) {
            let p = Vector3::new(x, y, z);
            proptest::prop_assume!(p.norm() > 2.0);
            let f = interpolate_data(&DataFamily::perturbed(1.0, 0.5, 1e-2).with_york([0.0, 0.05, 0.1]), tau).unwrap();
            let e = eval_ambient(&f, &p).unwrap();
            proptest::prop_assert!((e.metric.g * e.metric.g_inv - Matrix3::identity()).amax() < 1e-12);
            proptest::prop_assert_eq!(e.extrinsic.k, e.extrinsic.k.transpose());
            proptest::prop_assert!((e.metric.ricci - e.metric.ricci.transpose()).amax() == 0.0);
        }
    }
}
