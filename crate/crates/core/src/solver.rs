//! Newton–continuation solver for `H ± P = h` on radial graphs.
//!
//! The linearized operator is represented by its Galerkin matrix in the
//! real harmonic basis: column `b` holds the harmonic coefficients of
//! `L Y_b`, so a Newton step solves for the coefficients of the normal
//! speed `f` directly. The radial update is `δu = f/q` with
//! `q = g(ρ, ν)`.

use faer::prelude::*;
use faer::{Mat, Par, Side};
use log::{debug, info, warn};
use nalgebra::{Matrix2, Matrix3, Vector2};
use thiserror::Error;

use crate::ambient::{interpolate_data, AmbientError, DataFamily};
use crate::geometry::{compute_geometry, summarize, GeometryError, GraphSurface, SurfaceGeometry, SurfaceSummary};
use crate::sphere::{FieldDerivatives, SphereError, SphericalGrid};

#[derive(Debug, Error, Clone, PartialEq)]
pub enum SolverError {
    #[error("h = {h} has no centered sphere on the monotone branch (maximum {h_max})")]
    HTooLarge { h: f64, h_max: f64 },
    #[error("linear solve failed: operator is singular (smallest singular value {smallest_singular_value:e})")]
    Singular { smallest_singular_value: f64 },
    #[error("no step reduced the residual at iteration {iteration} (residual {residual:e})")]
    LineSearch { iteration: usize, residual: f64 },
    #[error("Newton iteration did not converge in {iterations} iterations (residual {residual:e})")]
    NotConverged { iterations: usize, residual: f64 },
    #[error("continuation stalled after exhausting step halving; last good point h = {h}, tau = {tau}")]
    ContinuationExhausted { h: f64, tau: f64 },
    #[error("invalid solver input: {0}")]
    Invalid(String),
    #[error("eigenvalue computation failed: {0}")]
    Eigen(String),
    #[error(transparent)]
    Geometry(#[from] GeometryError),
    #[error(transparent)]
    Ambient(#[from] AmbientError),
    #[error(transparent)]
    Sphere(#[from] SphereError),
}

/// Iteration controls for Newton and continuation.
#[derive(Debug, Clone, PartialEq)]
pub struct NewtonSettings {
    pub tolerance: f64,
    pub max_iterations: usize,
    pub step_halving_limit: usize,
    pub tau_step: f64,
    pub h_ratio: f64,
}

impl Default for NewtonSettings {
    fn default() -> Self {
        Self {
            tolerance: 1e-10,
            max_iterations: 50,
            step_halving_limit: 8,
            tau_step: 0.1,
            h_ratio: 0.8,
        }
    }
}

impl NewtonSettings {
    pub fn validate(&self) -> Result<(), SolverError> {
        if !(self.tolerance >= 1e-13 && self.tolerance.is_finite()) {
            return Err(SolverError::Invalid("tolerance must be at least 1e-13".into()));
        }
        if self.max_iterations == 0 || self.step_halving_limit == 0 {
            return Err(SolverError::Invalid("iteration limits must be positive".into()));
        }
        if !(self.tau_step > 0.0 && self.tau_step <= 1.0) {
            return Err(SolverError::Invalid("tau_step must lie in (0, 1]".into()));
        }
        if !(self.h_ratio > 0.0 && self.h_ratio < 1.0) {
            return Err(SolverError::Invalid("h_ratio must lie in (0, 1)".into()));
        }
        Ok(())
    }
}

/// Radius of the centered Schwarzschild sphere with mean curvature `h`.
pub fn initial_radius(m: f64, h: f64) -> Result<f64, SolverError> {
    if !(h > 0.0 && h.is_finite()) {
        return Err(SolverError::Invalid(format!("h = {h} must be positive")));
    }
    if m == 0.0 {
        return Ok(2.0 / h);
    }
    if !(m > 0.0) {
        return Err(SolverError::Invalid(format!("mass {m} must be nonnegative")));
    }
    let sphere_h = |r: f64| crate::ambient::schwarzschild_sphere_mean_curvature(m, r);
    let r1 = m * (2.0 + 3f64.sqrt()) / 2.0;
    let h_max = sphere_h(r1);
    if h >= h_max {
        return Err(SolverError::HTooLarge { h, h_max });
    }
    let (mut lo, mut hi) = (r1, 2.0 / h);
    for _ in 0..200 {
        let mid = 0.5 * (lo + hi);
        if sphere_h(mid) > h {
            lo = mid;
        } else {
            hi = mid;
        }
        if hi - lo <= 1e-15 * hi {
            break;
        }
    }
    Ok(0.5 * (lo + hi))
}

/// `L f = Σ hess·Hess̊f + Σ first·df + zero·f` per node, and its Galerkin matrix.
#[derive(Debug, Clone)]
pub struct LinearizedOperator {
    /// Coefficients of `(Hess̊f)_θθ`, `(Hess̊f)_θφ`, `(Hess̊f)_φφ`.
    pub hess: Vec<[f64; 3]>,
    pub first: Vec<[f64; 2]>,
    pub zero: Vec<f64>,
    pub matrix: Mat<f64>,
}

fn operator_coefficients(geom: &SurfaceGeometry) -> (Vec<[f64; 3]>, Vec<[f64; 2]>, Vec<f64>) {
    let s = geom.sign;
    let mut hess = Vec::with_capacity(geom.nodes.len());
    let mut first = Vec::with_capacity(geom.nodes.len());
    let mut zero = Vec::with_capacity(geom.nodes.len());
    for n in &geom.nodes {
        let gi = &n.gamma_inv;
        hess.push([-gi[(0, 0)], -2.0 * gi[(0, 1)], -gi[(1, 1)]]);
        let th = gi * n.theta;
        let b: [f64; 2] =
            std::array::from_fn(|k| gi.component_mul(&n.christoffel[k]).sum() + 2.0 * s * th[k]);
        first.push(b);
        zero.push(-(n.a_sq() + n.ric_nn + s * n.grad_k_nnn - s * n.grad_trk_n));
    }
    (hess, first, zero)
}

fn apply_coefficients(
    hess: &[[f64; 3]],
    first: &[[f64; 2]],
    zero: &[f64],
    d: &FieldDerivatives,
    i: usize,
) -> f64 {
    let h = &hess[i];
    let b = &first[i];
    h[0] * d.hess_tt[i]
        + h[1] * d.hess_tp[i]
        + h[2] * d.hess_pp[i]
        + b[0] * d.d_theta[i]
        + b[1] * d.d_phi[i]
        + zero[i] * d.value[i]
}

/// Matrix whose column `b` is the analysis of `weight · L Y_b` (or of
/// `weight · Y_b` when `mass_only`).
fn galerkin(
    grid: &SphericalGrid,
    hess: &[[f64; 3]],
    first: &[[f64; 2]],
    zero: &[f64],
    weight: Option<&[f64]>,
    mass_only: bool,
) -> Mat<f64> {
    let m = grid.n_coeffs();
    let n = grid.len();
    let mut out = Mat::<f64>::zeros(m, m);
    let mut col = vec![0.0; n];
    for b in 0..m {
        let d = grid.basis_derivatives(b);
        for i in 0..n {
            let v = if mass_only {
                d.value[i]
            } else {
                apply_coefficients(hess, first, zero, &d, i)
            };
            col[i] = match weight {
                Some(w) => v * w[i],
                None => v,
            };
        }
        let c = grid.analysis_unchecked(&col);
        for (a, v) in c.into_iter().enumerate() {
            out[(a, b)] = v;
        }
    }
    out
}

impl LinearizedOperator {
    /// `L f` at the nodes for `f` given by harmonic coefficients.
    pub fn apply_nodal(&self, grid: &SphericalGrid, coeffs: &[f64]) -> Result<Vec<f64>, SolverError> {
        let d = grid.derivatives(coeffs)?;
        Ok((0..grid.len())
            .map(|i| apply_coefficients(&self.hess, &self.first, &self.zero, &d, i))
            .collect())
    }

    /// Galerkin image of a coefficient vector.
    pub fn apply(&self, coeffs: &[f64]) -> Vec<f64> {
        let x = Mat::from_fn(coeffs.len(), 1, |i, _| coeffs[i]);
        let y = &self.matrix * &x;
        (0..coeffs.len()).map(|i| y[(i, 0)]).collect()
    }

    /// Singular values of the Galerkin matrix, ascending.
    pub fn singular_values(&self) -> Result<Vec<f64>, SolverError> {
        let mut s = self
            .matrix
            .singular_values()
            .map_err(|e| SolverError::Eigen(format!("{e:?}")))?;
        s.sort_by(|a, b| a.total_cmp(b));
        Ok(s)
    }

    /// Eigenvalues of the Galerkin matrix sorted by modulus.
    pub fn eigenvalues(&self) -> Result<Vec<(f64, f64)>, SolverError> {
        let ev = self
            .matrix
            .eigenvalues()
            .map_err(|e| SolverError::Eigen(format!("{e:?}")))?;
        let mut out: Vec<(f64, f64)> = ev.iter().map(|z| (z.re, z.im)).collect();
        out.sort_by(|a, b| (a.0.hypot(a.1)).total_cmp(&b.0.hypot(b.1)));
        Ok(out)
    }
}

/// Linearization of `H ± P` under normal variations; the branch is taken
/// from the geometry's family.
pub fn assemble_linearization(grid: &SphericalGrid, geom: &SurfaceGeometry) -> LinearizedOperator {
    let (hess, first, zero) = operator_coefficients(geom);
    let matrix = galerkin(grid, &hess, &first, &zero, None, false);
    LinearizedOperator {
        hess,
        first,
        zero,
        matrix,
    }
}

/// Derivative of `H ± P` along radial variations `δu = f/q`: the normal
/// linearization plus the transport of `H ± P` along the tangential part
/// of the radial displacement.
fn radial_jacobian(grid: &SphericalGrid, geom: &SurfaceGeometry, curvature: &[f64]) -> Result<Mat<f64>, SolverError> {
    let (hess, first, mut zero) = operator_coefficients(geom);
    let (ft, fp) = grid.gradient(curvature)?;
    for (i, n) in geom.nodes.iter().enumerate() {
        // ρ = w^α X_α + q ν, so γ^{αβ} g(ρ, X_β) = w^α
        let basis = Matrix3::from_columns(&[n.tangents[0], n.tangents[1], n.normal]);
        let w = basis
            .lu()
            .solve(&n.frame[0])
            .ok_or(SolverError::Geometry(GeometryError::Degenerate(i)))?;
        zero[i] += (w[0] * ft[i] + w[1] * fp[i]) / n.q;
    }
    Ok(galerkin(grid, &hess, &first, &zero, None, false))
}

/// Solve `a x = b`, falling back to a truncated least-squares solve when
/// the LU pivots reveal numerical rank deficiency.
pub fn solve_dense(a: &Mat<f64>, b: &[f64]) -> Result<Vec<f64>, SolverError> {
    let n = b.len();
    let rhs = Mat::from_fn(n, 1, |i, _| b[i]);
    let lu = a.partial_piv_lu();
    let u = lu.U();
    let mut dmin = f64::INFINITY;
    let mut dmax: f64 = 0.0;
    for i in 0..n {
        let d = u[(i, i)].abs();
        dmin = dmin.min(d);
        dmax = dmax.max(d);
    }
    if dmax > 0.0 && dmin > 1e-11 * dmax {
        let x = lu.solve(&rhs);
        let out: Vec<f64> = (0..n).map(|i| x[(i, 0)]).collect();
        if out.iter().all(|v| v.is_finite()) {
            return Ok(out);
        }
    }
    debug!("LU pivots degenerate ({dmin:e}/{dmax:e}); using truncated SVD");
    let svd = a.svd().map_err(|e| SolverError::Eigen(format!("{e:?}")))?;
    let s = svd.S().column_vector();
    let smax = (0..n).map(|i| s[i]).fold(0.0, f64::max);
    let smin = (0..n).map(|i| s[i]).fold(f64::INFINITY, f64::min);
    let cut = 1e-10 * smax;
    let ut_b = svd.U().transpose() * &rhs;
    let mut y = Mat::<f64>::zeros(n, 1);
    for i in 0..n {
        if s[i] > cut {
            y[(i, 0)] = ut_b[(i, 0)] / s[i];
        }
    }
    let x = svd.V() * &y;
    let resid = a * &x - &rhs;
    let rnorm = (0..n).map(|i| resid[(i, 0)].powi(2)).sum::<f64>().sqrt();
    let bnorm = b.iter().map(|v| v * v).sum::<f64>().sqrt();
    if rnorm > 1e-8 * bnorm.max(1e-300) && rnorm > 1e-14 {
        return Err(SolverError::Singular {
            smallest_singular_value: smin,
        });
    }
    Ok((0..n).map(|i| x[(i, 0)]).collect())
}

/// Outcome of one Newton solve.
#[derive(Debug, Clone)]
pub struct SolveResult {
    pub h: f64,
    pub tau: f64,
    pub surface: GraphSurface,
    pub geometry: SurfaceGeometry,
    pub summary: SurfaceSummary,
    pub residual_history: Vec<f64>,
    pub iterations: usize,
    pub converged: bool,
}

impl SolveResult {
    pub fn residual(&self) -> f64 {
        *self.residual_history.last().unwrap_or(&f64::NAN)
    }
}

fn sup_norm(v: &[f64]) -> f64 {
    v.iter().fold(0.0, |a, x| a.max(x.abs()))
}

fn l2_norm(grid: &SphericalGrid, v: &[f64]) -> f64 {
    grid.weights().iter().zip(v).map(|(w, x)| w * x * x).sum::<f64>().sqrt()
}

fn residual(geom: &SurfaceGeometry, h: f64) -> Vec<f64> {
    geom.curvature_function().into_iter().map(|f| h - f).collect()
}

/// Newton iteration for `(H ± P)(u) = h` starting from `u0`.
pub fn newton_solve(
    grid: &SphericalGrid,
    u0: &GraphSurface,
    family: &DataFamily,
    h: f64,
    settings: &NewtonSettings,
) -> Result<SolveResult, SolverError> {
    settings.validate()?;
    if !(h > 0.0 && h.is_finite()) {
        return Err(SolverError::Invalid(format!("h = {h} must be positive")));
    }
    if u0.coeffs.len() != grid.n_coeffs() {
        return Err(SphereError::GridMismatch {
            expected: grid.n_coeffs(),
            got: u0.coeffs.len(),
        }
        .into());
    }
    let mut surface = u0.clone();
    let mut geom = compute_geometry(grid, &surface, family)?;
    let mut res = residual(&geom, h);
    let mut history = vec![sup_norm(&res)];
    let mut iterations = 0;
    while history[iterations] > settings.tolerance {
        if iterations >= settings.max_iterations {
            return Err(SolverError::NotConverged {
                iterations,
                residual: history[iterations],
            });
        }
        let curvature = geom.curvature_function();
        let jac = radial_jacobian(grid, &geom, &curvature)?;
        let rhs = grid.analysis(&res)?;
        let cf = solve_dense(&jac, &rhs)?;
        let f = grid.synthesis(&cf)?;
        let du_nodal: Vec<f64> = f.iter().zip(&geom.nodes).map(|(f, n)| f / n.q).collect();
        let du = grid.analysis(&du_nodal)?;
        let base = l2_norm(grid, &res);
        let mut step = 1.0;
        let mut accepted = None;
        for _ in 0..=settings.step_halving_limit {
            let trial = GraphSurface {
                coeffs: surface.coeffs.iter().zip(&du).map(|(u, d)| u + step * d).collect(),
            };
            match compute_geometry(grid, &trial, family) {
                Ok(g) => {
                    let r = residual(&g, h);
                    if l2_norm(grid, &r) < base || sup_norm(&r) <= settings.tolerance {
                        accepted = Some((trial, g, r));
                        break;
                    }
                }
                Err(GeometryError::GraphCondition { .. }) | Err(GeometryError::ChartDomain { .. }) => {}
                Err(e) => return Err(e.into()),
            }
            step *= 0.5;
        }
        let Some((s, g, r)) = accepted else {
            return Err(SolverError::LineSearch {
                iteration: iterations,
                residual: history[iterations],
            });
        };
        surface = s;
        geom = g;
        res = r;
        iterations += 1;
        history.push(sup_norm(&res));
        debug!("newton h={h:.6e} it={iterations} step={step} residual={:.3e}", history[iterations]);
    }
    let summary = summarize(grid, &geom, family)?;
    Ok(SolveResult {
        h,
        tau: family.tau,
        surface,
        geometry: geom,
        summary,
        residual_history: history,
        iterations,
        converged: true,
    })
}

fn reference_radius(family: &DataFamily, h: f64) -> Result<f64, SolverError> {
    initial_radius(family.effective_mass(), h)
}

/// Solve at `(h, τ)` from a converged neighbour, scaling the predictor by
/// the ratio of reference radii.
fn step_to(
    grid: &SphericalGrid,
    family: &DataFamily,
    from: &SolveResult,
    h: f64,
    tau: f64,
    settings: &NewtonSettings,
) -> Result<SolveResult, SolverError> {
    let scale = reference_radius(family, h)? / reference_radius(family, from.h)?;
    let guess = GraphSurface {
        coeffs: from.surface.coeffs.iter().map(|c| c * scale).collect(),
    };
    let fam = interpolate_data(family, tau)?;
    newton_solve(grid, &guess, &fam, h, settings)
}

/// Continue a converged solution to `(h, τ)` along a straight path in
/// `(log h, τ)`, subdividing to respect the step limits and bisecting on
/// failure.
pub fn continue_to(
    grid: &SphericalGrid,
    family: &DataFamily,
    start: &SolveResult,
    h: f64,
    tau: f64,
    settings: &NewtonSettings,
) -> Result<SolveResult, SolverError> {
    let n_tau = ((tau - start.tau).abs() / settings.tau_step - 1e-12).ceil().max(0.0) as usize;
    let n_h = ((h / start.h).ln().abs() / settings.h_ratio.ln().abs() - 1e-12).ceil().max(0.0) as usize;
    let n = n_tau.max(n_h).max(1);
    let (lh0, lh1) = (start.h.ln(), h.ln());
    let point = |t: f64| ((lh0 + t * (lh1 - lh0)).exp(), start.tau + t * (tau - start.tau));
    let mut current = start.clone();
    let mut t_cur = 0.0;
    for k in 1..=n {
        let t_target = k as f64 / n as f64;
        let mut dt = t_target - t_cur;
        let mut depth = 0;
        while t_cur < t_target - 1e-15 {
            let t_next = (t_cur + dt).min(t_target);
            let (hh, tt) = if (t_next - 1.0).abs() < 1e-15 { (h, tau) } else { point(t_next) };
            match step_to(grid, family, &current, hh, tt, settings) {
                Ok(r) => {
                    current = r;
                    t_cur = t_next;
                }
                Err(e) => {
                    depth += 1;
                    warn!("continuation step to h={hh:.6e} tau={tt:.4} failed: {e}");
                    if depth > settings.step_halving_limit {
                        return Err(SolverError::ContinuationExhausted {
                            h: current.h,
                            tau: current.tau,
                        });
                    }
                    dt *= 0.5;
                }
            }
        }
    }
    Ok(current)
}

/// Walk a curve of `(h, τ)` vertices starting at `τ = 0` from the centered
/// Schwarzschild sphere; returns the solution at every vertex.
pub fn continuation(
    grid: &SphericalGrid,
    family: &DataFamily,
    curve: &[(f64, f64)],
    settings: &NewtonSettings,
) -> Result<Vec<SolveResult>, SolverError> {
    settings.validate()?;
    let Some(&(h0, tau0)) = curve.first() else {
        return Err(SolverError::Invalid("continuation curve is empty".into()));
    };
    if tau0 != 0.0 {
        return Err(SolverError::Invalid("continuation curve must start at tau = 0".into()));
    }
    let r0 = reference_radius(family, h0)?;
    let fam0 = interpolate_data(family, 0.0)?;
    let first = newton_solve(grid, &GraphSurface::sphere(grid, r0), &fam0, h0, settings)?;
    let mut out = vec![first];
    for &(h, tau) in &curve[1..] {
        let prev = out.last().expect("nonempty");
        let next = continue_to(grid, family, prev, h, tau, settings)?;
        info!(
            "reached h={h:.6e} tau={tau:.3} R_e={:.4} residual={:.2e}",
            next.summary.radius_e,
            next.residual()
        );
        out.push(next);
    }
    Ok(out)
}

/// Lapse and nesting record of two adjacent leaves.
#[derive(Debug, Clone, PartialEq)]
pub struct LeafPair {
    pub h_inner: f64,
    pub h_outer: f64,
    pub lapse_min: f64,
    pub lapse_max: f64,
    pub nesting_margin: f64,
}

impl LeafPair {
    pub fn lapse_sign_definite(&self) -> bool {
        self.lapse_min * self.lapse_max > 0.0
    }

    pub fn nested(&self) -> bool {
        self.nesting_margin > 0.0
    }
}

#[derive(Debug, Clone)]
pub struct FoliationResult {
    pub family: DataFamily,
    pub members: Vec<SolveResult>,
    pub pairs: Vec<LeafPair>,
}

fn leaf_pair(grid: &SphericalGrid, a: &SolveResult, b: &SolveResult) -> Result<LeafPair, SolverError> {
    let ua = a.surface.values(grid)?;
    let ub = b.surface.values(grid)?;
    let dh = b.h - a.h;
    let mut lapse_min = f64::INFINITY;
    let mut lapse_max = f64::NEG_INFINITY;
    let mut nesting = f64::INFINITY;
    for i in 0..grid.len() {
        let du = ub[i] - ua[i];
        let alpha = du * a.geometry.nodes[i].q / dh;
        lapse_min = lapse_min.min(alpha);
        lapse_max = lapse_max.max(alpha);
        nesting = nesting.min(if dh < 0.0 { du } else { -du });
    }
    Ok(LeafPair {
        h_inner: a.h,
        h_outer: b.h,
        lapse_min,
        lapse_max,
        nesting_margin: nesting,
    })
}

/// `τ`-sweep to 1 at `h_list[0]`, then an `h`-sweep through `h_list`.
pub fn foliate(
    grid: &SphericalGrid,
    family: &DataFamily,
    h_list: &[f64],
    settings: &NewtonSettings,
) -> Result<FoliationResult, SolverError> {
    if h_list.is_empty() {
        return Err(SolverError::Invalid("h list is empty".into()));
    }
    let decreasing = h_list.windows(2).all(|w| w[1] < w[0]);
    let increasing = h_list.windows(2).all(|w| w[1] > w[0]);
    if !(decreasing || increasing) {
        return Err(SolverError::Invalid("h list must be strictly monotone".into()));
    }
    let tau = family.tau;
    let first = continuation(grid, family, &[(h_list[0], 0.0), (h_list[0], tau)], settings)?
        .pop()
        .expect("two vertices");
    let mut members = vec![first];
    for &h in &h_list[1..] {
        let prev = members.last().expect("nonempty");
        let next = continue_to(grid, family, prev, h, tau, settings)?;
        info!("leaf h={h:.6e} R_e={:.4} m_H={:.8}", next.summary.radius_e, next.summary.hawking_mass);
        members.push(next);
    }
    let mut pairs = Vec::with_capacity(members.len().saturating_sub(1));
    for w in members.windows(2) {
        let pair = leaf_pair(grid, &w[0], &w[1])?;
        if !pair.nested() || !pair.lapse_sign_definite() {
            warn!("leaves h={} and h={} are not strictly nested", pair.h_inner, pair.h_outer);
        }
        pairs.push(pair);
    }
    Ok(FoliationResult {
        family: family.clone(),
        members,
        pairs,
    })
}

/// Smallest value of `∫ f L f dμ / ∫ f² dμ` over `f` with `∫ f dμ = 0`.
pub fn spectral_gap(grid: &SphericalGrid, op: &LinearizedOperator, geom: &SurfaceGeometry) -> Result<f64, SolverError> {
    let area = geom.area_element();
    let m = grid.n_coeffs();
    let q = galerkin(grid, &op.hess, &op.first, &op.zero, Some(&area), false);
    let mass = galerkin(grid, &op.hess, &op.first, &op.zero, Some(&area), true);
    let qs = Mat::from_fn(m, m, |i, j| 0.5 * (q[(i, j)] + q[(j, i)]));
    let ms = Mat::from_fn(m, m, |i, j| 0.5 * (mass[(i, j)] + mass[(j, i)]));
    let llt = ms
        .llt(Side::Lower)
        .map_err(|e| SolverError::Eigen(format!("mass matrix: {e:?}")))?;
    let l = llt.L();
    // C = L⁻¹ Q L⁻ᵀ
    let mut x = qs.clone();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, x.as_mut(), Par::Seq);
    let mut c = x.transpose().to_owned();
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, c.as_mut(), Par::Seq);
    let c = Mat::from_fn(m, m, |i, j| 0.5 * (c[(i, j)] + c[(j, i)]));
    // constraint ∫ f dμ = 0 becomes v·y = 0 with v = L⁻¹ (∫ Y_b dμ)
    let cvec = grid.analysis(&area)?;
    let mut v = Mat::from_fn(m, 1, |i, _| cvec[i]);
    faer::linalg::triangular_solve::solve_lower_triangular_in_place(l, v.as_mut(), Par::Seq);
    // Householder reflector mapping v to a multiple of e_1
    let vnorm = (0..m).map(|i| v[(i, 0)].powi(2)).sum::<f64>().sqrt();
    let alpha = if v[(0, 0)] > 0.0 { -vnorm } else { vnorm };
    let mut w = v.clone();
    w[(0, 0)] -= alpha;
    let wnorm = (0..m).map(|i| w[(i, 0)].powi(2)).sum::<f64>().sqrt();
    for i in 0..m {
        w[(i, 0)] /= wnorm;
    }
    // H C H with H = I − 2 w wᵀ
    let cw = &c * &w;
    let wcw = (w.transpose() * &cw)[(0, 0)];
    let hch = Mat::from_fn(m, m, |i, j| {
        c[(i, j)] - 2.0 * w[(i, 0)] * cw[(j, 0)] - 2.0 * cw[(i, 0)] * w[(j, 0)]
            + 4.0 * wcw * w[(i, 0)] * w[(j, 0)]
    });
    let reduced = Mat::from_fn(m - 1, m - 1, |i, j| hch[(i + 1, j + 1)]);
    let ev = reduced
        .self_adjoint_eigenvalues(Side::Lower)
        .map_err(|e| SolverError::Eigen(format!("{e:?}")))?;
    Ok(ev.into_iter().fold(f64::INFINITY, f64::min))
}

/// `∫ f L f dμ` computed directly and through the integrated identity in
/// terms of constraint densities, `Å`, `(K^T)°`, `θ` and `G`.
pub fn quadratic_form(
    grid: &SphericalGrid,
    geom: &SurfaceGeometry,
    op: &LinearizedOperator,
    coeffs: &[f64],
) -> Result<(f64, f64), SolverError> {
    let d = grid.derivatives(coeffs)?;
    let lf = op.apply_nodal(grid, coeffs)?;
    let s = geom.sign;
    let w = grid.weights();
    let mut direct = 0.0;
    let mut decomposed = 0.0;
    for (i, n) in geom.nodes.iter().enumerate() {
        let f = d.value[i];
        let df = Vector2::new(d.d_theta[i], d.d_phi[i]);
        let grad_sq = df.dot(&(n.gamma_inv * df));
        let mixed: Matrix2<f64> = n.k_tan_ring() + n.a_ring() * s;
        let mixed_sq = (n.gamma_inv * mixed * n.gamma_inv * mixed).trace();
        let density = 0.5 * n.energy - s * n.momentum_n;
        let curv = n.h + s * n.p;
        let bracket = 0.5 * curv * curv + (n.h - s * n.k_nn).powi(2) - n.tr_k * n.tr_k - 2.0 * n.gauss_curvature();
        let integrand =
            grad_sq - f * f * (density + 0.5 * mixed_sq + n.theta_sq()) - 0.5 * f * f * bracket;
        direct += w[i] * n.area * f * lf[i];
        decomposed += w[i] * n.area * integrand;
    }
    Ok((direct, decomposed))
}

/// `6m / R_e³`, the leading lower bound of the spectral gap.
pub fn gap_reference(m: f64, radius_e: f64) -> f64 {
    6.0 * m / radius_e.powi(3)
}
